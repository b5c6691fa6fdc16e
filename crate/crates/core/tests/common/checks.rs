//! One function per release criterion. Each returns a one-line summary on
//! success or a description of what went wrong.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{Quaternion, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rbench_core::backend::{BasePose, Replay, SimBackend};
use rbench_core::cem::{cem_optimize, CemConfig};
use rbench_core::env::{evaluate_detailed, make_env, make_sim_env, run_episode, DoneReason, GoalSnapshot};
use rbench_core::log::{EpisodeLog, Termination};
use rbench_core::policy::{HoldPolicy, ScriptedPolicy};
use rbench_core::safety::{self, aggregate, SafetyLimits};
use rbench_core::tasks::dclaw::{self, DClawJointState};
use rbench_core::tasks::dkitty::{self, DKittyState, UprightParams};
use rbench_core::tasks::mean_abs_error;
use rbench_core::{RobotKind, TaskConfig, TaskFamily, TaskLevel, TaskVariant};
use rbench_dxl::packet::MAX_ID;
use rbench_dxl::{crc16, decode, stuff, unstuff, FrameDecoder, Instruction, InstructionPacket, Packet, StatusPacket, BROADCAST_ID};

use super::oracle::{self, close, Mat, DEG};

pub type Check = Result<String, String>;

/// Collects failures instead of stopping at the first one.
#[derive(Default)]
pub struct Failures(Vec<String>);

impl Failures {
    pub fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.0.push(what());
        }
    }

    pub fn finish(self, summary: String) -> Check {
        if self.0.is_empty() {
            Ok(summary)
        } else {
            let n = self.0.len();
            let shown: Vec<_> = self.0.into_iter().take(5).collect();
            Err(format!("{n} failure(s): {}", shown.join("; ")))
        }
    }
}

fn within(limit: Duration, start: Instant, f: &mut Failures, what: &str) -> Duration {
    let took = start.elapsed();
    f.expect(took < limit, || format!("{what} took {took:.2?}, limit {limit:?}"));
    took
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn uniform_vec<const N: usize>(rng: &mut impl Rng, lo: f64, hi: f64) -> [f64; N] {
    std::array::from_fn(|_| uniform(rng, lo, hi))
}

/// Tiny offset to one side of a threshold, never landing on it.
fn nudge(rng: &mut impl Rng) -> f64 {
    let mag = 10f64.powf(uniform(rng, -8.0, -5.0));
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

pub fn rotation_of(q: [f64; 4]) -> Rotation3<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix()
}

pub fn mat_of(r: &Rotation3<f64>) -> Mat {
    std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)]))
}

fn random_horizontal_axis(rng: &mut impl Rng) -> [f64; 3] {
    let a = uniform(rng, -PI, PI);
    [a.cos(), a.sin(), 0.0]
}

/// Three regimes: any orientation, a modest tilt, or a tilt right at the
/// family's falling threshold.
fn random_quat(rng: &mut impl Rng, i: usize, beta: f64) -> [f64; 4] {
    let yaw = oracle::axis_angle([0.0, 0.0, 1.0], uniform(rng, -PI, PI));
    match i % 3 {
        0 => std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal)),
        1 => oracle::quat_mul(yaw, oracle::axis_angle(random_horizontal_axis(rng), uniform(rng, 0.0, 40.0 * DEG))),
        _ => {
            let tilt = beta.acos() + nudge(rng);
            oracle::quat_mul(yaw, oracle::axis_angle(random_horizontal_axis(rng), tilt))
        }
    }
}

fn kitty_state(rotation: Rotation3<f64>, position: [f64; 3], theta: [f64; 12]) -> DKittyState {
    DKittyState {
        position,
        rotation,
        velocity: [0.0; 3],
        angular_velocity: [0.0; 3],
        theta,
        theta_dot: [0.0; 12],
        last_action: [0.0; 12],
    }
}

fn compare(f: &mut Failures, name: &str, i: usize, got: f64, want: f64) {
    f.expect(got.is_finite() && close(got, want), || format!("{name} state {i}: library {got:e}, reference {want:e}"));
}

fn compare_count(f: &mut Failures, name: &str, i: usize, got: u64, want: u64) {
    f.expect(got == want, || format!("{name} state {i}: library {got}, reference {want}"));
}

/// Six rewards and three safety counters against the reference formulas.
pub fn formula_oracles(n: usize) -> Check {
    let start = Instant::now();
    let mut f = Failures::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);

    for i in 0..n {
        let goal: [f64; 9] = uniform_vec(&mut rng, -1.5, 1.5);
        let mut theta: [f64; 9] = uniform_vec(&mut rng, -1.5, 1.5);
        let mut theta_dot: [f64; 9] = uniform_vec(&mut rng, -3.0, 3.0);
        if i % 5 == 0 {
            theta = goal;
        }
        if i % 4 == 0 {
            for v in theta_dot.iter_mut().step_by(2) {
                *v = (0.5 + nudge(&mut rng)) * v.signum();
            }
        }
        let js = DClawJointState { theta, theta_dot, last_action: [0.0; 9] };
        compare(&mut f, "pose", i, dclaw::pose_reward(&js, &goal), oracle::pose_reward(&theta, &theta_dot, &goal));

        let nominal: [f64; 9] = uniform_vec(&mut rng, -1.0, 1.0);
        let delta = match i % 3 {
            0 => uniform(&mut rng, -PI, PI),
            1 => (0.25 + nudge(&mut rng)) * if rng.random::<bool>() { 1.0 } else { -1.0 },
            _ => (0.1 + nudge(&mut rng)) * if rng.random::<bool>() { 1.0 } else { -1.0 },
        };
        let got = dclaw::turn_reward(&js, delta, &nominal);
        compare(&mut f, "turn/screw", i, got, oracle::turn_reward(&theta, &theta_dot, &nominal, delta));
    }

    let stand_goal = dkitty::stand_pose();
    for i in 0..n {
        let position = [uniform(&mut rng, -2.0, 2.0), uniform(&mut rng, -2.0, 2.0), uniform(&mut rng, 0.0, 0.4)];

        // stand: pose error either anywhere or right at a bonus threshold
        let q = random_quat(&mut rng, i, oracle::stand_params().beta);
        let r = rotation_of(q);
        let m = oracle::quat_matrix(q);
        let theta: [f64; 12] = match i % 4 {
            0 => std::array::from_fn(|k| stand_goal[k] + uniform(&mut rng, -1.0, 1.0)),
            1 => std::array::from_fn(|k| stand_goal[k] + uniform(&mut rng, -0.2, 0.2)),
            j => {
                let e = if j == 2 { PI / 12.0 } else { PI / 6.0 } + nudge(&mut rng);
                std::array::from_fn(|k| stand_goal[k] + if rng.random::<bool>() { e } else { -e })
            }
        };
        let s = kitty_state(r, position, theta);
        compare(&mut f, "stand", i, dkitty::stand_reward(&s, &stand_goal), oracle::stand_reward(&m, position, &theta, &stand_goal));

        // orient: near thresholds, keep the y-axis horizontal and tilt about it
        let goal_angle = uniform(&mut rng, -PI, PI);
        let goal = dkitty::facing_from_angle(goal_angle);
        let q = if i % 2 == 0 {
            random_quat(&mut rng, i / 2, oracle::orient_params().beta)
        } else {
            let off = match i % 6 {
                1 => 5.0 * DEG + nudge(&mut rng),
                3 => 15.0 * DEG + nudge(&mut rng),
                _ => uniform(&mut rng, -0.2, 0.2),
            };
            let tilt = match i % 4 {
                1 => (15.0 * DEG + nudge(&mut rng)) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                _ => uniform(&mut rng, -0.6, 0.6),
            };
            let yaw = oracle::axis_angle([0.0, 0.0, 1.0], goal_angle + off);
            oracle::quat_mul(yaw, oracle::axis_angle([0.0, 1.0, 0.0], tilt))
        };
        let s = kitty_state(rotation_of(q), position, stand_goal);
        let m = oracle::quat_matrix(q);
        compare(&mut f, "orient", i, dkitty::orient_reward(&s, &goal), oracle::orient_reward(&m, position, goal));

        // walk: goal anywhere, or at the distance or heading threshold
        let q = random_quat(&mut rng, i, oracle::walk_params().beta);
        let r = rotation_of(q);
        let m = oracle::quat_matrix(q);
        let target = match i % 4 {
            0 | 1 => [uniform(&mut rng, -3.0, 3.0), uniform(&mut rng, -3.0, 3.0)],
            2 => {
                let a = uniform(&mut rng, -PI, PI);
                let d = 0.5 + nudge(&mut rng);
                [position[0] + d * a.cos(), position[1] + d * a.sin()]
            }
            _ => match oracle::facing(&m) {
                Some(fw) => {
                    let a = fw[1].atan2(fw[0]) + (25.0 * DEG + nudge(&mut rng));
                    let d = uniform(&mut rng, 0.6, 3.0);
                    [position[0] + d * a.cos(), position[1] + d * a.sin()]
                }
                None => [1.0, 1.0],
            },
        };
        let s = kitty_state(r, position, stand_goal);
        compare(&mut f, "walk", i, dkitty::walk_reward(&s, &target), oracle::walk_reward(&m, position, target));
    }

    for i in 0..n {
        let joints = if i % 2 == 0 { 9 } else { 12 };
        let lower: Vec<f64> = (0..joints).map(|_| uniform(&mut rng, -2.0, 0.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + uniform(&mut rng, 0.5, 3.0)).collect();
        let eps = uniform(&mut rng, 0.01, 0.2);
        let speed: Vec<f64> = (0..joints).map(|_| uniform(&mut rng, 0.5, 5.0)).collect();
        let current: Vec<f64> = (0..joints).map(|_| uniform(&mut rng, 0.2, 3.0)).collect();
        let limits = SafetyLimits { lower: lower.clone(), upper: upper.clone(), epsilon: eps, speed: speed.clone(), current: current.clone() };
        let theta: Vec<f64> = (0..joints)
            .map(|k| match rng.random_range(0..3) {
                0 => uniform(&mut rng, lower[k] - 0.3, upper[k] + 0.3),
                1 => lower[k] + eps * if rng.random::<bool>() { 1.0 } else { -1.0 } + nudge(&mut rng),
                _ => upper[k] + uniform(&mut rng, -1.5, 1.5) * eps,
            })
            .collect();
        let near = |rng: &mut ChaCha8Rng, lim: f64| match rng.random_range(0..3) {
            0 => uniform(rng, -2.0, 2.0) * lim,
            1 => lim + nudge(rng),
            _ => -lim + nudge(rng),
        };
        let vel: Vec<f64> = speed.iter().map(|&a| near(&mut rng, a)).collect();
        let cur: Vec<f64> = current.iter().map(|&g| near(&mut rng, g)).collect();
        compare_count(&mut f, "position", i, safety::position_violations(&theta, &limits), oracle::position_count(&theta, &lower, &upper, eps));
        compare_count(&mut f, "velocity", i, safety::velocity_violations(&vel, &limits), oracle::over_limit_count(&vel, &speed));
        compare_count(&mut f, "current", i, safety::current_violations(&cur, &limits), oracle::over_limit_count(&cur, &current));
    }

    let took = within(Duration::from_secs(10), start, &mut f, "oracle suite");
    f.finish(format!("6 rewards + 3 safety counters agree on {n} random states each ({took:.2?})"))
}

/// Checks a strict threshold: true just below `at`, false at and above it.
fn strict_below(f: &mut Failures, name: &str, at: f64, pred: impl Fn(f64) -> bool) {
    let d = 1e-9;
    f.expect(pred(at - d), || format!("{name}: {} should pass", at - d));
    f.expect(!pred(at), || format!("{name}: exactly {at} should fail"));
    f.expect(!pred(at + d), || format!("{name}: {} should fail", at + d));
}

/// Checks a strict threshold: false at and below `at`, true just above it.
fn strict_above(f: &mut Failures, name: &str, at: f64, pred: impl Fn(f64) -> bool) {
    let d = 1e-9;
    f.expect(!pred(at - d), || format!("{name}: {} should fail", at - d));
    f.expect(!pred(at), || format!("{name}: exactly {at} should fail"));
    f.expect(pred(at + d), || format!("{name}: {} should pass", at + d));
}

fn jump(f: &mut Failures, name: &str, below: f64, at: f64, want: f64) {
    f.expect((below - at - want).abs() < 1e-6, || format!("{name}: jump {} instead of {want}", below - at));
}

/// Bonuses, success gates and uprightness constants, probed on both sides of
/// every threshold.
pub fn paper_constants() -> Check {
    let mut f = Failures::default();
    let d = 1e-9;

    let nominal = dclaw::midpoint_pose();
    let rest = DClawJointState { theta: nominal, theta_dot: [0.0; 9], last_action: [0.0; 9] };
    let turn = |delta: f64| dclaw::turn_reward(&rest, delta, &nominal);
    f.expect(turn(0.0) == 60.0, || format!("turn at goal {}", turn(0.0)));
    f.expect((turn(0.25) + 1.25).abs() < 1e-12, || format!("turn at 0.25 {}", turn(0.25)));
    f.expect((turn(0.1) - 9.5).abs() < 1e-12, || format!("turn at 0.1 {}", turn(0.1)));
    for sign in [1.0, -1.0] {
        jump(&mut f, "turn +10 bonus", turn(sign * (0.25 - d)), turn(sign * 0.25), 10.0);
        jump(&mut f, "turn +50 bonus", turn(sign * (0.1 - d)), turn(sign * 0.1), 50.0);
        jump(&mut f, "turn above 0.25", turn(sign * 0.25), turn(sign * (0.25 + d)), 0.0);
    }

    let ten = 10.0 * DEG;
    strict_below(&mut f, "pose success 10 deg", ten, |e| dclaw::pose_success(&[e, e]).unwrap());
    strict_below(&mut f, "turn success 0.1", 0.1, |e| dclaw::turn_success(e) && dclaw::turn_success(-e));
    strict_below(&mut f, "screw success 0.1", 0.1, |e| dclaw::screw_success(&[e, -e]).unwrap());

    strict_below(&mut f, "stand error gate", PI / 12.0, |e| dkitty::stand_success(e, 0.95));
    strict_above(&mut f, "stand upright gate", 0.9, |u| dkitty::stand_success(0.1, u));
    strict_below(&mut f, "orient error gate", 5.0 * DEG, |e| dkitty::orient_success(e, 1.0));
    strict_above(&mut f, "orient upright gate", (15.0 * DEG).cos(), |u| dkitty::orient_success(0.01, u));
    strict_below(&mut f, "walk distance gate", 0.5, |x| dkitty::walk_success(x, 1.0));
    strict_above(&mut f, "walk upright gate", (25.0 * DEG).cos(), |u| dkitty::walk_success(0.1, u));

    let expected = [
        ("stand", UprightParams::stand(), (2.0, -100.0, (90.0 * DEG).cos())),
        ("orient", UprightParams::orient(), (2.0, -500.0, (25.0 * DEG).cos())),
        ("walk", UprightParams::walk(), (1.0, -500.0, (25.0 * DEG).cos())),
    ];
    for (name, p, (a_up, a_fall, beta)) in expected {
        f.expect(p.alpha_upright == a_up && p.alpha_falling == a_fall, || format!("{name} upright constants {p:?}"));
        f.expect((p.beta - beta).abs() < 1e-15, || format!("{name} beta {} vs {beta}", p.beta));
        let r = |u: f64| dkitty::upright_reward(u, &p);
        f.expect(r(p.beta) == 0.0, || format!("{name}: reward at beta {}", r(p.beta)));
        f.expect((r(1.0) - a_up).abs() < 1e-12, || format!("{name}: reward at u=1 {}", r(1.0)));
        let slope = a_up / (1.0 - p.beta);
        jump(&mut f, &format!("{name} falling penalty"), r(p.beta - d) + slope * d, r(p.beta), a_fall);
        f.expect(!p.fallen(p.beta) && p.fallen(p.beta - d), || format!("{name}: fall test not strict"));
    }

    // reward-level bonus thresholds
    let goal = dkitty::stand_pose();
    let upright = Rotation3::identity();
    let stand = |e: f64| dkitty::stand_reward(&kitty_state(upright, [0.0; 3], goal.map(|g| g + e)), &goal);
    // probe a hair either side: the mean error is only exact to an ulp
    jump(&mut f, "stand +10 bonus", stand(PI / 12.0 - d) - 8.0 * d, stand(PI / 12.0 + d), 10.0);
    jump(&mut f, "stand +5 bonus", stand(PI / 6.0 - d) - 8.0 * d, stand(PI / 6.0 + d), 5.0);

    let ahead = dkitty::facing_from_angle(0.0);
    let yawed = |e: f64, tilt: f64| {
        Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), e) * Rotation3::from_axis_angle(&nalgebra::Vector3::y_axis(), tilt)
    };
    let orient = |e: f64, tilt: f64| dkitty::orient_reward(&kitty_state(yawed(e, tilt), [0.0; 3], goal), &ahead);
    // tilted past 15 deg so only the angle opens the small bonus
    let t = 20.0 * DEG;
    let a = 1e-7;
    jump(&mut f, "orient +5 bonus", orient(15.0 * DEG - a, t) - 8.0 * a, orient(15.0 * DEG + a, t), 5.0);
    jump(&mut f, "orient +10 bonus", orient(5.0 * DEG - a, 0.0) - 8.0 * a, orient(5.0 * DEG + a, 0.0), 10.0);

    let walk = |dist: f64, angle: f64| {
        let s = kitty_state(upright, [0.0; 3], goal);
        let a = PI / 2.0 + angle;
        dkitty::walk_reward(&s, &[dist * a.cos(), dist * a.sin()])
    };
    let h_gate = 25.0 * DEG;
    jump(&mut f, "walk +5 (heading)", walk(2.0, h_gate - a), walk(2.0, h_gate + a), 5.0);
    jump(&mut f, "walk +5 (distance)", walk(0.5 - d, PI), walk(0.5 + d, PI), 5.0);
    jump(&mut f, "walk +10", walk(0.5 - d, 0.0), walk(0.5 + d, 0.0), 10.0);

    f.finish("turn bonuses, pose/stand/orient/walk gates and upright constants hold on both sides".into())
}

pub fn expected_observation_dim(family: TaskFamily) -> usize {
    match family {
        TaskFamily::DClawPose => 36,
        TaskFamily::DClawTurn | TaskFamily::DClawScrew => 21,
        TaskFamily::DKittyStand => 61,
        TaskFamily::DKittyOrient => 53,
        TaskFamily::DKittyWalk => 52,
    }
}

/// Every task's observations have the declared size and a layout whose
/// fields cover it exactly once.
pub fn observation_shapes() -> Check {
    let mut f = Failures::default();
    let all = TaskVariant::all();
    f.expect(all.len() == 18, || format!("{} registered tasks", all.len()));
    for v in &all {
        let want = expected_observation_dim(v.family);
        let mut env = match make_sim_env(*v, 11, TaskConfig::default()) {
            Ok(e) => e,
            Err(e) => {
                f.expect(false, || format!("{v}: {e}"));
                continue;
            }
        };
        f.expect(env.observation_dim() == want && v.observation_dim() == want, || format!("{v}: declared {}", env.observation_dim()));
        let layout = env.layout();
        let mut next = 0;
        let mut names = std::collections::BTreeSet::new();
        for (name, r) in layout.ranges() {
            f.expect(r.start == next && r.end > r.start, || format!("{v}: field {name} at {r:?}, expected start {next}"));
            f.expect(names.insert(name), || format!("{v}: field {name} repeated"));
            next = r.end;
        }
        f.expect(next == want && layout.len() == want, || format!("{v}: layout covers {next} of {want}"));
        let mut obs = env.reset().map_err(|e| format!("{v}: {e}"))?;
        for t in 0..3 {
            f.expect(obs.len() == want, || format!("{v} step {t}: observation has {} entries", obs.len()));
            f.expect(obs.values.iter().all(|x| x.is_finite()), || format!("{v} step {t}: non-finite observation"));
            let hold = obs.slice("qpos").map(<[f64]>::to_vec).unwrap_or_default();
            obs = env.step(&hold).map_err(|e| format!("{v}: {e}"))?.observation;
        }
    }
    f.finish(format!("{} tasks emit 36/21/21/61/53/52-entry observations with gap-free layouts", all.len()))
}

/// Kolmogorov-Smirnov distance between samples and U(lo, hi).
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    d
}

pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Series {
    name: String,
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl Series {
    fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Series { name: name.into(), lo, hi, values: Vec::new() }
    }
}

/// Draws `n` episodes per randomized task; every sampled quantity must lie
/// in its interval and look uniform.
pub fn randomization_ranges(n: u64, seed: u64) -> Check {
    let mut f = Failures::default();
    let mut worst = 0.0f64;
    let cfg = TaskConfig::default();
    let tol = 1e-12;
    for v in TaskVariant::all().into_iter().filter(|v| v.level != TaskLevel::Fixed) {
        let series: Vec<Series>;
        match v.robot() {
            RobotKind::DClaw => {
                let (lo, hi) = (dclaw::lower_bounds(), dclaw::upper_bounds());
                let mut s = match v.family {
                    TaskFamily::DClawPose => vec![Series::new("pose goal joint 1", lo[1], hi[1])],
                    TaskFamily::DClawTurn => vec![Series::new("initial angle", -PI, PI), Series::new("goal angle", -PI, PI)],
                    _ => vec![Series::new("initial angle", -PI, PI), Series::new("velocity", -0.75, 0.75)],
                };
                if v.level == TaskLevel::RandomDynamics && v.family != TaskFamily::DClawPose {
                    s.push(Series::new("object scale", 0.9, 1.1));
                }
                for i in 0..n {
                    let ep = dclaw::sample_episode(v.family, v.level, &cfg.dclaw, &mut episode_rng(seed, i));
                    match ep.goal {
                        dclaw::DClawGoal::Pose(dclaw::PoseGoal::Oscillating { g1, g2, .. }) => {
                            let inside = (0..9).all(|k| lo[k] <= g1[k] && g1[k] <= hi[k] && lo[k] <= g2[k] && g2[k] <= hi[k]);
                            f.expect(inside, || format!("{v} draw {i}: pose goal outside joint bounds"));
                            s[0].values.push(g1[1]);
                        }
                        dclaw::DClawGoal::Object(g) => {
                            s[0].values.push(ep.initial_object.unwrap_or(f64::NAN));
                            s[1].values.push(if v.family == TaskFamily::DClawTurn { g.theta_goal_obj } else { g.desired_velocity });
                        }
                        other => f.expect(false, || format!("{v}: unexpected goal {other:?}")),
                    }
                    if let Some(scale) = s.get_mut(2) {
                        scale.values.push(ep.dynamics.object_scale);
                    }
                }
                series = s;
            }
            RobotKind::DKitty => {
                let mut s = match v.family {
                    TaskFamily::DKittyStand => {
                        let (lo, hi) = (dkitty::lower_bounds(), dkitty::upper_bounds());
                        let (mid, half) = (0.5 * (lo[2] + hi[2]), 0.25 * (hi[2] - lo[2]));
                        vec![Series::new("initial knee", mid - half, mid + half)]
                    }
                    TaskFamily::DKittyOrient => {
                        vec![Series::new("initial heading", -60.0 * DEG, 60.0 * DEG), Series::new("goal heading", 120.0 * DEG, 240.0 * DEG)]
                    }
                    _ => vec![Series::new("goal distance", 1.0, 2.0), Series::new("goal angle", -60.0 * DEG, 60.0 * DEG)],
                };
                if v.level == TaskLevel::RandomDynamics {
                    s.push(Series::new("terrain height", 0.0, 0.05));
                }
                for i in 0..n {
                    let ep = dkitty::sample_episode(v.family, v.level, &cfg.dkitty, &mut episode_rng(seed, i));
                    match ep.goal {
                        dkitty::DKittyGoal::Stand { .. } => s[0].values.push(ep.initial_theta[2]),
                        dkitty::DKittyGoal::Orient { angle, facing } => {
                            let want = dkitty::facing_from_angle(angle);
                            f.expect((facing[0] - want[0]).abs() < 1e-12 && (facing[1] - want[1]).abs() < 1e-12, || {
                                format!("{v} draw {i}: facing {facing:?} does not match angle {angle}")
                            });
                            s[0].values.push(ep.initial_yaw);
                            s[1].values.push(angle);
                        }
                        dkitty::DKittyGoal::Walk { position } => {
                            s[0].values.push(position[0].hypot(position[1]));
                            s[1].values.push((-position[0]).atan2(position[1]));
                        }
                    }
                    if v.level == TaskLevel::RandomDynamics {
                        match &ep.dynamics.height_field {
                            Some(h) => {
                                let ok = h.heights.iter().all(|&z| (0.0..=0.05).contains(&z));
                                f.expect(ok, || format!("{v} draw {i}: terrain outside [0, 0.05] m"));
                                s.last_mut().expect("terrain series").values.push(h.heights[(i as usize * 7) % h.heights.len()]);
                            }
                            None => f.expect(false, || format!("{v} draw {i}: no terrain")),
                        }
                    }
                }
                series = s;
            }
        }
        for s in &series {
            let outside = s.values.iter().filter(|&&x| !(x >= s.lo - tol && x <= s.hi + tol)).count();
            f.expect(outside == 0 && s.values.len() == n as usize, || format!("{v} {}: {outside} of {} outside [{}, {}]", s.name, s.values.len(), s.lo, s.hi));
            let d = ks_uniform(&s.values, s.lo, s.hi);
            worst = worst.max(d);
            f.expect(d < 0.02, || format!("{v} {}: KS distance {d:.4}", s.name));
        }
    }

    // the env draws its episodes from the same streams
    for task in ["DClawScrewRandom", "DKittyWalkRandomDynamics"] {
        let v: TaskVariant = task.parse().expect("known task");
        let mut env = make_sim_env(v, seed, cfg.clone()).map_err(|e| e.to_string())?;
        for i in [0u64, 17, 9999] {
            env.reset_episode(i).map_err(|e| e.to_string())?;
            let logged = serde_json::to_value(env.episode_params().expect("reset")).expect("serializes");
            let direct = match v.robot() {
                RobotKind::DClaw => serde_json::to_value(rbench_core::env::EpisodeParams::DClaw(dclaw::sample_episode(
                    v.family,
                    v.level,
                    &cfg.dclaw,
                    &mut episode_rng(seed, i),
                ))),
                RobotKind::DKitty => serde_json::to_value(rbench_core::env::EpisodeParams::DKitty(dkitty::sample_episode(
                    v.family,
                    v.level,
                    &cfg.dkitty,
                    &mut episode_rng(seed, i),
                ))),
            }
            .expect("serializes");
            f.expect(logged == direct, || format!("{task} episode {i}: env parameters differ from the seeded draw"));
        }
    }
    f.finish(format!("{n} draws per randomized task inside their intervals; worst KS distance {worst:.4}"))
}

fn bitwise_crc(bytes: &[u8]) -> u16 {
    let mut reg: u16 = 0;
    for &b in bytes {
        for i in (0..8).rev() {
            let feedback = ((reg >> 15) as u8 & 1) ^ ((b >> i) & 1);
            reg <<= 1;
            if feedback == 1 {
                reg ^= 0x8005;
            }
        }
    }
    reg
}

/// Random bytes weighted toward the header bytes so stuffing gets exercised.
fn header_heavy(rng: &mut impl Rng, max: usize) -> Vec<u8> {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| match rng.random_range(0..7) {
            0 | 1 => 0xFF,
            2 => 0xFD,
            3 => 0x00,
            _ => rng.random(),
        })
        .collect()
}

fn random_packet(rng: &mut impl Rng) -> Packet {
    if rng.random::<bool>() {
        let id = if rng.random_range(0..8) == 0 { BROADCAST_ID } else { rng.random_range(0..=MAX_ID) };
        let instruction = Instruction::ALL[rng.random_range(0..Instruction::ALL.len())];
        Packet::Instruction(InstructionPacket { id, instruction, params: header_heavy(rng, 64) })
    } else {
        Packet::Status(StatusPacket { id: rng.random_range(0..=MAX_ID), error: rng.random(), params: header_heavy(rng, 64) })
    }
}

/// Packet and stuffing round trips, table CRC against a shift register, and
/// decoder recovery after corrupted input.
pub fn codec(packets: usize, crc_strings: usize) -> Check {
    let start = Instant::now();
    let mut f = Failures::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);

    let mut stream = Vec::new();
    let mut batch = Vec::new();
    for i in 0..packets {
        let p = random_packet(&mut rng);
        let params = match &p {
            Packet::Instruction(x) => &x.params,
            Packet::Status(x) => &x.params,
        };
        let back = unstuff(&stuff(params));
        f.expect(back.as_ref() == Ok(params), || format!("packet {i}: unstuff(stuff(x)) = {back:?}"));
        let frame = match p.encode() {
            Ok(fr) => fr,
            Err(e) => {
                f.expect(false, || format!("packet {i}: encode failed: {e}"));
                continue;
            }
        };
        let decoded = decode(&frame);
        f.expect(decoded.as_ref() == Ok(&Some(p.clone())), || format!("packet {i}: decoded {decoded:?}"));
        stream.extend_from_slice(&frame);
        batch.push(p);
        if batch.len() == 1000 {
            // the same packets back to back, fed in uneven chunks
            let mut d = FrameDecoder::new();
            let mut out = Vec::new();
            let mut rest = &stream[..];
            while !rest.is_empty() {
                let k = rng.random_range(1..=64).min(rest.len());
                d.push(&rest[..k]);
                rest = &rest[k..];
                while let Ok(Some(p)) = d.next_packet() {
                    out.push(p);
                }
            }
            f.expect(out == batch, || format!("stream of {} packets decoded to {}", batch.len(), out.len()));
            stream.clear();
            batch.clear();
        }
    }

    for i in 0..crc_strings {
        let n = rng.random_range(0..=64);
        let bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
        let (a, b) = (crc16(&bytes), bitwise_crc(&bytes));
        f.expect(a == b, || format!("crc string {i}: table {a:#06x}, bitwise {b:#06x}"));
    }

    let trials = 10_000;
    for i in 0..trials {
        let mut input = header_heavy(&mut rng, 32);
        let mut bad = random_packet(&mut rng).encode().expect("encodes");
        let bit = rng.random_range(0..bad.len() * 8);
        bad[bit / 8] ^= 1 << (bit % 8);
        input.extend_from_slice(&bad);
        let good = random_packet(&mut rng);
        input.extend_from_slice(&good.encode().expect("encodes"));
        let mut d = FrameDecoder::new();
        d.push(&input);
        let (got, _) = d.drain();
        f.expect(got.last() == Some(&good), || format!("resync trial {i}: recovered {:?}", got.last()));
    }

    let took = within(Duration::from_secs(30), start, &mut f, "codec suite");
    f.finish(format!("{packets} packet round trips, {crc_strings} CRC strings, {trials} resyncs ({took:.2?})"))
}

/// Tasks and a policy that together touch every code path the logs record.
pub const DETERMINISM_TASKS: [&str; 6] = [
    "DClawPoseRandom",
    "DClawTurnRandomDynamics",
    "DClawScrewRandom",
    "DKittyStandRandomDynamics",
    "DKittyOrientRandom",
    "DKittyWalkRandomDynamics",
];

fn jittery_policy(task: TaskVariant, seed: u64, steps: usize) -> ScriptedPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = match task.robot() {
        RobotKind::DClaw => (dclaw::lower_bounds().to_vec(), dclaw::upper_bounds().to_vec()),
        RobotKind::DKitty => (dkitty::lower_bounds().to_vec(), dkitty::upper_bounds().to_vec()),
    };
    let actions = (0..steps).map(|_| lo.iter().zip(&hi).map(|(l, h)| uniform(&mut rng, *l, *h)).collect()).collect();
    ScriptedPolicy { actions }
}

/// Serialized logs of two episodes per task for a fixed seed.
pub fn determinism_logs(seed: u64) -> Result<String, String> {
    let mut out = String::new();
    for name in DETERMINISM_TASKS {
        let v: TaskVariant = name.parse().map_err(|e| format!("{e}"))?;
        let mut env = make_sim_env(v, seed, TaskConfig::default()).map_err(|e| e.to_string())?;
        let policy = jittery_policy(v, seed, 40);
        for _ in 0..2 {
            out.push_str(&run_episode(&mut env, &policy, 40).map_err(|e| e.to_string())?.to_jsonl());
        }
    }
    Ok(out)
}

/// Same logs twice in one process, and the parallel evaluator matches a
/// serial run.
pub fn determinism_in_process(seed: u64) -> Check {
    let mut f = Failures::default();
    let a = determinism_logs(seed)?;
    let b = determinism_logs(seed)?;
    f.expect(a == b, || "two runs in one process produced different logs".into());
    let other = determinism_logs(seed + 1)?;
    f.expect(a != other, || "a different seed produced the same logs".into());

    let v: TaskVariant = "DKittyWalkRandomDynamics".parse().map_err(|e| format!("{e}"))?;
    let factory = || make_sim_env(v, seed, TaskConfig::default());
    let policy = jittery_policy(v, seed, 30);
    let par = evaluate_detailed(factory, &policy, 6, true).map_err(|e| e.to_string())?;
    let ser = evaluate_detailed(factory, &policy, 6, false).map_err(|e| e.to_string())?;
    let text = |logs: &[Option<EpisodeLog>]| logs.iter().flatten().map(EpisodeLog::to_jsonl).collect::<String>();
    f.expect(text(&par.logs) == text(&ser.logs), || "parallel and serial evaluation logs differ".into());
    f.finish(format!("{} bytes of logs identical across runs", a.len()))
}

pub const CHILD_VAR: &str = "RBENCH_DETERMINISM_CHILD";

/// Body of the child test: writes the logs where the parent asked.
pub fn determinism_child(seed: u64) {
    if let Ok(path) = std::env::var(CHILD_VAR) {
        std::fs::write(path, determinism_logs(seed).expect("child run")).expect("child writes");
    }
}

/// Re-runs `child_test` of the current test binary in a fresh process and
/// compares its logs with ours.
pub fn determinism_cross_process(child_test: &str, seed: u64) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("child.jsonl");
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let status = std::process::Command::new(exe)
        .args([child_test, "--exact", "--test-threads", "1", "--quiet"])
        .env(CHILD_VAR, &path)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("child process failed: {status}"));
    }
    let theirs = std::fs::read_to_string(&path).map_err(|e| format!("child wrote no logs: {e}"))?;
    let ours = determinism_logs(seed)?;
    if theirs == ours {
        Ok(format!("{} bytes identical across process restarts", ours.len()))
    } else {
        Err("logs differ between processes".into())
    }
}

fn brute_force(log: &EpisodeLog) -> [u64; 3] {
    let l = &log.meta.limits;
    let mut t = [0u64; 3];
    for r in &log.records {
        let j = &r.joints;
        t[0] += oracle::position_count(&j.position, &l.lower, &l.upper, l.epsilon);
        t[1] += oracle::over_limit_count(&j.velocity, &l.speed);
        t[2] += oracle::over_limit_count(&j.current, &l.current);
    }
    t
}

fn agg(log: &EpisodeLog) -> [u64; 3] {
    let s = aggregate(log).totals;
    [s.position, s.velocity, s.current]
}

/// A 1000-step claw log driven by bang-bang commands, and a 1000-step
/// quadruped log whose joint readings and limits are then replaced by random
/// values near every limit.
pub fn random_safety_logs(seed: u64) -> Result<(EpisodeLog, EpisodeLog), String> {
    let claw: TaskVariant = if seed % 2 == 0 { "DClawTurnRandomDynamics" } else { "DClawPoseRandom" }.parse().map_err(|e| format!("{e}"))?;
    let mut env = make_sim_env(claw, seed, TaskConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBAD);
    let (lo, hi) = env.action_bounds();
    let actions = (0..1000)
        .map(|_| {
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| match rng.random_range(0..4) {
                    0 => *l,
                    1 => *h,
                    _ => uniform(&mut rng, *l, *h),
                })
                .collect()
        })
        .collect();
    let driven = run_episode(&mut env, &ScriptedPolicy { actions }, 1000).map_err(|e| e.to_string())?;

    let kitty: TaskVariant = "DKittyStandRandom".parse().map_err(|e| format!("{e}"))?;
    let mut env = make_sim_env(kitty, seed, TaskConfig::default()).map_err(|e| e.to_string())?;
    let mut synthetic = run_episode(&mut env, &HoldPolicy, 1000).map_err(|e| e.to_string())?;
    let n = kitty.action_dim();
    let l = &mut synthetic.meta.limits;
    l.epsilon = uniform(&mut rng, 0.01, 0.3);
    l.speed = (0..n).map(|_| uniform(&mut rng, 0.5, 5.0)).collect();
    l.current = (0..n).map(|_| uniform(&mut rng, 0.2, 2.0)).collect();
    let l = l.clone();
    for r in &mut synthetic.records {
        let j = &mut r.joints;
        for k in 0..n {
            let side = if rng.random::<bool>() { l.lower[k] } else { l.upper[k] };
            j.position[k] = side + uniform(&mut rng, -2.0, 2.0) * l.epsilon;
            j.velocity[k] = uniform(&mut rng, -2.0, 2.0) * l.speed[k];
            j.current[k] = uniform(&mut rng, -2.0, 2.0) * l.current[k];
        }
    }
    Ok((driven, synthetic))
}

/// Log-level totals equal a step-by-step brute-force recount.
pub fn safety_recount(logs: u64) -> Check {
    let mut f = Failures::default();
    let mut grand = [0u64; 3];
    for seed in 0..logs {
        let (driven, synthetic) = random_safety_logs(seed)?;
        for (kind, log) in [("driven", &driven), ("synthetic", &synthetic)] {
            f.expect(log.records.len() == 1000, || format!("{kind} log {seed}: {} steps", log.records.len()));
            let (a, b) = (agg(log), brute_force(log));
            f.expect(a == b, || format!("{kind} log {seed}: aggregate {a:?}, recount {b:?}"));
            for k in 0..3 {
                grand[k] += b[k];
            }
        }
        // the per-step counts the env recorded add up to the same totals
        let recorded = driven.records.iter().fold([0u64; 3], |t, r| {
            [t[0] + r.violations.position, t[1] + r.violations.velocity, t[2] + r.violations.current]
        });
        f.expect(recorded == agg(&driven), || format!("log {seed}: recorded {recorded:?}, aggregate {:?}", agg(&driven)));
    }
    f.expect(grand.iter().all(|&c| c > 0), || format!("logs never exercised every counter: {grand:?}"));
    f.finish(format!("{} logs of 1000 steps; totals {grand:?} match the recount exactly", 2 * logs))
}

/// CEM on simulated DClawPoseFixed, then a 10-episode evaluation.
pub fn cem_end_to_end() -> Check {
    let start = Instant::now();
    let mut f = Failures::default();
    let task: TaskVariant = "DClawPoseFixed".parse().map_err(|e| format!("{e}"))?;
    let factory = || make_sim_env(task, 0, TaskConfig::default());
    let config = CemConfig::default();
    let mut solved_at = None;
    let out = cem_optimize(factory, &config, |s, p| {
        if let Ok(e) = evaluate_detailed(factory, p, 10, true) {
            if e.report.success_fraction == 1.0 {
                solved_at = Some(s.iteration);
            }
        }
        solved_at.is_some()
    })
    .map_err(|e| e.to_string())?;
    let eval = evaluate_detailed(factory, &out.policy, 10, true).map_err(|e| e.to_string())?;
    f.expect(eval.report.success_fraction == 1.0, || format!("success fraction {}", eval.report.success_fraction));
    f.expect(solved_at.is_some_and(|i| i < config.iterations), || format!("not solved within {} iterations", config.iterations));
    // tracking error recomputed from the logs
    let mut worst: f64 = 0.0;
    for log in eval.logs.iter() {
        let Some(log) = log else {
            f.expect(false, || "an evaluation episode failed".into());
            continue;
        };
        let errs: Vec<f64> = log
            .records
            .iter()
            .filter_map(|r| match &r.goal {
                GoalSnapshot::Pose { theta_goal } => Some(mean_abs_error(theta_goal, &r.joints.position)),
                _ => None,
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
        worst = worst.max(mean);
    }
    f.expect(worst < 10.0 * DEG, || format!("worst episode tracking error {:.2} deg", worst / DEG));
    let took = within(Duration::from_secs(300), start, &mut f, "CEM run");
    let iters = solved_at.map_or("-".into(), |i| (i + 1).to_string());
    f.finish(format!(
        "success 1.0 over 10 episodes after {iters} iteration(s); worst mean error {:.2} deg ({took:.2?})",
        worst / DEG
    ))
}

/// Rotation whose z-axis has vertical component exactly `u`.
pub fn tilted(u: f64) -> Rotation3<f64> {
    let s = (1.0 - u * u).sqrt();
    Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(1.0, 0.0, 0.0, 0.0, u, -s, 0.0, s, u))
}

/// Upright poses, then one with uprightness `fall_u` at index `k`, then
/// upright again.
pub fn fall_stream(k: usize, fall_u: f64, len: usize) -> Vec<BasePose> {
    (0..len)
        .map(|i| {
            let r = if i == k { tilted(fall_u) } else { Rotation3::identity() };
            BasePose::at([0.0, 0.0, 0.3], r)
        })
        .collect()
}

pub fn replay_env(task: TaskVariant, poses: Vec<BasePose>) -> Result<rbench_core::Env, String> {
    let backend = SimBackend::new(RobotKind::DKitty).with_base_model(Box::new(Replay::new(poses)));
    make_env(task, Box::new(backend), 5, TaskConfig::default()).map_err(|e| e.to_string())
}

/// Reference reward for a logged quadruped step.
pub fn kitty_reference_reward(r: &rbench_core::log::StepRecord) -> f64 {
    let base = r.base.unwrap_or_default();
    let m = mat_of(&base.rotation);
    match &r.goal {
        GoalSnapshot::Stand { theta_goal } => oracle::stand_reward(&m, base.position, &r.joints.position, theta_goal),
        GoalSnapshot::Orient { facing, .. } => oracle::orient_reward(&m, base.position, *facing),
        GoalSnapshot::Walk { position } => oracle::walk_reward(&m, base.position, *position),
        other => panic!("not a quadruped goal: {other:?}"),
    }
}

/// Streams that dip below the falling threshold end on exactly that step,
/// and the falling penalty lands once.
pub fn early_termination() -> Check {
    let mut f = Failures::default();
    let mut cases = 0;
    for family in [TaskFamily::DKittyStand, TaskFamily::DKittyOrient, TaskFamily::DKittyWalk] {
        let p = UprightParams::for_family(family);
        let task = TaskVariant::new(family, TaskLevel::Fixed);
        for k in [1usize, 2, 7, 60, 99] {
            cases += 1;
            let fall_u = p.beta - 1e-3;
            let mut env = replay_env(task, fall_stream(k, fall_u, 120))?;
            let log = run_episode(&mut env, &HoldPolicy, 100).map_err(|e| e.to_string())?;
            f.expect(log.records.len() == k, || format!("{task} fall at {k}: {} records", log.records.len()));
            f.expect(log.end.termination == Termination::Fell, || format!("{task} fall at {k}: ended {:?}", log.end.termination));
            for r in &log.records[..log.records.len().saturating_sub(1)] {
                f.expect(!r.done && r.done_reason == DoneReason::None, || format!("{task} fall at {k}: step {} already done", r.t));
            }
            if let Some(last) = log.records.last() {
                f.expect(last.done && last.done_reason == DoneReason::Fell, || format!("{task} fall at {k}: last step {:?}", last.done_reason));
                let reference = kitty_reference_reward(last);
                f.expect(close(last.reward, reference), || format!("{task} fall at {k}: reward {} vs {reference}", last.reward));
                // take the penalty back out: what remains is the plain affine term
                let without = reference - oracle::upright_reward(fall_u, oracle_params(family))
                    + p.alpha_upright * (fall_u - p.beta) / (1.0 - p.beta);
                f.expect((last.reward - without - p.alpha_falling).abs() < 1e-9, || {
                    format!("{task} fall at {k}: penalty applied {} times", (last.reward - without) / p.alpha_falling)
                });
                let earlier_penalty = log.records[..k - 1].iter().any(|r| r.reward < p.alpha_falling / 2.0);
                f.expect(!earlier_penalty, || format!("{task} fall at {k}: penalty before the fall"));
            }
            let again = env.step(&vec![0.0; 12]);
            f.expect(again.is_err(), || format!("{task} fall at {k}: stepping after the fall succeeded"));
        }
        // sitting exactly on the threshold is not a fall
        cases += 1;
        let mut env = replay_env(task, fall_stream(3, p.beta, 40))?;
        let log = run_episode(&mut env, &HoldPolicy, 20).map_err(|e| e.to_string())?;
        f.expect(log.records.len() == 20 && log.end.termination == Termination::Horizon, || {
            format!("{task}: u = beta ended the episode after {} steps", log.records.len())
        });
    }
    f.finish(format!("{cases} synthetic streams end on the crossing step with one falling penalty"))
}

fn oracle_params(family: TaskFamily) -> oracle::Upright {
    match family {
        TaskFamily::DKittyStand => oracle::stand_params(),
        TaskFamily::DKittyOrient => oracle::orient_params(),
        _ => oracle::walk_params(),
    }
}
