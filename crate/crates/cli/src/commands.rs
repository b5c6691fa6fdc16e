use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rbench_core::cem::{cem_optimize, LearningCurve};
use rbench_core::config::{digest_of, BackendKind, DEFAULT_EVAL_EPISODES};
use rbench_core::env::{evaluate, evaluate_detailed, run_episode_at};
use rbench_core::log::{write_atomic, TOOL_VERSION};
use rbench_core::success::episode_outcome;
use rbench_core::{build_report, CemConfig, EpisodeLog, Policy, RunConfig, TaskVariant};
use serde::Serialize;

use crate::setup::{build_env, load_policy, resolve, run_digest, PolicyFailure, Usage};
use crate::{ReportArgs, RunArgs, TrainArgs};

#[derive(Serialize)]
struct CatalogRow {
    task: String,
    family: &'static str,
    level: &'static str,
    observation_dim: usize,
    action_dim: usize,
}

pub fn list(json: bool) -> Result<()> {
    let rows: Vec<CatalogRow> = TaskVariant::all()
        .into_iter()
        .map(|t| CatalogRow {
            task: t.name(),
            family: t.family.name(),
            level: t.level.name(),
            observation_dim: t.observation_dim(),
            action_dim: t.action_dim(),
        })
        .collect();
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    println!("{:<26} {:<13} {:<15} {:>4} {:>4}", "task", "family", "level", "obs", "act");
    for r in rows {
        println!("{:<26} {:<13} {:<15} {:>4} {:>4}", r.task, r.family, r.level, r.observation_dim, r.action_dim);
    }
    Ok(())
}

/// Runs every episode of the config. Sim episodes run in parallel on
/// separate envs; hardware episodes share one bus and run in order.
fn run_episodes(cfg: &RunConfig, policy: &dyn Policy, digest: &str) -> Result<Vec<EpisodeLog>> {
    let n = cfg.episodes;
    if cfg.backend == BackendKind::Hardware {
        let mut env = build_env(cfg, digest)?;
        let h = env.horizon();
        let mut logs = Vec::with_capacity(n);
        for i in 0..n as u64 {
            logs.push(run_episode_at(&mut env, policy, h, i).with_context(|| format!("episode {i}"))?);
        }
        return Ok(logs);
    }
    // surface construction errors with their type before fanning out
    drop(build_env(cfg, digest)?);
    let ev = evaluate_detailed(|| build_env(cfg, digest), policy, n, true)?;
    ev.logs
        .into_iter()
        .zip(&ev.report.per_episode)
        .enumerate()
        .map(|(i, (log, _))| {
            log.ok_or_else(|| {
                let why = ev.report.flagged.iter().find(|f| f.episode == i as u64).map(|f| f.message.clone());
                anyhow::anyhow!("episode {i} failed: {}", why.unwrap_or_default())
            })
        })
        .collect()
}

fn write_logs(dir: &Path, logs: &[EpisodeLog]) -> Result<Vec<PathBuf>> {
    logs.iter()
        .map(|log| {
            let path = dir.join(log.file_name());
            log.write(&path).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

pub fn run(args: &RunArgs) -> Result<()> {
    let cfg = resolve(&args.flags, args.policy.as_deref())?;
    let digest = run_digest(&cfg);
    let policy = load_policy(&cfg)?;
    let logs = run_episodes(&cfg, policy.as_ref(), &digest)?;
    let paths = write_logs(&cfg.output, &logs)?;
    let mut policy_errors = Vec::new();
    for (log, path) in logs.iter().zip(&paths) {
        let o = episode_outcome(log);
        println!(
            "{}  steps {:>4}  return {:>10.3}  success {}",
            path.display(),
            log.records.len(),
            o.total_reward,
            o.success
        );
        if let rbench_core::log::Termination::PolicyError { step, message } = &log.end.termination {
            policy_errors.push(format!("episode {} step {step}: {message}", log.meta.episode));
        }
    }
    if !policy_errors.is_empty() {
        bail!(PolicyFailure(format!("policy failed: {}", policy_errors.join("; "))));
    }
    Ok(())
}

pub fn eval(args: &RunArgs) -> Result<()> {
    let cfg = resolve(&args.flags, args.policy.as_deref())?;
    let digest = run_digest(&cfg);
    let policy = load_policy(&cfg)?;
    let logs = run_episodes(&cfg, policy.as_ref(), &digest)?;
    let paths = write_logs(&cfg.output, &logs)?;
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let report = build_report(names.iter().map(String::as_str).zip(&logs))?;
    print!("{}", report.to_table());
    let out = cfg.output.join("eval_report.json");
    write_atomic(&out, format!("{}\n", report.to_json()).as_bytes())?;
    println!("report: {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainDigestInput<'a> {
    run: &'a str,
    cem: &'a CemConfig,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = resolve(&args.flags, Some("zero"))?;
    if cfg.backend != BackendKind::Sim {
        bail!(Usage("training runs on the sim backend only".into()));
    }
    let mut cem = CemConfig { seed: cfg.seed, ..CemConfig::default() };
    if let Some(v) = args.population {
        cem.population = v;
    }
    if let Some(v) = args.iterations {
        cem.iterations = v;
    }
    if let Some(v) = args.elite_fraction {
        cem.elite_fraction = v;
    }
    if let Some(v) = args.init_std {
        cem.init_std = v;
    }
    if let Some(v) = args.episodes_per_candidate {
        cem.episodes_per_candidate = v;
    }
    cem.validate().map_err(|e| Usage(e.to_string()))?;
    let digest = digest_of(&TrainDigestInput { run: &run_digest(&cfg), cem: &cem });
    let factory = || build_env(&cfg, &digest);
    drop(factory()?);

    let outcome = cem_optimize(factory, &cem, |s, policy| {
        println!(
            "iter {:>3}  mean {:>10.3}  elite {:>10.3}  best {:>10.3}  std {:.4}",
            s.iteration, s.mean_return, s.elite_mean_return, s.best_return, s.mean_std
        );
        match args.target_success {
            Some(target) => evaluate(factory, policy, DEFAULT_EVAL_EPISODES).is_ok_and(|r| r.success_fraction >= target),
            None => false,
        }
    })?;

    let policy_path = cfg.output.join("policy.json");
    outcome.policy.save(&policy_path, &digest)?;
    let curve = LearningCurve {
        tool_version: TOOL_VERSION.into(),
        task: cfg.task,
        config_digest: digest.clone(),
        cem,
        iterations: outcome.result.curve.clone(),
    };
    let curve_path = cfg.output.join("curve.json");
    write_atomic(&curve_path, format!("{}\n", serde_json::to_string_pretty(&curve)?).as_bytes())?;

    let r = evaluate(factory, &outcome.policy, DEFAULT_EVAL_EPISODES)?;
    println!("policy: {}", policy_path.display());
    println!("curve: {}", curve_path.display());
    println!("success over {} episodes: {:.3}", r.n_episodes, r.success_fraction);
    Ok(())
}

fn collect_logs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let files = collect_logs(&args.paths)?;
    if files.is_empty() {
        bail!(Usage("no episode logs given".into()));
    }
    let logs = files
        .iter()
        .map(|f| EpisodeLog::read(f).with_context(|| format!("reading {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    let report = build_report(names.iter().map(String::as_str).zip(&logs))?;
    print!("{}", report.to_table());
    write_atomic(&args.out, format!("{}\n", report.to_json()).as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("report: {}", args.out.display());
    Ok(())
}
