//! Flat observation vectors with named slices.

use std::ops::Range;

use serde::Serialize;

use crate::variant::TaskFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayoutField {
    pub name: &'static str,
    pub len: usize,
}

const fn field(name: &'static str, len: usize) -> LayoutField {
    LayoutField { name, len }
}

const POSE: &[LayoutField] = &[
    field("qpos", 9),
    field("qvel", 9),
    field("qpos_error", 9),
    field("last_action", 9),
];

const OBJECT: &[LayoutField] = &[
    field("qpos", 9),
    field("qvel", 9),
    field("object_sin_cos", 2),
    field("object_error", 1),
];

/// Torso state shared by every D'Kitty task, in this order.
const KITTY_SHARED: [LayoutField; 8] = [
    field("root_pos", 3),
    field("root_euler", 3),
    field("root_vel", 3),
    field("root_angular_vel", 3),
    field("qpos", 12),
    field("qvel", 12),
    field("last_action", 12),
    field("upright", 1),
];

/// `M` must be `8 + N`; checked at compile time.
const fn kitty_with<const N: usize, const M: usize>(extra: [LayoutField; N]) -> [LayoutField; M] {
    assert!(M == 8 + N);
    let mut out = [field("", 0); M];
    let mut i = 0;
    while i < 8 {
        out[i] = KITTY_SHARED[i];
        i += 1;
    }
    while i < M {
        out[i] = extra[i - 8];
        i += 1;
    }
    out
}

const STAND: [LayoutField; 9] = kitty_with([field("pose_error", 12)]);
const ORIENT: [LayoutField; 10] = kitty_with([field("current_facing", 2), field("goal_facing", 2)]);
const WALK: [LayoutField; 10] = kitty_with([field("heading", 1), field("target_offset", 2)]);

/// Number of leading entries every D'Kitty observation shares.
pub const KITTY_SHARED_LEN: usize = 49;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ObservationLayout {
    fields: &'static [LayoutField],
}

impl ObservationLayout {
    pub fn for_family(family: TaskFamily) -> Self {
        let fields: &'static [LayoutField] = match family {
            TaskFamily::DClawPose => POSE,
            TaskFamily::DClawTurn | TaskFamily::DClawScrew => OBJECT,
            TaskFamily::DKittyStand => &STAND,
            TaskFamily::DKittyOrient => &ORIENT,
            TaskFamily::DKittyWalk => &WALK,
        };
        ObservationLayout { fields }
    }

    pub fn fields(&self) -> &'static [LayoutField] {
        self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.iter().map(|f| f.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index ranges in field order; they tile `0..len()`.
    pub fn ranges(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut start = 0;
        self.fields
            .iter()
            .map(|f| {
                let r = start..start + f.len;
                start += f.len;
                (f.name, r)
            })
            .collect()
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.ranges().into_iter().find(|(n, _)| *n == name).map(|(_, r)| r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub layout: ObservationLayout,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }
}

/// Appends fields in layout order, checking each length.
pub(crate) struct ObservationBuilder {
    layout: ObservationLayout,
    values: Vec<f64>,
    next: usize,
}

impl ObservationBuilder {
    pub fn new(family: TaskFamily) -> Self {
        let layout = ObservationLayout::for_family(family);
        ObservationBuilder { layout, values: Vec::with_capacity(layout.len()), next: 0 }
    }

    pub fn push(mut self, name: &str, data: &[f64]) -> Self {
        let f = self.layout.fields[self.next];
        debug_assert_eq!(f.name, name);
        assert_eq!(f.len, data.len(), "observation field {name}");
        self.values.extend_from_slice(data);
        self.next += 1;
        self
    }

    pub fn finish(self) -> Observation {
        assert_eq!(self.next, self.layout.fields.len(), "observation incomplete");
        Observation { values: self.values, layout: self.layout }
    }
}
