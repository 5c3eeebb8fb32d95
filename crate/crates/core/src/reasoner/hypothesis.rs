//! Candidate explanations: hidden bodies and identity bindings.

use serde::{Deserialize, Serialize};

use super::observe::{Observed, Track};
use crate::dynamics::FRAME_DT;
use crate::world::{ObjectKind, CANONICAL_HALF_EXTENT, MAX_OBJECTS};

const R: f64 = CANONICAL_HALF_EXTENT;
/// Refinement step for positions taken from a sighting.
pub(crate) const OBSERVED_STEP: f64 = 0.03;
/// Refinement step for positions taken from the grid.
pub(crate) const GRID_STEP: f64 = 0.15;
/// Hidden cubes allowed in a drop scene.
const MAX_DROP_HIDDEN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenKind {
    Ball,
    FixedCube,
}

/// A body present from the first frame but not seen in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenObject {
    pub kind: HiddenKind,
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    /// Observed track this body accounts for, if any.
    pub track: Option<u8>,
    /// Initial refinement step for the position.
    pub spread: f64,
}

/// Asserts that `track` is a second object looking exactly like `twin_of`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityBinding {
    pub track: u8,
    pub twin_of: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub hidden: Vec<HiddenObject>,
    pub bindings: Vec<IdentityBinding>,
    /// Larger for simpler explanations.
    pub prior_weight: f64,
}

impl Hypothesis {
    pub fn empty() -> Self {
        Hypothesis { hidden: Vec::new(), bindings: Vec::new(), prior_weight: 1.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty() && self.bindings.is_empty()
    }

    fn complexity(&self) -> (usize, usize) {
        (self.hidden.len(), self.bindings.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    /// Spacing of candidate rest positions behind the occluder.
    pub grid_pitch: f64,
    /// Objective evaluations allowed per hypothesis fit.
    pub eval_cap: usize,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig { grid_pitch: R, eval_cap: 400 }
    }
}

fn hidden_kind(kind: ObjectKind) -> HiddenKind {
    match kind {
        ObjectKind::Cube => HiddenKind::FixedCube,
        _ => HiddenKind::Ball,
    }
}

/// Positions behind the occluder, anchored at its left edge.
pub(crate) fn grid(seen: &Observed, pitch: f64) -> Vec<f64> {
    let Some((l, r)) = seen.occluded_span else { return Vec::new() };
    let mut xs = Vec::new();
    let mut k = 0usize;
    loop {
        let x = l + R + k as f64 * pitch;
        if x > r - R + 1e-9 {
            break;
        }
        xs.push(x);
        k += 1;
    }
    xs
}

/// A late track's first two full sightings agree to within a pixel.
fn at_rest(seen: &Observed, t: &Track) -> Option<f64> {
    let full: Vec<_> = (0..seen.frames).filter_map(|f| t.full_at(f)).take(2).collect();
    match full.as_slice() {
        [a] => Some(a.pose.0),
        [a, b] if (a.pose.0 - b.pose.0).abs() <= seen.camera.pixel_width() => Some(a.pose.0),
        _ => None,
    }
}

/// Constant-velocity history for a late track, extrapolated back to frame 0.
fn back_extrapolate(seen: &Observed, t: &Track, twin: &Track) -> Option<(f64, f64)> {
    let full: Vec<(usize, f64)> = (0..seen.frames)
        .filter_map(|f| t.full_at(f).map(|s| (f, s.pose.0)))
        .take(2)
        .collect();
    let v = match full.as_slice() {
        [] => return None,
        [(f0, x0), (f1, x1), ..] => (x1 - x0) / ((f1 - f0) as f64 * FRAME_DT),
        [_] => {
            let tw: Vec<(usize, f64)> = (0..seen.frames)
                .filter_map(|f| twin.full_at(f).map(|s| (f, s.pose.0)))
                .take(2)
                .collect();
            match tw.as_slice() {
                [(f0, x0), (f1, x1)] => (x1 - x0) / ((f1 - f0) as f64 * FRAME_DT),
                _ => 0.0,
            }
        }
    };
    let (f, x) = full[0];
    Some((x - v * f as f64 * FRAME_DT, v))
}

/// Ways to account for one late track.
#[derive(Clone, Debug)]
enum LateOption {
    Unexplained,
    Hidden(HiddenObject),
    Twin(HiddenObject, IdentityBinding),
}

fn late_options(seen: &Observed, t: &Track, xs: &[f64]) -> Vec<LateOption> {
    let mut out = vec![LateOption::Unexplained];
    let kind = hidden_kind(t.kind);
    match at_rest(seen, t) {
        Some(x) => out.push(LateOption::Hidden(HiddenObject {
            kind,
            position: (x, R),
            velocity: (0.0, 0.0),
            track: Some(t.id),
            spread: OBSERVED_STEP,
        })),
        None => out.extend(xs.iter().map(|&x| {
            LateOption::Hidden(HiddenObject {
                kind,
                position: (x, R),
                velocity: (0.0, 0.0),
                track: Some(t.id),
                spread: GRID_STEP,
            })
        })),
    }
    for twin in seen.initial_tracks().filter(|s| s.looks_like(t)) {
        if let Some((x0, v)) = back_extrapolate(seen, t, twin) {
            out.push(LateOption::Twin(
                HiddenObject {
                    kind: HiddenKind::Ball,
                    position: (x0, R),
                    velocity: (v, 0.0),
                    track: Some(t.id),
                    spread: OBSERVED_STEP,
                },
                IdentityBinding { track: t.id, twin_of: twin.id },
            ));
        }
    }
    out
}

fn is_drop_scene(seen: &Observed) -> bool {
    seen.initial_tracks().any(|t| {
        t.sightings[0].as_ref().is_some_and(|s| s.centroid.1 - R > seen.camera.pixel_height())
    })
}

/// Sets of anonymous hidden bodies, smallest first.
fn anonymous_sets(seen: &Observed, xs: &[f64], room: usize) -> Vec<Vec<HiddenObject>> {
    let anon = |kind, x| HiddenObject { kind, position: (x, R), velocity: (0.0, 0.0), track: None, spread: GRID_STEP };
    let mut sets = vec![Vec::new()];
    if room == 0 {
        return sets;
    }
    if is_drop_scene(seen) {
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..MAX_DROP_HIDDEN.min(room) {
            let mut next = Vec::new();
            for set in &frontier {
                let start = set.last().map_or(0, |&i| i + 1);
                for i in start..xs.len() {
                    if set.last().is_some_and(|&j| xs[i] - xs[j] < 2.0 * R - 1e-9) {
                        continue;
                    }
                    let mut s = set.clone();
                    s.push(i);
                    next.push(s);
                }
            }
            sets.extend(next.iter().map(|s| s.iter().map(|&i| anon(HiddenKind::FixedCube, xs[i])).collect()));
            frontier = next;
        }
    } else {
        for kind in [HiddenKind::Ball, HiddenKind::FixedCube] {
            sets.extend(xs.iter().map(|&x| vec![anon(kind, x)]));
        }
    }
    sets
}

pub(crate) fn enumerate(seen: &Observed, config: &ReasonerConfig) -> Vec<Hypothesis> {
    if seen.occluded_span.is_none() {
        return vec![Hypothesis::empty()];
    }
    let xs = grid(seen, config.grid_pitch);
    let late: Vec<&Track> = seen.late_tracks().collect();

    let mut combos: Vec<(Vec<HiddenObject>, Vec<IdentityBinding>)> = vec![(Vec::new(), Vec::new())];
    for t in &late {
        let opts = late_options(seen, t, &xs);
        let mut next = Vec::with_capacity(combos.len() * opts.len());
        for (h, b) in &combos {
            for o in &opts {
                let (mut h, mut b) = (h.clone(), b.clone());
                match o {
                    LateOption::Unexplained => {}
                    LateOption::Hidden(x) => h.push(x.clone()),
                    LateOption::Twin(x, bind) => {
                        h.push(x.clone());
                        b.push(*bind);
                    }
                }
                next.push((h, b));
            }
        }
        combos = next;
    }

    // The occluder counts against the object budget.
    let room = MAX_OBJECTS.saturating_sub(seen.tracks.len() + 1);
    let sets = anonymous_sets(seen, &xs, room);
    let mut out = Vec::with_capacity(combos.len() * sets.len());
    for (h, b) in &combos {
        for set in &sets {
            let bound = h.len();
            if bound + set.len() > room + late.len() {
                continue;
            }
            let mut hidden = h.clone();
            hidden.extend(set.iter().cloned());
            let n = hidden.len();
            out.push(Hypothesis { hidden, bindings: b.clone(), prior_weight: 1.0 / (1.0 + n as f64) });
        }
    }
    out.sort_by_key(Hypothesis::complexity);
    out
}
