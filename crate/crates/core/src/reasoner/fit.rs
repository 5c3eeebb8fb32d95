//! Observation-anchored latent rollout and its pattern-search fit.

use super::hypothesis::{HiddenKind, Hypothesis, ReasonerConfig};
use super::observe::{sq_err, Observed, Sighting, StaticLayer, Track};
use crate::dynamics::{Physics, WorldState, DEFAULT_SUBSTEPS, FRAME_DT};
use crate::generator::Observation;
use crate::render::for_each_covered;
use crate::world::{penetration, Camera, Object, ObjectKind, Rgb, CANONICAL_HALF_EXTENT, PALETTE};

const R: f64 = CANONICAL_HALF_EXTENT;
const X_STEP: f64 = 0.03;
const V_STEP: f64 = 0.05;
const Y_STEP: f64 = 0.02;
/// Pattern search stops once every step has shrunk by this factor.
const MIN_STEP_RATIO: f64 = 1.0 / 4096.0;
const MAX_RESTARTS: usize = 3;
const LM_ITERATIONS: usize = 12;
/// Finite-difference step as a fraction of a parameter's search step.
const FD_SCALE: f64 = 1e-3;
/// Floor on a sighting's slack when weighting its residual.
const MIN_SLACK: f64 = 1e-4;
/// Leading frames used to estimate a first-frame track's motion.
const PREFIT_FRAMES: usize = 3;

/// Parameterisation of one latent body.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    /// `[x]`, resting on the floor.
    Still,
    /// `[x, vx]`, on the floor.
    Rolling,
    /// `[x, y]`, released from rest.
    Dropped,
    /// `[x, y, vx]`.
    Thrown,
}

impl Mode {
    fn arity(self) -> usize {
        match self {
            Mode::Still => 1,
            Mode::Rolling | Mode::Dropped => 2,
            Mode::Thrown => 3,
        }
    }
}

/// Frame, predicted pose and observed pose of one tracked body.
type Snap = (usize, (f64, f64), (f64, f64));

#[derive(Clone, Debug)]
struct Body {
    id: u8,
    kind: ObjectKind,
    color: Rgb,
    dynamic: bool,
    mode: Mode,
    offset: usize,
    /// Must not be seen in the first frame.
    hidden: bool,
    /// Observed track the body is compared against.
    track: Option<u8>,
}

impl Body {
    fn build(&self, p: &[f64]) -> Object {
        let p = &p[self.offset..self.offset + self.mode.arity()];
        let (x, y, vx) = match self.mode {
            Mode::Still => (p[0], R, 0.0),
            Mode::Rolling => (p[0], R, p[1]),
            Mode::Dropped => (p[0], p[1], 0.0),
            Mode::Thrown => (p[0], p[1], p[2]),
        };
        let mut o = match self.kind {
            ObjectKind::Cube => Object::cube(self.id, x, y, self.color, self.dynamic),
            _ => {
                let mut b = Object::ball(self.id, x, self.color);
                b.position.y = y;
                b
            }
        };
        o.velocity.x = vx;
        o
    }
}

/// Fitted latent trajectory for one hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub s_img: f64,
    pub s_dyn: f64,
    pub states: Vec<WorldState>,
    pub evaluations: usize,
}

impl Fit {
    pub fn surprise(&self) -> f64 {
        self.s_img + self.s_dyn
    }

    /// Worse than any rollout can score: each frame contributes at most 1 to
    /// either term.
    fn infeasible(frames: usize, evaluations: usize) -> Self {
        Fit { s_img: 2.0 * frames as f64 + 1.0, s_dyn: 0.0, states: Vec::new(), evaluations }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Score {
    s_img: f64,
    s_dyn: f64,
    /// Pixel distances that would close the remaining mismatches.
    soft: f64,
    /// Squared pose misfit over fully visible sightings.
    surrogate: f64,
}

impl Score {
    fn s(&self) -> f64 {
        self.s_img + self.s_dyn
    }

    fn beats(&self, o: &Score) -> bool {
        (self.soft, self.s(), self.surrogate) < (o.soft, o.s(), o.surrogate)
    }
}

/// Sparse frame buffer over a static layer.
struct Canvas {
    stamp: Vec<u32>,
    color: Vec<[u8; 3]>,
    owner: Vec<u8>,
    touched: Vec<u32>,
    tag: u32,
}

impl Canvas {
    fn new(n: usize) -> Self {
        Canvas { stamp: vec![0; n], color: vec![[0; 3]; n], owner: vec![0; n], touched: Vec::new(), tag: 0 }
    }

    fn has(&self, i: usize) -> bool {
        self.stamp[i] == self.tag
    }

    /// Draws `objects` over `layer`; returns false if a body flagged in
    /// `must_hide` would be seen.
    fn draw(&mut self, objects: &[Object], layer: &StaticLayer, cam: &Camera, must_hide: &[u8]) -> bool {
        self.tag = self.tag.wrapping_add(1);
        if self.tag == 0 {
            self.stamp.fill(0);
            self.tag = 1;
        }
        self.touched.clear();
        let w = cam.width as usize;
        let mut ok = true;
        for o in objects {
            let z = o.front_depth() as f32;
            let hide = must_hide.contains(&o.id);
            for_each_covered(o, cam, |c, r| {
                let i = r as usize * w + c as usize;
                if self.stamp[i] != self.tag && z < layer.depth[i] {
                    self.stamp[i] = self.tag;
                    self.color[i] = o.color.0;
                    self.owner[i] = o.id;
                    self.touched.push(i as u32);
                    if hide {
                        ok = false;
                    }
                }
            });
        }
        ok
    }
}

/// Everything fixed for one hypothesis.
struct Setup<'a> {
    seen: &'a Observed,
    rgb: Vec<&'a [u8]>,
    bodies: Vec<Body>,
    must_hide: Vec<u8>,
    inserts: Vec<(usize, Object)>,
    init: Vec<f64>,
    steps: Vec<f64>,
    physics: Physics,
    norm: f64,
}

fn full_pose(seen: &Observed, t: &Track, f: usize) -> Option<(f64, f64)> {
    t.full_at(f).map(|s| seen.pose(s))
}

/// Least-squares start position and velocity over the leading full frames.
fn prefit_track(seen: &Observed, t: &Track) -> (f64, f64, f64) {
    let pts: Vec<(f64, f64, f64)> = (0..seen.frames)
        .map_while(|f| full_pose(seen, t, f).map(|(x, y)| (f as f64 * FRAME_DT, x, y)))
        .take(PREFIT_FRAMES)
        .collect();
    let first = t.sightings[0].as_ref().map(|s| seen.pose(s)).unwrap_or((0.0, R));
    if pts.len() < 2 {
        let (x, y) = pts.first().map(|p| (p.1, p.2)).unwrap_or(first);
        return (x, y, 0.0);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let v = stx / stt;
    (mx - v * mt, pts[0].2, v)
}

fn fresh_color(seen: &Observed) -> Rgb {
    PALETTE.iter().copied().find(|c| !seen.colors_seen.contains(c)).unwrap_or(PALETTE[0])
}

impl<'a> Setup<'a> {
    fn new(h: &Hypothesis, seen: &'a Observed, obs: &'a Observation) -> Self {
        let cam = seen.camera;
        let mut bodies = Vec::new();
        let mut init = Vec::new();
        let mut steps = Vec::new();
        let mut push = |bodies: &mut Vec<Body>, b: Body, p: &[f64], s: &[f64]| {
            let b = Body { offset: init.len(), ..b };
            init.extend_from_slice(p);
            steps.extend_from_slice(s);
            bodies.push(b);
        };

        for t in seen.initial_tracks() {
            let (x, y, v) = prefit_track(seen, t);
            let on_floor = y == R;
            let moving = v.abs() * FRAME_DT > cam.pixel_width() / 2.0;
            let (mode, p, s): (Mode, Vec<f64>, Vec<f64>) = match (t.kind, on_floor) {
                (ObjectKind::Cube, true) => (Mode::Still, vec![x], vec![X_STEP]),
                (ObjectKind::Cube, false) => (Mode::Dropped, vec![x, y], vec![X_STEP, Y_STEP]),
                (_, true) => (Mode::Rolling, vec![x, v], vec![X_STEP, V_STEP]),
                (_, false) => (Mode::Thrown, vec![x, y, v], vec![X_STEP, Y_STEP, V_STEP]),
            };
            let dynamic = t.kind != ObjectKind::Cube || !on_floor || moving;
            let body = Body {
                id: t.id,
                kind: t.kind,
                color: t.color,
                dynamic,
                mode,
                offset: 0,
                hidden: false,
                track: Some(t.id),
            };
            push(&mut bodies, body, &p, &s);
        }

        let mut next_id = seen.tracks.iter().map(|t| t.id).max().unwrap_or(1).max(2) + 1;
        let anon_color = fresh_color(seen);
        for o in &h.hidden {
            let track = o.track.and_then(|id| seen.track(id));
            let (id, color) = match track {
                Some(t) => (t.id, t.color),
                None => {
                    next_id = next_id.saturating_add(1);
                    (next_id - 1, anon_color)
                }
            };
            let (kind, dynamic) = match o.kind {
                HiddenKind::Ball => (ObjectKind::Ball, true),
                HiddenKind::FixedCube => (ObjectKind::Cube, false),
            };
            let moving = o.velocity.0 != 0.0;
            let (mode, p, s) = if moving {
                (Mode::Rolling, vec![o.position.0, o.velocity.0], vec![X_STEP, V_STEP])
            } else {
                (Mode::Still, vec![o.position.0], vec![o.spread])
            };
            let body = Body { id, kind, color, dynamic, mode, offset: 0, hidden: true, track: o.track };
            push(&mut bodies, body, &p, &s);
        }
        bodies.sort_by_key(|b| b.id);
        let must_hide = bodies.iter().filter(|b| b.hidden).map(|b| b.id).collect();

        let mut inserts = Vec::new();
        for t in seen.late_tracks() {
            if bodies.iter().any(|b| b.id == t.id) {
                continue;
            }
            let Some(f) = t.first_full() else { continue };
            let (x, y) = full_pose(seen, t, f).unwrap();
            let v = match full_pose(seen, t, f + 1) {
                Some((x1, y1)) => ((x1 - x) / FRAME_DT, (y1 - y) / FRAME_DT),
                None => (0.0, 0.0),
            };
            let mut o = match t.kind {
                ObjectKind::Cube => Object::cube(t.id, x, y, t.color, v != (0.0, 0.0) || y != R),
                _ => Object::ball(t.id, x, t.color),
            };
            o.position.y = y;
            o.velocity.x = v.0;
            o.velocity.y = v.1;
            inserts.push((f, o));
        }

        Setup {
            seen,
            rgb: obs.frames.iter().map(|f| f.rgb.as_slice()).collect(),
            bodies,
            must_hide,
            inserts,
            init,
            steps,
            physics: Physics::default(),
            norm: 255.0 * 255.0 * 3.0 * cam.pixel_count() as f64,
        }
    }

    /// Image error of a drawn frame and the soft distance behind it.
    fn img_cost(&self, f: usize, canvas: &Canvas, objects: &[Object]) -> (f64, f64) {
        let obs = self.rgb[f];
        let layer = &self.seen.statics[f];
        let cam = &self.seen.camera;
        let w = cam.width;
        let centre = |i: usize| cam.pixel_center(i as u32 % w, i as u32 / w);
        let body = |id: u8| objects.iter().find(|o| o.id == id);
        let (mut e, mut soft) = (0.0, 0.0);
        for &i in &canvas.touched {
            let i = i as usize;
            let d = sq_err(&obs[3 * i..3 * i + 3], &canvas.color[i]);
            if d > 0.0 {
                e += d;
                if let Some(o) = body(canvas.owner[i]) {
                    let (x, y) = centre(i);
                    soft += boundary_gap(o, x, y) / cam.pixel_width();
                }
            }
        }
        for &(i, id, err) in &layer.actor_pixels {
            let i = i as usize;
            if !canvas.has(i) {
                e += err;
            }
            if !canvas.has(i) || canvas.owner[i] != id {
                if let Some(o) = body(id) {
                    let (x, y) = centre(i);
                    soft += boundary_gap(o, x, y) / cam.pixel_width();
                }
            }
        }
        (e / self.norm, soft)
    }

    fn dyn_cost(&self, f: usize, latent: &Canvas, pred: &Canvas) -> f64 {
        let layer = &self.seen.statics[f];
        let base = |i: usize| &layer.rgb[3 * i..3 * i + 3];
        let mut e = 0.0;
        for &i in &latent.touched {
            let i = i as usize;
            let other: &[u8] = if pred.has(i) { &pred.color[i] } else { base(i) };
            e += sq_err(&latent.color[i], other);
        }
        for &i in &pred.touched {
            let i = i as usize;
            if !latent.has(i) {
                e += sq_err(base(i), &pred.color[i]);
            }
        }
        e / self.norm
    }

    /// Scores `params`; gives up with `None` once the soft or pose misfit
    /// exceeds its bound.
    fn rollout(
        &self,
        params: &[f64],
        bound: (f64, f64),
        canvases: &mut (Canvas, Canvas),
        mut record: Option<&mut Vec<WorldState>>,
        mut residuals: Option<&mut Vec<f64>>,
    ) -> Option<Score> {
        let seen = self.seen;
        let cam = &seen.camera;
        let (pw, ph) = (cam.pixel_width(), cam.pixel_height());
        let mut latent: Vec<Object> = self.bodies.iter().map(|b| b.build(params)).collect();
        for (i, a) in latent.iter().enumerate() {
            for b in &latent[i + 1..] {
                let involved = self.must_hide.contains(&a.id) || self.must_hide.contains(&b.id);
                if involved && penetration(a, b) > 1e-9 {
                    return None;
                }
            }
        }

        let tracked: Vec<(u8, &Track)> =
            self.bodies.iter().filter_map(|b| b.track.and_then(|id| seen.track(id)).map(|t| (b.id, t))).collect();
        let mut surrogate = 0.0;
        // Residuals are measured in units of each sighting's own slack.
        let mut gap = |o: &Object, s: &Sighting| {
            let (sx, sy) = (s.slack.0.max(MIN_SLACK), s.slack.1.max(MIN_SLACK));
            let (rx, ry) = ((o.position.x - s.pose.0) / sx, (o.position.y - s.pose.1) / sy);
            if let Some(r) = residuals.as_deref_mut() {
                r.extend([rx, ry]);
            }
            rx * rx + ry * ry
        };
        for &(id, t) in &tracked {
            if let (Some(s), Some(o)) = (t.full_at(0), latent.iter().find(|o| o.id == id)) {
                surrogate += gap(o, s);
            }
        }

        let (lc, pc) = canvases;
        if !lc.draw(&latent, &seen.statics[0], cam, &self.must_hide) {
            return None;
        }
        let (mut s_img, mut soft) = self.img_cost(0, lc, &latent);
        let mut s_dyn = 0.0;
        if let Some(r) = record.as_deref_mut() {
            r.push(WorldState::from_objects(0, latent.clone()));
        }

        let h = FRAME_DT / DEFAULT_SUBSTEPS as f64;
        let mut pred: Vec<Object> = Vec::with_capacity(latent.len() + self.inserts.len());
        // Open-loop copy that is never corrected, for the pose residual.
        let mut free = latent.clone();
        let mut events = Vec::new();
        for f in 1..seen.frames {
            pred.clone_from(&latent);
            for _ in 0..DEFAULT_SUBSTEPS {
                self.physics.substep(&mut pred, h, &mut events);
                self.physics.substep(&mut free, h, &mut events);
            }
            events.clear();

            let mut snaps: Vec<Snap> = Vec::new();
            for &(id, t) in &tracked {
                let Some(pose) = full_pose(seen, t, f) else { continue };
                let Some(k) = pred.iter().position(|o| o.id == id) else { continue };
                if let Some(o) = free.iter().find(|o| o.id == id) {
                    surrogate += gap(o, t.full_at(f).unwrap());
                }
                let o = &pred[k];
                let off = (o.position.x - pose.0).abs() > pw || (o.position.y - pose.1).abs() > ph;
                if off {
                    soft += ((o.position.x - pose.0) / pw).hypot((o.position.y - pose.1) / ph);
                    let prev = full_pose(seen, t, f - 1).unwrap_or_else(|| {
                        let p = latent.iter().find(|o| o.id == id).unwrap().position;
                        (p.x, p.y)
                    });
                    let v = ((pose.0 - prev.0) / FRAME_DT, (pose.1 - prev.1) / FRAME_DT);
                    snaps.push((k, pose, v));
                }
            }
            latent.clone_from(&pred);
            let mut changed = !snaps.is_empty();
            for (k, pose, v) in snaps {
                let o = &mut latent[k];
                o.position.x = pose.0;
                o.position.y = pose.1;
                if o.dynamic {
                    o.velocity.x = v.0;
                    o.velocity.y = v.1;
                }
            }
            for (at, o) in &self.inserts {
                if *at == f {
                    latent.push(o.clone());
                    changed = true;
                }
            }
            if changed {
                latent.sort_by_key(|o| o.id);
            }

            lc.draw(&latent, &seen.statics[f], cam, &[]);
            let (e, d) = self.img_cost(f, lc, &latent);
            s_img += e;
            soft += d;
            if changed {
                pc.draw(&pred, &seen.statics[f], cam, &[]);
                s_dyn += self.dyn_cost(f, lc, pc);
            }
            if let Some(r) = record.as_deref_mut() {
                r.push(WorldState::from_objects(f, latent.clone()));
            }
            if soft > bound.0 || surrogate > bound.1 {
                return None;
            }
        }
        Some(Score { s_img, s_dyn, soft, surrogate })
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            let (above, below) = m.split_at_mut(r);
            for (x, &y) in below[0][c..n].iter_mut().zip(&above[c][c..n]) {
                *x -= f * y;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / m[c][c];
    }
    Some(x)
}

/// Distance from `(x, y)` to the silhouette boundary of `o`.
fn boundary_gap(o: &Object, x: f64, y: f64) -> f64 {
    let dx = (x - o.position.x).abs();
    let dy = (y - o.position.y).abs();
    match o.kind {
        ObjectKind::Ball => (dx.hypot(dy) - o.extent.x).abs(),
        _ => {
            let (ox, oy) = (dx - o.extent.x, dy - o.extent.y);
            if ox <= 0.0 && oy <= 0.0 {
                (-ox).min(-oy)
            } else {
                ox.max(0.0).hypot(oy.max(0.0))
            }
        }
    }
}

fn canvases(seen: &Observed) -> (Canvas, Canvas) {
    let n = seen.camera.pixel_count();
    (Canvas::new(n), Canvas::new(n))
}

/// Fits the hypothesis to the observation by deterministic pattern search.
const UNBOUNDED: (f64, f64) = (f64::INFINITY, f64::INFINITY);

/// Budgeted objective for the search.
struct Search<'s, 'a> {
    setup: &'s Setup<'a>,
    canvases: (Canvas, Canvas),
    evals: usize,
    cap: usize,
}

impl Search<'_, '_> {
    fn exhausted(&self) -> bool {
        self.evals >= self.cap
    }

    /// `Some` only when `p` beats `best`.
    fn try_point(&mut self, p: &[f64], best: &Score) -> Option<Score> {
        self.evals += 1;
        self.setup.rollout(p, (best.soft, f64::INFINITY), &mut self.canvases, None, None).filter(|sc| sc.beats(best))
    }

    /// One exploratory sweep around `x`, keeping every improving move.
    fn explore(&mut self, x: &mut [f64], best: &mut Score, steps: &[f64]) -> bool {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                if self.exhausted() || best.s() == 0.0 {
                    return improved;
                }
                let old = x[i];
                x[i] = old + sign * steps[i];
                match self.try_point(x, best) {
                    Some(sc) => {
                        *best = sc;
                        improved = true;
                        break;
                    }
                    None => x[i] = old,
                }
            }
        }
        improved
    }

    fn residuals(&mut self, p: &[f64]) -> Option<(Score, Vec<f64>)> {
        self.evals += 1;
        let mut r = Vec::new();
        let sc = self.setup.rollout(p, UNBOUNDED, &mut self.canvases, None, Some(&mut r))?;
        Some((sc, r))
    }

    /// Levenberg-Marquardt on the pose residuals, with a forward-difference
    /// Jacobian. Accepts a step only if it also keeps the pixel score order.
    fn least_squares(&mut self, x: &mut Vec<f64>, best: &mut Score) {
        let n = x.len();
        let Some((_, mut r)) = self.residuals(x) else { return };
        if r.is_empty() || n == 0 {
            return;
        }
        let mut lambda = 1e-3;
        for _ in 0..LM_ITERATIONS {
            if self.evals + n + 1 > self.cap || best.s() == 0.0 {
                return;
            }
            let mut jac = vec![vec![0.0; n]; r.len()];
            for j in 0..n {
                let h = self.setup.steps[j] * FD_SCALE;
                let mut y = x.clone();
                y[j] += h;
                let Some((_, rj)) = self.residuals(&y) else { return };
                if rj.len() != r.len() {
                    return;
                }
                for (row, (a, b)) in jac.iter_mut().zip(rj.iter().zip(&r)) {
                    row[j] = (a - b) / h;
                }
            }
            let mut jtj = vec![vec![0.0; n]; n];
            let mut jtr = vec![0.0; n];
            for (row, ri) in jac.iter().zip(&r) {
                for a in 0..n {
                    jtr[a] += row[a] * ri;
                    for b in 0..n {
                        jtj[a][b] += row[a] * row[b];
                    }
                }
            }
            let mut moved = false;
            while lambda < 1e6 && self.evals < self.cap {
                let mut m = jtj.clone();
                for (a, row) in m.iter_mut().enumerate() {
                    row[a] += lambda * (jtj[a][a] + 1e-9);
                }
                let Some(delta) = solve(m, jtr.iter().map(|v| -v).collect()) else { break };
                let y: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
                match self.residuals(&y) {
                    Some((sc, ry)) if ry.len() == r.len() && (sc.surrogate < best.surrogate || sc.s() == 0.0) => {
                        *x = y;
                        *best = sc;
                        r = ry;
                        lambda = (lambda / 3.0).max(1e-9);
                        moved = true;
                        break;
                    }
                    _ => lambda *= 4.0,
                }
            }
            if !moved {
                return;
            }
        }
    }

    /// Hooke-Jeeves pattern search from `x` until the mesh collapses.
    fn run(&mut self, x: &mut Vec<f64>, best: &mut Score, initial: &[f64]) {
        let mut steps = initial.to_vec();
        let mut restart_from: Option<Score> = None;
        let mut restarts = 0;
        while best.s() > 0.0 && !self.exhausted() {
            let base = x.clone();
            if self.explore(x, best, &steps) {
                // Keep moving along the net displacement while that pays off.
                let mut prev = base;
                while best.s() > 0.0 && !self.exhausted() {
                    let mut probe: Vec<f64> = x.iter().zip(&prev).map(|(a, b)| 2.0 * a - b).collect();
                    let mut trial = *best;
                    match self.try_point(&probe, best) {
                        Some(sc) => {
                            trial = sc;
                            self.explore(&mut probe, &mut trial, &steps);
                        }
                        None => {
                            if !self.explore(&mut probe, &mut trial, &steps) {
                                break;
                            }
                        }
                    }
                    prev = std::mem::replace(x, probe);
                    *best = trial;
                }
            } else {
                for s in &mut steps {
                    *s *= 0.5;
                }
                if steps.iter().zip(initial).all(|(s, s0)| s / s0 < MIN_STEP_RATIO) {
                    // Converged off target: restart from here with a smaller mesh.
                    let progressed = restart_from.is_none_or(|r| best.beats(&r));
                    if progressed && restarts < MAX_RESTARTS {
                        restarts += 1;
                        restart_from = Some(*best);
                        let scale = 0.5f64.powi(restarts as i32);
                        steps = initial.iter().map(|s| s * scale).collect();
                        continue;
                    }
                    break;
                }
            }
        }
    }
}

/// Fits the hypothesis to the observation: pose residuals first, then pixels.
pub(crate) fn fit(h: &Hypothesis, seen: &Observed, obs: &Observation, config: &ReasonerConfig) -> Fit {
    let setup = Setup::new(h, seen, obs);
    let mut search =
        Search { setup: &setup, canvases: canvases(seen), evals: 1, cap: config.eval_cap / 2 };
    let mut x = setup.init.clone();
    let Some(mut best) = setup.rollout(&x, UNBOUNDED, &mut search.canvases, None, None) else {
        return Fit::infeasible(seen.frames, 1);
    };
    if best.s() > 0.0 {
        search.least_squares(&mut x, &mut best);
    }
    search.cap = config.eval_cap;
    search.run(&mut x, &mut best, &setup.steps);
    let evaluations = search.evals;
    let mut states = Vec::with_capacity(seen.frames);
    let sc = setup.rollout(&x, UNBOUNDED, &mut search.canvases, Some(&mut states), None).expect("feasible");
    Fit { s_img: sc.s_img, s_dyn: sc.s_dyn, states, evaluations }
}
