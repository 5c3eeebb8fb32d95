//! Procedural construction of paired test videos and plausible training videos.
//!
//! Every pair is drawn from its own seed, so any `(group, index)` can be
//! regenerated in isolation. Parameters are resampled until the scene meets all
//! visibility and timing constraints of its group.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    apply_script, simulate, EventKind, ScriptEdit, Trajectory, DEFAULT_SUBSTEPS, FRAME_DT,
};
use crate::error::{Error, Result};
use crate::render::{footprint, render_video, visible_pixels, Frame, MaskSet};
use crate::world::{
    Camera, Object, Rgb, Scene, WallMode, WallScript, CANONICAL_HALF_EXTENT, DEFAULT_FRAMES,
    DEFAULT_RESOLUTION, PALETTE,
};

const R: f64 = CANONICAL_HALF_EXTENT;

pub const MAX_RETRIES: usize = 100;
pub const SPEED_RANGE: (f64, f64) = (0.8, 2.4);
pub const WALL_WIDTH_RANGE: (f64, f64) = (1.2, 2.4);
pub const WALL_HEIGHT_RANGE: (f64, f64) = (1.2, 2.0);
pub const WALL_CENTER_RANGE: (f64, f64) = (-0.5, 0.5);
/// Earliest and latest contact time behind the wall, in seconds.
pub const CONTACT_TIME_RANGE: (f64, f64) = (0.35, 1.0);

const WALL_ID: u8 = 2;
const ACTOR_ID: u8 = 3;
const OTHER_ID: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Collision,
    Blocking,
    Permanence,
    Continuity,
}

impl Scenario {
    pub const ALL: [Scenario; 4] =
        [Scenario::Collision, Scenario::Blocking, Scenario::Permanence, Scenario::Continuity];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Collision => "collision",
            Scenario::Blocking => "blocking",
            Scenario::Permanence => "permanence",
            Scenario::Continuity => "continuity",
        }
    }

    pub fn settings(self) -> &'static [Setting] {
        match self {
            Scenario::Permanence => &[Setting::Predictive, Setting::Hypothetical],
            _ => &[Setting::Predictive, Setting::Hypothetical, Setting::Explicative],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Predictive,
    Hypothetical,
    Explicative,
}

impl Setting {
    pub fn short(self) -> &'static str {
        match self {
            Setting::Predictive => "s1",
            Setting::Hypothetical => "s2",
            Setting::Explicative => "s3",
        }
    }

    pub fn wall_mode(self) -> WallMode {
        match self {
            Setting::Predictive => WallMode::LiftedAtStartAndEnd,
            Setting::Hypothetical => WallMode::AlwaysDown,
            Setting::Explicative => WallMode::LiftedAtEndOnly,
        }
    }

    /// Whether exactly one pair member is implausible.
    pub fn has_violation(self) -> bool {
        self != Setting::Hypothetical
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Predictive => "predictive",
            Setting::Hypothetical => "hypothetical",
            Setting::Explicative => "explicative",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    WithWall,
    WithoutWall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TestGroup {
    pub scenario: Scenario,
    pub setting: Setting,
}

impl TestGroup {
    pub fn name(&self) -> String {
        format!("{}-{}", self.scenario.name(), self.setting.short())
    }

    pub fn parse(name: &str) -> Option<TestGroup> {
        test_groups().into_iter().find(|g| g.name() == name)
    }
}

/// The eleven test groups in canonical order.
pub fn test_groups() -> Vec<TestGroup> {
    Scenario::ALL
        .iter()
        .flat_map(|&scenario| scenario.settings().iter().map(move |&setting| TestGroup { scenario, setting }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainGroup {
    Control,
    Collision,
    Blocking,
    Permanence,
    Continuity,
}

impl TrainGroup {
    pub const ALL: [TrainGroup; 5] = [
        TrainGroup::Control,
        TrainGroup::Collision,
        TrainGroup::Blocking,
        TrainGroup::Permanence,
        TrainGroup::Continuity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainGroup::Control => "control",
            TrainGroup::Collision => "collision",
            TrainGroup::Blocking => "blocking",
            TrainGroup::Permanence => "permanence",
            TrainGroup::Continuity => "continuity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub master_seed: u64,
    pub pairs_per_group: usize,
    pub train_scenes_per_group: usize,
    pub resolution: u32,
    pub frames: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            master_seed: 0,
            pairs_per_group: 50,
            train_scenes_per_group: 200,
            resolution: DEFAULT_RESOLUTION,
            frames: DEFAULT_FRAMES,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs_per_group == 0 || self.train_scenes_per_group == 0 {
            return Err(Error::Config("all counts must be at least 1".into()));
        }
        if !(48..=1024).contains(&self.resolution) {
            return Err(Error::Config(format!("resolution {} outside 48..=1024", self.resolution)));
        }
        if !(15..=20).contains(&self.frames) {
            return Err(Error::Config(format!("frame count {} outside 15..=20", self.frames)));
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera::with_resolution(self.resolution, self.resolution)
    }
}

/// Public description of one video, as listed in a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    pub plausible: bool,
    pub seed: u64,
    pub pair: usize,
}

/// A generated video before rendering: its labels and ground-truth trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentVideo {
    pub meta: VideoMeta,
    pub latent: Trajectory,
}

impl LatentVideo {
    pub fn render(&self) -> VideoRecord {
        let (frames, masks) = render_video(&self.latent, &self.latent.scene.camera).into_iter().unzip();
        VideoRecord { meta: self.meta.clone(), frames, masks, latent: self.latent.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub meta: VideoMeta,
    pub frames: Vec<Frame>,
    pub masks: Vec<MaskSet>,
    /// Hidden ground truth, including objects never seen on screen.
    pub latent: Trajectory,
}

impl VideoRecord {
    /// What a model is allowed to see.
    pub fn observation(&self) -> Observation {
        Observation {
            video_id: self.meta.video_id.clone(),
            camera: self.latent.scene.camera,
            frames: self.frames.clone(),
            masks: self.masks.clone(),
        }
    }

    pub fn into_observation(self) -> Observation {
        Observation { video_id: self.meta.video_id, camera: self.latent.scene.camera, frames: self.frames, masks: self.masks }
    }
}

/// Model-facing view of a video: pixels and masks only.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub video_id: String,
    pub camera: Camera,
    pub frames: Vec<Frame>,
    pub masks: Vec<MaskSet>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Test,
    Train,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub config: GenConfig,
    pub videos: Vec<LatentVideo>,
}

/// Stable 64-bit hash of a seed and a sequence of labels.
pub fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = splitmix(seed ^ 0x6a09_e667_f3bc_c908);
    for p in parts {
        // FNV-1a over the bytes, then mixed into the running state.
        let mut f: u64 = 0xcbf2_9ce4_8422_2325;
        for b in p.bytes().chain(std::iter::once(0xff)) {
            f ^= b as u64;
            f = f.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = splitmix(h ^ f);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn pair_seed(master: u64, group: &str, index: usize) -> u64 {
    stable_hash(master, &[group, &index.to_string()])
}

pub fn video_seed(master: u64, group: &str, index: usize, role: &str) -> u64 {
    stable_hash(master, &[group, &index.to_string(), role])
}

pub fn test_video_id(group: &TestGroup, index: usize, role: Role) -> String {
    format!("{}-{:04}-{:?}", group.name(), index, role)
}

pub fn train_video_id(group: TrainGroup, index: usize, variant: Variant) -> String {
    let v = match variant {
        Variant::WithWall => "wall",
        Variant::WithoutWall => "nowall",
    };
    format!("train-{}-{:04}-{}", group.name(), index, v)
}

/// Shared sampling context for one scene.
struct Ctx {
    camera: Camera,
    frames: usize,
    rng: ChaCha8Rng,
}

impl Ctx {
    fn new(config: &GenConfig, seed: u64) -> Self {
        Ctx { camera: config.camera(), frames: config.frames, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn uniform(&mut self, (lo, hi): (f64, f64)) -> f64 {
        self.rng.gen_range(lo..=hi)
    }

    fn px(&self) -> f64 {
        self.camera.pixel_width()
    }

    /// Background, floor, wall, and two actor colours, all distinct.
    fn colors(&mut self) -> [Rgb; 5] {
        let mut p = PALETTE.to_vec();
        p.shuffle(&mut self.rng);
        [p[0], p[1], p[2], p[3], p[4]]
    }

    fn scene(&self, colors: &[Rgb; 5], mode: WallMode) -> Scene {
        let mut s = Scene::empty(self.camera, self.frames, colors[0], colors[1]);
        s.wall_script = WallScript::new(mode, self.frames);
        s
    }
}

/// Outcome of one sampling attempt; `None` means resample.
type Attempt<T> = Option<T>;

struct Member {
    traj: Trajectory,
    plausible: bool,
}

fn sim(scene: &Scene, frames: usize) -> Attempt<Trajectory> {
    simulate(scene, frames, DEFAULT_SUBSTEPS).ok()
}

fn edited(traj: &Trajectory, edit: ScriptEdit) -> Attempt<Trajectory> {
    apply_script(traj, edit).ok()
}

fn in_bounds(t: &Trajectory) -> bool {
    t.events_of(EventKind::OutOfBounds).next().is_none()
}

fn visible(t: &Trajectory, frame: usize, id: u8) -> usize {
    visible_pixels(&t.states[frame], id, &t.scene.camera)
}

fn fully_visible(t: &Trajectory, frame: usize, id: u8) -> bool {
    let Some(o) = t.states[frame].object(id) else { return false };
    visible(t, frame, id) == footprint(o, &t.scene.camera)
}

fn mostly_visible(t: &Trajectory, frame: usize, id: u8) -> bool {
    let Some(o) = t.states[frame].object(id) else { return false };
    2 * visible(t, frame, id) >= footprint(o, &t.scene.camera)
}

/// Whether replaying the unedited scene renders a different video.
pub fn edit_is_visible(traj: &Trajectory) -> bool {
    let Ok(replay) = simulate(&traj.scene, traj.frames(), traj.substeps) else { return false };
    let cam = &traj.scene.camera;
    let a = render_video(traj, cam);
    let b = render_video(&replay, cam);
    a.iter().zip(&b).any(|(x, y)| x.1 != y.1 || x.0.rgb != y.0.rgb)
}

/// Whether a video's label agrees with its replay: plausible videos must be
/// reproduced bitwise by unscripted simulation, implausible ones must differ
/// visibly from it.
pub fn label_is_sound(video: &LatentVideo) -> bool {
    let t = &video.latent;
    if video.meta.plausible {
        if t.script_applied.is_some() {
            return false;
        }
        match simulate(&t.scene, t.frames(), t.substeps) {
            Ok(replay) => replay.states == t.states,
            Err(_) => false,
        }
    } else {
        t.script_applied.is_some() && edit_is_visible(t)
    }
}

struct Wall {
    center: f64,
    width: f64,
    height: f64,
}

impl Wall {
    fn left(&self) -> f64 {
        self.center - self.width / 2.0
    }
    fn right(&self) -> f64 {
        self.center + self.width / 2.0
    }
}

struct RollDraw {
    colors: [Rgb; 5],
    v: f64,
    wall: Wall,
    xa0: f64,
    p: f64,
}

/// Which bodies must end the video in view: the incoming ball continuing
/// unobstructed, and the body leaving an interaction with the obstacle.
#[derive(Clone, Copy)]
struct Exits {
    pass_through: bool,
    interaction: Option<Scenario>,
}

fn draw_roll(ctx: &mut Ctx, exits: Exits, mode: WallMode) -> Attempt<RollDraw> {
    let colors = ctx.colors();
    let wall = Wall {
        center: ctx.uniform(WALL_CENTER_RANGE),
        width: ctx.uniform(WALL_WIDTH_RANGE),
        height: ctx.uniform(WALL_HEIGHT_RANGE),
    };
    let (wl, wr) = (wall.left(), wall.right());
    let (x_min, x_max) = (ctx.camera.x_min + 0.05, ctx.camera.x_max - 0.05);
    let p = ctx.uniform((wl + 3.0 * R, wr - R));
    let tc = ctx.uniform(CONTACT_TIME_RANGE);
    let after = (ctx.frames - 1) as f64 * FRAME_DT - tc;
    let hidden_end = mode == WallMode::AlwaysDown;

    // Speed bounds from the start position: in view, and clear of the wall at frames 0 and 1.
    let mut lo = SPEED_RANGE.0.max((p - R - wl + 2.0 * ctx.px()) / (tc - FRAME_DT));
    let mut hi = SPEED_RANGE.1.min((p - 3.0 * R - x_min) / tc);
    // Bounds on the distance travelled after the contact time by each exiting body.
    let mut d_lo: f64 = 0.0;
    let mut d_hi = f64::INFINITY;
    let mut need = |min: f64, max: f64| {
        d_lo = d_lo.max(if hidden_end { min } else { f64::NEG_INFINITY });
        d_hi = d_hi.min(max);
    };
    if exits.pass_through {
        need(wr - p + 2.0 * R, x_max - p + R);
    }
    match exits.interaction {
        Some(Scenario::Collision) => need(wr - p, x_max - R - p),
        Some(Scenario::Blocking) => need(p - 2.0 * R - wl, p - 3.0 * R - x_min),
        _ => {}
    }
    lo = lo.max(d_lo / after);
    hi = hi.min(d_hi / after);
    if lo > hi {
        return None;
    }
    let v = ctx.uniform((lo, hi));
    let xa0 = p - 2.0 * R - v * tc;
    Some(RollDraw { colors, v, wall, xa0, p })
}

fn roll_scene(ctx: &Ctx, d: &RollDraw, mode: WallMode, obstacle: Option<Scenario>, with_wall: bool) -> Scene {
    let mut s = ctx.scene(&d.colors, if with_wall { mode } else { WallMode::Absent });
    if with_wall {
        s.objects.push(Object::wall(WALL_ID, d.wall.center, d.wall.width, d.wall.height, d.colors[2]));
    }
    s.objects.push(Object::ball(ACTOR_ID, d.xa0, d.colors[3]).with_velocity(d.v, 0.0));
    match obstacle {
        Some(Scenario::Collision) => s.objects.push(Object::ball(OTHER_ID, d.p, d.colors[4])),
        Some(Scenario::Blocking) => s.objects.push(Object::cube(OTHER_ID, d.p, R, d.colors[4], false)),
        _ => {}
    }
    s
}

/// Checks shared by every rolling member: in view, incoming ball fully visible
/// at the first two frames.
fn roll_member_ok(t: &Trajectory) -> bool {
    in_bounds(t) && fully_visible(t, 0, ACTOR_ID) && fully_visible(t, 1, ACTOR_ID)
}

/// The contact happens out of sight while the wall is fully down.
fn contact_hidden(t: &Trajectory) -> bool {
    let Some(e) = t.contact_between(ACTOR_ID, OTHER_ID) else { return false };
    let script = &t.scene.wall_script;
    let f = e.frame;
    f >= 1
        && script.lift_fraction(f) == 0.0
        && script.lift_fraction(f - 1) == 0.0
        && [f - 1, f].iter().all(|&k| visible(t, k, ACTOR_ID) == 0 && visible(t, k, OTHER_ID) == 0)
}

fn roll_pair(ctx: &mut Ctx, scenario: Scenario, setting: Setting) -> Attempt<[Member; 2]> {
    let mode = setting.wall_mode();
    let exits = Exits { pass_through: true, interaction: Some(scenario) };
    let d = draw_roll(ctx, exits, mode)?;
    let last = ctx.frames - 1;
    let with = sim(&roll_scene(ctx, &d, mode, Some(scenario), true), ctx.frames)?;
    if !roll_member_ok(&with) || !contact_hidden(&with) {
        return None;
    }
    // The body that leaves the wall after the interaction.
    let leaver = if scenario == Scenario::Collision { OTHER_ID } else { ACTOR_ID };
    if !mostly_visible(&with, last, leaver) {
        return None;
    }
    if mode != WallMode::LiftedAtStartAndEnd && visible(&with, 0, OTHER_ID) != 0 {
        return None;
    }
    let other = match setting {
        Setting::Hypothetical => {
            let t = sim(&roll_scene(ctx, &d, mode, None, true), ctx.frames)?;
            Member { traj: t, plausible: true }
        }
        _ => {
            let t = edited(&with, ScriptEdit::SuppressCollision { a: ACTOR_ID, b: OTHER_ID })?;
            if !edit_is_visible(&t) {
                return None;
            }
            Member { traj: t, plausible: false }
        }
    };
    if !roll_member_ok(&other.traj) || !mostly_visible(&other.traj, last, ACTOR_ID) {
        return None;
    }
    Some([Member { traj: with, plausible: true }, other])
}

struct DropDraw {
    colors: [Rgb; 5],
    wall: Wall,
    xs: [f64; 3],
    ys: [f64; 3],
}

const CUBE_IDS: [u8; 3] = [3, 4, 5];
/// Centre spacing between neighbouring cubes.
const CUBE_SPACING: f64 = 2.0 * R + 0.05;
/// Upper bound on drop height above the floor so cubes land within 0.95 s.
const MAX_DROP: f64 = 4.4;

fn draw_drop(ctx: &mut Ctx) -> Attempt<DropDraw> {
    let colors = ctx.colors();
    let wall = Wall { center: 0.0, width: ctx.uniform((1.9, 2.4)), height: ctx.uniform(WALL_HEIGHT_RANGE) };
    let (lo, hi) = (wall.left() + R, wall.right() - R);
    // Uniform over spaced configurations: sorted slack offsets plus fixed spacing.
    let slack = hi - lo - 2.0 * CUBE_SPACING;
    if slack < 0.0 {
        return None;
    }
    let mut u = [0.0; 3];
    for x in u.iter_mut() {
        *x = ctx.uniform((0.0, slack));
    }
    u.sort_by(f64::total_cmp);
    let mut xs = [0.0; 3];
    for (i, x) in xs.iter_mut().enumerate() {
        *x = lo + u[i] + i as f64 * CUBE_SPACING;
    }
    xs.shuffle(&mut ctx.rng);
    let top = (ctx.camera.y_max - 2.0 * R - 0.1).min(MAX_DROP);
    let mut ys = [0.0; 3];
    for y in ys.iter_mut() {
        *y = R + ctx.uniform((wall.height + 0.1, top));
    }
    Some(DropDraw { colors, wall, xs, ys })
}

/// `dropped[i]` selects whether cube `i` falls from its height or rests on the floor.
fn drop_scene(ctx: &Ctx, d: &DropDraw, mode: WallMode, dropped: [bool; 3], with_wall: bool) -> Scene {
    let mut s = ctx.scene(&d.colors, if with_wall { mode } else { WallMode::Absent });
    if with_wall {
        s.objects.push(Object::wall(WALL_ID, d.wall.center, d.wall.width, d.wall.height, d.colors[2]));
    }
    let cube_colors = [d.colors[3], d.colors[4], d.colors[0]];
    for i in 0..3 {
        let y = if dropped[i] { d.ys[i] } else { R };
        // The third cube borrows an unused palette slot.
        let color = if i == 2 { third_color(&d.colors) } else { cube_colors[i] };
        s.objects.push(Object::cube(CUBE_IDS[i], d.xs[i], y, color, true));
    }
    s
}

fn third_color(used: &[Rgb; 5]) -> Rgb {
    *PALETTE.iter().find(|c| !used.contains(c)).expect("palette has more than five colours")
}

fn drop_member_ok(t: &Trajectory, dropped: [bool; 3], hidden_by: usize) -> bool {
    if !in_bounds(t) || t.events_of(EventKind::Contact).next().is_some() {
        return false;
    }
    for (i, &id) in CUBE_IDS.iter().enumerate() {
        if dropped[i] && !fully_visible(t, 0, id) {
            return false;
        }
        let landed = t.events_of(EventKind::Landing).any(|e| e.ids == [id] && e.frame <= hidden_by);
        if dropped[i] && !landed {
            return false;
        }
    }
    true
}

fn drop_pair(ctx: &mut Ctx, setting: Setting) -> Attempt<[Member; 2]> {
    let d = draw_drop(ctx)?;
    let mode = setting.wall_mode();
    let script = WallScript::new(mode, ctx.frames);
    let hide = *script.down_frames().last()?;
    let all = [true; 3];
    let full = sim(&drop_scene(ctx, &d, mode, all, true), ctx.frames)?;
    if !drop_member_ok(&full, all, hide) || CUBE_IDS.iter().any(|&id| visible(&full, hide, id) != 0) {
        return None;
    }
    let k = ctx.rng.gen_range(0..3);
    let other = match setting {
        Setting::Predictive => {
            let t = edited(&full, ScriptEdit::RemoveObjectAtFrame { id: CUBE_IDS[k], frame: hide })?;
            if !edit_is_visible(&t) {
                return None;
            }
            Member { traj: t, plausible: false }
        }
        Setting::Hypothetical => {
            let mut dropped = all;
            dropped[k] = false;
            let t = sim(&drop_scene(ctx, &d, mode, dropped, true), ctx.frames)?;
            if !drop_member_ok(&t, dropped, hide) || visible(&t, 0, CUBE_IDS[k]) != 0 {
                return None;
            }
            Member { traj: t, plausible: true }
        }
        Setting::Explicative => return None,
    };
    Some([Member { traj: full, plausible: true }, other])
}

struct ContinuityDraw {
    colors: [Rgb; 5],
    v: f64,
    wall: Wall,
    part: f64,
    window: f64,
    x_single: f64,
}

fn draw_continuity(ctx: &mut Ctx, mode: WallMode) -> Attempt<ContinuityDraw> {
    let colors = ctx.colors();
    let part = ctx.uniform((0.7, 0.8));
    let window = ctx.uniform((0.8, 0.9));
    let wall = Wall {
        center: ctx.uniform(WALL_CENTER_RANGE),
        width: 2.0 * part + window,
        height: ctx.uniform((1.6, 2.0)),
    };
    // Time at which the ball is centred in the window: late enough that it
    // starts clear of the wall, early enough that the wall is still down.
    let down = WallScript::new(mode, ctx.frames).down_frames();
    let latest = *down.last()? as f64 * FRAME_DT;
    let reach = wall.center - wall.left() + R + 2.0 * ctx.px();
    let v_min = SPEED_RANGE.0.max(reach / (latest - 2.0 * FRAME_DT));
    if v_min >= SPEED_RANGE.1 {
        return None;
    }
    let v = ctx.uniform((v_min, SPEED_RANGE.1));
    let earliest = 0.1 + (wall.center - wall.left() + R + 0.1 * v + 2.0 * ctx.px()) / v;
    if earliest >= latest {
        return None;
    }
    let x_single = wall.center - v * ctx.uniform((earliest, latest));
    if x_single < ctx.camera.x_min + R + 0.1 {
        return None;
    }
    Some(ContinuityDraw { colors, v, wall, part, window, x_single })
}

fn continuity_scene(ctx: &Ctx, d: &ContinuityDraw, mode: WallMode, balls: &[f64], with_wall: bool) -> Scene {
    let mut s = ctx.scene(&d.colors, if with_wall { mode } else { WallMode::Absent });
    if with_wall {
        s.objects.push(Object::windowed_wall(
            WALL_ID,
            d.wall.center,
            d.wall.width,
            d.wall.height,
            d.window,
            d.colors[2],
        ));
    }
    for (i, &x) in balls.iter().enumerate() {
        s.objects.push(Object::ball(ACTOR_ID + i as u8, x, d.colors[3]).with_velocity(d.v, 0.0));
    }
    s
}

/// Frames where the ball shows through the window while the wall is down.
fn window_frames(t: &Trajectory, id: u8, window: (f64, f64)) -> Vec<usize> {
    (0..t.frames())
        .filter(|&f| {
            let o = t.states[f].object(id);
            o.is_some_and(|o| o.right() > window.0 && o.left() < window.1) && visible(t, f, id) > 0
        })
        .collect()
}

fn single_ok(t: &Trajectory, d: &ContinuityDraw) -> Attempt<Vec<usize>> {
    if !in_bounds(t) || !fully_visible(t, 0, ACTOR_ID) || !fully_visible(t, 1, ACTOR_ID) {
        return None;
    }
    let half = d.window / 2.0;
    let wf = window_frames(t, ACTOR_ID, (d.wall.center - half, d.wall.center + half));
    let script = &t.scene.wall_script;
    let clear = wf.iter().any(|&f| script.lift_fraction(f) == 0.0 && mostly_visible(t, f, ACTOR_ID));
    clear.then_some(wf)
}

fn continuity_pair(ctx: &mut Ctx, setting: Setting) -> Attempt<[Member; 2]> {
    let mode = setting.wall_mode();
    let d = draw_continuity(ctx, mode)?;
    let single = sim(&continuity_scene(ctx, &d, mode, &[d.x_single], true), ctx.frames)?;
    let wf = single_ok(&single, &d)?;
    let last = ctx.frames - 1;
    let other = match setting {
        Setting::Predictive => {
            let frames = wf[0]..wf[wf.len() - 1] + 1;
            let t = edited(&single, ScriptEdit::ForceInvisibleInRange { id: ACTOR_ID, frames })?;
            if !edit_is_visible(&t) {
                return None;
            }
            Member { traj: t, plausible: false }
        }
        Setting::Hypothetical | Setting::Explicative => {
            // Aim the first ball at a spot behind the left part: fully hidden at a
            // down frame for the explicative case, still short of the window at the
            // end for the hypothetical case.
            let left = d.wall.left();
            let last_down = *WallScript::new(mode, ctx.frames).down_frames().last()?;
            let (target, at) = if setting == Setting::Hypothetical {
                (ctx.uniform((left, left + d.part - 2.0 * ctx.px())) - R, last)
            } else {
                let target = ctx.uniform((left + R, left + d.part - R));
                // Earliest frame that still leaves the ball clear of the wall at frame 1.
                let lead = (target + R - left + 2.0 * ctx.px()) / (d.v * FRAME_DT);
                let first = 1 + lead.ceil() as usize;
                if first > last_down {
                    return None;
                }
                (target, ctx.rng.gen_range(first..=last_down))
            };
            let x1 = target - d.v * at as f64 * FRAME_DT;
            let right = d.wall.right();
            let x2 = ctx.uniform((right - d.part + R, right - R));
            let two = sim(&continuity_scene(ctx, &d, mode, &[x1, x2], true), ctx.frames)?;
            let (b1, b2) = (ACTOR_ID, ACTOR_ID + 1);
            if !in_bounds(&two) || !fully_visible(&two, 0, b1) || !fully_visible(&two, 1, b1) {
                return None;
            }
            if visible(&two, 0, b2) != 0 || !mostly_visible(&two, last, b2) {
                return None;
            }
            let window_left = d.wall.center - d.window / 2.0;
            if setting == Setting::Hypothetical {
                // The first ball disappears behind the left part but never reaches the window.
                let end = two.states[last].object(b1)?;
                if end.right() >= window_left - ctx.px() || end.right() <= d.wall.left() {
                    return None;
                }
                Member { traj: two, plausible: true }
            } else {
                let down = WallScript::new(mode, ctx.frames).down_frames();
                let hidden = (1..ctx.frames).find(|&f| visible(&two, f, b1) == 0)?;
                if !down.contains(&hidden) {
                    return None;
                }
                let t = edited(&two, ScriptEdit::RemoveObjectAtFrame { id: b1, frame: hidden })?;
                if !edit_is_visible(&t) {
                    return None;
                }
                Member { traj: t, plausible: false }
            }
        }
    };
    Some([Member { traj: single, plausible: true }, other])
}

fn sample_members(ctx: &mut Ctx, group: TestGroup) -> Attempt<[Member; 2]> {
    match group.scenario {
        Scenario::Collision | Scenario::Blocking => roll_pair(ctx, group.scenario, group.setting),
        Scenario::Permanence => drop_pair(ctx, group.setting),
        Scenario::Continuity => continuity_pair(ctx, group.setting),
    }
}

/// Draws one pair for `(scenario, setting)`. The plausible member is assigned
/// to role A or B at random.
pub fn sample_pair(
    scenario: Scenario,
    setting: Setting,
    rng: &mut ChaCha8Rng,
    config: &GenConfig,
) -> Result<(LatentVideo, LatentVideo)> {
    let group = valid_group(scenario, setting)?;
    let seed = rng.gen();
    generate_pair(config, group, 0, seed)
}

fn valid_group(scenario: Scenario, setting: Setting) -> Result<TestGroup> {
    if !scenario.settings().contains(&setting) {
        return Err(Error::InvalidCombination { scenario: scenario.to_string(), setting: setting.to_string() });
    }
    Ok(TestGroup { scenario, setting })
}

fn generate_pair(config: &GenConfig, group: TestGroup, index: usize, seed: u64) -> Result<(LatentVideo, LatentVideo)> {
    let mut ctx = Ctx::new(config, seed);
    let name = group.name();
    for _ in 0..MAX_RETRIES {
        let Some([first, second]) = sample_members(&mut ctx, group) else { continue };
        let swap: bool = ctx.rng.gen();
        let (a, b) = if swap { (second, first) } else { (first, second) };
        let make = |m: Member, role: Role| LatentVideo {
            meta: VideoMeta {
                video_id: test_video_id(&group, index, role),
                group: name.clone(),
                scenario: Some(group.scenario),
                setting: Some(group.setting),
                role: Some(role),
                variant: None,
                plausible: m.plausible,
                seed: video_seed(config.master_seed, &name, index, &format!("{role:?}")),
                pair: index,
            },
            latent: m.traj,
        };
        return Ok((make(a, Role::A), make(b, Role::B)));
    }
    Err(Error::SamplingExhausted { group: name, index, retries: MAX_RETRIES })
}

/// Regenerates pair `index` of `group` exactly as the batch generator does.
pub fn test_pair(config: &GenConfig, group: TestGroup, index: usize) -> Result<(LatentVideo, LatentVideo)> {
    generate_pair(config, group, index, pair_seed(config.master_seed, &group.name(), index))
}

pub fn generate_test_set(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let jobs: Vec<(TestGroup, usize)> = test_groups()
        .into_iter()
        .flat_map(|g| (0..config.pairs_per_group).map(move |i| (g, i)))
        .collect();
    let pairs: Vec<(LatentVideo, LatentVideo)> =
        jobs.par_iter().map(|&(g, i)| test_pair(config, g, i)).collect::<Result<_>>()?;
    let videos = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
    Ok(Dataset { kind: DatasetKind::Test, config: config.clone(), videos })
}

fn train_members(ctx: &mut Ctx, group: TrainGroup) -> Attempt<[Trajectory; 2]> {
    let mode = WallMode::LiftedAtStartAndEnd;
    let frames = ctx.frames;
    let pair = |ctx: &Ctx, build: &dyn Fn(&Ctx, bool) -> Scene| -> Attempt<[Trajectory; 2]> {
        let w = sim(&build(ctx, true), frames)?;
        let n = sim(&build(ctx, false), frames)?;
        (in_bounds(&w) && in_bounds(&n)).then_some([w, n])
    };
    match group {
        TrainGroup::Control => {
            let d = draw_roll(ctx, Exits { pass_through: true, interaction: None }, mode)?;
            let out = pair(ctx, &|c, wall| roll_scene(c, &d, mode, None, wall))?;
            (out[0].events_of(EventKind::Contact).next().is_none() && roll_member_ok(&out[0])).then_some(out)
        }
        TrainGroup::Collision | TrainGroup::Blocking => {
            let sc = if group == TrainGroup::Collision { Scenario::Collision } else { Scenario::Blocking };
            let d = draw_roll(ctx, Exits { pass_through: false, interaction: Some(sc) }, mode)?;
            let out = pair(ctx, &|c, wall| roll_scene(c, &d, mode, Some(sc), wall))?;
            (roll_member_ok(&out[0]) && contact_hidden(&out[0])).then_some(out)
        }
        TrainGroup::Permanence => {
            let d = draw_drop(ctx)?;
            let dropped: [bool; 3] = [ctx.rng.gen(), ctx.rng.gen(), ctx.rng.gen()];
            let hide = *WallScript::new(mode, frames).down_frames().last()?;
            let out = pair(ctx, &|c, wall| drop_scene(c, &d, mode, dropped, wall))?;
            drop_member_ok(&out[0], dropped, hide).then_some(out)
        }
        TrainGroup::Continuity => {
            let d = draw_continuity(ctx, mode)?;
            let out = pair(ctx, &|c, wall| continuity_scene(c, &d, mode, &[d.x_single], wall))?;
            single_ok(&out[0], &d).map(|_| out)
        }
    }
}

/// Regenerates training scene `index` of `group` as both wall variants.
pub fn train_scene(config: &GenConfig, group: TrainGroup, index: usize) -> Result<[LatentVideo; 2]> {
    let name = format!("train-{}", group.name());
    let mut ctx = Ctx::new(config, pair_seed(config.master_seed, &name, index));
    for _ in 0..MAX_RETRIES {
        let Some([w, n]) = train_members(&mut ctx, group) else { continue };
        let make = |t: Trajectory, variant: Variant| {
            let id = train_video_id(group, index, variant);
            LatentVideo {
                meta: VideoMeta {
                    seed: stable_hash(config.master_seed, &[&id]),
                    video_id: id,
                    group: group.name().to_string(),
                    scenario: None,
                    setting: None,
                    role: None,
                    variant: Some(variant),
                    plausible: true,
                    pair: index,
                },
                latent: t,
            }
        };
        return Ok([make(w, Variant::WithWall), make(n, Variant::WithoutWall)]);
    }
    Err(Error::SamplingExhausted { group: name, index, retries: MAX_RETRIES })
}

pub fn generate_train_set(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let jobs: Vec<(TrainGroup, usize)> = TrainGroup::ALL
        .iter()
        .flat_map(|&g| (0..config.train_scenes_per_group).map(move |i| (g, i)))
        .collect();
    let scenes: Vec<[LatentVideo; 2]> =
        jobs.par_iter().map(|&(g, i)| train_scene(config, g, i)).collect::<Result<_>>()?;
    Ok(Dataset { kind: DatasetKind::Train, config: config.clone(), videos: scenes.into_iter().flatten().collect() })
}
