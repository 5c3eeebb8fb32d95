//! Scene vocabulary shared by every other module: objects, cameras, occluder scripts.
//!
//! Motion is planar. `x` is horizontal, `y` vertical (floor at `y = 0`), and `z`
//! is the distance from the camera plane; it only orders layers for the renderer.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Range, Sub};

use serde::{Deserialize, Serialize};

/// Ball radius and cube half-extent.
pub const CANONICAL_HALF_EXTENT: f64 = 0.3;
pub const GRAVITY: f64 = 9.8;
pub const FLOOR_HEIGHT: f64 = 0.0;
/// Upper bound on scene objects (actors plus the occluder).
pub const MAX_OBJECTS: usize = 8;

pub const BACKGROUND_ID: u8 = 0;
pub const FLOOR_ID: u8 = 1;
pub const FIRST_OBJECT_ID: u8 = 2;

/// Centre depth of balls and cubes.
pub const ACTOR_DEPTH: f64 = 5.0;
/// Centre depth of walls; always in front of the actors.
pub const OCCLUDER_DEPTH: f64 = 3.0;
pub const OCCLUDER_HALF_DEPTH: f64 = 0.1;

pub const DEFAULT_FRAMES: usize = 15;
pub const DEFAULT_RESOLUTION: u32 = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

/// Well-separated flat colours. Scenes draw every colour from here.
pub const PALETTE: [Rgb; 12] = [
    Rgb([220, 50, 47]),
    Rgb([38, 139, 210]),
    Rgb([133, 173, 0]),
    Rgb([240, 205, 40]),
    Rgb([245, 130, 20]),
    Rgb([120, 90, 200]),
    Rgb([30, 180, 160]),
    Rgb([215, 60, 150]),
    Rgb([245, 245, 240]),
    Rgb([125, 125, 125]),
    Rgb([135, 85, 45]),
    Rgb([25, 25, 35]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Ball,
    Cube,
    Wall,
    WindowedWall,
    Floor,
    Background,
}

impl ObjectKind {
    pub fn is_occluder(self) -> bool {
        matches!(self, ObjectKind::Wall | ObjectKind::WindowedWall)
    }

    /// Takes part in contacts.
    pub fn is_solid(self) -> bool {
        matches!(self, ObjectKind::Ball | ObjectKind::Cube)
    }
}

/// Rectangular hole in a windowed wall, centred horizontally on the wall and
/// starting at the wall's bottom edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aperture {
    pub half_width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Object {
    pub id: u8,
    pub kind: ObjectKind,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Half-extents along each axis.
    pub extent: Vec3,
    pub color: Rgb,
    pub dynamic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aperture: Option<Aperture>,
}

impl Object {
    /// A ball resting on the floor at `x`.
    pub fn ball(id: u8, x: f64, color: Rgb) -> Self {
        let h = CANONICAL_HALF_EXTENT;
        Object {
            id,
            kind: ObjectKind::Ball,
            position: Vec3::new(x, FLOOR_HEIGHT + h, ACTOR_DEPTH),
            velocity: Vec3::ZERO,
            extent: Vec3::new(h, h, h),
            color,
            dynamic: true,
            aperture: None,
        }
    }

    /// A cube whose centre sits at height `y`.
    pub fn cube(id: u8, x: f64, y: f64, color: Rgb, dynamic: bool) -> Self {
        let h = CANONICAL_HALF_EXTENT;
        Object {
            id,
            kind: ObjectKind::Cube,
            position: Vec3::new(x, y, ACTOR_DEPTH),
            velocity: Vec3::ZERO,
            extent: Vec3::new(h, h, h),
            color,
            dynamic,
            aperture: None,
        }
    }

    /// A wall standing on the floor, `width` wide and `height` tall.
    pub fn wall(id: u8, center_x: f64, width: f64, height: f64, color: Rgb) -> Self {
        Object {
            id,
            kind: ObjectKind::Wall,
            position: Vec3::new(center_x, FLOOR_HEIGHT + height / 2.0, OCCLUDER_DEPTH),
            velocity: Vec3::ZERO,
            extent: Vec3::new(width / 2.0, height / 2.0, OCCLUDER_HALF_DEPTH),
            color,
            dynamic: false,
            aperture: None,
        }
    }

    pub fn windowed_wall(
        id: u8,
        center_x: f64,
        width: f64,
        height: f64,
        window_width: f64,
        color: Rgb,
    ) -> Self {
        let mut w = Object::wall(id, center_x, width, height, color);
        w.kind = ObjectKind::WindowedWall;
        w.aperture = Some(Aperture { half_width: window_width / 2.0, height: height / 2.0 });
        w
    }

    pub fn with_velocity(mut self, vx: f64, vy: f64) -> Self {
        self.velocity = Vec3::new(vx, vy, 0.0);
        self
    }

    pub fn left(&self) -> f64 {
        self.position.x - self.extent.x
    }

    pub fn right(&self) -> f64 {
        self.position.x + self.extent.x
    }

    pub fn bottom(&self) -> f64 {
        self.position.y - self.extent.y
    }

    pub fn top(&self) -> f64 {
        self.position.y + self.extent.y
    }

    /// Whether the object's silhouette contains the point `(x, y)`.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        let dx = x - self.position.x;
        let dy = y - self.position.y;
        match self.kind {
            ObjectKind::Ball => {
                let r = self.extent.x;
                dx * dx + dy * dy <= r * r
            }
            ObjectKind::Cube | ObjectKind::Wall => {
                dx.abs() <= self.extent.x && dy.abs() <= self.extent.y
            }
            ObjectKind::WindowedWall => {
                if dx.abs() > self.extent.x || dy.abs() > self.extent.y {
                    return false;
                }
                match self.aperture {
                    Some(a) => !(dx.abs() < a.half_width && y - self.bottom() < a.height),
                    None => true,
                }
            }
            ObjectKind::Floor | ObjectKind::Background => false,
        }
    }

    /// Depth of the camera-facing surface.
    pub fn front_depth(&self) -> f64 {
        self.position.z - self.extent.z
    }
}

/// Orthographic fronto-parallel camera looking down +z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub near: f64,
    pub far: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Camera {
    fn default() -> Self {
        Camera::with_resolution(DEFAULT_RESOLUTION, DEFAULT_RESOLUTION)
    }
}

impl Camera {
    pub fn with_resolution(width: u32, height: u32) -> Self {
        Camera { x_min: -4.0, x_max: 4.0, y_min: 0.0, y_max: 6.0, near: 0.0, far: 10.0, width, height }
    }

    /// World units per pixel column.
    pub fn pixel_width(&self) -> f64 {
        (self.x_max - self.x_min) / self.width as f64
    }

    /// World units per pixel row.
    pub fn pixel_height(&self) -> f64 {
        (self.y_max - self.y_min) / self.height as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// World coordinates of the centre of pixel `(col, row)`; row 0 is the top.
    pub fn pixel_center(&self, col: u32, row: u32) -> (f64, f64) {
        let x = self.x_min + (col as f64 + 0.5) * self.pixel_width();
        let y = self.y_max - (row as f64 + 0.5) * self.pixel_height();
        (x, y)
    }

    /// Continuous pixel coordinates `(col, row)` of a world point, in the same
    /// frame as [`Camera::pixel_center`] (pixel centres at half-integers).
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_min) / self.pixel_width(), (self.y_max - y) / self.pixel_height())
    }

    /// Inclusive column/row ranges whose pixel centres may fall inside the
    /// world-space box `[x0, x1] × [y0, y1]`, clipped to the image.
    pub fn pixel_span(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<PixelRect> {
        let pw = self.pixel_width();
        let ph = self.pixel_height();
        let c0 = ((x0 - self.x_min) / pw - 0.5).ceil().max(0.0);
        let c1 = ((x1 - self.x_min) / pw - 0.5).floor().min(self.width as f64 - 1.0);
        let r0 = ((self.y_max - y1) / ph - 0.5).ceil().max(0.0);
        let r1 = ((self.y_max - y0) / ph - 0.5).floor().min(self.height as f64 - 1.0);
        if c0 > c1 || r0 > r1 || !c0.is_finite() || !r0.is_finite() {
            return None;
        }
        Some(PixelRect { c0: c0 as u32, c1: c1 as u32, r0: r0 as u32, r1: r1 as u32 })
    }

    pub fn depth_in_range(&self, d: f64) -> bool {
        d >= self.near && d <= self.far
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub c0: u32,
    pub c1: u32,
    pub r0: u32,
    pub r1: u32,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        (self.c1 - self.c0 + 1) as usize * (self.r1 - self.r0 + 1) as usize
    }

    pub fn union(self, o: PixelRect) -> PixelRect {
        PixelRect {
            c0: self.c0.min(o.c0),
            c1: self.c1.max(o.c1),
            r0: self.r0.min(o.r0),
            r1: self.r1.max(o.r1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WallMode {
    AlwaysDown,
    LiftedAtStartAndEnd,
    LiftedAtEndOnly,
    Absent,
}

/// When the occluder is raised out of view.
///
/// Each lift range is flanked by two frames of vertical translation, at one and
/// two thirds of the wall height, on the side facing the down period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallScript {
    pub mode: WallMode,
    pub lift_frames: Vec<Range<usize>>,
    pub frames: usize,
}

/// Frames occupied by each lift or lower animation.
pub const WALL_TRANSITION_FRAMES: usize = 2;
const LIFT_HOLD_FRAMES: usize = 2;

impl WallScript {
    pub fn new(mode: WallMode, frames: usize) -> Self {
        let hold = LIFT_HOLD_FRAMES.min(frames);
        let end = frames - hold..frames;
        let lift_frames = match mode {
            WallMode::AlwaysDown | WallMode::Absent => Vec::new(),
            WallMode::LiftedAtStartAndEnd => vec![0..hold, end],
            WallMode::LiftedAtEndOnly => vec![end],
        };
        WallScript { mode, lift_frames, frames }
    }

    pub fn absent(frames: usize) -> Self {
        WallScript::new(WallMode::Absent, frames)
    }

    pub fn is_raised(&self, frame: usize) -> bool {
        self.lift_frames.iter().any(|r| r.contains(&frame))
    }

    /// Fraction of the way out of view: 0 is down, 1 fully raised.
    pub fn lift_fraction(&self, frame: usize) -> f64 {
        if self.is_raised(frame) {
            return 1.0;
        }
        for r in &self.lift_frames {
            // Lowering after a lift that starts the video.
            if r.start == 0 && frame >= r.end && frame < r.end + WALL_TRANSITION_FRAMES {
                let k = frame - r.end;
                return (WALL_TRANSITION_FRAMES - k) as f64 / (WALL_TRANSITION_FRAMES + 1) as f64;
            }
            // Raising before a lift that ends the video.
            if r.end == self.frames && frame + WALL_TRANSITION_FRAMES >= r.start && frame < r.start {
                let k = r.start - frame;
                return (WALL_TRANSITION_FRAMES + 1 - k) as f64 / (WALL_TRANSITION_FRAMES + 1) as f64;
            }
        }
        0.0
    }

    /// Frames during which the wall is fully down and static.
    pub fn down_frames(&self) -> Vec<usize> {
        (0..self.frames).filter(|&f| self.lift_fraction(f) == 0.0).collect()
    }

    /// Vertical offset of an occluder of the given height at `frame`.
    pub fn offset(&self, frame: usize, wall_height: f64, camera: &Camera) -> f64 {
        let f = self.lift_fraction(frame);
        if f >= 1.0 {
            camera.y_max - FLOOR_HEIGHT
        } else {
            f * wall_height
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<Object>,
    pub background: Rgb,
    pub floor_color: Rgb,
    pub gravity: f64,
    pub floor_height: f64,
    pub camera: Camera,
    pub wall_script: WallScript,
}

impl Scene {
    /// A scene with no objects.
    pub fn empty(camera: Camera, frames: usize, background: Rgb, floor_color: Rgb) -> Self {
        Scene {
            objects: Vec::new(),
            background,
            floor_color,
            gravity: GRAVITY,
            floor_height: FLOOR_HEIGHT,
            camera,
            wall_script: WallScript::absent(frames),
        }
    }

    pub fn occluder(&self) -> Option<&Object> {
        self.objects.iter().find(|o| o.kind.is_occluder())
    }

    pub fn object(&self, id: u8) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Smallest id not used by any object.
    pub fn next_free_id(&self) -> u8 {
        self.objects.iter().map(|o| o.id + 1).max().unwrap_or(FIRST_OBJECT_ID).max(FIRST_OBJECT_ID)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    DuplicateId(u8),
    ReservedId(u8),
    TooManyObjects(usize),
    MultipleOccluders(usize),
    Interpenetration(u8, u8),
    StaticObjectMoving(u8),
    NonFinite(u8),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate object id {id}"),
            Violation::ReservedId(id) => write!(f, "object id {id} is reserved for background/floor"),
            Violation::TooManyObjects(n) => write!(f, "object count {n} > {MAX_OBJECTS}"),
            Violation::MultipleOccluders(n) => write!(f, "{n} occluders, at most one allowed"),
            Violation::Interpenetration(a, b) => {
                write!(f, "interpenetration at frame 0 between objects {a} and {b}")
            }
            Violation::StaticObjectMoving(id) => write!(f, "non-dynamic object {id} has a velocity"),
            Violation::NonFinite(id) => write!(f, "object {id} has a non-finite pose"),
        }
    }
}

/// Penetration depth of two solids, positive when they overlap. Only the
/// x/y plane is considered.
pub fn penetration(a: &Object, b: &Object) -> f64 {
    use ObjectKind::*;
    match (a.kind, b.kind) {
        (Ball, Ball) => {
            let d = Vec3::new(b.position.x - a.position.x, b.position.y - a.position.y, 0.0);
            a.extent.x + b.extent.x - d.norm()
        }
        (Ball, Cube) => sphere_box_penetration(a, b),
        (Cube, Ball) => sphere_box_penetration(b, a),
        (Cube, Cube) => {
            let ox = a.extent.x + b.extent.x - (a.position.x - b.position.x).abs();
            let oy = a.extent.y + b.extent.y - (a.position.y - b.position.y).abs();
            ox.min(oy)
        }
        _ => f64::NEG_INFINITY,
    }
}

fn sphere_box_penetration(ball: &Object, cube: &Object) -> f64 {
    let cx = ball.position.x.clamp(cube.left(), cube.right());
    let cy = ball.position.y.clamp(cube.bottom(), cube.top());
    let dx = ball.position.x - cx;
    let dy = ball.position.y - cy;
    let dist = (dx * dx + dy * dy).sqrt();
    if dist > 0.0 {
        ball.extent.x - dist
    } else {
        // Centre inside the box.
        let ix = cube.extent.x - (ball.position.x - cube.position.x).abs();
        let iy = cube.extent.y - (ball.position.y - cube.position.y).abs();
        ball.extent.x + ix.min(iy)
    }
}

/// Slack allowed for touching contacts when checking the initial configuration.
const CONTACT_SLACK: f64 = 1e-9;

/// Lists every invariant the scene breaks. An empty list means the scene is valid.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for o in &scene.objects {
        if o.id < FIRST_OBJECT_ID {
            out.push(Violation::ReservedId(o.id));
        }
        if !seen.insert(o.id) {
            out.push(Violation::DuplicateId(o.id));
        }
    }
    if scene.objects.len() > MAX_OBJECTS {
        out.push(Violation::TooManyObjects(scene.objects.len()));
    }
    let occluders = scene.objects.iter().filter(|o| o.kind.is_occluder()).count();
    if occluders > 1 {
        out.push(Violation::MultipleOccluders(occluders));
    }
    for o in &scene.objects {
        if !o.position.is_finite() || !o.velocity.is_finite() || !o.extent.is_finite() {
            out.push(Violation::NonFinite(o.id));
        } else if !o.dynamic && o.velocity != Vec3::ZERO {
            out.push(Violation::StaticObjectMoving(o.id));
        }
    }
    let solids: Vec<&Object> = scene.objects.iter().filter(|o| o.kind.is_solid()).collect();
    for (i, a) in solids.iter().enumerate() {
        for b in &solids[i + 1..] {
            if penetration(a, b) > CONTACT_SLACK {
                out.push(Violation::Interpenetration(a.id.min(b.id), a.id.max(b.id)));
            }
        }
    }
    out
}
