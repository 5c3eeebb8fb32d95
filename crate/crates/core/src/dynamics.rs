//! Deterministic planar rigid-body stepping, contact resolution and scripted edits.
//!
//! Integration is semi-implicit Euler. Contacts are perfectly elastic and
//! frictionless; resolution is exact for straight-line motion because each pair
//! is rewound to its contact instant along the velocity change.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{
    validate_scene, Object, ObjectKind, Scene, Vec3, FIRST_OBJECT_ID, FLOOR_HEIGHT, GRAVITY,
    MAX_OBJECTS,
};

/// Seconds between rendered frames.
pub const FRAME_DT: f64 = 0.1;
pub const DEFAULT_SUBSTEPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub frame_index: usize,
    /// Sorted by ascending id.
    pub objects: Vec<Object>,
    pub occluder_raised: bool,
    /// Ids hidden from the renderer at this frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invisible: Vec<u8>,
}

impl WorldState {
    pub fn from_objects(frame_index: usize, mut objects: Vec<Object>) -> Self {
        objects.sort_by_key(|o| o.id);
        WorldState { frame_index, objects, occluder_raised: false, invisible: Vec::new() }
    }

    pub fn object(&self, id: u8) -> Option<&Object> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn is_visible(&self, id: u8) -> bool {
        !self.invisible.contains(&id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Two solids touched and exchanged momentum.
    Contact,
    /// Two non-dynamic solids overlap; nothing is changed.
    StaticContact,
    Landing,
    WallRaised,
    WallLowered,
    ObjectRemoved,
    ObjectInserted,
    /// Warning: an actor left the camera bounds.
    OutOfBounds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// First rendered frame at which the event's effect is visible.
    pub frame: usize,
    /// Simulation time in seconds. Contacts are rewound to the touching instant.
    pub time: f64,
    pub kind: EventKind,
    pub ids: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScriptEdit {
    SuppressCollision { a: u8, b: u8 },
    RemoveObjectAtFrame { id: u8, frame: usize },
    InsertObjectAtFrame { object: Object, frame: usize },
    /// Render-only: the object keeps moving but is not drawn.
    ForceInvisibleInRange { id: u8, frames: Range<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// The scene the trajectory was simulated from, before any edit.
    pub scene: Scene,
    pub substeps: usize,
    pub dt: f64,
    pub states: Vec<WorldState>,
    pub events: Vec<Event>,
    pub script_applied: Option<ScriptEdit>,
}

impl Trajectory {
    pub fn frames(&self) -> usize {
        self.states.len()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// First contact between `a` and `b`, if any.
    pub fn contact_between(&self, a: u8, b: u8) -> Option<&Event> {
        self.events_of(EventKind::Contact)
            .chain(self.events_of(EventKind::StaticContact))
            .find(|e| e.ids.contains(&a) && e.ids.contains(&b))
    }
}

/// Event produced inside a substep, before it is placed on the timeline.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEvent {
    pub kind: EventKind,
    pub ids: [u8; 2],
    /// How long before the end of the step the event happened.
    pub rewind: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Physics {
    pub gravity: f64,
    pub floor_height: f64,
    /// Unordered pairs whose contacts are ignored.
    pub suppressed: Vec<(u8, u8)>,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { gravity: GRAVITY, floor_height: FLOOR_HEIGHT, suppressed: Vec::new() }
    }
}

impl Physics {
    pub fn for_scene(scene: &Scene) -> Self {
        Physics { gravity: scene.gravity, floor_height: scene.floor_height, suppressed: Vec::new() }
    }

    fn is_suppressed(&self, a: u8, b: u8) -> bool {
        self.suppressed.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
    }

    /// One integration step over `objects`, which must be sorted by id.
    pub fn substep(&self, objects: &mut [Object], h: f64, events: &mut Vec<StepEvent>) {
        for o in objects.iter_mut() {
            if !o.dynamic || !o.kind.is_solid() {
                continue;
            }
            let airborne = o.velocity.y != 0.0 || o.bottom() > self.floor_height;
            o.velocity.y -= self.gravity * h;
            o.position += o.velocity * h;
            if o.bottom() <= self.floor_height {
                o.position.y = self.floor_height + o.extent.y;
                if o.velocity.y < 0.0 {
                    o.velocity.y = 0.0;
                }
                if airborne {
                    events.push(StepEvent { kind: EventKind::Landing, ids: [o.id, o.id], rewind: 0.0 });
                }
            }
        }
        let n = objects.len();
        for i in 0..n {
            if !objects[i].kind.is_solid() {
                continue;
            }
            for j in i + 1..n {
                if !objects[j].kind.is_solid() || self.is_suppressed(objects[i].id, objects[j].id) {
                    continue;
                }
                let (head, tail) = objects.split_at_mut(j);
                let (a, b) = (&mut head[i], &mut tail[0]);
                match resolve_in_place(a, b) {
                    Outcome::Separate => {}
                    Outcome::Static => events.push(StepEvent {
                        kind: EventKind::StaticContact,
                        ids: [a.id, b.id],
                        rewind: 0.0,
                    }),
                    Outcome::Resolved { rewind } => {
                        events.push(StepEvent { kind: EventKind::Contact, ids: [a.id, b.id], rewind })
                    }
                }
            }
        }
    }

    pub fn step(&self, state: &WorldState, dt: f64) -> WorldState {
        let mut next = state.clone();
        let mut scratch = Vec::new();
        self.substep(&mut next.objects, dt, &mut scratch);
        next
    }
}

/// One integration step under default gravity and floor.
pub fn step(state: &WorldState, dt: f64) -> WorldState {
    Physics::default().step(state, dt)
}

/// Contact normal (pointing from `a` to `b`) and penetration depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub normal: Vec3,
    pub depth: f64,
}

pub fn contact(a: &Object, b: &Object) -> Option<Contact> {
    use ObjectKind::*;
    let c = match (a.kind, b.kind) {
        (Ball, Ball) => {
            let d = Vec3::new(b.position.x - a.position.x, b.position.y - a.position.y, 0.0);
            // Axis-aligned offsets skip the square root so head-on exchanges are exact.
            let dist = if d.y == 0.0 { d.x.abs() } else { d.norm() };
            let normal = match (dist > 0.0, d.y == 0.0) {
                (false, _) => Vec3::new(1.0, 0.0, 0.0),
                (true, true) => Vec3::new(d.x.signum(), 0.0, 0.0),
                (true, false) => d * (1.0 / dist),
            };
            Contact { normal, depth: a.extent.x + b.extent.x - dist }
        }
        (Ball, Cube) => ball_box(a, b),
        (Cube, Ball) => {
            let c = ball_box(b, a);
            Contact { normal: -c.normal, depth: c.depth }
        }
        (Cube, Cube) => {
            let dx = b.position.x - a.position.x;
            let dy = b.position.y - a.position.y;
            let ox = a.extent.x + b.extent.x - dx.abs();
            let oy = a.extent.y + b.extent.y - dy.abs();
            if ox < oy {
                Contact { normal: Vec3::new(dx.signum(), 0.0, 0.0), depth: ox }
            } else {
                Contact { normal: Vec3::new(0.0, dy.signum(), 0.0), depth: oy }
            }
        }
        _ => return None,
    };
    (c.depth >= 0.0).then_some(c)
}

fn ball_box(ball: &Object, cube: &Object) -> Contact {
    let qx = ball.position.x.clamp(cube.left(), cube.right());
    let qy = ball.position.y.clamp(cube.bottom(), cube.top());
    let d = Vec3::new(qx - ball.position.x, qy - ball.position.y, 0.0);
    let dist = d.norm();
    if dist > 0.0 {
        return Contact { normal: d * (1.0 / dist), depth: ball.extent.x - dist };
    }
    let dx = cube.position.x - ball.position.x;
    let dy = cube.position.y - ball.position.y;
    let ix = cube.extent.x - dx.abs();
    let iy = cube.extent.y - dy.abs();
    if ix < iy {
        Contact { normal: Vec3::new(dx.signum(), 0.0, 0.0), depth: ball.extent.x + ix }
    } else {
        Contact { normal: Vec3::new(0.0, dy.signum(), 0.0), depth: ball.extent.x + iy }
    }
}

enum Outcome {
    Separate,
    Static,
    Resolved { rewind: f64 },
}

fn resolve_in_place(a: &mut Object, b: &mut Object) -> Outcome {
    let Some(c) = contact(a, b) else { return Outcome::Separate };
    if !a.dynamic && !b.dynamic {
        return Outcome::Static;
    }
    let n = c.normal;
    let closing = (a.velocity - b.velocity).dot(n);
    if closing <= 0.0 {
        return Outcome::Separate;
    }
    let (va, vb) = (a.velocity, b.velocity);
    match (a.dynamic, b.dynamic) {
        (true, true) => {
            a.velocity = va - n * closing;
            b.velocity = vb + n * closing;
        }
        (true, false) => a.velocity = va - n * (2.0 * closing),
        (false, true) => b.velocity = vb + n * (2.0 * closing),
        (false, false) => unreachable!(),
    }
    // Rewind to the touching instant and replay the remainder with the new velocities.
    let rewind = c.depth / closing;
    a.position += (a.velocity - va) * rewind;
    b.position += (b.velocity - vb) * rewind;
    Outcome::Resolved { rewind }
}

/// Elastic, frictionless contact between two objects. Returns the inputs
/// unchanged when they do not overlap, are separating, or are both fixed.
pub fn resolve_contact(a: &Object, b: &Object) -> (Object, Object) {
    let (mut a, mut b) = (a.clone(), b.clone());
    resolve_in_place(&mut a, &mut b);
    (a, b)
}

/// Simulates `frames` rendered states with `substeps` integration steps each.
pub fn simulate(scene: &Scene, frames: usize, substeps: usize) -> Result<Trajectory> {
    let violations = validate_scene(scene);
    if !violations.is_empty() {
        return Err(Error::InvalidScene(violations));
    }
    Ok(run(scene, frames, substeps, None))
}

/// Re-simulates the trajectory's scene with `edit` active. Any edit already
/// applied to `traj` is replaced.
pub fn apply_script(traj: &Trajectory, edit: ScriptEdit) -> Result<Trajectory> {
    check_edit(&traj.scene, traj.frames(), &edit)?;
    Ok(run(&traj.scene, traj.frames(), traj.substeps, Some(edit)))
}

fn check_edit(scene: &Scene, frames: usize, edit: &ScriptEdit) -> Result<()> {
    let solid = |id: u8| scene.object(id).is_some_and(|o| o.kind.is_solid());
    let frame_ok = |f: usize| {
        if f < frames {
            Ok(())
        } else {
            Err(Error::Script(format!("frame {f} out of range 0..{frames}")))
        }
    };
    match edit {
        ScriptEdit::SuppressCollision { a, b } => {
            for id in [a, b] {
                if !solid(*id) {
                    return Err(Error::Script(format!("no solid object with id {id}")));
                }
            }
            if a == b {
                return Err(Error::Script(format!("cannot suppress a contact of object {a} with itself")));
            }
            Ok(())
        }
        ScriptEdit::RemoveObjectAtFrame { id, frame } => {
            if scene.object(*id).is_none() {
                return Err(Error::Script(format!("unknown object id {id}")));
            }
            frame_ok(*frame)
        }
        ScriptEdit::InsertObjectAtFrame { object, frame } => {
            if object.id < FIRST_OBJECT_ID || scene.object(object.id).is_some() {
                return Err(Error::Script(format!("object id {} is already taken", object.id)));
            }
            if scene.objects.len() + 1 > MAX_OBJECTS {
                return Err(Error::Script(format!("inserting would exceed {MAX_OBJECTS} objects")));
            }
            frame_ok(*frame)
        }
        ScriptEdit::ForceInvisibleInRange { id, frames: r } => {
            if scene.object(*id).is_none() {
                return Err(Error::Script(format!("unknown object id {id}")));
            }
            if r.start >= r.end || r.end > frames {
                return Err(Error::Script(format!("frame range {r:?} out of range 0..{frames}")));
            }
            Ok(())
        }
    }
}

fn run(scene: &Scene, frames: usize, substeps: usize, edit: Option<ScriptEdit>) -> Trajectory {
    let substeps = substeps.max(1);
    let h = FRAME_DT / substeps as f64;
    let mut physics = Physics::for_scene(scene);
    if let Some(ScriptEdit::SuppressCollision { a, b }) = &edit {
        physics.suppressed.push((*a, *b));
    }
    let occluder_base = scene.occluder().map(|o| (o.id, o.position));
    let script = &scene.wall_script;
    let cam = &scene.camera;

    let mut events = Vec::new();
    let mut warned: Vec<u8> = Vec::new();
    let mut states = Vec::with_capacity(frames);
    let mut current = WorldState::from_objects(0, scene.objects.clone());
    let mut scratch = Vec::new();

    for f in 0..frames {
        if f > 0 {
            current.frame_index = f;
            for k in 0..substeps {
                scratch.clear();
                physics.substep(&mut current.objects, h, &mut scratch);
                let t_end = (f - 1) as f64 * FRAME_DT + (k + 1) as f64 * h;
                events.extend(scratch.drain(..).map(|e| Event {
                    frame: f,
                    time: t_end - e.rewind,
                    kind: e.kind,
                    ids: if e.ids[0] == e.ids[1] { vec![e.ids[0]] } else { e.ids.to_vec() },
                }));
            }
        }
        let t = f as f64 * FRAME_DT;
        match &edit {
            Some(ScriptEdit::RemoveObjectAtFrame { id, frame }) if *frame == f => {
                current.objects.retain(|o| o.id != *id);
                events.push(Event { frame: f, time: t, kind: EventKind::ObjectRemoved, ids: vec![*id] });
            }
            Some(ScriptEdit::InsertObjectAtFrame { object, frame }) if *frame == f => {
                current.objects.push(object.clone());
                current.objects.sort_by_key(|o| o.id);
                events.push(Event {
                    frame: f,
                    time: t,
                    kind: EventKind::ObjectInserted,
                    ids: vec![object.id],
                });
            }
            _ => {}
        }
        current.invisible = match &edit {
            Some(ScriptEdit::ForceInvisibleInRange { id, frames: r }) if r.contains(&f) => vec![*id],
            _ => Vec::new(),
        };
        if let Some((id, base)) = occluder_base {
            let height = 2.0 * scene.object(id).map_or(0.0, |o| o.extent.y);
            if let Some(o) = current.objects.iter_mut().find(|o| o.id == id) {
                o.position = base + Vec3::new(0.0, script.offset(f, height, cam), 0.0);
            }
            current.occluder_raised = script.is_raised(f);
            if f > 0 {
                let (prev, now) = (script.lift_fraction(f - 1), script.lift_fraction(f));
                if now > prev && prev == 0.0 {
                    events.push(Event { frame: f, time: t, kind: EventKind::WallRaised, ids: vec![id] });
                } else if now == 0.0 && prev > 0.0 {
                    events.push(Event { frame: f, time: t, kind: EventKind::WallLowered, ids: vec![id] });
                }
            }
        }
        for o in &current.objects {
            let out = o.left() < cam.x_min || o.right() > cam.x_max || o.top() > cam.y_max;
            if o.kind.is_solid() && out && !warned.contains(&o.id) {
                warned.push(o.id);
                events.push(Event { frame: f, time: t, kind: EventKind::OutOfBounds, ids: vec![o.id] });
            }
        }
        states.push(current.clone());
    }

    Trajectory { scene: scene.clone(), substeps, dt: FRAME_DT, states, events, script_applied: edit }
}
