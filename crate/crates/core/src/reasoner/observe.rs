//! Symbolic perception: object tracks and the static backdrop recovered from id masks.

use crate::generator::Observation;
use crate::render::for_each_covered;
use crate::world::{
    Camera, Object, ObjectKind, PixelRect, Rgb, ACTOR_DEPTH, BACKGROUND_ID, CANONICAL_HALF_EXTENT,
    FIRST_OBJECT_ID, OCCLUDER_DEPTH,
};

const R: f64 = CANONICAL_HALF_EXTENT;
/// Surfaces nearer than this are occluders; actors sit further back.
const OCCLUDER_PLANE: f32 = ((ACTOR_DEPTH - R + OCCLUDER_DEPTH) / 2.0) as f32;
/// Bounding-box fill ratio above which a blob is a square.
const CUBE_FILL: f64 = 0.9;

/// One track in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Sighting {
    pub count: usize,
    pub bbox: PixelRect,
    /// World-space centroid of the visible pixels.
    pub centroid: (f64, f64),
    /// Centre of the range of poses that reproduce the pixels exactly, for
    /// full sightings; the centroid otherwise.
    pub pose: (f64, f64),
    /// Half-widths of the pose ranges that reproduce the pixels.
    pub slack: (f64, f64),
    /// Nothing in front of it and not cut by the image border.
    pub full: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: u8,
    pub kind: ObjectKind,
    pub color: Rgb,
    pub sightings: Vec<Option<Sighting>>,
}

impl Track {
    pub fn first_seen(&self) -> Option<usize> {
        self.sightings.iter().position(Option::is_some)
    }

    pub fn full_at(&self, f: usize) -> Option<&Sighting> {
        self.sightings.get(f)?.as_ref().filter(|s| s.full)
    }

    pub fn first_full(&self) -> Option<usize> {
        (0..self.sightings.len()).find(|&f| self.full_at(f).is_some())
    }

    /// Same colour and shape.
    pub fn looks_like(&self, other: &Track) -> bool {
        self.kind == other.kind && self.color == other.color
    }
}

/// Per-frame backdrop with every actor erased, plus the observed actor pixels.
#[derive(Clone, Debug)]
pub struct StaticLayer {
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
    /// Observed actor pixels: index, owning id and squared error against the backdrop.
    pub actor_pixels: Vec<(u32, u8, f64)>,
}

#[derive(Clone, Debug)]
pub struct Observed {
    pub camera: Camera,
    pub frames: usize,
    pub background: Rgb,
    pub tracks: Vec<Track>,
    /// Horizontal extent hidden by the occluder while it stands on the floor.
    pub occluded_span: Option<(f64, f64)>,
    pub statics: Vec<StaticLayer>,
    pub colors_seen: Vec<Rgb>,
}

impl Observed {
    pub fn track(&self, id: u8) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn initial_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.sightings[0].is_some())
    }

    pub fn late_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.sightings[0].is_none())
    }

    /// World pose of a sighting.
    pub fn pose(&self, s: &Sighting) -> (f64, f64) {
        s.pose
    }
}

pub(crate) fn sq_err(a: &[u8], b: &[u8]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

pub fn observe(obs: &Observation) -> Observed {
    let cam = obs.camera;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let n_frames = obs.frames.len();

    let background = obs
        .masks
        .first()
        .and_then(|m| m.ids.iter().position(|&i| i == BACKGROUND_ID))
        .map(|i| Rgb([obs.frames[0].rgb[3 * i], obs.frames[0].rgb[3 * i + 1], obs.frames[0].rgb[3 * i + 2]]))
        .unwrap_or(Rgb([0, 0, 0]));

    // Occluder ids are identified by depth.
    let mut is_occluder = [false; 256];
    for (f, m) in obs.frames.iter().zip(&obs.masks) {
        for (i, &id) in m.ids.iter().enumerate() {
            if id >= FIRST_OBJECT_ID && f.depth[i] < OCCLUDER_PLANE {
                is_occluder[id as usize] = true;
            }
        }
    }

    struct Acc {
        count: usize,
        c0: u32,
        c1: u32,
        r0: u32,
        r1: u32,
        sc: f64,
        sr: f64,
        full: bool,
    }
    let mut tracks: Vec<Track> = Vec::new();
    let mut statics = Vec::with_capacity(n_frames);
    let mut colors_seen: Vec<Rgb> = vec![background];
    let mut span: Option<(f64, f64)> = None;

    for (f, (frame, mask)) in obs.frames.iter().zip(&obs.masks).enumerate() {
        let mut acc: Vec<Option<Acc>> = (0..256).map(|_| None).collect();
        let mut occ_cols: Option<(u32, u32, u32)> = None;
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let id = mask.ids[i];
                if id < FIRST_OBJECT_ID {
                    continue;
                }
                let (c32, r32) = (c as u32, r as u32);
                if is_occluder[id as usize] {
                    let e = occ_cols.get_or_insert((c32, c32, r32));
                    e.0 = e.0.min(c32);
                    e.1 = e.1.max(c32);
                    e.2 = e.2.max(r32);
                    continue;
                }
                let a = acc[id as usize].get_or_insert(Acc {
                    count: 0,
                    c0: c32,
                    c1: c32,
                    r0: r32,
                    r1: r32,
                    sc: 0.0,
                    sr: 0.0,
                    full: true,
                });
                a.count += 1;
                a.c0 = a.c0.min(c32);
                a.c1 = a.c1.max(c32);
                a.r0 = a.r0.min(r32);
                a.r1 = a.r1.max(r32);
                a.sc += c as f64;
                a.sr += r as f64;
                // The floor edge is the bottom of the image, so only the other borders cut.
                if c == 0 || c == w - 1 || r == 0 {
                    a.full = false;
                }
                let neighbours = [
                    (c > 0).then(|| i - 1),
                    (c + 1 < w).then(|| i + 1),
                    (r > 0).then(|| i - w),
                    (r + 1 < h).then(|| i + w),
                ];
                if neighbours.into_iter().flatten().any(|j| {
                    let o = mask.ids[j];
                    o >= FIRST_OBJECT_ID && o != id
                }) {
                    a.full = false;
                }
            }
        }
        if let Some((c0, c1, r1)) = occ_cols {
            // Only a wall resting on the floor hides things at floor level.
            if r1 as usize == h - 1 {
                let x0 = cam.x_min + c0 as f64 * cam.pixel_width();
                let x1 = cam.x_min + (c1 + 1) as f64 * cam.pixel_width();
                span = Some(span.map_or((x0, x1), |(a, b)| (a.min(x0), b.max(x1))));
            }
        }

        let mut rgb = frame.rgb.clone();
        let mut depth = frame.depth.clone();
        let mut actor_pixels = Vec::new();
        for (i, &id) in mask.ids.iter().enumerate() {
            if id >= FIRST_OBJECT_ID && !is_occluder[id as usize] {
                rgb[3 * i..3 * i + 3].copy_from_slice(&background.0);
                depth[i] = cam.far as f32;
                actor_pixels.push((i as u32, id, sq_err(&frame.rgb[3 * i..3 * i + 3], &background.0)));
            }
        }

        for (id, a) in acc.into_iter().enumerate() {
            let Some(a) = a else { continue };
            let id = id as u8;
            let t = match tracks.iter().position(|t| t.id == id) {
                Some(k) => k,
                None => {
                    let first = mask.ids.iter().position(|&x| x == id).unwrap();
                    let color = Rgb([frame.rgb[3 * first], frame.rgb[3 * first + 1], frame.rgb[3 * first + 2]]);
                    if !colors_seen.contains(&color) {
                        colors_seen.push(color);
                    }
                    tracks.push(Track { id, kind: ObjectKind::Ball, color, sightings: vec![None; n_frames] });
                    tracks.len() - 1
                }
            };
            let mc = a.sc / a.count as f64;
            let mr = a.sr / a.count as f64;
            let centroid = (
                cam.x_min + (mc + 0.5) * cam.pixel_width(),
                cam.y_max - (mr + 0.5) * cam.pixel_height(),
            );
            let bbox = PixelRect { c0: a.c0, c1: a.c1, r0: a.r0, r1: a.r1 };
            let pose = if (centroid.1 - R).abs() < cam.pixel_height() { (centroid.0, R) } else { centroid };
            tracks[t].sightings[f] = Some(Sighting {
                count: a.count,
                bbox,
                centroid,
                pose,
                slack: (cam.pixel_width() / 2.0, cam.pixel_height() / 2.0),
                full: a.full,
            });
        }
        statics.push(StaticLayer { rgb, depth, actor_pixels });
    }

    for t in &mut tracks {
        let best = t
            .sightings
            .iter()
            .flatten()
            .max_by_key(|s| (s.full, s.count))
            .map(|s| s.count as f64 / s.bbox.area() as f64);
        if best.is_some_and(|fill| fill > CUBE_FILL) {
            t.kind = ObjectKind::Cube;
        }
        for (f, s) in t.sightings.iter_mut().enumerate() {
            if let Some(s) = s.as_mut().filter(|s| s.full) {
                (s.pose, s.slack) = refine_pose(&cam, &obs.masks[f].ids, t.id, t.kind, s);
            }
        }
    }
    tracks.sort_by_key(|t| t.id);

    Observed {
        camera: cam,
        frames: n_frames,
        background,
        tracks,
        occluded_span: span,
        statics,
        colors_seen,
    }
}

fn canonical(kind: ObjectKind, x: f64, y: f64) -> Object {
    match kind {
        ObjectKind::Cube => Object::cube(0, x, y, Rgb([0, 0, 0]), false),
        _ => {
            let mut b = Object::ball(0, x, Rgb([0, 0, 0]));
            b.position.y = y;
            b
        }
    }
}

/// Whether the canonical shape at `(x, y)` covers exactly the sighted pixels.
fn reproduces(cam: &Camera, ids: &[u8], id: u8, kind: ObjectKind, s: &Sighting, x: f64, y: f64) -> bool {
    let w = cam.width as usize;
    let mut n = 0;
    let mut ok = true;
    for_each_covered(&canonical(kind, x, y), cam, |c, r| {
        n += 1;
        ok &= ids[r as usize * w + c as usize] == id;
    });
    ok && n == s.count
}

/// Midpoint and half-width of the interval around `start` on which `ok`
/// holds, found by a scan of `span` either side and bisection of both ends.
fn interval_centre(start: f64, span: f64, ok: impl Fn(f64) -> bool) -> Option<(f64, f64)> {
    const SAMPLES: i32 = 384;
    let h = span / SAMPLES as f64;
    let hit = (0..=SAMPLES)
        .flat_map(|k| [start + k as f64 * h, start - k as f64 * h])
        .find(|&v| ok(v))?;
    let edge = |dir: f64| {
        let (mut inside, mut outside) = (hit, hit + dir * h);
        while ok(outside) && (outside - hit).abs() < 2.0 * span {
            inside = outside;
            outside += dir * h;
        }
        for _ in 0..20 {
            let mid = 0.5 * (inside + outside);
            if ok(mid) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    let (lo, hi) = (edge(-1.0), edge(1.0));
    Some((0.5 * (lo + hi), 0.5 * (hi - lo)))
}

/// Pose that reproduces a full sighting exactly, centred in its slack.
fn refine_pose(cam: &Camera, ids: &[u8], id: u8, kind: ObjectKind, s: &Sighting) -> ((f64, f64), (f64, f64)) {
    let (mut x, mut y) = s.pose;
    let mut slack = s.slack;
    let on_floor = y == R;
    let fits = |x: f64, y: f64| reproduces(cam, ids, id, kind, s, x, y);
    for _ in 0..2 {
        if let Some((nx, sx)) = interval_centre(x, 1.5 * cam.pixel_width(), |v| fits(v, y)) {
            x = nx;
            slack.0 = sx;
        }
        if on_floor {
            break;
        }
        if let Some((ny, sy)) = interval_centre(y, 1.5 * cam.pixel_height(), |v| fits(x, v)) {
            y = ny;
            slack.1 = sy;
        }
    }
    ((x, y), slack)
}
