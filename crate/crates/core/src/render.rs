//! Flat-shaded orthographic rasterizer producing RGB, metric depth and id masks.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, WorldState};
use crate::world::{Camera, Object, PixelRect, Rgb, Scene, BACKGROUND_ID, FLOOR_ID};

/// Depth written for floor pixels.
pub const FLOOR_DEPTH: f64 = 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backdrop {
    pub background: Rgb,
    pub floor: Rgb,
    pub floor_height: f64,
}

impl Backdrop {
    pub fn of(scene: &Scene) -> Self {
        Backdrop { background: scene.background, floor: scene.floor_color, floor_height: scene.floor_height }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    /// Row-major, three bytes per pixel.
    pub rgb: Vec<u8>,
    /// World units along the viewing axis.
    pub depth: Vec<f32>,
}

impl Frame {
    pub fn pixel(&self, col: u32, row: u32) -> [u8; 3] {
        let i = 3 * (row as usize * self.width as usize + col as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub width: u32,
    pub height: u32,
    /// Row-major id of the front-most surface at each pixel.
    pub ids: Vec<u8>,
}

impl MaskSet {
    pub fn count(&self, id: u8) -> usize {
        self.ids.iter().filter(|&&i| i == id).count()
    }

    pub fn histogram(&self) -> [usize; 256] {
        let mut h = [0usize; 256];
        for &i in &self.ids {
            h[i as usize] += 1;
        }
        h
    }
}

/// Calls `f(col, row)` for every pixel whose centre lies inside `obj`.
pub fn for_each_covered(obj: &Object, camera: &Camera, mut f: impl FnMut(u32, u32)) {
    let Some(r) = bbox(obj, camera) else { return };
    for row in r.r0..=r.r1 {
        for col in r.c0..=r.c1 {
            let (x, y) = camera.pixel_center(col, row);
            if obj.covers(x, y) {
                f(col, row);
            }
        }
    }
}

/// Pixel rectangle that can contain the object's silhouette.
pub fn bbox(obj: &Object, camera: &Camera) -> Option<PixelRect> {
    camera.pixel_span(obj.left(), obj.right(), obj.bottom(), obj.top())
}

/// Pixels the object would cover on an empty canvas.
pub fn footprint(obj: &Object, camera: &Camera) -> usize {
    let mut n = 0;
    for_each_covered(obj, camera, |_, _| n += 1);
    n
}

fn drawn(state: &WorldState, o: &Object) -> bool {
    state.is_visible(o.id) && !(o.kind.is_occluder() && state.occluder_raised)
}

pub fn rasterize(state: &WorldState, camera: &Camera, backdrop: &Backdrop) -> (Frame, MaskSet) {
    let (w, h) = (camera.width, camera.height);
    let n = camera.pixel_count();
    let mut rgb = Vec::with_capacity(3 * n);
    let mut depth = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for row in 0..h {
        let (_, y) = camera.pixel_center(0, row);
        let floor = y < backdrop.floor_height;
        let (c, d, id) = if floor {
            (backdrop.floor, FLOOR_DEPTH as f32, FLOOR_ID)
        } else {
            (backdrop.background, camera.far as f32, BACKGROUND_ID)
        };
        for _ in 0..w {
            rgb.extend_from_slice(&c.0);
            depth.push(d);
            ids.push(id);
        }
    }
    for o in state.objects.iter().filter(|o| drawn(state, o)) {
        let z = o.front_depth() as f32;
        for_each_covered(o, camera, |col, row| {
            let i = row as usize * w as usize + col as usize;
            if z < depth[i] {
                depth[i] = z;
                ids[i] = o.id;
                rgb[3 * i..3 * i + 3].copy_from_slice(&o.color.0);
            }
        });
    }
    (Frame { width: w, height: h, rgb, depth }, MaskSet { width: w, height: h, ids })
}

pub fn render_video(traj: &Trajectory, camera: &Camera) -> Vec<(Frame, MaskSet)> {
    let backdrop = Backdrop::of(&traj.scene);
    traj.states.iter().map(|s| rasterize(s, camera, &backdrop)).collect()
}

/// Pixels of object `id` left visible after depth testing against everything
/// else drawn in `state`. Cheaper than a full rasterization.
pub fn visible_pixels(state: &WorldState, id: u8, camera: &Camera) -> usize {
    let Some(obj) = state.object(id).filter(|o| drawn(state, o)) else { return 0 };
    let z = obj.front_depth();
    let blockers: Vec<&Object> = state
        .objects
        .iter()
        .filter(|o| o.id != id && drawn(state, o))
        .filter(|o| o.front_depth() < z || (o.front_depth() == z && o.id < id))
        .collect();
    let mut n = 0;
    for_each_covered(obj, camera, |col, row| {
        let (x, y) = camera.pixel_center(col, row);
        if !blockers.iter().any(|b| b.covers(x, y)) {
            n += 1;
        }
    });
    n
}
