use proptest::prelude::*;
use voe_core::dynamics::{apply_script, simulate, ScriptEdit, WorldState};
use voe_core::render::{rasterize, render_video, Backdrop, FLOOR_DEPTH};
use voe_core::world::{
    Camera, Object, Scene, BACKGROUND_ID, CANONICAL_HALF_EXTENT as R, FLOOR_ID, PALETTE,
};

fn backdrop() -> Backdrop {
    Backdrop { background: PALETTE[8], floor: PALETTE[9], floor_height: 0.0 }
}

fn object(id: u8) -> impl Strategy<Value = Object> {
    let c = PALETTE[id as usize % PALETTE.len()];
    prop_oneof![
        (-4.5..4.5f64, -0.5..6.5f64).prop_map(move |(x, y)| {
            let mut b = Object::ball(id, x, c);
            b.position.y = y;
            b
        }),
        (-4.5..4.5f64, -0.5..6.5f64, any::<bool>()).prop_map(move |(x, y, d)| Object::cube(id, x, y, c, d)),
        (-3.0..3.0f64, 0.5..3.0f64, 0.5..4.0f64).prop_map(move |(x, w, h)| Object::wall(id, x, w, h, c)),
        (-3.0..3.0f64, 1.0..3.0f64, 1.0..4.0f64, 0.2..0.9f64)
            .prop_map(move |(x, w, h, f)| Object::windowed_wall(id, x, w, h, f * w, c)),
    ]
}

fn state() -> impl Strategy<Value = WorldState> {
    (1usize..=8)
        .prop_flat_map(|n| {
            let objs: Vec<_> = (0..n as u8).map(|i| object(2 + i)).collect();
            (objs, any::<bool>(), prop::collection::vec(2u8..10, 0..3))
        })
        .prop_map(|(objects, raised, invisible)| {
            let mut s = WorldState::from_objects(0, objects);
            s.occluder_raised = raised;
            s.invisible = invisible;
            s
        })
}

/// Front-most drawn object at the pixel centre, found by brute force.
fn oracle(state: &WorldState, cam: &Camera, col: u32, row: u32) -> (u8, f32, [u8; 3]) {
    let (x, y) = cam.pixel_center(col, row);
    let bd = backdrop();
    let mut best = if y < bd.floor_height {
        (FLOOR_ID, FLOOR_DEPTH as f32, bd.floor.0)
    } else {
        (BACKGROUND_ID, cam.far as f32, bd.background.0)
    };
    for o in &state.objects {
        let hidden = !state.is_visible(o.id) || (o.kind.is_occluder() && state.occluder_raised);
        if hidden || !o.covers(x, y) {
            continue;
        }
        let z = o.front_depth() as f32;
        if z < best.1 {
            best = (o.id, z, o.color.0);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn masks_partition_and_agree_with_depth(s in state(), res in 16u32..48) {
        let cam = Camera::with_resolution(res, res);
        let (frame, mask) = rasterize(&s, &cam, &backdrop());
        prop_assert_eq!(mask.histogram().iter().sum::<usize>(), cam.pixel_count());
        prop_assert_eq!(frame.rgb.len(), 3 * cam.pixel_count());
        for row in 0..res {
            for col in 0..res {
                let i = (row * res + col) as usize;
                let (id, z, c) = oracle(&s, &cam, col, row);
                prop_assert_eq!(mask.ids[i], id, "pixel ({}, {})", col, row);
                prop_assert_eq!(frame.depth[i], z);
                prop_assert_eq!(frame.pixel(col, row), c);
                prop_assert!(frame.depth[i].is_finite() && cam.depth_in_range(frame.depth[i] as f64));
            }
        }
    }

    #[test]
    fn objects_behind_the_wall_do_not_change_rgb(x in -0.6..0.6f64, dx in -0.3..0.3f64, y in 0.3..1.2f64) {
        let cam = Camera::default();
        let wall = Object::wall(2, 0.0, 2.4, 2.0, PALETTE[3]);
        let at = |px: f64| {
            let mut b = Object::ball(3, px, PALETTE[0]);
            b.position.y = y;
            rasterize(&WorldState::from_objects(0, vec![wall.clone(), b]), &cam, &backdrop()).0.rgb
        };
        prop_assert_eq!(at(x), at(x + dx));
    }

    #[test]
    fn rendering_is_pure(s in state()) {
        let cam = Camera::with_resolution(32, 32);
        prop_assert_eq!(rasterize(&s, &cam, &backdrop()), rasterize(&s, &cam, &backdrop()));
    }
}

#[test]
fn fifteen_states_give_fifteen_frames_and_static_scenes_repeat() {
    let mut s = Scene::empty(Camera::default(), 15, PALETTE[8], PALETTE[9]);
    s.objects = vec![Object::cube(2, 1.0, R, PALETTE[0], false), Object::ball(3, -1.0, PALETTE[1])];
    let t = simulate(&s, 15, 10).unwrap();
    let v = render_video(&t, &s.camera);
    assert_eq!(v.len(), 15);
    assert!(v.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn invisible_range_removes_the_id_only_there() {
    let mut s = Scene::empty(Camera::default(), 15, PALETTE[8], PALETTE[9]);
    s.objects = vec![Object::ball(2, -3.0, PALETTE[0]).with_velocity(1.0, 0.0)];
    let t = simulate(&s, 15, 10).unwrap();
    let e = apply_script(&t, ScriptEdit::ForceInvisibleInRange { id: 2, frames: 5..10 }).unwrap();
    for (f, (_, m)) in render_video(&e, &s.camera).iter().enumerate() {
        assert_eq!(m.count(2) == 0, (5..10).contains(&f), "frame {f}");
    }
}
