use std::collections::BTreeMap;

use voe_core::dynamics::{EventKind, ScriptEdit};
use voe_core::generator::{
    generate_test_set, generate_train_set, label_is_sound, test_groups, test_pair, train_scene, GenConfig,
    LatentVideo, Role, Scenario, Setting, TestGroup, TrainGroup, Variant,
};
use voe_core::render::visible_pixels;
use voe_core::world::{validate_scene, ObjectKind};

fn config(pairs: usize) -> GenConfig {
    GenConfig { master_seed: 21, pairs_per_group: pairs, train_scenes_per_group: 3, ..GenConfig::default() }
}

fn group(scenario: Scenario, setting: Setting) -> TestGroup {
    TestGroup { scenario, setting }
}

fn split(pair: (LatentVideo, LatentVideo)) -> (LatentVideo, LatentVideo) {
    if pair.0.meta.plausible { pair } else { (pair.1, pair.0) }
}

fn solids(v: &LatentVideo, frame: usize) -> Vec<u8> {
    v.latent.states[frame].objects.iter().filter(|o| o.kind.is_solid()).map(|o| o.id).collect()
}

#[test]
fn fifty_pairs_make_eleven_hundred_videos() {
    let ds = generate_test_set(&config(50)).unwrap();
    assert_eq!(ds.videos.len(), 1100);
    let mut per_group: BTreeMap<String, usize> = BTreeMap::new();
    for v in &ds.videos {
        *per_group.entry(v.meta.group.clone()).or_default() += 1;
    }
    assert_eq!(per_group.len(), 11);
    assert!(per_group.values().all(|&n| n == 100));
    assert!(!per_group.contains_key("permanence-s3"));
}

#[test]
fn test_set_is_deterministic_and_isolatable() {
    let c = config(2);
    let a = generate_test_set(&c).unwrap();
    assert_eq!(a, generate_test_set(&c).unwrap());
    for g in test_groups() {
        for i in 0..2 {
            let (x, y) = test_pair(&c, g, i).unwrap();
            assert!(a.videos.contains(&x) && a.videos.contains(&y));
        }
    }
    let other = generate_test_set(&GenConfig { master_seed: 22, ..c }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn pairs_are_labelled_by_setting() {
    for v in generate_test_set(&config(3)).unwrap().videos.chunks(2) {
        let (a, b) = (&v[0], &v[1]);
        assert_eq!((a.meta.role, b.meta.role), (Some(Role::A), Some(Role::B)));
        assert_eq!(a.meta.pair, b.meta.pair);
        let setting = a.meta.setting.unwrap();
        if setting == Setting::Hypothetical {
            assert!(a.meta.plausible && b.meta.plausible, "{}", a.meta.video_id);
        } else {
            assert_ne!(a.meta.plausible, b.meta.plausible, "{}", a.meta.video_id);
        }
        for x in [a, b] {
            assert!(validate_scene(&x.latent.scene).is_empty(), "{}", x.meta.video_id);
            assert_eq!(x.latent.states.len(), 15);
            assert!(label_is_sound(x), "{}", x.meta.video_id);
        }
    }
}

#[test]
fn actors_stay_in_view() {
    for v in generate_test_set(&config(3)).unwrap().videos {
        assert_eq!(v.latent.events_of(EventKind::OutOfBounds).count(), 0, "{}", v.meta.video_id);
    }
}

#[test]
fn collision_predictive_violation_suppresses_the_contact() {
    for i in 0..5 {
        let (good, bad) = split(test_pair(&config(1), group(Scenario::Collision, Setting::Predictive), i).unwrap());
        assert!(matches!(bad.latent.script_applied, Some(ScriptEdit::SuppressCollision { .. })));
        assert!(good.latent.events_of(EventKind::Contact).next().is_some());
        assert!(bad.latent.events_of(EventKind::Contact).next().is_none());
    }
}

#[test]
fn blocking_hides_a_fixed_cube() {
    for i in 0..5 {
        let (good, _) = split(test_pair(&config(1), group(Scenario::Blocking, Setting::Explicative), i).unwrap());
        let cube = good.latent.scene.objects.iter().find(|o| o.kind == ObjectKind::Cube).unwrap();
        assert!(!cube.dynamic);
        assert_eq!(visible_pixels(&good.latent.states[5], cube.id, &good.latent.scene.camera), 0);
    }
}

#[test]
fn permanence_hypothetical_hides_a_cube_from_the_start() {
    for i in 0..5 {
        let (a, b) = test_pair(&config(1), group(Scenario::Permanence, Setting::Hypothetical), i).unwrap();
        let cam = a.latent.scene.camera;
        let seen_at_start =
            |v: &LatentVideo| solids(v, 0).into_iter().filter(|&id| visible_pixels(&v.latent.states[0], id, &cam) > 0).count();
        let mut starts = [seen_at_start(&a), seen_at_start(&b)];
        starts.sort();
        assert_eq!(starts, [2, 3]);
        // The wall stays down, so the difference lives only in the latent state.
        let last = a.latent.states.len() - 1;
        for v in [&a, &b] {
            assert_eq!(solids(v, last).len(), 3, "{}", v.meta.video_id);
        }
    }
}

#[test]
fn permanence_predictive_removes_one_cube() {
    for i in 0..5 {
        let (good, bad) = split(test_pair(&config(1), group(Scenario::Permanence, Setting::Predictive), i).unwrap());
        let last = good.latent.states.len() - 1;
        assert_eq!(solids(&good, last).len(), 3);
        assert_eq!(solids(&bad, last).len(), 2);
        assert!(matches!(bad.latent.script_applied, Some(ScriptEdit::RemoveObjectAtFrame { .. })));
    }
}

#[test]
fn continuity_twins_look_identical() {
    for i in 0..5 {
        let (a, b) = test_pair(&config(1), group(Scenario::Continuity, Setting::Hypothetical), i).unwrap();
        let two = if solids(&a, 0).len() == 2 { a } else { b };
        let balls: Vec<_> = two.latent.scene.objects.iter().filter(|o| o.kind == ObjectKind::Ball).collect();
        assert_eq!(balls.len(), 2);
        assert_eq!(balls[0].color, balls[1].color);
        assert_eq!(balls[0].extent, balls[1].extent);
    }
}

#[test]
fn training_groups_follow_their_recipes() {
    let c = config(1);
    let ds = generate_train_set(&c).unwrap();
    assert_eq!(ds.videos.len(), 5 * 3 * 2);
    assert!(ds.videos.iter().all(|v| v.meta.plausible && v.latent.script_applied.is_none()));

    for i in 0..3 {
        let [w, _] = train_scene(&c, TrainGroup::Control, i).unwrap();
        assert!(w.latent.events_of(EventKind::Contact).next().is_none());
        assert_eq!(solids(&w, 0).len(), 1);

        let [w, n] = train_scene(&c, TrainGroup::Collision, i).unwrap();
        assert_eq!(w.meta.variant, Some(Variant::WithWall));
        assert_eq!(n.meta.variant, Some(Variant::WithoutWall));
        let cam = w.latent.scene.camera;
        let hidden = solids(&w, 0).into_iter().filter(|&id| visible_pixels(&w.latent.states[5], id, &cam) == 0).count();
        assert!(hidden >= 1, "{}", w.meta.video_id);
        assert!(n.latent.scene.occluder().is_none());
        assert_eq!(w.latent.scene.wall_script.mode, voe_core::world::WallMode::LiftedAtStartAndEnd);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        GenConfig { pairs_per_group: 0, ..GenConfig::default() },
        GenConfig { frames: 14, ..GenConfig::default() },
        GenConfig { frames: 21, ..GenConfig::default() },
        GenConfig { resolution: 47, ..GenConfig::default() },
    ] {
        assert!(generate_test_set(&bad).is_err());
    }
}

#[test]
fn extreme_accepted_configs_generate() {
    for (resolution, frames) in [(48, 15), (48, 20), (1024, 15)] {
        let c = GenConfig { resolution, frames, ..config(2) };
        let ds = generate_test_set(&c).unwrap();
        assert!(ds.videos.iter().all(|v| v.latent.states.len() == frames && label_is_sound(v)));
    }
}
