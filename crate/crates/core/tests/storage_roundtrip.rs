use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use voe_core::generator::{generate_test_set, test_groups, test_pair, GenConfig, Scenario, Setting, TestGroup};
use voe_core::storage::{
    dequantize_depth, ingest_scores, quantize_depth, read_manifest, read_video, write_dataset, write_scores,
    write_video, DepthBits, ScoreRecord, WriteOptions, MANIFEST_FILE,
};
use voe_core::world::Camera;
use voe_core::Error;

fn config(pairs: usize) -> GenConfig {
    GenConfig { master_seed: 3, pairs_per_group: pairs, ..GenConfig::default() }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn scores_for(root: &Path, f: impl Fn(usize) -> f64) -> Vec<ScoreRecord> {
    read_manifest(root)
        .unwrap()
        .videos
        .iter()
        .enumerate()
        .map(|(i, v)| ScoreRecord { video_id: v.video_id.clone(), s: f(i), s_img: None, s_dyn: None, agent: "test".into() })
        .collect()
}

#[test]
fn planes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_test_set(&config(1)).unwrap();
    write_dataset(&ds, dir.path(), WriteOptions::default()).unwrap();
    let cam = Camera::default();
    let half_lsb = (cam.far - cam.near) / 65535.0 / 2.0;
    for v in &ds.videos {
        let rec = v.render();
        let obs = read_video(dir.path(), &v.meta.video_id).unwrap();
        assert_eq!(obs.frames.len(), rec.frames.len());
        for (a, b) in rec.frames.iter().zip(&obs.frames) {
            assert_eq!(a.rgb, b.rgb);
            for (&d0, &d1) in a.depth.iter().zip(&b.depth) {
                assert!((d0 as f64 - d1 as f64).abs() <= half_lsb, "{d0} vs {d1}");
            }
        }
        assert_eq!(rec.masks, obs.masks);
        assert_eq!(obs.camera, rec.latent.scene.camera);
    }
}

#[test]
fn eight_bit_depth_export_is_within_its_half_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = test_pair(&config(1), test_groups()[0], 0).unwrap();
    let rec = a.render();
    write_video(&rec, dir.path(), WriteOptions { depth_bits: DepthBits::Eight }).unwrap();
    let obs = voe_core::storage::read_video_files(&dir.path().join(&rec.meta.video_id)).unwrap();
    let half_lsb = 10.0 / 255.0 / 2.0;
    for (x, y) in rec.frames.iter().zip(&obs.frames) {
        assert_eq!(x.rgb, y.rgb);
        assert!(x.depth.iter().zip(&y.depth).all(|(&p, &q)| (p as f64 - q as f64).abs() <= half_lsb));
    }
}

#[test]
fn fifteen_frames_make_forty_five_images_and_one_meta() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = test_pair(&config(1), test_groups()[3], 0).unwrap();
    write_video(&a.render(), dir.path(), WriteOptions::default()).unwrap();
    let files: Vec<String> = fs::read_dir(dir.path().join(&a.meta.video_id))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files.iter().filter(|f| f.ends_with(".png")).count(), 45);
    assert_eq!(files.iter().filter(|f| f.ends_with(".json")).count(), 1);
    assert!(files.contains(&"rgb_007.png".to_string()));
    // Ground truth sits outside the video directory.
    assert!(dir.path().join("latent").join(format!("{}.json", a.meta.video_id)).exists());
}

#[test]
fn regeneration_from_the_manifest_seed_is_bitwise_identical() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(&generate_test_set(&config(2)).unwrap(), d1.path(), WriteOptions::default()).unwrap();
    let m = read_manifest(d1.path()).unwrap();
    write_dataset(&generate_test_set(&m.config).unwrap(), d2.path(), WriteOptions::default()).unwrap();
    assert_eq!(tree(d1.path()), tree(d2.path()));
}

#[test]
fn missing_and_corrupt_files_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = test_pair(&config(1), test_groups()[0], 0).unwrap();
    write_dataset(
        &voe_core::generator::Dataset { kind: voe_core::generator::DatasetKind::Test, config: config(1), videos: vec![a.clone()] },
        dir.path(),
        WriteOptions::default(),
    )
    .unwrap();
    let id = &a.meta.video_id;
    let mask = dir.path().join(id).join("mask_004.png");
    fs::remove_file(&mask).unwrap();
    let e = read_video(dir.path(), id).unwrap_err();
    assert!(e.to_string().contains("mask_004.png"), "{e}");

    fs::write(&mask, b"not a png").unwrap();
    let e = read_video(dir.path(), id).unwrap_err();
    assert!(matches!(e, Error::Format { .. }) && e.to_string().contains("mask_004.png"), "{e}");
}

#[test]
fn tampered_manifest_id_fails_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = test_pair(&config(1), test_groups()[0], 0).unwrap();
    let ds = voe_core::generator::Dataset { kind: voe_core::generator::DatasetKind::Test, config: config(1), videos: vec![a.clone()] };
    write_dataset(&ds, dir.path(), WriteOptions::default()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap().replace(&a.meta.video_id, "renamed-video");
    fs::write(&path, text).unwrap();
    assert!(matches!(read_video(dir.path(), &a.meta.video_id), Err(Error::UnknownVideo(_))));
    let e = read_video(dir.path(), "renamed-video").unwrap_err();
    assert!(e.to_string().contains("renamed-video"), "{e}");
}

#[test]
fn score_ingestion_contract() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&generate_test_set(&config(1)).unwrap(), dir.path(), WriteOptions::default()).unwrap();
    let root = dir.path();
    let file = root.join("scores.jsonl");
    let good = scores_for(root, |i| i as f64 * 0.01);

    write_scores(&file, &good).unwrap();
    let scored = ingest_scores(&file, root).unwrap();
    assert_eq!(scored.len(), 22);
    let g = TestGroup { scenario: Scenario::Permanence, setting: Setting::Hypothetical };
    assert!(scored.iter().filter(|v| v.group() == g).all(|v| v.plausible));

    let mut missing = good.clone();
    let gone = missing.remove(5);
    write_scores(&file, &missing).unwrap();
    let e = ingest_scores(&file, root).unwrap_err();
    assert!(e.to_string().contains(&gone.video_id), "{e}");

    let mut neg = good.clone();
    neg[6].s = -1.0;
    write_scores(&file, &neg).unwrap();
    assert_eq!(ingest_scores(&file, root).unwrap_err().to_string(), "line 7: negative score");

    let mut dup = good.clone();
    dup[9] = dup[2].clone();
    write_scores(&file, &dup).unwrap();
    let e = ingest_scores(&file, root).unwrap_err().to_string();
    assert!(e.starts_with("line 10: duplicate video_id") && e.contains("line 3"), "{e}");

    let mut lines: Vec<String> = good.iter().map(voe_core::storage::format_score_line).collect();
    lines[3] = lines[3].replace("\"s\":0.03", "\"s\":\"NaN\"");
    fs::write(&file, lines.join("\n")).unwrap();
    assert_eq!(ingest_scores(&file, root).unwrap_err().to_string(), "line 4: non-finite score");

    let mut unknown = good.clone();
    unknown[0].video_id = "nope".into();
    write_scores(&file, &unknown).unwrap();
    assert_eq!(ingest_scores(&file, root).unwrap_err().to_string(), "line 1: unknown video id nope");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn depth_quantization_is_within_half_lsb(d in 0.0..=10.0f64) {
        let cam = Camera::default();
        for (bits, max) in [(DepthBits::Sixteen, 65535.0), (DepthBits::Eight, 255.0)] {
            let back = dequantize_depth(quantize_depth(d, &cam, bits), &cam, bits);
            // A few ulps of slack for the float arithmetic itself.
            prop_assert!((back - d).abs() <= 10.0 / max / 2.0 + 1e-12);
        }
    }

    #[test]
    fn score_lines_round_trip(s in prop::collection::vec(0.0..1e6f64, 1..20)) {
        let recs: Vec<ScoreRecord> = s.iter().enumerate()
            .map(|(i, &s)| ScoreRecord { video_id: format!("v{i}"), s, s_img: Some(s / 3.0), s_dyn: None, agent: "a".into() })
            .collect();
        let text: String = recs.iter().map(|r| voe_core::storage::format_score_line(r) + "\n").collect();
        let back = voe_core::storage::parse_scores(text.as_bytes()).unwrap();
        let back: Vec<ScoreRecord> = back.into_iter().map(|(_, r)| r).collect();
        prop_assert_eq!(back, recs);
    }
}

#[test]
fn reasoner_scores_survive_the_score_file() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ds = generate_test_set(&GenConfig { master_seed: 5, pairs_per_group: 1, ..GenConfig::default() }).unwrap();
    write_dataset(&ds, root, WriteOptions::default()).unwrap();
    let recs: Vec<ScoreRecord> = ds
        .videos
        .iter()
        .filter(|v| v.meta.group.starts_with("collision"))
        .map(|v| {
            let s = voe_core::reasoner::Agent::Predictive.score(&v.render().into_observation());
            ScoreRecord { video_id: v.meta.video_id.clone(), s: s.s, s_img: Some(s.s_img), s_dyn: Some(s.s_dyn), agent: "predictive".into() }
        })
        .collect();
    let file = root.join("s.jsonl");
    write_scores(&file, &recs).unwrap();
    let back = voe_core::storage::read_scores(&file).unwrap();
    let pairs: Vec<(String, f64)> = back.into_iter().map(|(_, r)| (r.video_id, r.s)).collect();
    let want: Vec<(String, f64)> = recs.into_iter().map(|r| (r.video_id, r.s)).collect();
    assert_eq!(pairs, want);
}
