mod common;

use std::fs;

use common::*;
use gesture_kit::bvh::load_bvh;
use gesture_kit::pipeline::{self, load_prepared, metadata_path, read_id_list, DiffusionArgs};
use gesture_kit::wav::load_wav;

#[test]
fn end_to_end_output_matches_input_duration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(1);
    let run = run_pipeline(dir.path(), &cfg);

    let audio = load_wav(&inputs(&run.corpus, 0, "main").audio).unwrap();
    let clip = load_bvh(&run.bvh).unwrap();
    assert_eq!(clip.num_frames() as f64, audio.duration() * 30.0);
    assert!((clip.frame_rate() - 30.0).abs() < 1e-9);
    assert!(clip.values.iter().all(|v| v.is_finite()));

    let meta = fs::read_to_string(metadata_path(&run.bvh)).unwrap();
    assert!(meta.contains("seed = 5"), "{meta}");
    assert!(meta.contains("gamma = 1.0"), "{meta}");
    assert!(meta.contains("csmp_checkpoint_sha256"), "{meta}");

    let report = pipeline::stats_report(&[run.bvh.clone(), run.corpus.join("clip00/motion.bvh")], &cfg).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("file\tframes\tmean_speed"));
    assert!(lines[2].contains("\t240\t"));
}

#[test]
fn prep_writes_per_clip_archives() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let data = dir.path().join("data");
    pipeline::prep(&manifest, &data, &small_config(0)).unwrap();
    for name in ["index.tsv", "anomalies.tsv", "exclusions.txt", "config.toml"] {
        assert!(data.join(name).is_file(), "{name}");
    }
    let clips = load_prepared(&data, &[]).unwrap();
    assert_eq!(clips.len(), CLIPS);
    for c in &clips {
        assert_eq!(c.motion.num_frames(), 240);
        assert_eq!(c.main.rows(), 240);
        assert_eq!(c.interlocutor.rows(), 240);
        assert_eq!(c.main.cols(), 1536);
    }
}

#[test]
fn spiked_clip_is_listed_but_not_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let data = dir.path().join("data");
    let summary = pipeline::prep(&manifest, &data, &small_config(0)).unwrap();
    let spiked = format!("clip{SPIKE_CLIP:02}");
    assert_eq!(summary.excluded, vec![spiked.clone()]);
    assert_eq!(summary.prepared, CLIPS);
    let listed = read_id_list(&data.join("exclusions.txt")).unwrap();
    assert_eq!(listed, vec![spiked.clone()]);

    let kept = load_prepared(&data, &listed).unwrap();
    assert_eq!(kept.len(), CLIPS - 1);
    assert!(kept.iter().all(|c| c.id != spiked));

    let anomalies = fs::read_to_string(data.join("anomalies.tsv")).unwrap();
    assert!(anomalies.lines().any(|l| l.starts_with(&spiked)));
}

#[test]
fn missing_transcript_fails_that_clip_only() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    fs::remove_file(dir.path().join("corpus/clip01/main.tsv")).unwrap();
    let summary = pipeline::prep(&manifest, &dir.path().join("data"), &small_config(0)).unwrap();
    assert_eq!(summary.line(), format!("prepared {}/{CLIPS}", CLIPS - 1));
    assert_eq!(summary.failures.len(), 1);
    let (id, err) = &summary.failures[0];
    assert_eq!(id, "clip01");
    assert!(err.contains("main.tsv"), "{err}");
}

#[test]
fn fixed_seed_reproduces_every_artifact() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config(3);
    let ra = run_pipeline(a.path(), &cfg);
    let rb = run_pipeline(b.path(), &cfg);
    for (x, y) in [
        (&ra.csmp, &rb.csmp),
        (&ra.diffusion, &rb.diffusion),
        (&log_path(&ra.csmp), &log_path(&rb.csmp)),
        (&log_path(&ra.diffusion), &log_path(&rb.diffusion)),
        (&ra.bvh, &rb.bvh),
    ] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }

    let c = tempfile::tempdir().unwrap();
    let rc = run_pipeline(c.path(), &small_config(4));
    assert_ne!(fs::read(&ra.csmp).unwrap(), fs::read(&rc.csmp).unwrap());
}

#[test]
fn resumed_training_equals_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = small_config(2);
    let manifest = corpus(root);
    let data = root.join("data");
    pipeline::prep(&manifest, &data, &cfg).unwrap();

    let full = root.join("full.ckpt");
    let mut args = train_args(&data, &full);
    args.steps = Some(8);
    pipeline::train_csmp(&args, &cfg).unwrap();
    let half = root.join("half.ckpt");
    let mut args = train_args(&data, &half);
    args.steps = Some(4);
    pipeline::train_csmp(&args, &cfg).unwrap();
    let resumed = root.join("resumed.ckpt");
    let mut args = train_args(&data, &resumed);
    args.steps = Some(4);
    args.resume = Some(half.clone());
    assert_eq!(pipeline::train_csmp(&args, &cfg).unwrap(), 8);
    assert_eq!(fs::read(&full).unwrap(), fs::read(&resumed).unwrap());
    let joined = fs::read_to_string(log_path(&half)).unwrap() + &fs::read_to_string(log_path(&resumed)).unwrap();
    assert_eq!(joined, fs::read_to_string(log_path(&full)).unwrap());

    let diffusion = |out: &str, steps: u64, resume: Option<&str>| {
        let mut train = train_args(&data, &root.join(out));
        train.steps = Some(steps);
        train.resume = resume.map(|r| root.join(r));
        let args = DiffusionArgs {
            train,
            csmp: Some(full.clone()),
            guidance_dropout: None,
        };
        pipeline::train_diffusion(&args, &cfg).unwrap()
    };
    diffusion("d_full.ckpt", 8, None);
    diffusion("d_half.ckpt", 4, None);
    assert_eq!(diffusion("d_resumed.ckpt", 4, Some("d_half.ckpt")), 8);
    assert_eq!(
        fs::read(root.join("d_full.ckpt")).unwrap(),
        fs::read(root.join("d_resumed.ckpt")).unwrap()
    );
}

#[test]
fn guidance_scale_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(6);
    let run = run_pipeline(dir.path(), &cfg);
    let out = |name: &str, gamma: f64| {
        let path = dir.path().join(name);
        let meta = pipeline::synthesize(&synth_args(&run, 1, &path, Some(gamma), 9)).unwrap();
        assert_eq!(meta.gamma, gamma);
        fs::read(path).unwrap()
    };
    let g0 = out("g0.bvh", 0.0);
    let g1 = out("g1.bvh", 1.0);
    let g3 = out("g3.bvh", 3.0);
    assert_ne!(g0, g1);
    assert_ne!(g1, g3);
    assert_eq!(g1, out("g1_again.bvh", 1.0));
}

#[test]
fn diffusion_training_needs_a_csmp_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let data = dir.path().join("data");
    let cfg = small_config(0);
    pipeline::prep(&manifest, &data, &cfg).unwrap();
    let args = DiffusionArgs {
        train: train_args(&data, &dir.path().join("d.ckpt")),
        csmp: None,
        guidance_dropout: None,
    };
    let err = pipeline::train_diffusion(&args, &cfg).unwrap_err().to_string();
    assert!(err.contains("train-csmp"), "{err}");
}

#[test]
fn guidance_dropout_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path());
    let data = dir.path().join("data");
    let cfg = small_config(0);
    pipeline::prep(&manifest, &data, &cfg).unwrap();
    let csmp = dir.path().join("c.ckpt");
    let mut args = train_args(&data, &csmp);
    args.steps = Some(1);
    pipeline::train_csmp(&args, &cfg).unwrap();
    let out = dir.path().join("d.ckpt");
    let mut train = train_args(&data, &out);
    train.steps = Some(1);
    let args = DiffusionArgs {
        train,
        csmp: Some(csmp),
        guidance_dropout: Some(0.25),
    };
    pipeline::train_diffusion(&args, &cfg).unwrap();
    let ck = gesture_kit::ckptfile::load_checkpoint(&out).unwrap();
    assert_eq!(ck.get("guidance.p_drop").unwrap(), "0.25");
}
