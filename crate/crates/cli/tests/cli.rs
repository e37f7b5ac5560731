use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scenecut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenecut"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn scenecut")
}

fn ok(args: &[&str]) -> String {
    let out = scenecut(args);
    assert!(
        out.status.success(),
        "scenecut {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for d in [&a, &b] {
        ok(&["synth", "--seed", "7", "--count", "3", "--out", p(d)]);
    }
    ok(&["synth", "--seed", "8", "--count", "3", "--out", p(&c)]);
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(ca.len(), 4);
    assert_eq!(ca, cb);
    assert_ne!(ca, dir_contents(&c));
}

#[test]
fn evaluate_ground_truth_as_prediction_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let pred = tmp.path().join("pred");
    let out = tmp.path().join("eval");
    ok(&["synth", "--seed", "3", "--count", "2", "--out", p(&corpus)]);
    fs::create_dir_all(&pred).unwrap();
    for m in scenecut::data::load_corpus_dir(&corpus).unwrap() {
        let bits = m.gt_bits().unwrap();
        let seg = scenecut::pipeline::Segmentation {
            movie_id: m.movie_id.clone(),
            scores: bits.iter().map(|&b| b as f64).collect(),
            bits,
            boundary_times: m.boundary_times(),
            grouping: None,
        };
        scenecut::pipeline::write_segmentation(&pred, &seg).unwrap();
    }
    let stdout = ok(&["evaluate", "--corpus", p(&corpus), "--pred", p(&pred), "--out", p(&out)]);
    assert!(stdout.contains("AP 1.0000  Miou 1.0000  Recall 1.0000  Recall@3s 1.0000"), "{stdout}");
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("mean,1.0,1.0,1.0,1.0"), "{csv}");
}

#[test]
fn train_segment_and_dump_on_a_tiny_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let model = tmp.path().join("model");
    let seg = tmp.path().join("seg");
    let coarse = tmp.path().join("coarse");
    let corr = tmp.path().join("corr");
    let small = [
        "--set", "synth.n_scenes_max=5", "--set", "synth.shots_per_scene_max=6",
        "--set", "model.e_m=4", "--set", "model.hidden=4", "--set", "train.epochs=2",
    ];
    let with = |args: &[&str]| -> Vec<String> { args.iter().chain(small.iter()).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    run(with(&["synth", "--seed", "5", "--count", "2", "--out", p(&corpus)]));
    run(with(&["train", "--corpus", p(&corpus), "--out", p(&model), "--jobs", "1"]));
    let ckpt = model.join("model.ckpt");
    assert!(ckpt.exists());
    let loss = fs::read_to_string(model.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,mean_loss,step_size"));
    assert_eq!(loss.lines().count(), 3);

    run(with(&["segment", "--corpus", p(&corpus), "--checkpoint", p(&ckpt), "--out", p(&seg)]));
    run(with(&[
        "segment", "--coarse-only", "--tau", "0.0", "--corpus", p(&corpus), "--checkpoint", p(&ckpt), "--out",
        p(&coarse),
    ]));
    for m in scenecut::data::load_corpus_dir(&corpus).unwrap() {
        let rows = fs::read_to_string(seg.join(format!("{}.boundaries.csv", m.movie_id))).unwrap();
        for line in rows.lines().skip(1) {
            let b: usize = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!((1..m.n_shots()).contains(&b));
        }
        assert!(seg.join(format!("{}.trace.csv", m.movie_id)).exists());
    }
    let resolved = fs::read_to_string(coarse.join("config.toml")).unwrap();
    assert!(resolved.contains("coarse_only = true"), "{resolved}");

    run(with(&["dump-corr", "--corpus", p(&corpus), "--checkpoint", p(&ckpt), "--out", p(&corr)]));
    assert!(dir_contents(&corr).iter().any(|(n, _)| n.ends_with(".corr.0.csv")));
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = scenecut(&["synth", "--out", p(tmp.path()), "--set", "synth.bogus=1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("bogus"), "{err}");

    let out = scenecut(&["segment", "--corpus", p(&tmp.path().join("missing"))]);
    assert!(!out.status.success());
    assert!(!scenecut(&["frobnicate"]).status.success());
}
