use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cad"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cad(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn moons(dir: &Path) {
    ok(dir, &["synth", "--shape", "two_moons", "--n", "120", "--seed", "3", "--output", "moons.csv"]);
}

#[test]
fn fit_detect_flags_planted_outliers() {
    let dir = tempfile::tempdir().unwrap();
    moons(dir.path());
    ok(dir.path(), &["fit", "--input", "moons.csv", "--label-col", "y", "--model", "m.json"]);
    ok(dir.path(), &["detect", "--model", "m.json", "--input", "moons.csv", "--label-col", "y", "--output", "d.csv"]);
    let det = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let rows: Vec<&str> = det.lines().collect();
    assert_eq!(rows[0], "index,score,label");
    assert_eq!(rows.len(), 121);
    // the last 3 rows are the planted outliers
    assert!(rows[118..].iter().all(|r| r.ends_with(",1")));
}

#[test]
fn landscape_and_path() {
    let dir = tempfile::tempdir().unwrap();
    moons(dir.path());
    ok(dir.path(), &["fit", "--input", "moons.csv", "--label-col", "y", "--standardize", "--model", "m.json"]);
    ok(
        dir.path(),
        &["landscape", "--model", "m.json", "--bounds", "-1.5,2.5,-1,1.5", "--res", "4,3", "--source", "normal", "--output", "f.csv"],
    );
    let field = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert_eq!(field.lines().count(), 13);
    assert!(field.starts_with("x,y,score\n-1.5,-1,"));

    let msg = ok(
        dir.path(),
        &["path", "--model", "m.json", "--start", "3,-2", "--step", "0.02", "--max-move", "0.05", "--max-iters", "2000", "--output", "p.csv"],
    );
    assert!(msg.contains("terminated by reached_normal"), "{msg}");
    let path = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(path.starts_with("iter,score,x1,x2\n0,"));
    assert!(path.lines().nth(1).unwrap().ends_with(",3,-2"));
}

#[test]
fn rank_and_select() {
    let dir = tempfile::tempdir().unwrap();
    moons(dir.path());
    ok(dir.path(), &["rank", "--input", "moons.csv", "--label-col", "y", "--output", "r.csv"]);
    let ranking = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 121);
    assert!(ranking.starts_with("rank,index,score\n1,"));

    let msg = ok(
        dir.path(),
        &[
            "select", "--input", "moons.csv", "--task", "classification", "--policy", "top:0.5", "--label-col", "y",
            "--k", "2", "--output", "s.csv", "--indices", "i.txt", "--report", "rep.json",
        ],
    );
    // 117 inliers keep 59, 3 outliers keep 2
    assert!(msg.contains("kept 61 of 120"), "{msg}");
    assert_eq!(fs::read_to_string(dir.path().join("i.txt")).unwrap().lines().count(), 61);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    assert_eq!(report["per_class"]["0"]["retained"], 59);
    assert_eq!(report["format_version"], 1);
    let subset = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(subset.starts_with("x1,x2,y\n"));
    assert_eq!(subset.lines().count(), 62);
}

#[test]
fn bench_report_is_versioned_and_timings_optional() {
    let dir = tempfile::tempdir().unwrap();
    moons(dir.path());
    ok(dir.path(), &["bench", "--input", "moons.csv", "--folds", "3", "--report", "b.json"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(report["format_version"], 1);
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);
    assert!(report.get("timings").is_none());
    ok(dir.path(), &["bench", "--input", "moons.csv", "--folds", "3", "--timings", "--report", "t.json"]);
    let timed: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(timed["timings"]["fit_seconds"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cad(dir.path(), &["fit", "--input", "missing.csv", "--model", "m.json"]).status.code(), Some(2));
    assert_eq!(cad(dir.path(), &["synth", "--shape", "spiral", "--output", "x.csv"]).status.code(), Some(2));
    assert_eq!(cad(dir.path(), &["fit", "--input", "a.csv", "--kernel", "rbf:gama=1", "--model", "m.json"]).status.code(), Some(2));

    // a single class has no AUC
    let rows: String = (0..30).map(|i| format!("{},{},0\n", i % 7, i / 7)).collect();
    fs::write(dir.path().join("flat.csv"), format!("a,b,y\n{rows}")).unwrap();
    let out = cad(dir.path(), &["bench", "--input", "flat.csv", "--folds", "2", "--k", "3", "--report", "b.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    moons(dir.path());
    ok(dir.path(), &["fit", "--input", "moons.csv", "--label-col", "y", "--kernel", "rbf", "--model", "rbf.json"]);
    let out = cad(dir.path(), &["path", "--model", "rbf.json", "--start", "0,0", "--output", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("linear kernel"));
}

#[test]
fn denoise_from_frame_directory() {
    use cad_core::dataset::write_pgm;
    use cad_core::synth::{gaussian_noise_at_mse, synthetic_frames};
    use rand::SeedableRng;

    let dir = tempfile::tempdir().unwrap();
    let frames_dir = dir.path().join("frames");
    fs::create_dir(&frames_dir).unwrap();
    let frames = synthetic_frames(40, 20, 28, 4).unwrap();
    for (i, f) in frames.points().iter().enumerate().skip(1) {
        write_pgm(frames_dir.join(format!("f{i:03}.pgm")), f, 20, 28).unwrap();
    }
    // 8-bit quantization of the held-out frame and its noisy copy
    let clean = &frames.points()[0];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let noisy = gaussian_noise_at_mse(clean, 625.0 / 65025.0, &mut rng).unwrap();
    write_pgm(dir.path().join("clean.pgm"), clean, 20, 28).unwrap();
    write_pgm(dir.path().join("noisy.pgm"), &noisy, 20, 28).unwrap();

    ok(
        dir.path(),
        &[
            "denoise", "--frames", "frames", "--noisy", "noisy.pgm", "--clean", "clean.pgm", "--max-iters", "50",
            "--dump-frames", "out", "--output", "trace.csv",
        ],
    );
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mse: Vec<f64> = trace.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(mse.last().unwrap() < &mse[0]);
    assert_eq!(fs::read_dir(dir.path().join("out")).unwrap().count(), mse.len());
}
