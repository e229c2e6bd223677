use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn memcarve(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memcarve"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = memcarve(args, cwd);
    assert!(
        out.status.success(),
        "memcarve {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Two stand-in scenes, shrunk to 128x96 when embedded.
fn small_dump(dir: &Path, extra: &[&str]) -> PathBuf {
    ok(&["standin", "-o", "imgs", "--count", "2", "--seed", "4"], dir);
    let mut args = vec!["synth", "-o", "d.bin", "imgs/scene00.ppm", "imgs/scene01.ppm", "--scale", "0.125"];
    args.extend_from_slice(extra);
    ok(&args, dir);
    dir.join("d.bin")
}

#[test]
fn blank_dump_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ff.bin"), vec![0xff; 64 * 4096]).unwrap();
    ok(&["carve", "ff.bin", "-o", "out"], dir.path());
    let m = manifest(&dir.path().join("out"));
    assert_eq!(m["tiles"].as_array().unwrap().len(), 0);
    assert_eq!(std::fs::read_dir(dir.path().join("out")).unwrap().count(), 1);
}

#[test]
fn synth_then_carve_recovers_layouts() {
    let dir = tempfile::tempdir().unwrap();
    small_dump(dir.path(), &["--seed", "9", "--pad-fill", "zero"]);
    let truth: Value = serde_json::from_slice(&std::fs::read(dir.path().join("d.bin.json")).unwrap()).unwrap();
    ok(&["carve", "d.bin", "-o", "out"], dir.path());
    let tiles = manifest(&dir.path().join("out"))["tiles"].as_array().unwrap().clone();
    assert_eq!(tiles.len(), 2);
    for t in &tiles {
        assert_eq!(t["verdict"], "Recovered");
        assert_eq!((t["m"].as_u64(), t["n"].as_u64()), (Some(128), Some(96)), "{t}");
        let file = t["file"].as_str().unwrap();
        let bytes = std::fs::read(dir.path().join("out").join(file)).unwrap();
        assert!(bytes.starts_with(b"P6\n128 96\n255\n"));
    }
    let placed = truth.to_string();
    assert!(placed.contains("\"m\":128"), "ground truth records the embedded width");
}

#[test]
fn huge_theta0_rejects_everything() {
    let dir = tempfile::tempdir().unwrap();
    small_dump(dir.path(), &[]);
    ok(&["carve", "d.bin", "-o", "out", "--theta0", "1000"], dir.path());
    let m = manifest(&dir.path().join("out"));
    let tiles = m["tiles"].as_array().unwrap();
    assert!(!tiles.is_empty());
    for t in tiles {
        assert_eq!(t["verdict"], "NotEnoughLength", "{t}");
        assert!(t["file"].is_null());
    }
    assert_eq!(m["config"]["theta0"], 1000.0);
}

#[test]
fn fixed_seed_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "17", "--noise", "10", "--pad-fill", "random", "--junk", "2"];
    let da = std::fs::read(small_dump(a.path(), &args)).unwrap();
    let db = std::fs::read(small_dump(b.path(), &args)).unwrap();
    assert!(da == db, "dumps differ");
    let ja = std::fs::read(a.path().join("d.bin.json")).unwrap();
    let jb = std::fs::read(b.path().join("d.bin.json")).unwrap();
    assert!(ja == jb, "ground truth differs");
}

#[test]
fn too_small_dump_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    // 64x48 = 3072 words, more than one 4096-byte dump can hold.
    let mut ppm = b"P6\n64 48\n255\n".to_vec();
    ppm.extend((0..64 * 48 * 3).map(|i| (i % 251) as u8));
    std::fs::write(dir.path().join("small.ppm"), ppm).unwrap();
    let out = memcarve(&["synth", "-o", "s.bin", "small.ppm", "--size", "4096"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("s.bin").exists());
}

#[test]
fn eval_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let table = ok(&["eval", "--standin", "2", "--scenario", "scale:0.125", "--scenario", "noise:5,scale:0.125"], dir.path());
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("scenario"), "{table}");
    assert!(lines[0].contains("rate"));
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[1].starts_with("scale:0.125") && lines[1].ends_with('%'));

    let json = ok(&["eval", "--standin", "2", "--scenario", "scale:0.125", "--json"], dir.path());
    let v: Value = serde_json::from_str(&json).unwrap();
    let s = &v["scenarios"][0];
    assert_eq!(s["scenario"], "scale:0.125");
    assert_eq!(s["total"], 2);
    let rate = s["rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(s["images"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(memcarve(&["carve", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(memcarve(&["eval", "--standin", "2"], dir.path()).status.code(), Some(2));
    assert_eq!(memcarve(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(&["carve", "--help"], dir.path());
    for flag in [
        "--out", "--keep-flagged", "--output", "--block-size", "--th", "--theta0", "--theta1", "--theta2",
        "--theta3", "--min-tile-pixels", "--no-refine",
    ] {
        assert!(help.contains(flag), "carve help lacks {flag}");
    }
    let help = ok(&["synth", "--help"], dir.path());
    for flag in [
        "--size", "--seed", "--pad-fill", "--leading", "--trailing", "--noise", "--brightness", "--contrast",
        "--scale", "--junk", "--format",
    ] {
        assert!(help.contains(flag), "synth help lacks {flag}");
    }
    let help = ok(&["eval", "--help"], dir.path());
    for flag in ["--standin", "--scenario", "--json", "--pad-fill", "--no-refine"] {
        assert!(help.contains(flag), "eval help lacks {flag}");
    }
}

#[test]
fn missing_dump_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = memcarve(&["carve", "nope.bin", "-o", "out"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.bin"));
}
