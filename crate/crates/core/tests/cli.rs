use std::path::Path;
use std::process::Command;

use xsensor::raster::{read, write, Raster};

fn xsensor(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_xsensor"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_of_identical_maps_scores_100() {
    let dir = tempfile::tempdir().unwrap();
    let map = Raster::from_u8(4, 4, 1, (0..16).map(|i| (i % 8) as u8).collect()).unwrap();
    let (a, b) = (dir.path().join("a.mbt"), dir.path().join("b.mbt"));
    write(&map, &a).unwrap();
    write(&map, &b).unwrap();
    let report = dir.path().join("r.json");
    let (code, _) = xsensor(&["eval", "--ref", s(&a), "--pred", s(&b), "--classes", "8", "--out", s(&report)]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["adapted"]["miou"], 100.0);
    assert_eq!(v["adapted"]["acc"], 100.0);
}

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(xsensor(&["frobnicate"]).0, 1);
    assert_eq!(xsensor(&[]).0, 1);
    assert_eq!(xsensor(&["run"]).0, 1);
}

#[test]
fn missing_config_path_exits_with_1_and_corrupt_input_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"version": 1, "paths": {"source_image": "a.mbt", "source_labels": "b.mbt",
            "target_image": "c.mbt", "target_labels": "d.mbt", "out_dir": "out"}}"#,
    )
    .unwrap();
    assert_eq!(xsensor(&["run", "--config", s(&cfg)]).0, 1);

    let junk = dir.path().join("junk.mbt");
    std::fs::write(&junk, b"not a raster").unwrap();
    let out = dir.path().join("o.mbt");
    assert_eq!(xsensor(&["shift", "--input", s(&junk), "--offsets", "1", "--out", s(&out)]).0, 2);
}

#[test]
fn shift_subtracts_the_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let r = Raster::from_u16(2, 1, 6, (0..12).map(|i| 4990 + 10 * i as u16).collect()).unwrap();
    let (a, b) = (dir.path().join("a.mbt"), dir.path().join("b.mbt"));
    write(&r, &a).unwrap();
    let (code, _) = xsensor(&["shift", "--input", s(&a), "--offsets", "5000,5000,5000,5000,5000,5000", "--out", s(&b)]);
    assert_eq!(code, 0);
    let out = read(&b).unwrap();
    assert_eq!(&out.as_u16().unwrap()[..3], &[0, 0, 10]);
}

#[test]
fn ingest_recode_render_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    for b in 0..6 {
        write(&Raster::from_u16(2, 2, 1, vec![100 * b as u16; 4]).unwrap(), &p(&format!("b{b}.mbt"))).unwrap();
    }
    write(&Raster::from_u8(2, 2, 1, vec![0, 1, 0, 0]).unwrap(), &p("cloud.mbt")).unwrap();
    let bands: Vec<String> = (0..6).map(|b| s(&p(&format!("b{b}.mbt"))).to_string()).collect();
    let (cloud, stack_path) = (p("cloud.mbt"), p("stack.mbt"));
    let mut args = vec!["ingest", "--cloud-mask", s(&cloud), "--out", s(&stack_path), "--bands"];
    args.extend(bands.iter().map(String::as_str));
    assert_eq!(xsensor(&args).0, 0);
    let stack = read(&p("stack.mbt")).unwrap();
    assert_eq!(stack.bands(), 6);
    assert_eq!(stack.valid_count(), 3);

    write(&Raster::from_u8(2, 1, 1, vec![1, 17]).unwrap(), &p("nalcms.mbt")).unwrap();
    let code = xsensor(&[
        "recode", "--input", s(&p("nalcms.mbt")), "--from", "nalcms", "--to", "general", "--out", s(&p("g.mbt")),
        "--manifest", s(&p("general.json")),
    ])
    .0;
    assert_eq!(code, 0);
    let g = read(&p("g.mbt")).unwrap();
    let general = xsensor::labels::builtin_schemes().general;
    assert_eq!(g.as_u8().unwrap(), &[general.code_of("Forest").unwrap(), general.code_of("Settlement").unwrap()]);
    assert!(std::fs::read_to_string(p("general.json")).unwrap().contains("\"scheme_id\""));

    assert_eq!(xsensor(&["render", "--labels", s(&p("g.mbt")), "--out", s(&p("g.ppm"))]).0, 0);
    assert!(std::fs::read(p("g.ppm")).unwrap().starts_with(b"P6\n2 1\n255\n"));
}

#[test]
fn step_by_step_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let spec = xsensor::pipeline::SynthSpec {
        tiles_per_domain: 2,
        tile_size: 32,
        region_size: 8,
        ..Default::default()
    };
    std::fs::write(p("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let (code, stdout) = xsensor(&["synth", "--config", s(&p("spec.json")), "--style", "stats", "--out", s(&p("bench"))]);
    assert_eq!(code, 0);
    assert!(stdout.trim().ends_with("config.json"));
    let b = |n: &str| s(&p("bench").join(n)).to_string();

    let run = |args: &[&str]| assert_eq!(xsensor(args).0, 0, "{args:?}");
    run(&["shift", "--input", &b("source_image.mbt"), "--offsets", "5000,5000,5000,5000,5000,5000", "--out", s(&p("src.mbt"))]);
    run(&["recode", "--input", &b("source_labels.mbt"), "--from", "nalcms", "--out", s(&p("src_lab.mbt"))]);
    run(&["recode", "--input", &b("target_labels.mbt"), "--from", "corine", "--out", s(&p("tgt_lab.mbt"))]);
    run(&["tile", "--image", s(&p("src.mbt")), "--labels", s(&p("src_lab.mbt")), "--size", "32", "--out", s(&p("src_tiles"))]);
    run(&["tile", "--image", &b("target_image.mbt"), "--labels", s(&p("tgt_lab.mbt")), "--size", "32", "--out", s(&p("tgt_tiles"))]);
    run(&["train-style", "--source", s(&p("src_tiles")), "--target", s(&p("tgt_tiles")), "--steps", "1", "--out", s(&p("style"))]);
    run(&["stylize", "--tiles", s(&p("src_tiles")), "--mode", "gan", "--models", s(&p("style")), "--out", s(&p("sty"))]);
    run(&["mix", "--originals", s(&p("src_tiles")), "--stylized", s(&p("sty")), "--out", s(&p("m.jsonl"))]);
    run(&["train-seg", "--manifest", s(&p("m.jsonl")), "--validation", s(&p("tgt_tiles")), "--steps", "2", "--out", s(&p("seg.ckpt"))]);
    run(&["infer", "--ckpt", s(&p("seg.ckpt")), "--tiles", s(&p("tgt_tiles")), "--out", s(&p("pred"))]);
    run(&["eval", "--ref", s(&p("tgt_tiles/00000.lab.mbt")), "--pred", s(&p("pred/00000.pred.mbt")), "--scheme", "general", "--points", "10", "--out", s(&p("r.json"))]);
    assert!(p("seg.csv").is_file());
    assert_eq!(std::fs::read_to_string(p("m.jsonl")).unwrap().lines().count(), 4);
}
