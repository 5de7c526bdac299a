mod common;

use common::{ok, s, synthetic_dataset, vitderm, TINY_RUN};

#[test]
fn full_pipeline_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let (meta, images) = synthetic_dataset(dir.path(), 1);
    let prep = dir.path().join("prep");
    let summary = ok(&[
        "prepare",
        "--metadata",
        s(&meta),
        "--images",
        s(&images),
        "--seed",
        "3",
        "--out",
        s(&prep),
    ]);
    assert!(summary.contains("kept"), "{summary}");
    let split = prep.join("split.txt");
    let text = std::fs::read_to_string(&split).unwrap();
    assert!(text.starts_with("# images="));
    assert!(
        text.lines().any(|l| l.contains("_aug")),
        "augmented rows expected"
    );
    let run = std::fs::read_to_string(prep.join("run_manifest.txt")).unwrap();
    assert!(
        run.contains("cleanse.kept=") && run.contains("seed=3"),
        "{run}"
    );

    let stats = ok(&["stats", "--metadata", s(&meta)]);
    assert!(stats.contains("mel"), "{stats}");

    let out = dir.path().join("run");
    let mut args = vec!["train", "--manifest", s(&split), "--out", s(&out)];
    args.extend_from_slice(TINY_RUN);
    ok(&args);
    for f in [
        "history.csv",
        "timing.csv",
        "best.vitw",
        "final.vitw",
        "model.cfg",
        "run_manifest.txt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(
        history.lines().next().unwrap(),
        "epoch,train_loss,train_acc,val_loss,val_acc,lr"
    );

    let model = out.join("best.vitw");
    let eval_dir = dir.path().join("eval");
    let report = ok(&[
        "eval",
        "--model",
        s(&model),
        "--manifest",
        s(&split),
        "--out",
        s(&eval_dir),
    ]);
    assert!(
        report.contains("Accuracy:") && report.contains("ViT_B16"),
        "{report}"
    );
    for f in [
        "report.txt",
        "report.csv",
        "confusion.txt",
        "run_manifest.txt",
    ] {
        assert!(eval_dir.join(f).is_file(), "missing {f}");
    }
    let bare = ok(&[
        "eval",
        "--model",
        s(&model),
        "--manifest",
        s(&split),
        "--split",
        "val",
        "--no-reference",
    ]);
    assert!(!bare.contains("ViT_B16"));

    let img_a = images.join("I00000.ppm");
    let img_b = images.join("I00001.ppm");
    let preds = ok(&["predict", "--model", s(&model), s(&img_a), s(&img_b)]);
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines[0], "image,akiec,bcc,bkl,df,mel,nv,vasc,predicted");
    assert_eq!(lines.len(), 3);
    let probs: f64 = lines[1]
        .split(',')
        .skip(1)
        .take(7)
        .map(|v| v.parse::<f64>().unwrap())
        .sum();
    assert!((probs - 1.0).abs() < 1e-4);

    let heat = dir.path().join("heat");
    ok(&[
        "attention",
        "--model",
        s(&model),
        "--out",
        s(&heat),
        s(&img_a),
    ]);
    assert!(heat.join("I00000.attn.ppm").is_file() && heat.join("I00000.attn.pgm").is_file());
    ok(&[
        "attention",
        "--model",
        s(&model),
        "--out",
        s(&heat),
        "--layer",
        "0",
        "--head",
        "1",
        s(&img_b),
    ]);
    assert!(heat.join("I00001.attn.ppm").is_file());

    let cfg_a = dir.path().join("relu.cfg");
    let cfg_b = dir.path().join("gelu.cfg");
    std::fs::write(
        &cfg_a,
        "model=tiny\nepochs=2\nbatch_size=8\nhead_activation=relu\n",
    )
    .unwrap();
    std::fs::write(
        &cfg_b,
        "model=tiny\nepochs=2\nbatch_size=8\nhead_activation=gelu\nlr_policy=scheduler\n",
    )
    .unwrap();
    let abl = dir.path().join("abl");
    let table = ok(&[
        "ablate",
        "--configs",
        s(&cfg_a),
        s(&cfg_b),
        "--manifest",
        s(&split),
        "--out",
        s(&abl),
    ]);
    assert!(table.contains("relu") && table.contains("gelu"), "{table}");
    assert!(abl.join("ablation.txt").is_file() && abl.join("gelu").join("history.csv").is_file());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(vitderm(&["train"]).status.code(), Some(2));
    assert_eq!(vitderm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(vitderm(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = vitderm(&["stats", "--metadata", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    let (meta, images) = synthetic_dataset(dir.path(), 2);
    let prep = dir.path().join("prep");
    let bad = vitderm(&[
        "prepare",
        "--metadata",
        s(&meta),
        "--images",
        s(&images),
        "--out",
        s(&prep),
        "--ratios",
        "0.5,0.5",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    ok(&[
        "prepare",
        "--metadata",
        s(&meta),
        "--images",
        s(&images),
        "--out",
        s(&prep),
        "--no-augment",
    ]);
    let split = prep.join("split.txt");
    let run = dir.path().join("run");
    let unknown = vitderm(&[
        "train",
        "--manifest",
        s(&split),
        "--out",
        s(&run),
        "--set",
        "colour=blue",
    ]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("colour"));

    let orphan = dir.path().join("orphan.vitw");
    std::fs::write(&orphan, b"VITW\x01\0\0\0\0").unwrap();
    let out = vitderm(&["eval", "--model", s(&orphan), "--manifest", s(&split)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.cfg"));
}
