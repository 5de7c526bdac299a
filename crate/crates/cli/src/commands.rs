use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vitderm_core::attention::{attention_map, render_heatmap, write_heatmap, AttentionMode};
use vitderm_core::data::image::load_image;
use vitderm_core::data::manifest::format_manifest;
use vitderm_core::data::{
    augment_class_balance, build_manifest, cleanse_with, load_metadata, load_split, split,
    stats_report, AugmentRanges, CleanseRule, ImageSet, ManifestEntry, SplitName, SplitRatios,
    CLASS_NAMES,
};
use vitderm_core::eval::{
    ablation_table, confusion_matrix, reference_entries, report, AblationRow, ConfusionMatrix,
};
use vitderm_core::model::{load_weights, save_weights, ConfigName, LoadOptions, ViTModel};
use vitderm_core::tensor::Tensor;
use vitderm_core::train::{evaluate, train as run_training, LrPolicy, TrainOutcome};
use vitderm_core::{Error, Result};

use crate::manifest::RunManifest;
use crate::settings::{model_config_text, Settings};
use crate::ConfigArgs;

/// Reference cleansed-record count for the full metadata file, logged next to
/// ours for comparison.
const EXPECTED_CLEANSED: usize = 9948;
pub const MODEL_SIDECAR: &str = "model.cfg";
const PREDICT_CHUNK: usize = 32;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn assignments(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))
        })
        .collect()
}

fn resolve(config: &ConfigArgs) -> Result<Settings> {
    let files: Vec<&Path> = config.configs.iter().map(PathBuf::as_path).collect();
    Settings::resolve(&files, &assignments(&config.set)?)
}

/// `# key=value` lines at the top of a split manifest.
type Header = Vec<(String, String)>;

fn read_split_manifest(path: &Path) -> Result<(Vec<ManifestEntry>, Header)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let entries = vitderm_core::data::manifest::parse_manifest(&text)?;
    Ok((entries, meta))
}

fn images_dir(explicit: Option<&Path>, meta: &[(String, String)]) -> Result<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| {
            meta.iter()
                .find(|(k, _)| k == "images")
                .map(|(_, v)| PathBuf::from(v))
        })
        .ok_or_else(|| Error::Usage("no image directory: pass --images".into()))
}

/// Loads a checkpoint, taking the architecture from `--config`/`--set` or
/// from the sidecar written next to it by `train`.
fn load_model(path: &Path, config: &ConfigArgs) -> Result<(ViTModel, Settings)> {
    let mut config = config.clone();
    if config.configs.is_empty() {
        let sidecar = path.parent().unwrap_or(Path::new(".")).join(MODEL_SIDECAR);
        if !sidecar.is_file() {
            return Err(Error::Config(format!(
                "no {MODEL_SIDECAR} next to {}; pass --config with the model settings",
                path.display()
            )));
        }
        config.configs.push(sidecar);
    }
    let settings = resolve(&config)?;
    let vc = settings.model_config()?;
    Ok((load_weights(path, &vc, LoadOptions::default())?, settings))
}

pub struct PrepareArgs {
    pub metadata: PathBuf,
    pub images: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub ratios: String,
    pub target: Option<usize>,
    pub no_augment: bool,
    pub drop: String,
}

fn parse_ratios(s: &str) -> Result<SplitRatios> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad ratio list '{s}'")))
        })
        .collect::<Result<_>>()?;
    let [train, val, test] = v[..] else {
        return Err(Error::Config(format!("expected three ratios, got '{s}'")));
    };
    let r = SplitRatios { train, val, test };
    r.validate()?;
    Ok(r)
}

fn parse_drop(s: &str) -> Result<CleanseRule> {
    let mut rule = CleanseRule {
        unknown_sex: false,
        missing_age: false,
        unknown_localization: false,
    };
    for f in s
        .split(',')
        .map(str::trim)
        .filter(|f| !f.is_empty() && *f != "none")
    {
        match f {
            "sex" => rule.unknown_sex = true,
            "age" => rule.missing_age = true,
            "localization" => rule.unknown_localization = true,
            _ => {
                return Err(Error::Config(format!(
                    "unknown drop field '{f}' (sex|age|localization|none)"
                )))
            }
        }
    }
    Ok(rule)
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let mut run = RunManifest::start("prepare");
    run.seed = Some(a.seed);
    if !a.images.is_dir() {
        return Err(Error::Data(format!(
            "image directory {} does not exist",
            a.images.display()
        )));
    }
    let images = std::fs::canonicalize(&a.images).map_err(|e| Error::io(&a.images, e))?;
    let ratios = parse_ratios(&a.ratios)?;
    let rule = parse_drop(&a.drop)?;

    let records = load_metadata(&a.metadata)?;
    let (clean, cr) = cleanse_with(&records, rule);
    let ds = split(&clean, ratios, a.seed)?;
    let synthetic = if a.no_augment {
        Vec::new()
    } else {
        augment_class_balance(&ds.train, a.target, &AugmentRanges::default(), a.seed)?
    };
    let entries = build_manifest(&ds, &synthetic);

    create_dir(&a.out)?;
    let split_path = a.out.join("split.txt");
    let text = format!(
        "# images={}\n# seed={}\n{}",
        images.display(),
        a.seed,
        format_manifest(&entries)
    );
    write_file(&split_path, &text)?;

    run.input("metadata", &a.metadata);
    run.input("images", &images);
    run.output("split", &split_path);
    run.note("cleanse.input", cr.input);
    run.note("cleanse.kept", cr.kept);
    run.note("cleanse.unknown_sex", cr.unknown_sex);
    run.note("cleanse.missing_age", cr.missing_age);
    run.note("cleanse.unknown_localization", cr.unknown_localization);
    run.note("cleanse.expected", EXPECTED_CLEANSED);
    run.note("split.ratios", &a.ratios);
    run.note("split.train", ds.train.len());
    run.note("split.val", ds.val.len());
    run.note("split.test", ds.test.len());
    run.note("augment.synthetic", synthetic.len());
    run.write(&a.out.join("run_manifest.txt"))?;
    println!(
        "kept {} of {} records (expected {EXPECTED_CLEANSED} on the full dataset); train {} (+{} synthetic) / val {} / test {}",
        cr.kept,
        cr.input,
        ds.train.len(),
        synthetic.len(),
        ds.val.len(),
        ds.test.len()
    );
    Ok(())
}

pub fn stats(metadata: &Path, out: Option<&Path>, no_cleanse: bool) -> Result<()> {
    let records = load_metadata(metadata)?;
    let records = if no_cleanse {
        records
    } else {
        cleanse_with(&records, CleanseRule::default()).0
    };
    let text = stats_report(&records).to_text();
    match out {
        Some(p) => {
            write_file(p, &text)?;
            let mut run = RunManifest::start("stats");
            run.input("metadata", metadata);
            run.output("stats", p);
            run.write(&p.with_extension("run.txt"))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn train(
    manifest: &Path,
    images: Option<&Path>,
    out: &Path,
    config: &ConfigArgs,
) -> Result<TrainOutcome> {
    let mut run = RunManifest::start("train");
    let settings = resolve(config)?;
    let vc = settings.model_config()?;
    let tc = settings.train_config()?;
    let init_seed = settings.init_seed()?;
    run.seed = Some(tc.seed);

    let (entries, meta) = read_split_manifest(manifest)?;
    let dir = images_dir(images, &meta)?;
    let train_set = load_split(&entries, SplitName::Train, &dir, vc.image_size)?;
    let val_set = load_split(&entries, SplitName::Val, &dir, vc.image_size)?;

    let model = match settings.get("weights") {
        "" => ViTModel::init(vc.clone(), init_seed)?,
        w => {
            run.input("weights", Path::new(w));
            load_weights(
                w,
                &vc,
                LoadOptions {
                    backbone_only: true,
                    head_seed: init_seed,
                },
            )?
        }
    };

    create_dir(out)?;
    let sidecar = out.join(MODEL_SIDECAR);
    write_file(&sidecar, &model_config_text(&vc))?;
    let best = out.join("best.vitw");
    let outcome = run_training(model, &train_set, &val_set, &tc, Some(&best))?;

    let final_path = out.join("final.vitw");
    save_weights(&outcome.model, &final_path)?;
    let history = out.join("history.csv");
    write_file(&history, &outcome.history.to_csv())?;
    let timing = out.join("timing.csv");
    write_file(&timing, &outcome.history.timing_csv())?;

    run.input("manifest", manifest);
    run.input("images", &dir);
    for (k, p) in [
        ("model_config", &sidecar),
        ("checkpoint", &best),
        ("final", &final_path),
        ("history", &history),
        ("timing", &timing),
    ] {
        run.output(k, p);
    }
    run.note("train.samples", train_set.len());
    run.note("val.samples", val_set.len());
    run.note("epochs_run", outcome.history.len());
    run.note(
        "best_epoch",
        outcome
            .history
            .best_epoch
            .map_or("none".into(), |e| e.to_string()),
    );
    for w in &outcome.history.warnings {
        run.note("warning", w);
    }
    run.settings = Some(settings);
    run.write(&out.join("run_manifest.txt"))?;
    if let Some(last) = outcome.history.epochs.last() {
        println!(
            "{} epochs; last val_acc {:.4}, best epoch {}",
            outcome.history.len(),
            last.val_acc,
            outcome
                .history
                .best_epoch
                .map_or("none".into(), |e| e.to_string())
        );
    }
    Ok(outcome)
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub split: String,
    pub images: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub name: Option<String>,
    pub no_reference: bool,
}

fn test_matrix(model: &ViTModel, set: &ImageSet) -> Result<ConfusionMatrix> {
    let ev = evaluate(model, set)?;
    confusion_matrix(&ev.predictions, set.labels())
}

pub fn eval(a: &EvalArgs, config: &ConfigArgs) -> Result<()> {
    let mut run = RunManifest::start("eval");
    let which: SplitName = a.split.parse()?;
    let (model, settings) = load_model(&a.model, config)?;
    let (entries, meta) = read_split_manifest(&a.manifest)?;
    let dir = images_dir(a.images.as_deref(), &meta)?;
    let set = load_split(&entries, which, &dir, model.config().image_size)?;
    let cm = test_matrix(&model, &set)?;
    let name = a.name.clone().unwrap_or_else(|| match model.config().name {
        ConfigName::Custom => a
            .model
            .file_stem()
            .map_or("model".into(), |s| s.to_string_lossy().into_owned()),
        n => format!("ViT_{n}"),
    });
    let extra = if a.no_reference {
        Vec::new()
    } else {
        reference_entries()
    };
    let rep = report(&cm, &name, &extra)?;
    print!("{}", rep.text);
    if let Some(out) = &a.out {
        create_dir(out)?;
        for (k, file, body) in [
            ("report", "report.txt", &rep.text),
            ("csv", "report.csv", &rep.csv),
            ("confusion", "confusion.txt", &rep.grid),
        ] {
            let p = out.join(file);
            write_file(&p, body)?;
            run.output(k, &p);
        }
        run.input("model", &a.model);
        run.input("manifest", &a.manifest);
        run.input("images", &dir);
        run.note("split", which);
        run.settings = Some(settings);
        run.write(&out.join("run_manifest.txt"))?;
    }
    Ok(())
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map_or("image".into(), |s| s.to_string_lossy().into_owned())
}

pub fn predict(
    model_path: &Path,
    images: &[PathBuf],
    out: Option<&Path>,
    config: &ConfigArgs,
) -> Result<()> {
    let (model, settings) = load_model(model_path, config)?;
    let size = model.config().image_size;
    let mut csv = format!("image,{},predicted\n", CLASS_NAMES.join(","));
    for chunk in images.chunks(PREDICT_CHUNK) {
        let mut data = Vec::new();
        for p in chunk {
            data.extend_from_slice(load_image(p, Some(size))?.data());
        }
        let probs = model.predict(&Tensor::new(vec![chunk.len(), size, size, 3], data)?)?;
        let classes = model.config().num_classes;
        for ((p, row), pred) in chunk
            .iter()
            .zip(probs.data().chunks(classes))
            .zip(probs.argmax_rows())
        {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(
                csv,
                "{},{},{}",
                image_id(p),
                vals.join(","),
                CLASS_NAMES[pred]
            );
        }
    }
    match out {
        Some(o) => {
            write_file(o, &csv)?;
            let mut run = RunManifest::start("predict");
            run.input("model", model_path);
            for p in images {
                run.input("image", p);
            }
            run.output("predictions", o);
            run.settings = Some(settings);
            run.write(&o.with_extension("run.txt"))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn attention(
    model_path: &Path,
    images: &[PathBuf],
    out: &Path,
    alpha: f64,
    layer: Option<usize>,
    head: Option<usize>,
    config: &ConfigArgs,
) -> Result<()> {
    let (model, settings) = load_model(model_path, config)?;
    let size = model.config().image_size;
    let mode = match (layer, head) {
        (None, None) => AttentionMode::Rollout,
        (l, h) => AttentionMode::Layer {
            layer: l.unwrap_or(model.config().depth - 1),
            head: h,
        },
    };
    create_dir(out)?;
    let mut run = RunManifest::start("attention");
    run.input("model", model_path);
    for p in images {
        let img = load_image(p, Some(size))?;
        let batch = img.clone().reshape(vec![1, size, size, 3])?;
        let (_, records) = model.predict_with_attention(&batch)?;
        let map = attention_map(&records[0], mode)?;
        let heat = render_heatmap(&map, &img, alpha)?;
        let (ppm, pgm) = write_heatmap(out, &image_id(p), &heat)?;
        run.input("image", p);
        run.output("overlay", &ppm);
        run.output("map", &pgm);
    }
    run.note("alpha", alpha);
    run.note("mode", format!("{mode:?}"));
    run.settings = Some(settings);
    run.write(&out.join("run_manifest.txt"))
}

pub fn ablate(
    configs: &[PathBuf],
    manifest: &Path,
    images: Option<&Path>,
    out: &Path,
    set: &[String],
) -> Result<()> {
    let mut run = RunManifest::start("ablate");
    create_dir(out)?;
    let (entries, meta) = read_split_manifest(manifest)?;
    let dir = images_dir(images, &meta)?;
    let mut rows = Vec::new();
    let mut test_sets: Vec<ImageSet> = Vec::new();
    for cfg in configs {
        let args = ConfigArgs {
            configs: vec![cfg.clone()],
            set: set.to_vec(),
        };
        let settings = resolve(&args)?;
        let vc = settings.model_config()?;
        let tc = settings.train_config()?;
        let stem = image_id(cfg);
        let run_dir = out.join(&stem);
        log::info!("ablation run {stem}");
        let outcome = train(manifest, Some(&dir), &run_dir, &args)?;

        let cached = test_sets.iter().position(|s| s.size() == vc.image_size);
        let idx = match cached {
            Some(i) => i,
            None => {
                test_sets.push(load_split(&entries, SplitName::Test, &dir, vc.image_size)?);
                test_sets.len() - 1
            }
        };
        let cm = test_matrix(&outcome.best_model, &test_sets[idx])?;
        rows.push(AblationRow {
            name: stem,
            batch_size: tc.batch_size,
            epochs: tc.epochs,
            neurons: vc.head_neurons,
            activation: vc.head_activation.to_string(),
            l2: tc.l2_lambda > 0.0,
            dropout: vc.dropout_rate > 0.0,
            lr_scheduler: tc.lr_policy == LrPolicy::Scheduler,
            reduce_lr_on_plateau: tc.lr_policy == LrPolicy::Plateau,
            optimizer: tc.optimizer.to_string(),
            correct: cm.trace(),
            total: cm.total(),
        });
        run.input("config", cfg);
        run.output("run", &run_dir);
    }
    let table = ablation_table(&rows);
    let table_path = out.join("ablation.txt");
    write_file(&table_path, &table)?;
    print!("{table}");
    run.input("manifest", manifest);
    run.input("images", &dir);
    run.output("table", &table_path);
    run.write(&out.join("run_manifest.txt"))
}
