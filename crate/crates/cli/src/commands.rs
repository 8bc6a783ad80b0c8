use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ran_core::datasets::{
    build_occlusion_subset, build_pose_subset, canonical_landmarks, generate_synthetic,
    load_manifest, manifest_to_string, subset_stats, write_manifest, ManifestRecord, SyntheticSpec,
};
use ran_core::features::load_feature_store;
use ran_core::numerics::{read_checkpoint, write_checkpoint};
use ran_core::pipeline::{
    attention_report, build_model, compare_heads, epoch_log_csv, evaluate, margin_sweep,
    region_size_sweep, sweep_csv, train, Dataset, Metrics, SweepRow, TrainConfig,
};
use ran_core::ran::{gradcheck_cases, run_gradcheck_case};
use ran_core::regions::{
    fixed_crops_scaled, landmark_crops, load_pnm, random_crops, write_pnm, CropScheme, Landmark,
    LandmarkName, DEFAULT_LANDMARK_RADIUS,
};
use ran_core::HeadKind;

use crate::settings::{require_file, usage, Settings};

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";
pub const CHECKPOINT: &str = "checkpoint.bin";

#[derive(Debug, Parser)]
#[command(
    name = "ran",
    version,
    about = "Region attention networks for facial expression recognition"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// `key = value` config file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 gives the reference single-threaded run).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Dataset locations shared by train, eval and sweep.
#[derive(Debug, Clone, Args)]
pub struct DataFlags {
    /// Training manifest CSV.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test manifest CSV.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Feature store; when given, region features replace images.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Number of classes (default: largest label + 1).
    #[arg(long)]
    pub classes: Option<usize>,
}

/// Overrides for [`TrainConfig`] fields.
#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    /// Comma-separated epochs after which the learning rate is divided by 10.
    #[arg(long)]
    pub lr_decay_epochs: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Region biased loss margin.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda_rb: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// fixed | landmark | random(n)
    #[arg(long)]
    pub crop_scheme: Option<String>,
    #[arg(long)]
    pub region_scale_ratio: Option<f64>,
    #[arg(long)]
    pub landmark_radius: Option<f64>,
    #[arg(long)]
    pub test_crops: Option<usize>,
    /// ran | self_attention | average_pool | concat | score_fusion
    #[arg(long)]
    pub head: Option<String>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub input_size: Option<usize>,
    #[arg(long)]
    pub downsample: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, epoch log and metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Evaluate a checkpoint: metrics JSON, confusion CSV, attention report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// all | occlusion | pose30 | pose45
        #[arg(long)]
        subset: Option<String>,
    },
    /// Print the crop rectangles of one image as CSV.
    Crop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        /// fixed | landmark | random(n)
        #[arg(long, default_value = "fixed")]
        scheme: String,
        /// `name:x:y` entries joined by `|`.
        #[arg(long)]
        landmarks: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long, default_value_t = DEFAULT_LANDMARK_RADIUS)]
        radius: f64,
    },
    /// Generate the synthetic localization dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image_size: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        signal_region: Option<usize>,
        #[arg(long)]
        occluder_prob: Option<f64>,
        #[arg(long)]
        occluder_min: Option<usize>,
        #[arg(long)]
        occluder_max: Option<usize>,
        #[arg(long)]
        noise_level: Option<f64>,
        #[arg(long)]
        glyph_cell: Option<usize>,
        #[arg(long)]
        train_count: Option<usize>,
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Write the occlusion or pose subset of a manifest.
    Subset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// occlusion | pose30 | pose45 | pose:<degrees>
        #[arg(long)]
        kind: Option<String>,
    },
    /// Occlusion and pose statistics of a manifest.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Finite-difference check of the model gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        head: Option<String>,
    },
    /// Margin, region-size or head sweeps.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        model: ModelFlags,
        /// Comma-separated margins.
        #[arg(long)]
        alphas: Option<String>,
        /// Comma-separated fixed-crop scale ratios.
        #[arg(long)]
        ratios: Option<String>,
        /// Comma-separated heads, e.g. `ran,score_fusion,concat,average_pool`.
        #[arg(long)]
        heads: Option<String>,
    },
}

const DATA_KEYS: [&str; 4] = ["train", "test", "features", "classes"];
const RUN_KEYS: [&str; 7] = [
    "threads",
    "checkpoint",
    "subset",
    "alphas",
    "ratios",
    "heads",
    "out",
];
const SYNTH_KEYS: [&str; 13] = [
    "image_size",
    "classes",
    "signal_region",
    "occluder_prob",
    "occluder_min",
    "occluder_max",
    "noise_level",
    "glyph_cell",
    "train_count",
    "test_count",
    "seed",
    "threads",
    "out",
];

fn run_keys() -> Vec<&'static str> {
    TrainConfig::KEYS
        .iter()
        .chain(DATA_KEYS.iter())
        .chain(RUN_KEYS.iter())
        .copied()
        .collect()
}

/// Settings from `--config`, then common flags.
fn base_settings(common: &Common, allowed: Vec<&'static str>) -> Result<Settings> {
    let mut s = Settings::new(allowed);
    if let Some(path) = &common.config {
        s.load_file(path)?;
    }
    s.set_opt("seed", common.seed)?;
    s.set_opt("threads", common.threads)?;
    s.set_opt("out", common.out.as_ref().map(|p| p.display().to_string()))?;
    Ok(s)
}

fn apply_data(s: &mut Settings, d: &DataFlags) -> Result<()> {
    let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    s.set_opt("train", show(&d.train))?;
    s.set_opt("test", show(&d.test))?;
    s.set_opt("features", show(&d.features))?;
    s.set_opt("classes", d.classes)
}

fn apply_model(s: &mut Settings, m: &ModelFlags) -> Result<()> {
    s.set_opt("lr", m.lr)?;
    s.set_opt("lr_decay_epochs", m.lr_decay_epochs.clone())?;
    s.set_opt("epochs", m.epochs)?;
    s.set_opt("alpha", m.alpha)?;
    s.set_opt("lambda_rb", m.lambda_rb)?;
    s.set_opt("batch_size", m.batch_size)?;
    s.set_opt("momentum", m.momentum)?;
    s.set_opt("crop_scheme", m.crop_scheme.clone())?;
    s.set_opt("region_scale_ratio", m.region_scale_ratio)?;
    s.set_opt("landmark_radius", m.landmark_radius)?;
    s.set_opt("test_crops", m.test_crops)?;
    s.set_opt("head", m.head.clone())?;
    s.set_opt("feature_dim", m.feature_dim)?;
    s.set_opt("hidden", m.hidden)?;
    s.set_opt("input_size", m.input_size)?;
    s.set_opt("downsample", m.downsample)
}

/// The training config described by `s`, validated.
fn train_config(s: &Settings) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for key in TrainConfig::KEYS {
        if let Some(v) = s.get(key) {
            cfg.set(key, v).map_err(|e| usage(e.to_string()))?;
        }
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Writes every training key (defaults included) plus the other settings.
fn resolved_text(cfg: &TrainConfig, s: &Settings) -> String {
    let mut out = cfg.to_text();
    for (k, v) in s.iter() {
        if !TrainConfig::KEYS.contains(&k) && k != "out" {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = s.path("out").ok_or_else(|| usage("--out is required"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Writes to stdout, ignoring a closed pipe (e.g. `ran ... | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn init_threads(s: &Settings) -> Result<()> {
    if let Some(n) = s.parse::<usize>("threads")? {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // A second initialisation (e.g. in tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn manifest(s: &Settings, key: &str) -> Result<Option<(PathBuf, Vec<ManifestRecord>)>> {
    match s.path(key) {
        None => Ok(None),
        Some(p) => {
            require_file(&p, &format!("{key} manifest"))?;
            let records = load_manifest(&p).with_context(|| format!("loading {}", p.display()))?;
            Ok(Some((p, records)))
        }
    }
}

fn infer_classes(s: &Settings, sets: &[&[ManifestRecord]]) -> Result<usize> {
    if let Some(c) = s.parse::<usize>("classes")? {
        return Ok(c);
    }
    let max = sets
        .iter()
        .flat_map(|r| r.iter())
        .map(|r| r.label)
        .max()
        .unwrap_or(0);
    Ok((max + 1).max(2))
}

fn dataset(
    s: &Settings,
    path: &Path,
    records: &[ManifestRecord],
    classes: usize,
) -> Result<Dataset> {
    let data = match s.path("features") {
        Some(f) => {
            require_file(&f, "feature store")?;
            Dataset::from_features(records, &load_feature_store(&f)?, classes)?
        }
        None => {
            let base = path.parent().unwrap_or(Path::new("."));
            Dataset::from_manifest(records, base, classes)?
        }
    };
    Ok(data)
}

fn write_metrics(dir: &Path, name: &str, m: &Metrics) -> Result<()> {
    write(&dir.join(format!("{name}.json")), &m.to_json())?;
    write(
        &dir.join(format!(
            "confusion{}.csv",
            name.strip_prefix("metrics").unwrap_or("")
        )),
        &m.confusion_csv(),
    )
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            common,
            data,
            model,
        } => cmd_train(&common, &data, &model),
        Command::Eval {
            common,
            data,
            model,
            checkpoint,
            subset,
        } => cmd_eval(&common, &data, &model, checkpoint, subset),
        Command::Crop {
            common,
            image,
            scheme,
            landmarks,
            ratio,
            radius,
        } => cmd_crop(
            &common,
            &image,
            &scheme,
            landmarks.as_deref(),
            ratio,
            radius,
        ),
        Command::Synth {
            common,
            image_size,
            classes,
            signal_region,
            occluder_prob,
            occluder_min,
            occluder_max,
            noise_level,
            glyph_cell,
            train_count,
            test_count,
        } => {
            let mut s = base_settings(&common, SYNTH_KEYS.to_vec())?;
            s.set_opt("image_size", image_size)?;
            s.set_opt("classes", classes)?;
            s.set_opt("signal_region", signal_region)?;
            s.set_opt("occluder_prob", occluder_prob)?;
            s.set_opt("occluder_min", occluder_min)?;
            s.set_opt("occluder_max", occluder_max)?;
            s.set_opt("noise_level", noise_level)?;
            s.set_opt("glyph_cell", glyph_cell)?;
            s.set_opt("train_count", train_count)?;
            s.set_opt("test_count", test_count)?;
            cmd_synth(&s)
        }
        Command::Subset {
            common,
            manifest,
            kind,
        } => {
            let mut s = base_settings(&common, vec!["manifest", "kind", "seed", "threads", "out"])?;
            s.set_opt("manifest", manifest.map(|p| p.display().to_string()))?;
            s.set_opt("kind", kind)?;
            cmd_subset(&s)
        }
        Command::Stats { common, manifest } => {
            let mut s = base_settings(&common, vec!["manifest", "seed", "threads", "out"])?;
            s.set_opt("manifest", manifest.map(|p| p.display().to_string()))?;
            cmd_stats(&s)
        }
        Command::Gradcheck {
            common,
            trials,
            head,
        } => {
            let mut s = base_settings(&common, vec!["trials", "head", "seed", "threads", "out"])?;
            s.set_opt("trials", trials)?;
            s.set_opt("head", head)?;
            cmd_gradcheck(&s)
        }
        Command::Sweep {
            common,
            data,
            model,
            alphas,
            ratios,
            heads,
        } => {
            let mut s = base_settings(&common, run_keys())?;
            apply_data(&mut s, &data)?;
            apply_model(&mut s, &model)?;
            s.set_opt("alphas", alphas)?;
            s.set_opt("ratios", ratios)?;
            s.set_opt("heads", heads)?;
            cmd_sweep(&s)
        }
    }
}

fn cmd_train(common: &Common, data: &DataFlags, model: &ModelFlags) -> Result<ExitCode> {
    let mut s = base_settings(common, run_keys())?;
    apply_data(&mut s, data)?;
    apply_model(&mut s, model)?;
    init_threads(&s)?;
    let cfg = train_config(&s)?;
    let (train_path, train_records) =
        manifest(&s, "train")?.ok_or_else(|| usage("--train is required"))?;
    let test = manifest(&s, "test")?;
    let classes = infer_classes(
        &s,
        &[
            &train_records,
            test.as_ref().map_or(&[][..], |(_, r)| r.as_slice()),
        ],
    )?;
    s.set("classes", classes)?;
    let dir = out_dir(&s)?;
    write(&dir.join(RESOLVED_CONFIG), &resolved_text(&cfg, &s))?;

    let train_set = dataset(&s, &train_path, &train_records, classes)?;
    let mut m = build_model(&cfg, &train_set)?;
    let log = train(&cfg, &mut m, &train_set)?;
    write_checkpoint(&dir.join(CHECKPOINT), &m.params)?;
    write(&dir.join("epoch_log.csv"), &epoch_log_csv(&log))?;
    if let Some(last) = log.last() {
        eprintln!(
            "epoch {}: lr {} ce {:.4} rb {:.4} train acc {:.4}",
            last.epoch, last.lr, last.mean_ce, last.mean_rb, last.train_acc
        );
    }
    if let Some((path, records)) = test {
        let test_set = dataset(&s, &path, &records, classes)?;
        let metrics = evaluate(&cfg, &m, &test_set)?;
        write_metrics(&dir, "metrics", &metrics)?;
        emit(&format!("{}\n", metrics.to_json()));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(
    common: &Common,
    data: &DataFlags,
    model: &ModelFlags,
    checkpoint: Option<PathBuf>,
    subset: Option<String>,
) -> Result<ExitCode> {
    let mut s = Settings::new(run_keys());
    let ckpt_flag = checkpoint.map(|p| p.display().to_string());
    // Without --config, reuse the run's resolved config if it sits next to the checkpoint.
    let sibling = ckpt_flag
        .as_ref()
        .map(|c| Path::new(c).with_file_name(RESOLVED_CONFIG))
        .filter(|p| common.config.is_none() && p.is_file());
    if let Some(p) = common.config.as_ref().or(sibling.as_ref()) {
        s.load_file(p)?;
    }
    s.set_opt("seed", common.seed)?;
    s.set_opt("threads", common.threads)?;
    s.set_opt("out", common.out.as_ref().map(|p| p.display().to_string()))?;
    apply_data(&mut s, data)?;
    apply_model(&mut s, model)?;
    s.set_opt("checkpoint", ckpt_flag)?;
    s.set_opt("subset", subset)?;
    init_threads(&s)?;
    let cfg = train_config(&s)?;

    let ckpt = s
        .path("checkpoint")
        .ok_or_else(|| usage("--checkpoint is required"))?;
    require_file(&ckpt, "checkpoint")?;
    let params = read_checkpoint(&ckpt)?;
    let (test_path, records) = manifest(&s, "test")?.ok_or_else(|| usage("--test is required"))?;
    let records = match s.get("subset").unwrap_or("all") {
        "all" => records,
        "occlusion" => build_occlusion_subset(&records),
        "pose30" => build_pose_subset(&records, 30.0)?,
        "pose45" => build_pose_subset(&records, 45.0)?,
        other => return Err(usage(format!("unknown subset `{other}`"))),
    };
    let classes = params
        .by_name("classifier.b")
        .map(|p| p.value.len())
        .ok_or_else(|| anyhow::anyhow!("checkpoint has no classifier"))?;
    let test_set = dataset(&s, &test_path, &records, classes)?;
    if test_set.is_empty() {
        bail!("the selected test subset is empty");
    }
    let mut m = build_model(&cfg, &test_set)?;
    m.params.load_values(&params)?;
    let metrics = evaluate(&cfg, &m, &test_set)?;
    if s.get("out").is_some() {
        let dir = out_dir(&s)?;
        write(&dir.join(RESOLVED_CONFIG), &resolved_text(&cfg, &s))?;
        write_metrics(&dir, "metrics", &metrics)?;
        if cfg.head.has_attention() {
            write(
                &dir.join("attention.csv"),
                &attention_report(&cfg, &m, &test_set)?.to_csv(),
            )?;
        }
    }
    emit(&format!("{}\n", metrics.to_json()));
    Ok(ExitCode::SUCCESS)
}

fn parse_landmarks(text: &str) -> Result<Vec<Landmark>> {
    text.split('|')
        .map(|tok| {
            let parts: Vec<&str> = tok.trim().split(':').collect();
            let bad = || usage(format!("bad landmark `{tok}`, expected name:x:y"));
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok(Landmark {
                name: parts[0].parse::<LandmarkName>().map_err(|_| bad())?,
                x: parts[1].parse().map_err(|_| bad())?,
                y: parts[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn cmd_crop(
    common: &Common,
    image: &Path,
    scheme: &str,
    landmarks: Option<&str>,
    ratio: f64,
    radius: f64,
) -> Result<ExitCode> {
    require_file(image, "image")?;
    let img = load_pnm(image)?;
    let (w, h) = (img.width(), img.height());
    let scheme: CropScheme = scheme
        .parse()
        .map_err(|e: ran_core::Error| usage(e.to_string()))?;
    let specs = match scheme {
        CropScheme::Fixed => fixed_crops_scaled(w, h, ratio)?,
        CropScheme::Random(n) => random_crops(w, h, n, common.seed.unwrap_or(0)),
        CropScheme::Landmark => {
            let lms = match landmarks {
                Some(t) => parse_landmarks(t)?,
                None => canonical_landmarks(w.min(h)),
            };
            match landmark_crops(w, h, &lms, radius) {
                Err(ran_core::Error::NoRegions) => {
                    eprintln!("no landmark crop fits; falling back to fixed crops");
                    fixed_crops_scaled(w, h, ratio)?
                }
                other => other?,
            }
        }
    };
    let mut csv = String::from("index,scheme,x,y,w,h\n");
    for r in &specs {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.index, r.scheme, r.x, r.y, r.w, r.h
        ));
    }
    emit(&csv);
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        write(&dir.join("crops.csv"), &csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(s: &Settings) -> Result<ExitCode> {
    init_threads(s)?;
    let mut spec = SyntheticSpec::default();
    macro_rules! take {
        ($key:literal, $field:expr) => {
            if let Some(v) = s.parse($key)? {
                $field = v;
            }
        };
    }
    take!("image_size", spec.image_size);
    take!("classes", spec.classes);
    take!("signal_region", spec.signal_region);
    take!("occluder_prob", spec.occluder_prob);
    take!("occluder_min", spec.occluder_size_range.0);
    take!("occluder_max", spec.occluder_size_range.1);
    take!("noise_level", spec.noise_level);
    take!("glyph_cell", spec.glyph_cell);
    take!("train_count", spec.train_count);
    take!("test_count", spec.test_count);
    take!("seed", spec.seed);
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let dir = out_dir(s)?;
    let set = generate_synthetic(&spec)?;
    fs::create_dir_all(dir.join("images"))?;
    let landmarks = canonical_landmarks(spec.image_size);
    let mut meta = Vec::new();
    for (name, samples) in [("train", &set.train), ("test", &set.test)] {
        let mut records = Vec::with_capacity(samples.len());
        for smp in samples.iter() {
            let rel = format!("images/{}.pgm", smp.id);
            write_pnm(&dir.join(&rel), &smp.image)?;
            let mut r = ManifestRecord::new(&smp.id, rel, smp.label);
            r.landmarks = Some(landmarks.clone());
            records.push(r);
            meta.push(serde_json::json!({
                "sample_id": smp.id,
                "label": smp.label,
                "signal_region": smp.signal_region,
                "glyph": smp.glyph,
                "occluder": smp.occluder,
            }));
        }
        write_manifest(&dir.join(format!("{name}.csv")), &records)?;
    }
    let spec_json = serde_json::to_value(&spec)?;
    write(
        &dir.join("metadata.json"),
        &serde_json::to_string_pretty(&serde_json::json!({ "spec": spec_json, "samples": meta }))?,
    )?;
    let mut resolved = s.clone();
    resolved.set("image_size", spec.image_size)?;
    resolved.set("classes", spec.classes)?;
    resolved.set("signal_region", spec.signal_region)?;
    resolved.set("occluder_prob", spec.occluder_prob)?;
    resolved.set("occluder_min", spec.occluder_size_range.0)?;
    resolved.set("occluder_max", spec.occluder_size_range.1)?;
    resolved.set("noise_level", spec.noise_level)?;
    resolved.set("glyph_cell", spec.glyph_cell)?;
    resolved.set("train_count", spec.train_count)?;
    resolved.set("test_count", spec.test_count)?;
    resolved.set("seed", spec.seed)?;
    let text: String = resolved
        .iter()
        .filter(|(k, _)| *k != "out")
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    write(&dir.join(RESOLVED_CONFIG), &text)?;
    eprintln!(
        "wrote {} train and {} test images to {}",
        set.train.len(),
        set.test.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_subset(s: &Settings) -> Result<ExitCode> {
    let (_, records) = manifest(s, "manifest")?.ok_or_else(|| usage("--manifest is required"))?;
    let kind = s.get("kind").ok_or_else(|| usage("--kind is required"))?;
    let subset = match kind {
        "occlusion" => build_occlusion_subset(&records),
        "pose30" => build_pose_subset(&records, 30.0)?,
        "pose45" => build_pose_subset(&records, 45.0)?,
        k => match k.strip_prefix("pose:").and_then(|t| t.parse::<f64>().ok()) {
            Some(t) => build_pose_subset(&records, t)?,
            None => return Err(usage(format!("unknown subset kind `{k}`"))),
        },
    };
    let text = manifest_to_string(&subset)?;
    match s.get("out") {
        Some(_) => {
            let dir = out_dir(s)?;
            write(&dir.join("subset.csv"), &text)?;
            write(
                &dir.join(RESOLVED_CONFIG),
                &s.to_text()
                    .lines()
                    .filter(|l| !l.starts_with("out "))
                    .map(|l| format!("{l}\n"))
                    .collect::<String>(),
            )?;
            eprintln!("{} of {} records kept", subset.len(), records.len());
        }
        None => emit(&text),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(s: &Settings) -> Result<ExitCode> {
    let (path, records) =
        manifest(s, "manifest")?.ok_or_else(|| usage("--manifest is required"))?;
    let stats = subset_stats(&records);
    let name = path
        .file_stem()
        .and_then(|n| n.to_str())
        .unwrap_or("manifest");
    emit(&stats.to_table(name));
    let json = serde_json::to_string_pretty(&stats)?;
    if s.get("out").is_some() {
        let dir = out_dir(s)?;
        write(&dir.join("stats.json"), &json)?;
        write(&dir.join("stats.txt"), &stats.to_table(name))?;
    } else {
        emit(&format!("{json}\n"));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(s: &Settings) -> Result<ExitCode> {
    init_threads(s)?;
    let trials = s.parse::<usize>("trials")?.unwrap_or(20);
    let seed = s.parse::<u64>("seed")?.unwrap_or(0);
    let head: HeadKind = match s.get("head") {
        Some(h) => h
            .parse()
            .map_err(|e: ran_core::Error| usage(e.to_string()))?,
        None => HeadKind::Ran,
    };
    let mut worst = 0.0f64;
    let mut failed = 0;
    let mut lines = String::from("case,alpha,gap,max_relative_error,passed\n");
    for case in gradcheck_cases(trials, seed, head) {
        let out = run_gradcheck_case(&case)?;
        let ok = out.report.passed();
        failed += usize::from(!ok);
        worst = worst.max(out.report.max_relative_error);
        emit(&format!(
            "{case}: max rel err {:.3e} {}\n",
            out.report.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        ));
        lines.push_str(&format!(
            "{case},{},{},{},{ok}\n",
            out.alpha, out.gap, out.report.max_relative_error
        ));
    }
    emit(&format!(
        "{trials} trials, {failed} failed, worst relative error {worst:.3e}\n"
    ));
    if s.get("out").is_some() {
        write(&out_dir(s)?.join("gradcheck.csv"), &lines)?;
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("bad {what} `{v}`")))
        })
        .collect()
}

/// Per-run metrics and checkpoints, e.g. `metrics_alpha_0.02.json`.
fn write_sweep_runs(dir: &Path, column: &str, rows: &[SweepRow]) -> Result<()> {
    for r in rows {
        write_metrics(dir, &format!("metrics_{column}_{}", r.value), &r.metrics)?;
        write_checkpoint(
            &dir.join(format!("checkpoint_{column}_{}.bin", r.value)),
            &r.params,
        )?;
    }
    Ok(())
}

fn cmd_sweep(s: &Settings) -> Result<ExitCode> {
    init_threads(s)?;
    let cfg = train_config(s)?;
    let modes = ["alphas", "ratios", "heads"]
        .iter()
        .filter(|k| s.get(k).is_some())
        .count();
    if modes != 1 {
        return Err(usage("give exactly one of --alphas, --ratios, --heads"));
    }
    let (train_path, train_records) =
        manifest(s, "train")?.ok_or_else(|| usage("--train is required"))?;
    let (test_path, test_records) =
        manifest(s, "test")?.ok_or_else(|| usage("--test is required"))?;
    let classes = infer_classes(s, &[&train_records, &test_records])?;
    let mut s = s.clone();
    s.set("classes", classes)?;
    let dir = out_dir(&s)?;
    write(&dir.join(RESOLVED_CONFIG), &resolved_text(&cfg, &s))?;
    let train_set = dataset(&s, &train_path, &train_records, classes)?;
    let test_set = dataset(&s, &test_path, &test_records, classes)?;

    if let Some(a) = s.get("alphas") {
        let rows = margin_sweep(&cfg, &train_set, &test_set, &parse_list(a, "margin")?)?;
        write_sweep_runs(&dir, "alpha", &rows)?;
        let csv = sweep_csv("alpha", &rows);
        write(&dir.join("sweep_alpha.csv"), &csv)?;
        emit(&csv);
    } else if let Some(r) = s.get("ratios") {
        let rows = region_size_sweep(&cfg, &train_set, &test_set, &parse_list(r, "ratio")?)?;
        write_sweep_runs(&dir, "ratio", &rows)?;
        let csv = sweep_csv("ratio", &rows);
        write(&dir.join("sweep_ratio.csv"), &csv)?;
        emit(&csv);
    } else if let Some(h) = s.get("heads") {
        let heads: Vec<HeadKind> = parse_list(h, "head")?;
        let results = compare_heads(&cfg, &train_set, &test_set, &heads)?;
        let mut all = serde_json::Map::new();
        for r in &results {
            write_metrics(&dir, &format!("metrics_{}", r.head), &r.metrics)?;
            write_checkpoint(&dir.join(format!("checkpoint_{}.bin", r.head)), &r.params)?;
            all.insert(r.head.to_string(), serde_json::to_value(&r.metrics)?);
        }
        let json = serde_json::to_string_pretty(&all)?;
        write(&dir.join("heads.json"), &json)?;
        emit(&format!("{json}\n"));
    }
    Ok(ExitCode::SUCCESS)
}
