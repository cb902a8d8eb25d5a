//! The `otsa` command line.
//!
//! Settings come from a `key=value` file (`--config`), then `--set`
//! overrides, then dedicated flags. Keys are grouped by prefix:
//!
//! ```text
//! seed=7                      # root seed; OTSA_SEED is the fallback
//! output=otsa_out
//! data.per_class=60           data.classes, data.size, data.speckle, ...
//! imaging.m=128               imaging.bandwidth, imaging.center_freq, ...
//! train.epochs=40             train.learning_rate, train.optimizer, train.holdout, ...
//! attack.lambda=10            attack.step_size, attack.max_iters, attack.tau, ...
//! campaign.attacks=baseline:1,otsa:1,fgsm
//! ```
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 IO, 4 numerical.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ascm::{ImagingParams, Renderer, ScattererParams, ScattererSet, NUM_PARAMS};
use crate::attack::{fgsm, run_baseline, run_otsa, AttackConfig, AttackKind};
use crate::classifier::{accuracy, Optimizer, train_with_history, Classifier, ConvNet, ModelSpec, TrainConfig, TrainSample};
use crate::dataio::{
    generate_synthetic_dataset, holdout_split, load_dataset, prepare_sample, save_dataset, save_image,
    LabeledSample, SynthConfig, CROP_SIZE,
};
use crate::error::{OtsaError, Result};
use crate::evaluation::{
    attack_seed, emit_report, read_report, run_campaign, AttackSpec, CampaignConfig, CampaignReport,
    ReportPaths,
};
use crate::positioning::ScoreParams;
use crate::seed::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const SEED_ENV: &str = "OTSA_SEED";

pub fn exit_code(err: &OtsaError) -> i32 {
    match err {
        OtsaError::Io { .. } => EXIT_IO,
        OtsaError::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Which prefiltered split a campaign attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignSplit {
    Test,
    All,
}

/// Everything a command may need, resolved from defaults, file and flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub imaging: ImagingParams,
    pub train: TrainConfig,
    pub holdout: f64,
    pub weights: Option<PathBuf>,
    pub attack: AttackConfig,
    pub campaign: CampaignConfig,
    pub campaign_split: CampaignSplit,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("otsa_out"),
            data_dir: None,
            synth: SynthConfig::default(),
            imaging: ImagingParams::default(),
            train: TrainConfig::default(),
            holdout: 0.35,
            weights: None,
            attack: AttackConfig::default(),
            campaign: CampaignConfig::default(),
            campaign_split: CampaignSplit::Test,
        }
    }
}

fn cfg_err(key: &str, msg: impl std::fmt::Display) -> OtsaError {
    OtsaError::Config(format!("{key}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| cfg_err(key, format!("{e} ({v:?})")))
}

fn parse_vec7(key: &str, v: &str) -> Result<[f64; NUM_PARAMS]> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| parse_num::<f64>(key, p.trim()))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| cfg_err(key, format!("expected {NUM_PARAMS} comma-separated values")))
}

/// `baseline:1,otsa:2,fgsm`.
pub fn parse_attack_list(v: &str) -> Result<Vec<AttackSpec>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (kind, n) = match item.split_once(':') {
                Some((k, n)) => (k, parse_num::<usize>("campaign.attacks", n)?),
                None => (item, 1),
            };
            let kind: AttackKind = kind.parse()?;
            if n == 0 {
                return Err(cfg_err("campaign.attacks", "scatterer count must be at least 1"));
            }
            Ok(AttackSpec::new(kind, n))
        })
        .collect()
}

/// Parses `key=value` lines; `#` starts a comment. Later keys win.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| OtsaError::Config(format!("line {}: expected key=value", no + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Applies `pairs` over the defaults. `env_seed` is used when no `seed`
    /// key is present.
    pub fn from_pairs(pairs: &BTreeMap<String, String>, env_seed: Option<&str>) -> Result<Self> {
        let mut c = RunConfig::default();
        let seed_text = pairs.get("seed").map(String::as_str).or(env_seed);
        if let Some(s) = seed_text {
            c.seed = parse_num("seed", s)?;
        }
        let (mut bw, mut fc, mut phi) = (c.imaging.bandwidth, c.imaging.center_freq, c.imaging.aperture_angle);
        let (mut m, mut n) = (c.imaging.m_star, c.imaging.n_star);
        let (mut sigma, mut max) = (c.attack.score.sigma, c.attack.score.max);
        for (k, v) in pairs {
            let key = k.as_str();
            match key {
                "seed" => {}
                "output" => c.output = PathBuf::from(v),
                "data.dir" => c.data_dir = Some(PathBuf::from(v)),
                "data.classes" => c.synth.classes = parse_num(key, v)?,
                "data.per_class" => c.synth.per_class = parse_num(key, v)?,
                "data.size" => c.synth.size = parse_num(key, v)?,
                "data.speckle" => c.synth.speckle = parse_num(key, v)?,
                "data.jitter" => c.synth.jitter = parse_num(key, v)?,
                "data.shadow_length" => c.synth.shadow_length = parse_num(key, v)?,
                "data.target_level" => c.synth.target_level = parse_num(key, v)?,
                "data.background_level" => c.synth.background_level = parse_num(key, v)?,
                "data.shadow_level" => c.synth.shadow_level = parse_num(key, v)?,
                "imaging.bandwidth" => bw = parse_num(key, v)?,
                "imaging.center_freq" => fc = parse_num(key, v)?,
                "imaging.aperture_angle" => phi = parse_num(key, v)?,
                "imaging.m" => m = parse_num(key, v)?,
                "imaging.n" => n = parse_num(key, v)?,
                "train.epochs" => c.train.epochs = parse_num(key, v)?,
                "train.learning_rate" => c.train.learning_rate = parse_num(key, v)?,
                "train.batch_size" => c.train.batch_size = parse_num(key, v)?,
                "train.lr_decay" => c.train.lr_decay = parse_num(key, v)?,
                "train.optimizer" => {
                    c.train.optimizer = match v.as_str() {
                        "adam" => Optimizer::Adam,
                        "sgd" => Optimizer::Sgd,
                        _ => return Err(cfg_err(key, "expected adam or sgd")),
                    }
                }
                "train.holdout" => c.holdout = parse_num(key, v)?,
                "train.weights" => c.weights = Some(PathBuf::from(v)),
                "attack.n" => c.attack.n_scatterers = parse_num(key, v)?,
                "attack.lambda" => c.attack.lambda = parse_num(key, v)?,
                "attack.sigma" => sigma = parse_num(key, v)?,
                "attack.max" => max = parse_num(key, v)?,
                "attack.step_size" => c.attack.step_size = parse_num(key, v)?,
                "attack.max_iters" => c.attack.max_iters = parse_num(key, v)?,
                "attack.tau" => c.attack.tau = parse_num(key, v)?,
                "attack.theta_min" => c.attack.theta_min = parse_vec7(key, v)?,
                "attack.theta_max" => c.attack.theta_max = parse_vec7(key, v)?,
                "campaign.attacks" => c.campaign.attacks = parse_attack_list(v)?,
                "campaign.per_class" => {
                    c.campaign.per_class = match v.as_str() {
                        "all" | "0" => None,
                        _ => Some(parse_num(key, v)?),
                    }
                }
                "campaign.fgsm_epsilon" => c.campaign.fgsm_epsilon = parse_num(key, v)?,
                "campaign.split" => {
                    c.campaign_split = match v.as_str() {
                        "test" => CampaignSplit::Test,
                        "all" => CampaignSplit::All,
                        _ => return Err(cfg_err(key, "expected test or all")),
                    }
                }
                _ => return Err(OtsaError::Config(format!("unknown key {key:?}"))),
            }
        }
        c.imaging = ImagingParams::new(bw, fc, phi, m, n).map_err(|e| cfg_err("imaging", e))?;
        c.attack.score = ScoreParams { sigma, max };
        c.attack.validate().map_err(|e| cfg_err("attack", e))?;
        c.synth.validate().map_err(|e| cfg_err("data", e))?;
        if !(0.0..1.0).contains(&c.holdout) {
            return Err(cfg_err("train.holdout", "must lie in [0, 1)"));
        }
        c.synth.seed = derive_seed(c.seed, "synth");
        c.train.seed = derive_seed(c.seed, "train");
        c.campaign.seed = derive_seed(c.seed, "campaign");
        c.campaign.attack = c.attack.clone();
        Ok(c)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output.join("data"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.json")
    }

    pub fn weights_path(&self) -> PathBuf {
        self.weights.clone().unwrap_or_else(|| self.output.join("model.otsaw"))
    }

    pub fn campaign_dir(&self) -> PathBuf {
        self.output.join("campaign")
    }
}

#[derive(Debug, Parser)]
#[command(name = "otsa", version, about = "On-target scatterer attacks on SAR image classifiers")]
struct Cli {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-image attacks; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Otsa,
    Baseline,
    Fgsm,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    GenData,
    /// Train the classifier and report held-out accuracy.
    Train,
    /// Attack one image of the dataset.
    Attack {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        image: String,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Scatterer count (default: attack.n).
        #[arg(short = 'n', long)]
        scatterers: Option<usize>,
    },
    /// Run the configured attack campaign and write reports.
    Campaign,
    /// Render scatterers alone to an image.
    Render {
        /// "A,x,y,gamma,L,alpha,phi_bar" (repeatable).
        #[arg(long, required = true, allow_hyphen_values = true)]
        params: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-emit CSV/SVG from a report JSON and print its summary.
    Report {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs, returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut pairs = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| OtsaError::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| OtsaError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(seed) = cli.seed {
        pairs.insert("seed".into(), seed.to_string());
    }
    if let Some(o) = &cli.out {
        pairs.insert("output".into(), o.display().to_string());
    }
    let env = std::env::var(SEED_ENV).ok();
    RunConfig::from_pairs(&pairs, env.as_deref())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    if cli.jobs == 0 {
        return Err(OtsaError::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| OtsaError::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg, out),
        Command::Train => cmd_train(&cfg, out),
        Command::Attack {
            kind,
            image,
            epsilon,
            scatterers,
        } => {
            let kind = match kind {
                KindArg::Otsa => AttackKind::Otsa,
                KindArg::Baseline => AttackKind::Baseline,
                KindArg::Fgsm => AttackKind::Fgsm,
            };
            cmd_attack(&cfg, kind, &image, epsilon, scatterers, out)
        }
        Command::Campaign => pool.install(|| campaign_report(&cfg)).and_then(|r| finish_campaign(&cfg, &r, out)),
        Command::Render { params, output } => cmd_render(&cfg, &params, output.as_deref(), out),
        Command::Report { input } => cmd_report(&cfg, input.as_deref(), out),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) {
    let _ = writeln!(out, "{line}");
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| OtsaError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| OtsaError::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| OtsaError::io(path, e))
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let samples = generate_synthetic_dataset(&cfg.synth)?;
    let manifest = save_dataset(&cfg.data_dir(), &samples)?;
    say(out, format_args!("wrote {} samples to {}", samples.len(), manifest.display()));
    Ok(())
}

fn load_samples(cfg: &RunConfig) -> Result<Vec<LabeledSample>> {
    let manifest = cfg.manifest();
    if !manifest.is_file() {
        return Err(OtsaError::Config(format!(
            "dataset manifest {} not found (run gen-data first)",
            manifest.display()
        )));
    }
    let samples = load_dataset(&manifest)?;
    if samples.is_empty() {
        return Err(OtsaError::Config("dataset manifest lists no samples".into()));
    }
    Ok(samples)
}

fn load_model(cfg: &RunConfig) -> Result<ConvNet> {
    let path = cfg.weights_path();
    if !path.is_file() {
        return Err(OtsaError::Config(format!(
            "weights file {} not found (run train first)",
            path.display()
        )));
    }
    ConvNet::load(&path)
}

/// `(train, test)` with the configured holdout.
pub fn split(cfg: &RunConfig, samples: &[LabeledSample]) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    holdout_split(samples, cfg.holdout, cfg.seed)
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let samples = load_samples(cfg)?;
    let classes = samples.iter().map(|s| s.label).max().unwrap_or(0) + 1;
    let (train_set, test_set) = split(cfg, &samples)?;
    if train_set.is_empty() {
        return Err(OtsaError::Config("training split is empty".into()));
    }
    // same intensity scale as the prepared samples used for evaluation
    let data: Vec<TrainSample> = train_set
        .iter()
        .map(|s| TrainSample {
            image: s.image.max_normalized(),
            label: s.label,
        })
        .collect();
    let spec = ModelSpec::new(CROP_SIZE, CROP_SIZE, classes.max(2));
    let (model, history) = train_with_history(&data, spec, &cfg.train)?;
    let eval_set = if test_set.is_empty() { &train_set } else { &test_set };
    let held: Vec<_> = eval_set
        .iter()
        .map(|s| prepare_sample(s, CROP_SIZE).map(|p| (p.image, p.label)))
        .collect::<Result<_>>()?;
    let acc = accuracy(&model, &held)?;
    let path = cfg.weights_path();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    model.save(&path)?;
    if let Some(last) = history.last() {
        say(out, format_args!("final training loss {last:.4}"));
    }
    say(
        out,
        format_args!(
            "accuracy {acc:.3} (train {}, {} {})",
            train_set.len(),
            if test_set.is_empty() { "train-eval" } else { "test" },
            eval_set.len()
        ),
    );
    say(out, format_args!("weights {}", path.display()));
    Ok(())
}

#[derive(Serialize)]
struct FgsmRecord<'a> {
    kind: AttackKind,
    id: &'a str,
    epsilon: f64,
    label: usize,
    predicted_class: usize,
    probabilities: Vec<f64>,
    success: bool,
}

pub fn cmd_attack(
    cfg: &RunConfig,
    kind: AttackKind,
    id: &str,
    epsilon: Option<f64>,
    scatterers: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let samples = load_samples(cfg)?;
    let raw = samples
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| OtsaError::Config(format!("no sample with id {id:?}")))?;
    let sample = prepare_sample(raw, CROP_SIZE)?;
    let model = load_model(cfg)?;
    let dir = cfg.output.join("attack");
    ensure_dir(&dir)?;
    let stem = dir.join(format!("{id}_{kind}"));
    let json_path = stem.with_extension("json");
    let image_path = stem.with_extension("pgm");

    if kind == AttackKind::Fgsm {
        let eps = epsilon.unwrap_or(cfg.campaign.fgsm_epsilon);
        let adv = fgsm(&sample.image, sample.label, &model, eps)?;
        if !adv.is_finite() {
            return Err(OtsaError::Numerical("FGSM produced non-finite pixels".into()));
        }
        let pred = model.predict(&adv)?;
        let rec = FgsmRecord {
            kind,
            id,
            epsilon: eps,
            label: sample.label,
            predicted_class: pred.class,
            success: pred.class != sample.label,
            probabilities: pred.probabilities,
        };
        save_image(&image_path, &adv)?;
        write_text(&json_path, &(serde_json::to_string_pretty(&rec).expect("record serializes") + "\n"))?;
        say(out, format_args!("{id} fgsm eps={eps}: class {} -> {}", sample.label, rec.predicted_class));
    } else {
        let n = scatterers.unwrap_or(cfg.attack.n_scatterers);
        let attack_cfg = AttackConfig {
            n_scatterers: n,
            seed: attack_seed(cfg.campaign.seed, id, n),
            ..cfg.attack.clone()
        };
        let renderer = Renderer::new(&cfg.imaging)?;
        let result = match kind {
            AttackKind::Otsa => run_otsa(&sample.image, sample.label, &sample.mask, &model, &attack_cfg, &renderer)?,
            _ => run_baseline(&sample.image, sample.label, &sample.mask, &model, &attack_cfg, &renderer)?,
        };
        if !result.adversarial.is_finite() {
            return Err(OtsaError::Numerical("attack produced non-finite pixels".into()));
        }
        let mut value = serde_json::to_value(&result).expect("result serializes");
        value["id"] = serde_json::Value::from(id);
        value["label"] = serde_json::Value::from(sample.label);
        save_image(&image_path, &result.adversarial)?;
        let scat = renderer.render_window(&result.scatterers, sample.image.rows, sample.image.cols)?;
        save_image(&dir.join(format!("{id}_{kind}_scatterers.pgm")), &scat)?;
        write_text(&json_path, &(serde_json::to_string_pretty(&value).expect("json") + "\n"))?;
        say(
            out,
            format_args!(
                "{id} {kind} N={n}: class {} -> {} after {} iterations (confidence {:.4}, on target {}/{})",
                sample.label,
                result.predicted_class,
                result.iterations,
                result.confidence,
                result.on_target.iter().filter(|&&b| b).count(),
                n
            ),
        );
    }
    say(out, format_args!("result {}", json_path.display()));
    Ok(())
}

/// Runs the campaign, writes reports and prints the summary. Uses the
/// current rayon pool.
pub fn cmd_campaign(cfg: &RunConfig, out: &mut dyn Write) -> Result<CampaignReport> {
    let report = campaign_report(cfg)?;
    finish_campaign(cfg, &report, out)?;
    Ok(report)
}

fn campaign_report(cfg: &RunConfig) -> Result<CampaignReport> {
    let samples = load_samples(cfg)?;
    let pool = match cfg.campaign_split {
        CampaignSplit::Test => split(cfg, &samples)?.1,
        CampaignSplit::All => samples,
    };
    let prepared: Vec<LabeledSample> = pool
        .iter()
        .map(|s| prepare_sample(s, CROP_SIZE))
        .collect::<Result<_>>()?;
    let model = load_model(cfg)?;
    let renderer = Renderer::new(&cfg.imaging)?;
    run_campaign(&prepared, &model, &cfg.campaign, &renderer)
}

fn finish_campaign(cfg: &RunConfig, report: &CampaignReport, out: &mut dyn Write) -> Result<()> {
    let paths = ReportPaths::in_dir(&cfg.campaign_dir());
    emit_report(report, &paths)?;
    print_summary(report, out);
    say(out, format_args!("report {}", paths.json.display()));
    Ok(())
}

fn print_summary(report: &CampaignReport, out: &mut dyn Write) {
    if report.empty {
        say(out, format_args!("empty campaign: no sample survived the prefilter"));
        return;
    }
    say(out, format_args!("images {}", report.sample_size));
    for label in &report.attacks {
        let rate = report.success_rates.get(label).copied().unwrap_or(f64::NAN);
        match report.on_target_fractions.get(label) {
            Some(f) => say(out, format_args!("{label:<12} success {rate:.3}  on-target {f:.3}")),
            None => say(out, format_args!("{label:<12} success {rate:.3}")),
        }
    }
}

pub fn cmd_render(cfg: &RunConfig, params: &[String], output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    if params.is_empty() {
        return Err(OtsaError::Config("render needs at least one --params".into()));
    }
    let set: ScattererSet = params
        .iter()
        .map(|p| ScattererParams::parse_csv(p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| OtsaError::Config(e.to_string()))?
        .into_iter()
        .collect();
    let renderer = Renderer::new(&cfg.imaging)?;
    let image = renderer.render(&set);
    if !image.is_finite() {
        return Err(OtsaError::Numerical("rendered image has non-finite pixels".into()));
    }
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.join("render.pgm"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_image(&path, &image)?;
    let (x, y) = image.argmax();
    say(out, format_args!("rendered {} scatterer(s); peak {:.6} at ({x}, {y})", set.len(), image.max()));
    say(out, format_args!("image {}", path.display()));
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig, input: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let json = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ReportPaths::in_dir(&cfg.campaign_dir()).json);
    if !json.is_file() {
        return Err(OtsaError::Config(format!("report {} not found", json.display())));
    }
    let report = read_report(&json)?;
    let dir = json.parent().unwrap_or_else(|| Path::new("."));
    let paths = ReportPaths {
        json: json.clone(),
        ..ReportPaths::in_dir(dir)
    };
    emit_report(&report, &paths)?;
    print_summary(&report, out);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> BTreeMap<String, String> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_text() {
        let m = parse_config_text("# c\nseed = 3\n\nattack.lambda=5 # trailing\nseed=4\n").unwrap();
        assert_eq!(m["seed"], "4");
        assert_eq!(m["attack.lambda"], "5");
        assert!(parse_config_text("no equals").is_err());
    }

    #[test]
    fn pairs_apply_and_validate() {
        let c = RunConfig::from_pairs(
            &pairs(&[
                ("attack.lambda", "2.5"),
                ("attack.sigma", "0.3"),
                ("imaging.m", "96"),
                ("campaign.attacks", "otsa:2, baseline:2 ,fgsm"),
                ("campaign.per_class", "3"),
            ]),
            Some("9"),
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.attack.lambda, 2.5);
        assert_eq!(c.campaign.attack.score.sigma, 0.3);
        assert_eq!(c.imaging.m_star, 96);
        assert_eq!(c.campaign.attacks.len(), 3);
        assert_eq!(c.campaign.per_class, Some(3));

        let explicit = RunConfig::from_pairs(&pairs(&[("seed", "1")]), Some("9")).unwrap();
        assert_eq!(explicit.seed, 1);
        for bad in [
            ("bogus.key", "1"),
            ("attack.tau", "1.5"),
            ("attack.theta_min", "1,2"),
            ("train.epochs", "-1"),
            ("campaign.attacks", "pgd:1"),
            ("imaging.bandwidth", "0"),
        ] {
            let r = RunConfig::from_pairs(&pairs(&[bad]), None);
            assert!(matches!(r, Err(OtsaError::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&OtsaError::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&OtsaError::Numerical("x".into())), EXIT_NUMERICAL);
        let io = OtsaError::io("/x", std::io::Error::other("boom"));
        assert_eq!(exit_code(&io), EXIT_IO);
    }
}
