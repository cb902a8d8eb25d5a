//! Campaign harness: prefilter, attack, positioning filter, aggregate, report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ascm::{ImagingParams, Renderer, SarImage, ScattererSet};
use crate::attack::{fgsm, run_baseline, run_otsa, AttackConfig, AttackKind, AttackResult};
use crate::classifier::{Classifier, Prediction};
use crate::dataio::LabeledSample;
use crate::error::{OtsaError, Result};
use crate::positioning::{is_on_target, TargetMask};
use crate::seed::{derive_seed, rng_for};

/// Success rates reported for AlexNet on MSTAR with one scatterer; kept for
/// comparison only, never asserted.
pub const REFERENCE_BASELINE_RATE_N1: f64 = 0.77;
pub const REFERENCE_OTSA_RATE_N1: f64 = 0.89;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub id: String,
    /// Attack label, see [`AttackSpec::label`].
    pub attack: String,
    pub pre_pred: usize,
    pub post_pred: usize,
    pub success: bool,
    pub n_kept: usize,
    pub iters: usize,
}

/// Per-run data that does not fit the CSV contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDetail {
    pub id: String,
    pub attack: String,
    /// Fraction of the attack's final scatterers on target (before filtering).
    pub on_target_fraction: f64,
    pub early_stop: bool,
    /// Ground-truth confidence at attack exit (before filtering).
    pub exit_confidence: f64,
    pub unfiltered_success: bool,
    pub scatterers: ScattererSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Scatterer count; ignored for FGSM.
    pub n_scatterers: usize,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, n_scatterers: usize) -> Self {
        Self { kind, n_scatterers }
    }

    /// `otsa_n2`, `baseline_n1`, `fgsm`.
    pub fn label(&self) -> String {
        if self.kind.is_scatterer_based() {
            format!("{}_n{}", self.kind, self.n_scatterers)
        } else {
            self.kind.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub attacks: Vec<AttackSpec>,
    /// Shared settings; `n_scatterers` and `seed` are overridden per run.
    pub attack: AttackConfig,
    pub fgsm_epsilon: f64,
    /// Draw this many prefiltered samples per class; `None` keeps all.
    pub per_class: Option<usize>,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        let mut attacks = Vec::new();
        for n in 1..=3 {
            attacks.push(AttackSpec::new(AttackKind::Baseline, n));
            attacks.push(AttackSpec::new(AttackKind::Otsa, n));
        }
        Self {
            attacks,
            attack: AttackConfig::default(),
            fgsm_epsilon: 0.05,
            per_class: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub campaign: CampaignConfig,
    pub imaging: ImagingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    /// No sample survived the prefilter; rates are then absent.
    pub empty: bool,
    /// Prefiltered images attacked (= outcomes per attack).
    pub sample_size: usize,
    /// Attack labels in configuration order.
    pub attacks: Vec<String>,
    pub success_rates: BTreeMap<String, f64>,
    /// Scatterer attacks only.
    pub on_target_fractions: BTreeMap<String, f64>,
    pub config: ConfigSnapshot,
    pub outcomes: Vec<ImageOutcome>,
    pub details: Vec<OutcomeDetail>,
}

impl CampaignReport {
    pub fn outcomes_for(&self, attack: &str) -> impl Iterator<Item = &ImageOutcome> + '_ {
        let attack = attack.to_string();
        self.outcomes.iter().filter(move |o| o.attack == attack)
    }

    pub fn details_for(&self, attack: &str) -> impl Iterator<Item = &OutcomeDetail> + '_ {
        let attack = attack.to_string();
        self.details.iter().filter(move |o| o.attack == attack)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Samples the model already classifies correctly, in input order.
pub fn prefilter_correct<C: Classifier + ?Sized>(
    model: &C,
    samples: &[LabeledSample],
) -> Result<Vec<LabeledSample>> {
    let keep: Vec<bool> = samples
        .par_iter()
        .map(|s| Ok(model.predict(&s.image)?.class == s.label))
        .collect::<Result<_>>()?;
    Ok(samples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredAttack {
    pub kept: ScattererSet,
    pub adversarial: SarImage,
    pub prediction: Prediction,
    pub success: bool,
}

/// Drops off-target scatterers, re-renders and re-predicts.
pub fn enforce_positioning_filter<C: Classifier + ?Sized>(
    result: &AttackResult,
    image: &SarImage,
    label: usize,
    mask: &TargetMask,
    model: &C,
    renderer: &Renderer,
) -> Result<FilteredAttack> {
    let kept: ScattererSet = result
        .scatterers
        .iter()
        .copied()
        .filter(|s| is_on_target(s.x, s.y, mask))
        .collect();
    let adversarial = if kept.is_empty() {
        image.clone()
    } else {
        image.add(&renderer.render_window(&kept, image.rows, image.cols)?)?
    };
    let prediction = model.predict(&adversarial)?;
    // Nothing left means no attack happened.
    let success = !kept.is_empty() && prediction.class != label;
    Ok(FilteredAttack {
        kept,
        adversarial,
        prediction,
        success,
    })
}

pub fn success_rate(outcomes: &[ImageOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(OtsaError::UndefinedRate);
    }
    Ok(outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64)
}

/// Per-class draw of `k` samples (all when fewer), ordered by id.
fn balanced_subset(samples: Vec<LabeledSample>, per_class: Option<usize>, seed: u64) -> Vec<LabeledSample> {
    let mut out = match per_class {
        None => samples,
        Some(k) => {
            let mut by_class: BTreeMap<usize, Vec<LabeledSample>> = BTreeMap::new();
            for s in samples {
                by_class.entry(s.label).or_default().push(s);
            }
            let mut rng = rng_for(seed, "campaign.sample");
            let mut out = Vec::new();
            for (_, mut group) in by_class {
                group.sort_by(|a, b| a.id.cmp(&b.id));
                group.shuffle(&mut rng);
                group.truncate(k);
                out.extend(group);
            }
            out
        }
    };
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Seed of the scatterer initialization; shared by OTSA and baseline so both
/// start from the same scatterers.
pub fn attack_seed(root: u64, id: &str, n_scatterers: usize) -> u64 {
    derive_seed(root, &format!("attack/{id}/n{n_scatterers}"))
}

fn run_one<C: Classifier + ?Sized>(
    sample: &LabeledSample,
    spec: &AttackSpec,
    model: &C,
    cfg: &CampaignConfig,
    renderer: &Renderer,
) -> Result<(ImageOutcome, Option<OutcomeDetail>)> {
    let label = spec.label();
    if spec.kind == AttackKind::Fgsm {
        let adv = fgsm(&sample.image, sample.label, model, cfg.fgsm_epsilon)?;
        let post = model.predict(&adv)?.class;
        return Ok((
            ImageOutcome {
                id: sample.id.clone(),
                attack: label,
                pre_pred: sample.label,
                post_pred: post,
                success: post != sample.label,
                n_kept: 0,
                iters: 1,
            },
            None,
        ));
    }
    let attack_cfg = AttackConfig {
        n_scatterers: spec.n_scatterers,
        seed: attack_seed(cfg.seed, &sample.id, spec.n_scatterers),
        ..cfg.attack.clone()
    };
    let result = match spec.kind {
        AttackKind::Otsa => run_otsa(&sample.image, sample.label, &sample.mask, model, &attack_cfg, renderer)?,
        _ => run_baseline(&sample.image, sample.label, &sample.mask, model, &attack_cfg, renderer)?,
    };
    let filtered = enforce_positioning_filter(&result, &sample.image, sample.label, &sample.mask, model, renderer)?;
    Ok((
        ImageOutcome {
            id: sample.id.clone(),
            attack: label.clone(),
            pre_pred: sample.label,
            post_pred: filtered.prediction.class,
            success: filtered.success,
            n_kept: filtered.kept.len(),
            iters: result.iterations,
        },
        Some(OutcomeDetail {
            id: sample.id.clone(),
            attack: label,
            on_target_fraction: result.on_target_fraction(),
            early_stop: result.early_stop,
            exit_confidence: result.confidence,
            unfiltered_success: result.success,
            scatterers: result.scatterers,
        }),
    ))
}

/// Runs every configured attack on every prefiltered sample. Runs are
/// independent and may execute on the current rayon pool; results are
/// collected in (sample id, attack order) order.
pub fn run_campaign<C: Classifier + ?Sized>(
    samples: &[LabeledSample],
    model: &C,
    cfg: &CampaignConfig,
    renderer: &Renderer,
) -> Result<CampaignReport> {
    if samples.is_empty() {
        return Err(OtsaError::param("campaign dataset is empty"));
    }
    if cfg.attacks.is_empty() {
        return Err(OtsaError::Config("campaign has no attacks".into()));
    }
    cfg.attack.validate()?;
    let labels: Vec<String> = cfg.attacks.iter().map(AttackSpec::label).collect();
    let mut uniq = labels.clone();
    uniq.sort();
    uniq.dedup();
    if uniq.len() != labels.len() {
        return Err(OtsaError::Config("duplicate attack in campaign".into()));
    }

    let chosen = balanced_subset(prefilter_correct(model, samples)?, cfg.per_class, cfg.seed);
    let jobs: Vec<(usize, usize)> = (0..chosen.len())
        .flat_map(|i| (0..cfg.attacks.len()).map(move |a| (i, a)))
        .collect();
    let runs: Vec<(ImageOutcome, Option<OutcomeDetail>)> = jobs
        .par_iter()
        .map(|&(i, a)| run_one(&chosen[i], &cfg.attacks[a], model, cfg, renderer))
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::with_capacity(runs.len());
    let mut details = Vec::new();
    for (o, d) in runs {
        outcomes.push(o);
        details.extend(d);
    }
    let mut success_rates = BTreeMap::new();
    let mut on_target_fractions = BTreeMap::new();
    if !chosen.is_empty() {
        for (spec, label) in cfg.attacks.iter().zip(&labels) {
            let mine: Vec<ImageOutcome> = outcomes.iter().filter(|o| &o.attack == label).cloned().collect();
            success_rates.insert(label.clone(), success_rate(&mine)?);
            if spec.kind.is_scatterer_based() {
                let fr: Vec<f64> = details
                    .iter()
                    .filter(|d| &d.attack == label)
                    .map(|d| d.on_target_fraction)
                    .collect();
                on_target_fractions.insert(label.clone(), fr.iter().sum::<f64>() / fr.len() as f64);
            }
        }
    }
    Ok(CampaignReport {
        empty: chosen.is_empty(),
        sample_size: chosen.len(),
        attacks: labels,
        success_rates,
        on_target_fractions,
        config: ConfigSnapshot {
            campaign: cfg.clone(),
            imaging: *renderer.params(),
        },
        outcomes,
        details,
    })
}

pub fn outcomes_to_csv(outcomes: &[ImageOutcome]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        w.serialize(o).map_err(|e| OtsaError::format("csv", e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| OtsaError::format("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_outcomes_csv(text: &str) -> Result<Vec<ImageOutcome>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r
        .headers()
        .map_err(|e| OtsaError::format("csv header", e.to_string()))?
        .clone();
    let expected = ["id", "attack", "pre_pred", "post_pred", "success", "n_kept", "iters"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(OtsaError::format(
            "csv header",
            format!("expected {}", expected.join(",")),
        ));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| OtsaError::format("csv row", e.to_string())))
        .collect()
}

const SVG_PLOT_HEIGHT: f64 = 200.0;
const SVG_BAR_WIDTH: f64 = 28.0;
const SVG_TOP: f64 = 30.0;
const SVG_LEFT: f64 = 50.0;

fn bar_color(kind: &str) -> &'static str {
    match kind {
        "otsa" => "#1f77b4",
        "baseline" => "#ff7f0e",
        _ => "#2ca02c",
    }
}

/// Grouped bar chart: one group per scatterer count, one bar per attack kind.
/// Bar height is `rate · 200` px.
pub fn render_svg(report: &CampaignReport) -> String {
    let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for label in &report.attacks {
        let (kind, group) = match label.rsplit_once("_n") {
            Some((k, n)) => (k.to_string(), format!("N={n}")),
            None => (label.clone(), label.clone()),
        };
        let rate = report.success_rates.get(label).copied().unwrap_or(0.0);
        match groups.iter_mut().find(|(g, _)| *g == group) {
            Some((_, bars)) => bars.push((kind, rate)),
            None => groups.push((group, vec![(kind, rate)])),
        }
    }
    let gap = SVG_BAR_WIDTH;
    let width_of = |bars: usize| bars as f64 * SVG_BAR_WIDTH + gap;
    let total_w = SVG_LEFT + groups.iter().map(|(_, b)| width_of(b.len())).sum::<f64>() + gap;
    let base = SVG_TOP + SVG_PLOT_HEIGHT;
    let total_h = base + 40.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{SVG_LEFT}" y="18" font-family="sans-serif" font-size="13">Attack success rate (n = {})</text>"#,
        report.sample_size
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * SVG_PLOT_HEIGHT;
        let _ = writeln!(
            s,
            r##"<line x1="{SVG_LEFT}" y1="{y}" x2="{total_w}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.2}</text>"##,
            SVG_LEFT - 4.0,
            y + 3.0
        );
    }
    let mut x = SVG_LEFT + gap;
    for (group, bars) in &groups {
        let start = x;
        for (kind, rate) in bars {
            let h = rate * SVG_PLOT_HEIGHT;
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-kind="{kind}" data-group="{group}" x="{x}" y="{}" width="{SVG_BAR_WIDTH}" height="{h}" fill="{}"><title>{kind} {group}: {rate:.3}</title></rect>"#,
                base - h,
                bar_color(kind)
            );
            x += SVG_BAR_WIDTH;
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{group}</text>"#,
            (start + x) / 2.0,
            base + 16.0
        );
        x += gap;
    }
    let mut lx = SVG_LEFT;
    let mut seen: Vec<&str> = Vec::new();
    for (_, bars) in &groups {
        for (kind, _) in bars {
            if seen.contains(&kind.as_str()) {
                continue;
            }
            seen.push(kind);
            let _ = writeln!(
                s,
                r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{kind}</text>"#,
                base + 24.0,
                bar_color(kind),
                lx + 14.0,
                base + 33.0
            );
            lx += 80.0;
        }
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
}

impl ReportPaths {
    /// `outcomes.csv`, `report.json`, `success_rates.svg` under `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            csv: dir.join("outcomes.csv"),
            json: dir.join("report.json"),
            svg: dir.join("success_rates.svg"),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| OtsaError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| OtsaError::io(path, e))
}

pub fn emit_report(report: &CampaignReport, paths: &ReportPaths) -> Result<()> {
    write_file(&paths.csv, &outcomes_to_csv(&report.outcomes)?)?;
    write_file(&paths.json, &report.to_json())?;
    write_file(&paths.svg, &render_svg(report))
}

pub fn read_report(path: &Path) -> Result<CampaignReport> {
    let text = std::fs::read_to_string(path).map_err(|e| OtsaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| OtsaError::format("report", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ascm::{ScattererParams, SarImage};
    use crate::classifier::LinearSoftmax;
    use crate::gradient::PixelGradient;

    const SIDE: usize = 32;

    fn renderer() -> Renderer {
        Renderer::new(&ImagingParams::new(0.591e9, 9.6e9, 0.05, 48, 48).unwrap()).unwrap()
    }

    /// Logits are constant: always predicts `class`.
    struct Constant {
        class: usize,
    }

    impl Classifier for Constant {
        fn num_classes(&self) -> usize {
            3
        }
        fn input_dims(&self) -> (usize, usize) {
            (SIDE, SIDE)
        }
        fn logits(&self, _: &SarImage) -> Result<Vec<f64>> {
            let mut l = vec![0.0; 3];
            l[self.class] = 5.0;
            Ok(l)
        }
        fn logits_input_vjp(&self, _: &SarImage, _: &[f64]) -> Result<PixelGradient> {
            Ok(PixelGradient(SarImage::zeros(SIDE, SIDE)))
        }
    }

    /// Brightness classifier: class 1 once total brightness exceeds `t`.
    fn brightness_model(t: f64) -> LinearSoftmax {
        let n = SIDE * SIDE;
        let mut w = vec![0.0; 2 * n];
        for i in 0..n {
            w[n + i] = 1.0;
        }
        LinearSoftmax::new(SIDE, SIDE, w, vec![t, 0.0]).unwrap()
    }

    fn sample(id: &str, label: usize, value: f64) -> LabeledSample {
        let mask = TargetMask::new(SIDE, SIDE, (14..18).flat_map(|x| (14..18).map(move |y| (x, y)))).unwrap();
        LabeledSample {
            id: id.into(),
            image: SarImage::from_pixels(SIDE, SIDE, vec![value; SIDE * SIDE]).unwrap(),
            mask,
            label,
        }
    }

    fn outcome(id: &str, attack: &str, success: bool) -> ImageOutcome {
        ImageOutcome {
            id: id.into(),
            attack: attack.into(),
            pre_pred: 0,
            post_pred: usize::from(success),
            success,
            n_kept: 1,
            iters: 3,
        }
    }

    #[test]
    fn prefilter_cases() {
        let samples = vec![sample("a", 0, 0.0), sample("b", 1, 0.0), sample("c", 0, 0.0)];
        let kept = prefilter_correct(&Constant { class: 0 }, &samples).unwrap();
        assert_eq!(kept.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert!(prefilter_correct(&Constant { class: 0 }, &[]).unwrap().is_empty());
        let model = brightness_model(10.0);
        let perfect = vec![sample("dark", 0, 0.0), sample("bright", 1, 1.0)];
        assert_eq!(prefilter_correct(&model, &perfect).unwrap(), perfect);
    }

    #[test]
    fn rates() {
        assert!(matches!(success_rate(&[]), Err(OtsaError::UndefinedRate)));
        let all: Vec<_> = (0..3).map(|i| outcome(&i.to_string(), "x", true)).collect();
        assert_eq!(success_rate(&all).unwrap(), 1.0);
        let mut some = all.clone();
        some.push(outcome("9", "x", false));
        assert_eq!(success_rate(&some).unwrap(), 0.75);
    }

    fn result_with(set: ScattererSet, image: &SarImage, rd: &Renderer, mask: &TargetMask) -> AttackResult {
        let adversarial = image.add(&rd.render_window(&set, SIDE, SIDE).unwrap()).unwrap();
        AttackResult {
            kind: AttackKind::Otsa,
            on_target: crate::attack::on_target_flags(&set, mask),
            scatterers: set,
            adversarial,
            predicted_class: 1,
            probabilities: vec![0.0, 1.0],
            iterations: 1,
            success: true,
            confidence: 0.0,
            early_stop: false,
        }
    }

    #[test]
    fn positioning_filter() {
        let rd = renderer();
        let s = sample("a", 0, 0.0);
        let model = brightness_model(0.5);
        let on1 = ScattererParams::point(2.0, 15.0, 15.0);
        let on2 = ScattererParams::point(1.0, 16.2, 14.4);
        let off = ScattererParams::point(3.0, 4.0, 25.0);

        let all_on = result_with(ScattererSet::new(vec![on1, on2]), &s.image, &rd, &s.mask);
        let f = enforce_positioning_filter(&all_on, &s.image, 0, &s.mask, &model, &rd).unwrap();
        assert_eq!(f.kept, all_on.scatterers);
        assert_eq!(f.prediction, model.predict(&all_on.adversarial).unwrap());

        let all_off = result_with(ScattererSet::new(vec![off]), &s.image, &rd, &s.mask);
        let f = enforce_positioning_filter(&all_off, &s.image, 0, &s.mask, &model, &rd).unwrap();
        assert!(f.kept.is_empty());
        assert_eq!(f.adversarial, s.image);
        assert!(!f.success);

        // Image is linear in the field: X + I(on1 + on2) == X + |IDFT(E1 + E2)|.
        let mixed = result_with(ScattererSet::new(vec![on1, off, on2]), &s.image, &rd, &s.mask);
        let f = enforce_positioning_filter(&mixed, &s.image, 0, &s.mask, &model, &rd).unwrap();
        assert_eq!(f.kept.len(), 2);
        let mut field = rd.scatterer_field(&on1);
        for (a, b) in field.values.iter_mut().zip(&rd.scatterer_field(&on2).values) {
            *a += b;
        }
        let expected = rd.image_from_field(&field);
        for x in 0..SIDE {
            for y in 0..SIDE {
                assert!((f.adversarial.at(x, y) - expected.at(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_quoting() {
        let rows = vec![outcome("plain", "otsa_n1", true), outcome("has,comma \"q\"", "fgsm", false)];
        let text = outcomes_to_csv(&rows).unwrap();
        assert!(text.starts_with("id,attack,pre_pred,post_pred,success,n_kept,iters\n"));
        assert_eq!(parse_outcomes_csv(&text).unwrap(), rows);
        assert!(parse_outcomes_csv("a,b\n1,2\n").is_err());
        assert!(parse_outcomes_csv("id,attack,pre_pred,post_pred,success,n_kept,iters\nx,y,z,0,true,1,1\n").is_err());
    }

    fn campaign(attacks: Vec<AttackSpec>) -> CampaignConfig {
        let mut attack = AttackConfig::default();
        attack.theta_max[1] = 31.0;
        attack.theta_max[2] = 31.0;
        attack.max_iters = 5;
        CampaignConfig {
            attacks,
            attack,
            fgsm_epsilon: 0.1,
            per_class: None,
            seed: 4,
        }
    }

    #[test]
    fn empty_and_always_successful_campaigns() {
        let rd = renderer();
        let samples = vec![sample("a", 1, 0.0)];
        let cfg = campaign(vec![AttackSpec::new(AttackKind::Otsa, 1)]);
        let r = run_campaign(&samples, &Constant { class: 0 }, &cfg, &rd).unwrap();
        assert!(r.empty);
        assert!(r.success_rates.is_empty());
        assert_eq!(r.sample_size, 0);

        // Dark image is class 0; one bright scatterer flips it.
        let model = brightness_model(0.3);
        let samples = vec![sample("a", 0, 0.0)];
        let cfg = campaign(vec![AttackSpec::new(AttackKind::Otsa, 1), AttackSpec::new(AttackKind::Fgsm, 1)]);
        let r = run_campaign(&samples, &model, &cfg, &rd).unwrap();
        assert_eq!(r.sample_size, 1);
        assert_eq!(r.success_rates["otsa_n1"], 1.0);
        assert_eq!(r.success_rates["fgsm"], 1.0);
        assert_eq!(r.outcomes.len(), 2);
        assert_eq!(r.on_target_fractions["otsa_n1"], 1.0);
        assert!(!r.on_target_fractions.contains_key("fgsm"));
    }

    #[test]
    fn balanced_sampling_and_determinism() {
        let rd = renderer();
        let model = brightness_model(50.0);
        let samples: Vec<_> = (0..6).map(|i| sample(&format!("s{i}"), 0, 0.0)).collect();
        let mut cfg = campaign(vec![AttackSpec::new(AttackKind::Baseline, 2), AttackSpec::new(AttackKind::Otsa, 2)]);
        cfg.per_class = Some(4);
        let a = run_campaign(&samples, &model, &cfg, &rd).unwrap();
        let b = run_campaign(&samples, &model, &cfg, &rd).unwrap();
        assert_eq!(a.sample_size, 4);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(outcomes_to_csv(&a.outcomes).unwrap(), outcomes_to_csv(&b.outcomes).unwrap());
        // Baseline and OTSA start from the same scatterers.
        let ids: Vec<_> = a.outcomes_for("otsa_n2").map(|o| o.id.clone()).collect();
        assert_eq!(ids, a.outcomes_for("baseline_n2").map(|o| o.id.clone()).collect::<Vec<_>>());
        assert!(ids.windows(2).all(|w| w[0] < w[1]));

        cfg.attacks.push(AttackSpec::new(AttackKind::Otsa, 2));
        assert!(run_campaign(&samples, &model, &cfg, &rd).is_err());
    }

    #[test]
    fn report_files() {
        let rd = renderer();
        let model = brightness_model(0.3);
        let cfg = campaign(vec![AttackSpec::new(AttackKind::Otsa, 1), AttackSpec::new(AttackKind::Fgsm, 1)]);
        let report = run_campaign(&[sample("a", 0, 0.0)], &model, &cfg, &rd).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = ReportPaths::in_dir(&dir.path().join("out"));
        emit_report(&report, &paths).unwrap();
        let csv = std::fs::read_to_string(&paths.csv).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let first = (std::fs::read(&paths.json).unwrap(), std::fs::read(&paths.svg).unwrap());
        emit_report(&report, &paths).unwrap();
        assert_eq!(first.0, std::fs::read(&paths.json).unwrap());
        assert_eq!(first.1, std::fs::read(&paths.svg).unwrap());
        assert_eq!(read_report(&paths.json).unwrap(), report);
        assert_eq!(parse_outcomes_csv(&csv).unwrap(), report.outcomes);
    }

    #[test]
    fn svg_heights_are_linear() {
        let rd = renderer();
        let model = brightness_model(0.3);
        let cfg = campaign(vec![AttackSpec::new(AttackKind::Baseline, 1), AttackSpec::new(AttackKind::Otsa, 1)]);
        let mut report = run_campaign(&[sample("a", 0, 0.0)], &model, &cfg, &rd).unwrap();
        report.success_rates.insert("baseline_n1".into(), 0.5);
        report.success_rates.insert("otsa_n1".into(), 0.75);
        let svg = render_svg(&report);
        let heights: Vec<f64> = svg
            .lines()
            .filter(|l| l.contains("class=\"bar\""))
            .map(|l| {
                let h = l.split("height=\"").nth(1).unwrap();
                h[..h.find('"').unwrap()].parse().unwrap()
            })
            .collect();
        assert_eq!(heights.len(), 2);
        assert!((heights[0] * 3.0 - heights[1] * 2.0).abs() < 1e-9);
    }
}
