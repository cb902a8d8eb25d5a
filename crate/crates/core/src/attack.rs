//! Scatterer attacks (on-target and unconstrained) and FGSM.
//!
//! Both scatterer attacks run fixed-step projected gradient ascent on
//! `L(F(X + I(Θ)), y) + (λ/N) Σ S(x_i, y_i)`. The baseline drops the score
//! term and stops on confidence alone.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ascm::{param, Renderer, SarImage, ScattererParams, ScattererSet, NUM_PARAMS};
use crate::classifier::Classifier;
use crate::error::{OtsaError, Result};
use crate::gradient::{Objective, ObjectiveEval};
use crate::positioning::{is_on_target, ScoreParams, TargetMask};
use crate::seed::rng_for;

/// Default lower bounds in `[A, x, y, γ, L, α, φ̄]` order.
pub const DEFAULT_THETA_MIN: [f64; NUM_PARAMS] = [0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0];
pub const DEFAULT_THETA_MAX: [f64; NUM_PARAMS] = [10.0, 87.0, 87.0, 1.0, 2.0, 5.0, 1.0];

/// Per-parameter multiplier on the step size; positions move in pixel units.
pub const STEP_SCALE: [f64; NUM_PARAMS] = [1.0, 5.0, 5.0, 1.0, 1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Otsa,
    Baseline,
    Fgsm,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Otsa => "otsa",
            AttackKind::Baseline => "baseline",
            AttackKind::Fgsm => "fgsm",
        }
    }

    pub fn is_scatterer_based(self) -> bool {
        !matches!(self, AttackKind::Fgsm)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = OtsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "otsa" => Ok(AttackKind::Otsa),
            "baseline" => Ok(AttackKind::Baseline),
            "fgsm" => Ok(AttackKind::Fgsm),
            other => Err(OtsaError::Config(format!(
                "unknown attack kind {other:?} (expected otsa, baseline or fgsm)"
            ))),
        }
    }
}

/// When a scatterer attack may exit before `max_iters`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Every scatterer on target and ground-truth confidence below `τ`.
    OnTargetAndConfident,
    ConfidenceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub n_scatterers: usize,
    pub lambda: f64,
    pub score: ScoreParams,
    pub theta_min: [f64; NUM_PARAMS],
    pub theta_max: [f64; NUM_PARAMS],
    pub step_size: f64,
    /// Number of ascent updates allowed; 0 returns the initialization.
    pub max_iters: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            n_scatterers: 1,
            lambda: 10.0,
            score: ScoreParams::default(),
            theta_min: DEFAULT_THETA_MIN,
            theta_max: DEFAULT_THETA_MAX,
            step_size: 0.01,
            max_iters: 200,
            tau: 0.10,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scatterers == 0 {
            return Err(OtsaError::param("N must be at least 1"));
        }
        for i in 0..NUM_PARAMS {
            let (lo, hi) = (self.theta_min[i], self.theta_max[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(OtsaError::param(format!(
                    "bounds for {} must satisfy min <= max, got [{lo}, {hi}]",
                    crate::ascm::PARAM_NAMES[i]
                )));
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(OtsaError::param(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(OtsaError::param("step size must be positive"));
        }
        if !self.lambda.is_finite() {
            return Err(OtsaError::param("lambda must be finite"));
        }
        self.score.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub kind: AttackKind,
    pub scatterers: ScattererSet,
    /// `X + I(Θ)`; written separately as an image file.
    #[serde(skip)]
    pub adversarial: SarImage,
    pub predicted_class: usize,
    pub probabilities: Vec<f64>,
    pub iterations: usize,
    pub success: bool,
    pub on_target: Vec<bool>,
    /// Ground-truth class probability at exit.
    pub confidence: f64,
    /// Exited through the stop rule rather than the iteration cap.
    pub early_stop: bool,
}

impl AttackResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("attack result serializes")
    }

    pub fn on_target_fraction(&self) -> f64 {
        if self.on_target.is_empty() {
            return 0.0;
        }
        self.on_target.iter().filter(|&&b| b).count() as f64 / self.on_target.len() as f64
    }
}

pub fn on_target_flags(set: &ScattererSet, mask: &TargetMask) -> Vec<bool> {
    set.iter().map(|s| is_on_target(s.x, s.y, mask)).collect()
}

/// `N` scatterers placed on random mask pixels with sub-pixel jitter; the
/// other five parameters are uniform within the bounds.
pub fn init_scatterers<R: Rng + ?Sized>(
    mask: &TargetMask,
    n: usize,
    theta_min: &[f64; NUM_PARAMS],
    theta_max: &[f64; NUM_PARAMS],
    rng: &mut R,
) -> Result<ScattererSet> {
    if mask.is_empty() {
        return Err(OtsaError::Init("target mask is empty".into()));
    }
    let pixels: Vec<(usize, usize)> = mask.iter().collect();
    let uniform = |i: usize, rng: &mut R| {
        let (lo, hi) = (theta_min[i], theta_max[i]);
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (px, py) = pixels[rng.random_range(0..pixels.len())];
        let x = px as f64 + rng.random_range(-0.5..0.5);
        let y = py as f64 + rng.random_range(-0.5..0.5);
        let mut v = [0.0; NUM_PARAMS];
        v[param::X] = x;
        v[param::Y] = y;
        for i in [
            param::AMPLITUDE,
            param::GAMMA,
            param::LENGTH,
            param::ALPHA,
            param::ORIENTATION,
        ] {
            v[i] = uniform(i, rng);
        }
        out.push(ScattererParams::from_array(v));
    }
    Ok(ScattererSet::new(out))
}

pub fn project_bounds(
    set: &ScattererSet,
    theta_min: &[f64; NUM_PARAMS],
    theta_max: &[f64; NUM_PARAMS],
) -> ScattererSet {
    set.iter()
        .map(|s| {
            let mut v = s.to_array();
            for i in 0..NUM_PARAMS {
                v[i] = v[i].clamp(theta_min[i], theta_max[i]);
            }
            ScattererParams::from_array(v)
        })
        .collect()
}

fn check_inputs<C: Classifier + ?Sized>(
    image: &SarImage,
    mask: &TargetMask,
    model: &C,
    config: &AttackConfig,
) -> Result<()> {
    config.validate()?;
    if mask.is_empty() {
        return Err(OtsaError::Init("target mask is empty".into()));
    }
    if (mask.rows(), mask.cols()) != image.dims() {
        return Err(OtsaError::Dimension(format!(
            "mask {}x{} vs image {}x{}",
            mask.rows(),
            mask.cols(),
            image.rows,
            image.cols
        )));
    }
    model.check_image(image)
}

/// The shared ascent loop. `observer` sees every visited iterate (including
/// the initialization) with its evaluation, before the stop test.
#[allow(clippy::too_many_arguments)]
pub fn projected_ascent<C, F>(
    kind: AttackKind,
    image: &SarImage,
    label: usize,
    mask: &TargetMask,
    model: &C,
    config: &AttackConfig,
    renderer: &Renderer,
    lambda: f64,
    stop: StopRule,
    mut observer: F,
) -> Result<AttackResult>
where
    C: Classifier + ?Sized,
    F: FnMut(usize, &ScattererSet, &ObjectiveEval),
{
    check_inputs(image, mask, model, config)?;
    let objective = Objective {
        renderer,
        model,
        image,
        label,
        mask,
        lambda,
        score: config.score,
    };
    objective.check()?;

    let mut rng = rng_for(config.seed, "attack.init");
    let init = init_scatterers(
        mask,
        config.n_scatterers,
        &config.theta_min,
        &config.theta_max,
        &mut rng,
    )?;
    let mut set = project_bounds(&init, &config.theta_min, &config.theta_max);
    let mut iter = 0;
    loop {
        let eval = objective.evaluate_with(&set, lambda)?;
        if !eval.value.is_finite() || !eval.gradient.is_finite() {
            return Err(OtsaError::Numerical(format!(
                "non-finite objective or gradient at iteration {iter}"
            )));
        }
        observer(iter, &set, &eval);
        let on_target = on_target_flags(&set, mask);
        let confidence = eval.prediction.confidence(label);
        let stopped = confidence < config.tau
            && (stop == StopRule::ConfidenceOnly || on_target.iter().all(|&b| b));
        if stopped || iter >= config.max_iters {
            return Ok(AttackResult {
                kind,
                scatterers: set,
                adversarial: eval.adversarial,
                predicted_class: eval.prediction.class,
                probabilities: eval.prediction.probabilities,
                iterations: iter,
                success: eval.prediction.class != label,
                on_target,
                confidence,
                early_stop: stopped,
            });
        }
        let stepped: ScattererSet = set
            .iter()
            .zip(&eval.gradient.per_scatterer)
            .map(|(s, g)| {
                let mut v = s.to_array();
                for i in 0..NUM_PARAMS {
                    v[i] += config.step_size * STEP_SCALE[i] * g[i];
                }
                ScattererParams::from_array(v)
            })
            .collect();
        set = project_bounds(&stepped, &config.theta_min, &config.theta_max);
        iter += 1;
    }
}

/// On-target scatterer attack.
pub fn run_otsa<C: Classifier + ?Sized>(
    image: &SarImage,
    label: usize,
    mask: &TargetMask,
    model: &C,
    config: &AttackConfig,
    renderer: &Renderer,
) -> Result<AttackResult> {
    projected_ascent(
        AttackKind::Otsa,
        image,
        label,
        mask,
        model,
        config,
        renderer,
        config.lambda,
        StopRule::OnTargetAndConfident,
        |_, _, _| {},
    )
}

/// Same loop without the positioning score; `config.lambda` is ignored.
pub fn run_baseline<C: Classifier + ?Sized>(
    image: &SarImage,
    label: usize,
    mask: &TargetMask,
    model: &C,
    config: &AttackConfig,
    renderer: &Renderer,
) -> Result<AttackResult> {
    projected_ascent(
        AttackKind::Baseline,
        image,
        label,
        mask,
        model,
        config,
        renderer,
        0.0,
        StopRule::ConfidenceOnly,
        |_, _, _| {},
    )
}

/// `X + ε sign(∂L/∂X)` with `sign(0) = 0`.
pub fn fgsm<C: Classifier + ?Sized>(
    image: &SarImage,
    label: usize,
    model: &C,
    epsilon: f64,
) -> Result<SarImage> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(OtsaError::param(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let g = model.input_gradient(image, label)?.0;
    let pixels = image
        .pixels
        .iter()
        .zip(&g.pixels)
        .map(|(&p, &d)| {
            if d > 0.0 {
                p + epsilon
            } else if d < 0.0 {
                p - epsilon
            } else {
                p
            }
        })
        .collect();
    SarImage::from_pixels(image.rows, image.cols, pixels)
}
