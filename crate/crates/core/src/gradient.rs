//! Objective `L(F(X + I(Θ)), y) + (λ/N) Σ S(x_i, y_i)` and its exact
//! gradient with respect to every scatterer parameter.
//!
//! The image is `I_p = |z_p|` with `z = IDFT(E) / (m n)`, so
//! `∂I_p/∂θ = Re(conj(z_p) ∂z_p/∂θ) / |z_p|`. Contracting with the pixel
//! gradient `g = ∂L/∂X^adv` moves the sum to the frequency domain:
//!
//! ```text
//! Σ_p g_p ∂I_p/∂θ = Re Σ_k ∂E_k/∂θ · conj(U_k) / (m n),   U = DFT(g z / |z|)
//! ```
//!
//! so a single forward DFT serves all `7N` parameters.
//! [`image_param_jacobian`] computes the per-pixel derivative images directly
//! and is used to cross-check the contracted route.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ascm::{
    param, ImagingParams, Renderer, SarImage, ScattererParams, ScattererSet, NUM_PARAMS,
};
use crate::classifier::{Classifier, Prediction};
use crate::error::{OtsaError, Result};
use crate::positioning::{positioning_score, score_gradient, ScoreParams, TargetMask};

/// Regularizer of `1/|z_p|` at pixels with vanishing response.
pub const EPS_MAG: f64 = 1e-12;

/// `∂(loss)/∂pixel` over an image.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGradient(pub SarImage);

/// One 7-vector `[∂A, ∂x, ∂y, ∂γ, ∂L, ∂α, ∂φ̄]` per scatterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGradient {
    pub per_scatterer: Vec<[f64; NUM_PARAMS]>,
}

impl ParamGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            per_scatterer: vec![[0.0; NUM_PARAMS]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.per_scatterer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_scatterer.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.per_scatterer.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.per_scatterer.iter().flatten().all(|v| v.is_finite())
    }
}

/// Central-difference step per parameter: `1e-5` for shape parameters,
/// `1e-6` for positions. A one-pixel shift moves a bright scatterer through
/// a whole sinc lobe, so the objective is most curved along x and y; small
/// steps also keep the probe from straddling ReLU kinks in the classifier.
pub fn fd_step(param_index: usize) -> f64 {
    match param_index % NUM_PARAMS {
        param::X | param::Y => 1e-6,
        _ => 1e-5,
    }
}

/// Central differences `(f(θ + h e_k) − f(θ − h e_k)) / 2h` with one step
/// per component.
pub fn finite_difference_steps<F>(f: F, theta0: &[f64], steps: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(theta0.len(), steps.len(), "one step per component");
    let mut probe = theta0.to_vec();
    theta0
        .iter()
        .zip(steps)
        .enumerate()
        .map(|(k, (&t, &h))| {
            probe[k] = t + h;
            let plus = f(&probe);
            probe[k] = t - h;
            let minus = f(&probe);
            probe[k] = t;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

pub fn finite_difference<F>(f: F, theta0: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    finite_difference_steps(f, theta0, &vec![h; theta0.len()])
}

/// Per-pixel derivative images `∂I/∂θ_k` over the full imaging grid, one
/// array of seven images per scatterer.
pub fn image_param_jacobian(
    set: &ScattererSet,
    params: &ImagingParams,
) -> Result<Vec<[SarImage; NUM_PARAMS]>> {
    let renderer = Renderer::new(params)?;
    jacobian_with(&renderer, set)
}

pub fn jacobian_with(renderer: &Renderer, set: &ScattererSet) -> Result<Vec<[SarImage; NUM_PARAMS]>> {
    if !set.iter().all(ScattererParams::is_finite) {
        return Err(OtsaError::param("scatterer parameters must be finite"));
    }
    let z = renderer.complex_image(&renderer.total_field(set));
    let (m, n) = (renderer.rows(), renderer.cols());
    let mut out = Vec::with_capacity(set.len());
    for theta in set.iter() {
        let derivs = renderer.field_derivatives(theta);
        let images: Vec<SarImage> = derivs
            .iter()
            .map(|d| {
                let dz = renderer.complex_image(d);
                let pixels = z
                    .iter()
                    .zip(&dz)
                    .map(|(zp, dzp)| (zp.conj() * dzp).re / zp.norm().max(EPS_MAG))
                    .collect();
                SarImage {
                    rows: m,
                    cols: n,
                    pixels,
                }
            })
            .collect();
        out.push(images.try_into().expect("seven derivative images"));
    }
    Ok(out)
}

/// Everything computed at one point of the objective.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub loss: f64,
    /// `(1/N) Σ S(x_i, y_i)`.
    pub mean_score: f64,
    pub prediction: Prediction,
    /// `X + I(Θ)` restricted to the image window.
    pub adversarial: SarImage,
    pub gradient: ParamGradient,
}

/// The objective for one image, label and mask.
pub struct Objective<'a, C: Classifier + ?Sized> {
    pub renderer: &'a Renderer,
    pub model: &'a C,
    pub image: &'a SarImage,
    pub label: usize,
    pub mask: &'a TargetMask,
    pub lambda: f64,
    pub score: ScoreParams,
}

impl<'a, C: Classifier + ?Sized> Objective<'a, C> {
    pub fn check(&self) -> Result<()> {
        let (r, c) = self.image.dims();
        if (self.mask.rows(), self.mask.cols()) != (r, c) {
            return Err(OtsaError::Dimension(format!(
                "mask {}x{} vs image {r}x{c}",
                self.mask.rows(),
                self.mask.cols()
            )));
        }
        if self.model.input_dims() != (r, c) {
            let (mr, mc) = self.model.input_dims();
            return Err(OtsaError::Dimension(format!("model input {mr}x{mc} vs image {r}x{c}")));
        }
        self.renderer.check_window(r, c)?;
        self.model.check_label(self.label)?;
        self.score.validate()
    }

    fn score_term(&self, set: &ScattererSet) -> f64 {
        set.iter()
            .map(|s| positioning_score(s.x, s.y, self.mask, self.score))
            .sum::<f64>()
            / set.len() as f64
    }

    /// `X + I(Θ)` on the image window.
    pub fn adversarial_image(&self, set: &ScattererSet) -> Result<SarImage> {
        let (r, c) = self.image.dims();
        self.image.add(&self.renderer.render_window(set, r, c)?)
    }

    pub fn value(&self, set: &ScattererSet) -> Result<f64> {
        self.check()?;
        if set.is_empty() {
            return Err(OtsaError::param("objective needs at least one scatterer"));
        }
        let adv = self.adversarial_image(set)?;
        let loss = self.model.cross_entropy_loss(&adv, self.label)?;
        Ok(loss + self.lambda * self.score_term(set))
    }

    pub fn gradient(&self, set: &ScattererSet) -> Result<ParamGradient> {
        Ok(self.evaluate(set)?.gradient)
    }

    pub fn evaluate(&self, set: &ScattererSet) -> Result<ObjectiveEval> {
        self.evaluate_with(set, self.lambda)
    }

    /// As [`Objective::evaluate`] with an explicit score weight.
    pub fn evaluate_with(&self, set: &ScattererSet, lambda: f64) -> Result<ObjectiveEval> {
        self.check()?;
        if set.is_empty() {
            return Err(OtsaError::param("objective needs at least one scatterer"));
        }
        if !set.iter().all(ScattererParams::is_finite) {
            return Err(OtsaError::param("scatterer parameters must be finite"));
        }
        let rd = self.renderer;
        let (m, n) = (rd.rows(), rd.cols());
        let (rows, cols) = self.image.dims();

        let terms: Vec<_> = set
            .iter()
            .map(|t| {
                rd.field_terms(&ScattererParams {
                    amplitude: 1.0,
                    ..*t
                })
            })
            .collect();
        let mut field = vec![Complex64::new(0.0, 0.0); m * n];
        for (t, theta) in terms.iter().zip(set.iter()) {
            for ((f, b), s) in field.iter_mut().zip(&t.scaled_base).zip(&t.sinc) {
                *f += b * (s * theta.amplitude);
            }
        }
        rd.ifft2(&mut field);
        let norm = 1.0 / (m * n) as f64;
        let z: Vec<Complex64> = field.iter().map(|v| v * norm).collect();

        let mut adversarial = self.image.clone();
        for x in 0..rows {
            for y in 0..cols {
                adversarial.pixels[x * cols + y] += z[x * n + y].norm();
            }
        }
        let eval = self.model.loss_and_gradient(&adversarial, self.label)?;

        let mut u = vec![Complex64::new(0.0, 0.0); m * n];
        let g = &eval.input_gradient.0;
        for x in 0..rows {
            for y in 0..cols {
                let zp = z[x * n + y];
                u[x * n + y] = zp * (g.pixels[x * cols + y] / zp.norm().max(EPS_MAG));
            }
        }
        rd.fft2(&mut u);

        let rate_x = rd.rate_x();
        let rate_y = rd.rate_y();
        let ln_rn = rd.ln_rn();
        let fy_fc = rd.fy_fc();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let nsc = set.len() as f64;
        let mut gradient = ParamGradient::zeros(set.len());
        for ((t, theta), out) in terms.iter().zip(set.iter()).zip(&mut gradient.per_scatterer) {
            let mut acc = [0.0f64; NUM_PARAMS];
            for k in 0..m {
                for l in 0..n {
                    let i = k * n + l;
                    let q = t.scaled_base[i] * u[i].conj();
                    let s = t.sinc[i];
                    acc[param::AMPLITUDE] += q.re * s;
                    acc[param::X] += rate_x[k] * q.im * s;
                    acc[param::Y] += rate_y[l] * q.im * s;
                    acc[param::GAMMA] -= fy_fc[l] * q.re * s;
                    acc[param::LENGTH] += t.dsinc_dlength[i] * q.re;
                    acc[param::ALPHA] += (ln_rn[i] * q.re - half_pi * q.im) * s;
                    acc[param::ORIENTATION] += t.dsinc_dorient[i] * q.re;
                }
            }
            let a = theta.amplitude;
            out[param::AMPLITUDE] = acc[param::AMPLITUDE] * norm;
            for p in 1..NUM_PARAMS {
                out[p] = acc[p] * a * norm;
            }
            if lambda != 0.0 {
                let (sx, sy) = score_gradient(theta.x, theta.y, self.mask, self.score);
                out[param::X] += lambda / nsc * sx;
                out[param::Y] += lambda / nsc * sy;
            }
        }

        let mean_score = self.score_term(set);
        Ok(ObjectiveEval {
            value: eval.loss + lambda * mean_score,
            loss: eval.loss,
            mean_score,
            prediction: eval.prediction,
            adversarial,
            gradient,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn objective_value<C: Classifier + ?Sized>(
    set: &ScattererSet,
    image: &SarImage,
    label: usize,
    model: &C,
    mask: &TargetMask,
    lambda: f64,
    score: ScoreParams,
    params: &ImagingParams,
) -> Result<f64> {
    let renderer = Renderer::new(params)?;
    Objective {
        renderer: &renderer,
        model,
        image,
        label,
        mask,
        lambda,
        score,
    }
    .value(set)
}

#[allow(clippy::too_many_arguments)]
pub fn objective_gradient<C: Classifier + ?Sized>(
    set: &ScattererSet,
    image: &SarImage,
    label: usize,
    model: &C,
    mask: &TargetMask,
    lambda: f64,
    score: ScoreParams,
    params: &ImagingParams,
) -> Result<ParamGradient> {
    let renderer = Renderer::new(params)?;
    Objective {
        renderer: &renderer,
        model,
        image,
        label,
        mask,
        lambda,
        score,
    }
    .gradient(set)
}
