//! Attributed scattering center model.
//!
//! Each scatterer contributes a closed-form complex field on a Cartesian
//! frequency grid `(f_x, f_y)`. The fields are summed and a 2-D inverse DFT
//! turns the total field into an amplitude image. The grid spacing is
//! matched to the pixel spacing so that the position phase ramp of a point
//! scatterer at integer `(x, y)` focuses exactly onto pixel `(x, y)`.
//!
//! Image coordinates: `x` is the range axis and indexes rows, `y` is the
//! cross-range axis and indexes columns.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{OtsaError, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Number of parameters describing one scatterer.
pub const NUM_PARAMS: usize = 7;

pub const PARAM_NAMES: [&str; NUM_PARAMS] = ["A", "x", "y", "gamma", "L", "alpha", "phi_bar"];

/// Index of each parameter inside the flat 7-vector `[A, x, y, γ, L, α, φ̄]`.
pub mod param {
    pub const AMPLITUDE: usize = 0;
    pub const X: usize = 1;
    pub const Y: usize = 2;
    pub const GAMMA: usize = 3;
    pub const LENGTH: usize = 4;
    pub const ALPHA: usize = 5;
    pub const ORIENTATION: usize = 6;
}

/// One scatterer. Serialized as the array `[A, x, y, γ, L, α, φ̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 7]", from = "[f64; 7]")]
pub struct ScattererParams {
    pub amplitude: f64,
    /// Range position in pixels.
    pub x: f64,
    /// Cross-range position in pixels.
    pub y: f64,
    /// Aspect dependence.
    pub gamma: f64,
    /// Length in pixels of cross-range extent.
    pub length: f64,
    /// Frequency dependence exponent.
    pub alpha: f64,
    /// Orientation, in units of half the aperture angle.
    pub orientation: f64,
}

impl ScattererParams {
    /// Unit-free point scatterer: only amplitude and position set.
    pub fn point(amplitude: f64, x: f64, y: f64) -> Self {
        Self::from_array([amplitude, x, y, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn from_array(v: [f64; NUM_PARAMS]) -> Self {
        Self {
            amplitude: v[0],
            x: v[1],
            y: v[2],
            gamma: v[3],
            length: v[4],
            alpha: v[5],
            orientation: v[6],
        }
    }

    pub fn to_array(&self) -> [f64; NUM_PARAMS] {
        [
            self.amplitude,
            self.x,
            self.y,
            self.gamma,
            self.length,
            self.alpha,
            self.orientation,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn within(&self, min: &[f64; NUM_PARAMS], max: &[f64; NUM_PARAMS]) -> bool {
        self.to_array()
            .iter()
            .zip(min.iter().zip(max))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Parses `"A,x,y,γ,L,α,φ̄"`.
    pub fn parse_csv(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| OtsaError::param(format!("not a number: {t:?}")))
            })
            .collect::<Result<_>>()?;
        let arr: [f64; NUM_PARAMS] = vals.try_into().map_err(|v: Vec<f64>| {
            OtsaError::param(format!("expected 7 comma-separated values, got {}", v.len()))
        })?;
        let p = Self::from_array(arr);
        if !p.is_finite() {
            return Err(OtsaError::param("scatterer parameters must be finite"));
        }
        Ok(p)
    }
}

impl From<ScattererParams> for [f64; NUM_PARAMS] {
    fn from(p: ScattererParams) -> Self {
        p.to_array()
    }
}

impl From<[f64; NUM_PARAMS]> for ScattererParams {
    fn from(v: [f64; NUM_PARAMS]) -> Self {
        Self::from_array(v)
    }
}

/// Ordered set of scatterers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScattererSet {
    pub scatterers: Vec<ScattererParams>,
}

impl ScattererSet {
    pub fn new(scatterers: Vec<ScattererParams>) -> Self {
        Self { scatterers }
    }

    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScattererParams> {
        self.scatterers.iter()
    }

    /// Flattens to `[θ_1..., θ_2..., ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.scatterers.iter().flat_map(|s| s.to_array()).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % NUM_PARAMS != 0 {
            return Err(OtsaError::param(format!(
                "flat parameter vector length {} is not a multiple of {NUM_PARAMS}",
                flat.len()
            )));
        }
        let scatterers = flat
            .chunks_exact(NUM_PARAMS)
            .map(|c| ScattererParams::from_array(c.try_into().expect("chunk of 7")))
            .collect();
        Ok(Self { scatterers })
    }
}

impl FromIterator<ScattererParams> for ScattererSet {
    fn from_iter<I: IntoIterator<Item = ScattererParams>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// SAR imaging constants ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingParams {
    /// Bandwidth B in Hz.
    pub bandwidth: f64,
    /// Center frequency f_c in Hz.
    pub center_freq: f64,
    /// Propagation speed c in m/s.
    pub light_speed: f64,
    /// Aperture accumulation angle φ_m in radians.
    pub aperture_angle: f64,
    pub m_star: usize,
    pub n_star: usize,
    pub eta_x: f64,
    pub eta_y: f64,
    /// Range pixel spacing in meters.
    pub p_x: f64,
    /// Cross-range pixel spacing in meters.
    pub p_y: f64,
}

impl Default for ImagingParams {
    fn default() -> Self {
        Self::new(0.591e9, 9.6e9, 0.05, 128, 128).expect("default imaging parameters are valid")
    }
}

impl ImagingParams {
    /// Builds parameters for direct Cartesian evaluation (`η_x = η_y = 1`).
    pub fn new(
        bandwidth: f64,
        center_freq: f64,
        aperture_angle: f64,
        m_star: usize,
        n_star: usize,
    ) -> Result<Self> {
        let mut p = Self {
            bandwidth,
            center_freq,
            light_speed: SPEED_OF_LIGHT,
            aperture_angle,
            m_star,
            n_star,
            eta_x: 1.0,
            eta_y: 1.0,
            p_x: 0.0,
            p_y: 0.0,
        };
        p.p_x = p.expected_p_x();
        p.p_y = p.expected_p_y();
        p.validate()?;
        Ok(p)
    }

    fn expected_p_x(&self) -> f64 {
        self.light_speed * self.eta_x / (2.0 * self.bandwidth)
    }

    fn expected_p_y(&self) -> f64 {
        self.light_speed * self.eta_y / (4.0 * self.center_freq * (self.aperture_angle / 2.0).sin())
    }

    /// Cross-range frequency extent `2 f_c sin(φ_m / 2)`.
    pub fn cross_range_extent(&self) -> f64 {
        2.0 * self.center_freq * (self.aperture_angle / 2.0).sin()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.bandwidth,
            self.center_freq,
            self.light_speed,
            self.aperture_angle,
            self.eta_x,
            self.eta_y,
            self.p_x,
            self.p_y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(OtsaError::param("imaging parameters must be finite"));
        }
        if self.bandwidth <= 0.0 {
            return Err(OtsaError::param("bandwidth must be positive"));
        }
        if self.center_freq <= self.bandwidth / 2.0 {
            return Err(OtsaError::param("center frequency must exceed half the bandwidth"));
        }
        if !(self.aperture_angle > 0.0 && self.aperture_angle < PI) {
            return Err(OtsaError::param("aperture angle must lie in (0, pi)"));
        }
        if self.light_speed <= 0.0 || self.eta_x <= 0.0 || self.eta_y <= 0.0 {
            return Err(OtsaError::param("light speed and resampling factors must be positive"));
        }
        if self.m_star == 0 || self.n_star == 0 {
            return Err(OtsaError::param("grid sample counts must be positive"));
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        if rel(self.p_x, self.expected_p_x()) > 1e-12 || rel(self.p_y, self.expected_p_y()) > 1e-12 {
            return Err(OtsaError::param(
                "stored pixel spacings disagree with bandwidth / aperture",
            ));
        }
        Ok(())
    }
}

/// Cartesian frequency samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub f_x: Vec<f64>,
    pub f_y: Vec<f64>,
}

impl FrequencyGrid {
    pub fn spacing_x(&self) -> f64 {
        spacing(&self.f_x)
    }

    pub fn spacing_y(&self) -> f64 {
        spacing(&self.f_y)
    }
}

fn spacing(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.0
    } else {
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
    }
}

/// Builds the `m* × n*` Cartesian grid. Sample spacing is `B / m*` along
/// range and `2 f_c sin(φ_m/2) / n*` along cross-range, symmetric about
/// `f_c` and `0` respectively. With these spacings one pixel of position
/// advances the phase ramp by exactly one DFT bin.
pub fn build_frequency_grid(params: &ImagingParams) -> Result<FrequencyGrid> {
    params.validate()?;
    let m = params.m_star;
    let n = params.n_star;
    let dx = params.bandwidth / m as f64;
    let dy = params.cross_range_extent() / n as f64;
    let cx = (m as f64 - 1.0) / 2.0;
    let cy = (n as f64 - 1.0) / 2.0;
    let f_x = (0..m)
        .map(|k| params.center_freq + (k as f64 - cx) * dx)
        .collect();
    let f_y = (0..n).map(|l| (l as f64 - cy) * dy).collect();
    Ok(FrequencyGrid { f_x, f_y })
}

/// Complex `m* × n*` field, row-major with rows along `f_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn at(&self, k: usize, l: usize) -> Complex64 {
        self.values[k * self.cols + l]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn add_assign(&mut self, other: &ComplexField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

/// Real-valued image, row-major. Pixel `(x, y)` is row `x`, column `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl SarImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pixels: vec![0.0; rows * cols],
        }
    }

    pub fn from_pixels(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(OtsaError::Dimension(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        Ok(Self { rows, cols, pixels })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[x * self.cols + y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[x * self.cols + y] = v;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(row, col)` of the largest pixel; first in raster order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.pixels.iter().enumerate() {
            if *v > self.pixels[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }

    /// Element-wise sum; dimensions must agree.
    pub fn add(&self, other: &SarImage) -> Result<SarImage> {
        if self.dims() != other.dims() {
            return Err(OtsaError::Dimension(format!(
                "{}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a + b)
            .collect();
        Ok(SarImage {
            rows: self.rows,
            cols: self.cols,
            pixels,
        })
    }

    /// Top-left `rows × cols` sub-image.
    pub fn window(&self, rows: usize, cols: usize) -> Result<SarImage> {
        self.crop(0, 0, rows, cols)
    }

    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<SarImage> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(OtsaError::Dimension(format!(
                "crop {rows}x{cols} at ({row0},{col0}) exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            let start = r * self.cols + col0;
            pixels.extend_from_slice(&self.pixels[start..start + cols]);
        }
        Ok(SarImage { rows, cols, pixels })
    }

    /// Divides by the maximum so the image spans `[0, 1]`; an all-zero image
    /// is returned unchanged.
    pub fn max_normalized(&self) -> SarImage {
        let m = self.max();
        if m > 0.0 {
            SarImage {
                rows: self.rows,
                cols: self.cols,
                pixels: self.pixels.iter().map(|v| v / m).collect(),
            }
        } else {
            self.clone()
        }
    }
}

/// Principal power `(j r)^α` for `r ≥ 0`; `(j·0)^0 = 1` and `(j·0)^α = 0`
/// for `α > 0`.
pub fn power_j(r: f64, alpha: f64) -> Complex64 {
    if alpha == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(r.powf(alpha), alpha * FRAC_PI_2)
    }
}

/// Unnormalized sinc `sin(u)/u` and its derivative.
#[inline]
pub(crate) fn sinc_and_derivative(u: f64) -> (f64, f64) {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        (
            1.0 - u2 / 6.0 + u2 * u2 / 120.0,
            u * (-1.0 / 3.0 + u2 / 30.0),
        )
    } else {
        let (s, c) = u.sin_cos();
        (s / u, (u * c - s) / (u * u))
    }
}

/// Per-point factors of one scatterer, kept so the gradient can reuse them.
pub(crate) struct FieldTerms {
    /// `A · (j r/f_c)^α · exp(−γ f_y/f_c) · ramp`, i.e. the field without the
    /// length term.
    pub scaled_base: Vec<Complex64>,
    pub sinc: Vec<f64>,
    /// `∂sinc/∂L` per point.
    pub dsinc_dlength: Vec<f64>,
    /// `∂sinc/∂φ̄` per point.
    pub dsinc_dorient: Vec<f64>,
}

/// Precomputed grid quantities and FFT plans for one [`ImagingParams`].
pub struct Renderer {
    params: ImagingParams,
    grid: FrequencyGrid,
    /// `ln(r / f_c)` per grid point.
    ln_rn: Vec<f64>,
    /// `f_y / f_c` per column.
    fy_fc: Vec<f64>,
    sin_psi: Vec<f64>,
    cos_psi: Vec<f64>,
    /// `π (r/f_c) η_y / (2 sin(φ_m/2))` per grid point.
    kappa: Vec<f64>,
    /// Range phase rate `4π p_x f_x / c` per row.
    rate_x: Vec<f64>,
    /// Cross-range phase rate `4π p_y f_y / c` per column.
    rate_y: Vec<f64>,
    fft_rows: Arc<dyn Fft<f64>>,
    ifft_rows: Arc<dyn Fft<f64>>,
    fft_cols: Arc<dyn Fft<f64>>,
    ifft_cols: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Renderer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Renderer").field("params", &self.params).finish()
    }
}

impl Renderer {
    pub fn new(params: &ImagingParams) -> Result<Self> {
        let grid = build_frequency_grid(params)?;
        let (m, n) = (params.m_star, params.n_star);
        let fc = params.center_freq;
        let half_sin = (params.aperture_angle / 2.0).sin();
        let mut ln_rn = Vec::with_capacity(m * n);
        let mut sin_psi = Vec::with_capacity(m * n);
        let mut cos_psi = Vec::with_capacity(m * n);
        let mut kappa = Vec::with_capacity(m * n);
        for &fx in &grid.f_x {
            for &fy in &grid.f_y {
                let r = fx.hypot(fy);
                let psi = fy.atan2(fx);
                ln_rn.push((r / fc).ln());
                sin_psi.push(psi.sin());
                cos_psi.push(psi.cos());
                kappa.push(PI * (r / fc) * params.eta_y / (2.0 * half_sin));
            }
        }
        let fy_fc = grid.f_y.iter().map(|fy| fy / fc).collect();
        let k = 4.0 * PI / params.light_speed;
        let rate_x = grid.f_x.iter().map(|fx| k * params.p_x * fx).collect();
        let rate_y = grid.f_y.iter().map(|fy| k * params.p_y * fy).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            params: *params,
            fft_rows: planner.plan_fft_forward(n),
            ifft_rows: planner.plan_fft_inverse(n),
            fft_cols: planner.plan_fft_forward(m),
            ifft_cols: planner.plan_fft_inverse(m),
            grid,
            ln_rn,
            fy_fc,
            sin_psi,
            cos_psi,
            kappa,
            rate_x,
            rate_y,
        })
    }

    pub fn params(&self) -> &ImagingParams {
        &self.params
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.params.m_star
    }

    pub fn cols(&self) -> usize {
        self.params.n_star
    }

    pub(crate) fn rate_x(&self) -> &[f64] {
        &self.rate_x
    }

    pub(crate) fn rate_y(&self) -> &[f64] {
        &self.rate_y
    }

    pub(crate) fn ln_rn(&self) -> &[f64] {
        &self.ln_rn
    }

    pub(crate) fn fy_fc(&self) -> &[f64] {
        &self.fy_fc
    }

    pub(crate) fn field_terms(&self, theta: &ScattererParams) -> FieldTerms {
        let (m, n) = (self.rows(), self.cols());
        let size = m * n;
        let half_aperture = self.params.aperture_angle / 2.0;
        let offset = theta.orientation * half_aperture;
        let (sin_off, cos_off) = offset.sin_cos();
        let j_alpha = Complex64::from_polar(1.0, theta.alpha * FRAC_PI_2);
        let ramp_x: Vec<Complex64> = self
            .rate_x
            .iter()
            .map(|r| Complex64::from_polar(1.0, -r * theta.x))
            .collect();
        let ramp_y: Vec<Complex64> = self
            .rate_y
            .iter()
            .map(|r| Complex64::from_polar(1.0, -r * theta.y))
            .collect();

        let mut scaled_base = Vec::with_capacity(size);
        let mut sinc = Vec::with_capacity(size);
        let mut dsinc_dlength = Vec::with_capacity(size);
        let mut dsinc_dorient = Vec::with_capacity(size);
        for k in 0..m {
            let rx = ramp_x[k] * j_alpha * theta.amplitude;
            for l in 0..n {
                let i = k * n + l;
                let mag = (theta.alpha * self.ln_rn[i] - theta.gamma * self.fy_fc[l]).exp();
                scaled_base.push(rx * ramp_y[l] * mag);
                let s_ang = self.sin_psi[i] * cos_off - self.cos_psi[i] * sin_off;
                let c_ang = self.cos_psi[i] * cos_off + self.sin_psi[i] * sin_off;
                let kap = self.kappa[i];
                let (s, ds) = sinc_and_derivative(kap * theta.length * s_ang);
                sinc.push(s);
                dsinc_dlength.push(ds * kap * s_ang);
                dsinc_dorient.push(-ds * kap * theta.length * c_ang * half_aperture);
            }
        }
        FieldTerms {
            scaled_base,
            sinc,
            dsinc_dlength,
            dsinc_dorient,
        }
    }

    /// Field `E_i(f_x, f_y; θ)` of one scatterer over the whole grid.
    pub fn scatterer_field(&self, theta: &ScattererParams) -> ComplexField {
        let t = self.field_terms(theta);
        let values = t
            .scaled_base
            .iter()
            .zip(&t.sinc)
            .map(|(b, s)| b * s)
            .collect();
        ComplexField {
            rows: self.rows(),
            cols: self.cols(),
            values,
        }
    }

    pub fn total_field(&self, set: &ScattererSet) -> ComplexField {
        let mut total = ComplexField::zeros(self.rows(), self.cols());
        for theta in set.iter() {
            total.add_assign(&self.scatterer_field(theta));
        }
        total
    }

    /// Derivative fields `∂E/∂θ_k` for the seven parameters of one scatterer.
    pub fn field_derivatives(&self, theta: &ScattererParams) -> Vec<ComplexField> {
        let unit = ScattererParams {
            amplitude: 1.0,
            ..*theta
        };
        let t = self.field_terms(&unit);
        let (m, n) = (self.rows(), self.cols());
        let mut out: Vec<ComplexField> = (0..NUM_PARAMS).map(|_| ComplexField::zeros(m, n)).collect();
        let j = Complex64::new(0.0, 1.0);
        let alpha_phase = Complex64::new(0.0, FRAC_PI_2);
        let a = theta.amplitude;
        for k in 0..m {
            for l in 0..n {
                let i = k * n + l;
                let unit_e = t.scaled_base[i] * t.sinc[i];
                let e = unit_e * a;
                out[param::AMPLITUDE].values[i] = unit_e;
                out[param::X].values[i] = -j * self.rate_x[k] * e;
                out[param::Y].values[i] = -j * self.rate_y[l] * e;
                out[param::GAMMA].values[i] = -self.fy_fc[l] * e;
                out[param::LENGTH].values[i] = t.scaled_base[i] * (a * t.dsinc_dlength[i]);
                out[param::ALPHA].values[i] = (self.ln_rn[i] + alpha_phase) * e;
                out[param::ORIENTATION].values[i] = t.scaled_base[i] * (a * t.dsinc_dorient[i]);
            }
        }
        out
    }

    /// In-place unnormalized 2-D inverse DFT (`e^{+j2π(kp/m + lq/n)}`).
    pub fn ifft2(&self, data: &mut [Complex64]) {
        self.fft2_with(data, &self.ifft_rows, &self.ifft_cols);
    }

    /// In-place unnormalized 2-D forward DFT.
    pub fn fft2(&self, data: &mut [Complex64]) {
        self.fft2_with(data, &self.fft_rows, &self.fft_cols);
    }

    fn fft2_with(&self, data: &mut [Complex64], rows_plan: &Arc<dyn Fft<f64>>, cols_plan: &Arc<dyn Fft<f64>>) {
        let (m, n) = (self.rows(), self.cols());
        assert_eq!(data.len(), m * n, "fft buffer size");
        rows_plan.process(data);
        let mut t = transpose(data, m, n);
        cols_plan.process(&mut t);
        let back = transpose(&t, n, m);
        data.copy_from_slice(&back);
    }

    /// Complex image `z = IDFT(E) / (m* n*)`.
    pub fn complex_image(&self, field: &ComplexField) -> Vec<Complex64> {
        let mut z = field.values.clone();
        self.ifft2(&mut z);
        let norm = 1.0 / (self.rows() * self.cols()) as f64;
        for v in &mut z {
            *v *= norm;
        }
        z
    }

    pub fn image_from_field(&self, field: &ComplexField) -> SarImage {
        let z = self.complex_image(field);
        SarImage {
            rows: self.rows(),
            cols: self.cols(),
            pixels: z.iter().map(|v| v.norm()).collect(),
        }
    }

    /// `I(Θ, ξ) = |IDFT(Σ E_i)| / (m* n*)` over the full grid.
    pub fn render(&self, set: &ScattererSet) -> SarImage {
        self.image_from_field(&self.total_field(set))
    }

    /// Top-left `rows × cols` window of [`Renderer::render`].
    pub fn render_window(&self, set: &ScattererSet, rows: usize, cols: usize) -> Result<SarImage> {
        self.check_window(rows, cols)?;
        self.render(set).window(rows, cols)
    }

    pub(crate) fn check_window(&self, rows: usize, cols: usize) -> Result<()> {
        if rows > self.rows() || cols > self.cols() {
            return Err(OtsaError::Dimension(format!(
                "image {rows}x{cols} is larger than the {}x{} imaging grid",
                self.rows(),
                self.cols()
            )));
        }
        Ok(())
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

pub fn scatterer_field(theta: &ScattererParams, params: &ImagingParams) -> Result<ComplexField> {
    check_finite_set(std::slice::from_ref(theta))?;
    Ok(Renderer::new(params)?.scatterer_field(theta))
}

pub fn total_field(set: &ScattererSet, params: &ImagingParams) -> Result<ComplexField> {
    check_finite_set(&set.scatterers)?;
    Ok(Renderer::new(params)?.total_field(set))
}

/// Renders a scatterer set into an `m* × n*` amplitude image.
pub fn render_image(set: &ScattererSet, params: &ImagingParams) -> Result<SarImage> {
    check_finite_set(&set.scatterers)?;
    Ok(Renderer::new(params)?.render(set))
}

fn check_finite_set(s: &[ScattererParams]) -> Result<()> {
    if s.iter().all(ScattererParams::is_finite) {
        Ok(())
    } else {
        Err(OtsaError::param("scatterer parameters must be finite"))
    }
}
