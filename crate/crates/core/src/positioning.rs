//! Truncated Gaussian-kernel positioning score and on-target predicates.
//!
//! `S̄(x, y) = Σ_j exp(−‖(x, y) − (x'_j, y'_j)‖² / 2σ²)` over the target
//! pixels, truncated as `S = min(S̄, MAX)`. On the plateau `S̄ ≥ MAX` the
//! gradient is zero, so only scatterers that drifted off the target feel a
//! pull back toward it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ascm::ScattererSet;
use crate::error::{OtsaError, Result};

/// Pixel set `M_X` of the on-ground target. Coordinates are `(row, col)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetMask {
    rows: usize,
    cols: usize,
    coords: BTreeSet<(usize, usize)>,
}

impl TargetMask {
    pub fn new<I>(rows: usize, cols: usize, coords: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let coords: BTreeSet<_> = coords.into_iter().collect();
        if let Some(&(x, y)) = coords.iter().find(|&&(x, y)| x >= rows || y >= cols) {
            return Err(OtsaError::param(format!(
                "mask pixel ({x},{y}) outside {rows}x{cols} image"
            )));
        }
        Ok(Self { rows, cols, coords })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            coords: BTreeSet::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.coords.contains(&(x, y))
    }

    /// Coordinates in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.coords.iter().copied()
    }

    pub fn coords(&self) -> &BTreeSet<(usize, usize)> {
        &self.coords
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub sigma: f64,
    pub max: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            sigma: 0.4,
            max: 0.5,
        }
    }
}

impl ScoreParams {
    pub fn new(sigma: f64, max: f64) -> Result<Self> {
        let p = Self { sigma, max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(OtsaError::param("sigma must be positive"));
        }
        if !(self.max > 0.0 && self.max.is_finite()) {
            return Err(OtsaError::param("MAX must be positive"));
        }
        Ok(())
    }
}

/// Untruncated kernel sum `S̄(x, y)`.
pub fn raw_score(x: f64, y: f64, mask: &TargetMask, sigma: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    mask.iter()
        .map(|(mx, my)| {
            let dx = x - mx as f64;
            let dy = y - my as f64;
            (-(dx * dx + dy * dy) * inv).exp()
        })
        .sum()
}

pub fn positioning_score(x: f64, y: f64, mask: &TargetMask, params: ScoreParams) -> f64 {
    raw_score(x, y, mask, params.sigma).min(params.max)
}

/// `(∂S/∂x, ∂S/∂y)`; zero on the plateau `S̄ ≥ MAX`.
pub fn score_gradient(x: f64, y: f64, mask: &TargetMask, params: ScoreParams) -> (f64, f64) {
    let s2 = params.sigma * params.sigma;
    let inv = 1.0 / (2.0 * s2);
    let mut raw = 0.0;
    let (mut gx, mut gy) = (0.0, 0.0);
    for (mx, my) in mask.iter() {
        let dx = x - mx as f64;
        let dy = y - my as f64;
        let k = (-(dx * dx + dy * dy) * inv).exp();
        raw += k;
        gx -= dx / s2 * k;
        gy -= dy / s2 * k;
    }
    if raw >= params.max {
        (0.0, 0.0)
    } else {
        (gx, gy)
    }
}

/// `(1/N) Σ_i S(x_i, y_i)`.
pub fn mean_score(set: &ScattererSet, mask: &TargetMask, params: ScoreParams) -> Result<f64> {
    if set.is_empty() {
        return Err(OtsaError::param("mean score of an empty scatterer set"));
    }
    let total: f64 = set
        .iter()
        .map(|s| positioning_score(s.x, s.y, mask, params))
        .sum();
    Ok(total / set.len() as f64)
}

/// Nearest-pixel membership test.
pub fn is_on_target(x: f64, y: f64, mask: &TargetMask) -> bool {
    let (rx, ry) = (x.round(), y.round());
    if !(rx >= 0.0 && ry >= 0.0) || !rx.is_finite() || !ry.is_finite() {
        return false;
    }
    mask.contains(rx as usize, ry as usize)
}
