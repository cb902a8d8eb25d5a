//! Synthetic SAR-like scenes: one bright convex target per image, a dark
//! shadow cast away from the radar, a low-clutter background and
//! multiplicative exponential speckle.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::LabeledSample;
use crate::ascm::SarImage;
use crate::error::{OtsaError, Result};
use crate::positioning::TargetMask;
use crate::seed::rng_for;

/// Convex polygon outline in unit coordinates with per-sample ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub name: String,
    /// Vertices `(row, col)` around the origin, counter-clockwise.
    pub vertices: Vec<(f64, f64)>,
    pub scale_range: (f64, f64),
    /// Rotation range in radians.
    pub rotation_range: (f64, f64),
}

fn regular(sides: usize, aspect: f64) -> Vec<(f64, f64)> {
    (0..sides)
        .map(|i| {
            let a = TAU * i as f64 / sides as f64 + PI / sides as f64;
            (a.cos() * aspect, a.sin())
        })
        .collect()
}

impl ClassTemplate {
    /// Built-in template for class `k`.
    pub fn builtin(k: usize) -> Self {
        let full = (0.0, TAU);
        let (name, vertices, scale_range) = match k {
            0 => ("square", regular(4, 1.0), (7.0, 8.5)),
            1 => ("bar", vec![(-1.0, -0.3), (1.0, -0.3), (1.0, 0.3), (-1.0, 0.3)], (20.0, 23.0)),
            2 => ("triangle", regular(3, 1.0), (15.0, 17.0)),
            3 => ("hexagon", regular(6, 1.0), (16.0, 18.0)),
            4 => ("pentagon", regular(5, 1.0), (7.0, 8.5)),
            5 => ("rhombus", regular(4, 0.45), (11.0, 13.0)),
            _ => {
                let sides = 5 + (k - 6) % 5;
                let aspect = 0.5 + 0.1 * ((k - 6) % 5) as f64;
                return Self {
                    name: format!("polygon{k}"),
                    vertices: regular(sides, aspect),
                    scale_range: (8.0 + (k % 3) as f64, 10.0 + (k % 3) as f64),
                    rotation_range: full,
                };
            }
        };
        Self {
            name: name.to_string(),
            vertices,
            scale_range,
            rotation_range: full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    /// `0` gives noiseless scenes, `1` fully developed speckle.
    pub speckle: f64,
    /// Maximum target-center offset from the image center, in pixels.
    pub jitter: f64,
    /// Shadow length as a multiple of the target's scale.
    pub shadow_length: f64,
    pub target_level: f64,
    pub background_level: f64,
    pub shadow_level: f64,
    /// Per-class templates; built-ins are used when empty.
    pub templates: Vec<ClassTemplate>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 60,
            size: 128,
            speckle: 0.6,
            jitter: 6.0,
            shadow_length: 1.2,
            target_level: 1.0,
            background_level: 0.01,
            shadow_level: 0.001,
            templates: Vec::new(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(OtsaError::param("synthetic dataset needs at least 2 classes"));
        }
        if self.size < 32 {
            return Err(OtsaError::param("synthetic image size must be at least 32"));
        }
        if !(0.0..=1.0).contains(&self.speckle) {
            return Err(OtsaError::param("speckle strength must lie in [0, 1]"));
        }
        if !self.templates.is_empty() && self.templates.len() != self.classes {
            return Err(OtsaError::param("need exactly one template per class"));
        }
        let levels = [self.target_level, self.background_level, self.shadow_level];
        if levels.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.target_level <= self.background_level {
            return Err(OtsaError::param("target level must exceed a non-negative background"));
        }
        if !(self.jitter >= 0.0 && self.shadow_length >= 0.0) {
            return Err(OtsaError::param("jitter and shadow length must be non-negative"));
        }
        for t in self.templates.iter() {
            if t.vertices.len() < 3 || !(t.scale_range.0 > 0.0 && t.scale_range.0 <= t.scale_range.1) {
                return Err(OtsaError::param(format!("template {} is malformed", t.name)));
            }
        }
        Ok(())
    }

    pub fn template(&self, class: usize) -> ClassTemplate {
        self.templates
            .get(class)
            .cloned()
            .unwrap_or_else(|| ClassTemplate::builtin(class))
    }
}

/// Ground-truth pixel classes of one synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayers {
    pub target: BTreeSet<(usize, usize)>,
    pub shadow: BTreeSet<(usize, usize)>,
}

fn inside_convex(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Rasterizes the target polygon and its shadow; shadow pixels are
/// never target pixels.
fn layout<R: Rng>(template: &ClassTemplate, cfg: &SynthConfig, rng: &mut R) -> Result<(SceneLayers, f64)> {
    let n = cfg.size;
    let scale = rng.random_range(template.scale_range.0..=template.scale_range.1);
    let (r0, r1) = template.rotation_range;
    let rot = if r1 > r0 { rng.random_range(r0..r1) } else { r0 };
    let half = n as f64 / 2.0;
    let center = (
        half + rng.random_range(-cfg.jitter..=cfg.jitter),
        half + rng.random_range(-cfg.jitter..=cfg.jitter),
    );
    let (s, c) = rot.sin_cos();
    let poly: Vec<(f64, f64)> = template
        .vertices
        .iter()
        .map(|&(a, b)| (center.0 + scale * (c * a - s * b), center.1 + scale * (s * a + c * b)))
        .collect();

    let mut target = BTreeSet::new();
    for x in 1..n - 1 {
        for y in 1..n - 1 {
            if inside_convex(&poly, (x as f64, y as f64)) {
                target.insert((x, y));
            }
        }
    }
    let touches_edge = poly
        .iter()
        .any(|&(a, b)| a < 1.0 || b < 1.0 || a > (n - 2) as f64 || b > (n - 2) as f64);
    if target.is_empty() || touches_edge {
        return Err(OtsaError::param(format!(
            "template {} does not fit strictly inside a {n}x{n} image",
            template.name
        )));
    }

    // Radar looks along +x; the shadow extends to larger rows.
    let length = cfg.shadow_length * scale;
    let steps = (2.0 * length).ceil() as usize;
    let mut shadow = BTreeSet::new();
    for &(x, y) in &target {
        for k in 1..=steps {
            let xs = x + (k as f64 * 0.5).round() as usize;
            if xs >= n {
                break;
            }
            if !target.contains(&(xs, y)) {
                shadow.insert((xs, y));
            }
        }
    }
    Ok((SceneLayers { target, shadow }, scale))
}

fn render_scene<R: Rng>(layers: &SceneLayers, cfg: &SynthConfig, rng: &mut R) -> SarImage {
    let n = cfg.size;
    let mut img = SarImage::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            let level = if layers.target.contains(&(x, y)) {
                cfg.target_level
            } else if layers.shadow.contains(&(x, y)) {
                cfg.shadow_level
            } else {
                cfg.background_level
            };
            let e: f64 = rng.sample(Exp1);
            let speckle = (1.0 - cfg.speckle) + cfg.speckle * e;
            img.set(x, y, (level * speckle).sqrt());
        }
    }
    img.max_normalized()
}

/// Generates one scene with its layers; used by the dataset generator and
/// by tests that need the shadow ground truth.
pub fn generate_scene(cfg: &SynthConfig, class: usize, index: usize) -> Result<(SarImage, SceneLayers)> {
    let mut rng = rng_for(cfg.seed, &format!("synth/{class}/{index}"));
    let (layers, _) = layout(&cfg.template(class), cfg, &mut rng)?;
    let img = render_scene(&layers, cfg, &mut rng);
    Ok((img, layers))
}

/// `classes × per_class` samples ordered by class then index, with ids
/// `c<class>_<index>`.
pub fn generate_synthetic_dataset(cfg: &SynthConfig) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for class in 0..cfg.classes {
        for index in 0..cfg.per_class {
            let (image, layers) = generate_scene(cfg, class, index)?;
            let mask = TargetMask::new(cfg.size, cfg.size, layers.target)?;
            out.push(LabeledSample {
                id: format!("c{class}_{index:04}"),
                image,
                mask,
                label: class,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_balance() {
        let cfg = SynthConfig {
            per_class: 5,
            ..SynthConfig::default()
        };
        let d = generate_synthetic_dataset(&cfg).unwrap();
        assert_eq!(d.len(), 20);
        for k in 0..4 {
            assert_eq!(d.iter().filter(|s| s.label == k).count(), 5);
        }
        assert_eq!(d, generate_synthetic_dataset(&cfg).unwrap());
    }

    #[test]
    fn noiseless_target_is_brightest() {
        let cfg = SynthConfig {
            per_class: 2,
            speckle: 0.0,
            ..SynthConfig::default()
        };
        for s in generate_synthetic_dataset(&cfg).unwrap() {
            let min_target = s.mask.iter().map(|(x, y)| s.image.at(x, y)).fold(f64::INFINITY, f64::min);
            let max_other = (0..128)
                .flat_map(|x| (0..128).map(move |y| (x, y)))
                .filter(|&(x, y)| !s.mask.contains(x, y))
                .map(|(x, y)| s.image.at(x, y))
                .fold(0.0, f64::max);
            assert!(min_target >= max_other);
        }
    }

    #[test]
    fn masks_inside_and_shadow_disjoint() {
        let cfg = SynthConfig {
            classes: 7,
            per_class: 3,
            ..SynthConfig::default()
        };
        for class in 0..7 {
            for i in 0..3 {
                let (img, layers) = generate_scene(&cfg, class, i).unwrap();
                assert!(!layers.target.is_empty() && !layers.shadow.is_empty());
                assert!(layers.shadow.is_disjoint(&layers.target));
                assert!(layers.target.iter().all(|&(x, y)| x > 0 && y > 0 && x < 127 && y < 127));
                assert!(img.max() <= 1.0 && img.pixels.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn targets_survive_center_crop() {
        let cfg = SynthConfig {
            per_class: 4,
            ..SynthConfig::default()
        };
        for s in generate_synthetic_dataset(&cfg).unwrap() {
            let (_, m) = super::super::center_crop(&s.image, &s.mask, 88).unwrap();
            assert_eq!(m.len(), s.mask.len(), "{}", s.id);
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { classes: 1, ..SynthConfig::default() },
            SynthConfig { size: 16, ..SynthConfig::default() },
            SynthConfig { speckle: 1.5, ..SynthConfig::default() },
        ];
        for c in bad {
            assert!(generate_synthetic_dataset(&c).is_err());
        }
        let huge = SynthConfig {
            templates: (0..4)
                .map(|k| ClassTemplate {
                    scale_range: (90.0, 90.0),
                    ..ClassTemplate::builtin(k)
                })
                .collect(),
            ..SynthConfig::default()
        };
        assert!(generate_synthetic_dataset(&huge).is_err());
    }
}
