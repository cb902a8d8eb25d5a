//! Differentiable image classifiers.
//!
//! Attacks only see the [`Classifier`] trait: logits and a vector-Jacobian
//! product back to the input pixels. [`ConvNet`] is the default model:
//!
//! ```text
//! conv(8, 5x5, stride 2) -> ReLU -> conv(16, 5x5, stride 2) -> ReLU
//!   -> global average pool -> dense(K) -> softmax
//! ```
//!
//! with valid padding. [`LinearSoftmax`] is a single dense layer over the
//! raw pixels, convenient as a smooth reference model.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ascm::SarImage;
use crate::dataio::random_crop_image;
use crate::error::{OtsaError, Result};
use crate::gradient::PixelGradient;

/// Floor applied to the ground-truth probability inside the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub class: usize,
}

impl Prediction {
    pub fn from_logits(logits: &[f64]) -> Self {
        let probabilities = softmax(logits);
        let class = argmax(&probabilities);
        Self {
            probabilities,
            class,
        }
    }

    pub fn confidence(&self, class: usize) -> f64 {
        self.probabilities[class]
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `−log(max(p_y, floor))` and its gradient with respect to the logits.
fn loss_and_dlogits(pred: &Prediction, label: usize) -> (f64, Vec<f64>) {
    let p = pred.probabilities[label];
    let loss = -p.max(PROB_FLOOR).ln();
    let dlogits = if p < PROB_FLOOR {
        vec![0.0; pred.probabilities.len()]
    } else {
        pred.probabilities
            .iter()
            .enumerate()
            .map(|(c, q)| if c == label { q - 1.0 } else { *q })
            .collect()
    };
    (loss, dlogits)
}

/// Loss, prediction and input gradient from one forward/backward pass.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub prediction: Prediction,
    pub loss: f64,
    pub input_gradient: PixelGradient,
}

pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;

    /// `(rows, cols)` of accepted images.
    fn input_dims(&self) -> (usize, usize);

    fn logits(&self, image: &SarImage) -> Result<Vec<f64>>;

    /// `Σ_c dlogits[c] · ∂logit_c/∂pixel`.
    fn logits_input_vjp(&self, image: &SarImage, dlogits: &[f64]) -> Result<PixelGradient>;

    fn predict(&self, image: &SarImage) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits(image)?))
    }

    fn cross_entropy_loss(&self, image: &SarImage, label: usize) -> Result<f64> {
        self.check_label(label)?;
        let pred = self.predict(image)?;
        Ok(loss_and_dlogits(&pred, label).0)
    }

    fn input_gradient(&self, image: &SarImage, label: usize) -> Result<PixelGradient> {
        Ok(self.loss_and_gradient(image, label)?.input_gradient)
    }

    fn loss_and_gradient(&self, image: &SarImage, label: usize) -> Result<LossEval> {
        self.check_label(label)?;
        let prediction = self.predict(image)?;
        let (loss, dlogits) = loss_and_dlogits(&prediction, label);
        let input_gradient = self.logits_input_vjp(image, &dlogits)?;
        Ok(LossEval {
            prediction,
            loss,
            input_gradient,
        })
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.num_classes() {
            return Err(OtsaError::param(format!(
                "label {label} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    fn check_image(&self, image: &SarImage) -> Result<()> {
        if image.dims() != self.input_dims() {
            let (r, c) = self.input_dims();
            return Err(OtsaError::Dimension(format!(
                "model expects {r}x{c}, got {}x{}",
                image.rows, image.cols
            )));
        }
        Ok(())
    }
}

/// Layer dimensions of [`ConvNet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_rows: usize,
    pub input_cols: usize,
    pub classes: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ModelSpec {
    pub fn new(input_rows: usize, input_cols: usize, classes: usize) -> Self {
        Self {
            input_rows,
            input_cols,
            classes,
            conv1_filters: 8,
            conv2_filters: 16,
            kernel: 5,
            stride: 2,
        }
    }

    fn conv_out(&self, n: usize) -> usize {
        (n - self.kernel) / self.stride + 1
    }

    pub fn conv1_dims(&self) -> (usize, usize) {
        (self.conv_out(self.input_rows), self.conv_out(self.input_cols))
    }

    pub fn conv2_dims(&self) -> (usize, usize) {
        let (r, c) = self.conv1_dims();
        (self.conv_out(r), self.conv_out(c))
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(OtsaError::param("a classifier needs at least 2 classes"));
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(OtsaError::param("layer sizes must be positive"));
        }
        let min_in = self.kernel + self.stride * (self.kernel - 1);
        if self.input_rows < min_in || self.input_cols < min_in {
            return Err(OtsaError::param(format!(
                "input {}x{} too small for two {}x{} stride-{} convolutions",
                self.input_rows, self.input_cols, self.kernel, self.kernel, self.stride
            )));
        }
        Ok(())
    }

    fn sizes(&self) -> [usize; 6] {
        let k2 = self.kernel * self.kernel;
        [
            self.conv1_filters * k2,
            self.conv1_filters,
            self.conv2_filters * self.conv1_filters * k2,
            self.conv2_filters,
            self.classes * self.conv2_filters,
            self.classes,
        ]
    }
}

/// Two-layer convolutional classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub spec: ModelSpec,
    /// Seed the weights were initialized from.
    pub seed: u64,
    /// `[filter][u][v]`
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    /// `[filter][in_channel][u][v]`
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    /// `[class][channel]`
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

struct Activations {
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Default)]
struct WeightGrads {
    conv1_w: Vec<f64>,
    conv1_b: Vec<f64>,
    conv2_w: Vec<f64>,
    conv2_b: Vec<f64>,
    dense_w: Vec<f64>,
    dense_b: Vec<f64>,
}

impl WeightGrads {
    fn layers_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    fn zeros(spec: &ModelSpec) -> Self {
        let s = spec.sizes();
        Self {
            conv1_w: vec![0.0; s[0]],
            conv1_b: vec![0.0; s[1]],
            conv2_w: vec![0.0; s[2]],
            conv2_b: vec![0.0; s[3]],
            dense_w: vec![0.0; s[4]],
            dense_b: vec![0.0; s[5]],
        }
    }
}

const MAGIC: &[u8; 6] = b"OTSAW1";

impl ConvNet {
    /// He-scaled normal initialization; biases start at zero.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k2 = (spec.kernel * spec.kernel) as f64;
        let s = spec.sizes();
        let mut normal = |n: usize, fan_in: f64| -> Vec<f64> {
            let std = (2.0 / fan_in).sqrt();
            (0..n)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let conv1_w = normal(s[0], k2);
        let conv2_w = normal(s[2], k2 * spec.conv1_filters as f64);
        let dense_w = normal(s[4], spec.conv2_filters as f64);
        Ok(Self {
            spec,
            seed,
            conv1_w,
            conv1_b: vec![0.0; s[1]],
            conv2_w,
            conv2_b: vec![0.0; s[3]],
            dense_w,
            dense_b: vec![0.0; s[5]],
        })
    }

    fn forward(&self, image: &SarImage) -> Result<Activations> {
        self.check_image(image)?;
        let sp = &self.spec;
        let (k, st) = (sp.kernel, sp.stride);
        let (h1, w1) = sp.conv1_dims();
        let (h2, w2) = sp.conv2_dims();
        let (f1, f2) = (sp.conv1_filters, sp.conv2_filters);
        let cols = image.cols;
        let x = &image.pixels;

        let mut pre1 = vec![0.0; f1 * h1 * w1];
        for f in 0..f1 {
            let wf = &self.conv1_w[f * k * k..(f + 1) * k * k];
            for i in 0..h1 {
                for j in 0..w1 {
                    let mut acc = self.conv1_b[f];
                    for u in 0..k {
                        let row = &x[(st * i + u) * cols + st * j..][..k];
                        let wr = &wf[u * k..(u + 1) * k];
                        for v in 0..k {
                            acc += wr[v] * row[v];
                        }
                    }
                    pre1[(f * h1 + i) * w1 + j] = acc;
                }
            }
        }
        let act1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();

        let mut pre2 = vec![0.0; f2 * h2 * w2];
        for g in 0..f2 {
            for i in 0..h2 {
                for j in 0..w2 {
                    let mut acc = self.conv2_b[g];
                    for f in 0..f1 {
                        let wgf = &self.conv2_w[(g * f1 + f) * k * k..][..k * k];
                        let plane = &act1[f * h1 * w1..(f + 1) * h1 * w1];
                        for u in 0..k {
                            let row = &plane[(st * i + u) * w1 + st * j..][..k];
                            let wr = &wgf[u * k..(u + 1) * k];
                            for v in 0..k {
                                acc += wr[v] * row[v];
                            }
                        }
                    }
                    pre2[(g * h2 + i) * w2 + j] = acc;
                }
            }
        }
        let area = (h2 * w2) as f64;
        let pooled: Vec<f64> = (0..f2)
            .map(|g| pre2[g * h2 * w2..(g + 1) * h2 * w2].iter().map(|v| v.max(0.0)).sum::<f64>() / area)
            .collect();
        let logits = (0..sp.classes)
            .map(|c| {
                self.dense_b[c]
                    + pooled
                        .iter()
                        .zip(&self.dense_w[c * f2..(c + 1) * f2])
                        .map(|(p, w)| p * w)
                        .sum::<f64>()
            })
            .collect();
        Ok(Activations {
            pre1,
            act1,
            pre2,
            pooled,
            logits,
        })
    }

    /// Backpropagates `dlogits`. Weight gradients are accumulated into
    /// `grads` when given; the input gradient is returned when requested.
    fn backward(
        &self,
        image: &SarImage,
        acts: &Activations,
        dlogits: &[f64],
        grads: Option<&mut WeightGrads>,
        want_input: bool,
    ) -> Option<SarImage> {
        let sp = &self.spec;
        let (k, st) = (sp.kernel, sp.stride);
        let (h1, w1) = sp.conv1_dims();
        let (h2, w2) = sp.conv2_dims();
        let (f1, f2) = (sp.conv1_filters, sp.conv2_filters);
        let area = (h2 * w2) as f64;

        let mut dpooled = vec![0.0; f2];
        for c in 0..sp.classes {
            for g in 0..f2 {
                dpooled[g] += dlogits[c] * self.dense_w[c * f2 + g];
            }
        }
        let mut dpre2 = vec![0.0; f2 * h2 * w2];
        for g in 0..f2 {
            let d = dpooled[g] / area;
            for idx in g * h2 * w2..(g + 1) * h2 * w2 {
                if acts.pre2[idx] > 0.0 {
                    dpre2[idx] = d;
                }
            }
        }

        let mut dact1 = vec![0.0; f1 * h1 * w1];
        for g in 0..f2 {
            for f in 0..f1 {
                let wgf = &self.conv2_w[(g * f1 + f) * k * k..][..k * k];
                let plane = &mut dact1[f * h1 * w1..(f + 1) * h1 * w1];
                for i in 0..h2 {
                    for j in 0..w2 {
                        let d = dpre2[(g * h2 + i) * w2 + j];
                        if d == 0.0 {
                            continue;
                        }
                        for u in 0..k {
                            let row = &mut plane[(st * i + u) * w1 + st * j..][..k];
                            for v in 0..k {
                                row[v] += d * wgf[u * k + v];
                            }
                        }
                    }
                }
            }
        }
        let dpre1: Vec<f64> = dact1
            .iter()
            .zip(&acts.pre1)
            .map(|(d, p)| if *p > 0.0 { *d } else { 0.0 })
            .collect();

        if let Some(gr) = grads {
            for c in 0..sp.classes {
                gr.dense_b[c] += dlogits[c];
                for g in 0..f2 {
                    gr.dense_w[c * f2 + g] += dlogits[c] * acts.pooled[g];
                }
            }
            for g in 0..f2 {
                for i in 0..h2 {
                    for j in 0..w2 {
                        let d = dpre2[(g * h2 + i) * w2 + j];
                        if d == 0.0 {
                            continue;
                        }
                        gr.conv2_b[g] += d;
                        for f in 0..f1 {
                            let plane = &acts.act1[f * h1 * w1..(f + 1) * h1 * w1];
                            let gw = &mut gr.conv2_w[(g * f1 + f) * k * k..][..k * k];
                            for u in 0..k {
                                let row = &plane[(st * i + u) * w1 + st * j..][..k];
                                for v in 0..k {
                                    gw[u * k + v] += d * row[v];
                                }
                            }
                        }
                    }
                }
            }
            let cols = image.cols;
            for f in 0..f1 {
                let gw = &mut gr.conv1_w[f * k * k..(f + 1) * k * k];
                for i in 0..h1 {
                    for j in 0..w1 {
                        let d = dpre1[(f * h1 + i) * w1 + j];
                        if d == 0.0 {
                            continue;
                        }
                        gr.conv1_b[f] += d;
                        for u in 0..k {
                            let row = &image.pixels[(st * i + u) * cols + st * j..][..k];
                            for v in 0..k {
                                gw[u * k + v] += d * row[v];
                            }
                        }
                    }
                }
            }
        }

        if !want_input {
            return None;
        }
        let mut dx = SarImage::zeros(image.rows, image.cols);
        let cols = image.cols;
        for f in 0..f1 {
            let wf = &self.conv1_w[f * k * k..(f + 1) * k * k];
            for i in 0..h1 {
                for j in 0..w1 {
                    let d = dpre1[(f * h1 + i) * w1 + j];
                    if d == 0.0 {
                        continue;
                    }
                    for u in 0..k {
                        let row = &mut dx.pixels[(st * i + u) * cols + st * j..][..k];
                        for v in 0..k {
                            row[v] += d * wf[u * k + v];
                        }
                    }
                }
            }
        }
        Some(dx)
    }

    fn apply(&mut self, grads: &WeightGrads, scale: f64) {
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 6] = [
            (&mut self.conv1_w, &grads.conv1_w),
            (&mut self.conv1_b, &grads.conv1_b),
            (&mut self.conv2_w, &grads.conv2_w),
            (&mut self.conv2_b, &grads.conv2_b),
            (&mut self.dense_w, &grads.dense_w),
            (&mut self.dense_b, &grads.dense_b),
        ];
        for (w, g) in pairs {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi -= scale * gi;
            }
        }
    }

    fn layers(&self) -> [&Vec<f64>; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense_w,
            &self.dense_b,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.iter().all(|v| v.is_finite()))
    }

    /// Serializes as `OTSAW1`, seven little-endian `u32` dimensions, the
    /// `u64` seed, then every layer as little-endian `f64` in declaration
    /// order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sp = &self.spec;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for d in [
            sp.input_rows,
            sp.input_cols,
            sp.classes,
            sp.conv1_filters,
            sp.conv2_filters,
            sp.kernel,
            sp.stride,
        ] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        for layer in self.layers() {
            for v in layer {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| OtsaError::format("magic", "file shorter than the magic bytes"))?;
        if &magic != MAGIC {
            return Err(OtsaError::format("magic", "expected OTSAW1"));
        }
        let names = [
            "input_rows",
            "input_cols",
            "classes",
            "conv1_filters",
            "conv2_filters",
            "kernel",
            "stride",
        ];
        let mut dims = [0usize; 7];
        for (d, name) in dims.iter_mut().zip(names) {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| OtsaError::format(name, "truncated header"))?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)
            .map_err(|_| OtsaError::format("seed", "truncated header"))?;
        let seed = u64::from_le_bytes(b);
        let spec = ModelSpec {
            input_rows: dims[0],
            input_cols: dims[1],
            classes: dims[2],
            conv1_filters: dims[3],
            conv2_filters: dims[4],
            kernel: dims[5],
            stride: dims[6],
        };
        spec.validate()
            .map_err(|e| OtsaError::format("dimensions", e.to_string()))?;
        let sizes = spec.sizes();
        let total: usize = sizes.iter().sum();
        if r.len() != total * 8 {
            return Err(OtsaError::format(
                "weights",
                format!("expected {} bytes of weights, found {}", total * 8, r.len()),
            ));
        }
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(6);
        for n in sizes {
            let (head, rest) = r.split_at(n * 8);
            layers.push(
                head.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            );
            r = rest;
        }
        let mut it = layers.into_iter();
        let mut next = || it.next().expect("six layers");
        let net = Self {
            spec,
            seed,
            conv1_w: next(),
            conv1_b: next(),
            conv2_w: next(),
            conv2_b: next(),
            dense_w: next(),
            dense_b: next(),
        };
        if !net.is_finite() {
            return Err(OtsaError::format("weights", "non-finite weight value"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| OtsaError::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| OtsaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| OtsaError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl Classifier for ConvNet {
    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn input_dims(&self) -> (usize, usize) {
        (self.spec.input_rows, self.spec.input_cols)
    }

    fn logits(&self, image: &SarImage) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.logits)
    }

    fn logits_input_vjp(&self, image: &SarImage, dlogits: &[f64]) -> Result<PixelGradient> {
        let acts = self.forward(image)?;
        let dx = self
            .backward(image, &acts, dlogits, None, true)
            .expect("input gradient requested");
        Ok(PixelGradient(dx))
    }

    fn loss_and_gradient(&self, image: &SarImage, label: usize) -> Result<LossEval> {
        self.check_label(label)?;
        let acts = self.forward(image)?;
        let prediction = Prediction::from_logits(&acts.logits);
        let (loss, dlogits) = loss_and_dlogits(&prediction, label);
        let dx = self
            .backward(image, &acts, &dlogits, None, true)
            .expect("input gradient requested");
        Ok(LossEval {
            prediction,
            loss,
            input_gradient: PixelGradient(dx),
        })
    }
}

/// Dense softmax layer over raw pixels: `logits = W vec(X) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmax {
    pub rows: usize,
    pub cols: usize,
    /// `[class][pixel]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearSoftmax {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let k = bias.len();
        if k < 2 || weights.len() != k * rows * cols {
            return Err(OtsaError::param(format!(
                "linear model needs K >= 2 and K*rows*cols weights (K={k}, got {})",
                weights.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }
}

impl Classifier for LinearSoftmax {
    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn input_dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn logits(&self, image: &SarImage) -> Result<Vec<f64>> {
        self.check_image(image)?;
        let n = self.rows * self.cols;
        Ok(self
            .bias
            .iter()
            .enumerate()
            .map(|(c, b)| {
                b + self.weights[c * n..(c + 1) * n]
                    .iter()
                    .zip(&image.pixels)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
            })
            .collect())
    }

    fn logits_input_vjp(&self, image: &SarImage, dlogits: &[f64]) -> Result<PixelGradient> {
        self.check_image(image)?;
        let n = self.rows * self.cols;
        let mut dx = SarImage::zeros(self.rows, self.cols);
        for (c, d) in dlogits.iter().enumerate() {
            for (g, w) in dx.pixels.iter_mut().zip(&self.weights[c * n..(c + 1) * n]) {
                *g += d * w;
            }
        }
        Ok(PixelGradient(dx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Per-epoch inverse decay: epoch `e` uses `learning_rate / (1 + lr_decay * e)`.
    pub lr_decay: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 0.003,
            batch_size: 8,
            lr_decay: 0.15,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain minibatch gradient descent.
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

struct OptimizerState {
    kind: Optimizer,
    m: WeightGrads,
    v: WeightGrads,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, spec: &ModelSpec) -> Self {
        Self {
            kind,
            m: WeightGrads::zeros(spec),
            v: WeightGrads::zeros(spec),
            t: 0,
        }
    }

    /// Applies one update from summed batch gradients.
    fn step(&mut self, net: &mut ConvNet, grads: &mut WeightGrads, lr: f64, batch: usize) {
        let inv = 1.0 / batch as f64;
        match self.kind {
            Optimizer::Sgd => net.apply(grads, lr * inv),
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                let g = grads.layers_mut();
                let m = self.m.layers_mut();
                let v = self.v.layers_mut();
                for ((g, m), v) in g.into_iter().zip(m).zip(v) {
                    for ((gi, mi), vi) in g.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        let gm = *gi * inv;
                        *mi = B1 * *mi + (1.0 - B1) * gm;
                        *vi = B2 * *vi + (1.0 - B2) * gm * gm;
                        // reuse the gradient buffer for the step direction
                        *gi = (*mi / c1) / ((*vi / c2).sqrt() + 1e-8);
                    }
                }
                net.apply(grads, lr);
            }
        }
    }
}

/// One training example. Images larger than the model input are randomly
/// cropped to it every time they are drawn.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: SarImage,
    pub label: usize,
}

/// Trains a [`ConvNet`] with minibatch SGD. Returns the model and the mean
/// training loss measured after each epoch on center crops.
pub fn train_with_history(
    samples: &[TrainSample],
    spec: ModelSpec,
    config: &TrainConfig,
) -> Result<(ConvNet, Vec<f64>)> {
    if samples.is_empty() {
        return Err(OtsaError::param("training set is empty"));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= spec.classes) {
        return Err(OtsaError::param(format!(
            "label {} out of range for {} classes",
            s.label, spec.classes
        )));
    }
    if let Some(s) = samples
        .iter()
        .find(|s| s.image.rows < spec.input_rows || s.image.cols < spec.input_cols)
    {
        return Err(OtsaError::Dimension(format!(
            "training image {}x{} smaller than model input {}x{}",
            s.image.rows, s.image.cols, spec.input_rows, spec.input_cols
        )));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(OtsaError::param("batch size and learning rate must be positive"));
    }
    if !(config.lr_decay >= 0.0) || !config.lr_decay.is_finite() {
        return Err(OtsaError::param("lr_decay must be finite and non-negative"));
    }
    let mut net = ConvNet::init(spec, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(config.seed, "train/order"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut opt = OptimizerState::new(config.optimizer, &spec);
    let center: Vec<SarImage> = samples
        .iter()
        .map(|s| center_window(&s.image, spec.input_rows, spec.input_cols))
        .collect::<Result<_>>()?;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate / (1.0 + config.lr_decay * epoch as f64);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = WeightGrads::zeros(&spec);
            for &i in batch {
                let s = &samples[i];
                let img = if s.image.dims() == (spec.input_rows, spec.input_cols) {
                    s.image.clone()
                } else {
                    random_crop_image(&s.image, spec.input_rows, spec.input_cols, &mut rng)?
                };
                let acts = net.forward(&img)?;
                let pred = Prediction::from_logits(&acts.logits);
                let (_, dlogits) = loss_and_dlogits(&pred, s.label);
                net.backward(&img, &acts, &dlogits, Some(&mut grads), false);
            }
            opt.step(&mut net, &mut grads, lr, batch.len());
        }
        if !net.is_finite() {
            return Err(OtsaError::Numerical("training diverged".into()));
        }
        let mut total = 0.0;
        for (img, s) in center.iter().zip(samples) {
            total += net.cross_entropy_loss(img, s.label)?;
        }
        history.push(total / samples.len() as f64);
    }
    Ok((net, history))
}

pub fn train(samples: &[TrainSample], spec: ModelSpec, config: &TrainConfig) -> Result<ConvNet> {
    Ok(train_with_history(samples, spec, config)?.0)
}

fn center_window(image: &SarImage, rows: usize, cols: usize) -> Result<SarImage> {
    image.crop((image.rows - rows) / 2, (image.cols - cols) / 2, rows, cols)
}

/// Fraction of `(image, label)` pairs classified correctly.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, data: &[(SarImage, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Err(OtsaError::param("accuracy of an empty set"));
    }
    let mut correct = 0usize;
    for (img, label) in data {
        if model.predict(img)?.class == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(rows: usize, cols: usize, seed: u64) -> SarImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SarImage::from_pixels(rows, cols, (0..rows * cols).map(|_| rng.random()).collect()).unwrap()
    }

    fn small_spec() -> ModelSpec {
        ModelSpec::new(24, 24, 3)
    }

    #[test]
    fn probabilities_normalized_and_deterministic() {
        let net = ConvNet::init(small_spec(), 3).unwrap();
        let img = random_image(24, 24, 1);
        let a = net.predict(&img).unwrap();
        let b = net.predict(&img).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(a.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn zero_dense_layer_is_uniform_and_gradient_free() {
        let mut net = ConvNet::init(ModelSpec::new(24, 24, 10), 3).unwrap();
        net.dense_w.iter_mut().for_each(|w| *w = 0.0);
        let img = random_image(24, 24, 2);
        let p = net.predict(&img).unwrap();
        assert!(p.probabilities.iter().all(|q| (q - 0.1).abs() < 1e-15));
        let loss = net.cross_entropy_loss(&img, 4).unwrap();
        assert!((loss - 2.302585).abs() < 1e-6);
        let g = net.input_gradient(&img, 4).unwrap();
        assert!(g.0.pixels.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn loss_values() {
        let lin = |b: Vec<f64>| LinearSoftmax::new(2, 2, vec![0.0; 4 * b.len()], b).unwrap();
        let img = SarImage::zeros(2, 2);
        let half = lin(vec![0.0, 0.0]);
        assert!((half.cross_entropy_loss(&img, 0).unwrap() - 0.693147).abs() < 1e-6);
        let sure = lin(vec![800.0, 0.0]);
        assert_eq!(sure.cross_entropy_loss(&img, 0).unwrap(), 0.0);
        // probability underflows: floored at 1e-12
        let floored = sure.cross_entropy_loss(&img, 1).unwrap();
        assert!((floored - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(sure.cross_entropy_loss(&img, 2).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = ConvNet::init(small_spec(), 0).unwrap();
        assert!(net.predict(&SarImage::zeros(23, 24)).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = ConvNet::init(small_spec(), 9).unwrap();
        let img = random_image(24, 24, 4);
        let g = net.input_gradient(&img, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = 1e-6;
        for _ in 0..20 {
            let idx = rng.random_range(0..img.pixels.len());
            let mut plus = img.clone();
            plus.pixels[idx] += h;
            let mut minus = img.clone();
            minus.pixels[idx] -= h;
            let fd = (net.cross_entropy_loss(&plus, 1).unwrap() - net.cross_entropy_loss(&minus, 1).unwrap())
                / (2.0 * h);
            let a = g.0.pixels[idx];
            let scale = a.abs().max(fd.abs());
            assert!(scale < 1e-9 || (a - fd).abs() / scale < 1e-3, "pixel {idx}: {a} vs {fd}");
        }
        assert!(g.0.pixels.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn default_trait_gradient_agrees_with_fused_path() {
        let net = ConvNet::init(small_spec(), 9).unwrap();
        let img = random_image(24, 24, 5);
        let fused = net.loss_and_gradient(&img, 2).unwrap();
        let pred = net.predict(&img).unwrap();
        let (_, dl) = loss_and_dlogits(&pred, 2);
        let vjp = net.logits_input_vjp(&img, &dl).unwrap();
        assert_eq!(fused.input_gradient, vjp);
    }

    #[test]
    fn weights_round_trip_and_reject_corruption() {
        let net = ConvNet::init(small_spec(), 77).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..6], b"OTSAW1");
        assert_eq!(ConvNet::from_bytes(&bytes).unwrap(), net);
        assert!(matches!(
            ConvNet::from_bytes(&bytes[..bytes.len() - 3]),
            Err(OtsaError::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ConvNet::from_bytes(&bad), Err(OtsaError::Format { .. })));
        assert!(ConvNet::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let spec = small_spec();
        let samples = vec![TrainSample {
            image: random_image(24, 24, 1),
            label: 0,
        }];
        let cfg = TrainConfig {
            epochs: 0,
            seed: 12,
            ..TrainConfig::default()
        };
        let net = train(&samples, spec, &cfg).unwrap();
        assert_eq!(net, ConvNet::init(spec, 12).unwrap());
    }

    #[test]
    fn training_errors() {
        let spec = small_spec();
        let cfg = TrainConfig::default();
        assert!(train(&[], spec, &cfg).is_err());
        let bad = vec![TrainSample {
            image: random_image(24, 24, 1),
            label: 3,
        }];
        assert!(train(&bad, spec, &cfg).is_err());
    }

    /// Nearest-centroid oracle: the toy set is separable by it, and the
    /// trained network must match its perfect held-out accuracy.
    #[test]
    fn learns_bright_left_vs_bright_right() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut make = |label: usize| {
            let mut img = SarImage::zeros(24, 24);
            let c0 = if label == 0 { 3 } else { 15 };
            let r0 = rng.random_range(4..14);
            let c0 = c0 + rng.random_range(0..4);
            for r in r0..r0 + 6 {
                for c in c0..c0 + 5 {
                    img.set(r, c, 0.8 + 0.2 * rng.random::<f64>());
                }
            }
            for v in img.pixels.iter_mut() {
                *v += 0.05 * rng.random::<f64>();
            }
            (img, label)
        };
        let data: Vec<(SarImage, usize)> = (0..60).map(|i| make(i % 2)).collect();
        let (train_set, test_set) = data.split_at(40);

        let centroid = |label: usize| {
            let imgs: Vec<_> = train_set.iter().filter(|(_, l)| *l == label).collect();
            let mut c = vec![0.0; 24 * 24];
            for (img, _) in &imgs {
                for (a, b) in c.iter_mut().zip(&img.pixels) {
                    *a += b / imgs.len() as f64;
                }
            }
            c
        };
        let cents = [centroid(0), centroid(1)];
        let nearest = |img: &SarImage| {
            let d = |c: &Vec<f64>| c.iter().zip(&img.pixels).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            if d(&cents[0]) <= d(&cents[1]) { 0 } else { 1 }
        };
        assert!(test_set.iter().all(|(img, l)| nearest(img) == *l));

        let samples: Vec<TrainSample> = train_set
            .iter()
            .map(|(image, label)| TrainSample {
                image: image.clone(),
                label: *label,
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 4,
            seed: 1,
            ..TrainConfig::default()
        };
        let net = train(&samples, ModelSpec::new(24, 24, 2), &cfg).unwrap();
        assert_eq!(accuracy(&net, test_set).unwrap(), 1.0);
    }
}
