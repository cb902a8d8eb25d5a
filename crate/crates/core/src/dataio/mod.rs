//! Datasets, crops, segmentation fallback and file formats.

mod mstar;
mod pnm;
mod synth;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ascm::SarImage;
use crate::error::{OtsaError, Result};
use crate::positioning::TargetMask;

pub use mstar::{decode_mstar_magnitude, parse_mstar_header, synthesize_mstar_header, MstarHeader};
pub use pnm::{
    decode_pbm, decode_pgm, encode_pbm, encode_pgm, load_image, load_mask, parse_sidecar, save_image,
    save_mask, sidecar_path, ImageSidecar,
};
pub use synth::{generate_scene, generate_synthetic_dataset, ClassTemplate, SceneLayers, SynthConfig};

/// Side length of the classifier input patch.
pub const CROP_SIZE: usize = 88;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub image: SarImage,
    pub mask: TargetMask,
    pub label: usize,
}

fn check_crop(image: &SarImage, size: usize) -> Result<()> {
    if image.rows < size || image.cols < size {
        return Err(OtsaError::Dimension(format!(
            "{}x{} image is smaller than the {size}x{size} crop",
            image.rows, image.cols
        )));
    }
    Ok(())
}

fn crop_mask(mask: &TargetMask, row0: usize, col0: usize, rows: usize, cols: usize) -> TargetMask {
    let coords = mask.iter().filter_map(|(x, y)| {
        (x >= row0 && y >= col0 && x < row0 + rows && y < col0 + cols).then(|| (x - row0, y - col0))
    });
    TargetMask::new(rows, cols, coords).expect("translated coordinates lie inside the crop")
}

fn crop_pair(
    image: &SarImage,
    mask: &TargetMask,
    row0: usize,
    col0: usize,
    size: usize,
) -> Result<(SarImage, TargetMask)> {
    if (mask.rows(), mask.cols()) != image.dims() {
        return Err(OtsaError::Dimension("mask and image sizes differ".into()));
    }
    Ok((
        image.crop(row0, col0, size, size)?,
        crop_mask(mask, row0, col0, size, size),
    ))
}

/// Central `size × size` patch at offsets `floor((dim − size) / 2)`.
pub fn center_crop(image: &SarImage, mask: &TargetMask, size: usize) -> Result<(SarImage, TargetMask)> {
    check_crop(image, size)?;
    crop_pair(image, mask, (image.rows - size) / 2, (image.cols - size) / 2, size)
}

/// Patch at offsets drawn uniformly from `[0, dim − size]`.
pub fn random_crop<R: Rng + ?Sized>(
    image: &SarImage,
    mask: &TargetMask,
    size: usize,
    rng: &mut R,
) -> Result<(SarImage, TargetMask)> {
    check_crop(image, size)?;
    let r0 = rng.random_range(0..=image.rows - size);
    let c0 = rng.random_range(0..=image.cols - size);
    crop_pair(image, mask, r0, c0, size)
}

/// Image-only variant of [`random_crop`] with a rectangular window.
pub fn random_crop_image<R: Rng + ?Sized>(
    image: &SarImage,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<SarImage> {
    if image.rows < rows || image.cols < cols {
        return Err(OtsaError::Dimension(format!(
            "{}x{} image is smaller than the {rows}x{cols} crop",
            image.rows, image.cols
        )));
    }
    let r0 = rng.random_range(0..=image.rows - rows);
    let c0 = rng.random_range(0..=image.cols - cols);
    image.crop(r0, c0, rows, cols)
}

/// Center crop followed by max-normalization; the form attacks operate on.
pub fn prepare_sample(sample: &LabeledSample, size: usize) -> Result<LabeledSample> {
    let (image, mask) = center_crop(&sample.image, &sample.mask, size)?;
    Ok(LabeledSample {
        id: sample.id.clone(),
        image: image.max_normalized(),
        mask,
        label: sample.label,
    })
}

/// Pixels `≥ t · max`, reduced to the largest 4-connected component (first
/// in raster order on ties).
pub fn threshold_segment(image: &SarImage, t: f64) -> Result<TargetMask> {
    if !(t > 0.0 && t < 1.0) {
        return Err(OtsaError::param("threshold fraction must lie in (0, 1)"));
    }
    let (rows, cols) = image.dims();
    let max = image.max();
    if !(max > 0.0) {
        return Ok(TargetMask::empty(rows, cols));
    }
    let level = t * max;
    let bright: Vec<bool> = image.pixels.iter().map(|v| *v >= level).collect();
    let mut label = vec![usize::MAX; rows * cols];
    let mut best: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..rows * cols {
        if !bright[start] || label[start] != usize::MAX {
            continue;
        }
        let mut comp = Vec::new();
        label[start] = start;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (r, c) = (i / cols, i % cols);
            let mut visit = |j: usize| {
                if bright[j] && label[j] == usize::MAX {
                    label[j] = start;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - cols);
            }
            if r + 1 < rows {
                visit(i + cols);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < cols {
                visit(i + 1);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    TargetMask::new(rows, cols, best.into_iter().map(|i| (i / cols, i % cols)))
}

/// One dataset entry; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: String,
    pub mask_path: String,
    pub label: usize,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(entries).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| OtsaError::io(path, e))
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    serde_json::from_str(text).map_err(|e| OtsaError::format("manifest", e.to_string()))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| OtsaError::io(path, e))?;
    parse_manifest(&text)
}

/// Writes every sample as `<id>.pgm` (+ sidecar) and `<id>_mask.pbm` under
/// `dir`, then the manifest as `dir/manifest.json`. Returns the manifest path.
pub fn save_dataset(dir: &Path, samples: &[LabeledSample]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| OtsaError::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image_path = format!("{}.pgm", s.id);
        let mask_path = format!("{}_mask.pbm", s.id);
        save_image(&dir.join(&image_path), &s.image)?;
        save_mask(&dir.join(&mask_path), &s.mask)?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            image_path,
            mask_path,
            label: s.label,
        });
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

pub fn load_dataset(manifest: &Path) -> Result<Vec<LabeledSample>> {
    let entries = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let image = load_image(&base.join(&e.image_path))?;
            let mask = load_mask(&base.join(&e.mask_path))?;
            if (mask.rows(), mask.cols()) != image.dims() {
                return Err(OtsaError::format(
                    "mask_path",
                    format!("mask size differs from image for {}", e.id),
                ));
            }
            Ok(LabeledSample {
                id: e.id,
                image,
                mask,
                label: e.label,
            })
        })
        .collect()
}

/// Deterministic per-class split: `ceil(fraction · n_class)` samples of each
/// class go to the test side. Both sides stay in input order.
pub fn holdout_split(
    samples: &[LabeledSample],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(OtsaError::param(format!("holdout fraction must lie in [0, 1), got {fraction}")));
    }
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    let mut rng = crate::seed::rng_for(seed, "dataio.holdout");
    let mut test = vec![false; samples.len()];
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).ceil() as usize;
        for &i in idx.iter().take(k) {
            test[i] = true;
        }
    }
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for (s, t) in samples.iter().zip(test) {
        if t { te.push(s.clone()) } else { tr.push(s.clone()) }
    }
    Ok((tr, te))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(n: usize) -> SarImage {
        SarImage::from_pixels(n, n, (0..n * n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn center_crop_offsets() {
        let img = gradient_image(128);
        let mask = TargetMask::new(128, 128, [(20, 20), (5, 5), (107, 107), (108, 20)]).unwrap();
        let (c, m) = center_crop(&img, &mask, 88).unwrap();
        assert_eq!(c.at(0, 0), img.at(20, 20));
        assert_eq!(c.at(87, 87), img.at(107, 107));
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![(0, 0), (87, 87)]);
        let small = gradient_image(88);
        let (same, _) = center_crop(&small, &TargetMask::empty(88, 88), 88).unwrap();
        assert_eq!(same, small);
        assert!(center_crop(&gradient_image(80), &TargetMask::empty(80, 80), 88).is_err());
    }

    #[test]
    fn random_crop_range_and_determinism() {
        let img = gradient_image(128);
        let mask = TargetMask::empty(128, 128);
        let mut seen_max = 0usize;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..400 {
            let (c, _) = random_crop(&img, &mask, 88, &mut rng).unwrap();
            let v = c.at(0, 0) as usize;
            let (r0, c0) = (v / 128, v % 128);
            assert!(r0 <= 40 && c0 <= 40);
            seen_max = seen_max.max(r0).max(c0);
        }
        assert_eq!(seen_max, 40);
        let a = random_crop(&img, &mask, 88, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_crop(&img, &mask, 88, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let small = gradient_image(88);
        let (same, _) = random_crop(&small, &TargetMask::empty(88, 88), 88, &mut rng).unwrap();
        assert_eq!(same, small);
    }

    #[test]
    fn threshold_examples() {
        let zero = SarImage::zeros(10, 10);
        assert!(threshold_segment(&zero, 0.5).unwrap().is_empty());

        let mut one = SarImage::zeros(10, 10);
        one.set(3, 4, 2.0);
        let m = threshold_segment(&one, 0.5).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![(3, 4)]);

        let mut two = SarImage::zeros(12, 12);
        for r in 1..4 {
            for c in 1..4 {
                two.set(r, c, 0.8);
            }
        }
        for r in 7..9 {
            for c in 7..9 {
                two.set(r, c, 1.0);
            }
        }
        let m = threshold_segment(&two, 0.5).unwrap();
        assert_eq!(m.len(), 9);
        assert!(m.contains(2, 2) && !m.contains(7, 7));
        assert!(threshold_segment(&two, 1.0).is_err());
    }

    #[test]
    fn threshold_matches_flood_fill_oracle() {
        // Independent recursive flood fill on random binary scenes.
        fn fill(grid: &[bool], seen: &mut [bool], n: usize, r: usize, c: usize) -> usize {
            let i = r * n + c;
            if !grid[i] || seen[i] {
                return 0;
            }
            seen[i] = true;
            let mut total = 1;
            if r > 0 {
                total += fill(grid, seen, n, r - 1, c);
            }
            if r + 1 < n {
                total += fill(grid, seen, n, r + 1, c);
            }
            if c > 0 {
                total += fill(grid, seen, n, r, c - 1);
            }
            if c + 1 < n {
                total += fill(grid, seen, n, r, c + 1);
            }
            total
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = 16;
            let img = SarImage::from_pixels(n, n, (0..n * n).map(|_| rng.random::<f64>()).collect()).unwrap();
            let t = 0.6;
            let level = t * img.max();
            let grid: Vec<bool> = img.pixels.iter().map(|v| *v >= level).collect();
            let mut seen = vec![false; n * n];
            let mut largest = 0;
            for r in 0..n {
                for c in 0..n {
                    largest = largest.max(fill(&grid, &mut seen, n, r, c));
                }
            }
            assert_eq!(threshold_segment(&img, t).unwrap().len(), largest);
        }
    }

    #[test]
    fn manifest_rejects_garbage() {
        assert!(matches!(parse_manifest("[{\"id\": 3}]"), Err(OtsaError::Format { .. })));
        assert!(parse_manifest("not json").is_err());
        let ok = parse_manifest(r#"[{"id":"a","image_path":"a.pgm","mask_path":"a.pbm","label":1}]"#).unwrap();
        assert_eq!(ok[0].label, 1);
    }

    #[test]
    fn dataset_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            per_class: 2,
            ..SynthConfig::default()
        };
        let samples = generate_synthetic_dataset(&cfg).unwrap();
        let manifest = save_dataset(dir.path(), &samples).unwrap();
        let back = load_dataset(&manifest).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.mask, b.mask);
            assert_eq!(a.label, b.label);
            for (p, q) in a.image.pixels.iter().zip(&b.image.pixels) {
                assert!((p - q).abs() <= a.image.max() * 2f64.powi(-15));
            }
        }
    }
}
