//! Writes a synthetic dataset (PGM images, PBM masks, JSON manifest), reads
//! it back, and checks the round trip. Also shows the threshold mask
//! fallback for images without a ground-truth mask.

use otsa::dataio::{generate_synthetic_dataset, load_dataset, save_dataset, threshold_segment, SynthConfig};

fn main() -> otsa::Result<()> {
    let dir = std::env::temp_dir().join("otsa_dataset_example");
    let data = generate_synthetic_dataset(&SynthConfig {
        per_class: 3,
        ..SynthConfig::default()
    })?;
    let manifest = save_dataset(&dir, &data)?;
    println!("wrote {} samples, manifest {}", data.len(), manifest.display());

    let back = load_dataset(&manifest)?;
    let mut worst = 0.0f64;
    for (a, b) in data.iter().zip(&back) {
        assert_eq!(a.mask, b.mask);
        assert_eq!((a.id.as_str(), a.label), (b.id.as_str(), b.label));
        let max = a.image.max();
        for (p, q) in a.image.pixels.iter().zip(&b.image.pixels) {
            worst = worst.max((p - q).abs() / max);
        }
    }
    println!("masks exact, worst image error {worst:.2e} of the pixel maximum (bound {:.2e})", 2f64.powi(-15));

    let s = &data[0];
    println!("{}: ground-truth mask {} px", s.id, s.mask.len());
    for t in [0.05, 0.1, 0.2] {
        let seg = threshold_segment(&s.image, t)?;
        let overlap = seg.iter().filter(|&(x, y)| s.mask.contains(x, y)).count();
        println!("  threshold {t}: {} px, {overlap} inside the ground truth", seg.len());
    }
    Ok(())
}
