//! Attacks one synthetic image with OTSA and with the unconstrained
//! baseline, printing the iterates and where the scatterers end up.
//!
//!     cargo run --release --example otsa_attack

use otsa::attack::{projected_ascent, run_baseline, AttackConfig, AttackKind, StopRule};
use otsa::classifier::{train, Classifier, ModelSpec, TrainConfig, TrainSample};
use otsa::dataio::{generate_synthetic_dataset, prepare_sample, SynthConfig, CROP_SIZE};
use otsa::{ImagingParams, Renderer};

fn main() -> otsa::Result<()> {
    let data = generate_synthetic_dataset(&SynthConfig {
        per_class: 25,
        ..SynthConfig::default()
    })?;
    let samples: Vec<TrainSample> = data
        .iter()
        .map(|s| TrainSample {
            image: s.image.clone(),
            label: s.label,
        })
        .collect();
    println!("training a quick model on {} images...", samples.len());
    let model = train(&samples, ModelSpec::new(CROP_SIZE, CROP_SIZE, 4), &TrainConfig::default())?;

    let renderer = Renderer::new(&ImagingParams::default())?;
    let config = AttackConfig {
        n_scatterers: 2,
        ..AttackConfig::default()
    };
    let sample = prepare_sample(&data[3], CROP_SIZE)?;
    let clean = model.predict(&sample.image)?;
    println!("{}: label {}, predicted {} (p = {:.3})", sample.id, sample.label, clean.class, clean.confidence(sample.label));

    let otsa = projected_ascent(
        AttackKind::Otsa,
        &sample.image,
        sample.label,
        &sample.mask,
        &model,
        &config,
        &renderer,
        config.lambda,
        StopRule::OnTargetAndConfident,
        |iter, set, eval| {
            if iter % 20 == 0 {
                let p = eval.prediction.confidence(sample.label);
                println!("  iter {iter:>3}: objective {:.4}, p(true) {p:.3}, x0 = ({:.2}, {:.2})", eval.value, set.scatterers[0].x, set.scatterers[0].y);
            }
        },
    )?;
    let base = run_baseline(&sample.image, sample.label, &sample.mask, &model, &config, &renderer)?;
    for r in [&otsa, &base] {
        println!(
            "{:<8} iters {:>3}  success {}  predicted {}  confidence {:.3}  on-target {:?}",
            r.kind, r.iterations, r.success, r.predicted_class, r.confidence, r.on_target
        );
    }
    println!("{}", otsa.to_json());
    Ok(())
}
