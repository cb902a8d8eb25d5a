//! Trains the default convolutional classifier on the default synthetic
//! dataset and reports held-out accuracy. Takes under a minute in release.
//!
//!     cargo run --release --example train_classifier -- model.otsaw

use otsa::classifier::{accuracy, train_with_history, ConvNet, ModelSpec, TrainConfig, TrainSample};
use otsa::dataio::{generate_synthetic_dataset, holdout_split, prepare_sample, SynthConfig, CROP_SIZE};
use std::time::Instant;

fn main() -> otsa::Result<()> {
    let out = std::env::args().nth(1);
    let data = generate_synthetic_dataset(&SynthConfig::default())?;
    let (train, test) = holdout_split(&data, 0.35, 0)?;
    let samples: Vec<TrainSample> = train
        .iter()
        .map(|s| TrainSample {
            image: s.image.clone(),
            label: s.label,
        })
        .collect();
    let cfg = TrainConfig::default();
    println!("{} train / {} test, {:?}", train.len(), test.len(), cfg);

    let t = Instant::now();
    let (model, history): (ConvNet, _) = train_with_history(&samples, ModelSpec::new(CROP_SIZE, CROP_SIZE, 4), &cfg)?;
    for (e, l) in history.iter().enumerate().step_by(5) {
        println!("epoch {:>3}  loss {l:.4}", e + 1);
    }
    let held: Vec<_> = test
        .iter()
        .map(|s| prepare_sample(s, CROP_SIZE).map(|p| (p.image, p.label)))
        .collect::<otsa::Result<_>>()?;
    println!("held-out accuracy {:.3} after {:.1}s", accuracy(&model, &held)?, t.elapsed().as_secs_f64());
    if let Some(path) = out {
        model.save(path.as_ref())?;
        println!("saved {path}");
    }
    Ok(())
}
