//! Compares the analytic parameter gradient of the attack objective with
//! central finite differences for a random scatterer configuration.

use otsa::ascm::PARAM_NAMES;
use otsa::attack::{DEFAULT_THETA_MAX, DEFAULT_THETA_MIN};
use otsa::classifier::{ConvNet, ModelSpec};
use otsa::dataio::{generate_synthetic_dataset, prepare_sample, SynthConfig, CROP_SIZE};
use otsa::gradient::{fd_step, finite_difference_steps, Objective};
use otsa::positioning::ScoreParams;
use otsa::{ImagingParams, Renderer, ScattererParams, ScattererSet};
use rand::{Rng, SeedableRng};

fn main() -> otsa::Result<()> {
    let data = generate_synthetic_dataset(&SynthConfig {
        per_class: 1,
        ..SynthConfig::default()
    })?;
    let sample = prepare_sample(&data[0], CROP_SIZE)?;
    let model = ConvNet::init(ModelSpec::new(CROP_SIZE, CROP_SIZE, 4), 1)?;
    let renderer = Renderer::new(&ImagingParams::default())?;
    let obj = Objective {
        renderer: &renderer,
        model: &model,
        image: &sample.image,
        label: sample.label,
        mask: &sample.mask,
        lambda: 10.0,
        score: ScoreParams::default(),
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let set: ScattererSet = (0..2)
        .map(|_| {
            let mut v = [0.0; 7];
            for i in 0..7 {
                v[i] = rng.random_range(DEFAULT_THETA_MIN[i]..DEFAULT_THETA_MAX[i]);
            }
            ScattererParams::from_array(v)
        })
        .collect();

    let eval = obj.evaluate(&set)?;
    println!("objective {:.6} (loss {:.6}, mean score {:.4})", eval.value, eval.loss, eval.mean_score);
    let flat = set.to_flat();
    let steps: Vec<f64> = (0..flat.len()).map(fd_step).collect();
    let fd = finite_difference_steps(|v| obj.value(&ScattererSet::from_flat(v).unwrap()).unwrap(), &flat, &steps);
    println!("{:>3} {:>8} {:>14} {:>14} {:>10}", "i", "param", "analytic", "fd", "rel err");
    for (i, (a, f)) in eval.gradient.to_flat().iter().zip(&fd).enumerate() {
        let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-300);
        println!("{i:>3} {:>8} {a:>14.6e} {f:>14.6e} {rel:>10.2e}", PARAM_NAMES[i % 7]);
    }
    Ok(())
}
