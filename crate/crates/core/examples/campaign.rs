//! A small comparative campaign (3 images per class, N = 1..3) written to a
//! report directory as CSV, JSON and SVG.
//!
//!     cargo run --release --example campaign -- report_dir

use otsa::classifier::{train, ModelSpec, TrainConfig, TrainSample};
use otsa::dataio::{generate_synthetic_dataset, holdout_split, prepare_sample, SynthConfig, CROP_SIZE};
use otsa::evaluation::{emit_report, run_campaign, CampaignConfig, ReportPaths};
use otsa::{ImagingParams, Renderer};

fn main() -> otsa::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "campaign_report".into());
    let data = generate_synthetic_dataset(&SynthConfig {
        per_class: 30,
        ..SynthConfig::default()
    })?;
    let (train_set, test_set) = holdout_split(&data, 0.3, 1)?;
    let samples: Vec<TrainSample> = train_set
        .iter()
        .map(|s| TrainSample {
            image: s.image.clone(),
            label: s.label,
        })
        .collect();
    let model = train(&samples, ModelSpec::new(CROP_SIZE, CROP_SIZE, 4), &TrainConfig::default())?;

    let pool = test_set
        .iter()
        .map(|s| prepare_sample(s, CROP_SIZE))
        .collect::<otsa::Result<Vec<_>>>()?;
    let cfg = CampaignConfig {
        per_class: Some(3),
        ..CampaignConfig::default()
    };
    let report = run_campaign(&pool, &model, &cfg, &Renderer::new(&ImagingParams::default())?)?;
    println!("{} images after the prefilter", report.sample_size);
    for label in &report.attacks {
        println!(
            "{label:<12} success {:.3}  on-target {:.3}",
            report.success_rates[label],
            report.on_target_fractions.get(label).copied().unwrap_or(f64::NAN)
        );
    }
    let paths = ReportPaths::in_dir(dir.as_ref());
    emit_report(&report, &paths)?;
    println!("wrote {}, {}, {}", paths.csv.display(), paths.json.display(), paths.svg.display());
    Ok(())
}
