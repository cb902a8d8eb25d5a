use std::path::Path;

use otsa::cli::{self, EXIT_IO, EXIT_OK, EXIT_USAGE};
use otsa::dataio::{encode_pgm, load_dataset, load_image, prepare_sample, save_dataset, LabeledSample, CROP_SIZE};
use otsa::positioning::TargetMask;
use otsa::{ImagingParams, Renderer, SarImage, ScattererParams, ScattererSet};

const SMALL: [&str; 8] = [
    "--set",
    "data.per_class=4",
    "--set",
    "train.epochs=2",
    "--set",
    "attack.max_iters=5",
    "--set",
    "campaign.attacks=baseline:1,otsa:1,fgsm",
];

fn otsa(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let mut full = vec!["otsa", "--out", dir.to_str().unwrap()];
    full.extend_from_slice(&SMALL);
    full.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(full, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let (code, out, err) = otsa(dir, args);
    assert_eq!(code, EXIT_OK, "otsa {args:?}: {err}");
    out
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn gen_data_counts_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = ok(a.path(), &["gen-data"]);
    assert!(out.starts_with("wrote 16 samples"), "{out}");
    ok(b.path(), &["gen-data"]);
    let samples = load_dataset(&a.path().join("data/manifest.json")).unwrap();
    assert_eq!(samples.len(), 16);
    for s in &samples {
        for ext in [".pgm", ".pgm.json", "_mask.pbm"] {
            let name = format!("{}{ext}", s.id);
            assert_eq!(read(a.path().join("data").join(&name)), read(b.path().join("data").join(&name)));
        }
    }
    assert_eq!(read(a.path().join("data/manifest.json")), read(b.path().join("data/manifest.json")));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let (code, _, err) = otsa(&blocker.join("sub"), &["gen-data"]);
    assert_eq!(code, EXIT_IO);
    assert!(err.contains(blocker.to_str().unwrap()), "{err}");
}

#[test]
fn missing_inputs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(otsa(dir.path(), &["train"]).0, EXIT_USAGE);
    assert_eq!(otsa(dir.path(), &["campaign"]).0, EXIT_USAGE);
    ok(dir.path(), &["gen-data"]);
    // data but no weights
    assert_eq!(otsa(dir.path(), &["attack", "--kind", "otsa", "--image", "c0_0000"]).0, EXIT_USAGE);
    assert_eq!(otsa(dir.path(), &["--set", "attack.bogus=1", "gen-data"]).0, EXIT_USAGE);
    assert_eq!(otsa(dir.path(), &["--set", "nokey", "gen-data"]).0, EXIT_USAGE);
    assert_eq!(otsa(dir.path(), &["--jobs", "0", "gen-data"]).0, EXIT_USAGE);
    assert_eq!(otsa(dir.path(), &["frobnicate"]).0, EXIT_USAGE);
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data"]);
    ok(dir.path(), &["--set", "train.epochs=0", "train"]);
    let model = otsa::classifier::ConvNet::load(&dir.path().join("model.otsaw")).unwrap();
    let init = otsa::classifier::ConvNet::init(model.spec, model.seed).unwrap();
    assert_eq!(model, init);
}

/// Square block or thin bar at the image center. Samples are
/// max-normalized and the network pools globally, so the classes differ in
/// shape rather than brightness or position.
fn blob_image(square: bool) -> SarImage {
    let mut img = SarImage::zeros(128, 128);
    let (h, w) = if square { (20, 20) } else { (4, 60) };
    for x in 64 - h / 2..64 + h / 2 {
        for y in 64 - w / 2..64 + w / 2 {
            img.set(x, y, 1.0);
        }
    }
    img
}

#[test]
fn toy_separable_dataset_trains_to_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<LabeledSample> = (0..40)
        .map(|i| {
            let image = blob_image(i % 2 == 0);
            let mask = TargetMask::new(128, 128, (0..128).flat_map(|x| (0..128).map(move |y| (x, y)))
                .filter(|&(x, y)| image.at(x, y) > 0.0)).unwrap();
            LabeledSample {
                id: format!("toy{i:02}"),
                image,
                mask,
                label: i % 2,
            }
        })
        .collect();
    save_dataset(&dir.path().join("toy"), &data).unwrap();
    let data_dir = format!("data.dir={}", dir.path().join("toy").display());
    let out = ok(dir.path(), &["--set", &data_dir, "--set", "train.epochs=10", "--set", "train.learning_rate=0.02", "--set", "train.batch_size=4", "train"]);
    assert!(out.contains("accuracy 1.000"), "{out}");
}

#[test]
fn attack_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data"]);
    ok(dir.path(), &["train"]);

    ok(dir.path(), &["attack", "--kind", "fgsm", "--image", "c1_0002", "--epsilon", "0"]);
    let samples = load_dataset(&dir.path().join("data/manifest.json")).unwrap();
    let input = prepare_sample(samples.iter().find(|s| s.id == "c1_0002").unwrap(), CROP_SIZE).unwrap();
    let emitted = read(dir.path().join("attack/c1_0002_fgsm.pgm"));
    assert_eq!(emitted, encode_pgm(&input.image).unwrap().0);

    let args = ["attack", "--kind", "otsa", "--image", "c2_0001", "-n", "2"];
    ok(dir.path(), &args);
    let first = read(dir.path().join("attack/c2_0001_otsa.json"));
    let image = read(dir.path().join("attack/c2_0001_otsa.pgm"));
    ok(dir.path(), &args);
    assert_eq!(first, read(dir.path().join("attack/c2_0001_otsa.json")));
    assert_eq!(image, read(dir.path().join("attack/c2_0001_otsa.pgm")));
    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["scatterers"].as_array().map(Vec::len), Some(2));
    assert!(dir.path().join("attack/c2_0001_otsa_scatterers.pgm").is_file());

    ok(dir.path(), &["attack", "--kind", "baseline", "--image", "c2_0001"]);
    assert_eq!(otsa(dir.path(), &["attack", "--kind", "otsa", "--image", "nope"]).0, EXIT_USAGE);
    assert_ne!(otsa(dir.path(), &["attack", "--kind", "fgsm", "--image", "c1_0002", "--epsilon", "-1"]).0, EXIT_OK);
}

#[test]
fn campaign_reports_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--set", "train.holdout=0.5", "gen-data"]);
    ok(dir.path(), &["--set", "train.holdout=0.5", "train"]);
    let names = ["outcomes.csv", "report.json", "success_rates.svg"];
    let out = ok(dir.path(), &["--set", "train.holdout=0.5", "campaign"]);
    assert!(out.contains("report"), "{out}");
    let first: Vec<Vec<u8>> = names.iter().map(|n| read(dir.path().join("campaign").join(n))).collect();
    ok(dir.path(), &["--set", "train.holdout=0.5", "--jobs", "3", "campaign"]);
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(bytes, &read(dir.path().join("campaign").join(n)), "{n}");
    }

    // report re-emits the same CSV and SVG from the JSON
    std::fs::remove_file(dir.path().join("campaign/outcomes.csv")).unwrap();
    std::fs::remove_file(dir.path().join("campaign/success_rates.svg")).unwrap();
    ok(dir.path(), &["report"]);
    assert_eq!(first[0], read(dir.path().join("campaign/outcomes.csv")));
    assert_eq!(first[2], read(dir.path().join("campaign/success_rates.svg")));
}

#[test]
fn render_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["render", "--params", "1,44,44,0,0,0,0"]);
    assert!(out.contains("(44, 44)"), "{out}");
    let img = load_image(&dir.path().join("render.pgm")).unwrap();
    assert_eq!(img.argmax(), (44, 44));

    let (code, _, _) = otsa(dir.path(), &["render"]);
    assert_eq!(code, EXIT_USAGE);
    assert_eq!(otsa(dir.path(), &["render", "--params", "1,2,3"]).0, EXIT_USAGE);

    let path = dir.path().join("two.pgm");
    ok(
        dir.path(),
        &["render", "--params", "1,40,40,0,0,0,0", "--params", "-0.5,41,40,0.2,0.5,1,-0.3", "--output", path.to_str().unwrap()],
    );
    let renderer = Renderer::new(&ImagingParams::default()).unwrap();
    let set = ScattererSet::new(vec![
        ScattererParams::point(1.0, 40.0, 40.0),
        ScattererParams::from_array([-0.5, 41.0, 40.0, 0.2, 0.5, 1.0, -0.3]),
    ]);
    let want = renderer.render(&set);
    let got = load_image(&path).unwrap();
    let scale = want.max();
    for (a, b) in got.pixels.iter().zip(&want.pixels) {
        assert!((a - b).abs() <= scale * 2f64.powi(-15));
    }
    // coherent sum, not a sum of magnitudes
    let a = renderer.render(&ScattererSet::new(vec![set.scatterers[0]]));
    let b = renderer.render(&ScattererSet::new(vec![set.scatterers[1]]));
    let incoherent = a.add(&b).unwrap();
    assert!(want.pixels.iter().zip(&incoherent.pixels).any(|(p, q)| (p - q).abs() > 1e-3));
}

#[test]
fn seed_flag_and_env_fallback() {
    let pairs = std::collections::BTreeMap::new();
    assert_eq!(cli::RunConfig::from_pairs(&pairs, Some("7")).unwrap().seed, 7);
    let mut with_seed = pairs.clone();
    with_seed.insert("seed".to_string(), "3".to_string());
    assert_eq!(cli::RunConfig::from_pairs(&with_seed, Some("7")).unwrap().seed, 3);
    assert!(cli::RunConfig::from_pairs(&pairs, Some("x")).is_err());

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["--seed", "5", "gen-data"]);
    ok(b.path(), &["gen-data"]);
    assert_ne!(read(a.path().join("data/c0_0000.pgm")), read(b.path().join("data/c0_0000.pgm")));
}
