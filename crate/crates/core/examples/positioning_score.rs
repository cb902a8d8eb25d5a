//! Positioning score around a small target: saturated on the target,
//! Gaussian decay off it, zero gradient on the plateau.

use otsa::positioning::{is_on_target, positioning_score, score_gradient, ScoreParams, TargetMask};

fn main() -> otsa::Result<()> {
    // 3x3 block centered on (20, 20)
    let mask = TargetMask::new(40, 40, (19..=21).flat_map(|x| (19..=21).map(move |y| (x, y))))?;
    let p = ScoreParams::default();
    println!("sigma {} MAX {}", p.sigma, p.max);
    println!("{:>6} {:>10} {:>12} {:>9}", "x", "S", "dS/dx", "on-target");
    for i in 0..=16 {
        let x = 20.0 + 0.25 * i as f64;
        let s = positioning_score(x, 20.0, &mask, p);
        let (gx, _) = score_gradient(x, 20.0, &mask, p);
        println!("{x:>6.2} {s:>10.6} {gx:>12.4e} {:>9}", is_on_target(x, 20.0, &mask));
    }
    let single = TargetMask::new(40, 40, [(10, 10)])?;
    println!(
        "single pixel, distance 1: {:.9} (exp(-3.125) = {:.9})",
        positioning_score(11.0, 10.0, &single, p),
        (-3.125f64).exp()
    );
    Ok(())
}
