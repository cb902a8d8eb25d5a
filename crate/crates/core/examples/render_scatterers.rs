//! Renders a point scatterer and a distributed (line) scatterer with the
//! default imaging geometry and writes the result as PGM + sidecar.
//!
//!     cargo run --example render_scatterers -- out.pgm

use otsa::dataio::save_image;
use otsa::{ImagingParams, Renderer, ScattererParams, ScattererSet};

fn main() -> otsa::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "render.pgm".into());
    let imaging = ImagingParams::default();
    let renderer = Renderer::new(&imaging)?;
    println!(
        "grid {}x{}, pixel spacing {:.3} m x {:.3} m",
        renderer.rows(),
        renderer.cols(),
        imaging.p_x,
        imaging.p_y
    );

    let point = ScattererParams::point(1.0, 44.0, 44.0);
    let img = renderer.render(&ScattererSet::new(vec![point]));
    println!("point at (44,44): peak {:.6} at {:?}", img.max(), img.argmax());

    // [A, x, y, gamma, L, alpha, phi_bar]
    let line = ScattererParams::from_array([2.0, 30.0, 60.0, 0.0, 1.5, 0.5, 0.0]);
    let both = ScattererSet::new(vec![point, line]);
    let img = renderer.render_window(&both, 88, 88)?;
    println!("point + line on the 88x88 window: peak {:.4} at {:?}", img.max(), img.argmax());
    save_image(path.as_ref(), &img)?;
    println!("wrote {path}");
    Ok(())
}
