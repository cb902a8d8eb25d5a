//! Parses a Phoenix (MSTAR-style) header and decodes the magnitude block.
//! With a file argument the real file is parsed; otherwise a synthesized
//! header is used.
//!
//!     cargo run --example mstar_header -- HB03333.015

use otsa::dataio::{decode_mstar_magnitude, parse_mstar_header, synthesize_mstar_header};

fn main() -> otsa::Result<()> {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(&path).map_err(|e| otsa::OtsaError::Config(format!("{path}: {e}")))?,
        None => {
            let mut b = synthesize_mstar_header(
                &[
                    ("Filename", "HB03333.015"),
                    ("TargetType", "t72_tank"),
                    ("NumberOfColumns", "4"),
                    ("NumberOfRows", "3"),
                    ("DesiredDepression", "15"),
                ],
                512,
            );
            for i in 0..12 {
                b.extend_from_slice(&(0.1 * i as f32).to_be_bytes());
            }
            b
        }
    };
    let header = parse_mstar_header(&bytes)?;
    for (k, v) in &header.fields {
        println!("{k:>24} = {v}");
    }
    println!("data offset {} bytes", header.data_offset);
    match decode_mstar_magnitude(&bytes, &header) {
        Ok(img) => println!("magnitude {}x{}, max {:.3}", img.rows, img.cols, img.max()),
        Err(e) => println!("no magnitude block: {e}"),
    }
    Ok(())
}
