//! FGSM against a hand-built linear softmax model: the perturbation is
//! `±eps` or `0` per pixel and the loss goes up.

use otsa::attack::fgsm;
use otsa::classifier::{Classifier, LinearSoftmax};
use otsa::SarImage;

fn main() -> otsa::Result<()> {
    let (rows, cols) = (8, 8);
    // class 0 likes the left half, class 1 the right half
    let mut w = vec![0.0; 2 * rows * cols];
    for x in 0..rows {
        for y in 0..cols {
            let left = if y < cols / 2 { 1.0 } else { -1.0 };
            w[x * cols + y] = 0.1 * left;
            w[rows * cols + x * cols + y] = -0.1 * left;
        }
    }
    let model = LinearSoftmax::new(rows, cols, w, vec![0.0, 0.0])?;
    let mut image = SarImage::zeros(rows, cols);
    for x in 0..rows {
        for y in 0..cols / 2 {
            image.set(x, y, 0.8);
        }
    }
    let label = model.predict(&image)?.class;
    println!("clean: class {label}, loss {:.4}", model.cross_entropy_loss(&image, label)?);
    for eps in [0.0, 0.05, 0.2, 0.5] {
        let adv = fgsm(&image, label, &model, eps)?;
        let pred = model.predict(&adv)?;
        println!(
            "eps {eps:<4}: class {}, p(true) {:.4}, loss {:.4}",
            pred.class,
            pred.confidence(label),
            model.cross_entropy_loss(&adv, label)?
        );
    }
    Ok(())
}
