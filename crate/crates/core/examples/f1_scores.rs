//! Micro-F1 without the neutral class and support-weighted macro-F1 on a
//! small confusion matrix, with the per-label table.

use ctpt::pipeline::{micro_f1_excluding, per_label, weighted_macro_f1, ConfusionMatrix};

fn main() -> ctpt::Result<()> {
    let labels: Vec<String> = ["neutral", "happy", "sad", "angry"].map(String::from).to_vec();
    let gold = [0, 0, 0, 0, 1, 1, 1, 2, 2, 3, 3, 3];
    let pred = [0, 0, 1, 2, 1, 1, 0, 2, 3, 3, 3, 0];
    let cm = ConfusionMatrix::from_pairs(labels.len(), &gold, &pred)?;
    for row in per_label(&cm, &labels) {
        println!(
            "{:8} P {:.3} R {:.3} F1 {:.3} support {}",
            row.label, row.precision, row.recall, row.f1, row.support
        );
    }
    println!("micro-F1 excluding neutral: {:.4}", micro_f1_excluding(&cm, Some(0)));
    println!("weighted macro-F1:          {:.4}", weighted_macro_f1(&cm));
    Ok(())
}
