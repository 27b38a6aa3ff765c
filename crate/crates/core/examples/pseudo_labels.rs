//! Teacher pseudo-labels: softmax, argmax, largest-component filter, one-hot,
//! plus the EMA update that keeps the teacher behind the student.
//!
//! cargo run --example pseudo_labels

use sraseg::pseudo_label::{
    argmax_labels, ema_update, largest_component_filter, pseudo_label_from_logits, softmax_probs, Connectivity,
    EmaState,
};
use sraseg::{HardLabelMap, LogitMap, ParameterVector};

fn show(title: &str, m: &HardLabelMap) {
    println!("{title}");
    for y in 0..m.height {
        let row: String = (0..m.width).map(|x| char::from(b'0' + m.get(y, x) as u8)).collect();
        println!("  {row}");
    }
}

fn main() -> sraseg::Result<()> {
    // Two blobs of class 1 (the larger survives) and one of class 2.
    let (h, w) = (6, 10);
    let mut logits = LogitMap::zeros(3, h, w);
    for (y, x, c) in [(1, 1, 1), (1, 2, 1), (2, 1, 1), (2, 2, 1), (2, 3, 1), (4, 8, 1), (4, 5, 2), (4, 6, 2)] {
        logits.set(c, y, x, 4.0);
    }
    let probs = softmax_probs(&logits)?;
    println!("p at (1,1): {:?}", probs.pixel(w + 1).collect::<Vec<_>>());

    let raw = argmax_labels(&probs);
    show("argmax:", &raw);
    show("largest component per class:", &largest_component_filter(&raw, Connectivity::Eight));

    let (hard, soft) = pseudo_label_from_logits(&logits, Connectivity::Eight)?;
    assert_eq!(hard, largest_component_filter(&raw, Connectivity::Eight));
    println!("one-hot at (4,5): {:?}", soft.pixel(4 * w + 5).collect::<Vec<_>>());

    let mut ema = EmaState::new(ParameterVector(vec![1.0, 5.0]), 0.9)?;
    for step in 1..=3 {
        ema_update(&mut ema, &ParameterVector(vec![0.0, 2.0]))?;
        println!("ema step {step}: {:?}", ema.teacher.0);
    }
    Ok(())
}
