//! Dice, Jaccard, 95% Hausdorff and average surface distance on label maps.
//!
//! cargo run --example metrics

use sraseg::eval::{overlap_metrics, surface_metrics, MetricsRecord};
use sraseg::HardLabelMap;

fn square(h: usize, w: usize, top: usize, left: usize, side: usize, class: u32) -> HardLabelMap {
    let mut m = HardLabelMap::filled(h, w, 0);
    for y in top..top + side {
        for x in left..left + side {
            m.set(y, x, class);
        }
    }
    m
}

fn main() -> sraseg::Result<()> {
    let gt = square(16, 16, 4, 4, 6, 1);
    let pred = square(16, 16, 5, 6, 6, 1);
    let o = overlap_metrics(&pred, &gt, 2)?[0];
    println!("dice {:.2} jaccard {:.2}", o.dice, o.jaccard);
    let s = surface_metrics(&pred.class_mask(1), &gt.class_mask(1), 16, 16)?.expect("both masks non-empty");
    println!("hd95 {:.3} asd {:.3}", s.hd95, s.asd);

    let empty = HardLabelMap::filled(16, 16, 0);
    let record = MetricsRecord::compute(&[pred, empty], &[gt.clone(), gt], 2, true)?;
    print!("{}", record.to_csv());
    Ok(())
}
