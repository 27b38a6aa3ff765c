//! Smoothed rectangular blend masks and the two complementary mixtures.
//!
//! cargo run --example soft_mix

use sraseg::pseudo_label::one_hot;
use sraseg::rng::substream;
use sraseg::soft_mix::{blend_images, build_blend_mask, make_complementary_mixtures, sample_blend_region, BlendMask};
use sraseg::{HardLabelMap, ImageSlice};

fn main() -> sraseg::Result<()> {
    let a = ImageSlice::filled(1, 1, 1, 100.0);
    let b = ImageSlice::filled(1, 1, 1, 50.0);
    let v = blend_images(&a, &b, &BlendMask::constant(1, 1, 0.6))?;
    println!("0.6 * 100 + 0.4 * 50 = {}", v.data[0]);

    let (h, w) = (12, 12);
    let mut rng = substream(7, "mask");
    let rect = sample_blend_region(h, w, 2.0 / 3.0, &mut rng)?;
    println!("hole {}x{} at ({}, {})", rect.height, rect.width, rect.top, rect.left);
    let mask = build_blend_mask(h, w, rect, 3)?;
    println!("smoothed mask:");
    for y in 0..h {
        let row: Vec<String> = (0..w).map(|x| format!("{:.2}", mask.smooth[y * w + x])).collect();
        println!("  {}", row.join(" "));
    }

    // A bright labeled image with class 1 everywhere, a dark unlabeled one with class 2.
    let v_lab = ImageSlice::filled(1, h, w, 0.8);
    let v_syn = ImageSlice::filled(1, h, w, 0.2);
    let l_lab = one_hot(&HardLabelMap::filled(h, w, 1), 3)?;
    let l_pseudo = one_hot(&HardLabelMap::filled(h, w, 2), 3)?;
    let mix = make_complementary_mixtures((&v_lab, &l_lab), (&v_syn, &l_pseudo), mask)?;
    let c = (rect.top + rect.height / 2, rect.left);
    println!(
        "hole edge pixel {c:?}: v1 {:.3} v2 {:.3} sum {:.3}; l1 {:?}",
        mix.v1.get(0, c.0, c.1),
        mix.v2.get(0, c.0, c.1),
        mix.v1.get(0, c.0, c.1) + mix.v2.get(0, c.0, c.1),
        (0..3).map(|k| mix.l1.get(k, c.0, c.1)).collect::<Vec<_>>()
    );
    Ok(())
}
