//! Blend masks and complementary mixtures.

use crate::common;
use rand::Rng as _;
use sraseg::soft_mix::{
    blend_images, blend_labels, build_blend_mask, make_complementary_mixtures, sample_blend_region, BlendMask,
};
use sraseg::ImageSlice;

pub fn worked_blend_example() {
    let a = ImageSlice::filled(1, 1, 1, 100.0);
    let b = ImageSlice::filled(1, 1, 1, 50.0);
    let out = blend_images(&a, &b, &BlendMask::constant(1, 1, 0.6)).unwrap();
    assert_eq!(out.data, vec![80.0]);
}

pub fn complementarity_is_exact() {
    let mut rng = common::rng("suite-complement");
    for _ in 0..200 {
        let (h, w) = (rng.gen_range(4..20), rng.gen_range(4..20));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let rect = sample_blend_region(h, w, 2.0 / 3.0, &mut rng).unwrap();
        let mask = build_blend_mask(h, w, rect, k).unwrap();
        let (v_lab, v_syn) = (common::random_image(&mut rng, 1, h, w), common::random_image(&mut rng, 1, h, w));
        let (l_lab, l_pseudo) = (common::random_simplex(&mut rng, 4, h, w), common::random_simplex(&mut rng, 4, h, w));
        let mix = make_complementary_mixtures((&v_lab, &l_lab), (&v_syn, &l_pseudo), mask).unwrap();
        for i in 0..v_lab.data.len() {
            assert_eq!(mix.v1.data[i] + mix.v2.data[i], v_lab.data[i] + v_syn.data[i]);
        }
        for i in 0..l_lab.data.len() {
            assert_eq!(mix.l1.data[i] + mix.l2.data[i], l_lab.data[i] + l_pseudo.data[i]);
        }
    }
}

pub fn blended_labels_stay_on_simplex() {
    let mut rng = common::rng("suite-simplex");
    for _ in 0..200 {
        let (h, w) = (rng.gen_range(3..16), rng.gen_range(3..16));
        let rect = sample_blend_region(h, w, 2.0 / 3.0, &mut rng).unwrap();
        let mask = build_blend_mask(h, w, rect, 3).unwrap();
        let a = common::random_simplex(&mut rng, 3, h, w);
        let b = common::random_simplex(&mut rng, 3, h, w);
        let out = blend_labels(&a, &b, &mask).unwrap();
        for px in 0..h * w {
            assert!((out.pixel(px).sum::<f64>() - 1.0).abs() <= 1e-7);
            assert!(out.pixel(px).all(|v| v >= 0.0));
        }
    }
}

pub fn region_is_two_thirds() {
    let mut rng = common::rng("suite-region");
    for _ in 0..100 {
        let r = sample_blend_region(12, 12, 2.0 / 3.0, &mut rng).unwrap();
        assert_eq!((r.height, r.width), (8, 8));
        assert!(r.top <= 4 && r.left <= 4);
    }
}

pub fn unit_kernel_is_hard_copy_paste() {
    let mut rng = common::rng("suite-hard");
    for _ in 0..50 {
        let (h, w) = (rng.gen_range(6..20), rng.gen_range(6..20));
        let rect = sample_blend_region(h, w, 2.0 / 3.0, &mut rng).unwrap();
        let mask = build_blend_mask(h, w, rect, 1).unwrap();
        let (v_lab, v_syn) = (common::random_image(&mut rng, 1, h, w), common::random_image(&mut rng, 1, h, w));
        let (l_lab, l_pseudo) = (common::random_simplex(&mut rng, 3, h, w), common::random_simplex(&mut rng, 3, h, w));
        let mix = make_complementary_mixtures((&v_lab, &l_lab), (&v_syn, &l_pseudo), mask).unwrap();
        for y in 0..h {
            for x in 0..w {
                let hole = y >= rect.top && y < rect.top + rect.height && x >= rect.left && x < rect.left + rect.width;
                let (in1, in2) = if hole { (&v_lab, &v_syn) } else { (&v_syn, &v_lab) };
                assert_eq!(mix.v1.get(0, y, x), in1.get(0, y, x));
                assert_eq!(mix.v2.get(0, y, x), in2.get(0, y, x));
                let (t1, t2) = if hole { (&l_lab, &l_pseudo) } else { (&l_pseudo, &l_lab) };
                for c in 0..3 {
                    assert_eq!(mix.l1.get(c, y, x), t1.get(c, y, x));
                    assert_eq!(mix.l2.get(c, y, x), t2.get(c, y, x));
                }
            }
        }
    }
}
