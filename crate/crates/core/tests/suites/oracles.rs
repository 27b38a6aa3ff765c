//! Production code against independent brute-force implementations.

use std::collections::VecDeque;

use rand::Rng as _;
use sraseg::eval::{boundary, surface_metrics};
use sraseg::losses::{nn_min_distances, soft_cross_entropy, soft_dice_loss, DiceMode, Reduction};
use sraseg::pseudo_label::{largest_component_filter, Connectivity};
use sraseg::HardLabelMap;

/// Flood-fill every foreground class and keep the biggest component,
/// ties to the component met first in a row-major scan.
fn lcc_flood_fill(labels: &HardLabelMap, eight: bool) -> HardLabelMap {
    let (h, w) = (labels.height, labels.width);
    let mut comp = vec![usize::MAX; h * w];
    let mut sizes: Vec<(u32, usize)> = Vec::new();
    for start in 0..h * w {
        if comp[start] != usize::MAX {
            continue;
        }
        let class = labels.labels[start];
        let id = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        comp[start] = id;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (y, x) = ((p / w) as i64, (p % w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if (dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0) {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if comp[q] == usize::MAX && labels.labels[q] == class {
                        comp[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
        sizes.push((class, size));
    }
    let mut out = labels.clone();
    for (p, l) in out.labels.iter_mut().enumerate() {
        if *l == 0 {
            continue;
        }
        let keep = (0..sizes.len())
            .filter(|&i| sizes[i].0 == *l)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if sizes[b].1 >= sizes[i].1 => Some(b),
                _ => Some(i),
            })
            .unwrap();
        if comp[p] != keep {
            *l = 0;
        }
    }
    out
}

pub fn lcc_matches_flood_fill() {
    let mut rng = crate::common::rng("lcc");
    for i in 0..100 {
        let classes = rng.gen_range(2..5);
        let labels = crate::common::random_labels(&mut rng, 16, 16, classes);
        for (conn, eight) in [(Connectivity::Eight, true), (Connectivity::Four, false)] {
            assert_eq!(
                largest_component_filter(&labels, conn),
                lcc_flood_fill(&labels, eight),
                "map {i}, {conn:?}"
            );
        }
    }
}

pub fn nn_matches_double_loop() {
    let mut rng = crate::common::rng("nn");
    for _ in 0..200 {
        let (m, n, d) = (rng.gen_range(1..=32), rng.gen_range(1..=32), rng.gen_range(1..=8));
        let syn = crate::common::random_embeddings(&mut rng, m, d);
        let real = crate::common::random_embeddings(&mut rng, n, d);
        let got = nn_min_distances(&syn, &real).unwrap();
        for i in 0..m {
            let mut best = (f64::INFINITY, 0);
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..d {
                    let t = syn.data[i * d + k] - real.data[j * d + k];
                    s += t * t;
                }
                if s < best.0 {
                    best = (s, j);
                }
            }
            assert_eq!(got.distances[i], best.0.sqrt());
            assert_eq!(got.indices[i], best.1);
        }
    }
}

fn all_pairs_surface(a: &[bool], b: &[bool], h: usize, w: usize) -> Option<(f64, f64)> {
    let pts = |m: &[bool]| -> Vec<(f64, f64)> {
        boundary(m, h, w)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(p, _)| ((p / w) as f64, (p % w) as f64))
            .collect()
    };
    let (pa, pb) = (pts(a), pts(b));
    match (pa.is_empty(), pb.is_empty()) {
        (true, true) => return Some((0.0, 0.0)),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> Vec<f64> {
        from.iter()
            .map(|p| to.iter().map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let mut d = directed(&pa, &pb);
    d.extend(directed(&pb, &pa));
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let pos = 0.95 * (d.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
    let hi = (lo + 1).min(d.len() - 1);
    let hd95 = d[lo] + frac * (d[hi] - d[lo]);
    Some((hd95, d.iter().sum::<f64>() / d.len() as f64))
}

pub fn surface_metrics_match_all_pairs() {
    let mut rng = crate::common::rng("surface");
    let mut defined = 0;
    for _ in 0..50 {
        let a = crate::common::random_mask(&mut rng, 16, 16);
        let b = crate::common::random_mask(&mut rng, 16, 16);
        let got = surface_metrics(&a, &b, 16, 16).unwrap();
        let want = all_pairs_surface(&a, &b, 16, 16);
        match (got, want) {
            (Some(g), Some((hd, asd))) => {
                defined += 1;
                assert!((g.hd95 - hd).abs() <= 1e-9, "{} vs {hd}", g.hd95);
                assert!((g.asd - asd).abs() <= 1e-9, "{} vs {asd}", g.asd);
            }
            (None, None) => {}
            other => panic!("definedness differs: {other:?}"),
        }
    }
    assert!(defined > 30);
}

pub fn soft_losses_match_triple_loop() {
    let mut rng = crate::common::rng("loops");
    for _ in 0..50 {
        let (c, h, w) = (rng.gen_range(2..5), rng.gen_range(1..6), rng.gen_range(1..6));
        let b = rng.gen_range(1..4);
        let p: Vec<_> = (0..b).map(|_| crate::common::random_simplex(&mut rng, c, h, w)).collect();
        let t: Vec<_> = (0..b).map(|_| crate::common::random_simplex(&mut rng, c, h, w)).collect();
        let eps = 1e-5;
        let (mut inter, mut sp, mut st, mut ce) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..b {
            for k in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let (pv, tv) = (p[i].get(k, y, x), t[i].get(k, y, x));
                        inter += pv * tv;
                        sp += pv;
                        st += tv;
                        ce -= tv * pv.max(1e-7).ln();
                    }
                }
            }
        }
        let dice = 1.0 - 2.0 * inter / (sp + st + eps);
        let got = soft_dice_loss(&p, &t, eps, DiceMode::BatchGlobal).unwrap().value;
        assert!((got - dice).abs() <= 1e-10, "dice {got} vs {dice}");
        let got = soft_cross_entropy(&p, &t, 1e-7, Reduction::Sum).unwrap().value;
        assert!((got - ce).abs() <= 1e-10 * ce.max(1.0), "ce {got} vs {ce}");
        let got = soft_cross_entropy(&p, &t, 1e-7, Reduction::MeanOverPixels).unwrap().value;
        let mean = ce / (b * h * w) as f64;
        assert!((got - mean).abs() <= 1e-10, "mean ce {got} vs {mean}");
    }
}
