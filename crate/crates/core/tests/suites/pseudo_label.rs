//! Teacher pseudo-label pipeline and EMA identities.

use crate::common;
use rand::Rng as _;
use sraseg::pseudo_label::{ema_update, pseudo_label_from_logits, Connectivity, EmaState};
use sraseg::{ClassMap, HardLabelMap, ParameterVector};

fn component_count(labels: &HardLabelMap, class: u32) -> usize {
    let (h, w) = (labels.height as i64, labels.width as i64);
    let mut seen = vec![false; labels.labels.len()];
    let mut count = 0;
    for start in 0..labels.labels.len() {
        if seen[start] || labels.labels[start] != class {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            let (y, x) = (p as i64 / w, p as i64 % w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h || nx >= w {
                        continue;
                    }
                    let q = (ny * w + nx) as usize;
                    if !seen[q] && labels.labels[q] == class {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
    }
    count
}

fn random_logits(rng: &mut sraseg::rng::Rng, c: usize, h: usize, w: usize) -> ClassMap {
    ClassMap::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
}

pub fn outputs_are_one_hot() {
    let mut rng = common::rng("suite-onehot");
    for _ in 0..100 {
        let c = rng.gen_range(2..6);
        let logits = random_logits(&mut rng, c, 16, 16);
        let (_, soft) = pseudo_label_from_logits(&logits, Connectivity::Eight).unwrap();
        for px in 0..256 {
            let v: Vec<f64> = soft.pixel(px).collect();
            assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
            assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
        }
    }
}

pub fn foreground_has_at_most_one_component() {
    let mut rng = common::rng("suite-lcc");
    for _ in 0..100 {
        let c = rng.gen_range(2..5);
        let logits = random_logits(&mut rng, c, 16, 16);
        let (hard, _) = pseudo_label_from_logits(&logits, Connectivity::Eight).unwrap();
        for k in 1..c as u32 {
            assert!(component_count(&hard, k) <= 1);
        }
    }
}

pub fn ema_identities() {
    let mut rng = common::rng("suite-ema");
    for _ in 0..100 {
        let n = rng.gen_range(1..64);
        let t = ParameterVector((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let s = ParameterVector((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect());
        let mut copy = EmaState::new(t.clone(), 0.0).unwrap();
        ema_update(&mut copy, &s).unwrap();
        assert_eq!(copy.teacher, s);
        let mut fixed = EmaState::new(s.clone(), rng.gen_range(0.0..0.999)).unwrap();
        ema_update(&mut fixed, &s).unwrap();
        assert_eq!(fixed.teacher, s);
    }
    let mut st = EmaState::new(ParameterVector(vec![1.0]), 0.9).unwrap();
    ema_update(&mut st, &ParameterVector(vec![0.0])).unwrap();
    assert_eq!(st.teacher.0, vec![0.9]);
}
