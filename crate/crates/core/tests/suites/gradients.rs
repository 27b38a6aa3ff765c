//! Analytic gradients against central finite differences.

use crate::common::close_rel;
use rand::Rng as _;
use sraseg::data_io::RunConfig;
use sraseg::losses::{
    sa_loss, soft_cross_entropy, soft_dice_loss, softmax_backward, DiceMode, Reduction,
};
use sraseg::model::{reference_net, SaInputMode, SegmentationModel};
use sraseg::pseudo_label::{one_hot, softmax_probs};
use sraseg::trainer::{LabeledBatch, Learner};
use sraseg::{ClassMap, ImageSlice};

const H: f64 = 1e-5;

fn check_map_gradient(
    p: &[ClassMap],
    grad: &[ClassMap],
    f: impl Fn(&[ClassMap]) -> f64,
    tol: f64,
) {
    let mut q = p.to_vec();
    for i in 0..p.len() {
        for k in 0..p[i].data.len() {
            let orig = q[i].data[k];
            q[i].data[k] = orig + H;
            let up = f(&q);
            q[i].data[k] = orig - H;
            let down = f(&q);
            q[i].data[k] = orig;
            let fd = (up - down) / (2.0 * H);
            let an = grad[i].data[k];
            assert!(
                (fd - an).abs() <= tol * fd.abs().max(an.abs()) + 1e-9,
                "entry ({i},{k}): analytic {an} vs numeric {fd}"
            );
        }
    }
}

fn instance(rng: &mut sraseg::rng::Rng) -> (Vec<ClassMap>, Vec<ClassMap>) {
    let (c, h, w, b) = (rng.gen_range(2..4), rng.gen_range(2..4), rng.gen_range(2..4), rng.gen_range(1..3));
    let p = (0..b).map(|_| crate::common::random_simplex(rng, c, h, w)).collect();
    let t = (0..b).map(|_| crate::common::random_simplex(rng, c, h, w)).collect();
    (p, t)
}

pub fn soft_dice_gradient() {
    let mut rng = crate::common::rng("fd-dice");
    for i in 0..100 {
        let (p, t) = instance(&mut rng);
        let mode = if i % 2 == 0 { DiceMode::BatchGlobal } else { DiceMode::PerImage };
        let r = soft_dice_loss(&p, &t, 1e-5, mode).unwrap();
        check_map_gradient(&p, &r.grad, |q| soft_dice_loss(q, &t, 1e-5, mode).unwrap().value, 1e-4);
    }
}

pub fn soft_cross_entropy_gradient() {
    let mut rng = crate::common::rng("fd-ce");
    for i in 0..100 {
        let (p, t) = instance(&mut rng);
        let red = if i % 2 == 0 { Reduction::Sum } else { Reduction::MeanOverPixels };
        let r = soft_cross_entropy(&p, &t, 1e-7, red).unwrap();
        check_map_gradient(&p, &r.grad, |q| soft_cross_entropy(q, &t, 1e-7, red).unwrap().value, 1e-4);
    }
}

pub fn sa_loss_gradient_away_from_ties() {
    let mut rng = crate::common::rng("fd-sa");
    let mut checked = 0;
    while checked < 100 {
        let (m, n, d) = (rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..6));
        let syn = crate::common::random_embeddings(&mut rng, m, d);
        let real = crate::common::random_embeddings(&mut rng, n, d);
        // Skip instances whose nearest neighbour is nearly tied.
        let tied = (0..m).any(|i| {
            let mut ds: Vec<f64> = (0..n)
                .map(|j| syn.row(i).iter().zip(real.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ds.len() > 1 && ds[1] - ds[0] < 1e-3
        });
        if tied {
            continue;
        }
        checked += 1;
        let (r, _) = sa_loss(&syn, &real).unwrap();
        let mut q = syn.clone();
        for k in 0..q.data.len() {
            let orig = q.data[k];
            q.data[k] = orig + H;
            let up = sa_loss(&q, &real).unwrap().0.value;
            q.data[k] = orig - H;
            let down = sa_loss(&q, &real).unwrap().0.value;
            q.data[k] = orig;
            let fd = (up - down) / (2.0 * H);
            let an = r.grad.data[k];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()) + 1e-9, "{an} vs {fd}");
        }
    }
}

pub fn softmax_backward_gradient() {
    let mut rng = crate::common::rng("fd-softmax");
    for _ in 0..50 {
        let (c, h, w) = (rng.gen_range(2..5), 2, 3);
        let data: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let logits = ClassMap::from_vec(c, h, w, data).unwrap();
        let weights = crate::common::random_simplex(&mut rng, c, h, w);
        let f = |l: &ClassMap| -> f64 {
            let p = softmax_probs(l).unwrap();
            p.data.iter().zip(&weights.data).map(|(a, b)| a.ln() * b).sum()
        };
        let probs = softmax_probs(&logits).unwrap();
        let mut gp = weights.clone();
        for (g, p) in gp.data.iter_mut().zip(&probs.data) {
            *g /= p;
        }
        let an = softmax_backward(&probs, &gp).unwrap();
        check_map_gradient(
            std::slice::from_ref(&logits),
            std::slice::from_ref(&an),
            |q| f(&q[0]),
            1e-4,
        );
    }
}

struct Fixture {
    learner: Learner,
    mixed: Vec<ImageSlice>,
    targets: Vec<ClassMap>,
    labeled: LabeledBatch,
}

fn fixture(lambda: f64, mode: SaInputMode) -> Fixture {
    let mut rng = crate::common::rng("fd-net");
    let cfg = RunConfig {
        lambda_sa: lambda,
        sa_input_mode: mode,
        embed_dim: 8,
        ..RunConfig::default()
    };
    let learner = Learner::new(&cfg).unwrap();
    let (h, w, b) = (16, 16, 2);
    let mixed = (0..2 * b).map(|_| crate::common::random_image(&mut rng, 1, h, w)).collect();
    let targets = (0..2 * b).map(|_| crate::common::random_simplex(&mut rng, 3, h, w)).collect();
    let images = (0..b).map(|_| crate::common::random_image(&mut rng, 1, h, w)).collect();
    let masks: Vec<_> = (0..b).map(|_| crate::common::random_labels(&mut rng, h, w, 3)).collect();
    let labeled = LabeledBatch::from_masks(images, &masks, 3).unwrap();
    Fixture {
        learner,
        mixed,
        targets,
        labeled,
    }
}

fn value_at(fx: &mut Fixture, params: &sraseg::ParameterVector, pick: fn(&sraseg::trainer::JointObjective) -> f64) -> f64 {
    fx.learner.student.set_params(params).unwrap();
    let o = fx.learner.objective(&fx.mixed, &fx.targets, &fx.labeled).unwrap();
    pick(&o)
}

fn fd_check_params(fx: &mut Fixture, grads: &sraseg::ParameterVector, pick: fn(&sraseg::trainer::JointObjective) -> f64) {
    let mut rng = crate::common::rng("fd-net-idx");
    let base = fx.learner.student.params();
    for _ in 0..20 {
        let k = rng.gen_range(0..base.len());
        let mut p = base.clone();
        p[k] += H;
        let up = value_at(fx, &p, pick);
        p[k] -= 2.0 * H;
        let down = value_at(fx, &p, pick);
        let fd = (up - down) / (2.0 * H);
        let an = grads[k];
        assert!(
            (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()) + 1e-8,
            "param {k}: analytic {an} vs numeric {fd}"
        );
    }
    fx.learner.student.set_params(&base).unwrap();
}

pub fn end_to_end_total_loss_gradient() {
    let mut fx = fixture(0.1, SaInputMode::ProbWeightedImage);
    let o = fx.learner.objective(&fx.mixed, &fx.targets, &fx.labeled).unwrap();
    assert!(o.l_sa > 0.0);
    fd_check_params(&mut fx, &o.grads, |o| o.total);
}

pub fn end_to_end_alignment_gradient() {
    for mode in [SaInputMode::ProbWeightedImage, SaInputMode::ProbMap] {
        let mut with = fixture(1.0, mode);
        let mut without = fixture(0.0, mode);
        let g1 = with.learner.objective(&with.mixed, &with.targets, &with.labeled).unwrap().grads;
        let g0 = without.learner.objective(&without.mixed, &without.targets, &without.labeled).unwrap().grads;
        let g_sa = sraseg::ParameterVector(g1.iter().zip(g0.iter()).map(|(a, b)| a - b).collect());
        assert!(g_sa.iter().any(|v| v.abs() > 1e-9), "{mode:?}: alignment gradient vanished");
        fd_check_params(&mut with, &g_sa, |o| o.l_sa);
    }
}

pub fn raw_image_alignment_has_zero_parameter_gradient() {
    let mut fx = fixture(1.0, SaInputMode::RawImage);
    let base = fx.learner.student.params();
    let o = fx.learner.objective(&fx.mixed, &fx.targets, &fx.labeled).unwrap();
    let mut zero = fixture(0.0, SaInputMode::RawImage);
    let o0 = zero.learner.objective(&zero.mixed, &zero.targets, &zero.labeled).unwrap();
    assert_eq!(o.grads, o0.grads);
    let mut rng = crate::common::rng("raw-fd");
    for _ in 0..20 {
        let k = rng.gen_range(0..base.len());
        let mut p = base.clone();
        p[k] += 1e-3;
        let up = value_at(&mut fx, &p, |o| o.l_sa);
        p[k] -= 2e-3;
        let down = value_at(&mut fx, &p, |o| o.l_sa);
        assert_eq!(up, down);
    }
}

pub fn network_backward_matches_finite_differences() {
    let mut rng = crate::common::rng("fd-unet");
    let mut net = reference_net(Default::default(), 11).unwrap();
    let imgs: Vec<ImageSlice> = (0..2).map(|_| crate::common::random_image(&mut rng, 1, 16, 16)).collect();
    let weights: Vec<ClassMap> = (0..2).map(|_| crate::common::random_simplex(&mut rng, 3, 16, 16)).collect();
    let loss = |net: &mut dyn SegmentationModel| -> f64 {
        net.forward(&imgs)
            .unwrap()
            .iter()
            .zip(&weights)
            .map(|(l, w)| l.data.iter().zip(&w.data).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };
    loss(&mut net);
    let grads = net.backward(&weights).unwrap();
    let base = net.params();
    for _ in 0..20 {
        let k = rng.gen_range(0..base.len());
        let mut p = base.clone();
        p[k] += H;
        net.set_params(&p).unwrap();
        let up = loss(&mut net);
        p[k] -= 2.0 * H;
        net.set_params(&p).unwrap();
        let down = loss(&mut net);
        let fd = (up - down) / (2.0 * H);
        assert!(close_rel(fd, grads[k], 1e-3), "param {k}: {} vs {fd}", grads[k]);
    }
}

pub fn one_hot_targets_give_finite_gradients() {
    let mut fx = fixture(0.1, SaInputMode::ProbWeightedImage);
    let labels = crate::common::random_labels(&mut crate::common::rng("oh"), 16, 16, 3);
    let t = one_hot(&labels, 3).unwrap();
    fx.targets = vec![t; 4];
    let o = fx.learner.objective(&fx.mixed, &fx.targets, &fx.labeled).unwrap();
    assert!(o.grads.iter().all(|g| g.is_finite()));
}
