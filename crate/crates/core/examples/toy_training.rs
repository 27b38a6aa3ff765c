//! Generate the toy benchmark, train a small model, then evaluate it and
//! measure the labeled/unlabeled domain gap.
//!
//! cargo run --release --example toy_training [-- ITERATIONS [OUT_DIR]]

use std::path::PathBuf;

use sraseg::data_io::{make_splits, DatasetManifest, RunConfig};
use sraseg::eval::{domain_gap_report, evaluate_model, GapStatistic};
use sraseg::toy::make_toy_data;
use sraseg::trainer::{load_student, load_teacher, run_training, LoadedSplit, TrainOptions};

fn main() -> sraseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(300, |a| a.parse().expect("ITERATIONS must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "toy_run".into()));

    let data = out.join("data");
    make_toy_data(&data, 40, 0.3, 0)?;
    let cfg = RunConfig::resolve(
        None,
        &[
            format!("iterations={iterations}"),
            "eval_every=50".into(),
            "widths=[8,16,32]".into(),
            "batch_labeled=4".into(),
            "batch_unlabeled=4".into(),
        ],
    )?;
    let split = make_splits(&DatasetManifest::discover(&data)?, cfg.labeled_fraction, cfg.seed)?;
    println!("{} labeled, {} unlabeled synthetic", split.labeled.len(), split.unlabeled.len());

    let outcome = run_training(&cfg, &split, &out.join("run"), TrainOptions::default())?;
    for r in outcome.records.iter().step_by(50) {
        println!("{r}");
    }
    println!("best val Dice {:.4}", outcome.best_score);

    let student = load_student(&outcome.best_checkpoint)?;
    let loaded = LoadedSplit::load(&split, cfg.num_classes)?;
    let m = evaluate_model(student.as_ref(), &loaded.val_images, &loaded.val_masks, true)?;
    print!("{}", m.to_csv());

    let teacher = load_teacher(&outcome.last_checkpoint)?;
    for (name, model) in [("student", &student), ("teacher", &teacher)] {
        let r = domain_gap_report(
            model.as_ref(),
            &loaded.labeled.images,
            &loaded.unlabeled,
            1,
            GapStatistic::AreaFraction,
        )?;
        println!("{name} domain gap {:.3}", r.gap);
    }
    Ok(())
}
