//! Group-aware labeled/unlabeled splits and layered run configuration.
//!
//! cargo run --example splits

use std::path::PathBuf;

use sraseg::data_io::{make_splits, DatasetManifest, ManifestEntry, Pool, RunConfig};

fn main() -> sraseg::Result<()> {
    // 80 patients with 17 slices each; slices of one patient stay together.
    let entries = (0..80)
        .flat_map(|p| {
            (0..17).map(move |s| ManifestEntry {
                image_path: PathBuf::from(format!("labeled/images/p{p:03}_{s:02}.png")),
                mask_path: Some(PathBuf::from(format!("labeled/masks/p{p:03}_{s:02}.png"))),
                group_id: format!("patient{p:03}"),
                pool: Pool::Labeled,
            })
        })
        .collect();
    let manifest = DatasetManifest::new(entries)?;
    for fraction in [0.05, 0.10] {
        let split = make_splits(&manifest, fraction, 0)?;
        let mut patients: Vec<&str> = split.labeled.iter().map(|e| e.group_id.as_str()).collect();
        patients.dedup();
        println!(
            "{:>3}%: {} labeled slices from {} patients, {} unlabeled slots",
            fraction * 100.0,
            split.labeled.len(),
            patients.len(),
            split.unlabeled_slots
        );
    }

    let file = "lr = 0.05\niterations = 500\n";
    let cfg = RunConfig::resolve(Some(file), &["lr=0.02".into(), "sa_input_mode=\"prob_map\"".into()])?;
    println!("lr {} iterations {} warm-up {} mode {:?}", cfg.lr, cfg.iterations, cfg.warmup(), cfg.sa_input_mode);
    if let Err(e) = RunConfig::resolve(None, &["learning_rate=0.1".into()]) {
        println!("rejected: {e}");
    }
    Ok(())
}
