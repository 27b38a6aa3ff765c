//! Dataset ingestion, splits, embedding files and the toy benchmark.

mod common;

use std::collections::HashSet;
use std::path::PathBuf;

use rand::Rng as _;
use sraseg::data_io::{
    load_image, load_mask, make_splits, read_embeddings, write_embeddings, DatasetManifest, ManifestEntry, Pool,
};
use sraseg::toy::{load_shapes, make_toy_data, rasterize, BACKGROUND, DISK, RING, TOY_SIZE};
use sraseg::EmbeddingBatch;

fn grouped_manifest(sizes: &[usize]) -> DatasetManifest {
    let mut entries = Vec::new();
    for (g, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            entries.push(ManifestEntry {
                image_path: PathBuf::from(format!("labeled/images/p{g:03}_{i:02}.png")),
                mask_path: Some(PathBuf::from(format!("labeled/masks/p{g:03}_{i:02}.png"))),
                group_id: format!("patient{g:03}"),
                pool: Pool::Labeled,
            });
        }
    }
    DatasetManifest::new(entries).unwrap()
}

/// 77 patients with 17 slices each, one of them with 20: 1312 slices.
fn acdc_like() -> DatasetManifest {
    let mut sizes = vec![17; 77];
    sizes[40] = 20;
    grouped_manifest(&sizes)
}

#[test]
fn acdc_like_ten_percent_split() {
    let m = acdc_like();
    assert_eq!(m.entries().len(), 1312);
    let s = make_splits(&m, 0.10, 0).unwrap();
    assert_eq!(s.labeled.len(), 136);
    assert_eq!(s.unlabeled_slots, 1176);
    assert_eq!(s.unlabeled.len(), 1176);
}

#[test]
fn acdc_like_split_within_one_group_for_every_seed() {
    let m = acdc_like();
    let target = (0.10f64 * 1312.0).round() as i64;
    for seed in 0..200 {
        let s = make_splits(&m, 0.10, seed).unwrap();
        assert!((s.labeled.len() as i64 - target).abs() <= 20, "seed {seed}: {}", s.labeled.len());
        let lab: HashSet<&str> = s.labeled.iter().map(|e| e.group_id.as_str()).collect();
        assert!(s.unlabeled.iter().all(|e| !lab.contains(e.group_id.as_str())));
    }
}

#[test]
fn fives_like_five_percent_split() {
    let m = grouped_manifest(&[1; 560]);
    for seed in 0..5 {
        let s = make_splits(&m, 0.05, seed).unwrap();
        assert_eq!((s.labeled.len(), s.unlabeled_slots), (28, 532));
    }
}

#[test]
fn split_file_is_byte_identical() {
    let m = acdc_like();
    assert_eq!(make_splits(&m, 0.1, 9).unwrap().to_tsv(), make_splits(&m, 0.1, 9).unwrap().to_tsv());
}

#[test]
fn thousand_embedding_round_trips() {
    let mut rng = common::rng("embeddings");
    for _ in 0..1000 {
        let (m, d) = (rng.gen_range(0..12), rng.gen_range(1..12));
        let data = (0..m * d).map(|_| rng.gen_range(-100.0f32..100.0) as f64).collect();
        let e = EmbeddingBatch::from_vec(m, d, data).unwrap();
        let bytes = write_embeddings(&e).unwrap();
        assert_eq!(bytes.len(), 16 + 4 * m * d);
        assert_eq!(read_embeddings(&bytes).unwrap(), e);
    }
}

#[test]
fn toy_masks_match_recorded_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_toy_data(dir.path(), 20, 0.3, 4).unwrap();
    let records = load_shapes(dir.path()).unwrap();
    assert_eq!(records, ds.records);
    let mut checked = 0;
    for r in &records {
        if r.pool == Pool::UnlabeledSynthetic.as_str() {
            continue;
        }
        let mask = load_mask(&dir.path().join(&r.pool).join("masks").join(&r.file), 3).unwrap();
        assert_eq!(mask, rasterize(&r.shapes, TOY_SIZE), "{}", r.file);
        checked += 1;
    }
    assert_eq!(checked, 20 + 4 + 4);
    assert_eq!(ds.manifest.pool(Pool::UnlabeledSynthetic).count(), 20);
}

#[test]
fn toy_generation_is_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = make_toy_data(a.path(), 20, 0.3, 11).unwrap();
    make_toy_data(b.path(), 20, 0.3, 11).unwrap();
    for e in da.manifest.entries() {
        let rel = e.image_path.strip_prefix(a.path()).unwrap_or(&e.image_path);
        let fa = std::fs::read(a.path().join(rel)).unwrap();
        let fb = std::fs::read(b.path().join(rel)).unwrap();
        assert_eq!(fa, fb, "{}", rel.display());
    }
    for f in ["manifest.tsv", "shapes.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

fn class_means(root: &std::path::Path, pool: Pool) -> [f64; 3] {
    let records = load_shapes(root).unwrap();
    let mut sum = [0.0; 3];
    let mut n = [0usize; 3];
    for r in records.iter().filter(|r| r.pool == pool.as_str()) {
        // Saved as 8-bit and min-max normalized on load, so compare raw bytes.
        let raw = image::open(root.join(&r.pool).join("images").join(&r.file)).unwrap().to_luma8();
        let labels = rasterize(&r.shapes, TOY_SIZE);
        for (p, &l) in raw.as_raw().iter().zip(&labels.labels) {
            sum[l as usize] += *p as f64 / 255.0;
            n[l as usize] += 1;
        }
    }
    [sum[0] / n[0] as f64, sum[1] / n[1] as f64, sum[2] / n[2] as f64]
}

#[test]
fn zero_shift_matches_real_distribution() {
    let dir = tempfile::tempdir().unwrap();
    make_toy_data(dir.path(), 40, 0.0, 2).unwrap();
    let real = class_means(dir.path(), Pool::Labeled);
    let syn = class_means(dir.path(), Pool::UnlabeledSynthetic);
    for (c, want) in [BACKGROUND, DISK, RING].into_iter().enumerate() {
        assert!((real[c] - want).abs() < 0.01, "real class {c}: {}", real[c]);
        assert!((syn[c] - want).abs() < 0.01, "syn class {c}: {}", syn[c]);
    }

    let shifted = tempfile::tempdir().unwrap();
    make_toy_data(shifted.path(), 40, 0.3, 2).unwrap();
    let syn = class_means(shifted.path(), Pool::UnlabeledSynthetic);
    assert!(syn[0] > BACKGROUND + 0.2);
}

#[test]
fn loaded_toy_images_are_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_toy_data(dir.path(), 20, 0.3, 5).unwrap();
    for e in ds.manifest.entries().iter().take(10) {
        let img = load_image(&e.image_path).unwrap();
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn discover_finds_toy_layout() {
    let dir = tempfile::tempdir().unwrap();
    make_toy_data(dir.path(), 20, 0.3, 5).unwrap();
    std::fs::remove_file(dir.path().join("manifest.tsv")).unwrap();
    let m = DatasetManifest::discover(dir.path()).unwrap();
    assert_eq!(m.pool(Pool::Labeled).count(), 20);
    assert_eq!(m.pool(Pool::UnlabeledSynthetic).count(), 20);
    assert_eq!(m.pool(Pool::Val).count(), 4);
    assert_eq!(m.pool(Pool::Test).count(), 4);
}
