//! Kernel density curves of two samples and the overlap-based gap score.
//!
//! cargo run --example kde_gap [-- OUT_DIR]

use sraseg::eval::{gap_from_values, kde, linspace, Bandwidth};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let curve = kde(&[0.0], &[0.0], Bandwidth::Fixed(1.0))?;
    println!("single-sample peak {:.5}", curve.density[0]);

    let near: Vec<f64> = (0..40).map(|i| 0.20 + 0.002 * i as f64).collect();
    let shifted: Vec<f64> = near.iter().map(|v| v + 0.05).collect();
    let far: Vec<f64> = near.iter().map(|v| v + 0.5).collect();
    for (name, other) in [("identical", &near), ("shifted", &shifted), ("disjoint", &far)] {
        let r = gap_from_values(&near, other)?;
        println!("{name:>9}: gap {:.3}", r.gap);
    }

    let xs = linspace(-1.0, 1.0, 5);
    let c = kde(&[-0.5, 0.5], &xs, Bandwidth::Silverman)?;
    println!("symmetric pair on {:?}: {:?}", xs, c.density.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>());

    if let Some(dir) = std::env::args().nth(1) {
        let r = gap_from_values(&near, &shifted)?;
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("kde.csv"), r.to_csv())?;
        std::fs::write(dir.join("kde.svg"), r.to_svg("shifted sample"))?;
        println!("wrote kde.csv and kde.svg to {}", dir.display());
    }
    Ok(())
}
