//! Dataset-level metric aggregation and the domain-gap diagnostic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::kde::{density_overlap, kde, linspace, silverman_bandwidth, Bandwidth, KdeCurve};
use super::metrics::{overlap_metrics, surface_metrics};
use crate::error::{Error, Result};
use crate::model::SegmentationModel;
use crate::pseudo_label::{argmax_labels, softmax_probs};
use crate::tensor::{HardLabelMap, ImageSlice};

/// Metrics of one foreground class averaged over images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    /// Percent.
    pub dice: f64,
    /// Percent.
    pub jaccard: f64,
    /// Pixels; mean over images where the distance is defined.
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    /// Images where exactly one of prediction / ground truth is empty.
    pub undefined: usize,
}

/// Per-class and macro-averaged segmentation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub images: usize,
    pub classes: Vec<ClassMetrics>,
    pub mean_dice: f64,
    pub mean_jaccard: f64,
    pub mean_hd95: Option<f64>,
    pub mean_asd: Option<f64>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricsRecord {
    /// Aggregate per-image metrics; with `surface = false` only overlap is computed.
    pub fn compute(preds: &[HardLabelMap], gts: &[HardLabelMap], classes: usize, surface: bool) -> Result<Self> {
        if preds.len() != gts.len() {
            return Err(Error::shape(format!("{} predictions for {} masks", preds.len(), gts.len())));
        }
        if preds.is_empty() {
            return Err(Error::invalid("no images to evaluate"));
        }
        let nfg = classes - 1;
        let mut dice = vec![Vec::new(); nfg];
        let mut jac = vec![Vec::new(); nfg];
        let mut hd = vec![Vec::new(); nfg];
        let mut asd = vec![Vec::new(); nfg];
        let mut undefined = vec![0usize; nfg];
        for (p, g) in preds.iter().zip(gts) {
            for (k, o) in overlap_metrics(p, g, classes)?.into_iter().enumerate() {
                dice[k].push(o.dice);
                jac[k].push(o.jaccard);
            }
            if surface {
                for k in 0..nfg {
                    let c = (k + 1) as u32;
                    match surface_metrics(&p.class_mask(c), &g.class_mask(c), p.height, p.width)? {
                        Some(s) => {
                            hd[k].push(s.hd95);
                            asd[k].push(s.asd);
                        }
                        None => undefined[k] += 1,
                    }
                }
            }
        }
        let per_class: Vec<ClassMetrics> = (0..nfg)
            .map(|k| ClassMetrics {
                class: k + 1,
                dice: mean(dice[k].iter().copied()).unwrap_or(0.0),
                jaccard: mean(jac[k].iter().copied()).unwrap_or(0.0),
                hd95: mean(hd[k].iter().copied()),
                asd: mean(asd[k].iter().copied()),
                undefined: undefined[k],
            })
            .collect();
        Ok(Self {
            images: preds.len(),
            mean_dice: mean(per_class.iter().map(|c| c.dice)).unwrap_or(0.0),
            mean_jaccard: mean(per_class.iter().map(|c| c.jaccard)).unwrap_or(0.0),
            mean_hd95: mean(per_class.iter().filter_map(|c| c.hd95)),
            mean_asd: mean(per_class.iter().filter_map(|c| c.asd)),
            classes: per_class,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        let mut s = String::from("class,dice,jaccard,hd95,asd,undefined\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{},{}",
                c.class,
                c.dice,
                c.jaccard,
                opt(c.hd95),
                opt(c.asd),
                c.undefined
            );
        }
        let undefined: usize = self.classes.iter().map(|c| c.undefined).sum();
        let _ = writeln!(
            s,
            "mean,{:.6},{:.6},{},{},{}",
            self.mean_dice,
            self.mean_jaccard,
            opt(self.mean_hd95),
            opt(self.mean_asd),
            undefined
        );
        s
    }
}

/// Hard predictions of `model` for each image, batched.
pub fn predict_labels(model: &dyn SegmentationModel, images: &[ImageSlice], batch: usize) -> Result<Vec<HardLabelMap>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        for logits in model.infer(chunk)? {
            out.push(argmax_labels(&softmax_probs(&logits)?));
        }
    }
    Ok(out)
}

/// Evaluate `model` against ground truth masks.
pub fn evaluate_model(
    model: &dyn SegmentationModel,
    images: &[ImageSlice],
    masks: &[HardLabelMap],
    surface: bool,
) -> Result<MetricsRecord> {
    let preds = predict_labels(model, images, 8)?;
    MetricsRecord::compute(&preds, masks, model.num_classes(), surface)
}

/// Per-image scalar fed to the density estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapStatistic {
    /// Fraction of pixels predicted as the class.
    #[default]
    AreaFraction,
    /// Mean predicted probability of the class.
    MeanProbability,
    /// Mean image intensity inside the predicted class region (0 if empty).
    MeanIntensity,
}

/// Compute `statistic` of class `class` for every image.
pub fn image_statistics(
    model: &dyn SegmentationModel,
    images: &[ImageSlice],
    class: usize,
    statistic: GapStatistic,
) -> Result<Vec<f64>> {
    if class >= model.num_classes() {
        return Err(Error::invalid(format!(
            "class {class} out of range for {} classes",
            model.num_classes()
        )));
    }
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(8) {
        for (img, logits) in chunk.iter().zip(model.infer(chunk)?) {
            let probs = softmax_probs(&logits)?;
            let n = probs.plane_len() as f64;
            let v = match statistic {
                GapStatistic::AreaFraction => argmax_labels(&probs).count(class as u32) as f64 / n,
                GapStatistic::MeanProbability => probs.plane(class).iter().sum::<f64>() / n,
                GapStatistic::MeanIntensity => {
                    let labels = argmax_labels(&probs);
                    let plane_n = img.plane_len();
                    let (mut s, mut k) = (0.0, 0usize);
                    for (p, &l) in labels.labels.iter().enumerate() {
                        if l as usize == class {
                            for c in 0..img.channels {
                                s += img.data[c * plane_n + p];
                            }
                            k += img.channels;
                        }
                    }
                    if k == 0 {
                        0.0
                    } else {
                        s / k as f64
                    }
                }
            };
            out.push(v);
        }
    }
    Ok(out)
}

/// Densities of a per-image statistic on two pools and their mismatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGapReport {
    pub labeled_values: Vec<f64>,
    pub unlabeled_values: Vec<f64>,
    pub labeled: KdeCurve,
    pub unlabeled: KdeCurve,
    /// `1 − ∫ min(f_lab, f_unl)`, in `[0, 1]`.
    pub gap: f64,
}

const GRID_POINTS: usize = 512;

/// KDE both samples on one grid covering both ranges ± 4 bandwidths.
pub fn gap_from_values(labeled: &[f64], unlabeled: &[f64]) -> Result<DomainGapReport> {
    if labeled.is_empty() || unlabeled.is_empty() {
        return Err(Error::invalid("both pools must be non-empty"));
    }
    let h = silverman_bandwidth(labeled).max(silverman_bandwidth(unlabeled));
    let all = labeled.iter().chain(unlabeled);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = linspace(lo - 4.0 * h, hi + 4.0 * h, GRID_POINTS);
    let a = kde(labeled, &grid, Bandwidth::Silverman)?;
    let b = kde(unlabeled, &grid, Bandwidth::Silverman)?;
    let gap = (1.0 - density_overlap(&a, &b)?).clamp(0.0, 1.0);
    Ok(DomainGapReport {
        labeled_values: labeled.to_vec(),
        unlabeled_values: unlabeled.to_vec(),
        labeled: a,
        unlabeled: b,
        gap,
    })
}

/// Domain-gap diagnostic of `model` between a labeled and an unlabeled pool.
pub fn domain_gap_report(
    model: &dyn SegmentationModel,
    labeled: &[ImageSlice],
    unlabeled: &[ImageSlice],
    class: usize,
    statistic: GapStatistic,
) -> Result<DomainGapReport> {
    let a = image_statistics(model, labeled, class, statistic)?;
    let b = image_statistics(model, unlabeled, class, statistic)?;
    gap_from_values(&a, &b)
}

impl DomainGapReport {
    /// `x,labeled_density,unlabeled_density` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,labeled_density,unlabeled_density\n");
        for ((x, a), b) in self
            .labeled
            .grid
            .iter()
            .zip(&self.labeled.density)
            .zip(&self.unlabeled.density)
        {
            let _ = writeln!(s, "{x:.8},{a:.8},{b:.8}");
        }
        s
    }

    /// Line chart of both densities.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, m) = (640.0, 400.0, 50.0);
        let grid = &self.labeled.grid;
        let (x0, x1) = (grid[0], grid[grid.len() - 1]);
        let ymax = self
            .labeled
            .density
            .iter()
            .chain(&self.unlabeled.density)
            .copied()
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let sx = |x: f64| m + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * m);
        let sy = |y: f64| h - m - y / ymax * (h - 2.0 * m);
        let path = |d: &[f64]| {
            grid.iter()
                .zip(d)
                .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            h - m,
            w - m,
            h - m
        );
        let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="green" stroke-width="2" points="{}"/>"#,
            path(&self.labeled.density)
        );
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="blue" stroke-width="2" points="{}"/>"#,
            path(&self.unlabeled.density)
        );
        let _ = writeln!(
            s,
            r#"<text x="{m}" y="30" font-family="sans-serif" font-size="14">{} (gap {:.3})</text>"#,
            xml_escape(title),
            self.gap
        );
        let _ = writeln!(
            s,
            r#"<text x="{m}" y="{}" font-family="sans-serif" font-size="12">{x0:.3}</text>"#,
            h - m + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">{x1:.3}</text>"#,
            w - m,
            h - m + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="green">labeled</text>"#,
            w - m - 120.0,
            m + 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="blue">unlabeled</text>"#,
            w - m - 120.0,
            m + 26.0
        );
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pools_have_no_gap() {
        let v: Vec<f64> = (0..40).map(|i| 0.2 + 0.01 * (i % 9) as f64).collect();
        let r = gap_from_values(&v, &v).unwrap();
        assert!(r.gap < 0.05, "gap {}", r.gap);
    }

    #[test]
    fn disjoint_pools_have_full_gap() {
        let a: Vec<f64> = (0..30).map(|i| 0.10 + 0.001 * i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 0.80 + 0.001 * i as f64).collect();
        let r = gap_from_values(&a, &b).unwrap();
        assert!(r.gap > 0.95, "gap {}", r.gap);
        assert!(r.to_svg("t").starts_with("<svg"));
        assert_eq!(r.to_csv().lines().count(), GRID_POINTS + 1);
    }

    #[test]
    fn record_aggregates_and_flags() {
        let gt = HardLabelMap::new(2, 4, vec![0, 1, 1, 0, 0, 1, 1, 0]).unwrap();
        let pred = HardLabelMap::new(2, 4, vec![0, 1, 1, 0, 0, 1, 1, 2]).unwrap();
        let r = MetricsRecord::compute(&[pred], &[gt], 3, true).unwrap();
        assert_eq!(r.classes[0].dice, 100.0);
        assert_eq!(r.classes[1].dice, 0.0);
        assert_eq!(r.classes[1].undefined, 1);
        assert_eq!(r.classes[1].hd95, None);
        assert_eq!(r.mean_dice, 50.0);
        assert_eq!(r.mean_hd95, Some(0.0));
        assert!(r.to_csv().contains("mean,50.000000"));
        let back: MetricsRecord = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
