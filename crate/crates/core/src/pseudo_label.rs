//! Teacher maintenance and pseudo-label synthesis.
//!
//! The teacher is an exponential moving average of the student. Its logits
//! on an unlabeled image go through softmax, argmax, a per-class
//! largest-connected-component filter and one-hot encoding to give the
//! pseudo-label used as a mixing target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SegmentationModel;
use crate::tensor::{ClassMap, HardLabelMap, ImageSlice, LogitMap, ParameterVector, SoftLabelMap};

/// EMA teacher parameters and decay.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub teacher: ParameterVector,
    pub decay: f64,
}

impl EmaState {
    pub fn new(teacher: ParameterVector, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::invalid(format!("ema decay {decay} outside [0, 1)")));
        }
        Ok(Self { teacher, decay })
    }
}

/// `teacher <- decay * teacher + (1 - decay) * student`, element-wise.
pub fn ema_update(state: &mut EmaState, student: &ParameterVector) -> Result<()> {
    if state.teacher.len() != student.len() {
        return Err(Error::shape(format!(
            "teacher has {} parameters, student {}",
            state.teacher.len(),
            student.len()
        )));
    }
    let d = state.decay;
    for (t, &s) in state.teacher.iter_mut().zip(student.iter()) {
        // Skipping equal entries keeps a converged teacher bit-exact.
        if *t != s {
            *t = d * *t + (1.0 - d) * s;
        }
    }
    Ok(())
}

/// Per-pixel softmax over classes, stabilised by max subtraction.
pub fn softmax_probs(logits: &LogitMap) -> Result<SoftLabelMap> {
    if logits.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let n = logits.plane_len();
    let c = logits.classes;
    let mut out = ClassMap::zeros(c, logits.height, logits.width);
    for p in 0..n {
        let max = (0..c)
            .map(|k| logits.data[k * n + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for k in 0..c {
            let e = (logits.data[k * n + p] - max).exp();
            out.data[k * n + p] = e;
            sum += e;
        }
        for k in 0..c {
            out.data[k * n + p] /= sum;
        }
    }
    Ok(out)
}

/// Most likely class per pixel; ties go to the lowest class index.
pub fn argmax_labels(probs: &SoftLabelMap) -> HardLabelMap {
    let n = probs.plane_len();
    let labels = (0..n)
        .map(|p| {
            let mut best = 0;
            let mut best_v = probs.data[p];
            for k in 1..probs.classes {
                let v = probs.data[k * n + p];
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            best as u32
        })
        .collect();
    HardLabelMap {
        height: probs.height,
        width: probs.width,
        labels,
    }
}

/// Pixel adjacency used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "ConnectivityRepr", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConnectivityRepr {
    Int(i64),
    Str(String),
}

impl TryFrom<ConnectivityRepr> for Connectivity {
    type Error = String;
    fn try_from(r: ConnectivityRepr) -> std::result::Result<Self, String> {
        match r {
            ConnectivityRepr::Int(4) => Ok(Connectivity::Four),
            ConnectivityRepr::Int(8) => Ok(Connectivity::Eight),
            ConnectivityRepr::Str(s) if s == "4" => Ok(Connectivity::Four),
            ConnectivityRepr::Str(s) if s == "8" => Ok(Connectivity::Eight),
            ConnectivityRepr::Int(v) => Err(format!("connectivity must be 4 or 8, got {v}")),
            ConnectivityRepr::Str(v) => Err(format!("connectivity must be 4 or 8, got '{v}'")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    /// Neighbour offsets `(dy, dx)`.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    // Keeps the smaller index as root so a root is its component's first
    // pixel in row-major order.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Keep only the largest connected component of every foreground class.
///
/// Pixels of smaller components revert to background (class 0). The
/// background class itself is never filtered. Equal-size components are
/// resolved in favour of the one whose first pixel comes first in
/// row-major order.
pub fn largest_component_filter(labels: &HardLabelMap, connectivity: Connectivity) -> HardLabelMap {
    let (h, w) = (labels.height, labels.width);
    let mut ds = DisjointSet::new(h * w);
    // Scanning only already-visited neighbours is enough for union-find.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(y, x);
            if l == 0 {
                continue;
            }
            for &(dy, dx) in back {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if ny < 0 || nx < 0 || nx >= w as isize {
                    continue;
                }
                let (ny, nx) = (ny as usize, nx as usize);
                if labels.get(ny, nx) == l {
                    ds.union(y * w + x, ny * w + nx);
                }
            }
        }
    }

    let mut size = vec![0usize; h * w];
    let mut root_of = vec![usize::MAX; h * w];
    for p in 0..h * w {
        if labels.labels[p] != 0 {
            let r = ds.find(p);
            root_of[p] = r;
            size[r] += 1;
        }
    }

    // Winner per class: (size, root); roots increase in row-major order so
    // strict `>` keeps the earliest on ties.
    let max_class = labels.labels.iter().copied().max().unwrap_or(0) as usize;
    let mut winner: Vec<Option<(usize, usize)>> = vec![None; max_class + 1];
    for p in 0..h * w {
        if root_of[p] == p {
            let c = labels.labels[p] as usize;
            match winner[c] {
                Some((s, _)) if s >= size[p] => {}
                _ => winner[c] = Some((size[p], p)),
            }
        }
    }

    let mut out = labels.clone();
    for p in 0..h * w {
        let c = labels.labels[p] as usize;
        if c != 0 && winner[c].map(|(_, r)| r) != Some(root_of[p]) {
            out.labels[p] = 0;
        }
    }
    out
}

/// One-hot encode a hard label map over `classes` classes.
pub fn one_hot(labels: &HardLabelMap, classes: usize) -> Result<SoftLabelMap> {
    let n = labels.height * labels.width;
    let mut out = ClassMap::zeros(classes, labels.height, labels.width);
    for (p, &l) in labels.labels.iter().enumerate() {
        let l = l as usize;
        if l >= classes {
            return Err(Error::invalid(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        out.data[l * n + p] = 1.0;
    }
    Ok(out)
}

/// softmax -> argmax -> largest-component filter -> one-hot, for one logit map.
pub fn pseudo_label_from_logits(
    logits: &LogitMap,
    connectivity: Connectivity,
) -> Result<(HardLabelMap, SoftLabelMap)> {
    let probs = softmax_probs(logits)?;
    let hard = largest_component_filter(&argmax_labels(&probs), connectivity);
    let soft = one_hot(&hard, logits.classes)?;
    Ok((hard, soft))
}

/// Pseudo-labels for a batch of unlabeled images.
///
/// The teacher runs in inference mode and is not modified. The returned
/// maps are plain values with no link back to the teacher.
pub fn generate_pseudo_labels(
    teacher: &dyn SegmentationModel,
    batch: &[ImageSlice],
    connectivity: Connectivity,
) -> Result<Vec<SoftLabelMap>> {
    teacher
        .infer(batch)?
        .iter()
        .map(|l| pseudo_label_from_logits(l, connectivity).map(|(_, soft)| soft))
        .collect()
}
