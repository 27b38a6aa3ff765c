//! Dataset manifests and group-level labeled/unlabeled splits.
//!
//! A manifest is a tab-separated index, one entry per line:
//!
//! ```text
//! # sraseg manifest v1
//! labeled	p001	labeled/images/p001__s00.png	labeled/masks/p001__s00.png
//! unlabeled_synthetic	syn0001	unlabeled_synthetic/images/syn0001.png	-
//! ```
//!
//! Columns are pool, group id, image path and mask path (`-` for none).
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream, substream};

pub const MANIFEST_HEADER: &str = "# sraseg manifest v1";
pub const SPLIT_HEADER: &str = "# sraseg split v1";

/// Source pool of a dataset entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pool {
    Labeled,
    UnlabeledSynthetic,
    Val,
    Test,
}

impl Pool {
    pub const ALL: [Pool; 4] = [Pool::Labeled, Pool::UnlabeledSynthetic, Pool::Val, Pool::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Pool::Labeled => "labeled",
            Pool::UnlabeledSynthetic => "unlabeled_synthetic",
            Pool::Val => "val",
            Pool::Test => "test",
        }
    }

    fn needs_mask(self) -> bool {
        self != Pool::UnlabeledSynthetic
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pool {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pool::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown pool '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub group_id: String,
    pub pool: Pool,
}

/// Validated list of dataset entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.group_id.is_empty() {
                return Err(Error::Format(format!("{}: empty group id", e.image_path.display())));
            }
            if e.pool.needs_mask() != e.mask_path.is_some() {
                return Err(Error::Format(format!(
                    "{}: {} entries {} a mask",
                    e.image_path.display(),
                    e.pool,
                    if e.pool.needs_mask() { "require" } else { "must not have" }
                )));
            }
            if !seen.insert(&e.image_path) {
                return Err(Error::Format(format!("duplicate path {}", e.image_path.display())));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn pool(&self, pool: Pool) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.pool == pool)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from(MANIFEST_HEADER);
        s.push('\n');
        for e in &self.entries {
            push_line(&mut s, e.pool.as_str(), e);
        }
        s
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (pool, e) in parse_lines(text, base)? {
            let mut e = e;
            e.pool = pool.parse()?;
            entries.push(e);
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Build a manifest from `root/{labeled,unlabeled_synthetic,val,test}/{images,masks}`.
    ///
    /// Masks pair with images by file name. The group id is the part of the
    /// file stem before `__`, or the whole stem if there is none.
    pub fn scan(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "data root not found"),
            ));
        }
        let mut entries = Vec::new();
        for pool in Pool::ALL {
            let img_dir = root.join(pool.as_str()).join("images");
            if !img_dir.is_dir() {
                continue;
            }
            let mut names: Vec<_> = std::fs::read_dir(&img_dir)
                .map_err(|e| Error::io(&img_dir, e))?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|p| p.is_file())
                .collect();
            names.sort();
            for image_path in names {
                let file = image_path.file_name().unwrap_or_default();
                let mask_path = if pool.needs_mask() {
                    let m = root.join(pool.as_str()).join("masks").join(file);
                    if !m.is_file() {
                        return Err(Error::io(
                            &m,
                            std::io::Error::new(std::io::ErrorKind::NotFound, "mask not found"),
                        ));
                    }
                    Some(m)
                } else {
                    None
                };
                let stem = image_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let group_id = stem.split("__").next().unwrap_or(&stem).to_string();
                entries.push(ManifestEntry {
                    image_path,
                    mask_path,
                    group_id,
                    pool,
                });
            }
        }
        Self::new(entries)
    }

    /// `root/manifest.tsv` if present, otherwise a directory scan.
    pub fn discover(root: &Path) -> Result<Self> {
        let index = root.join("manifest.tsv");
        if index.is_file() {
            Self::load(&index)
        } else {
            Self::scan(root)
        }
    }
}

fn push_line(s: &mut String, pool: &str, e: &ManifestEntry) {
    let mask = e
        .mask_path
        .as_ref()
        .map_or_else(|| "-".to_string(), |m| m.display().to_string());
    s.push_str(&format!(
        "{pool}\t{}\t{}\t{mask}\n",
        e.group_id,
        e.image_path.display()
    ));
}

fn parse_lines(text: &str, base: &Path) -> Result<Vec<(String, ManifestEntry)>> {
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!(
                "line {}: expected 4 tab-separated columns, found {}",
                n + 1,
                cols.len()
            )));
        }
        out.push((
            cols[0].to_string(),
            ManifestEntry {
                image_path: resolve(cols[2]),
                mask_path: (cols[3] != "-").then(|| resolve(cols[3])),
                group_id: cols[1].to_string(),
                pool: Pool::Labeled,
            },
        ));
    }
    Ok(out)
}

/// Role of an entry after splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitPool {
    Labeled,
    Unlabeled,
    Val,
    Test,
}

impl SplitPool {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPool::Labeled => "labeled",
            SplitPool::Unlabeled => "unlabeled",
            SplitPool::Val => "val",
            SplitPool::Test => "test",
        }
    }
}

/// Result of [`make_splits`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    /// Labeled training entries.
    pub labeled: Vec<ManifestEntry>,
    /// Unlabeled training entries: synthetic images when the manifest has
    /// any, otherwise the unselected real training images.
    pub unlabeled: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    /// Number of training images not selected as labeled.
    pub unlabeled_slots: usize,
}

impl SplitManifest {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(SPLIT_HEADER);
        s.push('\n');
        s.push_str(&format!("# unlabeled_slots\t{}\n", self.unlabeled_slots));
        for (pool, list) in [
            (SplitPool::Labeled, &self.labeled),
            (SplitPool::Unlabeled, &self.unlabeled),
            (SplitPool::Val, &self.val),
            (SplitPool::Test, &self.test),
        ] {
            for e in list {
                push_line(&mut s, pool.as_str(), e);
            }
        }
        s
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut out = SplitManifest {
            labeled: Vec::new(),
            unlabeled: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            unlabeled_slots: 0,
        };
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# unlabeled_slots\t") {
                out.unlabeled_slots = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad slot count '{rest}'")))?;
            }
        }
        for (pool, e) in parse_lines(text, base)? {
            match pool.as_str() {
                "labeled" => out.labeled.push(ManifestEntry { pool: Pool::Labeled, ..e }),
                "unlabeled" => {
                    let pool = if e.mask_path.is_some() { Pool::Labeled } else { Pool::UnlabeledSynthetic };
                    out.unlabeled.push(ManifestEntry { pool, ..e })
                }
                "val" => out.val.push(ManifestEntry { pool: Pool::Val, ..e }),
                "test" => out.test.push(ManifestEntry { pool: Pool::Test, ..e }),
                other => return Err(Error::Format(format!("unknown split pool '{other}'"))),
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Select whole groups of labeled-pool images as the labeled set.
///
/// Groups are visited in a seeded random order and taken until the image
/// count reaches `fraction × training count`; the last group is kept only if
/// that lands closer to the target than stopping before it.
pub fn make_splits(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<SplitManifest> {
    if manifest.is_empty() {
        return Err(Error::invalid("empty manifest"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("labeled fraction {fraction} outside (0, 1)")));
    }
    let training: Vec<&ManifestEntry> = manifest.pool(Pool::Labeled).collect();
    let mut groups: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &training {
        *groups.entry(e.group_id.as_str()).or_default() += 1;
    }
    let mut order: Vec<(&str, usize)> = groups.into_iter().collect();
    let mut rng = substream(seed, stream::SPLIT);
    order.shuffle(&mut rng);

    let target = fraction * training.len() as f64;
    let mut chosen: HashSet<&str> = HashSet::new();
    let mut count = 0usize;
    for (g, size) in order {
        if count as f64 >= target {
            break;
        }
        let with = (count + size) as f64;
        if (with - target).abs() <= (target - count as f64).abs() {
            chosen.insert(g);
            count += size;
        } else {
            break;
        }
    }
    if chosen.is_empty() {
        return Err(Error::invalid(format!(
            "labeled fraction {fraction} of {} training images selects no group",
            training.len()
        )));
    }

    let (labeled, rest): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) =
        training.into_iter().partition(|e| chosen.contains(e.group_id.as_str()));
    let unlabeled_slots = rest.len();

    let synthetic: Vec<&ManifestEntry> = manifest.pool(Pool::UnlabeledSynthetic).collect();
    let unlabeled: Vec<ManifestEntry> = if synthetic.is_empty() {
        rest.into_iter().cloned().collect()
    } else {
        let mut idx: Vec<usize> = (0..synthetic.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(unlabeled_slots.min(synthetic.len()));
        idx.sort_unstable();
        idx.into_iter().map(|i| synthetic[i].clone()).collect()
    };

    Ok(SplitManifest {
        labeled: labeled.into_iter().cloned().collect(),
        unlabeled,
        val: manifest.pool(Pool::Val).cloned().collect(),
        test: manifest.pool(Pool::Test).cloned().collect(),
        unlabeled_slots,
    })
}
