use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{make_field, render_angle_images, FaceEllipse};
use super::profile::{Label, MaterialProfile};
use crate::error::{Error, Result};
use crate::imageio::{self, BitDepth};
use crate::plane::{Plane, Rect};
use crate::polar::{self, DemosaicMethod, DolpMode, MosaicFrame, MosaicPattern, DEFAULT_EPS};
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Image channel a model is trained or evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Normalized DOLP computed from the demosaicked frame.
    Dolp,
    /// Total intensity S0 = I0 + I90.
    Gray,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Dolp => "dolp",
            Channel::Gray => "gray",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dolp" => Ok(Channel::Dolp),
            "gray" | "s0" | "s0-grayscale" => Ok(Channel::Gray),
            _ => Err(Error::Parameter(format!("unknown channel {s:?}"))),
        }
    }
}

/// Paths of one sample's files, relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub mosaic: String,
    pub i0: String,
    pub i45: String,
    pub i90: String,
    pub i135: String,
    pub dolp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub label: Label,
    pub material: String,
    pub files: SampleFiles,
    pub crop: Rect,
    pub seed: u64,
    pub split: Split,
}

/// A generated dataset: one record per sample, rooted at the directory that
/// holds the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = DatasetManifest { root, records };
        manifest.check_unique_ids()?;
        Ok(manifest)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.sample_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("duplicate sample_id {:?}", w[0])));
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads the full-frame image of `channel` for a record.
    pub fn load_channel(&self, rec: &ManifestRecord, channel: Channel) -> Result<Plane> {
        match channel {
            Channel::Dolp => imageio::read_pfm(self.resolve(&rec.files.dolp)),
            Channel::Gray => {
                let (i0, _) = imageio::read_pgm(self.resolve(&rec.files.i0))?;
                let (i90, _) = imageio::read_pgm(self.resolve(&rec.files.i90))?;
                i0.zip_map(&i90, |a, b| a + b)
            }
        }
    }

    /// Per-label record counts, sorted by label.
    pub fn label_counts(&self) -> Vec<(Label, usize)> {
        let mut counts: Vec<(Label, usize)> = Vec::new();
        for r in &self.records {
            match counts.iter_mut().find(|(l, _)| *l == r.label) {
                Some((_, c)) => *c += 1,
                None => counts.push((r.label, 1)),
            }
        }
        counts.sort();
        counts
    }
}

/// Number of training samples out of `count` for a given ratio.
pub fn train_count(count: usize, split_ratio: f64) -> usize {
    ((count as f64 * split_ratio).round() as usize).min(count)
}

struct Job<'a> {
    profile: &'a MaterialProfile,
    sample_id: String,
    split: Split,
}

/// Renders `count_per_profile` samples of every profile into `out_dir` and
/// writes `out_dir/manifest.jsonl`.
///
/// Each sample goes through the full sensor path: Malus rendering with noise,
/// PFA mosaicking quantized to 16 bits, bilinear demosaicking and normalized
/// DOLP. Output bytes depend only on the arguments.
pub fn generate_dataset(
    profiles: &[MaterialProfile],
    count_per_profile: usize,
    dims: (usize, usize),
    split_ratio: f64,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    if count_per_profile == 0 {
        return Err(Error::Parameter(
            "count_per_profile must be at least 1".into(),
        ));
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::Parameter(format!(
            "split_ratio must lie in (0, 1), got {split_ratio}"
        )));
    }
    if profiles.is_empty() {
        return Err(Error::Parameter("no profiles given".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        p.validate()?;
        if profiles[..i].iter().any(|q| q.name == p.name) {
            return Err(Error::Parameter(format!(
                "duplicate profile name {:?}",
                p.name
            )));
        }
    }
    let (width, height) = dims;
    if width < 8 || height < 8 || width % 2 != 0 || height % 2 != 0 {
        return Err(Error::Dimension(format!(
            "sample dimensions must be even and at least 8, got {width}x{height}"
        )));
    }

    let n_train = train_count(count_per_profile, split_ratio);
    let mut jobs = Vec::with_capacity(profiles.len() * count_per_profile);
    for profile in profiles {
        let mut order: Vec<usize> = (0..count_per_profile).collect();
        order.shuffle(&mut seed::rng(seed::derive_str(seed, &profile.name)));
        let mut is_train = vec![false; count_per_profile];
        for &i in &order[..n_train] {
            is_train[i] = true;
        }
        for (i, train) in is_train.into_iter().enumerate() {
            jobs.push(Job {
                profile,
                sample_id: format!("{}-{:04}", profile.name, i),
                split: if train { Split::Train } else { Split::Test },
            });
        }
    }

    fs::create_dir_all(out_dir.join("samples")).map_err(|e| Error::io(out_dir, e))?;
    let records = jobs
        .par_iter()
        .map(|job| render_sample(job, width, height, out_dir, seed))
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        records,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn render_sample(
    job: &Job<'_>,
    width: usize,
    height: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<ManifestRecord> {
    let sample_seed = seed::derive_str(seed, &job.sample_id);
    let field = make_field(job.profile, width, height, sample_seed)?;
    let clean = render_angle_images(&field, job.profile.noise_sigma, sample_seed)?;
    let pattern = MosaicPattern::default();
    let mosaic = polar::mosaic_from_angles(&clean, pattern)?;

    let rel_dir = format!("samples/{}", job.sample_id);
    let dir = out_dir.join(&rel_dir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rel = |name: &str| format!("{rel_dir}/{name}");

    // the stored 16-bit frame is what downstream stages see
    let mosaic_bytes = imageio::encode_pgm(mosaic.plane(), BitDepth::Sixteen);
    let mosaic_path = out_dir.join(rel("mosaic.pgm"));
    fs::write(&mosaic_path, &mosaic_bytes).map_err(|e| Error::io(&mosaic_path, e))?;
    let (raw, _) = imageio::decode_pgm(&mosaic_bytes, &mosaic_path)?;
    let frame = MosaicFrame::new(raw, pattern)?;

    let (angles, dolp) = polar::dolp_from_mosaic(
        &frame,
        DemosaicMethod::Bilinear,
        DolpMode::Normalized,
        DEFAULT_EPS,
    )?;
    let files = SampleFiles {
        mosaic: rel("mosaic.pgm"),
        i0: rel("i0.pgm"),
        i45: rel("i45.pgm"),
        i90: rel("i90.pgm"),
        i135: rel("i135.pgm"),
        dolp: rel("dolp.pfm"),
    };
    for (name, plane) in [
        (&files.i0, &angles.i0),
        (&files.i45, &angles.i45),
        (&files.i90, &angles.i90),
        (&files.i135, &angles.i135),
    ] {
        imageio::write_pgm(out_dir.join(name), plane, BitDepth::Sixteen)?;
    }
    imageio::write_pfm(out_dir.join(&files.dolp), &dolp.values)?;

    Ok(ManifestRecord {
        sample_id: job.sample_id.clone(),
        label: job.profile.label,
        material: job.profile.name.clone(),
        files,
        crop: FaceEllipse::for_frame(width, height).bounding_box(width, height),
        seed: sample_seed,
        split: job.split,
    })
}
