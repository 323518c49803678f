use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::wav::decode_wav;
use crate::error::{Error, IoContext, Result};

/// Name of the optional index file looked up in the dataset root.
pub const DEFAULT_INDEX: &str = "index.csv";

/// A decoded clip with its dataset metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub clip_id: String,
    pub fold: u32,
    pub class_index: usize,
}

/// A manifest entry; audio is decoded on demand by [`DatasetManifest::load`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRef {
    pub path: PathBuf,
    pub clip_id: String,
    pub fold: u32,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    clips: Vec<ClipRef>,
    pub n_classes: usize,
    pub folds: BTreeSet<u32>,
}

/// How clip metadata is discovered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestLayout {
    /// Explicit `path,fold,target` index. When `None`, `index.csv` in the root
    /// is used if it exists, otherwise ESC-50 file names are parsed.
    pub csv_index: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    path: String,
    fold: u32,
    target: usize,
}

/// Parse `{fold}-{id}-{take}-{target}.wav`.
pub fn parse_esc50_name(file_name: &str) -> Option<(u32, usize)> {
    let stem = file_name.strip_suffix(".wav").or_else(|| file_name.strip_suffix(".WAV"))?;
    let parts: Vec<&str> = stem.split('-').collect();
    if parts.len() != 4 || parts[1].is_empty() || parts[2].is_empty() {
        return None;
    }
    let fold = parts[0].parse::<u32>().ok().filter(|&f| f >= 1)?;
    let target = parts[3].parse::<usize>().ok()?;
    Some((fold, target))
}

pub fn scan_dataset(root: impl AsRef<Path>, layout: &ManifestLayout) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let index = match &layout.csv_index {
        Some(p) => Some(if p.is_absolute() { p.clone() } else { root.join(p) }),
        None => Some(root.join(DEFAULT_INDEX)).filter(|p| p.is_file()),
    };

    let mut clips = match index {
        Some(index) => clips_from_index(root, &index)?,
        None => clips_from_names(root)?,
    };
    if clips.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    clips.sort_by(|a, b| a.path.cmp(&b.path));

    let n_classes = 1 + clips.iter().map(|c| c.class_index).max().unwrap_or(0);
    let folds = clips.iter().map(|c| c.fold).collect();
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        clips,
        n_classes,
        folds,
    })
}

fn clip_id_for(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn clips_from_names(root: &Path) -> Result<Vec<ClipRef>> {
    let entries = fs::read_dir(root).ctx(|| format!("listing {}", root.display()))?;
    let mut clips = Vec::new();
    let mut bad = Vec::new();
    for entry in entries {
        let entry = entry.ctx(|| format!("listing {}", root.display()))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.to_ascii_lowercase().ends_with(".wav") {
            continue;
        }
        match parse_esc50_name(&name) {
            Some((fold, class_index)) => clips.push(ClipRef {
                clip_id: clip_id_for(root, &path),
                path,
                fold,
                class_index,
            }),
            None => bad.push(name),
        }
    }
    if !bad.is_empty() {
        bad.sort();
        return Err(Error::Manifest(bad));
    }
    Ok(clips)
}

fn clips_from_index(root: &Path, index: &Path) -> Result<Vec<ClipRef>> {
    let mut reader = csv::Reader::from_path(index)?;
    let mut clips = Vec::new();
    let mut bad = Vec::new();
    for row in reader.deserialize::<IndexRow>() {
        let row = row?;
        let path = root.join(&row.path);
        if !path.is_file() {
            bad.push(format!("{} (missing)", row.path));
        } else if row.fold == 0 {
            bad.push(format!("{} (fold must be >= 1)", row.path));
        } else {
            clips.push(ClipRef {
                clip_id: clip_id_for(root, &path),
                path,
                fold: row.fold,
                class_index: row.target,
            });
        }
    }
    if !bad.is_empty() {
        return Err(Error::Manifest(bad));
    }
    Ok(clips)
}

impl DatasetManifest {
    pub fn clips(&self) -> &[ClipRef] {
        &self.clips
    }

    pub fn clips_in_fold(&self, fold: u32) -> impl Iterator<Item = &ClipRef> {
        self.clips.iter().filter(move |c| c.fold == fold)
    }

    pub fn get(&self, clip_id: &str) -> Option<&ClipRef> {
        self.clips.iter().find(|c| c.clip_id == clip_id)
    }

    /// Decode one clip, rejecting any sample rate other than `expected_rate_hz`.
    pub fn load(&self, clip: &ClipRef, expected_rate_hz: u32) -> Result<AudioClip> {
        let audio = decode_wav(&clip.path)?;
        if audio.sample_rate_hz != expected_rate_hz {
            return Err(Error::SampleRate {
                path: clip.path.display().to_string(),
                expected: expected_rate_hz,
                found: audio.sample_rate_hz,
            });
        }
        if audio.samples.is_empty() {
            return Err(Error::Format(format!("{} has no samples", clip.path.display())));
        }
        Ok(AudioClip {
            samples: audio.samples,
            sample_rate_hz: audio.sample_rate_hz,
            clip_id: clip.clip_id.clone(),
            fold: clip.fold,
            class_index: clip.class_index,
        })
    }
}
