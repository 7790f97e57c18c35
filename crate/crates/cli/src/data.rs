//! On-disk dataset layout under `data_dir`:
//!
//! ```text
//! manifest.csv       clip_id,seed,direction,split
//! clips/<id>.clip    frame dump with its box list
//! boxes.csv          every box of every clip (annotated and proposals)
//! ground_truth.csv   clip_id,x1,y1,x2,y2,class_id per positive label
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use stcx_core::eval::{parse_ground_truth, write_ground_truth, GroundTruth};
use stcx_core::features::{write_box_list, ActorBox, BoxRecord};
use stcx_core::synth::{decode_clip, encode_clip, make_dataset, SyntheticClip};
use stcx_core::tensor::Tensor;

use crate::config::RunConfig;
use crate::error::{read_file, read_text, write_file, CliError, CliResult};

pub const MANIFEST: &str = "manifest.csv";
pub const BOXES: &str = "boxes.csv";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
const MANIFEST_HEADER: &str = "clip_id,seed,direction,split";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub clip_id: String,
    pub seed: u64,
    pub direction: String,
    pub split: Split,
}

/// A clip read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedClip {
    pub id: String,
    pub frames: Tensor,
    /// Annotated boxes with their multi-hot label vectors.
    pub annotated: Vec<(ActorBox, Vec<f64>)>,
    pub proposals: Vec<ActorBox>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<LoadedClip>,
    pub val: Vec<LoadedClip>,
    pub ground_truth: Vec<GroundTruth>,
}

impl Dataset {
    pub fn val_ground_truth(&self) -> Vec<GroundTruth> {
        self.ground_truth
            .iter()
            .filter(|g| self.val.iter().any(|c| c.id == g.clip_id))
            .cloned()
            .collect()
    }
}

fn clip_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("clips").join(format!("{id}.clip"))
}

fn ground_truth_rows(clip: &SyntheticClip) -> Vec<GroundTruth> {
    clip.actors
        .iter()
        .flat_map(|a| {
            a.labels
                .iter()
                .enumerate()
                .filter(|(_, &y)| y == 1.0)
                .map(|(class_id, _)| GroundTruth {
                    clip_id: clip.id.clone(),
                    bbox: a.bbox,
                    class_id,
                })
        })
        .collect()
}

/// Renders the dataset described by `config` and writes it to `config.data_dir`.
/// Returns the number of clips written.
pub fn write_dataset(config: &RunConfig) -> CliResult<usize> {
    let dir = &config.data_dir;
    let (train, val) = make_dataset(config.num_clips, config.data_seed, config.train_ratio, config.val_ratio, &config.world)?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    let mut boxes = Vec::new();
    let mut ground_truth = Vec::new();
    let tagged = train.iter().map(|c| (c, Split::Train)).chain(val.iter().map(|c| (c, Split::Val)));
    for (clip, split) in tagged {
        writeln!(
            manifest,
            "{},{},{},{}",
            clip.id,
            clip.scenario.seed,
            clip.scenario.direction.as_str(),
            split.as_str()
        )
        .unwrap();
        write_file(&clip_path(dir, &clip.id), encode_clip(clip))?;
        boxes.extend(clip.all_boxes().into_iter().map(|bbox| BoxRecord {
            clip_id: clip.id.clone(),
            bbox,
        }));
        ground_truth.extend(ground_truth_rows(clip));
    }
    write_file(&dir.join(MANIFEST), manifest)?;
    write_file(&dir.join(BOXES), write_box_list(&boxes))?;
    write_file(&dir.join(GROUND_TRUTH), write_ground_truth(&ground_truth))?;
    Ok(train.len() + val.len())
}

pub fn read_manifest(dir: &Path) -> CliResult<Vec<ManifestRow>> {
    let path = dir.join(MANIFEST);
    let text = read_text(&path)?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(CliError::Config(format!("{}: missing manifest header", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || CliError::Config(format!("{}: malformed row {}", path.display(), i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let split = match f[3] {
                "train" => Split::Train,
                "val" => Split::Val,
                _ => return Err(bad()),
            };
            Ok(ManifestRow {
                clip_id: f[0].to_string(),
                seed: f[1].parse().map_err(|_| bad())?,
                direction: f[2].to_string(),
                split,
            })
        })
        .collect()
}

fn load_clip(dir: &Path, id: &str, ground_truth: &[GroundTruth], num_classes: usize) -> CliResult<LoadedClip> {
    let path = clip_path(dir, id);
    let dump = decode_clip(&read_file(&path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut annotated = Vec::new();
    let mut proposals = Vec::new();
    for record in dump.boxes {
        if !record.bbox.ground_truth {
            proposals.push(record.bbox);
            continue;
        }
        let mut labels = vec![0.0; num_classes];
        let mut found = false;
        for g in ground_truth.iter().filter(|g| g.clip_id == id && same_box(&g.bbox, &record.bbox)) {
            let slot = labels
                .get_mut(g.class_id)
                .ok_or_else(|| CliError::Config(format!("class {} exceeds num_classes {num_classes}", g.class_id)))?;
            *slot = 1.0;
            found = true;
        }
        if !found {
            return Err(CliError::Config(format!("{id}: annotated box has no ground-truth labels")));
        }
        annotated.push((record.bbox, labels));
    }
    Ok(LoadedClip {
        id: id.to_string(),
        frames: dump.frames,
        annotated,
        proposals,
    })
}

fn same_box(a: &ActorBox, b: &ActorBox) -> bool {
    (a.x1, a.y1, a.x2, a.y2) == (b.x1, b.y1, b.x2, b.y2)
}

pub fn load_dataset(config: &RunConfig) -> CliResult<Dataset> {
    let dir = &config.data_dir;
    let manifest = read_manifest(dir)?;
    let gt_path = dir.join(GROUND_TRUTH);
    let ground_truth = parse_ground_truth(&read_text(&gt_path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", gt_path.display())))?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for row in &manifest {
        let clip = load_clip(dir, &row.clip_id, &ground_truth, config.world.num_classes)?;
        match row.split {
            Split::Train => train.push(clip),
            Split::Val => val.push(clip),
        }
    }
    Ok(Dataset {
        train,
        val,
        ground_truth,
    })
}
