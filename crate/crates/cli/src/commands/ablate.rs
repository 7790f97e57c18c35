//! Trains and evaluates every head variant over several seeds.

use std::fmt::Write as _;

use stcx_core::head::Variant;
use stcx_core::synth::DIRECTION_CLASSES;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::train::{evaluate_head, train, Prepared};

/// Full-scale reference mAP per variant, in [`Variant::ALL`] order.
pub const REFERENCE_MAP: [f64; 5] = [24.80, 26.50, 26.75, 26.65, 27.02];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    /// Val mAP over all classes, one per seed, in `[0, 1]`.
    pub map: Vec<f64>,
    /// Val mAP over the give/receive classes, one per seed.
    pub direction_map: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl AblationRow {
    pub fn mean_map(&self) -> f64 {
        mean(&self.map)
    }

    pub fn mean_direction_map(&self) -> f64 {
        mean(&self.direction_map)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub steps: usize,
    pub train_clips: usize,
    pub val_clips: usize,
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_text(&self) -> String {
        let seeds = self.rows.first().map_or(0, |r| r.seeds.len());
        let mut s = format!(
            "# {} train / {} val clips, {} steps, seeds {:?}\n",
            self.train_clips,
            self.val_clips,
            self.steps,
            self.rows.first().map(|r| r.seeds.clone()).unwrap_or_default()
        );
        s.push_str("variant");
        for k in 0..seeds {
            write!(s, ",map_seed{k}").unwrap();
        }
        s.push_str(",map_mean");
        for k in 0..seeds {
            write!(s, ",direction_seed{k}").unwrap();
        }
        s.push_str(",direction_mean\n");
        for r in &self.rows {
            s.push_str(r.variant.as_str());
            for v in &r.map {
                write!(s, ",{:.2}", 100.0 * v).unwrap();
            }
            write!(s, ",{:.2}", 100.0 * r.mean_map()).unwrap();
            for v in &r.direction_map {
                write!(s, ",{:.2}", 100.0 * v).unwrap();
            }
            writeln!(s, ",{:.2}", 100.0 * r.mean_direction_map()).unwrap();
        }
        s.push_str("# reference mAP at full scale (large video benchmark, pretrained backbone):\n");
        for (v, m) in Variant::ALL.iter().zip(REFERENCE_MAP) {
            writeln!(s, "#   {:<34} {m:.2}", v.as_str()).unwrap();
        }
        s
    }
}

/// Every variant is trained with seeds `config.seed .. config.seed + ablation_seeds`.
pub fn run_ablation(config: &RunConfig, data: &Prepared) -> CliResult<AblationReport> {
    let seeds: Vec<u64> = (0..config.ablation_seeds as u64).map(|k| config.seed + k).collect();
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let mut row = AblationRow {
            variant,
            seeds: seeds.clone(),
            map: Vec::new(),
            direction_map: Vec::new(),
        };
        for &seed in &seeds {
            let run = RunConfig {
                variant,
                seed,
                eval_every: 0,
                ..config.clone()
            };
            let outcome = train(&run, data)?;
            let result = evaluate_head(&outcome.head, &data.val, &data.val_ground_truth)?;
            row.map.push(result.mean_ap);
            row.direction_map.push(result.subset_mean_ap(&DIRECTION_CLASSES)?);
        }
        rows.push(row);
    }
    Ok(AblationReport {
        rows,
        steps: config.steps,
        train_clips: data.train.len(),
        val_clips: data.val.len(),
    })
}
