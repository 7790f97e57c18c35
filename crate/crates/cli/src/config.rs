//! Run configuration: flat `key = value` text with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stcx_core::head::{HeadConfig, Variant};
use stcx_core::synth::WorldConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Head initialization and batch shuffling.
    pub seed: u64,
    /// Dataset generation and the frozen backbone stub.
    pub data_seed: u64,
    pub num_clips: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub world: WorldConfig,

    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_hidden: usize,
    pub variant: Variant,
    pub actor_positional: bool,
    pub slow_positional: bool,
    pub fast_positional: bool,

    pub lr: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub log_every: usize,
    pub eval_every: usize,

    pub proposal_threshold: f64,
    pub ablation_seeds: usize,

    pub data_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        RunConfig {
            seed: 0,
            data_seed: 2024,
            num_clips: 125,
            train_ratio: 0.8,
            val_ratio: 0.2,
            model_dim: world.slow_channels + world.fast_channels,
            world,
            num_heads: 4,
            ffn_hidden: 40,
            variant: Variant::SpatioTemporalCtxSpatialActors,
            actor_positional: true,
            slow_positional: false,
            fast_positional: true,
            lr: 0.02,
            momentum: 0.9,
            steps: 500,
            batch_size: 8,
            log_every: 50,
            eval_every: 250,
            proposal_threshold: 0.8,
            ablation_seeds: 3,
            data_dir: PathBuf::from("data"),
            checkpoint: PathBuf::from("run/checkpoint.stcx"),
            report: PathBuf::from("run/report.txt"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&crate::error::read_text(path)?)
    }

    fn set(&mut self, key: &str, v: &str) -> CliResult<()> {
        let w = &mut self.world;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "num_clips" => self.num_clips = parse(key, v)?,
            "train_ratio" => self.train_ratio = parse(key, v)?,
            "val_ratio" => self.val_ratio = parse(key, v)?,
            "image_size" => w.image_size = parse(key, v)?,
            "grid_size" => w.grid_size = parse(key, v)?,
            "frames" => w.frames = parse(key, v)?,
            "slow_stride" => w.slow_stride = parse(key, v)?,
            "fast_stride" => w.fast_stride = parse(key, v)?,
            "slow_channels" => w.slow_channels = parse(key, v)?,
            "fast_channels" => w.fast_channels = parse(key, v)?,
            "num_classes" => w.num_classes = parse(key, v)?,
            "model_dim" => self.model_dim = parse(key, v)?,
            "num_heads" => self.num_heads = parse(key, v)?,
            "ffn_hidden" => self.ffn_hidden = parse(key, v)?,
            "variant" => self.variant = v.parse()?,
            "actor_positional" => self.actor_positional = parse(key, v)?,
            "slow_positional" => self.slow_positional = parse(key, v)?,
            "fast_positional" => self.fast_positional = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "log_every" => self.log_every = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "proposal_threshold" => self.proposal_threshold = parse(key, v)?,
            "ablation_seeds" => self.ablation_seeds = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "report" => self.report = PathBuf::from(v),
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        self.world.validate()?;
        let positive = [
            ("model_dim", self.model_dim),
            ("num_heads", self.num_heads),
            ("ffn_hidden", self.ffn_hidden),
            ("batch_size", self.batch_size),
            ("ablation_seeds", self.ablation_seeds),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::Config(format!("`{name}` must be positive")));
        }
        if self.model_dim != self.world.slow_channels + self.world.fast_channels {
            return Err(CliError::Config(format!(
                "model_dim {} must equal slow_channels + fast_channels = {}",
                self.model_dim,
                self.world.slow_channels + self.world.fast_channels
            )));
        }
        let ratios_ok = self.train_ratio >= 0.0
            && self.val_ratio >= 0.0
            && (self.train_ratio + self.val_ratio - 1.0).abs() < 1e-9;
        if !ratios_ok {
            return Err(CliError::Config("train_ratio and val_ratio must be non-negative and sum to 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CliError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CliError::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(0.0..=1.0).contains(&self.proposal_threshold) {
            return Err(CliError::Config("proposal_threshold must lie in [0, 1]".into()));
        }
        self.head_config().validate()?;
        Ok(())
    }

    /// Fails early when an output path cannot be created.
    pub fn check_writable(path: &Path) -> CliResult<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let meta = std::fs::metadata(dir).map_err(CliError::io(dir))?;
        if meta.permissions().readonly() {
            return Err(CliError::Io {
                path: dir.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::PermissionDenied, "directory is read-only"),
            });
        }
        Ok(())
    }

    pub fn head_config(&self) -> HeadConfig {
        let w = &self.world;
        HeadConfig {
            variant: self.variant,
            slow_channels: w.slow_channels,
            fast_channels: w.fast_channels,
            num_heads: self.num_heads,
            ffn_hidden: self.ffn_hidden,
            num_classes: w.num_classes,
            slow_tokens: w.grid_size * w.grid_size,
            fast_tokens: w.fast_frames(),
            actor_tokens: stcx_core::features::ROI_SIZE * stcx_core::features::ROI_SIZE,
            actor_positional: self.actor_positional,
            slow_positional: self.slow_positional,
            fast_positional: self.fast_positional,
        }
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let w = &self.world;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k} = {v}").unwrap();
        kv("seed", &self.seed);
        kv("data_seed", &self.data_seed);
        kv("num_clips", &self.num_clips);
        kv("train_ratio", &self.train_ratio);
        kv("val_ratio", &self.val_ratio);
        kv("image_size", &w.image_size);
        kv("grid_size", &w.grid_size);
        kv("frames", &w.frames);
        kv("slow_stride", &w.slow_stride);
        kv("fast_stride", &w.fast_stride);
        kv("slow_channels", &w.slow_channels);
        kv("fast_channels", &w.fast_channels);
        kv("num_classes", &w.num_classes);
        kv("model_dim", &self.model_dim);
        kv("num_heads", &self.num_heads);
        kv("ffn_hidden", &self.ffn_hidden);
        kv("variant", &self.variant);
        kv("actor_positional", &self.actor_positional);
        kv("slow_positional", &self.slow_positional);
        kv("fast_positional", &self.fast_positional);
        kv("lr", &self.lr);
        kv("momentum", &self.momentum);
        kv("steps", &self.steps);
        kv("batch_size", &self.batch_size);
        kv("log_every", &self.log_every);
        kv("eval_every", &self.eval_every);
        kv("proposal_threshold", &self.proposal_threshold);
        kv("ablation_seeds", &self.ablation_seeds);
        kv("data_dir", &self.data_dir.display());
        kv("checkpoint", &self.checkpoint.display());
        kv("report", &self.report.display());
        s
    }
}
