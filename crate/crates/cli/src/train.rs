//! Feature preparation, the SGD training loop and validation scoring.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stcx_core::eval::{evaluate, DetectionRecord, EvalResult, IOU_THRESHOLD};
use stcx_core::features::{build_context_maps, extract_from_map, filter_proposals, ActorBox};
use stcx_core::head::{ContextHead, HeadInput, Sgd};
use stcx_core::synth::BackboneStub;
use stcx_core::tensor::Tensor;

use crate::config::RunConfig;
use crate::data::{Dataset, LoadedClip};
use crate::error::{CliError, CliResult};

const STUB_SALT: u64 = 0x57ab_ba5e;
const SHUFFLE_SALT: u64 = 0x5ca1_ab1e;

/// One clip's head input plus the boxes it scores.
#[derive(Clone, Debug)]
pub struct Sample {
    pub clip_id: String,
    pub input: HeadInput,
    pub boxes: Vec<ActorBox>,
    /// `[N × num_classes]`, present for annotated boxes.
    pub labels: Option<Tensor>,
}

pub fn backbone(config: &RunConfig) -> CliResult<BackboneStub> {
    Ok(BackboneStub::new(&config.world, config.data_seed ^ STUB_SALT)?)
}

fn sample(stub: &BackboneStub, clip: &LoadedClip, boxes: Vec<ActorBox>, labels: Option<Tensor>) -> CliResult<Sample> {
    let features = stub.extract(&clip.frames)?;
    let maps = build_context_maps(&features)?;
    let actors = extract_from_map(&maps.pooled_concat, &boxes)?;
    Ok(Sample {
        clip_id: clip.id.clone(),
        input: HeadInput::new(&actors, &maps)?,
        boxes,
        labels,
    })
}

/// Samples on annotated boxes, for training.
pub fn annotated_samples(stub: &BackboneStub, clips: &[LoadedClip]) -> CliResult<Vec<Sample>> {
    clips
        .iter()
        .filter(|c| !c.annotated.is_empty())
        .map(|clip| {
            let boxes: Vec<ActorBox> = clip.annotated.iter().map(|(b, _)| *b).collect();
            let rows: Vec<Tensor> = clip
                .annotated
                .iter()
                .map(|(_, y)| Tensor::new([1, y.len()], y.clone()))
                .collect::<Result<_, _>>()?;
            let labels = Tensor::concat(&rows.iter().collect::<Vec<_>>(), 0)?;
            sample(stub, clip, boxes, Some(labels))
        })
        .collect()
}

/// Samples on detector proposals that clear `threshold`, for evaluation.
/// Clips with no surviving proposal are skipped.
pub fn proposal_samples(stub: &BackboneStub, clips: &[LoadedClip], threshold: f64) -> CliResult<Vec<Sample>> {
    clips
        .iter()
        .filter_map(|clip| {
            let kept = filter_proposals(&clip.proposals, threshold);
            (!kept.is_empty()).then(|| sample(stub, clip, kept, None))
        })
        .collect()
}

fn mean_loss(head: &ContextHead, samples: &[Sample]) -> CliResult<f64> {
    let batch: Vec<(&HeadInput, &Tensor)> = samples
        .iter()
        .map(|s| (&s.input, s.labels.as_ref().expect("annotated sample")))
        .collect();
    let cells: usize = batch.iter().map(|(_, y)| y.len()).sum();
    let mut total = 0.0;
    for chunk in batch.chunks(16) {
        let n: usize = chunk.iter().map(|(_, y)| y.len()).sum();
        total += head.loss_and_grads(chunk)?.0 * n as f64;
    }
    Ok(total / cells as f64)
}

/// Scores every sample and evaluates against `ground_truth`.
pub fn evaluate_head(
    head: &ContextHead,
    samples: &[Sample],
    ground_truth: &[stcx_core::eval::GroundTruth],
) -> CliResult<EvalResult> {
    let mut detections = Vec::new();
    for s in samples {
        let scores = head.predict(&s.input)?;
        let k = scores.shape()[1];
        for (i, bbox) in s.boxes.iter().enumerate() {
            for class_id in 0..k {
                detections.push(DetectionRecord {
                    clip_id: s.clip_id.clone(),
                    bbox: *bbox,
                    class_id,
                    score: scores.data()[i * k + class_id],
                });
            }
        }
    }
    Ok(evaluate(&detections, ground_truth, head.config().num_classes, IOU_THRESHOLD)?)
}

pub struct TrainOutcome {
    pub head: ContextHead,
    pub sgd: Sgd,
    /// Mean BCE over the whole training split before the first step.
    pub initial_loss: f64,
    /// The same after the last step.
    pub final_loss: f64,
    pub log: String,
}

/// Prepared inputs shared by every run over one dataset.
pub struct Prepared {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub val_ground_truth: Vec<stcx_core::eval::GroundTruth>,
}

impl Prepared {
    pub fn new(config: &RunConfig, data: &Dataset) -> CliResult<Self> {
        let stub = backbone(config)?;
        Ok(Prepared {
            train: annotated_samples(&stub, &data.train)?,
            val: proposal_samples(&stub, &data.val, config.proposal_threshold)?,
            val_ground_truth: data.val_ground_truth(),
        })
    }
}

/// Runs `config.steps` SGD steps on mini-batches of `config.batch_size`
/// clips, reshuffling each pass over the data.
pub fn train(config: &RunConfig, data: &Prepared) -> CliResult<TrainOutcome> {
    let train_samples = &data.train;
    if train_samples.is_empty() && config.steps > 0 {
        return Err(CliError::Config("training split is empty".into()));
    }
    let mut head = ContextHead::new(config.head_config(), config.seed)?;
    let mut sgd = Sgd::new(head.params(), config.lr, config.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut cursor = order.len();
    let mut log = String::from("step,loss\n");
    let initial_loss = if train_samples.is_empty() { f64::NAN } else { mean_loss(&head, train_samples)? };

    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(order.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let s = &train_samples[order[cursor]];
            batch.push((&s.input, s.labels.as_ref().expect("annotated sample")));
            cursor += 1;
        }
        let (loss, grads) = head.loss_and_grads(&batch)?;
        if !loss.is_finite() {
            return Err(CliError::Numerical(format!("loss became non-finite at step {step}")));
        }
        sgd.step(head.params_mut(), &grads)
            .map_err(|e| CliError::Numerical(format!("step {step}: {e}")))?;
        if config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps) {
            writeln!(log, "{step},{loss:.6}").unwrap();
        }
        if config.eval_every > 0 && (step + 1) % config.eval_every == 0 && !data.val.is_empty() {
            let result = evaluate_head(&head, &data.val, &data.val_ground_truth)?;
            writeln!(log, "# step {} val mAP {:.2}", step + 1, 100.0 * result.mean_ap).unwrap();
        }
    }
    let final_loss = if train_samples.is_empty() { f64::NAN } else { mean_loss(&head, train_samples)? };
    writeln!(log, "# train loss {initial_loss:.6} -> {final_loss:.6}").unwrap();
    Ok(TrainOutcome {
        head,
        sgd,
        initial_loss,
        final_loss,
        log,
    })
}
