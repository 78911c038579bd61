use std::io::Write;
use std::path::PathBuf;

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{Point3, Segment, Triangle};
use crate::io::checkpoint::{write_checkpoint, Checkpoint};
use crate::losses::{joint_loss, LossBreakdown, LossConfig};
use crate::network::{forward, init_params, NetworkConfig, NetworkParams, ParamVars, PatchGeometry};
use crate::par;
use crate::patching::Patch;
use crate::rng::{child_rng, child_seed};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::augment::{augment_patch, AugmentConfig};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const AUGMENT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 12,
            learning_rate: 1e-3,
            seed: 0,
            network: NetworkConfig::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        self.network.validate()?;
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        if self.batch_size > dataset_len {
            return Err(Error::Config(format!(
                "batch size {} exceeds dataset size {dataset_len}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Loss of one optimizer step, averaged over its batch (edge point counts
/// are summed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: LossBreakdown,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,surface,edge,repulsion,regression,joint,edge_point_count";

    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{},{},{},{},{}",
            self.step, l.surface, l.edge, l.repulsion, l.regression, l.joint, l.edge_point_count
        )
    }
}

/// Receives training progress.
pub trait TrainSink {
    fn step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
    fn epoch_end(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl TrainSink for NullSink {}

/// Appends CSV rows and rewrites the checkpoint after every epoch.
pub struct CsvSink<W: Write> {
    pub log: W,
    pub checkpoint: Option<PathBuf>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut log: W, checkpoint: Option<PathBuf>, write_header: bool) -> Result<Self> {
        if write_header {
            writeln!(log, "{}", StepRecord::CSV_HEADER)?;
        }
        Ok(Self { log, checkpoint })
    }
}

impl<W: Write> TrainSink for CsvSink<W> {
    fn step(&mut self, record: &StepRecord) -> Result<()> {
        writeln!(self.log, "{}", record.csv_row())?;
        Ok(())
    }

    fn epoch_end(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        self.log.flush()?;
        if let Some(path) = &self.checkpoint {
            write_checkpoint(path, checkpoint)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
}

/// Forward pass plus joint loss for one patch.
pub fn patch_objective(
    tape: &mut Tape,
    pv: &ParamVars,
    points: &[Point3],
    tris: &[Triangle],
    segs: &[Segment],
    network: &NetworkConfig,
    loss: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    let geo = PatchGeometry::new(points, network)?;
    let out = forward(tape, pv, &geo, network)?;
    joint_loss(tape, out.points, out.distance, tris, segs, loss)
}

/// Parameter gradients of the joint loss on one patch.
pub fn patch_gradients(params: &NetworkParams, patch: &Patch, loss: &LossConfig) -> Result<(Vec<Tensor>, LossBreakdown)> {
    let mut tape = Tape::new();
    let pv = ParamVars::record(&mut tape, params, true);
    let (root, bd) = patch_objective(
        &mut tape,
        &pv,
        &patch.points,
        &patch.gt_triangles,
        &patch.gt_segments,
        &params.config,
        loss,
    )?;
    let mut grads = tape.backward(root)?;
    Ok((pv.gradients(&mut grads), bd))
}

fn average(batch: Vec<(Vec<Tensor>, LossBreakdown)>) -> (Vec<Tensor>, LossBreakdown) {
    let n = batch.len() as f64;
    let mut it = batch.into_iter();
    let (mut sum, first) = it.next().expect("non-empty batch");
    let mut bd = first;
    for (g, b) in it {
        for (acc, x) in sum.iter_mut().zip(&g) {
            for (a, v) in acc.data.iter_mut().zip(&x.data) {
                *a += v;
            }
        }
        bd.surface += b.surface;
        bd.edge += b.edge;
        bd.repulsion += b.repulsion;
        bd.regression += b.regression;
        bd.joint += b.joint;
        bd.edge_point_count += b.edge_point_count;
    }
    for t in &mut sum {
        t.data.iter_mut().for_each(|v| *v /= n);
    }
    bd.surface /= n;
    bd.edge /= n;
    bd.repulsion /= n;
    bd.regression /= n;
    bd.joint /= n;
    (sum, bd)
}

/// Minibatch Adam over shuffled, freshly augmented patches. Resuming from
/// a checkpoint continues at its next epoch.
pub fn train(dataset: &[Patch], cfg: &TrainConfig, resume: Option<Checkpoint>, sink: &mut dyn TrainSink) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(dataset.len())?;
    if let Some(p) = dataset.iter().find(|p| p.gt_triangles.is_empty()) {
        return Err(Error::Config(format!("patch at centroid {} has no ground-truth triangles", p.centroid_index)));
    }
    let mut ck = match resume {
        Some(ck) => {
            if ck.params.config != cfg.network {
                return Err(Error::ArchitectureMismatch {
                    found: ck.params.architecture_hash(),
                    expected: init_params(&cfg.network, 0)?.architecture_hash(),
                });
            }
            ck
        }
        None => {
            let params = init_params(&cfg.network, child_seed(cfg.seed, INIT_STREAM))?;
            let adam = AdamState::new(&params.tensors());
            Checkpoint {
                seed: cfg.seed,
                epoch: 0,
                params,
                adam,
            }
        }
    };
    let mut log = Vec::new();
    let shuffle_seed = child_seed(cfg.seed, SHUFFLE_STREAM);
    let augment_seed = child_seed(cfg.seed, AUGMENT_STREAM);
    for epoch in ck.epoch + 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut child_rng(shuffle_seed, epoch));
        let epoch_aug = child_seed(augment_seed, epoch);
        for batch in order.chunks(cfg.batch_size) {
            let params = &ck.params;
            let results = par::map(batch, |&i| {
                let patch = augment_patch(&dataset[i], &cfg.augment, &mut child_rng(epoch_aug, i as u64));
                patch_gradients(params, &patch, &cfg.loss)
            });
            let results = results.into_iter().collect::<Result<Vec<_>>>()?;
            let (grads, loss) = average(results);
            if !loss.joint.is_finite() {
                return Err(Error::Config(format!("non-finite loss at epoch {epoch}")));
            }
            let mut tensors = ck.params.tensors_mut();
            adam_step(&mut tensors, &grads, &mut ck.adam, cfg.learning_rate, &cfg.adam)?;
            let rec = StepRecord {
                step: ck.adam.step,
                epoch,
                loss,
            };
            log::debug!("epoch {epoch} step {} joint {:.6}", rec.step, loss.joint);
            sink.step(&rec)?;
            log.push(rec);
        }
        ck.epoch = epoch;
        sink.epoch_end(&ck)?;
    }
    Ok(TrainOutcome { checkpoint: ck, log })
}
