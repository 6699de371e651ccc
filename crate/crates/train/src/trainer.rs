use std::path::PathBuf;
use std::time::Instant;

use lact_core::phantom::derive_seed;
use lact_nn::{Adam, AdamConfig, Checkpoint, Graph, Model, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::{evaluate_levels, EvalStart, LevelScore};
use crate::input::{image_to_tensor, prepare_input};
use crate::recon::ModelReconstructor;
use crate::window::WindowSampler;

// Independent RNG streams derived from the master seed.
const INIT_STREAM: u64 = 0x1;
const WINDOW_STREAM: u64 = 0x2;
const SHUFFLE_STREAM: u64 = 0x3;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

/// One row of the evaluation log written during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLogRow {
    pub epoch: usize,
    pub level: u32,
    pub range_deg: f64,
    pub mcc_sum: f64,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
}

/// Where [`Trainer::fit`] writes its artifacts. Unset paths are skipped.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    /// Rewritten after every epoch, with optimizer state.
    pub checkpoint: Option<PathBuf>,
    pub log_csv: Option<PathBuf>,
    pub eval_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct History {
    pub log: Vec<LogRow>,
    pub eval: Vec<EvalLogRow>,
}

pub struct Trainer {
    config: TrainConfig,
    model: Model<f32>,
    adam: Adam<f32>,
    sampler: WindowSampler,
    angle_step_deg: f64,
    /// Epoch in progress, for diagnostics.
    epoch: usize,
}

impl Trainer {
    /// Fresh model initialized from the config seed. `angle_step_deg` is the
    /// dataset's sinogram row spacing.
    pub fn new(config: TrainConfig, angle_step_deg: f64) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model.clone(), derive_seed(config.seed, INIT_STREAM))?;
        let adam = Adam::new(adam_config(&config), model.params());
        let sampler = WindowSampler::from_config(&config, angle_step_deg)?;
        Ok(Self { config, model, adam, sampler, angle_step_deg, epoch: 0 })
    }

    /// Continues from a checkpoint written by [`fit`](Self::fit). The
    /// checkpoint's model config must equal `config.model`.
    pub fn resume(config: TrainConfig, angle_step_deg: f64, ckpt: &Checkpoint) -> Result<Self> {
        config.validate()?;
        if ckpt.config != config.model {
            return Err(Error::Config("checkpoint model config differs from the training config".into()));
        }
        let (model, adam) = ckpt.restore()?;
        let mut adam = adam.ok_or_else(|| Error::Config("checkpoint has no optimizer state".into()))?;
        adam.config = adam_config(&config);
        let sampler = WindowSampler::from_config(&config, angle_step_deg)?;
        Ok(Self { config, model, adam, sampler, angle_step_deg, epoch: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model<f32> {
        &mut self.model
    }

    pub fn into_model(self) -> Model<f32> {
        self.model
    }

    /// Parameter updates performed so far.
    pub fn step(&self) -> u64 {
        self.adam.step_count()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.model, Some(&self.adam))
    }

    /// One Adam update on `batch`: a random window per sample, the network
    /// prediction rotated by each window's start angle, and the MSE against
    /// the ground-truth images. Returns the loss before the update.
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let mcfg = &self.config.model;
        let step = self.adam.step_count();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed ^ WINDOW_STREAM, step));
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        let mut angles = Vec::with_capacity(batch.len());
        for s in batch {
            if s.image.size() != mcfg.output_size {
                return Err(Error::Input(format!(
                    "{} is {}x{1}, the model outputs {}x{2}",
                    s.id,
                    s.image.size(),
                    mcfg.output_size
                )));
            }
            let w = self.sampler.sample(&mut rng);
            inputs.push(prepare_input(&s.sino, &w, mcfg)?);
            targets.push(image_to_tensor(&s.image));
            angles.push(w.alpha_deg);
        }
        let input = Tensor::stack(&inputs)?;
        let target = Tensor::stack(&targets)?;

        let mut g = Graph::new();
        let f = self.model.forward(&mut g, input, true)?;
        let rotated = g.rotate(f.output, &angles)?;
        let loss = g.mse_loss(rotated, &target)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: self.epoch, step, loss: value });
        }
        g.backward(loss)?;
        let grads = self.model.params().grads(&mut g, &f.params);
        self.adam.update(self.model.params_mut(), &grads)?;
        Ok(value)
    }

    /// Trains on `train`, evaluating on `holdout` every `eval_every` epochs.
    /// Stops after `epochs` epochs, or after exactly `max_steps` updates when
    /// that is set. Epoch `e` visits the samples in an order drawn from the
    /// seed and `e` alone, so a resumed run matches an uninterrupted one.
    pub fn fit(&mut self, train: &[Sample], holdout: &[Sample], out: &Outputs) -> Result<History> {
        if train.is_empty() {
            return Err(Error::Config("no training samples".into()));
        }
        let bs = self.config.batch_size;
        let per_epoch = train.len().div_ceil(bs) as u64;
        let mut epoch = (self.step() / per_epoch) as usize;
        let mut history = History::default();
        let start = Instant::now();

        let mut log_writer = out.log_csv.as_ref().map(create_csv).transpose()?;
        let mut eval_writer = out.eval_csv.as_ref().map(create_csv).transpose()?;

        loop {
            let done = match self.config.max_steps {
                Some(max) => self.step() >= max,
                None => epoch >= self.config.epochs,
            };
            if done {
                break;
            }
            self.epoch = epoch;
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed ^ SHUFFLE_STREAM, epoch as u64)));
            let (mut sum, mut count) = (0.0, 0usize);
            for chunk in order.chunks(bs) {
                if self.config.max_steps.is_some_and(|max| self.step() >= max) {
                    break;
                }
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
                let loss = self.train_step(&batch)?;
                sum += loss;
                count += 1;
            }
            epoch += 1;
            let row = LogRow {
                epoch,
                step: self.step(),
                loss: sum / count.max(1) as f64,
                lr: self.config.lr,
                wall_ms: start.elapsed().as_millis() as u64,
            };
            log::info!("epoch {} step {} loss {:.6e}", row.epoch, row.step, row.loss);
            if let Some(w) = log_writer.as_mut() {
                w.serialize(&row)?;
                w.flush().map_err(|e| Error::io(out.log_csv.clone().unwrap_or_default(), e))?;
            }
            history.log.push(row);

            if self.config.eval_every > 0 && epoch % self.config.eval_every == 0 && !holdout.is_empty() {
                let levels: Vec<usize> = (1..=7).collect();
                let (scores, _) = evaluate_levels(
                    &mut ModelReconstructor::new(&mut self.model),
                    holdout,
                    &levels,
                    EvalStart::Fixed(0.0),
                    self.angle_step_deg,
                )?;
                for s in scores {
                    let row = eval_row(epoch, &s);
                    log::info!("  level {} ({}°) mcc_sum {:.3}", row.level, row.range_deg, row.mcc_sum);
                    if let Some(w) = eval_writer.as_mut() {
                        w.serialize(&row)?;
                    }
                    history.eval.push(row);
                }
                if let Some(w) = eval_writer.as_mut() {
                    w.flush().map_err(|e| Error::io(out.eval_csv.clone().unwrap_or_default(), e))?;
                }
            }
            if let Some(path) = &out.checkpoint {
                self.checkpoint().save(path)?;
            }
        }
        Ok(history)
    }
}

fn adam_config(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig { lr: cfg.lr, ..AdamConfig::default() }
}

fn eval_row(epoch: usize, s: &LevelScore) -> EvalLogRow {
    EvalLogRow {
        epoch,
        level: s.level,
        range_deg: s.range_deg,
        mcc_sum: s.mcc_sum,
        psnr_mean: s.psnr_mean,
        ssim_mean: s.ssim_mean,
    }
}

fn create_csv(path: &PathBuf) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(csv::Writer::from_path(path)?)
}
