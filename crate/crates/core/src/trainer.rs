//! Dual-network co-teaching training loop.
//!
//! Per iteration, both networks forward on the clean pair, estimate and
//! threshold occlusion maps, forward again on a shared augmented version of
//! the batch, then each network's hybrid loss consumes the *other* network's
//! occlusion maps (the swap). Cross-network tensors only ever enter through
//! stop-gradient, so no gradient flows between the networks; each gets an
//! independent Adam step.

use std::io::Write;
use std::path::PathBuf;

use costereo_autograd::Tensor;
use log::{debug, warn};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{self, AugmentationSpec};
use crate::config::CoTeachConfig;
use crate::data::{shuffle_indices, Map, Mask, StereoSample};
use crate::error::{Error, Result};
use crate::losses::{hybrid_loss, AugLossInputs, LossBreakdown};
use crate::metrics::{EvalReport, BAD_PIXEL_TOLERANCE};
use crate::net::{self, NetworkParams};
use crate::occlusion::{apply_dynamic_threshold, estimate_occlusion};

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

/// Dynamic threshold schedule: `R(t) = 1 - tau * min(t / t_k, 1)`, applied
/// at epoch end, so the first epoch trains with R = 1.
pub fn schedule_r(t: usize, tau: f64, t_k: usize) -> f64 {
    1.0 - tau * (t as f64 / t_k as f64).min(1.0)
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update from the gradients currently accumulated
/// on the parameter tensors. Tensors are immutable, so updated parameters
/// are fresh leaves; missing gradients count as zero.
pub fn adam_step(params: &mut NetworkParams<f32>, state: &mut AdamState, eta_t: f32) -> Result<()> {
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    let count = params.tensors().len();
    for i in 0..count {
        let (_, tensor) = &params.tensors()[i];
        let grad = tensor.grad();
        if let Some(g) = &grad {
            if g.len() != tensor.numel() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient length {} vs parameter {}",
                    g.len(),
                    tensor.numel()
                )));
            }
        }
        let mut vals = tensor.values().to_vec();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..vals.len() {
            let g = grad.as_ref().map_or(0.0, |g| g[j]);
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            vals[j] -= eta_t * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        let shape = tensor.shape().to_vec();
        params.set_tensor(i, Tensor::param(&shape, vals)?);
    }
    Ok(())
}

/// Everything one network produces from the clean pair: the differentiable
/// disparity, its thresholded occlusion estimate (a stop-gradient constant),
/// and plain-array copies feeding the augmentation pass.
pub struct NetForward {
    pub d: Tensor<f32>,
    pub o: Tensor<f32>,
    pub o_raw: Map,
    pub d_map: Map,
}

/// Clean forward plus occlusion estimation. The right-view disparity comes
/// from the mirror trick on detached parameters (the occlusion path carries
/// no gradient anyway, so no graph is built for it).
pub fn forward_with_occlusion(
    params: &NetworkParams<f32>,
    i_left: &Tensor<f32>,
    i_right: &Tensor<f32>,
    r: f64,
    config: &CoTeachConfig,
) -> Result<NetForward> {
    let d = net::forward(params, i_left, i_right)?;
    let detached = params.detached();
    let d_right = net::forward_right(&detached, i_left, i_right)?;
    let d_const = d.stop_gradient();
    let o_raw = estimate_occlusion(&d_const, &d_right, config.gamma1, config.gamma2)?;
    let o = if config.dynamic_threshold {
        apply_dynamic_threshold(&o_raw, r)?
    } else {
        o_raw.clone()
    };
    Ok(NetForward {
        d,
        o,
        o_raw: Map::from_tensor(&o_raw)?,
        d_map: Map::from_tensor(&d_const)?,
    })
}

/// Teacher/student inputs of the augmentation loss for both networks,
/// produced from one shared augmentation spec.
pub struct AugPair {
    pub a: AugLossInputs<f32>,
    pub b: AugLossInputs<f32>,
}

pub fn augmented_pass(
    params_a: &NetworkParams<f32>,
    params_b: &NetworkParams<f32>,
    sample: &StereoSample,
    fwd_a: &NetForward,
    fwd_b: &NetForward,
    spec: &AugmentationSpec,
) -> Result<AugPair> {
    let (aug_left, aug_right) = augment::transform_pair(spec, &sample.left, &sample.right)?;
    let left_t = aug_left.to_tensor::<f32>();
    let right_t = aug_right.to_tensor::<f32>();
    let (d_teacher_a, o_tilde_a) = augment::transform_maps(spec, &fwd_a.d_map, &fwd_a.o_raw)?;
    let (d_teacher_b, o_tilde_b) = augment::transform_maps(spec, &fwd_b.d_map, &fwd_b.o_raw)?;
    let d_star_a = net::forward(params_a, &left_t, &right_t)?;
    let d_star_b = net::forward(params_b, &left_t, &right_t)?;
    Ok(AugPair {
        a: AugLossInputs {
            d_teacher: d_teacher_a.to_tensor(),
            d_student: d_star_a,
            o_tilde: o_tilde_a.to_tensor(),
        },
        b: AugLossInputs {
            d_teacher: d_teacher_b.to_tensor(),
            d_student: d_star_b,
            o_tilde: o_tilde_b.to_tensor(),
        },
    })
}

/// Wire the per-network hybrid losses for one sample. With the swap on,
/// network A's loss consumes network B's thresholded occlusion map and B's
/// `o_tilde` (and symmetrically); each network always keeps its own
/// teacher/student disparities.
pub fn assemble_losses(
    i_left: &Tensor<f32>,
    i_right: &Tensor<f32>,
    fwd_a: &NetForward,
    fwd_b: &NetForward,
    aug: Option<&AugPair>,
    config: &CoTeachConfig,
) -> Result<(LossBreakdown<f32>, LossBreakdown<f32>)> {
    let (o_for_a, o_for_b) = if config.swap {
        (&fwd_b.o, &fwd_a.o)
    } else {
        (&fwd_a.o, &fwd_b.o)
    };
    let aug_for = |own: &AugLossInputs<f32>, other: &AugLossInputs<f32>| AugLossInputs {
        d_teacher: own.d_teacher.clone(),
        d_student: own.d_student.clone(),
        o_tilde: if config.swap { other.o_tilde.clone() } else { own.o_tilde.clone() },
    };
    let aug_a = aug.map(|p| aug_for(&p.a, &p.b));
    let aug_b = aug.map(|p| aug_for(&p.b, &p.a));
    let loss_a = hybrid_loss(
        i_left,
        i_right,
        &fwd_a.d,
        o_for_a,
        aug_a.as_ref(),
        &config.weights,
        config.use_smoothness,
    )?;
    let loss_b = hybrid_loss(
        i_left,
        i_right,
        &fwd_b.d,
        o_for_b,
        aug_b.as_ref(),
        &config.weights,
        config.use_smoothness,
    )?;
    Ok((loss_a, loss_b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub ph: f64,
    pub sm: f64,
    pub da: f64,
    pub total: f64,
}

impl LossValues {
    fn from_breakdown(b: &LossBreakdown<f32>) -> Self {
        let (ph, sm, da, total) = b.scalars();
        LossValues { ph, sm, da, total }
    }
}

pub enum IterOutcome {
    Stepped(LossValues, LossValues),
    /// Non-finite loss: parameters untouched, event logged.
    SkippedNonFinite,
}

pub struct TrainState {
    pub params_a: NetworkParams<f32>,
    pub params_b: NetworkParams<f32>,
    pub adam_a: AdamState,
    pub adam_b: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    /// Current threshold, in [1 - tau, 1].
    pub r: f64,
}

impl TrainState {
    pub fn init(config: &CoTeachConfig) -> Result<Self> {
        let params_a = net::init_params(config.seed_a, &config.arch)?;
        let params_b = net::init_params(config.seed_b, &config.arch)?;
        let adam_a = AdamState::new(&params_a);
        let adam_b = AdamState::new(&params_b);
        Ok(TrainState { params_a, params_b, adam_a, adam_b, epoch: 0, r: schedule_r(0, config.tau, config.t_k) })
    }
}

/// One optimization step over a mini-batch: forward both networks on every
/// sample, average the per-sample losses, then update A and B independently.
pub fn train_iteration(
    state: &mut TrainState,
    batch: &[&StereoSample],
    config: &CoTeachConfig,
    aug_rng: &mut ChaCha8Rng,
    eta_t: f32,
) -> Result<IterOutcome> {
    assert!(!batch.is_empty());
    let mut acc: Option<(LossBreakdown<f32>, LossBreakdown<f32>)> = None;
    for sample in batch {
        let i_left = sample.left.to_tensor::<f32>();
        let i_right = sample.right.to_tensor::<f32>();
        let fwd_a = forward_with_occlusion(&state.params_a, &i_left, &i_right, state.r, config)?;
        let fwd_b = forward_with_occlusion(&state.params_b, &i_left, &i_right, state.r, config)?;
        let aug = if config.use_augmentation {
            let spec = augment::sample_spec(aug_rng, sample.left.w, sample.left.h);
            debug!("sample {} aug {}", sample.id, spec.to_log_string());
            Some(augmented_pass(&state.params_a, &state.params_b, sample, &fwd_a, &fwd_b, &spec)?)
        } else {
            None
        };
        let (la, lb) = assemble_losses(&i_left, &i_right, &fwd_a, &fwd_b, aug.as_ref(), config)?;
        acc = Some(match acc {
            None => (la, lb),
            Some((pa, pb)) => (add_breakdowns(&pa, &la)?, add_breakdowns(&pb, &lb)?),
        });
    }
    let (sum_a, sum_b) = acc.expect("non-empty batch");
    let scale = 1.0 / batch.len() as f32;
    let loss_a = scale_breakdown(&sum_a, scale, config)?;
    let loss_b = scale_breakdown(&sum_b, scale, config)?;

    let va = LossValues::from_breakdown(&loss_a);
    let vb = LossValues::from_breakdown(&loss_b);
    if !va.total.is_finite() || !vb.total.is_finite() {
        warn!("non-finite loss (A {:?}, B {:?}); iteration skipped", va.total, vb.total);
        return Ok(IterOutcome::SkippedNonFinite);
    }

    loss_a.total.backward()?;
    debug_assert!(
        state.params_b.tensors().iter().all(|(_, t)| t.grad().is_none()),
        "swap isolation violated: network B received gradient from loss A"
    );
    adam_step(&mut state.params_a, &mut state.adam_a, eta_t)?;

    loss_b.total.backward()?;
    debug_assert!(
        state.params_a.tensors().iter().all(|(_, t)| t.grad().is_none()),
        "swap isolation violated: network A received gradient from loss B"
    );
    adam_step(&mut state.params_b, &mut state.adam_b, eta_t)?;

    Ok(IterOutcome::Stepped(va, vb))
}

fn add_breakdowns(a: &LossBreakdown<f32>, b: &LossBreakdown<f32>) -> Result<LossBreakdown<f32>> {
    Ok(LossBreakdown {
        ph: a.ph.add(&b.ph)?,
        sm: a.sm.add(&b.sm)?,
        da: a.da.add(&b.da)?,
        total: a.total.add(&b.total)?,
    })
}

/// Batch mean of each term; the total is rebuilt from the averaged parts so
/// the breakdown identity holds exactly on the logged values.
fn scale_breakdown(b: &LossBreakdown<f32>, scale: f32, config: &CoTeachConfig) -> Result<LossBreakdown<f32>> {
    let ph = b.ph.mul_scalar(scale);
    let sm = b.sm.mul_scalar(scale);
    let da = b.da.mul_scalar(scale);
    let total = ph
        .add(&sm.mul_scalar(config.weights.lambda1))?
        .add(&da.mul_scalar(config.weights.lambda2))?;
    Ok(LossBreakdown { ph, sm, da, total })
}

/// One CSV row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub iter: usize,
    pub net: char,
    pub ph: f64,
    pub sm: f64,
    pub da: f64,
    pub total: f64,
    pub r: f64,
}

pub const LOG_CSV_HEADER: &str = "epoch,iter,net,ph,sm,da,total,r";

impl LossRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.8},{:.8},{:.8},{:.8},{:.6}",
            self.epoch, self.iter, self.net, self.ph, self.sm, self.da, self.total, self.r
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Write checkpoints, the CSV loss log and the config snapshot here.
    pub out_dir: Option<PathBuf>,
    /// Resume from a train-state checkpoint.
    pub resume: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub state: TrainState,
    pub rows: Vec<LossRow>,
    pub skipped_iterations: usize,
    pub checkpoint_paths: Vec<PathBuf>,
}

/// Run the full co-teaching schedule over the dataset.
///
/// Epochs shuffle deterministically from `data_seed`; the threshold R
/// updates after each epoch; a checkpoint is written per epoch when an
/// output directory is given. Single-threaded and bitwise reproducible for
/// a fixed config.
pub fn train(dataset: &[StereoSample], config: &CoTeachConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    let mut state = match &opts.resume {
        Some(path) => crate::checkpoint::load_train_state(path)?,
        None => TrainState::init(config)?,
    };
    let n_max = if config.n_max == 0 {
        dataset.len().div_ceil(config.batch)
    } else {
        config.n_max
    };

    let mut log_file = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("train_log.csv");
            let fresh = !path.exists() || opts.resume.is_none();
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(path)?;
            if fresh {
                writeln!(f, "{LOG_CSV_HEADER}")?;
            }
            Some(f)
        }
        None => None,
    };

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    let mut checkpoint_paths = Vec::new();
    let start_epoch = state.epoch;
    for t in start_epoch + 1..=config.t_max {
        let order = shuffle_indices(dataset.len(), config.data_seed, t);
        let eta_t = config.eta * config.decay.powi(t as i32 - 1);
        let mut aug_rng = ChaCha8Rng::seed_from_u64(config.data_seed ^ 0xa5a5_5a5a_dead_beef);
        aug_rng.set_stream(t as u64);
        for iter in 0..n_max {
            let batch: Vec<&StereoSample> = (0..config.batch)
                .map(|k| &dataset[order[(iter * config.batch + k) % dataset.len()]])
                .collect();
            match train_iteration(&mut state, &batch, config, &mut aug_rng, eta_t)? {
                IterOutcome::Stepped(va, vb) => {
                    for (net, v) in [('a', va), ('b', vb)] {
                        let row = LossRow {
                            epoch: t,
                            iter,
                            net,
                            ph: v.ph,
                            sm: v.sm,
                            da: v.da,
                            total: v.total,
                            r: state.r,
                        };
                        if let Some(f) = &mut log_file {
                            writeln!(f, "{}", row.to_csv())?;
                        }
                        rows.push(row);
                    }
                }
                IterOutcome::SkippedNonFinite => skipped += 1,
            }
        }
        state.epoch = t;
        state.r = schedule_r(t, config.tau, config.t_k);
        if let Some(dir) = &opts.out_dir {
            let path = dir.join(format!("ckpt_epoch_{t:03}.bin"));
            crate::checkpoint::save_train_state(&path, &state)?;
            std::fs::copy(&path, dir.join("ckpt_latest.bin"))?;
            checkpoint_paths.push(path);
        }
        if let Some(f) = &mut log_file {
            f.flush()?;
        }
    }
    Ok(TrainOutcome { state, rows, skipped_iterations: skipped, checkpoint_paths })
}

/// Aggregate metrics of one network over a dataset, pixel-weighted across
/// samples. Samples missing ground-truth occlusion count as occlusion-free
/// for the Noc split.
pub fn evaluate(params: &NetworkParams<f32>, samples: &[StereoSample]) -> Result<EvalReport> {
    let detached = params.detached();
    let mut abs_all = 0.0f64;
    let mut abs_noc = 0.0f64;
    let mut bad_all = 0usize;
    let mut bad_noc = 0usize;
    let mut n_all = 0usize;
    let mut n_noc = 0usize;
    for sample in samples {
        let gt = sample
            .gt_disparity
            .as_ref()
            .ok_or_else(|| Error::MissingGroundTruth(sample.id.clone()))?;
        let occ = sample
            .gt_occlusion
            .clone()
            .unwrap_or_else(|| Mask::filled(gt.h, gt.w, false));
        let i_left = sample.left.to_tensor::<f32>();
        let i_right = sample.right.to_tensor::<f32>();
        let pred = net::forward(&detached, &i_left, &i_right)?;
        for (i, (&p, &g)) in pred.values().iter().zip(&gt.data).enumerate() {
            let err = (p as f64 - g as f64).abs();
            abs_all += err;
            n_all += 1;
            let bad = err > BAD_PIXEL_TOLERANCE;
            if bad {
                bad_all += 1;
            }
            if !occ.data[i] {
                abs_noc += err;
                n_noc += 1;
                if bad {
                    bad_noc += 1;
                }
            }
        }
    }
    if n_all == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(EvalReport {
        aepe_all: abs_all / n_all as f64,
        aepe_noc: if n_noc > 0 { abs_noc / n_noc as f64 } else { f64::NAN },
        f1_all: 100.0 * bad_all as f64 / n_all as f64,
        f1_noc: if n_noc > 0 { 100.0 * bad_noc as f64 / n_noc as f64 } else { f64::NAN },
        valid_pixel_count: n_all,
    })
}
