use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::graph::VcGcnGraphs;
use super::loss::{loss_with_gradient, LossBreakdown, LossWeights};
use super::network::{vcgcn_forward, vcgcn_gradient, VcGcnInput, VcGcnParams};
use crate::error::{Error, Result};
use crate::metrics::mpjpe;
use crate::multiview::{LandmarkSet2D, LandmarkSet3D, Rig};

/// One training head: network input, 2D detections and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: VcGcnInput,
    pub detected: [LandmarkSet2D; 3],
    pub truth_2d: [LandmarkSet2D; 3],
    pub truth: LandmarkSet3D,
    pub rig: Rig,
}

/// Adam with cosine learning-rate decay over full-batch epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcGcnTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Anneal the rate to zero along half a cosine period.
    pub cosine_decay: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
}

impl Default for VcGcnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-4,
            cosine_decay: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over training samples.
    pub loss: LossBreakdown,
    pub train_mpjpe: f64,
    pub holdout_mpjpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedVcGcn {
    pub params: VcGcnParams,
    /// Entry `e < epochs` describes the parameters before update `e`; the last
    /// entry describes the returned parameters.
    pub trace: Vec<EpochRecord>,
}

/// Mean loss and mean root-aligned landmark error over `samples`.
pub fn evaluate_vcgcn(
    graphs: &VcGcnGraphs,
    params: &VcGcnParams,
    samples: &[TrainingSample],
    weights: &LossWeights,
) -> Result<(LossBreakdown, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let per: Vec<(LossBreakdown, f64)> = samples
        .par_iter()
        .map(|s| {
            let pred = vcgcn_forward(graphs, params, &s.input)?;
            let (loss, _) = loss_with_gradient(&s.detected, &s.truth_2d, &pred, &s.truth, &s.rig, &graphs.scheme, weights)?;
            Ok((loss, mpjpe(&pred, &s.truth, graphs.scheme.root())?))
        })
        .collect::<Result<_>>()?;
    Ok(mean(&per))
}

fn mean(per: &[(LossBreakdown, f64)]) -> (LossBreakdown, f64) {
    let k = 1.0 / per.len() as f64;
    let mut loss = LossBreakdown::default();
    let mut err = 0.0;
    for (l, e) in per {
        loss.add_scaled(l, k);
        err += e * k;
    }
    (loss, err)
}

pub fn train_vcgcn(
    graphs: &VcGcnGraphs,
    params: &VcGcnParams,
    train: &[TrainingSample],
    holdout: &[TrainingSample],
    config: &VcGcnTrainConfig,
) -> Result<TrainedVcGcn> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    config.weights.validate()?;
    let mut params = params.clone();
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|t| t.shape()).collect();
    let mut m: Vec<DMatrix<f64>> = shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
    let mut v = m.clone();
    let mut trace = Vec::with_capacity(config.epochs + 1);
    let holdout_error = |p: &VcGcnParams| -> Result<Option<f64>> {
        if holdout.is_empty() {
            return Ok(None);
        }
        Ok(Some(evaluate_vcgcn(graphs, p, holdout, &config.weights)?.1))
    };

    for epoch in 0..config.epochs {
        let per: Vec<(LossBreakdown, f64, Vec<DMatrix<f64>>)> = train
            .par_iter()
            .map(|s| {
                let mut loss = LossBreakdown::default();
                let (pred, grads) = vcgcn_gradient(graphs, &params, &s.input, |pred| {
                    let (l, g) =
                        loss_with_gradient(&s.detected, &s.truth_2d, pred, &s.truth, &s.rig, &graphs.scheme, &config.weights)?;
                    loss = l;
                    Ok(g)
                })?;
                Ok((loss, mpjpe(&pred, &s.truth, graphs.scheme.root())?, grads))
            })
            .collect::<Result<_>>()?;
        let k = 1.0 / train.len() as f64;
        let mut grad: Vec<DMatrix<f64>> = shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
        for (_, _, g) in &per {
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += gi * k;
            }
        }
        let (loss, train_mpjpe) = mean(&per.iter().map(|(l, e, _)| (*l, *e)).collect::<Vec<_>>());
        if !loss.total.is_finite() {
            return Err(Error::Diverged { epoch, loss: loss.total });
        }
        trace.push(EpochRecord { epoch, loss, train_mpjpe, holdout_mpjpe: holdout_error(&params)? });

        let lr = if config.cosine_decay {
            config.learning_rate * 0.5 * (1.0 + (PI * epoch as f64 / config.epochs as f64).cos())
        } else {
            config.learning_rate
        };
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - config.beta1.powi(t), 1.0 - config.beta2.powi(t));
        for (((w, g), m), v) in params.tensors_mut().into_iter().zip(&grad).zip(&mut m).zip(&mut v) {
            for i in 0..w.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + config.epsilon);
            }
        }
    }
    let (loss, train_mpjpe) = evaluate_vcgcn(graphs, &params, train, &config.weights)?;
    if !loss.total.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs, loss: loss.total });
    }
    trace.push(EpochRecord { epoch: config.epochs, loss, train_mpjpe, holdout_mpjpe: holdout_error(&params)? });
    Ok(TrainedVcGcn { params, trace })
}
