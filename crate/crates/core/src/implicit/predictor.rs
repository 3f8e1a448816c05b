use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{pixel_aligned_feature, FeatureVolumeInput};
use super::sampling::LabeledPoint;
use crate::error::{Error, Result};

/// Fully connected network: `tanh` hidden layers and a logistic output unit.
///
/// Parameters are stored flat, layer by layer: the weight matrix (row-major,
/// `out × in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyPredictor {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl OccupancyPredictor {
    /// `sizes` lists every layer width, input first; the last must be 1.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || sizes[sizes.len() - 1] != 1 {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {sizes:?} must be positive with a single output"
            )));
        }
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
        })
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn random(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for p in &mut net.params[offset..offset + w[0] * w[1]] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    /// Input width `C + 1` and hidden widths.
    pub fn with_hidden(channels: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![channels + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::random(&sizes, seed)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub(crate) fn check_input_width(&self, width: usize) -> Result<()> {
        if width != self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.input_width(),
                actual: width,
                context: "predictor input (feature channels + depth)",
            });
        }
        Ok(())
    }

    /// Output for an input vector.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input_width(input.len())?;
        Ok(self.run(input, None))
    }

    /// Output and its gradient with respect to every parameter.
    pub fn forward_with_gradient(&self, input: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input_width(input.len())?;
        let mut grad = vec![0.0; self.params.len()];
        let out = self.run(input, Some(&mut grad));
        Ok((out, grad))
    }

    fn run(&self, input: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let layers = self.sizes.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            offsets.push(offset);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let prev = &activations[l];
            let last = l + 1 == layers;
            let next: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = b[o] + (0..n_in).map(|i| w[o * n_in + i] * prev[i]).sum::<f64>();
                    if last {
                        logistic(z)
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            activations.push(next);
            offset += n_in * n_out + n_out;
        }
        let out = activations[layers][0];
        let Some(grad) = grad else { return out };

        // delta holds d(out)/d(pre-activation) of the current layer
        let mut delta = vec![out * (1.0 - out)];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let prev = &activations[l];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[off + o * n_in + i] = delta[o] * prev[i];
                }
                grad[off + n_in * n_out + o] = delta[o];
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                        back * (1.0 - prev[i] * prev[i])
                    })
                    .collect();
            }
        }
        out
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn network_input(input: &FeatureVolumeInput, x: &Point3<f64>) -> Vec<f64> {
    let (mut feature, depth) = pixel_aligned_feature(input, x);
    feature.push(depth);
    feature
}

/// Occupancy predicted from the pixel-aligned feature of `x` and its depth.
pub fn predict_occupancy(predictor: &OccupancyPredictor, input: &FeatureVolumeInput, x: &Point3<f64>) -> Result<f64> {
    predictor.check_input_width(input.map.channels + 1)?;
    predictor.forward(&network_input(input, x))
}

/// Mean squared error between predictions and labels.
pub fn occupancy_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
            context: "predictions per label",
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("occupancy loss over zero samples".into()));
    }
    let sum: f64 = predictions.iter().zip(labels).map(|(p, l)| (p - l) * (p - l)).sum();
    Ok(sum / labels.len() as f64)
}

/// RMSProp settings for [`train_occupancy`].
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Decay of the squared-gradient running average.
    pub rho: f64,
    pub epsilon: f64,
    /// Mini-batch size; `None` uses the whole set every step.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for OccupancyTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedOccupancy {
    pub predictor: OccupancyPredictor,
    /// Full-set loss after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Fits the predictor to labelled samples with RMSProp.
pub fn train_occupancy(
    predictor: &OccupancyPredictor,
    input: &FeatureVolumeInput,
    samples: &[LabeledPoint],
    config: &OccupancyTrainConfig,
) -> Result<TrainedOccupancy> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    predictor.check_input_width(input.map.channels + 1)?;
    // features do not depend on the weights, so sample them once
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| network_input(input, &s.point)).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.occupancy).collect();

    let mut net = predictor.clone();
    let mut mean_square = vec![0.0; net.params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = config.batch_size.unwrap_or(samples.len()).clamp(1, samples.len());
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if batch < samples.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let mut grad = vec![0.0; net.params.len()];
            for &i in chunk {
                let (out, g) = net.forward_with_gradient(&inputs[i])?;
                let scale = 2.0 * (out - labels[i]) / chunk.len() as f64;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += scale * gi;
                }
            }
            for ((p, ms), g) in net.params.iter_mut().zip(&mut mean_square).zip(&grad) {
                *ms = config.rho * *ms + (1.0 - config.rho) * g * g;
                *p -= config.learning_rate * g / (ms.sqrt() + config.epsilon);
            }
        }
        let predictions: Vec<f64> = inputs.iter().map(|x| net.run(x, None)).collect();
        let loss = occupancy_loss(&predictions, &labels)?;
        if !loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        trace.push(loss);
    }
    Ok(TrainedOccupancy {
        predictor: net,
        loss_trace: trace,
    })
}
