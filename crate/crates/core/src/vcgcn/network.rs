use nalgebra::{DMatrix, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::VcGcnGraphs;
use super::tape::{Tape, Var};
use super::Activation;
use crate::error::{Error, Result};
use crate::implicit::FeatureMap;
use crate::multiview::{InitialLandmarks, LandmarkSet2D, LandmarkSet3D, ViewId};

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VcGcnConfig {
    /// Image feature channels `C` per landmark (the input adds 3 position channels).
    pub channels: usize,
    pub hidden: usize,
    /// Attention projection width `C₁`.
    pub query: usize,
    pub blocks: usize,
    /// GCN layers per stack.
    pub layers: usize,
    pub activation: Activation,
}

impl Default for VcGcnConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            hidden: 64,
            query: 32,
            blocks: 3,
            layers: 2,
            activation: Activation::LeakyRelu,
        }
    }
}

impl VcGcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.hidden == 0 || self.query == 0 || self.layers == 0 {
            return Err(Error::InvalidArgument(format!("network widths and depth must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.channels + 3
    }
}

/// Global-to-local attention parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct G2lParams {
    /// `hidden × query` projection of view features.
    pub local: DMatrix<f64>,
    /// `hidden × query` projection of global features.
    pub global: DMatrix<f64>,
    /// `hidden × hidden` value map applied to global features.
    pub value: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    /// Per-view GCN stacks, front/left/right.
    pub local: [Vec<DMatrix<f64>>; 3],
    pub global: Vec<DMatrix<f64>>,
    pub g2l: G2lParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcGcnParams {
    pub config: VcGcnConfig,
    pub blocks: Vec<BlockParams>,
    /// Global stack after the last block.
    pub global: Vec<DMatrix<f64>>,
    /// `hidden × 3` displacement head.
    pub head: DMatrix<f64>,
}

impl VcGcnParams {
    pub fn zeros(config: VcGcnConfig) -> Result<Self> {
        config.validate()?;
        let (h, q) = (config.hidden, config.query);
        let stack = |c_in: usize| -> Vec<DMatrix<f64>> {
            (0..config.layers)
                .map(|l| DMatrix::zeros(if l == 0 { c_in } else { h }, h))
                .collect()
        };
        let blocks = (0..config.blocks)
            .map(|b| {
                let c_in = if b == 0 { config.input_channels() } else { h };
                BlockParams {
                    local: std::array::from_fn(|_| stack(c_in)),
                    global: stack(h),
                    g2l: G2lParams {
                        local: DMatrix::zeros(h, q),
                        global: DMatrix::zeros(h, q),
                        value: DMatrix::zeros(h, h),
                    },
                }
            })
            .collect();
        let final_in = if config.blocks == 0 { config.input_channels() } else { h };
        Ok(Self {
            config,
            blocks,
            global: stack(final_in),
            head: DMatrix::zeros(h, 3),
        })
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights with a zero head, so the
    /// untrained network returns its initial landmarks.
    pub fn random(config: VcGcnConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = params.tensor_count();
        for w in params.tensors_mut().into_iter().take(count - 1) {
            glorot(w, &mut rng);
        }
        Ok(params)
    }

    /// Fills the head with the same uniform scheme (used for gradient checks).
    pub fn randomize_head(&mut self, seed: u64) {
        glorot(&mut self.head, &mut ChaCha8Rng::seed_from_u64(seed));
    }

    /// Tensors in declaration order: per block the front, left and right
    /// stacks, the global stack, then the local, global and value projections;
    /// after the blocks, the final global stack and the head.
    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for stack in &b.local {
                out.extend(stack.iter());
            }
            out.extend(b.global.iter());
            out.extend([&b.g2l.local, &b.g2l.global, &b.g2l.value]);
        }
        out.extend(self.global.iter());
        out.push(&self.head);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            for stack in &mut b.local {
                out.extend(stack.iter_mut());
            }
            out.extend(b.global.iter_mut());
            out.extend([&mut b.g2l.local, &mut b.g2l.global, &mut b.g2l.value]);
        }
        out.extend(self.global.iter_mut());
        out.push(&mut self.head);
        out
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

fn glorot(w: &mut DMatrix<f64>, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
    w.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
}

/// Per-view initial node features (`k^v × (C + 3)`) and the initial global landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct VcGcnInput {
    pub features: [DMatrix<f64>; 3],
    pub initial: LandmarkSet3D,
}

impl VcGcnInput {
    /// Image features sampled at each view's 2D landmarks, concatenated with the
    /// landmarks lifted in that view.
    pub fn from_views(maps: &[FeatureMap; 3], detections: &[LandmarkSet2D; 3], init: &InitialLandmarks) -> Result<Self> {
        let channels = maps[0].channels;
        let features = ViewId::ALL
            .map(|view| {
                let v = view.index();
                let (map, det, lifted) = (&maps[v], &detections[v], &init.per_view[v]);
                if det.view != view {
                    return Err(Error::InvalidArgument(format!("detections for {} given in the {view} slot", det.view)));
                }
                if map.channels != channels {
                    return Err(Error::DimensionMismatch {
                        expected: channels,
                        actual: map.channels,
                        context: "feature channels per view",
                    });
                }
                if lifted.len() != det.points.len() {
                    return Err(Error::DimensionMismatch {
                        expected: det.points.len(),
                        actual: lifted.len(),
                        context: "lifted landmarks per view",
                    });
                }
                let mut f = DMatrix::zeros(det.points.len(), channels + 3);
                let mut buf = vec![0.0; channels];
                for (r, (p, l)) in det.points.iter().zip(lifted).enumerate() {
                    map.sample(p.x, p.y, &mut buf);
                    for c in 0..channels {
                        f[(r, c)] = buf[c];
                    }
                    for a in 0..3 {
                        f[(r, channels + a)] = l[a];
                    }
                }
                Ok(f)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features: features.try_into().expect("three views"),
            initial: init.global.clone(),
        })
    }

    pub fn validate(&self, graphs: &VcGcnGraphs, config: &VcGcnConfig) -> Result<()> {
        for view in ViewId::ALL {
            let f = &self.features[view.index()];
            let rows = graphs.views[view.index()].node_count();
            if f.nrows() != rows {
                return Err(Error::DimensionMismatch { expected: rows, actual: f.nrows(), context: "view feature rows" });
            }
            if f.ncols() != config.input_channels() {
                return Err(Error::DimensionMismatch {
                    expected: config.input_channels(),
                    actual: f.ncols(),
                    context: "input feature channels (C + 3)",
                });
            }
        }
        if self.initial.len() != graphs.global.node_count() {
            return Err(Error::DimensionMismatch {
                expected: graphs.global.node_count(),
                actual: self.initial.len(),
                context: "initial landmarks",
            });
        }
        Ok(())
    }
}

fn check_chain(f: &DMatrix<f64>, a_hat: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<()> {
    if a_hat.ncols() != f.nrows() {
        return Err(Error::DimensionMismatch { expected: a_hat.ncols(), actual: f.nrows(), context: "graph nodes vs feature rows" });
    }
    if w.nrows() != f.ncols() {
        return Err(Error::DimensionMismatch { expected: w.nrows(), actual: f.ncols(), context: "weight rows vs feature channels" });
    }
    Ok(())
}

/// `σ(Â F W)`.
pub fn gcn_layer(f: &DMatrix<f64>, a_hat: &DMatrix<f64>, w: &DMatrix<f64>, activation: Activation) -> Result<DMatrix<f64>> {
    check_chain(f, a_hat, w)?;
    Ok((a_hat * f * w).map(|x| activation.apply(x)))
}

fn gcn_stack(f: &DMatrix<f64>, a_hat: &DMatrix<f64>, weights: &[DMatrix<f64>], activation: Activation) -> Result<DMatrix<f64>> {
    weights.iter().try_fold(f.clone(), |x, w| gcn_layer(&x, a_hat, w, activation))
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2lOutput {
    pub features: DMatrix<f64>,
    /// `k^v × 44`, rows summing to one.
    pub attention: DMatrix<f64>,
}

/// Attention from view nodes (queries) to global nodes (keys), carrying
/// value-projected global features, plus the view features as a residual.
pub fn g2l_fuse(
    global: &DMatrix<f64>,
    view: &DMatrix<f64>,
    global_a_hat: &DMatrix<f64>,
    view_a_hat: &DMatrix<f64>,
    params: &G2lParams,
) -> Result<G2lOutput> {
    let q = gcn_layer(view, view_a_hat, &params.local, Activation::Identity)?;
    let k = gcn_layer(global, global_a_hat, &params.global, Activation::Identity)?;
    if params.value.nrows() != global.ncols() || params.value.ncols() != view.ncols() {
        return Err(Error::DimensionMismatch {
            expected: view.ncols(),
            actual: params.value.ncols(),
            context: "value projection width",
        });
    }
    let attention = super::tape::softmax_rows(&(q * k.transpose()));
    let features = &attention * (global * &params.value) + view;
    Ok(G2lOutput { features, attention })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub views: [DMatrix<f64>; 3],
    pub global: DMatrix<f64>,
}

/// Per-view stacks, view-to-global averaging, the global stack, then G2L fusion per view.
pub fn vcgcn_block(
    views: &[DMatrix<f64>; 3],
    graphs: &VcGcnGraphs,
    params: &BlockParams,
    activation: Activation,
) -> Result<BlockOutput> {
    let local: Vec<DMatrix<f64>> = (0..3)
        .map(|v| gcn_stack(&views[v], graphs.views[v].normalized(), &params.local[v], activation))
        .collect::<Result<_>>()?;
    let combined = (0..3).fold(DMatrix::zeros(graphs.global.node_count(), local[0].ncols()), |acc, v| {
        acc + &graphs.combine[v] * &local[v]
    });
    let global = gcn_stack(&combined, graphs.global.normalized(), &params.global, activation)?;
    let fused: Vec<DMatrix<f64>> = (0..3)
        .map(|v| {
            g2l_fuse(&global, &local[v], graphs.global.normalized(), graphs.views[v].normalized(), &params.g2l)
                .map(|o| o.features)
        })
        .collect::<Result<_>>()?;
    Ok(BlockOutput {
        views: fused.try_into().expect("three views"),
        global,
    })
}

/// Refined landmarks: initial landmarks plus the decoded displacement.
pub fn vcgcn_forward(graphs: &VcGcnGraphs, params: &VcGcnParams, input: &VcGcnInput) -> Result<LandmarkSet3D> {
    input.validate(graphs, &params.config)?;
    let act = params.config.activation;
    let mut views = input.features.clone();
    for block in &params.blocks {
        views = vcgcn_block(&views, graphs, block, act)?.views;
    }
    let combined = (0..3).fold(DMatrix::zeros(graphs.global.node_count(), views[0].ncols()), |acc, v| {
        acc + &graphs.combine[v] * &views[v]
    });
    let global = gcn_stack(&combined, graphs.global.normalized(), &params.global, act)?;
    let disp = gcn_layer(&global, graphs.global.normalized(), &params.head, Activation::Identity)?;
    displaced(&input.initial, &disp)
}

fn displaced(initial: &LandmarkSet3D, disp: &DMatrix<f64>) -> Result<LandmarkSet3D> {
    LandmarkSet3D::new(
        initial
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| Point3::new(p.x + disp[(i, 0)], p.y + disp[(i, 1)], p.z + disp[(i, 2)]))
            .collect(),
    )
}

/// The network recorded on a tape: displacement node plus one leaf per parameter tensor.
pub(crate) struct Recorded {
    pub tape: Tape,
    pub displacement: Var,
    pub params: Vec<Var>,
}

pub(crate) fn record(graphs: &VcGcnGraphs, params: &VcGcnParams, input: &VcGcnInput) -> Result<Recorded> {
    input.validate(graphs, &params.config)?;
    let act = params.config.activation;
    let mut t = Tape::new();
    let param_vars: Vec<Var> = params.tensors().into_iter().map(|w| t.param(w.clone())).collect();
    let mut next = param_vars.iter().copied();
    let mut take = || next.next().expect("tensor order matches the tape");

    let view_a: Vec<Var> = (0..3).map(|v| t.constant(graphs.views[v].normalized().clone())).collect();
    let global_a = t.constant(graphs.global.normalized().clone());
    let combine: Vec<Var> = (0..3).map(|v| t.constant(graphs.combine[v].clone())).collect();

    fn layer(t: &mut Tape, x: Var, a: Var, w: Var, act: Activation) -> Var {
        let ax = t.matmul(a, x);
        let z = t.matmul(ax, w);
        t.act(z, act)
    }
    let combine_views = |t: &mut Tape, views: &[Var]| -> Var {
        let mut acc = t.matmul(combine[0], views[0]);
        for v in 1..3 {
            let term = t.matmul(combine[v], views[v]);
            acc = t.add(acc, term);
        }
        acc
    };

    let mut views: Vec<Var> = input.features.iter().map(|f| t.constant(f.clone())).collect();
    for block in &params.blocks {
        let mut local = Vec::with_capacity(3);
        for v in 0..3 {
            let mut x = views[v];
            for _ in &block.local[v] {
                let w = take();
                x = layer(&mut t, x, view_a[v], w, act);
            }
            local.push(x);
        }
        let mut g = combine_views(&mut t, &local);
        for _ in &block.global {
            let w = take();
            g = layer(&mut t, g, global_a, w, act);
        }
        let (wq, wk, wv) = (take(), take(), take());
        let keys = layer(&mut t, g, global_a, wk, Activation::Identity);
        let values = t.matmul(g, wv);
        views = (0..3)
            .map(|v| {
                let q = layer(&mut t, local[v], view_a[v], wq, Activation::Identity);
                let logits = t.matmul_t(q, keys);
                let att = t.softmax_rows(logits);
                let mixed = t.matmul(att, values);
                t.add(mixed, local[v])
            })
            .collect();
    }
    let mut g = combine_views(&mut t, &views);
    for _ in &params.global {
        let w = take();
        g = layer(&mut t, g, global_a, w, act);
    }
    let head = take();
    let displacement = layer(&mut t, g, global_a, head, Activation::Identity);
    Ok(Recorded {
        tape: t,
        displacement,
        params: param_vars,
    })
}

/// Refined landmarks and the gradient of a loss with respect to every
/// parameter tensor, given the loss gradient `dL/dL̂` (`44 × 3`).
pub fn vcgcn_gradient(
    graphs: &VcGcnGraphs,
    params: &VcGcnParams,
    input: &VcGcnInput,
    loss_grad: impl FnOnce(&LandmarkSet3D) -> Result<DMatrix<f64>>,
) -> Result<(LandmarkSet3D, Vec<DMatrix<f64>>)> {
    let rec = record(graphs, params, input)?;
    let pred = displaced(&input.initial, rec.tape.value(rec.displacement))?;
    let seed = loss_grad(&pred)?;
    let grads = rec.tape.backward(rec.displacement, seed);
    let per_tensor = rec
        .params
        .iter()
        .zip(params.tensors())
        .map(|(&v, w)| Tape::grad(&grads, v).cloned().unwrap_or_else(|| DMatrix::zeros(w.nrows(), w.ncols())))
        .collect();
    Ok((pred, per_tensor))
}
