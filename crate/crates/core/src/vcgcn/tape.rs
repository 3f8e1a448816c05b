//! Reverse-mode differentiation over dense matrices.

use nalgebra::DMatrix;

use super::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Act(Var, Activation),
    SoftmaxRows(Var),
}

#[derive(Debug)]
struct Node {
    value: DMatrix<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub(crate) struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), g)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b).transpose();
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulT(a, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), g)
    }

    pub fn act(&mut self, a: Var, f: Activation) -> Var {
        if f == Activation::Identity {
            return a;
        }
        let value = self.value(a).map(|x| f.apply(x));
        let g = self.needs(a);
        self.push(value, Op::Act(a, f), g)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let g = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), g)
    }

    /// Gradients of `⟨seed, out⟩` with respect to every node that needs one.
    pub fn backward(&self, out: Var, seed: DMatrix<f64>) -> Vec<Option<DMatrix<f64>>> {
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.needs(a) {
                        accumulate(&mut grads, a, &g * self.value(b).transpose());
                    }
                    if self.needs(b) {
                        accumulate(&mut grads, b, self.value(a).transpose() * &g);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.needs(a) {
                        accumulate(&mut grads, a, &g * self.value(b));
                    }
                    if self.needs(b) {
                        accumulate(&mut grads, b, g.transpose() * self.value(a));
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if self.needs(b) {
                        accumulate(&mut grads, b, g.clone());
                    }
                }
                Op::Act(a, f) => {
                    let x = self.value(a);
                    let d = g.zip_zip_map(x, &node.value, |gi, xi, yi| gi * f.derivative(xi, yi));
                    accumulate(&mut grads, a, d);
                }
                Op::SoftmaxRows(a) => {
                    let s = &node.value;
                    let mut d = g.component_mul(s);
                    for r in 0..s.nrows() {
                        let dot: f64 = (0..s.ncols()).map(|c| g[(r, c)] * s[(r, c)]).sum();
                        for c in 0..s.ncols() {
                            d[(r, c)] -= s[(r, c)] * dot;
                        }
                    }
                    accumulate(&mut grads, a, d);
                }
            }
            // leaves keep their gradient for the caller
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        grads
    }

    pub fn grad(grads: &[Option<DMatrix<f64>>], v: Var) -> Option<&DMatrix<f64>> {
        grads[v.0].as_ref()
    }
}

fn accumulate(grads: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += g,
        slot => *slot = Some(g),
    }
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Scalar `Σ seed ∘ softmax(tanh(A B) Cᵀ) + A` style expression, checked by central differences.
    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a0 = random(4, 3, &mut rng);
        let b0 = random(3, 5, &mut rng);
        let c0 = random(6, 5, &mut rng);
        let seed = random(4, 6, &mut rng);
        let eval = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>| {
            let mut t = Tape::new();
            let (va, vb, vc) = (t.param(a.clone()), t.param(b.clone()), t.param(c.clone()));
            let ab = t.matmul(va, vb);
            let h = t.act(ab, Activation::Tanh);
            let logits = t.matmul_t(h, vc);
            let s = t.softmax_rows(logits);
            let k = t.constant(DMatrix::from_element(4, 6, 0.3));
            let out = t.add(s, k);
            (t, [va, vb, vc], out)
        };
        let (tape, vars, out) = eval(&a0, &b0, &c0);
        let grads = tape.backward(out, seed.clone());
        let objective = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>| {
            let (t, _, o) = eval(a, b, c);
            t.value(o).component_mul(&seed).sum()
        };
        let h = 1e-6;
        let mats = [a0.clone(), b0.clone(), c0.clone()];
        for (m, var) in vars.iter().enumerate() {
            let g = Tape::grad(&grads, *var).unwrap();
            for idx in 0..mats[m].len() {
                let mut plus = mats.clone();
                let mut minus = mats.clone();
                plus[m][idx] += h;
                minus[m][idx] -= h;
                let num = (objective(&plus[0], &plus[1], &plus[2]) - objective(&minus[0], &minus[1], &minus[2])) / (2.0 * h);
                assert!((num - g[idx]).abs() < 1e-7, "tensor {m} entry {idx}: {num} vs {}", g[idx]);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random(5, 44, &mut rng) * 50.0;
        let s = softmax_rows(&m);
        for r in 0..5 {
            assert!((s.row(r).sum() - 1.0).abs() < 1e-12);
        }
        let z = softmax_rows(&DMatrix::zeros(2, 4));
        assert!(z.iter().all(|&x| x == 0.25));
    }
}
