//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! The graph records every operation in execution order; `backward` walks the
//! tape once in reverse and accumulates adjoints. Only the operations the
//! attention model needs are provided.

use std::sync::Arc;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Row groups that attend among themselves.
///
/// With `causal`, a row attends only to rows at or before it within its group.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayout {
    pub groups: Vec<Vec<usize>>,
    pub causal: bool,
}

/// Constants for the goal-frame dynamics step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConstants {
    pub sigma: f64,
    pub goal_epsilon: f64,
    pub dt: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Gelu(Var),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        layout: Arc<AttentionLayout>,
        probs: Vec<f64>,
    },
    /// Guarded natural-gradient step from goal-frame positions, driven by (a, b, c).
    PdStep {
        factors: Var,
        positions: Tensor,
        consts: StepConstants,
    },
    /// Plain Euler step driven by a velocity.
    VelocityStep { velocity: Var, dt: f64 },
    MseLoss {
        pred: Var,
        target: Tensor,
        denom: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let b = self.value(bias);
        debug_assert_eq!(b.rows(), 1);
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            for (o, bb) in value.row_mut(r).iter_mut().zip(b.data()) {
                *o += bb;
            }
        }
        self.push(value, Op::AddRowBias(x, bias))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        value.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        self.push(value, Op::Gelu(x))
    }

    /// Row `i` of the output is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Vec<usize>) -> Var {
        let src = self.value(x);
        let mut value = Tensor::zeros(index.len(), src.cols());
        for (i, &r) in index.iter().enumerate() {
            value.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(value, Op::GatherRows(x, index))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        debug_assert_eq!(ta.rows(), tb.rows());
        let value = Tensor::from_fn(ta.rows(), ta.cols() + tb.cols(), |r, c| {
            if c < ta.cols() {
                ta.get(r, c)
            } else {
                tb.get(r, c - ta.cols())
            }
        });
        self.push(value, Op::ConcatCols(a, b))
    }

    /// Multi-head scaled dot-product attention restricted to row groups.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        layout: Arc<AttentionLayout>,
    ) -> Var {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(tq.rows(), d);
        let mut probs = Vec::new();
        let mut scores = Vec::new();
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for group in &layout.groups {
                for (a, &i) in group.iter().enumerate() {
                    let lim = if layout.causal { a + 1 } else { group.len() };
                    let qi = &tq.row(i)[cols.clone()];
                    scores.clear();
                    scores.extend(group[..lim].iter().map(|&j| {
                        scale * qi.iter().zip(&tk.row(j)[cols.clone()]).map(|(x, y)| x * y).sum::<f64>()
                    }));
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    let out_row = &mut out.row_mut(i)[cols.clone()];
                    for (&j, s) in group[..lim].iter().zip(scores.iter()) {
                        let p = s / z;
                        probs.push(p);
                        for (o, vv) in out_row.iter_mut().zip(&tv.row(j)[cols.clone()]) {
                            *o += p * vv;
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                layout,
                probs,
            },
        )
    }

    /// Next goal-frame positions from per-row factors `(a, b, c)`.
    pub fn pd_step(&mut self, factors: Var, positions: Tensor, consts: StepConstants) -> Var {
        let f = self.value(factors);
        debug_assert_eq!(f.cols(), 3);
        debug_assert_eq!(f.rows(), positions.rows());
        let mut value = Tensor::zeros(positions.rows(), 2);
        for r in 0..positions.rows() {
            let step = PdRowStep::new(f.row(r), positions.row(r), consts);
            value.row_mut(r).copy_from_slice(&step.output());
        }
        self.push(
            value,
            Op::PdStep {
                factors,
                positions,
                consts,
            },
        )
    }

    /// `positions + dt · velocity`.
    pub fn velocity_step(&mut self, velocity: Var, positions: &Tensor, dt: f64) -> Var {
        let vel = self.value(velocity);
        debug_assert_eq!(vel.shape(), positions.shape());
        let value = Tensor::from_fn(positions.rows(), 2, |r, c| positions.get(r, c) + dt * vel.get(r, c));
        self.push(value, Op::VelocityStep { velocity, dt })
    }

    /// `Σ ‖pred − target‖² / denom` as a 1×1 tensor.
    pub fn mse_loss(&mut self, pred: Var, target: Tensor, denom: f64) -> Var {
        let p = self.value(pred);
        debug_assert_eq!(p.shape(), target.shape());
        let sum: f64 = p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = Tensor::from_vec(1, 1, vec![sum / denom]).expect("1x1");
        self.push(value, Op::MseLoss { pred, target, denom })
    }

    /// Adjoints of `output` with respect to every node, seeded with ones.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let (r, c) = self.value(output).shape();
        let mut seed = Tensor::zeros(r, c);
        seed.fill(1.0);
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRowBias(x, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Gelu(x) => {
                    let mut gx = g;
                    for (o, xv) in gx.data_mut().iter_mut().zip(self.value(*x).data()) {
                        *o *= gelu_grad(*xv);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::GatherRows(x, index) => {
                    let src = self.value(*x);
                    let mut gx = Tensor::zeros(src.rows(), src.cols());
                    for (i, &r) in index.iter().enumerate() {
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let ga = Tensor::from_fn(g.rows(), ca, |r, c| g.get(r, c));
                    let gb = Tensor::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    layout,
                    probs,
                } => {
                    let (gq, gk, gv) = self.attention_backward(&g, *q, *k, *v, *heads, layout, probs);
                    accumulate(&mut grads, *q, gq);
                    accumulate(&mut grads, *k, gk);
                    accumulate(&mut grads, *v, gv);
                }
                Op::PdStep {
                    factors,
                    positions,
                    consts,
                } => {
                    let f = self.value(*factors);
                    let mut gf = Tensor::zeros(f.rows(), 3);
                    for r in 0..f.rows() {
                        let step = PdRowStep::new(f.row(r), positions.row(r), *consts);
                        gf.row_mut(r).copy_from_slice(&step.factor_grad([g.get(r, 0), g.get(r, 1)]));
                    }
                    accumulate(&mut grads, *factors, gf);
                }
                Op::VelocityStep { velocity, dt } => {
                    let mut gv = g;
                    gv.scale(*dt);
                    accumulate(&mut grads, *velocity, gv);
                }
                Op::MseLoss { pred, target, denom } => {
                    let upstream = g.get(0, 0);
                    let p = self.value(*pred);
                    let k = 2.0 * upstream / denom;
                    let gp = Tensor::from_fn(p.rows(), p.cols(), |r, c| k * (p.get(r, c) - target.get(r, c)));
                    accumulate(&mut grads, *pred, gp);
                }
            }
        }
        Gradients { grads }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &Tensor,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        layout: &AttentionLayout,
        probs: &[f64],
    ) -> (Tensor, Tensor, Tensor) {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut gq = Tensor::zeros(tq.rows(), d);
        let mut gk = Tensor::zeros(tk.rows(), d);
        let mut gv = Tensor::zeros(tv.rows(), d);
        let mut cursor = 0;
        let mut dp = Vec::new();
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for group in &layout.groups {
                for (a, &i) in group.iter().enumerate() {
                    let lim = if layout.causal { a + 1 } else { group.len() };
                    let p = &probs[cursor..cursor + lim];
                    cursor += lim;
                    let gi = &g.row(i)[cols.clone()];
                    dp.clear();
                    for (&j, &pj) in group[..lim].iter().zip(p) {
                        dp.push(gi.iter().zip(&tv.row(j)[cols.clone()]).map(|(x, y)| x * y).sum::<f64>());
                        for (o, gg) in gv.row_mut(j)[cols.clone()].iter_mut().zip(gi) {
                            *o += pj * gg;
                        }
                    }
                    let mean: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for ((&j, &pj), &dpj) in group[..lim].iter().zip(p).zip(&dp) {
                        let ds = scale * pj * (dpj - mean);
                        if ds == 0.0 {
                            continue;
                        }
                        for c in cols.clone() {
                            gq.data_mut()[i * d + c] += ds * tk.get(j, c);
                            gk.data_mut()[j * d + c] += ds * tq.get(i, c);
                        }
                    }
                }
            }
        }
        (gq, gk, gv)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

/// One row of the guarded natural-gradient step in the goal frame.
///
/// With `u = p/‖p‖` and `w = P u`, the step is `p − s w` where `s` is `dt`
/// capped at the distance-minimising length `(p·w)/(w·w)`.
struct PdRowStep {
    a: f64,
    b: f64,
    c: f64,
    p: [f64; 2],
    u: [f64; 2],
    w: [f64; 2],
    /// Step length and whether the cap is active; `None` inside the goal ball.
    step: Option<(f64, bool)>,
}

impl PdRowStep {
    fn new(f: &[f64], p: &[f64], consts: StepConstants) -> Self {
        let (a, b, c) = (f[0], f[1], f[2]);
        let p = [p[0], p[1]];
        let r = p[0].hypot(p[1]);
        if r <= consts.goal_epsilon {
            return PdRowStep {
                a,
                b,
                c,
                p,
                u: [0.0; 2],
                w: [0.0; 2],
                step: None,
            };
        }
        let u = [p[0] / r, p[1] / r];
        let s = consts.sigma;
        let w = [
            (a * a + s) * u[0] + a * b * u[1],
            a * b * u[0] + (b * b + c * c + s) * u[1],
        ];
        let ww = w[0] * w[0] + w[1] * w[1];
        let limit = (p[0] * w[0] + p[1] * w[1]) / ww;
        let step = if consts.dt <= limit {
            (consts.dt, false)
        } else {
            (limit, true)
        };
        PdRowStep {
            a,
            b,
            c,
            p,
            u,
            w,
            step: Some(step),
        }
    }

    fn output(&self) -> [f64; 2] {
        match self.step {
            None => self.p,
            Some((s, _)) => [self.p[0] - s * self.w[0], self.p[1] - s * self.w[1]],
        }
    }

    fn factor_grad(&self, g: [f64; 2]) -> [f64; 3] {
        let Some((s, capped)) = self.step else {
            return [0.0; 3];
        };
        let (p, w, u) = (self.p, self.w, self.u);
        let mut gw = [-s * g[0], -s * g[1]];
        if capped {
            let ww = w[0] * w[0] + w[1] * w[1];
            let pw = p[0] * w[0] + p[1] * w[1];
            let wg = w[0] * g[0] + w[1] * g[1];
            for i in 0..2 {
                let ds_dw = p[i] / ww - 2.0 * pw * w[i] / (ww * ww);
                gw[i] -= wg * ds_dw;
            }
        }
        let (a, b, c) = (self.a, self.b, self.c);
        [
            gw[0] * (2.0 * a * u[0] + b * u[1]) + gw[1] * (b * u[0]),
            gw[0] * (a * u[1]) + gw[1] * (a * u[0] + 2.0 * b * u[1]),
            gw[1] * (2.0 * c * u[1]),
        ]
    }
}
