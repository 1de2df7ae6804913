//! Reverse-mode automatic differentiation over `f64` vectors.
//!
//! A [`Graph`] records every operation applied to its nodes. Dense layers
//! read their weights straight from a borrowed [`ParamStore`], so building a
//! graph never copies parameters; [`Graph::backward`] accumulates gradients
//! for those weights into a [`Gradients`] buffer shaped like the store.

use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `W x + b` with `W` stored row-major as `[out, in]`.
    Affine { w: ParamId, b: ParamId, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Log(Var),
    Square(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Var),
    Huber(Var, f64),
    /// Unit-normalizes consecutive 3-blocks in the first `3 * blocks`
    /// components; a zero block is replaced by a constant fallback.
    NormalizeBlocks { x: Var, blocks: usize },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Gradient buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients(store.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * a - 0.5 * delta * delta
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// A constant input; no gradient flows out of it.
    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Var) -> Var {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let (rows, cols) = (wt.shape[0], wt.shape[1]);
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "affine input width for {}", wt.name);
        let y = (0..rows)
            .map(|o| {
                let row = &wt.data[o * cols..(o + 1) * cols];
                bt.data[o] + row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        self.push(y, Op::Affine { w, b, x })
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len(), "elementwise length mismatch");
        let y = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        self.push(y, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let y = self.nodes[a.0].value.iter().map(|x| f(*x)).collect();
        self.push(y, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let y = parts.iter().flat_map(|p| self.nodes[p.0].value.iter().copied()).collect();
        self.push(y, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let y = self.nodes[a.0].value[start..start + len].to_vec();
        self.push(y, Op::Slice(a, start))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    /// Elementwise Huber penalty of a residual vector.
    pub fn huber(&mut self, r: Var, delta: f64) -> Var {
        self.map(r, |x| huber(x, delta), Op::Huber(r, delta))
    }

    pub fn normalize_blocks(&mut self, x: Var, fallback: &[f64]) -> Var {
        let blocks = fallback.len() / 3;
        let mut y = self.nodes[x.0].value.clone();
        for k in 0..blocks {
            let b = &mut y[3 * k..3 * k + 3];
            let n = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                b.iter_mut().for_each(|v| *v /= n);
            } else {
                b.copy_from_slice(&fallback[3 * k..3 * k + 3]);
            }
        }
        self.push(y, Op::NormalizeBlocks { x, blocks })
    }

    /// Backpropagates from the scalar `loss` and returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut pg = Gradients::zeros_like(self.params);
        self.backward_into(loss, &mut pg);
        pg
    }

    pub fn backward_into(&self, loss: Var, pg: &mut Gradients) {
        let n = self.nodes.len();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); n];
        grads[loss.0] = vec![1.0; self.nodes[loss.0].value.len()];

        fn acc(grads: &mut [Vec<f64>], target: Var, len: usize) -> &mut Vec<f64> {
            let g = &mut grads[target.0];
            if g.is_empty() {
                g.resize(len, 0.0);
            }
            g
        }

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let gy = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            let len_of = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::Affine { w, b, x } => {
                    let wt = self.params.get(*w);
                    let cols = wt.shape[1];
                    let xv = &self.nodes[x.0].value;
                    let gx = acc(&mut grads, *x, cols);
                    let (gw_all, gb_all) = pg.pair_mut(*w, *b);
                    for (o, &g) in gy.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        gb_all[o] += g;
                        let row = &wt.data[o * cols..(o + 1) * cols];
                        let grow = &mut gw_all[o * cols..(o + 1) * cols];
                        for k in 0..cols {
                            grow[k] += g * xv[k];
                            gx[k] += g * row[k];
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (t, sign) in [(*a, 1.0), (*b, 1.0)] {
                        let g = acc(&mut grads, t, gy.len());
                        g.iter_mut().zip(&gy).for_each(|(x, y)| *x += sign * y);
                    }
                }
                Op::Sub(a, b) => {
                    for (t, sign) in [(*a, 1.0), (*b, -1.0)] {
                        let g = acc(&mut grads, t, gy.len());
                        g.iter_mut().zip(&gy).for_each(|(x, y)| *x += sign * y);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = gy.iter().zip(vb).map(|(g, y)| g * y).collect();
                    let gb: Vec<f64> = gy.iter().zip(va).map(|(g, x)| g * x).collect();
                    add_into(acc(&mut grads, *a, ga.len()), &ga);
                    add_into(acc(&mut grads, *b, gb.len()), &gb);
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = gy.iter().zip(vb).map(|(g, y)| g / y).collect();
                    let gb: Vec<f64> = gy
                        .iter()
                        .zip(va.iter().zip(vb))
                        .map(|(g, (x, y))| -g * x / (y * y))
                        .collect();
                    add_into(acc(&mut grads, *a, ga.len()), &ga);
                    add_into(acc(&mut grads, *b, gb.len()), &gb);
                }
                Op::Scale(a, k) => {
                    let g = acc(&mut grads, *a, gy.len());
                    g.iter_mut().zip(&gy).for_each(|(x, y)| *x += k * y);
                }
                Op::AddScalar(a) => add_into(acc(&mut grads, *a, gy.len()), &gy),
                Op::OneMinus(a) => {
                    let g = acc(&mut grads, *a, gy.len());
                    g.iter_mut().zip(&gy).for_each(|(x, y)| *x -= y);
                }
                Op::Tanh(a) => {
                    let local: Vec<f64> = node.value.iter().zip(&gy).map(|(t, g)| g * (1.0 - t * t)).collect();
                    add_into(acc(&mut grads, *a, local.len()), &local);
                }
                Op::Sigmoid(a) => {
                    let local: Vec<f64> = node.value.iter().zip(&gy).map(|(s, g)| g * s * (1.0 - s)).collect();
                    add_into(acc(&mut grads, *a, local.len()), &local);
                }
                Op::Softplus(a) => {
                    let xa = &self.nodes[a.0].value;
                    let local: Vec<f64> = xa.iter().zip(&gy).map(|(x, g)| g * sigmoid(*x)).collect();
                    add_into(acc(&mut grads, *a, local.len()), &local);
                }
                Op::Log(a) => {
                    let xa = &self.nodes[a.0].value;
                    let local: Vec<f64> = xa.iter().zip(&gy).map(|(x, g)| g / x).collect();
                    add_into(acc(&mut grads, *a, local.len()), &local);
                }
                Op::Square(a) => {
                    let xa = &self.nodes[a.0].value;
                    let local: Vec<f64> = xa.iter().zip(&gy).map(|(x, g)| 2.0 * x * g).collect();
                    add_into(acc(&mut grads, *a, local.len()), &local);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let l = len_of(*p);
                        add_into(acc(&mut grads, *p, l), &gy[off..off + l]);
                        off += l;
                    }
                }
                Op::Slice(a, start) => {
                    let l = len_of(*a);
                    let g = acc(&mut grads, *a, l);
                    for (k, v) in gy.iter().enumerate() {
                        g[start + k] += v;
                    }
                }
                Op::Sum(a) => {
                    let l = len_of(*a);
                    let g = acc(&mut grads, *a, l);
                    g.iter_mut().for_each(|x| *x += gy[0]);
                }
                Op::Huber(a, delta) => {
                    let xa = &self.nodes[a.0].value;
                    let local: Vec<f64> = xa
                        .iter()
                        .zip(&gy)
                        .map(|(r, g)| if r.abs() <= *delta { g * r } else { g * delta * r.signum() })
                        .collect();
                    add_into(acc(&mut grads, *a, local.len()), &local);
                }
                Op::NormalizeBlocks { x, blocks } => {
                    let xa = &self.nodes[x.0].value;
                    let mut local = gy.clone();
                    for k in 0..*blocks {
                        let r = 3 * k..3 * k + 3;
                        let n = xa[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n > 0.0 {
                            let u = &node.value[r.clone()];
                            let gu: f64 = u.iter().zip(&gy[r.clone()]).map(|(a, b)| a * b).sum();
                            for (j, idx) in r.enumerate() {
                                local[idx] = (gy[idx] - u[j] * gu) / n;
                            }
                        } else {
                            local[r].iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                    add_into(acc(&mut grads, *x, local.len()), &local);
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

impl Gradients {
    fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Vec<f64>, &mut Vec<f64>) {
        let (i, j) = (a.index(), b.index());
        assert_ne!(i, j);
        if i < j {
            let (lo, hi) = self.0.split_at_mut(j);
            (&mut lo[i], &mut hi[0])
        } else {
            let (lo, hi) = self.0.split_at_mut(i);
            (&mut hi[0], &mut lo[j])
        }
    }
}
