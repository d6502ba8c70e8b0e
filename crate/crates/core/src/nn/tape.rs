//! Tape-based reverse-mode differentiation over `f64` vectors.
//!
//! A [`Tape`] records a computation as a flat list of nodes, each holding
//! its forward value and the operation that produced it. [`Tape::backward`]
//! runs one reverse sweep, after which gradients with respect to every
//! parameter leaf can be accumulated into a [`ParamSet`].
//!
//! Shape discipline: every node's value is a plain `Vec<f64>`; matrices
//! appear only inside [`Tape::affine`], which carries its own `(rows, cols)`.
//! Shape mismatches panic at graph-build time with a descriptive message —
//! they are programming errors, not runtime conditions.

use super::params::ParamSet;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Debug)]
enum Op {
    /// Leaf with no gradient flow.
    Const,
    /// Leaf bound to `ParamSet` array `param`.
    Param { param: usize },
    /// `y = W·x + b` with `W` stored row-major in node `w`.
    Affine { w: Var, b: Var, x: Var, rows: usize, cols: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// `y_i = min(a_i, b_i)`, subgradient to the smaller operand (ties → `a`).
    MinPair { a: Var, b: Var },
    Scale { a: Var, c: f64 },
    /// `y_i = a_i + c` (scalar broadcast); the constant itself is not
    /// needed for the backward pass.
    Offset { a: Var },
    Tanh { a: Var },
    Sigmoid { a: Var },
    Exp { a: Var },
    /// Hard clamp; zero gradient outside the open interval `(lo, hi)`.
    Clamp { a: Var, lo: f64, hi: f64 },
    Concat { parts: Vec<Var> },
    /// Scalar sum of all elements.
    Sum { a: Var },
    /// Scalar mean squared error against a constant target.
    Mse { a: Var, target: Vec<f64> },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

/// A recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        let id = self.nodes.len();
        assert!(id < u32::MAX as usize, "tape overflow");
        self.nodes.push(Node { value, op });
        Var(id as u32)
    }

    fn val(&self, v: Var) -> &[f64] {
        &self.nodes[v.0 as usize].value
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &[f64] {
        self.val(v)
    }

    /// Forward value of a length-1 node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        let val = self.val(v);
        assert_eq!(val.len(), 1, "scalar_value on a node of length {}", val.len());
        val[0]
    }

    /// Gradient of the last `backward` target with respect to node `v`.
    pub fn grad(&self, v: Var) -> &[f64] {
        assert!(!self.grads.is_empty(), "grad queried before backward");
        &self.grads[v.0 as usize]
    }

    // ---- leaves ------------------------------------------------------

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        assert!(!value.is_empty(), "empty constant");
        self.push(value, Op::Const)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(vec![value], Op::Const)
    }

    /// Binds array `idx` of `set` as a leaf; its values are copied onto the
    /// tape, so later mutation of `set` does not affect this graph.
    pub fn param(&mut self, set: &ParamSet, idx: usize) -> Var {
        let arr = set.at(idx);
        self.push(arr.values.clone(), Op::Param { param: idx })
    }

    // ---- ops ---------------------------------------------------------

    /// `W·x + b` where `w` holds `rows × cols` row-major, `x` has length
    /// `cols`, and `b` has length `rows`.
    pub fn affine(&mut self, w: Var, b: Var, x: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.val(w).len(), rows * cols, "affine: weight shape mismatch");
        assert_eq!(self.val(b).len(), rows, "affine: bias length mismatch");
        assert_eq!(self.val(x).len(), cols, "affine: input length mismatch");
        let mut y = vec![0.0; rows];
        {
            let wv = self.val(w);
            let xv = self.val(x);
            let bv = self.val(b);
            for r in 0..rows {
                let row = &wv[r * cols..(r + 1) * cols];
                let mut acc = bv[r];
                for (wi, xi) in row.iter().zip(xv) {
                    acc += wi * xi;
                }
                y[r] = acc;
            }
        }
        self.push(y, Op::Affine { w, b, x, rows, cols })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(
            self.val(a).len(),
            self.val(b).len(),
            "elementwise op: operand length mismatch"
        );
        let y: Vec<f64> = self
            .val(a)
            .iter()
            .zip(self.val(b))
            .map(|(&x, &z)| f(x, z))
            .collect();
        self.push(y, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, z| x + z, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, z| x - z, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, z| x * z, Op::Mul { a, b })
    }

    pub fn min_pair(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, f64::min, Op::MinPair { a, b })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y: Vec<f64> = self.val(a).iter().map(|x| x * c).collect();
        self.push(y, Op::Scale { a, c })
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let y: Vec<f64> = self.val(a).iter().map(|x| x + c).collect();
        self.push(y, Op::Offset { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y: Vec<f64> = self.val(a).iter().map(|x| x.tanh()).collect();
        self.push(y, Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y: Vec<f64> = self.val(a).iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        self.push(y, Op::Sigmoid { a })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y: Vec<f64> = self.val(a).iter().map(|x| x.exp()).collect();
        self.push(y, Op::Exp { a })
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo < hi, "clamp: empty interval");
        let y: Vec<f64> = self.val(a).iter().map(|x| x.clamp(lo, hi)).collect();
        self.push(y, Op::Clamp { a, lo, hi })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let mut y = Vec::new();
        for &p in parts {
            y.extend_from_slice(self.val(p));
        }
        self.push(y, Op::Concat { parts: parts.to_vec() })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.val(a).iter().sum();
        self.push(vec![s], Op::Sum { a })
    }

    /// Mean of squared differences against a constant target.
    pub fn mse(&mut self, a: Var, target: &[f64]) -> Var {
        assert_eq!(self.val(a).len(), target.len(), "mse: target length mismatch");
        let n = target.len() as f64;
        let s: f64 = self
            .val(a)
            .iter()
            .zip(target)
            .map(|(&x, &t)| (x - t) * (x - t))
            .sum();
        self.push(vec![s / n], Op::Mse { a, target: target.to_vec() })
    }

    /// Mean of a vector node: `sum / len`.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.val(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    // ---- reverse sweep -------------------------------------------------

    /// Runs reverse-mode accumulation from scalar node `loss`.
    ///
    /// May be called repeatedly with different targets; each call clears
    /// previous gradients.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.val(loss).len(), 1, "backward target must be scalar");
        self.grads.clear();
        self.grads.extend(self.nodes.iter().map(|n| vec![0.0; n.value.len()]));
        self.grads[loss.0 as usize][0] = 1.0;

        for id in (0..=loss.0 as usize).rev() {
            let g = std::mem::take(&mut self.grads[id]);
            if g.iter().all(|&x| x == 0.0) {
                self.grads[id] = g;
                continue;
            }
            match &self.nodes[id].op {
                Op::Const | Op::Param { .. } => {
                    self.grads[id] = g;
                    continue;
                }
                Op::Affine { w, b, x, rows, cols } => {
                    let (w, b, x, rows, cols) = (*w, *b, *x, *rows, *cols);
                    let wv = self.nodes[w.0 as usize].value.clone();
                    let xv = self.nodes[x.0 as usize].value.clone();
                    {
                        let gw = &mut self.grads[w.0 as usize];
                        for r in 0..rows {
                            for c in 0..cols {
                                gw[r * cols + c] += g[r] * xv[c];
                            }
                        }
                    }
                    {
                        let gb = &mut self.grads[b.0 as usize];
                        for r in 0..rows {
                            gb[r] += g[r];
                        }
                    }
                    {
                        let gx = &mut self.grads[x.0 as usize];
                        for c in 0..cols {
                            let mut acc = 0.0;
                            for r in 0..rows {
                                acc += g[r] * wv[r * cols + c];
                            }
                            gx[c] += acc;
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    for (ga, &gi) in self.grads[a.0 as usize].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                    for (gb, &gi) in self.grads[b.0 as usize].iter_mut().zip(&g) {
                        *gb += gi;
                    }
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    for (ga, &gi) in self.grads[a.0 as usize].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                    for (gb, &gi) in self.grads[b.0 as usize].iter_mut().zip(&g) {
                        *gb -= gi;
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a.0 as usize].value.clone();
                    let bv = self.nodes[b.0 as usize].value.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        self.grads[a.0 as usize][i] += gi * bv[i];
                        self.grads[b.0 as usize][i] += gi * av[i];
                    }
                }
                Op::MinPair { a, b } => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a.0 as usize].value.clone();
                    let bv = self.nodes[b.0 as usize].value.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        if av[i] <= bv[i] {
                            self.grads[a.0 as usize][i] += gi;
                        } else {
                            self.grads[b.0 as usize][i] += gi;
                        }
                    }
                }
                Op::Scale { a, c } => {
                    let (a, c) = (*a, *c);
                    for (ga, &gi) in self.grads[a.0 as usize].iter_mut().zip(&g) {
                        *ga += gi * c;
                    }
                }
                Op::Offset { a } => {
                    let a = *a;
                    for (ga, &gi) in self.grads[a.0 as usize].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                }
                Op::Tanh { a } => {
                    let a = *a;
                    let yv = self.nodes[id].value.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        self.grads[a.0 as usize][i] += gi * (1.0 - yv[i] * yv[i]);
                    }
                }
                Op::Sigmoid { a } => {
                    let a = *a;
                    let yv = self.nodes[id].value.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        self.grads[a.0 as usize][i] += gi * yv[i] * (1.0 - yv[i]);
                    }
                }
                Op::Exp { a } => {
                    let a = *a;
                    let yv = self.nodes[id].value.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        self.grads[a.0 as usize][i] += gi * yv[i];
                    }
                }
                Op::Clamp { a, lo, hi } => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    let av = self.nodes[a.0 as usize].value.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        if av[i] > lo && av[i] < hi {
                            self.grads[a.0 as usize][i] += gi;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0 as usize].value.len();
                        for i in 0..len {
                            self.grads[p.0 as usize][i] += g[off + i];
                        }
                        off += len;
                    }
                }
                Op::Sum { a } => {
                    let a = *a;
                    for ga in self.grads[a.0 as usize].iter_mut() {
                        *ga += g[0];
                    }
                }
                Op::Mse { a, target } => {
                    let a = *a;
                    let target = target.clone();
                    let av = self.nodes[a.0 as usize].value.clone();
                    let n = target.len() as f64;
                    for i in 0..target.len() {
                        self.grads[a.0 as usize][i] += g[0] * 2.0 * (av[i] - target[i]) / n;
                    }
                }
            }
            self.grads[id] = g;
        }
    }

    /// Adds the gradients of every parameter leaf into `set.grad`.
    ///
    /// `set` must be the same parameter set the leaves were created from.
    pub fn accumulate_param_grads(&self, set: &mut ParamSet) {
        assert!(!self.grads.is_empty(), "accumulate_param_grads before backward");
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param { param } = node.op {
                let arr = set.at_mut(param);
                assert_eq!(
                    arr.grad.len(),
                    self.grads[id].len(),
                    "parameter {:?} changed shape since the tape was built",
                    arr.name
                );
                for (g, &gi) in arr.grad.iter_mut().zip(&self.grads[id]) {
                    *g += gi;
                }
            }
        }
    }
}
