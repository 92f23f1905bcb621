//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation eagerly (values are computed on insertion)
//! and [`Tape::backward`] walks the record in reverse to accumulate exact
//! gradients. Every value is a 2-D matrix; batches run along rows. Scalars are
//! `1 x 1` matrices.
//!
//! Nodes that do not depend on a gradient-tracked leaf are never visited during
//! the backward pass, so target networks and frozen parameters can be placed on
//! the same tape at forward cost only.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Square(Var),
    Softplus(Var),
    Min(Var, Var),
    Max(Var, Var),
    Clamp(Var, f64, f64),
    Mean(Var),
    SumCols(Var),
    Concat(Vec<Var>),
    Columns(Var, usize),
    BroadcastRows(Var),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; `None` if `var` is untracked or unreachable.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(op: &str, a: &Matrix, b: &Matrix) {
    assert_eq!(a.dim(), b.dim(), "{op}: shape mismatch {:?} vs {:?}", a.dim(), b.dim());
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

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on a {:?} node", m.dim());
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn constant_view(&mut self, value: ArrayView2<'_, f64>) -> Var {
        self.constant(value.to_owned())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).mapv(f);
        let t = self.tracked(a);
        self.push(value, op, t)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("elementwise", va, vb);
        let value = Zip::from(va).and(vb).map_collect(|&x, &y| f(x, y));
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, op, t)
    }

    /// `a (n x k) . b (k x m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul: inner dims {:?} x {:?}",
            va.dim(),
            vb.dim()
        );
        let value = va.dot(vb);
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::MatMul(a, b), t)
    }

    /// Add the `1 x k` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(vb.nrows(), 1, "add_row: bias must be a single row");
        assert_eq!(va.ncols(), vb.ncols(), "add_row: width mismatch");
        let value = va + vb;
        let t = self.tracked(a) || self.tracked(b);
        self.push(value, Op::AddRow(a, b), t)
    }

    /// `x . w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Min(a, b), f64::min)
    }

    pub fn max(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Max(a, b), f64::max)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |x| x + c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Mean over all elements, as a `1 x 1` node.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let m = v.sum() / v.len() as f64;
        let t = self.tracked(a);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a), t)
    }

    /// Row sums: `n x k -> n x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let t = self.tracked(a);
        self.push(v, Op::SumCols(a), t)
    }

    /// Column-wise concatenation of equally tall nodes.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).nrows();
        let width: usize = parts.iter().map(|p| self.value(*p).ncols()).sum();
        let mut out = Matrix::zeros((rows, width));
        let mut c = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.nrows(), rows, "concat: row mismatch");
            out.slice_mut(s![.., c..c + v.ncols()]).assign(v);
            c += v.ncols();
        }
        let t = parts.iter().any(|p| self.tracked(*p));
        self.push(out, Op::Concat(parts.to_vec()), t)
    }

    /// Columns `start..end` of `a`.
    pub fn columns(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a);
        assert!(start < end && end <= v.ncols(), "columns: bad range {start}..{end}");
        let out = v.slice(s![.., start..end]).to_owned();
        let t = self.tracked(a);
        self.push(out, Op::Columns(a, start), t)
    }

    /// Repeat a `1 x k` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let v = self.value(a);
        assert_eq!(v.nrows(), 1, "broadcast_rows expects a single row");
        let out = v.broadcast((n, v.ncols())).expect("row broadcast").to_owned();
        let t = self.tracked(a);
        self.push(out, Op::BroadcastRows(a), t)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        let t = self.tracked(a);
        self.push(out, Op::Transpose(a), t)
    }

    /// Accumulate `d loss / d node` for every tracked node, where `loss` is `1 x 1`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        if !self.tracked(loss) {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let out = &node.value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.tracked(*a) {
                        let gb = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, gb);
                    }
                    if self.tracked(*b) {
                        let ga = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, ga);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.tracked(*a) && self.tracked(*b) {
                        accumulate(&mut grads, *a, g.clone());
                        accumulate(&mut grads, *b, g);
                    } else if self.tracked(*a) {
                        accumulate(&mut grads, *a, g);
                    } else {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, -&g);
                    }
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.tracked(*b) {
                        accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Div(a, b) => {
                    let vb = self.value(*b);
                    if self.tracked(*a) {
                        accumulate(&mut grads, *a, &g / vb);
                    }
                    if self.tracked(*b) {
                        // d(a/b)/db = -(a/b)/b
                        let gb = Zip::from(&g).and(out).and(vb).map_collect(|&g, &o, &y| -g * o / y);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Neg(a) => accumulate(&mut grads, *a, -g),
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Offset(a) => accumulate(&mut grads, *a, g),
                Op::Tanh(a) => {
                    let ga = Zip::from(&g).and(out).map_collect(|&g, &y| g * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = Zip::from(&g)
                        .and(out)
                        .map_collect(|&g, &y| if y > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => accumulate(&mut grads, *a, g * out),
                Op::Log(a) => accumulate(&mut grads, *a, g / self.value(*a)),
                Op::Abs(a) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(|&g, &x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(|&g, &x| 2.0 * x * g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(|&g, &x| g * sigmoid(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    // ties go to the first operand
                    let is_min = matches!(node.op, Op::Min(..));
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let pick_a = |x: f64, y: f64| if is_min { x <= y } else { x >= y };
                    if self.tracked(*a) {
                        let ga = Zip::from(&g)
                            .and(va)
                            .and(vb)
                            .map_collect(|&g, &x, &y| if pick_a(x, y) { g } else { 0.0 });
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.tracked(*b) {
                        let gb = Zip::from(&g)
                            .and(va)
                            .and(vb)
                            .map_collect(|&g, &x, &y| if pick_a(x, y) { 0.0 } else { g });
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(
                        |&g, &x| {
                            if x >= *lo && x <= *hi {
                                g
                            } else {
                                0.0
                            }
                        },
                    );
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let va = self.value(*a);
                    let ga = Array2::from_elem(va.dim(), g[[0, 0]] / va.len() as f64);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let ga = g.broadcast(self.value(*a).dim()).expect("column broadcast").to_owned();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if self.tracked(*p) {
                            accumulate(&mut grads, *p, g.slice(s![.., c..c + w]).to_owned());
                        }
                        c += w;
                    }
                }
                Op::Columns(a, start) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads, *a, ga);
                }
                Op::BroadcastRows(a) => {
                    accumulate(&mut grads, *a, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.reversed_axes()),
            }
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn squared_linear_residual() {
        // (w x - y)^2 at w=1, x=2, y=0 -> d/dw = 2 (w x - y) x = 8
        let mut t = Tape::new();
        let w = t.param(array![[1.0]]);
        let x = t.constant(array![[2.0]]);
        let y = t.constant(array![[0.0]]);
        let wx = t.matmul(x, w);
        let r = t.sub(wx, y);
        let sq = t.square(r);
        let loss = t.mean(sq);
        assert_eq!(t.scalar(loss), 4.0);
        let g = t.backward(loss);
        assert_eq!(g.get(w).unwrap()[[0, 0]], 8.0);
        assert!(g.get(x).is_none());
    }

    #[test]
    fn abs_subgradient() {
        let mut t = Tape::new();
        let u = t.param(array![[-3.0, 0.0, 2.0]]);
        let a = t.abs(u);
        let s = t.sum_cols(a);
        let loss = t.mean(s);
        let g = t.backward(loss);
        assert_eq!(g.get(u).unwrap(), &array![[-1.0, 0.0, 1.0]]);
    }

    #[test]
    fn untracked_loss_has_no_gradients() {
        let mut t = Tape::new();
        let c = t.constant(array![[1.0, 2.0]]);
        let m = t.mean(c);
        let g = t.backward(m);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn shared_node_accumulates() {
        // loss = mean(a*a + a) -> d/da = (2a + 1)/n
        let mut t = Tape::new();
        let a = t.param(array![[1.0, -2.0]]);
        let aa = t.mul(a, a);
        let s = t.add(aa, a);
        let loss = t.mean(s);
        let g = t.backward(loss);
        assert_eq!(g.get(a).unwrap(), &array![[1.5, -1.5]]);
    }

    #[test]
    fn min_max_route_gradient() {
        let mut t = Tape::new();
        let a = t.param(array![[1.0, 5.0]]);
        let b = t.param(array![[2.0, 3.0]]);
        let m = t.min(a, b);
        let loss = t.mean(m);
        let g = t.backward(loss);
        assert_eq!(g.get(a).unwrap(), &array![[0.5, 0.0]]);
        assert_eq!(g.get(b).unwrap(), &array![[0.0, 0.5]]);

        let mut t = Tape::new();
        let a = t.param(array![[1.0, 5.0]]);
        let b = t.param(array![[2.0, 3.0]]);
        let m = t.max(a, b);
        let loss = t.mean(m);
        let g = t.backward(loss);
        assert_eq!(g.get(a).unwrap(), &array![[0.0, 0.5]]);
        assert_eq!(g.get(b).unwrap(), &array![[0.5, 0.0]]);
    }

    #[test]
    fn clamp_blocks_gradient_outside() {
        let mut t = Tape::new();
        let a = t.param(array![[-30.0, 0.0, 5.0]]);
        let c = t.clamp(a, -20.0, 2.0);
        assert_eq!(t.value(c), &array![[-20.0, 0.0, 2.0]]);
        let s = t.sum_cols(c);
        let loss = t.mean(s);
        let g = t.backward(loss);
        assert_eq!(g.get(a).unwrap(), &array![[0.0, 1.0, 0.0]]);
    }

    #[test]
    fn structural_ops_route_back() {
        let mut t = Tape::new();
        let row = t.param(array![[1.0, 2.0]]);
        let col = t.param(array![[3.0], [4.0], [5.0]]);
        let b = t.broadcast_rows(row, 3);
        let cat = t.concat(&[b, col]);
        let tail = t.columns(cat, 1, 3);
        let tt = t.transpose(tail);
        let sq = t.square(tt);
        let loss = t.mean(sq);
        // tail = [[2,3],[2,4],[2,5]]; loss = (3*4 + 9 + 16 + 25) / 6
        assert_abs_diff_eq!(t.scalar(loss), 62.0 / 6.0, epsilon = 1e-14);
        let g = t.backward(loss);
        assert_eq!(g.get(row).unwrap(), &array![[0.0, 3.0 * 4.0 / 6.0]]);
        let gc = g.get(col).unwrap();
        for (got, want) in gc.iter().zip([1.0, 8.0 / 6.0, 10.0 / 6.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_abs_diff_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert_abs_diff_eq!(sigmoid(-800.0), 0.0, epsilon = 1e-300);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn mismatched_elementwise_panics() {
        let mut t = Tape::new();
        let a = t.param(array![[1.0, 2.0]]);
        let b = t.param(array![[1.0]]);
        t.add(a, b);
    }
}
