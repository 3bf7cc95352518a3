//! Reverse-mode differentiation over 2-D `f64` tensors.
//!
//! Every backward rule is itself expressed with recorded tape operations, so
//! the gradients returned by [`Tape::grad`] are ordinary [`Var`]s that can be
//! differentiated again. The gradient penalty relies on this: it takes the
//! norm of an input gradient and then needs that norm's gradient with respect
//! to the critic parameters.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{s, Array2, Axis};

pub type Tensor = Array2<f64>;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Powf(usize, f64),
    Exp(usize),
    Ln(usize),
    Tanh(usize),
    /// Elementwise product with a constant tensor (relu, leaky relu, dropout).
    Mask(usize, Rc<Tensor>),
    SumRows(usize),
    BroadcastRows(usize),
    SumCols(usize),
    BroadcastCols(usize),
    Reshape(usize),
    SliceCols(usize, usize),
    PadCols(usize, usize),
    Concat(Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![*a, *b],
            Transpose(a)
            | Scale(a, _)
            | AddScalar(a)
            | Powf(a, _)
            | Exp(a)
            | Ln(a)
            | Tanh(a)
            | Mask(a, _)
            | SumRows(a)
            | BroadcastRows(a)
            | SumCols(a)
            | BroadcastCols(a)
            | Reshape(a)
            | SliceCols(a, _)
            | PadCols(a, _) => vec![*a],
            Concat(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Append-only computation record. Create one per step and drop it after the
/// parameter update.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf. Leaves are differentiable only when passed to
    /// [`Tape::grad`] as `wrt`; otherwise they act as constants.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.var(Array2::from_elem((1, 1), x))
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn at(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    /// Gradients of `output` (summed over its entries) with respect to each
    /// of `wrt`. `None` means `output` does not depend on that variable.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Vec<Option<Var<'t>>> {
        let n = output.id + 1;
        let mut relevant = vec![false; n];
        for w in wrt {
            if w.id < n {
                relevant[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..n {
                if !relevant[i] {
                    relevant[i] = nodes[i].op.inputs().iter().any(|&j| relevant[j]);
                }
            }
        }

        let mut grads: Vec<Option<Var<'t>>> = vec![None; n];
        if relevant[output.id] {
            let (r, c) = output.shape();
            grads[output.id] = Some(self.var(Array2::ones((r, c))));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            for (j, gj) in self.backward(i, &op, g, &relevant) {
                grads[j] = Some(match grads[j] {
                    Some(acc) => acc.add(gj),
                    None => gj,
                });
            }
        }
        wrt.iter().map(|w| grads.get(w.id).copied().flatten()).collect()
    }

    fn backward<'t>(&'t self, i: usize, op: &Op, g: Var<'t>, need: &[bool]) -> Vec<(usize, Var<'t>)> {
        let mut out = Vec::new();
        let mut emit = |j: usize, f: &dyn Fn() -> Var<'t>| {
            if need[j] {
                out.push((j, f()));
            }
        };
        let me = self.at(i);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, &|| g);
                emit(*b, &|| g);
            }
            Op::Sub(a, b) => {
                emit(*a, &|| g);
                emit(*b, &|| g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                emit(*a, &|| g.mul(self.at(*b)));
                emit(*b, &|| g.mul(self.at(*a)));
            }
            Op::MatMul(a, b) => {
                emit(*a, &|| g.matmul(self.at(*b).t()));
                emit(*b, &|| self.at(*a).t().matmul(g));
            }
            Op::Transpose(a) => emit(*a, &|| g.t()),
            Op::Scale(a, c) => emit(*a, &|| g.scale(*c)),
            Op::AddScalar(a) => emit(*a, &|| g),
            Op::Powf(a, p) => emit(*a, &|| g.mul(self.at(*a).powf(p - 1.0).scale(*p))),
            Op::Exp(a) => emit(*a, &|| g.mul(me)),
            Op::Ln(a) => emit(*a, &|| g.mul(self.at(*a).powf(-1.0))),
            Op::Tanh(a) => emit(*a, &|| g.mul(me.mul(me).scale(-1.0).add_scalar(1.0))),
            Op::Mask(a, m) => emit(*a, &|| g.mask(Rc::clone(m))),
            Op::SumRows(a) => {
                let rows = self.value(*a).nrows();
                emit(*a, &|| g.broadcast_rows(rows));
            }
            Op::BroadcastRows(a) => emit(*a, &|| g.sum_rows()),
            Op::SumCols(a) => {
                let cols = self.value(*a).ncols();
                emit(*a, &|| g.broadcast_cols(cols));
            }
            Op::BroadcastCols(a) => emit(*a, &|| g.sum_cols()),
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).dim();
                emit(*a, &|| g.reshape(r, c));
            }
            Op::SliceCols(a, start) => {
                let total = self.value(*a).ncols();
                emit(*a, &|| g.pad_cols(*start, total));
            }
            Op::PadCols(a, start) => {
                let w = self.value(*a).ncols();
                emit(*a, &|| g.slice_cols(*start, start + w));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    let start = offset;
                    emit(p, &|| g.slice_cols(start, start + w));
                    offset += w;
                }
            }
        }
        out
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) {
    assert_eq!(a.dim(), b.dim(), "{what}: shape mismatch");
}

// `add`, `sub` and `mul` record tape nodes; operator traits would hide that
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// The single entry of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on a non-scalar");
        v[(0, 0)]
    }

    fn unary(&self, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Var<'t> {
        let v = f(&self.value());
        self.tape.push(v, op)
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "add");
        self.tape.push(&*a + &*b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "sub");
        self.tape.push(&*a - &*b, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        same_shape(&a, &b, "mul");
        self.tape.push(&*a * &*b, Op::Mul(self.id, other.id))
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
        self.tape.push(a.dot(&*b), Op::MatMul(self.id, other.id))
    }

    pub fn t(self) -> Var<'t> {
        self.unary(
            |a| a.t().as_standard_layout().into_owned(),
            Op::Transpose(self.id),
        )
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(|a| a * c, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(|a| a + c, Op::AddScalar(self.id))
    }

    pub fn powf(self, p: f64) -> Var<'t> {
        self.unary(|a| a.mapv(|x| x.powf(p)), Op::Powf(self.id, p))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::ln), Op::Ln(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::tanh), Op::Tanh(self.id))
    }

    pub fn mask(self, m: Rc<Tensor>) -> Var<'t> {
        let a = self.value();
        same_shape(&a, &m, "mask");
        let v = &*a * &*m;
        self.tape.push(v, Op::Mask(self.id, m))
    }

    pub fn relu(self) -> Var<'t> {
        self.leaky_relu(0.0)
    }

    /// Slope is frozen from the forward value, so the second derivative is
    /// zero, which is exact away from the kink.
    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let m = self.value().mapv(|x| if x > 0.0 { 1.0 } else { slope });
        self.mask(Rc::new(m))
    }

    /// `(n, m) -> (1, m)`
    pub fn sum_rows(self) -> Var<'t> {
        self.unary(|a| a.sum_axis(Axis(0)).insert_axis(Axis(0)), Op::SumRows(self.id))
    }

    /// `(1, m) -> (rows, m)`
    pub fn broadcast_rows(self, rows: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.nrows(), 1, "broadcast_rows needs a single row");
        let v = a.broadcast((rows, a.ncols())).unwrap().to_owned();
        self.tape.push(v, Op::BroadcastRows(self.id))
    }

    /// `(n, m) -> (n, 1)`
    pub fn sum_cols(self) -> Var<'t> {
        self.unary(|a| a.sum_axis(Axis(1)).insert_axis(Axis(1)), Op::SumCols(self.id))
    }

    /// `(n, 1) -> (n, cols)`
    pub fn broadcast_cols(self, cols: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.ncols(), 1, "broadcast_cols needs a single column");
        let v = a.broadcast((a.nrows(), cols)).unwrap().to_owned();
        self.tape.push(v, Op::BroadcastCols(self.id))
    }

    /// Row-major reinterpretation.
    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t> {
        let a = self.value();
        assert_eq!(a.len(), rows * cols, "reshape: element count differs");
        let v = Array2::from_shape_vec((rows, cols), a.iter().copied().collect()).unwrap();
        self.tape.push(v, Op::Reshape(self.id))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t> {
        self.unary(
            |a| a.slice(s![.., start..end]).to_owned(),
            Op::SliceCols(self.id, start),
        )
    }

    /// Places the columns at `start` inside a zero tensor `total` wide.
    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        let a = self.value();
        let mut v = Array2::zeros((a.nrows(), total));
        v.slice_mut(s![.., start..start + a.ncols()]).assign(&*a);
        self.tape.push(v, Op::PadCols(self.id, start))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let tape = parts[0].tape;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        tape.push(v, Op::Concat(parts.iter().map(|p| p.id).collect()))
    }

    pub fn sum(self) -> Var<'t> {
        self.sum_rows().sum_cols()
    }

    pub fn mean(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum().scale(1.0 / (r * c) as f64)
    }

    /// Adds a `(1, m)` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        let n = self.shape().0;
        self.add(row.broadcast_rows(n))
    }

    pub fn mul_row(self, row: Var<'t>) -> Var<'t> {
        let n = self.shape().0;
        self.mul(row.broadcast_rows(n))
    }

    /// Row-wise softmax. The row maximum is subtracted as a constant, which
    /// leaves both value and derivatives unchanged.
    pub fn softmax(self) -> Var<'t> {
        let (z, _) = self.shifted_exp();
        let total = z.sum_cols();
        let cols = z.shape().1;
        z.mul(total.powf(-1.0).broadcast_cols(cols))
    }

    pub fn log_softmax(self) -> Var<'t> {
        let (z, shifted) = self.shifted_exp();
        let cols = z.shape().1;
        shifted.sub(z.sum_cols().ln().broadcast_cols(cols))
    }

    fn shifted_exp(self) -> (Var<'t>, Var<'t>) {
        let a = self.value();
        let max = a.map_axis(Axis(1), |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let cols = a.ncols();
        let shift = max
            .insert_axis(Axis(1))
            .broadcast((a.nrows(), cols))
            .unwrap()
            .mapv(|x| -x);
        let shifted = self.add(self.tape.var(shift));
        (shifted.exp(), shifted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd<F: Fn(&Tensor) -> f64>(f: F, x: &Tensor) -> Tensor {
        let h = 1e-6;
        let mut g = Array2::zeros(x.dim());
        for idx in ndarray::indices(x.dim()) {
            let mut p = x.clone();
            p[idx] += h;
            let mut m = x.clone();
            m[idx] -= h;
            g[idx] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn close(a: &Tensor, b: &Tensor, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn quadratic_form() {
        let tape = Tape::new();
        let x = tape.var(array![[1.0, 2.0], [3.0, -1.0]]);
        let w = tape.var(array![[0.5, -0.2], [0.1, 0.3]]);
        let y = x.matmul(w).tanh().mul(x).sum();
        let g = tape.grad(y, &[x, w]);
        let f = |xv: &Tensor| {
            let wv = array![[0.5, -0.2], [0.1, 0.3]];
            (xv.dot(&wv).mapv(f64::tanh) * xv).sum()
        };
        close(&g[0].unwrap().value(), &fd(f, &x.value()), 1e-7);
    }

    #[test]
    fn unused_variable_has_no_gradient() {
        let tape = Tape::new();
        let a = tape.var(array![[1.0]]);
        let b = tape.var(array![[2.0]]);
        let y = a.scale(3.0);
        let g = tape.grad(y, &[a, b]);
        assert_eq!(g[0].unwrap().item(), 3.0);
        assert!(g[1].is_none());
    }

    #[test]
    fn second_derivative_of_cube() {
        let tape = Tape::new();
        let x = tape.var(array![[2.0]]);
        let y = x.powf(3.0);
        let dy = tape.grad(y, &[x])[0].unwrap();
        assert!((dy.item() - 12.0).abs() < 1e-12);
        let d2y = tape.grad(dy, &[x])[0].unwrap();
        assert!((d2y.item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let tape = Tape::new();
        let x = tape.var(array![[1.0, 2.0, 3.0], [1000.0, 0.0, -5.0]]);
        let p = x.softmax().value();
        for r in p.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        let lp = x.log_softmax().value();
        close(&lp.mapv(f64::exp), &p, 1e-12);
    }

    fn shape_ops_chain(x: Var<'_>) -> Var<'_> {
        let r = x.reshape(4, 2).t().reshape(2, 4);
        let parts = Var::concat_cols(&[r.slice_cols(0, 1), x.slice_cols(1, 4).pad_cols(1, 5)]);
        let s = parts.softmax().mul(parts.log_softmax());
        s.sum_rows()
            .broadcast_rows(3)
            .sum_cols()
            .sum()
            .add(x.exp().mean())
    }

    #[test]
    fn shape_ops_gradients() {
        let x0 = array![[0.3, -0.7, 1.1, 0.2], [0.5, 0.9, -1.3, 0.4]];
        let tape = Tape::new();
        let x = tape.var(x0.clone());
        let g = tape.grad(shape_ops_chain(x), &[x])[0].unwrap().value();
        let num = fd(
            |xv| {
                let t = Tape::new();
                shape_ops_chain(t.var(xv.clone())).item()
            },
            &x0,
        );
        close(&g, &num, 1e-6);
    }
}
