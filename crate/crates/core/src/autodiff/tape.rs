use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Abs,
    Square,
    Sqrt,
    Exp,
    Log,
    /// Exact form `x * Phi(x)` with the Gaussian CDF, not the tanh approximation.
    Gelu,
    Tanh,
    /// ELU with unit scale: `x` for `x > 0`, `exp(x) - 1` otherwise.
    Elu,
    Relu,
    Negate,
    /// `scale * x + shift`.
    Affine { scale: f64, shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    MatMul(Var, Var),
    Sum(Var),
    SumRows(Var),
    LogSumExpRows(Var),
    Gather { input: Var, perm: Vec<usize> },
    Element { input: Var, row: usize, col: usize },
    Columns { input: Var, start: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
}

/// Append-only reverse-mode tape over dense `f64` matrices.
///
/// Nodes are stored in creation order, which is a topological order of the
/// graph, so [`Tape::backward`] is a single reverse sweep. Gradients
/// accumulate across calls to `backward` until [`Tape::zero_grad`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    last_visits: usize,
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gaussian_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

fn unary_forward(op: UnaryOp, x: f64) -> f64 {
    match op {
        UnaryOp::Abs => x.abs(),
        UnaryOp::Square => x * x,
        UnaryOp::Sqrt => x.sqrt(),
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Gelu => x * gaussian_cdf(x),
        UnaryOp::Tanh => x.tanh(),
        UnaryOp::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp_m1()
            }
        }
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Negate => -x,
        UnaryOp::Affine { scale, shift } => scale * x + shift,
    }
}

/// d(op)/dx given input `x` and output `y`.
fn unary_derivative(op: UnaryOp, x: f64, y: f64) -> f64 {
    match op {
        UnaryOp::Abs => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        UnaryOp::Square => 2.0 * x,
        UnaryOp::Sqrt => 0.5 / y,
        UnaryOp::Exp => y,
        UnaryOp::Log => 1.0 / x,
        UnaryOp::Gelu => gaussian_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp(),
        UnaryOp::Tanh => 1.0 - y * y,
        UnaryOp::Elu => {
            if x > 0.0 {
                1.0
            } else {
                y + 1.0
            }
        }
        UnaryOp::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        UnaryOp::Negate => -1.0,
        UnaryOp::Affine { scale, .. } => scale,
    }
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    if a == b {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else if b == 1 {
        Some(a)
    } else {
        None
    }
}

/// Sum a full-size gradient back down to a broadcast operand's shape.
fn reduce_to(mut g: Matrix, shape: (usize, usize)) -> Matrix {
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn shape(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

fn cmp_f64(a: &f64, b: &f64) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let grad = Matrix::zeros(value.raw_dim());
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Matrix::from_elem((1, 1), value))
    }

    /// An `n x 1` column leaf.
    pub fn column(&mut self, values: &[f64]) -> Var {
        self.leaf(Matrix::from_shape_vec((values.len(), 1), values.to_vec()).unwrap())
    }

    /// A `1 x k` row leaf.
    pub fn row(&mut self, values: &[f64]) -> Var {
        self.leaf(Matrix::from_shape_vec((1, values.len()), values.to_vec()).unwrap())
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape(&self.nodes[v.0].value)
    }

    /// The single entry of a `1 x 1` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn grad(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].grad
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
    }

    /// Number of node backward rules run by the most recent [`Tape::backward`].
    pub fn last_backward_visits(&self) -> usize {
        self.last_visits
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Result<Var> {
        let input = self.value(x);
        let bad = match op {
            UnaryOp::Sqrt => input.iter().find(|v| **v < 0.0),
            UnaryOp::Log => input.iter().find(|v| **v <= 0.0),
            _ => None,
        };
        if let Some(v) = bad {
            return Err(Error::Domain {
                op: if op == UnaryOp::Sqrt { "sqrt" } else { "log" },
                detail: format!("argument {v}"),
            });
        }
        let value = input.mapv(|v| unary_forward(op, v));
        Ok(self.push(value, Op::Unary(op, x)))
    }

    fn unary_total(&mut self, op: UnaryOp, x: Var) -> Var {
        let value = self.value(x).mapv(|v| unary_forward(op, v));
        self.push(value, Op::Unary(op, x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Abs, x)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Square, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Sqrt, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, x)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Gelu, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Tanh, x)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Elu, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Relu, x)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary_total(UnaryOp::Negate, x)
    }

    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary_total(UnaryOp::Affine { scale, shift }, x)
    }

    /// Elementwise binary op. Either operand may broadcast along a dimension
    /// of size 1.
    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out = match (broadcast_dim(sa.0, sb.0), broadcast_dim(sa.1, sb.1)) {
            (Some(r), Some(c)) => (r, c),
            _ => {
                return Err(Error::Shape {
                    op: "elementwise",
                    lhs: sa,
                    rhs: sb,
                })
            }
        };
        let av = self.value(a).broadcast(out).unwrap();
        let bv = self.value(b).broadcast(out).unwrap();
        let value = match op {
            BinaryOp::Add => &av + &bv,
            BinaryOp::Sub => &av - &bv,
            BinaryOp::Mul => &av * &bv,
            BinaryOp::Div => &av / &bv,
        };
        Ok(self.push(value, Op::Binary(op, a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::from_elem((1, 1), self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let count = self.value(x).len() as f64;
        let total = self.sum(x);
        self.affine(total, 1.0 / count, 0.0)
    }

    /// Column sums: `n x k -> 1 x k`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let value = self.value(x).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(value, Op::SumRows(x))
    }

    /// Column means: `n x k -> 1 x k`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let n = self.value(x).nrows() as f64;
        let total = self.sum_rows(x);
        self.affine(total, 1.0 / n, 0.0)
    }

    /// Row-wise `log(sum(exp(.)))`: `n x k -> n x 1`, shifted by the row max.
    pub fn logsumexp_rows(&mut self, x: Var) -> Var {
        let input = self.value(x);
        let mut value = Matrix::zeros((input.nrows(), 1));
        for (i, row) in input.rows().into_iter().enumerate() {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
            value[[i, 0]] = m + s.ln();
        }
        self.push(value, Op::LogSumExpRows(x))
    }

    /// Ascending stable sort of a column vector.
    ///
    /// Returns the sorted node and `perm` with `sorted[j] = x[perm[j]]`; equal
    /// values keep their original order. The backward rule scatters gradients
    /// through `perm`.
    pub fn sort(&mut self, x: Var) -> Result<(Var, Vec<usize>)> {
        let input = self.value(x);
        if input.ncols() != 1 {
            return Err(Error::Shape {
                op: "sort",
                lhs: shape(input),
                rhs: (input.nrows(), 1),
            });
        }
        let col = input.column(0);
        let mut perm: Vec<usize> = (0..col.len()).collect();
        perm.sort_by(|&i, &j| cmp_f64(&col[i], &col[j]));
        let value = Matrix::from_shape_fn((perm.len(), 1), |(j, _)| col[perm[j]]);
        let out = self.push(
            value,
            Op::Gather {
                input: x,
                perm: perm.clone(),
            },
        );
        Ok((out, perm))
    }

    /// A single entry as a `1 x 1` node.
    pub fn element(&mut self, x: Var, row: usize, col: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if row >= r || col >= c {
            return Err(Error::Shape {
                op: "element",
                lhs: (r, c),
                rhs: (row, col),
            });
        }
        let value = Matrix::from_elem((1, 1), self.value(x)[[row, col]]);
        Ok(self.push(value, Op::Element { input: x, row, col }))
    }

    fn extreme(&mut self, x: Var, want_max: bool) -> Result<(Var, usize)> {
        let input = self.value(x);
        if input.ncols() != 1 || input.is_empty() {
            return Err(Error::contract(format!(
                "extreme requires a non-empty column, got {:?}",
                shape(input)
            )));
        }
        let mut best = 0;
        for (i, &v) in input.column(0).iter().enumerate() {
            let cur = input[[best, 0]];
            if (want_max && v > cur) || (!want_max && v < cur) {
                best = i;
            }
        }
        Ok((self.element(x, best, 0)?, best))
    }

    /// Maximum of a column; the gradient goes to the first maximal entry.
    pub fn max(&mut self, x: Var) -> Result<(Var, usize)> {
        self.extreme(x, true)
    }

    /// Minimum of a column; the gradient goes to the first minimal entry.
    pub fn min(&mut self, x: Var) -> Result<(Var, usize)> {
        self.extreme(x, false)
    }

    /// Columns `start..start + len`.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c || len == 0 {
            return Err(Error::Shape {
                op: "columns",
                lhs: (r, c),
                rhs: (start, len),
            });
        }
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        Ok(self.push(value, Op::Columns { input: x, start }))
    }

    /// Reverse sweep from a `1 x 1` root, adding `d root / d node` into every
    /// reachable node's gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        let n = root.0 + 1;
        let mut reachable = vec![false; n];
        reachable[root.0] = true;
        for i in (0..n).rev() {
            if !reachable[i] {
                continue;
            }
            for p in self.parents(i) {
                reachable[p.0] = true;
            }
        }

        let mut adjoint: Vec<Option<Matrix>> = vec![None; n];
        adjoint[root.0] = Some(Matrix::ones((1, 1)));
        let mut visits = 0;
        for i in (0..n).rev() {
            if !reachable[i] {
                continue;
            }
            let g = adjoint[i]
                .take()
                .unwrap_or_else(|| Matrix::zeros(self.nodes[i].value.raw_dim()));
            visits += 1;
            for (parent, contribution) in self.local_grads(i, &g) {
                match &mut adjoint[parent.0] {
                    Some(acc) => *acc += &contribution,
                    slot => *slot = Some(contribution),
                }
            }
            self.nodes[i].grad += &g;
        }
        self.last_visits = visits;
        Ok(())
    }

    fn parents(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::Unary(_, x)
            | Op::Sum(x)
            | Op::SumRows(x)
            | Op::LogSumExpRows(x)
            | Op::Gather { input: x, .. }
            | Op::Element { input: x, .. }
            | Op::Columns { input: x, .. } => vec![*x],
            Op::Binary(_, a, b) | Op::MatMul(a, b) => vec![*a, *b],
        }
    }

    fn local_grads(&self, i: usize, g: &Matrix) -> Vec<(Var, Matrix)> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => vec![],
            Op::Unary(op, x) => {
                let input = &self.nodes[x.0].value;
                let mut d = Matrix::zeros(input.raw_dim());
                ndarray::Zip::from(&mut d)
                    .and(input)
                    .and(&node.value)
                    .and(g)
                    .for_each(|d, &xv, &yv, &gv| *d = gv * unary_derivative(*op, xv, yv));
                vec![(*x, d)]
            }
            Op::Binary(op, a, b) => {
                let out = shape(&node.value);
                let av = self.nodes[a.0].value.broadcast(out).unwrap();
                let bv = self.nodes[b.0].value.broadcast(out).unwrap();
                let (ga, gb) = match op {
                    BinaryOp::Add => (g.clone(), g.clone()),
                    BinaryOp::Sub => (g.clone(), g.mapv(|v| -v)),
                    BinaryOp::Mul => (g * &bv, g * &av),
                    BinaryOp::Div => {
                        let ga = g / &bv;
                        let gb = -(&ga * &av) / bv;
                        (ga, gb)
                    }
                };
                vec![
                    (*a, reduce_to(ga, self.shape(*a))),
                    (*b, reduce_to(gb, self.shape(*b))),
                ]
            }
            Op::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                vec![(*a, g.dot(&bv.t())), (*b, av.t().dot(g))]
            }
            Op::Sum(x) => vec![(*x, Matrix::from_elem(self.nodes[x.0].value.raw_dim(), g[[0, 0]]))],
            Op::SumRows(x) => {
                let full = g.broadcast(self.nodes[x.0].value.raw_dim()).unwrap().to_owned();
                vec![(*x, full)]
            }
            Op::LogSumExpRows(x) => {
                let input = &self.nodes[x.0].value;
                let mut d = Matrix::zeros(input.raw_dim());
                for ((r, c), v) in d.indexed_iter_mut() {
                    *v = (input[[r, c]] - node.value[[r, 0]]).exp() * g[[r, 0]];
                }
                vec![(*x, d)]
            }
            Op::Gather { input, perm } => {
                let mut d = Matrix::zeros(self.nodes[input.0].value.raw_dim());
                for (j, &src) in perm.iter().enumerate() {
                    d[[src, 0]] += g[[j, 0]];
                }
                vec![(*input, d)]
            }
            Op::Element { input, row, col } => {
                let mut d = Matrix::zeros(self.nodes[input.0].value.raw_dim());
                d[[*row, *col]] = g[[0, 0]];
                vec![(*input, d)]
            }
            Op::Columns { input, start } => {
                let mut d = Matrix::zeros(self.nodes[input.0].value.raw_dim());
                d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                vec![(*input, d)]
            }
        }
    }
}
