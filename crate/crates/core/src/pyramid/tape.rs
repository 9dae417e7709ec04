//! Reverse-mode differentiation over batched matrices. Rows index points,
//! columns index features.

use nalgebra::DMatrix;

use crate::fem::SparseSymMatrix;

/// Clamp applied to `c` before `−ln(1 − c)`.
pub const CONFIDENCE_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Softplus(Var),
    Sigmoid(Var),
    Cols(Var, usize),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    GatherRows(Var, Vec<usize>),
    SumSquares(Var),
    NegLogOneMinus(Var),
    Mean(Var),
    Quadratic { a: Var, scale: f64, kv: Vec<f64> },
}

struct Node {
    value: DMatrix<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Row-major flattening: node `i` component `c` lands at `3i + c`.
fn flatten_rows(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len());
    for i in 0..a.nrows() {
        for c in 0..a.ncols() {
            v.push(a[(i, c)]);
        }
    }
    v
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn leaf(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a 1×q row vector to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((r.nrows(), r.ncols()), (1, self.value(a).ncols()));
        let mut v = self.value(a).clone();
        for mut line in v.row_iter_mut() {
            line += r;
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).columns(start, len).into_owned();
        self.push(v, Op::Cols(a, start))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        self.push(v, Op::Mul(a, b))
    }

    /// Scales row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let c = self.value(col);
        assert_eq!((c.nrows(), c.ncols()), (self.value(a).nrows(), 1));
        let mut v = self.value(a).clone();
        for (i, mut line) in v.row_iter_mut().enumerate() {
            line *= c[i];
        }
        self.push(v, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let src = self.value(a);
        let v = DMatrix::from_fn(rows.len(), src.ncols(), |r, c| src[(rows[r], c)]);
        self.push(v, Op::GatherRows(a, rows))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = scalar(self.value(a).iter().map(|x| x * x).sum());
        self.push(v, Op::SumSquares(a))
    }

    pub fn neg_log_one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|c| -(1.0 - c.clamp(CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP)).ln());
        self.push(v, Op::NegLogOneMinus(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = scalar(self.value(a).mean());
        self.push(v, Op::Mean(a))
    }

    /// `scale · vᵀ K v` with `v` the rows of `a` flattened and zero-padded
    /// to the dimension of `K` (boundary-first embedding).
    pub fn quadratic(&mut self, a: Var, k: &SparseSymMatrix, scale: f64) -> Var {
        let mut v = flatten_rows(self.value(a));
        assert!(v.len() <= k.dim(), "field larger than stiffness matrix");
        v.resize(k.dim(), 0.0);
        let mut kv = vec![0.0; k.dim()];
        k.mul_vec_into(&v, &mut kv);
        let e: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
        self.push(scalar(scale * e), Op::Quadratic { a, scale, kv })
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut g: Vec<Option<DMatrix<f64>>> = vec![None; self.nodes.len()];
        g[root.0] = Some(scalar(1.0));
        let acc = |g: &mut Vec<Option<DMatrix<f64>>>, v: Var, d: DMatrix<f64>| match &mut g[v.0] {
            Some(x) => *x += d,
            slot => *slot = Some(d),
        };
        for idx in (0..=root.0).rev() {
            let Some(gi) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => g[idx] = Some(gi),
                Op::MatMul(a, b) => {
                    acc(&mut g, *a, &gi * self.value(*b).transpose());
                    acc(&mut g, *b, self.value(*a).transpose() * &gi);
                }
                Op::AddRow(a, row) => {
                    let mut s = DMatrix::zeros(1, gi.ncols());
                    for line in gi.row_iter() {
                        s += line;
                    }
                    acc(&mut g, *row, s);
                    acc(&mut g, *a, gi);
                }
                Op::Softplus(a) => {
                    acc(&mut g, *a, gi.zip_map(self.value(*a), |d, x| d * sigmoid(x)));
                }
                Op::Sigmoid(a) => {
                    acc(&mut g, *a, gi.zip_map(&node.value, |d, s| d * s * (1.0 - s)));
                }
                Op::Cols(a, start) => {
                    let src = self.value(*a);
                    let mut d = DMatrix::zeros(src.nrows(), src.ncols());
                    d.columns_mut(*start, gi.ncols()).copy_from(&gi);
                    acc(&mut g, *a, d);
                }
                Op::Mul(a, b) => {
                    acc(&mut g, *a, gi.component_mul(self.value(*b)));
                    acc(&mut g, *b, gi.component_mul(self.value(*a)));
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (self.value(*a), self.value(*col));
                    let dc = DMatrix::from_fn(av.nrows(), 1, |i, _| gi.row(i).dot(&av.row(i)));
                    let mut da = gi;
                    for (i, mut line) in da.row_iter_mut().enumerate() {
                        line *= cv[i];
                    }
                    acc(&mut g, *a, da);
                    acc(&mut g, *col, dc);
                }
                Op::Scale(a, s) => acc(&mut g, *a, gi * *s),
                Op::Add(a, b) => {
                    acc(&mut g, *a, gi.clone());
                    acc(&mut g, *b, gi);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *a, gi.clone());
                    acc(&mut g, *b, -gi);
                }
                Op::GatherRows(a, rows) => {
                    let src = self.value(*a);
                    let mut d = DMatrix::zeros(src.nrows(), src.ncols());
                    for (r, &i) in rows.iter().enumerate() {
                        let mut line = d.row_mut(i);
                        line += gi.row(r);
                    }
                    acc(&mut g, *a, d);
                }
                Op::SumSquares(a) => acc(&mut g, *a, self.value(*a) * (2.0 * gi[(0, 0)])),
                Op::NegLogOneMinus(a) => {
                    let d = gi.zip_map(self.value(*a), |d, c| {
                        if (CONFIDENCE_CLAMP..=1.0 - CONFIDENCE_CLAMP).contains(&c) {
                            d / (1.0 - c)
                        } else {
                            0.0
                        }
                    });
                    acc(&mut g, *a, d);
                }
                Op::Mean(a) => {
                    let src = self.value(*a);
                    let d = DMatrix::from_element(src.nrows(), src.ncols(), gi[(0, 0)] / src.len() as f64);
                    acc(&mut g, *a, d);
                }
                Op::Quadratic { a, scale, kv, .. } => {
                    let src = self.value(*a);
                    let f = 2.0 * scale * gi[(0, 0)];
                    let cols = src.ncols();
                    let d = DMatrix::from_fn(src.nrows(), cols, |i, c| f * kv[cols * i + c]);
                    acc(&mut g, *a, d);
                }
            }
        }
        Gradients { g }
    }
}

/// Leaf gradients after a backward pass. Interior nodes are released.
pub struct Gradients {
    g: Vec<Option<DMatrix<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros of the right shape when the root does not
    /// depend on it.
    pub fn get(&self, tape: &Tape, v: Var) -> DMatrix<f64> {
        self.g[v.0].clone().unwrap_or_else(|| {
            let s = tape.value(v).shape();
            DMatrix::zeros(s.0, s.1)
        })
    }
}
