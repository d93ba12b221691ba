//! Forward-mode Jacobian of the residual vector `F = y - f(X, θ)`.
//!
//! The sweep walks the pre-order node list backwards. Each partial result
//! carries its row values plus one derivative column per parameter slot in
//! its subtree. Because slots are numbered in pre-order, those slots are
//! always a contiguous range, so a node's derivative block is just the
//! concatenation of its children's blocks, each scaled row-wise by the
//! local partial derivative.

use nalgebra::DMatrix;

use crate::expr::{BinaryOp, ExprTree, NodeKind};
use crate::{Error, Result};

/// `n × k` matrix of `∂F_i/∂θ_j`.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    /// False if any entry is NaN or infinite.
    pub finite: bool,
}

impl Jacobian {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let finite = matrix.iter().all(|v| v.is_finite());
        Jacobian { matrix, finite }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

struct Partial {
    value: Vec<f64>,
    /// Column-major `n × width` block, one column per slot in the subtree.
    deriv: Vec<f64>,
}

/// Residual Jacobian of `tree` at `theta` over inputs `x` (n×d).
///
/// Entries are exact up to rounding. Non-finite entries do not raise an
/// error; they clear [`Jacobian::finite`] and the caller decides.
pub fn jacobian(tree: &ExprTree, theta: &[f64], x: &DMatrix<f64>) -> Result<Jacobian> {
    let k = tree.num_params();
    if theta.len() != k {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected: k,
            actual: theta.len(),
        });
    }
    if let Some(m) = tree.max_var_index() {
        if m >= x.ncols() {
            return Err(Error::DimensionMismatch {
                what: "input columns",
                expected: m + 1,
                actual: x.ncols(),
            });
        }
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("input rows"));
    }

    let slots = tree.slots();
    let mut stack: Vec<Partial> = Vec::with_capacity(8);

    for (i, node) in tree.nodes().iter().enumerate().rev() {
        match node.kind {
            NodeKind::Constant => {
                let t = theta[slots[i].unwrap()];
                stack.push(Partial {
                    value: vec![t; n],
                    deriv: vec![1.0; n],
                });
            }
            NodeKind::Variable { index } => {
                let t = theta[slots[i].unwrap()];
                let col = x.column(index);
                stack.push(Partial {
                    value: col.iter().map(|v| t * v).collect(),
                    deriv: col.as_slice().to_vec(),
                });
            }
            NodeKind::FixedVariable { index } => {
                stack.push(Partial {
                    value: x.column(index).as_slice().to_vec(),
                    deriv: Vec::new(),
                });
            }
            NodeKind::Unary(op) => {
                let p = stack.last_mut().unwrap();
                let mut g = Vec::with_capacity(n);
                for v in p.value.iter_mut() {
                    let fx = op.apply(*v);
                    g.push(op.derivative(*v, fx));
                    *v = fx;
                }
                for col in p.deriv.chunks_exact_mut(n) {
                    col.iter_mut().zip(&g).for_each(|(d, g)| *d *= g);
                }
            }
            NodeKind::Binary(op) => {
                let children: Vec<Partial> = (0..node.arity).map(|_| stack.pop().unwrap()).collect();
                stack.push(combine(op, children, n));
            }
        }
    }
    let root = stack.pop().unwrap();
    debug_assert!(stack.is_empty());
    debug_assert_eq!(root.deriv.len(), n * k);
    let mut deriv = root.deriv;
    deriv.iter_mut().for_each(|v| *v = -*v);
    Ok(Jacobian::new(DMatrix::from_vec(n, k, deriv)))
}

fn scale_columns(block: &[f64], n: usize, factor: &[f64], out: &mut Vec<f64>) {
    for col in block.chunks_exact(n) {
        out.extend(col.iter().zip(factor).map(|(d, f)| d * f));
    }
}

fn combine(op: BinaryOp, children: Vec<Partial>, n: usize) -> Partial {
    let width: usize = children.iter().map(|c| c.deriv.len()).sum();
    let mut deriv = Vec::with_capacity(width);
    let value: Vec<f64>;
    match op {
        BinaryOp::Add => {
            value = (0..n).map(|r| children.iter().map(|c| c.value[r]).sum()).collect();
            for c in &children {
                deriv.extend_from_slice(&c.deriv);
            }
        }
        BinaryOp::Mul => {
            let mut prod = children[0].value.clone();
            for c in &children[1..] {
                prod.iter_mut().zip(&c.value).for_each(|(p, v)| *p *= v);
            }
            value = prod;
            let mut others = vec![0.0; n];
            for (j, c) in children.iter().enumerate() {
                if c.deriv.is_empty() {
                    continue;
                }
                others.fill(1.0);
                for (m, o) in children.iter().enumerate() {
                    if m != j {
                        others.iter_mut().zip(&o.value).for_each(|(p, v)| *p *= v);
                    }
                }
                scale_columns(&c.deriv, n, &others, &mut deriv);
            }
        }
        BinaryOp::Div => {
            let (a, b) = (&children[0], &children[1]);
            value = a.value.iter().zip(&b.value).map(|(p, q)| p / q).collect();
            let da: Vec<f64> = b.value.iter().map(|q| 1.0 / q).collect();
            let db: Vec<f64> = a.value.iter().zip(&b.value).map(|(p, q)| -p / (q * q)).collect();
            scale_columns(&a.deriv, n, &da, &mut deriv);
            scale_columns(&b.deriv, n, &db, &mut deriv);
        }
        BinaryOp::Aq => {
            let (a, b) = (&children[0], &children[1]);
            let s: Vec<f64> = b.value.iter().map(|q| (1.0 + q * q).sqrt()).collect();
            value = a.value.iter().zip(&s).map(|(p, s)| p / s).collect();
            let da: Vec<f64> = s.iter().map(|s| 1.0 / s).collect();
            let db: Vec<f64> = (0..n)
                .map(|r| -a.value[r] * b.value[r] / (s[r] * s[r] * s[r]))
                .collect();
            scale_columns(&a.deriv, n, &da, &mut deriv);
            scale_columns(&b.deriv, n, &db, &mut deriv);
        }
    }
    Partial { value, deriv }
}
