//! Expression trees over the GP function and terminal sets.
//!
//! A tree is stored as a flat pre-order node list. Every subtree is a
//! contiguous range of that list, which keeps crossover and the
//! Jacobian sweep simple. Numeric parameters live inside the nodes
//! (variable coefficients and constants); their pre-order rank is the
//! parameter slot, so the slot layout is always the contiguous range `0..k`.

mod build;
mod infix;

pub use build::{case_study_trees, toy_redundant_tree, CaseStudyTrees};
pub use infix::parse;

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    /// n-ary sum (arity 2 or 3).
    Add,
    /// n-ary product (arity 2 or 3).
    Mul,
    /// Unprotected real division, strictly binary.
    Div,
    /// Analytic quotient `a / sqrt(1 + b^2)`.
    Aq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    LogAbs,
    Exp,
    Sin,
    Cos,
    Tanh,
    Square,
    SqrtAbs,
    Cbrt,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Aq];

    pub fn min_arity(self) -> usize {
        2
    }

    pub fn max_arity(self) -> usize {
        match self {
            BinaryOp::Add | BinaryOp::Mul => 3,
            BinaryOp::Div | BinaryOp::Aq => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Aq => "aq",
        }
    }
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 8] = [
        UnaryOp::LogAbs,
        UnaryOp::Exp,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tanh,
        UnaryOp::Square,
        UnaryOp::SqrtAbs,
        UnaryOp::Cbrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::LogAbs => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Square => "square",
            UnaryOp::SqrtAbs => "sqrt",
            UnaryOp::Cbrt => "cbrt",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::LogAbs => x.abs().ln(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Square => x * x,
            UnaryOp::SqrtAbs => x.abs().sqrt(),
            UnaryOp::Cbrt => x.cbrt(),
        }
    }

    /// First derivative at `x`, given the already computed `fx = apply(x)`.
    pub fn derivative(self, x: f64, fx: f64) -> f64 {
        match self {
            UnaryOp::LogAbs => 1.0 / x,
            UnaryOp::Exp => fx,
            UnaryOp::Sin => x.cos(),
            UnaryOp::Cos => -x.sin(),
            UnaryOp::Tanh => 1.0 - fx * fx,
            UnaryOp::Square => 2.0 * x,
            UnaryOp::SqrtAbs => x.signum() / (2.0 * fx),
            UnaryOp::Cbrt => 1.0 / (3.0 * fx * fx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Binary(BinaryOp),
    Unary(UnaryOp),
    /// Input column scaled by its own coefficient; one parameter slot.
    Variable { index: usize },
    /// Input column without a coefficient. Only used for hand-built
    /// reference expressions; GP never creates these.
    FixedVariable { index: usize },
    /// Numeric parameter; one parameter slot.
    Constant,
}

/// A single pre-order node. `value` holds the coefficient of a
/// [`NodeKind::Variable`] or the value of a [`NodeKind::Constant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub arity: usize,
    pub value: f64,
}

impl Node {
    pub fn function(op: BinaryOp, arity: usize) -> Self {
        Node {
            kind: NodeKind::Binary(op),
            arity,
            value: 0.0,
        }
    }

    pub fn unary(op: UnaryOp) -> Self {
        Node {
            kind: NodeKind::Unary(op),
            arity: 1,
            value: 0.0,
        }
    }

    pub fn variable(index: usize, coeff: f64) -> Self {
        Node {
            kind: NodeKind::Variable { index },
            arity: 0,
            value: coeff,
        }
    }

    pub fn fixed_variable(index: usize) -> Self {
        Node {
            kind: NodeKind::FixedVariable { index },
            arity: 0,
            value: 1.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Node {
            kind: NodeKind::Constant,
            arity: 0,
            value,
        }
    }

    #[inline]
    pub fn is_parameter(&self) -> bool {
        matches!(self.kind, NodeKind::Variable { .. } | NodeKind::Constant)
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.arity == 0
    }
}

/// The two function sets the GP can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionSet {
    /// `{+, *, /}`
    Small,
    /// Small plus `log|x|, exp, aq, sin, cos, tanh, x^2, sqrt|x|, cbrt`.
    Large,
}

impl FunctionSet {
    pub fn binary_ops(self) -> &'static [BinaryOp] {
        match self {
            FunctionSet::Small => &[BinaryOp::Add, BinaryOp::Mul, BinaryOp::Div],
            FunctionSet::Large => &BinaryOp::ALL,
        }
    }

    pub fn unary_ops(self) -> &'static [UnaryOp] {
        match self {
            FunctionSet::Small => &[],
            FunctionSet::Large => &UnaryOp::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionSet::Small => "Small",
            FunctionSet::Large => "Large",
        }
    }

    /// Whether `kind` is allowed in trees evolved with this set. Terminals
    /// with coefficients are always allowed.
    pub fn allows(self, kind: &NodeKind) -> bool {
        match kind {
            NodeKind::Binary(op) => self.binary_ops().contains(op),
            NodeKind::Unary(op) => self.unary_ops().contains(op),
            NodeKind::Variable { .. } | NodeKind::Constant => true,
            NodeKind::FixedVariable { .. } => false,
        }
    }
}

impl std::str::FromStr for FunctionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(FunctionSet::Small),
            "large" | "full" => Ok(FunctionSet::Large),
            other => Err(Error::Config(format!("unknown function set '{other}'"))),
        }
    }
}

/// Expression tree in pre-order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Node>,
}

impl ExprTree {
    /// Builds a tree from a pre-order node list, checking arities and that
    /// the list encodes exactly one rooted tree.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::MalformedTree("empty node list".into()));
        }
        let mut open = 1usize;
        for (i, node) in nodes.iter().enumerate() {
            check_arity(node).map_err(|m| Error::MalformedTree(format!("node {i}: {m}")))?;
            if open == 0 {
                return Err(Error::MalformedTree(format!("trailing nodes from index {i}")));
            }
            open = open - 1 + node.arity;
        }
        if open != 0 {
            return Err(Error::MalformedTree(format!("{open} missing children")));
        }
        Ok(ExprTree { nodes })
    }

    pub fn variable(index: usize, coeff: f64) -> Self {
        ExprTree {
            nodes: vec![Node::variable(index, coeff)],
        }
    }

    pub fn fixed_variable(index: usize) -> Self {
        ExprTree {
            nodes: vec![Node::fixed_variable(index)],
        }
    }

    pub fn constant(value: f64) -> Self {
        ExprTree {
            nodes: vec![Node::constant(value)],
        }
    }

    pub fn unary(op: UnaryOp, child: ExprTree) -> Self {
        let mut nodes = Vec::with_capacity(child.len() + 1);
        nodes.push(Node::unary(op));
        nodes.extend(child.nodes);
        ExprTree { nodes }
    }

    /// Joins `children` under a function node.
    ///
    /// Panics if the arity does not suit `op`; use [`ExprTree::from_nodes`]
    /// for unvalidated input.
    pub fn function(op: BinaryOp, children: Vec<ExprTree>) -> Self {
        let node = Node::function(op, children.len());
        if let Err(m) = check_arity(&node) {
            panic!("{m}");
        }
        let mut nodes = Vec::with_capacity(1 + children.iter().map(ExprTree::len).sum::<usize>());
        nodes.push(node);
        for c in children {
            nodes.extend(c.nodes);
        }
        ExprTree { nodes }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: ExprTree, b: ExprTree) -> Self {
        Self::function(BinaryOp::Add, vec![a, b])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: ExprTree, b: ExprTree) -> Self {
        Self::function(BinaryOp::Mul, vec![a, b])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(a: ExprTree, b: ExprTree) -> Self {
        Self::function(BinaryOp::Div, vec![a, b])
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node count. A variable with its coefficient is a single node.
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// Number of parameter slots `k`.
    pub fn num_params(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_parameter()).count()
    }

    /// Slot index of every node, `None` for non-parameter nodes.
    pub fn slots(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.nodes
            .iter()
            .map(|n| {
                n.is_parameter().then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    /// Parameter vector in slot (pre-order) order.
    pub fn parameters(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter(|n| n.is_parameter())
            .map(|n| n.value)
            .collect()
    }

    /// Writes `theta` into the parameter slots.
    pub fn set_parameters(&mut self, theta: &[f64]) -> Result<()> {
        let k = self.num_params();
        if theta.len() != k {
            return Err(Error::DimensionMismatch {
                what: "parameter vector length",
                expected: k,
                actual: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        let mut it = theta.iter();
        for n in self.nodes.iter_mut().filter(|n| n.is_parameter()) {
            n.value = *it.next().unwrap();
        }
        Ok(())
    }

    pub fn with_parameters(&self, theta: &[f64]) -> Result<Self> {
        let mut t = self.clone();
        t.set_parameters(theta)?;
        Ok(t)
    }

    /// Largest referenced input column, if any.
    pub fn max_var_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Variable { index } | NodeKind::FixedVariable { index } => Some(index),
                _ => None,
            })
            .max()
    }

    /// Length of the subtree rooted at `i`.
    pub fn subtree_len(&self, i: usize) -> usize {
        let mut open = 1usize;
        let mut j = i;
        while open > 0 {
            open = open - 1 + self.nodes[j].arity;
            j += 1;
        }
        j - i
    }

    /// Subtree lengths of all nodes, computed in one reverse sweep.
    pub fn subtree_lens(&self) -> Vec<usize> {
        let mut lens = vec![0usize; self.nodes.len()];
        let mut stack: Vec<usize> = Vec::new();
        for i in (0..self.nodes.len()).rev() {
            let a = self.nodes[i].arity;
            let mut len = 1;
            for _ in 0..a {
                len += stack.pop().expect("well-formed tree");
            }
            lens[i] = len;
            stack.push(len);
        }
        lens
    }

    pub fn subtree(&self, i: usize) -> ExprTree {
        let len = self.subtree_len(i);
        ExprTree {
            nodes: self.nodes[i..i + len].to_vec(),
        }
    }

    /// Returns a copy with the subtree at `i` replaced by `replacement`.
    pub fn replace_subtree(&self, i: usize, replacement: &ExprTree) -> ExprTree {
        let len = self.subtree_len(i);
        let mut nodes = Vec::with_capacity(self.len() - len + replacement.len());
        nodes.extend_from_slice(&self.nodes[..i]);
        nodes.extend_from_slice(&replacement.nodes);
        nodes.extend_from_slice(&self.nodes[i + len..]);
        ExprTree { nodes }
    }

    /// Replaces the operator at `i` in place; arity must stay valid.
    pub fn set_kind(&mut self, i: usize, kind: NodeKind) -> Result<()> {
        let node = Node {
            kind,
            ..self.nodes[i]
        };
        check_arity(&node).map_err(Error::MalformedTree)?;
        self.nodes[i] = node;
        Ok(())
    }

    fn check_inputs(&self, x: &DMatrix<f64>) -> Result<()> {
        if let Some(m) = self.max_var_index() {
            if m >= x.ncols() {
                return Err(Error::DimensionMismatch {
                    what: "input columns",
                    expected: m + 1,
                    actual: x.ncols(),
                });
            }
        }
        Ok(())
    }

    /// Evaluates the tree row-wise on `x` (n×d) with the stored parameters.
    /// Non-finite outputs are returned as-is.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_inputs(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Evaluates with an explicit parameter vector instead of the stored one.
    pub fn evaluate_with(&self, theta: &[f64], x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.with_parameters_lenient(theta)?.evaluate(x)
    }

    // Like `with_parameters` but accepts non-finite values, which evaluation
    // must be able to propagate.
    pub(crate) fn with_parameters_lenient(&self, theta: &[f64]) -> Result<Self> {
        let k = self.num_params();
        if theta.len() != k {
            return Err(Error::DimensionMismatch {
                what: "parameter vector length",
                expected: k,
                actual: theta.len(),
            });
        }
        let mut t = self.clone();
        let mut it = theta.iter();
        for n in t.nodes.iter_mut().filter(|n| n.is_parameter()) {
            n.value = *it.next().unwrap();
        }
        Ok(t)
    }

    fn eval_unchecked(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let n = x.nrows();
        let mut stack: Vec<Vec<f64>> = Vec::with_capacity(8);
        let mut pool: Vec<Vec<f64>> = Vec::new();
        let fresh = |pool: &mut Vec<Vec<f64>>| pool.pop().unwrap_or_else(|| vec![0.0; n]);

        for node in self.nodes.iter().rev() {
            match node.kind {
                NodeKind::Constant => {
                    let mut buf = fresh(&mut pool);
                    buf.fill(node.value);
                    stack.push(buf);
                }
                NodeKind::Variable { index } => {
                    let mut buf = fresh(&mut pool);
                    let col = x.column(index);
                    for (b, &v) in buf.iter_mut().zip(col.iter()) {
                        *b = node.value * v;
                    }
                    stack.push(buf);
                }
                NodeKind::FixedVariable { index } => {
                    let mut buf = fresh(&mut pool);
                    buf.copy_from_slice(x.column(index).as_slice());
                    stack.push(buf);
                }
                NodeKind::Unary(op) => {
                    let buf = stack.last_mut().unwrap();
                    for v in buf.iter_mut() {
                        *v = op.apply(*v);
                    }
                }
                NodeKind::Binary(op) => {
                    // First child ends up on top of the stack.
                    let mut acc = stack.pop().unwrap();
                    for _ in 1..node.arity {
                        let rhs = stack.pop().unwrap();
                        match op {
                            BinaryOp::Add => acc.iter_mut().zip(&rhs).for_each(|(a, b)| *a += b),
                            BinaryOp::Mul => acc.iter_mut().zip(&rhs).for_each(|(a, b)| *a *= b),
                            BinaryOp::Div => acc.iter_mut().zip(&rhs).for_each(|(a, b)| *a /= b),
                            BinaryOp::Aq => acc
                                .iter_mut()
                                .zip(&rhs)
                                .for_each(|(a, b)| *a /= (1.0 + b * b).sqrt()),
                        }
                        pool.push(rhs);
                    }
                    stack.push(acc);
                }
            }
        }
        debug_assert_eq!(stack.len(), 1);
        stack.pop().unwrap()
    }

    /// True if every node is allowed by `set` (terminals always are).
    pub fn uses_only(&self, set: FunctionSet) -> bool {
        self.nodes.iter().all(|n| set.allows(&n.kind))
    }
}

fn check_arity(node: &Node) -> std::result::Result<(), String> {
    let ok = match node.kind {
        NodeKind::Binary(op) => (op.min_arity()..=op.max_arity()).contains(&node.arity),
        NodeKind::Unary(_) => node.arity == 1,
        _ => node.arity == 0,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("invalid arity {} for {:?}", node.arity, node.kind))
    }
}

/// Residual vector `y - f(X, theta)`.
pub fn residuals(tree: &ExprTree, theta: &[f64], x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "target length",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let mut f = tree.evaluate_with(theta, x)?;
    for (fi, yi) in f.iter_mut().zip(y) {
        *fi = yi - *fi;
    }
    Ok(f)
}
