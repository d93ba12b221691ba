//! Variation operators: subtree crossover and the three mutations.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::init::TreeShape;
use crate::expr::{ExprTree, NodeKind};
use crate::rng::Rng;

/// Cut-point draws before crossover gives up and copies the first parent.
pub const CROSSOVER_TRIES: usize = 16;

/// Replaces a uniformly chosen subtree of `a` with a uniformly chosen
/// subtree of `b`, retrying until the child fits `max_size`.
pub fn subtree_crossover(a: &ExprTree, b: &ExprTree, max_size: usize, rng: &mut Rng) -> ExprTree {
    let la = a.subtree_lens();
    let lb = b.subtree_lens();
    for _ in 0..CROSSOVER_TRIES {
        let i = rng.random_range(0..a.len());
        let j = rng.random_range(0..b.len());
        if a.len() - la[i] + lb[j] <= max_size {
            return a.replace_subtree(i, &b.subtree(j));
        }
    }
    a.clone()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    /// Swap one function node for another of the same arity.
    Point,
    /// Multiply every parameter by an independent `N(1, 0.1)` factor.
    Parameters,
    /// Replace a random subtree with a fresh one that fits the budget.
    Subtree,
}

impl MutationKind {
    pub const ALL: [MutationKind; 3] = [MutationKind::Point, MutationKind::Parameters, MutationKind::Subtree];
}

/// With probability `rate`, applies one mutation chosen uniformly from
/// [`MutationKind::ALL`]. Otherwise returns the tree unchanged.
pub fn mutate(tree: &ExprTree, rate: f64, max_size: usize, shape: &TreeShape, rng: &mut Rng) -> ExprTree {
    if rate <= 0.0 || rng.random::<f64>() >= rate {
        return tree.clone();
    }
    let kind = MutationKind::ALL[rng.random_range(0..MutationKind::ALL.len())];
    apply_mutation(tree, kind, max_size, shape, rng)
}

pub fn apply_mutation(
    tree: &ExprTree,
    kind: MutationKind,
    max_size: usize,
    shape: &TreeShape,
    rng: &mut Rng,
) -> ExprTree {
    match kind {
        MutationKind::Point => point_mutation(tree, shape, rng),
        MutationKind::Parameters => scale_parameters(tree, rng),
        MutationKind::Subtree => {
            let i = rng.random_range(0..tree.len());
            let budget = max_size.saturating_sub(tree.len() - tree.subtree_len(i)).max(1);
            let fresh = shape.random_tree(1, budget, rng);
            tree.replace_subtree(i, &fresh)
        }
    }
}

/// Point mutation of a random function node; trees without one get a new
/// leaf instead.
fn point_mutation(tree: &ExprTree, shape: &TreeShape, rng: &mut Rng) -> ExprTree {
    let internal: Vec<usize> = (0..tree.len()).filter(|&i| !tree.nodes()[i].is_leaf()).collect();
    if internal.is_empty() {
        return shape.leaf(rng);
    }
    let i = internal[rng.random_range(0..internal.len())];
    let node = tree.nodes()[i];
    let kind = match node.kind {
        NodeKind::Binary(op) => shape
            .other_binary(op, rng)
            .filter(|o| node.arity <= o.max_arity())
            .map(NodeKind::Binary),
        NodeKind::Unary(op) => shape.other_unary(op, rng).map(NodeKind::Unary),
        _ => None,
    };
    let mut out = tree.clone();
    if let Some(kind) = kind {
        out.set_kind(i, kind).expect("arity preserved");
    }
    out
}

fn scale_parameters(tree: &ExprTree, rng: &mut Rng) -> ExprTree {
    let factor = Normal::new(1.0, 0.1).expect("valid normal");
    let theta: Vec<f64> = tree.parameters().iter().map(|t| t * factor.sample(rng)).collect();
    tree.with_parameters(&theta).unwrap_or_else(|_| tree.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BinaryOp, FunctionSet};
    use crate::rng::stream;

    fn shape() -> TreeShape {
        TreeShape {
            function_set: FunctionSet::Small,
            num_vars: 2,
            constant_ratio: 0.25,
        }
    }

    #[test]
    fn self_crossover_keeps_node_kinds() {
        let mut rng = stream(5, &[]);
        let s = shape();
        for _ in 0..200 {
            let t = s.random_tree(3, 31, &mut rng);
            let c = subtree_crossover(&t, &t, 31, &mut rng);
            assert!(c.size() <= 31);
            for n in c.nodes() {
                assert!(t.nodes().contains(n));
            }
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = stream(6, &[]);
        let t = shape().random_tree(3, 15, &mut rng);
        for _ in 0..50 {
            assert_eq!(mutate(&t, 0.0, 15, &shape(), &mut rng), t);
        }
    }

    #[test]
    fn add_mul_swap_keeps_parameter_count() {
        let mut rng = stream(7, &[]);
        let t = ExprTree::add(ExprTree::variable(0, 1.0), ExprTree::constant(2.0));
        let m = apply_mutation(&t, MutationKind::Point, 15, &shape(), &mut rng);
        assert_ne!(m.nodes()[0].kind, NodeKind::Binary(BinaryOp::Add));
        assert_eq!(m.num_params(), t.num_params());
        assert_eq!(m.parameters(), t.parameters());
    }

    #[test]
    fn mutations_respect_size() {
        let mut rng = stream(8, &[]);
        let s = shape();
        for _ in 0..300 {
            let t = s.random_tree(3, 15, &mut rng);
            let m = mutate(&t, 1.0, 15, &s, &mut rng);
            assert!(m.size() <= 15);
            assert!(m.uses_only(FunctionSet::Small));
        }
    }
}
