//! Balanced tree creation.
//!
//! A target size is drawn first; the builder then spends that node budget
//! top-down, splitting what is left after each function node as evenly as
//! possible among its children. Trees never exceed the target. With only
//! binary functions odd targets are met exactly and even ones end one node
//! short.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::expr::{BinaryOp, ExprTree, FunctionSet, UnaryOp};
use crate::rng::Rng;

/// Terminal and function choices for tree creation.
#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    pub function_set: FunctionSet,
    /// Number of input columns.
    pub num_vars: usize,
    /// Probability that a leaf is a constant instead of a weighted variable.
    pub constant_ratio: f64,
}

enum Choice {
    Binary(BinaryOp),
    Unary(UnaryOp),
}

impl TreeShape {
    /// Leaf: a weighted variable with coefficient `N(0,1)` or a constant
    /// from `U(-1,1)`.
    pub fn leaf(&self, rng: &mut Rng) -> ExprTree {
        if self.num_vars == 0 || rng.random::<f64>() < self.constant_ratio {
            ExprTree::constant(rng.random_range(-1.0..1.0))
        } else {
            let index = rng.random_range(0..self.num_vars);
            ExprTree::variable(index, StandardNormal.sample(rng))
        }
    }

    fn pick(&self, budget: usize, rng: &mut Rng) -> Option<Choice> {
        let binary = self.function_set.binary_ops();
        let unary = self.function_set.unary_ops();
        let n = if budget >= 3 { binary.len() } else { 0 } + if budget >= 2 { unary.len() } else { 0 };
        if n == 0 {
            return None;
        }
        let i = rng.random_range(0..n);
        if budget >= 3 && i < binary.len() {
            Some(Choice::Binary(binary[i]))
        } else {
            let j = if budget >= 3 { i - binary.len() } else { i };
            Some(Choice::Unary(unary[j]))
        }
    }

    /// Tree with at most `budget` nodes (at least one).
    pub fn build(&self, budget: usize, rng: &mut Rng) -> ExprTree {
        match self.pick(budget.max(1), rng) {
            None => self.leaf(rng),
            Some(Choice::Unary(op)) => ExprTree::unary(op, self.build(budget - 1, rng)),
            Some(Choice::Binary(op)) => {
                let rest = budget - 1;
                let mut small = rest / 2;
                // Without unary functions only odd sizes are reachable, so
                // keep both shares odd when the budget allows it.
                if self.function_set.unary_ops().is_empty() && small.is_multiple_of(2) && small >= 2 {
                    small -= 1;
                }
                let (a, b) = if rest % 2 == 1 && rng.random::<bool>() {
                    (rest - small, small)
                } else {
                    (small, rest - small)
                };
                ExprTree::function(op, vec![self.build(a, rng), self.build(b, rng)])
            }
        }
    }

    /// Tree whose target size is drawn uniformly from `[min, max]`.
    pub fn random_tree(&self, min: usize, max: usize, rng: &mut Rng) -> ExprTree {
        let target = rng.random_range(min.min(max)..=max);
        self.build(target, rng)
    }

    /// A different operator of the same arity from the function set, if any.
    pub(crate) fn other_binary(&self, current: BinaryOp, rng: &mut Rng) -> Option<BinaryOp> {
        let options: Vec<BinaryOp> = self
            .function_set
            .binary_ops()
            .iter()
            .copied()
            .filter(|&op| op != current)
            .collect();
        options.choose(rng).copied()
    }

    pub(crate) fn other_unary(&self, current: UnaryOp, rng: &mut Rng) -> Option<UnaryOp> {
        let options: Vec<UnaryOp> = self
            .function_set
            .unary_ops()
            .iter()
            .copied()
            .filter(|&op| op != current)
            .collect();
        options.choose(rng).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn shape(set: FunctionSet) -> TreeShape {
        TreeShape {
            function_set: set,
            num_vars: 2,
            constant_ratio: 0.25,
        }
    }

    #[test]
    fn respects_budget_and_set() {
        let mut rng = stream(3, &[]);
        for set in [FunctionSet::Small, FunctionSet::Large] {
            let s = shape(set);
            for budget in 1..60 {
                let t = s.build(budget, &mut rng);
                assert!(t.size() <= budget, "{} > {budget}", t.size());
                assert!(t.uses_only(set));
            }
        }
    }

    #[test]
    fn small_set_trees_fill_odd_budgets() {
        let mut rng = stream(4, &[]);
        let s = shape(FunctionSet::Small);
        for budget in [1usize, 3, 5, 9, 15, 31, 49, 99] {
            let t = s.build(budget, &mut rng);
            assert_eq!(t.size(), budget);
            assert_eq!(t.num_params(), budget.div_ceil(2));
        }
    }
}
