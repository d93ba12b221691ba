//! Hand-built reference expressions.

use super::ExprTree;

/// `θ1·x_a · θ2·x_b + θ3`: two variable coefficients that only ever appear
/// as a product, so one parameter is redundant for any θ.
pub fn toy_redundant_tree(a: usize, b: usize) -> ExprTree {
    ExprTree::add(
        ExprTree::mul(ExprTree::variable(a, 1.0), ExprTree::variable(b, 1.0)),
        ExprTree::constant(1.0),
    )
}

/// The over-parameterized Pagie solution together with its reduced forms.
#[derive(Debug, Clone)]
pub struct CaseStudyTrees {
    /// Ten parameters, three effective degrees of freedom.
    pub original: ExprTree,
    /// Four parameters, still one redundant.
    pub simplified: ExprTree,
    /// Three parameters, full rank.
    pub fixed: ExprTree,
}

/// Builds the three forms over input columns `x` and `y`.
///
/// Subtraction is written as addition with the sign folded into the
/// parameter, which flips a Jacobian column and leaves the spectrum alone.
/// The unparameterized `Y²` and `X²` factors of the reduced forms use
/// [`ExprTree::fixed_variable`].
pub fn case_study_trees(x: usize, y: usize) -> CaseStudyTrees {
    use ExprTree as T;
    let c = T::constant;
    let vx = |v| T::variable(x, v);
    let vy = |v| T::variable(y, v);

    // θ0 + θ1 · (θ2 Y · θ3 Y) / ((θ4 / (θ5 X · θ6 X)) · θ7 + θ8 Y · θ9 Y)
    let original = T::add(
        c(1.0),
        T::mul(
            c(1.0),
            T::div(
                T::mul(vy(1.0), vy(1.0)),
                T::add(
                    T::mul(T::div(c(1.0), T::mul(vx(1.0), vx(1.0))), c(1.0)),
                    T::mul(vy(1.0), vy(1.0)),
                ),
            ),
        ),
    );

    let y2 = || T::mul(T::fixed_variable(y), T::fixed_variable(y));
    let x2 = || T::mul(T::fixed_variable(x), T::fixed_variable(x));

    // θ0 + θ1 · Y² / (θ2 Y² + θ3 / X²)
    let simplified = T::add(
        c(1.0),
        T::mul(c(1.0), T::div(y2(), T::add(T::mul(c(1.0), y2()), T::div(c(1.0), x2())))),
    );

    // θ0 + θ1 · Y² / (Y² + θ2 / X²)
    let fixed = T::add(
        c(1.0),
        T::mul(c(1.0), T::div(y2(), T::add(y2(), T::div(c(1.0), x2())))),
    );

    CaseStudyTrees {
        original,
        simplified,
        fixed,
    }
}
