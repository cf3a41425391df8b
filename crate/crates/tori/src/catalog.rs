//! Shipped examples.

use crate::error::Result;
use crate::form::LatticeForm;

/// Provenance of [`isospectral_forms_1729`].
pub const PAIR_1729_PROVENANCE: &str = "Even positive quaternary forms of determinant 1729: the smallest \
isospectral non-isometric quaternary pair (A. Schiemann, Arch. Math. 54 (1990) 372-375). These matrices \
were located by an exhaustive search over reduced even quaternary forms of determinant 1729 and are the \
two isometry classes of the one theta class that splits. Equal theta series and non-isometry are \
re-checked by the test suite, not assumed.";

/// Integral forms `Q₁`, `Q₂` with equal representation numbers and no integral isometry.
pub fn isospectral_forms_1729() -> (LatticeForm, LatticeForm) {
    let q1 =
        LatticeForm::from_integers(&[vec![4, 0, -1, -1], vec![0, 8, -1, -4], vec![-1, -1, 8, 3], vec![-1, -4, 3, 10]])
            .expect("Q1 is positive definite");
    let q2 =
        LatticeForm::from_integers(&[vec![4, 2, -1, -2], vec![2, 8, -3, 3], vec![-1, -3, 10, 3], vec![-2, 3, 3, 12]])
            .expect("Q2 is positive definite");
    (q1.with_provenance(PAIR_1729_PROVENANCE), q2.with_provenance(PAIR_1729_PROVENANCE))
}

/// Four-dimensional tori with Gram matrices `Q₁⁻¹`, `Q₂⁻¹`; their dual forms are `Q₁`, `Q₂`.
pub fn isospectral_tori_4d() -> Result<(LatticeForm, LatticeForm)> {
    let (q1, q2) = isospectral_forms_1729();
    let note = format!("Torus Gram matrix Q^-1 for Q below. {PAIR_1729_PROVENANCE}");
    Ok((q1.inverse()?.with_provenance(&note), q2.inverse()?.with_provenance(&note)))
}

/// `g₁ = I` and the sheared `g₂ = [[1,1],[1,2]]` on `R²/Z²`.
pub fn shear_pair() -> (LatticeForm, LatticeForm) {
    let g1 = LatticeForm::identity(2).with_provenance("Euclidean metric on the unit square torus");
    let g2 = LatticeForm::from_integers(&[vec![1, 1], vec![1, 2]])
        .expect("positive definite")
        .with_provenance("pull-back of the Euclidean metric by the linear shear (x, y) -> (x + y, y)");
    (g1, g2)
}
