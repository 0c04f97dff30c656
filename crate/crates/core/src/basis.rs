//! Orthogonal Hermitian operator bases `{C_k}` with `tr(C_k C_l) = D δ_kl`.
//!
//! Any such basis splits the maximally entangled bond state as
//! `|φ_D><φ_D| = (1/D²) Σ_k C_k ⊗ C_kᵀ`, so the convex hull of the `C_k`
//! (head end) and of the `C_kᵀ` (tail end) serve as generalized local state
//! spaces for the two virtual particles of a bond.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::linalg::{c, max_abs, CMatrix, CVector, HermitianOperator, PureState};

/// Tolerance on the Gram matrix `tr(C_k C_l) - D δ_kl`.
pub const GRAM_TOL: f64 = 1e-10;

/// Minimum anchor overlap `<φ|C_k|φ>` accepted as strictly positive.
pub const ANCHOR_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Aligned,
    PhasePoint,
    Custom,
}

#[derive(Clone, Debug)]
pub struct OperatorBasis {
    bond_dim: usize,
    elements: Vec<HermitianOperator>,
    transposed: Vec<HermitianOperator>,
    anchor: Option<PureState>,
    construction: Construction,
}

/// One end of a bond: the hull of `C_k` (head) or of `C_kᵀ` (tail).
#[derive(Clone, Copy, Debug)]
pub struct VirtualSpaceTag<'a> {
    pub basis: &'a OperatorBasis,
    pub transposed: bool,
}

impl VirtualSpaceTag<'_> {
    pub fn element(&self, k: usize) -> &HermitianOperator {
        self.basis.element(k, self.transposed)
    }
}

impl OperatorBasis {
    /// Validates the normalization and, if an anchor is given, strict anchor positivity.
    pub fn new(
        bond_dim: usize,
        elements: Vec<HermitianOperator>,
        anchor: Option<PureState>,
        construction: Construction,
    ) -> Result<Self> {
        if bond_dim < 2 {
            return usage(format!("bond dimension must be >= 2, got {bond_dim}"));
        }
        if elements.len() != bond_dim * bond_dim {
            return usage(format!(
                "basis for D={bond_dim} needs {} elements, got {}",
                bond_dim * bond_dim,
                elements.len()
            ));
        }
        if elements.iter().any(|e| e.dim() != bond_dim) {
            return usage("basis element dimension differs from the bond dimension");
        }
        let gram = gram_error(bond_dim, &elements);
        if gram > GRAM_TOL {
            return Err(Error::Construction(format!(
                "basis violates tr(C_k C_l) = D δ_kl (max error {gram:e})"
            )));
        }
        if let Some(phi) = &anchor {
            if phi.dim() != bond_dim {
                return usage("anchor dimension differs from the bond dimension");
            }
            let worst = elements.iter().map(|e| e.expectation(phi)).fold(f64::INFINITY, f64::min);
            if worst < ANCHOR_FLOOR {
                return Err(Error::Construction(format!(
                    "anchor overlap {worst:e} is not strictly positive"
                )));
            }
        }
        let transposed = elements.iter().map(HermitianOperator::transpose).collect();
        Ok(Self {
            bond_dim,
            elements,
            transposed,
            anchor,
            construction,
        })
    }

    /// Basis with all anchor overlaps equal to `1/√D`.
    ///
    /// `G_1 = |φ><φ|` is completed to a Hilbert-Schmidt orthonormal Hermitian
    /// basis by Gram-Schmidt over the canonical spanning set, then mixed by
    /// the Householder reflection `R` sending `e_1` to the uniform vector
    /// `(1/D, ..., 1/D)`: `C_k = √D Σ_l R_kl G_l`.
    pub fn aligned(bond_dim: usize, anchor: PureState) -> Result<Self> {
        if bond_dim < 2 {
            return usage(format!("bond dimension must be >= 2, got {bond_dim}"));
        }
        if anchor.dim() != bond_dim {
            return usage("anchor dimension differs from the bond dimension");
        }
        let n = bond_dim * bond_dim;
        let mut ortho: Vec<CMatrix> = vec![HermitianOperator::projector(&anchor).into_matrix()];
        for cand in canonical_hermitian_set(bond_dim) {
            if ortho.len() == n {
                break;
            }
            let mut v = cand;
            for _ in 0..2 {
                for g in &ortho {
                    let proj = hs(g, &v);
                    v -= g * c(proj, 0.0);
                }
            }
            let norm = hs(&v, &v).sqrt();
            if norm > 1e-8 {
                ortho.push(v / c(norm, 0.0));
            }
        }
        if ortho.len() != n {
            return Err(Error::Construction("Gram-Schmidt did not produce a full basis".into()));
        }

        // Householder: R = I - 2 w wᵀ / (wᵀw), w = e_1 - u.
        let u = 1.0 / bond_dim as f64;
        let w: Vec<f64> = (0..n).map(|k| if k == 0 { 1.0 - u } else { -u }).collect();
        let ww: f64 = w.iter().map(|x| x * x).sum();
        let refl = |k: usize, l: usize| -> f64 {
            let delta = if k == l { 1.0 } else { 0.0 };
            delta - 2.0 * w[k] * w[l] / ww
        };
        let scale = (bond_dim as f64).sqrt();
        let elements = (0..n)
            .map(|k| {
                let mut m = CMatrix::zeros(bond_dim, bond_dim);
                for (l, g) in ortho.iter().enumerate() {
                    m += g * c(scale * refl(k, l), 0.0);
                }
                // Round-off from the mixing can leave ~1e-16 anti-Hermitian parts.
                let herm = (&m + m.adjoint()) * c(0.5, 0.0);
                HermitianOperator::new(herm)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bond_dim, elements, Some(anchor), Construction::Aligned)
    }

    /// The qubit phase-point operators
    /// `A_ab = (I + (-1)^a σx + (-1)^(a+b) σy + (-1)^b σz) / 2`, ordered
    /// `ab = 00, 01, 10, 11`, anchored on the +1 eigenstate of `(σx+σy+σz)/√3`.
    pub fn phase_point() -> Self {
        let elements = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(a, b)| {
                let (x, y, z) = phase_point_direction(a, b);
                bloch_operator(x, y, z)
            })
            .collect();
        let anchor = PureState::bloch(1.0, 1.0, 1.0).expect("non-zero direction");
        Self::new(2, elements, Some(anchor), Construction::PhasePoint).expect("phase-point basis is valid")
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    /// `D²`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn anchor(&self) -> Option<&PureState> {
        self.anchor.as_ref()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn element(&self, k: usize, transposed: bool) -> &HermitianOperator {
        if transposed {
            &self.transposed[k]
        } else {
            &self.elements[k]
        }
    }

    pub fn space(&self, transposed: bool) -> VirtualSpaceTag<'_> {
        VirtualSpaceTag { basis: self, transposed }
    }

    pub fn gram_error(&self) -> f64 {
        gram_error(self.bond_dim, &self.elements)
    }

    /// `<φ|C_k|φ>` for every element, if anchored.
    pub fn anchor_overlaps(&self) -> Option<Vec<f64>> {
        self.anchor
            .as_ref()
            .map(|phi| self.elements.iter().map(|e| e.expectation(phi)).collect())
    }
}

/// Bloch direction of `A_ab`.
pub fn phase_point_direction(a: u8, b: u8) -> (f64, f64, f64) {
    let sign = |p: u8| if p % 2 == 0 { 1.0 } else { -1.0 };
    (sign(a), sign(a + b), sign(b))
}

/// `(I + x σx + y σy + z σz) / 2`.
pub fn bloch_operator(x: f64, y: f64, z: f64) -> HermitianOperator {
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[c((1.0 + z) / 2.0, 0.0), c(x / 2.0, -y / 2.0), c(x / 2.0, y / 2.0), c((1.0 - z) / 2.0, 0.0)],
    );
    HermitianOperator::new(m).expect("Bloch operator is Hermitian")
}

fn hs(a: &CMatrix, b: &CMatrix) -> f64 {
    crate::linalg::trace_product(a, b)
}

/// `|j><j|`, then `(|j><k| + |k><j|)/√2`, then `i(|j><k| - |k><j|)/√2`, `j < k` lexicographic.
pub fn canonical_hermitian_set(dim: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        let mut m = CMatrix::zeros(dim, dim);
        m[(j, j)] = c(1.0, 0.0);
        out.push(m);
    }
    let r = 1.0 / 2f64.sqrt();
    for j in 0..dim {
        for k in j + 1..dim {
            let mut m = CMatrix::zeros(dim, dim);
            m[(j, k)] = c(r, 0.0);
            m[(k, j)] = c(r, 0.0);
            out.push(m);
        }
    }
    for j in 0..dim {
        for k in j + 1..dim {
            let mut m = CMatrix::zeros(dim, dim);
            m[(j, k)] = c(0.0, r);
            m[(k, j)] = c(0.0, -r);
            out.push(m);
        }
    }
    out
}

/// Max-norm of `tr(C_k C_l) - D δ_kl`.
pub fn gram_error(bond_dim: usize, elements: &[HermitianOperator]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, a) in elements.iter().enumerate() {
        for (l, b) in elements.iter().enumerate() {
            let target = if k == l { bond_dim as f64 } else { 0.0 };
            worst = worst.max((a.overlap(b) - target).abs());
        }
    }
    worst
}

/// `Σ_j |jj> / √D`.
pub fn max_ent_state(bond_dim: usize) -> Result<PureState> {
    if bond_dim < 2 {
        return usage(format!("bond dimension must be >= 2, got {bond_dim}"));
    }
    let mut v = CVector::zeros(bond_dim * bond_dim);
    let a = 1.0 / (bond_dim as f64).sqrt();
    for j in 0..bond_dim {
        v[j * bond_dim + j] = c(a, 0.0);
    }
    PureState::new(v)
}

/// Max-norm of `(1/D²) Σ_k C_k ⊗ C_kᵀ - |φ_D><φ_D|` for an arbitrary element list.
pub fn decomposition_error(bond_dim: usize, elements: &[HermitianOperator]) -> Result<f64> {
    let phi = max_ent_state(bond_dim)?;
    let target = HermitianOperator::projector(&phi).into_matrix();
    let n = bond_dim * bond_dim;
    let mut sum = CMatrix::zeros(n, n);
    for e in elements {
        sum += e.matrix().kronecker(&e.matrix().transpose());
    }
    sum /= c((bond_dim * bond_dim) as f64, 0.0);
    Ok(max_abs(&(sum - target)))
}

pub fn verify_decomposition(basis: &OperatorBasis) -> f64 {
    decomposition_error(basis.bond_dim, &basis.elements).expect("validated basis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn aligned_d2_zero_anchor_overlaps() {
        let b = OperatorBasis::aligned(2, PureState::basis(2, 0).unwrap()).unwrap();
        assert_eq!(b.len(), 4);
        for o in b.anchor_overlaps().unwrap() {
            assert_abs_diff_eq!(o, 1.0 / 2f64.sqrt(), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(b.elements()[0].overlap(&b.elements()[1]), 0.0, epsilon = 1e-12);
        assert!(verify_decomposition(&b) <= 1e-12);
    }

    #[test]
    fn aligned_d3_uniform_anchor_overlaps() {
        let b = OperatorBasis::aligned(3, PureState::uniform(3).unwrap()).unwrap();
        assert_eq!(b.len(), 9);
        for o in b.anchor_overlaps().unwrap() {
            assert_abs_diff_eq!(o, 1.0 / 3f64.sqrt(), epsilon = 1e-10);
        }
        assert!(b.gram_error() <= 1e-10);
    }

    #[test]
    fn aligned_rejects_small_dimension() {
        let s = PureState::basis(1, 0).unwrap();
        assert!(matches!(OperatorBasis::aligned(1, s), Err(Error::Usage(_))));
    }

    #[test]
    fn phase_point_a00_matches_closed_form() {
        let b = OperatorBasis::phase_point();
        let a00 = b.elements()[0].matrix();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, -0.5), c(0.5, 0.5), c(0.0, 0.0)]);
        assert!(max_abs(&(a00 - expected)) < 1e-15);
        for e in b.elements() {
            assert_abs_diff_eq!(e.trace(), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(b.elements()[0].overlap(&b.elements()[1]), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn phase_point_anchor_margin() {
        let b = OperatorBasis::phase_point();
        let overlaps = b.anchor_overlaps().unwrap();
        let min = overlaps.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(min, (1.0 - 1.0 / 3f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(overlaps[0], (1.0 + 3f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_anchor_is_not_strict_for_phase_points() {
        let b = OperatorBasis::phase_point();
        let res = OperatorBasis::new(2, b.elements().to_vec(), Some(PureState::basis(2, 0).unwrap()), Construction::Custom);
        assert!(matches!(res, Err(Error::Construction(_))));
    }

    #[test]
    fn phase_point_decomposition() {
        assert!(verify_decomposition(&OperatorBasis::phase_point()) <= 1e-12);
    }

    #[test]
    fn broken_normalization_is_detected() {
        let b = OperatorBasis::phase_point();
        let mut elems = b.elements().to_vec();
        elems[2] = elems[2].scale(1.1);
        assert!(decomposition_error(2, &elems).unwrap() > 0.01);
        assert!(OperatorBasis::new(2, elems, None, Construction::Custom).is_err());
    }

    #[test]
    fn max_ent_state_amplitudes() {
        let s = max_ent_state(3).unwrap();
        let a = 1.0 / 3f64.sqrt();
        for (i, z) in s.amplitudes().iter().enumerate() {
            let expected = if i % 4 == 0 { a } else { 0.0 };
            assert_abs_diff_eq!(z.re, expected, epsilon = 1e-15);
        }
        let phi = max_ent_state(2).unwrap();
        let pp = OperatorBasis::phase_point();
        let a00 = &pp.elements()[0];
        let op = HermitianOperator::tensor(&[a00, &a00.transpose()]).unwrap();
        assert_abs_diff_eq!(op.expectation(&phi), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn diagonals_survive_transposition() {
        let b = OperatorBasis::aligned(3, PureState::uniform(3).unwrap()).unwrap();
        for k in 0..b.len() {
            let (a, t) = (b.element(k, false).matrix(), b.element(k, true).matrix());
            for j in 0..3 {
                assert_eq!(a[(j, j)], t[(j, j)]);
            }
        }
    }
}
