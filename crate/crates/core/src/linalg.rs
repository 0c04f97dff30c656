//! Dense complex operators: tensor products, partial traces, spectra and
//! bipartite entanglement.
//!
//! Everything downstream is expressed in terms of [`HermitianOperator`] and
//! [`PureState`]. Both are validated on construction and immutable afterwards.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{usage, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Max-norm tolerance on `A - A†` for an operator to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Tolerance on `| ||psi|| - 1 |` for a pure state.
pub const NORM_TOL: f64 = 1e-12;

pub const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Kronecker product of the factors in list order.
pub fn tensor_product(factors: &[CMatrix]) -> Result<CMatrix> {
    let (first, rest) = match factors.split_first() {
        Some(split) => split,
        None => return usage("tensor_product needs at least one factor"),
    };
    let mut out = first.clone();
    for f in rest {
        out = out.kronecker(f);
    }
    Ok(out)
}

/// Kronecker product of state vectors in list order.
pub fn kron_vectors(factors: &[&CVector]) -> CVector {
    let mut out = CVector::from_element(1, c(1.0, 0.0));
    for f in factors {
        out = out.kronecker(*f);
    }
    out
}

/// Real part of `tr(A B)`; exact for Hermitian pairs.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.transpose().shape());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let x = a[(i, j)] * b[(j, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank: singular values above `rel_tol * s_max`.
pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Validates squareness, finiteness and Hermiticity (no symmetrization).
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return usage(format!(
                "Hermitian operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        check_finite(&matrix)?;
        let deviation = max_abs(&(&matrix - matrix.adjoint()));
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian {
                deviation,
                tolerance: HERMITIAN_TOL,
            });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    /// `|psi><psi|`.
    pub fn projector(state: &PureState) -> Self {
        let v = state.amplitudes();
        Self {
            matrix: v * v.adjoint(),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            matrix: CMatrix::from_fn(n, n, |i, j| if i == j { c(diag[i], 0.0) } else { c(0.0, 0.0) }),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Transpose in the computational basis.
    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.map(|z| z * s),
        }
    }

    /// Hilbert-Schmidt overlap `tr(self * other)`.
    pub fn overlap(&self, other: &HermitianOperator) -> f64 {
        trace_product(&self.matrix, &other.matrix)
    }

    /// `<psi| self |psi>`.
    pub fn expectation(&self, state: &PureState) -> f64 {
        let v = state.amplitudes();
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }

    pub fn tensor(factors: &[&HermitianOperator]) -> Result<Self> {
        let mats: Vec<CMatrix> = factors.iter().map(|f| f.matrix.clone()).collect();
        Ok(Self {
            matrix: tensor_product(&mats)?,
        })
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Operator square root of a PSD operator; negative round-off eigenvalues are cut to zero.
    pub fn psd_sqrt(&self) -> CMatrix {
        let eig = self.matrix.clone().symmetric_eigen();
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for k in 0..n {
            let lam = eig.eigenvalues[k].max(0.0);
            if lam == 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            out += (v * v.adjoint()) * c(lam.sqrt(), 0.0);
        }
        out
    }
}

pub fn min_eigenvalue(op: &HermitianOperator) -> f64 {
    op.eigenvalues()[0]
}

/// Trace distance `||a - b||_1 / 2` between two Hermitian operators.
pub fn trace_distance(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return usage("trace distance between operators of different dimension");
    }
    let diff = HermitianOperator {
        matrix: a.matrix() - b.matrix(),
    };
    Ok(0.5 * diff.eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
}

fn check_dims(total: usize, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0) {
        return usage("subsystem dimensions must be non-empty and positive");
    }
    let product: usize = dims.iter().product();
    if product != total {
        return usage(format!(
            "subsystem dimensions {:?} multiply to {}, expected {}",
            dims, product, total
        ));
    }
    Ok(())
}

/// Row-major multi-index helper: flat index of a subsystem multi-index
/// with subsystem 0 most significant.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// For every (group-a index, group-b index) pair, the flat index in the full space.
fn split_index_table(dims: &[usize], group_a: &[usize], group_b: &[usize]) -> (usize, usize, Vec<usize>) {
    let st = strides(dims);
    let dim_of = |group: &[usize]| group.iter().map(|&k| dims[k]).product::<usize>();
    let (da, db) = (dim_of(group_a), dim_of(group_b));
    let offsets = |group: &[usize], count: usize| -> Vec<usize> {
        (0..count)
            .map(|mut flat| {
                let mut off = 0;
                for &k in group.iter().rev() {
                    off += (flat % dims[k]) * st[k];
                    flat /= dims[k];
                }
                off
            })
            .collect()
    };
    let oa = offsets(group_a, da);
    let ob = offsets(group_b, db);
    let mut table = Vec::with_capacity(da * db);
    for a in &oa {
        for b in &ob {
            table.push(a + b);
        }
    }
    (da, db, table)
}

fn normalize_cut(n: usize, cut: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut keep: Vec<usize> = cut.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&k| k >= n) {
        return usage(format!("subsystem index out of range in {:?}", cut));
    }
    let rest = (0..n).filter(|k| !keep.contains(k)).collect();
    Ok((keep, rest))
}

/// Trace out every subsystem not listed in `keep`.
pub fn partial_trace(op: &HermitianOperator, dims: &[usize], keep: &[usize]) -> Result<HermitianOperator> {
    check_dims(op.dim(), dims)?;
    let (keep, traced) = normalize_cut(dims.len(), keep)?;
    if keep.is_empty() {
        return usage("partial_trace needs a non-empty set of kept subsystems");
    }
    let (dk, dt, table) = split_index_table(dims, &keep, &traced);
    let m = op.matrix();
    let out = CMatrix::from_fn(dk, dk, |a, b| {
        let mut acc = c(0.0, 0.0);
        for t in 0..dt {
            acc += m[(table[a * dt + t], table[b * dt + t])];
        }
        acc
    });
    Ok(HermitianOperator { matrix: out })
}

/// Schmidt coefficients squared across `cut`, descending.
pub fn schmidt_weights(state: &PureState, dims: &[usize], cut: &[usize]) -> Result<Vec<f64>> {
    check_dims(state.dim(), dims)?;
    let (side_a, side_b) = normalize_cut(dims.len(), cut)?;
    if side_a.is_empty() || side_b.is_empty() {
        return Ok(vec![1.0]);
    }
    let (da, db, table) = split_index_table(dims, &side_a, &side_b);
    let amps = state.amplitudes();
    let m = CMatrix::from_fn(da, db, |a, b| amps[table[a * db + b]]);
    Ok(singular_values(&m).into_iter().map(|s| s * s).collect())
}

/// Von Neumann entropy (bits) of the reduced state on `cut`, with `0 log 0 = 0`.
pub fn entanglement_entropy(state: &PureState, dims: &[usize], cut: &[usize]) -> Result<f64> {
    let weights = schmidt_weights(state, dims, cut)?;
    let total: f64 = weights.iter().sum();
    let h = weights
        .iter()
        .map(|w| w / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    /// Requires unit norm within [`NORM_TOL`].
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return usage("pure state must have dimension >= 1");
        }
        if !amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return usage(format!("pure state has norm {norm}, expected 1"));
        }
        Ok(Self { amplitudes })
    }

    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm < 1e-300 {
            return usage("cannot normalize a zero or non-finite vector");
        }
        Self::new(amplitudes.map(|z| z / norm))
    }

    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return usage(format!("basis index {k} out of range for dimension {dim}"));
        }
        let mut v = CVector::zeros(dim);
        v[k] = c(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    /// Equal superposition of all computational levels.
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return usage("dimension must be >= 1");
        }
        let a = 1.0 / (dim as f64).sqrt();
        Ok(Self {
            amplitudes: CVector::from_element(dim, c(a, 0.0)),
        })
    }

    /// Qubit state with Bloch vector along `(x, y, z)` (normalized internally).
    pub fn bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = (x * x + y * y + z * z).sqrt();
        if r == 0.0 {
            return usage("Bloch direction must be non-zero");
        }
        let theta = (z / r).clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x);
        let amps = CVector::from_vec(vec![
            c((theta / 2.0).cos(), 0.0),
            C64::from_polar((theta / 2.0).sin(), phi),
        ]);
        Self::normalized(amps)
    }

    pub fn product(factors: &[PureState]) -> Result<Self> {
        if factors.is_empty() {
            return usage("product of zero states");
        }
        let refs: Vec<&CVector> = factors.iter().map(|f| &f.amplitudes).collect();
        Self::normalized(kron_vectors(&refs))
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn conj(&self) -> Self {
        Self {
            amplitudes: self.amplitudes.map(|z| z.conj()),
        }
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// Orthonormal completion of `first` with computational basis vectors
/// (Gram-Schmidt, twice for stability), returning `count` vectors with
/// `first` in position 0.
pub fn complete_orthonormal(first: &PureState, count: usize) -> Result<Vec<PureState>> {
    let dim = first.dim();
    if count > dim {
        return usage(format!("cannot fit {count} orthonormal vectors in dimension {dim}"));
    }
    let mut out: Vec<CVector> = vec![first.amplitudes.clone()];
    for k in 0..dim {
        if out.len() == count {
            break;
        }
        let mut v = CVector::zeros(dim);
        v[k] = c(1.0, 0.0);
        for _ in 0..2 {
            for u in &out {
                let proj = u.dotc(&v);
                v -= u * proj;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            out.push(v / c(n, 0.0));
        }
    }
    if out.len() < count {
        return Err(Error::Construction("orthonormal completion ran out of vectors".into()));
    }
    let mut rest = out.into_iter().skip(1).map(PureState::normalized).collect::<Result<Vec<_>>>()?;
    rest.insert(0, first.clone());
    Ok(rest)
}
