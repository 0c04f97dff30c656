//! Restricted measurement sets and their duals.
//!
//! The dual of a set of POVMs is the set of Hermitian operators `O` with
//! `0 <= tr(O X) <= 1` for every POVM element `X`. The strict margin
//! `m(O) = min_X min(tr(O X), 1 - tr(O X))` measures how far inside it `O` sits.

use rayon::prelude::*;

use crate::basis::{bloch_operator, VirtualSpaceTag};
use crate::error::{usage, Error, Result};
use crate::linalg::{max_abs, min_eigenvalue, trace_product, CMatrix, HermitianOperator, PureState};

/// POVM elements may dip this far below zero (file round-trips).
pub const PSD_TOL: f64 = 1e-9;

/// Completeness tolerance `|Σ_j X_j - I|_max`.
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Operators with `m(O)` at or above this are strictly inside the dual.
pub const STRICT_THRESHOLD: f64 = 1e-8;

/// Slack on `[0, 1]` when testing dual membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Povm {
    label: String,
    elements: Vec<HermitianOperator>,
}

impl Povm {
    pub fn new(label: impl Into<String>, elements: Vec<HermitianOperator>) -> Result<Self> {
        let label = label.into();
        let Some(first) = elements.first() else {
            return usage(format!("POVM '{label}' has no elements"));
        };
        let dim = first.dim();
        if elements.iter().any(|e| e.dim() != dim) {
            return usage(format!("POVM '{label}' mixes element dimensions"));
        }
        let mut sum = CMatrix::zeros(dim, dim);
        for (j, e) in elements.iter().enumerate() {
            let lo = min_eigenvalue(e);
            if lo < -PSD_TOL {
                return usage(format!("POVM '{label}' element {j} has eigenvalue {lo:e} < 0"));
            }
            sum += e.matrix();
        }
        let dev = max_abs(&(sum - CMatrix::identity(dim, dim)));
        if dev > COMPLETENESS_TOL {
            return usage(format!("POVM '{label}' elements sum to identity only within {dev:e}"));
        }
        Ok(Self { label, elements })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `tr(O X_j)` for every element.
    pub fn probabilities(&self, op: &HermitianOperator) -> Vec<f64> {
        self.elements.iter().map(|x| trace_product(op.matrix(), x.matrix())).collect()
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementSet {
    dim: usize,
    povms: Vec<Povm>,
}

impl MeasurementSet {
    pub fn new(povms: Vec<Povm>) -> Result<Self> {
        let Some(first) = povms.first() else {
            return usage("measurement set is empty");
        };
        let dim = first.dim();
        if povms.iter().any(|p| p.dim() != dim) {
            return usage("measurement set mixes POVM dimensions");
        }
        Ok(Self { dim, povms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.povms.iter().position(|p| p.label == label)
    }

    /// Parses `pauli:n`, `noisy-pauli:n:eta` and `bell`.
    pub fn builtin(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split(':').collect();
        let count = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Usage(format!("bad qubit count in '{name}'")))
        };
        match parts.as_slice() {
            ["pauli", n] => pauli_product_measurements(count(n)?),
            ["noisy-pauli", n, eta] => {
                let eta: f64 = eta
                    .parse()
                    .map_err(|_| Error::Usage(format!("bad noise parameter in '{name}'")))?;
                noisy_measurements(&pauli_product_measurements(count(n)?)?, eta)
            }
            ["bell"] => MeasurementSet::new(vec![bell_povm()]),
            _ => usage(format!("unknown measurement family '{name}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualMargin {
    pub min_overlap: f64,
    pub max_overlap: f64,
    /// `(povm index, element index)` attaining the strict margin.
    pub worst_element: (usize, usize),
    /// `min_X min(tr(O X), 1 - tr(O X))`.
    pub strict_margin: f64,
}

impl DualMargin {
    pub fn in_dual(&self, tol: f64) -> bool {
        self.min_overlap >= -tol && self.max_overlap <= 1.0 + tol
    }

    pub fn is_strict(&self) -> bool {
        self.strict_margin >= STRICT_THRESHOLD
    }
}

pub fn dual_margin(op: &HermitianOperator, set: &MeasurementSet) -> Result<DualMargin> {
    if op.dim() != set.dim() {
        return usage(format!(
            "operator dimension {} differs from measurement dimension {}",
            op.dim(),
            set.dim()
        ));
    }
    let mut out = DualMargin {
        min_overlap: f64::INFINITY,
        max_overlap: f64::NEG_INFINITY,
        worst_element: (0, 0),
        strict_margin: f64::INFINITY,
    };
    for (i, povm) in set.povms.iter().enumerate() {
        for (j, t) in povm.probabilities(op).into_iter().enumerate() {
            out.min_overlap = out.min_overlap.min(t);
            out.max_overlap = out.max_overlap.max(t);
            let m = t.min(1.0 - t);
            if m < out.strict_margin {
                out.strict_margin = m;
                out.worst_element = (i, j);
            }
        }
    }
    Ok(out)
}

/// Rejects states on the boundary of (or outside) the dual.
pub fn require_strict_interior(state: &PureState, set: &MeasurementSet) -> Result<DualMargin> {
    let margin = dual_margin(&HermitianOperator::projector(state), set)?;
    if !margin.is_strict() {
        return Err(Error::NotStrict {
            margin: margin.strict_margin,
        });
    }
    Ok(margin)
}

fn pauli_projector(axis: char, sign: f64) -> HermitianOperator {
    match axis {
        'X' => bloch_operator(sign, 0.0, 0.0),
        'Y' => bloch_operator(0.0, sign, 0.0),
        _ => bloch_operator(0.0, 0.0, sign),
    }
}

/// All `3^n` product POVMs of single-qubit X/Y/Z eigenprojectors.
///
/// Labels spell the axis per qubit (`"XZ"`); element index bits pick the
/// eigenvalue per qubit (qubit 0 most significant, bit 0 = +1).
pub fn pauli_product_measurements(n_qubits: usize) -> Result<MeasurementSet> {
    if n_qubits == 0 {
        return usage("Pauli measurements need at least one qubit");
    }
    if n_qubits > 6 {
        return Err(Error::TooLarge(format!("{n_qubits}-qubit Pauli family")));
    }
    let axes = ['X', 'Y', 'Z'];
    let n_povms = 3usize.pow(n_qubits as u32);
    let povms = (0..n_povms)
        .map(|mut code| {
            let mut label = vec!['Z'; n_qubits];
            for q in (0..n_qubits).rev() {
                label[q] = axes[code % 3];
                code /= 3;
            }
            let elements = (0..1usize << n_qubits)
                .map(|bits| {
                    let factors: Vec<HermitianOperator> = (0..n_qubits)
                        .map(|q| {
                            let bit = (bits >> (n_qubits - 1 - q)) & 1;
                            pauli_projector(label[q], if bit == 0 { 1.0 } else { -1.0 })
                        })
                        .collect();
                    let refs: Vec<&HermitianOperator> = factors.iter().collect();
                    HermitianOperator::tensor(&refs)
                })
                .collect::<Result<Vec<_>>>()?;
            Povm::new(label.into_iter().collect::<String>(), elements)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(povms)
}

/// Depolarizes every element: `η X + (1-η) tr(X)/d · I`.
pub fn noisy_measurements(set: &MeasurementSet, eta: f64) -> Result<MeasurementSet> {
    if !(0.0..=1.0).contains(&eta) {
        return usage(format!("noise parameter {eta} outside [0, 1]"));
    }
    let d = set.dim() as f64;
    let povms = set
        .povms()
        .iter()
        .map(|p| {
            let elements = p
                .elements()
                .iter()
                .map(|x| {
                    let m = x.matrix() * crate::linalg::c(eta, 0.0)
                        + CMatrix::identity(set.dim(), set.dim()) * crate::linalg::c((1.0 - eta) * x.trace() / d, 0.0);
                    HermitianOperator::new(m)
                })
                .collect::<Result<Vec<_>>>()?;
            Povm::new(p.label(), elements)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(povms)
}

/// Projective measurement onto `Φ+, Φ-, Ψ+, Ψ-` on two qubits.
pub fn bell_povm() -> Povm {
    let r = 1.0 / 2f64.sqrt();
    let vecs: [[f64; 4]; 4] = [[r, 0.0, 0.0, r], [r, 0.0, 0.0, -r], [0.0, r, r, 0.0], [0.0, r, -r, 0.0]];
    let elements = vecs
        .iter()
        .map(|v| {
            let amps = crate::linalg::CVector::from_iterator(4, v.iter().map(|&x| crate::linalg::c(x, 0.0)));
            HermitianOperator::projector(&PureState::new(amps).expect("unit vector"))
        })
        .collect();
    Povm::new("bell", elements).expect("Bell basis is complete")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub min_value: f64,
    pub max_value: f64,
    /// Extreme-point tuple and element index attaining the worst value.
    pub witness_tuple: Vec<usize>,
    pub witness_element: usize,
    pub witness_value: f64,
    pub n_values: usize,
    pub admissible: bool,
}

/// Checks `tr(V X) ∈ [0, 1]` for every product of extreme points
/// `V = ⊗_j C̃_{k_j}` of the tagged spaces and every element `X`.
///
/// `tr(V X)` is linear in `V`, so the extreme points of the hulls suffice.
pub fn admissible_povm(povm: &Povm, spaces: &[VirtualSpaceTag<'_>]) -> Result<AdmissibilityReport> {
    if spaces.is_empty() {
        return usage("admissibility needs at least one virtual space");
    }
    let expected: usize = spaces.iter().map(|s| s.basis.bond_dim()).product();
    if povm.dim() != expected {
        return usage(format!(
            "POVM dimension {} differs from the product of virtual dimensions {expected}",
            povm.dim()
        ));
    }
    let sizes: Vec<usize> = spaces.iter().map(|s| s.basis.len()).collect();
    let n_tuples: usize = sizes.iter().product();
    let per_tuple: Vec<(Vec<usize>, Vec<f64>)> = (0..n_tuples)
        .into_par_iter()
        .map(|flat| {
            let tuple = unflatten(flat, &sizes);
            let factors: Vec<&HermitianOperator> = spaces.iter().zip(&tuple).map(|(s, &k)| s.element(k)).collect();
            let v = HermitianOperator::tensor(&factors).expect("non-empty");
            (tuple, povm.probabilities(&v))
        })
        .collect();

    let mut report = AdmissibilityReport {
        min_value: f64::INFINITY,
        max_value: f64::NEG_INFINITY,
        witness_tuple: Vec::new(),
        witness_element: 0,
        witness_value: f64::NAN,
        n_values: 0,
        admissible: true,
    };
    let mut worst_excess = f64::NEG_INFINITY;
    for (tuple, values) in per_tuple {
        for (j, t) in values.into_iter().enumerate() {
            report.n_values += 1;
            report.min_value = report.min_value.min(t);
            report.max_value = report.max_value.max(t);
            // Distance outside [0, 1]; negative inside.
            let excess = (-t).max(t - 1.0);
            if excess > worst_excess {
                worst_excess = excess;
                report.witness_tuple = tuple.clone();
                report.witness_element = j;
                report.witness_value = t;
            }
        }
    }
    report.admissible = report.min_value >= -MEMBERSHIP_TOL && report.max_value <= 1.0 + MEMBERSHIP_TOL;
    Ok(report)
}

/// Mixed-radix digits of `flat`, first digit most significant.
pub fn unflatten(mut flat: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for k in (0..sizes.len()).rev() {
        out[k] = flat % sizes[k];
        flat /= sizes[k];
    }
    out
}

pub fn flatten(digits: &[usize], sizes: &[usize]) -> usize {
    digits.iter().zip(sizes).fold(0, |acc, (&d, &s)| acc * s + d)
}
