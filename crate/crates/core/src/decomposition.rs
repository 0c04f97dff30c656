//! Generalized-separable decomposition of a PEPS.
//!
//! Expanding every bond as `(1/D²) Σ_k C_k ⊗ C_kᵀ` writes the (unnormalized)
//! PEPS density matrix as
//!
//! ```text
//!   ρ = Σ_λ  Π_s tr(O_s(λ)) / D^{2E}  ⊗_s O_s(λ) / tr(O_s(λ)),
//!   O_s(λ) = A_s(⊗_j C̃_{λ(e_j)}),
//! ```
//!
//! where `λ` assigns an edge index to every edge and `C̃` is `C` at the head
//! of an edge and `Cᵀ` at its tail. When every `tr(O_s)` is positive and
//! every normalized `O_s` lies in the dual of the measurement set, this is a
//! local hidden variable model for those measurements. When the site traces
//! factorize over incident edges, `λ` is a product of independent per-edge
//! distributions and can be sampled in `O(E)`.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::OperatorBasis;
use crate::dual::{flatten, unflatten, MeasurementSet, MEMBERSHIP_TOL};
use crate::error::{usage, Error, Result};
use crate::linalg::{c, trace_distance, trace_product, CMatrix, HermitianOperator};
use crate::peps::{assemble_exact_state, PepsInstance, SiteMap};

/// `tr(O)` must be at least this for the postselection weight to count as positive.
pub const TRACE_FLOOR: f64 = 1e-10;

/// Relative residual above which a trace tensor is declared non-factorizable.
pub const FACTORIZATION_TOL: f64 = 1e-8;

/// Target bracket width for the ε* search.
pub const BRACKET_WIDTH: f64 = 1e-4;

const COARSE_STEPS: usize = 32;

/// Enumeration limits for the brute-force mixture.
pub const MAX_ASSIGNMENTS: usize = 1 << 16;
pub const MAX_MIXTURE_DIM: usize = 1 << 12;

/// One edge index per edge (0-based, `< D²`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EdgeAssignment(pub Vec<usize>);

impl EdgeAssignment {
    /// Incident edge indices of `site`, as a flat tuple index (first incidence most significant).
    pub fn site_tuple(&self, instance: &PepsInstance, site: usize) -> usize {
        let n = instance.basis().len();
        instance
            .lattice()
            .incidence(site)
            .iter()
            .fold(0, |acc, inc| acc * n + self.0[inc.edge])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    NonPositiveTrace,
    BelowZero,
    AboveOne,
}

/// A site and extreme-point tuple at which (R,V)-positivity fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub site: usize,
    pub tuple: Vec<usize>,
    pub kind: WitnessKind,
    pub povm: Option<usize>,
    pub element: Option<usize>,
    pub value: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            WitnessKind::NonPositiveTrace => {
                write!(f, "site {} tuple {:?}: tr(O) = {:e}", self.site, self.tuple, self.value)
            }
            _ => write!(
                f,
                "site {} tuple {:?}: tr(σ X) = {:e} for POVM {} element {}",
                self.site,
                self.tuple,
                self.value,
                self.povm.unwrap_or(0),
                self.element.unwrap_or(0)
            ),
        }
    }
}

/// `O = A(⊗_j C̃_{k_j})` for one extreme-point tuple.
pub fn site_output_operator(
    map: &SiteMap,
    basis: &OperatorBasis,
    tuple: &[usize],
    transposed: &[bool],
) -> Result<HermitianOperator> {
    if tuple.len() != map.virtual_count() || transposed.len() != tuple.len() {
        return usage(format!(
            "tuple of length {} for a site with {} virtual particles",
            tuple.len(),
            map.virtual_count()
        ));
    }
    if map.bond_dim() != basis.bond_dim() {
        return usage("map bond dimension differs from the basis");
    }
    if let Some(&k) = tuple.iter().find(|&&k| k >= basis.len()) {
        return usage(format!("edge index {k} out of range 0..{}", basis.len()));
    }
    let factors: Vec<&HermitianOperator> = tuple.iter().zip(transposed).map(|(&k, &t)| basis.element(k, t)).collect();
    let v = HermitianOperator::tensor(&factors)?;
    let out = map.apply(v.matrix());
    // K V K† is Hermitian up to round-off; drop the anti-Hermitian residue.
    HermitianOperator::new((&out + out.adjoint()) * c(0.5, 0.0))
}

/// All output operators of one site, indexed by flat tuple.
#[derive(Clone, Debug)]
pub struct SiteOutputTable {
    pub site: usize,
    pub virtual_count: usize,
    pub traces: Vec<f64>,
    pub ops: Vec<HermitianOperator>,
}

impl SiteOutputTable {
    /// `O / tr(O)`, if the trace is above [`TRACE_FLOOR`].
    pub fn normalized(&self, tuple: usize) -> Option<HermitianOperator> {
        let t = self.traces[tuple];
        (t >= TRACE_FLOOR).then(|| self.ops[tuple].scale(1.0 / t))
    }
}

pub fn site_output_table(instance: &PepsInstance, site: usize) -> Result<SiteOutputTable> {
    let map = &instance.site_maps()[site];
    let basis = instance.basis();
    let flags = instance.transposed_flags(site);
    let sizes = vec![basis.len(); map.virtual_count()];
    let n_tuples: usize = sizes.iter().product();
    let ops = (0..n_tuples)
        .into_par_iter()
        .map(|flat| site_output_operator(map, basis, &unflatten(flat, &sizes), &flags))
        .collect::<Result<Vec<_>>>()?;
    let traces = ops.iter().map(HermitianOperator::trace).collect();
    Ok(SiteOutputTable {
        site,
        virtual_count: map.virtual_count(),
        traces,
        ops,
    })
}

/// Tables for the class representatives, indexed by class.
pub fn class_tables(instance: &PepsInstance) -> Result<Vec<SiteOutputTable>> {
    instance
        .class_representatives()
        .iter()
        .map(|&s| site_output_table(instance, s))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// Minimum over sites, tuples and POVM elements of `min(tr(σX), 1 - tr(σX))`.
    pub slack: f64,
    /// Minimum `tr(O)` over all sites and tuples.
    pub min_trace: f64,
    pub per_site_margin: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PositivityOutcome {
    Certified(Certificate),
    Violated(Witness),
}

impl PositivityOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, PositivityOutcome::Certified(_))
    }

    pub fn into_result(self) -> Result<Certificate> {
        match self {
            PositivityOutcome::Certified(c) => Ok(c),
            PositivityOutcome::Violated(w) => Err(Error::Positivity(w)),
        }
    }
}

struct TupleScan {
    trace: f64,
    margin: f64,
    violation: Option<(WitnessKind, Option<usize>, Option<usize>, f64)>,
}

fn scan_tuple(op: &HermitianOperator, trace: f64, set: &MeasurementSet) -> TupleScan {
    if trace < TRACE_FLOOR {
        return TupleScan {
            trace,
            margin: f64::NEG_INFINITY,
            violation: Some((WitnessKind::NonPositiveTrace, None, None, trace)),
        };
    }
    let inv = 1.0 / trace;
    let mut margin = f64::INFINITY;
    let mut lo = (f64::INFINITY, 0, 0);
    let mut hi = (f64::NEG_INFINITY, 0, 0);
    for (i, povm) in set.povms().iter().enumerate() {
        for (j, x) in povm.elements().iter().enumerate() {
            let p = trace_product(op.matrix(), x.matrix()) * inv;
            margin = margin.min(p.min(1.0 - p));
            if p < lo.0 {
                lo = (p, i, j);
            }
            if p > hi.0 {
                hi = (p, i, j);
            }
        }
    }
    let violation = if lo.0 < -MEMBERSHIP_TOL {
        Some((WitnessKind::BelowZero, Some(lo.1), Some(lo.2), lo.0))
    } else if hi.0 > 1.0 + MEMBERSHIP_TOL {
        Some((WitnessKind::AboveOne, Some(hi.1), Some(hi.2), hi.0))
    } else {
        None
    };
    TupleScan { trace, margin, violation }
}

/// Checks every site against every extreme-point tuple of its virtual spaces.
pub fn rv_positivity_check(instance: &PepsInstance) -> Result<PositivityOutcome> {
    let tables = class_tables(instance)?;
    Ok(rv_positivity_from_tables(instance, &tables))
}

pub fn rv_positivity_from_tables(instance: &PepsInstance, tables: &[SiteOutputTable]) -> PositivityOutcome {
    let set = instance.measurement_set();
    let n = instance.basis().len();
    let mut class_margin = Vec::with_capacity(tables.len());
    let mut min_trace = f64::INFINITY;
    for table in tables {
        let scans: Vec<TupleScan> = table
            .ops
            .par_iter()
            .zip(table.traces.par_iter())
            .map(|(op, &t)| scan_tuple(op, t, set))
            .collect();
        let mut margin = f64::INFINITY;
        for (flat, scan) in scans.iter().enumerate() {
            if let Some((kind, povm, element, value)) = scan.violation {
                return PositivityOutcome::Violated(Witness {
                    site: table.site,
                    tuple: unflatten(flat, &vec![n; table.virtual_count]),
                    kind,
                    povm,
                    element,
                    value,
                });
            }
            margin = margin.min(scan.margin);
            min_trace = min_trace.min(scan.trace);
        }
        class_margin.push(margin);
    }
    let per_site_margin: Vec<f64> = (0..instance.n_sites()).map(|s| class_margin[instance.class_of(s)]).collect();
    PositivityOutcome::Certified(Certificate {
        slack: class_margin.iter().cloned().fold(f64::INFINITY, f64::min),
        min_trace,
        per_site_margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorizationResult {
    pub factorizable: bool,
    /// One vector of length `D²` per incident edge. All but the first have
    /// unit maximum entry; the first carries the overall scale.
    pub factors: Vec<Vec<f64>>,
    /// Max relative deviation of the rank-1 reconstruction.
    pub residual: f64,
}

/// Rank-1 test of the order-`v` trace tensor.
///
/// For a positive rank-1 tensor `T = ⊗_j u_j`, the mode marginals satisfy
/// `m_j ∝ u_j` and `T = Π_j m_j / S^{v-1}` with `S` the total sum, so the
/// marginals give both the candidate factors and an exact reconstruction
/// check.
pub fn trace_factorization(traces: &[f64], v: usize, n_basis: usize) -> Result<FactorizationResult> {
    let sizes = vec![n_basis; v];
    let expected: usize = sizes.iter().product();
    if v == 0 || traces.len() != expected {
        return usage(format!("trace table of length {} does not match v={v}, D²={n_basis}", traces.len()));
    }
    if let Some(t) = traces.iter().find(|&&t| t <= 0.0 || !t.is_finite()) {
        return Err(Error::Precondition(format!("non-positive trace {t:e} in factorization")));
    }
    let mut marginals = vec![vec![0.0; n_basis]; v];
    for (flat, &t) in traces.iter().enumerate() {
        for (j, k) in unflatten(flat, &sizes).into_iter().enumerate() {
            marginals[j][k] += t;
        }
    }
    let total: f64 = traces.iter().sum();
    let denom = total.powi(v as i32 - 1);
    let mut residual: f64 = 0.0;
    for (flat, &t) in traces.iter().enumerate() {
        let fit = unflatten(flat, &sizes)
            .into_iter()
            .enumerate()
            .map(|(j, k)| marginals[j][k])
            .product::<f64>()
            / denom;
        residual = residual.max(((t - fit) / t).abs());
    }

    let mut factors = marginals;
    let mut scale = 1.0 / denom;
    for f in factors.iter_mut().skip(1) {
        let top = f.iter().cloned().fold(0.0, f64::max);
        f.iter_mut().for_each(|x| *x /= top);
        scale *= top;
    }
    factors[0].iter_mut().for_each(|x| *x *= scale);
    Ok(FactorizationResult {
        factorizable: residual <= FACTORIZATION_TOL,
        factors,
        residual,
    })
}

/// Independent per-edge categorical distributions of the edge indices.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeDistributions {
    pub probs: Vec<Vec<f64>>,
    /// `Σ_k u_head(k) u_tail(k)` per edge.
    pub edge_sums: Vec<f64>,
    /// Overall normalization `T = Π_e edge_sum / D^{2E}`.
    pub t: f64,
    pub log_t: f64,
    pub class_factors: Vec<FactorizationResult>,
}

pub fn edge_distribution(instance: &PepsInstance) -> Result<EdgeDistributions> {
    let tables = class_tables(instance)?;
    edge_distribution_from_tables(instance, &tables)
}

pub fn edge_distribution_from_tables(instance: &PepsInstance, tables: &[SiteOutputTable]) -> Result<EdgeDistributions> {
    let n_basis = instance.basis().len();
    let class_factors = tables
        .iter()
        .map(|t| {
            let f = trace_factorization(&t.traces, t.virtual_count, n_basis)?;
            if f.factorizable {
                Ok(f)
            } else {
                Err(Error::NotFactorizable {
                    site: t.site,
                    residual: f.residual,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let lattice = instance.lattice();
    let factor_for = |site: usize, edge: usize| -> &Vec<f64> {
        let pos = lattice
            .incidence(site)
            .iter()
            .position(|i| i.edge == edge)
            .expect("edge is incident");
        &class_factors[instance.class_of(site)].factors[pos]
    };
    let mut probs = Vec::with_capacity(lattice.n_edges());
    let mut edge_sums = Vec::with_capacity(lattice.n_edges());
    let mut log_t = 0.0;
    for (e, &(h, t)) in lattice.edges().iter().enumerate() {
        let w: Vec<f64> = factor_for(h, e).iter().zip(factor_for(t, e)).map(|(a, b)| a * b).collect();
        let z: f64 = w.iter().sum();
        log_t += z.ln();
        probs.push(w.iter().map(|x| x / z).collect());
        edge_sums.push(z);
    }
    let bond = instance.basis().bond_dim() as f64;
    log_t -= 2.0 * lattice.n_edges() as f64 * bond.ln();
    Ok(EdgeDistributions {
        probs,
        edge_sums,
        t: log_t.exp(),
        log_t,
        class_factors,
    })
}

/// Calls `f` on every edge assignment in lexicographic order (last edge fastest).
pub fn for_each_assignment(n_edges: usize, n_basis: usize, mut f: impl FnMut(&EdgeAssignment)) {
    let mut a = EdgeAssignment(vec![0; n_edges]);
    loop {
        f(&a);
        let mut e = n_edges;
        loop {
            if e == 0 {
                return;
            }
            e -= 1;
            a.0[e] += 1;
            if a.0[e] < n_basis {
                break;
            }
            a.0[e] = 0;
        }
    }
}

pub(crate) fn check_enumerable(instance: &PepsInstance) -> Result<usize> {
    let n_basis = instance.basis().len();
    let n_edges = instance.lattice().n_edges();
    (0..n_edges)
        .try_fold(1usize, |acc, _| acc.checked_mul(n_basis).filter(|&x| x <= MAX_ASSIGNMENTS))
        .ok_or_else(|| Error::TooLarge(format!("(D²)^E = {n_basis}^{n_edges} edge assignments")))
}

#[derive(Clone, Debug)]
pub struct MixtureReconstruction {
    /// `Σ_λ p(λ) ⊗_s σ_s(λ)`, with `T` taken from the assembled state.
    pub density: HermitianOperator,
    /// `Σ_λ p(λ)`.
    pub weight_sum: f64,
    pub n_terms: usize,
    /// Squared norm of the assembled state.
    pub t_exact: f64,
    /// `Σ_λ Π_s tr(O_s) / D^{2E}` from the enumeration alone.
    pub t_enumerated: f64,
    /// Trace distance to the normalized assembled state.
    pub trace_distance: f64,
}

/// Enumerates every edge assignment and sums the separable mixture.
pub fn reconstruct_mixture(instance: &PepsInstance) -> Result<MixtureReconstruction> {
    let n_terms = check_enumerable(instance)?;
    let d = instance.phys_dim();
    let n = instance.n_sites();
    let dim = (0..n)
        .try_fold(1usize, |acc, _| acc.checked_mul(d).filter(|&x| x <= MAX_MIXTURE_DIM))
        .ok_or_else(|| Error::TooLarge(format!("mixture on {n} sites of dimension {d}")))?;

    let exact = assemble_exact_state(instance)?;
    let tables = class_tables(instance)?;
    let normalized: Vec<Vec<HermitianOperator>> = tables
        .iter()
        .map(|t| {
            (0..t.ops.len())
                .map(|k| {
                    t.normalized(k).ok_or_else(|| {
                        Error::Precondition(format!("site {} tuple {k} has non-positive trace", t.site))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n_basis = instance.basis().len();
    let n_edges = instance.lattice().n_edges();
    let mut assignments = Vec::with_capacity(n_terms);
    for_each_assignment(n_edges, n_basis, |a| assignments.push(a.clone()));
    let scale = (instance.basis().bond_dim() as f64).powi(-2 * n_edges as i32);

    // Fixed-size chunks summed in order keep the result independent of the thread count.
    let partials: Vec<(CMatrix, f64)> = assignments
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = CMatrix::zeros(dim, dim);
            let mut raw = 0.0;
            for a in chunk {
                let mut weight = scale;
                let mut term = CMatrix::from_element(1, 1, c(1.0, 0.0));
                for s in 0..n {
                    let class = instance.class_of(s);
                    let k = a.site_tuple(instance, s);
                    weight *= tables[class].traces[k];
                    term = term.kronecker(normalized[class][k].matrix());
                }
                acc += term * c(weight, 0.0);
                raw += weight;
            }
            (acc, raw)
        })
        .collect();
    let mut sum = CMatrix::zeros(dim, dim);
    let mut t_enumerated = 0.0;
    for (m, w) in partials {
        sum += m;
        t_enumerated += w;
    }
    let density = HermitianOperator::new(sum / c(exact.norm_sq, 0.0))?;
    let target = HermitianOperator::projector(&exact.normalized());
    let dist = trace_distance(&density, &target)?;
    Ok(MixtureReconstruction {
        density,
        weight_sum: t_enumerated / exact.norm_sq,
        n_terms,
        t_exact: exact.norm_sq,
        t_enumerated,
        trace_distance: dist,
    })
}

/// Bracket `[low, high]` around the first ε at which positivity fails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonBracket {
    pub low: f64,
    /// `None` when no failure was found up to the search limit.
    pub high: Option<f64>,
    pub evaluations: usize,
}

impl EpsilonBracket {
    pub fn width(&self) -> f64 {
        self.high.map_or(f64::INFINITY, |h| h - self.low)
    }
}

/// Coarse upward scan of `[0, eps_hi]`, then bisection on the first failing
/// step. Pass/fail is assumed monotone below the first failure; both
/// endpoints of the returned bracket are re-checked.
pub fn max_epsilon_search(build: impl Fn(f64) -> Result<PepsInstance>, eps_hi: f64) -> Result<EpsilonBracket> {
    if !(eps_hi.is_finite() && eps_hi > 0.0) {
        return usage(format!("search limit must be positive, got {eps_hi}"));
    }
    let mut evaluations = 0;
    let mut passes = |eps: f64| -> Result<bool> {
        evaluations += 1;
        Ok(rv_positivity_check(&build(eps)?)?.is_certified())
    };
    if !passes(0.0)? {
        return Err(Error::Precondition("the ε = 0 instance is not (R,V)-positive".into()));
    }
    let mut low = 0.0;
    let mut high = None;
    for step in 1..=COARSE_STEPS {
        let eps = eps_hi * step as f64 / COARSE_STEPS as f64;
        if passes(eps)? {
            low = eps;
        } else {
            high = Some(eps);
            break;
        }
    }
    let Some(mut hi) = high else {
        return Ok(EpsilonBracket {
            low: eps_hi,
            high: None,
            evaluations,
        });
    };
    while hi - low > BRACKET_WIDTH {
        let mid = 0.5 * (low + hi);
        if passes(mid)? {
            low = mid;
        } else {
            hi = mid;
        }
    }
    if !passes(low)? || passes(hi)? {
        return Err(Error::Construction(format!(
            "bracket [{low}, {hi}] failed re-verification (non-monotone pass/fail)"
        )));
    }
    Ok(EpsilonBracket {
        low,
        high: Some(hi),
        evaluations,
    })
}

/// Flat tuple index of explicit digits in base `D²`.
pub fn tuple_index(digits: &[usize], n_basis: usize) -> usize {
    flatten(digits, &vec![n_basis; digits.len()])
}
