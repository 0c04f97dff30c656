//! Brute-force ground truth for the sampler: Born-rule joint distributions
//! from the assembled state, the same distribution from the enumerated
//! separable mixture, and total-variation tests on sampled shots.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::{check_enumerable, class_tables, for_each_assignment, EdgeAssignment};
use crate::dual::{flatten, Povm};
use crate::error::{usage, Error, Result};
use crate::linalg::{trace_product, CMatrix, CVector, PureState};
use crate::peps::{assemble_exact_state, PepsInstance};
use crate::sampling::{MeasurementPlan, ShotRecord};

pub const MAX_OUTCOMES: usize = 1 << 16;
const MAX_BRANCH_WORK: usize = 1 << 26;

pub const DEFAULT_CONFIDENCE: f64 = 4.0;
pub const MIN_SHOTS: usize = 1000;

/// Probabilities over the product outcome space, site 0 most significant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointDistribution {
    arities: Vec<usize>,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(arities: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let k = outcome_count(&arities)?;
        if probs.len() != k {
            return usage(format!("{} probabilities for {k} joint outcomes", probs.len()));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p >= -1e-12)) {
            return Err(Error::Precondition(format!("joint probability {p:e} is negative")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!("joint probabilities sum to {total}")));
        }
        Ok(Self { arities, probs })
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn outcome_count(&self) -> usize {
        self.probs.len()
    }

    pub fn index(&self, outcomes: &[usize]) -> usize {
        flatten(outcomes, &self.arities)
    }

    pub fn prob(&self, outcomes: &[usize]) -> f64 {
        self.probs[self.index(outcomes)]
    }

    /// Product of the single-site marginals.
    pub fn product_of_marginals(&self) -> JointDistribution {
        let marginals: Vec<Vec<f64>> = (0..self.arities.len()).map(|s| self.marginal(s)).collect();
        let probs = (0..self.probs.len())
            .map(|flat| {
                crate::dual::unflatten(flat, &self.arities)
                    .iter()
                    .enumerate()
                    .map(|(s, &j)| marginals[s][j])
                    .product()
            })
            .collect();
        JointDistribution {
            arities: self.arities.clone(),
            probs,
        }
    }

    pub fn marginal(&self, site: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.arities[site]];
        for (flat, &p) in self.probs.iter().enumerate() {
            m[crate::dual::unflatten(flat, &self.arities)[site]] += p;
        }
        m
    }
}

fn outcome_count(arities: &[usize]) -> Result<usize> {
    arities
        .iter()
        .try_fold(1usize, |acc, &a| acc.checked_mul(a).filter(|&k| k <= MAX_OUTCOMES))
        .ok_or_else(|| Error::TooLarge(format!("joint outcome space {arities:?} exceeds {MAX_OUTCOMES}")))
}

/// Applies `op` to tensor factor `axis` of a vector on `dims`.
fn apply_on_axis(op: &CMatrix, v: &CVector, dims: &[usize], axis: usize) -> CVector {
    let d = dims[axis];
    let right: usize = dims[axis + 1..].iter().product();
    let left = v.len() / (d * right);
    let mut out = CVector::zeros(v.len());
    for l in 0..left {
        for r in 0..right {
            for i in 0..d {
                let mut acc = crate::linalg::c(0.0, 0.0);
                for k in 0..d {
                    acc += op[(i, k)] * v[(l * d + k) * right + r];
                }
                out[(l * d + i) * right + r] = acc;
            }
        }
    }
    out
}

/// `p(j_1..j_N) = ⟨Ψ|⊗_s X_{j_s}|Ψ⟩`, evaluated as `‖⊗_s X_{j_s}^{1/2} Ψ‖²`
/// by branching one site at a time.
pub fn exact_joint_distribution(state: &PureState, site_dims: &[usize], povms: &[&Povm]) -> Result<JointDistribution> {
    if povms.len() != site_dims.len() {
        return usage("one POVM per site is required");
    }
    if site_dims.iter().product::<usize>() != state.dim() {
        return usage("site dimensions do not match the state");
    }
    if let Some((s, _)) = povms.iter().zip(site_dims).enumerate().find(|(_, (p, &d))| p.dim() != d) {
        return usage(format!("POVM at site {s} does not match its dimension"));
    }
    let arities: Vec<usize> = povms.iter().map(|p| p.len()).collect();
    let k = outcome_count(&arities)?;
    if k.saturating_mul(state.dim()) > MAX_BRANCH_WORK {
        return Err(Error::TooLarge("branching enumeration too large".into()));
    }
    let roots: Vec<Vec<CMatrix>> = povms.iter().map(|p| p.elements().iter().map(|x| x.psd_sqrt()).collect()).collect();
    let mut branches = vec![state.amplitudes().clone()];
    for (s, site_roots) in roots.iter().enumerate() {
        branches = branches
            .par_iter()
            .flat_map_iter(|v| site_roots.iter().map(move |b| apply_on_axis(b, v, site_dims, s)))
            .collect();
    }
    let probs: Vec<f64> = branches.iter().map(|v| v.norm_squared()).collect();
    JointDistribution::new(arities, probs)
}

fn plan_povms<'a>(instance: &'a PepsInstance, plan: &MeasurementPlan) -> Result<Vec<&'a Povm>> {
    if plan.n_sites() != instance.n_sites() {
        return usage("plan does not match the instance");
    }
    let set = instance.measurement_set();
    Ok(plan.povms().iter().map(|&p| &set.povms()[p]).collect())
}

/// Born distribution of the assembled, normalized instance state.
pub fn instance_joint_distribution(instance: &PepsInstance, plan: &MeasurementPlan) -> Result<JointDistribution> {
    let povms = plan_povms(instance, plan)?;
    let state = assemble_exact_state(instance)?.normalized();
    exact_joint_distribution(&state, &vec![instance.phys_dim(); instance.n_sites()], &povms)
}

/// `Σ_λ p(λ) Π_s tr(σ_s(λ) X_{j_s})`, normalized by the enumerated weight sum.
pub fn mixture_joint_distribution(instance: &PepsInstance, plan: &MeasurementPlan) -> Result<JointDistribution> {
    check_enumerable(instance)?;
    let povms = plan_povms(instance, plan)?;
    let arities: Vec<usize> = povms.iter().map(|p| p.len()).collect();
    let k = outcome_count(&arities)?;
    let tables = class_tables(instance)?;

    // unnormalized site factors tr(O X_j), per site, per tuple
    let site_factors: Vec<Vec<Vec<f64>>> = (0..instance.n_sites())
        .map(|s| {
            tables[instance.class_of(s)]
                .ops
                .iter()
                .map(|op| povms[s].elements().iter().map(|x| trace_product(op.matrix(), x.matrix())).collect())
                .collect()
        })
        .collect();

    let mut assignments: Vec<EdgeAssignment> = Vec::new();
    for_each_assignment(instance.lattice().n_edges(), instance.basis().len(), |a| assignments.push(a.clone()));

    let partials: Vec<Vec<f64>> = assignments
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = vec![0.0; k];
            for a in chunk {
                let mut joint = vec![1.0];
                for (s, factors) in site_factors.iter().enumerate() {
                    let f = &factors[a.site_tuple(instance, s)];
                    joint = joint.iter().flat_map(|&p| f.iter().map(move |&q| p * q)).collect();
                }
                acc.iter_mut().zip(&joint).for_each(|(x, y)| *x += y);
            }
            acc
        })
        .collect();
    let mut probs = vec![0.0; k];
    for part in partials {
        probs.iter_mut().zip(&part).for_each(|(x, y)| *x += y);
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("mixture weights sum to zero".into()));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    JointDistribution::new(arities, probs)
}

pub fn tv_distance(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    if p.arities != q.arities {
        return usage(format!("outcome spaces differ: {:?} vs {:?}", p.arities, q.arities));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Max-norm difference of two distributions on the same space.
pub fn max_deviation(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    if p.arities != q.arities {
        return usage("outcome spaces differ");
    }
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

pub fn empirical_distribution(records: &[ShotRecord], arities: &[usize]) -> Result<JointDistribution> {
    if records.is_empty() {
        return usage("no shots");
    }
    let k = outcome_count(arities)?;
    let mut counts = vec![0usize; k];
    for r in records {
        if r.outcomes.len() != arities.len() || r.outcomes.iter().zip(arities).any(|(&j, &a)| j >= a) {
            return usage(format!("shot {} has outcomes outside {arities:?}", r.shot));
        }
        counts[flatten(&r.outcomes, arities)] += 1;
    }
    let n = records.len() as f64;
    JointDistribution::new(arities.to_vec(), counts.into_iter().map(|c| c as f64 / n).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub tv: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(rename = "K")]
    pub k: usize,
    pub n_shots: usize,
}

/// Passes iff `TV(empirical, exact) ≤ k·√(K/n)`.
pub fn frequency_test(records: &[ShotRecord], exact: &JointDistribution, confidence: f64) -> Result<FrequencyReport> {
    if records.len() < MIN_SHOTS {
        return usage(format!("frequency test needs at least {MIN_SHOTS} shots, got {}", records.len()));
    }
    let emp = empirical_distribution(records, exact.arities())?;
    let tv = tv_distance(&emp, exact)?;
    let k = exact.outcome_count();
    let threshold = confidence * (k as f64 / records.len() as f64).sqrt();
    Ok(FrequencyReport {
        tv,
        threshold,
        pass: tv <= threshold,
        k,
        n_shots: records.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub groups: usize,
    pub groups_tested: usize,
    /// Largest ratio `TV / threshold` over tested groups.
    pub worst_ratio: f64,
    pub worst_tv: f64,
    pub worst_threshold: f64,
    pub pass: bool,
    pub n_shots: usize,
}

/// Groups shots by hidden assignment and compares, within each group with
/// at least `min_group` shots, the empirical joint to the product of its
/// empirical marginals at threshold `k·√(K/n_λ)`.
pub fn conditional_independence_test(
    records: &[ShotRecord],
    arities: &[usize],
    confidence: f64,
    min_group: usize,
) -> Result<IndependenceReport> {
    if records.is_empty() {
        return usage("no shots");
    }
    let mut groups: BTreeMap<&[usize], Vec<ShotRecord>> = BTreeMap::new();
    for r in records {
        let h = r
            .hidden
            .as_deref()
            .ok_or_else(|| Error::Usage(format!("shot {} carries no hidden assignment", r.shot)))?;
        groups.entry(h).or_default().push(r.clone());
    }
    let k = outcome_count(arities)? as f64;
    let mut tested = 0;
    let mut worst = (0.0, 0.0, 0.0);
    for members in groups.values().filter(|g| g.len() >= min_group.max(1)) {
        tested += 1;
        let emp = empirical_distribution(members, arities)?;
        let tv = tv_distance(&emp, &emp.product_of_marginals())?;
        let threshold = confidence * (k / members.len() as f64).sqrt();
        if tv / threshold > worst.0 {
            worst = (tv / threshold, tv, threshold);
        }
    }
    Ok(IndependenceReport {
        groups: groups.len(),
        groups_tested: tested,
        worst_ratio: worst.0,
        worst_tv: worst.1,
        worst_threshold: worst.2,
        pass: tested > 0 && worst.0 <= 1.0,
        n_shots: records.len(),
    })
}
