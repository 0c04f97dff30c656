//! Local hidden variable sampler.
//!
//! A shot draws every edge index independently from its per-edge
//! distribution, then draws each site's outcome from `tr(σ_s X_j)` with
//! `σ_s` the normalized output operator of the site's incident indices.
//! Given the edge indices, sites are sampled independently.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{
    class_tables, edge_distribution_from_tables, rv_positivity_from_tables, site_output_operator, EdgeAssignment,
    EdgeDistributions, Witness, WitnessKind, TRACE_FLOOR,
};
use crate::dual::{unflatten, MeasurementSet, MEMBERSHIP_TOL};
use crate::error::{usage, Error, Result};
use crate::linalg::{trace_product, HermitianOperator};
use crate::peps::PepsInstance;
use crate::rng::{categorical, shot_rng, EDGE_STREAM, SITE_STREAM};

/// One POVM (by index into the measurement set) per site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasurementPlan {
    povms: Vec<usize>,
}

impl MeasurementPlan {
    pub fn new(set: &MeasurementSet, n_sites: usize, povms: Vec<usize>) -> Result<Self> {
        if povms.len() != n_sites {
            return usage(format!("plan lists {} sites, instance has {n_sites}", povms.len()));
        }
        if let Some(&p) = povms.iter().find(|&&p| p >= set.povms().len()) {
            return usage(format!("plan references POVM {p}, set has {}", set.povms().len()));
        }
        Ok(Self { povms })
    }

    pub fn from_labels<S: AsRef<str>>(set: &MeasurementSet, labels: &[S]) -> Result<Self> {
        let povms = labels
            .iter()
            .map(|l| {
                set.find(l.as_ref())
                    .ok_or_else(|| Error::Usage(format!("unknown POVM label '{}'", l.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(set, labels.len(), povms)
    }

    pub fn uniform(set: &MeasurementSet, n_sites: usize, label: &str) -> Result<Self> {
        Self::from_labels(set, &vec![label; n_sites])
    }

    pub fn povm(&self, site: usize) -> usize {
        self.povms[site]
    }

    pub fn povms(&self) -> &[usize] {
        &self.povms
    }

    pub fn n_sites(&self) -> usize {
        self.povms.len()
    }

    pub fn arities(&self, set: &MeasurementSet) -> Vec<usize> {
        self.povms.iter().map(|&p| set.povms()[p].len()).collect()
    }

    pub fn labels<'a>(&self, set: &'a MeasurementSet) -> Vec<&'a str> {
        self.povms.iter().map(|&p| set.povms()[p].label()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: u64,
    pub outcomes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

/// One categorical draw per edge from the edge stream of `(seed, shot)`.
pub fn sample_hidden(dists: &EdgeDistributions, seed: u64, shot: u64) -> EdgeAssignment {
    let mut rng = shot_rng(seed, shot, EDGE_STREAM);
    EdgeAssignment(dists.probs.iter().map(|p| categorical(p, rng.random::<f64>())).collect())
}

/// Outcome probabilities `tr(O X_j) / tr(O)`, clamped into `[0, 1]`.
/// Anything further than the membership tolerance outside is a witness.
fn outcome_probabilities(
    raw: &[f64],
    trace: f64,
    site: usize,
    tuple: usize,
    povm: usize,
    n_basis: usize,
    v: usize,
) -> Result<Vec<f64>> {
    let witness = |kind: WitnessKind, element: Option<usize>, value: f64| -> Result<Vec<f64>> {
        Err(Error::Positivity(Witness {
            site,
            tuple: unflatten(tuple, &vec![n_basis; v]),
            kind,
            povm: element.map(|_| povm),
            element,
            value,
        }))
    };
    if trace < TRACE_FLOOR {
        return witness(WitnessKind::NonPositiveTrace, None, trace);
    }
    let mut out = Vec::with_capacity(raw.len());
    for (j, &x) in raw.iter().enumerate() {
        let p = x / trace;
        if p < -MEMBERSHIP_TOL {
            return witness(WitnessKind::BelowZero, Some(j), p);
        }
        if p > 1.0 + MEMBERSHIP_TOL {
            return witness(WitnessKind::AboveOne, Some(j), p);
        }
        out.push(p.clamp(0.0, 1.0));
    }
    Ok(out)
}

fn raw_overlaps(op: &HermitianOperator, set: &MeasurementSet, povm: usize) -> Vec<f64> {
    set.povms()[povm]
        .elements()
        .iter()
        .map(|x| trace_product(op.matrix(), x.matrix()))
        .collect()
}

/// Reference path: recomputes every site operator from the site map.
pub fn sample_outcomes(
    instance: &PepsInstance,
    hidden: &EdgeAssignment,
    plan: &MeasurementPlan,
    seed: u64,
    shot: u64,
) -> Result<ShotRecord> {
    if plan.n_sites() != instance.n_sites() {
        return usage("plan does not match the instance");
    }
    if hidden.0.len() != instance.lattice().n_edges() {
        return usage("edge assignment length differs from the edge count");
    }
    let set = instance.measurement_set();
    let n_basis = instance.basis().len();
    let mut rng = shot_rng(seed, shot, SITE_STREAM);
    let mut outcomes = Vec::with_capacity(instance.n_sites());
    for s in 0..instance.n_sites() {
        let inc = instance.lattice().incidence(s);
        let digits: Vec<usize> = inc.iter().map(|i| hidden.0[i.edge]).collect();
        let op = site_output_operator(&instance.site_maps()[s], instance.basis(), &digits, &instance.transposed_flags(s))?;
        let tuple = hidden.site_tuple(instance, s);
        let raw = raw_overlaps(&op, set, plan.povm(s));
        let probs = outcome_probabilities(&raw, op.trace(), s, tuple, plan.povm(s), n_basis, inc.len())?;
        outcomes.push(categorical(&probs, rng.random::<f64>()));
    }
    Ok(ShotRecord {
        shot,
        outcomes,
        hidden: Some(hidden.0.clone()),
    })
}

/// Fast path: caches `tr(O X_j)` per site class, POVM and incident tuple.
pub struct Sampler<'a> {
    instance: &'a PepsInstance,
    plan: MeasurementPlan,
    dists: EdgeDistributions,
    traces: Vec<Vec<f64>>,
    // [class][povm] -> per tuple raw overlaps; empty when the plan never uses the pair
    overlaps: Vec<Vec<Vec<Vec<f64>>>>,
}

impl<'a> Sampler<'a> {
    /// Refuses non-factorizable instances first, then uncertified ones.
    pub fn new(instance: &'a PepsInstance, plan: MeasurementPlan) -> Result<Self> {
        if plan.n_sites() != instance.n_sites() {
            return usage("plan does not match the instance");
        }
        let tables = class_tables(instance)?;
        let dists = edge_distribution_from_tables(instance, &tables)?;
        rv_positivity_from_tables(instance, &tables).into_result()?;

        let set = instance.measurement_set();
        let n_povms = set.povms().len();
        let mut overlaps = vec![vec![Vec::new(); n_povms]; tables.len()];
        for s in 0..instance.n_sites() {
            let (class, povm) = (instance.class_of(s), plan.povm(s));
            if overlaps[class][povm].is_empty() {
                overlaps[class][povm] = tables[class].ops.par_iter().map(|op| raw_overlaps(op, set, povm)).collect();
            }
        }
        Ok(Self {
            instance,
            plan,
            dists,
            traces: tables.into_iter().map(|t| t.traces).collect(),
            overlaps,
        })
    }

    pub fn edge_distributions(&self) -> &EdgeDistributions {
        &self.dists
    }

    pub fn plan(&self) -> &MeasurementPlan {
        &self.plan
    }

    pub fn sample(&self, seed: u64, shot: u64, emit_hidden: bool) -> Result<ShotRecord> {
        let hidden = sample_hidden(&self.dists, seed, shot);
        let n_basis = self.instance.basis().len();
        let mut rng = shot_rng(seed, shot, SITE_STREAM);
        let mut outcomes = Vec::with_capacity(self.instance.n_sites());
        for s in 0..self.instance.n_sites() {
            let class = self.instance.class_of(s);
            let povm = self.plan.povm(s);
            let tuple = hidden.site_tuple(self.instance, s);
            let probs = outcome_probabilities(
                &self.overlaps[class][povm][tuple],
                self.traces[class][tuple],
                s,
                tuple,
                povm,
                n_basis,
                self.instance.lattice().degree(s),
            )?;
            outcomes.push(categorical(&probs, rng.random::<f64>()));
        }
        Ok(ShotRecord {
            shot,
            outcomes,
            hidden: emit_hidden.then_some(hidden.0),
        })
    }

    /// Shots `first..first + count`, in shot order.
    pub fn run(&self, seed: u64, first: u64, count: u64, emit_hidden: bool) -> Result<Vec<ShotRecord>> {
        (first..first + count)
            .into_par_iter()
            .map(|shot| self.sample(seed, shot, emit_hidden))
            .collect()
    }
}

/// Runs all shots on the current rayon pool.
pub fn run_shots(sampler: &Sampler<'_>, n_shots: u64, seed: u64, emit_hidden: bool) -> Result<Vec<ShotRecord>> {
    sampler.run(seed, 0, n_shots, emit_hidden)
}

const CHUNK: u64 = 1 << 16;

/// Streams shots as JSON lines, computing them in bounded chunks.
pub fn write_shots<W: Write>(
    sampler: &Sampler<'_>,
    n_shots: u64,
    seed: u64,
    emit_hidden: bool,
    out: &mut W,
) -> Result<()> {
    let mut first = 0;
    while first < n_shots {
        let count = CHUNK.min(n_shots - first);
        for rec in sampler.run(seed, first, count, emit_hidden)? {
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
        first += count;
    }
    Ok(())
}

pub fn read_shots(text: &str) -> Result<Vec<ShotRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::OperatorBasis;
    use crate::decomposition::edge_distribution;
    use crate::dual::pauli_product_measurements;
    use crate::lattice::Lattice;
    use crate::linalg::PureState;
    use crate::peps::{default_recipe2_states, identity_site_map, recipe2_site_map};

    fn bloch_pair() -> PureState {
        let b = PureState::bloch(1.0, 1.0, 1.0).unwrap();
        PureState::product(&[b.clone(), b]).unwrap()
    }

    fn recipe2(lattice: Lattice, eps: f64) -> PepsInstance {
        let psi = bloch_pair();
        let maps = (0..lattice.n_sites())
            .map(|s| {
                let v = lattice.degree(s);
                recipe2_site_map(v, 4, default_recipe2_states(&psi, v).unwrap(), eps).unwrap()
            })
            .collect();
        let basis = OperatorBasis::aligned(2, PureState::basis(2, 0).unwrap()).unwrap();
        PepsInstance::new(lattice, maps, basis, MeasurementSet::builtin("noisy-pauli:2:0.5").unwrap()).unwrap()
    }

    fn identity_bell_cycle() -> PepsInstance {
        let maps = vec![identity_site_map(2).unwrap(); 3];
        PepsInstance::new(
            Lattice::cycle(3).unwrap(),
            maps,
            OperatorBasis::phase_point(),
            MeasurementSet::builtin("bell").unwrap(),
        )
        .unwrap()
    }

    fn degenerate(probs: Vec<Vec<f64>>) -> EdgeDistributions {
        EdgeDistributions {
            edge_sums: vec![1.0; probs.len()],
            probs,
            t: 1.0,
            log_t: 0.0,
            class_factors: Vec::new(),
        }
    }

    #[test]
    fn degenerate_edge_distribution_is_deterministic() {
        let d = degenerate(vec![vec![1.0, 0.0, 0.0, 0.0]]);
        for shot in 0..200 {
            assert_eq!(sample_hidden(&d, 5, shot).0, vec![0]);
        }
    }

    #[test]
    fn uniform_edge_frequencies_within_four_sigma() {
        let d = degenerate(vec![vec![0.25; 4]]);
        let n = 100_000u64;
        let mut counts = [0usize; 4];
        for shot in 0..n {
            counts[sample_hidden(&d, 11, shot).0[0]] += 1;
        }
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn same_seed_and_shot_repeat() {
        let inst = recipe2(Lattice::cycle(4).unwrap(), 0.2);
        let dists = edge_distribution(&inst).unwrap();
        assert_eq!(sample_hidden(&dists, 9, 3), sample_hidden(&dists, 9, 3));
    }

    #[test]
    fn fast_and_reference_paths_agree() {
        let inst = recipe2(Lattice::chain(4).unwrap(), 0.2);
        let plan = MeasurementPlan::from_labels(inst.measurement_set(), &["ZZ", "XY", "YX", "ZX"]).unwrap();
        let sampler = Sampler::new(&inst, plan.clone()).unwrap();
        for shot in 0..300 {
            let fast = sampler.sample(17, shot, true).unwrap();
            let hidden = EdgeAssignment(fast.hidden.clone().unwrap());
            let slow = sample_outcomes(&inst, &hidden, &plan, 17, shot).unwrap();
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn zero_epsilon_outcomes_follow_psi() {
        let inst = recipe2(Lattice::cycle(3).unwrap(), 0.0);
        let plan = MeasurementPlan::uniform(inst.measurement_set(), 3, "ZZ").unwrap();
        let sampler = Sampler::new(&inst, plan).unwrap();
        let psi = bloch_pair();
        let zz = &inst.measurement_set().povms()[inst.measurement_set().find("ZZ").unwrap()];
        let born = zz.probabilities(&HermitianOperator::projector(&psi));
        let n = 40_000;
        let mut counts = [0usize; 4];
        for rec in run_shots(&sampler, n, 3, false).unwrap() {
            counts[rec.outcomes[1]] += 1;
        }
        for (c, p) in counts.iter().zip(&born) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn identity_bell_outcomes_are_deterministic_given_hidden() {
        let inst = identity_bell_cycle();
        let plan = MeasurementPlan::uniform(inst.measurement_set(), 3, "bell").unwrap();
        let sampler = Sampler::new(&inst, plan).unwrap();
        let a = run_shots(&sampler, 500, 1, true).unwrap();
        let b = run_shots(&sampler, 500, 2, true).unwrap();
        for ra in &a {
            for rb in b.iter().filter(|rb| rb.hidden == ra.hidden) {
                assert_eq!(ra.outcomes, rb.outcomes);
            }
        }
    }

    #[test]
    fn zero_shots_and_order_independent_of_pool() {
        let inst = recipe2(Lattice::cycle(5).unwrap(), 0.2);
        let plan = MeasurementPlan::uniform(inst.measurement_set(), 5, "XZ").unwrap();
        let sampler = Sampler::new(&inst, plan).unwrap();
        assert!(run_shots(&sampler, 0, 1, false).unwrap().is_empty());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        one.install(|| write_shots(&sampler, 1000, 42, true, &mut a)).unwrap();
        four.install(|| write_shots(&sampler, 1000, 42, true, &mut b)).unwrap();
        assert_eq!(a, b);
        let parsed = read_shots(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(parsed.len(), 1000);
        assert_eq!(parsed[7].shot, 7);
    }

    #[test]
    fn hidden_field_is_optional_in_json() {
        let rec = ShotRecord {
            shot: 3,
            outcomes: vec![0, 2],
            hidden: None,
        };
        assert_eq!(serde_json::to_string(&rec).unwrap(), r#"{"shot":3,"outcomes":[0,2]}"#);
    }

    #[test]
    fn stale_certificate_surfaces_a_witness() {
        let lattice = Lattice::new(3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        let maps = vec![identity_site_map(2).unwrap(); 3];
        let inst = PepsInstance::new(lattice, maps, OperatorBasis::phase_point(), MeasurementSet::builtin("bell").unwrap()).unwrap();
        let plan = MeasurementPlan::uniform(inst.measurement_set(), 3, "bell").unwrap();
        assert!(matches!(Sampler::new(&inst, plan.clone()), Err(Error::Positivity(_))));
        let mut saw_witness = false;
        crate::decomposition::for_each_assignment(3, 4, |a| {
            if let Err(Error::Positivity(w)) = sample_outcomes(&inst, a, &plan, 0, 0) {
                assert!(w.value < -1e-9 || w.value > 1.0 + 1e-9);
                saw_witness = true;
            }
        });
        assert!(saw_witness);
    }

    #[test]
    fn plan_validation() {
        let set = pauli_product_measurements(2).unwrap();
        assert!(MeasurementPlan::from_labels(&set, &["ZZ", "QQ"]).is_err());
        assert!(MeasurementPlan::new(&set, 2, vec![0]).is_err());
        assert_eq!(MeasurementPlan::uniform(&set, 2, "XY").unwrap().arities(&set), vec![4, 4]);
    }
}
