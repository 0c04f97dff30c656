//! Site maps and exact PEPS assembly.
//!
//! A site map sends the `v` virtual `D`-level particles at a site to one
//! physical `d`-level particle through Kraus operators of shape `d × D^v`.
//! Virtual particles are ordered by the lattice incidence list, the first
//! one being the most significant tensor factor.

use nalgebra::Complex;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::OperatorBasis;
use crate::dual::MeasurementSet;
use crate::error::{usage, Error, Result};
use crate::lattice::{Lattice, Role};
use crate::linalg::{
    c, complete_orthonormal, entanglement_entropy, kron_vectors, rank, singular_values, CMatrix, CVector,
    HermitianOperator, PureState,
};
use crate::rng::{derive_seed, keyed_rng};

/// Rank threshold relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-12;

/// Squared norms at or below this make the construction degenerate.
pub const MIN_NORM_SQ: f64 = 1e-14;

const RECIPE1_RETRIES: u64 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SiteMap {
    virtual_count: usize,
    bond_dim: usize,
    phys_dim: usize,
    kraus: Vec<CMatrix>,
    label: String,
    epsilon: f64,
    psi_y: Option<Vec<PureState>>,
}

impl SiteMap {
    /// A general map from its Kraus operators.
    pub fn from_kraus(virtual_count: usize, bond_dim: usize, kraus: Vec<CMatrix>, label: impl Into<String>) -> Result<Self> {
        if virtual_count == 0 || bond_dim < 2 {
            return usage("site map needs v >= 1 and D >= 2");
        }
        let Some(first) = kraus.first() else {
            return usage("site map needs at least one Kraus operator");
        };
        let vdim = bond_dim.pow(virtual_count as u32);
        let phys_dim = first.nrows();
        if kraus.iter().any(|k| k.shape() != (phys_dim, vdim)) {
            return usage(format!("Kraus operators must all be {phys_dim}x{vdim}"));
        }
        Ok(Self {
            virtual_count,
            bond_dim,
            phys_dim,
            kraus,
            label: label.into(),
            epsilon: 0.0,
            psi_y: None,
        })
    }

    pub fn virtual_count(&self) -> usize {
        self.virtual_count
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    pub fn virtual_dim(&self) -> usize {
        self.bond_dim.pow(self.virtual_count as u32)
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn psi_y(&self) -> Option<&[PureState]> {
        self.psi_y.as_deref()
    }

    pub fn single_kraus(&self) -> Option<&CMatrix> {
        match self.kraus.as_slice() {
            [k] => Some(k),
            _ => None,
        }
    }

    /// `Σ_K K x K†`.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.phys_dim, self.phys_dim);
        for k in &self.kraus {
            out += k * x * k.adjoint();
        }
        out
    }

    /// Rank of the single Kraus operator.
    pub fn rank(&self) -> Option<usize> {
        self.single_kraus().map(|k| rank(k, RANK_TOL))
    }

    pub fn singular_values(&self) -> Option<Vec<f64>> {
        self.single_kraus().map(singular_values)
    }
}

fn check_degree(v: usize, d: usize) -> Result<()> {
    if v == 0 {
        return usage("site degree must be >= 1");
    }
    if v >= usize::BITS as usize || d < (1usize << v) {
        return Err(Error::Constraint(format!(
            "physical dimension d={d} is below 2^v = 2^{v}"
        )));
    }
    Ok(())
}

/// Default `ψ_y`: `ψ` in slot `0...0`, completed by Gram-Schmidt over the
/// computational levels.
pub fn default_recipe2_states(psi: &PureState, v: usize) -> Result<Vec<PureState>> {
    check_degree(v, psi.dim())?;
    complete_orthonormal(psi, 1 << v)
}

/// `Q̃ = Σ_y ε^Ham(y) |ψ_y><y|` over `v`-bit strings `y`.
pub fn recipe2_site_map(v: usize, d: usize, psi_y: Vec<PureState>, epsilon: f64) -> Result<SiteMap> {
    check_degree(v, d)?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return usage(format!("epsilon must be finite and >= 0, got {epsilon}"));
    }
    let n = 1usize << v;
    if psi_y.len() != n {
        return usage(format!("recipe 2 needs {n} states psi_y, got {}", psi_y.len()));
    }
    if psi_y.iter().any(|p| p.dim() != d) {
        return usage("psi_y dimension differs from the physical dimension");
    }
    for (i, a) in psi_y.iter().enumerate() {
        for (j, b) in psi_y.iter().enumerate().skip(i + 1) {
            if a.inner(b).norm() > 1e-10 {
                return usage(format!("psi_y[{i}] and psi_y[{j}] are not orthogonal"));
            }
        }
    }
    let mut q = CMatrix::zeros(d, n);
    for (y, state) in psi_y.iter().enumerate() {
        let weight = match y.count_ones() {
            0 => 1.0,
            h => epsilon.powi(h as i32),
        };
        q.set_column(y, &(state.amplitudes() * c(weight, 0.0)));
    }
    let mut map = SiteMap::from_kraus(v, 2, vec![q], "recipe2")?;
    map.epsilon = epsilon;
    map.psi_y = Some(psi_y);
    Ok(map)
}

/// `Q̃ = |ψ><α| + ε P` with `|α> = ⊗ anchors` and `P` a seeded complex
/// Gaussian matrix scaled to unit spectral norm, redrawn until `Q̃` has
/// full rank `min(d, D^v)`.
pub fn recipe1_site_map(
    v: usize,
    d: usize,
    psi: &PureState,
    anchors: &[PureState],
    epsilon: f64,
    seed: u64,
) -> Result<SiteMap> {
    check_degree(v, d)?;
    if psi.dim() != d {
        return usage("psi dimension differs from the physical dimension");
    }
    if anchors.len() != v {
        return usage(format!("recipe 1 needs {v} anchor states, got {}", anchors.len()));
    }
    let bond_dim = anchors[0].dim();
    if anchors.iter().any(|a| a.dim() != bond_dim) || bond_dim < 2 {
        return usage("anchor states must share a bond dimension >= 2");
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return usage(format!("epsilon must be finite and >= 0, got {epsilon}"));
    }
    let alpha = PureState::product(anchors)?;
    let base = psi.amplitudes() * alpha.amplitudes().adjoint();
    let vdim = alpha.dim();
    let label = "recipe1";
    if epsilon == 0.0 {
        let mut map = SiteMap::from_kraus(v, bond_dim, vec![base], label)?;
        map.epsilon = 0.0;
        return Ok(map);
    }
    let target = d.min(vdim);
    let sub = derive_seed(seed, "recipe1-perturbation");
    for attempt in 0..RECIPE1_RETRIES {
        let mut rng = keyed_rng(sub, "attempt", attempt);
        let p = CMatrix::from_fn(d, vdim, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex::new(re, im)
        });
        let top = singular_values(&p)[0];
        if top == 0.0 {
            continue;
        }
        let q = &base + p * c(epsilon / top, 0.0);
        if rank(&q, RANK_TOL) == target {
            let mut map = SiteMap::from_kraus(v, bond_dim, vec![q], label)?;
            map.epsilon = epsilon;
            return Ok(map);
        }
    }
    Err(Error::Construction(format!(
        "no full-rank perturbation after {RECIPE1_RETRIES} draws (seed {seed})"
    )))
}

/// Identity projection of `v` virtual qubits onto a `2^v`-level particle.
pub fn identity_site_map(v: usize) -> Result<SiteMap> {
    if v == 0 || v >= 16 {
        return usage(format!("identity map needs 1 <= v < 16, got {v}"));
    }
    let n = 1usize << v;
    SiteMap::from_kraus(v, 2, vec![CMatrix::identity(n, n)], "identity")
}

/// `Σ_ij |i><j| ⊗ A(|i><j|)` for a linear map `A` on `in_dim × in_dim` inputs.
pub fn choi_matrix(in_dim: usize, out_dim: usize, map: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
    let n = in_dim * out_dim;
    let mut choi = CMatrix::zeros(n, n);
    for i in 0..in_dim {
        for j in 0..in_dim {
            let mut e = CMatrix::zeros(in_dim, in_dim);
            e[(i, j)] = c(1.0, 0.0);
            let img = map(&e);
            choi.view_mut((i * out_dim, j * out_dim), (out_dim, out_dim)).copy_from(&img);
        }
    }
    choi
}

/// Smallest eigenvalue of the Choi matrix of an arbitrary Hermiticity-preserving map.
pub fn choi_min_eigenvalue(in_dim: usize, out_dim: usize, map: impl Fn(&CMatrix) -> CMatrix) -> Result<f64> {
    let choi = HermitianOperator::new(choi_matrix(in_dim, out_dim, map))?;
    Ok(crate::linalg::min_eigenvalue(&choi))
}

/// Smallest Choi eigenvalue of a site map; `>= -1e-9` means completely positive.
pub fn choi_check(map: &SiteMap) -> f64 {
    choi_min_eigenvalue(map.virtual_dim(), map.phys_dim(), |x| map.apply(x)).expect("Kraus maps give Hermitian Choi matrices")
}

#[derive(Clone, Debug)]
pub struct PepsInstance {
    lattice: Lattice,
    site_maps: Vec<SiteMap>,
    basis: OperatorBasis,
    measurement_set: MeasurementSet,
    class_of: Vec<usize>,
    class_reps: Vec<usize>,
}

impl PepsInstance {
    pub fn new(lattice: Lattice, site_maps: Vec<SiteMap>, basis: OperatorBasis, measurement_set: MeasurementSet) -> Result<Self> {
        if site_maps.len() != lattice.n_sites() {
            return usage(format!(
                "{} site maps for {} sites",
                site_maps.len(),
                lattice.n_sites()
            ));
        }
        for (s, m) in site_maps.iter().enumerate() {
            if m.virtual_count() != lattice.degree(s) {
                return usage(format!(
                    "site {s}: map has v={} but the site has degree {}",
                    m.virtual_count(),
                    lattice.degree(s)
                ));
            }
            if m.bond_dim() != basis.bond_dim() {
                return usage(format!("site {s}: map bond dimension differs from the basis"));
            }
            if m.phys_dim() != measurement_set.dim() {
                return usage(format!(
                    "site {s}: physical dimension {} differs from the measurement dimension {}",
                    m.phys_dim(),
                    measurement_set.dim()
                ));
            }
        }

        // Sites with identical maps and head/tail patterns share all per-tuple tables.
        let mut class_of = Vec::with_capacity(site_maps.len());
        let mut class_reps: Vec<usize> = Vec::new();
        for s in 0..site_maps.len() {
            let roles = lattice.roles(s);
            let found = class_reps
                .iter()
                .position(|&r| site_maps[r] == site_maps[s] && lattice.roles(r) == roles);
            match found {
                Some(k) => class_of.push(k),
                None => {
                    class_of.push(class_reps.len());
                    class_reps.push(s);
                }
            }
        }
        Ok(Self {
            lattice,
            site_maps,
            basis,
            measurement_set,
            class_of,
            class_reps,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn site_maps(&self) -> &[SiteMap] {
        &self.site_maps
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn measurement_set(&self) -> &MeasurementSet {
        &self.measurement_set
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn phys_dim(&self) -> usize {
        self.measurement_set.dim()
    }

    /// Transposition flags of the virtual particles at `site`, in incidence order.
    pub fn transposed_flags(&self, site: usize) -> Vec<bool> {
        self.lattice.roles(site).into_iter().map(Role::transposed).collect()
    }

    pub fn class_of(&self, site: usize) -> usize {
        self.class_of[site]
    }

    /// One representative site per equivalence class.
    pub fn class_representatives(&self) -> &[usize] {
        &self.class_reps
    }
}

/// Unnormalized physical state with its squared norm `T`.
#[derive(Clone, Debug)]
pub struct ExactState {
    pub amplitudes: CVector,
    pub norm_sq: f64,
    pub site_dims: Vec<usize>,
}

impl ExactState {
    pub fn normalized(&self) -> PureState {
        PureState::normalized(self.amplitudes.clone()).expect("positive norm checked at assembly")
    }
}

/// Physical-dimension limit for exact assembly.
pub const MAX_EXACT_DIM: usize = 1 << 20;

/// Applies `⊗_s Q̃^s` to `⊗_e |φ_D>`.
pub fn assemble_exact_state(instance: &PepsInstance) -> Result<ExactState> {
    let lattice = instance.lattice();
    let n = lattice.n_sites();
    let d = instance.phys_dim();
    let bond = instance.basis().bond_dim();
    let too_large = || Error::TooLarge(format!("exact assembly of {n} sites with d={d}"));
    let phys_total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(d).filter(|&x| x <= MAX_EXACT_DIM));
    let phys_total = phys_total.ok_or_else(too_large)?;
    let n_edges = lattice.n_edges();
    let bond_configs = (0..n_edges)
        .try_fold(1usize, |acc, _| acc.checked_mul(bond))
        .filter(|&b| b.saturating_mul(phys_total) <= 1 << 30)
        .ok_or_else(too_large)?;

    let kraus: Vec<&CMatrix> = instance
        .site_maps()
        .iter()
        .map(|m| {
            m.single_kraus()
                .ok_or_else(|| Error::Usage("exact assembly requires single-Kraus site maps".into()))
        })
        .collect::<Result<_>>()?;

    let amp = (bond as f64).powf(-(n_edges as f64) / 2.0);
    let mut psi = CVector::zeros(phys_total);
    let mut values = vec![0usize; n_edges];
    for _ in 0..bond_configs {
        let columns: Vec<CVector> = (0..n)
            .map(|s| {
                let idx = lattice
                    .incidence(s)
                    .iter()
                    .fold(0, |acc, inc| acc * bond + values[inc.edge]);
                kraus[s].column(idx).clone_owned()
            })
            .collect();
        if columns.iter().all(|col| col.iter().any(|z| *z != c(0.0, 0.0))) {
            let refs: Vec<&CVector> = columns.iter().collect();
            psi += kron_vectors(&refs) * c(amp, 0.0);
        }
        // odometer, last edge fastest
        for e in (0..n_edges).rev() {
            values[e] += 1;
            if values[e] < bond {
                break;
            }
            values[e] = 0;
        }
    }
    let norm_sq = psi.norm_squared();
    if norm_sq <= MIN_NORM_SQ {
        return Err(Error::Degenerate(format!(
            "assembled state has squared norm {norm_sq:e}; postselection probability is not positive"
        )));
    }
    Ok(ExactState {
        amplitudes: psi,
        norm_sq,
        site_dims: vec![d; n],
    })
}

/// Entanglement entropy (bits) of each single site against the rest.
pub fn entanglement_certificate(instance: &PepsInstance) -> Result<Vec<f64>> {
    let exact = assemble_exact_state(instance)?;
    let state = exact.normalized();
    (0..instance.n_sites())
        .map(|s| entanglement_entropy(&state, &exact.site_dims, &[s]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::pauli_product_measurements;
    use approx::assert_abs_diff_eq;

    fn computational(d: usize, n: usize) -> Vec<PureState> {
        (0..n).map(|k| PureState::basis(d, k).unwrap()).collect()
    }

    fn recipe2_chain(n: usize, eps: f64) -> PepsInstance {
        let lattice = Lattice::chain(n).unwrap();
        let qubits = if n == 2 { 1 } else { 2 };
        let d = 1 << qubits;
        let maps = (0..n)
            .map(|s| recipe2_site_map(lattice.degree(s), d, computational(d, 1 << lattice.degree(s)), eps).unwrap())
            .collect();
        let basis = OperatorBasis::aligned(2, PureState::basis(2, 0).unwrap()).unwrap();
        PepsInstance::new(lattice, maps, basis, pauli_product_measurements(qubits).unwrap()).unwrap()
    }

    #[test]
    fn recipe2_single_virtual_particle() {
        let m = recipe2_site_map(1, 2, computational(2, 2), 0.5).unwrap();
        let q = m.single_kraus().unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert_eq!(q, &expected);
    }

    #[test]
    fn recipe2_zero_epsilon_is_rank_one() {
        let m = recipe2_site_map(2, 4, computational(4, 4), 0.0).unwrap();
        assert_eq!(m.rank(), Some(1));
        let q = m.single_kraus().unwrap();
        assert_eq!(q[(0, 0)], c(1.0, 0.0));
        assert_eq!(crate::linalg::max_abs(&q.columns(1, 3).clone_owned()), 0.0);
    }

    #[test]
    fn recipe2_singular_values_follow_hamming_weights() {
        let m = recipe2_site_map(2, 4, computational(4, 4), 0.3).unwrap();
        let s = m.singular_values().unwrap();
        for (got, want) in s.iter().zip([1.0, 0.3, 0.3, 0.09]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(m.rank(), Some(4));
    }

    #[test]
    fn recipe2_constraint_and_orthonormality_errors() {
        assert!(matches!(recipe2_site_map(2, 3, computational(3, 3), 0.1), Err(Error::Constraint(_))));
        let mut states = computational(2, 2);
        states[1] = states[0].clone();
        assert!(matches!(recipe2_site_map(1, 2, states, 0.1), Err(Error::Usage(_))));
    }

    #[test]
    fn recipe1_full_rank_and_deterministic() {
        let anchor = PureState::basis(2, 0).unwrap();
        let psi = PureState::bloch(1.0, 1.0, 1.0).unwrap();
        let a = recipe1_site_map(1, 2, &psi, std::slice::from_ref(&anchor), 1e-3, 7).unwrap();
        let b = recipe1_site_map(1, 2, &psi, std::slice::from_ref(&anchor), 1e-3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rank(), Some(2));
        let s = a.singular_values().unwrap();
        assert!(s[1] > 0.0);

        let z = recipe1_site_map(1, 2, &psi, &[anchor], 0.0, 7).unwrap();
        assert_eq!(z.rank(), Some(1));
        assert!(matches!(
            recipe1_site_map(2, 3, &PureState::basis(3, 0).unwrap(), &computational(2, 2), 0.1, 1),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn recipe1_zero_epsilon_outputs_psi() {
        let basis = OperatorBasis::aligned(2, PureState::basis(2, 0).unwrap()).unwrap();
        let psi = PureState::bloch(1.0, 1.0, 1.0).unwrap();
        let anchor = basis.anchor().unwrap().clone();
        let map = recipe1_site_map(1, 2, &psi, &[anchor], 0.0, 3).unwrap();
        let proj = HermitianOperator::projector(&psi);
        for k in 0..basis.len() {
            let out = map.apply(basis.element(k, false).matrix());
            let tr: f64 = out.diagonal().iter().map(|z| z.re).sum();
            assert_abs_diff_eq!(tr, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
            let diff = out / c(tr, 0.0) - proj.matrix();
            assert!(crate::linalg::max_abs(&diff) < 1e-12);
        }
    }

    #[test]
    fn identity_map_and_choi() {
        let m = identity_site_map(2).unwrap();
        assert_eq!(m.single_kraus().unwrap(), &CMatrix::identity(4, 4));
        assert_eq!(m.rank(), Some(4));
        assert_abs_diff_eq!(choi_check(&identity_site_map(1).unwrap()), 0.0, epsilon = 1e-12);
        // Identity Choi = 2|Φ+><Φ+|: eigenvalues {0, 0, 0, 2}.
        let choi = HermitianOperator::new(choi_matrix(2, 2, |x| x.clone())).unwrap();
        let ev = choi.eigenvalues();
        assert_abs_diff_eq!(ev[3], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let lo = choi_min_eigenvalue(2, 2, |x| x.transpose()).unwrap();
        assert_abs_diff_eq!(lo, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_kraus_maps_are_cp() {
        let psi = PureState::product(&[PureState::bloch(1.0, 1.0, 1.0).unwrap(), PureState::bloch(1.0, 1.0, 1.0).unwrap()]).unwrap();
        let r2 = recipe2_site_map(2, 4, default_recipe2_states(&psi, 2).unwrap(), 0.4).unwrap();
        assert!(choi_check(&r2) >= -1e-12);
        let anchors = vec![PureState::basis(2, 0).unwrap(); 2];
        let r1 = recipe1_site_map(2, 4, &psi, &anchors, 0.2, 11).unwrap();
        assert!(choi_check(&r1) >= -1e-12);
    }

    #[test]
    fn chain_of_two_assembles_to_known_state() {
        let inst = recipe2_chain(2, 0.5);
        let ex = assemble_exact_state(&inst).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let want = [r, 0.0, 0.0, 0.25 * r];
        for (z, w) in ex.amplitudes.iter().zip(want) {
            assert_abs_diff_eq!(z.re, w, epsilon = 1e-14);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(ex.norm_sq, 0.53125, epsilon = 1e-14);
        let ent = entanglement_certificate(&inst).unwrap();
        assert_abs_diff_eq!(ent[0], 0.32276, epsilon = 1e-5);
        assert_abs_diff_eq!(ent[1], ent[0], epsilon = 1e-12);
    }

    #[test]
    fn zero_epsilon_gives_product_state() {
        let inst = recipe2_chain(4, 0.0);
        let ent = entanglement_certificate(&inst).unwrap();
        assert!(ent.iter().all(|&h| h.abs() < 1e-9));
        let ex = assemble_exact_state(&inst).unwrap();
        // T = Π_e |<00|φ_2>|² = (1/2)^E
        assert_abs_diff_eq!(ex.norm_sq, 0.125, epsilon = 1e-14);
    }

    #[test]
    fn identity_cycle_is_normalized_and_maximally_entangled() {
        for n in [3, 4] {
            let lattice = Lattice::cycle(n).unwrap();
            let maps = vec![identity_site_map(2).unwrap(); n];
            let inst = PepsInstance::new(
                lattice,
                maps,
                OperatorBasis::phase_point(),
                MeasurementSet::builtin("bell").unwrap(),
            )
            .unwrap();
            let ex = assemble_exact_state(&inst).unwrap();
            assert_abs_diff_eq!(ex.norm_sq, 1.0, epsilon = 1e-12);
            if n == 4 {
                for h in entanglement_certificate(&inst).unwrap() {
                    assert_abs_diff_eq!(h, 2.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn identity_chain_of_two_is_a_bond() {
        let lattice = Lattice::chain(2).unwrap();
        let maps = vec![identity_site_map(1).unwrap(); 2];
        let inst = PepsInstance::new(lattice, maps, OperatorBasis::phase_point(), pauli_product_measurements(1).unwrap()).unwrap();
        let ex = assemble_exact_state(&inst).unwrap();
        let phi = crate::basis::max_ent_state(2).unwrap();
        assert!((ex.normalized().inner(&phi).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_instance_is_rejected() {
        let lattice = Lattice::cycle(3).unwrap();
        let maps = vec![identity_site_map(1).unwrap(); 3];
        let res = PepsInstance::new(lattice, maps, OperatorBasis::phase_point(), pauli_product_measurements(2).unwrap());
        assert!(res.is_err());
    }

    #[test]
    fn site_classes_group_equal_patterns() {
        let lattice = Lattice::cycle(6).unwrap();
        let maps = vec![identity_site_map(2).unwrap(); 6];
        let inst = PepsInstance::new(lattice, maps, OperatorBasis::phase_point(), MeasurementSet::builtin("bell").unwrap()).unwrap();
        // site 0 is (head, tail); the others are (tail, head)
        assert_eq!(inst.class_representatives(), &[0, 1]);
        assert_eq!(inst.class_of(5), 1);
    }
}
