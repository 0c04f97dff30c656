use proptest::prelude::*;

use rsep_core::basis::{verify_decomposition, OperatorBasis};
use rsep_core::decomposition::{class_tables, edge_distribution, for_each_assignment, rv_positivity_check};
use rsep_core::dual::{admissible_povm, dual_margin, MeasurementSet, Povm};
use rsep_core::lattice::Lattice;
use rsep_core::linalg::{
    c, entanglement_entropy, min_eigenvalue, partial_trace, CMatrix, CVector, HermitianOperator, PureState,
};
use rsep_core::oracle::{tv_distance, JointDistribution};
use rsep_core::peps::{
    assemble_exact_state, choi_check, default_recipe2_states, recipe1_site_map, recipe2_site_map, PepsInstance,
};

fn hermitian(dim: usize, raw: &[f64]) -> HermitianOperator {
    let a = CMatrix::from_fn(dim, dim, |i, j| c(raw[2 * (i * dim + j)], raw[2 * (i * dim + j) + 1]));
    HermitianOperator::new((&a + a.adjoint()) * c(0.5, 0.0)).unwrap()
}

fn density(dim: usize, raw: &[f64]) -> HermitianOperator {
    let a = CMatrix::from_fn(dim, dim, |i, j| c(raw[2 * (i * dim + j)], raw[2 * (i * dim + j) + 1]));
    let p = &a * a.adjoint();
    let t = p.trace().re;
    let rho = p / c(t, 0.0);
    HermitianOperator::new((&rho + rho.adjoint()) * c(0.5, 0.0)).unwrap()
}

fn state(raw: &[f64]) -> PureState {
    let n = raw.len() / 2;
    PureState::normalized(CVector::from_fn(n, |i, _| c(raw[2 * i], raw[2 * i + 1]))).unwrap()
}

fn unitary(dim: usize, raw: &[f64]) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |i, j| c(raw[2 * (i * dim + j)], raw[2 * (i * dim + j) + 1]));
    a.qr().q()
}

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn bloch_pair() -> PureState {
    let b = PureState::bloch(1.0, 1.0, 1.0).unwrap();
    PureState::product(&[b.clone(), b]).unwrap()
}

fn aligned_zero() -> OperatorBasis {
    OperatorBasis::aligned(2, PureState::basis(2, 0).unwrap()).unwrap()
}

/// Recipe 2 with a per-site ε, on a lattice whose degrees fit d = 4.
fn recipe2_instance(lattice: Lattice, eps: &[f64], set: MeasurementSet) -> PepsInstance {
    let psi = bloch_pair();
    let maps = (0..lattice.n_sites())
        .map(|s| {
            let v = lattice.degree(s);
            recipe2_site_map(v, 4, default_recipe2_states(&psi, v).unwrap(), eps[s % eps.len()]).unwrap()
        })
        .collect();
    PepsInstance::new(lattice, maps, aligned_zero(), set).unwrap()
}

fn small_lattice(kind: u8, n: usize) -> Lattice {
    if kind == 0 {
        Lattice::chain(n).unwrap()
    } else {
        Lattice::cycle(n.max(3)).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_trace_preserves_trace(raw in entries(2 * 144), keep_mask in 1u8..7) {
        let op = hermitian(12, &raw);
        let keep: Vec<usize> = (0..3).filter(|k| keep_mask & (1 << k) != 0).collect();
        let reduced = partial_trace(&op, &[2, 3, 2], &keep).unwrap();
        prop_assert!((reduced.trace() - op.trace()).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_symmetric_under_complement(raw in entries(2 * 12), mask in 1u8..7) {
        let psi = state(&raw);
        let cut: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
        let rest: Vec<usize> = (0..3).filter(|k| mask & (1 << k) == 0).collect();
        let dims = [2, 3, 2];
        let a = entanglement_entropy(&psi, &dims, &cut).unwrap();
        let b = entanglement_entropy(&psi, &dims, &rest).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn min_eigenvalue_is_unitarily_invariant(raw in entries(2 * 16), u in entries(2 * 16)) {
        let op = hermitian(4, &raw);
        let q = unitary(4, &u);
        let rotated = &q * op.matrix() * q.adjoint();
        let rotated = HermitianOperator::new((&rotated + rotated.adjoint()) * c(0.5, 0.0)).unwrap();
        prop_assert!((min_eigenvalue(&rotated) - min_eigenvalue(&op)).abs() < 1e-9);
    }

    #[test]
    fn strict_margin_is_concave(a in entries(8), b in entries(8)) {
        let set = MeasurementSet::builtin("pauli:1").unwrap();
        let (ra, rb) = (density(2, &a), density(2, &b));
        let mid = HermitianOperator::new((ra.matrix() + rb.matrix()) * c(0.5, 0.0)).unwrap();
        let m = |r: &HermitianOperator| dual_margin(r, &set).unwrap().strict_margin;
        prop_assert!(m(&mid) >= 0.5 * (m(&ra) + m(&rb)) - 1e-12);
    }

    #[test]
    fn density_matrices_lie_in_every_dual(raw in entries(2 * 16)) {
        let rho = density(4, &raw);
        for name in ["pauli:2", "noisy-pauli:2:0.4", "bell"] {
            let set = MeasurementSet::builtin(name).unwrap();
            prop_assert!(dual_margin(&rho, &set).unwrap().in_dual(1e-9));
        }
    }

    #[test]
    fn admissibility_ignores_element_order(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let bell = MeasurementSet::builtin("bell").unwrap().povms()[0].clone();
        let shuffled = Povm::new("bell", perm.iter().map(|&k| bell.elements()[k].clone()).collect()).unwrap();
        let b = OperatorBasis::phase_point();
        let spaces = [b.space(false), b.space(true)];
        let x = admissible_povm(&bell, &spaces).unwrap();
        let y = admissible_povm(&shuffled, &spaces).unwrap();
        prop_assert_eq!(x.admissible, y.admissible);
        prop_assert!((x.min_value - y.min_value).abs() < 1e-14);
        prop_assert!((x.max_value - y.max_value).abs() < 1e-14);
    }

    #[test]
    fn tv_satisfies_the_triangle_inequality(a in entries(6), b in entries(6), c3 in entries(6)) {
        let dist = |raw: &[f64]| {
            let w: Vec<f64> = raw.iter().map(|x| x.abs() + 1e-3).collect();
            let s: f64 = w.iter().sum();
            JointDistribution::new(vec![2, 3], w.iter().map(|x| x / s).collect()).unwrap()
        };
        let (p, q, r) = (dist(&a), dist(&b), dist(&c3));
        let pr = tv_distance(&p, &r).unwrap();
        let pq = tv_distance(&p, &q).unwrap();
        let qr = tv_distance(&q, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-12);
        prop_assert!((0.0..=1.0).contains(&pq));
    }

    #[test]
    fn aligned_bases_have_equal_anchor_overlaps(d in 2usize..5, raw in entries(8)) {
        let anchor = state(&raw[..2 * d]);
        let b = OperatorBasis::aligned(d, anchor).unwrap();
        prop_assert!(b.gram_error() < 1e-10);
        prop_assert!(verify_decomposition(&b) < 1e-10);
        for o in b.anchor_overlaps().unwrap() {
            prop_assert!((o - 1.0 / (d as f64).sqrt()).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn edge_product_matches_brute_force_trace_products(kind in 0u8..2, n in 2usize..6, eps in prop::collection::vec(0.0f64..0.6, 3)) {
        let lattice = small_lattice(kind, n);
        prop_assume!(lattice.n_edges() <= 8);
        let inst = recipe2_instance(lattice, &eps, MeasurementSet::builtin("noisy-pauli:2:0.0").unwrap());
        let tables = class_tables(&inst).unwrap();
        let dists = edge_distribution(&inst).unwrap();
        let mut brute = Vec::new();
        let mut product = Vec::new();
        for_each_assignment(inst.lattice().n_edges(), 4, |a| {
            brute.push((0..inst.n_sites()).map(|s| tables[inst.class_of(s)].traces[a.site_tuple(&inst, s)]).product::<f64>());
            product.push(a.0.iter().enumerate().map(|(e, &k)| dists.probs[e][k]).product::<f64>());
        });
        let total: f64 = brute.iter().sum();
        for (b, p) in brute.iter().zip(&product) {
            prop_assert!((b / total - p).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_agrees_across_routes(kind in 0u8..2, n in 2usize..7, eps in prop::collection::vec(0.0f64..0.8, 3)) {
        prop_assume!(kind == 0 || n <= 4);
        let inst = recipe2_instance(small_lattice(kind, n), &eps, MeasurementSet::builtin("noisy-pauli:2:0.0").unwrap());
        let t_edges = edge_distribution(&inst).unwrap().t;
        let t_exact = assemble_exact_state(&inst).unwrap().norm_sq;
        prop_assert!((t_edges - t_exact).abs() / t_exact < 1e-10);
    }

    #[test]
    fn assembly_is_permutation_covariant(perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(), eps in prop::collection::vec(0.05f64..0.6, 4)) {
        let lattice = Lattice::chain(4).unwrap();
        let set = MeasurementSet::builtin("noisy-pauli:2:0.0").unwrap();
        let inst = recipe2_instance(lattice.clone(), &eps, set.clone());
        let mut maps = inst.site_maps().to_vec();
        for (old, &new) in perm.iter().enumerate() {
            maps[new] = inst.site_maps()[old].clone();
        }
        let moved = PepsInstance::new(lattice.relabel(&perm).unwrap(), maps, aligned_zero(), set).unwrap();
        let a = assemble_exact_state(&inst).unwrap();
        let b = assemble_exact_state(&moved).unwrap();
        prop_assert!((a.norm_sq - b.norm_sq).abs() < 1e-12);
        for old_flat in 0..256usize {
            let digits: Vec<usize> = (0..4).map(|s| (old_flat >> (2 * (3 - s))) & 3).collect();
            let mut new_digits = [0usize; 4];
            for (s, &j) in digits.iter().enumerate() {
                new_digits[perm[s]] = j;
            }
            let new_flat = new_digits.iter().fold(0, |acc, &j| acc * 4 + j);
            prop_assert!((a.amplitudes[old_flat] - b.amplitudes[new_flat]).norm() < 1e-12);
        }
    }

    #[test]
    fn recipe2_singular_values_are_hamming_powers(v in 1usize..4, eps in 0.0f64..1.0) {
        let d = 1 << v;
        let psi_y = (0..d).map(|k| PureState::basis(d, k).unwrap()).collect();
        let map = recipe2_site_map(v, d, psi_y, eps).unwrap();
        let mut want: Vec<f64> = (0..d).map(|y: usize| eps.powi(y.count_ones() as i32)).collect();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let got = map.singular_values().unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn constructed_maps_are_completely_positive(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let anchors = vec![PureState::basis(2, 0).unwrap(); 2];
        let map = recipe1_site_map(2, 4, &bloch_pair(), &anchors, eps, seed).unwrap();
        prop_assert!(choi_check(&map) >= -1e-9);
    }
}

#[test]
fn certified_instances_give_valid_conditional_probabilities() {
    let set = MeasurementSet::builtin("noisy-pauli:2:0.5").unwrap();
    let inst = recipe2_instance(Lattice::cycle(3).unwrap(), &[0.3], set.clone());
    assert!(rv_positivity_check(&inst).unwrap().is_certified());
    let tables = class_tables(&inst).unwrap();
    for_each_assignment(3, 4, |a| {
        for s in 0..3 {
            let sigma = tables[inst.class_of(s)].normalized(a.site_tuple(&inst, s)).unwrap();
            for povm in set.povms() {
                let p = povm.probabilities(&sigma);
                assert!(p.iter().all(|&x| (-1e-9..=1.0 + 1e-9).contains(&x)));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    });
}
