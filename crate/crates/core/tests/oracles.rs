mod common;

use lts_core::coarse::{ApproxOptions, CoarseGraining, CompanionBlocks, PhaseRule};
use lts_core::ltsmap::{exact_map, kfold_family_map};
use lts_core::opensys::{kfold_reduced, lindblad_dephasing, PureDecoherenceInteraction};
use lts_core::random::{random_density_matrix, random_hermitian, random_real_psd};
use lts_core::spectra::SpectralDecomposition;
use lts_core::{linalg, DensityMatrix, LocalTimeParams, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, quadrature_apply, random_spectrum, rk4_lindblad};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_map_matches_time_quadrature(seed in any::<u64>(), d in 2usize..7, t0 in 0.0f64..20.0, lambda in 0.3f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, d);
        let spec = SpectralDecomposition::from_hermitian(&h, 1e-9).unwrap();
        let rho = random_density_matrix(&mut rng, d);
        let map = exact_map(&spec, &LocalTimeParams::new(t0, lambda).unwrap()).unwrap();
        let slow = quadrature_apply(&h, rho.matrix(), t0, lambda, 2001);
        prop_assert!(max_abs_diff(map.apply(&rho).unwrap().matrix(), &slow) < 1e-8);
    }

    #[test]
    fn reduced_kfold_matches_total_system(seed in any::<u64>(), ns in 2usize..4, ne in 1usize..4, k in 1u32..6, t0 in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let energies = DMatrix::from_fn(ns, ne, |_, _| rng.random_range(-2.0..2.0));
        let inter = PureDecoherenceInteraction::with_ranks(energies, vec![1; ns], vec![1; ne]).unwrap();
        let total = inter.interaction_spectrum().unwrap();
        let rho_s = random_density_matrix(&mut rng, ns);
        let rho_e = random_density_matrix(&mut rng, ne);
        let p = inter.environment_weights(&rho_e).unwrap();
        let lambda = rng.random_range(0.2..3.0);
        let big = kfold_family_map(&total, &LocalTimeParams::new(t0, lambda).unwrap(), k).unwrap();
        let traced = big.apply(&rho_s.tensor(&rho_e)).unwrap().partial_trace_second(ne).unwrap();
        let direct = kfold_reduced(&inter, &p, lambda, t0, k).unwrap().apply(&rho_s).unwrap();
        prop_assert!(max_abs_diff(traced.matrix(), direct.matrix()) < 1e-12);
    }

    #[test]
    fn dephasing_matches_runge_kutta(seed in any::<u64>(), n in 2usize..5, k in 1usize..3, t in 0.1f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma = random_real_psd(&mut rng, k);
        let a: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ops: Vec<DMatrix<C64>> = a
            .iter()
            .map(|v| DMatrix::from_diagonal(&DVector::from_iterator(n, v.iter().map(|x| C64::new(*x, 0.0)))))
            .collect();
        let rho = random_density_matrix(&mut rng, n);
        let analytic = lindblad_dephasing(&gamma, &a, &rho, t).unwrap();
        let numeric = rk4_lindblad(&ops, &gamma, rho.matrix(), t, 2000);
        prop_assert!(max_abs_diff(analytic.matrix(), &numeric) < 1e-6);
    }

    #[test]
    fn grouped_min_eigenvalue_matches_dense(seed in any::<u64>(), t0 in 0.0f64..200.0, unit in any::<bool>(), per_pair in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spectrum(&mut rng, 30, 4.0);
        let n = spec.count();
        let mut companions = vec![Vec::new(); n];
        let mut m = 0;
        while m < n {
            let size = rng.random_range(0..4).min(n - m - 1);
            companions[m] = (m + 1..=m + size).collect();
            m += size + 1;
        }
        let cg = CoarseGraining::from_spectrum(&spec, companions).unwrap();
        let opts = ApproxOptions {
            companions: if unit { CompanionBlocks::Unit } else { CompanionBlocks::Omit },
            phase_rule: if per_pair { PhaseRule::PerPair } else { PhaseRule::GroupMean },
        };
        let dense = linalg::eigenvalues(&cg.approx_coefficients(t0, &opts))[0];
        prop_assert!((cg.approx_min_eigenvalue(t0, &opts) - dense).abs() < 1e-12);
    }
}

#[test]
fn spin_ensemble_map_matches_dense_hamiltonian() {
    // Levels stored compactly must act like the dense 2^N Hamiltonian.
    let spec = SpectralDecomposition::spin_ensemble(4, 0.7).unwrap();
    let h = spec.hamiltonian();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = random_density_matrix(&mut rng, 16);
    let map = exact_map(&spec, &LocalTimeParams::new(2.5, 1.3).unwrap()).unwrap();
    let slow = quadrature_apply(&h, rho.matrix(), 2.5, 1.3, 2001);
    assert!(max_abs_diff(map.apply(&rho).unwrap().matrix(), &slow) < 1e-8);
    let out = DensityMatrix::new(slow).unwrap();
    assert!((out.trace() - 1.0).abs() < 1e-10);
}
