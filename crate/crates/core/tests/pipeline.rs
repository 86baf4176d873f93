use hmps_core::mps::{named_state, MpsState, NamedState};
use hmps_core::oracle::{dense_hamiltonian, exact_fidelity, exact_gap, ZERO_TOL};
use hmps_core::reconstruct::{reconstruct, Method, ReconstructOptions};
use hmps_core::tomo::{exact_reductions, perturb, sample_measurements};
use hmps_core::witness::{certify, parent_projectors, GapSource, Thresholds};
use proptest::prelude::*;

fn numeric_gap(psi: &MpsState) -> f64 {
    let ws = parent_projectors(psi, 1e-8).unwrap();
    let h = dense_hamiltonian(&ws, psi.n(), psi.d()).unwrap();
    exact_gap(&h, ZERO_TOL).unwrap().gap
}

#[test]
fn exact_random_data_reconstructs_and_certifies() {
    let truth = MpsState::random(8, 2, 2, 11).unwrap();
    let data = exact_reductions(&truth, 2).unwrap();
    let opts = ReconstructOptions {
        bond_dim: 2,
        ..ReconstructOptions::default()
    };
    let rec = reconstruct(&data, &opts).unwrap();
    let gap = numeric_gap(&rec.state);
    let cert = certify(&rec.state, &data, GapSource::Numeric(gap), &Thresholds::default()).unwrap();
    assert!(cert.is_certified(), "{:?}", cert.status);
    assert!(cert.tau.unwrap() <= 1e-6);

    let dense = truth.block(2).unwrap().to_dense().unwrap();
    let oracle = exact_fidelity(&rec.state, &dense).unwrap();
    assert!(cert.fidelity_lower_bound <= oracle + 1e-8);
    assert!(oracle > 1.0 - 1e-6);
}

#[test]
fn sampled_aklt_data_gives_a_sound_certificate() {
    let truth = named_state(NamedState::Aklt, 6, 3).unwrap();
    let data = sample_measurements(&truth, 1, 200_000, 0.9, 4).unwrap();
    assert!(data.windows.iter().all(|w| w.epsilon > 0.0));
    let other = MpsState::random(6, 3, 2, 8).unwrap();
    let dense = truth.to_dense().unwrap();
    for estimate in [truth.clone(), other] {
        let gap = GapSource::Numeric(numeric_gap(&estimate));
        let cert = certify(&estimate, &data, gap, &Thresholds::default()).unwrap();
        let oracle = exact_fidelity(&estimate, &dense).unwrap();
        if cert.is_certified() {
            assert!(cert.fidelity_lower_bound <= oracle + 1e-8);
        }
    }
}

#[test]
fn ghz_reconstruction_is_heralded() {
    let truth = named_state(NamedState::Ghz, 6, 2).unwrap();
    let data = exact_reductions(&truth, 1).unwrap();
    let cert = certify(&truth, &data, GapSource::Analytic, &Thresholds::default()).unwrap();
    assert!(!cert.is_certified());
    assert_eq!(cert.failure().unwrap().as_str(), "gamma-singular");
}

#[test]
fn variational_pipeline_never_increases_objective() {
    let truth = MpsState::random(4, 2, 2, 2).unwrap();
    let data = perturb(&exact_reductions(&truth, 1).unwrap(), 1e-3, 9).unwrap();
    let opts = ReconstructOptions {
        max_sweeps: 5,
        method: Method::Variational,
        ..ReconstructOptions::default()
    };
    let rec = reconstruct(&data, &opts).unwrap();
    assert!(rec.log.windows(2).all(|w| w[1].objective <= w[0].objective));
    assert_eq!(rec.objective, rec.log.last().unwrap().objective);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certified_bounds_never_exceed_true_fidelity(
        seed in 0u64..10_000,
        bond_dim in 1usize..=3,
        level in prop_oneof![Just(0.0), 1e-4..5e-2f64],
    ) {
        let truth = MpsState::random(6, 2, bond_dim, seed).unwrap();
        let blocked = truth.block(2).unwrap();
        let dense = blocked.to_dense().unwrap();
        let data = perturb(&exact_reductions(&truth, 2).unwrap(), level, seed).unwrap();
        let opts = ReconstructOptions { bond_dim, seed, ..ReconstructOptions::default() };
        if let Ok(rec) = reconstruct(&data, &opts) {
            let oracle = exact_fidelity(&rec.state, &dense).unwrap();
            for source in [GapSource::Analytic, GapSource::Numeric(numeric_gap(&rec.state))] {
                if let Ok(cert) = certify(&rec.state, &data, source, &Thresholds::default()) {
                    if cert.is_certified() {
                        prop_assert!(cert.fidelity_lower_bound <= oracle + 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn more_noise_never_raises_the_bound(seed in 0u64..10_000, low in 0.0..1e-2f64, extra in 0.0..1e-2f64) {
        let truth = MpsState::random(6, 2, 2, seed).unwrap();
        let estimate = truth.block(2).unwrap();
        let clean = exact_reductions(&truth, 2).unwrap();
        let gap = GapSource::Numeric(numeric_gap(&estimate));
        let a = certify(&estimate, &perturb(&clean, low, seed).unwrap(), gap, &Thresholds::default()).unwrap();
        let mut noisier = perturb(&clean, low, seed).unwrap();
        for w in &mut noisier.windows {
            w.epsilon += extra;
        }
        let b = certify(&estimate, &noisier, gap, &Thresholds::default()).unwrap();
        prop_assert!(b.fidelity_lower_bound <= a.fidelity_lower_bound);
    }
}
