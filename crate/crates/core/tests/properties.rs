use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use blochlab::bloch::{solve_bands, BlochBasis};
use blochlab::lattice::LatticeConfig;
use blochlab::measurement::{estimate_phase, sample_shots, site_distribution, wrap_angle};
use blochlab::state::{
    expectation, from_plane_wave, hamiltonian, matrix_element, phased_pair, projector_onto, superpose,
    to_plane_wave, wannier_projector, BasisTag, StateVector,
};

fn basis(n: usize) -> BlochBasis {
    solve_bands(&LatticeConfig::plane_wave(n, 1.0, 8.0, 4, 2).unwrap()).unwrap()
}

fn random_state(basis: &BlochBasis, raw: &[(f64, f64)]) -> StateVector {
    let tag = BasisTag::bloch(basis);
    let amps: Vec<Complex64> = raw.iter().take(tag.dim()).map(|&(re, im)| Complex64::new(re, im)).collect();
    StateVector::normalized(tag, amps, Vec::new()).unwrap()
}

fn amps_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16).prop_filter("nonzero", |v| {
        v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_matrix_elements_are_hermitian(a in amps_strategy(), b in amps_strategy(), site in 0usize..8, band in 0usize..2) {
        let basis = basis(8);
        let op = wannier_projector(&basis, band, site).unwrap();
        let (x, y) = (random_state(&basis, &a), random_state(&basis, &b));
        let xy = matrix_element(&op, &x, &y).unwrap();
        let yx = matrix_element(&op, &y, &x).unwrap();
        prop_assert!((xy - yx.conj()).norm() < 1e-12);
    }

    #[test]
    fn basis_round_trips_are_identity(a in amps_strategy()) {
        let basis = basis(8);
        let psi = random_state(&basis, &a);
        let back = psi.to_wannier().unwrap().to_bloch().unwrap();
        let pw = from_plane_wave(&to_plane_wave(&psi, &basis).unwrap(), &basis).unwrap();
        for (x, (y, z)) in psi.amps().iter().zip(back.amps().iter().zip(pw.amps())) {
            prop_assert!((x - y).norm() < 1e-12);
            prop_assert!((x - z).norm() < 1e-12);
        }
    }

    #[test]
    fn global_phase_leaves_observables(a in amps_strategy(), theta in -PI..PI, site in 0usize..8) {
        let basis = basis(8);
        let psi = random_state(&basis, &a);
        let turned = psi.with_phase(theta);
        let op = wannier_projector(&basis, 0, site).unwrap();
        assert_abs_diff_eq!(expectation(&op, &psi).unwrap(), expectation(&op, &turned).unwrap(), epsilon = 1e-12);
        let h = hamiltonian(&basis);
        assert_abs_diff_eq!(expectation(&h, &psi).unwrap(), expectation(&h, &turned).unwrap(), epsilon = 1e-10);
        let p = site_distribution(&psi, &basis).unwrap();
        let q = site_distribution(&turned, &basis).unwrap();
        for (x, y) in p.probs().iter().zip(q.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn site_distribution_is_normalized(a in amps_strategy()) {
        let basis = basis(8);
        let p = site_distribution(&random_state(&basis, &a), &basis).unwrap();
        assert_abs_diff_eq!(p.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn bootstrap_stderr_covers_true_deviation() {
    let basis = basis(8);
    let a = StateVector::bloch(&basis, 0, 0).unwrap();
    let b = StateVector::bloch(&basis, 0, 1).unwrap();
    let phi = PI / 3.0;
    let p = site_distribution(&phased_pair(&a, &b, phi).unwrap(), &basis).unwrap();
    let dk = basis.kgrid().get(1);
    let within = (0..100u64)
        .filter(|&seed| {
            let est = estimate_phase(&sample_shots(&p, 10_000, seed).unwrap(), dk).unwrap();
            wrap_angle(est.phi_hat - phi).abs() < 2.0 * est.stderr
        })
        .count();
    assert!(within >= 90, "{within}/100 within 2 stderr");
}

#[test]
fn cross_band_pair_is_invisible_to_wannier_projector() {
    let basis = basis(8);
    let a = StateVector::bloch(&basis, 0, 0).unwrap();
    let b = StateVector::bloch(&basis, 1, 3).unwrap();
    let op = wannier_projector(&basis, 0, 2).unwrap();
    let values: Vec<f64> = [0.0, PI / 2.0, PI]
        .iter()
        .map(|&phi| expectation(&op, &phased_pair(&a, &b, phi).unwrap()).unwrap())
        .collect();
    for v in &values {
        assert_abs_diff_eq!(*v, 0.5 / 8.0, epsilon = 1e-12);
    }
}

#[test]
fn interband_projector_sees_cross_band_phase() {
    let basis = basis(8);
    let w0 = StateVector::wannier(&basis, 0, 0).unwrap();
    let w1 = StateVector::wannier(&basis, 1, 0).unwrap();
    let s = 0.5f64.sqrt();
    let target = superpose(&[w0, w1], &[Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap();
    let op = projector_onto(&target.to_bloch().unwrap(), "interband");
    let a = StateVector::bloch(&basis, 0, 0).unwrap();
    let b = StateVector::bloch(&basis, 1, 0).unwrap();
    let at = |phi: f64| expectation(&op, &phased_pair(&a, &b, phi).unwrap()).unwrap();
    assert!((at(0.0) - at(PI)).abs() > 1e-3);
}
