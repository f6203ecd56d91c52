//! Property tests for representation and measurement invariants.

use nalgebra::DVector;
use proptest::prelude::*;

use vibronic::dynamics::{evolve, h_red, h_red_ladder, DynamicsConfig};
use vibronic::statespace::{
    embed_ladder_state, extract_ladder_amplitudes, project_phonon_number, project_spin_config,
    sector_ladder, BasisRef, FullBasis, QuantumState,
};
use vibronic::C64;

fn amplitude() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

/// Nonzero amplitude vector of the requested length.
fn amplitudes(len: usize) -> impl Strategy<Value = Vec<C64>> {
    proptest::collection::vec(amplitude(), len).prop_filter("needs some weight", |v| {
        v.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-3
    })
}

fn normalized_state(basis: BasisRef, raw: Vec<C64>) -> QuantumState {
    QuantumState::normalized(basis, DVector::from_vec(raw)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn save_load_round_trip_is_bit_exact(
        n_ions in 1usize..4,
        cutoff in 0usize..3,
        seed_amps in amplitudes(1 << 5),
    ) {
        let basis = FullBasis::new(n_ions, &[(0, cutoff)]).unwrap();
        let dim = basis.dim();
        let raw: Vec<C64> = (0..dim).map(|i| seed_amps[i % seed_amps.len()]).collect();
        let state = normalized_state(BasisRef::Full(basis), raw);
        let mut buf = Vec::new();
        state.save_text(&mut buf).unwrap();
        let loaded = QuantumState::load_text(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(state.basis(), loaded.basis());
        for (a, b) in state.amplitudes().iter().zip(loaded.amplitudes().iter()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn embed_then_extract_is_identity(
        n_ions in 2usize..6,
        r in 0usize..5,
        seed_amps in amplitudes(8),
    ) {
        let ladder = sector_ladder(n_ions, r);
        let raw: Vec<C64> = (0..ladder.len()).map(|i| seed_amps[i % seed_amps.len()]).collect();
        let norm: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let coeffs: Vec<C64> = raw.iter().map(|a| a / norm).collect();
        let basis = FullBasis::new(n_ions, &[(0, r + 2)]).unwrap();
        let full = embed_ladder_state(&ladder, &coeffs, &basis).unwrap();
        let back = extract_ladder_amplitudes(&full, &ladder).unwrap();
        for (a, b) in coeffs.iter().zip(&back) {
            prop_assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn projection_outcomes_are_complete(
        n_ions in 1usize..4,
        cutoff in 1usize..4,
        seed_amps in amplitudes(1 << 6),
    ) {
        let basis = FullBasis::new(n_ions, &[(0, cutoff)]).unwrap();
        let dim = basis.dim();
        let raw: Vec<C64> = (0..dim).map(|i| seed_amps[i % seed_amps.len()]).collect();
        let state = normalized_state(BasisRef::Full(basis.clone()), raw);

        let mut phonon_total = 0.0;
        for n in 0..=cutoff {
            let (p, cond) = project_phonon_number(&state, 0, n).unwrap();
            prop_assert!(p >= 0.0);
            if let Some(c) = cond {
                prop_assert!((c.amplitudes().norm() - 1.0).abs() < 1e-12);
            }
            phonon_total += p;
        }
        prop_assert!((phonon_total - 1.0).abs() < 1e-12);

        let mut spin_total = 0.0;
        for s in 0..basis.spin_dim() {
            spin_total += project_spin_config(&state, s).unwrap().0;
        }
        prop_assert!((spin_total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn com_interaction_preserves_embedded_sector(
        n_ions in 2usize..5,
        r in 1usize..4,
        seed_amps in amplitudes(8),
    ) {
        // H_red^0 applied to an embedded ladder state stays inside the
        // embedded ladder span.
        let cfg = DynamicsConfig::default();
        let ladder = sector_ladder(n_ions, r);
        let raw: Vec<C64> = (0..ladder.len()).map(|i| seed_amps[i % seed_amps.len()]).collect();
        let norm: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let coeffs: Vec<C64> = raw.iter().map(|a| a / norm).collect();
        let basis = FullBasis::new(n_ions, &[(0, r + 2)]).unwrap();
        let modes = vibronic::ionchain::normal_modes(n_ions).unwrap();
        let h = h_red(0, &modes, &basis, &cfg).unwrap();
        let psi = embed_ladder_state(&ladder, &coeffs, &basis).unwrap();
        let image = h.apply(psi.amplitudes());

        // Orthonormal embedded slot states span the sector; subtract the
        // in-span component and measure what is left.
        let mut residual = image.clone();
        for k in 0..ladder.len() {
            let mut unit = vec![C64::new(0.0, 0.0); ladder.len()];
            unit[k] = C64::new(1.0, 0.0);
            let slot = embed_ladder_state(&ladder, &unit, &basis).unwrap();
            let coeff = slot.amplitudes().dotc(&image);
            residual -= slot.amplitudes() * coeff;
        }
        prop_assert!(residual.norm() < 1e-12, "leak {}", residual.norm());
    }

    #[test]
    fn ladder_evolution_reverses(
        n_ions in 2usize..9,
        r in 1usize..5,
        t in 0.01f64..5.0,
        seed_amps in amplitudes(12),
    ) {
        let cfg = DynamicsConfig::default();
        let ladder = sector_ladder(n_ions, r);
        let raw: Vec<C64> = (0..ladder.len()).map(|i| seed_amps[i % seed_amps.len()]).collect();
        let norm: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let state = normalized_state(
            BasisRef::Ladder(ladder.clone()),
            raw.iter().map(|a| a / norm).collect(),
        );
        let h = h_red_ladder(n_ions, r, &cfg).unwrap();
        let there = evolve(&h, &state, t, &cfg).unwrap();
        let back = evolve(&h, &there, -t, &cfg).unwrap();
        for (a, b) in state.amplitudes().iter().zip(back.amplitudes().iter()) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}
