//! Populations, entropies, fidelities, phonon statistics and two-qubit
//! entanglement of Dicke states.

use crate::error::{Error, Result};
use crate::statespace::{
    dicke_state, extract_ladder_amplitudes, partial_trace_spins, spin_pair_reduction, BasisRef,
    DensityMatrix, QuantumState, SectorLadder,
};

/// Per-slot populations of a state with respect to a sector ladder.
///
/// For a state already in the ladder basis this is the squared modulus of
/// each amplitude. A full-basis state is projected slot by slot, so the
/// populations sum to at most 1 and reach 1 exactly when the state lies in
/// the sector.
pub fn ladder_populations(state: &QuantumState, ladder: &SectorLadder) -> Result<Vec<f64>> {
    match state.basis() {
        BasisRef::Ladder(l) => {
            if l != ladder {
                return Err(Error::BasisMismatch {
                    context: "state lives on a different ladder".into(),
                });
            }
            Ok(state.amplitudes().iter().map(|a| a.norm_sqr()).collect())
        }
        BasisRef::Full(_) => {
            let amps = extract_ladder_amplitudes(state, ladder)?;
            Ok(amps.iter().map(|a| a.norm_sqr()).collect())
        }
    }
}

fn entropy_bits(probabilities: impl IntoIterator<Item = f64>) -> f64 {
    // max(0.0) clears the negative-signed zero that an empty or pure-state
    // sum produces.
    probabilities
        .into_iter()
        .filter(|p| *p > 1e-14)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// Von Neumann entropy (base 2) of the spin reduced density matrix.
pub fn entropy_spins(state: &QuantumState) -> Result<f64> {
    let rho = partial_trace_spins(state)?;
    Ok(entropy_bits(rho.eigenvalues()))
}

/// Spin entropy of a ladder-basis state.
///
/// Slots carry distinct phonon numbers, so the ladder amplitudes are
/// already the Schmidt coefficients of the spin/phonon split and the
/// entropy needs no density matrix.
pub fn entropy_spins_ladder(state: &QuantumState) -> Result<f64> {
    state.basis().as_ladder()?;
    Ok(entropy_bits(
        state.amplitudes().iter().map(|a| a.norm_sqr()),
    ))
}

/// Squared overlap |<target|state>|^2.
pub fn fidelity(state: &QuantumState, target: &QuantumState) -> Result<f64> {
    Ok(target.overlap(state)?.norm_sqr().clamp(0.0, 1.0))
}

/// Occupation probability distribution of one phonon mode.
pub fn phonon_distribution(state: &QuantumState, mode: usize) -> Result<Vec<f64>> {
    let basis = state.basis().as_full()?;
    let slot = basis
        .mode_slot(mode)
        .ok_or(Error::InactiveMode { mode })?;
    let cutoff = basis.modes()[slot].cutoff;
    let mut dist = vec![0.0; cutoff + 1];
    for (i, a) in state.amplitudes().iter().enumerate() {
        if a.re == 0.0 && a.im == 0.0 {
            continue;
        }
        let (_, occ) = basis.label(i);
        dist[occ[slot]] += a.norm_sqr();
    }
    Ok(dist)
}

/// Negativity of a two-qubit density matrix: the absolute sum of the
/// negative eigenvalues of the partial transpose over the second qubit
/// (equivalently (||rho^T2||_1 - 1)/2, so a Bell pair scores 1/2).
pub fn pairwise_negativity(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::InvalidArgument(format!(
            "pairwise negativity needs a 4x4 density matrix, got {}",
            rho.dim()
        )));
    }
    if rho.eigenvalues().iter().any(|&p| p < -1e-10) {
        return Err(Error::InvalidArgument(
            "density matrix has a significantly negative eigenvalue".into(),
        ));
    }
    // Index (a, b) -> a + 2b; transpose the second (slow) qubit index.
    let m = rho.entries();
    let mut pt = m.clone();
    for a in 0..2 {
        for ap in 0..2 {
            for b in 0..2 {
                for bp in 0..2 {
                    pt[(a + 2 * b, ap + 2 * bp)] = m[(a + 2 * bp, ap + 2 * b)];
                }
            }
        }
    }
    let ev = pt.symmetric_eigen().eigenvalues;
    Ok(ev
        .iter()
        .filter(|&&x| x < 0.0)
        .map(|x| -x)
        .sum::<f64>()
        .max(0.0))
}

/// Reduced two-qubit state of a symmetric Dicke state with k excitations.
///
/// Permutation symmetry makes every pair equivalent; this is checked by
/// reducing two distinct pairs and comparing.
pub fn dicke_two_qubit_reduction(n_ions: usize, k: usize) -> Result<DensityMatrix> {
    if n_ions < 2 {
        return Err(Error::InvalidArgument(
            "two-qubit reduction needs at least two ions".into(),
        ));
    }
    let state = dicke_state(n_ions, k)?;
    let rho = spin_pair_reduction(&state, 0, 1)?;
    let (other_a, other_b) = if n_ions >= 3 {
        (n_ions - 2, n_ions - 1)
    } else {
        (1, 0)
    };
    let other = spin_pair_reduction(&state, other_a, other_b)?;
    let mut defect: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            defect = defect.max((rho.entries()[(i, j)] - other.entries()[(i, j)]).norm());
        }
    }
    if defect > 1e-14 {
        return Err(Error::InvalidArgument(format!(
            "pair reductions disagree by {defect:.3e}"
        )));
    }
    Ok(rho)
}
