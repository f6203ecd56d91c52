//! Mode-weighted collective spin operators and conserved charges.
//!
//! For mode j with amplitudes b_nj, the raising operator is
//! `L+^j = sum_n b_nj sigma+^n`, acting as the identity on any phonon
//! factors of the basis. Spin convention: sigma_z has eigenvalues +-1/2,
//! so `L_z = sum_n sigma_z^n` has eigenvalues m in [-N/2, N/2].
//!
//! The excitation charge `R = sum_m a_m^dag a_m + L_z + N/2` counts phonons
//! plus spin flips and commutes with every red sideband Hamiltonian; its
//! blue counterpart `B = sum_m a_m^dag a_m - L_z + N/2` counts phonons plus
//! down spins.

use crate::error::{Error, Result};
use crate::ionchain::ModeTable;
use crate::operator::OperatorMatrix;
use crate::statespace::{BasisRef, FullBasis};
use crate::C64;

fn check_mode(j: usize, modes: &ModeTable, basis: &FullBasis) -> Result<()> {
    if basis.n_ions() != modes.n_ions() {
        return Err(Error::IonCountMismatch {
            basis: basis.n_ions(),
            modes: modes.n_ions(),
        });
    }
    if j >= modes.n_ions() {
        return Err(Error::ModeIndex {
            mode: j,
            n_ions: modes.n_ions(),
        });
    }
    Ok(())
}

/// `L+^j` over the given basis.
pub fn l_plus(j: usize, modes: &ModeTable, basis: &FullBasis) -> Result<OperatorMatrix> {
    check_mode(j, modes, basis)?;
    let n = basis.n_ions();
    let pdim = basis.phonon_dim();
    let mut triplets = Vec::new();
    for s in 0..basis.spin_dim() {
        for ion in 0..n {
            if s & (1 << ion) != 0 {
                continue;
            }
            let up = s | (1 << ion);
            let b = modes.amplitude(ion, j);
            for p in 0..pdim {
                triplets.push((up * pdim + p, s * pdim + p, C64::new(b, 0.0)));
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(
        BasisRef::Full(basis.clone()),
        triplets,
        false,
    ))
}

/// `L-^j`, the adjoint of [`l_plus`].
pub fn l_minus(j: usize, modes: &ModeTable, basis: &FullBasis) -> Result<OperatorMatrix> {
    Ok(l_plus(j, modes, basis)?.adjoint())
}

/// `L_z = sum_n sigma_z^n`, diagonal with eigenvalues (#up - N/2).
pub fn l_z(basis: &FullBasis) -> OperatorMatrix {
    let n = basis.n_ions();
    let pdim = basis.phonon_dim();
    let mut triplets = Vec::new();
    for s in 0..basis.spin_dim() {
        let m = (s as u64).count_ones() as f64 - n as f64 / 2.0;
        if m == 0.0 {
            continue;
        }
        for p in 0..pdim {
            let i = s * pdim + p;
            triplets.push((i, i, C64::new(m, 0.0)));
        }
    }
    OperatorMatrix::from_triplets(BasisRef::Full(basis.clone()), triplets, true)
}

/// `L^2(j) = L_z^2 + (Lam+^j Lam-^j + Lam-^j Lam+^j) / 2` where
/// `Lam+-^j = sqrt(N) L+-^j` is the collectively normalized ladder pair.
/// On the COM mode this is the standard total angular momentum Casimir
/// with spectrum l(l+1).
pub fn l_squared(j: usize, modes: &ModeTable, basis: &FullBasis) -> Result<OperatorMatrix> {
    let lp = l_plus(j, modes, basis)?;
    let lm = lp.adjoint();
    let lz = l_z(basis);
    let lz2 = lz.matmul(&lz)?;
    let sym = lp.matmul(&lm)?.add_scaled(&lm.matmul(&lp)?, C64::new(1.0, 0.0))?;
    let half_n = basis.n_ions() as f64 / 2.0;
    let mut result = lz2.add_scaled(&sym, C64::new(half_n, 0.0))?;
    // Hermitian by construction; the combinators cannot see that.
    debug_assert!(result.hermiticity_defect() < 1e-12);
    result = promote_hermitian(result);
    Ok(result)
}

fn promote_hermitian(op: OperatorMatrix) -> OperatorMatrix {
    // Rebuild with the hermitian flag set, averaging away any roundoff
    // asymmetry left by the sparse products.
    let basis = op.basis().clone();
    let mut triplets = Vec::with_capacity(op.nnz());
    for r in 0..op.dim() {
        for c in 0..op.dim() {
            let v = (op.entry(r, c) + op.entry(c, r).conj()) * C64::new(0.5, 0.0);
            if v.re != 0.0 || v.im != 0.0 {
                triplets.push((r, c, v));
            }
        }
    }
    OperatorMatrix::from_triplets(basis, triplets, true)
}

fn charge_diagonal(basis: &FullBasis, spin_term: impl Fn(usize) -> f64) -> Result<OperatorMatrix> {
    if basis.modes().is_empty() {
        return Err(Error::NoPhononMode);
    }
    let pdim = basis.phonon_dim();
    let mut triplets = Vec::new();
    for s in 0..basis.spin_dim() {
        let sval = spin_term(s);
        for p in 0..pdim {
            let i = s * pdim + p;
            let (_, occ) = basis.label(i);
            let total: usize = occ.iter().sum();
            let v = total as f64 + sval;
            if v != 0.0 {
                triplets.push((i, i, C64::new(v, 0.0)));
            }
        }
    }
    Ok(OperatorMatrix::from_triplets(
        BasisRef::Full(basis.clone()),
        triplets,
        true,
    ))
}

/// Excitation number `R = sum a^dag a + L_z + N/2`; diagonal, integer
/// spectrum, eigenvalue = total phonons + spins up.
pub fn conserved_r(basis: &FullBasis) -> Result<OperatorMatrix> {
    charge_diagonal(basis, |s| (s as u64).count_ones() as f64)
}

/// Blue-sideband charge `B = sum a^dag a - L_z + N/2`; diagonal,
/// eigenvalue = total phonons + spins down.
pub fn conserved_b(basis: &FullBasis) -> Result<OperatorMatrix> {
    let n = basis.n_ions();
    charge_diagonal(basis, move |s| (n - (s as u64).count_ones() as usize) as f64)
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    a.matmul(b)?.add_scaled(&b.matmul(a)?, C64::new(-1.0, 0.0))
}
