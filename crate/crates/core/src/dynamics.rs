//! Sideband Hamiltonians and time evolution.
//!
//! `h_red` and `h_blue` build the full product-space sideband Hamiltonians
//! for any normal mode; `h_red_ladder` builds the exact tridiagonal
//! restriction of the red COM interaction to one excitation sector.
//! Evolution under a Hermitian operator uses dense eigendecomposition below
//! `DynamicsConfig::dense_threshold` and adaptive Lanczos propagation above
//! it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ionchain::ModeTable;
use crate::operator::OperatorMatrix;
use crate::statespace::{sector_ladder, BasisRef, FullBasis, QuantumState};
use crate::C64;

/// Knobs for Hamiltonian scale and propagation accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsConfig {
    /// Sideband coupling scale; sets the time unit.
    pub coupling_scale: f64,
    /// Target accuracy of iterative propagation.
    pub evolution_tolerance: f64,
    /// Maximum Lanczos subspace dimension per step.
    pub krylov_dimension: usize,
    /// Dimension below which dense exponentiation is used.
    pub dense_threshold: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            coupling_scale: 1.0,
            evolution_tolerance: 1e-10,
            krylov_dimension: 30,
            dense_threshold: 512,
        }
    }
}

impl DynamicsConfig {
    fn validate(&self) -> Result<()> {
        if self.coupling_scale <= 0.0
            || self.evolution_tolerance <= 0.0
            || self.krylov_dimension == 0
            || self.dense_threshold == 0
        {
            return Err(Error::InvalidArgument(
                "dynamics configuration fields must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn check_sideband_inputs(
    j: usize,
    modes: &ModeTable,
    basis: &FullBasis,
) -> Result<usize> {
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
    basis.mode_slot(j).ok_or(Error::InactiveMode { mode: j })
}

/// Red sideband Hamiltonian on mode j:
/// `lambda * sum_n sqrt(N) b_nj (sigma+^n a_j + sigma-^n a_j^dag)`.
pub fn h_red(
    j: usize,
    modes: &ModeTable,
    basis: &FullBasis,
    cfg: &DynamicsConfig,
) -> Result<OperatorMatrix> {
    sideband(j, modes, basis, cfg, Sideband::Red)
}

/// Blue sideband Hamiltonian on mode j:
/// `lambda * sum_n sqrt(N) b_nj (sigma+^n a_j^dag + sigma-^n a_j)`.
pub fn h_blue(
    j: usize,
    modes: &ModeTable,
    basis: &FullBasis,
    cfg: &DynamicsConfig,
) -> Result<OperatorMatrix> {
    sideband(j, modes, basis, cfg, Sideband::Blue)
}

/// Which sideband a pulse drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sideband {
    Red,
    Blue,
}

fn sideband(
    j: usize,
    modes: &ModeTable,
    basis: &FullBasis,
    cfg: &DynamicsConfig,
    kind: Sideband,
) -> Result<OperatorMatrix> {
    cfg.validate()?;
    let slot = check_sideband_inputs(j, modes, basis)?;
    let cutoff = basis.modes()[slot].cutoff;
    // Collective normalization: the coupling scale multiplies sqrt(N) b_nj,
    // so on the COM mode the interaction is exactly
    // lambda (L+ a + L- a^dag) with the unnormalized collective raise and
    // a W-state transfer takes pi / (2 sqrt(N) lambda).
    let lambda = cfg.coupling_scale * (basis.n_ions() as f64).sqrt();
    let mut triplets = Vec::new();
    for i in 0..basis.dim() {
        let (s, occ) = basis.label(i);
        let q = occ[slot];
        for ion in 0..basis.n_ions() {
            if s & (1 << ion) != 0 {
                continue;
            }
            let up = s | (1 << ion);
            // Spin-raising part; the conjugate direction is added
            // explicitly so hermiticity is exact by construction.
            let (to, val) = match kind {
                Sideband::Red => {
                    if q == 0 {
                        continue;
                    }
                    let mut occ_to = occ.clone();
                    occ_to[slot] = q - 1;
                    (
                        basis.index(up, &occ_to),
                        lambda * modes.amplitude(ion, j) * (q as f64).sqrt(),
                    )
                }
                Sideband::Blue => {
                    if q == cutoff {
                        continue;
                    }
                    let mut occ_to = occ.clone();
                    occ_to[slot] = q + 1;
                    (
                        basis.index(up, &occ_to),
                        lambda * modes.amplitude(ion, j) * ((q + 1) as f64).sqrt(),
                    )
                }
            };
            triplets.push((to, i, C64::new(val, 0.0)));
            triplets.push((i, to, C64::new(val, 0.0)));
        }
    }
    Ok(OperatorMatrix::from_triplets(
        BasisRef::Full(basis.clone()),
        triplets,
        true,
    ))
}

/// Red COM Hamiltonian restricted to the r-excitation symmetric sector.
///
/// Real symmetric tridiagonal matrix over the sector ladder. The coupling
/// between slots k and k+1 is
/// `lambda * sqrt(n_k) * sqrt((l - m_k)(l + m_k + 1))` with l = N/2,
/// the matrix element of the full interaction between adjacent
/// Dicke (x) Fock states.
pub fn h_red_ladder(n_ions: usize, r: usize, cfg: &DynamicsConfig) -> Result<OperatorMatrix> {
    cfg.validate()?;
    let ladder = sector_ladder(n_ions, r);
    let l = n_ions as f64 / 2.0;
    let mut triplets = Vec::new();
    for k in 0..ladder.len().saturating_sub(1) {
        let slot = ladder.slots()[k];
        let m = slot.m();
        let n_ph = slot.phonons as f64;
        let g = cfg.coupling_scale * n_ph.sqrt() * ((l - m) * (l + m + 1.0)).sqrt();
        triplets.push((k, k + 1, C64::new(g, 0.0)));
        triplets.push((k + 1, k, C64::new(g, 0.0)));
    }
    Ok(OperatorMatrix::from_triplets(
        BasisRef::Ladder(ladder),
        triplets,
        true,
    ))
}

/// Dense spectral propagator for repeated evolutions under one Hamiltonian.
pub struct Propagator {
    basis: BasisRef,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::InvalidArgument(
                "propagator requires a hermitian operator".into(),
            ));
        }
        let eig = h.to_dense().symmetric_eigen();
        Ok(Propagator {
            basis: h.basis().clone(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn basis(&self) -> &BasisRef {
        &self.basis
    }

    /// exp(-i H t) applied to a raw amplitude vector.
    pub fn apply(&self, amplitudes: &DVector<C64>, t: f64) -> DVector<C64> {
        let mut coeffs = self.eigenvectors.adjoint() * amplitudes;
        for (c, w) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= C64::from_polar(1.0, -w * t);
        }
        &self.eigenvectors * coeffs
    }

    pub fn evolve(&self, psi: &QuantumState, t: f64) -> Result<QuantumState> {
        if psi.basis() != &self.basis {
            return Err(Error::BasisMismatch {
                context: "state basis does not match propagator".into(),
            });
        }
        QuantumState::normalized(self.basis.clone(), self.apply(psi.amplitudes(), t))
    }
}

/// Lanczos tridiagonalization with full reorthogonalization.
///
/// Returns the orthonormal basis, the diagonal and off-diagonal of the
/// projected tridiagonal matrix, and the residual coupling out of the
/// subspace (`None` on happy breakdown).
fn lanczos(
    h: &OperatorMatrix,
    q0: &DVector<C64>,
    max_dim: usize,
) -> (Vec<DVector<C64>>, Vec<f64>, Vec<f64>, Option<f64>) {
    let mut basis = vec![q0.clone()];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut scale: f64 = 1e-300;
    for j in 0..max_dim {
        let mut w = h.apply(&basis[j]);
        let alpha = basis[j].dotc(&w).re;
        alphas.push(alpha);
        scale = scale.max(alpha.abs());
        w -= &basis[j] * C64::new(alpha, 0.0);
        if j > 0 {
            w -= &basis[j - 1] * C64::new(betas[j - 1], 0.0);
        }
        // One full reorthogonalization pass keeps the basis clean over
        // many substeps.
        for q in &basis {
            let overlap = q.dotc(&w);
            w -= q * overlap;
        }
        let beta = w.norm();
        scale = scale.max(beta);
        if beta <= 1e-14 * scale {
            return (basis, alphas, betas, None);
        }
        if j + 1 == max_dim {
            return (basis, alphas, betas, Some(beta));
        }
        betas.push(beta);
        basis.push(w / C64::new(beta, 0.0));
    }
    unreachable!("loop always returns");
}

/// Eigendecomposition of the real symmetric tridiagonal (alphas, betas).
fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// exp(-i T dt) e1 expressed in the Lanczos basis.
fn propagate_tridiag(
    eigenvalues: &DVector<f64>,
    eigenvectors: &DMatrix<f64>,
    dt: f64,
) -> Vec<C64> {
    let k = eigenvalues.len();
    let mut out = vec![C64::new(0.0, 0.0); k];
    for i in 0..k {
        let phase = C64::from_polar(1.0, -eigenvalues[i] * dt);
        let c0 = eigenvectors[(0, i)];
        for (j, o) in out.iter_mut().enumerate() {
            *o += phase * (eigenvectors[(j, i)] * c0);
        }
    }
    out
}

/// Adaptive Lanczos approximation of exp(-i H t) v.
fn krylov_expmv(
    h: &OperatorMatrix,
    v: &DVector<C64>,
    t: f64,
    cfg: &DynamicsConfig,
) -> Result<DVector<C64>> {
    let total = t.abs();
    if total == 0.0 {
        return Ok(v.clone());
    }
    let mut psi = v.clone();
    let mut done = 0.0f64;
    let direction = t.signum();
    let mut last_err = 0.0;
    for _ in 0..100_000 {
        let remaining = total - done;
        if remaining <= total * 1e-15 {
            return Ok(psi);
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Ok(psi);
        }
        let q0 = &psi / C64::new(norm, 0.0);
        let (basis, alphas, betas, residual) = lanczos(h, &q0, cfg.krylov_dimension);
        let (w, u) = tridiag_eigen(&alphas, &betas);
        let mut dt = remaining;
        loop {
            let coeffs = propagate_tridiag(&w, &u, direction * dt);
            let err = residual.map_or(0.0, |b| b * coeffs[coeffs.len() - 1].norm() * dt);
            last_err = err;
            // Error budget proportional to the fraction of time covered,
            // so the accepted steps sum to a tenth of the tolerance.
            let budget = cfg.evolution_tolerance * (dt / total) / 10.0;
            if err <= budget {
                let mut next = DVector::zeros(psi.len());
                for (q, c) in basis.iter().zip(&coeffs) {
                    next += q * (*c * C64::new(norm, 0.0));
                }
                psi = next;
                done += dt;
                break;
            }
            dt /= 2.0;
            if dt < total * 1e-12 {
                return Err(Error::KrylovConvergence {
                    requested: cfg.evolution_tolerance,
                    achieved: err,
                });
            }
        }
    }
    Err(Error::KrylovConvergence {
        requested: cfg.evolution_tolerance,
        achieved: last_err,
    })
}

/// exp(-i h t) applied to a state (hbar = 1).
///
/// Dense spectral exponentiation below `cfg.dense_threshold`, adaptive
/// Lanczos propagation above it.
pub fn evolve(
    h: &OperatorMatrix,
    psi0: &QuantumState,
    t: f64,
    cfg: &DynamicsConfig,
) -> Result<QuantumState> {
    cfg.validate()?;
    if !h.is_hermitian() {
        return Err(Error::InvalidArgument(
            "evolution requires a hermitian operator".into(),
        ));
    }
    if h.basis() != psi0.basis() {
        return Err(Error::BasisMismatch {
            context: "state and Hamiltonian bases differ".into(),
        });
    }
    if t == 0.0 {
        return Ok(psi0.clone());
    }
    let out = if h.dim() < cfg.dense_threshold {
        Propagator::new(h)?.apply(psi0.amplitudes(), t)
    } else {
        krylov_expmv(h, psi0.amplitudes(), t, cfg)?
    };
    let norm = out.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::KrylovConvergence {
            requested: cfg.evolution_tolerance,
            achieved: (norm - 1.0).abs(),
        });
    }
    QuantumState::normalized(psi0.basis().clone(), out)
}

/// Duration and closure quality of a two-level population transfer.
///
/// With psi1 the normalized image of psi0 under h, the transfer time is
/// `pi / (2 |<psi1|h|psi0>|)` and the leakage is the relative norm of
/// `h psi1` outside span{psi0, psi1}. Leakage near zero certifies that the
/// pulse acts in a closed two-dimensional subspace and the transfer is
/// complete.
pub fn two_level_transfer_time(h: &OperatorMatrix, psi0: &QuantumState) -> Result<(f64, f64)> {
    if h.basis() != psi0.basis() {
        return Err(Error::BasisMismatch {
            context: "state and Hamiltonian bases differ".into(),
        });
    }
    let hv = h.apply(psi0.amplitudes());
    let g = hv.norm();
    if g <= 1e-12 * h.max_norm().max(1e-12) {
        return Err(Error::StationaryState);
    }
    let psi1 = &hv / C64::new(g, 0.0);
    let w = h.apply(&psi1);
    let wnorm = w.norm();
    let leakage = if wnorm == 0.0 {
        0.0
    } else {
        let mut outside = w.clone();
        outside -= psi0.amplitudes() * psi0.amplitudes().dotc(&w);
        outside -= &psi1 * psi1.dotc(&w);
        outside.norm() / wnorm
    };
    Ok((std::f64::consts::PI / (2.0 * g), leakage))
}

fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Locate the first population maximum of `target` under evolution of
/// `psi0`, scanning `n_grid` points on [0, t_max] and refining with
/// golden-section search to a time tolerance of 1e-9 relative to t_max.
///
/// Among grid local maxima the earliest one whose refined height reaches
/// the refined global maximum is returned, so periodic revivals resolve to
/// the first peak.
pub fn peak_time(
    h: &OperatorMatrix,
    psi0: &QuantumState,
    target: &QuantumState,
    t_max: f64,
    n_grid: usize,
    cfg: &DynamicsConfig,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    if t_max <= 0.0 {
        return Err(Error::InvalidArgument("t_max must be positive".into()));
    }
    if n_grid < 16 {
        return Err(Error::InvalidArgument("n_grid must be at least 16".into()));
    }
    if h.basis() != psi0.basis() || h.basis() != target.basis() {
        return Err(Error::BasisMismatch {
            context: "peak search requires one common basis".into(),
        });
    }
    let pop = |amps: &DVector<C64>| target.amplitudes().dotc(amps).norm_sqr();
    let dt = t_max / (n_grid - 1) as f64;

    // Values on the grid, plus a way to evaluate at arbitrary times.
    let dense = h.dim() < cfg.dense_threshold;
    let propagator = if dense { Some(Propagator::new(h)?) } else { None };

    let mut values = Vec::with_capacity(n_grid);
    let mut checkpoints: Vec<(usize, DVector<C64>)> = Vec::new();
    if let Some(prop) = &propagator {
        for i in 0..n_grid {
            values.push(pop(&prop.apply(psi0.amplitudes(), i as f64 * dt)));
        }
    } else {
        let mut psi = psi0.amplitudes().clone();
        for i in 0..n_grid {
            if i % 8 == 0 {
                checkpoints.push((i, psi.clone()));
            }
            values.push(pop(&psi));
            if i + 1 < n_grid {
                psi = krylov_expmv(h, &psi, dt, cfg)?;
            }
        }
    }

    let v_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let margin = 0.02 * (v_max - v_min) + 1e-12;

    let mut candidates: Vec<usize> = (0..n_grid)
        .filter(|&i| {
            let left_ok = i == 0 || values[i] >= values[i - 1];
            let right_ok = i == n_grid - 1 || values[i] >= values[i + 1];
            left_ok && right_ok && values[i] >= v_max - margin
        })
        .collect();
    if candidates.len() > 64 {
        candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        candidates.truncate(64);
        candidates.sort_unstable();
    }

    let tol = 1e-9 * t_max;
    let mut refined: Vec<(f64, f64)> = Vec::with_capacity(candidates.len());
    for &i in &candidates {
        let a = if i == 0 { 0.0 } else { (i - 1) as f64 * dt };
        let b = ((i + 1) as f64 * dt).min(t_max);
        let (t_star, p_star) = if let Some(prop) = &propagator {
            golden_section_max(|t| pop(&prop.apply(psi0.amplitudes(), t)), a, b, tol)
        } else {
            let (base_idx, base) = checkpoints
                .iter()
                .rev()
                .find(|(ci, _)| (*ci as f64) * dt <= a + 1e-15)
                .expect("checkpoint 0 always exists");
            let t_base = *base_idx as f64 * dt;
            golden_section_max(
                |t| match krylov_expmv(h, base, t - t_base, cfg) {
                    Ok(amps) => pop(&amps),
                    Err(_) => f64::NEG_INFINITY,
                },
                a,
                b,
                tol,
            )
        };
        refined.push((t_star, p_star));
    }

    let best = refined
        .iter()
        .map(|(_, p)| *p)
        .fold(f64::NEG_INFINITY, f64::max);
    let pick = refined
        .iter()
        .find(|(_, p)| *p >= best - 1e-9 * best.abs().max(1.0))
        .copied()
        .expect("at least one candidate exists");
    Ok(pick)
}

/// Expectation value of a hermitian operator.
pub fn expectation(op: &OperatorMatrix, psi: &QuantumState) -> Result<f64> {
    if op.basis() != psi.basis() {
        return Err(Error::BasisMismatch {
            context: "expectation value across bases".into(),
        });
    }
    Ok(psi.amplitudes().dotc(&op.apply(psi.amplitudes())).re)
}
