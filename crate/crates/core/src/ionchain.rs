//! Equilibrium geometry and normal modes of a linear Coulomb chain.
//!
//! N ions in a harmonic trap with pairwise Coulomb repulsion, in
//! dimensionless units: lengths in the standard Coulomb-chain length scale
//! and frequencies in units of the center-of-mass (COM) frequency. Mode
//! index 0 is the COM mode, so `frequencies[0] == 1` and the COM amplitude
//! column is the constant vector `1/sqrt(N)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;

/// Equilibrium positions of an N-ion chain, ascending, centered on the trap
/// axis origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGeometry {
    n_ions: usize,
    positions: Vec<f64>,
}

impl ChainGeometry {
    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
}

/// Normal-mode frequencies and orthonormal amplitude matrix of a chain.
///
/// `amplitude(n, j)` is the participation of ion `n` in mode `j`. Columns
/// are orthonormal and sign-fixed so that the first nonzero entry of each
/// column is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTable {
    n_ions: usize,
    frequencies: Vec<f64>,
    /// Row-major N x N, entry (n, j) = b_nj.
    amplitudes: DMatrix<f64>,
}

impl ModeTable {
    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    /// Mode frequencies in units of the COM frequency, ascending.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn amplitude(&self, ion: usize, mode: usize) -> f64 {
        self.amplitudes[(ion, mode)]
    }

    /// Amplitude column of one mode.
    pub fn mode_column(&self, mode: usize) -> Result<Vec<f64>> {
        if mode >= self.n_ions {
            return Err(Error::ModeIndex {
                mode,
                n_ions: self.n_ions,
            });
        }
        Ok(self.amplitudes.column(mode).iter().copied().collect())
    }

    pub fn amplitudes(&self) -> &DMatrix<f64> {
        &self.amplitudes
    }
}

/// Restoring force minus Coulomb repulsion on each ion, and its Jacobian.
fn force_and_jacobian(u: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = u.len();
    let mut f = DVector::zeros(n);
    let mut jac = DMatrix::identity(n, n);
    for i in 0..n {
        f[i] = u[i];
        for m in 0..n {
            if m == i {
                continue;
            }
            let d = u[i] - u[m];
            f[i] -= d.signum() / (d * d);
            let c = 2.0 / d.abs().powi(3);
            jac[(i, i)] += c;
            jac[(i, m)] -= c;
        }
    }
    (f, jac)
}

/// Solve for the equilibrium positions of `n_ions` ions.
///
/// Damped Newton iteration from a uniformly spaced initial guess. The
/// result is deterministic for a given ion count.
pub fn equilibrium_positions(n_ions: usize) -> Result<ChainGeometry> {
    if n_ions == 0 {
        return Err(Error::InvalidArgument("ion count must be positive".into()));
    }
    if n_ions == 1 {
        return Ok(ChainGeometry {
            n_ions,
            positions: vec![0.0],
        });
    }

    let n = n_ions;
    // Initial guess: uniform spacing over an interval that grows slowly
    // with N (the chain length scales roughly like N^0.56).
    let half_span = 0.6 * (n as f64).powf(0.56);
    let mut u: Vec<f64> = (0..n)
        .map(|i| -half_span + 2.0 * half_span * i as f64 / (n as f64 - 1.0))
        .collect();

    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let (f, jac) = force_and_jacobian(&u);
        residual = f.amax();
        if residual < NEWTON_TOL {
            // Re-center; the force law is translation invariant only through
            // the trap term, so this is a numerical cleanup of roundoff.
            let mean: f64 = u.iter().sum::<f64>() / n as f64;
            for x in &mut u {
                *x -= mean;
            }
            return Ok(ChainGeometry {
                n_ions,
                positions: u,
            });
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or(Error::SolverFailure {
                iterations: NEWTON_MAX_ITER,
                residual,
            })?;
        // Damp so that no ion crosses its neighbour.
        let mut scale: f64 = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| u[i] - scale * step[i]).collect();
            if trial.windows(2).all(|w| w[1] > w[0]) {
                u = trial;
                break;
            }
            scale *= 0.5;
            if scale < 1e-8 {
                return Err(Error::SolverFailure {
                    iterations: NEWTON_MAX_ITER,
                    residual,
                });
            }
        }
    }
    Err(Error::SolverFailure {
        iterations: NEWTON_MAX_ITER,
        residual,
    })
}

/// Hessian of the dimensionless chain potential at the given positions.
fn hessian(positions: &[f64]) -> DMatrix<f64> {
    let n = positions.len();
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for m in 0..n {
            if m == i {
                continue;
            }
            let c = 2.0 / (positions[i] - positions[m]).abs().powi(3);
            h[(i, i)] += c;
            h[(i, m)] -= c;
        }
    }
    h
}

/// Compute the normal modes of an `n_ions` chain.
///
/// Diagonalizes the Hessian of the chain potential at equilibrium. Columns
/// are sorted by ascending frequency and sign-fixed (first nonzero entry
/// positive). The COM frequency is snapped to exactly 1 once verified.
pub fn normal_modes(n_ions: usize) -> Result<ModeTable> {
    let geometry = equilibrium_positions(n_ions)?;
    let n = n_ions;
    if n == 1 {
        return Ok(ModeTable {
            n_ions,
            frequencies: vec![1.0],
            amplitudes: DMatrix::from_element(1, 1, 1.0),
        });
    }

    let h = hessian(geometry.positions());
    let eig = h.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut amplitudes = DMatrix::zeros(n, n);
    let mut frequencies = Vec::with_capacity(n);
    for (j, &src) in order.iter().enumerate() {
        frequencies.push(eig.eigenvalues[src].sqrt());
        let col = eig.eigenvectors.column(src);
        let flip = col
            .iter()
            .find(|x| x.abs() > 1e-9)
            .map_or(1.0, |x| x.signum());
        for i in 0..n {
            amplitudes[(i, j)] = flip * col[i];
        }
    }

    // The COM eigenvalue is exactly 1 analytically; remove roundoff.
    debug_assert!((frequencies[0] - 1.0).abs() < 1e-9);
    frequencies[0] = 1.0;

    Ok(ModeTable {
        n_ions,
        frequencies,
        amplitudes,
    })
}
