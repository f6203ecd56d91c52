//! Bases, states, sector ladders, density matrices and measurements.
//!
//! Two state representations are used. The full product basis enumerates
//! every spin configuration of N ions together with the occupations of the
//! active phonon modes. The sector ladder is the exact symmetry-reduced
//! basis for red-sideband dynamics on the COM mode at a fixed excitation
//! number r: a finite chain of symmetric-Dicke (x) Fock states.
//!
//! Basis ordering is fixed so that state files are portable: spin
//! configurations are N-bit integers with ion 0 as the least significant
//! bit (bit set = spin up), enumerated major; occupation tuples are
//! enumerated minor, with the lowest-indexed active mode varying fastest.
//! The flat index of (spin s, occupations o) is
//! `s * phonon_dim + (o_0 + (c_0+1) * (o_1 + (c_1+1) * ...))`
//! for active modes listed in ascending order with cutoffs `c_i`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

const NORM_TOL: f64 = 1e-12;

/// One active phonon mode in a [`FullBasis`], with an inclusive Fock cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockMode {
    pub mode: usize,
    pub cutoff: usize,
}

/// Product basis of N spin-1/2 ions and a set of truncated Fock spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullBasis {
    n_ions: usize,
    modes: Vec<FockMode>,
}

impl FullBasis {
    /// Build a basis with the given `(mode index, cutoff)` pairs.
    pub fn new(n_ions: usize, modes: &[(usize, usize)]) -> Result<Self> {
        if n_ions == 0 {
            return Err(Error::InvalidArgument("ion count must be positive".into()));
        }
        let mut ms: Vec<FockMode> = modes
            .iter()
            .map(|&(mode, cutoff)| FockMode { mode, cutoff })
            .collect();
        ms.sort_by_key(|m| m.mode);
        for w in ms.windows(2) {
            if w[0].mode == w[1].mode {
                return Err(Error::InvalidArgument(format!(
                    "duplicate mode {} in basis",
                    w[0].mode
                )));
            }
        }
        for m in &ms {
            if m.mode >= n_ions {
                return Err(Error::ModeIndex {
                    mode: m.mode,
                    n_ions,
                });
            }
        }
        Ok(FullBasis { n_ions, modes: ms })
    }

    /// Basis with no phonon factors (spin space only).
    pub fn spin_only(n_ions: usize) -> Self {
        FullBasis {
            n_ions,
            modes: Vec::new(),
        }
    }

    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    pub fn modes(&self) -> &[FockMode] {
        &self.modes
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.n_ions
    }

    pub fn phonon_dim(&self) -> usize {
        self.modes.iter().map(|m| m.cutoff + 1).product()
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.phonon_dim()
    }

    /// Position of `mode` in the active-mode list.
    pub fn mode_slot(&self, mode: usize) -> Option<usize> {
        self.modes.iter().position(|m| m.mode == mode)
    }

    pub fn cutoff(&self, mode: usize) -> Option<usize> {
        self.mode_slot(mode).map(|i| self.modes[i].cutoff)
    }

    /// Flat index of a (spin configuration, occupation tuple) label.
    ///
    /// `occ` lists occupations for the active modes in ascending mode
    /// order and must match the active-mode count.
    pub fn index(&self, spin: usize, occ: &[usize]) -> usize {
        debug_assert!(spin < self.spin_dim());
        debug_assert_eq!(occ.len(), self.modes.len());
        let mut rank = 0;
        for (slot, m) in self.modes.iter().enumerate().rev() {
            debug_assert!(occ[slot] <= m.cutoff);
            rank = rank * (m.cutoff + 1) + occ[slot];
        }
        spin * self.phonon_dim() + rank
    }

    /// Inverse of [`FullBasis::index`].
    pub fn label(&self, index: usize) -> (usize, Vec<usize>) {
        let pdim = self.phonon_dim();
        let spin = index / pdim;
        let mut rank = index % pdim;
        let mut occ = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            occ.push(rank % (m.cutoff + 1));
            rank /= m.cutoff + 1;
        }
        (spin, occ)
    }
}

/// One vibronic state of a sector ladder: L_z quantum number m (stored
/// doubled so half-integers stay exact) and a COM phonon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderSlot {
    pub m_twice: i64,
    pub phonons: usize,
}

impl LadderSlot {
    pub fn m(&self) -> f64 {
        self.m_twice as f64 / 2.0
    }
}

/// Invariant-subspace ladder of the red COM interaction at fixed
/// excitation number r.
///
/// Slot k holds m = -N/2 + k and n = r - k phonons, for
/// k = 0 ..= min(r, N). Every slot satisfies n + (m + N/2) = r.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorLadder {
    n_ions: usize,
    r: usize,
    slots: Vec<LadderSlot>,
}

impl SectorLadder {
    pub fn n_ions(&self) -> usize {
        self.n_ions
    }

    /// Conserved excitation number of the sector.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn slots(&self) -> &[LadderSlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Index of the zero-phonon end when it exists (r <= N).
    pub fn edge(&self) -> usize {
        self.slots.len() - 1
    }
}

/// Build the sector ladder for `n_ions` ions at excitation number `r`.
pub fn sector_ladder(n_ions: usize, r: usize) -> SectorLadder {
    let top = r.min(n_ions);
    let slots = (0..=top)
        .map(|k| LadderSlot {
            m_twice: -(n_ions as i64) + 2 * k as i64,
            phonons: r - k,
        })
        .collect();
    SectorLadder { n_ions, r, slots }
}

/// The basis a state or operator lives on.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisRef {
    Full(FullBasis),
    Ladder(SectorLadder),
}

impl BasisRef {
    pub fn dim(&self) -> usize {
        match self {
            BasisRef::Full(b) => b.dim(),
            BasisRef::Ladder(l) => l.len(),
        }
    }

    pub fn n_ions(&self) -> usize {
        match self {
            BasisRef::Full(b) => b.n_ions(),
            BasisRef::Ladder(l) => l.n_ions(),
        }
    }

    pub fn as_full(&self) -> Result<&FullBasis> {
        match self {
            BasisRef::Full(b) => Ok(b),
            BasisRef::Ladder(_) => Err(Error::BasisMismatch {
                context: "full product basis required".into(),
            }),
        }
    }

    pub fn as_ladder(&self) -> Result<&SectorLadder> {
        match self {
            BasisRef::Ladder(l) => Ok(l),
            BasisRef::Full(_) => Err(Error::BasisMismatch {
                context: "sector ladder basis required".into(),
            }),
        }
    }
}

/// Normalized pure state bound to a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    basis: BasisRef,
    amplitudes: DVector<C64>,
}

impl QuantumState {
    /// Wrap an amplitude vector, checking normalization to 1e-12.
    pub fn new(basis: BasisRef, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch {
                context: format!(
                    "amplitude vector has length {}, basis dimension is {}",
                    amplitudes.len(),
                    basis.dim()
                ),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "state norm {norm} is not 1"
            )));
        }
        Ok(QuantumState { basis, amplitudes })
    }

    /// Wrap and renormalize a nonzero amplitude vector.
    pub fn normalized(basis: BasisRef, amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidArgument("cannot normalize zero vector".into()));
        }
        QuantumState::new(basis, amplitudes / C64::new(norm, 0.0))
    }

    /// Basis state |spin config> |occupations> of a full basis.
    pub fn basis_state(basis: FullBasis, spin: usize, occ: &[usize]) -> Result<Self> {
        if spin >= basis.spin_dim() {
            return Err(Error::InvalidArgument(format!(
                "spin configuration {spin} out of range"
            )));
        }
        if occ.len() != basis.modes().len() {
            return Err(Error::BasisMismatch {
                context: "occupation tuple length does not match active modes".into(),
            });
        }
        for (o, m) in occ.iter().zip(basis.modes()) {
            if *o > m.cutoff {
                return Err(Error::CutoffOverflow {
                    mode: m.mode,
                    cutoff: m.cutoff,
                });
            }
        }
        let mut amps = DVector::zeros(basis.dim());
        amps[basis.index(spin, occ)] = C64::new(1.0, 0.0);
        Ok(QuantumState {
            basis: BasisRef::Full(basis),
            amplitudes: amps,
        })
    }

    /// All spins down, all active modes in their Fock ground state.
    pub fn vacuum(basis: FullBasis) -> Self {
        let occ = vec![0; basis.modes().len()];
        QuantumState::basis_state(basis, 0, &occ).expect("vacuum label is always valid")
    }

    /// State with amplitude 1 on a single ladder slot.
    pub fn ladder_slot(ladder: SectorLadder, slot: usize) -> Result<Self> {
        if slot >= ladder.len() {
            return Err(Error::InvalidArgument(format!(
                "ladder slot {slot} out of range"
            )));
        }
        let mut amps = DVector::zeros(ladder.len());
        amps[slot] = C64::new(1.0, 0.0);
        Ok(QuantumState {
            basis: BasisRef::Ladder(ladder),
            amplitudes: amps,
        })
    }

    pub fn basis(&self) -> &BasisRef {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Inner product <self|other>.
    pub fn overlap(&self, other: &QuantumState) -> Result<C64> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch {
                context: "overlap between states on different bases".into(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Serialize as text: a three-line header followed by one
    /// `index real imag` line per nonzero amplitude. Floats use the
    /// shortest representation that round-trips, so load is bit-exact.
    pub fn save_text(&self, out: &mut impl Write) -> Result<()> {
        let basis = self.basis.as_full()?;
        writeln!(out, "vibronic-state v1")?;
        writeln!(out, "ions {}", basis.n_ions())?;
        let mode_desc: Vec<String> = basis
            .modes()
            .iter()
            .map(|m| format!("{}:{}", m.mode, m.cutoff))
            .collect();
        writeln!(out, "modes {}", mode_desc.join(" "))?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.re != 0.0 || a.im != 0.0 {
                writeln!(out, "{} {} {}", i, a.re, a.im)?;
            }
        }
        Ok(())
    }

    /// Parse the format produced by [`QuantumState::save_text`].
    pub fn load_text(input: &mut impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let magic = lines
            .next()
            .ok_or_else(|| Error::StateFormat("empty file".into()))??;
        if magic.trim() != "vibronic-state v1" {
            return Err(Error::StateFormat("missing vibronic-state header".into()));
        }
        let ions_line = lines
            .next()
            .ok_or_else(|| Error::StateFormat("missing ions line".into()))??;
        let n_ions: usize = ions_line
            .trim()
            .strip_prefix("ions ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::StateFormat("bad ions line".into()))?;
        let modes_line = lines
            .next()
            .ok_or_else(|| Error::StateFormat("missing modes line".into()))??;
        let modes_str = modes_line
            .trim()
            .strip_prefix("modes")
            .ok_or_else(|| Error::StateFormat("bad modes line".into()))?;
        let mut modes = Vec::new();
        for tok in modes_str.split_whitespace() {
            let (m, c) = tok
                .split_once(':')
                .ok_or_else(|| Error::StateFormat(format!("bad mode token {tok}")))?;
            let mode = m
                .parse()
                .map_err(|_| Error::StateFormat(format!("bad mode index {m}")))?;
            let cutoff = c
                .parse()
                .map_err(|_| Error::StateFormat(format!("bad cutoff {c}")))?;
            modes.push((mode, cutoff));
        }
        let basis = FullBasis::new(n_ions, &modes)?;
        let mut amps = DVector::zeros(basis.dim());
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let mut parts = t.split_whitespace();
            let idx: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::StateFormat(format!("bad amplitude line: {t}")))?;
            let re: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::StateFormat(format!("bad amplitude line: {t}")))?;
            let im: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::StateFormat(format!("bad amplitude line: {t}")))?;
            if idx >= basis.dim() {
                return Err(Error::StateFormat(format!(
                    "index {idx} exceeds basis dimension {}",
                    basis.dim()
                )));
            }
            amps[idx] = C64::new(re, im);
        }
        QuantumState::new(BasisRef::Full(basis), amps)
    }
}

/// Exact binomial coefficient; safe for the ion counts handled here.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Symmetric Dicke state with exactly `k` excitations, on a spin-only basis.
///
/// Equal positive amplitudes on all C(N, k) weight-k configurations.
pub fn dicke_state(n_ions: usize, k: usize) -> Result<QuantumState> {
    if k > n_ions {
        return Err(Error::InvalidArgument(format!(
            "excitation count {k} exceeds ion count {n_ions}"
        )));
    }
    let basis = FullBasis::spin_only(n_ions);
    let amp = 1.0 / (binomial(n_ions, k) as f64).sqrt();
    let mut amps = DVector::zeros(basis.dim());
    for s in 0..basis.spin_dim() {
        if (s as u64).count_ones() as usize == k {
            amps[s] = C64::new(amp, 0.0);
        }
    }
    QuantumState::new(BasisRef::Full(basis), amps)
}

/// Amplitudes of the Dicke state over spin configurations only.
fn dicke_spin_amplitudes(n_ions: usize, k: usize) -> Vec<(usize, f64)> {
    let amp = 1.0 / (binomial(n_ions, k) as f64).sqrt();
    (0..1usize << n_ions)
        .filter(|s| (*s as u64).count_ones() as usize == k)
        .map(|s| (s, amp))
        .collect()
}

/// Map ladder amplitudes into a full basis: slot k goes to the k-excitation
/// Dicke spin state tensored with the matching COM Fock state. All other
/// active modes are left in their ground state.
pub fn embed_ladder_state(
    ladder: &SectorLadder,
    amplitudes: &[C64],
    basis: &FullBasis,
) -> Result<QuantumState> {
    if amplitudes.len() != ladder.len() {
        return Err(Error::BasisMismatch {
            context: "amplitude count does not match ladder length".into(),
        });
    }
    if basis.n_ions() != ladder.n_ions() {
        return Err(Error::IonCountMismatch {
            basis: basis.n_ions(),
            modes: ladder.n_ions(),
        });
    }
    let com_cutoff = basis.cutoff(0).ok_or(Error::InactiveMode { mode: 0 })?;
    let max_phonons = ladder.slots().first().map_or(0, |s| s.phonons);
    if com_cutoff < max_phonons {
        return Err(Error::CutoffOverflow {
            mode: 0,
            cutoff: com_cutoff,
        });
    }
    let com_slot = basis.mode_slot(0).expect("checked above");
    let mut amps = DVector::zeros(basis.dim());
    let mut occ = vec![0usize; basis.modes().len()];
    for (k, (slot, c)) in ladder.slots().iter().zip(amplitudes).enumerate() {
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        occ[com_slot] = slot.phonons;
        for (s, a) in dicke_spin_amplitudes(ladder.n_ions(), k) {
            amps[basis.index(s, &occ)] += c * a;
        }
    }
    QuantumState::new(BasisRef::Full(basis.clone()), amps)
}

/// Project a full-basis state back onto ladder slots:
/// `out[k] = <embedded slot k | state>`.
pub fn extract_ladder_amplitudes(
    state: &QuantumState,
    ladder: &SectorLadder,
) -> Result<Vec<C64>> {
    let basis = state.basis().as_full()?;
    if basis.n_ions() != ladder.n_ions() {
        return Err(Error::IonCountMismatch {
            basis: basis.n_ions(),
            modes: ladder.n_ions(),
        });
    }
    let com_slot = basis.mode_slot(0).ok_or(Error::InactiveMode { mode: 0 })?;
    let com_cutoff = basis.modes()[com_slot].cutoff;
    let mut occ = vec![0usize; basis.modes().len()];
    let mut out = Vec::with_capacity(ladder.len());
    for (k, slot) in ladder.slots().iter().enumerate() {
        if slot.phonons > com_cutoff {
            out.push(C64::new(0.0, 0.0));
            continue;
        }
        occ[com_slot] = slot.phonons;
        let mut acc = C64::new(0.0, 0.0);
        for (s, a) in dicke_spin_amplitudes(ladder.n_ions(), k) {
            acc += state.amplitudes()[basis.index(s, &occ)] * a;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Hermitian, unit-trace density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wrap a matrix, checking hermiticity and unit trace to 1e-12.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::InvalidArgument("density matrix must be square".into()));
        }
        let n = entries.nrows();
        let mut herm_defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                herm_defect = herm_defect.max((entries[(i, j)] - entries[(j, i)].conj()).norm());
            }
        }
        if herm_defect > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix is not hermitian (defect {herm_defect:.3e})"
            )));
        }
        let trace: C64 = entries.trace();
        if (trace.re - 1.0).abs() > NORM_TOL || trace.im.abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {trace} is not 1"
            )));
        }
        Ok(DensityMatrix { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    /// Real eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

/// Reduced density matrix of the spins (phonons traced out).
pub fn partial_trace_spins(state: &QuantumState) -> Result<DensityMatrix> {
    let basis = state.basis().as_full()?;
    let sdim = basis.spin_dim();
    let pdim = basis.phonon_dim();
    let amps = state.amplitudes();
    let mut rho = DMatrix::zeros(sdim, sdim);
    for s in 0..sdim {
        for sp in 0..sdim {
            let mut acc = C64::new(0.0, 0.0);
            for p in 0..pdim {
                acc += amps[s * pdim + p] * amps[sp * pdim + p].conj();
            }
            rho[(s, sp)] = acc;
        }
    }
    DensityMatrix::new(rho)
}

/// Reduced density matrix of the phonons (spins traced out).
pub fn partial_trace_phonons(state: &QuantumState) -> Result<DensityMatrix> {
    let basis = state.basis().as_full()?;
    let sdim = basis.spin_dim();
    let pdim = basis.phonon_dim();
    let amps = state.amplitudes();
    let mut rho = DMatrix::zeros(pdim, pdim);
    for p in 0..pdim {
        for pp in 0..pdim {
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..sdim {
                acc += amps[s * pdim + p] * amps[s * pdim + pp].conj();
            }
            rho[(p, pp)] = acc;
        }
    }
    DensityMatrix::new(rho)
}

/// Reduced density matrix of two chosen spins from a spin-only pure state.
///
/// Row/column order of the 4x4 result: |dd>, |du>, |ud>, |uu> with the
/// first label for `ion_a` (the pair's low bit).
pub fn spin_pair_reduction(
    state: &QuantumState,
    ion_a: usize,
    ion_b: usize,
) -> Result<DensityMatrix> {
    let basis = state.basis().as_full()?;
    let n = basis.n_ions();
    if ion_a >= n || ion_b >= n || ion_a == ion_b {
        return Err(Error::InvalidArgument(format!(
            "invalid ion pair ({ion_a}, {ion_b}) for {n} ions"
        )));
    }
    if basis.phonon_dim() != 1 {
        return Err(Error::BasisMismatch {
            context: "spin pair reduction expects a spin-only state".into(),
        });
    }
    let amps = state.amplitudes();
    let pair_bits = |s: usize| ((s >> ion_a) & 1) | (((s >> ion_b) & 1) << 1);
    let mut rho = DMatrix::zeros(4, 4);
    for s in 0..basis.spin_dim() {
        let a = amps[s];
        if a.re == 0.0 && a.im == 0.0 {
            continue;
        }
        let rest = s & !((1 << ion_a) | (1 << ion_b));
        let pa = pair_bits(s);
        for pb in 0..4usize {
            let sp = rest
                | ((pb & 1) << ion_a)
                | (((pb >> 1) & 1) << ion_b);
            rho[(pa, pb)] += a * amps[sp].conj();
        }
    }
    DensityMatrix::new(rho)
}

/// Project onto Fock occupation `n` of `mode`.
///
/// Returns the outcome probability and the renormalized conditional state.
/// A zero-probability branch yields `None` for the state, not an error.
pub fn project_phonon_number(
    state: &QuantumState,
    mode: usize,
    n: usize,
) -> Result<(f64, Option<QuantumState>)> {
    let basis = state.basis().as_full()?;
    let slot = basis
        .mode_slot(mode)
        .ok_or(Error::InactiveMode { mode })?;
    if n > basis.modes()[slot].cutoff {
        return Err(Error::CutoffOverflow {
            mode,
            cutoff: basis.modes()[slot].cutoff,
        });
    }
    let mut projected = state.amplitudes().clone();
    for i in 0..basis.dim() {
        let (_, occ) = basis.label(i);
        if occ[slot] != n {
            projected[i] = C64::new(0.0, 0.0);
        }
    }
    conditional_outcome(state.basis().clone(), projected)
}

/// Project onto one spin configuration (the phonon factor is kept).
pub fn project_spin_config(
    state: &QuantumState,
    config: usize,
) -> Result<(f64, Option<QuantumState>)> {
    let basis = state.basis().as_full()?;
    if config >= basis.spin_dim() {
        return Err(Error::InvalidArgument(format!(
            "spin configuration {config} out of range"
        )));
    }
    let pdim = basis.phonon_dim();
    let mut projected = DVector::zeros(basis.dim());
    for p in 0..pdim {
        let i = config * pdim + p;
        projected[i] = state.amplitudes()[i];
    }
    conditional_outcome(state.basis().clone(), projected)
}

fn conditional_outcome(
    basis: BasisRef,
    projected: DVector<C64>,
) -> Result<(f64, Option<QuantumState>)> {
    let norm = projected.norm();
    // Rounding can push the squared norm of a projected unit vector a few
    // ulps past 1.
    let probability = (norm * norm).min(1.0);
    if probability < 1e-300 {
        return Ok((0.0, None));
    }
    let state = QuantumState::new(basis, projected / C64::new(norm, 0.0))?;
    Ok((probability, Some(state)))
}
