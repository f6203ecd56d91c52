//! Command-line front end: normal-mode tables, reference trajectory data
//! as CSV, and protocol runs. Every command is deterministic; CSV output
//! is byte-identical across repeated runs on one platform.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 I/O error,
//! 4 physics/domain error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vibronic::dynamics::{DynamicsConfig, Propagator};
use vibronic::error::Error as LibError;
use vibronic::ionchain::normal_modes;
use vibronic::observables::entropy_spins_ladder;
use vibronic::protocols::{
    fock_via_blue, parse_protocol, postselect_wk, prepare_ghz4, prepare_irradiant, prepare_w1,
    prepare_w2, run_protocol, ProtocolResult, ProtocolStep,
};
use vibronic::statespace::{
    embed_ladder_state, BasisRef, FullBasis, QuantumState, SectorLadder,
};
use vibronic::C64;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "vibronic",
    version,
    about = "Collective spin-phonon dynamics of trapped-ion chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the normal-mode table of an N-ion chain as CSV
    Modes {
        /// Number of ions
        #[arg(short = 'n', long = "ions")]
        ions: usize,
        /// Output CSV path (default: modes_n<N>.csv)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write reference trajectory data as CSV
    ///
    /// 1: ladder populations, 100 ions and 40 phonons. 2: spin entropy of
    /// the same run. 3: populations, 4 ions and 2 phonons. 4: populations,
    /// 10 ions and 5 phonons.
    Figure {
        /// Figure id (1-4)
        id: u32,
        /// Output CSV path (default: fig<ID>.csv)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Scan end time in coupling units (default: 3 pi sqrt(r) / (2 sqrt(N)))
        #[arg(long)]
        tmax: Option<f64>,
        /// Number of time samples (default: 600)
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a built-in preparation scheme or a protocol file
    ///
    /// Builtins: w1, w2, irradiant, ghz4, wk-postselect, fock-blue.
    /// Anything else is treated as a protocol file path.
    Protocol {
        name: String,
        /// Number of ions
        #[arg(short = 'n', long = "ions")]
        ions: Option<usize>,
        /// Excitation count (wk-postselect)
        #[arg(short = 'k', long = "excitations")]
        k: Option<usize>,
        /// Mode index (irradiant)
        #[arg(short = 'j', long = "mode")]
        j: Option<usize>,
        /// Write the final state to this path
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }

    fn physics(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<LibError> for Failure {
    fn from(err: LibError) -> Self {
        let code = match &err {
            LibError::ProtocolParse { .. } | LibError::StateFormat(_) => 2,
            LibError::Io(_) => 3,
            _ => 4,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Modes { ions, output } => cmd_modes(ions, output),
        Command::Figure {
            id,
            output,
            tmax,
            steps,
        } => cmd_figure(id, output, tmax, steps),
        Command::Protocol {
            name,
            ions,
            k,
            j,
            save,
        } => cmd_protocol(&name, ions, k, j, save),
    }
}

/// 17 significant digits, locale independent.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    let mut file = fs::File::create(path)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.txt")
}

fn write_manifest(csv: &Path, command: &str, params: &[(&str, String)]) -> Result<(), Failure> {
    let mut text = String::new();
    let _ = writeln!(text, "command: {command}");
    for (key, value) in params {
        let _ = writeln!(text, "{key}: {value}");
    }
    let _ = writeln!(text, "output: {}", csv.display());
    let _ = writeln!(text, "library: vibronic {VERSION}");
    write_file(&manifest_path(csv), &text)
}

fn cmd_modes(ions: usize, output: Option<PathBuf>) -> Result<(), Failure> {
    if ions == 0 {
        return Err(Failure::usage("ion count must be at least 1"));
    }
    let table = normal_modes(ions).map_err(Failure::from)?;
    let path = output.unwrap_or_else(|| PathBuf::from(format!("modes_n{ions}.csv")));

    let mut csv = String::from("mode,frequency");
    for n in 0..ions {
        let _ = write!(csv, ",b{n}");
    }
    csv.push('\n');
    for j in 0..ions {
        let _ = write!(csv, "{j},{}", fmt(table.frequencies()[j]));
        for n in 0..ions {
            let _ = write!(csv, ",{}", fmt(table.amplitude(n, j)));
        }
        csv.push('\n');
    }
    write_file(&path, &csv)?;
    write_manifest(&path, "modes", &[("n_ions", ions.to_string())])?;
    println!("wrote {} ({} modes)", path.display(), ions);
    Ok(())
}

enum FigureKind {
    Populations,
    Entropy,
}

fn cmd_figure(
    id: u32,
    output: Option<PathBuf>,
    tmax: Option<f64>,
    steps: Option<usize>,
) -> Result<(), Failure> {
    let (n_ions, r, kind) = match id {
        1 => (100, 40, FigureKind::Populations),
        2 => (100, 40, FigureKind::Entropy),
        3 => (4, 2, FigureKind::Populations),
        4 => (10, 5, FigureKind::Populations),
        other => return Err(Failure::usage(format!("unknown figure id {other}"))),
    };
    let steps = steps.unwrap_or(600);
    if steps < 2 {
        return Err(Failure::usage("need at least 2 time samples"));
    }
    let t_max = tmax.unwrap_or_else(|| {
        3.0 * std::f64::consts::PI * (r as f64).sqrt() / (2.0 * (n_ions as f64).sqrt())
    });
    if t_max <= 0.0 || t_max.is_nan() {
        return Err(Failure::usage("tmax must be positive"));
    }

    let cfg = DynamicsConfig::default();
    let ladder = vibronic::statespace::sector_ladder(n_ions, r);
    let h = vibronic::dynamics::h_red_ladder(n_ions, r, &cfg).map_err(Failure::from)?;
    let prop = Propagator::new(&h).map_err(Failure::from)?;
    let psi0 = QuantumState::ladder_slot(ladder.clone(), 0).map_err(Failure::from)?;

    let mut csv = String::from("t");
    match kind {
        FigureKind::Populations => {
            for slot in ladder.slots() {
                let _ = write!(csv, ",p_m{}_n{}", fmt_m(slot.m_twice), slot.phonons);
            }
        }
        FigureKind::Entropy => csv.push_str(",entropy_bits"),
    }
    csv.push('\n');

    for i in 0..steps {
        let t = t_max * i as f64 / (steps - 1) as f64;
        let amps = prop.apply(psi0.amplitudes(), t);
        let _ = write!(csv, "{}", fmt(t));
        match kind {
            FigureKind::Populations => {
                for a in amps.iter() {
                    let _ = write!(csv, ",{}", fmt(a.norm_sqr()));
                }
            }
            FigureKind::Entropy => {
                let state = QuantumState::normalized(BasisRef::Ladder(ladder.clone()), amps)
                    .map_err(Failure::from)?;
                let bits = entropy_spins_ladder(&state).map_err(Failure::from)?;
                let _ = write!(csv, ",{}", fmt(bits));
            }
        }
        csv.push('\n');
    }

    let path = output.unwrap_or_else(|| PathBuf::from(format!("fig{id}.csv")));
    write_file(&path, &csv)?;
    write_manifest(
        &path,
        "figure",
        &[
            ("figure", id.to_string()),
            ("n_ions", n_ions.to_string()),
            ("excitations", r.to_string()),
            ("tmax", fmt(t_max)),
            ("steps", steps.to_string()),
        ],
    )?;
    println!("wrote {} ({} rows)", path.display(), steps);
    Ok(())
}

fn fmt_m(m_twice: i64) -> String {
    if m_twice % 2 == 0 {
        (m_twice / 2).to_string()
    } else {
        format!("{:.1}", m_twice as f64 / 2.0)
    }
}

fn require(flag: Option<usize>, what: &str, builtin: &str) -> Result<usize, Failure> {
    flag.ok_or_else(|| Failure::usage(format!("builtin `{builtin}` requires {what}")))
}

fn cmd_protocol(
    name: &str,
    ions: Option<usize>,
    k: Option<usize>,
    j: Option<usize>,
    save: Option<PathBuf>,
) -> Result<(), Failure> {
    let cfg = DynamicsConfig::default();
    let builtins = ["w1", "w2", "irradiant", "ghz4", "wk-postselect", "fock-blue"];
    let result: ProtocolResult = if builtins.contains(&name) {
        match name {
            "w1" => prepare_w1(require(ions, "-n/--ions", name)?, &cfg)?,
            "w2" => prepare_w2(require(ions, "-n/--ions", name)?, &cfg)?,
            "irradiant" => {
                let n = require(ions, "-n/--ions", name)?;
                let mode = require(j, "-j/--mode", name)?;
                prepare_irradiant(n, mode, &cfg)?
            }
            "ghz4" => prepare_ghz4(&cfg)?,
            "wk-postselect" => {
                let n = require(ions, "-n/--ions", name)?;
                let kk = require(k, "-k/--excitations", name)?;
                postselect_wk(n, kk, &cfg)?
            }
            "fock-blue" => fock_via_blue(require(ions, "-n/--ions", name)?, &cfg)?,
            _ => unreachable!("builtin list checked"),
        }
    } else if Path::new(name).exists() {
        let n = ions.ok_or_else(|| Failure::usage("protocol files require -n/--ions"))?;
        if n == 0 {
            return Err(Failure::usage("ion count must be at least 1"));
        }
        let text = fs::read_to_string(name)
            .map_err(|e| Failure::io(format!("cannot read {name}: {e}")))?;
        let steps = parse_protocol(&text)?;
        let basis = infer_basis(n, &steps)?;
        let initial = QuantumState::vacuum(basis);
        run_protocol(&steps, &initial, None, &cfg)?
    } else {
        return Err(Failure::usage(format!(
            "unknown protocol `{name}` (builtins: {}) and no such file",
            builtins.join(", ")
        )));
    };

    print_result(name, &result);
    if let Some(path) = save {
        save_state(&result.final_state, &path)?;
        println!("saved final state to {}", path.display());
    }
    Ok(())
}

/// Active modes and Fock cutoffs implied by a protocol file: room for every
/// injection, the full blue-sideband range, any postselected occupation,
/// plus headroom.
fn infer_basis(n_ions: usize, steps: &[ProtocolStep]) -> Result<FullBasis, Failure> {
    let mut requirements: BTreeMap<usize, usize> = BTreeMap::new();
    let mut injections: BTreeMap<usize, usize> = BTreeMap::new();
    let touch = |m: usize, need: usize, req: &mut BTreeMap<usize, usize>| {
        let entry = req.entry(m).or_insert(0);
        *entry = (*entry).max(need);
    };
    for step in steps {
        match step {
            ProtocolStep::InjectPhonon { mode } => {
                *injections.entry(*mode).or_insert(0) += 1;
                touch(*mode, 0, &mut requirements);
            }
            ProtocolStep::Pulse { mode, sideband, .. } => {
                let need = match sideband {
                    vibronic::dynamics::Sideband::Blue => n_ions,
                    vibronic::dynamics::Sideband::Red => 0,
                };
                touch(*mode, need, &mut requirements);
            }
            ProtocolStep::MeasurePhonon { mode, keep } => {
                touch(*mode, *keep, &mut requirements);
            }
            ProtocolStep::LocalPhase { .. } | ProtocolStep::MeasureSpins { .. } => {}
        }
    }
    if requirements.is_empty() {
        // Spin-only protocols still need a well-formed basis.
        return FullBasis::new(n_ions, &[]).map_err(Failure::from);
    }
    let modes: Vec<(usize, usize)> = requirements
        .into_iter()
        .map(|(mode, need)| {
            let inj = injections.get(&mode).copied().unwrap_or(0);
            (mode, need + inj + 2)
        })
        .collect();
    FullBasis::new(n_ions, &modes).map_err(Failure::from)
}

fn print_result(name: &str, result: &ProtocolResult) {
    println!("protocol: {name}");
    println!("success probability: {}", result.success_probability);
    match result.target_fidelity {
        Some(f) => println!("target fidelity: {f}"),
        None => println!("target fidelity: n/a"),
    }
    println!("steps:");
    for (i, rec) in result.step_log.iter().enumerate() {
        let mut line = format!("  {}. {}", i + 1, rec.step);
        if let Some(t) = rec.duration {
            let _ = write!(line, "  duration={t}");
        }
        if let Some(l) = rec.leakage {
            let _ = write!(line, "  leakage={l:.3e}");
        }
        if let Some(p) = rec.branch_probability {
            let _ = write!(line, "  branch-probability={p}");
        }
        println!("{line}");
    }
    if result.failed {
        println!("status: FAILED (zero-probability measurement branch)");
    } else {
        println!("status: ok");
    }
}

/// Serialize the final state; ladder-representation results are embedded
/// into the full product basis first when that is tractable.
fn save_state(state: &QuantumState, path: &Path) -> Result<(), Failure> {
    let full;
    let to_save: &QuantumState = match state.basis() {
        BasisRef::Full(_) => state,
        BasisRef::Ladder(ladder) => {
            full = embed_ladder(state, ladder)?;
            &full
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    to_save.save_text(&mut buf).map_err(Failure::from)?;
    fs::write(path, buf).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))
}

fn embed_ladder(state: &QuantumState, ladder: &SectorLadder) -> Result<QuantumState, Failure> {
    let n = ladder.n_ions();
    let r = ladder.r();
    let dim = 1usize
        .checked_shl(n as u32)
        .and_then(|d| d.checked_mul(r + 1));
    match dim {
        Some(d) if d <= (1 << 22) => {
            let basis = FullBasis::new(n, &[(0, r)]).map_err(Failure::from)?;
            let amps: Vec<C64> = state.amplitudes().iter().copied().collect();
            embed_ladder_state(ladder, &amps, &basis).map_err(Failure::from)
        }
        _ => Err(Failure::physics(format!(
            "final state lives on a {n}-ion sector ladder; the full product space is too large to serialize"
        ))),
    }
}
