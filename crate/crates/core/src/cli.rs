//! Command-line front end: `sweep`, `estimate`, `simulate` and
//! `mdi-estimate`.
//!
//! Numbers are written with 17 significant digits so that files round-trip
//! exactly and reruns are byte-identical. Files are written to a temporary
//! sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{self, ChannelParams};
use crate::config::{DistanceRange, Protocol, RunConfig};
use crate::error::{validation, Error, Result};
use crate::estimator::{
    self, check_well_posed, MdiYieldTable, PhaseErrorEstimate, TransmissionFunctional, YieldMode, YieldTable,
};
use crate::keyrate;
use crate::montecarlo::{self, TrialRecord};
use crate::qstate::{Basis, BlochVector, QubitState, SourceSet, SourceState};

/// Column order of the sweep output.
pub const SWEEP_HEADER: &str = "delta,distance_km,alpha_opt,Q_z,e_z,Q_z1,e_x1,R";
/// Column order of yield files; the Bloch columns are optional.
pub const YIELDS_HEADER: &str = "label,basis,outcome,probability,prior";
pub const YIELDS_HEADER_BLOCH: &str = "label,basis,outcome,probability,prior,px,py,pz";
/// Column order of mdi yield files; the Bloch columns are optional.
pub const MDI_HEADER: &str = "alice,bob,probability";
pub const MDI_HEADER_BLOCH: &str = "alice,bob,probability,alice_px,alice_pz,bob_px,bob_pz";

#[derive(Debug, Parser)]
#[command(
    name = "losstol",
    version,
    about = "Loss-tolerant phase error estimation and key-rate curves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key-rate curves over distance for each modulation error.
    Sweep(RunArgs),
    /// Phase error rate from a yield table.
    Estimate {
        /// Yield CSV (`label,basis,outcome,probability,prior[,px,py,pz]`).
        yields: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Monte Carlo run of the model channel, compared with the analytic value.
    Simulate {
        /// Also write the empirical yield table here.
        #[arg(long)]
        yields: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Phase error rate of the measurement-device-independent protocol.
    MdiEstimate {
        /// Yield CSV (`alice,bob,probability[,alice_px,alice_pz,bob_px,bob_pz]`).
        yields: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Modulation error; repeat for several curves.
    #[arg(long)]
    pub delta: Vec<f64>,
    /// `START:STOP:STEP` in km, or a single distance.
    #[arg(long)]
    pub distance: Option<String>,
    /// Fixed mean photon number.
    #[arg(long, conflicts_with = "optimize")]
    pub alpha: Option<f64>,
    /// Optimize the mean photon number at every point (default).
    #[arg(long)]
    pub optimize: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pulses: Option<u64>,
    #[arg(long = "f-ec")]
    pub f_ec: Option<f64>,
    /// three-state, four-state or mdi.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Test fraction of Z-Z pairs (mdi only).
    #[arg(long)]
    pub gamma: Option<f64>,
}

impl RunArgs {
    /// Config file values overridden by flags, validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if !self.delta.is_empty() {
            cfg.deltas = self.delta.clone();
        }
        if let Some(d) = &self.distance {
            cfg.distance = d.parse::<DistanceRange>()?;
        }
        if let Some(a) = self.alpha {
            cfg.fixed_alpha = Some(a);
        }
        if self.optimize {
            cfg.fixed_alpha = None;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.pulses {
            cfg.pulses = n;
        }
        if let Some(f) = self.f_ec {
            cfg.f_ec = f;
        }
        if let Some(p) = &self.protocol {
            cfg.protocol = p.parse()?;
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::IllPosed(_) => 2,
        Error::UndefinedRate(_) => 3,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing reports to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| validation(e.to_string()))?;
    execute(&cli.command, out)
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Sweep(run) => cmd_sweep(&run.resolve()?, out),
        Command::Estimate { yields, run } => cmd_estimate(yields, &run.resolve()?, run.pulses, out),
        Command::Simulate { yields, run } => cmd_simulate(&run.resolve()?, yields.as_deref(), out),
        Command::MdiEstimate { yields, run } => cmd_mdi_estimate(yields, &run.resolve()?, out),
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any double.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: io::Error) -> Error {
    validation(format!("{}: {e}", path.display()))
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| validation(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents).map_err(|e| io_err(path, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| validation(format!("writing output: {e}")))
}

// --- sweep ------------------------------------------------------------------

/// Sweep CSV text for `cfg`: one block of rows per delta.
pub fn sweep_csv(cfg: &RunConfig) -> Result<String> {
    if cfg.protocol != Protocol::ThreeState {
        return Err(validation(format!(
            "protocol: the analytic key-rate model covers three-state only, got {}",
            cfg.protocol
        )));
    }
    let distances = cfg.distance.points();
    let alpha = cfg.alpha_choice();
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for &delta in &cfg.deltas {
        for p in keyrate::sweep(&distances, delta, &cfg.channel, cfg.f_ec, &alpha)? {
            let row = [
                delta,
                p.distance_km,
                p.alpha_opt,
                p.q_z,
                p.e_z,
                p.q_z1,
                p.e_x1,
                p.rate,
            ];
            let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
        }
    }
    Ok(csv)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let csv = sweep_csv(cfg)?;
    match &cfg.out {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => emit(out, &csv),
    }
}

// --- yield files ------------------------------------------------------------

/// Source state of a standard label such as `0z` or `1x`.
pub fn standard_state(label: &str) -> Option<QubitState> {
    let mut chars = label.chars();
    let bit = match chars.next()? {
        '0' => 0,
        '1' => 1,
        _ => return None,
    };
    let basis = Basis::parse(chars.as_str())?;
    Some(QubitState::basis(basis, bit))
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| validation(format!("line {line}: bad {what} '{}'", field.trim())))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// A yield table together with the sources it was measured on.
#[derive(Debug, Clone)]
pub struct YieldFile {
    pub table: YieldTable,
    pub sources: SourceSet,
}

/// Parses a yield CSV. `probability` is the joint yield and `prior` the
/// probability of the `(label, basis)` pair; without Bloch columns the labels
/// must name basis states (`0z`, `1x`, ...).
pub fn parse_yields(text: &str) -> Result<YieldFile> {
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| validation("yield file is empty"))?;
    let with_bloch = match header {
        YIELDS_HEADER => false,
        YIELDS_HEADER_BLOCH => true,
        other => {
            return Err(validation(format!(
                "yield header must be '{YIELDS_HEADER}[,px,py,pz]', got '{other}'"
            )))
        }
    };
    let mut table = YieldTable::new(YieldMode::Joint);
    let mut order: Vec<String> = Vec::new();
    let mut blochs: BTreeMap<String, BlochVector> = BTreeMap::new();
    let mut rows = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let want = if with_bloch { 8 } else { 5 };
        if f.len() != want {
            return Err(validation(format!(
                "line {n}: expected {want} fields, got {}",
                f.len()
            )));
        }
        let label = f[0].to_string();
        let basis =
            Basis::parse(f[1]).ok_or_else(|| validation(format!("line {n}: bad basis '{}'", f[1])))?;
        let outcome: u8 = match f[2] {
            "0" => 0,
            "1" => 1,
            o => return Err(validation(format!("line {n}: outcome must be 0 or 1, got '{o}'"))),
        };
        let y = parse_f64(f[3], n, "probability")?;
        let prior = parse_f64(f[4], n, "prior")?;
        match table.prior(&label, basis) {
            Some(p) if p != prior => {
                return Err(validation(format!(
                    "line {n}: prior of ({label}, {basis}) is {prior}, earlier rows say {p}"
                )))
            }
            Some(_) => {}
            None => table.set_prior(&label, basis, prior)?,
        }
        if with_bloch {
            let b = BlochVector::new(
                parse_f64(f[5], n, "px")?,
                parse_f64(f[6], n, "py")?,
                parse_f64(f[7], n, "pz")?,
            );
            if let Some(prev) = blochs.get(&label) {
                if prev.max_abs_diff(&b) > 0.0 {
                    return Err(validation(format!(
                        "line {n}: Bloch vector of '{label}' differs from earlier rows"
                    )));
                }
            }
            blochs.insert(label.clone(), b);
        }
        if !order.contains(&label) {
            order.push(label.clone());
        }
        rows.push((label, basis, outcome, y, n));
    }
    for (label, basis, outcome, y, n) in rows {
        table
            .insert(&label, basis, outcome, y)
            .map_err(|e| validation(format!("line {n}: {e}")))?;
    }

    // source priors: the (label, basis) priors summed over bases
    let mut weight: BTreeMap<&str, f64> = BTreeMap::new();
    for (l, _, p) in table.priors() {
        *weight.entry(l).or_default() += p;
    }
    let total: f64 = weight.values().sum();
    let mut states = Vec::new();
    for label in &order {
        let state = if with_bloch {
            QubitState::from_bloch(&blochs[label])?
        } else {
            standard_state(label).ok_or_else(|| {
                validation(format!(
                    "label '{label}' is not a basis state; add px,py,pz columns"
                ))
            })?
        };
        states.push(SourceState::new(
            label.clone(),
            state,
            weight[label.as_str()] / total,
        ));
    }
    let sources = SourceSet::new(states)?;
    Ok(YieldFile { table, sources })
}

/// Yield CSV with Bloch columns for `table` over `sources`.
pub fn yields_csv(table: &YieldTable, sources: &SourceSet) -> String {
    let mut s = String::from(YIELDS_HEADER_BLOCH);
    s.push('\n');
    for src in sources.states() {
        let b = src.state.bloch();
        for (label, basis, outcome, _) in table.cells().filter(|c| c.0 == src.label) {
            let y = table.joint(label, basis, outcome).unwrap_or(0.0);
            let prior = table.prior(label, basis).unwrap_or(0.0);
            let _ = writeln!(
                s,
                "{label},{basis},{outcome},{},{},{},{},{}",
                fmt_num(y),
                fmt_num(prior),
                fmt_num(b.px),
                fmt_num(b.py),
                fmt_num(b.pz)
            );
        }
    }
    s
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

// --- estimate ---------------------------------------------------------------

fn functional_line(f: &TransmissionFunctional) -> String {
    let mut s = format!(
        "q[{} {}]: q_id={} q_x={}",
        f.basis,
        f.outcome,
        fmt_num(f.q_id),
        fmt_num(f.q_x)
    );
    if let Some(q_y) = f.q_y {
        let _ = write!(s, " q_y={}", fmt_num(q_y));
    }
    let _ = write!(s, " q_z={}", fmt_num(f.q_z));
    s
}

fn estimate_report(file: &YieldFile, basis: Basis, pulses: Option<u64>, rep: &mut String) -> Result<()> {
    let rate = if basis == Basis::X { "e_x" } else { "e_y" };
    match pulses {
        // sampled data: clamped, with a standard error
        Some(n) => {
            let est = montecarlo::estimate_from_yields(&file.table, &file.sources, basis, n)?;
            for s in 0..2u8 {
                let f = estimator::solve_functional_unchecked(&file.table, &file.sources, basis, s)?;
                let _ = writeln!(rep, "{}", functional_line(&f));
            }
            virtual_lines(&est.virtual_yields, rep);
            let _ = writeln!(rep, "{rate} = {}", fmt_num(est.e_x));
            let _ = writeln!(rep, "std_err = {}", fmt_num(est.std_err));
        }
        None => {
            let PhaseErrorEstimate {
                functionals,
                virtual_yields,
                error_rate,
                ..
            } = estimator::estimate_phase_error(&file.table, &file.sources, basis)?;
            for f in &functionals {
                let _ = writeln!(rep, "{}", functional_line(f));
            }
            virtual_lines(&virtual_yields, rep);
            let _ = writeln!(rep, "{rate} = {}", fmt_num(error_rate));
        }
    }
    Ok(())
}

fn virtual_lines(y: &[[f64; 2]; 2], rep: &mut String) {
    for (s, row) in y.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(rep, "virtual_yield[s={s}][j={j}] = {}", fmt_num(*v));
        }
    }
}

/// Report for a yield file: solved coefficients, virtual yields, the phase
/// error rate (and the Y-basis rate when four states were measured in Y) and
/// the condition number of the design matrix.
pub fn estimate_text(file: &YieldFile, cfg: &RunConfig, pulses: Option<u64>) -> Result<String> {
    if cfg.protocol == Protocol::Mdi {
        return Err(validation("protocol: use mdi-estimate for mdi yield files"));
    }
    let n = file.sources.len();
    if n != cfg.protocol.n_states() {
        return Err(validation(format!(
            "protocol: {} expects {} source states, the file has {n}",
            cfg.protocol,
            cfg.protocol.n_states()
        )));
    }
    let pose = check_well_posed(&file.sources.bloch_vectors());
    if !pose.well_posed {
        return Err(Error::IllPosed(format!(
            "source states do not determine the functional ({:?}, condition number {:.3e})",
            pose.issue, pose.condition_number
        )));
    }
    let mut rep = String::new();
    let labels: Vec<&str> = file.sources.labels().collect();
    let _ = writeln!(rep, "protocol = {}", cfg.protocol);
    let _ = writeln!(rep, "sources = {}", labels.join(","));
    let _ = writeln!(rep, "condition_number = {}", fmt_num(pose.condition_number));
    estimate_report(file, Basis::X, pulses, &mut rep)?;
    let has_y = file.table.cells().any(|c| c.1 == Basis::Y);
    if n == 4 && has_y {
        estimate_report(file, Basis::Y, pulses, &mut rep)?;
    }
    Ok(rep)
}

pub fn cmd_estimate(path: &Path, cfg: &RunConfig, pulses: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let file = parse_yields(&read_text(path)?)?;
    let rep = estimate_text(&file, cfg, pulses)?;
    match &cfg.out {
        Some(p) => write_atomic(p, rep.as_bytes()),
        None => emit(out, &rep),
    }
}

// --- simulate ---------------------------------------------------------------

/// Simulation point: the first configured delta at the first distance.
pub fn simulation_params(cfg: &RunConfig) -> Result<ChannelParams> {
    let delta = *cfg
        .deltas
        .first()
        .ok_or_else(|| validation("delta: at least one value needed"))?;
    let d = *cfg
        .distance
        .points()
        .first()
        .ok_or_else(|| validation("distance: the range is empty"))?;
    let p = cfg.channel.with_delta(delta).with_distance(d);
    p.validate()?;
    Ok(p)
}

/// Simulated counts, their empirical yield table and the report.
pub struct SimulationOutput {
    pub record: TrialRecord,
    pub yields: YieldTable,
    pub sources: SourceSet,
    pub report: String,
}

pub fn simulate(cfg: &RunConfig) -> Result<SimulationOutput> {
    if cfg.protocol != Protocol::ThreeState {
        return Err(validation(format!(
            "protocol: simulation covers the three-state model only, got {}",
            cfg.protocol
        )));
    }
    if cfg.pulses == 0 {
        return Err(validation("pulses: must be at least 1"));
    }
    let p = simulation_params(cfg)?;
    let m = montecarlo::model_setup(&p)?;
    let record = montecarlo::run_protocol(cfg.pulses, &m.sources, &m.channel, &m.povm, &m.bases, cfg.seed)?;
    let yields = montecarlo::empirical_yields(&record, &m.sources)?;
    let est = montecarlo::estimate_from_trial(&record, &m.sources, Basis::X)?;
    let (_, analytic) = channel::single_photon_stats(&p)?;
    let z = if est.std_err > 0.0 {
        (est.e_x - analytic) / est.std_err
    } else {
        f64::NAN
    };

    let mut rep = String::new();
    let _ = writeln!(rep, "seed = {}", cfg.seed);
    let _ = writeln!(rep, "pulses = {}", cfg.pulses);
    let _ = writeln!(rep, "delta = {}", fmt_num(p.delta));
    let _ = writeln!(rep, "distance_km = {}", fmt_num(p.distance_km));
    let _ = writeln!(rep, "e_x = {}", fmt_num(est.e_x));
    let _ = writeln!(rep, "std_err = {}", fmt_num(est.std_err));
    let _ = writeln!(rep, "e_x_analytic = {}", fmt_num(analytic));
    let _ = writeln!(rep, "z_score = {}", fmt_num(z));
    Ok(SimulationOutput {
        record,
        yields,
        sources: m.sources,
        report: rep,
    })
}

pub fn cmd_simulate(cfg: &RunConfig, yields_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let sim = simulate(cfg)?;
    if let Some(path) = &cfg.out {
        let mut buf = Vec::new();
        sim.record
            .write_csv(&mut buf)
            .map_err(|e| validation(format!("formatting counts: {e}")))?;
        write_atomic(path, &buf)?;
    }
    if let Some(path) = yields_path {
        write_atomic(path, yields_csv(&sim.yields, &sim.sources).as_bytes())?;
    }
    emit(out, &sim.report)
}

/// Reads a counts CSV written by `simulate`.
pub fn read_counts(path: &Path) -> Result<TrialRecord> {
    TrialRecord::read_csv(read_text(path)?.as_bytes())
}

// --- mdi --------------------------------------------------------------------

/// Parsed mdi yield file.
#[derive(Debug, Clone)]
pub struct MdiFile {
    pub table: MdiYieldTable,
    pub alice: SourceSet,
    pub bob: SourceSet,
}

pub fn parse_mdi_yields(text: &str) -> Result<MdiFile> {
    let mut lines = data_lines(text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| validation("mdi yield file is empty"))?;
    let with_bloch = match header {
        MDI_HEADER => false,
        MDI_HEADER_BLOCH => true,
        other => {
            return Err(validation(format!(
                "mdi header must be '{MDI_HEADER}[,alice_px,alice_pz,bob_px,bob_pz]', got '{other}'"
            )))
        }
    };
    let mut table = MdiYieldTable::new();
    let mut alice: Vec<(String, QubitState)> = Vec::new();
    let mut bob: Vec<(String, QubitState)> = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let want = if with_bloch { 7 } else { 3 };
        if f.len() != want {
            return Err(validation(format!(
                "line {n}: expected {want} fields, got {}",
                f.len()
            )));
        }
        let y = parse_f64(f[2], n, "probability")?;
        table
            .insert(f[0], f[1], y)
            .map_err(|e| validation(format!("line {n}: {e}")))?;
        for (party, label, cols) in [(&mut alice, f[0], 3), (&mut bob, f[1], 5)] {
            let state = if with_bloch {
                let b = BlochVector::new(
                    parse_f64(f[cols], n, "px")?,
                    0.0,
                    parse_f64(f[cols + 1], n, "pz")?,
                );
                QubitState::from_bloch(&b)?
            } else {
                standard_state(label).ok_or_else(|| {
                    validation(format!("label '{label}' is not a basis state; add Bloch columns"))
                })?
            };
            match party.iter().find(|(l, _)| l == label) {
                Some((_, s)) if s.distance(&state) > 0.0 => {
                    return Err(validation(format!(
                        "line {n}: state of '{label}' differs from earlier rows"
                    )))
                }
                Some(_) => {}
                None => party.push((label.to_string(), state)),
            }
        }
    }
    let to_set = |v: Vec<(String, QubitState)>| {
        SourceSet::uniform(v.iter().map(|(l, s)| (l.as_str(), s.clone())).collect())
    };
    Ok(MdiFile {
        table,
        alice: to_set(alice)?,
        bob: to_set(bob)?,
    })
}

pub fn mdi_estimate_text(file: &MdiFile, gamma: f64) -> Result<String> {
    let f = estimator::mdi_solve(&file.table, &file.alice, &file.bob, gamma)?;
    let ea = estimator::z_pair_ensemble(&file.alice, Basis::X)?;
    let eb = estimator::z_pair_ensemble(&file.bob, Basis::X)?;
    let y = estimator::mdi_virtual_yields(&f, &ea, &eb)?;
    let e_x = estimator::mdi_phase_error(&f, &ea, &eb)?;
    let cond = check_well_posed(&file.alice.bloch_vectors()).condition_number
        * check_well_posed(&file.bob.bloch_vectors()).condition_number;

    let mut rep = String::new();
    let _ = writeln!(rep, "protocol = mdi");
    let _ = writeln!(rep, "condition_number = {}", fmt_num(cond));
    for (s, row) in f.q.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            let _ = writeln!(
                rep,
                "q[{},{}] = {}",
                estimator::MDI_PAULIS[s],
                estimator::MDI_PAULIS[t],
                fmt_num(*v)
            );
        }
    }
    for (j, row) in y.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let _ = writeln!(rep, "virtual_yield[{j}x,{k}x] = {}", fmt_num(*v));
        }
    }
    let _ = writeln!(rep, "e_x = {}", fmt_num(e_x));
    Ok(rep)
}

pub fn cmd_mdi_estimate(path: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let file = parse_mdi_yields(&read_text(path)?)?;
    let rep = mdi_estimate_text(&file, cfg.gamma)?;
    match &cfg.out {
        Some(p) => write_atomic(p, rep.as_bytes()),
        None => emit(out, &rep),
    }
}
