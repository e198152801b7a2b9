//! Event-level simulation of the prepare-and-measure protocol against
//! arbitrary Kraus channels and POVMs.
//!
//! [`exact_yields`] computes the yield table by direct trace evaluation and is
//! the oracle the estimator is tested against. [`run_protocol`] samples the
//! same i.i.d. process pulse by pulse; [`estimate_from_trial`] feeds the
//! empirical frequencies back through the estimator with a first-order error
//! bar.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{self, ChannelParams};
use crate::error::{validation, Error, Result};
use crate::estimator::{self, error_ratio, YieldMode, YieldTable};
use crate::qstate::{hermitian_eigenvalues, hermiticity_defect, Basis, Mat2, SourceSet, ALGEBRAIC_TOL, C64};

/// Slack allowed on operator inequalities of channels and POVMs.
pub const OPERATOR_TOL: f64 = 1e-10;

/// Pulses per independently seeded block in [`run_protocol`].
pub const BLOCK_PULSES: u64 = 1 << 16;

const CHANNEL_STREAM: u64 = u64::MAX;
const POVM_STREAM: u64 = u64::MAX - 1;

fn min_eigenvalue(m: &Mat2) -> f64 {
    let [a, b] = hermitian_eigenvalues(m);
    a.min(b)
}

fn max_eigenvalue(m: &Mat2) -> f64 {
    let [a, b] = hermitian_eigenvalues(m);
    a.max(b)
}

fn is_psd(m: &Mat2) -> bool {
    hermiticity_defect(m) <= OPERATOR_TOL && min_eigenvalue(m) >= -OPERATOR_TOL
}

/// A trace-non-increasing qubit channel `rho -> sum_k A_k rho A_k^dag`. The
/// missing trace `Tr[(I - sum_k A_k^dag A_k) rho]` is the probability that the
/// pulse is lost.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    operators: Vec<Mat2>,
}

impl KrausChannel {
    pub fn new(operators: Vec<Mat2>) -> Result<Self> {
        if operators.is_empty() {
            return Err(validation("a Kraus channel needs at least one operator"));
        }
        if operators
            .iter()
            .any(|a| a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(validation("Kraus operators must be finite"));
        }
        let ch = KrausChannel { operators };
        let deficit = ch.completeness_deficit();
        if min_eigenvalue(&deficit) < -OPERATOR_TOL {
            return Err(validation(format!(
                "sum of A^dag A exceeds the identity (deficit eigenvalue {:.3e})",
                min_eigenvalue(&deficit)
            )));
        }
        Ok(ch)
    }

    pub fn identity() -> Self {
        KrausChannel {
            operators: vec![Mat2::identity()],
        }
    }

    /// Loses every pulse with probability `1 - transmittance`.
    pub fn uniform_loss(transmittance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmittance) {
            return Err(validation(format!(
                "transmittance must lie in [0, 1], got {transmittance}"
            )));
        }
        Ok(KrausChannel {
            operators: vec![Mat2::identity() * C64::from(transmittance.sqrt())],
        })
    }

    /// This channel followed by uniform loss `loss`.
    pub fn with_extra_loss(&self, loss: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&loss) {
            return Err(validation(format!("extra loss must lie in [0, 1), got {loss}")));
        }
        let k = C64::from((1.0 - loss).sqrt());
        Ok(KrausChannel {
            operators: self.operators.iter().map(|a| a * k).collect(),
        })
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    /// `I - sum_k A_k^dag A_k`.
    pub fn completeness_deficit(&self) -> Mat2 {
        let sum: Mat2 = self.operators.iter().map(|a| a.adjoint() * a).sum();
        Mat2::identity() - sum
    }

    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        self.operators.iter().map(|a| a * rho * a.adjoint()).sum()
    }

    /// Heisenberg-picture image `sum_k A_k^dag M A_k`.
    pub fn adjoint_apply(&self, m: &Mat2) -> Mat2 {
        self.operators.iter().map(|a| a.adjoint() * m * a).sum()
    }
}

fn random_complex(rng: &mut ChaCha8Rng) -> C64 {
    Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Mat2 {
    Mat2::from_fn(|_, _| random_complex(rng))
}

fn random_unitary(rng: &mut ChaCha8Rng) -> Mat2 {
    loop {
        let (a, b) = (random_complex(rng), random_complex(rng));
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if n > 1e-3 {
            let (a, b) = (a / n, b / n);
            let phase = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            return Mat2::new(a, -b.conj(), b, a.conj()) * phase;
        }
    }
}

fn diag_conjugate(u: &Mat2, d: [f64; 2]) -> Mat2 {
    u * Mat2::new(C64::from(d[0]), C64::default(), C64::default(), C64::from(d[1])) * u.adjoint()
}

/// Random channel with one to four Kraus operators, rescaled so that the
/// largest eigenvalue of `sum_k A_k^dag A_k` is `1 - w` for a loss weight `w`
/// drawn from `[0, 0.9]`. Deterministic per seed.
pub fn random_channel(seed: u64) -> KrausChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CHANNEL_STREAM);
    let k = rng.random_range(1..=4);
    let mut ops: Vec<Mat2> = (0..k).map(|_| random_matrix(&mut rng)).collect();
    let loss = rng.random_range(0.0..=0.9);
    let sum: Mat2 = ops.iter().map(|a| a.adjoint() * a).sum();
    let scale = C64::from(((1.0 - loss) / max_eigenvalue(&sum)).sqrt());
    for a in &mut ops {
        *a *= scale;
    }
    KrausChannel { operators: ops }
}

/// Bob's measurement: per basis a pair `{M_0, M_1}` sharing one failure
/// element `M_f`, plus a dark-count rate applied to the outcome
/// probabilities.
///
/// With dark counts `e`, the click probabilities `q_s = Tr(rho' M_s)` of the
/// transmitted state `rho'` become
/// `y_s = (1 - e/2) q_s + e q_{s+1} + e (1 - e/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BobPovm {
    elements: BTreeMap<Basis, [Mat2; 2]>,
    fail: Mat2,
    dark_count: f64,
}

impl BobPovm {
    pub fn new(elements: BTreeMap<Basis, [Mat2; 2]>, fail: Mat2) -> Result<Self> {
        if elements.is_empty() {
            return Err(validation("POVM needs at least one basis"));
        }
        if !is_psd(&fail) {
            return Err(validation("failure element is not positive semidefinite"));
        }
        for (basis, [m0, m1]) in &elements {
            if !is_psd(m0) || !is_psd(m1) {
                return Err(validation(format!(
                    "{basis}-basis element is not positive semidefinite"
                )));
            }
            let defect = (m0 + m1 + fail - Mat2::identity())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            if defect > OPERATOR_TOL {
                return Err(validation(format!(
                    "{basis}-basis elements with the failure element do not sum to I (defect {defect:.3e})"
                )));
            }
        }
        Ok(BobPovm {
            elements,
            fail,
            dark_count: 0.0,
        })
    }

    /// Projective measurements in `bases` with no failure outcome.
    pub fn ideal(bases: &[Basis]) -> Result<Self> {
        let elements = bases
            .iter()
            .map(|&b| (b, [b.projector(0), b.projector(1)]))
            .collect();
        Self::new(elements, Mat2::zeros())
    }

    pub fn with_dark_count(mut self, dark_count: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&dark_count) {
            return Err(validation(format!(
                "dark count probability must lie in [0, 1], got {dark_count}"
            )));
        }
        self.dark_count = dark_count;
        Ok(self)
    }

    pub fn bases(&self) -> impl Iterator<Item = Basis> + '_ {
        self.elements.keys().copied()
    }

    pub fn element(&self, basis: Basis, outcome: u8) -> Option<&Mat2> {
        self.elements.get(&basis).and_then(|m| m.get(outcome as usize))
    }

    pub fn fail(&self) -> &Mat2 {
        &self.fail
    }

    pub fn dark_count(&self) -> f64 {
        self.dark_count
    }

    fn elements_of(&self, basis: Basis) -> Result<&[Mat2; 2]> {
        self.elements
            .get(&basis)
            .ok_or_else(|| validation(format!("POVM has no {basis}-basis elements")))
    }

    /// Click probabilities `[y_0, y_1]` of `rho` after `ch`.
    pub fn click_probabilities(&self, ch: &KrausChannel, rho: &Mat2, basis: Basis) -> Result<[f64; 2]> {
        let out = ch.apply(rho);
        let [m0, m1] = self.elements_of(basis)?;
        let q = [(out * m0).trace().re, (out * m1).trace().re];
        let e = self.dark_count;
        let y = [
            (1.0 - 0.5 * e) * q[0] + e * q[1] + e * (1.0 - 0.5 * e),
            (1.0 - 0.5 * e) * q[1] + e * q[0] + e * (1.0 - 0.5 * e),
        ];
        if y.iter().any(|v| *v < -ALGEBRAIC_TOL) || y[0] + y[1] > 1.0 + ALGEBRAIC_TOL {
            return Err(validation(format!(
                "dark count {e} pushes the {basis}-basis click probabilities to {y:?}"
            )));
        }
        Ok([y[0].max(0.0), y[1].max(0.0)])
    }

    /// Effective detection operator `D_s` with `y_s = Tr(D_s rho)`.
    pub fn detection_operator(&self, ch: &KrausChannel, basis: Basis, outcome: u8) -> Result<Mat2> {
        let m = self.elements_of(basis)?;
        let s = outcome as usize & 1;
        let e = self.dark_count;
        Ok(ch.adjoint_apply(&m[s]) * C64::from(1.0 - 0.5 * e)
            + ch.adjoint_apply(&m[1 - s]) * C64::from(e)
            + Mat2::identity() * C64::from(e * (1.0 - 0.5 * e)))
    }
}

/// Random POVM over `bases`. The failure element is drawn first; each basis
/// then splits `R = I - M_f` as `R^1/2 W diag(u) W^dag R^1/2` and its
/// complement, with a random unitary `W` and `u` in `[0, 1]^2`.
pub fn random_povm(seed: u64, bases: &[Basis]) -> Result<BobPovm> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POVM_STREAM);
    let u = random_unitary(&mut rng);
    let f = [rng.random_range(0.0..0.6), rng.random_range(0.0..0.6)];
    let fail = diag_conjugate(&u, f);
    let root = diag_conjugate(&u, [(1.0 - f[0]).sqrt(), (1.0 - f[1]).sqrt()]);
    let mut elements = BTreeMap::new();
    for &b in bases {
        let w = random_unitary(&mut rng);
        let split = [rng.random::<f64>(), rng.random::<f64>()];
        let m0 = root * diag_conjugate(&w, split) * root;
        let m1 = root * diag_conjugate(&w, [1.0 - split[0], 1.0 - split[1]]) * root;
        elements.insert(b, [m0, m1]);
    }
    BobPovm::new(elements, fail)
}

/// Probabilities with which Bob picks each basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisChoice {
    probs: Vec<(Basis, f64)>,
}

impl BasisChoice {
    pub fn new(probs: Vec<(Basis, f64)>) -> Result<Self> {
        if probs.is_empty() {
            return Err(validation("basis choice is empty"));
        }
        for (i, (b, p)) in probs.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(validation(format!(
                    "probability of basis {b} must lie in (0, 1], got {p}"
                )));
            }
            if probs[..i].iter().any(|(o, _)| o == b) {
                return Err(validation(format!("basis {b} listed twice")));
            }
        }
        let total: f64 = probs.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(validation(format!(
                "basis probabilities sum to {total}, expected 1"
            )));
        }
        Ok(BasisChoice { probs })
    }

    pub fn uniform(bases: &[Basis]) -> Result<Self> {
        let p = 1.0 / bases.len() as f64;
        Self::new(bases.iter().map(|&b| (b, p)).collect())
    }

    pub fn get(&self, basis: Basis) -> Option<f64> {
        self.probs.iter().find(|(b, _)| *b == basis).map(|(_, p)| *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Basis, f64)> + '_ {
        self.probs.iter().copied()
    }

    pub fn bases(&self) -> impl Iterator<Item = Basis> + '_ {
        self.probs.iter().map(|(b, _)| *b)
    }
}

impl fmt::Display for BasisChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.probs.iter().map(|(b, p)| format!("{b}:{p}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl std::str::FromStr for BasisChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut probs = Vec::new();
        for part in s.split(',') {
            let (b, p) = part
                .split_once(':')
                .ok_or_else(|| validation(format!("expected BASIS:PROB, got '{part}'")))?;
            let basis = Basis::parse(b.trim()).ok_or_else(|| validation(format!("unknown basis '{b}'")))?;
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| validation(format!("bad basis probability '{p}'")))?;
            probs.push((basis, p));
        }
        Self::new(probs)
    }
}

/// Exact joint yields `P(j) P(b) Tr(A(rho_j) M_{s,b})` for every source and
/// basis, with dark counts applied.
pub fn exact_yields(
    sources: &SourceSet,
    ch: &KrausChannel,
    povm: &BobPovm,
    bases: &BasisChoice,
) -> Result<YieldTable> {
    let mut table = YieldTable::new(YieldMode::Joint);
    for src in sources.states() {
        let rho = src.state.density();
        for (basis, pb) in bases.iter() {
            let prior = src.prior * pb;
            table.set_prior(&src.label, basis, prior)?;
            let y = povm.click_probabilities(ch, &rho, basis)?;
            for (s, v) in y.into_iter().enumerate() {
                table.insert(&src.label, basis, s as u8, (prior * v).min(prior))?;
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Click {
    Zero,
    One,
    Fail,
}

impl Click {
    pub const ALL: [Click; 3] = [Click::Zero, Click::One, Click::Fail];

    pub fn as_str(self) -> &'static str {
        match self {
            Click::Zero => "0",
            Click::One => "1",
            Click::Fail => "f",
        }
    }

    pub fn parse(s: &str) -> Option<Click> {
        match s {
            "0" => Some(Click::Zero),
            "1" => Some(Click::One),
            "f" => Some(Click::Fail),
            _ => None,
        }
    }

    pub fn outcome(self) -> Option<u8> {
        match self {
            Click::Zero => Some(0),
            Click::One => Some(1),
            Click::Fail => None,
        }
    }
}

/// Outcome counts of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    counts: BTreeMap<(String, Basis, Click), u64>,
    n_pulses: u64,
    seed: u64,
    bases: BasisChoice,
}

impl TrialRecord {
    pub fn new(
        counts: BTreeMap<(String, Basis, Click), u64>,
        n_pulses: u64,
        seed: u64,
        bases: BasisChoice,
    ) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total != n_pulses {
            return Err(validation(format!(
                "counts sum to {total}, expected {n_pulses} pulses"
            )));
        }
        Ok(TrialRecord {
            counts,
            n_pulses,
            seed,
            bases,
        })
    }

    pub fn count(&self, label: &str, basis: Basis, click: Click) -> u64 {
        self.counts
            .get(&(label.to_string(), basis, click))
            .copied()
            .unwrap_or(0)
    }

    /// Pulses in which `label` was sent and `basis` measured.
    pub fn pulses(&self, label: &str, basis: Basis) -> u64 {
        Click::ALL.iter().map(|&c| self.count(label, basis, c)).sum()
    }

    pub fn counts(&self) -> impl Iterator<Item = (&str, Basis, Click, u64)> {
        self.counts.iter().map(|((l, b, c), n)| (l.as_str(), *b, *c, *n))
    }

    pub fn n_pulses(&self) -> u64 {
        self.n_pulses
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bases(&self) -> &BasisChoice {
        &self.bases
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# n_pulses={}", self.n_pulses)?;
        writeln!(w, "# bases={}", self.bases)?;
        writeln!(w, "label,basis,outcome,count")?;
        for ((label, basis, click), n) in &self.counts {
            writeln!(w, "{label},{basis},{},{n}", click.as_str())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut seed = None;
        let mut n_pulses = None;
        let mut bases = None;
        let mut counts = BTreeMap::new();
        let mut header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| validation(format!("reading counts: {e}")))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let v = v.trim();
                    let bad = || validation(format!("line {}: bad value for {k}", i + 1));
                    match k.trim() {
                        "seed" => seed = Some(v.parse().map_err(|_| bad())?),
                        "n_pulses" => n_pulses = Some(v.parse().map_err(|_| bad())?),
                        "bases" => bases = Some(v.parse()?),
                        _ => {}
                    }
                }
                continue;
            }
            if !header {
                if line != "label,basis,outcome,count" {
                    return Err(validation(format!(
                        "line {}: expected header label,basis,outcome,count",
                        i + 1
                    )));
                }
                header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(validation(format!(
                    "line {}: expected 4 fields, got {}",
                    i + 1,
                    f.len()
                )));
            }
            let basis = Basis::parse(f[1])
                .ok_or_else(|| validation(format!("line {}: bad basis '{}'", i + 1, f[1])))?;
            let click = Click::parse(f[2])
                .ok_or_else(|| validation(format!("line {}: bad outcome '{}'", i + 1, f[2])))?;
            let n: u64 = f[3]
                .parse()
                .map_err(|_| validation(format!("line {}: bad count '{}'", i + 1, f[3])))?;
            if counts.insert((f[0].to_string(), basis, click), n).is_some() {
                return Err(validation(format!("line {}: duplicate cell", i + 1)));
            }
        }
        let n_pulses = n_pulses.ok_or_else(|| validation("missing '# n_pulses=' line"))?;
        let seed = seed.ok_or_else(|| validation("missing '# seed=' line"))?;
        let bases = match bases {
            Some(b) => b,
            None => BasisChoice::uniform(&[Basis::X, Basis::Z])?,
        };
        Self::new(counts, n_pulses, seed, bases)
    }
}

/// Samples `n_pulses` i.i.d. rounds: Alice's label by prior, Bob's basis by
/// `bases`, then the outcome by its exact probability.
///
/// Pulses are processed in blocks of [`BLOCK_PULSES`]; block `b` draws from
/// its own ChaCha8 stream `b` under `seed`, so the record depends only on
/// `(seed, n_pulses)` and not on the thread count.
pub fn run_protocol(
    n_pulses: u64,
    sources: &SourceSet,
    ch: &KrausChannel,
    povm: &BobPovm,
    bases: &BasisChoice,
    seed: u64,
) -> Result<TrialRecord> {
    if n_pulses == 0 {
        return Err(validation("n_pulses must be at least 1"));
    }
    let basis_list: Vec<(Basis, f64)> = bases.iter().collect();
    let nb = basis_list.len();
    let label_cdf: Vec<f64> = sources
        .states()
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.prior;
            Some(*acc)
        })
        .collect();
    let basis_cdf: Vec<f64> = basis_list
        .iter()
        .scan(0.0, |acc, (_, p)| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut click_cdf = Vec::with_capacity(sources.len() * nb);
    for src in sources.states() {
        let rho = src.state.density();
        for &(b, _) in &basis_list {
            let y = povm.click_probabilities(ch, &rho, b)?;
            click_cdf.push([y[0], y[0] + y[1]]);
        }
    }
    let pick = |cdf: &[f64], u: f64| cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);

    let n_blocks = n_pulses.div_ceil(BLOCK_PULSES);
    let cells = sources.len() * nb * 3;
    let tally = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block);
            let len = BLOCK_PULSES.min(n_pulses - block * BLOCK_PULSES);
            let mut counts = vec![0u64; cells];
            for _ in 0..len {
                let j = pick(&label_cdf, rng.random());
                let b = pick(&basis_cdf, rng.random());
                let [c0, c1] = click_cdf[j * nb + b];
                let u: f64 = rng.random();
                let k = if u < c0 {
                    0
                } else if u < c1 {
                    1
                } else {
                    2
                };
                counts[(j * nb + b) * 3 + k] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let mut counts = BTreeMap::new();
    for (j, src) in sources.states().iter().enumerate() {
        for (b, &(basis, _)) in basis_list.iter().enumerate() {
            for (k, click) in Click::ALL.into_iter().enumerate() {
                counts.insert((src.label.clone(), basis, click), tally[(j * nb + b) * 3 + k]);
            }
        }
    }
    TrialRecord::new(counts, n_pulses, seed, bases.clone())
}

/// Phase error estimate from sampled data with its first-order standard
/// error.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEstimate {
    pub e_x: f64,
    pub std_err: f64,
    /// Joint virtual yields `[s][j]` before clamping.
    pub virtual_yields: [[f64; 2]; 2],
}

/// Joint yield table with empirical priors `n(label, basis) / n` and
/// frequencies `count / n`.
pub fn empirical_yields(t: &TrialRecord, sources: &SourceSet) -> Result<YieldTable> {
    let n = t.n_pulses() as f64;
    let mut table = YieldTable::new(YieldMode::Joint);
    for label in sources.labels() {
        for basis in t.bases().bases() {
            let m = t.pulses(label, basis);
            if m == 0 {
                continue;
            }
            table.set_prior(label, basis, m as f64 / n)?;
            for click in [Click::Zero, Click::One] {
                let c = t.count(label, basis, click) as f64;
                table.insert(label, basis, click.outcome().unwrap_or(0), c / n)?;
            }
        }
    }
    Ok(table)
}

/// Runs the estimator on sampled counts in `basis` (normally X). Negative
/// predicted virtual yields are clamped to zero before forming the ratio.
pub fn estimate_from_trial(t: &TrialRecord, sources: &SourceSet, basis: Basis) -> Result<TrialEstimate> {
    let trials: Vec<f64> = sources.labels().map(|l| t.pulses(l, basis) as f64).collect();
    if let Some(l) = sources
        .labels()
        .zip(&trials)
        .find(|(_, n)| **n == 0.0)
        .map(|(l, _)| l)
    {
        return Err(Error::UndefinedRate(format!(
            "no pulses of '{l}' measured in {basis}"
        )));
    }
    estimate_with_trials(&empirical_yields(t, sources)?, sources, basis, &trials)
}

/// Like [`estimate_from_trial`] for a yield table measured over `n_pulses`
/// rounds; each source contributes `n_pulses * prior(label, basis)` trials.
pub fn estimate_from_yields(
    table: &YieldTable,
    sources: &SourceSet,
    basis: Basis,
    n_pulses: u64,
) -> Result<TrialEstimate> {
    if n_pulses == 0 {
        return Err(validation("n_pulses must be at least 1"));
    }
    let mut trials = Vec::with_capacity(sources.len());
    for l in sources.labels() {
        let p = table
            .prior(l, basis)
            .ok_or_else(|| Error::MissingEntries(vec![format!("prior of ({l}, {basis})")]))?;
        trials.push(p * n_pulses as f64);
    }
    estimate_with_trials(table, sources, basis, &trials)
}

fn estimate_with_trials(
    table: &YieldTable,
    sources: &SourceSet,
    basis: Basis,
    trials: &[f64],
) -> Result<TrialEstimate> {
    // conditional click rates c[s][i] of source i
    let mut missing = Vec::new();
    let mut c = [vec![0.0; sources.len()], vec![0.0; sources.len()]];
    for (i, l) in sources.labels().enumerate() {
        for s in 0..2u8 {
            match table.conditional(l, basis, s) {
                Some(v) => c[s as usize][i] = v,
                None => missing.push(format!("({l}, {basis}, {s})")),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEntries(missing));
    }

    // Y[s][j] = sum_i g[j][i] c[s][i]
    let ensemble = estimator::z_pair_ensemble(sources, basis)?;
    let mut g = [vec![], vec![]];
    for (j, v) in ensemble.entries.iter().enumerate() {
        let w = estimator::interpolation_weights(sources, &v.state.bloch())?;
        g[j] = w.iter().map(|x| v.weight * x).collect();
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut y = [[0.0; 2]; 2];
    for s in 0..2 {
        for j in 0..2 {
            y[s][j] = dot(&g[j], &c[s]);
        }
    }
    let yc = y.map(|row| row.map(|v| v.max(0.0)));
    let num = yc[0][1] + yc[1][0];
    let den = yc[0][0] + yc[0][1] + yc[1][0] + yc[1][1];
    let e_x = error_ratio(num, den, "empirical phase error rate")?;

    // delta method: de/dc[s][i] = (dN - e dD) / D, with multinomial
    // covariance of (c[0][i], c[1][i]) over trials[i] rounds
    let mut var = 0.0;
    for (i, n) in trials.iter().enumerate() {
        let h: Vec<f64> = (0..2)
            .map(|s| {
                let dn = g[1 - s][i];
                let dd = g[0][i] + g[1][i];
                (dn - e_x * dd) / den
            })
            .collect();
        let m2 = h[0] * h[0] * c[0][i] + h[1] * h[1] * c[1][i];
        let m1 = h[0] * c[0][i] + h[1] * c[1][i];
        var += (m2 - m1 * m1) / n;
    }
    Ok(TrialEstimate {
        e_x,
        std_err: var.max(0.0).sqrt(),
        virtual_yields: y,
    })
}

/// Simulation inputs reproducing the analytic single-photon model: the
/// modulated source with effective error `3 delta / 2`, uniform loss at the
/// model transmittance, ideal X/Z detection and dark-count mixing.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub sources: SourceSet,
    pub channel: KrausChannel,
    pub povm: BobPovm,
    pub bases: BasisChoice,
}

pub fn model_setup(p: &ChannelParams) -> Result<ModelSetup> {
    p.validate()?;
    Ok(ModelSetup {
        sources: SourceSet::modulated_three_state(p.effective_delta())?,
        channel: KrausChannel::uniform_loss(channel::transmittance(p))?,
        povm: BobPovm::ideal(&[Basis::X, Basis::Z])?.with_dark_count(p.e_d)?,
        bases: BasisChoice::uniform(&[Basis::X, Basis::Z])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{QubitState, SourceSet};

    fn trace_yield(ch: &KrausChannel, povm: &BobPovm, rho: &Mat2, basis: Basis, s: u8) -> f64 {
        let out = ch.apply(rho);
        (out * povm.element(basis, s).unwrap()).trace().re
    }

    #[test]
    fn random_channels_are_deterministic_and_trace_non_increasing() {
        assert_eq!(random_channel(7), random_channel(7));
        assert_ne!(random_channel(7), random_channel(8));
        for seed in 0..1000 {
            let ch = random_channel(seed);
            assert!(
                min_eigenvalue(&ch.completeness_deficit()) >= -OPERATOR_TOL,
                "seed {seed}"
            );
            assert!((1..=4).contains(&ch.operators().len()));
        }
    }

    #[test]
    fn random_povms_share_the_failure_element() {
        for seed in 0..200 {
            let m = random_povm(seed, &[Basis::X, Basis::Z]).unwrap();
            for b in [Basis::X, Basis::Z] {
                let sum = m.element(b, 0).unwrap() + m.element(b, 1).unwrap() + m.fail();
                assert!((sum - Mat2::identity()).camax() < 1e-12);
            }
        }
    }

    #[test]
    fn kraus_validation_rejects_trace_increasing_maps() {
        let big = Mat2::identity() * C64::from(1.1);
        assert!(KrausChannel::new(vec![big]).is_err());
        assert!(KrausChannel::new(vec![]).is_err());
        assert!(KrausChannel::uniform_loss(1.5).is_err());
    }

    #[test]
    fn povm_validation() {
        let mut el = BTreeMap::new();
        el.insert(Basis::Z, [Basis::Z.projector(0), Basis::Z.projector(0)]);
        assert!(BobPovm::new(el, Mat2::zeros()).is_err());
        assert!(BobPovm::ideal(&[Basis::Z])
            .unwrap()
            .with_dark_count(-0.1)
            .is_err());
    }

    #[test]
    fn identity_channel_ideal_z_measurement() {
        let sources = SourceSet::ideal_three_state();
        let povm = BobPovm::ideal(&[Basis::X, Basis::Z]).unwrap();
        let bases = BasisChoice::uniform(&[Basis::X, Basis::Z]).unwrap();
        let t = exact_yields(&sources, &KrausChannel::identity(), &povm, &bases).unwrap();
        assert!((t.joint("0z", Basis::Z, 0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(t.joint("0z", Basis::Z, 1).unwrap(), 0.0);
        assert!((t.joint("0z", Basis::X, 0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn yields_plus_failure_weight_equal_prior() {
        let sources = SourceSet::ideal_four_state();
        let bases = BasisChoice::new(vec![(Basis::X, 0.3), (Basis::Z, 0.7)]).unwrap();
        for seed in 0..50 {
            let ch = random_channel(seed);
            let povm = random_povm(seed, &[Basis::X, Basis::Z]).unwrap();
            let t = exact_yields(&sources, &ch, &povm, &bases).unwrap();
            for src in sources.states() {
                let rho = src.state.density();
                let lost = (ch.completeness_deficit() * rho).trace().re;
                let failed = (ch.apply(&rho) * povm.fail()).trace().re;
                for (b, pb) in bases.iter() {
                    let prior = src.prior * pb;
                    let sum = t.joint(&src.label, b, 0).unwrap() + t.joint(&src.label, b, 1).unwrap();
                    assert!((sum + prior * (lost + failed) - prior).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn extra_loss_scales_every_outcome() {
        let rho = QubitState::basis(Basis::X, 1).density();
        for seed in 0..100 {
            let ch = random_channel(seed);
            let povm = random_povm(seed + 1000, &[Basis::X, Basis::Z]).unwrap();
            for l in [0.1, 0.5, 0.9] {
                let lossy = ch.with_extra_loss(l).unwrap();
                for s in 0..2 {
                    let a = trace_yield(&ch, &povm, &rho, Basis::Z, s);
                    let b = trace_yield(&lossy, &povm, &rho, Basis::Z, s);
                    assert!((b - (1.0 - l) * a).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn detection_operator_reproduces_click_probabilities() {
        let ch = random_channel(3);
        let povm = random_povm(3, &[Basis::X])
            .unwrap()
            .with_dark_count(0.01)
            .unwrap();
        let rho = QubitState::basis(Basis::Z, 0).density();
        let y = povm.click_probabilities(&ch, &rho, Basis::X).unwrap();
        for s in 0..2u8 {
            let d = povm.detection_operator(&ch, Basis::X, s).unwrap();
            assert!(((d * rho).trace().re - y[s as usize]).abs() < 1e-15);
        }
    }

    #[test]
    fn dark_counts_cannot_exceed_unit_probability() {
        let povm = BobPovm::ideal(&[Basis::Z]).unwrap().with_dark_count(0.1).unwrap();
        let rho = QubitState::basis(Basis::Z, 0).density();
        assert!(povm
            .click_probabilities(&KrausChannel::identity(), &rho, Basis::Z)
            .is_err());
    }

    #[test]
    fn protocol_is_deterministic_and_counts_every_pulse() {
        let sources = SourceSet::ideal_three_state();
        let ch = random_channel(1);
        let povm = random_povm(1, &[Basis::X, Basis::Z]).unwrap();
        let bases = BasisChoice::uniform(&[Basis::X, Basis::Z]).unwrap();
        let a = run_protocol(200_000, &sources, &ch, &povm, &bases, 5).unwrap();
        let b = run_protocol(200_000, &sources, &ch, &povm, &bases, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts().map(|c| c.3).sum::<u64>(), 200_000);
        let one = run_protocol(1, &sources, &ch, &povm, &bases, 5).unwrap();
        assert_eq!(one.counts().map(|c| c.3).sum::<u64>(), 1);
        assert!(run_protocol(0, &sources, &ch, &povm, &bases, 5).is_err());
    }

    #[test]
    fn trial_csv_roundtrip() {
        let sources = SourceSet::ideal_three_state();
        let bases = BasisChoice::new(vec![(Basis::X, 0.25), (Basis::Z, 0.75)]).unwrap();
        let povm = BobPovm::ideal(&[Basis::X, Basis::Z]).unwrap();
        let t = run_protocol(1000, &sources, &random_channel(2), &povm, &bases, 9).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TrialRecord::read_csv(buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn trial_record_rejects_inconsistent_totals() {
        let mut counts = BTreeMap::new();
        counts.insert(("0z".to_string(), Basis::Z, Click::Zero), 3);
        let bases = BasisChoice::uniform(&[Basis::Z]).unwrap();
        assert!(TrialRecord::new(counts, 4, 0, bases).is_err());
    }

    #[test]
    fn identity_channel_estimate_shrinks_to_zero() {
        let sources = SourceSet::ideal_three_state();
        let povm = BobPovm::ideal(&[Basis::X, Basis::Z]).unwrap();
        let bases = BasisChoice::uniform(&[Basis::X, Basis::Z]).unwrap();
        let ch = KrausChannel::identity();
        let mut last = f64::INFINITY;
        for n in [10_000u64, 1_000_000] {
            let t = run_protocol(n, &sources, &ch, &povm, &bases, 11).unwrap();
            let est = estimate_from_trial(&t, &sources, Basis::X).unwrap();
            assert!(est.e_x <= 3.0 * est.std_err + 1e-3, "{est:?}");
            assert!(est.std_err < last);
            last = est.std_err;
        }
    }

    #[test]
    fn general_path_matches_closed_form_on_ideal_sources() {
        let sources = SourceSet::ideal_three_state();
        let bases = BasisChoice::uniform(&[Basis::X, Basis::Z]).unwrap();
        for seed in 0..20 {
            let ch = random_channel(seed);
            let povm = random_povm(seed, &[Basis::X, Basis::Z]).unwrap();
            let table = exact_yields(&sources, &ch, &povm, &bases).unwrap();
            let closed = estimator::phase_error_three_state(&table);
            let general = estimate_from_yields(&table, &sources, Basis::X, 1000);
            if let (Ok(a), Ok(b)) = (closed, general) {
                assert!((a - b.e_x).abs() < 1e-12, "seed {seed}");
            }
        }
    }

    #[test]
    fn model_setup_reproduces_analytic_yields() {
        let p = ChannelParams::default().with_delta(0.126).with_distance(50.0);
        let m = model_setup(&p).unwrap();
        let virt = channel::conditional_virtual_yields(&p).unwrap();
        let ens = estimator::z_pair_ensemble(&m.sources, Basis::X).unwrap();
        for s in 0..2u8 {
            let d = m.povm.detection_operator(&m.channel, Basis::X, s).unwrap();
            for (j, v) in ens.entries.iter().enumerate() {
                let direct = (d * v.state.density()).trace().re;
                assert!((direct - virt[s as usize][j]).abs() < 1e-15, "{s} {j}");
            }
        }
    }
}
