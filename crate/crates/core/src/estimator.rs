//! Phase error estimation from the statistics of the states actually sent.
//!
//! Bob's detection events for outcome `s` in basis `b` are described by an
//! unknown positive operator `D_s`. Any qubit state is `(I + p . sigma)/2`, so
//! the conditional yield of a state is the linear form
//! `q_Id + p_x q_x + p_y q_y + p_z q_z` with `q_t = Tr(D_s sigma_t)/2`.
//! Measuring three planar (or four general) linearly independent states pins
//! down every `q_t`, which in turn gives the exact yield of any other state in
//! the same span, in particular the virtual states that define the phase
//! error rate. Loss rescales every `q_t` by the same factor and cancels in the
//! ratio.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{validation, Error, Result};
use crate::linalg;
use crate::qstate::{
    virtual_states_from_purification, Basis, BlochVector, QubitState, SourceSet, VirtualEnsemble,
    ALGEBRAIC_TOL,
};

/// Predicted yields below this are treated as evidence of unphysical data.
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YieldMode {
    /// `Y = P(j, b) Tr(D rho)`, the probability of the full event.
    Joint,
    /// `Y = Tr(D rho)`, conditioned on the preparation and Bob's basis.
    Conditional,
}

/// Detection probabilities indexed by `(alice label, bob basis, outcome)`.
///
/// The prior of `(label, basis)` is the probability that Alice prepares
/// `label` and Bob measures in `basis`; for the uniform three-state protocol
/// it is `1/3 * 1/2 = 1/6`. The inconclusive outcome is implicit:
/// `prior - sum_s joint(label, basis, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldTable {
    mode: YieldMode,
    cells: BTreeMap<(String, Basis, u8), f64>,
    priors: BTreeMap<(String, Basis), f64>,
}

impl YieldTable {
    pub fn new(mode: YieldMode) -> Self {
        YieldTable {
            mode,
            cells: BTreeMap::new(),
            priors: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> YieldMode {
        self.mode
    }

    pub fn set_prior(&mut self, label: &str, basis: Basis, prior: f64) -> Result<()> {
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(validation(format!(
                "prior of ({label}, {basis}) must lie in (0, 1], got {prior}"
            )));
        }
        self.priors.insert((label.to_string(), basis), prior);
        Ok(())
    }

    /// Inserts a probability; the `(label, basis)` prior must already be set.
    pub fn insert(&mut self, label: &str, basis: Basis, outcome: u8, value: f64) -> Result<()> {
        if outcome > 1 {
            return Err(validation(format!("outcome must be 0 or 1, got {outcome}")));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(validation(format!(
                "yield ({label}, {basis}, {outcome}) = {value} is not a probability"
            )));
        }
        let prior = self
            .prior(label, basis)
            .ok_or_else(|| validation(format!("no prior for ({label}, {basis})")))?;
        let cap = match self.mode {
            YieldMode::Joint => prior,
            YieldMode::Conditional => 1.0,
        };
        let other = self
            .cells
            .get(&(label.to_string(), basis, 1 - outcome))
            .copied()
            .unwrap_or(0.0);
        if value + other > cap * (1.0 + ALGEBRAIC_TOL) + ALGEBRAIC_TOL {
            return Err(validation(format!(
                "yields of ({label}, {basis}) sum to {} > {cap}",
                value + other
            )));
        }
        self.cells.insert((label.to_string(), basis, outcome), value);
        Ok(())
    }

    pub fn prior(&self, label: &str, basis: Basis) -> Option<f64> {
        self.priors.get(&(label.to_string(), basis)).copied()
    }

    pub fn get(&self, label: &str, basis: Basis, outcome: u8) -> Option<f64> {
        self.cells.get(&(label.to_string(), basis, outcome)).copied()
    }

    pub fn joint(&self, label: &str, basis: Basis, outcome: u8) -> Option<f64> {
        let v = self.get(label, basis, outcome)?;
        Some(match self.mode {
            YieldMode::Joint => v,
            YieldMode::Conditional => v * self.prior(label, basis)?,
        })
    }

    pub fn conditional(&self, label: &str, basis: Basis, outcome: u8) -> Option<f64> {
        let v = self.get(label, basis, outcome)?;
        Some(match self.mode {
            YieldMode::Joint => v / self.prior(label, basis)?,
            YieldMode::Conditional => v,
        })
    }

    fn converted(&self, mode: YieldMode) -> YieldTable {
        let cells = self
            .cells
            .keys()
            .map(|(l, b, s)| {
                let v = match mode {
                    YieldMode::Joint => self.joint(l, *b, *s),
                    YieldMode::Conditional => self.conditional(l, *b, *s),
                };
                ((l.clone(), *b, *s), v.expect("prior present for every cell"))
            })
            .collect();
        YieldTable {
            mode,
            cells,
            priors: self.priors.clone(),
        }
    }

    pub fn to_joint(&self) -> YieldTable {
        self.converted(YieldMode::Joint)
    }

    pub fn to_conditional(&self) -> YieldTable {
        self.converted(YieldMode::Conditional)
    }

    /// Multiplies every yield by `c`, as extra uniform loss would.
    pub fn scaled(&self, c: f64) -> YieldTable {
        let mut out = self.clone();
        for v in out.cells.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, Basis, u8, f64)> {
        self.cells.iter().map(|((l, b, s), v)| (l.as_str(), *b, *s, *v))
    }

    pub fn priors(&self) -> impl Iterator<Item = (&str, Basis, f64)> {
        self.priors.iter().map(|((l, b), p)| (l.as_str(), *b, *p))
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.priors.keys().map(|(l, _)| l.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseIssue {
    WrongCount,
    DuplicateStates,
    Degenerate,
}

/// Conditioning of the design matrix built from the prepared states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPosedness {
    pub condition_number: f64,
    pub well_posed: bool,
    pub issue: Option<PoseIssue>,
}

fn design_matrix(states: &[BlochVector]) -> DMatrix<f64> {
    let n = states.len();
    if n == 3 {
        DMatrix::from_fn(3, 3, |r, c| states[r].planar_components()[c])
    } else {
        DMatrix::from_fn(n, 4, |r, c| states[r].components()[c])
    }
}

/// Whether the Bloch vectors determine the planar (3 states) or full
/// (4 states) transmission functional.
pub fn check_well_posed(states: &[BlochVector]) -> WellPosedness {
    if !(states.len() == 3 || states.len() == 4) {
        return WellPosedness {
            condition_number: f64::INFINITY,
            well_posed: false,
            issue: Some(PoseIssue::WrongCount),
        };
    }
    let duplicate = states
        .iter()
        .enumerate()
        .any(|(i, a)| states[..i].iter().any(|b| a.max_abs_diff(b) <= ALGEBRAIC_TOL));
    let cond = linalg::conditioning(&design_matrix(states));
    let issue = if duplicate {
        Some(PoseIssue::DuplicateStates)
    } else if !cond.well_posed {
        Some(PoseIssue::Degenerate)
    } else {
        None
    };
    WellPosedness {
        condition_number: cond.condition_number,
        well_posed: issue.is_none(),
        issue,
    }
}

/// Transmission coefficients `q_t = Tr(D_s sigma_t)/2` of one detection
/// outcome. `q_y` is absent for planar functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionFunctional {
    pub basis: Basis,
    pub outcome: u8,
    pub q_id: f64,
    pub q_x: f64,
    pub q_y: Option<f64>,
    pub q_z: f64,
}

impl TransmissionFunctional {
    pub fn is_planar(&self) -> bool {
        self.q_y.is_none()
    }

    /// Conditional yield `Tr(D_s rho)` of the state with Bloch vector `b`.
    pub fn conditional_yield(&self, b: &BlochVector) -> Result<f64> {
        let y_term = match self.q_y {
            Some(q_y) => b.py * q_y,
            None if b.is_planar() => 0.0,
            None => {
                return Err(Error::Dimension(format!(
                    "planar functional applied to a state with p_y = {}",
                    b.py
                )))
            }
        };
        Ok(b.v0 * self.q_id + b.px * self.q_x + y_term + b.pz * self.q_z)
    }

    /// Smallest conditional yield over all pure states in the functional's
    /// domain (the X-Z plane for planar functionals).
    pub fn min_conditional_yield(&self) -> f64 {
        let q_y = self.q_y.unwrap_or(0.0);
        self.q_id - (self.q_x * self.q_x + q_y * q_y + self.q_z * self.q_z).sqrt()
    }

    /// Coefficients as `[q_Id, q_x, q_y, q_z]` with `q_y = 0` when planar.
    pub fn coefficients(&self) -> [f64; 4] {
        [self.q_id, self.q_x, self.q_y.unwrap_or(0.0), self.q_z]
    }
}

/// Solves `Y(j, b, s) = P(j, b) (q_Id + p^j . q)` without the physicality
/// check. Callers working with sampled frequencies use this and handle
/// negative predictions themselves.
pub fn solve_functional_unchecked(
    yields: &YieldTable,
    sources: &SourceSet,
    basis: Basis,
    outcome: u8,
) -> Result<TransmissionFunctional> {
    let blochs = sources.bloch_vectors();
    let pose = check_well_posed(&blochs);
    if !pose.well_posed {
        return Err(Error::IllPosed(format!(
            "source states do not determine the functional ({:?}, condition number {:.3e})",
            pose.issue, pose.condition_number
        )));
    }
    let planar = blochs.len() == 3;
    if planar {
        if let Some((s, b)) = sources.states().iter().zip(&blochs).find(|(_, b)| !b.is_planar()) {
            return Err(Error::Dimension(format!(
                "three-state estimation needs X-Z plane states; '{}' has p_y = {}",
                s.label, b.py
            )));
        }
    }

    let mut missing = Vec::new();
    let mut rhs = Vec::with_capacity(blochs.len());
    for s in sources.states() {
        match yields.conditional(&s.label, basis, outcome) {
            Some(v) => rhs.push(v),
            None => {
                missing.push(format!("({}, {}, {})", s.label, basis, outcome));
                rhs.push(0.0);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEntries(missing));
    }

    let q = linalg::solve(&design_matrix(&blochs), &DVector::from_vec(rhs))?;
    Ok(if planar {
        TransmissionFunctional {
            basis,
            outcome,
            q_id: q[0],
            q_x: q[1],
            q_y: None,
            q_z: q[2],
        }
    } else {
        TransmissionFunctional {
            basis,
            outcome,
            q_id: q[0],
            q_x: q[1],
            q_y: Some(q[2]),
            q_z: q[3],
        }
    })
}

/// Solves the transmission functional of `outcome` in `basis` from the
/// yields of three planar or four general source states.
pub fn solve_functional(
    yields: &YieldTable,
    sources: &SourceSet,
    basis: Basis,
    outcome: u8,
) -> Result<TransmissionFunctional> {
    let f = solve_functional_unchecked(yields, sources, basis, outcome)?;
    let min = f.min_conditional_yield();
    if min < -PHYSICALITY_TOL {
        return Err(Error::Inconsistent(format!(
            "solved functional for ({basis}, {outcome}) predicts a yield of {min:.3e} for some state"
        )));
    }
    Ok(f)
}

/// Weights `w` with `Tr(D target) = sum_i w_i Tr(D rho_i)` for every
/// operator `D`, where `rho_i` are the source states in order. This is the
/// linear map the estimator applies to conditional yields.
pub fn interpolation_weights(sources: &SourceSet, target: &BlochVector) -> Result<Vec<f64>> {
    let blochs = sources.bloch_vectors();
    let pose = check_well_posed(&blochs);
    if !pose.well_posed {
        return Err(Error::IllPosed(format!(
            "source states are degenerate ({:?})",
            pose.issue
        )));
    }
    let design = design_matrix(&blochs);
    let v = if blochs.len() == 3 {
        if !target.is_planar() || blochs.iter().any(|b| !b.is_planar()) {
            return Err(Error::Dimension(
                "three-state interpolation needs X-Z plane states".into(),
            ));
        }
        DVector::from_vec(target.planar_components().to_vec())
    } else {
        DVector::from_vec(target.components().to_vec())
    };
    // Tr(D target) = v . q and q = M^{-1} c, so the weights solve M^T w = v
    Ok(linalg::solve(&design.transpose(), &v)?.iter().cloned().collect())
}

/// Joint yield `prior * Tr(D rho)` of `state` under `f`.
pub fn predict_yield(f: &TransmissionFunctional, state: &QubitState, prior: f64) -> Result<f64> {
    Ok(prior * f.conditional_yield(&state.bloch())?)
}

/// `num / den` as an error rate: rejects empty denominators and clearly
/// negative ratios, then clamps rounding dust into `[0, 1]`.
pub(crate) fn error_ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::UndefinedRate(format!(
            "{what}: no detections (denominator {den})"
        )));
    }
    let e = num / den;
    if !(-PHYSICALITY_TOL..=1.0 + PHYSICALITY_TOL).contains(&e) {
        return Err(Error::Inconsistent(format!(
            "{what} evaluates to {e}, outside [0, 1]"
        )));
    }
    Ok(e.clamp(0.0, 1.0))
}

/// Closed-form phase error rate of the ideal three-state protocol
/// (`|0z>, |1z>, |0x>` sent, Bob's X-basis outcomes):
///
/// `e_x = (Y(0|0z) + Y(0|1z) + Y(1|0x) - Y(0|0x)) / (Y(0|0z) + Y(0|1z) + Y(1|0z) + Y(1|1z))`
///
/// with joint yields. The three X-basis priors must be equal.
pub fn phase_error_three_state(yields: &YieldTable) -> Result<f64> {
    let labels = ["0z", "1z", "0x"];
    let mut missing = Vec::new();
    let mut get = |label: &str, s: u8| {
        yields.joint(label, Basis::X, s).unwrap_or_else(|| {
            missing.push(format!("({label}, X, {s})"));
            0.0
        })
    };
    let y00z = get("0z", 0);
    let y01z = get("1z", 0);
    let y10z = get("0z", 1);
    let y11z = get("1z", 1);
    let y00x = get("0x", 0);
    let y10x = get("0x", 1);
    if !missing.is_empty() {
        return Err(Error::MissingEntries(missing));
    }
    let priors: Vec<f64> = labels
        .iter()
        .map(|l| yields.prior(l, Basis::X).unwrap_or(f64::NAN))
        .collect();
    if priors.iter().any(|p| (p - priors[0]).abs() > ALGEBRAIC_TOL) {
        return Err(validation(format!(
            "closed-form three-state rate needs equal X-basis priors, got {priors:?}"
        )));
    }
    error_ratio(
        y00z + y01z + y10x - y00x,
        y00z + y01z + y10z + y11z,
        "three-state phase error rate",
    )
}

/// Joint yields `Y[s][j] = P(j) Tr(D_s sigma_j)` of the virtual states.
pub fn virtual_yields(
    f0: &TransmissionFunctional,
    f1: &TransmissionFunctional,
    ensemble: &VirtualEnsemble,
) -> Result<[[f64; 2]; 2]> {
    if f0.outcome != 0 || f1.outcome != 1 {
        return Err(validation(
            "functionals must be given for outcomes 0 and 1, in that order",
        ));
    }
    if f0.basis != ensemble.basis || f1.basis != ensemble.basis {
        return Err(validation(format!(
            "functionals measure in {}/{} but the virtual ensemble is in {}",
            f0.basis, f1.basis, ensemble.basis
        )));
    }
    let mut y = [[0.0; 2]; 2];
    for (s, f) in [f0, f1].into_iter().enumerate() {
        for (j, v) in ensemble.entries.iter().enumerate() {
            y[s][j] = predict_yield(f, &v.state, v.weight)?;
        }
    }
    Ok(y)
}

/// Bit error rate between Alice's virtual bit and Bob's outcome.
pub fn phase_error_from_virtual_yields(y: &[[f64; 2]; 2]) -> Result<f64> {
    for row in y {
        for &v in row {
            if v < -PHYSICALITY_TOL {
                return Err(Error::Inconsistent(format!("negative virtual yield {v:.3e}")));
            }
        }
    }
    error_ratio(
        y[0][1] + y[1][0],
        y[0][0] + y[0][1] + y[1][0] + y[1][1],
        "virtual phase error rate",
    )
}

/// Phase error rate of a virtual ensemble under solved functionals.
pub fn phase_error_virtual(
    f0: &TransmissionFunctional,
    f1: &TransmissionFunctional,
    ensemble: &VirtualEnsemble,
) -> Result<f64> {
    phase_error_from_virtual_yields(&virtual_yields(f0, f1, ensemble)?)
}

/// Everything the general estimation path produces.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseErrorEstimate {
    pub functionals: [TransmissionFunctional; 2],
    pub ensemble: VirtualEnsemble,
    pub virtual_yields: [[f64; 2]; 2],
    pub error_rate: f64,
    pub condition_number: f64,
}

/// General path: solve both functionals in `basis`, build the virtual
/// ensemble from the `0z`/`1z` sources measured in `basis`, and evaluate the
/// error rate.
pub fn estimate_phase_error(
    yields: &YieldTable,
    sources: &SourceSet,
    basis: Basis,
) -> Result<PhaseErrorEstimate> {
    let f0 = solve_functional(yields, sources, basis, 0)?;
    let f1 = solve_functional(yields, sources, basis, 1)?;
    let ensemble = z_pair_ensemble(sources, basis)?;
    let virtual_yields = virtual_yields(&f0, &f1, &ensemble)?;
    let error_rate = phase_error_from_virtual_yields(&virtual_yields)?;
    Ok(PhaseErrorEstimate {
        functionals: [f0, f1],
        ensemble,
        virtual_yields,
        error_rate,
        condition_number: check_well_posed(&sources.bloch_vectors()).condition_number,
    })
}

/// Virtual ensemble of the source's `0z`/`1z` pair in `basis`.
pub fn z_pair_ensemble(sources: &SourceSet, basis: Basis) -> Result<VirtualEnsemble> {
    let zero = sources
        .get("0z")
        .ok_or_else(|| Error::MissingEntries(vec!["source 0z".into()]))?;
    let one = sources
        .get("1z")
        .ok_or_else(|| Error::MissingEntries(vec!["source 1z".into()]))?;
    virtual_states_from_purification(&zero.state, &one.state, false, basis)
}

// --- measurement-device-independent variant ---------------------------------

/// Index of a planar Pauli label in `[Id, x, z]`.
pub const MDI_PAULIS: [&str; 3] = ["Id", "x", "z"];

/// Two-qubit coefficients `q[s][t] = Tr(D sigma_s (x) sigma_t)/4` over
/// `s, t` in `[Id, x, z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitFunctional {
    pub q: [[f64; 3]; 3],
}

impl TwoQubitFunctional {
    /// `Tr(D rho_a (x) rho_b)` for planar states.
    pub fn conditional_yield(&self, a: &BlochVector, b: &BlochVector) -> Result<f64> {
        if !a.is_planar() || !b.is_planar() {
            return Err(Error::Dimension(
                "mdi functional applied to a non-planar state".into(),
            ));
        }
        let va = a.planar_components();
        let vb = b.planar_components();
        Ok(self
            .q
            .iter()
            .zip(va)
            .map(|(row, a)| a * row.iter().zip(vb).map(|(q, b)| q * b).sum::<f64>())
            .sum())
    }
}

/// Announced-success probabilities keyed by `(alice label, bob label)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MdiYieldTable {
    cells: BTreeMap<(String, String), f64>,
}

impl MdiYieldTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alice: &str, bob: &str, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(validation(format!(
                "mdi yield ({alice}, {bob}) = {value} is not a probability"
            )));
        }
        self.cells.insert((alice.to_string(), bob.to_string()), value);
        Ok(())
    }

    pub fn get(&self, alice: &str, bob: &str) -> Option<f64> {
        self.cells.get(&(alice.to_string(), bob.to_string())).copied()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.cells.iter().map(|((a, b), v)| (a.as_str(), b.as_str(), *v))
    }
}

fn is_key_label(label: &str) -> bool {
    label == "0z" || label == "1z"
}

/// Selection probability of a state pair: `gamma/9` when both parties send a
/// Z-basis state (the sacrificed test fraction), `1/9` otherwise.
pub fn mdi_prefactor(alice: &str, bob: &str, gamma: f64) -> f64 {
    if is_key_label(alice) && is_key_label(bob) {
        gamma / 9.0
    } else {
        1.0 / 9.0
    }
}

fn planar_design(sources: &SourceSet, party: &str) -> Result<DMatrix<f64>> {
    let blochs = sources.bloch_vectors();
    if blochs.len() != 3 {
        return Err(Error::IllPosed(format!(
            "{party} must send exactly three states, got {}",
            blochs.len()
        )));
    }
    if let Some(b) = blochs.iter().find(|b| !b.is_planar()) {
        return Err(Error::Dimension(format!(
            "{party} sends a state off the X-Z plane (p_y = {})",
            b.py
        )));
    }
    let pose = check_well_posed(&blochs);
    if !pose.well_posed {
        return Err(Error::IllPosed(format!(
            "{party}'s states are degenerate ({:?}, condition number {:.3e})",
            pose.issue, pose.condition_number
        )));
    }
    Ok(design_matrix(&blochs))
}

/// Solves the 9x9 system relating the announced `phi+` yields of all state
/// pairs to the two-qubit functional.
pub fn mdi_solve(
    yields: &MdiYieldTable,
    alice: &SourceSet,
    bob: &SourceSet,
    gamma: f64,
) -> Result<TwoQubitFunctional> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(validation(format!(
            "test fraction gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let va = planar_design(alice, "alice")?;
    let vb = planar_design(bob, "bob")?;
    let design = va.kronecker(&vb);

    let mut rhs = Vec::with_capacity(9);
    let mut missing = Vec::new();
    for a in alice.labels() {
        for b in bob.labels() {
            match yields.get(a, b) {
                Some(y) => rhs.push(y / mdi_prefactor(a, b, gamma)),
                None => {
                    missing.push(format!("({a}, {b})"));
                    rhs.push(0.0);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingEntries(missing));
    }
    let sol = linalg::solve(&design, &DVector::from_vec(rhs))?;
    let mut q = [[0.0; 3]; 3];
    for s in 0..3 {
        for t in 0..3 {
            q[s][t] = sol[3 * s + t];
        }
    }
    if q[0][0] < -PHYSICALITY_TOL {
        return Err(Error::Inconsistent(format!(
            "solved q(Id, Id) = {:.3e} is negative",
            q[0][0]
        )));
    }
    Ok(TwoQubitFunctional { q })
}

/// `Y[j][k] = P_a(j) P_b(k) Tr(D sigma_j (x) sigma_k)` over the virtual states.
pub fn mdi_virtual_yields(
    f: &TwoQubitFunctional,
    alice: &VirtualEnsemble,
    bob: &VirtualEnsemble,
) -> Result<[[f64; 2]; 2]> {
    let mut y = [[0.0; 2]; 2];
    for (j, a) in alice.entries.iter().enumerate() {
        for (k, b) in bob.entries.iter().enumerate() {
            y[j][k] = a.weight * b.weight * f.conditional_yield(&a.state.bloch(), &b.state.bloch())?;
        }
    }
    Ok(y)
}

/// `e_x = (Y(0x,1x) + Y(1x,0x)) / sum_{j,k} Y(jx,kx)`.
pub fn mdi_phase_error(
    f: &TwoQubitFunctional,
    alice: &VirtualEnsemble,
    bob: &VirtualEnsemble,
) -> Result<f64> {
    if alice.basis != Basis::X || bob.basis != Basis::X {
        return Err(validation("mdi phase error needs X-basis virtual ensembles"));
    }
    let y = mdi_virtual_yields(f, alice, bob)?;
    if y.iter().flatten().any(|&v| v < -PHYSICALITY_TOL) {
        return Err(Error::Inconsistent("negative virtual mdi yield".into()));
    }
    error_ratio(
        y[0][1] + y[1][0],
        y[0][0] + y[0][1] + y[1][0] + y[1][1],
        "mdi phase error rate",
    )
}

/// Convenience for tests and examples: `true` when every component of the
/// two functionals agrees to `tol`.
pub fn functionals_close(a: &TransmissionFunctional, b: &TransmissionFunctional, tol: f64) -> bool {
    a.coefficients()
        .iter()
        .zip(b.coefficients())
        .all(|(x, y)| (x - y).abs() <= tol)
        && a.is_planar() == b.is_planar()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{encode_single_photon, modulation_coefficients, virtual_states_planar, Mat2, Pauli};
    use std::f64::consts::PI;

    fn z(bit: u8) -> BlochVector {
        QubitState::basis(Basis::Z, bit).bloch()
    }

    /// Joint yields of `sources` for a known detection operator, by trace.
    fn table_from_operator(
        sources: &SourceSet,
        basis: Basis,
        d: &[Mat2; 2],
        bob_basis_prob: f64,
    ) -> YieldTable {
        let mut t = YieldTable::new(YieldMode::Joint);
        for s in sources.states() {
            let w = s.prior * bob_basis_prob;
            t.set_prior(&s.label, basis, w).unwrap();
            for outcome in 0..2u8 {
                let y = w * crate::qstate::trace_product(&d[outcome as usize], &s.state.density());
                t.insert(&s.label, basis, outcome, y).unwrap();
            }
        }
        t
    }

    fn ideal_x() -> [Mat2; 2] {
        [Basis::X.projector(0), Basis::X.projector(1)]
    }

    #[test]
    fn well_posedness_examples() {
        let x0 = QubitState::basis(Basis::X, 0).bloch();
        assert!(check_well_posed(&[z(0), z(1), x0]).well_posed);
        let mid = BlochVector::new(0.0, 0.0, 0.3);
        let p = check_well_posed(&[z(0), z(1), mid]);
        assert!(!p.well_posed);
        assert_eq!(p.issue, Some(PoseIssue::Degenerate));
        let y0 = QubitState::basis(Basis::Y, 0).bloch();
        assert!(check_well_posed(&[z(0), z(1), x0, y0]).well_posed);
        let dup = check_well_posed(&[z(0), z(0), x0]);
        assert_eq!(dup.issue, Some(PoseIssue::DuplicateStates));
        assert_eq!(check_well_posed(&[z(0), z(1)]).issue, Some(PoseIssue::WrongCount));
    }

    #[test]
    fn state_independent_outcome() {
        for sources in [SourceSet::ideal_three_state(), SourceSet::ideal_four_state()] {
            let mut t = YieldTable::new(YieldMode::Joint);
            for s in sources.states() {
                t.set_prior(&s.label, Basis::X, 1.0 / 6.0).unwrap();
                t.insert(&s.label, Basis::X, 0, 1.0 / 12.0).unwrap();
            }
            let f = solve_functional(&t, &sources, Basis::X, 0).unwrap();
            assert!((f.q_id - 0.5).abs() < 1e-15);
            assert!(f.q_x.abs() < 1e-15 && f.q_z.abs() < 1e-15);
            assert!(f.q_y.unwrap_or(0.0).abs() < 1e-15);
            let pred = predict_yield(&f, &QubitState::basis(Basis::Z, 1), 1.0 / 6.0).unwrap();
            assert!((pred - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_channel_three_state() {
        let sources = SourceSet::ideal_three_state();
        let t = table_from_operator(&sources, Basis::X, &ideal_x(), 0.5);
        assert!((t.joint("0z", Basis::X, 0).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((t.joint("0x", Basis::X, 0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let f0 = solve_functional(&t, &sources, Basis::X, 0).unwrap();
        assert!((f0.q_id - 0.5).abs() < 1e-15 && (f0.q_x - 0.5).abs() < 1e-15 && f0.q_z.abs() < 1e-15);
        let p = predict_yield(&f0, &QubitState::basis(Basis::X, 1), 1.0 / 6.0).unwrap();
        assert!(p.abs() < 1e-15);
        assert_eq!(phase_error_three_state(&t).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_relation_for_the_unsent_state() {
        // Y(s|1x) = Y(s|0z) + Y(s|1z) - Y(s|0x) with uniform priors
        let sources = SourceSet::ideal_three_state();
        let d = [
            Mat2::new(
                crate::qstate::C64::new(0.3, 0.0),
                crate::qstate::C64::new(0.05, 0.02),
                crate::qstate::C64::new(0.05, -0.02),
                crate::qstate::C64::new(0.2, 0.0),
            ),
            Basis::X.projector(1).scale(0.4),
        ];
        let t = table_from_operator(&sources, Basis::X, &d, 0.5);
        for s in 0..2u8 {
            let f = solve_functional(&t, &sources, Basis::X, s).unwrap();
            let pred = predict_yield(&f, &QubitState::basis(Basis::X, 1), 1.0 / 6.0).unwrap();
            let closed = t.joint("0z", Basis::X, s).unwrap() + t.joint("1z", Basis::X, s).unwrap()
                - t.joint("0x", Basis::X, s).unwrap();
            assert!((pred - closed).abs() < 1e-15);
        }
    }

    #[test]
    fn depolarized_table_gives_half() {
        let mut t = YieldTable::new(YieldMode::Conditional);
        for l in ["0z", "1z", "0x"] {
            t.set_prior(l, Basis::X, 1.0 / 6.0).unwrap();
            t.insert(l, Basis::X, 0, 0.5).unwrap();
            t.insert(l, Basis::X, 1, 0.5).unwrap();
        }
        assert!((phase_error_three_state(&t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_and_undefined() {
        let mut t = YieldTable::new(YieldMode::Joint);
        t.set_prior("0z", Basis::X, 1.0 / 6.0).unwrap();
        t.insert("0z", Basis::X, 0, 0.0).unwrap();
        match phase_error_three_state(&t) {
            Err(Error::MissingEntries(m)) => assert_eq!(m.len(), 5),
            other => panic!("{other:?}"),
        }
        let sources = SourceSet::ideal_three_state();
        let zero = table_from_operator(&sources, Basis::X, &[Mat2::zeros(), Mat2::zeros()], 0.5);
        assert!(matches!(
            phase_error_three_state(&zero),
            Err(Error::UndefinedRate(_))
        ));
    }

    #[test]
    fn unphysical_table_is_rejected() {
        let mut t = YieldTable::new(YieldMode::Conditional);
        for (l, v) in [("0z", 0.0), ("1z", 0.0), ("0x", 0.9)] {
            t.set_prior(l, Basis::X, 1.0 / 6.0).unwrap();
            t.insert(l, Basis::X, 0, v).unwrap();
        }
        let sources = SourceSet::ideal_three_state();
        assert!(matches!(
            solve_functional(&t, &sources, Basis::X, 0),
            Err(Error::Inconsistent(_))
        ));
        assert!(solve_functional_unchecked(&t, &sources, Basis::X, 0).is_ok());
    }

    #[test]
    fn degenerate_sources_are_ill_posed() {
        let sources = SourceSet::uniform(vec![
            ("0z", QubitState::basis(Basis::Z, 0)),
            ("1z", QubitState::basis(Basis::Z, 1)),
            (
                "m",
                QubitState::from_bloch(&BlochVector::new(0.0, 0.0, 0.2)).unwrap(),
            ),
        ])
        .unwrap();
        let t = table_from_operator(&sources, Basis::X, &ideal_x(), 0.5);
        assert!(matches!(
            solve_functional(&t, &sources, Basis::X, 0),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn planar_functional_rejects_off_plane_state() {
        let f = TransmissionFunctional {
            basis: Basis::X,
            outcome: 0,
            q_id: 0.5,
            q_x: 0.0,
            q_y: None,
            q_z: 0.0,
        };
        let pred = predict_yield(&f, &QubitState::basis(Basis::Z, 0), 1.0 / 6.0).unwrap();
        assert!((pred - 1.0 / 12.0).abs() < 1e-15);
        assert!(matches!(
            predict_yield(&f, &QubitState::basis(Basis::Y, 0), 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn joint_conditional_conversion_is_exact() {
        let sources = SourceSet::ideal_three_state();
        let t = table_from_operator(&sources, Basis::X, &ideal_x(), 0.5);
        let back = t.to_conditional().to_joint();
        for (l, b, s, v) in t.cells() {
            assert!((back.joint(l, b, s).unwrap() - v).abs() < 1e-16);
        }
        assert!((t.conditional("0x", Basis::X, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn modulated_source_virtual_rate_is_loss_independent() {
        // ideal X measurement on the modulated pair: e_x = [C10^2 + C01^2] / 2
        let delta = 0.126;
        let sources = SourceSet::modulated_three_state(delta).unwrap();
        let c = modulation_coefficients(delta);
        let want = 0.5 * (c[1][0].powi(2) + c[0][1].powi(2));
        for loss in [0.0, 0.5, 0.99] {
            let d = ideal_x().map(|m| m.scale(1.0 - loss));
            let t = table_from_operator(&sources, Basis::X, &d, 0.5);
            let est = estimate_phase_error(&t, &sources, Basis::X).unwrap();
            assert!(
                (est.error_rate - want).abs() < 1e-12,
                "{} vs {want}",
                est.error_rate
            );
            let planar = virtual_states_planar(delta).unwrap();
            let again = phase_error_virtual(&est.functionals[0], &est.functionals[1], &planar).unwrap();
            assert!((again - want).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_source_virtual_rate_is_zero() {
        let ens = virtual_states_planar(0.0).unwrap();
        let sources = SourceSet::ideal_three_state();
        let t = table_from_operator(&sources, Basis::X, &ideal_x(), 0.5);
        let f0 = solve_functional(&t, &sources, Basis::X, 0).unwrap();
        let f1 = solve_functional(&t, &sources, Basis::X, 1).unwrap();
        assert_eq!(phase_error_virtual(&f0, &f1, &ens).unwrap(), 0.0);
        assert!(phase_error_virtual(&f1, &f0, &ens).is_err());
    }

    #[test]
    fn mdi_state_independent_charles() {
        let sources = SourceSet::ideal_three_state();
        let gamma = 0.3;
        let mut t = MdiYieldTable::new();
        for a in sources.labels() {
            for b in sources.labels() {
                t.insert(a, b, 0.2 * mdi_prefactor(a, b, gamma)).unwrap();
            }
        }
        let f = mdi_solve(&t, &sources, &sources, gamma).unwrap();
        for s in 0..3 {
            for u in 0..3 {
                let want = if s == 0 && u == 0 { 0.2 } else { 0.0 };
                assert!((f.q[s][u] - want).abs() < 1e-14);
            }
        }
        let ens = virtual_states_planar(0.0).unwrap();
        assert!((mdi_phase_error(&f, &ens, &ens).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn mdi_rejects_bad_gamma_and_degenerate_sources() {
        let sources = SourceSet::ideal_three_state();
        let t = MdiYieldTable::new();
        assert!(matches!(
            mdi_solve(&t, &sources, &sources, 1.0),
            Err(Error::Validation(_))
        ));
        let bad = SourceSet::uniform(vec![
            ("0z", QubitState::basis(Basis::Z, 0)),
            ("1z", QubitState::basis(Basis::Z, 1)),
            (
                "0x",
                QubitState::from_bloch(&BlochVector::new(0.0, 0.0, 0.0)).unwrap(),
            ),
        ])
        .unwrap();
        assert!(matches!(
            mdi_solve(&t, &bad, &sources, 0.5),
            Err(Error::IllPosed(_))
        ));
        assert!(matches!(
            mdi_solve(&t, &sources, &sources, 0.5),
            Err(Error::MissingEntries(_))
        ));
    }

    #[test]
    fn pauli_coefficients_of_a_known_operator() {
        // D = 0.3 I + 0.1 X - 0.2 Z gives q = (0.3, 0.1, 0, -0.2)
        let d = Pauli::Id.matrix().scale(0.3) + Pauli::X.matrix().scale(0.1) - Pauli::Z.matrix().scale(0.2);
        let sources = SourceSet::uniform(vec![
            ("0z", encode_single_photon(0.0, 0.1).unwrap()),
            ("1z", encode_single_photon(PI, 0.1).unwrap()),
            ("1x", encode_single_photon(0.5 * PI, 0.1).unwrap()),
        ])
        .unwrap();
        let t = table_from_operator(&sources, Basis::X, &[d, Mat2::zeros()], 0.5);
        let f = solve_functional(&t, &sources, Basis::X, 0).unwrap();
        assert!((f.q_id - 0.3).abs() < 1e-14 && (f.q_x - 0.1).abs() < 1e-14 && (f.q_z + 0.2).abs() < 1e-14);
    }
}
