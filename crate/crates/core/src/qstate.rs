//! Qubit states, Pauli/Bloch algebra, phase-encoded source states and
//! virtual-state ensembles.
//!
//! All states are expressed in a fixed Z basis `{|0z>, |1z>}`. Pure-state
//! amplitudes are stored with the global phase fixed so that the `|0z>`
//! coefficient is real and non-negative (and the `|1z>` coefficient real and
//! positive when the `|0z>` coefficient vanishes).

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use nalgebra::{Complex, Matrix2};

use crate::error::{validation, Error, Result};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;

/// Tolerance for algebraic identities (trace, hermiticity, norms).
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for chained numerical constructions.
pub const NUMERICAL_TOL: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    /// Amplitudes of `|bit_basis>` in the Z basis.
    pub fn ket(self, bit: u8) -> [C64; 2] {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        match (self, bit & 1) {
            (Basis::Z, 0) => [ONE, ZERO],
            (Basis::Z, _) => [ZERO, ONE],
            (Basis::X, 0) => [h, h],
            (Basis::X, _) => [h, -h],
            (Basis::Y, 0) => [h, I * h],
            (Basis::Y, _) => [h, -I * h],
        }
    }

    /// Projector onto `|bit_basis>`.
    pub fn projector(self, bit: u8) -> Mat2 {
        outer(&self.ket(bit))
    }

    pub fn pauli(self) -> Pauli {
        match self {
            Basis::X => Pauli::X,
            Basis::Y => Pauli::Y,
            Basis::Z => Pauli::Z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Basis::X => "X",
            Basis::Y => "Y",
            Basis::Z => "Z",
        }
    }

    pub fn parse(s: &str) -> Option<Basis> {
        match s.trim() {
            "X" | "x" => Some(Basis::X),
            "Y" | "y" => Some(Basis::Y),
            "Z" | "z" => Some(Basis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    Id,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::Id, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::Id => Mat2::new(ONE, ZERO, ZERO, ONE),
            Pauli::X => Mat2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Mat2::new(ZERO, -I, I, ZERO),
            Pauli::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
        }
    }
}

/// `|v><v|` for a two-component amplitude vector.
pub fn outer(v: &[C64; 2]) -> Mat2 {
    Mat2::new(
        v[0] * v[0].conj(),
        v[0] * v[1].conj(),
        v[1] * v[0].conj(),
        v[1] * v[1].conj(),
    )
}

/// Real part of `Tr(a b)`.
pub fn trace_product(a: &Mat2, b: &Mat2) -> f64 {
    (a * b).trace().re
}

/// Eigenvalues of a Hermitian 2x2 matrix, descending.
pub(crate) fn hermitian_eigenvalues(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    [mean + radius, mean - radius]
}

pub(crate) fn hermiticity_defect(m: &Mat2) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rotates the global phase so the `|0z>` amplitude is real and non-negative.
fn canonical_phase(a: [C64; 2]) -> [C64; 2] {
    let pivot = if a[0].norm() > ALGEBRAIC_TOL { a[0] } else { a[1] };
    let n = pivot.norm();
    if n == 0.0 {
        return a;
    }
    let phase = pivot.conj() / n;
    let mut out = [a[0] * phase, a[1] * phase];
    if a[0].norm() > ALGEBRAIC_TOL {
        out[0] = C64::new(out[0].re, 0.0);
    } else {
        out[1] = C64::new(out[1].re, 0.0);
    }
    out
}

/// A single-qubit state, pure or mixed.
#[derive(Debug, Clone, PartialEq)]
pub enum QubitState {
    Pure([C64; 2]),
    Mixed(Mat2),
}

impl QubitState {
    /// Validated pure state; the global phase is canonicalized.
    pub fn pure(a0: C64, a1: C64) -> Result<Self> {
        if !(a0.re.is_finite() && a0.im.is_finite() && a1.re.is_finite() && a1.im.is_finite()) {
            return Err(validation("non-finite amplitude"));
        }
        let norm = a0.norm_sqr() + a1.norm_sqr();
        if (norm - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(validation(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        Ok(QubitState::Pure(canonical_phase([a0, a1])))
    }

    /// Pure state from real amplitudes.
    pub fn real(a0: f64, a1: f64) -> Result<Self> {
        Self::pure(C64::new(a0, 0.0), C64::new(a1, 0.0))
    }

    /// Normalizes an arbitrary non-zero amplitude vector.
    pub fn normalized(a0: C64, a1: C64) -> Result<Self> {
        let n = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(validation("cannot normalize a zero or non-finite vector"));
        }
        Ok(QubitState::Pure(canonical_phase([a0 / n, a1 / n])))
    }

    /// Validated density matrix: unit trace, Hermitian, eigenvalues in [0, 1].
    pub fn from_density(rho: Mat2) -> Result<Self> {
        if rho.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(validation("non-finite density matrix entry"));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > ALGEBRAIC_TOL || tr.im.abs() > ALGEBRAIC_TOL {
            return Err(validation(format!("density matrix trace is {tr}, expected 1")));
        }
        let defect = hermiticity_defect(&rho);
        if defect > ALGEBRAIC_TOL {
            return Err(validation(format!(
                "density matrix is not Hermitian (defect {defect:.3e})"
            )));
        }
        let [hi, lo] = hermitian_eigenvalues(&rho);
        if lo < -ALGEBRAIC_TOL || hi > 1.0 + ALGEBRAIC_TOL {
            return Err(validation(format!(
                "density matrix eigenvalues ({hi}, {lo}) outside [0, 1]"
            )));
        }
        Ok(QubitState::Mixed(rho))
    }

    /// The state with Bloch vector `b`.
    pub fn from_bloch(b: &BlochVector) -> Result<Self> {
        Self::from_density(b.to_density())
    }

    /// `|bit_basis>`.
    pub fn basis(basis: Basis, bit: u8) -> Self {
        QubitState::Pure(canonical_phase(basis.ket(bit)))
    }

    pub fn density(&self) -> Mat2 {
        match self {
            QubitState::Pure(a) => outer(a),
            QubitState::Mixed(m) => *m,
        }
    }

    pub fn amplitudes(&self) -> Option<[C64; 2]> {
        match self {
            QubitState::Pure(a) => Some(*a),
            QubitState::Mixed(_) => None,
        }
    }

    pub fn bloch(&self) -> BlochVector {
        pauli_decompose(self)
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        let b = self.bloch();
        0.5 * (1.0 + b.px * b.px + b.py * b.py + b.pz * b.pz)
    }

    /// Largest elementwise deviation between the density matrices of two
    /// states; zero iff they agree up to global phase.
    pub fn distance(&self, other: &QubitState) -> f64 {
        (self.density() - other.density())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Pauli expansion `rho = (v0 I + px X + py Y + pz Z) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub v0: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl BlochVector {
    /// Bloch vector of a normalized state (`v0 = 1`).
    pub fn new(px: f64, py: f64, pz: f64) -> Self {
        BlochVector { v0: 1.0, px, py, pz }
    }

    /// Point on the X-Z great circle at angle `phi` from `+z` towards `+x`.
    pub fn planar(phi: f64) -> Self {
        BlochVector::new(phi.sin(), 0.0, phi.cos())
    }

    pub fn components(&self) -> [f64; 4] {
        [self.v0, self.px, self.py, self.pz]
    }

    /// `(v0, px, pz)`, the coordinates used by planar protocols.
    pub fn planar_components(&self) -> [f64; 3] {
        [self.v0, self.px, self.pz]
    }

    pub fn radius(&self) -> f64 {
        (self.px * self.px + self.py * self.py + self.pz * self.pz).sqrt()
    }

    pub fn is_planar(&self) -> bool {
        self.py.abs() <= NUMERICAL_TOL
    }

    pub fn is_valid(&self) -> bool {
        (self.v0 - 1.0).abs() <= ALGEBRAIC_TOL
            && self.px * self.px + self.py * self.py + self.pz * self.pz <= 1.0 + ALGEBRAIC_TOL
    }

    /// Reconstructs `(v0 I + p . sigma) / 2`.
    pub fn to_density(&self) -> Mat2 {
        let half = 0.5;
        let c = |x: f64| C64::new(x * half, 0.0);
        Mat2::new(
            c(self.v0 + self.pz),
            C64::new(self.px * half, -self.py * half),
            C64::new(self.px * half, self.py * half),
            c(self.v0 - self.pz),
        )
    }

    pub fn max_abs_diff(&self, other: &BlochVector) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `(1, Tr(rho X), Tr(rho Y), Tr(rho Z))`.
pub fn pauli_decompose(state: &QubitState) -> BlochVector {
    match state {
        QubitState::Pure([a0, a1]) => {
            let cross = a0.conj() * a1;
            BlochVector {
                v0: a0.norm_sqr() + a1.norm_sqr(),
                px: 2.0 * cross.re,
                py: 2.0 * cross.im,
                pz: a0.norm_sqr() - a1.norm_sqr(),
            }
        }
        QubitState::Mixed(rho) => BlochVector {
            v0: rho.trace().re,
            px: trace_product(rho, &Pauli::X.matrix()),
            py: trace_product(rho, &Pauli::Y.matrix()),
            pz: trace_product(rho, &Pauli::Z.matrix()),
        },
    }
}

/// Single-photon qubit of a phase-encoded pulse with encoded phase
/// `theta_a * (1 + delta / pi)`.
///
/// `theta_a = 0` gives `|0z>`; `theta_a = pi` gives
/// `sin(delta/2)|0z> + cos(delta/2)|1z>`. The encoded phase `t` maps to the
/// Bloch point `(-sin t, 0, cos t)`, so `theta_a = pi/2` lands on `|1x>` when
/// `delta = 0`.
pub fn encode_single_photon(theta_a: f64, delta: f64) -> Result<QubitState> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(validation(format!("modulation error must be >= 0, got {delta}")));
    }
    if !theta_a.is_finite() {
        return Err(validation("encoded phase must be finite"));
    }
    let phase = theta_a * (1.0 + delta / PI);
    let (s, c) = (0.5 * phase).sin_cos();
    QubitState::normalized(C64::new(c, 0.0), C64::new(-s, 0.0))
}

/// Rotation coefficients `C[i][j] = <i_x|phi'_{j_x}>` of the modulated virtual
/// states.
pub fn modulation_coefficients(delta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (0.5 * delta).sin_cos();
    let plus = (1.0 + s).sqrt();
    let minus = (1.0 - s).sqrt();
    [
        [(1.0 + s + c) / (2.0 * plus), (1.0 - s - c) / (2.0 * minus)],
        [(1.0 + s - c) / (2.0 * plus), (1.0 - s + c) / (2.0 * minus)],
    ]
}

/// One prepared signal with its protocol label and selection probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceState {
    pub label: String,
    pub state: QubitState,
    pub prior: f64,
}

impl SourceState {
    pub fn new(label: impl Into<String>, state: QubitState, prior: f64) -> Self {
        SourceState {
            label: label.into(),
            state,
            prior,
        }
    }
}

/// The states Alice sends, with their selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    states: Vec<SourceState>,
}

impl SourceSet {
    pub fn new(states: Vec<SourceState>) -> Result<Self> {
        if states.is_empty() {
            return Err(validation("source set is empty"));
        }
        for (i, s) in states.iter().enumerate() {
            if !(s.prior > 0.0) || !s.prior.is_finite() {
                return Err(validation(format!(
                    "prior of '{}' must be > 0, got {}",
                    s.label, s.prior
                )));
            }
            if states[..i].iter().any(|o| o.label == s.label) {
                return Err(validation(format!("duplicate source label '{}'", s.label)));
            }
        }
        let total: f64 = states.iter().map(|s| s.prior).sum();
        if (total - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(validation(format!("source priors sum to {total}, expected 1")));
        }
        Ok(SourceSet { states })
    }

    /// Equal priors over the given states.
    pub fn uniform(states: Vec<(&str, QubitState)>) -> Result<Self> {
        let p = 1.0 / states.len() as f64;
        Self::new(
            states
                .into_iter()
                .map(|(l, s)| SourceState::new(l, s, p))
                .collect(),
        )
    }

    /// `|0z>, |1z>, |0x>` with priors 1/3.
    pub fn ideal_three_state() -> Self {
        Self::uniform(vec![
            ("0z", QubitState::basis(Basis::Z, 0)),
            ("1z", QubitState::basis(Basis::Z, 1)),
            ("0x", QubitState::basis(Basis::X, 0)),
        ])
        .expect("static source set")
    }

    /// Phase-encoded states for `theta_a` in `{0, pi, pi/2}` with modulation
    /// error `delta`, labelled `0z`, `1z`, `1x` (see [`encode_single_photon`]).
    pub fn modulated_three_state(delta: f64) -> Result<Self> {
        Self::uniform(vec![
            ("0z", encode_single_photon(0.0, delta)?),
            ("1z", encode_single_photon(PI, delta)?),
            ("1x", encode_single_photon(0.5 * PI, delta)?),
        ])
    }

    /// `|0z>, |1z>, |0x>, |0y>` with priors 1/4.
    pub fn ideal_four_state() -> Self {
        Self::uniform(vec![
            ("0z", QubitState::basis(Basis::Z, 0)),
            ("1z", QubitState::basis(Basis::Z, 1)),
            ("0x", QubitState::basis(Basis::X, 0)),
            ("0y", QubitState::basis(Basis::Y, 0)),
        ])
        .expect("static source set")
    }

    pub fn states(&self) -> &[SourceState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&SourceState> {
        self.states.iter().find(|s| s.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.states.iter().map(|s| s.label.as_str())
    }

    pub fn bloch_vectors(&self) -> Vec<BlochVector> {
        self.states.iter().map(|s| s.state.bloch()).collect()
    }
}

/// A weighted virtual state `(P(j), sigma_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualState {
    pub weight: f64,
    pub state: QubitState,
}

/// The two virtual states Alice effectively emits when her ancilla is
/// measured in `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualEnsemble {
    pub basis: Basis,
    pub entries: [VirtualState; 2],
}

impl VirtualEnsemble {
    pub fn new(basis: Basis, entries: [VirtualState; 2]) -> Result<Self> {
        let total = entries[0].weight + entries[1].weight;
        if (total - 1.0).abs() > ALGEBRAIC_TOL {
            return Err(validation(format!("virtual weights sum to {total}, expected 1")));
        }
        if entries.iter().any(|e| e.weight < 0.0) {
            return Err(validation("negative virtual weight"));
        }
        Ok(VirtualEnsemble { basis, entries })
    }

    pub fn weights(&self) -> [f64; 2] {
        [self.entries[0].weight, self.entries[1].weight]
    }
}

/// Closed-form virtual ensemble for the modulated Z-basis pair
/// `|0z>, sin(delta/2)|0z> + cos(delta/2)|1z>`.
pub fn virtual_states_planar(delta: f64) -> Result<VirtualEnsemble> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(validation(format!("modulation error must be >= 0, got {delta}")));
    }
    let c = modulation_coefficients(delta);
    let s = (0.5 * delta).sin();
    let entry = |j: usize| -> Result<VirtualState> {
        let (c0, c1) = (c[0][j], c[1][j]);
        let state = QubitState::normalized(
            C64::new((c0 + c1) * FRAC_1_SQRT_2, 0.0),
            C64::new((c0 - c1) * FRAC_1_SQRT_2, 0.0),
        )?;
        let sign = if j == 0 { 1.0 } else { -1.0 };
        Ok(VirtualState {
            weight: 0.5 * (1.0 + sign * s),
            state,
        })
    };
    VirtualEnsemble::new(Basis::X, [entry(0)?, entry(1)?])
}

/// Purification of `rho` as columns `sqrt(lambda_k) |e_k>`, eigenvalues
/// descending, each eigenvector's first non-zero component real and
/// non-negative. Zero-weight components are dropped.
fn purification_columns(rho: &QubitState) -> Vec<[C64; 2]> {
    match rho {
        QubitState::Pure(a) => vec![*a],
        QubitState::Mixed(m) => {
            let eig = m.symmetric_eigen();
            let mut pairs: Vec<(f64, [C64; 2])> = (0..2)
                .map(|k| {
                    let v = eig.eigenvectors.column(k);
                    (eig.eigenvalues[k], canonical_phase([v[0], v[1]]))
                })
                .collect();
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
            pairs
                .into_iter()
                .filter(|(l, _)| *l > ALGEBRAIC_TOL)
                .map(|(l, v)| {
                    let r = l.sqrt();
                    [v[0] * r, v[1] * r]
                })
                .collect()
        }
    }
}

/// Virtual states obtained by preparing
/// `sum_j |j_z>_A |phi_{j or j^1}>_{shield,B} / sqrt(2)` from purifications of
/// the two Z-basis signals, measuring `A` in `basis` and tracing out `A` and
/// the shield.
///
/// `flip` selects the bit-flipped pairing `|j_z>_A |phi_{j^1}>`.
pub fn virtual_states_from_purification(
    rho_0z: &QubitState,
    rho_1z: &QubitState,
    flip: bool,
    basis: Basis,
) -> Result<VirtualEnsemble> {
    let (first, second) = if flip { (rho_1z, rho_0z) } else { (rho_0z, rho_1z) };
    let cols = [purification_columns(first), purification_columns(second)];
    let rank = cols[0].len().max(cols[1].len());
    let pure = rank == 1;

    let mut entries = Vec::with_capacity(2);
    for j in 0..2u8 {
        let bra = basis.ket(j);
        // chi_j[k] = sum_m <j_basis|m_z> phi_m[k] / sqrt(2)
        let chi: Vec<[C64; 2]> = (0..rank)
            .map(|k| {
                let mut acc = [ZERO; 2];
                for (m, col) in cols.iter().enumerate() {
                    if let Some(v) = col.get(k) {
                        let amp = bra[m].conj() * FRAC_1_SQRT_2;
                        acc[0] += amp * v[0];
                        acc[1] += amp * v[1];
                    }
                }
                acc
            })
            .collect();
        let sigma = chi.iter().fold(Mat2::zeros(), |acc, v| acc + outer(v));
        let weight = sigma.trace().re;
        if weight <= ALGEBRAIC_TOL {
            return Err(Error::Validation(format!(
                "virtual state {j}{} has zero weight",
                basis.name().to_lowercase()
            )));
        }
        let state = if pure {
            QubitState::normalized(chi[0][0], chi[0][1])?
        } else {
            let mut rho = sigma.unscale(weight);
            // symmetrize away rounding
            rho = (rho + rho.adjoint()).unscale(2.0);
            QubitState::from_density(rho)?
        };
        entries.push(VirtualState { weight, state });
    }
    let second = entries.pop().expect("two entries");
    let first = entries.pop().expect("two entries");
    let total = first.weight + second.weight;
    // weights sum to one for normalized inputs; renormalize rounding only
    VirtualEnsemble::new(
        basis,
        [
            VirtualState {
                weight: first.weight / total,
                ..first
            },
            VirtualState {
                weight: second.weight / total,
                ..second
            },
        ],
    )
}
