//! Analytic model of a fiber link with a lossy, noisy threshold detector,
//! for phase-randomized weak coherent pulses in the infinite-decoy limit.
//!
//! Loss and dark counts enter through a single total loss `L` (fiber plus
//! detector transmittance) and a per-detector dark count probability `e_d`.
//! Bob's phase modulation error compounds Alice's, so the virtual-state
//! rotation uses `3 delta / 2`.

use crate::error::{validation, Error, Result};
use crate::estimator::{error_ratio, TransmissionFunctional};
use crate::qstate::{
    modulation_coefficients, trace_product, virtual_states_planar, Basis, Mat2, Pauli, QubitState,
    VirtualEnsemble,
};

/// Link, detector and source parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Dark count probability per detector per gate.
    pub e_d: f64,
    /// Transmittance of Bob's detection apparatus.
    pub det_eff: f64,
    /// Fiber attenuation in dB/km.
    pub atten_db_per_km: f64,
    pub distance_km: f64,
    /// Phase modulation error.
    pub delta: f64,
    /// Mean photon number per mode of the coherent signal.
    pub alpha: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            e_d: 0.5e-7,
            det_eff: 0.15,
            atten_db_per_km: 0.21,
            distance_km: 0.0,
            delta: 0.0,
            alpha: 0.5,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, v: f64| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(validation(format!("invalid {field}: {v}")))
            }
        };
        check((0.0..1.0).contains(&self.e_d), "e_d", self.e_d)?;
        check(self.det_eff > 0.0 && self.det_eff <= 1.0, "det_eff", self.det_eff)?;
        check(
            self.atten_db_per_km >= 0.0,
            "atten_db_per_km",
            self.atten_db_per_km,
        )?;
        check(self.distance_km >= 0.0, "distance_km", self.distance_km)?;
        check(self.delta >= 0.0, "delta", self.delta)?;
        check(self.alpha > 0.0, "alpha", self.alpha)?;
        Ok(())
    }

    pub fn with_distance(self, distance_km: f64) -> Self {
        ChannelParams { distance_km, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        ChannelParams { alpha, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        ChannelParams { delta, ..self }
    }

    /// Rotation applied to the virtual states: Alice's error plus half of it
    /// again from Bob's modulator.
    pub fn effective_delta(&self) -> f64 {
        1.5 * self.delta
    }
}

/// `L = 1 - det_eff * 10^(-atten * distance / 10)`.
pub fn total_loss(p: &ChannelParams) -> f64 {
    1.0 - transmittance(p)
}

pub fn transmittance(p: &ChannelParams) -> f64 {
    p.det_eff * 10f64.powf(-p.atten_db_per_km * p.distance_km / 10.0)
}

/// Conditional yields `Y[s][j]` of the virtual states `|phi'_j>`:
/// `(1-L) C_{s,j}^2 (1 - e_d/2) + e_d (1 - e_d/2) + (1-L) C_{s^1,j}^2 e_d`.
pub fn conditional_virtual_yields(p: &ChannelParams) -> Result<[[f64; 2]; 2]> {
    p.validate()?;
    let eta = transmittance(p);
    let c = modulation_coefficients(p.effective_delta());
    let e = p.e_d;
    let mut y = [[0.0; 2]; 2];
    for s in 0..2 {
        for j in 0..2 {
            y[s][j] =
                eta * c[s][j].powi(2) * (1.0 - e / 2.0) + e * (1.0 - e / 2.0) + eta * c[1 - s][j].powi(2) * e;
        }
    }
    Ok(y)
}

/// Effective detection operator for outcome `s` when Bob measures in `basis`:
/// `(1-L) [(1 - e_d/2) P(s) + e_d P(s^1)] + e_d (1 - e_d/2) I`.
///
/// Its expectation on the virtual states reproduces
/// [`conditional_virtual_yields`]; on other states it extends the model.
pub fn detection_operator(p: &ChannelParams, basis: Basis, outcome: u8) -> Result<Mat2> {
    p.validate()?;
    let eta = transmittance(p);
    let e = p.e_d;
    Ok(basis.projector(outcome).scale(eta * (1.0 - e / 2.0))
        + basis.projector(1 - outcome).scale(eta * e)
        + Pauli::Id.matrix().scale(e * (1.0 - e / 2.0)))
}

/// `Tr(D_s rho)` under [`detection_operator`].
pub fn conditional_yield(p: &ChannelParams, state: &QubitState, basis: Basis, outcome: u8) -> Result<f64> {
    Ok(trace_product(
        &detection_operator(p, basis, outcome)?,
        &state.density(),
    ))
}

/// Planar X-basis functionals `q_t = Tr(D_s sigma_t)/2` of the model.
pub fn model_functionals(p: &ChannelParams) -> Result<[TransmissionFunctional; 2]> {
    let f = |s: u8| -> Result<TransmissionFunctional> {
        let d = detection_operator(p, Basis::X, s)?;
        Ok(TransmissionFunctional {
            basis: Basis::X,
            outcome: s,
            q_id: 0.5 * trace_product(&d, &Pauli::Id.matrix()),
            q_x: 0.5 * trace_product(&d, &Pauli::X.matrix()),
            q_y: None,
            q_z: 0.5 * trace_product(&d, &Pauli::Z.matrix()),
        })
    };
    Ok([f(0)?, f(1)?])
}

/// Virtual ensemble seen by the channel model (rotation `3 delta / 2`).
pub fn model_virtual_ensemble(p: &ChannelParams) -> Result<VirtualEnsemble> {
    virtual_states_planar(p.effective_delta())
}

/// Gains and error rates of the key basis and its single-photon part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZStats {
    /// Overall gain.
    pub q_z: f64,
    /// Bit error rate.
    pub e_z: f64,
    /// Single-photon gain.
    pub q_z1: f64,
    /// Single-photon phase error rate.
    pub e_x1: f64,
}

/// `(Q_z1, e_x1)`:
/// `e_x1 = (Y(1|0) + Y(0|1)) / sum Y` and
/// `Q_z1 = e^{-2 alpha} alpha / 2 * sum_{j,s} Y(s|j) P(j_x)` with
/// `P(j_x) = [1 + (-1)^j sin(delta/2)] / 2`.
pub fn single_photon_stats(p: &ChannelParams) -> Result<(f64, f64)> {
    let y = conditional_virtual_yields(p)?;
    let e_x1 = error_ratio(
        y[1][0] + y[0][1],
        y[1][0] + y[0][1] + y[1][1] + y[0][0],
        "single-photon phase error rate",
    )?;
    let s = (0.5 * p.delta).sin();
    let prior = [0.5 * (1.0 + s), 0.5 * (1.0 - s)];
    let weighted: f64 = (0..2)
        .flat_map(|j| (0..2).map(move |s| (s, j)))
        .map(|(s, j)| y[s][j] * prior[j])
        .sum();
    let q_z1 = 0.5 * (-2.0 * p.alpha).exp() * p.alpha * weighted;
    Ok((q_z1, e_x1))
}

/// Click probabilities `P[s][j]` of Bob's Z-basis detectors given Alice's
/// Z-basis bit `j`.
pub fn zbasis_click_probabilities(p: &ChannelParams) -> Result<[[f64; 2]; 2]> {
    p.validate()?;
    let eta = transmittance(p);
    let e = p.e_d;
    let click = |mean: f64| e + (1.0 - e) * (1.0 - (-mean).exp());
    let (s, c) = (0.5 * p.delta).sin_cos();
    Ok([
        [click(p.alpha * eta), click(p.alpha * eta * s * s)],
        [e, click(p.alpha * eta * c * c)],
    ])
}

/// `(Q_z, e_z)` with double clicks mapped to a random bit.
///
/// The gain counts single clicks on either detector plus double clicks for
/// each of Alice's bits. Errors are single clicks on the wrong detector plus
/// half of the double clicks.
pub fn zbasis_stats(p: &ChannelParams) -> Result<(f64, f64)> {
    let pr = zbasis_click_probabilities(p)?;
    let (p00, p10, p01, p11) = (pr[0][0], pr[1][0], pr[0][1], pr[1][1]);
    let q_z = 0.5 * (p00 * (1.0 - p10) + (1.0 - p00) * p10 + p00 * p10)
        + 0.5 * (p01 * (1.0 - p11) + (1.0 - p01) * p11 + p01 * p11);
    let w_z = 0.5 * ((1.0 - p00) * p10 + 0.5 * p00 * p10) + 0.5 * (p01 * (1.0 - p11) + 0.5 * p01 * p11);
    if !(q_z > 0.0) {
        return Err(Error::UndefinedRate("no Z-basis detections (Q_z = 0)".into()));
    }
    Ok((q_z, w_z / q_z))
}

pub fn z_stats(p: &ChannelParams) -> Result<ZStats> {
    let (q_z, e_z) = zbasis_stats(p)?;
    let (q_z1, e_x1) = single_photon_stats(p)?;
    Ok(ZStats { q_z, e_z, q_z1, e_x1 })
}
