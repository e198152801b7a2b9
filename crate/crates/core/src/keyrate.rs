//! Asymptotic secret key rate, intensity optimization and distance sweeps.

use rayon::prelude::*;

use crate::channel::{z_stats, ChannelParams, ZStats};
use crate::error::{validation, Result};

/// Error-correction inefficiency used for the published curves.
pub const DEFAULT_F_EC: f64 = 1.22;

/// `h(x) = -x log2 x - (1-x) log2 (1-x)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(validation(format!("binary entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    if x == 0.5 {
        return Ok(1.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// `(Q_z1 [1 - h(e_x1)] - f_ec Q_z h(e_z)) / 2` before clamping.
pub fn raw_key_rate(z: &ZStats, f_ec: f64) -> Result<f64> {
    if !(f_ec >= 1.0) || !f_ec.is_finite() {
        return Err(validation(format!(
            "error-correction inefficiency must be >= 1, got {f_ec}"
        )));
    }
    for (name, v) in [("Q_z", z.q_z), ("e_z", z.e_z), ("Q_z1", z.q_z1), ("e_x1", z.e_x1)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(validation(format!("{name} = {v} is not a probability")));
        }
    }
    Ok(0.5 * (z.q_z1 * (1.0 - binary_entropy(z.e_x1)?) - f_ec * z.q_z * binary_entropy(z.e_z)?))
}

/// Per-pulse secret key rate, clamped at zero.
pub fn secret_key_rate(z: &ZStats, f_ec: f64) -> Result<f64> {
    Ok(raw_key_rate(z, f_ec)?.max(0.0))
}

/// Settings for [`optimize_alpha`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub lower: f64,
    pub upper: f64,
    /// Relative tolerance in alpha for the golden-section refinement.
    pub rel_tol: f64,
    pub grid_points: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            lower: 1e-4,
            upper: 1.0,
            rel_tol: 1e-4,
            grid_points: 64,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower > 0.0 && self.upper > self.lower && self.upper.is_finite()) {
            return Err(validation(format!(
                "alpha bounds must satisfy 0 < lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(validation(format!(
                "alpha tolerance must be > 0, got {}",
                self.rel_tol
            )));
        }
        if self.grid_points < 3 {
            return Err(validation("alpha grid needs at least 3 points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaOptimum {
    pub alpha: f64,
    pub rate: f64,
    /// No positive rate anywhere on the coarse grid.
    pub zero_rate: bool,
    pub stats: ZStats,
}

fn raw_rate_at(p: &ChannelParams, f_ec: f64, alpha: f64) -> Result<f64> {
    raw_key_rate(&z_stats(&p.with_alpha(alpha))?, f_ec)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes the key rate over the mean photon number: a log-spaced coarse
/// scan followed by golden-section refinement (in `ln alpha`) on the
/// interval bracketing the best grid point. `p.alpha` is ignored.
pub fn optimize_alpha(p: &ChannelParams, f_ec: f64, settings: &OptimizerSettings) -> Result<AlphaOptimum> {
    settings.validate()?;
    let (lo, hi) = (settings.lower.ln(), settings.upper.ln());
    let n = settings.grid_points;
    let grid: Vec<f64> = (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let values = grid
        .iter()
        .map(|&a| raw_rate_at(p, f_ec, a))
        .collect::<Result<Vec<_>>>()?;
    let (best_i, &best_v) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");

    if best_v <= 0.0 {
        let alpha = grid[best_i];
        return Ok(AlphaOptimum {
            alpha,
            rate: 0.0,
            zero_rate: true,
            stats: z_stats(&p.with_alpha(alpha))?,
        });
    }

    let mut a = grid[best_i.saturating_sub(1)].ln();
    let mut b = grid[(best_i + 1).min(n - 1)].ln();
    let f = |x: f64| raw_rate_at(p, f_ec, x.exp());
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    // ln-width below rel_tol means a relative alpha bracket below rel_tol
    while b - a > settings.rel_tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid)?;
    let (mut alpha, mut rate) = (grid[best_i], best_v);
    for (x, v) in [(c, fc), (d, fd), (mid, fm)] {
        if v > rate {
            alpha = x.exp();
            rate = v;
        }
    }
    Ok(AlphaOptimum {
        alpha,
        rate,
        zero_rate: false,
        stats: z_stats(&p.with_alpha(alpha))?,
    })
}

/// One point of a key-rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub distance_km: f64,
    pub alpha_opt: f64,
    pub q_z: f64,
    pub e_z: f64,
    pub q_z1: f64,
    pub e_x1: f64,
    pub rate: f64,
}

impl RatePoint {
    fn from_optimum(distance_km: f64, o: &AlphaOptimum) -> Self {
        RatePoint {
            distance_km,
            alpha_opt: o.alpha,
            q_z: o.stats.q_z,
            e_z: o.stats.e_z,
            q_z1: o.stats.q_z1,
            e_x1: o.stats.e_x1,
            rate: o.rate,
        }
    }
}

/// How the intensity is chosen at each distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Optimize(OptimizerSettings),
    Fixed(f64),
}

/// Rate point at one distance.
pub fn rate_point(
    base: &ChannelParams,
    distance_km: f64,
    f_ec: f64,
    alpha: &AlphaChoice,
) -> Result<RatePoint> {
    let p = base.with_distance(distance_km);
    match alpha {
        AlphaChoice::Optimize(s) => Ok(RatePoint::from_optimum(
            distance_km,
            &optimize_alpha(&p, f_ec, s)?,
        )),
        AlphaChoice::Fixed(a) => {
            let stats = z_stats(&p.with_alpha(*a))?;
            Ok(RatePoint::from_optimum(
                distance_km,
                &AlphaOptimum {
                    alpha: *a,
                    rate: secret_key_rate(&stats, f_ec)?,
                    zero_rate: false,
                    stats,
                },
            ))
        }
    }
}

/// Key-rate curve over `distances` for modulation error `delta`. Points are
/// computed independently (in parallel) and returned in input order.
pub fn sweep(
    distances: &[f64],
    delta: f64,
    base: &ChannelParams,
    f_ec: f64,
    alpha: &AlphaChoice,
) -> Result<Vec<RatePoint>> {
    if let Some(d) = distances.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(validation(format!("distance must be non-negative, got {d}")));
    }
    let base = base.with_delta(delta);
    distances
        .par_iter()
        .map(|&d| rate_point(&base, d, f_ec, alpha))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper(delta: f64) -> ChannelParams {
        ChannelParams {
            delta,
            ..Default::default()
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        let h = binary_entropy(0.11).unwrap();
        assert!((h - 0.5).abs() < 5e-4, "{h}");
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn key_rate_limits() {
        let z = ZStats {
            q_z: 0.01,
            e_z: 0.02,
            q_z1: 0.004,
            e_x1: 0.5,
        };
        assert_eq!(secret_key_rate(&z, 1.22).unwrap(), 0.0);
        let z = ZStats {
            q_z: 0.01,
            e_z: 0.0,
            q_z1: 0.004,
            e_x1: 0.0,
        };
        assert_eq!(secret_key_rate(&z, 1.22).unwrap(), 0.002);
        assert!(secret_key_rate(&z, 0.9).is_err());
    }

    #[test]
    fn rate_monotone_in_error_rates_and_f_ec() {
        let base = ZStats {
            q_z: 0.02,
            e_z: 0.01,
            q_z1: 0.008,
            e_x1: 0.02,
        };
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let z = ZStats {
                e_z: 0.01 * k as f64,
                ..base
            };
            let r = secret_key_rate(&z, 1.22).unwrap();
            assert!(r <= prev);
            prev = r;
        }
        prev = f64::INFINITY;
        for k in 0..50 {
            let z = ZStats {
                e_x1: 0.01 * k as f64,
                ..base
            };
            let r = secret_key_rate(&z, 1.22).unwrap();
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn short_distance_yields_key() {
        let o = optimize_alpha(&paper(0.0), DEFAULT_F_EC, &OptimizerSettings::default()).unwrap();
        assert!(!o.zero_rate);
        assert!(o.alpha > 0.0 && o.alpha < 1.0);
        assert!(o.rate > 0.0);
        // without bit errors the rate is Q_z1/2, maximized at alpha = 1/2
        assert!((o.alpha - 0.5).abs() < 1e-3);
    }

    #[test]
    fn optimum_beats_every_grid_point() {
        let s = OptimizerSettings::default();
        for &d in &[0.0, 60.0, 140.0] {
            let p = paper(0.126).with_distance(d);
            let o = optimize_alpha(&p, DEFAULT_F_EC, &s).unwrap();
            for i in 0..s.grid_points {
                let a = (s.lower.ln() + (s.upper.ln() - s.lower.ln()) * i as f64 / 63.0).exp();
                assert!(o.rate >= raw_rate_at(&p, DEFAULT_F_EC, a).unwrap());
            }
        }
    }

    #[test]
    fn far_beyond_cutoff_reports_zero_rate() {
        let p = ChannelParams {
            e_d: 1e-3,
            ..paper(0.126)
        }
        .with_distance(400.0);
        let o = optimize_alpha(&p, DEFAULT_F_EC, &OptimizerSettings::default()).unwrap();
        assert!(o.zero_rate);
        assert_eq!(o.rate, 0.0);
    }

    #[test]
    fn sweep_edge_cases() {
        let alpha = AlphaChoice::Optimize(OptimizerSettings::default());
        assert!(sweep(&[], 0.0, &paper(0.0), DEFAULT_F_EC, &alpha)
            .unwrap()
            .is_empty());
        assert!(sweep(&[-1.0], 0.0, &paper(0.0), DEFAULT_F_EC, &alpha).is_err());
        let fixed = sweep(&[10.0], 0.0, &paper(0.0), DEFAULT_F_EC, &AlphaChoice::Fixed(0.3)).unwrap();
        assert_eq!(fixed[0].alpha_opt, 0.3);
    }

    #[test]
    fn sweep_is_pointwise() {
        let alpha = AlphaChoice::Optimize(OptimizerSettings::default());
        let fwd: Vec<f64> = (0..10).map(|k| 15.0 * k as f64).collect();
        let rev: Vec<f64> = fwd.iter().rev().cloned().collect();
        let a = sweep(&fwd, 0.063, &paper(0.0), DEFAULT_F_EC, &alpha).unwrap();
        let mut b = sweep(&rev, 0.063, &paper(0.0), DEFAULT_F_EC, &alpha).unwrap();
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_monotone_for_intermediate_delta() {
        let alpha = AlphaChoice::Optimize(OptimizerSettings::default());
        let d: Vec<f64> = (0..=30).map(|k| 5.0 * k as f64).collect();
        let pts = sweep(&d, 0.063, &paper(0.0), DEFAULT_F_EC, &alpha).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].rate <= w[0].rate);
        }
    }

    #[test]
    fn rate_ratio_nearly_constant_without_dark_counts() {
        let alpha = AlphaChoice::Optimize(OptimizerSettings::default());
        let base = ChannelParams {
            e_d: 0.0,
            ..paper(0.0)
        };
        let d = [0.0, 40.0, 80.0, 120.0, 150.0];
        let r0 = sweep(&d, 0.0, &base, DEFAULT_F_EC, &alpha).unwrap();
        let r1 = sweep(&d, 0.126, &base, DEFAULT_F_EC, &alpha).unwrap();
        let ratios: Vec<f64> = r0.iter().zip(&r1).map(|(a, b)| b.rate / a.rate).collect();
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 0.02, "{ratios:?}");
        }
    }
}
