//! Run configuration: a flat `key = value` file with `#` comments, overridden
//! by command-line flags. Defaults are the standard fiber/detector parameters
//! (`e_d = 0.5e-7`, detector efficiency 0.15, 0.21 dB/km, `f_ec = 1.22`) and
//! modulation errors `{0, 0.063, 0.126}` over 0-150 km.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::ChannelParams;
use crate::error::{validation, Error, Result};
use crate::keyrate::{AlphaChoice, OptimizerSettings, DEFAULT_F_EC};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    ThreeState,
    FourState,
    Mdi,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::ThreeState => "three-state",
            Protocol::FourState => "four-state",
            Protocol::Mdi => "mdi",
        }
    }

    pub fn n_states(self) -> usize {
        match self {
            Protocol::FourState => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "three-state" => Ok(Protocol::ThreeState),
            "four-state" => Ok(Protocol::FourState),
            "mdi" => Ok(Protocol::Mdi),
            other => Err(validation(format!(
                "protocol: expected three-state, four-state or mdi, got '{other}'"
            ))),
        }
    }
}

/// Distances `start, start + step, ...` up to and including `stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl DistanceRange {
    pub fn single(d: f64) -> Self {
        DistanceRange {
            start: d,
            stop: d,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start >= 0.0 && self.start.is_finite()) {
            return Err(validation(format!(
                "distance: start must be >= 0, got {}",
                self.start
            )));
        }
        if !self.stop.is_finite() {
            return Err(validation("distance: stop must be finite"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(validation(format!(
                "distance: step must be > 0, got {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Grid points, computed as `start + k * step` so they do not accumulate
    /// rounding. Empty when `stop < start`.
    pub fn points(&self) -> Vec<f64> {
        if self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for DistanceRange {
    type Err = Error;

    /// `START:STOP:STEP` or a single distance.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| validation(format!("distance: '{v}' is not a number")))
        };
        let r = match parts.as_slice() {
            [d] => DistanceRange::single(num(d)?),
            [a, b, c] => DistanceRange {
                start: num(a)?,
                stop: num(b)?,
                step: num(c)?,
            },
            _ => {
                return Err(validation(format!(
                    "distance: expected START:STOP:STEP, got '{s}'"
                )))
            }
        };
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub protocol: Protocol,
    /// Link and detector parameters; `distance_km`, `delta` and `alpha` are
    /// set per point.
    pub channel: ChannelParams,
    pub deltas: Vec<f64>,
    pub distance: DistanceRange,
    pub f_ec: f64,
    /// Fixed mean photon number; `None` optimizes it at every point.
    pub fixed_alpha: Option<f64>,
    pub optimizer: OptimizerSettings,
    pub seed: u64,
    pub pulses: u64,
    /// Fraction of Z-Z pairs kept for testing in the mdi protocol.
    pub gamma: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: Protocol::ThreeState,
            channel: ChannelParams::default(),
            deltas: vec![0.0, 0.063, 0.126],
            distance: DistanceRange {
                start: 0.0,
                stop: 150.0,
                step: 5.0,
            },
            f_ec: DEFAULT_F_EC,
            fixed_alpha: None,
            optimizer: OptimizerSettings::default(),
            seed: 42,
            pulses: 1_000_000,
            gamma: 0.5,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| validation(format!("{key}: cannot parse '{}'", v.trim())))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "protocol" => self.protocol = v.parse()?,
            "e_d" => self.channel.e_d = parse_num(key, v)?,
            "det_eff" => self.channel.det_eff = parse_num(key, v)?,
            "atten_db_per_km" => self.channel.atten_db_per_km = parse_num(key, v)?,
            "delta" => {
                self.deltas = v
                    .split(',')
                    .filter(|d| !d.trim().is_empty())
                    .map(|d| parse_num("delta", d))
                    .collect::<Result<_>>()?
            }
            "distance" => self.distance = v.parse()?,
            "f_ec" => self.f_ec = parse_num(key, v)?,
            "alpha" if v == "optimize" => self.fixed_alpha = None,
            "alpha" => self.fixed_alpha = Some(parse_num(key, v)?),
            "alpha_lower" => self.optimizer.lower = parse_num(key, v)?,
            "alpha_upper" => self.optimizer.upper = parse_num(key, v)?,
            "alpha_tol" => self.optimizer.rel_tol = parse_num(key, v)?,
            "alpha_grid" => self.optimizer.grid_points = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "pulses" => self.pulses = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(validation(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| validation(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| validation(format!("config line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn alpha_choice(&self) -> AlphaChoice {
        match self.fixed_alpha {
            Some(a) => AlphaChoice::Fixed(a),
            None => AlphaChoice::Optimize(self.optimizer),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.distance.validate()?;
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(validation(format!("delta: must be >= 0, got {d}")));
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(validation(format!("f_ec: must be >= 1, got {}", self.f_ec)));
        }
        match self.fixed_alpha {
            Some(a) if !(a > 0.0 && a.is_finite()) => {
                return Err(validation(format!("alpha: must be > 0, got {a}")))
            }
            Some(_) => {}
            None => self.optimizer.validate()?,
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(validation(format!(
                "gamma: must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Validation(m) => m.clone(),
        other => other.to_string(),
    }
}
