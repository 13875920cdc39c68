//! First-order thermal model of residential air conditioners and a seeded
//! simulator for homogeneous ensembles of them.
//!
//! Each device follows
//!
//! ```text
//! theta' = rho * theta + (1 - rho) * (theta_a - aleph * R * P * u) + noise,   rho = exp(-h / (R C))
//! ```
//!
//! followed by hysteretic cooling control around the setpoint.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters shared by every device of a homogeneous ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TclParams {
    /// Thermal resistance, degC/kW.
    pub r: f64,
    /// Thermal capacitance, kWh/degC.
    pub c: f64,
    /// Electrical power while the compressor runs, kW.
    pub p_rated: f64,
    /// Coefficient of performance.
    pub aleph: f64,
    /// Temperature setpoint, degC.
    pub theta_set: f64,
    /// Deadband half-width, degC.
    pub delta: f64,
    /// Simulation time step, hours.
    pub h: f64,
    /// Standard deviation of the additive temperature noise, degC.
    pub kappa_std: f64,
}

impl Default for TclParams {
    fn default() -> Self {
        Self {
            r: 2.0,
            c: 10.0,
            p_rated: 5.6,
            aleph: 2.5,
            theta_set: 22.5,
            delta: 0.5,
            h: 1.0 / 60.0,
            kappa_std: 0.05,
        }
    }
}

impl TclParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r", self.r),
            ("c", self.c),
            ("p_rated", self.p_rated),
            ("aleph", self.aleph),
            ("h", self.h),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("tcl.{name} must be > 0, got {v}")));
            }
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::config(format!("tcl.delta must be >= 0, got {}", self.delta)));
        }
        if !(self.kappa_std.is_finite() && self.kappa_std >= 0.0) {
            return Err(Error::config(format!(
                "tcl.kappa_std must be >= 0, got {}",
                self.kappa_std
            )));
        }
        if !self.theta_set.is_finite() {
            return Err(Error::config("tcl.theta_set must be finite"));
        }
        Ok(())
    }

    /// Per-step decay factor `exp(-h / (R C))`.
    pub fn decay(&self) -> f64 {
        (-self.h / (self.r * self.c)).exp()
    }
}

/// Indoor temperature and compressor state of one device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TclState {
    pub theta: f64,
    pub on: bool,
}

/// Advances one device by one step.
///
/// The temperature update uses the incoming compressor state; the thermostat
/// then switches on the new temperature.
pub fn step_tcl(state: TclState, params: &TclParams, theta_a: f64, noise: f64) -> TclState {
    let rho = params.decay();
    let u = if state.on { 1.0 } else { 0.0 };
    let theta =
        rho * state.theta + (1.0 - rho) * (theta_a - params.aleph * params.r * params.p_rated * u) + noise;
    let on = if theta > params.theta_set + params.delta {
        true
    } else if theta < params.theta_set - params.delta {
        false
    } else {
        state.on
    };
    TclState { theta, on }
}

/// Output of [`simulate_ensemble`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleTrace {
    pub steps: usize,
    pub devices: usize,
    /// Aggregate power after each step, kW.
    pub power: Vec<f64>,
    /// Number of devices running after each step.
    pub on_count: Vec<u32>,
    /// Step-major temperatures (`steps * devices`), only when requested.
    pub temperatures: Option<Vec<f64>>,
}

impl EnsembleTrace {
    pub fn temperature(&self, step: usize, device: usize) -> Option<f64> {
        self.temperatures
            .as_ref()
            .map(|t| t[step * self.devices + device])
    }
}

/// Knobs of [`simulate_ensemble`] that are not model parameters.
#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    pub record_temperatures: bool,
    /// Overrides the randomized initial condition (one state per device).
    pub initial: Option<Vec<TclState>>,
}

/// Simulates `devices` independent air conditioners for `ambient.len()` steps.
///
/// Every device draws from its own ChaCha stream derived from `seed`, so the
/// trace is reproducible bit-for-bit and independent of evaluation order.
pub fn simulate_ensemble(
    params: &TclParams,
    devices: usize,
    ambient: &[f64],
    steps: usize,
    seed: u64,
    options: &SimOptions,
) -> Result<EnsembleTrace> {
    params.validate()?;
    if devices == 0 {
        return Err(Error::config("ensemble needs at least one device"));
    }
    if steps == 0 {
        return Err(Error::config("simulation needs at least one step"));
    }
    if ambient.len() != steps {
        return Err(Error::data(format!(
            "ambient series has {} values for {steps} steps",
            ambient.len()
        )));
    }
    if let Some(init) = &options.initial {
        if init.len() != devices {
            return Err(Error::data(format!(
                "{} initial states for {devices} devices",
                init.len()
            )));
        }
    }

    let noise = Normal::new(0.0, params.kappa_std)
        .map_err(|e| Error::config(format!("noise distribution: {e}")))?;
    let mut on_count = vec![0u32; steps];
    let mut temperatures = options
        .record_temperatures
        .then(|| vec![0.0; steps * devices]);

    for device in 0..devices {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(device as u64);
        let mut state = match &options.initial {
            Some(init) => init[device],
            None => TclState {
                theta: rng.gen_range(
                    params.theta_set - params.delta..=params.theta_set + params.delta,
                ),
                on: rng.gen_bool(0.5),
            },
        };
        for (step, &theta_a) in ambient.iter().enumerate() {
            let kappa = if params.kappa_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            state = step_tcl(state, params, theta_a, kappa);
            if state.on {
                on_count[step] += 1;
            }
            if let Some(t) = temperatures.as_mut() {
                t[step * devices + device] = state.theta;
            }
        }
    }

    let power = on_count
        .iter()
        .map(|&k| f64::from(k) * params.p_rated)
        .collect();
    Ok(EnsembleTrace {
        steps,
        devices,
        power,
        on_count,
        temperatures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> TclParams {
        TclParams {
            kappa_std: 0.0,
            ..TclParams::default()
        }
    }

    #[test]
    fn off_fixed_point_at_ambient() {
        let p = quiet();
        let s = step_tcl(TclState { theta: 32.0, on: false }, &p, 32.0, 0.0);
        assert!((s.theta - 32.0).abs() < 1e-12);
    }

    #[test]
    fn small_step_is_identity_plus_noise() {
        let p = TclParams {
            h: 1e-12,
            ..quiet()
        };
        let s = step_tcl(TclState { theta: 22.0, on: true }, &p, 32.0, 0.01);
        assert!((s.theta - 22.01).abs() < 1e-9);
    }

    #[test]
    fn hand_evaluated_cooling_step() {
        let p = TclParams {
            r: 2.0,
            c: 10.0,
            h: 1.0 / 60.0,
            aleph: 2.5,
            p_rated: 5.6,
            ..quiet()
        };
        let rho = (-1.0f64 / 1200.0).exp();
        let expected = rho * 22.3 + (1.0 - rho) * (32.0 - 28.0);
        let s = step_tcl(TclState { theta: 22.3, on: true }, &p, 32.0, 0.0);
        assert!((s.theta - expected).abs() < 1e-12);
        // Still inside the deadband, so the compressor keeps running.
        assert!(s.on);
    }

    #[test]
    fn hysteresis_switching() {
        let p = quiet();
        let hot = step_tcl(TclState { theta: 23.2, on: false }, &p, 32.0, 0.0);
        assert!(hot.on);
        let cold = step_tcl(TclState { theta: 21.9, on: true }, &p, 32.0, 0.0);
        assert!(!cold.on);
        let mid = step_tcl(TclState { theta: 22.5, on: true }, &p, 32.0, 0.0);
        assert!(mid.on);
    }

    #[test]
    fn ambient_length_mismatch_is_data_error() {
        let err = simulate_ensemble(&quiet(), 3, &[32.0; 4], 5, 1, &SimOptions::default());
        assert!(matches!(err, Err(Error::Data(_))));
    }
}
