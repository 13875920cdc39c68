//! Browser bindings for the dispatch demo.
//!
//! A [`Demo`] runs the simulate-estimate-sample pipeline once and then answers
//! two kinds of query as JSON strings: the aggregate power profile of one
//! method next to the standard policy, and the mean power deviation from the
//! standard policy as one knob (gamma, eta or psi) is swept.

use serde_json::{json, Value};
use tcldro::dispatch::{delta_power, forward_evolve, power_profile};
use tcldro::scenario::{build_inputs, solve_method, Inputs, MethodConfig, MethodName, ScenarioConfig};
use tcldro::{Error, Result};
use wasm_bindgen::prelude::*;

/// Pipeline state shared by every query.
#[wasm_bindgen]
pub struct Demo {
    inputs: Inputs,
    base: MethodConfig,
    step_hours: f64,
}

fn js(err: Error) -> JsError {
    JsError::new(&err.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Simulates `devices` TCLs for `sim_hours` and draws `samples` perturbed
    /// transition matrices. Small values keep the page responsive.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, devices: usize, sim_hours: f64, samples: usize) -> std::result::Result<Demo, JsError> {
        Demo::build(seed, devices, sim_hours, samples).map_err(js)
    }

    /// Number of discrete states.
    pub fn states(&self) -> usize {
        self.inputs.space.n
    }

    /// `{hours, standard, power, delta, objective}` for `method` at `gamma`.
    /// `knob` is eta for hybrid and psi for wasserstein; other methods ignore it.
    pub fn profile(&self, method: &str, gamma: f64, knob: f64) -> std::result::Result<String, JsError> {
        self.profile_json(method, gamma, knob).map(|v| v.to_string()).map_err(js)
    }

    /// `[{x, mean_abs_delta, max_abs_delta}]` with `axis` ("gamma", "eta" or
    /// "psi") taking each of `values` while the other knobs stay fixed.
    pub fn sweep(
        &self,
        method: &str,
        axis: &str,
        values: Vec<f64>,
        gamma: f64,
        knob: f64,
    ) -> std::result::Result<String, JsError> {
        self.sweep_json(method, axis, &values, gamma, knob).map(|v| v.to_string()).map_err(js)
    }
}

impl Demo {
    pub fn build(seed: u32, devices: usize, sim_hours: f64, samples: usize) -> Result<Demo> {
        let mut cfg = ScenarioConfig {
            seed: seed as u64,
            ..ScenarioConfig::default()
        };
        cfg.ensemble.devices = devices;
        cfg.ensemble.sim_hours = sim_hours;
        cfg.samples.count = samples;
        cfg.validate()?;
        let (_, inputs) = build_inputs(&cfg)?;
        Ok(Demo {
            inputs,
            step_hours: cfg.model.step_hours,
            base: cfg.method,
        })
    }

    fn config(&self, method: &str, gamma: f64, knob: f64) -> Result<MethodConfig> {
        let name: MethodName = method.parse()?;
        let mut m = MethodConfig {
            name,
            gamma,
            ..self.base.clone()
        };
        match name {
            MethodName::Hybrid => m.eta = knob,
            MethodName::Wasserstein => m.psi = knob,
            _ => {}
        }
        m.validate()?;
        Ok(m)
    }

    fn power(&self, m: &MethodConfig) -> Result<(Vec<f64>, f64)> {
        let outcome = solve_method(&self.inputs, m)?;
        let path = forward_evolve(&self.inputs.rho0, &outcome.policy)?;
        Ok((power_profile(&path, &self.inputs.space)?, outcome.objective))
    }

    fn standard_power(&self, gamma: f64) -> Result<Vec<f64>> {
        Ok(self.power(&self.config("standard", gamma, 0.0)?)?.0)
    }

    pub fn profile_json(&self, method: &str, gamma: f64, knob: f64) -> Result<Value> {
        let (power, objective) = self.power(&self.config(method, gamma, knob)?)?;
        let standard = self.standard_power(gamma)?;
        let delta = delta_power(&power, &standard)?;
        let hours: Vec<f64> = (0..power.len()).map(|t| t as f64 * self.step_hours).collect();
        Ok(json!({
            "method": method,
            "gamma": gamma,
            "hours": hours,
            "standard": standard,
            "power": power,
            "delta": delta,
            "objective": objective,
        }))
    }

    pub fn sweep_json(&self, method: &str, axis: &str, values: &[f64], gamma: f64, knob: f64) -> Result<Value> {
        let mut rows = Vec::with_capacity(values.len());
        for &x in values {
            let (g, k) = match axis {
                "gamma" => (x, knob),
                "eta" | "psi" => (gamma, x),
                other => return Err(Error::Config(format!("unknown axis {other:?}"))),
            };
            let (power, _) = self.power(&self.config(method, g, k)?)?;
            let delta = delta_power(&power, &self.standard_power(g)?)?;
            let abs: Vec<f64> = delta.iter().map(|d| d.abs()).collect();
            rows.push(json!({
                "x": x,
                "mean_abs_delta": abs.iter().sum::<f64>() / abs.len() as f64,
                "max_abs_delta": abs.iter().copied().fold(0.0, f64::max),
            }));
        }
        Ok(Value::Array(rows))
    }
}
