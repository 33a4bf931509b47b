//! Versioned JSON model report.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Name of the blip intercept (main effect of treatment).
pub const TREATMENT_TERM: &str = "treatment";
pub const INTERCEPT_TERM: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Named {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// Baseline model, intercept first.
    pub beta: Vec<Named>,
    /// Blip model, treatment main effect first.
    pub psi: Vec<Named>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningEntry {
    pub lambda: f64,
    /// `null` for path points that failed.
    pub criterion: Option<f64>,
    pub support_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub schema_version: u32,
    pub family: String,
    pub method: String,
    pub outcome: String,
    pub treatment: String,
    /// Smaller outcomes are better; the rule treats when the blip is negative.
    pub minimize: bool,
    pub coefficients: Coefficients,
    pub tailoring_variables: Vec<String>,
    pub rule: String,
    pub selected_lambda: Option<f64>,
    pub tuning_table: Option<Vec<TuningEntry>>,
    pub diagnostics: Diagnostics,
}

impl ModelReport {
    /// Covariate terms of the blip, without the treatment main effect.
    pub fn blip_terms(&self) -> &[Named] {
        &self.coefficients.psi[1..]
    }

    /// γ(x,1) for covariate values given in `blip_terms` order.
    pub fn blip(&self, x: &[f64]) -> f64 {
        self.blip_terms()
            .iter()
            .zip(x)
            .fold(self.coefficients.psi[0].value, |acc, (t, v)| acc + t.value * v)
    }

    /// Recommended arm; a zero blip recommends 0.
    pub fn recommend(&self, gamma: f64) -> u8 {
        if self.minimize {
            (gamma < 0.0) as u8
        } else {
            (gamma > 0.0) as u8
        }
    }
}

/// Human-readable decision rule, e.g. `treat when 1 - 2*x1 > 0`.
pub fn render_rule(psi: &[Named], minimize: bool) -> String {
    let mut s = format!("{}", psi[0].value);
    for t in &psi[1..] {
        if t.value != 0.0 {
            let sign = if t.value < 0.0 { '-' } else { '+' };
            s.push_str(&format!(" {sign} {}*{}", t.value.abs(), t.name));
        }
    }
    format!("treat when {s} {} 0", if minimize { '<' } else { '>' })
}
