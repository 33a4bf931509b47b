//! Observed data, model specification and fitted coefficient containers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome family. Count outcomes use the log link, binary outcomes the logit link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Count,
    Binary,
}

impl Family {
    pub fn link(self) -> Link {
        match self {
            Family::Count => Link::Log,
            Family::Binary => Link::Logit,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Count => "count",
            Family::Binary => "binary",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "count" | "poisson" => Ok(Family::Count),
            "binary" | "binomial" => Ok(Family::Binary),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Log,
    Logit,
}

/// One observed sample: covariates `x` (n×p, no intercept column), binary
/// treatment `a` and outcome `y`.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    a: DVector<f64>,
    y: DVector<f64>,
    family: Family,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, a: DVector<f64>, y: DVector<f64>, family: Family) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::Data(format!(
                "need n >= 1 and p >= 1, got {}x{}",
                n,
                x.ncols()
            )));
        }
        if a.len() != n || y.len() != n {
            return Err(Error::Data(format!(
                "length mismatch: x has {n} rows, a has {}, y has {}",
                a.len(),
                y.len()
            )));
        }
        for i in 0..n {
            if let Some(j) = (0..x.ncols()).find(|&j| !x[(i, j)].is_finite()) {
                return Err(Error::Data(format!("row {i}: covariate {j} is not finite")));
            }
            if a[i] != 0.0 && a[i] != 1.0 {
                return Err(Error::Data(format!("row {i}: treatment {} not in {{0,1}}", a[i])));
            }
            let yi = y[i];
            let ok = match family {
                Family::Binary => yi == 0.0 || yi == 1.0,
                Family::Count => yi.is_finite() && yi >= 0.0 && yi.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Data(format!(
                    "row {i}: outcome {yi} invalid for {} family",
                    family.as_str()
                )));
            }
        }
        Ok(Dataset { x, a, y, family })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Rows `rows` (in the given order) as a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| self.x[(rows[i], j)]);
        let a = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.a[i]));
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset {
            x,
            a,
            y,
            family: self.family,
        }
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1.0).count()
    }
}

/// Which covariates enter the baseline model f(x^β; β) and the blip
/// γ(x^ψ, a; ψ) = a(ψ₀ + ψᵀx^ψ). Both models always carry an intercept
/// (the baseline intercept and the treatment main effect ψ₀).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub baseline_cols: Vec<usize>,
    pub blip_cols: Vec<usize>,
    pub link: Link,
}

impl ModelSpec {
    /// Builds a spec, enforcing strong heredity (blip ⊆ baseline) and distinct indices.
    pub fn new(baseline_cols: Vec<usize>, blip_cols: Vec<usize>, link: Link) -> Result<Self> {
        let spec = ModelSpec {
            baseline_cols,
            blip_cols,
            link,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    fn check_structure(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for &c in &self.baseline_cols {
            if !seen.insert(c) {
                return Err(Error::Config(format!("baseline column {c} listed twice")));
            }
        }
        let mut seen_blip = std::collections::BTreeSet::new();
        for &c in &self.blip_cols {
            if !seen_blip.insert(c) {
                return Err(Error::Config(format!("blip column {c} listed twice")));
            }
            if !seen.contains(&c) {
                return Err(Error::Config(format!(
                    "blip column {c} has no baseline main effect (strong heredity)"
                )));
            }
        }
        Ok(())
    }

    /// Checks the spec against a dataset: index ranges and link/family agreement.
    pub fn validate_for(&self, data: &Dataset) -> Result<()> {
        self.check_structure()?;
        let p = data.p();
        if let Some(&c) = self
            .baseline_cols
            .iter()
            .chain(self.blip_cols.iter())
            .find(|&&c| c >= p)
        {
            return Err(Error::Config(format!("column index {c} out of range for p = {p}")));
        }
        if data.family().link() != self.link {
            return Err(Error::Config(format!(
                "link {:?} does not match {} outcomes",
                self.link,
                data.family().as_str()
            )));
        }
        Ok(())
    }

    pub fn dim_beta(&self) -> usize {
        self.baseline_cols.len() + 1
    }

    pub fn dim_psi(&self) -> usize {
        self.blip_cols.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.dim_beta() + self.dim_psi()
    }

    /// Index of the treatment main effect ψ₀ in the stacked θ = (β, ψ).
    pub fn psi0_index(&self) -> usize {
        self.dim_beta()
    }

    /// For each blip coefficient ψ_j (j ≥ 1), the position of its main effect within β.
    pub fn heredity_pairs(&self) -> Vec<(usize, usize)> {
        self.blip_cols
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let b = self
                    .baseline_cols
                    .iter()
                    .position(|bc| bc == c)
                    .expect("strong heredity checked at construction");
                (k + 1, b + 1)
            })
            .collect()
    }
}

/// Joint estimate θ = (β, ψ). `beta[0]` is the baseline intercept and
/// `psi[0]` the treatment main effect.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub sandwich_cov: Option<DMatrix<f64>>,
}

impl ThetaEstimate {
    pub fn from_theta(spec: &ModelSpec, theta: &DVector<f64>) -> Self {
        assert_eq!(theta.len(), spec.dim(), "theta length does not match spec");
        let nb = spec.dim_beta();
        ThetaEstimate {
            beta: theta.rows(0, nb).iter().copied().collect(),
            psi: theta.rows(nb, spec.dim_psi()).iter().copied().collect(),
            converged: true,
            iterations: 0,
            final_residual_norm: 0.0,
            sandwich_cov: None,
        }
    }

    pub fn theta(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.beta.len() + self.psi.len(),
            self.beta.iter().chain(self.psi.iter()).copied(),
        )
    }

    pub fn check_dims(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.dim_beta() || self.psi.len() != spec.dim_psi() {
            return Err(Error::Config(format!(
                "estimate has |beta| = {}, |psi| = {}; spec needs {} and {}",
                self.beta.len(),
                self.psi.len(),
                spec.dim_beta(),
                spec.dim_psi()
            )));
        }
        Ok(())
    }

    /// Indices j ≥ 1 with ψ_j ≠ 0, as positions into `blip_cols` plus one.
    pub fn psi_support(&self) -> Vec<usize> {
        (1..self.psi.len()).filter(|&j| self.psi[j] != 0.0).collect()
    }

    pub fn beta_support(&self) -> Vec<usize> {
        (1..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }
}

/// γ(x, 1; ψ) = ψ₀ + ψᵀx^ψ for every row.
pub fn blip_at_treatment(x: &DMatrix<f64>, spec: &ModelSpec, psi: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| {
        spec.blip_cols
            .iter()
            .zip(&psi[1..])
            .fold(psi[0], |acc, (&c, &v)| acc + v * x[(i, c)])
    })
}

/// f(x^β; β) = β₀ + βᵀx^β for every row.
pub fn baseline_predictor(x: &DMatrix<f64>, spec: &ModelSpec, beta: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| {
        spec.baseline_cols
            .iter()
            .zip(&beta[1..])
            .fold(beta[0], |acc, (&c, &v)| acc + v * x[(i, c)])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(family: Family) -> Dataset {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 1.0, -0.4, 2.0, 0.3, 0.0]);
        let a = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 3.0]);
        Dataset::new(x, a, y, family).unwrap()
    }

    #[test]
    fn rejects_bad_treatment_and_outcomes() {
        let x = DMatrix::from_element(2, 1, 0.5);
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(Dataset::new(x.clone(), a, y.clone(), Family::Count).is_err());
        let a = DVector::from_vec(vec![1.0, 0.0]);
        assert!(Dataset::new(x.clone(), a.clone(), DVector::from_vec(vec![0.0, 2.0]), Family::Binary).is_err());
        assert!(Dataset::new(x.clone(), a.clone(), DVector::from_vec(vec![0.5, 2.0]), Family::Count).is_err());
        assert!(Dataset::new(x, a, y, Family::Binary).is_ok());
    }

    #[test]
    fn rejects_non_finite_covariates() {
        let x = DMatrix::from_row_slice(2, 1, &[0.5, f64::NAN]);
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(Dataset::new(x, a, y, Family::Binary), Err(Error::Data(_))));
    }

    #[test]
    fn strong_heredity_enforced() {
        assert!(ModelSpec::new(vec![0], vec![0, 1], Link::Log).is_err());
        assert!(ModelSpec::new(vec![0, 1], vec![1], Link::Log).is_ok());
        let spec = ModelSpec::new(vec![1, 0], vec![0], Link::Log).unwrap();
        assert_eq!(spec.heredity_pairs(), vec![(1, 2)]);
    }

    #[test]
    fn validate_catches_out_of_range_and_link() {
        let d = tiny(Family::Count);
        assert!(ModelSpec::new(vec![0, 2], vec![0], Link::Log).unwrap().validate_for(&d).is_err());
        assert!(ModelSpec::new(vec![0], vec![0], Link::Logit).unwrap().validate_for(&d).is_err());
        assert!(ModelSpec::new(vec![0, 1], vec![0], Link::Log).unwrap().validate_for(&d).is_ok());
    }

    #[test]
    fn subset_keeps_rows() {
        let d = tiny(Family::Count);
        let s = d.subset(&[2, 0]);
        assert_eq!(s.n(), 2);
        assert_eq!(s.y()[0], 3.0);
        assert_eq!(s.x()[(1, 0)], 0.1);
    }
}
