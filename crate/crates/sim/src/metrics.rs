//! Aggregation of per-replication estimates into summary tables.

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};

/// Estimates with absolute value below this are treated as zero.
pub const ZERO_THRESHOLD: f64 = 1e-3;

/// What one method produced in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// `None` if the method failed.
    pub theta: Option<Vec<f64>>,
    pub converged: bool,
    pub adjusted: bool,
    pub tuning: Option<f64>,
    pub error: Option<String>,
}

impl Outcome {
    pub fn success(theta: Vec<f64>, converged: bool, adjusted: bool, tuning: Option<f64>) -> Self {
        Outcome { theta: Some(theta), converged, adjusted, tuning, error: None }
    }

    pub fn failure(error: String) -> Self {
        Outcome { theta: None, converged: false, adjusted: false, tuning: None, error: Some(error) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    /// Per coefficient, over successful replications.
    pub rms: Vec<f64>,
    /// Per coefficient, divisor `m − 1`.
    pub sd: Vec<f64>,
    /// Per coefficient, mean estimate minus truth.
    pub bias: Vec<f64>,
    /// Mean number of true zeros estimated as zero.
    pub t: f64,
    /// Mean number of true nonzeros estimated as zero.
    pub f: f64,
    /// Mean number of selected coefficients.
    pub ams: f64,
    /// Fraction of replications recovering the true support exactly.
    pub pcim: f64,
    pub successes: usize,
    pub failures: usize,
    /// Successful fits that reported convergence.
    pub converged: usize,
    /// Successful fits that used the adjusted moments.
    pub adjusted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub config: ExperimentConfig,
    pub truth: Vec<f64>,
    /// Coordinates subject to selection (the penalized ones).
    pub selection: Vec<usize>,
    pub methods: Vec<MethodMetrics>,
}

impl MetricsTable {
    pub fn method(&self, m: Method) -> Option<&MethodMetrics> {
        self.methods.iter().find(|x| x.method == m)
    }

    /// Number of nonzero true coefficients among the selection coordinates.
    pub fn q_true(&self) -> usize {
        self.selection.iter().filter(|&&j| self.truth[j] != 0.0).count()
    }
}

pub fn is_zero(v: f64) -> bool {
    v.abs() < ZERO_THRESHOLD
}

/// Summaries of `outcomes` (ordered by replication) against `truth`.
pub fn aggregate(method: Method, truth: &[f64], selection: &[usize], outcomes: &[&Outcome]) -> MethodMetrics {
    let p = truth.len();
    let estimates: Vec<&Vec<f64>> = outcomes.iter().filter_map(|o| o.theta.as_ref()).collect();
    let m = estimates.len();
    let failures = outcomes.len() - m;
    let converged = outcomes.iter().filter(|o| o.theta.is_some() && o.converged).count();
    let adjusted = outcomes.iter().filter(|o| o.theta.is_some() && o.adjusted).count();
    if m == 0 {
        let nan = vec![f64::NAN; p];
        return MethodMetrics {
            method,
            rms: nan.clone(),
            sd: nan.clone(),
            bias: nan,
            t: f64::NAN,
            f: f64::NAN,
            ams: f64::NAN,
            pcim: f64::NAN,
            successes: 0,
            failures,
            converged,
            adjusted,
        };
    }
    let mf = m as f64;
    let mut rms = vec![0.0; p];
    let mut sd = vec![0.0; p];
    let mut bias = vec![0.0; p];
    for j in 0..p {
        let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / mf;
        bias[j] = mean - truth[j];
        rms[j] = (estimates.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / mf).sqrt();
        sd[j] = if m > 1 {
            (estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    let (mut t, mut f, mut ams, mut exact) = (0usize, 0usize, 0usize, 0usize);
    for e in &estimates {
        let mut all = true;
        for &j in selection {
            let zero_hat = is_zero(e[j]);
            let zero_true = truth[j] == 0.0;
            match (zero_true, zero_hat) {
                (true, true) => t += 1,
                (false, true) => f += 1,
                _ => {}
            }
            if !zero_hat {
                ams += 1;
            }
            all &= zero_true == zero_hat;
        }
        exact += all as usize;
    }
    MethodMetrics {
        method,
        rms,
        sd,
        bias,
        t: t as f64 / mf,
        f: f as f64 / mf,
        ams: ams as f64 / mf,
        pcim: exact as f64 / mf,
        successes: m,
        failures,
        converged,
        adjusted,
    }
}
