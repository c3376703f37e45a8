use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::types::{NsblResult, Relevance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub log_alpha_map: f64,
    pub gamma_rms: f64,
    pub classification: Relevance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumSummary {
    pub log_alpha: Vec<f64>,
    pub objective: f64,
}

/// Serializable summary of an NSBL run keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsblReport {
    pub parameters: Vec<ParameterRow>,
    pub objective: f64,
    pub log_evidence: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub distinct_optima: Vec<OptimumSummary>,
    /// Path of the persisted posterior mixture, if any.
    pub posterior_gmm: Option<String>,
}

impl NsblReport {
    /// `names` are the ARD parameter names in `ard_set` order.
    pub fn new(result: &NsblResult, names: &[String], posterior_gmm: Option<String>) -> Self {
        let parameters = names
            .iter()
            .enumerate()
            .map(|(i, n)| ParameterRow {
                name: n.clone(),
                log_alpha_map: result.log_alpha_map.log_alpha[i],
                gamma_rms: result.relevance.gamma_rms[i],
                classification: result.classification[i],
            })
            .collect();
        Self {
            parameters,
            objective: result.objective,
            log_evidence: result.log_evidence,
            objective_trace: result.objective_trace.clone(),
            converged: result.converged,
            distinct_optima: result
                .distinct_optima
                .iter()
                .map(|&i| OptimumSummary {
                    log_alpha: result.runs[i].log_alpha.clone(),
                    objective: result.runs[i].objective,
                })
                .collect(),
            posterior_gmm,
        }
    }

    /// Plain-text table: parameter, log alpha MAP, gamma rms, classification.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>12} {:>10}  {}", "parameter", "log_alpha", "gamma_rms", "class");
        for r in &self.parameters {
            let class = match r.classification {
                Relevance::Relevant => "relevant",
                Relevance::Irrelevant => "irrelevant",
                Relevance::Inconclusive => "inconclusive",
            };
            let _ = writeln!(s, "{:<14} {:>12.3} {:>10.3}  {class}", r.name, r.log_alpha_map, r.gamma_rms);
        }
        let _ = writeln!(s, "objective {:.6}  (log evidence {:.6})", self.objective, self.log_evidence);
        s
    }
}
