use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::metrics::{IsomorphismReport, MetricReport};

pub const REPORT_SCHEMA: u32 = 1;

/// One evaluated maze with paired unadapted and adapted metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub id: usize,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub unadapted: MetricReport,
    pub adapted: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGroup {
    pub name: String,
    pub entries: Vec<EvalEntry>,
    pub mean_unadapted: MetricReport,
    pub mean_adapted: MetricReport,
}

impl EvalGroup {
    /// Sorts entries by id and computes the group means.
    pub fn new(name: impl Into<String>, mut entries: Vec<EvalEntry>) -> Self {
        entries.sort_by_key(|e| e.id);
        let un: Vec<MetricReport> = entries.iter().map(|e| e.unadapted).collect();
        let ad: Vec<MetricReport> = entries.iter().map(|e| e.adapted).collect();
        Self {
            name: name.into(),
            mean_unadapted: MetricReport::mean(&un),
            mean_adapted: MetricReport::mean(&ad),
            entries,
        }
    }
}

/// Latent-space diagnostics for the base network on its training maze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAnalysis {
    pub isomorphism: IsomorphismReport,
    pub kmeans_k: usize,
    pub kmeans_inertia: f64,
    pub cluster_sizes: Vec<usize>,
    pub assignments: Vec<usize>,
    pub projection_eigenvalues: [f64; 2],
    pub projection_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub groups: Vec<EvalGroup>,
    /// Named scalar results that are not per-maze pairs.
    pub summary: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub embedding_analysis: Option<EmbeddingAnalysis>,
    /// Per-epoch total losses, keyed by training stage.
    pub traces: BTreeMap<String, Vec<f64>>,
    /// File names written next to the report.
    pub artifacts: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            config,
            groups: Vec::new(),
            summary: BTreeMap::new(),
            embedding_analysis: None,
            traces: BTreeMap::new(),
            artifacts: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn group(&self, name: &str) -> Option<&EvalGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
