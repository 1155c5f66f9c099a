//! Checkpoints and CSV exports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamVector, Tensor};
use crate::controller::Controller;
use crate::error::{contract, Error, Result};
use crate::gcn::GcnConfig;
use crate::oracle::{PathLabels, ValueTable};

/// A saved network: its shape plus a flat parameter vector with layout header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Gcn { config: GcnConfig, params: ParamVector },
    Controller { controller: Controller },
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let ck: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            offset: 0,
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Checkpoint::Gcn { config, params } => {
                config.validate()?;
                params.layout == config.layout() && params.data.len() == params.layout.total_len()
            }
            Checkpoint::Controller { controller: c } => {
                c.params.layout == Controller::layout(&c.config, &c.gcn, c.num_nodes)
                    && c.params.data.len() == c.params.layout.total_len()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(contract("checkpoint parameters do not match the declared layout"))
        }
    }

    pub fn into_gcn(self) -> Result<(GcnConfig, ParamVector)> {
        match self {
            Checkpoint::Gcn { config, params } => Ok((config, params)),
            Checkpoint::Controller { .. } => Err(contract("expected a GCN checkpoint, found a controller")),
        }
    }

    pub fn into_controller(self) -> Result<Controller> {
        match self {
            Checkpoint::Controller { controller } => Ok(controller),
            Checkpoint::Gcn { .. } => Err(contract("expected a controller checkpoint, found a GCN")),
        }
    }
}

/// `node_id,x,y,z_0,…,z_{h−1}`
pub fn embeddings_csv(latent: &Tensor, n: usize) -> String {
    let h = latent.cols();
    let mut out = String::from("node_id,x,y");
    for k in 0..h {
        write!(out, ",z_{k}").unwrap();
    }
    out.push('\n');
    for v in 0..latent.rows() {
        write!(out, "{v},{},{}", v % n, v / n).unwrap();
        for z in latent.row(v) {
            write!(out, ",{z}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// `node_id,x,y,p_0,p_1,cluster`
pub fn projection_csv(coords: &[[f64; 2]], clusters: &[usize], n: usize) -> String {
    let mut out = String::from("node_id,x,y,p_0,p_1,cluster\n");
    for (v, (c, k)) in coords.iter().zip(clusters).enumerate() {
        writeln!(out, "{v},{},{},{},{},{k}", v % n, v / n, c[0], c[1]).unwrap();
    }
    out
}

pub fn labels_csv(labels: &PathLabels) -> String {
    let mut out = String::from("node_id,label\n");
    for (v, l) in labels.labels.iter().enumerate() {
        writeln!(out, "{v},{l}").unwrap();
    }
    out
}

pub fn values_csv(values: &ValueTable) -> String {
    let mut out = String::from("node_id,value\n");
    for (v, x) in values.values.iter().enumerate() {
        writeln!(out, "{v},{x}").unwrap();
    }
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents).map_err(|e| Error::State(format!("writing {name}: {e}")))
}
