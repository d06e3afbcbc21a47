//! Parameter checkpoints: `<stem>.csv` holds `layer,block,index,value` rows,
//! `<stem>.json` describes the network structure.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{build_network, Network, NetworkConfig, ParamBlock};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerSidecar {
    kind: super::LayerKind,
    n_in: usize,
    n_out: usize,
    rep_in: String,
    rep_out: String,
    activation: super::Activation,
    blocks: Vec<ParamBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: u32,
    config: NetworkConfig,
    param_count: usize,
    layers: Vec<LayerSidecar>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    layer: usize,
    block: String,
    index: usize,
    value: f64,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("csv"), stem.with_extension("json"))
}

pub fn save_checkpoint(net: &Network, stem: &Path) -> Result<()> {
    let (csv_path, json_path) = paths(stem);
    let sidecar = Sidecar {
        format: CHECKPOINT_FORMAT,
        config: net.config().clone(),
        param_count: net.param_count(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerSidecar {
                kind: l.kind,
                n_in: l.n_in,
                n_out: l.n_out,
                rep_in: l.rep_in.to_string(),
                rep_out: l.rep_out.to_string(),
                activation: l.activation,
                blocks: l.blocks.clone(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(json_path)?), &sidecar)?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
    for (li, layer) in net.layers().iter().enumerate() {
        for b in &layer.blocks {
            for (index, &value) in net.params()[b.offset..b.offset + b.len].iter().enumerate() {
                w.serialize(Row {
                    layer: li,
                    block: b.name.clone(),
                    index,
                    value,
                })
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

pub fn load_checkpoint(stem: &Path) -> Result<Network> {
    let (csv_path, json_path) = paths(stem);
    let sidecar: Sidecar = serde_json::from_reader(File::open(json_path)?)?;
    if sidecar.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!(
            "unsupported checkpoint format {}",
            sidecar.format
        )));
    }
    let mut net = build_network(&sidecar.config)?;
    if net.param_count() != sidecar.param_count {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            actual: sidecar.param_count,
        });
    }
    let mut seen = 0;
    let mut r = csv::Reader::from_reader(File::open(csv_path)?);
    for row in r.deserialize() {
        let row: Row = row.map_err(csv_err)?;
        let block = net
            .layers()
            .get(row.layer)
            .and_then(|l| l.block(&row.block))
            .filter(|b| row.index < b.len)
            .ok_or_else(|| {
                Error::Config(format!(
                    "checkpoint row {}/{}/{} does not match the network",
                    row.layer, row.block, row.index
                ))
            })?
            .clone();
        net.params_mut()[block.offset + row.index] = row.value;
        seen += 1;
    }
    if seen != net.param_count() {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            actual: seen,
        });
    }
    Ok(net)
}
