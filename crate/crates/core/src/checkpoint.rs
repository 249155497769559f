//! Checkpoint files: a magic line, a one-line JSON header, then every tensor
//! as little-endian f32 in header order.
//!
//! ```text
//! HTRCKPT 1\n
//! {"format_version":1,"vocab":"...","epoch":3,"config":{...},"tensors":[{"name":..,"shape":[..]},..]}\n
//! <raw f32 data>
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::Parameterized;
use crate::tensor::{ParamSet, Tensor};
use crate::trainer::{OptimizerState, RunConfig, TrainState};
use crate::vocab::Vocab;

pub const MAGIC: &str = "HTRCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub vocab: Vocab,
    /// Completed training epochs.
    pub epoch: usize,
    pub config: RunConfig,
    pub tensors: Vec<TensorEntry>,
}

/// Model parameters followed by the `opt.*` optimizer caches.
pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut tensors: Vec<(String, Tensor<f32>)> = Vec::new();
    state.model.visit(&mut |n, t| tensors.push((n, t.clone())));
    for (n, t) in state.opt.to_param_set().iter() {
        tensors.push((n.to_owned(), t.clone()));
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        vocab: state.model.vocab.clone(),
        epoch: state.epoch,
        config: state.config.clone(),
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n").into_bytes();
    out.extend(
        serde_json::to_string(&header)
            .expect("header serializes")
            .into_bytes(),
    );
    out.push(b'\n');
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn split_line<'a>(bytes: &'a [u8], path: &Path, what: &str) -> Result<(&'a [u8], &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, format!("checkpoint {what} is not terminated")))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

/// Header only; the tensor data is not read.
pub fn read_header(path: &Path) -> Result<Header> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(&bytes, path)?.0)
}

fn parse<'a>(bytes: &'a [u8], path: &Path) -> Result<(Header, &'a [u8])> {
    let (magic, rest) = split_line(bytes, path, "magic line")?;
    let want = format!("{MAGIC} {FORMAT_VERSION}");
    if magic != want.as_bytes() {
        return Err(Error::format(
            path,
            format!(
                "expected {want:?}, found {:?}",
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let (json, data) = split_line(rest, path, "header")?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| Error::format(path, format!("header: {e}")))?;
    Ok((header, data))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<TrainState> {
    let (header, data) = parse(bytes, path)?;
    header.config.validate()?;
    let expected: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    if data.len() != 4 * expected {
        return Err(Error::format(
            path,
            format!(
                "tensor data is {} bytes, header describes {}",
                data.len(),
                4 * expected
            ),
        ));
    }
    let mut all = ParamSet::new();
    let mut floats = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let t = Tensor::from_vec(&entry.shape, floats.by_ref().take(n).collect())?;
        all.insert(entry.name.clone(), t)?;
    }
    let (opt_set, model_set): (Vec<_>, Vec<_>) = all
        .iter()
        .map(|(n, t)| (n.to_owned(), t.clone()))
        .partition(|(n, _)| n.starts_with("opt."));
    let mut model = Model::zeros(header.vocab.clone(), header.config.model.clone())?;
    model
        .load_param_set(&model_set.into_iter().collect())
        .map_err(|e| Error::format(path, format!("model tensors: {e}")))?;
    let opt = OptimizerState::from_param_set(&model, &opt_set.into_iter().collect())
        .map_err(|e| Error::format(path, format!("optimizer tensors: {e}")))?;
    Ok(TrainState {
        config: header.config,
        epoch: header.epoch,
        model,
        opt,
    })
}

pub fn save(path: &Path, state: &TrainState) -> Result<()> {
    fs::write(path, encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
