//! Single-file model bundles: magic, JSON metadata, little-endian parameters.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::conv::{Activation, ConvStressModule};
use super::features::FeatureStats;
use super::mlp::{Mlp, MlpShape};
use super::model::{ModelBundle, ModelKind, StressFrontEnd};
use crate::dem::{CombineKind, DemParams};
use crate::growth::GrowthParams;
use crate::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 8] = b"AGSTRS01";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ConvMeta {
    activation: Activation,
    height: usize,
    stride: usize,
    n_features: usize,
}

impl From<&ConvStressModule> for ConvMeta {
    fn from(m: &ConvStressModule) -> Self {
        Self {
            activation: m.activation,
            height: m.height,
            stride: m.stride,
            n_features: m.n_features,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FrontMeta {
    Dem {
        params: DemParams,
        ksat_bounds: [f64; 2],
    },
    Cnn {
        heat: ConvMeta,
        drought: ConvMeta,
        d_max: usize,
        growth: GrowthParams,
        heat_features: Vec<super::features::Feature>,
        drought_features: Vec<super::features::Feature>,
        heat_stats: FeatureStats,
        drought_stats: FeatureStats,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleMeta {
    tool_version: String,
    model: ModelKind,
    combine: CombineKind,
    front: FrontMeta,
    mlp: MlpShape,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
    id_encoding: String,
    hybrid_ids: Vec<String>,
    env_ids: Vec<String>,
    seed: u64,
    epochs_trained: usize,
    n_params: usize,
    #[serde(default)]
    provenance: Option<String>,
}

/// Serialize a bundle to bytes.
pub fn encode_bundle(bundle: &ModelBundle, provenance: Option<&str>) -> Result<Vec<u8>> {
    let front = match &bundle.front {
        StressFrontEnd::Dem { params, ksat_bounds } => FrontMeta::Dem {
            params: params.clone(),
            ksat_bounds: *ksat_bounds,
        },
        StressFrontEnd::Cnn {
            heat,
            drought,
            d_max,
            growth,
            heat_stats,
            drought_stats,
        } => FrontMeta::Cnn {
            heat: heat.into(),
            drought: drought.into(),
            d_max: *d_max,
            growth: *growth,
            heat_features: super::ModuleKind::Heat.features().to_vec(),
            drought_features: super::ModuleKind::Drought.features().to_vec(),
            heat_stats: heat_stats.clone(),
            drought_stats: drought_stats.clone(),
        },
    };
    let params = bundle.params();
    let meta = BundleMeta {
        tool_version: crate::VERSION.to_string(),
        model: bundle.kind,
        combine: bundle.combine,
        front,
        mlp: bundle.mlp.shape(),
        input_shift: bundle.input_shift.clone(),
        input_scale: bundle.input_scale.clone(),
        target_mean: bundle.target_mean,
        target_scale: bundle.target_scale,
        id_encoding: "min_max_scalar".into(),
        hybrid_ids: bundle.hybrid_ids.clone(),
        env_ids: bundle.env_ids.clone(),
        seed: bundle.seed,
        epochs_trained: bundle.epochs_trained,
        n_params: params.len(),
        provenance: provenance.map(str::to_string),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = Vec::with_capacity(8 + 8 + json.len() + 8 + 8 * params.len());
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in &params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!("truncated bundle while reading {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u64(bytes: &mut &[u8], what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, 8, what)?.try_into().unwrap()))
}

/// Deserialize a bundle from bytes.
pub fn decode_bundle(mut bytes: &[u8]) -> Result<ModelBundle> {
    if take(&mut bytes, 8, "magic")? != BUNDLE_MAGIC {
        return Err(Error::Format("bad magic header".into()));
    }
    let json_len = take_u64(&mut bytes, "metadata length")? as usize;
    let meta: BundleMeta = serde_json::from_slice(take(&mut bytes, json_len, "metadata")?)?;
    let n_params = take_u64(&mut bytes, "parameter count")? as usize;
    if n_params != meta.n_params {
        return Err(Error::Format("parameter count disagrees with metadata".into()));
    }
    let raw = take(&mut bytes, 8 * n_params, "parameters")?;
    if !bytes.is_empty() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let front = match meta.front {
        FrontMeta::Dem { params, ksat_bounds } => StressFrontEnd::Dem { params, ksat_bounds },
        FrontMeta::Cnn {
            heat,
            drought,
            d_max,
            growth,
            heat_stats,
            drought_stats,
            ..
        } => StressFrontEnd::Cnn {
            heat: ConvStressModule::zeros(heat.activation, heat.height, heat.stride, heat.n_features),
            drought: ConvStressModule::zeros(drought.activation, drought.height, drought.stride, drought.n_features),
            d_max,
            growth,
            heat_stats,
            drought_stats,
        },
    };
    let mut bundle = ModelBundle {
        kind: meta.model,
        front,
        combine: meta.combine,
        mlp: Mlp::zeros(&meta.mlp),
        input_shift: meta.input_shift,
        input_scale: meta.input_scale,
        target_mean: meta.target_mean,
        target_scale: meta.target_scale,
        hybrid_ids: meta.hybrid_ids,
        env_ids: meta.env_ids,
        seed: meta.seed,
        epochs_trained: meta.epochs_trained,
    };
    if bundle.input_shift.len() != bundle.input_len() || bundle.input_scale.len() != bundle.input_len() {
        return Err(Error::Format("input normalization has the wrong length".into()));
    }
    bundle.set_params(&params)?;
    Ok(bundle)
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path, provenance: Option<&str>) -> Result<()> {
    let bytes = encode_bundle(bundle, provenance)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bundle(&bytes)
}
