//! Self-describing JSON model bundles.
//!
//! A bundle carries the format tag and version, the architecture, the
//! normalization bounds needed to turn predictions back into mph, and every
//! parameter array as `{name, shape, data}` with row-major data.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ArchitectureConfig;
use super::network::LaneCnn;
use super::params::ModelParams;
use crate::data::NormalizationParams;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::ParamArrays;

pub const BUNDLE_FORMAT: &str = "lanecast-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// A trained network together with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub network: LaneCnn,
    pub norm: NormalizationParams,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDoc {
    format: String,
    version: u32,
    architecture: ArchitectureConfig,
    normalization: NormalizationParams,
    parameters: Vec<ParamArray>,
}

pub fn write_bundle<W: Write>(writer: W, network: &LaneCnn, norm: &NormalizationParams) -> Result<()> {
    let doc = BundleDoc {
        format: BUNDLE_FORMAT.to_string(),
        version: BUNDLE_VERSION,
        architecture: network.config().clone(),
        normalization: *norm,
        parameters: network
            .params()
            .shaped_arrays()
            .into_iter()
            .map(|(name, shape, data)| ParamArray {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect(),
    };
    serde_json::to_writer(writer, &doc).map_err(|e| Error::Io(e.into()))
}

/// Writes the bundle atomically to `path`.
pub fn save_bundle(path: &Path, network: &LaneCnn, norm: &NormalizationParams) -> Result<()> {
    write_atomic(path, |w| write_bundle(w, network, norm))
}

/// Parses and validates a bundle from its bytes.
pub fn read_bundle(bytes: &[u8]) -> Result<ModelBundle> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptBundle(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::CorruptBundle("top level is not an object".into()))?;
    if obj.get("format").and_then(|f| f.as_str()) != Some(BUNDLE_FORMAT) {
        return Err(Error::CorruptBundle(format!("missing `format: {BUNDLE_FORMAT}` tag")));
    }
    let version = obj
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptBundle("missing version".into()))?;
    if version != u64::from(BUNDLE_VERSION) {
        return Err(Error::BundleVersion {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: BUNDLE_VERSION,
        });
    }
    if obj.get("normalization").is_none_or(|n| n.is_null()) {
        return Err(Error::MissingNormalization);
    }
    let doc: BundleDoc = serde_json::from_value(value).map_err(|e| Error::CorruptBundle(e.to_string()))?;
    doc.normalization
        .validate()
        .map_err(|e| Error::CorruptBundle(format!("normalization: {e}")))?;
    doc.architecture
        .validate()
        .map_err(|e| Error::CorruptBundle(format!("architecture: {e}")))?;

    let mut params = ModelParams::zeros(&doc.architecture)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .shaped_arrays()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected.len() != doc.parameters.len() {
        return Err(Error::CorruptBundle(format!(
            "expected {} parameter arrays, found {}",
            expected.len(),
            doc.parameters.len()
        )));
    }
    for (((name, shape), slot), array) in expected
        .iter()
        .zip(params.arrays_mut().into_iter().map(|(_, a)| a))
        .zip(&doc.parameters)
    {
        if &array.name != name || &array.shape != shape {
            return Err(Error::CorruptBundle(format!(
                "parameter {name} {shape:?} does not match stored {} {:?}",
                array.name, array.shape
            )));
        }
        if array.data.len() != slot.len() {
            return Err(Error::CorruptBundle(format!(
                "parameter {name}: {} values for shape {shape:?}",
                array.data.len()
            )));
        }
        slot.copy_from_slice(&array.data);
    }
    let network = LaneCnn::from_params(doc.architecture, params)
        .map_err(|e| Error::CorruptBundle(e.to_string()))?;
    Ok(ModelBundle {
        network,
        norm: doc.normalization,
    })
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read bundle {}: {e}", path.display())))?;
    read_bundle(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CorridorShape;
    use crate::testutil::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (LaneCnn, NormalizationParams) {
        let cfg = ArchitectureConfig {
            shape: CorridorShape::new(4, 5, 2).unwrap(),
            filters_per_layer: [3, 4, 5],
            fc_hidden: 12,
            seed: 17,
            ..Default::default()
        };
        (LaneCnn::new(cfg).unwrap(), NormalizationParams::new(2.0, 66.5, 0.0, 240.0).unwrap())
    }

    fn encode(net: &LaneCnn, norm: &NormalizationParams) -> Vec<u8> {
        let mut buf = Vec::new();
        write_bundle(&mut buf, net, norm).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_forward_bit_exactly() {
        let (net, norm) = fixture();
        let back = read_bundle(&encode(&net, &norm)).unwrap();
        assert_eq!(back.norm, norm);
        assert_eq!(back.network.params(), net.params());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x_u = random_tensor(&mut rng, 4, 5, 2);
        let x_q = random_tensor(&mut rng, 4, 5, 2);
        assert_eq!(back.network.predict(&x_u, &x_q).unwrap(), net.predict(&x_u, &x_q).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let (net, norm) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_bundle(&path, &net, &norm).unwrap();
        assert_eq!(load_bundle(&path).unwrap().network, net);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let (net, norm) = fixture();
        let bytes = encode(&net, &norm);
        let err = read_bundle(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::CorruptBundle(_)), "{err:?}");
    }

    #[test]
    fn missing_normalization_is_reported() {
        let (net, norm) = fixture();
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&net, &norm)).unwrap();
        v.as_object_mut().unwrap().remove("normalization");
        let err = read_bundle(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, Error::MissingNormalization));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let (net, norm) = fixture();
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&net, &norm)).unwrap();
        v["version"] = serde_json::json!(7);
        let err = read_bundle(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, Error::BundleVersion { found: 7, expected: 1 }));
    }

    #[test]
    fn shape_inconsistency_is_corrupt() {
        let (net, norm) = fixture();
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&net, &norm)).unwrap();
        v["architecture"]["fc_hidden"] = serde_json::json!(13);
        assert!(matches!(
            read_bundle(&serde_json::to_vec(&v).unwrap()).unwrap_err(),
            Error::CorruptBundle(_)
        ));
        let mut v: serde_json::Value = serde_json::from_slice(&encode(&net, &norm)).unwrap();
        v["parameters"][0]["data"].as_array_mut().unwrap().pop();
        assert!(matches!(
            read_bundle(&serde_json::to_vec(&v).unwrap()).unwrap_err(),
            Error::CorruptBundle(_)
        ));
    }
}
