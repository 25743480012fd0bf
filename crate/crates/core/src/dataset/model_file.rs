//! Binary container for a trained model.
//!
//! Layout: 8-byte magic `HRTFMDL1`, u64 little-endian header length, a JSON
//! header, then the float64 little-endian arrays listed in the header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::archive::{validate_directions, write_atomic, Direction, EARS};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::pca::{ColumnLayout, PcaModel};
use crate::regression::{validate_feature_indices, RegressionModel, DESIGN_COLUMNS};

pub const MODEL_MAGIC: &[u8; 8] = b"HRTFMDL1";
const MAGIC_STEM: &[u8; 7] = b"HRTFMDL";

/// Everything needed to individualize a listener.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub pca: PcaModel,
    pub regression: RegressionModel,
    /// Mean onset delay in samples, ears × directions.
    pub mean_delays: Vec<f64>,
    pub feature_indices: Vec<usize>,
    pub directions: Vec<Direction>,
    pub subjects: Vec<String>,
    pub sample_rate: f64,
    pub n_fft: usize,
    pub standardized: bool,
    pub provenance: String,
}

impl TrainedModel {
    pub fn ears(&self) -> usize {
        self.pca.layout.ears
    }

    pub fn mean_delay(&self, ear: usize, direction: usize) -> f64 {
        self.mean_delays[ear * self.directions.len() + direction]
    }

    /// Checks that every part refers to the same grid.
    pub fn validate(&self) -> Result<()> {
        validate_directions(&self.directions)?;
        validate_feature_indices(&self.feature_indices)?;
        let layout = self.pca.layout;
        let d = self.directions.len();
        let n = self.pca.n_bins();
        let q = self.pca.q();
        let checks = [
            ("layout ears", EARS, layout.ears),
            ("layout directions", d, layout.directions),
            ("layout subjects", self.subjects.len(), layout.subjects),
            ("n_fft / 2", self.n_fft / 2, n),
            ("basis rows", n, self.pca.basis.rows()),
            ("eigenvalues", n, self.pca.eigenvalues.len()),
            ("weights rows", q, self.pca.weights.rows()),
            ("weights columns", layout.len(), self.pca.weights.cols()),
            ("regression ears", EARS, self.regression.ears),
            ("regression directions", d, self.regression.directions),
            ("regression q", q, self.regression.q),
            (
                "regression coefficients",
                EARS * d * q * DESIGN_COLUMNS,
                self.regression.coefficients.len(),
            ),
            ("conditioning", EARS * d * q, self.regression.conditioning.len()),
            ("mean delays", EARS * d, self.mean_delays.len()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(Error::Format(format!("{what}: expected {expected}, found {found}")));
            }
        }
        if self.regression.feature_indices != self.feature_indices {
            return Err(Error::Format("regression feature order differs from model".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    n_bins: usize,
    q: usize,
    ears: usize,
    n_fft: usize,
    sample_rate: f64,
    standardized: bool,
    feature_indices: Vec<usize>,
    directions: Vec<Direction>,
    subjects: Vec<String>,
    provenance: String,
    arrays: Vec<ArrayEntry>,
}

const ARRAY_ORDER: [&str; 7] = [
    "mean",
    "basis",
    "eigenvalues",
    "weights",
    "beta",
    "mean_delays",
    "conditioning",
];

pub fn encode_model(model: &TrainedModel) -> Result<Vec<u8>> {
    model.validate()?;
    let arrays: [&[f64]; 7] = [
        &model.pca.mean,
        model.pca.basis.as_slice(),
        &model.pca.eigenvalues,
        model.pca.weights.as_slice(),
        &model.regression.coefficients,
        &model.mean_delays,
        &model.regression.conditioning,
    ];
    let header = Header {
        n_bins: model.pca.n_bins(),
        q: model.pca.q(),
        ears: model.ears(),
        n_fft: model.n_fft,
        sample_rate: model.sample_rate,
        standardized: model.standardized,
        feature_indices: model.feature_indices.clone(),
        directions: model.directions.clone(),
        subjects: model.subjects.clone(),
        provenance: model.provenance.clone(),
        arrays: ARRAY_ORDER
            .iter()
            .zip(&arrays)
            .map(|(name, a)| ArrayEntry {
                name: name.to_string(),
                len: a.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::json("model header", e))?;
    let payload: usize = arrays.iter().map(|a| a.len() * 8).sum();
    let mut out = Vec::with_capacity(16 + json.len() + payload);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for a in arrays {
        for x in a {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 8 {
        return Err(Error::Format("file shorter than the magic".into()));
    }
    let magic = &bytes[..8];
    if magic != MODEL_MAGIC {
        if &magic[..7] == MAGIC_STEM && magic[7].is_ascii_digit() {
            return Err(Error::Version {
                expected: "1".into(),
                found: (magic[7] as char).to_string(),
            });
        }
        return Err(Error::Format("bad magic bytes".into()));
    }
    let len_bytes: [u8; 8] = bytes
        .get(8..16)
        .ok_or_else(|| Error::Format("truncated header length".into()))?
        .try_into()
        .expect("8 bytes");
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
        .map_err(|_| Error::Format("header length overflows".into()))?;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::Format(format!("header JSON: {e}")))?;

    let names: Vec<&str> = header.arrays.iter().map(|a| a.name.as_str()).collect();
    if names != ARRAY_ORDER {
        return Err(Error::Format(format!("unexpected array list {names:?}")));
    }
    let mut cursor = header_end;
    let mut arrays = Vec::with_capacity(ARRAY_ORDER.len());
    for entry in &header.arrays {
        let end = entry
            .len
            .checked_mul(8)
            .and_then(|n| cursor.checked_add(n))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated payload in array '{}'", entry.name)))?;
        let values: Vec<f64> = bytes[cursor..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        arrays.push(values);
        cursor = end;
    }
    if cursor != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - cursor
        )));
    }
    let mut arrays = arrays.into_iter();
    let mut next = || arrays.next().expect("array count checked");
    let (mean, basis, eigenvalues, weights, beta, mean_delays, conditioning) =
        (next(), next(), next(), next(), next(), next(), next());

    let n = header.n_bins;
    let q = header.q;
    let layout = ColumnLayout {
        subjects: header.subjects.len(),
        ears: header.ears,
        directions: header.directions.len(),
    };
    let basis = Matrix::from_vec(n, q, basis).map_err(|e| Error::Format(e.to_string()))?;
    let weights =
        Matrix::from_vec(q, layout.len(), weights).map_err(|e| Error::Format(e.to_string()))?;
    let model = TrainedModel {
        pca: PcaModel {
            mean,
            basis,
            eigenvalues,
            weights,
            layout,
        },
        regression: RegressionModel {
            ears: header.ears,
            directions: header.directions.len(),
            q,
            coefficients: beta,
            conditioning,
            feature_indices: header.feature_indices.clone(),
        },
        mean_delays,
        feature_indices: header.feature_indices,
        directions: header.directions,
        subjects: header.subjects,
        sample_rate: header.sample_rate,
        n_fft: header.n_fft,
        standardized: header.standardized,
        provenance: header.provenance,
    };
    model.validate().map_err(|e| match e {
        e @ Error::Format(_) => e,
        e => Error::Format(e.to_string()),
    })?;
    Ok(model)
}

/// Writes atomically: on failure no partial file is left at `path`.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_model(model)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
