//! Directory checkpoints: `manifest.json` plus one raw little-endian `f64`
//! file per parameter array.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mter_core::corpus::IdMap;
use mter_core::{Dims, FactorModel, IndexedCorpus, Matrix, MterError, Tensor3, TrainConfig};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no checkpoint manifest at {0}")]
    MissingManifest(PathBuf),
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint version {found:?} (expected {FORMAT_VERSION:?})")]
    UnsupportedVersion { found: String },
    #[error("array {array}: expected {expected} values, file holds {found} bytes")]
    Truncated {
        array: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("manifest inconsistent: {0}")]
    Shape(String),
    #[error("array {array}[{index}] is {value}; parameters must be finite and non-negative")]
    Invalid {
        array: &'static str,
        index: usize,
        value: f64,
    },
    #[error(transparent)]
    Model(#[from] MterError),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub dims: Dims,
    pub rating_max: u32,
    pub users: IdMap,
    pub items: IdMap,
    pub features: IdMap,
    pub opinions: IdMap,
    pub config: TrainConfig,
}

impl Manifest {
    /// Element count of every array file, in file order.
    fn shapes(&self) -> [(&'static str, usize); 8] {
        let Dims { a, b, c, d } = self.dims;
        [
            ("U", self.m * a),
            ("I", self.n * b),
            ("F", self.p * c),
            ("f_dummy", c),
            ("O", self.q * d),
            ("G1", a * b * c),
            ("G2", a * c * d),
            ("G3", b * c * d),
        ]
    }

    /// Empty corpus carrying the checkpoint's id maps.
    pub fn corpus(&self) -> IndexedCorpus {
        IndexedCorpus {
            users: self.users.clone(),
            items: self.items.clone(),
            features: self.features.clone(),
            opinions: self.opinions.clone(),
            reviews: Vec::new(),
            rating_max: self.rating_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: FactorModel,
}

fn arrays(model: &FactorModel) -> [&[f64]; 8] {
    let c = model.features.cols();
    let f = model.features.as_slice();
    let (rows, dummy) = f.split_at(f.len() - c);
    [
        model.users.as_slice(),
        model.items.as_slice(),
        rows,
        dummy,
        model.opinions.as_slice(),
        model.g1.as_slice(),
        model.g2.as_slice(),
        model.g3.as_slice(),
    ]
}

/// Writes `manifest.json` and the parameter arrays into `dir`, creating it
/// if needed. `corpus` supplies the id maps and rating scale.
pub fn save_checkpoint(
    dir: &Path,
    model: &FactorModel,
    corpus: &IndexedCorpus,
    config: &TrainConfig,
) -> Result<Manifest> {
    let manifest = Manifest {
        version: FORMAT_VERSION.to_owned(),
        m: model.m(),
        n: model.n(),
        p: model.p(),
        q: model.q(),
        dims: model.dims(),
        rating_max: corpus.rating_max,
        users: corpus.users.clone(),
        items: corpus.items.clone(),
        features: corpus.features.clone(),
        opinions: corpus.opinions.clone(),
        config: config.clone(),
    };
    check_maps(&manifest)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for ((name, _), values) in manifest.shapes().iter().zip(arrays(model)) {
        let path = dir.join(format!("{name}.bin"));
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}

fn check_maps(m: &Manifest) -> Result<()> {
    let maps = [
        ("users", m.m, m.users.len()),
        ("items", m.n, m.items.len()),
        ("features", m.p, m.features.len()),
        ("opinions", m.q, m.opinions.len()),
    ];
    for (what, count, len) in maps {
        if count != len {
            return Err(CheckpointError::Shape(format!(
                "{what}: count {count} but {len} distinct names"
            )));
        }
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CheckpointError::MissingManifest(path))
        }
        Err(e) => return Err(io_err(&path)(e)),
    };
    // Check the version before the full schema so that future formats get a
    // version error rather than a schema error.
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|source| CheckpointError::Manifest {
            path: path.clone(),
            source,
        })?;
    let found = raw.get("version").and_then(|v| v.as_str()).unwrap_or("");
    if found != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: found.to_owned(),
        });
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|source| CheckpointError::Manifest { path, source })?;
    manifest.dims.validate()?;
    check_maps(&manifest)?;
    Ok(manifest)
}

fn read_array(dir: &Path, array: &'static str, expected: usize) -> Result<Vec<f64>> {
    let path = dir.join(format!("{array}.bin"));
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() != expected * 8 {
        return Err(CheckpointError::Truncated {
            array,
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(index) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CheckpointError::Invalid {
            array,
            index,
            value: values[index],
        });
    }
    Ok(values)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest = load_manifest(dir)?;
    let [u, i, f, fd, o, g1, g2, g3] = manifest
        .shapes()
        .map(|(name, len)| read_array(dir, name, len));
    let Dims { a, b, c, d } = manifest.dims;
    let mut features = f?;
    features.extend(fd?);
    let model = FactorModel::from_parts(
        Matrix::from_vec(manifest.m, a, u?)?,
        Matrix::from_vec(manifest.n, b, i?)?,
        Matrix::from_vec(manifest.p + 1, c, features)?,
        Matrix::from_vec(manifest.q, d, o?)?,
        Tensor3::from_vec([a, b, c], g1?)?,
        Tensor3::from_vec([a, c, d], g2?)?,
        Tensor3::from_vec([b, c, d], g3?)?,
    )?;
    Ok(Checkpoint { manifest, model })
}
