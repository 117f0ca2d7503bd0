//! Weight manifests: a directory holding `manifest.tsv` with rows
//! `name<TAB>dtype<TAB>dim0,dim1,...<TAB>relative_path` and one raw
//! little-endian row-major file per parameter.

use std::fs;
use std::path::{Component, Path, PathBuf};

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::{DType, Scalar, Tensor};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestParseError {
    pub line: usize,
    pub msg: String,
}

impl std::fmt::Display for ManifestParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ManifestParseError {}

fn safe_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty()
        && p.components().all(|c| matches!(c, Component::Normal(_)))
}

/// Parse manifest text. Blank lines are ignored.
pub fn parse_manifest(text: &str) -> std::result::Result<Vec<ManifestEntry>, ManifestParseError> {
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| ManifestParseError { line, msg };
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [name, dtype, dims, path] = fields[..] else {
            return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        };
        if name.is_empty() {
            return Err(err("empty parameter name".into()));
        }
        if out.iter().any(|e| e.name == name) {
            return Err(err(format!("duplicate parameter {name:?}")));
        }
        let dtype = DType::parse(dtype).ok_or_else(|| err(format!("unknown dtype {dtype:?}")))?;
        let shape = dims
            .split(',')
            .map(|d| match d.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(err(format!("bad dimension {d:?}"))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(err(format!("shape {shape:?} overflows")));
        }
        if !safe_relative(path) {
            return Err(err(format!("path {path:?} must be relative without '..'")));
        }
        out.push(ManifestEntry {
            name: name.to_string(),
            dtype,
            shape,
            path: path.to_string(),
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let dims: Vec<String> = e.shape.iter().map(usize::to_string).collect();
        s.push_str(&format!("{}\t{}\t{}\t{}\n", e.name, e.dtype, dims.join(","), e.path));
    }
    s
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TensorError + '_ {
    move |source| TensorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn manifest_err(path: &Path, msg: impl Into<String>) -> TensorError {
    TensorError::Manifest {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    parse_manifest(&text).map_err(|e| manifest_err(&path, e.to_string()))
}

/// Write every parameter whose name starts with `prefix`, with the prefix
/// stripped from the stored name.
pub fn save_prefixed<T: Scalar>(store: &ParamStore<T>, dir: &Path, prefix: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::new();
    for (_, p) in store.iter() {
        let Some(name) = p.name.strip_prefix(prefix) else {
            continue;
        };
        let rel = format!("{name}.bin");
        let mut bytes = Vec::with_capacity(p.value.len() * T::DTYPE.size_of());
        for &v in p.value.data() {
            v.write_le(&mut bytes);
        }
        let file = dir.join(&rel);
        fs::write(&file, bytes).map_err(io_err(&file))?;
        entries.push(ManifestEntry {
            name: name.to_string(),
            dtype: T::DTYPE,
            shape: p.value.shape().to_vec(),
            path: rel,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, format_manifest(&entries)).map_err(io_err(&path))
}

pub fn save<T: Scalar>(store: &ParamStore<T>, dir: &Path) -> Result<()> {
    save_prefixed(store, dir, "")
}

/// Overwrite every parameter named `prefix + entry.name` from the manifest in
/// `dir`. The manifest must cover exactly the parameters carrying `prefix`;
/// nothing is modified unless every entry validates.
pub fn load_prefixed<T: Scalar>(store: &mut ParamStore<T>, dir: &Path, prefix: &str) -> Result<()> {
    let mpath = dir.join(MANIFEST_FILE);
    let entries = read_manifest(dir)?;
    let mut staged = Vec::with_capacity(entries.len());
    for e in &entries {
        let full = format!("{prefix}{}", e.name);
        let id = store
            .id(&full)
            .ok_or_else(|| manifest_err(&mpath, format!("unknown parameter {:?}", e.name)))?;
        let expected = store.get(id).value.shape();
        if e.shape != expected {
            return Err(manifest_err(
                &mpath,
                format!(
                    "shape mismatch for {:?}: manifest {:?}, model {:?}",
                    e.name, e.shape, expected
                ),
            ));
        }
        if e.dtype != T::DTYPE {
            return Err(manifest_err(
                &mpath,
                format!("dtype mismatch for {:?}: manifest {}, model {}", e.name, e.dtype, T::DTYPE),
            ));
        }
        let file: PathBuf = dir.join(&e.path);
        let bytes = fs::read(&file).map_err(io_err(&file))?;
        let width = T::DTYPE.size_of();
        let n: usize = e.shape.iter().product();
        if bytes.len() != n * width {
            return Err(manifest_err(
                &file,
                format!("expected {} bytes for {:?}, found {}", n * width, e.name, bytes.len()),
            ));
        }
        let data: Vec<T> = bytes.chunks_exact(width).map(T::read_le).collect();
        staged.push((id, Tensor::new(e.shape.clone(), data)?));
    }
    let covered: std::collections::HashSet<_> = staged.iter().map(|(id, _)| *id).collect();
    if let Some((_, missing)) = store
        .iter()
        .find(|(id, p)| p.name.starts_with(prefix) && !covered.contains(id))
    {
        return Err(manifest_err(
            &mpath,
            format!(
                "missing parameter {:?}",
                missing.name.strip_prefix(prefix).unwrap_or(&missing.name)
            ),
        ));
    }
    for (id, t) in staged {
        store.get_mut(id).value = t;
    }
    Ok(())
}

pub fn load<T: Scalar>(store: &mut ParamStore<T>, dir: &Path) -> Result<()> {
    load_prefixed(store, dir, "")
}
