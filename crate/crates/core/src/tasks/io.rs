//! Dataset directories: `dataset.json` (task, split, complex hash), one JSON-lines file per split,
//! and the complex once as OFF or `.node`/`.ele`.
//!
//! Complexes without a mesh file format (1-complexes) are rebuilt from their generator string.
//! Either way the loaded complex must reproduce the recorded hash.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Split, TaskSpec};
use crate::complex::io::{load_mesh, save_mesh};
use crate::complex::ShapeSpec;
use crate::cochain::CochainRecord;
use crate::{Complex64, Error, Result};

pub const DATASET_FORMAT: &str = "hsd-dataset/1";
const META_FILE: &str = "dataset.json";
const MESH_STEM: &str = "complex";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format: String,
    pub task: TaskSpec,
    pub complex_hash: String,
    /// Generator string, when the complex came from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    /// Mesh files relative to the dataset directory.
    pub mesh: Vec<String>,
    pub samples: usize,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    index: usize,
    seed: u64,
    input: CochainRecord,
    target: CochainRecord,
}

pub fn save_dataset(data: &Dataset<f64>, complex: &Complex64, shape: Option<&ShapeSpec>, dir: &Path) -> Result<()> {
    data.validate(complex)?;
    std::fs::create_dir_all(dir)?;
    let mesh = match save_mesh(complex, &dir.join(MESH_STEM)) {
        Ok(paths) => paths
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        Err(Error::InvalidParameter(_)) if shape.is_some() => Vec::new(),
        Err(e) => return Err(e),
    };
    for (name, idx) in [("train", &data.split.train), ("val", &data.split.val), ("test", &data.split.test)] {
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}.jsonl")))?);
        for &i in idx.iter() {
            let s = &data.samples[i];
            let line = SampleLine {
                index: i,
                seed: s.seed,
                input: s.input.to_record().with_hash(&s.complex_id),
                target: s.target.to_record().with_hash(&s.complex_id),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let meta = DatasetMeta {
        format: DATASET_FORMAT.into(),
        task: data.task.clone(),
        complex_hash: data.complex_hash.clone(),
        shape: shape.map(|s| s.to_string()),
        mesh,
        samples: data.len(),
        split: data.split.clone(),
    };
    std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(Dataset<f64>, Complex64)> {
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(META_FILE))?)?;
    if meta.format != DATASET_FORMAT {
        return Err(Error::Parse(format!("unknown dataset format '{}'", meta.format)));
    }
    let complex: Complex64 = match (meta.mesh.first(), &meta.shape) {
        (Some(file), _) => load_mesh(&dir.join(file))?,
        (None, Some(shape)) => Complex64::generate(&shape.parse()?)?,
        (None, None) => return Err(Error::Parse("dataset records neither a mesh nor a generator".into())),
    };
    let hash = complex.content_hash();
    if hash != meta.complex_hash {
        return Err(Error::ComplexMismatch(meta.complex_hash, hash));
    }
    meta.split.validate(meta.samples)?;
    let mut slots: Vec<Option<Sample<f64>>> = vec![None; meta.samples];
    for name in ["train", "val", "test"] {
        let reader = BufReader::new(File::open(dir.join(format!("{name}.jsonl")))?);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: SampleLine = serde_json::from_str(&line)?;
            for rec in [&s.input, &s.target] {
                if let Some(h) = &rec.complex_hash {
                    if *h != hash {
                        return Err(Error::ComplexMismatch(h.clone(), hash.clone()));
                    }
                }
            }
            let slot = slots.get_mut(s.index).ok_or(Error::IndexOutOfRange { index: s.index, len: meta.samples })?;
            *slot = Some(Sample {
                seed: s.seed,
                input: s.input.to_cochain(),
                target: s.target.to_cochain(),
                complex_id: hash.clone(),
            });
        }
    }
    let samples = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Parse(format!("sample {i} missing from split files"))))
        .collect::<Result<Vec<_>>>()?;
    let data = Dataset { task: meta.task, complex_hash: hash, samples, split: meta.split };
    data.validate(&complex)?;
    Ok((data, complex))
}
