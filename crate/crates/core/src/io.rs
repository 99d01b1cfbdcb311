//! Matrix files with JSON sidecars.
//!
//! Matrices are headerless CSV, one row per line, values written with the
//! shortest representation that round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::datagen::{DataBatch, NoiseSpec};
use crate::dictionary::{Dictionary, Generator};
use crate::error::{dim, invalid, Result};

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => return Err(dim(format!("row {rows} has {} values, expected {c}", record.len()))),
            _ => {}
        }
        for field in record.iter() {
            values.push(field.trim().parse::<f64>().map_err(|e| invalid(format!("row {rows}: {e}")))?);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| dim(e.to_string()))
}

/// Sidecar path: `weights.csv` -> `weights.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryMeta {
    pub m: usize,
    pub n: usize,
    pub generator: Generator,
    pub seed: u64,
}

pub fn save_dictionary(path: &Path, w: &Dictionary) -> Result<()> {
    write_matrix_csv(path, &w.weights)?;
    let meta = DictionaryMeta { m: w.m(), n: w.n(), generator: w.generator, seed: w.seed };
    write_json(&sidecar_path(path), &meta)
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let weights = read_matrix_csv(path)?;
    let meta: DictionaryMeta = read_json(&sidecar_path(path))?;
    if weights.dim() != (meta.m, meta.n) {
        return Err(dim(format!("matrix is {:?} but sidecar says ({}, {})", weights.dim(), meta.m, meta.n)));
    }
    Ok(Dictionary { weights, generator: meta.generator, seed: meta.seed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub n_samples: usize,
    pub n: usize,
    pub scale_c: f64,
    pub b_d: Vec<f64>,
    pub noise: Option<NoiseSpec>,
    pub source_seed: u64,
}

pub fn save_data(path: &Path, x: &DataBatch) -> Result<()> {
    write_matrix_csv(path, &x.x)?;
    let meta = DataMeta {
        n_samples: x.n_samples(),
        n: x.dim(),
        scale_c: x.scale_c,
        b_d: x.b_d.to_vec(),
        noise: x.noise,
        source_seed: x.source_seed,
    };
    write_json(&sidecar_path(path), &meta)
}

pub fn load_data(path: &Path) -> Result<DataBatch> {
    let values = read_matrix_csv(path)?;
    let meta: DataMeta = read_json(&sidecar_path(path))?;
    if values.dim() != (meta.n_samples, meta.n) || meta.b_d.len() != meta.n {
        return Err(dim("data matrix does not match its sidecar"));
    }
    Ok(DataBatch {
        x: values,
        source_seed: meta.source_seed,
        scale_c: meta.scale_c,
        b_d: Array1::from(meta.b_d),
        noise: meta.noise,
    })
}

pub(crate) fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_data;
    use crate::dictionary::gen_orthogonalized_gaussian;
    use crate::signals::{sample_signals, BinsParams};

    #[test]
    fn dictionary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let w = gen_orthogonalized_gaussian(7, 5, 11).unwrap();
        save_dictionary(&path, &w).unwrap();
        let back = load_dictionary(&path).unwrap();
        assert_eq!(back.weights, w.weights);
        assert_eq!(back.generator, Generator::OrthogonalizedGaussian);
        assert_eq!(back.seed, 11);
        assert!(dir.path().join("w.json").exists());
    }

    #[test]
    fn data_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let w = gen_orthogonalized_gaussian(6, 4, 1).unwrap();
        let h = sample_signals(&BinsParams::uniform(0.3, 1.0).unwrap(), 6, 9, 2).unwrap();
        let x = generate_data(&w, &h, &Array1::from(vec![0.5, -1.0, 0.0, 2.0]), 1.3, Some(NoiseSpec::new(100.0, 0.1).unwrap()), 3)
            .unwrap();
        save_data(&path, &x).unwrap();
        let back = load_data(&path).unwrap();
        assert_eq!(back.x, x.x);
        assert_eq!(back.b_d, x.b_d);
        assert_eq!(back.noise, x.noise);
        assert_eq!(back.scale_c, 1.3);
    }

    #[test]
    fn ragged_or_mismatched_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
        std::fs::write(&path, "1,2\n3,4\n").unwrap();
        std::fs::write(sidecar_path(&path), r#"{"m":3,"n":2,"generator":"custom","seed":0}"#).unwrap();
        assert!(load_dictionary(&path).is_err());
    }
}
