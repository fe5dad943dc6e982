use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::signal_prep::TimeSeries;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    F32le,
    Csv,
}

/// Paired EEG and ROI recordings of one subject.
///
/// Prepared datasets hold both series at the same rate and length. Raw
/// datasets may carry the ROI series at its native rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub eeg: TimeSeries,
    pub fmri: TimeSeries,
    pub subject_id: String,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn is_aligned(&self) -> bool {
        self.eeg.fs() == self.fmri.fs() && self.eeg.n_samples() == self.fmri.n_samples()
    }

    pub fn check_aligned(&self) -> Result<()> {
        if !self.is_aligned() {
            return Err(Error::data(format!(
                "EEG ({} samples at {} Hz) and fMRI ({} samples at {} Hz) are not aligned; run prep first",
                self.eeg.n_samples(),
                self.eeg.fs(),
                self.fmri.n_samples(),
                self.fmri.fs()
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.eeg.n_samples()
    }
}

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub fs_hz: f64,
    pub eeg_channels: Vec<String>,
    pub rois: Vec<String>,
    pub n_samples: usize,
    pub encoding: Encoding,
    /// ROI rate when it differs from `fs_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmri_fs_hz: Option<f64>,
    /// ROI length when it differs from `n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmri_n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl DatasetMeta {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("meta.json");
        let text = read_file(&path)?;
        let meta: DatasetMeta = serde_json::from_slice(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if meta.version != FORMAT_VERSION {
            return Err(Error::data(format!(
                "{}: unsupported version {}",
                path.display(),
                meta.version
            )));
        }
        if !(meta.fs_hz > 0.0) {
            return Err(Error::data(format!("{}: fs_hz must be positive", path.display())));
        }
        Ok(meta)
    }

    fn fmri_fs(&self) -> f64 {
        self.fmri_fs_hz.unwrap_or(self.fs_hz)
    }

    fn fmri_len(&self) -> usize {
        self.fmri_n_samples.unwrap_or(self.n_samples)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))
}

fn data_path(dir: &Path, stem: &str, enc: Encoding) -> PathBuf {
    match enc {
        Encoding::F32le => dir.join(format!("{stem}.f32")),
        Encoding::Csv => dir.join(format!("{stem}.csv")),
    }
}

fn read_series(dir: &Path, stem: &str, enc: Encoding, labels: &[String], n: usize, fs: f64) -> Result<TimeSeries> {
    let path = data_path(dir, stem, enc);
    let data = match enc {
        Encoding::F32le => read_f32(&path, labels.len(), n)?,
        Encoding::Csv => read_csv(&path, labels, n)?,
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!(
            "{}: non-finite value in channel {} at sample {}",
            path.display(),
            labels[i / n.max(1)],
            i % n.max(1)
        )));
    }
    TimeSeries::new(data, fs, labels.to_vec())
}

fn read_f32(path: &Path, channels: usize, n: usize) -> Result<Vec<f64>> {
    let bytes = read_file(path)?;
    let expected = channels * n * 4;
    if bytes.len() != expected {
        return Err(Error::data(format!(
            "{}: length mismatch, expected {expected} bytes, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

/// Reads one-row-per-sample CSV into channel-major order.
fn read_csv(path: &Path, labels: &[String], n: usize) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != labels {
        return Err(Error::data(format!(
            "{}: header {header:?} does not match manifest {labels:?}",
            path.display()
        )));
    }
    let c = labels.len();
    let mut out = vec![0.0; c * n];
    let mut rows = 0;
    for (t, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if t >= n {
            rows = t + 1;
            continue;
        }
        if record.len() != c {
            return Err(Error::data(format!(
                "{}: row {} has {} fields, expected {c}",
                path.display(),
                t + 1,
                record.len()
            )));
        }
        for (ch, field) in record.iter().enumerate() {
            out[ch * n + t] = field.trim().parse::<f32>().map(f64::from).map_err(|e| {
                Error::data(format!("{}: row {} column {}: {e}", path.display(), t + 1, labels[ch]))
            })?;
        }
        rows = t + 1;
    }
    if rows != n {
        return Err(Error::data(format!(
            "{}: length mismatch, expected {n} rows, found {rows}",
            path.display()
        )));
    }
    Ok(out)
}

/// Loads a dataset directory, cross-checking every file against the
/// manifest.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = DatasetMeta::read(dir)?;
    let eeg = read_series(dir, "eeg", meta.encoding, &meta.eeg_channels, meta.n_samples, meta.fs_hz)?;
    let fmri = read_series(dir, "fmri", meta.encoding, &meta.rois, meta.fmri_len(), meta.fmri_fs())?;
    Ok(Dataset {
        eeg,
        fmri,
        subject_id: meta.subject_id.unwrap_or_default(),
        provenance: meta.provenance.unwrap_or(Provenance::Real),
    })
}

/// Loads only the EEG part of a dataset directory; the fMRI file may be
/// absent.
pub fn load_eeg(dir: &Path) -> Result<TimeSeries> {
    let meta = DatasetMeta::read(dir)?;
    read_series(dir, "eeg", meta.encoding, &meta.eeg_channels, meta.n_samples, meta.fs_hz)
}

fn write_series(dir: &Path, stem: &str, enc: Encoding, x: &TimeSeries) -> Result<()> {
    let path = data_path(dir, stem, enc);
    match enc {
        Encoding::F32le => {
            let bytes: Vec<u8> = x.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
            fs::write(&path, bytes)?;
        }
        Encoding::Csv => {
            let mut w = csv::Writer::from_path(&path)
                .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))?;
            let csv_err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
            w.write_record(x.labels()).map_err(csv_err)?;
            let mut row = Vec::with_capacity(x.n_channels());
            for t in 0..x.n_samples() {
                row.clear();
                row.extend(x.channels().map(|c| (c[t] as f32).to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes `d` in the directory format. Values are stored as 32-bit floats.
pub fn save_dataset(d: &Dataset, dir: &Path, encoding: Encoding) -> Result<()> {
    fs::create_dir_all(dir)?;
    let same_grid = d.is_aligned();
    let meta = DatasetMeta {
        version: FORMAT_VERSION,
        fs_hz: d.eeg.fs(),
        eeg_channels: d.eeg.labels().to_vec(),
        rois: d.fmri.labels().to_vec(),
        n_samples: d.eeg.n_samples(),
        encoding,
        fmri_fs_hz: (!same_grid).then(|| d.fmri.fs()),
        fmri_n_samples: (!same_grid).then(|| d.fmri.n_samples()),
        subject_id: (!d.subject_id.is_empty()).then(|| d.subject_id.clone()),
        provenance: Some(d.provenance),
    };
    write_series(dir, "eeg", encoding, &d.eeg)?;
    write_series(dir, "fmri", encoding, &d.fmri)?;
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Writes an EEG-only directory, as consumed by prediction.
pub fn save_eeg(eeg: &TimeSeries, dir: &Path, encoding: Encoding) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        version: FORMAT_VERSION,
        fs_hz: eeg.fs(),
        eeg_channels: eeg.labels().to_vec(),
        rois: Vec::new(),
        n_samples: eeg.n_samples(),
        encoding,
        fmri_fs_hz: None,
        fmri_n_samples: None,
        subject_id: None,
        provenance: None,
    };
    write_series(dir, "eeg", encoding, eeg)?;
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}
