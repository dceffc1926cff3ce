//! Labelled image datasets: IDX and CSV ingestion, train/test splits and
//! partitions of the training set across agents.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::problems::sigmoid_net::{argmax, SigmoidNetSpec};
use crate::problems::ProblemError;

pub const CLASSES: usize = 10;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX payload truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range 0..{CLASSES} (row {row})")]
    LabelOutOfRange { row: usize, label: i64 },
    #[error("CSV row {row}: {reason}")]
    Csv { row: usize, reason: String },
    #[error("dataset is empty")]
    Empty,
    #[error("requested {requested} training samples but the dataset has {available}")]
    TooManyTrain { requested: usize, available: usize },
    #[error("{agents} agents for {samples} samples")]
    TooManyAgents { agents: usize, samples: usize },
    #[error("class partition needs {CLASSES} agents, got {0}")]
    ClassAgentCount(usize),
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error(transparent)]
    Model(#[from] ProblemError),
}

/// Inputs stored row-major with labels in `0..10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d_in: usize,
    inputs: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(d_in: usize, inputs: Vec<f64>, labels: Vec<u8>) -> Result<Dataset, DataError> {
        if inputs.len() != d_in * labels.len() {
            return Err(DataError::CountMismatch {
                images: if d_in == 0 { 0 } else { inputs.len() / d_in },
                labels: labels.len(),
            });
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| usize::from(l) >= CLASSES) {
            return Err(DataError::LabelOutOfRange {
                row,
                label: i64::from(l),
            });
        }
        Ok(Dataset { d_in, inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn input(&self, j: usize) -> &[f64] {
        &self.inputs[j * self.d_in..(j + 1) * self.d_in]
    }

    pub fn label(&self, j: usize) -> usize {
        usize::from(self.labels[j])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// One-hot target vector.
    pub fn target(&self, j: usize) -> [f64; CLASSES] {
        let mut t = [0.0; CLASSES];
        t[self.label(j)] = 1.0;
        t
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.d_in);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            inputs.extend_from_slice(self.input(j));
            labels.push(self.labels[j]);
        }
        Dataset {
            d_in: self.d_in,
            inputs,
            labels,
        }
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }

    /// SHA-256 over dimensions, input bits and labels, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.d_in as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for v in &self.inputs {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(&self.labels);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(io_err)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

/// Parses an IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let needed = 16 + count * rows * cols;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok((count, rows, cols, &bytes[16..needed]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8], DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(DataError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(&bytes[8..needed])
}

/// Builds a dataset from IDX image and label byte streams; pixels are scaled to `[0, 1]`.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, DataError> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let inputs = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(rows * cols, inputs, labels.to_vec())
}

/// Loads an IDX image/label pair; gzip-compressed files are decompressed transparently.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset, DataError> {
    dataset_from_idx(&read_file(images)?, &read_file(labels)?)
}

/// Loads comma-separated features (`d_in` columns per row) and one integer label per row.
pub fn load_matrix_csv(features: &Path, labels: &Path, d_in: usize, has_header: bool) -> Result<Dataset, DataError> {
    let open = |path: &Path| {
        csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .from_path(path)
            .map_err(|e| DataError::Io {
                path: path.display().to_string(),
                source: io::Error::other(e.to_string()),
            })
    };
    let csv_err = |row: usize, e: csv::Error| DataError::Csv {
        row,
        reason: e.to_string(),
    };

    let mut inputs = Vec::new();
    let mut rows = 0;
    for (row, rec) in open(features)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(row, e))?;
        if rec.len() != d_in {
            return Err(DataError::Csv {
                row,
                reason: format!("expected {d_in} columns, found {}", rec.len()),
            });
        }
        for cell in rec.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::Csv {
                row,
                reason: format!("non-numeric cell `{cell}`"),
            })?;
            inputs.push(v);
        }
        rows += 1;
    }
    let mut label_values = Vec::new();
    for (row, rec) in open(labels)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let cell = rec.get(0).unwrap_or("").trim();
        let label: i64 = cell.parse().map_err(|_| DataError::Csv {
            row,
            reason: format!("non-integer label `{cell}`"),
        })?;
        if !(0..CLASSES as i64).contains(&label) {
            return Err(DataError::LabelOutOfRange { row, label });
        }
        label_values.push(label as u8);
    }
    if rows == 0 {
        return Err(DataError::Empty);
    }
    if rows != label_values.len() {
        return Err(DataError::CountMismatch {
            images: rows,
            labels: label_values.len(),
        });
    }
    Dataset::new(d_in, inputs, label_values)
}

fn shuffled(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Seeded shuffle of `d`, keeping the first `count` samples.
pub fn seeded_subset(d: &Dataset, count: usize, seed: u64) -> Result<Dataset, DataError> {
    if count > d.len() {
        return Err(DataError::TooManyTrain {
            requested: count,
            available: d.len(),
        });
    }
    let mut order = shuffled(d.len(), seed);
    order.truncate(count);
    Ok(d.subset(&order))
}

/// Seeded shuffle, then the first `n_train` samples train and the rest test.
pub fn split_train_test(d: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if n_train > d.len() {
        return Err(DataError::TooManyTrain {
            requested: n_train,
            available: d.len(),
        });
    }
    let order = shuffled(d.len(), seed);
    let (train, test) = order.split_at(n_train);
    Ok((d.subset(train), d.subset(test)))
}

/// Disjoint assignment of training-sample indices to agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignment: Vec<Vec<usize>>,
}

impl Partition {
    pub fn agents(&self) -> usize {
        self.assignment.len()
    }

    /// `m_i` for every agent.
    pub fn counts(&self) -> Vec<usize> {
        self.assignment.iter().map(Vec::len).collect()
    }

    /// Writes the `agent,sample_index` manifest.
    pub fn write_manifest<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["agent", "sample_index"])?;
        for (agent, indices) in self.assignment.iter().enumerate() {
            for j in indices {
                w.write_record([agent.to_string(), j.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Near-equal random split; the first `len % agents` agents get one extra sample.
pub fn partition_random_equal(train_len: usize, agents: usize, seed: u64) -> Result<Partition, DataError> {
    if agents == 0 || agents > train_len {
        return Err(DataError::TooManyAgents {
            agents,
            samples: train_len,
        });
    }
    let order = shuffled(train_len, seed);
    let base = train_len / agents;
    let extra = train_len % agents;
    let mut assignment = Vec::with_capacity(agents);
    let mut start = 0;
    for i in 0..agents {
        let size = base + usize::from(i < extra);
        let mut part = order[start..start + size].to_vec();
        part.sort_unstable();
        assignment.push(part);
        start += size;
    }
    Ok(Partition { assignment })
}

/// Agent `i` receives every sample of class `i`.
pub fn partition_by_class(train: &Dataset, agents: usize) -> Result<Partition, DataError> {
    if agents != CLASSES {
        return Err(DataError::ClassAgentCount(agents));
    }
    let mut assignment = vec![Vec::new(); CLASSES];
    for j in 0..train.len() {
        assignment[train.label(j)].push(j);
    }
    if let Some(missing) = assignment.iter().position(Vec::is_empty) {
        return Err(DataError::MissingClass(missing));
    }
    Ok(Partition { assignment })
}

/// Fraction of `test` misclassified by argmax prediction (ties to the lowest class).
pub fn error_rate(spec: &SigmoidNetSpec, w: &[f64], test: &Dataset) -> Result<f64, DataError> {
    if test.is_empty() {
        return Err(DataError::Empty);
    }
    let mut wrong = 0usize;
    for j in 0..test.len() {
        if argmax(&spec.forward(w, test.input(j))?) != test.label(j) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// Per-class recall; `None` for classes absent from `test`.
pub fn class_recall(spec: &SigmoidNetSpec, w: &[f64], test: &Dataset) -> Result<[Option<f64>; CLASSES], DataError> {
    let mut hits = [0usize; CLASSES];
    let mut totals = [0usize; CLASSES];
    for j in 0..test.len() {
        let label = test.label(j);
        totals[label] += 1;
        if argmax(&spec.forward(w, test.input(j))?) == label {
            hits[label] += 1;
        }
    }
    let mut out = [None; CLASSES];
    for c in 0..CLASSES {
        if totals[c] > 0 {
            out[c] = Some(hits[c] as f64 / totals[c] as f64);
        }
    }
    Ok(out)
}
