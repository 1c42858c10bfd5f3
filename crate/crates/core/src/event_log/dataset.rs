use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{encode_and_pad, parse_csv, write_csv, CsvOptions, EncodedDataset, LogError, Trace, Vocabulary};

const MIN_SPLIT_INPUT: usize = 10;
const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "procgan-dataset/1";
const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffled 0.8 : 0.1 : 0.1 partition: `floor(0.8 n)` train, `floor(0.1 n)`
/// validation, the remainder test.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<DatasetSplit<T>, LogError> {
    let n = items.len();
    if n < MIN_SPLIT_INPUT {
        return Err(LogError::TooFewTraces {
            needed: MIN_SPLIT_INPUT,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        valid: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
    })
}

/// A split log with its vocabulary (built from the training split) and the
/// padded length shared by every split.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub vocabulary: Vocabulary,
    pub max_len: usize,
    pub seed: u64,
    pub train: Vec<Trace>,
    pub valid: Vec<Trace>,
    pub test: Vec<Trace>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    vocabulary: Vocabulary,
    max_len: usize,
    end_token_id: usize,
    seed: u64,
    train: Vec<String>,
    valid: Vec<String>,
    test: Vec<String>,
}

impl PreparedDataset {
    /// Split `traces`, build the vocabulary over the training part and check
    /// that validation and test use no other activities. `max_len` defaults
    /// to the longest trace in any split.
    pub fn prepare(traces: &[Trace], seed: u64, max_len: Option<usize>) -> Result<Self, LogError> {
        let split = split_dataset(traces, seed)?;
        let vocabulary = Vocabulary::build(&split.train);
        for t in split.valid.iter().chain(&split.test) {
            vocabulary.encode(&t.activities)?;
        }
        let longest = traces.iter().map(Trace::len).max().unwrap_or(1);
        let max_len = max_len.unwrap_or(longest);
        if let Some(t) = traces.iter().find(|t| t.len() > max_len) {
            return Err(LogError::TooLong { len: t.len(), max_len });
        }
        Ok(Self {
            vocabulary,
            max_len,
            seed,
            train: split.train,
            valid: split.valid,
            test: split.test,
        })
    }

    pub fn split(&self, name: &str) -> Option<&[Trace]> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn encoded(&self, name: &str) -> Result<EncodedDataset, LogError> {
        let traces = self
            .split(name)
            .ok_or_else(|| LogError::Dataset(format!("no split named `{name}`")))?;
        EncodedDataset::encode(traces, &self.vocabulary, self.max_len)
    }
}

/// Write `manifest.json`, plus `<split>.csv` and `<split>.ids` (one
/// space-delimited id sequence per line) for each split.
pub fn save_dataset(dir: &Path, data: &PreparedDataset) -> Result<(), LogError> {
    fs::create_dir_all(dir)?;
    let ids = |ts: &[Trace]| ts.iter().map(|t| t.case_id.clone()).collect();
    let manifest = Manifest {
        format: FORMAT.into(),
        vocabulary: data.vocabulary.clone(),
        max_len: data.max_len,
        end_token_id: data.vocabulary.end_token_id(),
        seed: data.seed,
        train: ids(&data.train),
        valid: ids(&data.valid),
        test: ids(&data.test),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| LogError::Dataset(e.to_string()))?;
    fs::write(dir.join(MANIFEST), json + "\n")?;
    for name in SPLITS {
        let traces = data.split(name).unwrap_or_default();
        write_csv(traces, fs::File::create(dir.join(format!("{name}.csv")))?)?;
        let mut out = fs::File::create(dir.join(format!("{name}.ids")))?;
        for t in traces {
            let ids = encode_and_pad(&t.activities, &data.vocabulary, data.max_len)?;
            let line: Vec<String> = ids.iter().map(usize::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<PreparedDataset, LogError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| LogError::Dataset(format!("{MANIFEST}: {e}")))?;
    if manifest.format != FORMAT {
        return Err(LogError::Dataset(format!("unsupported format `{}`", manifest.format)));
    }
    if manifest.end_token_id != manifest.vocabulary.end_token_id() {
        return Err(LogError::Dataset("end token id does not match vocabulary size".into()));
    }
    let mut splits = Vec::new();
    for (name, members) in SPLITS.iter().zip([&manifest.train, &manifest.valid, &manifest.test]) {
        let bytes = fs::read(dir.join(format!("{name}.csv")))?;
        let traces = if members.is_empty() {
            Vec::new()
        } else {
            parse_csv(&bytes, &CsvOptions::default())?.traces
        };
        let got: Vec<&String> = traces.iter().map(|t| &t.case_id).collect();
        if got != members.iter().collect::<Vec<_>>() {
            return Err(LogError::Dataset(format!("{name}.csv does not match the manifest membership")));
        }
        let encoded = read_id_sequences(&dir.join(format!("{name}.ids")))?;
        let expected = EncodedDataset::encode(&traces, &manifest.vocabulary, manifest.max_len)?;
        if encoded != expected.sequences {
            return Err(LogError::Dataset(format!("{name}.ids does not match {name}.csv")));
        }
        splits.push(traces);
    }
    let test = splits.pop().unwrap_or_default();
    let valid = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(PreparedDataset {
        vocabulary: manifest.vocabulary,
        max_len: manifest.max_len,
        seed: manifest.seed,
        train,
        valid,
        test,
    })
}

pub fn read_id_sequences(path: &Path) -> Result<Vec<Vec<usize>>, LogError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|e| LogError::Parse {
                    line: i as u64 + 1,
                    message: format!("bad id `{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(ids);
    }
    Ok(out)
}
