use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Utterance};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFlags {
    language: bool,
    acoustic: bool,
    visual: bool,
}

/// One line of a dataset file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    label: f64,
    language: Vec<Vec<f64>>,
    acoustic: Vec<Vec<f64>>,
    visual: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_flags: Option<NoiseFlags>,
}

impl Record {
    fn from_utterance(u: &Utterance) -> Self {
        Self {
            id: u.id.clone(),
            label: u.label,
            language: u.sequences[0].to_rows(),
            acoustic: u.sequences[1].to_rows(),
            visual: u.sequences[2].to_rows(),
            noise_flags: u.noise_flags.map(|[l, a, v]| NoiseFlags {
                language: l,
                acoustic: a,
                visual: v,
            }),
        }
    }

    fn into_utterance(self) -> Result<Utterance> {
        let seq = |name: &str, rows: &[Vec<f64>]| {
            Tensor::from_rows(rows).map_err(|_| Error::Schema(format!("{name} rows have unequal lengths")))
        };
        Ok(Utterance {
            sequences: [
                seq("language", &self.language)?,
                seq("acoustic", &self.acoustic)?,
                seq("visual", &self.visual)?,
            ],
            id: self.id,
            label: self.label,
            noise_flags: self.noise_flags.map(|f| [f.language, f.acoustic, f.visual]),
        })
    }
}

/// Parses JSON-lines text; blank lines are skipped. Line numbers in errors
/// are 1-based.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Dataset> {
    let mut utterances: Vec<Utterance> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let u = rec
            .into_utterance()
            .and_then(|u| u.validate().map(|_| u))
            .map_err(|e| Error::Schema(format!("line {lineno}: {e}")))?;
        if let Some(first) = utterances.first() {
            if first.feature_dims() != u.feature_dims() {
                return Err(Error::Schema(format!(
                    "line {lineno}: feature dims {:?} differ from {:?} on the first line",
                    u.feature_dims(),
                    first.feature_dims()
                )));
            }
        }
        utterances.push(u);
    }
    Dataset::new(utterances)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_jsonl(dataset: &Dataset, mut w: impl Write) -> Result<()> {
    for u in dataset.iter() {
        let line = serde_json::to_string(&Record::from_utterance(u))
            .map_err(|e| Error::Data(format!("cannot serialize {}: {e}", u.id)))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(dataset, BufWriter::new(File::create(path)?))
}
