//! Prediction interchange format.
//!
//! A UTF-8, tab-separated text file. A magic line and `key<TAB>value`
//! header lines come first, then a column line and one row per
//! configuration:
//!
//! ```text
//! #hypermult-predictions	1
//! dataset_id	credit
//! model	SVM
//! positive_label	1
//! eval_labels	0,1,1,0
//! n_train	120
//! n_features	8
//! config_id	values	default	labels	failure
//! 3f2a9c0d1e7b5a44	{"cost":1.0,"degree":3.0,"gamma":0.125}	1	0,1,0,0
//! -	{"cost":4.0,"degree":3.0,"gamma":0.125}	0	0,1,1,0
//! -	{"cost":1024.0,"degree":5.0,"gamma":0.125}	0		solver diverged
//! ```
//!
//! `n_train` and `n_features` are optional and only used to resolve
//! data-dependent bounds when validating config values. `config_id` may be
//! `-` (computed on import); a given id must match the hash of `values`.
//! A non-empty `failure` column marks a failed configuration, whose
//! `labels` must then be empty. Values are written with the shortest
//! representation that parses back to the same `f64`, so export followed
//! by import reproduces a prediction set exactly.

// The format example above is tab-separated on purpose.
#![allow(clippy::tabs_in_doc_comments)]

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::learners::ModelKind;
use crate::metrics::{Entry, PredictionSet};
use crate::space::{import_space, Config, HyperparamSpace};

pub const MAGIC: &str = "#hypermult-predictions";
pub const FORMAT_VERSION: u32 = 1;
const COLUMNS: &str = "config_id\tvalues\tdefault\tlabels\tfailure";

/// Optional dimensions recorded alongside exported predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dims {
    pub n_train: Option<usize>,
    pub n_features: Option<usize>,
}

/// How imported configuration values are checked.
#[derive(Debug, Clone, Copy)]
pub enum SpaceCheck<'a> {
    /// Accept any parameter names and values.
    Skip,
    /// Validate against a caller-supplied space.
    Space(&'a HyperparamSpace),
    /// Validate against the model's space resolved with the header's
    /// `n_train`/`n_features`; without them only parameter names are
    /// checked.
    FromHeader,
}

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn join_labels(labels: &[u8]) -> String {
    let mut s = String::with_capacity(labels.len() * 2);
    for (i, l) in labels.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push(if *l == 1 { '1' } else { '0' });
    }
    s
}

pub fn write_predictions<W: Write>(mut out: W, ps: &PredictionSet, dims: Dims) -> Result<()> {
    writeln!(out, "{MAGIC}\t{FORMAT_VERSION}")?;
    writeln!(out, "dataset_id\t{}", clean(ps.dataset_id()))?;
    writeln!(out, "model\t{}", ps.model())?;
    writeln!(out, "positive_label\t{}", ps.positive_label())?;
    writeln!(out, "eval_labels\t{}", join_labels(ps.eval_labels()))?;
    if let Some(n) = dims.n_train {
        writeln!(out, "n_train\t{n}")?;
    }
    if let Some(p) = dims.n_features {
        writeln!(out, "n_features\t{p}")?;
    }
    writeln!(out, "{COLUMNS}")?;
    for e in ps.entries() {
        let values = serde_json::to_string(e.config.values())?;
        let default = u8::from(e.config.is_default());
        match &e.failure {
            None => writeln!(
                out,
                "{}\t{values}\t{default}\t{}",
                e.config.id(),
                join_labels(&e.labels)
            )?,
            Some(msg) => {
                let msg = clean(msg);
                let msg = if msg.trim().is_empty() {
                    "failed".into()
                } else {
                    msg
                };
                writeln!(out, "{}\t{values}\t{default}\t\t{msg}", e.config.id())?
            }
        }
    }
    Ok(())
}

pub fn export_predictions(path: impl AsRef<Path>, ps: &PredictionSet, dims: Dims) -> Result<()> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, ps, dims)?;
    fs::write(path, buf)?;
    Ok(())
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::SchemaError {
        line,
        message: message.into(),
    }
}

fn parse_labels(s: &str, line: usize) -> Result<Vec<u8>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| match t.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::LabelDomainError {
                line,
                value: other.to_string(),
            }),
        })
        .collect()
}

pub fn read_predictions<R: BufRead>(
    reader: R,
    check: SpaceCheck<'_>,
) -> Result<(PredictionSet, Dims)> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, magic) = lines.next().ok_or_else(|| schema(1, "empty file"))?;
    let magic = magic?;
    let version = magic
        .strip_prefix(MAGIC)
        .map(|v| v.trim())
        .ok_or_else(|| schema(1, format!("expected `{MAGIC}` header")))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(schema(1, format!("unsupported format version `{version}`")));
    }

    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut columns_seen = false;
    let mut last_line = 1;
    for (no, line) in lines.by_ref() {
        last_line = no;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if line.trim_end() == COLUMNS || line.starts_with("config_id\t") {
            columns_seen = true;
            break;
        }
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| schema(no, "header lines are `key<TAB>value`"))?;
        header.insert(k.trim().to_string(), (no, v.to_string()));
    }
    if !columns_seen {
        // reported at the first line past the end of the file
        return Err(schema(
            last_line + 1,
            "missing column line `config_id\tvalues\tdefault\tlabels`",
        ));
    }
    let field = |k: &str| {
        header
            .get(k)
            .cloned()
            .ok_or_else(|| schema(0, format!("missing header field `{k}`")))
    };
    let (_, dataset_id) = field("dataset_id")?;
    let (model_line, model) = field("model")?;
    let model: ModelKind = model
        .trim()
        .parse()
        .map_err(|_| schema(model_line, format!("unknown model `{}`", model.trim())))?;
    let (pos_line, positive) = field("positive_label")?;
    let positive_label = match positive.trim() {
        "0" => 0,
        "1" => 1,
        other => {
            return Err(Error::LabelDomainError {
                line: pos_line,
                value: other.to_string(),
            })
        }
    };
    let (eval_line, eval) = field("eval_labels")?;
    let eval_labels = parse_labels(eval.trim(), eval_line)?;
    if eval_labels.is_empty() {
        return Err(schema(eval_line, "no evaluation labels"));
    }
    let dim = |k: &str| -> Result<Option<usize>> {
        header
            .get(k)
            .map(|(no, v)| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| schema(*no, format!("`{k}` must be a non-negative integer")))
            })
            .transpose()
    };
    let dims = Dims {
        n_train: dim("n_train")?,
        n_features: dim("n_features")?,
    };
    let resolved;
    let space = match check {
        SpaceCheck::Skip => None,
        SpaceCheck::Space(s) => Some(s),
        SpaceCheck::FromHeader => {
            resolved = import_space(
                model,
                dims.n_train.unwrap_or(0),
                dims.n_features.unwrap_or(0),
            );
            Some(&resolved)
        }
    };
    let check_bounds = match check {
        SpaceCheck::FromHeader => dims.n_train.is_some() && dims.n_features.is_some(),
        _ => true,
    };

    let mut entries = Vec::new();
    let mut default_line = None;
    for (no, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if !(4..=5).contains(&cols.len()) {
            return Err(schema(
                no,
                format!("expected 4 or 5 tab-separated fields, found {}", cols.len()),
            ));
        }
        let values: BTreeMap<String, f64> = serde_json::from_str(cols[1])
            .map_err(|e| schema(no, format!("values are not a JSON object of numbers: {e}")))?;
        let is_default = match cols[2].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(schema(no, format!("default flag `{other}` is not 0/1"))),
        };
        if is_default {
            if default_line.is_some() {
                return Err(Error::DuplicateDefault { line: no });
            }
            default_line = Some(no);
        }
        let config = Config::new(values, is_default);
        let given_id = cols[0].trim();
        if !given_id.is_empty() && given_id != "-" && given_id != config.id() {
            return Err(schema(
                no,
                format!(
                    "config id `{given_id}` does not match its values (expected {})",
                    config.id()
                ),
            ));
        }
        if let Some(space) = space {
            let names_ok = config.values().len() == space.params.len()
                && space.params.iter().all(|p| config.get(&p.name).is_some());
            if !names_ok {
                let expected: Vec<&str> = space.params.iter().map(|p| p.name.as_str()).collect();
                return Err(schema(
                    no,
                    format!(
                        "{model} configs need exactly the parameters {}",
                        expected.join(", ")
                    ),
                ));
            }
            if check_bounds {
                space
                    .validate(&config)
                    .map_err(|e| schema(no, e.to_string()))?;
            }
        }
        let labels = parse_labels(cols[3].trim(), no)?;
        let failure = cols.get(4).map(|s| s.trim()).filter(|s| !s.is_empty());
        let entry = match failure {
            Some(msg) => {
                if !labels.is_empty() {
                    return Err(schema(no, "a failed row must not carry labels"));
                }
                if is_default {
                    return Err(schema(no, "the default row cannot be failed"));
                }
                Entry::failed(config, msg)
            }
            None => {
                if labels.len() != eval_labels.len() {
                    return Err(schema(
                        no,
                        format!("{} labels, expected {}", labels.len(), eval_labels.len()),
                    ));
                }
                Entry::ok(config, labels)
            }
        };
        entries.push(entry);
    }
    if default_line.is_none() {
        return Err(Error::NoDefaultRow);
    }
    let ps = PredictionSet::new(
        dataset_id.trim(),
        model,
        positive_label,
        eval_labels,
        entries,
    )?;
    Ok((ps, dims))
}

pub fn import_predictions(
    path: impl AsRef<Path>,
    expected_space: Option<&HyperparamSpace>,
) -> Result<PredictionSet> {
    let check = expected_space.map_or(SpaceCheck::Skip, SpaceCheck::Space);
    let file = fs::File::open(path)?;
    Ok(read_predictions(BufReader::new(file), check)?.0)
}

/// Like [`import_predictions`], with a choice of value check and the
/// header dimensions returned as well.
pub fn import_with_dims(
    path: impl AsRef<Path>,
    check: SpaceCheck<'_>,
) -> Result<(PredictionSet, Dims)> {
    let file = fs::File::open(path)?;
    read_predictions(BufReader::new(file), check)
}

pub fn to_string(ps: &PredictionSet, dims: Dims) -> String {
    let mut buf = Vec::new();
    write_predictions(&mut buf, ps, dims).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("interchange output is UTF-8")
}

pub fn from_str(s: &str, check: SpaceCheck<'_>) -> Result<(PredictionSet, Dims)> {
    read_predictions(io::Cursor::new(s), check)
}
