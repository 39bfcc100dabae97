//! Versioned text checkpoint: model kind, dimensions, and every parameter
//! array as 64-bit decimal literals (shortest round-trip formatting), so the
//! stored values reload bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Result, TafError};
use crate::filterbank::FilterParams;
use crate::matrix::Matrix;
use crate::pooling::PoolMode;
use crate::scalar::Real;

use super::head::MlpHead;
use super::lstm::{LstmCell, LstmModel};
use super::pooled::{PooledModel, PyramidModel};
use super::static_model::StaticModel;
use super::{Model, OneVsAllModel};

const HEADER: &str = "taf-checkpoint v1";

/// A loaded checkpoint: either a single model or a one-vs-all ensemble.
#[derive(Clone, Debug)]
pub enum Checkpointed<F> {
    Single(Model<F>),
    OneVsAll(OneVsAllModel<F>),
}

impl<F: Real> Checkpointed<F> {
    pub fn class_count(&self) -> usize {
        match self {
            Checkpointed::Single(m) => m.class_count(),
            Checkpointed::OneVsAll(m) => m.class_count(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Checkpointed::Single(m) => m.feature_dim(),
            Checkpointed::OneVsAll(m) => m.feature_dim(),
        }
    }
}

pub fn write_checkpoint<F: Real>(model: &Checkpointed<F>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| TafError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| TafError::io(path, e);
    writeln!(w, "{HEADER}").map_err(io_err)?;
    match model {
        Checkpointed::Single(m) => write_model(&mut w, m).map_err(io_err)?,
        Checkpointed::OneVsAll(ova) => {
            writeln!(w, "kind one-vs-all").map_err(io_err)?;
            writeln!(w, "classes {}", ova.members.len()).map_err(io_err)?;
            for (c, member) in ova.members.iter().enumerate() {
                writeln!(w, "member {c}").map_err(io_err)?;
                write_model(&mut w, member).map_err(io_err)?;
            }
            writeln!(w, "end").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn write_model<F: Real>(w: &mut impl Write, model: &Model<F>) -> std::io::Result<()> {
    writeln!(w, "kind {}", model.kind_name())?;
    let head = model.head();
    writeln!(w, "classes {}", head.class_count())?;
    writeln!(w, "feature-dim {}", model.feature_dim())?;
    writeln!(w, "hidden {}", head.hidden_dim())?;
    match model {
        Model::Pooled(_) => {}
        Model::Pyramid(m) => {
            writeln!(w, "level {}", m.level())?;
            writeln!(w, "taps {}", m.taps())?;
        }
        Model::Static(m) => {
            writeln!(w, "filters {}", m.filter_count())?;
            writeln!(w, "taps {}", m.taps())?;
        }
        Model::Lstm(m) => {
            writeln!(w, "filters {}", m.filter_count())?;
            writeln!(w, "taps {}", m.taps())?;
            writeln!(w, "steps {}", m.steps())?;
            writeln!(w, "lstm-hidden {}", m.lstm_hidden())?;
        }
    }
    for (name, arr) in model.param_arrays() {
        writeln!(w, "array {name} {}", arr.len())?;
        for &v in arr {
            writeln!(w, "{}", v.dbl())?;
        }
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn read_checkpoint<F: Real>(path: &Path) -> Result<Checkpointed<F>> {
    let text = fs::read_to_string(path).map_err(|e| TafError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| TafError::Checkpoint("empty file".into()))?;
    if header.trim() != HEADER {
        return Err(TafError::Checkpoint(format!(
            "unrecognized header '{header}'"
        )));
    }
    let kind_line = next_nonempty(&mut lines)?;
    let kind = expect_field(&kind_line, "kind")?;
    if kind == "one-vs-all" {
        let classes: usize = expect_field(&next_nonempty(&mut lines)?, "classes")?
            .parse()
            .map_err(|_| TafError::Checkpoint("bad class count".into()))?;
        let mut members = Vec::with_capacity(classes);
        for c in 0..classes {
            let member_line = next_nonempty(&mut lines)?;
            let idx = expect_field(&member_line, "member")?;
            if idx.parse::<usize>().ok() != Some(c) {
                return Err(TafError::Checkpoint(format!(
                    "expected member {c}, found '{member_line}'"
                )));
            }
            let kind_line = next_nonempty(&mut lines)?;
            let kind = expect_field(&kind_line, "kind")?;
            members.push(read_single_model(&kind, &mut lines)?);
        }
        expect_end(&mut lines)?;
        Ok(Checkpointed::OneVsAll(OneVsAllModel::new(members)?))
    } else {
        Ok(Checkpointed::Single(read_single_model(&kind, &mut lines)?))
    }
}

type Lines<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

fn next_nonempty(lines: &mut Lines) -> Result<String> {
    for (_, line) in lines.by_ref() {
        if !line.trim().is_empty() {
            return Ok(line.trim().to_string());
        }
    }
    Err(TafError::Checkpoint("unexpected end of file".into()))
}

fn expect_field(line: &str, key: &str) -> Result<String> {
    let (k, v) = line
        .split_once(' ')
        .ok_or_else(|| TafError::Checkpoint(format!("malformed line '{line}'")))?;
    if k != key {
        return Err(TafError::Checkpoint(format!(
            "expected '{key}', found '{line}'"
        )));
    }
    Ok(v.trim().to_string())
}

fn expect_end(lines: &mut Lines) -> Result<()> {
    let line = next_nonempty(lines)?;
    if line != "end" {
        return Err(TafError::Checkpoint(format!(
            "expected 'end', found '{line}'"
        )));
    }
    Ok(())
}

fn read_single_model<F: Real>(kind: &str, lines: &mut Lines) -> Result<Model<F>> {
    // Scalar fields up to the first `array` line.
    let mut fields: BTreeMap<String, usize> = BTreeMap::new();
    let mut pending;
    loop {
        let line = next_nonempty(lines)?;
        if line.starts_with("array ") {
            pending = line;
            break;
        }
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| TafError::Checkpoint(format!("malformed line '{line}'")))?;
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| TafError::Checkpoint(format!("bad value in '{line}'")))?;
        fields.insert(k.to_string(), n);
    }

    let get = |key: &str| -> Result<usize> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| TafError::Checkpoint(format!("missing field '{key}' for kind {kind}")))
    };

    let classes = get("classes")?;
    let feature_dim = get("feature-dim")?;
    let hidden = get("hidden")?;
    let mut model: Model<F> = match kind {
        "max" | "sum" | "mean" => {
            let mode = PoolMode::parse(kind)?;
            Model::Pooled(PooledModel::new(
                mode,
                MlpHead::zeros(feature_dim, hidden, classes)?,
            ))
        }
        "pyramid" => {
            let level = get("level")?;
            let taps = get("taps")?;
            let filters = (1usize
                .checked_shl(level as u32)
                .ok_or_else(|| TafError::Checkpoint("pyramid level too large".into()))?)
                - 1;
            Model::Pyramid(PyramidModel::new(
                level,
                taps,
                MlpHead::zeros(filters * taps * feature_dim, hidden, classes)?,
            )?)
        }
        "static" => {
            let filters = get("filters")?;
            let taps = get("taps")?;
            Model::Static(StaticModel::new(
                &vec![FilterParams::centered(); filters],
                taps,
                MlpHead::zeros(filters * taps * feature_dim, hidden, classes)?,
            )?)
        }
        "lstm" => {
            let filters = get("filters")?;
            let taps = get("taps")?;
            let steps = get("steps")?;
            let lstm_hidden = get("lstm-hidden")?;
            let input = filters * taps * feature_dim;
            Model::Lstm(LstmModel::new(
                LstmCell::zeros(input, lstm_hidden)?,
                Matrix::zeros(3 * filters, lstm_hidden),
                vec![F::zero(); 3 * filters],
                steps,
                taps,
                MlpHead::zeros(input, hidden, classes)?,
            )?)
        }
        other => {
            return Err(TafError::Checkpoint(format!("unknown model kind '{other}'")));
        }
    };

    // Fill arrays; the first `array` header was already consumed.
    loop {
        let (name, len) = {
            let rest = pending.trim_start_matches("array ").trim();
            let (name, len) = rest
                .split_once(' ')
                .ok_or_else(|| TafError::Checkpoint(format!("malformed '{pending}'")))?;
            let len: usize = len
                .parse()
                .map_err(|_| TafError::Checkpoint(format!("bad length in '{pending}'")))?;
            (name.to_string(), len)
        };
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let line = next_nonempty(lines)?;
            let v: f64 = line
                .parse()
                .map_err(|_| TafError::Checkpoint(format!("bad float '{line}'")))?;
            values.push(F::of(v));
        }
        let mut found = false;
        for (group, arr) in model.param_arrays_mut() {
            if group == name {
                if arr.len() != len {
                    return Err(TafError::Checkpoint(format!(
                        "array {name} has {len} values, model expects {}",
                        arr.len()
                    )));
                }
                arr.copy_from_slice(&values);
                found = true;
                break;
            }
        }
        if !found {
            return Err(TafError::Checkpoint(format!("unexpected array '{name}'")));
        }
        let line = next_nonempty(lines)?;
        if line == "end" {
            break;
        }
        if !line.starts_with("array ") {
            return Err(TafError::Checkpoint(format!(
                "expected 'array' or 'end', found '{line}'"
            )));
        }
        pending = line;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn scribble(model: &mut Model<f64>, seed: u64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for (_, arr) in model.param_arrays_mut() {
            for v in arr {
                *v = rng.random_range(-2.0..2.0);
            }
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = Model::Static(
            StaticModel::new(
                &[FilterParams::centered(); 3],
                2,
                MlpHead::zeros(3 * 2 * 4, 5, 3).unwrap(),
            )
            .unwrap(),
        );
        scribble(&mut model, 99);
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&Checkpointed::Single(model.clone()), &path).unwrap();
        let loaded = read_checkpoint::<f64>(&path).unwrap();
        let Checkpointed::Single(loaded) = loaded else {
            panic!("expected single model");
        };
        for ((n1, a), (n2, b)) in model.param_arrays().iter().zip(loaded.param_arrays()) {
            assert_eq!(n1, &n2);
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn lstm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = Model::Lstm(
            LstmModel::new(
                LstmCell::zeros(6, 4).unwrap(),
                Matrix::zeros(3, 4),
                vec![0.0; 3],
                2,
                3,
                MlpHead::zeros(6, 5, 2).unwrap(),
            )
            .unwrap(),
        );
        scribble(&mut model, 5);
        let path = dir.path().join("lstm.ckpt");
        write_checkpoint(&Checkpointed::Single(model.clone()), &path).unwrap();
        let Checkpointed::Single(loaded) = read_checkpoint::<f64>(&path).unwrap() else {
            panic!("expected single model");
        };
        assert_eq!(model, loaded);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(read_checkpoint::<f64>(&path).is_err());
        std::fs::write(&path, format!("{HEADER}\nkind warp\nend\n")).unwrap();
        assert!(read_checkpoint::<f64>(&path).is_err());
    }
}
