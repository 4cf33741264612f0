//! File formats: instance JSON, parameter checkpoints and history CSVs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! written file back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{PqnError, Result};
use crate::model::{ModelConfig, PqnModel};
use crate::scalar::Scalar;
use crate::train::{EpochRecord, TrainingHistory};
use crate::tsp::TspInstance;

pub const HISTORY_HEADER: [&str; 7] = ["epoch", "J_mean", "entropy_mean", "Q_mean", "td_loss", "sup_loss", "sigma_B"];
pub const STEP_HEADER: [&str; 6] = ["step", "epoch", "Q_mean", "Q_min", "Q_max", "td_loss"];

fn field<D: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<Option<D>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| PqnError::parse(name, e.to_string())),
    }
}

fn required<D: DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<D> {
    field(obj, name)?.ok_or_else(|| PqnError::parse(name, "missing"))
}

fn object(text: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(PqnError::parse("<root>", "expected a JSON object")),
        Err(e) => Err(PqnError::parse("<root>", e.to_string())),
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| PqnError::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn instance_to_json<T: Scalar>(instance: &TspInstance<T>) -> Value {
    let mut obj = Map::new();
    obj.insert("n".into(), instance.n().into());
    if let Some(coords) = instance.coords() {
        let c: Vec<[f64; 2]> = coords.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect();
        obj.insert("coords".into(), serde_json::to_value(c).expect("finite coordinates"));
    }
    let costs: Vec<Vec<f64>> = instance
        .cost_matrix()
        .iter()
        .map(|row| row.iter().map(|c| c.as_f64()).collect())
        .collect();
    obj.insert("costs".into(), serde_json::to_value(costs).expect("finite costs"));
    if let Some(seed) = instance.seed() {
        obj.insert("seed".into(), seed.into());
    }
    Value::Object(obj)
}

/// Parses and validates an instance; every structural invariant is re-checked.
pub fn instance_from_json<T: Scalar>(text: &str) -> Result<TspInstance<T>> {
    let obj = object(text)?;
    let n: usize = required(&obj, "n")?;
    let costs: Vec<Vec<f64>> = required(&obj, "costs")?;
    let coords: Option<Vec<[f64; 2]>> = field(&obj, "coords")?;
    let seed: Option<u64> = field(&obj, "seed")?;
    if costs.len() != n {
        return Err(PqnError::parse("costs", format!("{} rows for n = {n}", costs.len())));
    }
    let costs = costs
        .into_iter()
        .map(|row| row.into_iter().map(T::lit).collect())
        .collect();
    let coords = coords.map(|c| c.into_iter().map(|[x, y]| [T::lit(x), T::lit(y)]).collect());
    let inst = TspInstance::from_matrix(costs, coords)?;
    Ok(inst.with_seed(seed))
}

pub fn write_instance<T: Scalar>(path: &Path, instance: &TspInstance<T>) -> Result<()> {
    write_json(path, &instance_to_json(instance))
}

pub fn read_instance<T: Scalar>(path: &Path) -> Result<TspInstance<T>> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

/// A list of instances stored as a JSON array.
pub fn write_instances<T: Scalar>(path: &Path, instances: &[TspInstance<T>]) -> Result<()> {
    write_json(path, &Value::Array(instances.iter().map(instance_to_json).collect()))
}

pub fn read_instances<T: Scalar>(path: &Path) -> Result<Vec<TspInstance<T>>> {
    let text = std::fs::read_to_string(path)?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => items
            .iter()
            .map(|v| instance_from_json(&v.to_string()))
            .collect(),
        Ok(Value::Object(_)) => Ok(vec![instance_from_json(&text)?]),
        Ok(_) => Err(PqnError::parse("<root>", "expected an instance or a list of instances")),
        Err(e) => Err(PqnError::parse("<root>", e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hidden: usize,
    pub q_hidden: usize,
    pub params: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &PqnModel<T>) -> Self {
        let params = model
            .store
            .iter()
            .map(|(_, p)| {
                let rec = TensorRecord {
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|v| v.as_f64()).collect(),
                };
                (p.name.clone(), rec)
            })
            .collect();
        Self {
            hidden: model.config.hidden,
            q_hidden: model.config.q_hidden,
            params,
        }
    }

    /// Rebuilds the model; every parameter must be present with the expected shape.
    pub fn to_model<T: Scalar>(&self) -> Result<PqnModel<T>> {
        let mut model = PqnModel::zeros(ModelConfig {
            hidden: self.hidden,
            q_hidden: self.q_hidden,
        })?;
        if self.params.len() != model.store.len() {
            return Err(PqnError::parse(
                "params",
                format!("{} tensors, expected {}", self.params.len(), model.store.len()),
            ));
        }
        for id in model.store.ids() {
            let p = model.store.get_mut(id);
            let rec = self
                .params
                .get(&p.name)
                .ok_or_else(|| PqnError::parse(format!("params.{}", p.name), "missing"))?;
            if rec.shape != p.shape || rec.values.len() != p.values.len() {
                return Err(PqnError::parse(
                    format!("params.{}", p.name),
                    format!("shape {:?}, expected {:?}", rec.shape, p.shape),
                ));
            }
            if rec.values.iter().any(|v| !v.is_finite()) {
                return Err(PqnError::parse(format!("params.{}", p.name), "non-finite value"));
            }
            p.values = rec.values.iter().map(|&v| T::lit(v)).collect();
        }
        Ok(model)
    }
}

pub fn write_checkpoint<T: Scalar>(path: &Path, model: &PqnModel<T>) -> Result<()> {
    let value = serde_json::to_value(Checkpoint::from_model(model)).map_err(|e| PqnError::Io(e.into()))?;
    write_json(path, &value)
}

pub fn read_checkpoint<T: Scalar>(path: &Path) -> Result<PqnModel<T>> {
    let text = std::fs::read_to_string(path)?;
    let obj = object(&text)?;
    Checkpoint {
        hidden: required(&obj, "hidden")?,
        q_hidden: required(&obj, "q_hidden")?,
        params: required(&obj, "params")?,
    }
    .to_model()
}

/// Writes one row per epoch under [`HISTORY_HEADER`].
pub fn write_history_csv<T: Scalar>(path: &Path, history: &TrainingHistory<T>) -> Result<()> {
    if history.epochs.is_empty() {
        return Err(PqnError::invalid("history has no epochs"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in &history.epochs {
        w.write_record([
            r.epoch.to_string(),
            r.j_mean.as_f64().to_string(),
            r.entropy_mean.as_f64().to_string(),
            r.q_mean.as_f64().to_string(),
            r.td_loss.as_f64().to_string(),
            r.sup_loss.as_f64().to_string(),
            r.sigma_b.as_f64().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Step-indexed series; `td_loss` is empty on steps without an update.
pub fn write_steps_csv<T: Scalar>(path: &Path, history: &TrainingHistory<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(STEP_HEADER)?;
    for s in &history.steps {
        w.write_record([
            s.step.to_string(),
            s.epoch.to_string(),
            s.q_mean.as_f64().to_string(),
            s.q_min.as_f64().to_string(),
            s.q_max.as_f64().to_string(),
            s.td_loss.map(|v| v.as_f64().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The per-epoch columns of a history CSV, as written by [`write_history_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub j_mean: f64,
    pub entropy_mean: f64,
    pub q_mean: f64,
    pub td_loss: f64,
    pub sup_loss: f64,
    pub sigma_b: f64,
}

impl<T: Scalar> From<&EpochRecord<T>> for HistoryRow {
    fn from(r: &EpochRecord<T>) -> Self {
        Self {
            epoch: r.epoch,
            j_mean: r.j_mean.as_f64(),
            entropy_mean: r.entropy_mean.as_f64(),
            q_mean: r.q_mean.as_f64(),
            td_loss: r.td_loss.as_f64(),
            sup_loss: r.sup_loss.as_f64(),
            sigma_b: r.sigma_b.as_f64(),
        }
    }
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != HISTORY_HEADER {
        return Err(PqnError::parse("header", format!("unexpected columns {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|e: std::num::ParseFloatError| PqnError::parse(HISTORY_HEADER[i], e.to_string()))
        };
        rows.push(HistoryRow {
            epoch: rec[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| PqnError::parse("epoch", e.to_string()))?,
            j_mean: num(1)?,
            entropy_mean: num(2)?,
            q_mean: num(3)?,
            td_loss: num(4)?,
            sup_loss: num(5)?,
            sigma_b: num(6)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: u64,
    pub epoch: usize,
    pub q_mean: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub td_loss: Option<f64>,
}

pub fn read_steps_csv(path: &Path) -> Result<Vec<StepRow>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != STEP_HEADER {
        return Err(PqnError::parse("header", format!("unexpected columns {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |i: usize| PqnError::parse(STEP_HEADER[i], format!("malformed value `{}`", &rec[i]));
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(i));
        rows.push(StepRow {
            step: rec[0].parse().map_err(|_| bad(0))?,
            epoch: rec[1].parse().map_err(|_| bad(1))?,
            q_mean: num(2)?,
            q_min: num(3)?,
            q_max: num(4)?,
            td_loss: if rec[5].is_empty() { None } else { Some(num(5)?) },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::generate_instance;

    #[test]
    fn instance_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = generate_instance(9, 42).unwrap();
        write_instance(&path, &inst).unwrap();
        let back: TspInstance<f64> = read_instance(&path).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn missing_costs_is_named() {
        let err = instance_from_json::<f64>(r#"{"n": 2, "coords": [[0,0],[1,0]]}"#).unwrap_err();
        match err {
            PqnError::Parse { field, .. } => assert_eq!(field, "costs"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let text = r#"{"n": 2, "costs": [[0, 1.0], [2.0, 0]]}"#;
        assert!(matches!(instance_from_json::<f64>(text), Err(PqnError::InvalidArgument(_))));
    }

    #[test]
    fn malformed_field_is_named() {
        let err = instance_from_json::<f64>(r#"{"n": "two", "costs": []}"#).unwrap_err();
        assert!(matches!(err, PqnError::Parse { ref field, .. } if field == "n"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let model = PqnModel::<f64>::new(ModelConfig { hidden: 5, q_hidden: 3 }, 8).unwrap();
        write_checkpoint(&path, &model).unwrap();
        let back: PqnModel<f64> = read_checkpoint(&path).unwrap();
        assert_eq!(back.store, model.store);
    }

    #[test]
    fn checkpoint_shape_mismatch_rejected() {
        let model = PqnModel::<f64>::new(ModelConfig { hidden: 4, q_hidden: 3 }, 1).unwrap();
        let mut ck = Checkpoint::from_model(&model);
        ck.params.get_mut("q.out.b").unwrap().shape = vec![2];
        assert!(ck.to_model::<f64>().is_err());
    }

    #[test]
    fn history_csv_round_trip() {
        use crate::baselines::{benchmark_tour, BenchmarkMethod};
        use crate::train::{train_pqn, TrainConfig};

        let inst = vec![generate_instance::<f64>(5, 3).unwrap()];
        let bench = vec![benchmark_tour(&inst[0], BenchmarkMethod::HeldKarp).unwrap()];
        let cfg = TrainConfig {
            hidden: 4,
            q_hidden: 4,
            batch_size: 4,
            epochs: 4,
            steps_per_epoch: 8,
            sup_steps: 1,
            ..TrainConfig::default()
        };
        let (_, hist) = train_pqn(&inst, &bench, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&path, &hist).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next().unwrap(), HISTORY_HEADER.join(","));
        let rows = read_history_csv(&path).unwrap();
        let expected: Vec<HistoryRow> = hist.epochs.iter().map(HistoryRow::from).collect();
        assert_eq!(rows, expected);
        assert!(rows.windows(2).all(|w| w[1].epoch == w[0].epoch + 1) && rows[0].epoch == 0);

        let steps = dir.path().join("steps.csv");
        write_steps_csv(&steps, &hist).unwrap();
        let back = read_steps_csv(&steps).unwrap();
        assert_eq!(back.len(), hist.steps.len());
        for (a, b) in back.iter().zip(&hist.steps) {
            assert_eq!((a.step, a.q_mean, a.td_loss), (b.step, b.q_mean, b.td_loss));
        }
    }

    #[test]
    fn empty_history_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let hist = TrainingHistory::<f64>::default();
        assert!(write_history_csv(&dir.path().join("h.csv"), &hist).is_err());
    }
}
