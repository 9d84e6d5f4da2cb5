//! Binary checkpoint container: named parameter tensors, optimizer moments,
//! progress counters and a text metadata table.
//!
//! Layout (little endian): magic, `u32` version, metadata pairs, parameters
//! (name, group, matrix), optimizers (name, steps, first and second moments).
//! Strings are `u32` length plus UTF-8; matrices are `u32` rows, `u32` cols,
//! then row-major `f64` values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use tom2c_core::agent::{ModelConfig, Tom2cModel};
use tom2c_core::autodiff::{Matrix, ParamGroup, ParamStore};
use tom2c_core::training::{Counters, Trainer};
use tom2c_core::Task;

use crate::config::{parse_settings, RunConfig, Setting};
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"TOM2CCKP";
pub const VERSION: u32 = 1;

const OPTIMIZER_NAMES: [&str; 3] = ["rl", "tom", "cr"];

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub name: String,
    pub steps: u64,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
    pub optimizers: Vec<OptimizerState>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Runtime(format!("malformed checkpoint: {}", msg.into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> CliResult<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("string is not UTF-8"))
    }

    fn matrix(&mut self) -> CliResult<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let len = rows.checked_mul(cols).ok_or_else(|| bad("matrix too large"))?;
        let raw = self.take(len.checked_mul(8).ok_or_else(|| bad("matrix too large"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Matrix::from_vec(rows, cols, data).map_err(|e| bad(e.to_string()))
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn string(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn matrix(&mut self, m: &Matrix) {
        self.u32(m.rows());
        self.u32(m.cols());
        for v in m.data() {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn model_meta(c: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("model.task", c.task.name().into()),
        ("model.embed_dim", c.embed_dim.to_string()),
        ("model.tom_hidden", c.tom_hidden.to_string()),
        ("model.head_hidden", c.head_hidden.to_string()),
        ("model.graph_hidden", c.graph_hidden.to_string()),
        ("model.critic_width", c.critic_width.to_string()),
        ("model.graph_rounds", c.graph_rounds.to_string()),
        ("model.temperature", c.temperature.to_string()),
        ("model.goal_threshold", c.goal_threshold.to_string()),
    ]
}

fn counter_meta(c: &Counters) -> Vec<(&'static str, String)> {
    vec![
        ("counters.env_steps", c.env_steps.to_string()),
        ("counters.episodes", c.episodes.to_string()),
        ("counters.rl_updates", c.rl_updates.to_string()),
        ("counters.tom_updates", c.tom_updates.to_string()),
        ("counters.cr_updates", c.cr_updates.to_string()),
        ("counters.gamma", c.gamma.to_string()),
        ("counters.episode_length", c.episode_length.to_string()),
    ]
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, run: &RunConfig) -> Self {
        let mut meta = BTreeMap::new();
        for (k, v) in model_meta(&trainer.model.config).into_iter().chain(counter_meta(&trainer.counters)) {
            meta.insert(k.to_string(), v);
        }
        for (k, v) in run.to_pairs() {
            meta.insert(format!("config.{k}"), v);
        }
        let optimizers = trainer
            .optimizers()
            .iter()
            .zip(OPTIMIZER_NAMES)
            .map(|(opt, name)| {
                let (first, second) = opt.moments();
                OptimizerState { name: name.into(), steps: opt.steps(), first: first.to_vec(), second: second.to_vec() }
            })
            .collect();
        Self { meta, params: trainer.model.params.clone(), optimizers }
    }

    /// A checkpoint of bare model weights, with no optimizer state.
    pub fn from_model(model: &Tom2cModel) -> Self {
        let meta = model_meta(&model.config).into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        Self { meta, params: model.params.clone(), optimizers: Vec::new() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION as usize);
        w.u32(self.meta.len());
        for (k, v) in &self.meta {
            w.string(k);
            w.string(v);
        }
        w.u32(self.params.len());
        for (_, p) in self.params.iter() {
            w.string(&p.name);
            w.string(p.group.name());
            w.matrix(&p.value);
        }
        w.u32(self.optimizers.len());
        for o in &self.optimizers {
            w.string(&o.name);
            w.0.extend_from_slice(&o.steps.to_le_bytes());
            w.u32(o.first.len());
            o.first.iter().chain(&o.second).for_each(|m| w.matrix(m));
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> CliResult<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(bad("wrong magic bytes"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            meta.insert(k, r.string()?);
        }
        let mut params = ParamStore::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let group = r.string()?;
            let group = ParamGroup::parse(&group).ok_or_else(|| bad(format!("unknown parameter group {group}")))?;
            let value = r.matrix()?;
            params.add(&name, group, value).map_err(|e| bad(e.to_string()))?;
        }
        let mut optimizers = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let steps = r.u64()?;
            let k = r.u32()? as usize;
            let first = (0..k).map(|_| r.matrix()).collect::<CliResult<Vec<_>>>()?;
            let second = (0..k).map(|_| r.matrix()).collect::<CliResult<Vec<_>>>()?;
            optimizers.push(OptimizerState { name, steps, first, second });
        }
        if r.at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { meta, params, optimizers })
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let v = self.meta.get(key).ok_or_else(|| bad(format!("missing metadata {key}")))?;
        v.parse().map_err(|_| bad(format!("bad metadata {key} = {v}")))
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let task: String = self.get("model.task")?;
        let task = Task::parse(&task).ok_or_else(|| bad(format!("unknown task {task}")))?;
        Ok(ModelConfig {
            task,
            embed_dim: self.get("model.embed_dim")?,
            tom_hidden: self.get("model.tom_hidden")?,
            head_hidden: self.get("model.head_hidden")?,
            graph_hidden: self.get("model.graph_hidden")?,
            critic_width: self.get("model.critic_width")?,
            graph_rounds: self.get("model.graph_rounds")?,
            temperature: self.get("model.temperature")?,
            goal_threshold: self.get("model.goal_threshold")?,
        })
    }

    pub fn counters(&self) -> CliResult<Counters> {
        Ok(Counters {
            env_steps: self.get("counters.env_steps")?,
            episodes: self.get("counters.episodes")?,
            rl_updates: self.get("counters.rl_updates")?,
            tom_updates: self.get("counters.tom_updates")?,
            cr_updates: self.get("counters.cr_updates")?,
            gamma: self.get("counters.gamma")?,
            episode_length: self.get("counters.episode_length")?,
        })
    }

    /// The run configuration snapshot as settings; empty for bare weights.
    pub fn config_settings(&self) -> CliResult<Vec<Setting>> {
        let text: String = self
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k} = {v}\n")))
            .collect();
        parse_settings(&text).map_err(|e| bad(e.to_string()))
    }

    /// The run configuration snapshot, when the checkpoint came from training.
    pub fn run_config(&self) -> CliResult<Option<RunConfig>> {
        let settings = self.config_settings()?;
        if settings.is_empty() {
            return Ok(None);
        }
        RunConfig::from_layers(&[settings]).map(Some)
    }

    /// Rebuilds the model; a tensor whose name or shape disagrees is an error.
    pub fn model(&self) -> CliResult<Tom2cModel> {
        let mut model = Tom2cModel::new(self.model_config()?, 0)?;
        model
            .params
            .load_values(&self.params)
            .map_err(|e| CliError::Runtime(format!("checkpoint does not fit the model: {e}")))?;
        if model.params.len() != self.params.len() {
            return Err(CliError::Runtime("checkpoint holds parameters the model does not know".into()));
        }
        Ok(model)
    }

    /// Rebuilds a trainer with restored weights, moments and counters.
    pub fn trainer(&self, run: &RunConfig) -> CliResult<Trainer> {
        let mut trainer = Trainer::new(run.train.clone(), self.model()?)?;
        trainer.counters = self.counters()?;
        if self.optimizers.len() != OPTIMIZER_NAMES.len() {
            return Err(bad("expected three optimizer states"));
        }
        for (opt, state) in trainer.optimizers_mut().into_iter().zip(&self.optimizers) {
            opt.restore(state.steps, state.first.clone(), state.second.clone())?;
        }
        Ok(trainer)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tom2c_core::training::TrainConfig;

    fn trainer() -> (Trainer, RunConfig) {
        let run = RunConfig::default();
        let model = Tom2cModel::new(ModelConfig::new(Task::Msmtc), 3).unwrap();
        let mut t = Trainer::new(TrainConfig::default(), model).unwrap();
        t.counters.env_steps = 1234;
        t.counters.gamma = 0.3;
        (t, run)
    }

    #[test]
    fn decode_inverts_encode() {
        let (t, run) = trainer();
        let c = Checkpoint::from_trainer(&t, &run);
        let back = Checkpoint::decode(&c.encode()).unwrap();
        assert_eq!(back, c);
        let t2 = back.trainer(&run).unwrap();
        assert_eq!(t2.counters, t.counters);
        assert_eq!(t2.model.params, t.model.params);
        assert_eq!(back.run_config().unwrap(), Some(run));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let (t, run) = trainer();
        let bytes = Checkpoint::from_trainer(&t, &run).encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::decode(&wrong).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::decode(&longer).is_err());
    }

    #[test]
    fn head_width_mismatch_is_an_error() {
        let model = Tom2cModel::new(ModelConfig::new(Task::Msmtc), 3).unwrap();
        let mut c = Checkpoint::from_model(&model);
        c.meta.insert("model.head_hidden".into(), "32".into());
        assert!(c.model().is_err());
    }
}
