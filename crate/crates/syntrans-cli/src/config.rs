//! Flat key/value run configuration: one `key = value` pair per line, `#`
//! comments, plus `--set key=value` overrides from the command line. Keys
//! are namespaced (`arch.dm`, `train.lr`, ...); unknown keys are rejected so
//! typos fail loudly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use syntrans_model::config::ArchConfig;
use syntrans_model::train::TrainConfig;

#[derive(Debug, Default, Clone)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = FlatConfig::default();
        for (lineno, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected 'key = value'", path.display(), lineno + 1);
            };
            cfg.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let Some((k, v)) = s.split_once('=') else {
                bail!("--set needs key=value, got '{s}'");
            };
            self.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    fn take<T: std::str::FromStr>(&self, used: &mut Vec<String>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        used.push(key.to_string());
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}': {e}"),
            },
        }
    }

    /// Applies `arch.*` keys over a base configuration.
    pub fn build_arch(&self, base: ArchConfig, used: &mut Vec<String>) -> Result<ArchConfig> {
        let mut arch = base;
        if let Some(nl) = self.take::<usize>(used, "arch.nl")? {
            arch = arch.with_nl(nl);
        }
        if let Some(v) = self.take(used, "arch.el")? {
            arch.encoder_layers = v;
        }
        if let Some(v) = self.take(used, "arch.dl")? {
            arch.decoder_layers = v;
        }
        if let Some(v) = self.take(used, "arch.dm")? {
            arch.d_model = v;
        }
        if let Some(v) = self.take(used, "arch.ff")? {
            arch.d_ff = v;
        }
        if let Some(v) = self.take(used, "arch.nh")? {
            arch.n_heads = v;
        }
        if let Some(v) = self.take(used, "arch.kv")? {
            arch.d_kv = v;
        }
        if let Some(v) = self.take(used, "arch.max-len")? {
            arch.max_len = v;
        }
        if let Some(v) = self.take(used, "arch.tie-embeddings")? {
            arch.tie_embeddings = v;
        }
        if let Some(v) = self.take(used, "arch.rel-buckets")? {
            arch.rel_buckets = v;
        }
        if let Some(v) = self.take(used, "arch.rel-max-distance")? {
            arch.rel_max_distance = v;
        }
        Ok(arch)
    }

    /// Applies `<prefix>.*` keys over a base training configuration; the
    /// sweep runner uses distinct prefixes for the fine-tuning and
    /// pre-training recipes.
    pub fn build_train_with_prefix(
        &self,
        base: TrainConfig,
        used: &mut Vec<String>,
        prefix: &str,
    ) -> Result<TrainConfig> {
        let key = |name: &str| format!("{prefix}.{name}");
        let mut t = base;
        if let Some(v) = self.take(used, &key("lr"))? {
            t.lr = v;
        }
        if let Some(v) = self.take(used, &key("batch"))? {
            t.batch = v;
        }
        if let Some(v) = self.take::<u64>(used, &key("steps"))? {
            t.steps = Some(v);
            t.epochs = None;
        }
        if let Some(v) = self.take::<u64>(used, &key("epochs"))? {
            t.epochs = Some(v);
            t.steps = None;
        }
        if let Some(v) = self.take(used, &key("checkpoint-every"))? {
            t.checkpoint_every = v;
        }
        if let Some(v) = self.take(used, &key("corruption-rate"))? {
            t.corruption_rate = v;
        }
        if let Some(v) = self.take(used, &key("mean-span"))? {
            t.mean_span = v;
        }
        if let Some(v) = self.take(used, &key("max-len"))? {
            t.max_len = v;
        }
        if let Some(v) = self.take(used, &key("packing"))? {
            t.packing = v;
        }
        if let Some(v) = self.take(used, &key("weight-decay"))? {
            t.weight_decay = v;
        }
        if let Some(v) = self.take::<u64>(used, &key("lr-plateau"))? {
            t.lr_plateau = Some(v);
        }
        if let Some(v) = self.take(used, &key("dropout"))? {
            t.dropout = v;
        }
        Ok(t)
    }

    /// `train.*` keys over a base configuration.
    pub fn build_train(&self, base: TrainConfig, used: &mut Vec<String>) -> Result<TrainConfig> {
        self.build_train_with_prefix(base, used, "train")
    }

    /// Rejects keys that no builder consumed.
    pub fn ensure_all_used(&self, used: &[String]) -> Result<()> {
        for key in self.entries.keys() {
            if !used.iter().any(|u| u == key) {
                bail!("unknown config key '{key}'");
            }
        }
        Ok(())
    }

    /// The resolved flat file, for run-directory snapshots.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_files_and_applies_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\narch.dm = 128\ntrain.lr = 0.001\n").unwrap();
        let mut cfg = FlatConfig::load(&path).unwrap();
        cfg.apply_overrides(&["train.lr=0.01".to_string()]).unwrap();
        let mut used = Vec::new();
        let arch = cfg.build_arch(ArchConfig::desk(100), &mut used).unwrap();
        let train = cfg.build_train(TrainConfig::desk_finetune(), &mut used).unwrap();
        assert_eq!(arch.d_model, 128);
        assert_eq!(train.lr, 0.01);
        cfg.ensure_all_used(&used).unwrap();
    }

    #[test]
    fn unknown_keys_fail() {
        let mut cfg = FlatConfig::default();
        cfg.apply_overrides(&["arch.dk=2".to_string()]).unwrap();
        let mut used = Vec::new();
        cfg.build_arch(ArchConfig::desk(100), &mut used).unwrap();
        cfg.build_train(TrainConfig::desk_finetune(), &mut used).unwrap();
        assert!(cfg.ensure_all_used(&used).is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut cfg = FlatConfig::default();
        cfg.apply_overrides(&["arch.dm=big".to_string()]).unwrap();
        let mut used = Vec::new();
        let err = cfg.build_arch(ArchConfig::desk(100), &mut used).unwrap_err();
        assert!(err.to_string().contains("arch.dm"));
    }
}
