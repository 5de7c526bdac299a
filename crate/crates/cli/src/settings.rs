//! Flat `key=value` configuration with CLI > file > default precedence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use vitderm_core::model::{HeadInput, ViTConfig};
use vitderm_core::tensor::Activation;
use vitderm_core::train::{L2Scope, LrPolicy, OptimizerKind, TrainConfig};
use vitderm_core::{Error, Result};

/// Every recognized key and its default. An empty default means the value
/// is derived: from the model preset for architecture keys, from the
/// optimizer for the learning rate, from `seed` for `init_seed`.
pub const KEYS: &[(&str, &str)] = &[
    ("model", "l16"),
    ("image_size", ""),
    ("patch_size", ""),
    ("hidden_dim", ""),
    ("mlp_dim", ""),
    ("num_heads", ""),
    ("depth", ""),
    ("head_neurons", "28"),
    ("head_activation", "relu"),
    ("dropout", "0.5"),
    ("head_input", "sequence"),
    ("optimizer", "sgd"),
    ("learning_rate", ""),
    ("momentum", "0.9"),
    ("beta1", "0.9"),
    ("beta2", "0.999"),
    ("adam_eps", "1e-7"),
    ("batch_size", "16"),
    ("epochs", "20"),
    ("l2_lambda", "0"),
    ("l2_scope", "head"),
    ("lr_policy", "plateau"),
    ("plateau_patience", "3"),
    ("plateau_factor", "0.1"),
    ("min_lr", "1e-6"),
    ("step_every", "5"),
    ("step_factor", "0.5"),
    ("early_stop_patience", "5"),
    ("seed", "0"),
    ("init_seed", ""),
    ("freeze_backbone", "false"),
    ("steps_per_epoch", ""),
    ("weights", ""),
];

pub const MODEL_KEYS: [&str; 11] = [
    "model",
    "image_size",
    "patch_size",
    "hidden_dim",
    "mlp_dim",
    "num_heads",
    "depth",
    "head_neurons",
    "head_activation",
    "dropout",
    "head_input",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Cli,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Cli => "cli",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: Vec<(&'static str, String, Source)>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{origin}:{}: expected key=value, got '{line}'",
                i + 1
            ))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text, &path.display().to_string())
}

impl Settings {
    pub fn defaults() -> Self {
        Settings {
            values: KEYS
                .iter()
                .map(|&(k, v)| (k, v.to_string(), Source::Default))
                .collect(),
        }
    }

    /// Layers config files (in order) and then CLI assignments over the
    /// defaults.
    pub fn resolve(files: &[&Path], cli: &[(String, String)]) -> Result<Self> {
        let mut s = Settings::defaults();
        for f in files {
            for (k, v) in read_kv_file(f)? {
                s.set(&k, &v, Source::File)?;
            }
        }
        for (k, v) in cli {
            s.set(k, v, Source::Cli)?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let key = key.replace('-', "_");
        let slot = self
            .values
            .iter_mut()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| Error::Config(format!("unknown configuration key '{key}'")))?;
        slot.1 = value.to_string();
        slot.2 = source;
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _, _)| *k == key)
            .map(|(_, v, _)| v.as_str())
            .unwrap_or("")
    }

    pub fn source(&self, key: &str) -> Source {
        self.values
            .iter()
            .find(|(k, _, _)| *k == key)
            .map_or(Source::Default, |(_, _, s)| *s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Source)> {
        self.values.iter().map(|(k, v, s)| (*k, v.as_str(), *s))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            "" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'"))),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("'{key}' must be set")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key).to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" | "" => Ok(false),
            v => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
        }
    }

    pub fn model_config(&self) -> Result<ViTConfig> {
        let mut c = ViTConfig::preset(self.get("model"))?;
        let mut structural = false;
        for (key, slot) in [
            ("image_size", &mut c.image_size),
            ("patch_size", &mut c.patch_size),
            ("hidden_dim", &mut c.hidden_dim),
            ("mlp_dim", &mut c.mlp_dim),
            ("num_heads", &mut c.num_heads),
            ("depth", &mut c.depth),
        ] {
            if let Some(v) = self.parse::<usize>(key)? {
                structural |= *slot != v;
                *slot = v;
            }
        }
        if structural {
            c.name = vitderm_core::model::ConfigName::Custom;
        }
        c.head_neurons = self.required("head_neurons")?;
        c.head_activation = self.required::<Activation>("head_activation")?;
        c.dropout_rate = self.required("dropout")?;
        c.head_input = self.required::<HeadInput>("head_input")?;
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let optimizer: OptimizerKind = self.required("optimizer")?;
        let mut t = TrainConfig::for_optimizer(optimizer);
        if let Some(lr) = self.parse("learning_rate")? {
            t.learning_rate = lr;
        }
        t.momentum = self.required("momentum")?;
        t.beta1 = self.required("beta1")?;
        t.beta2 = self.required("beta2")?;
        t.adam_eps = self.required("adam_eps")?;
        t.batch_size = self.required("batch_size")?;
        t.epochs = self.required("epochs")?;
        t.l2_lambda = self.required("l2_lambda")?;
        t.l2_scope = self.required::<L2Scope>("l2_scope")?;
        t.lr_policy = self.required::<LrPolicy>("lr_policy")?;
        t.plateau.patience = self.required("plateau_patience")?;
        t.plateau.factor = self.required("plateau_factor")?;
        t.plateau.min_lr = self.required("min_lr")?;
        t.step_decay.every = self.required("step_every")?;
        t.step_decay.factor = self.required("step_factor")?;
        t.early_stop_patience = self.required("early_stop_patience")?;
        t.seed = self.required("seed")?;
        t.freeze_backbone = self.flag("freeze_backbone")?;
        t.steps_per_epoch = self.parse("steps_per_epoch")?;
        t.validate()?;
        Ok(t)
    }

    pub fn init_seed(&self) -> Result<u64> {
        match self.parse("init_seed")? {
            Some(s) => Ok(s),
            None => self.required("seed"),
        }
    }
}

/// The architecture keys of a config, fully spelled out, for the sidecar
/// that lets checkpoints be reloaded without the original run config.
pub fn model_config_text(c: &ViTConfig) -> String {
    let model = match c.name {
        vitderm_core::model::ConfigName::Custom => "l16".to_string(),
        n => n.to_string().to_ascii_lowercase(),
    };
    format!(
        "model={model}\nimage_size={}\npatch_size={}\nhidden_dim={}\nmlp_dim={}\nnum_heads={}\ndepth={}\n\
         head_neurons={}\nhead_activation={}\ndropout={}\nhead_input={}\n",
        c.image_size,
        c.patch_size,
        c.hidden_dim,
        c.mlp_dim,
        c.num_heads,
        c.depth,
        c.head_neurons,
        c.head_activation,
        c.dropout_rate,
        c.head_input
    )
}
