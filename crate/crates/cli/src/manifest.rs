use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use vitderm_core::{Error, Result};

use crate::settings::Settings;

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Record of one invocation: resolved configuration with the origin of
/// every value, inputs, outputs and timing.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub started: u64,
    pub seed: Option<u64>,
    pub inputs: Vec<(String, PathBuf)>,
    pub outputs: Vec<(String, PathBuf)>,
    pub notes: Vec<(String, String)>,
    pub settings: Option<Settings>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            started: unix_now(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            settings: None,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.push((name.into(), path.to_path_buf()));
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.outputs.push((name.into(), path.to_path_buf()));
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.into(), value.to_string()));
    }

    pub fn render(&self, finished: u64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool=vitderm");
        let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command={}", self.command);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        for (k, p) in &self.inputs {
            let _ = writeln!(s, "input.{k}={}", p.display());
        }
        for (k, p) in &self.outputs {
            let _ = writeln!(s, "output.{k}={}", p.display());
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k}={v}");
        }
        if let Some(settings) = &self.settings {
            for (k, v, src) in settings.iter() {
                let _ = writeln!(s, "config.{k}={v}");
                let _ = writeln!(s, "source.{k}={src}");
            }
        }
        let _ = writeln!(s, "started_unix={}", self.started);
        let _ = writeln!(s, "finished_unix={finished}");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render(unix_now())).map_err(|e| Error::io(path, e))
    }
}
