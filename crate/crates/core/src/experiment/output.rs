use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::ScenarioConfig;
use crate::error::Result;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Files written by one run. Dropped without [`Artifacts::finish`], it
/// deletes everything it wrote.
pub struct Artifacts {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    written: Vec<PathBuf>,
    finished: bool,
}

impl Artifacts {
    pub fn create(command: &str, config: &ScenarioConfig) -> Result<Artifacts> {
        std::fs::create_dir_all(&config.output_dir)?;
        Ok(Artifacts {
            dir: config.output_dir.clone(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            written: Vec::new(),
            finished: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    /// Writes `name` and its `name.meta.json` sidecar.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut w = self.open(name)?;
        body(&mut w)?;
        w.flush()?;
        let meta = json!({
            "artifact": name,
            "artifact_version": ARTIFACT_VERSION,
            "command": self.command,
            "config": self.config,
        });
        self.json(&format!("{name}.meta.json"), &meta)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Vec<PathBuf> {
        self.finished = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.finished {
            for path in &self.written {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}
