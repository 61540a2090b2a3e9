use std::fs;
use std::path::{Path, PathBuf};

use gpssm::io::write_comment;
use gpssm::Result;
use serde_json::{Map, Value};

/// Writes artifacts into one directory, each carrying the invocation config.
pub struct Artifacts {
    dir: PathBuf,
    command: String,
    config: Value,
}

impl Artifacts {
    pub fn new(dir: &Path, command: &str, config: Value) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), command: command.into(), config })
    }

    fn header(&self) -> String {
        format!("gpssm {}\nconfig: {}", self.command, self.config)
    }

    pub fn csv<F>(&self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        write_comment(&mut buf, &self.header())?;
        body(&mut buf)?;
        fs::write(self.dir.join(name), buf)?;
        Ok(())
    }

    /// Writes `fields` as a JSON object with `command` and `config` first.
    pub fn json(&self, name: &str, fields: Value) -> Result<()> {
        let mut obj = Map::new();
        obj.insert("command".into(), Value::String(self.command.clone()));
        obj.insert("config".into(), self.config.clone());
        match fields {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    pub fn markdown(&self, name: &str, body: &str) -> Result<()> {
        let text = format!("<!-- {} -->\n\n{body}", self.header().replace('\n', " | "));
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}
