use std::fmt;
use std::path::Path;

use toeplitz_wkb::experiments::ExperimentConfig;
use toeplitz_wkb::Error;

/// A schema or validation problem, located by its field path.
#[derive(Debug)]
pub struct ConfigError {
    pub file: String,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: at `{}`: {}", self.file, self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Reads a TOML or JSON experiment config, chosen by extension (TOML otherwise).
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let file = path.display().to_string();
    let err = |path: String, message: String| ConfigError { file: file.clone(), path, message };
    let text = std::fs::read_to_string(path).map_err(|e| err(".".into(), e.to_string()))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let cfg: ExperimentConfig = if json {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| err(e.path().to_string(), e.inner().to_string()))?
    } else {
        let de = toml::Deserializer::new(&text);
        serde_path_to_error::deserialize(de).map_err(|e| err(e.path().to_string(), e.inner().message().to_string()))?
    };
    match cfg.validate() {
        Ok(()) => Ok(cfg),
        Err(Error::Config { field, message }) => Err(err(field, message)),
        Err(e) => Err(err(".".into(), e.to_string())),
    }
}
