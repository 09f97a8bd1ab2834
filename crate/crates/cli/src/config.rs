//! Scene configuration files: TOML text mirroring [`SceneDescription`].

use std::path::Path;

use raytable::procedural::sample::{build_scene, validate_description, BuildError};
use raytable::{SceneDescription, SceneError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid {entity:?}: {message}")]
    Validation { entity: String, message: String },
    #[error("cannot serialize scene: {0}")]
    Serialize(String),
}

/// 1-based line and column of byte offset `offset` in `text`.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn validation_error(err: BuildError) -> ConfigError {
    let (entity, message) = match &err {
        BuildError::Invalid { entity, message } => (entity.clone(), message.clone()),
        BuildError::Scene(SceneError::DuplicateId { id, .. })
        | BuildError::Scene(SceneError::InvalidGeometry { id, .. })
        | BuildError::Scene(SceneError::InvalidSignature { id, .. })
        | BuildError::Scene(SceneError::InvalidHitGroup { id }) => (id.as_str().to_owned(), err.to_string()),
        _ => ("scene".to_owned(), err.to_string()),
    };
    ConfigError::Validation { entity, message }
}

/// Parses and validates configuration text. Unknown keys are rejected.
pub fn parse_scene_config(text: &str) -> Result<SceneDescription, ConfigError> {
    let desc: SceneDescription = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().trim().to_owned(),
        }
    })?;
    validate_description(&desc).map_err(validation_error)?;
    build_scene(&desc).map_err(validation_error)?;
    Ok(desc)
}

pub fn load_scene_config(path: &Path) -> Result<SceneDescription, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_scene_config(&text)
}

pub fn dump_scene_config(desc: &SceneDescription) -> Result<String, ConfigError> {
    toml::to_string_pretty(desc).map_err(|e| ConfigError::Serialize(e.to_string()))
}
