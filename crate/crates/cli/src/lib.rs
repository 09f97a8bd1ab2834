//! Command-line front end: loads a scene configuration (or the built-in
//! sample), builds the pipeline, renders one frame and writes a binary PPM.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use raytable::pipeline::{DispatchError, DispatchStats};
use raytable::procedural::sample::BuildError;
use raytable::procedural::Camera;
use raytable::{build_sample, Frame, Image, SceneDescription};
use thiserror::Error;

pub use config::{dump_scene_config, load_scene_config, parse_scene_config, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "raytable", version, about = "Render the procedural sample scene to a PPM image")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one frame.
    Render(RenderArgs),
    /// Print a scene configuration (the built-in sample unless --scene is given).
    DumpScene(DumpArgs),
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut out = [0.0f64; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
        if !o.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long, default_value_t = 320)]
    pub width: u32,
    #[arg(long, default_value_t = 240)]
    pub height: u32,
    /// Output image path; `-` streams the image to standard output.
    #[arg(long, default_value = "frame.ppm")]
    pub out: String,
    /// Animation time in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub time: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Scene configuration file (TOML); the built-in sample when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Camera position, overriding the scene's.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_vec3)]
    pub camera_pos: Option<[f64; 3]>,
    /// Camera target point, overriding the scene's.
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_vec3)]
    pub look_at: Option<[f64; 3]>,
    /// Vertical field of view in degrees, overriding the scene's.
    #[arg(long)]
    pub fov: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output path; standard output when absent or `-`.
    #[arg(long)]
    pub out: Option<String>,
}

/// Everything one render needs, after flags and files are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub output_path: String,
    pub time: f64,
    pub camera: Camera,
    pub threads: usize,
    pub scene_path: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("CONFIG: {0}")]
    Config(#[from] ConfigError),
    #[error("CONFIG: {0}")]
    Invalid(String),
    #[error("BUILD: {0}")]
    Build(#[from] BuildError),
    #[error("RENDER: {0}")]
    Render(#[from] DispatchError),
    #[error("IO: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Outcome of a successful render.
#[derive(Debug, Clone)]
pub struct RenderReport {
    pub image: Image,
    pub stats: DispatchStats,
    pub build_time: Duration,
}

impl RenderReport {
    pub fn summary(&self) -> String {
        format!(
            "rays traced: {}, pixels: {}, max depth: {}, build: {:.1} ms, render: {:.1} ms",
            self.stats.traces,
            self.stats.pixels,
            self.stats.max_depth,
            self.build_time.as_secs_f64() * 1e3,
            self.stats.elapsed.as_secs_f64() * 1e3
        )
    }
}

fn scene_description(path: Option<&PathBuf>) -> Result<SceneDescription, CliError> {
    Ok(match path {
        Some(p) => load_scene_config(p)?,
        None => SceneDescription::default(),
    })
}

/// Resolves flags against the scene's own camera.
pub fn resolve_render_config(args: &RenderArgs, scene_camera: Camera) -> Result<RenderConfig, CliError> {
    if args.width == 0 || args.height == 0 {
        return Err(CliError::Invalid(format!(
            "width and height must be at least 1, got {}x{}",
            args.width, args.height
        )));
    }
    if !args.time.is_finite() {
        return Err(CliError::Invalid("time must be finite".into()));
    }
    let mut camera = scene_camera;
    if let Some(p) = args.camera_pos {
        camera.position = p;
    }
    if let Some(p) = args.look_at {
        camera.look_at = p;
    }
    if let Some(f) = args.fov {
        camera.vertical_fov_deg = f;
    }
    camera.validate().map_err(|m| CliError::Invalid(format!("camera: {m}")))?;
    Ok(RenderConfig {
        width: args.width,
        height: args.height,
        output_path: args.out.clone(),
        time: args.time,
        camera,
        threads: args.threads,
        scene_path: args.scene.clone(),
    })
}

/// Builds and renders `desc` under `config`'s frame and camera.
pub fn render_description(desc: &SceneDescription, config: &RenderConfig) -> Result<RenderReport, CliError> {
    let mut desc = desc.clone();
    desc.camera = config.camera;
    let frame = Frame {
        width: config.width,
        height: config.height,
        time: config.time,
    };
    let sample = build_sample(&desc, frame)?;
    let out = sample.render(config.threads)?;
    Ok(RenderReport {
        image: out.image,
        stats: out.stats,
        build_time: sample.build_time,
    })
}

fn write_output(path: &str, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    if path == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(bytes).map_err(io)?;
        stdout.flush().map_err(io)
    } else {
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(bytes).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Runs `render`: returns the report after the image has been written.
pub fn render(args: &RenderArgs) -> Result<RenderReport, CliError> {
    let desc = scene_description(args.scene.as_ref())?;
    let config = resolve_render_config(args, desc.camera)?;
    let report = render_description(&desc, &config)?;
    write_output(&config.output_path, &report.image.to_ppm())?;
    Ok(report)
}

pub fn dump_scene(args: &DumpArgs) -> Result<(), CliError> {
    let desc = scene_description(args.scene.as_ref())?;
    let text = dump_scene_config(&desc)?;
    write_output(args.out.as_deref().unwrap_or("-"), text.as_bytes())
}

/// Runs a parsed command line; stats go to standard error.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Render(args) => {
            let report = render(args)?;
            eprintln!("{}", report.summary());
            Ok(())
        }
        Command::DumpScene(args) => dump_scene(args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec3_flag_parsing() {
        assert_eq!(parse_vec3("1, 2.5,-3").unwrap(), [1.0, 2.5, -3.0]);
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("1,2,x").is_err());
        assert!(parse_vec3("1,2,inf").is_err());
    }

    #[test]
    fn flags_override_the_camera() {
        let cli = Cli::try_parse_from(["raytable", "render", "--camera-pos", "0,2,9", "--fov", "60"]).unwrap();
        let Command::Render(args) = cli.command else { panic!() };
        let config = resolve_render_config(&args, Camera::default()).unwrap();
        assert_eq!(config.camera.position, [0.0, 2.0, 9.0]);
        assert_eq!(config.camera.vertical_fov_deg, 60.0);
        assert_eq!(config.camera.look_at, Camera::default().look_at);
        assert_eq!((config.width, config.height), (320, 240));
    }

    #[test]
    fn bad_flags_are_config_errors() {
        let cli = Cli::try_parse_from(["raytable", "render", "--fov", "180"]).unwrap();
        let Command::Render(args) = cli.command else { panic!() };
        let err = resolve_render_config(&args, Camera::default()).unwrap_err();
        assert!(err.to_string().starts_with("CONFIG:"), "{err}");
    }
}
