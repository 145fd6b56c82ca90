//! Shared state of one command run: configuration, command-line overrides,
//! provenance header and the output directory.

use std::cell::Cell;
use std::fmt;
use std::fs;
use std::path::PathBuf;

use ofem::imprint::PhaseMap;
use ofem::io::Meta;
use ofem::propagate::{Dim, FocalProfile};
use sha2::{Digest, Sha256};

use crate::config::{Config, ConfigError};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// Invalid parameters or input data reported by a computation stage.
    Input { stage: String, msg: String },
    Convergence { stage: String, msg: String },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => EXIT_CONFIG,
            CliError::Convergence { .. } => EXIT_CONVERGENCE,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(ConfigError {
            line: 0,
            msg: msg.into(),
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Input { stage, msg } => write!(f, "{stage}: {msg}"),
            CliError::Convergence { stage, msg } => write!(f, "{stage}: {msg}"),
            CliError::Io(msg) => write!(f, "i/o: {msg}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the name of the failing pipeline stage to library errors.
pub trait Stage<T> {
    fn stage(self, name: &str) -> CliResult<T>;
}

impl<T> Stage<T> for ofem::Result<T> {
    fn stage(self, name: &str) -> CliResult<T> {
        self.map_err(|e| {
            let msg = e.to_string();
            match e {
                ofem::Error::Convergence { .. } => CliError::Convergence {
                    stage: name.into(),
                    msg,
                },
                ofem::Error::Io(_) => CliError::Io(format!("{name}: {msg}")),
                _ => CliError::Input {
                    stage: name.into(),
                    msg,
                },
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Graymap,
}

pub struct Context {
    pub command: &'static str,
    pub cfg: Config,
    config_dir: PathBuf,
    out_dir: PathBuf,
    pub format: Format,
    grid: Option<usize>,
    tol: Option<f64>,
    grid_used: Cell<bool>,
    tol_used: Cell<bool>,
    provenance: Option<Meta>,
    written: Vec<String>,
}

impl Context {
    pub fn new(
        command: &'static str,
        cfg: Config,
        config_dir: PathBuf,
        out_dir: PathBuf,
        format: Format,
        grid: Option<usize>,
        tol: Option<f64>,
    ) -> Self {
        Self {
            command,
            cfg,
            config_dir,
            out_dir,
            format,
            grid,
            tol,
            grid_used: Cell::new(false),
            tol_used: Cell::new(false),
            provenance: None,
            written: Vec::new(),
        }
    }

    /// The main grid size of a command: `--grid` if given, else the config key.
    pub fn grid(&self, section: &str, key: &str, default: usize) -> CliResult<usize> {
        let n = self.cfg.usize_or(section, key, default)?;
        self.grid_used.set(true);
        Ok(match self.grid {
            Some(g) => {
                self.cfg.set_resolved(section, key, g);
                g
            }
            None => n,
        })
    }

    /// Numerical tolerance: `--tol` if given, else `[numerics] tol`.
    pub fn tol(&self, default: f64) -> CliResult<f64> {
        let t = self.cfg.positive_or("numerics", "tol", default)?;
        self.tol_used.set(true);
        Ok(match self.tol {
            Some(x) => {
                self.cfg.set_resolved("numerics", "tol", x);
                x
            }
            None => t,
        })
    }

    /// Resolves an input path given in the config relative to the config file.
    pub fn input_file(&self, section: &str, key: &str) -> CliResult<Option<Vec<u8>>> {
        let Some(name) = self.cfg.opt_str(section, key)? else {
            return Ok(None);
        };
        let path = self.config_dir.join(&name);
        fs::read(&path)
            .map(Some)
            .map_err(|e| self.cfg.error_at(section, key, format!("cannot read {}: {e}", path.display())).into())
    }

    pub fn input_text(&self, section: &str, key: &str) -> CliResult<Option<String>> {
        match self.input_file(section, key)? {
            None => Ok(None),
            Some(bytes) => String::from_utf8(bytes)
                .map(Some)
                .map_err(|_| self.cfg.error_at(section, key, "file is not UTF-8 text").into()),
        }
    }

    /// Ends the parameter-reading phase: rejects unknown keys and unused
    /// overrides, then fixes the provenance header.
    pub fn finish_config(&mut self) -> CliResult<()> {
        if let Some((key, line)) = self.cfg.unused_keys().into_iter().next() {
            return Err(ConfigError {
                line,
                msg: format!("unknown key {key} for command {}", self.command),
            }
            .into());
        }
        if self.grid.is_some() && !self.grid_used.get() {
            return Err(CliError::config(format!("--grid has no effect for command {}", self.command)));
        }
        if self.tol.is_some() && !self.tol_used.get() {
            return Err(CliError::config(format!("--tol has no effect for command {}", self.command)));
        }
        let params = self.cfg.resolved();
        let mut meta = Meta::new();
        meta.set("tool", format!("ofem {}", env!("CARGO_PKG_VERSION")));
        meta.set("command", self.command);
        meta.set("config_sha256", config_hash(self.command, &params));
        for (k, v) in &params {
            meta.set(&format!("param.{k}"), v);
        }
        self.provenance = Some(meta);
        Ok(())
    }

    pub fn provenance(&self) -> &Meta {
        self.provenance
            .as_ref()
            .expect("finish_config must run before outputs are written")
    }

    /// Provenance followed by the artifact's own metadata.
    pub fn header(&self, own: &Meta) -> Meta {
        let mut m = self.provenance().clone();
        m.extend(own);
        m
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Phase map as text, or as a graymap when 2D and `--format graymap`.
    pub fn write_phase(&mut self, stem: &str, map: &PhaseMap) -> CliResult<()> {
        let mut m = map.clone();
        m.meta = self.header(&map.meta);
        if self.format == Format::Graymap && map.is_plane() {
            self.write(&format!("{stem}.pgm"), &m.to_pgm())
        } else {
            self.write(&format!("{stem}.txt"), m.to_text().as_bytes())
        }
    }

    pub fn write_focal(&mut self, stem: &str, profile: &FocalProfile) -> CliResult<()> {
        let mut p = profile.clone();
        p.meta = self.header(&profile.meta);
        if self.format == Format::Graymap && profile.dim == Dim::Two {
            self.write(&format!("{stem}.pgm"), &p.to_pgm())
        } else {
            self.write(&format!("{stem}.txt"), p.to_text().as_bytes())
        }
    }

    /// Numeric table with named columns.
    pub fn write_table(&mut self, stem: &str, own: &Meta, columns: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
        let mut meta = self.header(own);
        meta.set("columns", columns.join(" "));
        let mut out = String::new();
        meta.write_header(&mut out);
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| ofem::io::fmt_f64(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        self.write(&format!("{stem}.txt"), out.as_bytes())
    }

    /// `summary.txt` with the provenance header and `key = value` results;
    /// the same lines go to standard output.
    pub fn finish(mut self, summary: &Meta) -> CliResult<String> {
        let mut m = summary.clone();
        if !self.written.is_empty() {
            m.set("outputs", self.written.join(" "));
        }
        let mut body = String::new();
        for (k, v) in &m.0 {
            body.push_str(&format!("{k} = {v}\n"));
        }
        let mut out = String::new();
        self.provenance().write_header(&mut out);
        out.push_str(&body);
        self.write("summary.txt", out.as_bytes())?;
        Ok(body)
    }
}

/// SHA-256 over the command name and the sorted resolved parameters.
pub fn config_hash(command: &str, params: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    h.update(format!("command={command}\n"));
    for (k, v) in params {
        h.update(format!("{k}={v}\n"));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_values_and_command() {
        let p = vec![("electron.energy_kev".to_string(), "60".to_string())];
        let q = vec![("electron.energy_kev".to_string(), "80".to_string())];
        assert_eq!(config_hash("power", &p), config_hash("power", &p));
        assert_ne!(config_hash("power", &p), config_hash("power", &q));
        assert_ne!(config_hash("power", &p), config_hash("imprint", &p));
        assert_eq!(config_hash("power", &p).len(), 64);
    }

    #[test]
    fn library_errors_map_to_exit_codes() {
        let conv: ofem::Result<()> = Err(ofem::Error::Convergence {
            what: "x".into(),
            estimate: 1.0,
            tolerance: 0.1,
        });
        assert_eq!(conv.stage("s").unwrap_err().exit_code(), EXIT_CONVERGENCE);
        let dom: ofem::Result<()> = Err(ofem::Error::Domain("bad".into()));
        let e = dom.stage("geometry").unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG);
        assert!(e.to_string().starts_with("geometry:"));
    }
}
