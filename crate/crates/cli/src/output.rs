//! Output directory: run manifest and the CSV tables read by the plotting scripts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use porbnet::kernel::VariogramRow;
use porbnet::mcmc::PredictiveRow;
use porbnet::Normalization;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Files land in `root`; `written` keeps their paths relative to it for the manifest.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Write {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Open `rel` for writing, creating parent directories.
    pub fn file(&mut self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(rel);
        let wrap = |source| CliError::Write {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(wrap)?;
        }
        let f = File::create(&path).map_err(wrap)?;
        self.written.push(rel.to_string());
        Ok(BufWriter::new(f))
    }

    /// Run `body` against a fresh file and flush it, tagging I/O errors with the path.
    pub fn write_with(
        &mut self,
        rel: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let mut w = self.file(rel)?;
        body(&mut w).and_then(|()| w.flush()).map_err(|source| CliError::Write {
            path: self.root.join(rel),
            source,
        })
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_with(rel, |w| writeln!(w, "{text}"))
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub fn write_predictive(w: &mut impl Write, rows: &[PredictiveRow]) -> std::io::Result<()> {
    writeln!(w, "x,mean,sd,q05,q95")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.x, r.mean, r.sd, r.q05, r.q95)?;
    }
    Ok(())
}

pub fn write_variogram(w: &mut impl Write, rows: &[VariogramRow]) -> std::io::Result<()> {
    writeln!(w, "x,gap,cov,source,std_error")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.x, r.gap, r.cov, r.source.as_str(), r.std_error)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub config_sha256: String,
    pub git_revision: Option<String>,
    pub porbnet_version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    /// One entry per split when `fit` normalizes the data.
    pub normalization: Vec<Normalization>,
    /// Per-split values filled in from defaults: region, Gamma rate, SGCP settings.
    pub derived: Vec<serde_json::Value>,
    pub outputs: Vec<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig) -> Result<Self> {
        Ok(Manifest {
            command,
            argv: std::env::args().collect(),
            seed: config.seed(),
            config,
            config_sha256: config.hash()?,
            git_revision: git_revision(),
            porbnet_version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            normalization: Vec::new(),
            derived: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn finish(mut self, out: &mut OutDir) -> Result<()> {
        self.outputs = out.written().to_vec();
        out.write_json("manifest.json", &self)
    }
}

/// `HEAD` of the repository containing the working directory, if any.
fn git_revision() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let rev = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!rev.is_empty()).then_some(rev)
}
