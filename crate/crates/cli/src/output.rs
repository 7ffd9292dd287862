//! Output destinations and the run manifest.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shadowlab::snapshot::Snapshot;
use shadowlab::Error;

use crate::jobs::Job;

/// Where a run writes: a directory, or standard output for `--out -`.
pub enum Sink {
    Dir {
        dir: PathBuf,
        written: Vec<String>,
        manifest: String,
    },
    Stdout,
}

impl Sink {
    pub fn new(out: &str, manifest: String) -> Result<Self, Error> {
        if out == "-" {
            return Ok(Sink::Stdout);
        }
        let dir = PathBuf::from(out);
        std::fs::create_dir_all(&dir)?;
        Ok(Sink::Dir {
            dir,
            written: Vec::new(),
            manifest,
        })
    }

    /// Name of the manifest that outputs should reference.
    pub fn manifest_name(&self) -> Option<&str> {
        match self {
            Sink::Dir { manifest, .. } => Some(manifest),
            Sink::Stdout => None,
        }
    }

    fn file(&mut self, name: &str, bytes: &[u8]) -> Result<(), Error> {
        if let Sink::Dir { dir, written, .. } = self {
            std::fs::write(dir.join(name), bytes)?;
            written.push(name.to_string());
        }
        Ok(())
    }

    /// Snapshot file; on standard output only the header line is streamed.
    pub fn snapshot(&mut self, name: &str, mut snap: Snapshot) -> Result<(), Error> {
        snap.header.manifest = self.manifest_name().map(str::to_string);
        match self {
            Sink::Stdout => {
                println!("{}", snap.header_line()?);
                Ok(())
            }
            Sink::Dir { .. } => self.file(name, &snap.to_bytes()?),
        }
    }

    /// Tabular or JSON text; streamed verbatim on standard output.
    pub fn text(&mut self, name: &str, body: &str) -> Result<(), Error> {
        match self {
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(body.as_bytes())?;
                out.flush()?;
                Ok(())
            }
            Sink::Dir { .. } => self.file(name, body.as_bytes()),
        }
    }

    /// Diagnostic drawings are only written to directories.
    pub fn svg(&mut self, name: &str, body: &str) -> Result<(), Error> {
        match self {
            Sink::Stdout => Ok(()),
            Sink::Dir { .. } => self.file(name, body.as_bytes()),
        }
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<(), Error> {
        if let Sink::Dir {
            dir,
            written,
            manifest: name,
        } = self
        {
            manifest.outputs = written;
            let body = serde_json::to_string_pretty(&manifest)?;
            std::fs::write(dir.join(name), body + "\n")?;
        }
        Ok(())
    }
}

/// Everything needed to reproduce a run: the resolved job plus provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the serialized resolved job.
    pub config_hash: String,
    pub seed: u64,
    pub output_dir: String,
    pub timestamp: String,
    pub tool_version: String,
    #[serde(default)]
    pub wall_clock_s: f64,
    #[serde(default)]
    pub outputs: Vec<String>,
    pub job: Job,
}

pub fn job_hash(job: &Job) -> Result<String, Error> {
    let bytes = serde_json::to_vec(job)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(job: Job, config_path: Option<PathBuf>, out: &str) -> Result<Self, Error> {
        Ok(Self {
            subcommand: job.subcommand().to_string(),
            config_path,
            config_hash: job_hash(&job)?,
            seed: job.config().seed,
            output_dir: out.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_s: 0.0,
            outputs: Vec::new(),
            job,
        })
    }

    pub fn file_name(&self) -> String {
        format!("{}.manifest.json", self.subcommand)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{} is not a run manifest: {e}", path.display())))
    }
}
