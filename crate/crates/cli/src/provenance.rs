use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use dsdiff_core::Result;
use sha2::{Digest, Sha256};

use crate::config::Settings;

pub const LOG_NAME: &str = "provenance.log";

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// One replayable entry: command line, seed, config hash, the full resolved
/// config, and digests of every input and output file.
pub struct Record<'a> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub settings: &'a Settings,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Record<'_> {
    pub fn render(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "argv = {}", self.argv.join(" "));
        let _ = writeln!(s, "seed = {}", self.settings.seed);
        let _ = writeln!(s, "config_sha256 = {}", self.settings.hash());
        for p in &self.inputs {
            let _ = writeln!(s, "input = {} sha256:{}", p.display(), file_sha256(p)?);
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output = {} sha256:{}", p.display(), file_sha256(p)?);
        }
        let _ = writeln!(s, "[config]");
        s.push_str(&self.settings.to_toml());
        s.push('\n');
        Ok(s)
    }

    /// Appends the entry to the log in the output directory.
    pub fn append(&self) -> Result<()> {
        let text = self.render()?;
        let path = self.settings.output_dir.join(LOG_NAME);
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(text.as_bytes())?;
        Ok(())
    }
}
