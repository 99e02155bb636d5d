//! Run manifest: the provenance record written next to every run's
//! artifacts. A manifest references exactly the files its run produced, so
//! a config file plus a seed is enough to reproduce and audit any artifact.

use std::path::Path;

use serde::Serialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::CliError;
use crate::csvio::write_json;

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config_sha256: &'a str,
    pub seed: u64,
    pub started_at: &'a str,
    pub finished_at: String,
    pub artifacts: &'a [String],
    pub version: &'static str,
}

pub fn now_utc() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .expect("UTC timestamps always format")
}

/// Writes `manifest.json` into the run directory.
pub fn write(
    dir: &Path,
    command: &str,
    config_sha256: &str,
    seed: u64,
    started_at: &str,
    artifacts: &[String],
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command,
        config_sha256,
        seed,
        started_at,
        finished_at: now_utc(),
        artifacts,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}
