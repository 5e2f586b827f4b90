//! Session directories: a recorded run on disk, and offline replay that
//! re-derives every estimate from the raw frame stream and verifies the two
//! logs agree byte for byte.
//!
//! Layout:
//! ```text
//! <session>/
//!   scenario.toml   — the exact configuration that produced the run
//!   frames.bin      — the radio frame stream, headerless, byte-exact
//!   estimates.txt   — one estimate record per sample, after a version header
//!   truth.txt       — one ground-truth record per sample, same shape
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use vesica_core::link::decode_stream_lossy;

use crate::runner::{assemble_sweeps, estimate_records_from_sweeps, SessionLog};
use crate::scenario::Scenario;

pub const SCENARIO_FILE: &str = "scenario.toml";
pub const FRAMES_FILE: &str = "frames.bin";
pub const ESTIMATES_FILE: &str = "estimates.txt";
pub const TRUTH_FILE: &str = "truth.txt";

pub const ESTIMATES_HEADER: &str =
    "# vesica-estimates v1: time_s volume_ml point_count quality residual_mm";
pub const TRUTH_HEADER: &str = "# vesica-truth v1: time_s volume_ml length_cm width_cm height_cm";

// --------------------------------------------------------------------------
// save / load
// --------------------------------------------------------------------------

fn write_records(path: &Path, header: &str, records: &[String]) -> Result<()> {
    let mut text = String::with_capacity(header.len() + 1 + records.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for r in records {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_records(path: &Path, header: &str) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        Some(first) => bail!(
            "{}: unsupported header {first:?} (this build reads {header:?})",
            path.display()
        ),
        None => bail!("{}: empty file, expected a header line", path.display()),
    }
    Ok(lines
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

pub fn save_session(log: &SessionLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(SCENARIO_FILE), log.scenario.to_toml_string()?)
        .context("writing scenario snapshot")?;
    fs::write(dir.join(FRAMES_FILE), &log.frame_bytes).context("writing frame stream")?;
    write_records(&dir.join(ESTIMATES_FILE), ESTIMATES_HEADER, &log.estimate_records)?;
    write_records(&dir.join(TRUTH_FILE), TRUTH_HEADER, &log.truth_records)?;
    Ok(())
}

pub fn load_session(dir: &Path) -> Result<SessionLog> {
    let scenario = Scenario::load(&dir.join(SCENARIO_FILE))?;
    let frame_bytes =
        fs::read(dir.join(FRAMES_FILE)).with_context(|| format!("reading {}", dir.join(FRAMES_FILE).display()))?;
    let estimate_records = read_records(&dir.join(ESTIMATES_FILE), ESTIMATES_HEADER)?;
    let truth_records = read_records(&dir.join(TRUTH_FILE), TRUTH_HEADER)?;
    Ok(SessionLog { scenario, frame_bytes, estimate_records, truth_records })
}

// --------------------------------------------------------------------------
// replay
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayOutcome {
    /// Estimate records re-derived from the stream and matched to the log.
    pub records_verified: usize,
    /// Bytes at the end of `frames.bin` that do not form a whole frame.
    /// Nonzero means the recording was cut off and only a prefix of the log
    /// could be verified.
    pub trailing_bytes: usize,
}

/// Re-run estimation from a session's raw frame stream and check that it
/// reproduces the recorded estimate log exactly.
pub fn replay_session(dir: &Path) -> Result<ReplayOutcome> {
    let log = load_session(dir)?;
    let (frames, trailing_bytes) =
        decode_stream_lossy(&log.frame_bytes).context("decoding frame stream")?;

    let mut sweeps = assemble_sweeps(frames);
    if trailing_bytes > 0 && !sweeps.is_empty() {
        // The final sweep lost at least part of one frame; its estimate is
        // not comparable, so verify only the sweeps that are whole.
        sweeps.pop();
    }
    let replayed = estimate_records_from_sweeps(&log.scenario, &sweeps)?;

    let comparable = if trailing_bytes == 0 {
        if replayed.len() != log.estimate_records.len() {
            bail!(
                "replay produced {} records but the log holds {}",
                replayed.len(),
                log.estimate_records.len()
            );
        }
        replayed.len()
    } else {
        sweeps.len().min(log.estimate_records.len())
    };

    for i in 0..comparable {
        if replayed[i] != log.estimate_records[i] {
            bail!(
                "estimate record {i} diverged:\n  recorded: {}\n  replayed: {}",
                log.estimate_records[i],
                replayed[i]
            );
        }
    }
    Ok(ReplayOutcome { records_verified: comparable, trailing_bytes })
}

// --------------------------------------------------------------------------
