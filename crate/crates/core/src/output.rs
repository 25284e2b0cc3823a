//! CSV and JSON artifacts.
//!
//! Event files use one fixed column order; times are in ms, positions in
//! μm, numbers carry 12 significant digits and missing values are empty.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::abr::SurvivalPoint;
use crate::bohm::{DetectionRecord, Trajectory};
use crate::error::Result;
use crate::stats::Histogram;
use crate::units::TIME_SI;

pub const EVENT_COLUMNS: [&str; 12] = [
    "event_id",
    "source",
    "eta",
    "species",
    "seed",
    "t_left_ms",
    "x_left_um",
    "t_right_ms",
    "x_right_um",
    "first_screen",
    "collapse_applied",
    "lost_reason",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Bohmian,
    Semiclassical,
    Abr,
    Truncated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Bohmian => "bohmian",
            Source::Semiclassical => "semiclassical",
            Source::Abr => "abr",
            Source::Truncated => "truncated",
        }
    }
}

/// `v` with 12 significant digits; fixed notation for moderate magnitudes.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    if v == 0.0 {
        return "0".into();
    }
    let e = v.abs().log10().floor() as i32;
    if (-4..12).contains(&e) {
        format!("{:.*}", (11 - e) as usize, v)
    } else {
        format!("{:.11e}", v)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig).unwrap_or_default()
}

/// Labels shared by every row of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunLabels {
    pub source: Source,
    pub eta: f64,
    pub species: String,
    pub seed: u64,
}

pub fn write_events<W: Write>(mut w: W, records: &[DetectionRecord], labels: &RunLabels) -> Result<()> {
    writeln!(w, "{}", EVENT_COLUMNS.join(","))?;
    let eta = fmt_sig(labels.eta);
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.event_id,
            labels.source.as_str(),
            eta,
            labels.species,
            labels.seed,
            opt(r.t_left()),
            opt(r.left.map(|a| a.1)),
            opt(r.t_right()),
            opt(r.right.map(|a| a.1)),
            r.first.map(|s| s.as_str()).unwrap_or(""),
            r.collapse_applied,
            r.lost.map(|l| l.as_str()).unwrap_or(""),
        )?;
    }
    Ok(())
}

/// Survival curve with columns `t_s, survival_fraction, kappa_over_kappa0`;
/// the ratio is left empty for the baseline without back-action.
pub fn write_survival<W: Write>(mut w: W, points: &[SurvivalPoint], kappa_over_kappa0: Option<f64>) -> Result<()> {
    writeln!(w, "t_s,survival_fraction,kappa_over_kappa0")?;
    let k = opt(kappa_over_kappa0);
    for p in points {
        writeln!(w, "{},{},{}", fmt_sig(p.t * TIME_SI), fmt_sig(p.trajectory), k)?;
    }
    Ok(())
}

/// The other survival estimators next to the trajectory count.
pub fn write_survival_detail<W: Write>(mut w: W, points: &[SurvivalPoint], kappa_over_kappa0: Option<f64>) -> Result<()> {
    writeln!(w, "t_s,survival_fraction,no_detection_fraction,wave_norm,kappa_over_kappa0")?;
    let k = opt(kappa_over_kappa0);
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_sig(p.t * TIME_SI),
            fmt_sig(p.trajectory),
            fmt_sig(p.no_detection),
            fmt_sig(p.wave_norm),
            k
        )?;
    }
    Ok(())
}

pub fn write_histogram<W: Write>(mut w: W, h: &Histogram) -> Result<()> {
    writeln!(w, "t_lo_ms,t_hi_ms,count")?;
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(
            w,
            "{},{},{}",
            fmt_sig(h.binning.left_edge(i)),
            fmt_sig(h.binning.left_edge(i + 1)),
            c
        )?;
    }
    Ok(())
}

pub fn write_trajectories<W: Write>(mut w: W, ids: &[u64], trajectories: &[Trajectory]) -> Result<()> {
    writeln!(w, "event_id,t_ms,x1_um,y1_um,x2_um,y2_um")?;
    for (id, tr) in ids.iter().zip(trajectories) {
        for k in &tr.knots {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                id,
                fmt_sig(k.t),
                fmt_sig(k.r1[0]),
                fmt_sig(k.r1[1]),
                fmt_sig(k.r2[0]),
                fmt_sig(k.r2[1])
            )?;
        }
    }
    Ok(())
}

/// Collects files written into one directory, with their checksums.
#[derive(Debug)]
pub struct OutputDir {
    pub root: PathBuf,
    pub files: Vec<OutputFile>,
}

#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Write a file through `f` and record it.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<&mut Vec<u8>>) -> Result<()>,
    {
        let mut buf = Vec::new();
        {
            let mut w = BufWriter::new(&mut buf);
            f(&mut w)?;
            w.flush()?;
        }
        fs::write(self.root.join(name), &buf)?;
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&buf)),
            bytes: buf.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Delete everything written so far.
    pub fn remove_written(&self) {
        for f in &self.files {
            let _ = fs::remove_file(self.root.join(&f.path));
        }
    }
}

/// Git-style content hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}
