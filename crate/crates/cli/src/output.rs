use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A failed check, reported in the manifest and on stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub check: String,
    pub detail: String,
}

impl Failure {
    pub fn new(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            detail: detail.into(),
        }
    }
}

/// Where and how a run writes its files.
#[derive(Debug)]
pub struct OutputSink {
    dir: PathBuf,
    header: String,
    emit_gnuplot: bool,
    written: Vec<PathBuf>,
}

impl OutputSink {
    pub fn new(dir: &Path, command: &str, config_hash: &str, seed: u64, emit_gnuplot: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: format!("# mvsc command={command} config_sha256={config_hash} seed={seed}"),
            emit_gnuplot,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_csv(
        &mut self,
        name: &str,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<PathBuf> {
        let mut text = String::new();
        writeln!(text, "{}", self.header)?;
        writeln!(text, "{}", columns.join(","))?;
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            writeln!(text, "{}", row.join(","))?;
        }
        let path = self.dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes `<stem>.gp` plotting `columns` (1-based, `x:y`) of `csv`, when
    /// plot scripts were requested.
    pub fn gnuplot(&mut self, csv: &Path, title: &str, x: usize, ys: &[(usize, &str)], logscale_y: bool) -> Result<()> {
        if !self.emit_gnuplot {
            return Ok(());
        }
        let file = csv.file_name().expect("csv file name").to_string_lossy();
        let stem = csv.file_stem().expect("csv stem").to_string_lossy();
        let mut s = String::new();
        writeln!(s, "set datafile separator ','")?;
        writeln!(s, "set datafile commentschars '#'")?;
        writeln!(s, "set key autotitle columnhead")?;
        writeln!(s, "set terminal pngcairo size 900,600")?;
        writeln!(s, "set output '{stem}.png'")?;
        writeln!(s, "set title '{title}'")?;
        if logscale_y {
            writeln!(s, "set logscale y")?;
        }
        let plots: Vec<String> = ys
            .iter()
            .map(|(y, style)| format!("'{file}' every ::1 using {x}:{y} with {style}"))
            .collect();
        writeln!(s, "plot {}", plots.join(", \\\n     "))?;
        let path = self.dir.join(format!("{stem}.gp"));
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Versions {
    mvsc_core: &'static str,
    mvsc_cli: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub problem: &'a str,
    pub config_path: String,
    pub config_sha256: &'a str,
    pub seed: u64,
    pub workers: usize,
    versions: Versions,
    pub outputs: Vec<String>,
    pub status: &'a str,
    pub failures: &'a [Failure],
}

impl<'a> Manifest<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &'a str,
        problem: &'a str,
        config_path: &Path,
        config_sha256: &'a str,
        seed: u64,
        outputs: &[PathBuf],
        failures: &'a [Failure],
    ) -> Self {
        Self {
            command,
            problem,
            config_path: config_path.display().to_string(),
            config_sha256,
            seed,
            workers: rayon::current_num_threads(),
            versions: Versions {
                mvsc_core: mvsc_core::VERSION,
                mvsc_cli: env!("CARGO_PKG_VERSION"),
            },
            outputs: outputs
                .iter()
                .map(|p| {
                    p.file_name()
                        .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
                })
                .collect(),
            status: if failures.is_empty() { "ok" } else { "failed" },
            failures,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("run_manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
