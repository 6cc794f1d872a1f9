//! Output files: comment header, fixed numeric formatting, CSV quoting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e6)`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Exponent after rounding to six digits decides the style.
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Optional value: empty cell when absent.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// What goes in the comment header of every output file.
#[derive(Clone, Debug)]
pub struct Header {
    pub command: String,
    /// Effective settings, sorted by key.
    pub settings: Vec<(String, String)>,
    pub seed: u64,
    /// Start time when durations are recorded.
    pub started: Option<Instant>,
}

impl Header {
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("# treeloc {}", env!("CARGO_PKG_VERSION")),
            format!("# command: {}", self.command),
        ];
        for (k, v) in &self.settings {
            out.push(format!("# config: {k} = {v}"));
        }
        out.push(format!("# seed: {}", self.seed));
        out.push(match self.started {
            Some(t) => format!("# duration_s: {:.3}", t.elapsed().as_secs_f64()),
            None => "# duration_s: not recorded (run with --timing)".into(),
        });
        out
    }
}

/// A text output file that starts with the header. The header is written
/// again at the end with the final duration when timing is enabled, so the
/// top of the file stays stable across runs either way.
pub struct OutputFile {
    path: PathBuf,
    writer: BufWriter<File>,
    header: Header,
}

impl OutputFile {
    pub fn create(path: &Path, header: &Header) -> io::Result<OutputFile> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut writer = BufWriter::new(File::create(path)?);
        let mut head = header.clone();
        head.started = None;
        for line in head.lines() {
            writeln!(writer, "{line}")?;
        }
        Ok(OutputFile { path: path.to_path_buf(), writer, header: header.clone() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn line(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.writer, "{text}")
    }

    pub fn row(&mut self, cells: &[String]) -> io::Result<()> {
        writeln!(self.writer, "{}", cells.join(","))
    }

    /// Direct access for module writers that emit their own lines.
    pub fn writer(&mut self) -> &mut BufWriter<File> {
        &mut self.writer
    }

    /// Completes the file; records the duration when timing is on.
    pub fn finish(mut self) -> io::Result<()> {
        if self.header.started.is_some() {
            let last = self.header.lines().pop().expect("header has lines");
            writeln!(self.writer, "{last}")?;
        }
        self.writer.flush()
    }

    /// Flushes what was written and marks the file as partial.
    pub fn abort(mut self, reason: &str) -> io::Result<()> {
        writeln!(self.writer, "# INCOMPLETE: {}", reason.replace('\n', " "))?;
        self.writer.flush()
    }
}

/// `out` with its extension replaced by `suffix` (e.g. `run.csv` to `run.fits.csv`).
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}
