//! Grid sweeps over `(dp2, l_z, l_y, l_x)` with deterministic output.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::overlap::{BrightnessSplit, SeparationVector};
use crate::qfi::{qcrb_from_qfi, CenteringConvention, QfiEvaluator};
use crate::quadrature::{PupilModel, QuadratureSpec};

pub const CSV_HEADER: &str = "dp2,lx,ly,lz,delta,phi,H_xx,H_xy,H_xz,H_yy,H_yz,H_zz,qcrb_x,qcrb_y,qcrb_z,status";

/// Upper bound on the number of records in one sweep.
pub const MAX_GRID_POINTS: usize = 10_000_000;

pub const DEFAULT_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    Singular,
    SmallSeparationLimit,
}

impl RecordStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Singular => "singular",
            RecordStatus::SmallSeparationLimit => "small-separation-limit",
        }
    }
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" => Ok(OutputFormat::JsonLines),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// `min:step:max`, shared by `l_x` and `l_y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub step: f64,
    pub max: f64,
}

impl GridSpec {
    pub fn new(min: f64, step: f64, max: f64) -> Result<Self> {
        let g = Self { min, step, max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::Config("grid bounds must be finite".into()));
        }
        if self.min >= self.max {
            return Err(Error::Config(format!("grid needs l_min < l_max, got {} and {}", self.min, self.max)));
        }
        if self.step <= 0.0 {
            return Err(Error::Config(format!("grid step must be positive, got {}", self.step)));
        }
        if (self.max - self.min) / self.step >= MAX_GRID_POINTS as f64 {
            return Err(Error::Config("grid has too many points".into()));
        }
        Ok(())
    }

    /// Number of points `min + k step <= max` (with a small tolerance for rounding).
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("grid must be min:step:max, got `{s}`")));
        }
        let num = |t: &str| parse_f64(t, "grid");
        GridSpec::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

fn parse_f64(t: &str, key: &str) -> Result<f64> {
    t.trim().parse::<f64>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}` as a number", t.trim())))
}

fn parse_list(v: &str, key: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(|t| parse_f64(t, key)).collect()
}

fn parse_usize(v: &str, key: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{}` as an integer", v.trim())))
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dp2: Vec<f64>,
    pub lz: Vec<f64>,
    pub grid: GridSpec,
    pub convention: CenteringConvention,
    pub spec: QuadratureSpec,
    pub pupil: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub chunk_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dp2: vec![0.0, 0.75, 0.95],
            lz: vec![0.0, 1.0, 2.0],
            grid: GridSpec { min: 0.05, step: 0.05, max: 3.0 },
            convention: CenteringConvention::IntensityCentroid,
            spec: QuadratureSpec::default(),
            pupil: None,
            output: None,
            format: OutputFormat::Csv,
            chunk_size: DEFAULT_CHUNK,
        }
    }
}

impl SweepConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Keys: `dp2`, `lz` (comma lists), `grid` (`min:step:max`),
    /// `l_min`, `l_max`, `step`, `convention`, `format`, `out`, `pupil`,
    /// `chunk_size`, `radial_nodes`, `angular_nodes`, `tolerance`, `refinement_cap`.
    /// Call [`SweepConfig::validate`] afterwards.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dp2" => self.dp2 = parse_list(value, key)?,
            "lz" => self.lz = parse_list(value, key)?,
            "grid" => self.grid = value.parse()?,
            "l_min" => self.grid.min = parse_f64(value, key)?,
            "l_max" => self.grid.max = parse_f64(value, key)?,
            "step" => self.grid.step = parse_f64(value, key)?,
            "convention" => {
                self.convention = value.parse().map_err(|_| Error::Config(format!("unknown convention `{value}`")))?
            }
            "format" => self.format = value.parse()?,
            "out" | "output" => self.output = Some(PathBuf::from(value)),
            "pupil" => self.pupil = Some(PathBuf::from(value)),
            "chunk_size" => self.chunk_size = parse_usize(value, key)?,
            "radial_nodes" => self.spec.radial_nodes = parse_usize(value, key)?,
            "angular_nodes" => self.spec.angular_nodes = parse_usize(value, key)?,
            "tolerance" => self.spec.tolerance = parse_f64(value, key)?,
            "refinement_cap" => self.spec.refinement_cap = parse_usize(value, key)? as u32,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.spec.validate()?;
        if self.dp2.is_empty() || self.lz.is_empty() {
            return Err(Error::Config("dp2 and lz lists must be non-empty".into()));
        }
        if let Some(bad) = self.dp2.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::Config(format!("dp2 values must lie in [0, 1), got {bad}")));
        }
        if let Some(bad) = self.lz.iter().find(|z| !z.is_finite()) {
            return Err(Error::Config(format!("lz values must be finite, got {bad}")));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be positive".into()));
        }
        let n = self.grid.len();
        let total = (self.dp2.len() as u128) * (self.lz.len() as u128) * (n as u128) * (n as u128);
        if total > MAX_GRID_POINTS as u128 {
            return Err(Error::Config(format!("sweep has {total} points, limit is {MAX_GRID_POINTS}")));
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        let n = self.grid.len();
        self.dp2.len() * self.lz.len() * n * n
    }

    /// `(dp2, l)` of record `index`, with `l_x` varying fastest and each axis
    /// visited in ascending order.
    pub fn point(&self, index: usize) -> (f64, SeparationVector) {
        let n = self.grid.len();
        let mut dp2 = self.dp2.clone();
        dp2.sort_by(f64::total_cmp);
        let mut lz = self.lz.clone();
        lz.sort_by(f64::total_cmp);
        let ix = index % n;
        let iy = (index / n) % n;
        let iz = (index / (n * n)) % lz.len();
        let id = index / (n * n * lz.len());
        (dp2[id], SeparationVector::new(self.grid.value(ix), self.grid.value(iy), lz[iz]))
    }

    pub fn evaluator(&self) -> Result<QfiEvaluator> {
        let pupil = match &self.pupil {
            Some(path) => PupilModel::load(path)?,
            None => PupilModel::CircularClear,
        };
        QfiEvaluator::new(pupil, self.spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub dp2: f64,
    pub l: SeparationVector,
    pub delta: f64,
    pub phi: f64,
    /// `xx, xy, xz, yy, yz, zz`.
    pub h: [f64; 6],
    pub qcrb: [f64; 3],
    pub status: RecordStatus,
}

/// One grid point. A singular information matrix becomes a status, not an error.
pub fn run_point(
    evaluator: &QfiEvaluator,
    l: &SeparationVector,
    dp2: f64,
    convention: CenteringConvention,
) -> Result<SweepRecord> {
    l.validate()?;
    let brightness = BrightnessSplit::from_dp2(dp2)?;
    let closed = evaluator.closed(l, &brightness, convention)?;
    let (qcrb, status) = match qcrb_from_qfi(&closed.qfi) {
        Ok(q) if closed.small_separation_limit => (q.to_array(), RecordStatus::SmallSeparationLimit),
        Ok(q) => (q.to_array(), RecordStatus::Ok),
        Err(Error::SingularInformation { .. }) => ([f64::NAN; 3], RecordStatus::Singular),
        Err(e) => return Err(e),
    };
    Ok(SweepRecord {
        dp2,
        l: *l,
        delta: closed.delta,
        phi: closed.phi,
        h: closed.qfi.upper_entries(),
        qcrb,
        status,
    })
}

/// Twelve significant digits, lowercase exponent; `None` for non-finite values.
pub fn format_number(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.11e}"))
}

impl SweepRecord {
    fn numbers(&self) -> [f64; 15] {
        let [xx, xy, xz, yy, yz, zz] = self.h;
        let [qx, qy, qz] = self.qcrb;
        [self.dp2, self.l.x, self.l.y, self.l.z, self.delta, self.phi, xx, xy, xz, yy, yz, zz, qx, qy, qz]
    }

    pub fn to_csv_line(&self) -> String {
        let mut fields: Vec<String> =
            self.numbers().iter().map(|x| format_number(*x).unwrap_or_else(|| "nan".into())).collect();
        fields.push(self.status.as_str().into());
        fields.join(",")
    }

    pub fn to_json_line(&self) -> String {
        let keys = CSV_HEADER.split(',');
        let mut out = String::from("{");
        for (k, x) in keys.zip(self.numbers()) {
            let value = format_number(x).unwrap_or_else(|| "null".into());
            out.push_str(&format!("\"{k}\":{value},"));
        }
        out.push_str(&format!("\"status\":\"{}\"}}", self.status));
        out
    }

    pub fn to_line(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv_line(),
            OutputFormat::JsonLines => self.to_json_line(),
        }
    }
}

/// Records in sweep order, evaluated in parallel one chunk at a time.
pub struct SweepStream<'a> {
    config: &'a SweepConfig,
    evaluator: QfiEvaluator,
    next: usize,
    buffer: std::vec::IntoIter<Result<SweepRecord>>,
}

impl<'a> SweepStream<'a> {
    pub fn starting_at(config: &'a SweepConfig, start: usize) -> Result<Self> {
        config.validate()?;
        let evaluator = config.evaluator()?;
        Ok(Self { config, evaluator, next: start, buffer: Vec::new().into_iter() })
    }

    fn fill(&mut self) {
        let end = (self.next + self.config.chunk_size).min(self.config.record_count());
        let (config, evaluator) = (self.config, &self.evaluator);
        let chunk: Vec<Result<SweepRecord>> = (self.next..end)
            .into_par_iter()
            .map(|i| {
                let (dp2, l) = config.point(i);
                run_point(evaluator, &l, dp2, config.convention)
            })
            .collect();
        self.next = end;
        self.buffer = chunk.into_iter();
    }
}

impl Iterator for SweepStream<'_> {
    type Item = Result<SweepRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(r) = self.buffer.next() {
            return Some(r);
        }
        if self.next >= self.config.record_count() {
            return None;
        }
        self.fill();
        self.buffer.next()
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepStream<'_>> {
    SweepStream::starting_at(config, 0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    /// Records already present in the file when resuming.
    pub resumed_from: usize,
    pub ok: usize,
    pub singular: usize,
    pub small_separation: usize,
}

/// Writes the sweep to `path`, flushing after every chunk. With `resume`, the
/// complete records already in the file are kept and the sweep continues after
/// them; a trailing partial line is discarded.
pub fn write_sweep(config: &SweepConfig, path: &Path, resume: bool) -> Result<SweepSummary> {
    config.validate()?;
    let start = if resume && path.exists() { prepare_resume(config, path)? } else { 0 };
    let file = if start == 0 {
        let mut f = File::create(path)?;
        if config.format == OutputFormat::Csv {
            writeln!(f, "{CSV_HEADER}")?;
        }
        f
    } else {
        OpenOptions::new().append(true).open(path)?
    };
    let mut out = BufWriter::new(file);
    let mut summary = SweepSummary { total: config.record_count(), resumed_from: start, ..Default::default() };
    for (k, record) in SweepStream::starting_at(config, start)?.enumerate() {
        let record = record?;
        match record.status {
            RecordStatus::Ok => summary.ok += 1,
            RecordStatus::Singular => summary.singular += 1,
            RecordStatus::SmallSeparationLimit => summary.small_separation += 1,
        }
        writeln!(out, "{}", record.to_line(config.format))?;
        if (k + 1) % config.chunk_size == 0 {
            out.flush()?;
        }
    }
    out.flush()?;
    Ok(summary)
}

fn line_prefix(config: &SweepConfig, index: usize) -> String {
    let (dp2, l) = config.point(index);
    let f = |x: f64| format_number(x).unwrap_or_default();
    match config.format {
        OutputFormat::Csv => format!("{},{},{},{},", f(dp2), f(l.x), f(l.y), f(l.z)),
        OutputFormat::JsonLines => {
            format!("{{\"dp2\":{},\"lx\":{},\"ly\":{},\"lz\":{},", f(dp2), f(l.x), f(l.y), f(l.z))
        }
    }
}

/// Counts complete records in an existing output file, checks that they belong
/// to this sweep and truncates any partial last line. Returns the record count.
fn prepare_resume(config: &SweepConfig, path: &Path) -> Result<usize> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut complete_bytes = 0u64;
    let mut records = 0usize;
    let mut last = None;
    let mut first = true;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        let content = line.trim_end_matches('\n');
        if first && config.format == OutputFormat::Csv {
            if content != CSV_HEADER {
                return Err(Error::Config(format!("cannot resume {}: header mismatch", path.display())));
            }
        } else {
            records += 1;
            last = Some(content.to_string());
        }
        first = false;
        complete_bytes += n as u64;
    }
    if records > config.record_count() {
        return Err(Error::Config(format!("cannot resume {}: more records than the sweep", path.display())));
    }
    if let Some(last) = last {
        if !last.starts_with(&line_prefix(config, records - 1)) {
            return Err(Error::Config(format!("cannot resume {}: records do not match this sweep", path.display())));
        }
    }
    let mut file = OpenOptions::new().write(true).open(path)?;
    file.set_len(complete_bytes)?;
    file.seek(SeekFrom::End(0))?;
    if first {
        // empty or header-less partial file: start over
        return Ok(0);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_config() -> SweepConfig {
        SweepConfig {
            dp2: vec![0.75, 0.0],
            lz: vec![1.0, 0.0],
            grid: GridSpec::new(0.5, 0.5, 1.5).unwrap(),
            chunk_size: 5,
            ..Default::default()
        }
    }

    #[test]
    fn default_grid_size() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.grid.len(), 60);
        assert_eq!(cfg.record_count(), 32_400);
    }

    #[test]
    fn ordering_is_lexicographic_and_ascending() {
        let cfg = small_config();
        let points: Vec<_> = (0..cfg.record_count()).map(|i| cfg.point(i)).collect();
        assert_eq!(points.len(), 36);
        assert_eq!(points[0].0, 0.0);
        assert_eq!(points[0].1.to_array(), [0.5, 0.5, 0.0]);
        assert_eq!(points[1].1.to_array(), [1.0, 0.5, 0.0]);
        assert_eq!(points[3].1.to_array(), [0.5, 1.0, 0.0]);
        assert_eq!(points[9].1.to_array(), [0.5, 0.5, 1.0]);
        assert_eq!(points[18].0, 0.75);
    }

    #[test]
    fn single_cell_grid() {
        let cfg = SweepConfig {
            dp2: vec![0.0],
            lz: vec![0.5],
            grid: GridSpec::new(1.0, 5.0, 2.0).unwrap(),
            ..Default::default()
        };
        assert_eq!(cfg.record_count(), 1);
        assert_eq!(run_sweep(&cfg).unwrap().count(), 1);
    }

    #[test]
    fn config_parsing() {
        let cfg = SweepConfig::parse(
            "# comment\ndp2 = 0, 0.45, 0.95\nlz = 0,1\ngrid = 0.1:0.1:1\nconvention = geometric\nformat = jsonl\nradial_nodes = 24\n",
        )
        .unwrap();
        assert_eq!(cfg.dp2, vec![0.0, 0.45, 0.95]);
        assert_eq!(cfg.grid.len(), 10);
        assert_eq!(cfg.convention, CenteringConvention::GeometricCenter);
        assert_eq!(cfg.format, OutputFormat::JsonLines);
        assert_eq!(cfg.spec.radial_nodes, 24);
        let split = SweepConfig::parse("l_min = 0\nl_max = 2\nstep = 0.5").unwrap();
        assert_eq!(split.grid.len(), 5);
        for bad in ["grid = 1:0.1:0.5", "grid = 0:-1:1", "dp2 = 1.0", "colour = red", "dp2", "grid = 0:1e-9:100"] {
            assert!(SweepConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn equal_brightness_point() {
        let ev = QfiEvaluator::circular(QuadratureSpec::default()).unwrap();
        let r = run_point(&ev, &SeparationVector::new(1.0, 1.0, 0.0), 0.0, CenteringConvention::IntensityCentroid)
            .unwrap();
        assert_eq!(r.status, RecordStatus::Ok);
        assert!((r.qcrb[0] - 1.0 / (PI * PI)).abs() < 1e-8);
        assert!((r.qcrb[2] - 12.0 / (PI * PI)).abs() < 1e-8);
    }

    #[test]
    fn near_single_source_is_singular() {
        let ev = QfiEvaluator::circular(QuadratureSpec::default()).unwrap();
        let r = run_point(&ev, &SeparationVector::new(1.0, 1.0, 0.0), 0.9999, CenteringConvention::IntensityCentroid)
            .unwrap();
        assert_eq!(r.status, RecordStatus::Singular);
        assert!(r.to_csv_line().ends_with("nan,nan,nan,singular"));
        assert!(r.to_json_line().contains("\"qcrb_x\":null"));
    }

    #[test]
    fn origin_is_flagged() {
        let ev = QfiEvaluator::circular(QuadratureSpec::default()).unwrap();
        let r = run_point(&ev, &SeparationVector::new(0.0, 0.0, 0.0), 0.5, CenteringConvention::IntensityCentroid)
            .unwrap();
        assert_eq!(r.status, RecordStatus::SmallSeparationLimit);
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.1).unwrap(), "1.00000000000e-1");
        assert_eq!(format_number(-1234.5).unwrap(), "-1.23450000000e3");
        assert_eq!(format_number(f64::NAN), None);
    }

    #[test]
    fn csv_line_has_header_arity() {
        let ev = QfiEvaluator::circular(QuadratureSpec::default()).unwrap();
        let r = run_point(&ev, &SeparationVector::new(0.3, 0.2, 1.0), 0.75, CenteringConvention::IntensityCentroid)
            .unwrap();
        assert_eq!(r.to_csv_line().split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn equal_brightness_slice_is_flat() {
        let cfg = SweepConfig { dp2: vec![0.0], ..small_config() };
        let records: Vec<_> = run_sweep(&cfg).unwrap().map(|r| r.unwrap()).collect();
        for r in &records {
            for (a, b) in r.qcrb.iter().zip(records[0].qcrb) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
