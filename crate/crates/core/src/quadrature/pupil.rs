use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Pupil weight `|P(u)|^2` over the normalized pupil plane.
///
/// Only the modulus squared of the pupil function enters any quantity computed
/// here, so a pupil is fully described by a non-negative weight of unit integral.
#[derive(Debug, Clone, PartialEq)]
pub enum PupilModel {
    /// Clear unit-radius circular aperture: weight `1/pi` on the unit disk.
    CircularClear,
    /// Weight sampled at the centers of a uniform grid of square cells.
    SampledGrid(SampledPupil),
}

impl PupilModel {
    pub fn is_circular(&self) -> bool {
        matches!(self, PupilModel::CircularClear)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(PupilModel::SampledGrid(SampledPupil::load(path)?))
    }
}

/// `pupil-grid v1` sampled pupil. Cell `(i, j)` sits at
/// `u = (-1 + (i + 0.5) h, -1 + (j + 0.5) h)` and is stored at row-major index `i * n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPupil {
    n: usize,
    spacing: f64,
    weights: Vec<f64>,
    normalization_factor: f64,
}

impl SampledPupil {
    /// Builds a sampled pupil from raw cell weights, rescaling them to unit integral.
    pub fn new(n: usize, spacing: f64, mut weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::PupilFormat("grid size must be positive".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::PupilFormat(format!("cell spacing must be positive, got {spacing}")));
        }
        if weights.len() != n * n {
            return Err(Error::PupilFormat(format!(
                "expected {} weights, found {}",
                n * n,
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::PupilFormat(format!("weights must be finite and non-negative, found {w}")));
        }
        let total: f64 = weights.iter().sum::<f64>() * spacing * spacing;
        if total <= 0.0 {
            return Err(Error::PupilFormat("pupil weight integrates to zero".into()));
        }
        let factor = 1.0 / total;
        for w in &mut weights {
            *w *= factor;
        }
        Ok(Self { n, spacing, weights, normalization_factor: factor })
    }

    /// Samples a weight function at the cell centers of an `n x n` grid over `[-1, 1]^2`.
    pub fn from_fn(n: usize, weight: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let h = 2.0 / n as f64;
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                weights.push(weight(cell_center(i, j, h)));
            }
        }
        Self::new(n, h, weights)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens.next().ok_or_else(|| Error::PupilFormat(format!("missing {what}")))
        };
        let magic = next("header")?;
        let version = next("version")?;
        if magic != "pupil-grid" || version != "v1" {
            return Err(Error::PupilFormat(format!("bad header `{magic} {version}`")));
        }
        let n: usize = next("grid size")?
            .parse()
            .map_err(|e| Error::PupilFormat(format!("grid size: {e}")))?;
        let h: f64 = next("cell spacing")?
            .parse()
            .map_err(|e| Error::PupilFormat(format!("cell spacing: {e}")))?;
        let weights = tokens
            .map(|t| t.parse::<f64>().map_err(|e| Error::PupilFormat(format!("weight `{t}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, h, weights)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Serializes the normalized weights in `pupil-grid v1` form, one grid row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("pupil-grid v1 {} {:e}\n", self.n, self.spacing);
        for row in self.weights.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Factor the loader multiplied the raw weights by to reach unit integral.
    pub fn normalization_factor(&self) -> f64 {
        self.normalization_factor
    }

    /// Cell centers with their quadrature weights `|P|^2 h^2`, skipping empty cells.
    pub fn nodes(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        let h = self.spacing;
        let area = h * h;
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(move |(k, w)| {
            let (i, j) = (k / self.n, k % self.n);
            (cell_center(i, j, h), w * area)
        })
    }
}

fn cell_center(i: usize, j: usize, h: f64) -> [f64; 2] {
    [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h]
}
