//! Multi-coil Cartesian acquisition model `y_i = M F S_i x`, its adjoint,
//! and root-sum-of-squares coil combination.

mod fft;
mod operator;

pub use fft::{dft2_centered, idft2_centered};
pub use operator::{adjoint_operator, forward_operator, rss_combine, zero_filled_recon, MriOperator};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MriError {
    #[error("extent mismatch: {0}")]
    Extent(String),
    #[error("coil count mismatch: expected {expected}, got {got}")]
    CoilCount { expected: usize, got: usize },
    #[error("empty coil list")]
    NoCoils,
    #[error("mask is not column-structured: column {0} is partially sampled")]
    NotColumnStructured(usize),
}

/// Complex image stored as separate real and imaginary planes, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, re: vec![0.0; height * width], im: vec![0.0; height * width] }
    }

    pub fn from_parts(height: usize, width: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self, MriError> {
        if re.len() != height * width || im.len() != height * width {
            return Err(MriError::Extent(format!(
                "planes of length {}/{} do not fit {height}x{width}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self { height, width, re, im })
    }

    /// Real image with zero imaginary part.
    pub fn from_real(height: usize, width: usize, re: Vec<f64>) -> Result<Self, MriError> {
        let n = re.len();
        Self::from_parts(height, width, re, vec![0.0; n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).collect()
    }

    /// Σ |z|²
    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum()
    }

    pub fn same_extent(&self, other: &ComplexImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Real inner product `Re⟨self, other⟩ = Σ re·re' + im·im'`.
    pub fn dot_real(&self, other: &ComplexImage) -> f64 {
        self.re.iter().zip(&other.re).map(|(a, b)| a * b).sum::<f64>()
            + self.im.iter().zip(&other.im).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
        }
    }
}

/// Per-coil complex sensitivity profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    coils: Vec<ComplexImage>,
}

impl CoilSensitivities {
    pub fn new(coils: Vec<ComplexImage>) -> Result<Self, MriError> {
        let first = coils.first().ok_or(MriError::NoCoils)?;
        if let Some(bad) = coils.iter().position(|c| !c.same_extent(first)) {
            return Err(MriError::Extent(format!("coil {bad} differs in extent from coil 0")));
        }
        Ok(Self { coils })
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn count(&self) -> usize {
        self.coils.len()
    }

    pub fn height(&self) -> usize {
        self.coils[0].height()
    }

    pub fn width(&self) -> usize {
        self.coils[0].width()
    }

    /// Σ_i |S_i(p)|² per pixel.
    pub fn sum_of_squares(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.coils[0].len()];
        for c in &self.coils {
            for (a, (r, i)) in acc.iter_mut().zip(c.re().iter().zip(c.im())) {
                *a += r * r + i * i;
            }
        }
        acc
    }
}

/// Binary Cartesian sampling pattern: whole k-space columns are acquired or not.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    columns: Vec<bool>,
}

impl SamplingMask {
    pub fn from_columns(height: usize, columns: Vec<bool>) -> Self {
        Self { height, width: columns.len(), columns }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::from_columns(height, vec![true; width])
    }

    /// Builds a mask from a 0/1 plane, rejecting partially sampled columns.
    pub fn from_plane(height: usize, width: usize, plane: &[u8]) -> Result<Self, MriError> {
        if plane.len() != height * width {
            return Err(MriError::Extent(format!("plane of {} values for {height}x{width}", plane.len())));
        }
        let mut columns = vec![false; width];
        for (j, col) in columns.iter_mut().enumerate() {
            let on = plane[j] != 0;
            if (0..height).any(|i| (plane[i * width + j] != 0) != on) {
                return Err(MriError::NotColumnStructured(j));
            }
            *col = on;
        }
        Ok(Self { height, width, columns })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn columns(&self) -> &[bool] {
        &self.columns
    }

    pub fn sampled_columns(&self) -> usize {
        self.columns.iter().filter(|&&c| c).count()
    }

    /// Number of acquired k-space samples (ones in the plane).
    pub fn acquired(&self) -> usize {
        self.sampled_columns() * self.height
    }

    pub fn is_sampled(&self, _row: usize, col: usize) -> bool {
        self.columns[col]
    }

    /// 0/1 plane, row-major.
    pub fn plane(&self) -> Vec<u8> {
        (0..self.height * self.width).map(|k| self.columns[k % self.width] as u8).collect()
    }

    pub fn is_full(&self) -> bool {
        self.columns.iter().all(|&c| c)
    }

    /// Columns sampled in `self` but not in `other`.
    pub fn minus(&self, other: &SamplingMask) -> SamplingMask {
        let cols = self.columns.iter().zip(&other.columns).map(|(&a, &b)| a && !b).collect();
        Self::from_columns(self.height, cols)
    }

    pub fn complement(&self) -> SamplingMask {
        Self::from_columns(self.height, self.columns.iter().map(|c| !c).collect())
    }
}

/// Per-coil k-space data.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpace {
    coils: Vec<ComplexImage>,
}

impl KSpace {
    pub fn new(coils: Vec<ComplexImage>) -> Result<Self, MriError> {
        let first = coils.first().ok_or(MriError::NoCoils)?;
        if let Some(bad) = coils.iter().position(|c| !c.same_extent(first)) {
            return Err(MriError::Extent(format!("coil {bad} differs in extent from coil 0")));
        }
        Ok(Self { coils })
    }

    pub fn zeros(coils: usize, height: usize, width: usize) -> Self {
        Self { coils: vec![ComplexImage::zeros(height, width); coils] }
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn coils_mut(&mut self) -> &mut [ComplexImage] {
        &mut self.coils
    }

    pub fn count(&self) -> usize {
        self.coils.len()
    }

    pub fn height(&self) -> usize {
        self.coils[0].height()
    }

    pub fn width(&self) -> usize {
        self.coils[0].width()
    }

    pub fn dot_real(&self, other: &KSpace) -> f64 {
        self.coils.iter().zip(&other.coils).map(|(a, b)| a.dot_real(b)).sum()
    }

    pub fn energy(&self) -> f64 {
        self.coils.iter().map(|c| c.energy()).sum()
    }

    /// Interleaved `[coil][re|im][row][col]` layout used by the loss.
    pub fn to_planes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.coils.len() * self.coils[0].len());
        for c in &self.coils {
            out.extend_from_slice(c.re());
            out.extend_from_slice(c.im());
        }
        out
    }
}
