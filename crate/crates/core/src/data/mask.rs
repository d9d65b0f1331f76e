use serde::{Deserialize, Serialize};

use super::DataError;
use crate::mri::SamplingMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub height: usize,
    pub width: usize,
    /// Acceleration `R ≥ 1`; `round(width / R)` columns are acquired.
    pub accel: f64,
    pub center_lines: usize,
    pub seed: u64,
}

impl MaskSpec {
    pub fn total_lines(&self) -> usize {
        (self.width as f64 / self.accel).round() as usize
    }
}

/// First column of the contiguous center block of `count` columns around DC.
pub(crate) fn center_block_start(width: usize, count: usize) -> usize {
    (width / 2).saturating_sub(count / 2)
}

/// Contiguous center block around the DC column plus uniformly spaced outer
/// lines. Outer line `k` of `r` is the outer column at position
/// `floor((k + 1/2) · n_outer / r)`, so the placement has no random component.
pub fn generate_cartesian_mask(spec: &MaskSpec) -> Result<SamplingMask, DataError> {
    let w = spec.width;
    if w == 0 || spec.height == 0 {
        return Err(DataError::Invalid("mask extents must be positive".into()));
    }
    if !(spec.accel >= 1.0) {
        return Err(DataError::Invalid(format!("acceleration must be >= 1, got {}", spec.accel)));
    }
    let total = spec.total_lines();
    let budget = (w as f64 / spec.accel).floor() as usize;
    if spec.center_lines > budget || spec.center_lines > total {
        return Err(DataError::Invalid(format!(
            "{} center lines exceed the budget of {} lines for width {w} at R={}",
            spec.center_lines, budget, spec.accel
        )));
    }
    let mut cols = vec![false; w];
    let start = center_block_start(w, spec.center_lines);
    cols[start..start + spec.center_lines].iter_mut().for_each(|c| *c = true);
    let outer: Vec<usize> = (0..w).filter(|&j| !cols[j]).collect();
    let r = total - spec.center_lines;
    for k in 0..r {
        let pos = ((2 * k + 1) * outer.len()) / (2 * r);
        cols[outer[pos]] = true;
    }
    Ok(SamplingMask::from_columns(spec.height, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(width: usize, accel: f64, center_lines: usize) -> MaskSpec {
        MaskSpec { height: width, width, accel, center_lines, seed: 0 }
    }

    fn center_run(cols: &[bool]) -> (usize, usize) {
        let c = cols.len() / 2;
        let mut lo = c;
        while lo > 0 && cols[lo - 1] {
            lo -= 1;
        }
        let mut hi = c;
        while hi + 1 < cols.len() && cols[hi + 1] {
            hi += 1;
        }
        (lo, hi)
    }

    #[test]
    fn knee_protocol_line_counts() {
        let m = generate_cartesian_mask(&spec(320, 4.0, 25)).unwrap();
        assert_eq!(m.sampled_columns(), 80);
        let cols = m.columns();
        assert!(cols[148..173].iter().all(|&c| c));
        assert_eq!(center_block_start(320, 25), 148);
        let (lo, hi) = center_run(cols);
        assert!(lo <= 148 && hi >= 172);
    }

    #[test]
    fn desk_protocol_line_counts() {
        let m = generate_cartesian_mask(&spec(64, 4.0, 5)).unwrap();
        assert_eq!(m.sampled_columns(), 16);
        assert!(m.columns()[30..35].iter().all(|&c| c));
        let outer: Vec<usize> = (0..64).filter(|&j| m.columns()[j] && !(30..35).contains(&j)).collect();
        assert_eq!(outer.len(), 11);
        // equal spacing up to one column of rounding in the outer index space
        let gaps: Vec<usize> = outer.windows(2).map(|p| p[1] - p[0]).collect();
        let (lo, hi) = (gaps.iter().min().unwrap(), gaps.iter().max().unwrap());
        assert!(hi - lo <= 6, "{gaps:?}");
    }

    #[test]
    fn unit_acceleration_samples_everything() {
        assert!(generate_cartesian_mask(&spec(40, 1.0, 8)).unwrap().is_full());
    }

    #[test]
    fn infeasible_center_rejected() {
        assert!(generate_cartesian_mask(&spec(64, 4.0, 17)).is_err());
        assert!(generate_cartesian_mask(&spec(64, 0.5, 4)).is_err());
    }

    #[test]
    fn center_block_symmetric_about_dc() {
        for w in [32usize, 33, 64, 65] {
            for c in 1..8 {
                let m = generate_cartesian_mask(&MaskSpec { height: 4, width: w, accel: 2.0, center_lines: c, seed: 0 }).unwrap();
                let start = center_block_start(w, c);
                let left = (w / 2) - start;
                let right = start + c - 1 - (w / 2);
                assert!(left.abs_diff(right) <= 1, "w={w} c={c}");
                assert!(m.columns()[start..start + c].iter().all(|&x| x));
            }
        }
    }
}
