//! Axis-aligned boxes over the flattened action sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidBox(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidBox(format!("non-finite bound at {j}")));
            }
            if l > u {
                return Err(Error::InvalidBox(format!("lower {l} > upper {u} at {j}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// Per-step bounds repeated over a horizon: `d = k * horizon`.
    pub fn repeat(step_lower: &[f64], step_upper: &[f64], horizon: usize) -> Result<Self> {
        Self::new(step_lower.repeat(horizon), step_upper.repeat(horizon))
    }

    pub fn point(x: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), x.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    #[inline]
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    #[inline]
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    #[inline]
    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    #[inline]
    pub fn mid(&self, j: usize) -> f64 {
        0.5 * (self.lower[j] + self.upper[j])
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.mid(j)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| 0.5 * self.width(j)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Splits evenly along `j`; both halves share the midpoint face.
    pub fn bisect(&self, j: usize) -> (BoxDomain, BoxDomain) {
        let mid = self.mid(j);
        let mut lo = self.clone();
        let mut up = self.clone();
        lo.upper[j] = mid;
        up.lower[j] = mid;
        (lo, up)
    }

    /// `ln(vol(self) / vol(root))`, skipping coordinates where the root is flat.
    pub fn log_volume_ratio(&self, root: &BoxDomain) -> f64 {
        (0..self.dim())
            .filter(|&j| root.width(j) > 0.0)
            .map(|j| (self.width(j) / root.width(j)).ln())
            .sum()
    }

    pub fn volume_ratio(&self, root: &BoxDomain) -> f64 {
        self.log_volume_ratio(root).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_bounds() {
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxDomain::point(&[0.3, 0.3]).is_ok());
    }

    #[test]
    fn repeat_gives_k_times_horizon() {
        let b = BoxDomain::repeat(&[-0.1, -0.2], &[0.1, 0.2], 3).unwrap();
        assert_eq!(b.dim(), 6);
        assert_eq!(b.upper()[3], 0.2);
    }

    #[test]
    fn bisection_halves_volume() {
        let root = BoxDomain::cube(3, -1.0, 1.0).unwrap();
        let (lo, up) = root.bisect(1);
        assert_eq!(lo.upper()[1], 0.0);
        assert_eq!(up.lower()[1], 0.0);
        assert!((lo.volume_ratio(&root) - 0.5).abs() < 1e-15);
        assert!((up.volume_ratio(&root) - 0.5).abs() < 1e-15);
        assert!(lo.contains(&[0.0, 0.0, 0.0]) && up.contains(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn clamp_projects_into_box() {
        let b = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let mut x = [2.0, -3.0];
        b.clamp(&mut x);
        assert_eq!(x, [1.0, -1.0]);
    }
}
