//! The separable benchmark `f(u) = sum_i 5 u_i^2 + cos(50 u_i)` on `[-1, 1]^d`.

use std::sync::OnceLock;

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::objective::Objective;

/// Grid step used to bracket critical points of the per-dimension term.
pub const CRITICAL_GRID_STEP: f64 = 1e-3;

/// `g'` has no roots outside this range: `|10x| > 50 >= |50 sin 50x|`.
const CRITICAL_RANGE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticObjective {
    dim: usize,
}

pub fn build_synthetic(dim: usize) -> Result<SyntheticObjective> {
    if dim == 0 {
        return Err(Error::InvalidConfig("synthetic dimension must be >= 1".into()));
    }
    Ok(SyntheticObjective { dim })
}

impl SyntheticObjective {
    pub fn domain(&self) -> BoxDomain {
        BoxDomain::cube(self.dim, -1.0, 1.0).expect("valid cube")
    }

    #[inline]
    pub fn term(x: f64) -> f64 {
        5.0 * x * x + (50.0 * x).cos()
    }

    #[inline]
    pub fn term_derivative(x: f64) -> f64 {
        10.0 * x - 50.0 * (50.0 * x).sin()
    }

    /// Exact minimum of [`Self::term`] over `[a, b]`: the smaller of the
    /// endpoint values and the values at interior critical points.
    pub fn term_min(a: f64, b: f64) -> f64 {
        let mut best = Self::term(a).min(Self::term(b));
        let roots = critical_points();
        let start = roots.partition_point(|&c| c <= a);
        for &c in roots[start..].iter().take_while(|&&c| c < b) {
            best = best.min(Self::term(c));
        }
        best
    }

    /// Global minimum of the per-dimension term over `[-1, 1]`.
    pub fn term_global_min() -> f64 {
        Self::term_min(-1.0, 1.0)
    }
}

/// Roots of `g'` on `[-5, 5]`: sign changes on a fixed grid, refined by bisection.
pub fn critical_points() -> &'static [f64] {
    static ROOTS: OnceLock<Vec<f64>> = OnceLock::new();
    ROOTS.get_or_init(|| {
        let h = SyntheticObjective::term_derivative;
        let cells = (2.0 * CRITICAL_RANGE / CRITICAL_GRID_STEP).round() as i64;
        let at = |i: i64| -CRITICAL_RANGE + i as f64 * CRITICAL_GRID_STEP;
        let mut roots = Vec::new();
        let mut prev = h(at(0));
        for i in 1..=cells {
            let cur = h(at(i));
            if prev == 0.0 {
                roots.push(at(i - 1));
            } else if prev.signum() != cur.signum() && cur != 0.0 {
                let (mut lo, mut hi) = (at(i - 1), at(i));
                let lo_sign = prev.signum();
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if h(mid).signum() == lo_sign {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev = cur;
        }
        roots
    })
}

impl Objective for SyntheticObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate_batch(&self, batch: &[f64]) -> Result<Vec<f64>> {
        if !batch.len().is_multiple_of(self.dim) {
            return Err(Error::ShapeMismatch(format!(
                "batch of {} values is not a multiple of dim {}",
                batch.len(),
                self.dim
            )));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input batch".into()));
        }
        Ok(batch.chunks_exact(self.dim).map(|u| u.iter().map(|&x| Self::term(x)).sum()).collect())
    }

    fn gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let value = self.evaluate_batch(u)?[0];
        Ok((value, u.iter().map(|&x| Self::term_derivative(x)).collect()))
    }
}
