use super::{CompGraph, NodeKind};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};

/// Elementwise enclosure `[lower, upper]` of a node output.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Interval {
    pub fn point(v: &[f64]) -> Self {
        Self { lower: v.to_vec(), upper: v.to_vec() }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.lower).zip(&self.upper).all(|((x, l), u)| l <= x && x <= u)
    }
}

/// Range of `sum_j w_j (x_j - t_j)^2` for `x` in the box `[lower, upper]`.
pub fn squared_distance_interval(
    lower: &[f64],
    upper: &[f64],
    target: &[f64],
    weights: &[f64],
) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for j in 0..target.len() {
        let a = (lower[j] - target[j]).powi(2);
        let b = (upper[j] - target[j]).powi(2);
        let near = if lower[j] <= target[j] && target[j] <= upper[j] { 0.0 } else { a.min(b) };
        lo += weights[j] * near;
        hi += weights[j] * a.max(b);
    }
    (lo, hi)
}

/// Per-point range of `scale * relu(size - |x_k - center|)` over a box of
/// stacked points.
pub fn hinge_interval(
    lower: &[f64],
    upper: &[f64],
    center: &[f64],
    size: f64,
    scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = center.len();
    let points = lower.len() / k;
    let mut lo = Vec::with_capacity(points);
    let mut hi = Vec::with_capacity(points);
    for p in 0..points {
        let mut dmin = 0.0;
        let mut dmax = 0.0;
        for j in 0..k {
            let (l, u, c) = (lower[p * k + j], upper[p * k + j], center[j]);
            let near = c.clamp(l, u) - c;
            let far = (l - c).abs().max((u - c).abs());
            dmin += near * near;
            dmax += far * far;
        }
        lo.push(scale * (size - dmax.sqrt()).max(0.0));
        hi.push(scale * (size - dmin.sqrt()).max(0.0));
    }
    (lo, hi)
}

impl CompGraph {
    /// Interval enclosure of every node's output over `domain`.
    pub fn interval_forward(&self, domain: &BoxDomain) -> Result<Vec<Interval>> {
        if domain.dim() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "box of dim {} for graph input dim {}",
                domain.dim(),
                self.input_dim()
            )));
        }
        let mut out: Vec<Interval> = Vec::with_capacity(self.len());
        for node in self.nodes() {
            let iv = match &node.kind {
                NodeKind::Input => Interval {
                    lower: domain.lower().to_vec(),
                    upper: domain.upper().to_vec(),
                },
                NodeKind::Constant { value } => Interval::point(value),
                NodeKind::Linear { weight, bias } => {
                    let x = &out[node.inputs[0]];
                    let mut lower = Vec::with_capacity(node.dim);
                    let mut upper = Vec::with_capacity(node.dim);
                    for (r, b) in bias.iter().enumerate() {
                        let (mut lo, mut hi) = (*b, *b);
                        for ((w, l), u) in weight.row(r).iter().zip(&x.lower).zip(&x.upper) {
                            if *w >= 0.0 {
                                lo += w * l;
                                hi += w * u;
                            } else {
                                lo += w * u;
                                hi += w * l;
                            }
                        }
                        lower.push(lo);
                        upper.push(hi);
                    }
                    Interval { lower, upper }
                }
                NodeKind::Relu => {
                    let x = &out[node.inputs[0]];
                    Interval {
                        lower: x.lower.iter().map(|v| v.max(0.0)).collect(),
                        upper: x.upper.iter().map(|v| v.max(0.0)).collect(),
                    }
                }
                NodeKind::Sum => {
                    let mut acc = out[node.inputs[0]].clone();
                    for &w in &node.inputs[1..] {
                        for j in 0..node.dim {
                            acc.lower[j] += out[w].lower[j];
                            acc.upper[j] += out[w].upper[j];
                        }
                    }
                    acc
                }
                NodeKind::ScalarAffine { scale, shift } => {
                    let x = &out[node.inputs[0]];
                    let a: Vec<f64> = x.lower.iter().map(|v| scale * v + shift).collect();
                    let b: Vec<f64> = x.upper.iter().map(|v| scale * v + shift).collect();
                    if *scale >= 0.0 {
                        Interval { lower: a, upper: b }
                    } else {
                        Interval { lower: b, upper: a }
                    }
                }
                NodeKind::SquaredDistance { target, weights } => {
                    let x = &out[node.inputs[0]];
                    let (lo, hi) = squared_distance_interval(&x.lower, &x.upper, target, weights);
                    Interval { lower: vec![lo], upper: vec![hi] }
                }
                NodeKind::PenaltyHinge { center, size, scale } => {
                    let x = &out[node.inputs[0]];
                    let (lower, upper) = hinge_interval(&x.lower, &x.upper, center, *size, *scale);
                    Interval { lower, upper }
                }
                NodeKind::Concat => {
                    let mut lower = Vec::with_capacity(node.dim);
                    let mut upper = Vec::with_capacity(node.dim);
                    for &w in &node.inputs {
                        lower.extend_from_slice(&out[w].lower);
                        upper.extend_from_slice(&out[w].upper);
                    }
                    Interval { lower, upper }
                }
                NodeKind::Slice { start, len } => {
                    let x = &out[node.inputs[0]];
                    Interval {
                        lower: x.lower[*start..start + len].to_vec(),
                        upper: x.upper[*start..start + len].to_vec(),
                    }
                }
            };
            if iv.lower.iter().chain(&iv.upper).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("interval of node {}", node.id)));
            }
            out.push(iv);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::linalg::Matrix;

    #[test]
    fn single_linear_map_is_exact() {
        let mut b = GraphBuilder::new();
        let x = b.input(2).unwrap();
        let l = b.linear(x, Matrix::new(1, 2, vec![1.0, -1.0]).unwrap(), vec![0.0]).unwrap();
        let g = b.build(l).unwrap();
        let iv = g.interval_forward(&BoxDomain::cube(2, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(iv[l].lower, vec![-1.0]);
        assert_eq!(iv[l].upper, vec![1.0]);
    }

    #[test]
    fn relu_interval_is_a_clamp() {
        let mut b = GraphBuilder::new();
        let x = b.input(1).unwrap();
        let r = b.relu(x).unwrap();
        let g = b.build(r).unwrap();
        let iv = g.interval_forward(&BoxDomain::new(vec![-2.0], vec![3.0]).unwrap()).unwrap();
        assert_eq!((iv[r].lower[0], iv[r].upper[0]), (0.0, 3.0));
    }

    #[test]
    fn hinge_interval_uses_nearest_and_farthest_point() {
        // Point box [0,1]^2, obstacle at (2,0) of size 1.5.
        let (lo, hi) = hinge_interval(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 0.0], 1.5, 2.0);
        assert!((hi[0] - 2.0 * 0.5).abs() < 1e-12);
        assert_eq!(lo[0], 0.0);
    }

    #[test]
    fn squared_distance_interval_brackets_target() {
        let (lo, hi) = squared_distance_interval(&[-1.0], &[2.0], &[0.5], &[2.0]);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 2.0 * 1.5 * 1.5);
        let (lo, _) = squared_distance_interval(&[1.0], &[2.0], &[0.5], &[1.0]);
        assert_eq!(lo, 0.25);
    }
}
