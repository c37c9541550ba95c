use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeuronCase {
    Active,
    Inactive,
    Unstable,
}

/// Lower slope of unstable neurons.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum AlphaPolicy {
    /// 1 when `u >= |l|`, else 0.
    #[default]
    Adaptive,
    /// A fixed slope in `[0, 1]`.
    Fixed(f64),
}

/// Elementwise linear bounds `lower_slope*z + lower_offset <= relu(z) <=
/// upper_slope*z + upper_offset` valid for `z` in `[l, u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluRelaxation {
    pub lower_slope: Vec<f64>,
    pub lower_offset: Vec<f64>,
    pub upper_slope: Vec<f64>,
    pub upper_offset: Vec<f64>,
    pub cases: Vec<NeuronCase>,
}

impl ReluRelaxation {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

pub fn relax_relu(l: &[f64], u: &[f64], policy: AlphaPolicy) -> Result<ReluRelaxation> {
    if l.len() != u.len() {
        return Err(Error::ShapeMismatch(format!(
            "relaxation bounds have lengths {} and {}",
            l.len(),
            u.len()
        )));
    }
    if let AlphaPolicy::Fixed(a) = policy {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidConfig(format!("alpha {a} outside [0, 1]")));
        }
    }
    let n = l.len();
    let mut r = ReluRelaxation {
        lower_slope: vec![0.0; n],
        lower_offset: vec![0.0; n],
        upper_slope: vec![0.0; n],
        upper_offset: vec![0.0; n],
        cases: vec![NeuronCase::Inactive; n],
    };
    for j in 0..n {
        let (lj, uj) = (l[j], u[j]);
        if !(lj <= uj) {
            return Err(Error::InvertedBounds { index: j, lower: lj, upper: uj });
        }
        if lj >= 0.0 {
            r.cases[j] = NeuronCase::Active;
            r.lower_slope[j] = 1.0;
            r.upper_slope[j] = 1.0;
        } else if uj <= 0.0 {
            r.cases[j] = NeuronCase::Inactive;
        } else {
            r.cases[j] = NeuronCase::Unstable;
            let slope = uj / (uj - lj);
            r.upper_slope[j] = slope;
            r.upper_offset[j] = -slope * lj;
            r.lower_slope[j] = match policy {
                AlphaPolicy::Adaptive => {
                    if uj >= -lj {
                        1.0
                    } else {
                        0.0
                    }
                }
                AlphaPolicy::Fixed(a) => a,
            };
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_neuron_is_identity() {
        let r = relax_relu(&[1.0], &[2.0], AlphaPolicy::Adaptive).unwrap();
        assert_eq!(r.cases, vec![NeuronCase::Active]);
        assert_eq!((r.lower_slope[0], r.upper_slope[0]), (1.0, 1.0));
        assert_eq!((r.lower_offset[0], r.upper_offset[0]), (0.0, 0.0));
    }

    #[test]
    fn inactive_neuron_is_zero() {
        let r = relax_relu(&[-2.0], &[-1.0], AlphaPolicy::Adaptive).unwrap();
        assert_eq!(r.cases, vec![NeuronCase::Inactive]);
        assert_eq!((r.lower_slope[0], r.upper_slope[0]), (0.0, 0.0));
        assert_eq!((r.lower_offset[0], r.upper_offset[0]), (0.0, 0.0));
    }

    #[test]
    fn unstable_upper_line() {
        let r = relax_relu(&[-1.0], &[3.0], AlphaPolicy::Adaptive).unwrap();
        assert_eq!(r.cases, vec![NeuronCase::Unstable]);
        assert_eq!(r.upper_slope[0], 0.75);
        assert_eq!(r.upper_offset[0], 0.75);
        assert_eq!(r.lower_slope[0], 1.0);
        let r = relax_relu(&[-3.0], &[1.0], AlphaPolicy::Adaptive).unwrap();
        assert_eq!(r.lower_slope[0], 0.0);
    }

    #[test]
    fn degenerate_interval() {
        let r = relax_relu(&[0.0, -0.5], &[0.0, -0.5], AlphaPolicy::Adaptive).unwrap();
        assert_eq!(r.cases, vec![NeuronCase::Active, NeuronCase::Inactive]);
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        assert!(matches!(
            relax_relu(&[0.0, 2.0], &[1.0, 1.0], AlphaPolicy::Adaptive),
            Err(Error::InvertedBounds { index: 1, .. })
        ));
        assert!(relax_relu(&[0.0], &[1.0], AlphaPolicy::Fixed(1.5)).is_err());
    }
}
