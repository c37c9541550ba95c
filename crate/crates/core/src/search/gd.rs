use rand_chacha::ChaCha8Rng;

use super::{uniform_point, Recorder, SearcherConfig};
use crate::domain::BoxDomain;
use crate::error::Result;
use crate::objective::Objective;

pub(super) fn run<O: Objective + ?Sized>(
    rec: &mut Recorder<'_, O>,
    rng: &mut ChaCha8Rng,
    domain: &BoxDomain,
    config: &SearcherConfig,
    base_step: f64,
    step_ratios: &[f64],
    warm: Option<&[f64]>,
) -> Result<()> {
    let d = domain.dim();
    let starts = config.samples_per_iter;
    let mut points: Vec<f64> = (0..starts).flat_map(|_| uniform_point(rng, domain)).collect();
    if let Some(w) = warm {
        points[..d].copy_from_slice(w);
    }
    for _ in 0..config.iterations {
        rec.evaluate(&points)?;
        for (i, x) in points.chunks_exact_mut(d).enumerate() {
            let (_, grad) = rec.objective.gradient(x)?;
            let step = base_step * step_ratios[i % step_ratios.len()];
            for (xj, gj) in x.iter_mut().zip(&grad) {
                *xj -= step * gj;
            }
            domain.clamp(x);
        }
    }
    Ok(())
}
