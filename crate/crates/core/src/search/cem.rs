use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{split_evenly, uniform_point, Recorder, SearcherConfig};
use crate::domain::BoxDomain;
use crate::error::Result;
use crate::objective::Objective;

struct Agent {
    mean: Vec<f64>,
    std: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
}

#[allow(clippy::too_many_arguments)]
pub(super) fn run<O: Objective + ?Sized>(
    rec: &mut Recorder<'_, O>,
    rng: &mut ChaCha8Rng,
    domain: &BoxDomain,
    config: &SearcherConfig,
    agents: usize,
    elites: usize,
    jitter: f64,
    warm: Option<&[f64]>,
) -> Result<()> {
    let d = domain.dim();
    let half = domain.half_widths();
    let floor: Vec<f64> = half.iter().map(|h| jitter * h * h).collect();
    let counts = split_evenly(config.samples_per_iter, agents);
    let mut pop: Vec<Agent> = (0..agents)
        .map(|_| Agent { mean: uniform_point(rng, domain), std: half.clone(), best: None })
        .collect();
    if let Some(w) = warm {
        pop[0].mean = w.to_vec();
    }

    let mut batch = Vec::with_capacity(config.samples_per_iter * d);
    for it in 0..config.iterations {
        batch.clear();
        for (agent, &m) in pop.iter().zip(&counts) {
            for _ in 0..m {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(rng);
                    batch.push(agent.mean[j] + agent.std[j] * z);
                }
            }
        }
        for x in batch.chunks_exact_mut(d) {
            domain.clamp(x);
        }
        if it == 0 {
            if let Some(w) = warm {
                batch[..d].copy_from_slice(w);
            }
        }
        let values = rec.evaluate(&batch)?;

        let mut offset = 0;
        for (agent, &m) in pop.iter_mut().zip(&counts) {
            if m == 0 {
                continue;
            }
            let mut pool: Vec<(f64, &[f64])> = (offset..offset + m)
                .map(|i| (values[i], &batch[i * d..(i + 1) * d]))
                .collect();
            offset += m;
            if let Some((v, x)) = &agent.best {
                pool.push((*v, x.as_slice()));
            }
            pool.sort_by(|a, b| a.0.total_cmp(&b.0));
            pool.truncate(elites);
            let n = pool.len() as f64;
            for j in 0..d {
                let mean = pool.iter().map(|(_, x)| x[j]).sum::<f64>() / n;
                let var = pool.iter().map(|(_, x)| (x[j] - mean).powi(2)).sum::<f64>() / n;
                agent.mean[j] = mean;
                agent.std[j] = var.max(floor[j]).sqrt();
            }
            let (v, x) = pool[0];
            if agent.best.as_ref().is_none_or(|b| v < b.0) {
                agent.best = Some((v, x.to_vec()));
            }
        }
    }
    Ok(())
}
