use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{split_evenly, uniform_point, Recorder, SearcherConfig};
use crate::domain::BoxDomain;
use crate::error::Result;
use crate::objective::Objective;

pub(super) struct Params<'a> {
    pub noise_std: f64,
    pub temperature: f64,
    pub temperature_ratios: &'a [f64],
    pub noise_ratios: &'a [f64],
}

struct Instance {
    mean: Vec<f64>,
    std: Vec<f64>,
    /// Sharpness applied to range-normalized costs.
    gain: f64,
    best: Option<(f64, Vec<f64>)>,
}

pub(super) fn run<O: Objective + ?Sized>(
    rec: &mut Recorder<'_, O>,
    rng: &mut ChaCha8Rng,
    domain: &BoxDomain,
    config: &SearcherConfig,
    params: &Params<'_>,
    warm: Option<&[f64]>,
) -> Result<()> {
    let d = domain.dim();
    let half = domain.half_widths();
    let mut grid = Vec::new();
    for &tr in params.temperature_ratios {
        for &nr in params.noise_ratios {
            grid.push((params.temperature * tr, params.noise_std * nr));
        }
    }
    let counts = split_evenly(config.samples_per_iter, grid.len());
    let mut pop: Vec<Instance> = grid
        .iter()
        .map(|&(gain, sigma)| Instance {
            mean: match warm {
                Some(w) => w.to_vec(),
                None => uniform_point(rng, domain),
            },
            std: half.iter().map(|h| sigma * h).collect(),
            gain,
            best: None,
        })
        .collect();

    let mut batch = Vec::with_capacity(config.samples_per_iter * d);
    for it in 0..config.iterations {
        batch.clear();
        for (inst, &m) in pop.iter().zip(&counts) {
            for _ in 0..m {
                for j in 0..d {
                    let z: f64 = StandardNormal.sample(rng);
                    batch.push(inst.mean[j] + inst.std[j] * z);
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
        for (inst, &m) in pop.iter_mut().zip(&counts) {
            if m == 0 {
                continue;
            }
            let mut pool: Vec<(f64, &[f64])> = (offset..offset + m)
                .map(|i| (values[i], &batch[i * d..(i + 1) * d]))
                .collect();
            offset += m;
            if let Some((v, x)) = &inst.best {
                pool.push((*v, x.as_slice()));
            }
            let cmin = pool.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let cmax = pool.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let range = if cmax > cmin { cmax - cmin } else { 1.0 };
            let weights: Vec<f64> = pool
                .iter()
                .map(|(c, _)| (-inst.gain * (c - cmin) / range).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            for j in 0..d {
                inst.mean[j] =
                    pool.iter().zip(&weights).map(|((_, x), w)| w * x[j]).sum::<f64>() / total;
            }
            domain.clamp(&mut inst.mean);
            let (v, x) = pool
                .iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(v, x)| (*v, x.to_vec()))
                .expect("non-empty pool");
            if inst.best.as_ref().is_none_or(|b| v < b.0) {
                inst.best = Some((v, x));
            }
        }
    }
    Ok(())
}
