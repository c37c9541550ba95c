//! Subdomain selection and branching.

use rand::Rng;

use super::SubdomainRecord;
use crate::domain::BoxDomain;
use crate::search::Sample;

/// Removes up to `n` records from `pool`: the `round(eta * n)` with the
/// smallest `uf`, then the rest drawn without replacement with probability
/// proportional to `exp(-lf_scaled / temperature)`, where `lf_scaled` is the
/// min-max normalized `lf` over the records not yet picked.
pub fn pick_out<R: Rng + ?Sized>(
    pool: &mut Vec<SubdomainRecord>,
    n: usize,
    eta: f64,
    temperature: f64,
    rng: &mut R,
) -> Vec<SubdomainRecord> {
    let n = n.min(pool.len());
    if n == 0 {
        return Vec::new();
    }
    let n1 = ((eta * n as f64).round() as usize).min(n);

    let mut by_uf: Vec<usize> = (0..pool.len()).collect();
    by_uf.sort_by(|&a, &b| pool[a].uf.total_cmp(&pool[b].uf).then(pool[a].id.cmp(&pool[b].id)));
    let mut chosen: Vec<usize> = by_uf[..n1].to_vec();

    let mut rest: Vec<usize> = by_uf[n1..].to_vec();
    rest.sort_unstable();
    if n > n1 {
        let lo = rest.iter().map(|&i| pool[i].lf).fold(f64::INFINITY, f64::min);
        let hi = rest.iter().map(|&i| pool[i].lf).fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = rest
            .iter()
            .map(|&i| {
                if hi > lo {
                    (-((pool[i].lf - lo) / (hi - lo)) / temperature).exp()
                } else {
                    1.0
                }
            })
            .collect();
        for _ in n1..n {
            let total: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("positive weight");
            for (k, &w) in weights.iter().enumerate() {
                if w > 0.0 && r < w {
                    pick = k;
                    break;
                }
                r -= w;
            }
            chosen.push(rest[pick]);
            weights[pick] = 0.0;
        }
    }

    chosen.sort_unstable();
    let mut picked = Vec::with_capacity(n);
    for &i in chosen.iter().rev() {
        picked.push(pool.swap_remove(i));
    }
    picked.sort_by_key(|r| r.id);
    picked
}

/// Dimension to bisect: the largest `width_j * |n_lo - n_up|` over the best
/// `top_percent`% of `samples`, counting samples on the midpoint in both
/// halves. Falls back to the widest dimension when every score is zero.
/// Dimensions no wider than `min_width` are never chosen; ties go to the
/// lowest index. `None` when no dimension can be split.
pub fn choose_split(
    domain: &BoxDomain,
    samples: &[Sample],
    top_percent: f64,
    min_width: f64,
) -> Option<usize> {
    let candidates: Vec<usize> = (0..domain.dim()).filter(|&j| domain.width(j) > min_width).collect();
    if candidates.is_empty() {
        return None;
    }
    let k = ((top_percent / 100.0) * samples.len() as f64).ceil() as usize;
    let top = &samples[..k.min(samples.len())];
    let mut best: Option<(usize, f64)> = None;
    for &j in &candidates {
        let mid = domain.mid(j);
        let n_lo = top.iter().filter(|s| s.input[j] <= mid).count() as f64;
        let n_up = top.iter().filter(|s| s.input[j] >= mid).count() as f64;
        let score = domain.width(j) * (n_lo - n_up).abs();
        if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    if let Some((j, _)) = best {
        return Some(j);
    }
    let mut widest = candidates[0];
    for &j in &candidates[1..] {
        if domain.width(j) > domain.width(widest) {
            widest = j;
        }
    }
    Some(widest)
}

/// Whether `x` belongs to the lower half when splitting along `j` (ties low).
pub fn goes_low(domain: &BoxDomain, j: usize, x: &[f64]) -> bool {
    x[j] <= domain.mid(j)
}
