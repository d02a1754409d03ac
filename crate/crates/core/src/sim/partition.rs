//! Non-IID label partitioning with per-class Dirichlet proportions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{invalid, SimError};

/// One draw from a symmetric `Dirichlet(alpha, ..., alpha)` over `n` parts.
///
/// For very small `alpha` every gamma draw can underflow to zero; the mass
/// then goes to a single uniformly chosen part, which is the limiting
/// behaviour anyway.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[rng.random_range(0..n)] = 1.0;
    }
    draws
}

/// Splits `total` items by `proportions` with largest-remainder rounding.
///
/// Remainders are compared exactly as computed; ties go to the lower index.
pub fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut leftover = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    // floor() of a proportion that rounded above 1 could over-assign
    let mut excess = counts.iter().sum::<usize>().saturating_sub(total);
    for c in counts.iter_mut().rev() {
        let take = excess.min(*c);
        *c -= take;
        excess -= take;
    }
    counts
}

/// Partitions indices `0..labels.len()` into `n_parts` disjoint lists.
///
/// For every class the indices of that class are shuffled and split by a
/// fresh `Dirichlet(alpha)` draw. Each returned list is sorted ascending.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    labels: &[usize],
    n_parts: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, SimError> {
    if labels.is_empty() {
        return Err(SimError::EmptyLabels);
    }
    if n_parts == 0 {
        return Err(invalid("n_parts", "must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("dirichlet_alpha", format!("must be positive and finite, got {alpha}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); n_parts];
    for mut members in by_class.into_iter().filter(|m| !m.is_empty()) {
        members.shuffle(rng);
        let props = sample_dirichlet(alpha, n_parts, rng);
        let counts = largest_remainder(&props, members.len());
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(counts) {
            part.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Mean over classes of the largest share of that class held by one part.
///
/// 1.0 means every class lives entirely in one part; `1 / n_parts` is a
/// perfectly even split.
pub fn label_skew(parts: &[Vec<usize>], labels: &[usize]) -> f64 {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut totals = vec![0usize; classes];
    for &l in labels {
        totals[l] += 1;
    }
    let mut best = vec![0usize; classes];
    for part in parts {
        let mut counts = vec![0usize; classes];
        for &i in part {
            counts[labels[i]] += 1;
        }
        for (b, c) in best.iter_mut().zip(counts) {
            *b = (*b).max(c);
        }
    }
    let shares: Vec<f64> = best
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&b, &t)| b as f64 / t as f64)
        .collect();
    shares.iter().sum::<f64>() / shares.len() as f64
}
