//! Display selection strategies.
//!
//! `random`, `maxmin` (greedy farthest point), `uncertainty` (closeness of
//! the change probability to 0.5) and `optimized`. The optimized strategy is
//! a reconstruction: each candidate scores
//! `s = u^α · div^β · rep^γ`, where `u` is uncertainty, `div` the minimum
//! distance to everything labeled or already picked (normalized by the
//! largest pairwise distance in the pool) and `rep` the mean Gaussian-kernel
//! similarity to the pool with the median pairwise distance as bandwidth.
//! Each factor is min-max rescaled to `[0, 1]` over the candidates, and
//! picks are made greedily, refreshing `div` after every pick.
//!
//! All distances are Euclidean in feature space. Ties go to the smallest id.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invnet::InvertibleNet;
use crate::linalg::{distance, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    Maxmin,
    Uncertainty,
    Optimized { alpha: f64, beta: f64, gamma: f64 },
}

impl StrategyKind {
    pub fn optimized() -> Self {
        StrategyKind::Optimized {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Maxmin => "maxmin",
            StrategyKind::Uncertainty => "uncertainty",
            StrategyKind::Optimized { .. } => "optimized",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let StrategyKind::Optimized { alpha, beta, gamma } = self {
            if [alpha, beta, gamma].iter().any(|e| !e.is_finite() || **e < 0.0) {
                return Err(Error::InvalidConfig("strategy exponents must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(StrategyKind::Random),
            "maxmin" => Ok(StrategyKind::Maxmin),
            "uncertainty" => Ok(StrategyKind::Uncertainty),
            "optimized" => Ok(StrategyKind::optimized()),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

/// A pool member: its id and feature vector.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: u32,
    pub features: &'a [f64],
}

fn check_pool(available: usize, b: usize) -> Result<()> {
    if b == 0 || available < b {
        return Err(Error::InsufficientPool {
            requested: b,
            available,
        });
    }
    Ok(())
}

/// Index of the maximum score, ties to the smallest id.
fn argmax(scores: impl Iterator<Item = (usize, f64)>, ids: &[u32]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        best = match best {
            None => Some((i, s)),
            Some((bi, bs)) if s > bs || (s == bs && ids[i] < ids[bi]) => Some((i, s)),
            keep => keep,
        };
    }
    best.map(|(i, _)| i)
}

/// `b` distinct ids drawn uniformly without replacement.
pub fn select_random(pool: &[u32], b: usize, rng: &mut RngStream) -> Result<Vec<u32>> {
    check_pool(pool.len(), b)?;
    let mut ids = pool.to_vec();
    // Partial Fisher–Yates.
    for i in 0..b {
        let j = i + rng.next_below(ids.len() - i);
        ids.swap(i, j);
    }
    ids.truncate(b);
    Ok(ids)
}

fn mean_distances(pool: &[Candidate<'_>]) -> Vec<f64> {
    let n = pool.len();
    let mut sums = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(pool[i].features, pool[j].features);
            sums[i] += d;
            sums[j] += d;
        }
    }
    sums.iter().map(|s| s / n as f64).collect()
}

fn min_distances(pool: &[Candidate<'_>], anchored: &[&[f64]]) -> Vec<f64> {
    pool.iter()
        .map(|c| {
            anchored
                .iter()
                .map(|a| distance(c.features, a))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Greedy farthest-point selection against `anchored ∪ picked`.
///
/// With nothing anchored the first pick maximizes the mean distance to the
/// pool.
pub fn select_maxmin(pool: &[Candidate<'_>], anchored: &[&[f64]], b: usize) -> Result<Vec<u32>> {
    check_pool(pool.len(), b)?;
    let ids: Vec<u32> = pool.iter().map(|c| c.id).collect();
    let mut taken = vec![false; pool.len()];
    let mut picked = Vec::with_capacity(b);

    let mut mind = if anchored.is_empty() {
        let first = argmax(mean_distances(pool).into_iter().enumerate(), &ids).expect("pool non-empty");
        taken[first] = true;
        picked.push(ids[first]);
        min_distances(pool, &[pool[first].features])
    } else {
        min_distances(pool, anchored)
    };

    while picked.len() < b {
        let next = argmax(
            mind.iter().copied().enumerate().filter(|&(i, _)| !taken[i]),
            &ids,
        )
        .expect("pool larger than b");
        taken[next] = true;
        picked.push(ids[next]);
        for (m, c) in mind.iter_mut().zip(pool) {
            *m = m.min(distance(c.features, pool[next].features));
        }
    }
    Ok(picked)
}

/// `1 − 2·|p − 0.5|`, in `[0, 1]`, largest at the decision boundary.
pub fn uncertainty(probability: f64) -> f64 {
    1.0 - 2.0 * (probability - 0.5).abs()
}

/// Top `b` ids by uncertainty of the given probabilities.
pub fn rank_by_uncertainty(ids: &[u32], probabilities: &[f64], b: usize) -> Result<Vec<u32>> {
    if ids.len() != probabilities.len() {
        return Err(Error::Shape("one probability per candidate expected".into()));
    }
    check_pool(ids.len(), b)?;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let u: Vec<f64> = probabilities.iter().map(|&p| uncertainty(p)).collect();
    order.sort_by(|&a, &c| u[c].total_cmp(&u[a]).then(ids[a].cmp(&ids[c])));
    Ok(order[..b].iter().map(|&i| ids[i]).collect())
}

pub fn select_uncertainty(net: &InvertibleNet, pool: &[Candidate<'_>], b: usize) -> Result<Vec<u32>> {
    check_pool(pool.len(), b)?;
    let ids: Vec<u32> = pool.iter().map(|c| c.id).collect();
    let probs = net.classify_batch(pool.iter().map(|c| c.features))?;
    rank_by_uncertainty(&ids, &probs, b)
}

fn rescale(values: &mut [f64], active: impl Fn(usize) -> bool) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if active(i) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let range = hi - lo;
    for (i, v) in values.iter_mut().enumerate() {
        if active(i) {
            *v = if range > 0.0 { (*v - lo) / range } else { 1.0 };
        }
    }
}

#[inline]
fn factor(value: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        value.powf(exponent)
    }
}

/// Greedy uncertainty × diversity × representativity selection.
///
/// A pool of identical points carries no geometric signal; it falls back to
/// [`select_random`].
pub fn select_optimized(
    net: &InvertibleNet,
    pool: &[Candidate<'_>],
    anchored: &[&[f64]],
    b: usize,
    kind: &StrategyKind,
    rng: &mut RngStream,
) -> Result<Vec<u32>> {
    let (alpha, beta, gamma) = match *kind {
        StrategyKind::Optimized { alpha, beta, gamma } => (alpha, beta, gamma),
        other => return Err(Error::InvalidArgument(format!("{} is not an optimized strategy", other.name()))),
    };
    kind.validate()?;
    check_pool(pool.len(), b)?;
    let n = pool.len();
    let ids: Vec<u32> = pool.iter().map(|c| c.id).collect();

    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    let mut kernel_input = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(pool[i].features, pool[j].features);
            pairwise.push(d);
            kernel_input[i * n + j] = d;
            kernel_input[j * n + i] = d;
        }
    }
    let max_dist = pairwise.iter().copied().fold(0.0, f64::max);
    if n > 1 && max_dist == 0.0 {
        log::warn!("optimized display: all {n} candidates coincide; selecting at random");
        let pool_ids: Vec<u32> = ids.clone();
        return select_random(&pool_ids, b, rng);
    }

    let mut unc = if alpha != 0.0 {
        let probs = net.classify_batch(pool.iter().map(|c| c.features))?;
        probs.into_iter().map(uncertainty).collect()
    } else {
        vec![1.0; n]
    };
    rescale(&mut unc, |_| true);

    let mut rep = vec![1.0; n];
    if gamma != 0.0 {
        let mid = pairwise.len() / 2;
        let bandwidth = if pairwise.is_empty() {
            1.0
        } else {
            let mut sorted = pairwise.clone();
            *sorted.select_nth_unstable_by(mid, f64::total_cmp).1
        };
        let denom = 2.0 * bandwidth * bandwidth;
        for i in 0..n {
            let row = &kernel_input[i * n..(i + 1) * n];
            rep[i] = if denom > 0.0 {
                row.iter().map(|d| (-d * d / denom).exp()).sum::<f64>() / n as f64
            } else {
                1.0
            };
        }
        rescale(&mut rep, |_| true);
    }

    let norm = if max_dist > 0.0 { max_dist } else { 1.0 };
    // Raw diversity: distance to the anchored set, or mean distance to the
    // pool while nothing is anchored yet.
    let mut raw_div: Vec<f64> = if beta == 0.0 {
        vec![1.0; n]
    } else if anchored.is_empty() {
        (0..n)
            .map(|i| kernel_input[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64 / norm)
            .collect()
    } else {
        min_distances(pool, anchored).into_iter().map(|d| d / norm).collect()
    };
    let mut have_anchor = !anchored.is_empty();

    let mut taken = vec![false; n];
    let mut picked = Vec::with_capacity(b);
    let mut div = vec![0.0; n];
    while picked.len() < b {
        div.copy_from_slice(&raw_div);
        if beta != 0.0 {
            rescale(&mut div, |i| !taken[i]);
        }
        let next = argmax(
            (0..n)
                .filter(|&i| !taken[i])
                .map(|i| (i, factor(unc[i], alpha) * factor(div[i], beta) * factor(rep[i], gamma))),
            &ids,
        )
        .expect("pool larger than b");
        taken[next] = true;
        picked.push(ids[next]);
        if beta != 0.0 {
            for i in 0..n {
                let d = kernel_input[i * n + next] / norm;
                raw_div[i] = if have_anchor { raw_div[i].min(d) } else { d };
            }
            have_anchor = true;
        }
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn pts(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn candidates(features: &[Vec<f64>]) -> Vec<Candidate<'_>> {
        features
            .iter()
            .enumerate()
            .map(|(i, f)| Candidate {
                id: i as u32 + 1,
                features: f,
            })
            .collect()
    }

    #[test]
    fn random_whole_pool_and_errors() {
        let pool = [5, 6, 7];
        let mut got = select_random(&pool, 3, &mut RngStream::new(1)).unwrap();
        got.sort();
        assert_eq!(got, vec![5, 6, 7]);
        assert!(matches!(
            select_random(&pool, 0, &mut RngStream::new(1)),
            Err(Error::InsufficientPool { .. })
        ));
        assert!(select_random(&pool, 4, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn maxmin_hand_trace() {
        let f = pts(&[1.0, 2.0, 10.0]);
        let pool = candidates(&f);
        let anchor = [0.0];
        let got = select_maxmin(&pool, &[&anchor[..]], 2).unwrap();
        // ids: 1→1.0, 2→2.0, 3→10.0
        assert_eq!(got, vec![3, 2]);
    }

    #[test]
    fn maxmin_tie_takes_smaller_id() {
        let f = pts(&[5.0, 5.0, 0.0]);
        let pool = candidates(&f);
        let anchor = [0.0];
        assert_eq!(select_maxmin(&pool, &[&anchor[..]], 1).unwrap(), vec![1]);
    }

    #[test]
    fn uncertainty_examples() {
        assert_eq!(rank_by_uncertainty(&[1, 2, 3], &[0.51, 0.9, 0.1], 1).unwrap(), vec![1]);
        assert_eq!(rank_by_uncertainty(&[3, 1, 2], &[0.7, 0.7, 0.7], 2).unwrap(), vec![1, 2]);
        assert_eq!(
            rank_by_uncertainty(&[1, 2, 3], &[0.9, 0.6, 0.2], 3).unwrap(),
            vec![2, 3, 1]
        );
    }

    #[test]
    fn optimized_constant_scores_follow_ids() {
        let net = InvertibleNet::random(2, 1, &mut RngStream::new(1)).unwrap();
        let f: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let pool = candidates(&f);
        let kind = StrategyKind::Optimized {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let got = select_optimized(&net, &pool, &[], 3, &kind, &mut RngStream::new(0)).unwrap();
        assert_eq!(got, vec![1, 2, 3]);
    }

    #[test]
    fn optimized_degenerate_pool_falls_back_to_random() {
        let net = InvertibleNet::new(vec![], Matrix::identity(2)).unwrap();
        let f = vec![vec![1.0, 1.0]; 5];
        let pool = candidates(&f);
        let got = select_optimized(&net, &pool, &[], 2, &StrategyKind::optimized(), &mut RngStream::new(3)).unwrap();
        let expected = select_random(&[1, 2, 3, 4, 5], 2, &mut RngStream::new(3)).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn strategy_names_parse() {
        for name in ["random", "maxmin", "uncertainty", "optimized"] {
            let k: StrategyKind = name.parse().unwrap();
            assert_eq!(k.name(), name);
        }
        assert!("greedy".parse::<StrategyKind>().is_err());
    }
}
