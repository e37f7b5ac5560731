use crate::tensor::{cosine, sigmoid};

use super::PrecedingSet;

/// Decay factor `exp(-m / beta)`; identically 1 for infinite `beta`.
#[inline]
pub fn alpha(m: usize, beta: f64) -> f64 {
    if beta.is_infinite() {
        1.0
    } else {
        (-(m as f64) / beta).exp()
    }
}

/// Mean cosine between `c` and the members of `others`; 0 for an empty set.
pub fn fs_score(c: &[f64], others: &[&[f64]]) -> f64 {
    if others.is_empty() {
        return 0.0;
    }
    others.iter().map(|o| cosine(c, o)).sum::<f64>() / others.len() as f64
}

/// Logistic of the best cosine between `c` and `others`; 0 for an empty set.
pub fn ft_score(c: &[f64], others: &[&[f64]]) -> f64 {
    if others.is_empty() {
        return 0.0;
    }
    let best = others.iter().map(|o| cosine(c, o)).fold(f64::NEG_INFINITY, f64::max);
    sigmoid(best)
}

/// Scene score `g`, evaluated directly from member representations in order.
pub fn scene_score(members: &[&[f64]], beta: f64, mode: PrecedingSet) -> f64 {
    let mut total = 0.0;
    for (t, c) in members.iter().enumerate() {
        let others: Vec<&[f64]> = match mode {
            PrecedingSet::Preceding => members[..t].to_vec(),
            PrecedingSet::Symmetric => members
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != t)
                .map(|(_, m)| *m)
                .collect(),
        };
        if others.is_empty() {
            continue;
        }
        total += alpha(others.len(), beta) * (fs_score(c, &others) + ft_score(c, &others));
    }
    total
}

/// Scene score of every contiguous span of super shots, from a cosine matrix.
#[derive(Debug, Clone)]
pub struct SpanScores {
    k: usize,
    g: Vec<f64>,
}

impl SpanScores {
    /// `cos(a, b)` must be symmetric. Cost is `O(k^2)` for preceding sets and
    /// `O(k^3)` for symmetric ones.
    pub fn build(k: usize, cos: impl Fn(usize, usize) -> f64, beta: f64, mode: PrecedingSet) -> Self {
        let mut g = vec![0.0; k * k];
        match mode {
            PrecedingSet::Preceding => {
                // g(l, r) = g(l, r-1) + alpha(r-l) * (mean_{l<=q<r} cos(q,r) + sigma(max_{l<=q<r} cos(q,r)))
                for r in 1..k {
                    let mut sum = 0.0;
                    let mut best = f64::NEG_INFINITY;
                    for l in (0..r).rev() {
                        let c = cos(l, r);
                        sum += c;
                        best = best.max(c);
                        let m = r - l;
                        let term = alpha(m, beta) * (sum / m as f64 + sigmoid(best));
                        g[l * k + r] = g[l * k + r - 1] + term;
                    }
                }
            }
            PrecedingSet::Symmetric => {
                for l in 0..k {
                    let mut sums: Vec<f64> = Vec::with_capacity(k - l);
                    let mut maxes: Vec<f64> = Vec::with_capacity(k - l);
                    for r in l..k {
                        let mut own_sum = 0.0;
                        let mut own_max = f64::NEG_INFINITY;
                        for (i, q) in (l..r).enumerate() {
                            let c = cos(q, r);
                            sums[i] += c;
                            maxes[i] = maxes[i].max(c);
                            own_sum += c;
                            own_max = own_max.max(c);
                        }
                        sums.push(own_sum);
                        maxes.push(own_max);
                        let m = r - l;
                        if m == 0 {
                            continue;
                        }
                        let a = alpha(m, beta);
                        g[l * k + r] = sums
                            .iter()
                            .zip(&maxes)
                            .map(|(s, mx)| a * (s / m as f64 + sigmoid(*mx)))
                            .sum();
                    }
                }
            }
        }
        Self { k, g }
    }

    /// Score of the scene made of super shots `l..=r`.
    #[inline]
    pub fn get(&self, l: usize, r: usize) -> f64 {
        self.g[l * self.k + r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid;

    const S1: f64 = 0.731_058_578_630_004_9;

    #[test]
    fn fs_examples() {
        assert_eq!(fs_score(&[1.0, 0.0], &[&[1.0, 0.0]]), 1.0);
        assert_eq!(fs_score(&[1.0, 0.0], &[&[0.0, 1.0], &[1.0, 0.0]]), 0.5);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fs_score(&[d, d], &[&[1.0, 0.0]]) - d).abs() < 1e-12);
    }

    #[test]
    fn ft_examples() {
        assert!((ft_score(&[1.0, 0.0], &[&[1.0, 0.0]]) - S1).abs() < 1e-15);
        assert!((ft_score(&[1.0, 0.0], &[&[1.0, 0.0]]) - 0.7311).abs() < 1e-4);
        assert_eq!(ft_score(&[1.0, 0.0], &[&[0.0, 1.0], &[0.0, -0.0]]), 0.5);
        assert!((ft_score(&[1.0, 0.0], &[&[0.0, 1.0], &[1.0, 0.0]]) - S1).abs() < 1e-15);
    }

    #[test]
    fn scene_score_examples() {
        let inf = f64::INFINITY;
        assert_eq!(scene_score(&[&[1.0, 2.0]], inf, PrecedingSet::Preceding), 0.0);
        let two = scene_score(&[&[1.0, 0.0], &[1.0, 0.0]], inf, PrecedingSet::Preceding);
        assert!((two - (1.0 + sigmoid(1.0))).abs() < 1e-15);
        assert!((two - 1.7311).abs() < 1e-4);
        // hand-evaluated: member 2 -> 0 + sigma(0); member 3 -> (1 + 0)/2 + sigma(1)
        let three = scene_score(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]], inf, PrecedingSet::Preceding);
        assert!((three - (0.5 + 0.5 + S1)).abs() < 1e-15);
        assert!((three - 1.7311).abs() < 1e-4);
    }

    #[test]
    fn beta_irrelevant_with_one_preceding_member() {
        let a = scene_score(&[&[1.0, 0.3], &[0.2, 1.0]], f64::INFINITY, PrecedingSet::Preceding);
        let b = scene_score(&[&[1.0, 0.3], &[0.2, 1.0]], 10.0, PrecedingSet::Preceding);
        assert!((a * alpha(1, 10.0) - b).abs() < 1e-15);
        assert_eq!(scene_score(&[&[1.0, 0.3]], 0.5, PrecedingSet::Preceding), 0.0);
    }

    #[test]
    fn span_table_matches_direct_scores() {
        let reps: Vec<Vec<f64>> = (0..7)
            .map(|i| vec![(i as f64 * 1.3).sin(), (i as f64 * 0.7).cos(), 0.2 * i as f64 - 0.5])
            .collect();
        for mode in [PrecedingSet::Preceding, PrecedingSet::Symmetric] {
            for beta in [f64::INFINITY, 3.0] {
                let t = SpanScores::build(reps.len(), |a, b| cosine(&reps[a], &reps[b]), beta, mode);
                for l in 0..reps.len() {
                    for r in l..reps.len() {
                        let members: Vec<&[f64]> = reps[l..=r].iter().map(Vec::as_slice).collect();
                        let direct = scene_score(&members, beta, mode);
                        assert!((t.get(l, r) - direct).abs() < 1e-12, "{mode:?} {beta} [{l},{r}]");
                    }
                }
            }
        }
    }
}
