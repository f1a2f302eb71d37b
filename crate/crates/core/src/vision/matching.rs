use serde::{Deserialize, Serialize};

use super::Descriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Lowe ratio; `None` disables the ratio test.
    pub ratio: Option<f64>,
    pub cross_check: bool,
    /// Absolute distance bound used when `b` has a single descriptor.
    pub single_candidate_max_distance: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            ratio: Some(0.8),
            cross_check: true,
            single_candidate_max_distance: 64,
        }
    }
}

/// Brute-force Hamming matching with Lowe's ratio test and mutual
/// cross-check. Output is sorted by ascending distance.
pub fn match_bruteforce(a: &[Descriptor], b: &[Descriptor], ratio: f64) -> Vec<Match> {
    match_descriptors(
        a,
        b,
        &MatchConfig {
            ratio: Some(ratio),
            ..MatchConfig::default()
        },
    )
}

/// Nearest neighbour in `set` (lowest index on ties) and the second-best distance.
fn nearest_two(query: &Descriptor, set: &[Descriptor]) -> (usize, u32, Option<u32>) {
    let mut best = (usize::MAX, u32::MAX);
    let mut second = None::<u32>;
    for (j, d) in set.iter().enumerate() {
        let dist = query.hamming(d);
        if dist < best.1 {
            if best.0 != usize::MAX {
                second = Some(best.1);
            }
            best = (j, dist);
        } else if second.is_none_or(|s| dist < s) {
            second = Some(dist);
        }
    }
    (best.0, best.1, second)
}

pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], config: &MatchConfig) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let reverse_best: Vec<usize> = if config.cross_check {
        b.iter().map(|d| nearest_two(d, a).0).collect()
    } else {
        Vec::new()
    };
    let mut matches: Vec<Match> = a
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let (j, dist, second) = nearest_two(d, b);
            let passes_ratio = match (config.ratio, second) {
                (None, _) => true,
                (Some(r), Some(s)) => (dist as f64) < r * s as f64,
                (Some(_), None) => dist < config.single_candidate_max_distance,
            };
            let mutual = !config.cross_check || reverse_best[j] == i;
            (passes_ratio && mutual).then_some(Match {
                index_a: i,
                index_b: j,
                distance: dist,
            })
        })
        .collect();
    matches.sort_by_key(|m| (m.distance, m.index_a));
    matches
}
