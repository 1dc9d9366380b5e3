//! Representative-member selection within one cluster.
//!
//! Every strategy is a pure function of the member list and the
//! [`SamplingConfig`]; members are put in (distance, id) order first so the
//! caller's ordering does not matter.

pub mod kde;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{member_order, Member};
use crate::error::{Error, Result};

pub use kde::{kde_density, Bandwidth, KdeDensity};

pub const DEFAULT_N: usize = 20;
pub const DEFAULT_STRATA: usize = 5;
pub const DEFAULT_HYBRID_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Centroid,
    Stratified,
    Hybrid,
    Density,
    All,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Centroid,
        Strategy::Stratified,
        Strategy::Hybrid,
        Strategy::Density,
        Strategy::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Centroid => "centroid",
            Strategy::Stratified => "stratified",
            Strategy::Hybrid => "hybrid",
            Strategy::Density => "density",
            Strategy::All => "all",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown sampling strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub n: usize,
    pub seed: u64,
    pub strata: usize,
    /// (core, boundary, random) shares for hybrid sampling.
    pub hybrid_fractions: [f64; 3],
    pub kde_bandwidth: Bandwidth,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Random,
            n: DEFAULT_N,
            seed: 0,
            strata: DEFAULT_STRATA,
            hybrid_fractions: DEFAULT_HYBRID_FRACTIONS,
            kde_bandwidth: Bandwidth::Scott,
        }
    }
}

impl SamplingConfig {
    pub fn with_strategy(self, strategy: Strategy) -> Self {
        Self { strategy, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("sample size n must be at least 1".into()));
        }
        let f = self.hybrid_fractions;
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "hybrid fractions must lie in [0,1] and sum to 1, got {f:?}"
            )));
        }
        if self.strata == 0 {
            return Err(Error::Config("strata must be at least 1".into()));
        }
        if self.strategy == Strategy::Stratified && !self.n.is_multiple_of(self.strata) {
            return Err(Error::Config(format!(
                "stratified sampling needs n divisible by strata (n = {}, strata = {})",
                self.n, self.strata
            )));
        }
        if let Bandwidth::Fixed(h) = self.kde_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!(
                    "fixed KDE bandwidth must be > 0, got {h}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResult {
    pub cluster_id: usize,
    pub strategy: Strategy,
    pub selected: Vec<String>,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-cluster seed: `splitmix64(global ^ splitmix64(cluster_id))`.
pub fn cluster_seed(global_seed: u64, cluster_id: usize) -> u64 {
    splitmix64(global_seed ^ splitmix64(cluster_id as u64))
}

fn sorted(members: &[Member]) -> Result<Vec<&Member>> {
    if members.is_empty() {
        return Err(Error::Sampling("empty cluster".into()));
    }
    let mut v: Vec<&Member> = members.iter().collect();
    v.sort_by(|a, b| member_order(a, b));
    Ok(v)
}

fn ids(members: &[&Member]) -> Vec<String> {
    members.iter().map(|m| m.id.clone()).collect()
}

fn rng(cfg: &SamplingConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed)
}

/// Draws `m` items uniformly without replacement (partial Fisher-Yates), in
/// draw order.
fn draw_uniform<'a>(pool: &[&'a Member], m: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Member> {
    let mut pool = pool.to_vec();
    let m = m.min(pool.len());
    for i in 0..m {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

pub fn sample_random(members: &[Member], cfg: &SamplingConfig) -> Result<Vec<String>> {
    let sorted = sorted(members)?;
    Ok(ids(&draw_uniform(&sorted, cfg.n, &mut rng(cfg))))
}

pub fn sample_centroid(members: &[Member], cfg: &SamplingConfig) -> Result<Vec<String>> {
    let sorted = sorted(members)?;
    Ok(ids(&sorted[..cfg.n.min(sorted.len())]))
}

/// Sizes of equal-frequency strata over `len` ranked members; earlier strata
/// take the remainder.
pub fn strata_sizes(len: usize, strata: usize) -> Vec<usize> {
    let base = len / strata;
    let extra = len % strata;
    (0..strata).map(|s| base + usize::from(s < extra)).collect()
}

pub fn sample_stratified(members: &[Member], cfg: &SamplingConfig) -> Result<Vec<String>> {
    let sorted = sorted(members)?;
    if sorted.len() <= cfg.n {
        return Ok(ids(&sorted));
    }
    if cfg.strata == 0 || !cfg.n.is_multiple_of(cfg.strata) {
        return Err(Error::Sampling(format!(
            "n = {} is not divisible by strata = {}",
            cfg.n, cfg.strata
        )));
    }
    let quota = cfg.n / cfg.strata;
    let sizes = strata_sizes(sorted.len(), cfg.strata);
    let mut pools: Vec<Vec<&Member>> = Vec::with_capacity(cfg.strata);
    let mut start = 0;
    for &size in &sizes {
        pools.push(sorted[start..start + size].to_vec());
        start += size;
    }

    let mut rng = rng(cfg);
    let mut picks: Vec<Vec<&Member>> = vec![Vec::new(); cfg.strata];
    let mut deficits = vec![0usize; cfg.strata];
    for (s, pool) in pools.iter_mut().enumerate() {
        let drawn = draw_uniform(pool, quota, &mut rng);
        deficits[s] = quota - drawn.len();
        pool.retain(|m| !drawn.iter().any(|d| d.id == m.id));
        picks[s] = drawn;
    }
    // Deficits are filled from the nearest lower-rank stratum with spare
    // members, then from higher ranks if everything closer is exhausted.
    for s in 0..cfg.strata {
        let order = (0..s).rev().chain(s + 1..cfg.strata);
        let donors: Vec<usize> = order.collect();
        for donor in donors {
            if deficits[s] == 0 {
                break;
            }
            let drawn = draw_uniform(&pools[donor], deficits[s], &mut rng);
            deficits[s] -= drawn.len();
            pools[donor].retain(|m| !drawn.iter().any(|d| d.id == m.id));
            picks[s].extend(drawn);
        }
    }
    Ok(picks.into_iter().flatten().map(|m| m.id.clone()).collect())
}

/// Core, boundary and random counts: each share floored, the remainder going
/// to core first, then boundary.
pub fn hybrid_quotas(n: usize, fractions: [f64; 3]) -> (usize, usize, usize) {
    let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
    let mut q = [
        floor(fractions[0]),
        floor(fractions[1]),
        floor(fractions[2]),
    ];
    let mut slot = 0;
    while q.iter().sum::<usize>() < n {
        q[slot % 2] += 1;
        slot += 1;
    }
    (q[0], q[1], q[2])
}

pub fn sample_hybrid(members: &[Member], cfg: &SamplingConfig) -> Result<Vec<String>> {
    let sorted = sorted(members)?;
    if sorted.len() <= cfg.n {
        return Ok(ids(&sorted));
    }
    let (core, boundary, random) = hybrid_quotas(cfg.n, cfg.hybrid_fractions);
    let len = sorted.len();
    let mut out: Vec<&Member> = sorted[..core].to_vec();
    out.extend(sorted[len - boundary..].iter().rev());
    let mid = &sorted[core..len - boundary];
    out.extend(draw_uniform(mid, random, &mut rng(cfg)));
    Ok(ids(&out))
}

/// Selection probabilities `rho_i / sum(rho)` aligned with (distance, id) order.
pub fn density_probabilities(
    members: &[Member],
    bandwidth: Bandwidth,
) -> Result<Vec<(String, f64)>> {
    let sorted = sorted(members)?;
    let distances: Vec<f64> = sorted.iter().map(|m| m.distance).collect();
    let kde = kde_density(&distances, bandwidth)?;
    let total: f64 = kde.densities.iter().sum();
    Ok(sorted
        .iter()
        .zip(&kde.densities)
        .map(|(m, rho)| (m.id.clone(), rho / total))
        .collect())
}

pub fn sample_density(members: &[Member], cfg: &SamplingConfig) -> Result<Vec<String>> {
    let mut pool = density_probabilities(members, cfg.kde_bandwidth)?;
    let m = cfg.n.min(pool.len());
    let mut rng = rng(cfg);
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            acc += w;
            if acc > target {
                pick = i;
                break;
            }
        }
        out.push(pool.remove(pick).0);
    }
    Ok(out)
}

pub fn sample_all(members: &[Member], _cfg: &SamplingConfig) -> Result<Vec<String>> {
    Ok(ids(&sorted(members)?))
}

/// Runs `cfg.strategy` on one cluster's members.
pub fn sample_cluster(
    cluster_id: usize,
    members: &[Member],
    cfg: &SamplingConfig,
) -> Result<SampleResult> {
    let selected = match cfg.strategy {
        Strategy::Random => sample_random(members, cfg),
        Strategy::Centroid => sample_centroid(members, cfg),
        Strategy::Stratified => sample_stratified(members, cfg),
        Strategy::Hybrid => sample_hybrid(members, cfg),
        Strategy::Density => sample_density(members, cfg),
        Strategy::All => sample_all(members, cfg),
    }
    .map_err(|e| e.in_cluster(cluster_id))?;
    Ok(SampleResult {
        cluster_id,
        strategy: cfg.strategy,
        selected,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn members(pairs: &[(&str, f64)]) -> Vec<Member> {
        pairs
            .iter()
            .map(|&(id, d)| Member {
                id: id.into(),
                distance: d,
            })
            .collect()
    }

    fn spread(n: usize) -> Vec<Member> {
        (0..n)
            .map(|i| Member {
                id: format!("m{i:04}"),
                distance: i as f64 * 0.01 + 0.5,
            })
            .collect()
    }

    fn cfg(strategy: Strategy) -> SamplingConfig {
        SamplingConfig {
            strategy,
            seed: 99,
            ..SamplingConfig::default()
        }
    }

    #[test]
    fn random_small_cluster_returns_everything() {
        let m = spread(10);
        let mut got = sample_random(&m, &cfg(Strategy::Random)).unwrap();
        got.sort();
        assert_eq!(got, m.iter().map(|m| m.id.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn random_is_deterministic_and_seed_sensitive() {
        let m = spread(1000);
        let c = cfg(Strategy::Random);
        let a = sample_random(&m, &c).unwrap();
        assert_eq!(a, sample_random(&m, &c).unwrap());
        assert_eq!(a.len(), 20);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 20);
        assert_ne!(a, sample_random(&m, &c.with_seed(100)).unwrap());
    }

    #[test]
    fn centroid_takes_nearest() {
        let m = members(&[("a", 0.3), ("b", 0.1), ("c", 0.2), ("d", 0.9)]);
        let c = SamplingConfig {
            n: 3,
            ..cfg(Strategy::Centroid)
        };
        assert_eq!(sample_centroid(&m, &c).unwrap(), vec!["b", "c", "a"]);

        let m = members(&[("z", 0.5), ("y", 0.5), ("x", 0.5)]);
        let c = SamplingConfig { n: 2, ..c };
        assert_eq!(sample_centroid(&m, &c).unwrap(), vec!["x", "y"]);
    }

    #[test]
    fn stratified_takes_quota_per_quintile() {
        let m = spread(100);
        let got = sample_stratified(&m, &cfg(Strategy::Stratified)).unwrap();
        assert_eq!(got.len(), 20);
        let mut per = [0usize; 5];
        for id in &got {
            let rank: usize = id[1..].parse().unwrap();
            per[rank / 20] += 1;
        }
        assert_eq!(per, [4; 5]);
    }

    #[test]
    fn stratified_degenerate_sizes() {
        let c = cfg(Strategy::Stratified);
        assert_eq!(sample_stratified(&spread(5), &c).unwrap().len(), 5);
        let mut got = sample_stratified(&spread(20), &c).unwrap();
        got.sort();
        assert_eq!(got.len(), 20);
        assert_eq!(got.iter().collect::<HashSet<_>>().len(), 20);
    }

    #[test]
    fn strata_sizes_front_load_remainder() {
        assert_eq!(strata_sizes(23, 5), vec![5, 5, 5, 4, 4]);
        assert_eq!(strata_sizes(3, 5), vec![1, 1, 1, 0, 0]);
    }

    #[test]
    fn hybrid_quota_allocation() {
        assert_eq!(hybrid_quotas(20, DEFAULT_HYBRID_FRACTIONS), (12, 4, 4));
        // floor(3.0)=3, floor(1.0)=1, floor(1.0)=1
        assert_eq!(hybrid_quotas(5, DEFAULT_HYBRID_FRACTIONS), (3, 1, 1));
        // floor(4.2)=4, floor(1.4)=1, floor(1.4)=1 -> remainder 1 to core
        assert_eq!(hybrid_quotas(7, DEFAULT_HYBRID_FRACTIONS), (5, 1, 1));
        // floor(2.4)=2, floor(0.8)=0, floor(0.8)=0 -> remainder 2: core then boundary
        assert_eq!(hybrid_quotas(4, DEFAULT_HYBRID_FRACTIONS), (3, 1, 0));
    }

    #[test]
    fn hybrid_groups() {
        let m = spread(100);
        let got = sample_hybrid(&m, &cfg(Strategy::Hybrid)).unwrap();
        let nearest: Vec<String> = (0..12).map(|i| format!("m{i:04}")).collect();
        let farthest: Vec<String> = (96..100).rev().map(|i| format!("m{i:04}")).collect();
        assert_eq!(&got[..12], nearest.as_slice());
        assert_eq!(&got[12..16], farthest.as_slice());
        for id in &got[16..] {
            let rank: usize = id[1..].parse().unwrap();
            assert!((12..96).contains(&rank));
        }
        assert_eq!(
            sample_hybrid(&spread(8), &cfg(Strategy::Hybrid))
                .unwrap()
                .len(),
            8
        );
    }

    #[test]
    fn density_probabilities_sum_to_one() {
        let p = density_probabilities(&spread(37), Bandwidth::Scott).unwrap();
        let s: f64 = p.iter().map(|(_, p)| p).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_ignores_n() {
        let m = members(&[
            ("g", 0.7),
            ("a", 0.1),
            ("b", 0.1),
            ("c", 0.3),
            ("d", 0.2),
            ("e", 0.2),
            ("f", 0.9),
        ]);
        let c = SamplingConfig {
            n: 2,
            ..cfg(Strategy::All)
        };
        assert_eq!(
            sample_all(&m, &c).unwrap(),
            vec!["a", "b", "d", "e", "c", "g", "f"]
        );
    }

    #[test]
    fn empty_cluster_errors_for_every_strategy() {
        for s in Strategy::ALL {
            let err = sample_cluster(4, &[], &cfg(s)).unwrap_err();
            assert_eq!(err.cluster_id(), Some(4));
            assert!(err.to_string().contains("empty cluster"), "{err}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Strategy::Stratified);
        c.n = 21;
        assert!(c.validate().is_err());
        c.n = 20;
        c.hybrid_fractions = [0.5, 0.2, 0.2];
        assert!(c.validate().is_err());
        assert!(cfg(Strategy::Hybrid).validate().is_ok());
    }

    #[test]
    fn cluster_seeds_differ() {
        let seeds: HashSet<u64> = (0..50).map(|c| cluster_seed(42, c)).collect();
        assert_eq!(seeds.len(), 50);
        assert_eq!(cluster_seed(42, 3), cluster_seed(42, 3));
    }

    proptest! {
        #[test]
        fn order_of_input_does_not_matter(
            dists in proptest::collection::vec(0.0f64..5.0, 1..60),
            seed in any::<u64>(),
            rot in 0usize..60,
        ) {
            let m: Vec<Member> = dists.iter().enumerate()
                .map(|(i, &d)| Member { id: format!("i{i}"), distance: d })
                .collect();
            let mut shuffled = m.clone();
            shuffled.rotate_left(rot % m.len());
            for s in Strategy::ALL {
                let c = SamplingConfig { strategy: s, seed, ..SamplingConfig::default() };
                prop_assert_eq!(
                    sample_cluster(0, &m, &c).unwrap(),
                    sample_cluster(0, &shuffled, &c).unwrap()
                );
            }
        }
    }
}
