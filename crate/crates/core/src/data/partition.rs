//! Zipf-sized, Dirichlet-mixed client shards.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::geometry::RngStream;
use crate::numerics::log_sum_exp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Zipf exponent for client dataset sizes.
    pub sigma: f64,
    /// Dirichlet concentration for per-client class mixtures.
    pub alpha: f64,
    pub num_clients: usize,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::param(format!("zipf exponent must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::param(format!("dirichlet concentration must be > 0, got {}", self.alpha)));
        }
        if self.num_clients == 0 {
            return Err(Error::param("need at least one client"));
        }
        Ok(())
    }
}

/// Per-client sample indices into one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(assignments: Vec<Vec<usize>>, dataset_len: usize) -> Result<Self> {
        let mut seen = vec![false; dataset_len];
        for (client, list) in assignments.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Invariant(format!("client {client} received no samples")));
            }
            for &i in list {
                match seen.get_mut(i) {
                    None => return Err(Error::Invariant(format!("index {i} outside dataset of {dataset_len}"))),
                    Some(true) => return Err(Error::Invariant(format!("index {i} assigned twice"))),
                    Some(slot) => *slot = true,
                }
            }
        }
        Ok(Self { assignments })
    }

    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, i: usize) -> &[usize] {
        &self.assignments[i]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }
}

/// Integer apportionment of `total` by real-valued `weights`: floor, then hand
/// the remainder out by largest fractional part (ties to the lower index).
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Client dataset sizes `d_i ∝ i^{-σ}` summing exactly to `d`.
pub fn zipf_sizes(d: usize, n: usize, sigma: f64) -> Result<Vec<usize>> {
    if n == 0 || d < n {
        return Err(Error::param(format!("cannot split {d} samples among {n} clients")));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::param(format!("zipf exponent must be finite and >= 0, got {sigma}")));
    }
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-sigma)).collect();
    let mut counts = largest_remainder(d, &weights);
    // Keep every client non-empty. Taking from the last of the largest
    // clients keeps the sizes non-increasing.
    for i in 0..n {
        if counts[i] == 0 {
            let max = counts[0];
            let donor = counts.iter().rposition(|c| *c == max).expect("non-empty");
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    Ok(counts)
}

/// One Dirichlet(α, …, α) draw per client.
///
/// Gamma variates are drawn in log space as `ln G(α+1) + ln(U)/α`, which is
/// exact for any `α > 0` and does not underflow for tiny concentrations.
pub fn dirichlet_class_mixtures(n: usize, num_classes: usize, alpha: f64, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param(format!("dirichlet concentration must be finite and > 0, got {alpha}")));
    }
    if num_classes == 0 {
        return Err(Error::param("need at least one class"));
    }
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::param(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let logs: Vec<f64> = (0..num_classes)
                .map(|_| {
                    let g: f64 = gamma.sample(rng);
                    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
                    g.ln() + u.ln() / alpha
                })
                .collect();
            let norm = log_sum_exp(&logs);
            logs.iter().map(|l| (l - norm).exp()).collect()
        })
        .collect())
}

/// Splits `ds` into `sizes.len()` disjoint shards whose class composition
/// follows `mixtures` as closely as per-class supply allows.
///
/// Demand per (client, class) is the largest-remainder rounding of
/// `mixture × size`. Each class is handed out to the clients with the largest
/// demand first; whatever a client is still short is then filled from the
/// classes it prefers most that still have samples left.
pub fn partition_with_mixtures(
    ds: &Dataset,
    sizes: &[usize],
    mixtures: &[Vec<f64>],
    rng: &mut RngStream,
) -> Result<Partition> {
    let n = sizes.len();
    let c = ds.num_classes();
    if mixtures.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: mixtures.len(),
        });
    }
    let demanded: usize = sizes.iter().sum();
    if demanded > ds.len() {
        return Err(Error::param(format!(
            "clients demand {demanded} samples but the dataset holds {}",
            ds.len()
        )));
    }

    let mut pools = ds.class_indices();
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let mut cursor = vec![0usize; c];

    let demand: Vec<Vec<usize>> = sizes
        .iter()
        .zip(mixtures)
        .map(|(&size, mix)| {
            if mix.len() != c {
                return Err(Error::Dimension {
                    expected: c,
                    actual: mix.len(),
                });
            }
            Ok(largest_remainder(size, mix))
        })
        .collect::<Result<_>>()?;

    let mut taken: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in 0..c {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| demand[b][k].cmp(&demand[a][k]).then(a.cmp(&b)));
        for i in order {
            let want = demand[i][k].min(pools[k].len() - cursor[k]);
            taken[i].extend_from_slice(&pools[k][cursor[k]..cursor[k] + want]);
            cursor[k] += want;
        }
    }

    for i in 0..n {
        let mut short = sizes[i] - taken[i].len();
        if short == 0 {
            continue;
        }
        let mut prefs: Vec<usize> = (0..c).collect();
        prefs.sort_by(|&a, &b| mixtures[i][b].total_cmp(&mixtures[i][a]).then(a.cmp(&b)));
        for k in prefs {
            let want = short.min(pools[k].len() - cursor[k]);
            taken[i].extend_from_slice(&pools[k][cursor[k]..cursor[k] + want]);
            cursor[k] += want;
            short -= want;
            if short == 0 {
                break;
            }
        }
        debug_assert_eq!(short, 0, "total supply covers total demand");
    }

    for list in &mut taken {
        list.sort_unstable();
    }
    Partition::new(taken, ds.len())
}

/// Zipf sizes over the whole dataset, Dirichlet mixtures, stratified allocation.
pub fn partition_dataset(ds: &Dataset, spec: &PartitionSpec, rng: &mut RngStream) -> Result<Partition> {
    spec.validate()?;
    let sizes = zipf_sizes(ds.len(), spec.num_clients, spec.sigma)?;
    let mixtures = dirichlet_class_mixtures(spec.num_clients, ds.num_classes(), spec.alpha, rng)?;
    partition_with_mixtures(ds, &sizes, &mixtures, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Purpose;
    use crate::numerics::DenseMatrix;
    use proptest::prelude::*;

    fn stream(k: u64) -> RngStream {
        RngStream::for_purpose(k, Purpose::Verify, 0, 0)
    }

    fn balanced(n_per_class: usize, classes: usize) -> Dataset {
        let n = n_per_class * classes;
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        Dataset::new(DenseMatrix::zeros(n, 1), labels, classes).unwrap()
    }

    #[test]
    fn zipf_examples() {
        assert_eq!(zipf_sizes(100, 4, 0.0).unwrap(), vec![25; 4]);
        assert_eq!(zipf_sizes(100, 4, 1.0).unwrap(), vec![48, 24, 16, 12]);
        assert_eq!(zipf_sizes(10, 1, 3.7).unwrap(), vec![10]);
        assert!(zipf_sizes(3, 4, 0.0).is_err());
        let s = zipf_sizes(103, 4, 0.0).unwrap();
        assert_eq!(s, vec![26, 26, 26, 25]);
    }

    proptest! {
        #[test]
        fn zipf_sums_exactly(n in 1usize..60, extra in 0usize..10_000, sigma in 0.0f64..2.0) {
            let d = (n + extra).min(10_000).max(n);
            let s = zipf_sizes(d, n, sigma).unwrap();
            prop_assert_eq!(s.iter().sum::<usize>(), d);
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.iter().all(|c| *c >= 1));
        }
    }

    #[test]
    fn zipf_flat_differs_by_at_most_one() {
        for (d, n) in [(101, 7), (999, 30), (60_000, 30), (31, 30)] {
            let s = zipf_sizes(d, n, 0.0).unwrap();
            assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn dirichlet_concentrated_is_near_uniform() {
        let mix = dirichlet_class_mixtures(100, 10, 1e6, &mut stream(1)).unwrap();
        for v in &mix {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(v.iter().all(|p| (p - 0.1).abs() < 0.02));
        }
    }

    #[test]
    fn dirichlet_sparse_is_peaked() {
        let mix = dirichlet_class_mixtures(100, 10, 0.01, &mut stream(2)).unwrap();
        let mean_max = mix.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).sum::<f64>() / 100.0;
        assert!(mean_max > 0.9, "mean largest share {mean_max}");
        for v in &mix {
            assert!(v.iter().all(|p| *p >= 0.0));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mix = dirichlet_class_mixtures(5, 1, 0.3, &mut stream(3)).unwrap();
        assert!(mix.iter().all(|v| v == &vec![1.0]));
        assert!(dirichlet_class_mixtures(2, 3, 0.0, &mut stream(3)).is_err());
        assert!(dirichlet_class_mixtures(2, 3, -1.0, &mut stream(3)).is_err());
    }

    #[test]
    fn near_iid_split_is_balanced() {
        let ds = balanced(50, 2);
        let spec = PartitionSpec {
            sigma: 0.0,
            alpha: 1e6,
            num_clients: 2,
        };
        let p = partition_dataset(&ds, &spec, &mut stream(4)).unwrap();
        for client in p.assignments() {
            let ones = client.iter().filter(|i| ds.labels()[**i] == 1).count();
            assert!((22..=28).contains(&ones), "{ones}");
            assert_eq!(client.len(), 50);
        }
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = balanced(7, 3);
        let spec = PartitionSpec {
            sigma: 0.5,
            alpha: 0.1,
            num_clients: 1,
        };
        let p = partition_dataset(&ds, &spec, &mut stream(5)).unwrap();
        assert_eq!(p.client(0), (0..21).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn zipf_sizes_carry_through() {
        let ds = balanced(25, 4);
        let spec = PartitionSpec {
            sigma: 1.0,
            alpha: 0.3,
            num_clients: 4,
        };
        let p = partition_dataset(&ds, &spec, &mut stream(6)).unwrap();
        assert_eq!(p.sizes(), vec![48, 24, 16, 12]);
    }

    #[test]
    fn partitions_are_disjoint_and_deterministic() {
        let ds = balanced(300, 10);
        for (k, alpha) in [0.05, 0.1, 0.5, 5.0].into_iter().enumerate() {
            let spec = PartitionSpec {
                sigma: 0.3,
                alpha,
                num_clients: 30,
            };
            let a = partition_dataset(&ds, &spec, &mut stream(10 + k as u64)).unwrap();
            let b = partition_dataset(&ds, &spec, &mut stream(10 + k as u64)).unwrap();
            assert_eq!(a, b);
            let mut all: Vec<usize> = a.assignments().iter().flatten().copied().collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(all.len(), total);
            assert_eq!(total, ds.len());
        }
    }

    #[test]
    fn composition_tracks_mixture_when_supply_allows() {
        let ds = balanced(100, 4);
        let mixtures = vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.25, 0.75]];
        let p = partition_with_mixtures(&ds, &[100, 100], &mixtures, &mut stream(7)).unwrap();
        let count = |c: usize, k: usize| p.client(c).iter().filter(|i| ds.labels()[**i] == k).count();
        assert_eq!((count(0, 0), count(0, 1), count(0, 2), count(0, 3)), (50, 50, 0, 0));
        assert_eq!((count(1, 0), count(1, 1), count(1, 2), count(1, 3)), (0, 0, 25, 75));
    }

    #[test]
    fn supply_exhaustion_degrades_gracefully() {
        // Both clients want class 0 only; there are 60 of them.
        let ds = balanced(60, 2);
        let mixtures = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let p = partition_with_mixtures(&ds, &[50, 40], &mixtures, &mut stream(8)).unwrap();
        assert_eq!(p.sizes(), vec![50, 40]);
        let zeros = |c: usize| p.client(c).iter().filter(|i| ds.labels()[**i] == 0).count();
        assert_eq!(zeros(0), 50);
        assert_eq!(zeros(1), 10);
        assert!(partition_with_mixtures(&ds, &[100, 40], &mixtures, &mut stream(8)).is_err());
    }
}
