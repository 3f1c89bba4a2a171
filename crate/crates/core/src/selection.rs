//! Choosing which spectral coefficients become trainable.
//!
//! [`build_selection_plan`] splits the budget across the low/mid/high bands in
//! proportion to band size (largest-remainder rounding), then fills each band
//! with its `⌊n_band·δ⌋` most energetic coefficients followed by uniformly
//! random picks from what is left of the band. [`build_random_plan`] ignores
//! bands and energy altogether.
//!
//! All randomness comes from a `ChaCha8Rng` seeded with the plan seed, so a
//! plan is reproducible on any platform.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{band_of, partition, Band};
use crate::scalar::Scalar;
use crate::spectral::SpectralMatrix;

/// Band name used by plans that ignore banding.
pub const FULL_GRID: &str = "full";

/// Default fraction of each band's budget picked by energy.
pub const DEFAULT_DELTA: f64 = 0.7;

/// Picks made inside one band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSelection {
    pub name: String,
    pub indices_energy: Vec<(usize, usize)>,
    pub indices_random: Vec<(usize, usize)>,
}

impl BandSelection {
    pub fn len(&self) -> usize {
        self.indices_energy.len() + self.indices_random.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered set of trainable spectral indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub rows: usize,
    pub cols: usize,
    pub n_total: usize,
    pub delta: f64,
    pub seed: u64,
    pub bands: Vec<BandSelection>,
}

impl SelectionPlan {
    /// Every selected index: bands in order, energy picks before random picks.
    /// Adapter coefficients are stored in this order.
    pub fn indices(&self) -> Vec<(usize, usize)> {
        self.bands
            .iter()
            .flat_map(|b| b.indices_energy.iter().chain(&b.indices_random).copied())
            .collect()
    }

    pub fn band(&self, name: &str) -> Option<&BandSelection> {
        self.bands.iter().find(|b| b.name == name)
    }

    pub fn energy_pick_count(&self) -> usize {
        self.bands.iter().map(|b| b.indices_energy.len()).sum()
    }

    /// Checks every plan invariant: counts, the `⌊δ·n_band⌋` split, bounds,
    /// band membership and uniqueness.
    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.delta) {
            return invalid(format!("delta {} outside [0, 1]", self.delta));
        }
        let total: usize = self.bands.iter().map(BandSelection::len).sum();
        if total != self.n_total {
            return invalid(format!("plan holds {total} indices but n_total is {}", self.n_total));
        }
        let mut seen = HashSet::with_capacity(total);
        for band in &self.bands {
            let expected = energy_pick_count(band.len(), self.delta);
            if band.indices_energy.len() != expected {
                return invalid(format!(
                    "band {} has {} energy picks, expected {expected}",
                    band.name,
                    band.indices_energy.len()
                ));
            }
            let membership = Band::ALL.into_iter().find(|b| b.name() == band.name);
            if membership.is_none() && band.name != FULL_GRID {
                return invalid(format!("unknown band name {:?}", band.name));
            }
            for &(u, v) in band.indices_energy.iter().chain(&band.indices_random) {
                if u >= self.rows || v >= self.cols {
                    return Err(Error::IndexOutOfBounds {
                        u,
                        v,
                        rows: self.rows,
                        cols: self.cols,
                    });
                }
                if let Some(b) = membership {
                    if band_of(u, v, self.rows, self.cols) != b {
                        return invalid(format!("index ({u}, {v}) is not in band {}", band.name));
                    }
                }
                if !seen.insert((u, v)) {
                    return Err(Error::DuplicateIndex { u, v });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }
}

/// `⌊n_band·δ⌋`. A 1e-9 slack absorbs representation error in decimal δ
/// values, so `10 × 0.7` counts as 7 and `100 × 0.29` as 29.
pub fn energy_pick_count(n_band: usize, delta: f64) -> usize {
    ((n_band as f64) * delta + 1e-9).floor() as usize
}

/// Splits `n_total` across bands proportionally to `sizes` using
/// largest-remainder rounding; equal remainders favor earlier bands.
pub fn allocate(sizes: &[usize], n_total: usize) -> Result<Vec<usize>> {
    let capacity: usize = sizes.iter().sum();
    if n_total > capacity {
        return Err(Error::BudgetTooLarge {
            requested: n_total,
            available: capacity,
        });
    }
    if capacity == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    let quota = |s: usize| (n_total as u128) * (s as u128);
    let mut counts: Vec<usize> = sizes.iter().map(|&s| (quota(s) / capacity as u128) as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Stable sort keeps band order among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quota(sizes[a]) % capacity as u128;
        let rb = quota(sizes[b]) % capacity as u128;
        rb.cmp(&ra)
    });
    let mut left = n_total - counts.iter().sum::<usize>();
    for &band in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if counts[band] < sizes[band] {
            counts[band] += 1;
            left -= 1;
        }
    }
    // Overflow goes to the next band with room.
    for band in 0..sizes.len() {
        let over = counts[band].saturating_sub(sizes[band]);
        if over > 0 {
            counts[band] = sizes[band];
            left += over;
        }
    }
    for band in 0..sizes.len() {
        let room = sizes[band] - counts[band];
        let take = room.min(left);
        counts[band] += take;
        left -= take;
    }
    debug_assert_eq!(left, 0);
    Ok(counts)
}

/// The `k` band indices with the largest energy `F[u,v]²`, highest first.
/// Equal energies keep row-major order.
pub fn rank_by_energy<T: Scalar>(
    spectrum: &SpectralMatrix<T>,
    band: &[(usize, usize)],
    k: usize,
) -> Result<Vec<(usize, usize)>> {
    if k > band.len() {
        return Err(Error::BudgetTooLarge {
            requested: k,
            available: band.len(),
        });
    }
    for &(u, v) in band {
        if u >= spectrum.rows() || v >= spectrum.cols() {
            return Err(Error::IndexOutOfBounds {
                u,
                v,
                rows: spectrum.rows(),
                cols: spectrum.cols(),
            });
        }
    }
    let mut ranked = band.to_vec();
    ranked.sort_by(|&a, &b| {
        let (ea, eb) = (spectrum.energy(a.0, a.1), spectrum.energy(b.0, b.1));
        eb.partial_cmp(&ea).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Band-stratified hybrid selection over the spectrum of a frozen weight.
pub fn build_selection_plan<T: Scalar>(
    spectrum: &SpectralMatrix<T>,
    n_total: usize,
    delta: f64,
    seed: u64,
) -> Result<SelectionPlan> {
    let (rows, cols) = (spectrum.rows(), spectrum.cols());
    check_budget(rows, cols, n_total)?;
    if !(0.0..=1.0).contains(&delta) || delta.is_nan() {
        return Err(Error::InvalidConfig(format!("delta {delta} outside [0, 1]")));
    }
    spectrum.coeffs.check_finite()?;

    let parts = partition(rows, cols);
    let counts = allocate(&parts.sizes(), n_total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bands = Vec::with_capacity(3);
    for (band, &n_band) in Band::ALL.iter().zip(&counts) {
        let members = parts.band(*band);
        let n_energy = energy_pick_count(n_band, delta);
        let energy = rank_by_energy(spectrum, members, n_energy)?;
        let taken: HashSet<_> = energy.iter().copied().collect();
        let rest: Vec<_> = members.iter().copied().filter(|i| !taken.contains(i)).collect();
        let random = index::sample(&mut rng, rest.len(), n_band - n_energy)
            .into_iter()
            .map(|p| rest[p])
            .collect();
        bands.push(BandSelection {
            name: band.name().to_string(),
            indices_energy: energy,
            indices_random: random,
        });
    }
    let plan = SelectionPlan {
        rows,
        cols,
        n_total,
        delta,
        seed,
        bands,
    };
    debug_assert!(plan.validate().is_ok());
    Ok(plan)
}

/// Uniform selection without replacement over the whole grid.
pub fn build_random_plan(rows: usize, cols: usize, n_total: usize, seed: u64) -> Result<SelectionPlan> {
    check_budget(rows, cols, n_total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, rows * cols, n_total)
        .into_iter()
        .map(|p| (p / cols, p % cols))
        .collect();
    Ok(SelectionPlan {
        rows,
        cols,
        n_total,
        delta: 0.0,
        seed,
        bands: vec![BandSelection {
            name: FULL_GRID.to_string(),
            indices_energy: Vec::new(),
            indices_random: picks,
        }],
    })
}

fn check_budget(rows: usize, cols: usize, n_total: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    if n_total == 0 {
        return Err(Error::InvalidConfig("coefficient budget must be at least 1".into()));
    }
    if n_total > rows * cols {
        return Err(Error::BudgetTooLarge {
            requested: n_total,
            available: rows * cols,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::spectral::dct2;
    use proptest::prelude::*;

    fn spectrum(rows: usize, cols: usize, seed: u64) -> SpectralMatrix<f64> {
        let w = Matrix::random_normal(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        dct2(&w).unwrap()
    }

    // Independent largest-remainder allocation: hand out seats one at a time
    // to the band with the largest exact remainder, comparing fractions by
    // cross-multiplication.
    fn allocate_oracle(sizes: &[usize], n: usize) -> Vec<usize> {
        let total: usize = sizes.iter().sum();
        let mut out: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
        let mut rem: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, &s)| (n * s % total, i)).collect();
        let mut left = n - out.iter().sum::<usize>();
        while left > 0 {
            let best = rem
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
                .map(|(k, _)| k)
                .unwrap();
            out[rem[best].1] += 1;
            rem[best].0 = 0;
            rem.remove(best);
            left -= 1;
        }
        out
    }

    #[test]
    fn rank_examples() {
        let f = SpectralMatrix::dct(Matrix::from_rows(&[vec![3.0, -2.0], vec![1.0, 0.0]]).unwrap());
        let grid = [(0, 0), (0, 1), (1, 0), (1, 1)];
        assert!(rank_by_energy(&f, &grid, 0).unwrap().is_empty());
        assert_eq!(rank_by_energy(&f, &grid, 2).unwrap(), vec![(0, 0), (0, 1)]);
        assert!(matches!(rank_by_energy(&f, &grid, 5), Err(Error::BudgetTooLarge { .. })));

        let flat = SpectralMatrix::dct(Matrix::filled(3, 3, 2.0));
        let band = [(2, 2), (0, 1), (1, 0), (0, 2)];
        // Ties resolve in row-major order regardless of band order.
        assert_eq!(rank_by_energy(&flat, &band, 2).unwrap(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn full_delta_is_pure_ranking() {
        // 2x2 grid: every index is low, so the plan is the top-k by energy.
        let f = SpectralMatrix::dct(Matrix::from_rows(&[vec![3.0, -2.0], vec![1.0, 0.5]]).unwrap());
        let plan = build_selection_plan(&f, 3, 1.0, 99).unwrap();
        assert_eq!(plan.indices(), vec![(0, 0), (0, 1), (1, 0)]);
        assert!(plan.bands.iter().all(|b| b.indices_random.is_empty()));
    }

    #[test]
    fn zero_delta_is_seeded_random() {
        let f = spectrum(16, 16, 4);
        let a = build_selection_plan(&f, 20, 0.0, 1).unwrap();
        let b = build_selection_plan(&f, 20, 0.0, 2).unwrap();
        let a2 = build_selection_plan(&f, 20, 0.0, 1).unwrap();
        assert_eq!(a.energy_pick_count(), 0);
        assert_ne!(a.indices(), b.indices());
        assert_eq!(a.to_json().unwrap(), a2.to_json().unwrap());
    }

    #[test]
    fn twelve_square_allocation_matches_oracle() {
        let parts = partition(12, 12);
        let sizes = parts.sizes();
        let plan = build_selection_plan(&spectrum(12, 12, 8), 10, 0.7, 3).unwrap();
        let counts: Vec<usize> = plan.bands.iter().map(BandSelection::len).collect();
        assert_eq!(counts, allocate_oracle(&sizes, 10));
        assert_eq!(counts.iter().sum::<usize>(), 10);
    }

    #[test]
    fn allocation_edge_cases() {
        assert_eq!(allocate(&[1, 0, 0], 1).unwrap(), vec![1, 0, 0]);
        assert_eq!(allocate(&[3, 3, 3], 9).unwrap(), vec![3, 3, 3]);
        // Equal remainders go to the earlier band.
        assert_eq!(allocate(&[2, 2, 2], 1).unwrap(), vec![1, 0, 0]);
        assert_eq!(allocate(&[2, 2, 2], 2).unwrap(), vec![1, 1, 0]);
        assert!(matches!(allocate(&[2, 2, 2], 7), Err(Error::BudgetTooLarge { .. })));
    }

    #[test]
    fn budget_errors() {
        let f = spectrum(4, 4, 1);
        assert!(matches!(build_selection_plan(&f, 17, 0.7, 0), Err(Error::BudgetTooLarge { .. })));
        assert!(build_selection_plan(&f, 4, 1.5, 0).is_err());
        assert!(matches!(build_random_plan(4, 4, 17, 0), Err(Error::BudgetTooLarge { .. })));
    }

    #[test]
    fn random_plan_full_coverage_and_determinism() {
        let plan = build_random_plan(5, 7, 35, 12).unwrap();
        let mut all = plan.indices();
        all.sort();
        let expected: Vec<_> = (0..5).flat_map(|u| (0..7).map(move |v| (u, v))).collect();
        assert_eq!(all, expected);
        assert_eq!(build_random_plan(5, 7, 10, 3).unwrap(), build_random_plan(5, 7, 10, 3).unwrap());
        plan.validate().unwrap();
    }

    #[test]
    fn random_plan_is_uniform() {
        let draws = 10_000;
        let mut hist = [0usize; 16];
        for seed in 0..draws {
            let (u, v) = build_random_plan(4, 4, 1, seed).unwrap().indices()[0];
            hist[u * 4 + v] += 1;
        }
        let p = 1.0 / 16.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (cell, &count) in hist.iter().enumerate() {
            assert!((count as f64 - mean).abs() <= 3.0 * sigma, "cell {cell}: {count}");
        }
    }

    #[test]
    fn json_round_trip_validates() {
        let plan = build_selection_plan(&spectrum(8, 8, 2), 12, 0.7, 5).unwrap();
        let text = plan.to_json().unwrap();
        assert!(text.find("\"rows\"").unwrap() < text.find("\"bands\"").unwrap());
        assert_eq!(SelectionPlan::from_json(&text).unwrap(), plan);

        let mut broken = plan.clone();
        let band = broken.bands.iter_mut().find(|b| !b.indices_energy.is_empty()).unwrap();
        let first = band.indices_energy[0];
        band.indices_random.push(first);
        broken.n_total += 1;
        assert!(broken.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn plans_are_valid_and_deterministic(
            rows in 1usize..=24,
            cols in 1usize..=24,
            frac in 0.0f64..=1.0,
            delta in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let n = ((rows * cols) as f64 * frac).ceil().max(1.0) as usize;
            let f = spectrum(rows, cols, seed);
            let plan = build_selection_plan(&f, n, delta, seed).unwrap();
            plan.validate().unwrap();
            let again = build_selection_plan(&f, n, delta, seed).unwrap();
            prop_assert_eq!(plan.to_json().unwrap(), again.to_json().unwrap());
        }

        #[test]
        fn more_delta_never_fewer_energy_picks(
            rows in 2usize..=16,
            cols in 2usize..=16,
            d1 in 0.0f64..=1.0,
            d2 in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let n = (rows * cols) / 2;
            let f = spectrum(rows, cols, seed);
            let a = build_selection_plan(&f, n, lo, seed).unwrap();
            let b = build_selection_plan(&f, n, hi, seed).unwrap();
            for (x, y) in a.bands.iter().zip(&b.bands) {
                prop_assert!(x.indices_energy.len() <= y.indices_energy.len());
            }
        }
    }
}
