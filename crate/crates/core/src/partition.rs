//! Distance-based low/mid/high banding of a spectrum grid.
//!
//! The reference radius is `d_max = √((M/2)² + (N/2)²)`. An index `(u, v)`
//! with `d = √(u² + v²)` is low when `d ≤ d_max/3`, mid when
//! `d_max/3 < d ≤ 2·d_max/3` and high otherwise. Because `d_max` uses half
//! the grid size, most of the grid lands in the high band.
//!
//! Membership is decided in exact integer arithmetic: `d ≤ k·d_max/3` is
//! equivalent to `36(u² + v²) ≤ k²(M² + N²)`, so boundary points such as
//! `(1, 1)` on a 6×6 grid are classified as the real-valued rule says
//! instead of by the rounding of two square roots.

use serde::{Deserialize, Serialize};

/// One of the three frequency bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Low, Band::Mid, Band::High];

    pub fn name(self) -> &'static str {
        match self {
            Band::Low => "low",
            Band::Mid => "mid",
            Band::High => "high",
        }
    }
}

/// Euclidean distance of `(u, v)` from the DC index.
pub fn distance(u: usize, v: usize) -> f64 {
    ((u as f64).powi(2) + (v as f64).powi(2)).sqrt()
}

/// `√((M/2)² + (N/2)²)` with real division.
pub fn max_distance(rows: usize, cols: usize) -> f64 {
    ((rows as f64 / 2.0).powi(2) + (cols as f64 / 2.0).powi(2)).sqrt()
}

/// Band of `(u, v)` on an `rows × cols` grid.
pub fn band_of(u: usize, v: usize, rows: usize, cols: usize) -> Band {
    let d2 = 36 * ((u as u128).pow(2) + (v as u128).pow(2));
    let r2 = (rows as u128).pow(2) + (cols as u128).pow(2);
    if d2 <= r2 {
        Band::Low
    } else if d2 <= 4 * r2 {
        Band::Mid
    } else {
        Band::High
    }
}

/// The three disjoint index sets covering an `rows × cols` grid, each in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPartition {
    pub rows: usize,
    pub cols: usize,
    pub d_max: f64,
    pub low: Vec<(usize, usize)>,
    pub mid: Vec<(usize, usize)>,
    pub high: Vec<(usize, usize)>,
}

impl FrequencyPartition {
    pub fn band(&self, band: Band) -> &[(usize, usize)] {
        match band {
            Band::Low => &self.low,
            Band::Mid => &self.mid,
            Band::High => &self.high,
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.low.len(), self.mid.len(), self.high.len()]
    }

    pub fn contains(&self, band: Band, index: (usize, usize)) -> bool {
        index.0 < self.rows && index.1 < self.cols && band_of(index.0, index.1, self.rows, self.cols) == band
    }
}

/// Partitions the `rows × cols` grid into low/mid/high bands.
pub fn partition(rows: usize, cols: usize) -> FrequencyPartition {
    let mut out = FrequencyPartition {
        rows,
        cols,
        d_max: max_distance(rows, cols),
        low: Vec::new(),
        mid: Vec::new(),
        high: Vec::new(),
    };
    for u in 0..rows {
        for v in 0..cols {
            match band_of(u, v, rows, cols) {
                Band::Low => out.low.push((u, v)),
                Band::Mid => out.mid.push((u, v)),
                Band::High => out.high.push((u, v)),
            }
        }
    }
    out
}
