//! Synthetic sparse-regression instances with a planted support, plus the
//! support-recovery score used to grade estimates against the plant.

use crate::error::{Error, Result};
use crate::matrix::{DesignMatrix, SparseIterate};
use crate::rng::{make_rng, Rng};
use rand_distr::{Distribution, StandardNormal};

/// Coefficient magnitudes below this are treated as zero when reading a
/// support off an estimate.
pub const DEFAULT_SUPPORT_GAMMA: f64 = 1e-3;

/// A generated instance: unit-column design, planted sparse coefficients,
/// noisy targets.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    /// Planted support, ascending.
    pub true_support: Vec<usize>,
    /// Planted coefficients on that support.
    pub true_coefficients: SparseIterate,
    /// Noise-free targets `X w*`.
    pub clean_targets: Vec<f64>,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    pub snr_db: f64,
    pub seed: u64,
}

fn draw_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws an instance deterministically from `seed`.
///
/// The draw order is fixed so instances are stable across releases:
/// 1. support: `k` coordinates uniformly without replacement, then sorted;
/// 2. coefficients: `g + 0.1 * sign(g)` with `g` standard normal (`sign(0)`
///    taken as `+1`), keeping every planted weight at least `0.1` in size;
/// 3. design: `d` columns of `n` standard normals, each scaled to unit
///    Euclidean norm (storage stays row-contiguous);
/// 4. noise: variance `||X w*||^2 / n * 10^(-snr_db / 10)`, added to the
///    clean targets.
pub fn generate_problem(
    n: usize,
    d: usize,
    k: usize,
    snr_db: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "problem needs at least one row and one column, got {n} x {d}"
        )));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "planted support size {k} must lie in 1..={d}"
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr_db must be finite, got {snr_db}")));
    }
    let mut rng = make_rng(seed);

    // 1. Support: partial Fisher-Yates over 0..d, first k slots.
    let mut pool: Vec<usize> = (0..d).collect();
    for t in 0..k {
        let pick = t + crate::selectors::sample_below(&mut rng, d - t);
        pool.swap(t, pick);
    }
    let mut support: Vec<usize> = pool[..k].to_vec();
    support.sort_unstable();

    // 2. Coefficients, drawn in support order.
    let coefficients: Vec<f64> = support
        .iter()
        .map(|_| {
            let g: f64 = draw_normal(&mut rng);
            let sign = if g < 0.0 { -1.0 } else { 1.0 };
            g + 0.1 * sign
        })
        .collect();
    let planted = SparseIterate::new(d, support.clone(), coefficients.clone())?;

    // 3. Design: column-wise draws, unit-normalized, row-major storage.
    let mut entries = vec![0.0f64; n * d];
    for j in 0..d {
        let mut column = vec![0.0f64; n];
        let mut sq = 0.0;
        for value in column.iter_mut() {
            let g = draw_normal(&mut rng);
            *value = g;
            sq += g * g;
        }
        let norm = sq.sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for i in 0..n {
            entries[i * d + j] = column[i] * scale;
        }
    }
    let x = DesignMatrix::from_rows(n, d, entries)?;

    // 4. Targets and noise scaled to the requested signal-to-noise ratio.
    let clean: Vec<f64> = (0..n)
        .map(|i| {
            let row = x.row(i);
            support
                .iter()
                .zip(coefficients.iter())
                .map(|(&j, &w)| row[j] * w)
                .sum()
        })
        .collect();
    let signal_power: f64 = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise_sigma = (signal_power * 10f64.powf(-snr_db / 10.0)).sqrt();
    let y: Vec<f64> = clean
        .iter()
        .map(|&c| c + noise_sigma * draw_normal(&mut rng))
        .collect();

    Ok(ProblemInstance {
        x,
        y,
        true_support: support,
        true_coefficients: planted,
        clean_targets: clean,
        noise_sigma,
        snr_db,
        seed,
    })
}

impl ProblemInstance {
    /// Order-sensitive 64-bit digest of the instance data (dimensions,
    /// design entries, targets), for pairing result rows with the exact
    /// instance that produced them.
    pub fn hash64(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a offset basis
        let mut feed = |v: u64| {
            for byte in v.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.x.n_rows() as u64);
        feed(self.x.n_cols() as u64);
        for i in 0..self.x.n_rows() {
            for &v in self.x.row(i) {
                feed(v.to_bits());
            }
        }
        for &v in &self.y {
            feed(v.to_bits());
        }
        h
    }
}

/// Coordinates of `w` whose magnitude exceeds `gamma`, ascending.
pub fn gamma_support(w: &SparseIterate, gamma: f64) -> Vec<usize> {
    w.support()
        .iter()
        .zip(w.coefficients().iter())
        .filter(|(_, c)| c.abs() > gamma)
        .map(|(&j, _)| j)
        .collect()
}

/// Harmonic mean of support precision and recall:
/// `2 |A ∩ B| / (|A| + |B|)`, with two empty supports scoring `1.0`.
pub fn f_measure(reference: &[usize], estimate: &[usize]) -> f64 {
    let mut a: Vec<usize> = reference.to_vec();
    let mut b: Vec<usize> = estimate.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut overlap = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                overlap += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * overlap as f64 / (a.len() + b.len()) as f64
}
