//! The quantitative relaxation schedule: block thresholds, the combined
//! t-vector, their separation, and the grid level and nerve radius derived
//! from the degree bound and the condition estimate.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("degree bound must be at least 1, got {0}")]
    BadDegree(u32),
    #[error("condition estimate must be at least 1, got {0}")]
    BadKappa(f64),
    #[error("block count must be at least 1")]
    BadBlockCount,
}

/// Relaxation schedule for a run: m blocks with thresholds
/// `(eps_1, delta_1, ..., eps_m, delta_m) = (1, 2, ..., 2m) / (15 (2m+1) D^2 K^2)`,
/// the length-4m t-vector appending the negated values, the grid level and
/// the nerve radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    m: usize,
    degree: u32,
    kappa: f64,
    eps: Vec<f64>,
    delta: Vec<f64>,
    t: Vec<f64>,
    grid_level: u32,
    cech_radius: f64,
}

impl Schedule {
    /// Schedule for sphere dimension n with the default block count
    /// `m = n + 2`, enough for homology up to dimension n.
    pub fn new(n: usize, degree: u32, kappa: f64) -> Result<Self, ScheduleError> {
        Self::with_m(n + 2, degree, kappa)
    }

    /// Schedule with an explicit block count.
    pub fn with_m(m: usize, degree: u32, kappa: f64) -> Result<Self, ScheduleError> {
        if m == 0 {
            return Err(ScheduleError::BadBlockCount);
        }
        if degree == 0 {
            return Err(ScheduleError::BadDegree(degree));
        }
        if !(kappa >= 1.0) {
            return Err(ScheduleError::BadKappa(kappa));
        }
        let d = degree as f64;
        let base = 15.0 * (2 * m + 1) as f64 * d * d * kappa * kappa;
        let eps: Vec<f64> = (1..=m).map(|k| (2 * k - 1) as f64 / base).collect();
        let delta: Vec<f64> = (1..=m).map(|k| (2 * k) as f64 / base).collect();
        let mut t = Vec::with_capacity(4 * m);
        for k in 0..m {
            t.push(eps[k]);
            t.push(delta[k]);
        }
        for k in 0..m {
            t.push(-eps[k]);
            t.push(-delta[k]);
        }
        let grid_level = ceil_log2(1638.0 * (2 * m + 1) as f64 * d.powi(3) * kappa.powi(3));
        let cech_radius = 1.0 / (181.0 * (2 * m + 1) as f64 * d.powf(2.5) * kappa * kappa);
        let schedule = Self {
            m,
            degree,
            kappa,
            eps,
            delta,
            t,
            grid_level,
            cech_radius,
        };
        debug_assert!(schedule.is_valid());
        Ok(schedule)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of thresholds, e = 4m.
    pub fn e(&self) -> usize {
        4 * self.m
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// The threshold vector `(eps_1, delta_1, ..., -eps_1, -delta_1, ...)`.
    pub fn t(&self) -> &[f64] {
        &self.t
    }

    /// Threshold by 1-based index, matching the published t ordering.
    pub fn threshold(&self, j: usize) -> f64 {
        self.t[j - 1]
    }

    /// Minimum gap between distinct threshold values,
    /// `1 / (15 (2m+1) D^2 K^2)`.
    pub fn separation(&self) -> f64 {
        self.eps[0]
    }

    pub fn grid_level(&self) -> u32 {
        self.grid_level
    }

    pub fn cech_radius(&self) -> f64 {
        self.cech_radius
    }

    /// The quantitative validity condition: the largest threshold sits below
    /// `1 / (sqrt(2) kappa_bar)` for every kappa_bar consistent with the
    /// estimate, i.e. `sqrt(2) delta_m K / 0.99 < 1`.
    pub fn is_valid(&self) -> bool {
        let increasing = self
            .t
            .iter()
            .take(2 * self.m)
            .zip(self.t.iter().take(2 * self.m).skip(1))
            .all(|(a, b)| a < b);
        increasing && 2.0f64.sqrt() * self.delta[self.m - 1] * self.kappa / 0.99 < 1.0
    }
}

/// Smallest integer l with 2^l >= x, robust against rounding at powers of 2.
fn ceil_log2(x: f64) -> u32 {
    assert!(x >= 1.0 && x.is_finite());
    let mut l = x.log2().ceil() as i64;
    while l > 0 && (l - 1) >= 0 && 2f64.powi((l - 1) as i32) >= x {
        l -= 1;
    }
    while 2f64.powi(l as i32) < x {
        l += 1;
    }
    l as u32
}
