use nalgebra::DVector;

use crate::model::Path;
use crate::rng::{seeded, SimRng};
use crate::{lit, Error, Real, Result};

/// Time-stepping parameters shared by all chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub theta: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thin: usize,
}

impl SamplerConfig {
    pub fn new(theta: f64, dt: f64, n_steps: usize, burn_in: usize, seed: u64, thin: usize) -> Result<Self> {
        let cfg = Self { theta, dt, n_steps, burn_in, seed, thin };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta", format!("{} is outside [0.5, 1]", self.theta)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("{} is not a positive step", self.dt)));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin", "must be at least 1"));
        }
        Ok(())
    }

    /// `10 / (dt * lambda_min)` steps, the default burn-in for a chain
    /// whose slowest mode relaxes at rate `lambda_min`.
    pub fn default_burn_in(dt: f64, lambda_min: f64) -> usize {
        (10.0 / (dt * lambda_min)).ceil() as usize
    }

    /// Number of samples a full run records.
    pub fn n_recorded(&self) -> usize {
        self.n_steps.saturating_sub(self.burn_in) / self.thin
    }
}

/// Streaming per-coordinate mean, variance and lag-1 autocorrelation.
///
/// Sums are taken about the first sample to limit cancellation.
#[derive(Debug, Clone)]
pub struct RunningStats<T: Real> {
    count: usize,
    shift: DVector<T>,
    sum: DVector<T>,
    sum_sq: DVector<T>,
    sum_lag: DVector<T>,
    first: DVector<T>,
    last: DVector<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(len: usize) -> Self {
        let z = DVector::zeros(len);
        Self {
            count: 0,
            shift: z.clone(),
            sum: z.clone(),
            sum_sq: z.clone(),
            sum_lag: z.clone(),
            first: z.clone(),
            last: z,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &DVector<T>) {
        assert_eq!(x.len(), self.sum.len(), "sample length");
        if self.count == 0 {
            self.shift = x.clone();
        }
        let d = x - &self.shift;
        if self.count == 0 {
            self.first = d.clone();
        } else {
            self.sum_lag += d.component_mul(&self.last);
        }
        self.sum += &d;
        self.sum_sq += d.component_mul(&d);
        self.last = d;
        self.count += 1;
    }

    pub fn mean(&self) -> DVector<T> {
        let n: T = lit(self.count.max(1) as f64);
        &self.shift + &self.sum / n
    }

    /// Sample variance with divisor `n - 1`.
    pub fn variance(&self) -> DVector<T> {
        if self.count < 2 {
            return DVector::zeros(self.sum.len());
        }
        let n: T = lit(self.count as f64);
        (&self.sum_sq - self.sum.component_mul(&self.sum) / n) / (n - T::one())
    }

    /// `sum_t (x_t - xbar)(x_{t-1} - xbar) / sum_t (x_t - xbar)^2`, zero
    /// where the coordinate is constant.
    pub fn lag1(&self) -> DVector<T> {
        let len = self.sum.len();
        if self.count < 2 {
            return DVector::zeros(len);
        }
        let n: T = lit(self.count as f64);
        let two: T = lit(2.0);
        DVector::from_fn(len, |i, _| {
            let m = self.sum[i] / n;
            let ss = self.sum_sq[i] - n * m * m;
            let cross = self.sum_lag[i] - m * (two * self.sum[i] - self.first[i] - self.last[i]) + (n - T::one()) * m * m;
            if ss > T::zero() {
                cross / ss
            } else {
                T::zero()
            }
        })
    }
}

/// One chain: current path, step counter, generator and statistics of the
/// recorded (post-burn-in, thinned) samples.
#[derive(Debug, Clone)]
pub struct ChainState<T: Real> {
    pub current: Path<T>,
    pub step_index: usize,
    pub rng: SimRng,
    pub stats: RunningStats<T>,
    pub proposed: usize,
    pub accepted: usize,
}

impl<T: Real> ChainState<T> {
    pub fn new(start: Path<T>, seed: u64) -> Self {
        Self::with_rng(start, seeded(seed))
    }

    pub fn with_rng(start: Path<T>, rng: SimRng) -> Self {
        let len = start.as_vector().len();
        Self {
            current: start,
            step_index: 0,
            rng,
            stats: RunningStats::new(len),
            proposed: 0,
            accepted: 0,
        }
    }

    /// Counts a completed step; returns whether the new state is recorded.
    pub fn finish_step(&mut self, cfg: &SamplerConfig) -> bool {
        self.step_index += 1;
        let recorded = self.step_index > cfg.burn_in && (self.step_index - cfg.burn_in).is_multiple_of(cfg.thin);
        if recorded {
            self.stats.push(self.current.as_vector());
        }
        recorded
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Runs `cfg.n_steps - state.step_index` steps, handing each recorded
/// sample to `emit`.
pub fn run_chain<T, F, E>(state: &mut ChainState<T>, cfg: &SamplerConfig, mut step: F, mut emit: E) -> Result<()>
where
    T: Real,
    F: FnMut(&mut ChainState<T>) -> Result<()>,
    E: FnMut(&Path<T>),
{
    cfg.validate()?;
    while state.step_index < cfg.n_steps {
        step(state)?;
        if state.finish_step(cfg) {
            emit(&state.current);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Grid;

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::new(0.4, 0.1, 10, 0, 0, 1).is_err());
        assert!(SamplerConfig::new(0.5, 0.0, 10, 0, 0, 1).is_err());
        assert!(SamplerConfig::new(1.0, 0.1, 10, 0, 0, 0).is_err());
        let c = SamplerConfig::new(1.0, 0.1, 10, 4, 0, 2).unwrap();
        assert_eq!(c.n_recorded(), 3);
        assert_eq!(SamplerConfig::default_burn_in(0.1, 10.0), 10);
    }

    #[test]
    fn running_stats_match_direct_formulas() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let mut s = RunningStats::<f64>::new(1);
        for &x in &xs {
            s.push(&DVector::from_element(1, x));
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let num: f64 = xs.windows(2).map(|w| (w[1] - m) * (w[0] - m)).sum();
        let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
        assert!((s.mean()[0] - m).abs() < 1e-12);
        assert!((s.variance()[0] - var).abs() < 1e-12);
        assert!((s.lag1()[0] - num / den).abs() < 1e-12);
    }

    #[test]
    fn recorded_count_follows_burn_in_and_thin() {
        let cfg = SamplerConfig::new(1.0, 0.1, 20, 5, 0, 3).unwrap();
        let grid = Grid::new(3).unwrap();
        let mut st = ChainState::new(Path::<f64>::zeros(grid, 1), 0);
        let mut emitted = 0;
        run_chain(&mut st, &cfg, |_| Ok(()), |_| emitted += 1).unwrap();
        assert_eq!(emitted, cfg.n_recorded());
        assert_eq!(st.stats.count(), emitted);
    }
}
