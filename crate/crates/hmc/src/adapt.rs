//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

/// Constants of the dual-averaging step-size scheme.
#[derive(Debug, Clone, Copy)]
pub struct DualAverageSettings {
    pub target_accept: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl Default for DualAverageSettings {
    fn default() -> Self {
        Self {
            target_accept: 0.8,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualAverage {
    settings: DualAverageSettings,
    mu: f64,
    log_step: f64,
    log_step_bar: f64,
    h_bar: f64,
    count: u64,
}

impl DualAverage {
    pub fn new(settings: DualAverageSettings, initial_step: f64) -> Self {
        let mut da = Self {
            settings,
            mu: 0.0,
            log_step: 0.0,
            log_step_bar: 0.0,
            h_bar: 0.0,
            count: 0,
        };
        da.restart(initial_step);
        da
    }

    /// Resets the running averages, anchoring the shrinkage point at `10 * step`.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.log_step = step.ln();
        self.log_step_bar = 0.0;
        self.h_bar = 0.0;
        self.count = 0;
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.count += 1;
        let t = self.count as f64;
        let s = &self.settings;
        let w = 1.0 / (t + s.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (s.target_accept - accept_stat);
        self.log_step = self.mu - t.sqrt() / s.gamma * self.h_bar;
        let eta = t.powf(-s.kappa);
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar;
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    /// The averaged step size used once adaptation ends.
    pub fn adapted(&self) -> f64 {
        if self.count == 0 {
            self.current()
        } else {
            self.log_step_bar.exp()
        }
    }
}

/// Running (Welford) variance per coordinate.
#[derive(Debug, Clone)]
pub struct VarianceEstimator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variance shrunk towards `1e-3`, as an inverse mass matrix.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }
}

/// Iteration layout of warmup: an initial fast buffer, doubling slow windows
/// that feed the metric estimate, and a terminal fast buffer.
#[derive(Debug, Clone)]
pub struct WarmupSchedule {
    /// Exclusive end of each metric window.
    window_ends: Vec<usize>,
    window_starts: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return Self {
                window_ends: Vec::new(),
                window_starts: Vec::new(),
            };
        }
        let (init, term, base) = if 75 + 50 + 25 > warmup {
            (
                (0.15 * warmup as f64) as usize,
                (0.1 * warmup as f64) as usize,
                warmup - (0.15 * warmup as f64) as usize - (0.1 * warmup as f64) as usize,
            )
        } else {
            (75, 50, 25)
        };
        let slow_end = warmup - term;
        let mut starts = Vec::new();
        let mut ends = Vec::new();
        let mut start = init;
        let mut size = base;
        while start < slow_end {
            let mut end = start + size;
            // Fold a short remainder into the current window.
            if end + 2 * size > slow_end {
                end = slow_end;
            }
            starts.push(start);
            ends.push(end);
            start = end;
            size *= 2;
        }
        Self {
            window_ends: ends,
            window_starts: starts,
        }
    }

    /// True when iteration `iter` (0-based) belongs to a metric window.
    pub fn collects(&self, iter: usize) -> bool {
        self.window_starts
            .iter()
            .zip(&self.window_ends)
            .any(|(&s, &e)| iter >= s && iter < e)
    }

    /// True when the metric should be updated after iteration `iter`.
    pub fn window_closes(&self, iter: usize) -> bool {
        self.window_ends.iter().any(|&e| e == iter + 1)
    }

    pub fn windows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.window_starts.iter().copied().zip(self.window_ends.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_windows_double_and_cover_slow_phase() {
        let s = WarmupSchedule::new(1000);
        let w: Vec<_> = s.windows().collect();
        assert_eq!(w.first().unwrap().0, 75);
        assert_eq!(w.last().unwrap().1, 950);
        for pair in w.windows(2) {
            assert_eq!(pair[0].1, pair[1].0);
        }
        // the final window is the largest: it spans the second half of warmup
        let last = w.last().unwrap();
        assert!(last.1 - last.0 >= 400);
    }

    #[test]
    fn short_warmup_scales_buffers() {
        let s = WarmupSchedule::new(100);
        let w: Vec<_> = s.windows().collect();
        assert_eq!(w, vec![(15, 90)]);
        assert!(WarmupSchedule::new(10).windows().next().is_none());
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAverage::new(DualAverageSettings::default(), 1.0);
        // acceptance consistently too low: step must shrink
        for _ in 0..50 {
            da.update(0.2);
        }
        assert!(da.adapted() < 1.0);
        let mut da = DualAverage::new(DualAverageSettings::default(), 0.01);
        for _ in 0..50 {
            da.update(1.0);
        }
        assert!(da.adapted() > 0.01);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 0.5];
        let mut est = VarianceEstimator::new(1);
        for x in xs {
            est.add(&[x]);
        }
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        let expected = (5.0 / 10.0) * var + 1e-3 * 0.5;
        assert!((est.regularized()[0] - expected).abs() < 1e-12);
    }
}
