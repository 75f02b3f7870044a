use serde::{Deserialize, Serialize};

/// Running mean and variance merged batch by batch (parallel-variance update).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
            clip: 10.0,
        }
    }

    pub fn update(&mut self, batch: &[&[f64]]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        for d in 0..self.mean.len() {
            let mean = batch.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = batch.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            let delta = mean - self.mean[d];
            let total = self.count + n;
            let m2 = self.var[d] * self.count + var * n + delta * delta * self.count * n / total;
            self.mean[d] += delta * n / total;
            self.var[d] = m2 / total;
        }
        self.count += n;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s))| ((v - m) / (s + 1e-8).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }
}

/// Scales rewards by the running standard deviation of the discounted return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnScaler {
    pub stats: RunningMeanStd,
    pub gamma: f64,
    running: f64,
}

impl ReturnScaler {
    pub fn new(gamma: f64) -> Self {
        Self {
            stats: RunningMeanStd::new(1),
            gamma,
            running: 0.0,
        }
    }

    /// Feed one reward; the running return resets after `done`.
    pub fn scale(&mut self, reward: f64, done: bool) -> f64 {
        self.running = self.running * self.gamma + reward;
        self.stats.update(&[&[self.running]]);
        if done {
            self.running = 0.0;
        }
        (reward / (self.stats.var[0] + 1e-8).sqrt()).clamp(-self.stats.clip, self.stats.clip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_stats_match_batch_stats() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i as f64).sin()]).collect();
        let mut rms = RunningMeanStd::new(2);
        for chunk in data.chunks(7) {
            let rows: Vec<&[f64]> = chunk.iter().map(|r| r.as_slice()).collect();
            rms.update(&rows);
        }
        let mean0 = 24.5;
        let var0 = data.iter().map(|r| (r[0] - mean0).powi(2)).sum::<f64>() / 50.0;
        assert!((rms.mean[0] - mean0).abs() < 1e-3);
        assert!((rms.var[0] - var0).abs() / var0 < 1e-3);
    }

    #[test]
    fn normalized_values_are_clipped() {
        let rms = RunningMeanStd::new(1);
        assert_eq!(rms.normalize(&[1e6]), vec![10.0]);
    }
}
