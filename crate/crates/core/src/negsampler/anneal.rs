use serde::{Deserialize, Serialize};

/// Linear hardness annealing of the truncated Gaussian's mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub mu_max: f64,
    pub mu_min: f64,
    /// First step at which `mu_min` is reached.
    pub steps_to_min: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            mu_max: 11.0,
            mu_min: 0.0,
            steps_to_min: 150,
        }
    }
}

impl AnnealSchedule {
    /// A schedule that holds `mu` at every step.
    pub fn constant(mu: f64) -> Self {
        Self {
            mu_max: mu,
            mu_min: mu,
            steps_to_min: 1,
        }
    }

    pub fn mu(&self, step: u64) -> f64 {
        anneal_mu(self, step)
    }
}

pub fn anneal_mu(sched: &AnnealSchedule, step: u64) -> f64 {
    if step >= sched.steps_to_min || sched.steps_to_min == 0 {
        return sched.mu_min;
    }
    let frac = step as f64 / sched.steps_to_min as f64;
    sched.mu_max + (sched.mu_min - sched.mu_max) * frac
}
