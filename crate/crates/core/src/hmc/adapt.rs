//! Dual-averaging step-size adaptation.
//!
//! The shrinkage point is the initial step size itself, so a chain whose
//! acceptance rate already sits at the target keeps its step size.

#[derive(Debug, Clone, PartialEq)]
pub struct DualAveraging {
    pub mu: f64,
    pub target: f64,
    pub log_step: f64,
    pub log_step_bar: f64,
    pub h_bar: f64,
    pub count: u64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub fn new(step_size: f64, target: f64) -> Self {
        Self {
            mu: step_size.ln(),
            target,
            log_step: step_size.ln(),
            log_step_bar: step_size.ln(),
            h_bar: 0.0,
            count: 0,
        }
    }

    /// Feed one acceptance probability; returns the next step size.
    pub fn update(&mut self, accept_prob: f64) -> f64 {
        let a = if accept_prob.is_finite() { accept_prob.clamp(0.0, 1.0) } else { 0.0 };
        self.count += 1;
        let t = self.count as f64;
        let w = 1.0 / (t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - a);
        self.log_step = self.mu - t.sqrt() / GAMMA * self.h_bar;
        let eta = t.powf(-KAPPA);
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar;
        self.log_step.exp()
    }

    /// Step size to freeze at the end of warmup.
    pub fn final_step(&self) -> f64 {
        self.log_step_bar.exp()
    }
}

/// Fold the acceptance history of a warmup phase into a step size.
pub fn adapt_step_size(initial: f64, target: f64, history: &[f64]) -> f64 {
    let mut da = DualAveraging::new(initial, target);
    for &a in history {
        da.update(a);
    }
    da.final_step()
}
