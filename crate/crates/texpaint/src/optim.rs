//! First-party optimizers and the L1 objective used by the refinement stages.
//!
//! Both optimizers operate on flat `f64` slices so callers can update latent
//! grids and texel grids in place regardless of their logical shape. All
//! arithmetic is deterministic: iteration order is element order and no
//! reductions depend on thread count.

/// Hyperparameters for [`AdamW`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    /// Step size.
    pub lr: f64,
    /// Exponential decay for the first moment estimate.
    pub beta1: f64,
    /// Exponential decay for the second moment estimate.
    pub beta2: f64,
    /// Denominator fuzz term.
    pub eps: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW with bias-corrected moments and decoupled weight decay.
///
/// Weight decay is applied directly to the parameters (`p -= lr * wd * p`)
/// rather than mixed into the gradient, so with `weight_decay = 0` a zero
/// gradient on a fresh optimizer leaves parameters bit-identical.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    /// Creates optimizer state for `len` parameters.
    pub fn new(cfg: AdamWConfig, len: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    /// Applies one update. `params` and `grads` must match the state length.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * params[i]);
        }
    }
}

/// One plain gradient-descent update: `p -= lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) {
    assert_eq!(params.len(), grads.len(), "gradient count mismatch");
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Mean absolute difference between `pred` and `target`.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        sum += (p - t).abs();
    }
    sum / pred.len() as f64
}

/// Subgradient of [`l1_loss`] with respect to `pred`.
///
/// Each element is `sign(pred - target) / n`; exact ties contribute zero so a
/// parameter already at its target never moves.
pub fn l1_grad(pred: &[f64], target: &[f64]) -> Vec<f64> {
    assert_eq!(pred.len(), target.len(), "length mismatch");
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

/// Computes loss and subgradient in one pass.
pub fn l1_loss_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    (l1_loss(pred, target), l1_grad(pred, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut opt = AdamW::new(AdamWConfig::default(), 3);
        let mut p = [1.0, -2.0, 0.5];
        let before = p;
        opt.step(&mut p, &[0.0, 0.0, 0.0]);
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_step_size_approaches_lr() {
        // With a constant gradient the bias-corrected ratio m_hat/sqrt(v_hat)
        // tends to 1, so each update magnitude tends to lr.
        let cfg = AdamWConfig::default();
        let mut opt = AdamW::new(cfg, 1);
        let mut p = [0.0];
        let mut prev = p[0];
        for it in 0..100 {
            opt.step(&mut p, &[1.0]);
            let delta = (p[0] - prev).abs();
            prev = p[0];
            if it >= 50 {
                assert!(
                    delta >= 0.9 * cfg.lr && delta <= 1.1 * cfg.lr,
                    "iteration {it}: step size {delta} outside [0.9,1.1]*lr"
                );
            }
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(p) = 0.5 * |p|^2, grad = p. 500 steps at lr 0.01 must shrink the
        // norm by at least 100x.
        let cfg = AdamWConfig::default();
        let mut opt = AdamW::new(cfg, 10);
        let mut p: Vec<f64> = (0..10).map(|i| 1.0 + 0.1 * i as f64).collect();
        let norm0 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..500 {
            let g = p.clone();
            opt.step(&mut p, &g);
        }
        let norm1 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(
            norm1 <= norm0 / 100.0,
            "norm only went from {norm0} to {norm1}"
        );
    }

    #[test]
    fn weight_decay_is_decoupled() {
        // With zero gradient, decay shrinks parameters geometrically and the
        // moment estimates stay zero.
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, 1);
        let mut p = [2.0];
        opt.step(&mut p, &[0.0]);
        assert!((p[0] - 2.0 * (1.0 - cfg.lr * 0.1)).abs() < 1e-12);
        assert_eq!(opt.m[0], 0.0);
        assert_eq!(opt.v[0], 0.0);
    }

    #[test]
    fn sgd_step_matches_formula() {
        let mut p = [1.0, 2.0];
        sgd_step(&mut p, &[0.5, -1.0], 0.1);
        assert_eq!(p, [0.95, 2.1]);
    }

    #[test]
    fn l1_matches_hand_computed_values() {
        let pred = [1.0, 2.0, 3.0];
        let target = [1.0, 1.0, 5.0];
        assert!((l1_loss(&pred, &target) - (0.0 + 1.0 + 2.0) / 3.0).abs() < 1e-15);
        let g = l1_grad(&pred, &target);
        assert_eq!(g, vec![0.0, 1.0 / 3.0, -1.0 / 3.0]);
    }

    #[test]
    fn l1_grad_is_zero_at_exact_ties() {
        let pred = [0.25, -1.5];
        let g = l1_grad(&pred, &pred.clone());
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn l1_grad_matches_finite_differences_away_from_ties() {
        // Central differences of the loss agree with the subgradient wherever
        // |pred - target| is far from zero relative to the probe size.
        let pred = [0.3, -0.7, 1.9, 0.01];
        let target = [0.1, 0.7, 2.5, -0.2];
        let g = l1_grad(&pred, &target);
        let h = 1e-9;
        for i in 0..pred.len() {
            let mut hi = pred;
            let mut lo = pred;
            hi[i] += h;
            lo[i] -= h;
            let fd = (l1_loss(&hi, &target) - l1_loss(&lo, &target)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-6,
                "element {i}: fd {fd} vs analytic {}",
                g[i]
            );
        }
    }

    #[test]
    fn sgd_on_l1_settles_within_one_step_of_target() {
        // 1-D L1 descent walks to the target and then oscillates inside a
        // +-lr band around it.
        let target = [0.3];
        let mut p = [0.0];
        let lr = 0.01;
        for _ in 0..200 {
            let g = l1_grad(&p, &target);
            sgd_step(&mut p, &g, lr);
        }
        assert!((p[0] - 0.3).abs() <= lr + 1e-12);
    }
}
