//! Loss functions of the cycle and their gradients.

use super::config::{AdversarialForm, TrainingConfig};
use super::EngineError;
use crate::nn::Tensor;

/// The adversarial objective `E[log D(y)] + E[log(1 - D(G(x)))]` averaged over
/// every patch position and batch item. The discriminator maximises it and
/// the generator minimises it. Scores must lie strictly inside (0, 1).
pub fn adversarial_objective(d_real: &[f64], d_fake: &[f64]) -> Result<f64, EngineError> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(EngineError::DomainError("empty score map".into()));
    }
    if let Some(bad) = d_real.iter().chain(d_fake).find(|&&s| !(s > 0.0 && s < 1.0)) {
        return Err(EngineError::DomainError(format!("score {bad} is outside (0, 1)")));
    }
    let real = d_real.iter().map(|s| s.ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|s| (1.0 - s).ln()).sum::<f64>() / d_fake.len() as f64;
    Ok(real + fake)
}

/// Least-squares discriminator loss `½[(D(y) − 1)² + D(G(x))²]` with means over patches.
pub fn least_squares_discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let real = d_real.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake.iter().map(|s| s * s).sum::<f64>() / d_fake.len() as f64;
    0.5 * (real + fake)
}

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> Result<f64, EngineError> {
    if a.shape() != b.shape() {
        return Err(EngineError::ShapeMismatch(format!("{} vs {}", a.shape(), b.shape())));
    }
    let n = a.data().len().max(1) as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum::<f64>()
        / n)
}

/// Mean absolute difference between an image batch and its round trip.
pub fn cycle_consistency_loss(original: &Tensor, reconstructed: &Tensor) -> Result<f64, EngineError> {
    mean_abs_diff(original, reconstructed)
}

/// Mean absolute difference between target-domain images and the generator's
/// output on them.
pub fn identity_loss(target: &Tensor, generated: &Tensor) -> Result<f64, EngineError> {
    mean_abs_diff(target, generated)
}

/// The four loss terms of one generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorLosses {
    pub adv: f64,
    pub cycle_fwd: f64,
    pub cycle_bwd: f64,
    pub identity: f64,
    pub total: f64,
}

impl GeneratorLosses {
    pub fn new(adv: f64, cycle_fwd: f64, cycle_bwd: f64, identity: f64, cfg: &TrainingConfig) -> Result<Self, EngineError> {
        let total = composite_generator_loss(adv, cycle_fwd, cycle_bwd, identity, cfg)?;
        Ok(Self { adv, cycle_fwd, cycle_bwd, identity, total })
    }
}

/// `adv + λ_cycle·(cycle_fwd + cycle_bwd) + λ_identity·identity`.
pub fn composite_generator_loss(
    adv: f64,
    cycle_fwd: f64,
    cycle_bwd: f64,
    identity: f64,
    cfg: &TrainingConfig,
) -> Result<f64, EngineError> {
    if ![adv, cycle_fwd, cycle_bwd, identity].iter().all(|v| v.is_finite()) {
        return Err(EngineError::NonFiniteLoss { step: None, what: "generator loss component".into() });
    }
    Ok(adv + cfg.lambda_cycle * (cycle_fwd + cycle_bwd) + cfg.lambda_identity * identity)
}

/// Gradient of `weight · mean|pred − target|` with respect to `pred`.
pub(crate) fn l1_grad(pred: &Tensor, target: &Tensor, weight: f64) -> Tensor {
    let scale = (weight / pred.data().len() as f64) as f32;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            }
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable `-[t·log σ(s) + (1−t)·log(1−σ(s))]`.
fn bce_with_logits(s: f64, t: f64) -> f64 {
    s.max(0.0) - s * t + (-s.abs()).exp().ln_1p()
}

/// Mean discriminator loss of raw patch scores against per-element targets,
/// and its gradient with respect to the scores.
pub(crate) fn score_loss(form: AdversarialForm, scores: &Tensor, targets: &[f32]) -> (f64, Tensor) {
    assert_eq!(scores.data().len(), targets.len());
    let n = targets.len() as f64;
    let mut grad = Vec::with_capacity(targets.len());
    let mut total = 0.0;
    for (&s, &t) in scores.data().iter().zip(targets) {
        let (s, t) = (s as f64, t as f64);
        match form {
            AdversarialForm::LeastSquares => {
                total += (s - t).powi(2);
                grad.push((2.0 * (s - t) / n) as f32);
            }
            AdversarialForm::LogLikelihood => {
                total += bce_with_logits(s, t);
                grad.push(((sigmoid(s) - t) / n) as f32);
            }
        }
    }
    (total / n, Tensor::from_vec(scores.shape(), grad))
}

/// Scores as probabilities, for reporting the log-likelihood objective.
pub fn patch_probabilities(scores: &Tensor) -> Vec<f64> {
    scores.data().iter().map(|&s| sigmoid(s as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn objective_reaches_zero_for_a_perfect_discriminator() {
        let eps = 1e-12;
        let v = adversarial_objective(&[1.0 - eps; 16], &[eps; 16]).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn objective_at_chance_is_two_log_half() {
        let v = adversarial_objective(&[0.5; 9], &[0.5; 4]).unwrap();
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((v - (-1.3863)).abs() < 1e-4);
    }

    #[test]
    fn objective_ignores_patch_order() {
        let real = [0.9, 0.2, 0.7, 0.55];
        let fake = [0.1, 0.3, 0.8];
        let mut r2 = real;
        r2.reverse();
        let f2 = [0.8, 0.1, 0.3];
        assert_eq!(adversarial_objective(&real, &fake).unwrap(), adversarial_objective(&r2, &f2).unwrap());
    }

    #[test]
    fn objective_rejects_scores_on_the_boundary() {
        assert!(matches!(adversarial_objective(&[1.0], &[0.5]), Err(EngineError::DomainError(_))));
        assert!(matches!(adversarial_objective(&[0.5], &[0.0]), Err(EngineError::DomainError(_))));
        assert!(adversarial_objective(&[0.5], &[f64::NAN]).is_err());
    }

    #[test]
    fn objective_grid_maximum_is_at_real_one_fake_zero() {
        let grid: Vec<f64> = (0..21).map(|i| (i as f64 / 20.0).clamp(1e-6, 1.0 - 1e-6)).collect();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for &r in &grid {
            for &f in &grid {
                let v = adversarial_objective(&[r; 4], &[f; 4]).unwrap();
                if v > best.0 {
                    best = (v, r, f);
                }
            }
        }
        assert_eq!((best.1, best.2), (1.0 - 1e-6, 1e-6));
    }

    #[test]
    fn least_squares_loss_vanishes_only_at_one_zero() {
        assert_eq!(least_squares_discriminator_loss(&[1.0; 3], &[0.0; 3]), 0.0);
        assert!(least_squares_discriminator_loss(&[0.9; 3], &[0.0; 3]) > 0.0);
        assert!((least_squares_discriminator_loss(&[0.5], &[0.5]) - 0.25).abs() < 1e-15);
    }

    fn t(shape: Shape, v: Vec<f32>) -> Tensor {
        Tensor::from_vec(shape, v)
    }

    #[test]
    fn l1_losses_on_simple_inputs() {
        let s = Shape::new(1, 3, 2, 2);
        let x = Tensor::full(s, 0.25);
        assert_eq!(cycle_consistency_loss(&x, &x).unwrap(), 0.0);
        assert!((cycle_consistency_loss(&x, &x.map(|v| v + 0.5)).unwrap() - 0.5).abs() < 1e-7);
        assert!((identity_loss(&x, &x.map(|v| -v)).unwrap() - 0.5).abs() < 1e-7);
        assert!(matches!(
            cycle_consistency_loss(&x, &Tensor::zeros(Shape::new(1, 3, 2, 3))),
            Err(EngineError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn l1_losses_match_a_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let s = Shape::new(2, 3, 4, 4);
            let a = t(s, (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let b = t(s, (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let mut acc = 0.0f64;
            for i in 0..s.len() {
                acc += (a.data()[i] as f64 - b.data()[i] as f64).abs();
            }
            let oracle = acc / s.len() as f64;
            assert!((cycle_consistency_loss(&a, &b).unwrap() - oracle).abs() < 1e-6);
            assert!((identity_loss(&a, &b).unwrap() - oracle).abs() < 1e-6);
        }
    }

    #[test]
    fn composite_weighting() {
        let cfg = TrainingConfig::default();
        assert_eq!(composite_generator_loss(0.0, 0.0, 0.0, 0.0, &cfg).unwrap(), 0.0);
        let v = composite_generator_loss(0.3, 0.1, 0.1, 0.05, &cfg).unwrap();
        assert!((v - 2.55).abs() < 1e-12, "{v}");
        assert!(composite_generator_loss(f64::NAN, 0.0, 0.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn score_loss_gradients_match_finite_differences() {
        let s = Shape::new(1, 1, 2, 3);
        let scores = t(s, vec![0.3, -1.2, 2.0, 0.0, 0.9, -0.4]);
        let targets = [0.9, 0.0, 0.85, 0.05, 1.0, 0.0];
        for form in [AdversarialForm::LeastSquares, AdversarialForm::LogLikelihood] {
            let (_, g) = score_loss(form, &scores, &targets);
            for i in 0..6 {
                let mut up = scores.clone();
                up.data_mut()[i] += 1e-3;
                let mut down = scores.clone();
                down.data_mut()[i] -= 1e-3;
                let fd = (score_loss(form, &up, &targets).0 - score_loss(form, &down, &targets).0) / 2e-3;
                assert!((fd - g.data()[i] as f64).abs() < 1e-4, "{form:?}[{i}]: {fd} vs {}", g.data()[i]);
            }
        }
    }

    #[test]
    fn bce_matches_the_direct_formula() {
        for (s, tgt) in [(0.3f64, 0.9f64), (-2.0, 0.0), (4.0, 1.0)] {
            let p = sigmoid(s);
            let direct = -(tgt * p.ln() + (1.0 - tgt) * (1.0 - p).ln());
            assert!((bce_with_logits(s, tgt) - direct).abs() < 1e-12);
        }
    }
}
