//! Adversarial and reconstruction losses with their logit/pixel gradients.
//!
//! Every log-sigmoid term is evaluated through `softplus`, which never
//! exponentiates a positive argument, so losses stay finite for any logit the
//! clamp admits. Using `−log σ(x) = softplus(−x)`:
//!
//!   L_D   = mean softplus(−ℓ_real) + mean softplus(ℓ_fake)
//!   L_GAN = mean softplus(−ℓ_fake)            (non-saturating)
//!   L_L1  = mean |pred − target|
//!   L_G   = λ_gan·L_GAN + λ_l1·L_L1

use super::TrainError;
use crate::nn::tensor::Tensor;

/// Logits are clamped to this magnitude before entering any exp path.
pub const LOGIT_CLAMP: f64 = 30.0;

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, safe for any finite input.
fn sigma(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(name: &str, t: &Tensor) -> Result<(), TrainError> {
    if t.data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TrainError::NonFinite(name.to_string()))
    }
}

/// Binary cross-entropy of the discriminator over one real and one fake logit
/// map: real patches pushed toward 1, fake patches toward 0, averaged over all
/// patch positions.
pub fn loss_discriminator(logits_real: &Tensor, logits_fake: &Tensor) -> Result<f64, TrainError> {
    if (logits_real.c, logits_real.h, logits_real.w)
        != (logits_fake.c, logits_fake.h, logits_fake.w)
    {
        return Err(TrainError::Shape(format!(
            "logit maps differ: {}x{}x{} vs {}x{}x{}",
            logits_real.c, logits_real.h, logits_real.w, logits_fake.c, logits_fake.h,
            logits_fake.w
        )));
    }
    check_finite("discriminator logits (real)", logits_real)?;
    check_finite("discriminator logits (fake)", logits_fake)?;
    let mean = |t: &Tensor, sign: f64| {
        t.data
            .iter()
            .map(|&l| softplus(sign * l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)))
            .sum::<f64>()
            / t.data.len() as f64
    };
    Ok(mean(logits_real, -1.0) + mean(logits_fake, 1.0))
}

/// Non-saturating generator objective: −mean log σ(ℓ_fake).
pub fn loss_generator_gan(logits_fake: &Tensor) -> Result<f64, TrainError> {
    check_finite("generator logits", logits_fake)?;
    let n = logits_fake.data.len() as f64;
    Ok(logits_fake
        .data
        .iter()
        .map(|&l| softplus(-l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)))
        .sum::<f64>()
        / n)
}

/// Mean absolute error over all pixels.
pub fn loss_l1(pred: &Tensor, target: &Tensor) -> Result<f64, TrainError> {
    if (pred.c, pred.h, pred.w) != (target.c, target.h, target.w) {
        return Err(TrainError::Shape(format!(
            "l1 operands differ: {}x{}x{} vs {}x{}x{}",
            pred.c, pred.h, pred.w, target.c, target.h, target.w
        )));
    }
    check_finite("l1 prediction", pred)?;
    check_finite("l1 target", target)?;
    let n = pred.data.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

/// Weighted generator objective.
pub fn loss_generator_total(gan: f64, l1: f64, lambda_gan: f64, lambda_l1: f64) -> f64 {
    lambda_gan * gan + lambda_l1 * l1
}

/// Gradients of `loss_discriminator` with respect to both logit maps.
pub fn d_loss_discriminator(logits_real: &Tensor, logits_fake: &Tensor) -> (Tensor, Tensor) {
    let n = logits_real.data.len() as f64;
    let mut d_real = Tensor::zeros(logits_real.c, logits_real.h, logits_real.w);
    let mut d_fake = Tensor::zeros(logits_fake.c, logits_fake.h, logits_fake.w);
    for (d, &l) in d_real.data.iter_mut().zip(&logits_real.data) {
        // d/dl softplus(−l) = −σ(−l)
        *d = -sigma(-l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)) / n;
    }
    let m = logits_fake.data.len() as f64;
    for (d, &l) in d_fake.data.iter_mut().zip(&logits_fake.data) {
        *d = sigma(l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)) / m;
    }
    (d_real, d_fake)
}

/// Gradient of `loss_generator_gan` with respect to the fake logit map.
pub fn d_loss_generator_gan(logits_fake: &Tensor) -> Tensor {
    let n = logits_fake.data.len() as f64;
    let mut d = Tensor::zeros(logits_fake.c, logits_fake.h, logits_fake.w);
    for (g, &l) in d.data.iter_mut().zip(&logits_fake.data) {
        *g = -sigma(-l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)) / n;
    }
    d
}

/// Gradient of `loss_l1` with respect to the prediction.
pub fn d_loss_l1(pred: &Tensor, target: &Tensor) -> Tensor {
    let n = pred.data.len() as f64;
    let mut d = Tensor::zeros(pred.c, pred.h, pred.w);
    for ((g, &p), &t) in d.data.iter_mut().zip(&pred.data).zip(&target.data) {
        *g = (p - t).signum() / n;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_of(vals: &[f64], h: usize, w: usize) -> Tensor {
        let mut t = Tensor::zeros(1, h, w);
        t.data.copy_from_slice(vals);
        t
    }

    #[test]
    fn disc_loss_at_zero_logits_is_two_ln_two() {
        let z = Tensor::zeros(1, 3, 3);
        let l = loss_discriminator(&z, &z).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "{l}");
    }

    #[test]
    fn disc_loss_vanishes_for_a_confident_discriminator() {
        let mut real = Tensor::zeros(1, 2, 2);
        real.data.fill(15.0);
        let mut fake = Tensor::zeros(1, 2, 2);
        fake.data.fill(-15.0);
        assert!(loss_discriminator(&real, &fake).unwrap() < 1e-3);
    }

    #[test]
    fn disc_loss_is_patch_permutation_invariant() {
        let a = tensor_of(&[0.3, -1.2, 2.0, 0.7], 2, 2);
        let b = tensor_of(&[0.7, 2.0, 0.3, -1.2], 2, 2);
        let f = tensor_of(&[-0.5, 0.1, 1.1, -2.2], 2, 2);
        let la = loss_discriminator(&a, &f).unwrap();
        let lb = loss_discriminator(&b, &f).unwrap();
        assert!((la - lb).abs() < 1e-15);
    }

    #[test]
    fn disc_loss_rejects_shape_mismatch_and_non_finite() {
        let a = Tensor::zeros(1, 2, 2);
        let b = Tensor::zeros(1, 2, 3);
        assert!(matches!(loss_discriminator(&a, &b), Err(TrainError::Shape(_))));
        let mut bad = Tensor::zeros(1, 2, 2);
        bad.data[3] = f64::NAN;
        assert!(matches!(loss_discriminator(&a, &bad), Err(TrainError::NonFinite(_))));
    }

    #[test]
    fn gan_loss_at_zero_is_ln_two_and_small_when_confident() {
        let z = Tensor::zeros(1, 4, 4);
        let l = loss_generator_gan(&z).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let mut hi = Tensor::zeros(1, 4, 4);
        hi.data.fill(15.0);
        assert!(loss_generator_gan(&hi).unwrap() < 1e-3);
    }

    #[test]
    fn gan_loss_strictly_decreases_when_any_logit_rises() {
        let base = tensor_of(&[0.0, -1.0, 2.0, 0.5], 2, 2);
        let l0 = loss_generator_gan(&base).unwrap();
        for i in 0..4 {
            let mut bumped = base.clone();
            bumped.data[i] += 0.1;
            assert!(loss_generator_gan(&bumped).unwrap() < l0);
        }
    }

    #[test]
    fn l1_hand_cases() {
        let t = tensor_of(&[0.0, 1.0], 1, 2);
        assert_eq!(loss_l1(&t, &t).unwrap(), 0.0);

        let mut half = Tensor::zeros(1, 2, 2);
        half.data.fill(0.5);
        let mut ones = Tensor::zeros(1, 2, 2);
        ones.data.fill(1.0);
        assert!((loss_l1(&half, &ones).unwrap() - 0.5).abs() < 1e-15);

        let pred = tensor_of(&[0.2, 0.9], 1, 2);
        let targ = tensor_of(&[0.0, 1.0], 1, 2);
        assert!((loss_l1(&pred, &targ).unwrap() - 0.15).abs() < 1e-12);

        let wide = Tensor::zeros(1, 1, 3);
        assert!(matches!(loss_l1(&t, &wide), Err(TrainError::Shape(_))));
    }

    #[test]
    fn total_is_the_weighted_sum() {
        let t = loss_generator_total(0.693, 0.01, 1.0, 100.0);
        assert!((t - 1.693).abs() < 1e-12);
        assert_eq!(loss_generator_total(0.42, 9.9, 1.0, 0.0), 0.42);
    }

    /// Central finite differences validate every analytic logit/pixel gradient.
    #[test]
    fn loss_gradients_match_finite_differences() {
        let real = tensor_of(&[0.3, -1.2, 2.0, 0.7], 2, 2);
        let fake = tensor_of(&[-0.5, 0.1, 1.1, -2.2], 2, 2);
        let pred = tensor_of(&[0.2, 0.9, 0.4, 0.6], 2, 2);
        let targ = tensor_of(&[0.0, 1.0, 1.0, 0.0], 2, 2);
        let h = 1e-6;

        let (dr, df) = d_loss_discriminator(&real, &fake);
        for i in 0..4 {
            let mut p = real.clone();
            p.data[i] += h;
            let mut m = real.clone();
            m.data[i] -= h;
            let num = (loss_discriminator(&p, &fake).unwrap()
                - loss_discriminator(&m, &fake).unwrap())
                / (2.0 * h);
            assert!((num - dr.data[i]).abs() < 1e-8, "real[{i}]: {num} vs {}", dr.data[i]);

            let mut p = fake.clone();
            p.data[i] += h;
            let mut m = fake.clone();
            m.data[i] -= h;
            let num = (loss_discriminator(&real, &p).unwrap()
                - loss_discriminator(&real, &m).unwrap())
                / (2.0 * h);
            assert!((num - df.data[i]).abs() < 1e-8, "fake[{i}]");
        }

        let dg = d_loss_generator_gan(&fake);
        for i in 0..4 {
            let mut p = fake.clone();
            p.data[i] += h;
            let mut m = fake.clone();
            m.data[i] -= h;
            let num =
                (loss_generator_gan(&p).unwrap() - loss_generator_gan(&m).unwrap()) / (2.0 * h);
            assert!((num - dg.data[i]).abs() < 1e-8, "gan[{i}]");
        }

        let dl = d_loss_l1(&pred, &targ);
        for i in 0..4 {
            let mut p = pred.clone();
            p.data[i] += h;
            let mut m = pred.clone();
            m.data[i] -= h;
            let num = (loss_l1(&p, &targ).unwrap() - loss_l1(&m, &targ).unwrap()) / (2.0 * h);
            assert!((num - dl.data[i]).abs() < 1e-8, "l1[{i}]");
        }
    }
}
