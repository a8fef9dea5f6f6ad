use super::TrainError;

/// Generalized advantage estimation over a contiguous sequence.
///
/// `values` has one more entry than `rewards`; `values[t + 1]` is the value of the state that
/// follows step `t`. A done step neither bootstraps nor propagates the trace.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(TrainError::Config(format!(
            "gae length mismatch: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let next: Vec<f64> = values[1..].to_vec();
    let bootstrap: Vec<bool> = dones.iter().map(|d| !d).collect();
    gae_with_bootstrap(rewards, &values[..n], &next, &bootstrap, dones, gamma, lambda)
}

/// General form: `next_values[t]` is the value of step `t`'s successor, `bootstrap[t]` says
/// whether it enters the TD target and `episode_end[t]` cuts the trace. A time-limit end
/// bootstraps but still cuts the trace.
pub fn gae_with_bootstrap(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    bootstrap: &[bool],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let n = rewards.len();
    if [values.len(), next_values.len(), bootstrap.len(), episode_end.len()]
        .iter()
        .any(|l| *l != n)
    {
        return Err(TrainError::Config("gae length mismatch".into()));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_v = if bootstrap[t] { next_values[t] } else { 0.0 };
        let delta = rewards[t] + gamma * next_v - values[t];
        let carry = if episode_end[t] { 0.0 } else { running };
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Per-batch standardization with ε = 1e-8.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_zero_is_td_residual() {
        let r = [1.0, 2.0, -1.0];
        let v = [0.5, 0.25, 1.0, 2.0];
        let d = [false, true, false];
        let (a, ret) = gae_advantages(&r, &v, &d, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let nd = if d[t] { 0.0 } else { 1.0 };
            assert_eq!(a[t], r[t] + 0.9 * v[t + 1] * nd - v[t]);
            assert_eq!(ret[t], a[t] + v[t]);
        }
    }

    #[test]
    fn lambda_one_zero_values_is_reward_to_go() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = gae_advantages(&r, &[0.0; 5], &[false, false, true, false], 0.5, 1.0).unwrap();
        assert_eq!(a, vec![1.0 + 0.5 * 2.0 + 0.25 * 3.0, 2.0 + 0.5 * 3.0, 3.0, 4.0]);
    }

    #[test]
    fn matches_brute_force_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 6;
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            let (g, l) = (0.95, 0.8);
            let (a, _) = gae_advantages(&r, &v, &d, g, l).unwrap();
            for t in 0..n {
                // A_t = Σ_k (γλ)^k δ_{t+k}, truncated after the first done.
                let mut sum = 0.0;
                for k in 0..(n - t) {
                    let i = t + k;
                    let nd = if d[i] { 0.0 } else { 1.0 };
                    let delta = r[i] + g * v[i + 1] * nd - v[i];
                    sum += (g * l as f64).powi(k as i32) * delta;
                    if d[i] {
                        break;
                    }
                }
                assert!((a[t] - sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(gae_advantages(&[1.0], &[0.0], &[false], 0.9, 0.9).is_err());
    }

    #[test]
    fn normalization() {
        let mut a = vec![1.0, 2.0, 3.0];
        normalize_advantages(&mut a);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
    }
}
