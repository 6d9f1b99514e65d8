use super::{Result, TrainError};

/// Generalized advantage estimation over one environment's step sequence.
///
/// `values` holds `V(s_0..s_T)`, the last entry being the bootstrap value.
/// A `done` step is terminal: nothing after it is bootstrapped and the
/// recursion does not cross it. Returns `(advantages, returns)`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() + 1 {
        return Err(TrainError::Config(format!(
            "gae: {} rewards need {} values (with bootstrap), got {}",
            rewards.len(),
            rewards.len() + 1,
            values.len()
        )));
    }
    gae_with_bootstrap(rewards, &values[..rewards.len()], &values[1..], dones, dones, gamma, lambda)
}

/// GAE with an explicit successor value per step, so that steps cut by the
/// step cap (`episode_end` but not `terminated`) bootstrap from the value of
/// the state they were cut at rather than from the next episode's start.
pub fn gae_with_bootstrap(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = rewards.len();
    if [values.len(), next_values.len(), terminated.len(), episode_end.len()]
        .iter()
        .any(|&l| l != t)
    {
        return Err(TrainError::Config(format!(
            "gae: length mismatch (rewards {t}, values {}, next values {}, terminated {}, ends {})",
            values.len(),
            next_values.len(),
            terminated.len(),
            episode_end.len()
        )));
    }
    let mut adv = vec![0.0; t];
    let mut carry = 0.0;
    for i in (0..t).rev() {
        let keep = if terminated[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + gamma * keep * next_values[i] - values[i];
        let cont = if episode_end[i] || terminated[i] { 0.0 } else { 1.0 };
        carry = delta + gamma * lambda * cont * carry;
        adv[i] = carry;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
