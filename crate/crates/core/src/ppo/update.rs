use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::{BlockForward, BlockPolicy};
use super::{normalize_advantages, EpisodeBuffer, PpoConfig};
use crate::error::{NdpError, Result};
use crate::nn::{batch_from_rows, Adam, MlpCache};
use crate::policy::CriticHeads;

/// Averages over every minibatch step of one update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Full-batch clipped surrogate loss before the first epoch and after
    /// each epoch; empty unless requested.
    pub epoch_surrogate: Vec<f64>,
}

/// Ratio and clipped-surrogate contribution `min(r A, clip(r) A)` of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateTerm {
    pub ratio: f64,
    pub term: f64,
}

fn plan_blocks(policy: &BlockPolicy, buffer: &EpisodeBuffer, blocks: &[usize]) -> Result<BlockForward> {
    let rows: Vec<&[f64]> = blocks.iter().map(|&b| buffer.blocks[b].obs.as_slice()).collect();
    let y: Vec<Vec<f64>> = blocks.iter().map(|&b| buffer.blocks[b].robot_pos.clone()).collect();
    let v: Vec<Vec<f64>> = blocks.iter().map(|&b| buffer.blocks[b].robot_vel.clone()).collect();
    policy.forward(batch_from_rows(&rows).view(), &y, &v)
}

fn clip_term(ratio: f64, adv: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Surrogate terms for every transition under the current policy.
pub fn surrogate_terms(policy: &BlockPolicy, buffer: &EpisodeBuffer, advantages: &[f64], clip: f64) -> Result<Vec<SurrogateTerm>> {
    let all: Vec<usize> = (0..buffer.blocks.len()).collect();
    let fwd = plan_blocks(policy, buffer, &all)?;
    let mut out = Vec::with_capacity(buffer.len());
    for (b, block) in buffer.blocks.iter().enumerate() {
        for j in 0..block.len {
            let i = block.first + j;
            let t = &buffer.transitions[i];
            let ratio = (policy.log_prob(&t.action, &fwd.plans[b].means[j]) - t.logp).exp();
            out.push(SurrogateTerm {
                ratio,
                term: clip_term(ratio, advantages[i], clip).0,
            });
        }
    }
    Ok(out)
}

/// Negated mean clipped surrogate over the whole buffer.
pub fn surrogate_loss(policy: &BlockPolicy, buffer: &EpisodeBuffer, advantages: &[f64], clip: f64) -> Result<f64> {
    let terms = surrogate_terms(policy, buffer, advantages, clip)?;
    Ok(-terms.iter().map(|t| t.term).sum::<f64>() / terms.len().max(1) as f64)
}

/// Loss statistics and gradients for one minibatch of blocks.
#[derive(Debug, Clone)]
pub struct MinibatchGrad {
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Gradient of `policy_loss + value_coef * value_loss - entropy_coef * entropy`,
/// each a mean over the transitions of `blocks`.
pub fn minibatch_grad(
    policy: &BlockPolicy,
    critic: &CriticHeads,
    buffer: &EpisodeBuffer,
    blocks: &[usize],
    advantages: &[f64],
    config: &PpoConfig,
) -> Result<MinibatchGrad> {
    let fwd = plan_blocks(policy, buffer, blocks)?;
    let rows: Vec<&[f64]> = blocks.iter().map(|&b| buffer.blocks[b].obs.as_slice()).collect();
    let critic_cache: MlpCache = critic.forward(batch_from_rows(&rows).view())?;
    let values = critic_cache.output();

    let n: usize = blocks.iter().map(|&b| buffer.blocks[b].len).sum();
    let inv_n = 1.0 / n.max(1) as f64;
    let dof = policy.dof();
    let sigma2: Vec<f64> = policy.log_std.iter().map(|s| (2.0 * s).exp()).collect();

    let mut d_means = Vec::with_capacity(blocks.len());
    let mut d_values = Array2::<f64>::zeros(values.dim());
    let mut d_log_std = vec![0.0; dof];
    let (mut policy_loss, mut value_loss, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);

    for (row, &b) in blocks.iter().enumerate() {
        let block = &buffer.blocks[b];
        let plan = &fwd.plans[row];
        let mut d_block = vec![vec![0.0; dof]; plan.means.len()];
        for j in 0..block.len {
            let i = block.first + j;
            let t = &buffer.transitions[i];
            let mean = &plan.means[j];
            let logp = policy.log_prob(&t.action, mean);
            let log_ratio = logp - t.logp;
            let ratio = log_ratio.exp();
            let (term, unclipped) = clip_term(ratio, advantages[i], config.clip);
            policy_loss -= term * inv_n;
            kl += ((ratio - 1.0) - log_ratio) * inv_n;
            if (ratio - 1.0).abs() > config.clip {
                clipped += 1;
            }
            // d loss / d logp
            let g = if unclipped { -advantages[i] * ratio * inv_n } else { 0.0 };
            if g != 0.0 {
                for d in 0..dof {
                    let diff = t.action[d] - mean[d];
                    d_block[j][d] += g * diff / sigma2[d];
                    d_log_std[d] += g * (diff * diff / sigma2[d] - 1.0);
                }
            }
            let head = t.value_head;
            let err = values[[row, head]] - buffer.returns[i];
            value_loss += 0.5 * err * err * inv_n;
            d_values[[row, head]] += config.value_coef * err * inv_n;
        }
        d_means.push(d_block);
    }
    let entropy = policy.entropy();
    for g in &mut d_log_std {
        *g -= config.entropy_coef;
    }
    let total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy;
    if !total.is_finite() {
        return Err(NdpError::NonFinite("ppo loss; update aborted".into()));
    }
    Ok(MinibatchGrad {
        actor: policy.backward(&fwd, &d_means)?,
        log_std: d_log_std,
        critic: critic.mlp.backward(&critic_cache, d_values.view())?,
        policy_loss,
        value_loss,
        entropy,
        approx_kl: kl,
        clip_fraction: clipped as f64 * inv_n,
    })
}

/// Contiguous partition of the shuffled block indices.
fn partition(order: &[usize], parts: usize) -> Vec<&[usize]> {
    let parts = parts.clamp(1, order.len().max(1));
    let base = order.len() / parts;
    let extra = order.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(&order[start..start + len]);
        start += len;
    }
    out
}

/// Clipped-surrogate PPO update over `config.epochs` passes of shuffled block
/// minibatches. One Adam instance holds `[actor, log_std, critic]`.
pub fn ppo_update<R: Rng>(
    policy: &mut BlockPolicy,
    critic: &mut CriticHeads,
    buffer: &EpisodeBuffer,
    config: &PpoConfig,
    adam: &mut Adam,
    rng: &mut R,
    track_surrogate: bool,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(NdpError::Contract("ppo_update needs advantages and returns; run gae first".into()));
    }
    if buffer.is_empty() {
        return Err(NdpError::Contract("empty rollout buffer".into()));
    }
    let advantages = normalize_advantages(&buffer.advantages);
    let n_actor = policy.mlp.num_params();
    let n_std = policy.log_std.len();
    let mut flat: Vec<f64> = Vec::with_capacity(n_actor + n_std + critic.mlp.num_params());

    let mut stats = UpdateStats::default();
    if track_surrogate {
        stats.epoch_surrogate.push(surrogate_loss(policy, buffer, &advantages, config.clip)?);
    }
    let mut order: Vec<usize> = (0..buffer.blocks.len()).collect();
    let mut steps = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for mb in partition(&order, config.minibatches) {
            let g = minibatch_grad(policy, critic, buffer, mb, &advantages, config)?;
            stats.policy_loss += g.policy_loss;
            stats.value_loss += g.value_loss;
            stats.entropy += g.entropy;
            stats.approx_kl += g.approx_kl;
            stats.clip_fraction += g.clip_fraction;

            let mut grads = g.actor;
            grads.extend_from_slice(&g.log_std);
            grads.extend_from_slice(&g.critic);
            flat.clear();
            flat.extend_from_slice(policy.mlp.params());
            flat.extend_from_slice(&policy.log_std);
            flat.extend_from_slice(critic.mlp.params());
            stats.grad_norm += adam.step(&mut flat, &mut grads)?;
            policy.mlp.params_mut().copy_from_slice(&flat[..n_actor]);
            policy.log_std.copy_from_slice(&flat[n_actor..n_actor + n_std]);
            critic.mlp.params_mut().copy_from_slice(&flat[n_actor + n_std..]);
            steps += 1;
        }
        if track_surrogate {
            stats.epoch_surrogate.push(surrogate_loss(policy, buffer, &advantages, config.clip)?);
        }
    }
    let s = steps as f64;
    stats.policy_loss /= s;
    stats.value_loss /= s;
    stats.entropy /= s;
    stats.approx_kl /= s;
    stats.clip_fraction /= s;
    stats.grad_norm /= s;
    Ok(stats)
}
