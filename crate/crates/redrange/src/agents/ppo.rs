//! Clipped-surrogate policy optimization with generalized advantage
//! estimation. The buffer holds whole episodes, so advantages never
//! bootstrap across a reset; updates run once enough steps accumulate.

use super::mlp::{Adam, Grads, Mlp};
use super::{softmax, AgentError, Algorithm, Hyper, Policy, PolicyHead, Trainer};
use crate::env::{Env, ObsVec};
use crate::seeds;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct PpoAlgorithm;

impl Algorithm for PpoAlgorithm {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn trainer(
        &self,
        obs_len: usize,
        action_count: usize,
        bounds: (f64, f64),
        hyper: &Hyper,
        seed: u64,
    ) -> Result<Box<dyn Trainer>, AgentError> {
        hyper.validate(bounds)?;
        Ok(Box::new(PpoTrainer::new(obs_len, action_count, hyper.clone(), seed)))
    }
}

struct Sample {
    obs: ObsVec,
    action: u8,
    logp_old: f64,
    value: f64,
    reward: f64,
}

struct PpoTrainer {
    hyper: Hyper,
    obs_len: usize,
    action_count: usize,
    policy_net: Mlp,
    value_net: Mlp,
    adam_policy: Adam,
    adam_value: Adam,
    episodes_buf: Vec<Vec<Sample>>,
    buffered: usize,
    rng: ChaCha8Rng,
    env_steps: u64,
    episodes: u64,
    seed: u64,
}

impl PpoTrainer {
    fn new(obs_len: usize, action_count: usize, hyper: Hyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "ppo"));
        let mut pdims = vec![obs_len];
        pdims.extend_from_slice(&hyper.hidden);
        pdims.push(action_count);
        let policy_net = Mlp::new(&pdims, &mut rng);
        let mut vdims = vec![obs_len];
        vdims.extend_from_slice(&hyper.hidden);
        vdims.push(1);
        let value_net = Mlp::new(&vdims, &mut rng);
        let adam_policy = Adam::new(hyper.lr, policy_net.param_count());
        let adam_value = Adam::new(hyper.lr, value_net.param_count());
        PpoTrainer {
            hyper,
            obs_len,
            action_count,
            policy_net,
            value_net,
            adam_policy,
            adam_value,
            episodes_buf: Vec::new(),
            buffered: 0,
            rng,
            env_steps: 0,
            episodes: 0,
            seed,
        }
    }

    fn sample_action(&mut self, probs: &[f64]) -> u8 {
        let mut pick: f64 = self.rng.gen();
        for (i, p) in probs.iter().enumerate() {
            if pick < *p {
                return i as u8;
            }
            pick -= p;
        }
        probs.len() as u8 - 1
    }

    /// Per-episode generalized advantages; episodes always end terminal, so
    /// the value beyond the last step is zero.
    fn advantages(&self, ep: &[Sample]) -> Vec<f64> {
        let mut adv = vec![0.0; ep.len()];
        let mut next_adv = 0.0;
        let mut next_value = 0.0;
        for t in (0..ep.len()).rev() {
            let delta = ep[t].reward + self.hyper.gamma * next_value - ep[t].value;
            next_adv = delta + self.hyper.gamma * self.hyper.gae_lambda * next_adv;
            adv[t] = next_adv;
            next_value = ep[t].value;
        }
        adv
    }

    fn update(&mut self) {
        let episodes = std::mem::take(&mut self.episodes_buf);
        self.buffered = 0;
        let mut flat: Vec<&Sample> = Vec::new();
        let mut advantages = Vec::new();
        let mut returns = Vec::new();
        for ep in &episodes {
            let adv = self.advantages(ep);
            for (s, a) in ep.iter().zip(adv) {
                returns.push(a + s.value);
                advantages.push(a);
                flat.push(s);
            }
        }
        let n = flat.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in &mut advantages {
            *a = (*a - mean) / std;
        }

        let mut order: Vec<usize> = (0..flat.len()).collect();
        for _ in 0..self.hyper.ppo_epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.hyper.minibatch) {
                self.minibatch_step(chunk, &flat, &advantages, &returns);
            }
        }
    }

    fn minibatch_step(&mut self, chunk: &[usize], flat: &[&Sample], adv: &[f64], ret: &[f64]) {
        let clip = self.hyper.clip;
        let mut pgrads = self.policy_net.zero_grads();
        let mut vgrads = self.value_net.zero_grads();
        for &i in chunk {
            let s = flat[i];
            let cache = self.policy_net.forward_cached(&s.obs);
            let probs = softmax(cache.output());
            let a = s.action as usize;
            let logp = probs[a].max(1e-12).ln();
            let ratio = (logp - s.logp_old).exp();
            let clipped_out =
                (adv[i] >= 0.0 && ratio > 1.0 + clip) || (adv[i] <= 0.0 && ratio < 1.0 - clip);
            let entropy: f64 = probs.iter().map(|p| -p * p.max(1e-12).ln()).sum();
            let mut dout = vec![0.0; self.action_count];
            for k in 0..self.action_count {
                if !clipped_out {
                    let indicator = if k == a { 1.0 } else { 0.0 };
                    dout[k] -= ratio * adv[i] * (indicator - probs[k]);
                }
                dout[k] += self.hyper.entropy_coef
                    * probs[k]
                    * (probs[k].max(1e-12).ln() + entropy);
            }
            self.policy_net.backward(&cache, &dout, &mut pgrads);

            let vcache = self.value_net.forward_cached(&s.obs);
            let dv = vec![2.0 * (vcache.output()[0] - ret[i])];
            self.value_net.backward(&vcache, &dv, &mut vgrads);
        }
        let scale = 1.0 / chunk.len() as f64;
        finish(&mut pgrads, scale, self.hyper.max_grad_norm);
        finish(&mut vgrads, scale, self.hyper.max_grad_norm);
        self.adam_policy.step(&mut self.policy_net, &pgrads);
        self.adam_value.step(&mut self.value_net, &vgrads);
    }
}

fn finish(grads: &mut Grads, scale: f64, max_norm: f64) {
    grads.scale(scale);
    grads.clip_norm(max_norm);
}

impl Trainer for PpoTrainer {
    fn train_episode(&mut self, env: &mut dyn Env) -> f64 {
        let ep_seed = seeds::derive_indexed(self.seed, "ppo-episode", self.episodes);
        self.episodes += 1;
        let mut obs = env.reset(ep_seed);
        let mut total = 0.0;
        let mut ep = Vec::new();
        loop {
            let logits = self.policy_net.forward(&obs);
            let probs = softmax(&logits);
            let action = self.sample_action(&probs);
            let logp_old = probs[action as usize].max(1e-12).ln();
            let value = self.value_net.forward(&obs)[0];
            let step = env.step(action);
            total += step.reward;
            self.env_steps += 1;
            ep.push(Sample { obs, action, logp_old, value, reward: step.reward });
            obs = step.obs;
            if step.done {
                break;
            }
        }
        self.buffered += ep.len();
        self.episodes_buf.push(ep);
        if self.buffered >= self.hyper.horizon {
            self.update();
        }
        total
    }

    fn policy(&self) -> Policy {
        Policy {
            algorithm: "ppo".into(),
            obs_len: self.obs_len,
            action_count: self.action_count,
            head: PolicyHead::Logits,
            net: self.policy_net.clone(),
        }
    }

    fn algorithm(&self) -> &'static str {
        "ppo"
    }

    fn steps(&self) -> u64 {
        self.env_steps
    }
}

#[cfg(test)]
mod tests {
    use super::super::testenv::{Bandit, Corridor};
    use super::*;

    fn small_hyper() -> Hyper {
        Hyper {
            hidden: vec![16],
            horizon: 64,
            minibatch: 32,
            ppo_epochs: 4,
            lr: 5e-3,
            entropy_coef: 0.01,
            ..Hyper::default()
        }
    }

    #[test]
    fn learns_the_bandit() {
        let mut env = Bandit;
        let mut t = PpoAlgorithm.trainer(1, 2, (0.0, 1.0), &small_hyper(), 7).unwrap();
        for _ in 0..600 {
            t.train_episode(&mut env);
        }
        assert_eq!(t.policy().act(&[1.0]), 1);
    }

    #[test]
    fn learns_the_corridor() {
        let mut env = Corridor::new(4);
        let bounds = env.return_bounds();
        let mut t = PpoAlgorithm.trainer(4, 2, bounds, &small_hyper(), 3).unwrap();
        for _ in 0..500 {
            t.train_episode(&mut env);
        }
        let policy = t.policy();
        for cell in 0..3 {
            let mut obs = vec![0.0; 4];
            obs[cell] = 1.0;
            assert_eq!(policy.act(&obs), 1, "cell {cell} should step right");
        }
    }

    #[test]
    fn same_seed_same_policy() {
        let run = || {
            let mut env = Corridor::new(3);
            let mut t = PpoAlgorithm.trainer(3, 2, (-0.12, 1.0), &small_hyper(), 11).unwrap();
            for _ in 0..80 {
                t.train_episode(&mut env);
            }
            serde_json::to_string(&t.policy()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
