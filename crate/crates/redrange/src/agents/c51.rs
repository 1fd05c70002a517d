//! Categorical value distributions on a fixed support. The network emits
//! per-action logits over the atoms; targets come from projecting the
//! reward-shifted support back onto itself, and action selection during
//! bootstrapping is double-Q: the online net picks, the target net scores.

use super::mlp::{Adam, Mlp};
use super::replay::{Experience, Replay};
use super::{argmax, softmax, support, AgentError, Algorithm, Hyper, Policy, PolicyHead, Trainer};
use crate::env::Env;
use crate::seeds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct C51Algorithm;

impl Algorithm for C51Algorithm {
    fn name(&self) -> &'static str {
        "c51"
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
        Ok(Box::new(C51Trainer::new(obs_len, action_count, bounds, hyper.clone(), seed)))
    }
}

/// Bellman-shift a value distribution and spread it back onto `support`.
/// Mass that lands between atoms splits linearly; mass outside the support
/// piles onto the nearest edge. Terminal transitions collapse to the reward.
pub fn project_distribution(
    support: &[f64],
    probs: &[f64],
    reward: f64,
    gamma: f64,
    done: bool,
) -> Vec<f64> {
    assert!(done || support.len() == probs.len());
    let atoms = support.len();
    let v_min = support[0];
    let v_max = support[atoms - 1];
    let dz = (v_max - v_min) / (atoms - 1) as f64;
    let mut m = vec![0.0; atoms];
    let mut spread = |value: f64, p: f64| {
        let tz = value.clamp(v_min, v_max);
        let b = ((tz - v_min) / dz).clamp(0.0, (atoms - 1) as f64);
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            m[l] += p;
        } else {
            m[l] += p * (u as f64 - b);
            m[u] += p * (b - l as f64);
        }
    };
    if done {
        spread(reward, 1.0);
    } else {
        for (z, p) in support.iter().zip(probs) {
            spread(reward + gamma * z, *p);
        }
    }
    m
}

struct C51Trainer {
    hyper: Hyper,
    obs_len: usize,
    action_count: usize,
    support: Vec<f64>,
    net: Mlp,
    target: Mlp,
    adam: Adam,
    replay: Replay,
    rng: ChaCha8Rng,
    env_steps: u64,
    episodes: u64,
    seed: u64,
}

impl C51Trainer {
    fn new(obs_len: usize, action_count: usize, bounds: (f64, f64), hyper: Hyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "c51"));
        let (v_min, v_max) = hyper.support_bounds(bounds);
        let support = support(hyper.atoms, v_min, v_max);
        let mut dims = vec![obs_len];
        dims.extend_from_slice(&hyper.hidden);
        dims.push(action_count * hyper.atoms);
        let net = Mlp::new(&dims, &mut rng);
        let target = net.clone();
        let adam = Adam::new(hyper.lr, net.param_count());
        let replay = Replay::new(hyper.replay_capacity);
        C51Trainer {
            hyper,
            obs_len,
            action_count,
            support,
            net,
            target,
            adam,
            replay,
            rng,
            env_steps: 0,
            episodes: 0,
            seed,
        }
    }

    fn means(&self, logits: &[f64]) -> Vec<f64> {
        (0..self.action_count)
            .map(|a| {
                let atoms = self.hyper.atoms;
                let probs = softmax(&logits[a * atoms..(a + 1) * atoms]);
                probs.iter().zip(&self.support).map(|(p, z)| p * z).sum()
            })
            .collect()
    }

    fn select(&mut self, obs: &[f64]) -> u8 {
        let eps = self.hyper.epsilon(self.env_steps);
        if self.rng.gen::<f64>() < eps {
            self.rng.gen_range(0..self.action_count as u8)
        } else {
            argmax(&self.means(&self.net.forward(obs))) as u8
        }
    }

    fn learn(&mut self) {
        let atoms = self.hyper.atoms;
        let batch = self.replay.sample(&mut self.rng, self.hyper.batch);
        let mut grads = self.net.zero_grads();
        for e in &batch {
            let m = if e.done {
                project_distribution(&self.support, &[], e.reward, self.hyper.gamma, true)
            } else {
                let online_next = self.net.forward(&e.next_obs);
                let best = argmax(&self.means(&online_next));
                let target_next = self.target.forward(&e.next_obs);
                let probs = softmax(&target_next[best * atoms..(best + 1) * atoms]);
                project_distribution(&self.support, &probs, e.reward, self.hyper.gamma, false)
            };
            let mass: f64 = m.iter().sum();
            assert!((mass - 1.0).abs() <= 1e-6, "projection lost mass: {mass}");
            let cache = self.net.forward_cached(&e.obs);
            let a = e.action as usize;
            let p = softmax(&cache.output()[a * atoms..(a + 1) * atoms]);
            let mut dout = vec![0.0; self.action_count * atoms];
            for i in 0..atoms {
                dout[a * atoms + i] = p[i] - m[i];
            }
            self.net.backward(&cache, &dout, &mut grads);
        }
        grads.scale(1.0 / batch.len() as f64);
        grads.clip_norm(self.hyper.max_grad_norm);
        drop(batch);
        self.adam.step(&mut self.net, &grads);
    }
}

impl Trainer for C51Trainer {
    fn train_episode(&mut self, env: &mut dyn Env) -> f64 {
        let ep_seed = seeds::derive_indexed(self.seed, "c51-episode", self.episodes);
        self.episodes += 1;
        let mut obs = env.reset(ep_seed);
        let mut total = 0.0;
        loop {
            let action = self.select(&obs);
            let step = env.step(action);
            total += step.reward;
            self.env_steps += 1;
            self.replay.push(Experience {
                obs,
                action,
                reward: step.reward,
                next_obs: step.obs.clone(),
                done: step.done,
            });
            if self.replay.len() >= self.hyper.warmup
                && self.env_steps % self.hyper.train_freq as u64 == 0
            {
                self.learn();
            }
            if self.env_steps % self.hyper.target_sync as u64 == 0 {
                self.target = self.net.clone();
            }
            obs = step.obs;
            if step.done {
                return total;
            }
        }
    }

    fn policy(&self) -> Policy {
        Policy {
            algorithm: "c51".into(),
            obs_len: self.obs_len,
            action_count: self.action_count,
            head: PolicyHead::Categorical {
                atoms: self.hyper.atoms,
                v_min: self.support[0],
                v_max: *self.support.last().unwrap(),
            },
            net: self.net.clone(),
        }
    }

    fn algorithm(&self) -> &'static str {
        "c51"
    }

    fn steps(&self) -> u64 {
        self.env_steps
    }
}
