//! Q-learning on a network: uniform replay, a frozen target copy, and an
//! epsilon-greedy behavior policy that anneals over environment steps.

use super::mlp::{Adam, Mlp};
use super::replay::{Experience, Replay};
use super::{argmax, greedy, AgentError, Algorithm, Hyper, Policy, PolicyHead, Trainer};
use crate::env::Env;
use crate::seeds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct DqnAlgorithm;

impl Algorithm for DqnAlgorithm {
    fn name(&self) -> &'static str {
        "dqn"
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
        Ok(Box::new(DqnTrainer::new(obs_len, action_count, hyper.clone(), seed)))
    }
}

struct DqnTrainer {
    hyper: Hyper,
    obs_len: usize,
    action_count: usize,
    net: Mlp,
    target: Mlp,
    adam: Adam,
    replay: Replay,
    rng: ChaCha8Rng,
    env_steps: u64,
    episodes: u64,
    seed: u64,
}

impl DqnTrainer {
    fn new(obs_len: usize, action_count: usize, hyper: Hyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "dqn"));
        let mut dims = vec![obs_len];
        dims.extend_from_slice(&hyper.hidden);
        dims.push(action_count);
        let net = Mlp::new(&dims, &mut rng);
        let target = net.clone();
        let adam = Adam::new(hyper.lr, net.param_count());
        let replay = Replay::new(hyper.replay_capacity);
        DqnTrainer {
            hyper,
            obs_len,
            action_count,
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

    fn select(&mut self, obs: &[f64]) -> u8 {
        let eps = self.hyper.epsilon(self.env_steps);
        if self.rng.gen::<f64>() < eps {
            self.rng.gen_range(0..self.action_count as u8)
        } else {
            greedy(&self.net.forward(obs))
        }
    }

    fn learn(&mut self) {
        let batch = self.replay.sample(&mut self.rng, self.hyper.batch);
        let mut grads = self.net.zero_grads();
        for e in &batch {
            let mut y = e.reward;
            if !e.done {
                let next_q = self.target.forward(&e.next_obs);
                y += self.hyper.gamma * next_q[argmax(&next_q)];
            }
            let cache = self.net.forward_cached(&e.obs);
            let mut dout = vec![0.0; self.action_count];
            dout[e.action as usize] = 2.0 * (cache.output()[e.action as usize] - y);
            self.net.backward(&cache, &dout, &mut grads);
        }
        grads.scale(1.0 / batch.len() as f64);
        grads.clip_norm(self.hyper.max_grad_norm);
        drop(batch);
        self.adam.step(&mut self.net, &grads);
    }
}

impl Trainer for DqnTrainer {
    fn train_episode(&mut self, env: &mut dyn Env) -> f64 {
        let ep_seed = seeds::derive_indexed(self.seed, "dqn-episode", self.episodes);
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
            algorithm: "dqn".into(),
            obs_len: self.obs_len,
            action_count: self.action_count,
            head: PolicyHead::Q,
            net: self.net.clone(),
        }
    }

    fn algorithm(&self) -> &'static str {
        "dqn"
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
            warmup: 32,
            batch: 16,
            eps_decay_steps: 400,
            target_sync: 50,
            lr: 5e-3,
            ..Hyper::default()
        }
    }

    #[test]
    fn learns_the_bandit() {
        let mut env = Bandit;
        let mut t = DqnAlgorithm.trainer(1, 2, (0.0, 1.0), &small_hyper(), 7).unwrap();
        for _ in 0..600 {
            t.train_episode(&mut env);
        }
        assert_eq!(t.policy().act(&[1.0]), 1);
    }

    #[test]
    fn learns_the_corridor() {
        let mut env = Corridor::new(4);
        let bounds = env.return_bounds();
        let mut t = DqnAlgorithm.trainer(4, 2, bounds, &small_hyper(), 3).unwrap();
        for _ in 0..400 {
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
            let mut t = DqnAlgorithm.trainer(3, 2, (-0.12, 1.0), &small_hyper(), 11).unwrap();
            for _ in 0..50 {
                t.train_episode(&mut env);
            }
            serde_json::to_string(&t.policy()).unwrap()
        };
        assert_eq!(run(), run());
    }
}
