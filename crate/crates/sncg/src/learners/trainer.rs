//! The training loop: drives an environment with a population of per-agent
//! Q-learners (plus the central suggestion/variance pair for VMQ), assembles
//! decision-to-decision transitions from per-step rewards, and records
//! metrics.

use std::collections::VecDeque;

use thiserror::Error;

use crate::env::{EnvError, Environment, StepOutcome};
use crate::game::FlowDistribution;
use crate::nn::{AdamParams, NnError};
use crate::rng::{stream_rng, Stream, StreamRng};

use super::central::{CentralAgent, CentralRecord};
use super::individual::{IndividualAgent, PendingContext, Record};
use super::{LearnerConfig, LearnerKind};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One row of training metrics, sampled every `metrics_every` steps.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub step: u64,
    /// Mean per-agent reward over the trailing window.
    pub mean_reward: f64,
    /// Mean over (population, local state) groups of the population variance
    /// of agent values, at the step's decision point.
    pub nu: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Equilibrium gap of the executed flow, when a gap oracle is supplied.
    pub eps_gap: Option<f64>,
}

pub struct Trainer {
    pub env: Box<dyn Environment>,
    pub config: LearnerConfig,
    /// `agents[p][i]` = learner of agent `i` in population `p`.
    pub agents: Vec<Vec<IndividualAgent>>,
    pub central: Option<CentralAgent>,
    pub step_count: u64,
    env_rng: StreamRng,
    eval_rng: StreamRng,
    dropout_rng: StreamRng,
    prev_flow: Option<FlowDistribution>,
    /// Executed flow of the latest step; unlike `prev_flow` it survives
    /// episode resets (used for gap metrics).
    last_flow: Option<FlowDistribution>,
    flow_len: usize,
    reward_window: VecDeque<f64>,
    reward_window_cap: usize,
    /// Trailing window of per-step greedy flows (every agent's argmax
    /// action, aggregated); their mean is the extracted policy.
    greedy_flows: VecDeque<FlowDistribution>,
    policy_window: usize,
}

impl Trainer {
    pub fn new(env: Box<dyn Environment>, config: LearnerConfig, seed: u64) -> Self {
        let structure = env.structure().clone();
        let flow_len: usize = structure
            .populations
            .iter()
            .map(|p| p.actions_per_state.iter().sum::<usize>())
            .sum();
        let adam = AdamParams::with_lr(config.lr);
        let mut agents = Vec::new();
        for (p, pop) in structure.populations.iter().enumerate() {
            let mut row = Vec::new();
            for i in 0..pop.n_agents {
                let base = env.feature_len() + pop.n_states();
                let input_dim = match config.kind {
                    LearnerKind::Vmq | LearnerKind::Il => base,
                    LearnerKind::Mfq => base + pop.max_actions(),
                    LearnerKind::Nfsp => base + flow_len,
                };
                let mut init = stream_rng(seed, Stream::AgentInit { population: p, index: i });
                row.push(IndividualAgent::new(
                    input_dim,
                    pop.actions_per_state.clone(),
                    config.hidden_dim,
                    config.dropout,
                    adam,
                    config.target_period,
                    config.buffer_capacity,
                    config.kind == LearnerKind::Nfsp,
                    &mut init,
                    stream_rng(seed, Stream::AgentAction { population: p, index: i }),
                    stream_rng(seed, Stream::AgentBuffer { population: p, index: i }),
                ));
            }
            agents.push(row);
        }
        let central = (config.kind == LearnerKind::Vmq).then(|| {
            let mut init = stream_rng(seed, Stream::CentralInit);
            CentralAgent::new(
                &structure,
                env.feature_len(),
                config.hidden_dim,
                config.dropout,
                adam,
                config.target_period,
                config.central_buffer_capacity,
                &mut init,
                stream_rng(seed, Stream::CentralBuffer),
            )
        });
        let mut env = env;
        let mut env_rng = stream_rng(seed, Stream::Env);
        env.reset(&mut env_rng);
        Trainer {
            env,
            config,
            agents,
            central,
            step_count: 0,
            env_rng,
            eval_rng: stream_rng(seed, Stream::EvalEnv),
            dropout_rng: stream_rng(seed, Stream::Dropout),
            prev_flow: None,
            last_flow: None,
            flow_len,
            reward_window: VecDeque::new(),
            reward_window_cap: 1000,
            greedy_flows: VecDeque::new(),
            policy_window: 1000,
        }
    }

    /// Observation of one agent: global features, one-hot local state, and
    /// (depending on the learner) last-step aggregate action information.
    fn build_input(&self, population: usize, local_state: usize) -> Vec<f64> {
        let pop = &self.env.structure().populations[population];
        let mut input = self.env.global_features();
        for k in 0..pop.n_states() {
            input.push(if k == local_state { 1.0 } else { 0.0 });
        }
        match self.config.kind {
            LearnerKind::Vmq | LearnerKind::Il => {}
            LearnerKind::Mfq => {
                // mean action of the agent's own group on the previous step,
                // padded to the population's widest action set
                let mut block = vec![0.0; pop.max_actions()];
                if let Some(flow) = &self.prev_flow {
                    let state = &flow.f[population][local_state];
                    let mass: f64 = state.iter().sum();
                    if mass > crate::game::MASS_TOL {
                        for (j, &x) in state.iter().enumerate() {
                            block[j] = x / mass;
                        }
                    }
                }
                input.extend_from_slice(&block);
            }
            LearnerKind::Nfsp => match &self.prev_flow {
                Some(flow) => input.extend(flow.fraction_features()),
                None => input.extend(std::iter::repeat(0.0).take(self.flow_len)),
            },
        }
        input
    }

    /// Value variance signal and per-agent greedy actions, from one forward
    /// pass per pending agent. The signal is the mean over nonempty
    /// (population, local state) groups of the population variance of agent
    /// values max_u Q_x.
    fn values_and_greedy(
        &self,
        inputs: &[(usize, usize, usize, Vec<f64>)],
    ) -> Result<(f64, Vec<usize>), NnError> {
        let structure = self.env.structure();
        let mut groups: Vec<Vec<f64>> = Vec::new();
        let mut index: Vec<Vec<usize>> = Vec::new();
        let mut offset = 0;
        for pop in &structure.populations {
            index.push((0..pop.n_states()).map(|k| offset + k).collect());
            offset += pop.n_states();
        }
        groups.resize(offset, Vec::new());
        let mut greedy = Vec::with_capacity(inputs.len());
        for (p, i, k, input) in inputs {
            let agent = &self.agents[*p][*i];
            let q = agent.q.net.forward_eval(input)?;
            let legal = &q[..agent.n_legal(*k)];
            let (mut best_u, mut best) = (0, f64::NEG_INFINITY);
            for (u, &v) in legal.iter().enumerate() {
                if v > best {
                    best = v;
                    best_u = u;
                }
            }
            groups[index[*p][*k]].push(best);
            greedy.push(best_u);
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for g in &groups {
            if g.is_empty() {
                continue;
            }
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            let var = g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / g.len() as f64;
            sum += var;
            count += 1;
        }
        let nu = if count == 0 { 0.0 } else { sum / count as f64 };
        Ok((nu, greedy))
    }

    fn compute_nu(&self, inputs: &[(usize, usize, usize, Vec<f64>)]) -> Result<f64, NnError> {
        Ok(self.values_and_greedy(inputs)?.0)
    }

    /// One environment step with exploration, transition assembly and (after
    /// warmup) one round of minibatch updates. Returns the variance signal
    /// observed at the decision point.
    pub fn train_step(&mut self) -> Result<f64, TrainerError> {
        let pending = self.env.pending();
        let obs = self.env.global_features();
        let suggestion = match &self.central {
            Some(c) => Some(c.suggest(&obs)?),
            None => None,
        };
        let eps1 = self.config.eps1.value(self.step_count);
        let eps2 = self.config.eps2.value(self.step_count);

        // inputs first (immutable borrow of self), then actions
        let inputs: Vec<(usize, usize, usize, Vec<f64>)> = pending
            .iter()
            .map(|d| {
                (
                    d.agent.population,
                    d.agent.index,
                    d.local_state,
                    self.build_input(d.agent.population, d.local_state),
                )
            })
            .collect();
        let (nu, greedy) = self.values_and_greedy(&inputs)?;
        self.record_greedy_flow(&inputs, &greedy)?;

        let mut actions = Vec::with_capacity(pending.len());
        for (p, i, k, input) in &inputs {
            let (p, i, k) = (*p, *i, *k);
            // close out the agent's previous decision now that it reached
            // its next one
            let agent = &mut self.agents[p][i];
            if let Some(ctx) = agent.pending.take() {
                agent.buffer.push(Record {
                    input: ctx.input,
                    local_state: ctx.local_state,
                    action: ctx.action,
                    reward: ctx.accumulated_reward,
                    next_input: input.clone(),
                    next_state: k,
                    terminal: false,
                });
            }
            let action = match self.config.kind {
                LearnerKind::Vmq => {
                    use rand::Rng;
                    let follow: f64 = agent.action_rng.random_range(0.0..1.0);
                    if follow < eps1 {
                        let probs = self
                            .central
                            .as_ref()
                            .unwrap()
                            .suggest_block(suggestion.as_ref().unwrap(), p, k);
                        sample_categorical(&probs, &mut agent.action_rng)
                    } else {
                        agent.epsilon_greedy(input, k, eps2)?
                    }
                }
                LearnerKind::Il | LearnerKind::Mfq => agent.epsilon_greedy(input, k, eps2)?,
                LearnerKind::Nfsp => {
                    use rand::Rng;
                    let br: f64 = agent.action_rng.random_range(0.0..1.0);
                    if br < self.config.anticipatory {
                        let action = agent.epsilon_greedy(input, k, eps2)?;
                        if let Some(sup) = agent.supervised.as_mut() {
                            sup.push((input.clone(), action));
                        }
                        action
                    } else {
                        agent.sample_avg_policy(input, k)?
                    }
                }
            };
            self.agents[p][i].pending = Some(PendingContext {
                input: input.clone(),
                local_state: k,
                action,
                accumulated_reward: 0.0,
            });
            actions.push(action);
        }

        let outcome = self.env.step(&actions, &mut self.env_rng)?;
        self.absorb_outcome(&outcome)?;

        if self.step_count >= self.config.update_start {
            self.update_all()?;
        }
        if self.central.is_some() {
            // the variance credited to this suggestion is the one observed
            // after its consequences reached the agents' value estimates
            let nu_after = self.current_nu()?;
            let central = self.central.as_mut().unwrap();
            central.observe(CentralRecord {
                obs,
                action: outcome.flow.fraction_features(),
                nu: nu_after,
                next_obs: self.env.global_features(),
                terminal: outcome.episode_done && self.env.episodic(),
            });
        }
        self.step_count += 1;
        Ok(nu)
    }

    /// Accumulates the aggregated greedy choice of every pending agent into
    /// the trailing policy window.
    fn record_greedy_flow(
        &mut self,
        inputs: &[(usize, usize, usize, Vec<f64>)],
        greedy: &[usize],
    ) -> Result<(), TrainerError> {
        let assignments: Vec<crate::game::AgentAssignment> = inputs
            .iter()
            .zip(greedy)
            .map(|((p, _, k, _), &u)| crate::game::AgentAssignment {
                population: *p,
                local_state: *k,
                action: u,
            })
            .collect();
        let flow = crate::game::aggregate_actions(self.env.structure(), &assignments)
            .map_err(EnvError::from)?;
        if self.greedy_flows.len() == self.policy_window {
            self.greedy_flows.pop_front();
        }
        self.greedy_flows.push_back(flow);
        Ok(())
    }

    /// The extracted policy: element-wise mean of the trailing greedy flows.
    /// This is the aggregate of every agent's own deterministic policy,
    /// averaged over recent training steps.
    pub fn mean_greedy_flow(&self) -> Option<FlowDistribution> {
        if self.greedy_flows.is_empty() {
            return None;
        }
        let mut mean = FlowDistribution::zeros(self.env.structure());
        let n = self.greedy_flows.len() as f64;
        for flow in &self.greedy_flows {
            for (mp, fp) in mean.f.iter_mut().zip(&flow.f) {
                for (mk, fk) in mp.iter_mut().zip(fp) {
                    for (mu, fu) in mk.iter_mut().zip(fk) {
                        *mu += fu / n;
                    }
                }
            }
        }
        Some(mean)
    }

    /// Credits rewards, finalizes terminated agents and handles episode
    /// boundaries.
    fn absorb_outcome(&mut self, outcome: &StepOutcome) -> Result<(), TrainerError> {
        let mut step_total = 0.0;
        for &(agent, r) in &outcome.rewards {
            if let Some(ctx) = self.agents[agent.population][agent.index].pending.as_mut() {
                ctx.accumulated_reward += r;
            }
            step_total += r;
        }
        // mean reward per agent per step; envs that only emit rewards for a
        // subset of agents (assignments, movement charges) count the whole
        // fleet in the denominator so the metric tracks throughput
        let n_total: usize = self
            .env
            .structure()
            .populations
            .iter()
            .map(|p| p.n_agents)
            .sum();
        if self.reward_window.len() == self.reward_window_cap {
            self.reward_window.pop_front();
        }
        self.reward_window.push_back(step_total / n_total as f64);
        for &agent in &outcome.terminated {
            let a = &mut self.agents[agent.population][agent.index];
            if let Some(ctx) = a.pending.take() {
                let next_input = ctx.input.clone();
                let next_state = ctx.local_state;
                a.buffer.push(Record {
                    input: ctx.input,
                    local_state: ctx.local_state,
                    action: ctx.action,
                    reward: ctx.accumulated_reward,
                    next_input,
                    next_state,
                    terminal: true,
                });
            }
        }
        let episode_over = outcome.episode_done && self.env.episodic();
        self.prev_flow = Some(outcome.flow.clone());
        self.last_flow = Some(outcome.flow.clone());
        if episode_over {
            self.env.reset(&mut self.env_rng);
            self.prev_flow = None;
            // all agents should have terminated; drop any straggler context
            for row in &mut self.agents {
                for a in row {
                    a.pending = None;
                }
            }
        }
        Ok(())
    }

    fn update_all(&mut self) -> Result<(), TrainerError> {
        let gamma = self.config.gamma;
        let batch = self.config.batch;
        let stride = self.config.update_stride.max(1);
        let phase = self.step_count % stride;
        let mut slot = 0u64;
        for row in &mut self.agents {
            for a in row {
                if slot % stride == phase {
                    a.update(gamma, batch, &mut self.dropout_rng)?;
                    if self.config.kind == LearnerKind::Nfsp {
                        a.update_avg_policy(batch, &mut self.dropout_rng)?;
                    }
                }
                slot += 1;
            }
        }
        if let Some(central) = &mut self.central {
            central.update_sigma(gamma, batch, &mut self.dropout_rng)?;
            central.update_mu(batch, self.config.mu_entropy, &mut self.dropout_rng)?;
        }
        Ok(())
    }

    /// Trains for `budget` steps, emitting one metrics row every
    /// `metrics_every` steps (and at the final step). `gap_fn`, when given,
    /// maps the executed flow of the sampled step to an equilibrium gap.
    pub fn run(
        &mut self,
        budget: u64,
        metrics_every: u64,
        gap_fn: Option<&dyn Fn(&FlowDistribution) -> f64>,
    ) -> Result<Vec<MetricsRow>, TrainerError> {
        let every = metrics_every.max(1);
        let mut rows = Vec::new();
        for t in 0..budget {
            let nu = self.train_step()?;
            if (t + 1) % every == 0 || t + 1 == budget {
                rows.push(MetricsRow {
                    step: self.step_count,
                    mean_reward: self.mean_recent_reward(),
                    nu,
                    eps1: self.config.eps1.value(self.step_count),
                    eps2: self.config.eps2.value(self.step_count),
                    eps_gap: match (&gap_fn, &self.last_flow) {
                        (Some(f), Some(flow)) => Some(f(flow)),
                        _ => None,
                    },
                });
            }
        }
        Ok(rows)
    }

    pub fn mean_recent_reward(&self) -> f64 {
        if self.reward_window.is_empty() {
            0.0
        } else {
            self.reward_window.iter().sum::<f64>() / self.reward_window.len() as f64
        }
    }

    /// The central policy read off as a flow: suggestion probabilities times
    /// the mass currently present in each state. VMQ only.
    pub fn suggestion_flow(&self) -> Result<Option<FlowDistribution>, TrainerError> {
        let Some(central) = &self.central else {
            return Ok(None);
        };
        let probs = central.suggest(&self.env.global_features())?;
        let state = self.env.global_state();
        let structure = self.env.structure();
        let mut flow = FlowDistribution::zeros(structure);
        for (p, pop) in structure.populations.iter().enumerate() {
            for k in 0..pop.n_states() {
                let block = central.suggest_block(&probs, p, k);
                for (u, &prob) in block.iter().enumerate() {
                    flow.f[p][k][u] = prob * state.masses[p][k];
                }
            }
        }
        Ok(Some(flow))
    }

    /// Greedy rollout of one episode from a fresh reset; returns the executed
    /// flow of every step. Training state (buffers, contexts) is untouched.
    pub fn greedy_rollout(&mut self) -> Result<Vec<FlowDistribution>, TrainerError> {
        let mut rng = self.eval_rng.clone();
        self.env.reset(&mut rng);
        let mut flows = Vec::new();
        loop {
            let actions = self.greedy_actions()?;
            let outcome = self.env.step(&actions, &mut rng)?;
            flows.push(outcome.flow);
            if outcome.episode_done {
                break;
            }
        }
        self.env.reset(&mut self.env_rng);
        self.prev_flow = None;
        Ok(flows)
    }

    /// Greedy evaluation over `steps` environment steps (for non-episodic
    /// environments); returns mean reward per agent per step.
    pub fn evaluate_mean_reward(&mut self, steps: u64) -> Result<f64, TrainerError> {
        let mut rng = self.eval_rng.clone();
        let n_total: usize = self
            .env
            .structure()
            .populations
            .iter()
            .map(|p| p.n_agents)
            .sum();
        let mut total = 0.0;
        for _ in 0..steps {
            let actions = self.greedy_actions()?;
            let outcome = self.env.step(&actions, &mut rng)?;
            total += outcome.rewards.iter().map(|(_, r)| r).sum::<f64>();
            if outcome.episode_done && self.env.episodic() {
                self.env.reset(&mut rng);
            }
            self.prev_flow = Some(outcome.flow);
        }
        Ok(total / steps as f64 / n_total as f64)
    }

    fn greedy_actions(&mut self) -> Result<Vec<usize>, TrainerError> {
        let pending = self.env.pending();
        let inputs: Vec<(usize, usize, usize, Vec<f64>)> = pending
            .iter()
            .map(|d| {
                (
                    d.agent.population,
                    d.agent.index,
                    d.local_state,
                    self.build_input(d.agent.population, d.local_state),
                )
            })
            .collect();
        let mut actions = Vec::with_capacity(inputs.len());
        for (p, i, k, input) in &inputs {
            actions.push(self.agents[*p][*i].greedy_action(input, *k)?);
        }
        Ok(actions)
    }

    /// Mean value (max_u Q) over a population's agents at the current
    /// observation in the given local state.
    pub fn mean_agent_value(&self, population: usize, local_state: usize) -> Result<f64, NnError> {
        let input = self.build_input(population, local_state);
        let row = &self.agents[population];
        let sum: f64 = row
            .iter()
            .map(|a| a.value(&input, local_state))
            .collect::<Result<Vec<_>, _>>()?
            .iter()
            .sum();
        Ok(sum / row.len() as f64)
    }

    /// Variance signal at the current observation (all agents in their
    /// reset states), for post-training comparisons.
    pub fn current_nu(&self) -> Result<f64, NnError> {
        let pending = self.env.pending();
        let inputs: Vec<(usize, usize, usize, Vec<f64>)> = pending
            .iter()
            .map(|d| {
                (
                    d.agent.population,
                    d.agent.index,
                    d.local_state,
                    self.build_input(d.agent.population, d.local_state),
                )
            })
            .collect();
        self.compute_nu(&inputs)
    }
}

/// Draws an index from a probability vector.
fn sample_categorical(probs: &[f64], rng: &mut StreamRng) -> usize {
    use rand::Rng;
    let draw: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}
