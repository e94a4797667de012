//! DDPG over a relaxed action: the actor emits one selector score per slot
//! of the padded candidate table (tanh) and the power parameters (sigmoid);
//! the executed candidate is the best-scoring present one.

use rand_chacha::ChaCha8Rng;

use crate::env::DecisionContext;
use crate::error::{Error, Result};
use crate::util::rng_for;

use super::mlp::descend;
use super::{
    sigmoid, Agent, AgentConfig, AgentDims, AgentKind, AgentLoss, Choice, Decision, InverseTime, Mlp, NextDecision,
    OuNoise, ReplayBuffer, TargetMode, Transition,
};

pub struct Ddpg {
    pub cfg: AgentConfig,
    pub dims: AgentDims,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    buffer: ReplayBuffer<Transition>,
    noise: OuNoise,
    rng: ChaCha8Rng,
    updates: u64,
}

/// One training sample: state (with the candidate mask appended), action
/// vector, reward and next state.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpgSample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next: Option<Vec<f64>>,
}

/// Squashes raw actor outputs: tanh on the first `table` entries, sigmoid on
/// the rest. Returns the action and the elementwise derivative.
pub fn squash(raw: &[f64], table: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(raw.len());
    let mut d = Vec::with_capacity(raw.len());
    for (i, &z) in raw.iter().enumerate() {
        if i < table {
            let t = z.tanh();
            a.push(t);
            d.push(1.0 - t * t);
        } else {
            let s = sigmoid(z);
            a.push(s);
            d.push(s * (1.0 - s));
        }
    }
    (a, d)
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn actor_actions(actor: &Mlp, states: &[f64], n: usize, table: usize) -> Result<Vec<f64>> {
    let t = actor.forward_batch(states, n)?;
    let dim = actor.output_dim();
    Ok(t.output().chunks(dim).flat_map(|r| squash(r, table).0).collect())
}

/// Critic TD loss against the target actor and critic, with its gradient.
pub fn ddpg_critic_loss(
    critic: &Mlp,
    actor_target: &Mlp,
    critic_target: &Mlp,
    batch: &[DdpgSample],
    gamma: f64,
    table: usize,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    let nexts: Vec<&Vec<f64>> = batch.iter().filter_map(|s| s.next.as_ref()).collect();
    let flat: Vec<f64> = nexts.iter().flat_map(|s| s.iter().copied()).collect();
    let acts = actor_actions(actor_target, &flat, nexts.len(), table)?;
    let adim = actor_target.output_dim();
    let qin: Vec<f64> = nexts
        .iter()
        .enumerate()
        .flat_map(|(i, s)| join(s, &acts[i * adim..(i + 1) * adim]))
        .collect();
    let qn = critic_target.forward_batch(&qin, nexts.len())?;
    let mut k = 0;
    let ys: Vec<f64> = batch
        .iter()
        .map(|s| {
            s.reward
                + match s.next {
                    Some(_) => {
                        k += 1;
                        gamma * qn.output()[k - 1]
                    }
                    None => 0.0,
                }
        })
        .collect();
    let x: Vec<f64> = batch.iter().flat_map(|s| join(&s.state, &s.action)).collect();
    let tape = critic.forward_batch(&x, batch.len())?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dy = Vec::with_capacity(batch.len());
    for (q, y) in tape.output().iter().zip(&ys) {
        loss += (q - y) * (q - y) / n;
        dy.push(2.0 * (q - y) / n);
    }
    let mut grad = vec![0.0; critic.num_params()];
    critic.backward(&tape, &dy, &mut grad)?;
    Ok((loss, grad))
}

/// −mean Q(s, μ(s)) and its gradient with respect to the actor.
pub fn ddpg_actor_loss(actor: &Mlp, critic: &Mlp, states: &[Vec<f64>], table: usize) -> Result<(f64, Vec<f64>)> {
    if states.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    let n = states.len();
    let flat: Vec<f64> = states.iter().flatten().copied().collect();
    let at = actor.forward_batch(&flat, n)?;
    let adim = actor.output_dim();
    let sq: Vec<(Vec<f64>, Vec<f64>)> = at.output().chunks(adim).map(|r| squash(r, table)).collect();
    let qin: Vec<f64> = states.iter().zip(&sq).flat_map(|(s, (a, _))| join(s, a)).collect();
    let ct = critic.forward_batch(&qin, n)?;
    let loss = -ct.output().iter().sum::<f64>() / n as f64;
    let mut scratch = vec![0.0; critic.num_params()];
    let dq = vec![-1.0 / n as f64; n];
    let dx = critic.backward(&ct, &dq, &mut scratch)?;
    let in_dim = critic.input_dim();
    let s_dim = in_dim - adim;
    let mut dz = Vec::with_capacity(n * adim);
    for (i, (_, d)) in sq.iter().enumerate() {
        for j in 0..adim {
            dz.push(dx[i * in_dim + s_dim + j] * d[j]);
        }
    }
    let mut grad = vec![0.0; actor.num_params()];
    actor.backward(&at, &dz, &mut grad)?;
    Ok((loss, grad))
}

impl Ddpg {
    pub fn new(cfg: AgentConfig, dims: AgentDims) -> Result<Self> {
        let mut rng = rng_for(cfg.seed, &[0xdd]);
        let s = dims.state + dims.table;
        let a = dims.table + dims.power;
        let actor = Mlp::new(&cfg.layers(s, a), &mut rng)?;
        let critic = Mlp::new(&cfg.layers(s + a, 1), &mut rng)?;
        let buffer = ReplayBuffer::new(cfg.replay_capacity)?;
        let noise = OuNoise::new(a, cfg.ou_theta, cfg.ou_sigma, cfg.ou_mu);
        Ok(Ddpg {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            buffer,
            noise,
            rng,
            cfg,
            dims,
            updates: 0,
        })
    }

    /// Decision state with the candidate mask appended.
    pub fn view(&self, ctx: &DecisionContext) -> Vec<f64> {
        let mut s = ctx.state.clone();
        s.extend(ctx.mask().into_iter().map(|m| m as u8 as f64));
        s
    }

    fn sample(t: &Transition) -> Option<DdpgSample> {
        let d = t.decisions.first()?.as_ref()?;
        Some(DdpgSample {
            state: d.state.clone(),
            action: d.cont.clone(),
            reward: t.rewards[0],
            next: match t.next.first() {
                Some(Some(nd)) if !t.done => Some(nd.state.clone()),
                _ => None,
            },
        })
    }
}

impl Agent for Ddpg {
    fn kind(&self) -> AgentKind {
        AgentKind::Ddpg
    }

    fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn begin_episode(&mut self, p: f64) {
        self.noise.sigma = self.cfg.exploration(AgentKind::Ddpg, p).1;
        self.noise.reset();
    }

    fn select(&mut self, ctx: &DecisionContext, _group: usize, explore: bool) -> Result<Choice> {
        if ctx.candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let s = self.view(ctx);
        let mut a = actor_actions(&self.actor, &s, 1, self.dims.table)?;
        if explore {
            let z = self.noise.step(&mut self.rng);
            for (i, (x, n)) in a.iter_mut().zip(z).enumerate() {
                let (lo, hi) = if i < self.dims.table { (-1.0, 1.0) } else { (0.0, 1.0) };
                *x = (*x + n).clamp(lo, hi);
            }
        }
        let mut best = (ctx.candidates[0].id, f64::NEG_INFINITY);
        for c in &ctx.candidates {
            if a[c.id] > best.1 {
                best = (c.id, a[c.id]);
            }
        }
        let u = a[self.dims.table..].to_vec();
        let feats = ctx.find(best.0).map(|c| c.features.to_vec()).unwrap_or_default();
        Ok(Choice { disc: best.0, u, decision: Decision { state: s, disc: best.0, features: feats, cont: a } })
    }

    fn next_view(&self, ctx: &DecisionContext) -> NextDecision {
        NextDecision { state: self.view(ctx), candidates: Vec::new() }
    }

    fn store(&mut self, t: Transition) {
        if self.cfg.gate_for(AgentKind::Ddpg) && !t.feasible {
            return;
        }
        if t.decisions.first().is_some_and(|d| d.is_some()) {
            self.buffer.push(t);
        }
    }

    fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    fn train(&mut self) -> Result<Option<Vec<AgentLoss>>> {
        if self.buffer.len() < self.cfg.batch {
            return Ok(None);
        }
        let batch: Vec<DdpgSample> =
            self.buffer.sample(&mut self.rng, self.cfg.batch)?.into_iter().filter_map(Self::sample).collect();
        let table = self.dims.table;
        let (closs, mut cg) =
            ddpg_critic_loss(&self.critic, &self.actor_target, &self.critic_target, &batch, self.cfg.discount, table)?;
        let clr = InverseTime { initial: self.cfg.critic_lr, decay: self.cfg.lr_decay }.at(self.updates);
        descend(&mut self.critic, &mut cg, clr, self.cfg.grad_clip)?;
        let states: Vec<Vec<f64>> = batch.iter().map(|s| s.state.clone()).collect();
        let (aloss, mut ag) = ddpg_actor_loss(&self.actor, &self.critic, &states, table)?;
        let alr = InverseTime { initial: self.cfg.actor_lr, decay: self.cfg.lr_decay }.at(self.updates);
        descend(&mut self.actor, &mut ag, alr, self.cfg.grad_clip)?;
        self.updates += 1;
        match self.cfg.target_mode {
            TargetMode::Hard if self.updates % self.cfg.target_update_every.max(1) == 0 => {
                self.actor_target.copy_from(&self.actor)?;
                self.critic_target.copy_from(&self.critic)?;
            }
            TargetMode::Soft => {
                self.actor_target.soft_update(&self.actor, self.cfg.soft_tau)?;
                self.critic_target.soft_update(&self.critic, self.cfg.soft_tau)?;
            }
            _ => {}
        }
        Ok(Some(vec![AgentLoss { critic: closs, actor: aloss }]))
    }

    fn nets(&self) -> Vec<(String, Mlp)> {
        vec![
            ("actor".into(), self.actor.clone()),
            ("critic".into(), self.critic.clone()),
            ("actor_target".into(), self.actor_target.clone()),
            ("critic_target".into(), self.critic_target.clone()),
        ]
    }

    fn load_nets(&mut self, nets: &[(String, Mlp)]) -> Result<()> {
        for (name, net) in nets {
            let slot = match name.as_str() {
                "actor" => &mut self.actor,
                "critic" => &mut self.critic,
                "actor_target" => &mut self.actor_target,
                "critic_target" => &mut self.critic_target,
                _ => return Err(Error::Parse(format!("unexpected network {name}"))),
            };
            slot.copy_from(net)?;
        }
        Ok(())
    }

    fn updates(&self) -> u64 {
        self.updates
    }
}
