//! Deep Q-network over (state, candidate) inputs with one output per
//! quantized power level; the same level applies to every subcarrier.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::DecisionContext;
use crate::error::{Error, Result};
use crate::util::rng_for;

use super::mlp::descend;
use super::{
    Agent, AgentConfig, AgentDims, AgentKind, AgentLoss, Choice, Decision, InverseTime, Mlp, ReplayBuffer,
    TargetMode, Transition,
};

pub struct Dqn {
    pub cfg: AgentConfig,
    pub dims: AgentDims,
    pub q: Mlp,
    pub target: Mlp,
    buffer: ReplayBuffer<Transition>,
    rng: ChaCha8Rng,
    epsilon: f64,
    updates: u64,
}

/// One training sample for [`dqn_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct DqnSample {
    /// State followed by the chosen candidate's features.
    pub input: Vec<f64>,
    pub level: usize,
    pub reward: f64,
    /// Inputs of every next candidate; empty when terminal.
    pub next: Vec<Vec<f64>>,
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Mean squared TD error with targets y = r + γ·max Q'(s', ·) and its
/// gradient with respect to the online parameters.
pub fn dqn_loss(q: &Mlp, target: &Mlp, batch: &[DqnSample], gamma: f64) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    let levels = q.output_dim();
    let rows: Vec<f64> = batch.iter().flat_map(|s| s.next.iter().flatten().copied()).collect();
    let n_next: usize = batch.iter().map(|s| s.next.len()).sum();
    let next_q = target.forward_batch(&rows, n_next)?;
    let mut ys = Vec::with_capacity(batch.len());
    let mut off = 0;
    for s in batch {
        let mut best = f64::NEG_INFINITY;
        for _ in 0..s.next.len() {
            for &v in &next_q.output()[off * levels..(off + 1) * levels] {
                best = best.max(v);
            }
            off += 1;
        }
        ys.push(s.reward + if s.next.is_empty() { 0.0 } else { gamma * best });
    }
    let x: Vec<f64> = batch.iter().flat_map(|s| s.input.iter().copied()).collect();
    let tape = q.forward_batch(&x, batch.len())?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dy = vec![0.0; batch.len() * levels];
    for (i, s) in batch.iter().enumerate() {
        if s.level >= levels {
            return Err(Error::Index { what: "power level", index: s.level, len: levels });
        }
        let e = tape.output()[i * levels + s.level] - ys[i];
        loss += e * e / n;
        dy[i * levels + s.level] = 2.0 * e / n;
    }
    let mut grad = vec![0.0; q.num_params()];
    q.backward(&tape, &dy, &mut grad)?;
    Ok((loss, grad))
}

impl Dqn {
    pub fn new(cfg: AgentConfig, dims: AgentDims) -> Result<Self> {
        let mut rng = rng_for(cfg.seed, &[0xd9]);
        let q = Mlp::new(&cfg.layers(dims.state + dims.features, cfg.power_levels), &mut rng)?;
        let target = q.clone();
        let buffer = ReplayBuffer::new(cfg.replay_capacity)?;
        Ok(Dqn { epsilon: cfg.epsilon_start, cfg, dims, q, target, buffer, rng, updates: 0 })
    }

    fn level_u(&self, level: usize) -> f64 {
        level as f64 / (self.cfg.power_levels - 1) as f64
    }

    fn sample(&self, t: &Transition) -> Option<DqnSample> {
        let d = t.decisions.first()?.as_ref()?;
        let next = match t.next.first() {
            Some(Some(nd)) if !t.done => nd.candidates.iter().map(|(_, f)| join(&nd.state, f)).collect(),
            _ => Vec::new(),
        };
        Some(DqnSample {
            input: join(&d.state, &d.features),
            level: d.cont.first().map_or(0, |l| *l as usize),
            reward: t.rewards[0],
            next,
        })
    }
}

impl Agent for Dqn {
    fn kind(&self) -> AgentKind {
        AgentKind::Dqn
    }

    fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn begin_episode(&mut self, p: f64) {
        self.epsilon = self.cfg.exploration(AgentKind::Dqn, p).0;
    }

    fn select(&mut self, ctx: &DecisionContext, _group: usize, explore: bool) -> Result<Choice> {
        if ctx.candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        let levels = self.cfg.power_levels;
        let (idx, level) = if explore && self.rng.random_bool(self.epsilon.clamp(0.0, 1.0)) {
            (self.rng.random_range(0..ctx.candidates.len()), self.rng.random_range(0..levels))
        } else {
            let x: Vec<f64> = ctx.candidates.iter().flat_map(|c| join(&ctx.state, &c.features)).collect();
            let out = self.q.forward_batch(&x, ctx.candidates.len())?;
            let mut best = (0, 0, f64::NEG_INFINITY);
            for (i, row) in out.output().chunks(levels).enumerate() {
                for (l, &v) in row.iter().enumerate() {
                    if v > best.2 {
                        best = (i, l, v);
                    }
                }
            }
            (best.0, best.1)
        };
        let c = &ctx.candidates[idx];
        Ok(Choice {
            disc: c.id,
            u: vec![self.level_u(level); ctx.power_dim()],
            decision: Decision {
                state: ctx.state.clone(),
                disc: c.id,
                features: c.features.to_vec(),
                cont: vec![level as f64],
            },
        })
    }

    fn store(&mut self, t: Transition) {
        if self.cfg.gate_for(AgentKind::Dqn) && !t.feasible {
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
        let batch: Vec<DqnSample> = self
            .buffer
            .sample(&mut self.rng, self.cfg.batch)?
            .into_iter()
            .filter_map(|t| self.sample(t))
            .collect();
        let (loss, mut grad) = dqn_loss(&self.q, &self.target, &batch, self.cfg.discount)?;
        let lr = InverseTime { initial: self.cfg.critic_lr, decay: self.cfg.lr_decay }.at(self.updates);
        descend(&mut self.q, &mut grad, lr, self.cfg.grad_clip)?;
        self.updates += 1;
        match self.cfg.target_mode {
            TargetMode::Hard if self.updates % self.cfg.target_update_every.max(1) == 0 => self.target.copy_from(&self.q)?,
            TargetMode::Soft => self.target.soft_update(&self.q, self.cfg.soft_tau)?,
            _ => {}
        }
        Ok(Some(vec![AgentLoss { critic: loss, actor: 0.0 }]))
    }

    fn nets(&self) -> Vec<(String, Mlp)> {
        vec![("q".into(), self.q.clone()), ("q_target".into(), self.target.clone())]
    }

    fn load_nets(&mut self, nets: &[(String, Mlp)]) -> Result<()> {
        for (name, net) in nets {
            let slot = match name.as_str() {
                "q" => &mut self.q,
                "q_target" => &mut self.target,
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
