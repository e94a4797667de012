//! Compound-action actor-critic. For every candidate the actor proposes
//! power parameters, the critic scores the (candidate, powers) pair and the
//! best pair is executed. With `N > 1` agents each critic is centralized: it
//! reads one block `[state, candidate features, powers]` per agent, while
//! execution only fills the acting agent's block.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::DecisionContext;
use crate::error::{Error, Result};
use crate::util::rng_for;

use super::mlp::descend;
use super::{
    sigmoid, Agent, AgentConfig, AgentDims, AgentKind, AgentLoss, Choice, Decision, InverseTime, Mlp, NextDecision,
    OuNoise, ReplayBuffer, TargetMode, Transition,
};

/// Networks of one agent.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
}

pub struct Ca2c {
    pub cfg: AgentConfig,
    pub dims: AgentDims,
    pub agents: Vec<AgentNets>,
    kind: AgentKind,
    gate: bool,
    buffer: ReplayBuffer<Transition>,
    noise: Vec<OuNoise>,
    rng: ChaCha8Rng,
    epsilon: f64,
    updates: u64,
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Evaluates every candidate: powers `u_d = π(s, d)`, score
/// `Q(…, [s, d, u_d] in block `slot`, …)` with the other blocks zero. Returns
/// `(candidate id, powers, score)` of the best one; ties go to the lowest id.
pub fn ca2c_select(
    critic: &Mlp,
    actor: &Mlp,
    state: &[f64],
    candidates: &[(usize, Vec<f64>)],
    slot: usize,
    agents: usize,
) -> Result<(usize, Vec<f64>, f64)> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    let n = candidates.len();
    let x: Vec<f64> = candidates.iter().flat_map(|(_, f)| join(state, f)).collect();
    let at = actor.forward_batch(&x, n)?;
    let p = actor.output_dim();
    let us: Vec<Vec<f64>> = at.output().chunks(p).map(|r| r.iter().map(|z| sigmoid(*z)).collect()).collect();
    let width = critic.input_dim();
    if width % agents != 0 || slot >= agents {
        return Err(Error::Shape { expected: agents, got: width });
    }
    let bw = width / agents;
    let local = if agents > 1 { Some(critic.input_slice(slot * bw, bw)?) } else { None };
    let mut rows = Vec::with_capacity(n * bw);
    for ((_, f), u) in candidates.iter().zip(&us) {
        let start = rows.len();
        rows.extend_from_slice(state);
        rows.extend_from_slice(f);
        rows.extend_from_slice(u);
        if rows.len() - start != bw {
            return Err(Error::Shape { expected: bw, got: rows.len() - start });
        }
    }
    let q = local.as_ref().unwrap_or(critic).forward_batch(&rows, n)?;
    let mut best = 0;
    for i in 1..n {
        let (qi, qb) = (q.output()[i], q.output()[best]);
        if qi > qb || (qi == qb && candidates[i].0 < candidates[best].0) {
            best = i;
        }
    }
    Ok((candidates[best].0, us[best].clone(), q.output()[best]))
}

/// Critic sample: joint input as the critic sees it and the joint target
/// input, both already masked.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticItem {
    pub input: Vec<f64>,
    pub reward: f64,
    pub next: Option<Vec<f64>>,
}

/// Actor sample: the joint input, the offset of the acting agent's block
/// and the actor input `[state, features]` whose powers fill that block.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorItem {
    pub input: Vec<f64>,
    pub block: usize,
    pub actor_in: Vec<f64>,
}

pub fn ca2c_critic_loss(critic: &Mlp, target: &Mlp, items: &[CriticItem], gamma: f64) -> Result<(f64, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    let nexts: Vec<f64> = items.iter().filter_map(|i| i.next.as_ref()).flatten().copied().collect();
    let n_next = items.iter().filter(|i| i.next.is_some()).count();
    let qn = target.forward_batch(&nexts, n_next)?;
    let mut k = 0;
    let mut ys = Vec::with_capacity(items.len());
    for it in items {
        let boot = if it.next.is_some() {
            k += 1;
            gamma * qn.output()[k - 1]
        } else {
            0.0
        };
        ys.push(it.reward + boot);
    }
    let x: Vec<f64> = items.iter().flat_map(|i| i.input.iter().copied()).collect();
    let tape = critic.forward_batch(&x, items.len())?;
    let n = items.len() as f64;
    let mut loss = 0.0;
    let mut dy = Vec::with_capacity(items.len());
    for (q, y) in tape.output().iter().zip(&ys) {
        loss += (q - y) * (q - y) / n;
        dy.push(2.0 * (q - y) / n);
    }
    let mut grad = vec![0.0; critic.num_params()];
    critic.backward(&tape, &dy, &mut grad)?;
    Ok((loss, grad))
}

/// −mean Q with the acting block's powers replaced by the actor's output.
pub fn ca2c_actor_loss(actor: &Mlp, critic: &Mlp, items: &[ActorItem]) -> Result<(f64, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::Empty("minibatch"));
    }
    let n = items.len();
    let p = actor.output_dim();
    let x: Vec<f64> = items.iter().flat_map(|i| i.actor_in.iter().copied()).collect();
    let at = actor.forward_batch(&x, n)?;
    let us: Vec<f64> = at.output().iter().map(|z| sigmoid(*z)).collect();
    let width = critic.input_dim();
    let mut rows = Vec::with_capacity(n * width);
    for (i, it) in items.iter().enumerate() {
        let mut row = it.input.clone();
        let off = it.block + it.actor_in.len();
        row[off..off + p].copy_from_slice(&us[i * p..(i + 1) * p]);
        rows.extend(row);
    }
    let ct = critic.forward_batch(&rows, n)?;
    let loss = -ct.output().iter().sum::<f64>() / n as f64;
    let mut scratch = vec![0.0; critic.num_params()];
    let dx = critic.backward(&ct, &vec![-1.0 / n as f64; n], &mut scratch)?;
    let mut dz = Vec::with_capacity(n * p);
    for (i, it) in items.iter().enumerate() {
        let off = i * width + it.block + it.actor_in.len();
        for j in 0..p {
            let u = us[i * p + j];
            dz.push(dx[off + j] * u * (1.0 - u));
        }
    }
    let mut grad = vec![0.0; actor.num_params()];
    actor.backward(&at, &dz, &mut grad)?;
    Ok((loss, grad))
}

impl Ca2c {
    pub fn new(cfg: AgentConfig, dims: AgentDims, agents: usize, gate: bool, kind: AgentKind) -> Result<Self> {
        if agents == 0 {
            return Err(Error::Config("at least one agent".into()));
        }
        let mut rng = rng_for(cfg.seed, &[0xca2c]);
        let bw = Self::block_width(&dims);
        let mut nets = Vec::with_capacity(agents);
        for _ in 0..agents {
            let actor = Mlp::new(&cfg.layers(dims.state + dims.features, dims.power), &mut rng)?;
            let critic = Mlp::new(&cfg.layers(agents * bw, 1), &mut rng)?;
            nets.push(AgentNets { actor_target: actor.clone(), critic_target: critic.clone(), actor, critic });
        }
        let noise = (0..agents).map(|_| OuNoise::new(dims.power, cfg.ou_theta, cfg.ou_sigma, cfg.ou_mu)).collect();
        Ok(Ca2c {
            buffer: ReplayBuffer::new(cfg.replay_capacity)?,
            epsilon: cfg.epsilon_start,
            cfg,
            dims,
            agents: nets,
            kind,
            gate,
            noise,
            rng,
            updates: 0,
        })
    }

    /// |s_n| + |a_n| with a_n = (candidate features, powers).
    pub fn block_width(dims: &AgentDims) -> usize {
        dims.state + dims.features + dims.power
    }

    pub fn critic_width(&self) -> usize {
        self.agents[0].critic.input_dim()
    }

    pub fn storage_gate(&self) -> bool {
        self.gate
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition> {
        &self.buffer
    }

    fn assemble(blocks: &[Option<Vec<f64>>], visible: &[bool], bw: usize) -> Vec<f64> {
        let mut row = vec![0.0; blocks.len() * bw];
        for (m, b) in blocks.iter().enumerate() {
            if let (Some(b), true) = (b, visible[m]) {
                row[m * bw..(m + 1) * bw].copy_from_slice(b);
            }
        }
        row
    }

    /// Next joint blocks chosen by the target networks.
    fn next_blocks(&self, t: &Transition) -> Result<Option<Vec<Option<Vec<f64>>>>> {
        if t.done || t.next.iter().all(|n| n.is_none()) {
            return Ok(None);
        }
        let agents = self.agents.len();
        let mut out = vec![None; agents];
        for (m, nd) in t.next.iter().enumerate() {
            let Some(nd) = nd else { continue };
            let net = &self.agents[m];
            let (id, u, _) = ca2c_select(&net.critic_target, &net.actor_target, &nd.state, &nd.candidates, m, agents)?;
            let f = &nd.candidates.iter().find(|c| c.0 == id).expect("selected candidate").1;
            out[m] = Some([nd.state.as_slice(), f, &u].concat());
        }
        Ok(Some(out))
    }
}

impl Agent for Ca2c {
    fn kind(&self) -> AgentKind {
        self.kind
    }

    fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    fn groups(&self) -> usize {
        self.agents.len()
    }

    fn begin_episode(&mut self, p: f64) {
        let (eps, sigma) = self.cfg.exploration(self.kind, p);
        self.epsilon = eps;
        for n in &mut self.noise {
            n.sigma = sigma;
            n.reset();
        }
    }

    fn select(&mut self, ctx: &DecisionContext, group: usize, explore: bool) -> Result<Choice> {
        let agents = self.agents.len();
        let net = self.agents.get(group).ok_or(Error::Index { what: "agent", index: group, len: agents })?;
        let cands: Vec<(usize, Vec<f64>)> = ctx.candidates.iter().map(|c| (c.id, c.features.to_vec())).collect();
        let (mut id, mut u, _) = ca2c_select(&net.critic, &net.actor, &ctx.state, &cands, group, agents)?;
        if explore {
            if self.rng.random_bool(self.epsilon.clamp(0.0, 1.0)) {
                let (rid, f) = &cands[self.rng.random_range(0..cands.len())];
                id = *rid;
                let out = net.actor.forward(&join(&ctx.state, f))?;
                u = out.iter().map(|z| sigmoid(*z)).collect();
            }
            let z = self.noise[group].step(&mut self.rng);
            for (x, n) in u.iter_mut().zip(z.iter()) {
                *x = (*x + n).clamp(0.0, 1.0);
            }
        }
        let features = ctx.find(id).map(|c| c.features.to_vec()).unwrap_or_default();
        Ok(Choice {
            disc: id,
            u: u.clone(),
            decision: Decision { state: ctx.state.clone(), disc: id, features, cont: u },
        })
    }

    fn store(&mut self, t: Transition) {
        if self.gate && !t.feasible {
            return;
        }
        if t.decisions.iter().any(|d| d.is_some()) {
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
        let agents = self.agents.len();
        let bw = Self::block_width(&self.dims);
        let batch: Vec<Transition> =
            self.buffer.sample(&mut self.rng, self.cfg.batch)?.into_iter().cloned().collect();
        let mut prepared = Vec::with_capacity(batch.len());
        for t in &batch {
            let blocks: Vec<Option<Vec<f64>>> = t
                .decisions
                .iter()
                .map(|d| d.as_ref().map(|d| [d.state.as_slice(), &d.features, &d.cont].concat()))
                .collect();
            let next = self.next_blocks(t)?;
            prepared.push((blocks, next));
        }
        let mut losses = Vec::with_capacity(agents);
        let clr = InverseTime { initial: self.cfg.critic_lr, decay: self.cfg.lr_decay }.at(self.updates);
        let alr = InverseTime { initial: self.cfg.actor_lr, decay: self.cfg.lr_decay }.at(self.updates);
        for n in 0..agents {
            let mut critic_items = Vec::with_capacity(batch.len());
            let mut actor_items = Vec::new();
            for (t, (blocks, next)) in batch.iter().zip(&prepared) {
                let visible: Vec<bool> =
                    (0..agents).map(|m| m == n || !self.rng.random_bool(self.cfg.mask_prob.clamp(0.0, 1.0))).collect();
                let input = Self::assemble(blocks, &visible, bw);
                critic_items.push(CriticItem {
                    input: input.clone(),
                    reward: t.rewards[n],
                    next: next.as_ref().map(|nb| Self::assemble(nb, &visible, bw)),
                });
                if let Some(d) = &t.decisions[n] {
                    actor_items.push(ActorItem { input, block: n * bw, actor_in: join(&d.state, &d.features) });
                }
            }
            let net = &mut self.agents[n];
            let (closs, mut cg) = ca2c_critic_loss(&net.critic, &net.critic_target, &critic_items, self.cfg.discount)?;
            descend(&mut net.critic, &mut cg, clr, self.cfg.grad_clip)?;
            let mut aloss = 0.0;
            if !actor_items.is_empty() {
                let (l, mut ag) = ca2c_actor_loss(&net.actor, &net.critic, &actor_items)?;
                descend(&mut net.actor, &mut ag, alr, self.cfg.grad_clip)?;
                aloss = l;
            }
            losses.push(AgentLoss { critic: closs, actor: aloss });
        }
        self.updates += 1;
        for net in &mut self.agents {
            match self.cfg.target_mode {
                TargetMode::Hard if self.updates % self.cfg.target_update_every.max(1) == 0 => {
                    net.actor_target.copy_from(&net.actor)?;
                    net.critic_target.copy_from(&net.critic)?;
                }
                TargetMode::Soft => {
                    net.actor_target.soft_update(&net.actor, self.cfg.soft_tau)?;
                    net.critic_target.soft_update(&net.critic, self.cfg.soft_tau)?;
                }
                _ => {}
            }
        }
        Ok(Some(losses))
    }

    fn next_view(&self, ctx: &DecisionContext) -> NextDecision {
        NextDecision::from_context(ctx)
    }

    fn nets(&self) -> Vec<(String, Mlp)> {
        let mut out = Vec::new();
        for (n, a) in self.agents.iter().enumerate() {
            out.push((format!("actor{n}"), a.actor.clone()));
            out.push((format!("critic{n}"), a.critic.clone()));
            out.push((format!("actor_target{n}"), a.actor_target.clone()));
            out.push((format!("critic_target{n}"), a.critic_target.clone()));
        }
        out
    }

    fn load_nets(&mut self, nets: &[(String, Mlp)]) -> Result<()> {
        for (name, net) in nets {
            let split = name.find(|c: char| c.is_ascii_digit()).ok_or_else(|| Error::Parse(format!("bad network {name}")))?;
            let idx: usize = name[split..].parse().map_err(|_| Error::Parse(format!("bad network {name}")))?;
            let len = self.agents.len();
            let a = self.agents.get_mut(idx).ok_or(Error::Index { what: "agent", index: idx, len })?;
            let slot = match &name[..split] {
                "actor" => &mut a.actor,
                "critic" => &mut a.critic,
                "actor_target" => &mut a.actor_target,
                "critic_target" => &mut a.critic_target,
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
