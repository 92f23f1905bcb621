use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::optim::Adam;
use super::{soft_target_update, Algo, LearnerConfig, TargetRule};
use crate::approx::{
    fingerprint_embed, fingerprint_embed_on_tape, ActionScale, ActionValue, Bound, CriticNet, DeterministicPolicy,
    FingerprintProbes, GaussianPolicy, Matrix, ParamSet, Tape, Var, OUTPUT_LAYER_SCALE,
};
use crate::buffer::Batch;
use crate::envcore::MdpSpec;
use crate::error::{check_dim, check_finite, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    Gaussian(GaussianPolicy),
    Deterministic(DeterministicPolicy),
}

impl Actor {
    pub fn net(&self) -> &crate::approx::MlpSpec {
        match self {
            Self::Gaussian(p) => &p.net,
            Self::Deterministic(p) => &p.net,
        }
    }

    pub fn scale(&self) -> &ActionScale {
        match self {
            Self::Gaussian(p) => &p.scale,
            Self::Deterministic(p) => &p.scale,
        }
    }
}

/// What a critic update regresses towards.
#[derive(Clone, Copy)]
pub struct Objective<'a> {
    /// One reward per batch row.
    pub rewards: &'a [f64],
    pub rule: TargetRule,
    /// Value function whose fingerprint conditions the critics. Required
    /// exactly when the learner was built with probes.
    pub condition_on: Option<&'a dyn ActionValue>,
}

impl<'a> Objective<'a> {
    /// Environment reward with the additive Bellman target.
    pub fn task(batch: &'a Batch) -> Self {
        Self {
            rewards: &batch.rewards,
            rule: TargetRule::Additive,
            condition_on: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    /// SAC temperature after the update.
    pub alpha: Option<f64>,
    /// SAC `-mean(log pi)` over the actor batch.
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct ProbeState {
    online: FingerprintProbes,
    target: FingerprintProbes,
    opt: Adam,
}

/// One actor, twin critics and their target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub cfg: LearnerConfig,
    pub critic: CriticNet,
    pub critics: [ParamSet; 2],
    pub critic_targets: [ParamSet; 2],
    critic_opts: [Adam; 2],
    pub actor: Actor,
    pub actor_params: ParamSet,
    /// TD3 only.
    pub actor_target: Option<ParamSet>,
    actor_opt: Adam,
    log_alpha: ParamSet,
    alpha_opt: Adam,
    pub target_entropy: f64,
    probes: Option<ProbeState>,
    updates: u64,
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn column(values: &[f64]) -> Matrix {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

fn mse(tape: &mut Tape, pred: Var, target: Var) -> Var {
    let d = tape.sub(pred, target);
    let sq = tape.square(d);
    tape.mean(sq)
}

fn ensure_finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} = {v}")))
    }
}

impl ActorCritic {
    /// `probes`: number of fingerprint probes for a conditioned learner, or
    /// `None` for a plain one.
    pub fn new(spec: &MdpSpec, cfg: LearnerConfig, probes: Option<usize>, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let (sd, ad) = (spec.state_dim, spec.action_dim);
        let scale = ActionScale::new(&spec.action_low, &spec.action_high);
        let actor = match cfg.algo {
            Algo::Sac => Actor::Gaussian(GaussianPolicy::new(sd, scale, cfg.hidden_dims.clone())),
            Algo::Td3 => Actor::Deterministic(DeterministicPolicy::new(sd, scale, cfg.hidden_dims.clone())),
        };
        let cond_dim = probes.unwrap_or(0);
        let critic = CriticNet::new(sd, ad, cond_dim, cfg.hidden_dims.clone());

        let actor_params = actor.net().init(rng, OUTPUT_LAYER_SCALE)?;
        let c0 = critic.net.init(rng, OUTPUT_LAYER_SCALE)?;
        let c1 = critic.net.init(rng, OUTPUT_LAYER_SCALE)?;
        let probes = match probes {
            Some(n) => {
                let online = FingerprintProbes::init(n, spec, rng)?;
                Some(ProbeState {
                    target: online.clone(),
                    opt: Adam::new(&online.params, cfg.learning_rate),
                    online,
                })
            }
            None => None,
        };
        let mut log_alpha = ParamSet::new();
        log_alpha.insert("log_alpha", Array2::from_elem((1, 1), cfg.initial_temperature.ln()))?;
        let lr = cfg.learning_rate;
        Ok(Self {
            target_entropy: cfg.target_entropy.unwrap_or(-(ad as f64)),
            critic_opts: [Adam::new(&c0, lr), Adam::new(&c1, lr)],
            critic_targets: [c0.clone(), c1.clone()],
            critics: [c0, c1],
            actor_target: (cfg.algo == Algo::Td3).then(|| actor_params.clone()),
            actor_opt: Adam::new(&actor_params, lr),
            actor_params,
            alpha_opt: Adam::new(&log_alpha, lr),
            log_alpha,
            actor,
            critic,
            probes,
            updates: 0,
            cfg,
        })
    }

    pub fn algo(&self) -> Algo {
        self.cfg.algo
    }

    pub fn state_dim(&self) -> usize {
        self.critic.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.critic.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.at(0)[[0, 0]].exp()
    }

    /// Number of critic updates performed so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_conditioned(&self) -> bool {
        self.probes.is_some()
    }

    pub fn probes(&self) -> Option<&FingerprintProbes> {
        self.probes.as_ref().map(|p| &p.online)
    }

    pub fn target_probes(&self) -> Option<&FingerprintProbes> {
        self.probes.as_ref().map(|p| &p.target)
    }

    pub fn probes_mut(&mut self) -> Option<&mut FingerprintProbes> {
        self.probes.as_mut().map(|p| &mut p.online)
    }

    /// Named parameter sets for checkpointing.
    pub fn named_params(&self) -> Vec<(&'static str, &ParamSet)> {
        let mut out = vec![
            ("actor", &self.actor_params),
            ("critic0", &self.critics[0]),
            ("critic1", &self.critics[1]),
            ("critic0_target", &self.critic_targets[0]),
            ("critic1_target", &self.critic_targets[1]),
            ("log_alpha", &self.log_alpha),
        ];
        if let Some(t) = &self.actor_target {
            out.push(("actor_target", t));
        }
        if let Some(p) = &self.probes {
            out.push(("probes", &p.online.params));
            out.push(("probes_target", &p.target.params));
        }
        out
    }

    /// Embedding of `q` under the online or target probes.
    pub fn embedding(&self, q: &dyn ActionValue, target: bool) -> Result<Option<Vec<f64>>> {
        match &self.probes {
            None => Ok(None),
            Some(p) => {
                let probes = if target { &p.target } else { &p.online };
                Ok(Some(fingerprint_embed(q, probes)?))
            }
        }
    }

    fn check_condition(&self, q: Option<&dyn ActionValue>) -> Result<()> {
        match (self.probes.is_some(), q.is_some()) {
            (true, false) => Err(Error::Precondition(
                "conditioned learner needs a value function to fingerprint".into(),
            )),
            (false, true) => Err(Error::Precondition("learner has no probes to condition on".into())),
            _ => Ok(()),
        }
    }

    fn critic_values(
        &self,
        params: &ParamSet,
        s: ArrayView2<'_, f64>,
        a: ArrayView2<'_, f64>,
        cond: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        self.critic.batch(params, s, a, cond)
    }

    /// The value the actor ascends: the twin minimum for SAC, the first
    /// critic for TD3. `cond` is the fingerprint for a conditioned learner.
    pub fn actor_value_batch(
        &self,
        s: ArrayView2<'_, f64>,
        a: ArrayView2<'_, f64>,
        cond: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let q0 = self.critic_values(&self.critics[0], s, a, cond)?;
        match self.cfg.algo {
            Algo::Td3 => Ok(q0),
            Algo::Sac => {
                let q1 = self.critic_values(&self.critics[1], s, a, cond)?;
                Ok(q0.iter().zip(&q1).map(|(x, y)| x.min(*y)).collect())
            }
        }
    }

    fn actor_value_on_tape(&self, tape: &mut Tape, bound: &[Bound; 2], s: Var, a: Var, cond: Option<Var>) -> Var {
        let q0 = self.critic.on_tape(tape, &bound[0], s, a, cond);
        match self.cfg.algo {
            Algo::Td3 => q0,
            Algo::Sac => {
                let q1 = self.critic.on_tape(tape, &bound[1], s, a, cond);
                tape.min(q0, q1)
            }
        }
    }

    /// Behavior action. With `explore`, SAC samples from its policy and TD3
    /// adds clipped Gaussian noise of std `action_noise * half_range`;
    /// without, both return the deterministic action.
    pub fn act(&self, obs: &[f64], explore: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
        check_finite("observation", obs)?;
        check_dim("observation", self.state_dim(), obs.len())?;
        match &self.actor {
            Actor::Gaussian(p) if explore => Ok(p.sample(&self.actor_params, obs, rng)?.action),
            Actor::Gaussian(p) => p.mean_action(&self.actor_params, obs),
            Actor::Deterministic(p) => {
                let mut a = p.action(&self.actor_params, obs)?;
                if explore && self.cfg.action_noise > 0.0 {
                    let scale = &p.scale;
                    for (j, x) in a.iter_mut().enumerate() {
                        let half = scale.half_range()[j];
                        let noise: f64 = rng.sample(StandardNormal);
                        *x = (*x + self.cfg.action_noise * half * noise)
                            .clamp(scale.center()[j] - half, scale.center()[j] + half);
                    }
                }
                Ok(a)
            }
        }
    }

    /// Online-policy actions for a batch: a reparameterized sample for SAC,
    /// the noiseless actor output for TD3.
    pub fn policy_actions(&self, obs: ArrayView2<'_, f64>, rng: &mut impl Rng) -> Result<Matrix> {
        match &self.actor {
            Actor::Gaussian(p) => {
                let eps = normal_matrix(rng, obs.nrows(), self.action_dim());
                Ok(p.sample_batch(&self.actor_params, obs, &eps)?.0)
            }
            Actor::Deterministic(p) => p.forward_batch(&self.actor_params, obs),
        }
    }

    /// Actions the learner's own policy takes at `obs` for bootstrapping:
    /// a reparameterized sample (SAC, with log-probs) or the target actor
    /// plus clipped smoothing noise (TD3).
    fn next_actions(&self, obs: ArrayView2<'_, f64>, rng: &mut impl Rng) -> Result<(Matrix, Option<Vec<f64>>)> {
        let n = obs.nrows();
        match &self.actor {
            Actor::Gaussian(p) => {
                let eps = normal_matrix(rng, n, self.action_dim());
                let (a, logp) = p.sample_batch(&self.actor_params, obs, &eps)?;
                Ok((a, Some(logp)))
            }
            Actor::Deterministic(p) => {
                let target = self.actor_target.as_ref().expect("TD3 keeps a target actor");
                let mut a = p.forward_batch(target, obs)?;
                let (sigma, clip) = (self.cfg.target_noise, self.cfg.target_noise_clip);
                let scale = &p.scale;
                for ((_, j), x) in a.indexed_iter_mut() {
                    let half = scale.half_range()[j];
                    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * sigma * half;
                    let noise = noise.clamp(-clip * half, clip * half);
                    *x = (*x + noise).clamp(scale.center()[j] - half, scale.center()[j] + half);
                }
                Ok((a, None))
            }
        }
    }

    /// Regression targets for a critic update.
    pub fn critic_targets_for(&self, batch: &Batch, objective: &Objective<'_>, rng: &mut impl Rng) -> Result<Vec<f64>> {
        check_dim("objective rewards", batch.len(), objective.rewards.len())?;
        let (a_next, logp) = self.next_actions(batch.next_obs.view(), rng)?;
        let cond = match objective.condition_on {
            Some(q) => self.embedding(q, true)?,
            None => None,
        };
        let s_next = batch.next_obs.view();
        let q0 = self.critic_values(&self.critic_targets[0], s_next, a_next.view(), cond.as_deref())?;
        let q1 = self.critic_values(&self.critic_targets[1], s_next, a_next.view(), cond.as_deref())?;
        let alpha = self.alpha();
        let gamma = self.cfg.gamma;
        Ok((0..batch.len())
            .map(|i| {
                let mut next = q0[i].min(q1[i]);
                if let (Some(lp), true) = (&logp, self.cfg.entropy_in_target) {
                    next -= alpha * lp[i];
                }
                objective
                    .rule
                    .target(objective.rewards[i], next, gamma, batch.terminated[i])
            })
            .collect())
    }

    /// One gradient step on both critics (and the probes, if conditioned).
    /// Returns the summed mean-squared error before the step.
    pub fn critic_update(&mut self, batch: &Batch, objective: &Objective<'_>, rng: &mut impl Rng) -> Result<f64> {
        self.check_condition(objective.condition_on)?;
        let y = self.critic_targets_for(batch, objective, rng)?;
        let mut tape = Tape::new();
        let s = tape.constant_view(batch.obs.view());
        let a = tape.constant_view(batch.actions.view());
        let b0 = self.critics[0].bind(&mut tape);
        let b1 = self.critics[1].bind(&mut tape);
        let (cond, probe_bound) = match (&self.probes, objective.condition_on) {
            (Some(p), Some(q)) => {
                let pb = p.online.params.bind(&mut tape);
                (Some(fingerprint_embed_on_tape(&mut tape, q, &pb)), Some(pb))
            }
            _ => (None, None),
        };
        let q0 = self.critic.on_tape(&mut tape, &b0, s, a, cond);
        let q1 = self.critic.on_tape(&mut tape, &b1, s, a, cond);
        let yv = tape.constant(column(&y));
        let l0 = mse(&mut tape, q0, yv);
        let l1 = mse(&mut tape, q1, yv);
        let loss = tape.add(l0, l1);
        let value = ensure_finite("critic loss", tape.scalar(loss))?;
        let grads = tape.backward(loss);
        let g0 = self.critics[0].gradients(&b0, &grads);
        let g1 = self.critics[1].gradients(&b1, &grads);
        self.critic_opts[0].step(&mut self.critics[0], &g0)?;
        self.critic_opts[1].step(&mut self.critics[1], &g1)?;
        if let (Some(p), Some(pb)) = (self.probes.as_mut(), probe_bound) {
            let gp = p.online.params.gradients(&pb, &grads);
            p.opt.step(&mut p.online.params, &gp)?;
        }
        self.updates += 1;
        Ok(value)
    }

    /// SAC actor step followed by the temperature step.
    /// Returns `(actor_loss, entropy)`.
    pub fn sac_actor_and_temperature_update(
        &mut self,
        obs: ArrayView2<'_, f64>,
        condition_on: Option<&dyn ActionValue>,
        rng: &mut impl Rng,
    ) -> Result<(f64, f64)> {
        self.check_condition(condition_on)?;
        let Actor::Gaussian(policy) = &self.actor else {
            return Err(Error::Precondition("SAC update on a deterministic actor".into()));
        };
        let cond_row = match condition_on {
            Some(q) => self.embedding(q, false)?,
            None => None,
        };
        let n = obs.nrows();
        let eps = normal_matrix(rng, n, self.action_dim());
        let alpha = self.alpha();
        let mut tape = Tape::new();
        let s = tape.constant_view(obs);
        let bp = self.actor_params.bind(&mut tape);
        let (a, logp) = policy.sample_on_tape(&mut tape, &bp, s, &eps);
        let bc = [
            self.critics[0].bind_const(&mut tape),
            self.critics[1].bind_const(&mut tape),
        ];
        let cond = cond_row.map(|r| tape.constant(Array2::from_shape_vec((1, r.len()), r).expect("row")));
        let q = self.actor_value_on_tape(&mut tape, &bc, s, a, cond);
        let weighted = tape.scale(logp, alpha);
        let per_row = tape.sub(weighted, q);
        let loss = tape.mean(per_row);
        let value = ensure_finite("actor loss", tape.scalar(loss))?;
        let mean_logp = tape.value(logp).mean().expect("nonempty batch");
        let grads = tape.backward(loss);
        let g = self.actor_params.gradients(&bp, &grads);
        self.actor_opt.step(&mut self.actor_params, &g)?;

        if self.cfg.learn_temperature {
            // loss = alpha * mean(-log pi - target_entropy), differentiated in log alpha
            let grad = -alpha * (mean_logp + self.target_entropy);
            let mut ga = self.log_alpha.zeros_like();
            ga.at_mut(0)[[0, 0]] = ensure_finite("temperature gradient", grad)?;
            self.alpha_opt.step(&mut self.log_alpha, &ga)?;
        }
        Ok((value, -mean_logp))
    }

    /// Deterministic policy-gradient step on the first critic. Returns the
    /// actor loss.
    pub fn td3_actor_update(
        &mut self,
        obs: ArrayView2<'_, f64>,
        condition_on: Option<&dyn ActionValue>,
    ) -> Result<f64> {
        self.check_condition(condition_on)?;
        let Actor::Deterministic(policy) = &self.actor else {
            return Err(Error::Precondition("TD3 update on a stochastic actor".into()));
        };
        let cond_row = match condition_on {
            Some(q) => self.embedding(q, false)?,
            None => None,
        };
        let mut tape = Tape::new();
        let s = tape.constant_view(obs);
        let bp = self.actor_params.bind(&mut tape);
        let a = policy.forward_on_tape(&mut tape, &bp, s);
        let bc = [
            self.critics[0].bind_const(&mut tape),
            self.critics[1].bind_const(&mut tape),
        ];
        let cond = cond_row.map(|r| tape.constant(Array2::from_shape_vec((1, r.len()), r).expect("row")));
        let q = self.actor_value_on_tape(&mut tape, &bc, s, a, cond);
        let m = tape.mean(q);
        let loss = tape.neg(m);
        let value = ensure_finite("actor loss", tape.scalar(loss))?;
        let grads = tape.backward(loss);
        let g = self.actor_params.gradients(&bp, &grads);
        self.actor_opt.step(&mut self.actor_params, &g)?;
        Ok(value)
    }

    /// Polyak-average every target copy towards its online network.
    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.cfg.tau;
        for k in 0..2 {
            soft_target_update(&self.critics[k], &mut self.critic_targets[k], tau)?;
        }
        if let Some(t) = self.actor_target.as_mut() {
            soft_target_update(&self.actor_params, t, tau)?;
        }
        if let Some(p) = self.probes.as_mut() {
            soft_target_update(&p.online.params, &mut p.target.params, tau)?;
        }
        Ok(())
    }

    /// One full learner step on `batch`: critic update, then the actor (and
    /// temperature) update and target averaging on their schedules. SAC
    /// updates everything every step; TD3 delays actor and targets.
    pub fn update(&mut self, batch: &Batch, objective: &Objective<'_>, rng: &mut impl Rng) -> Result<UpdateStats> {
        let critic_loss = self.critic_update(batch, objective, rng)?;
        let mut stats = UpdateStats {
            critic_loss,
            ..UpdateStats::default()
        };
        let k = self.updates;
        if k.is_multiple_of(self.cfg.actor_update_freq) {
            match self.cfg.algo {
                Algo::Sac => {
                    let (loss, entropy) =
                        self.sac_actor_and_temperature_update(batch.obs.view(), objective.condition_on, rng)?;
                    stats.actor_loss = Some(loss);
                    stats.entropy = Some(entropy);
                }
                Algo::Td3 => {
                    stats.actor_loss = Some(self.td3_actor_update(batch.obs.view(), objective.condition_on)?);
                }
            }
        }
        if self.cfg.algo == Algo::Sac {
            stats.alpha = Some(self.alpha());
        }
        if k.is_multiple_of(self.cfg.target_update_freq) {
            self.update_targets()?;
        }
        Ok(stats)
    }
}

/// An unconditioned learner scores state-action pairs with its actor value.
impl ActionValue for ActorCritic {
    fn values(&self, s: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if self.is_conditioned() {
            return Err(Error::Precondition("conditioned critic needs an embedding".into()));
        }
        self.actor_value_batch(s, a, None)
    }

    fn values_on_tape(&self, tape: &mut Tape, s: Var, a: Var) -> Var {
        assert!(!self.is_conditioned(), "conditioned critic needs an embedding");
        let bc = [self.critics[0].bind_const(tape), self.critics[1].bind_const(tape)];
        self.actor_value_on_tape(tape, &bc, s, a, None)
    }
}
