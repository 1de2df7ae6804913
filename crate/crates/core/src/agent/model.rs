//! The three cooperating models and their per-step computation.
//!
//! One call to [`Agent::step_graph`] advances every recurrent state by one
//! frame inside a [`Graph`]: portrayal predicts the ideal description, the
//! task recurrence absorbs the objective, the behaviour recurrence combines
//! the task state with the previous latent sample and action, the posterior
//! conditioned on the predicted description yields the acting latent, and the
//! Beta head turns everything into an action. Rollouts, the public single-op
//! helpers and the training losses all share this code path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Graph, Var};
use crate::kinematics::{pose_to_action, Skeleton, ACTION_DIM};
use crate::signals::{DescriptionLayout, DESCRIPTION_DIM, OBJECTIVE_DIM};
use crate::{Error, Result};

/// Architectural variant; everything except `Full` exists for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    #[default]
    Full,
    /// No portrayal model: the acting latent comes from a separate encoder
    /// that sees the objective directly instead of a self-generated
    /// description. The description encoder is still trained on measured
    /// descriptions.
    SingleState,
    /// Task and behaviour recurrences merged into one latent with a
    /// deterministic part of width `h_dim + b_det_dim`.
    SingleDynamicsSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub h_dim: usize,
    pub b_det_dim: usize,
    pub b_stoch_dim: usize,
    pub portrayal_hidden_dim: usize,
    pub decoder_hidden_dim: usize,
    pub policy_hidden_dim: usize,
    pub min_stddev: f64,
    /// Initial bias of the Beta policy's raw outputs. Larger values start the
    /// policy concentrated around its mean (both parameters near `1 + bias`)
    /// instead of near-uniform, which keeps early rollouts from thrashing.
    pub policy_bias_init: f64,
    pub seed: u64,
    pub variant: AgentVariant,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            h_dim: 64,
            b_det_dim: 64,
            b_stoch_dim: 16,
            portrayal_hidden_dim: 128,
            decoder_hidden_dim: 128,
            policy_hidden_dim: 128,
            min_stddev: 0.01,
            policy_bias_init: 5.0,
            seed: 0,
            variant: AgentVariant::Full,
        }
    }
}

impl AgentConfig {
    /// Every width set to 8; used for gradient checks.
    pub fn tiny() -> Self {
        AgentConfig {
            h_dim: 8,
            b_det_dim: 8,
            b_stoch_dim: 8,
            portrayal_hidden_dim: 8,
            decoder_hidden_dim: 8,
            policy_hidden_dim: 8,
            ..AgentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("h_dim", self.h_dim),
            ("b_det_dim", self.b_det_dim),
            ("b_stoch_dim", self.b_stoch_dim),
            ("portrayal_hidden_dim", self.portrayal_hidden_dim),
            ("decoder_hidden_dim", self.decoder_hidden_dim),
            ("policy_hidden_dim", self.policy_hidden_dim),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == 0) {
            return Err(Error::Config(format!("agent.{name} must be positive")));
        }
        if !(self.min_stddev.is_finite() && self.min_stddev > 0.0) {
            return Err(Error::Config(format!("agent.min_stddev must be positive, got {}", self.min_stddev)));
        }
        if !self.policy_bias_init.is_finite() {
            return Err(Error::Config("agent.policy_bias_init must be finite".into()));
        }
        Ok(())
    }

    /// Width of the deterministic part of the behaviour recurrence.
    pub fn recurrent_dim(&self) -> usize {
        match self.variant {
            AgentVariant::SingleDynamicsSpace => self.h_dim + self.b_det_dim,
            _ => self.b_det_dim,
        }
    }

    fn has_task_state(&self) -> bool {
        self.variant != AgentVariant::SingleDynamicsSpace
    }

    fn has_portrayal(&self) -> bool {
        self.variant != AgentVariant::SingleState
    }

    /// Width of the deterministic features fed to the decoder and policy.
    fn feature_dim(&self) -> usize {
        if self.has_task_state() {
            self.h_dim + self.recurrent_dim()
        } else {
            self.recurrent_dim()
        }
    }
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, output: usize) -> Self {
        Dense {
            w: store.add_random(format!("{name}.w"), &[output, input], rng),
            b: store.add_zeros(format!("{name}.b"), &[output]),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        g.affine(self.w, self.b, x)
    }
}

/// Gated recurrent unit.
#[derive(Debug, Clone)]
struct Gru {
    gates: Dense,
    candidate: Dense,
    hidden: usize,
}

impl Gru {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        Gru {
            gates: Dense::new(store, rng, &format!("{name}.gates"), input + hidden, 2 * hidden),
            candidate: Dense::new(store, rng, &format!("{name}.candidate"), input + hidden, hidden),
            hidden,
        }
    }

    fn apply(&self, g: &mut Graph, x: Var, h: Var) -> Var {
        let xh = g.concat(&[x, h]);
        let pre = self.gates.apply(g, xh);
        let zr = g.sigmoid(pre);
        let z = g.slice(zr, 0, self.hidden);
        let r = g.slice(zr, self.hidden, self.hidden);
        let rh = g.mul(r, h);
        let xrh = g.concat(&[x, rh]);
        let pre_n = self.candidate.apply(g, xrh);
        let n = g.tanh(pre_n);
        let keep = g.one_minus(z);
        let fresh = g.mul(keep, n);
        let old = g.mul(z, h);
        g.add(fresh, old)
    }
}

/// One tanh hidden layer followed by a linear readout.
#[derive(Debug, Clone)]
struct Mlp {
    hidden: Dense,
    out: Dense,
}

impl Mlp {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
    ) -> Self {
        Mlp {
            hidden: Dense::new(store, rng, &format!("{name}.hidden"), input, hidden),
            out: Dense::new(store, rng, &format!("{name}.out"), hidden, output),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Var {
        let pre = self.hidden.apply(g, x);
        let a = g.tanh(pre);
        self.out.apply(g, a)
    }
}

#[derive(Debug, Clone)]
struct Network {
    portrayal: Option<(Gru, Dense)>,
    task: Option<Gru>,
    behaviour: Gru,
    prior: Mlp,
    posterior: Mlp,
    /// Objective-conditioned acting encoder (single-state variant only).
    acting: Option<Mlp>,
    decoder: Mlp,
    policy: Mlp,
}

impl Network {
    fn build(config: &AgentConfig, store: &mut ParamStore) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let rng = &mut rng;
        let r = config.recurrent_dim();
        let s = config.b_stoch_dim;
        let portrayal = config.has_portrayal().then(|| {
            let p = config.portrayal_hidden_dim;
            (
                Gru::new(store, rng, "portrayal.rnn", OBJECTIVE_DIM, p),
                Dense::new(store, rng, "portrayal.out", p, DESCRIPTION_DIM),
            )
        });
        let task = config
            .has_task_state()
            .then(|| Gru::new(store, rng, "task.rnn", OBJECTIVE_DIM, config.h_dim));
        let behaviour_in = if config.has_task_state() { config.h_dim } else { OBJECTIVE_DIM } + s + ACTION_DIM;
        let behaviour = Gru::new(store, rng, "behaviour.rnn", behaviour_in, r);
        let prior = Mlp::new(store, rng, "behaviour.prior", r, r, 2 * s);
        let posterior = Mlp::new(store, rng, "behaviour.posterior", r + DESCRIPTION_DIM, r, 2 * s);
        let acting = (!config.has_portrayal()).then(|| Mlp::new(store, rng, "behaviour.acting", r + OBJECTIVE_DIM, r, 2 * s));
        let f = config.feature_dim() + s;
        let decoder = Mlp::new(store, rng, "decoder", f, config.decoder_hidden_dim, DESCRIPTION_DIM);
        let policy = Mlp::new(store, rng, "policy", f, config.policy_hidden_dim, 2 * ACTION_DIM);
        Network {
            portrayal,
            task,
            behaviour,
            prior,
            posterior,
            acting,
            decoder,
            policy,
        }
    }
}

/// Diagonal Gaussian parameters inside a graph.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GaussianVars {
    pub mean: Var,
    pub stddev: Var,
}

/// Recurrent state carried between steps inside a graph.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Carry {
    pub portrayal: Option<Var>,
    pub h: Option<Var>,
    pub b_det: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PolicyVars {
    pub alpha: Var,
    pub beta: Var,
    pub mean: Var,
}

/// Everything one step produces.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepVars {
    pub carry: Carry,
    pub d_hat: Option<Var>,
    /// Deterministic features shared by decoder and policy.
    pub features: Var,
    pub prior: GaussianVars,
    pub acting: GaussianVars,
    pub policy: PolicyVars,
}

/// Per-step inputs from outside the agent.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepInputs<'a> {
    pub objective: &'a [f64],
    pub prev_action: &'a [f64],
    /// Standard-normal noise for the acting latent; `None` uses its mean.
    pub noise: Option<&'a [f64]>,
}

/// Plain-vector snapshot of the recurrent state between graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub portrayal: Vec<f64>,
    pub h: Vec<f64>,
    pub b_det: Vec<f64>,
    pub b: Vec<f64>,
}

/// Latent state after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub h: Vec<f64>,
    pub b_sample: Vec<f64>,
    pub b_mean: Vec<f64>,
    pub b_stddev: Vec<f64>,
    pub b_det: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaPolicyOutput {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BetaPolicyOutput {
    pub fn mean(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a / (a + b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorOutput {
    pub b_det: Vec<f64>,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

pub(crate) fn check_finite(g: &Graph, v: Var, name: &str) -> Result<()> {
    if g.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite values in '{name}'")))
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Contract(format!("{what} has {got} components, expected {want}")))
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    params: ParamStore,
    net: Network,
    rest_effectors: Vec<f64>,
    rest_description: Vec<f64>,
    rest_action: Vec<f64>,
}

impl Agent {
    /// A freshly initialised agent; weights are drawn from `config.seed`.
    pub fn new(config: AgentConfig, skeleton: &Skeleton) -> Result<Self> {
        config.validate()?;
        let layout = DescriptionLayout::new(skeleton)?;
        check_len("skeleton action space", skeleton.action_dim(), ACTION_DIM)?;
        let mut params = ParamStore::default();
        let net = Network::build(&config, &mut params);
        let bias = config.policy_bias_init;
        params.tensor_mut(net.policy.out.b.index()).data.iter_mut().for_each(|v| *v = bias);
        let rest = skeleton.rest_pose();
        let rest_geometry = crate::kinematics::forward_kinematics(skeleton, &rest)?;
        Ok(Agent {
            rest_effectors: layout.rest_effectors().iter().flat_map(|v| v.iter().copied()).collect(),
            rest_description: layout.describe(&rest_geometry).0,
            rest_action: pose_to_action(skeleton, &rest),
            config,
            params,
            net,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Description measured at the rest pose (the `t = 0` previous description).
    pub fn rest_description(&self) -> &[f64] {
        &self.rest_description
    }

    /// Unit-action encoding of the rest pose (the `t = 0` previous action).
    pub fn rest_action(&self) -> &[f64] {
        &self.rest_action
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState {
            portrayal: vec![0.0; if self.config.has_portrayal() { self.config.portrayal_hidden_dim } else { 0 }],
            h: vec![0.0; if self.config.has_task_state() { self.config.h_dim } else { 0 }],
            b_det: vec![0.0; self.config.recurrent_dim()],
            b: vec![0.0; self.config.b_stoch_dim],
        }
    }

    pub(crate) fn carry_from(&self, g: &mut Graph, s: &RecurrentState) -> Carry {
        Carry {
            portrayal: self.net.portrayal.as_ref().map(|_| g.input(s.portrayal.clone())),
            h: self.net.task.as_ref().map(|_| g.input(s.h.clone())),
            b_det: g.input(s.b_det.clone()),
            b: g.input(s.b.clone()),
        }
    }

    pub(crate) fn state_of(&self, g: &Graph, c: &Carry) -> RecurrentState {
        RecurrentState {
            portrayal: c.portrayal.map(|v| g.value(v).to_vec()).unwrap_or_default(),
            h: c.h.map(|v| g.value(v).to_vec()).unwrap_or_default(),
            b_det: g.value(c.b_det).to_vec(),
            b: g.value(c.b).to_vec(),
        }
    }

    fn gaussian_head(&self, g: &mut Graph, raw: Var) -> GaussianVars {
        let s = self.config.b_stoch_dim;
        let mean = g.slice(raw, 0, s);
        let pre = g.slice(raw, s, s);
        let soft = g.softplus(pre);
        let stddev = g.add_scalar(soft, self.config.min_stddev);
        GaussianVars { mean, stddev }
    }

    fn portrayal_graph(&self, g: &mut Graph, o: Var, state: Var) -> (Var, Var) {
        let (rnn, out) = self.net.portrayal.as_ref().expect("variant has a portrayal model");
        let next = rnn.apply(g, o, state);
        let raw = out.apply(g, next);
        let d_hat = g.normalize_blocks(raw, &self.rest_effectors);
        (d_hat, next)
    }

    /// Posterior over the stochastic latent given the recurrent feature and a description.
    pub(crate) fn posterior_graph(&self, g: &mut Graph, b_det: Var, d: Var) -> GaussianVars {
        let x = g.concat(&[b_det, d]);
        let raw = self.net.posterior.apply(g, x);
        self.gaussian_head(g, raw)
    }

    pub(crate) fn prior_graph(&self, g: &mut Graph, b_det: Var) -> GaussianVars {
        let raw = self.net.prior.apply(g, b_det);
        self.gaussian_head(g, raw)
    }

    pub(crate) fn policy_graph(&self, g: &mut Graph, features: Var, b: Var) -> PolicyVars {
        let x = g.concat(&[features, b]);
        let raw = self.net.policy.apply(g, x);
        let ra = g.slice(raw, 0, ACTION_DIM);
        let rb = g.slice(raw, ACTION_DIM, ACTION_DIM);
        let sa = g.softplus(ra);
        let sb = g.softplus(rb);
        let alpha = g.add_scalar(sa, 1.0);
        let beta = g.add_scalar(sb, 1.0);
        let total = g.add(alpha, beta);
        let mean = g.div(alpha, total);
        PolicyVars { alpha, beta, mean }
    }

    pub(crate) fn decoder_graph(&self, g: &mut Graph, features: Var, b: Var) -> Var {
        let x = g.concat(&[features, b]);
        self.net.decoder.apply(g, x)
    }

    /// Reparameterised sample `mean + stddev * noise`.
    pub(crate) fn sample_graph(g: &mut Graph, dist: GaussianVars, noise: Option<&[f64]>) -> Var {
        match noise {
            Some(eps) => {
                let e = g.input(eps.to_vec());
                let scaled = g.mul(dist.stddev, e);
                g.add(dist.mean, scaled)
            }
            None => dist.mean,
        }
    }

    /// Advances every model by one frame.
    pub(crate) fn step_graph(&self, g: &mut Graph, carry: &Carry, inputs: StepInputs) -> StepVars {
        let o = g.input(inputs.objective.to_vec());
        let a_prev = g.input(inputs.prev_action.to_vec());

        let (d_hat, portrayal) = match carry.portrayal {
            Some(state) => {
                let (d, next) = self.portrayal_graph(g, o, state);
                (Some(d), Some(next))
            }
            None => (None, None),
        };

        let (h, b_det, features) = match (&self.net.task, carry.h) {
            (Some(task), Some(h_prev)) => {
                let h = task.apply(g, o, h_prev);
                let x = g.concat(&[h, carry.b, a_prev]);
                let b_det = self.net.behaviour.apply(g, x, carry.b_det);
                let features = g.concat(&[h, b_det]);
                (Some(h), b_det, features)
            }
            _ => {
                let x = g.concat(&[o, carry.b, a_prev]);
                let s = self.net.behaviour.apply(g, x, carry.b_det);
                (None, s, s)
            }
        };

        let prior = self.prior_graph(g, b_det);
        let acting = match (d_hat, &self.net.acting) {
            (Some(d), _) => self.posterior_graph(g, b_det, d),
            (None, Some(encoder)) => {
                let x = g.concat(&[b_det, o]);
                let raw = encoder.apply(g, x);
                self.gaussian_head(g, raw)
            }
            (None, None) => unreachable!("every variant has a portrayal model or an acting encoder"),
        };
        let b = Self::sample_graph(g, acting, inputs.noise);
        let policy = self.policy_graph(g, features, b);
        StepVars {
            carry: Carry { portrayal, h, b_det, b },
            d_hat,
            features,
            prior,
            acting,
            policy,
        }
    }

    /// Checks the values a step produced, naming the first non-finite tensor.
    pub(crate) fn check_step(&self, g: &Graph, s: &StepVars) -> Result<()> {
        if let Some(d) = s.d_hat {
            check_finite(g, d, "portrayal.out")?;
        }
        if let Some(h) = s.carry.h {
            check_finite(g, h, "task.rnn")?;
        }
        check_finite(g, s.carry.b_det, "behaviour.rnn")?;
        check_finite(g, s.acting.mean, "behaviour.posterior")?;
        check_finite(g, s.acting.stddev, "behaviour.posterior")?;
        check_finite(g, s.policy.alpha, "policy.out")?;
        check_finite(g, s.policy.beta, "policy.out")
    }

    // Single-operation entry points. Each builds a throwaway graph; rollouts
    // and training use `step_graph` directly.

    /// Predicts the ideal description for `o` and advances the portrayal memory.
    pub fn portrayal_step(&self, o: &[f64], state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.net.portrayal.is_none() {
            return Err(Error::Contract("this agent variant has no portrayal model".into()));
        }
        check_len("objective", o.len(), OBJECTIVE_DIM)?;
        check_len("portrayal state", state.len(), self.config.portrayal_hidden_dim)?;
        let mut g = Graph::new(&self.params);
        let (ov, sv) = (g.input(o.to_vec()), g.input(state.to_vec()));
        let (d, next) = self.portrayal_graph(&mut g, ov, sv);
        check_finite(&g, d, "portrayal.out")?;
        Ok((g.value(d).to_vec(), g.value(next).to_vec()))
    }

    pub fn task_state_update(&self, h_prev: &[f64], o: &[f64]) -> Result<Vec<f64>> {
        let task = self
            .net
            .task
            .as_ref()
            .ok_or_else(|| Error::Contract("this agent variant has no separate task state".into()))?;
        check_len("objective", o.len(), OBJECTIVE_DIM)?;
        check_len("task state", h_prev.len(), self.config.h_dim)?;
        let mut g = Graph::new(&self.params);
        let (ov, hv) = (g.input(o.to_vec()), g.input(h_prev.to_vec()));
        let h = task.apply(&mut g, ov, hv);
        check_finite(&g, h, "task.rnn")?;
        Ok(g.value(h).to_vec())
    }

    /// Advances the behaviour recurrence and evaluates the prior head.
    ///
    /// `h` is the current task state (or the objective for the merged variant).
    pub fn behaviour_prior(&self, h: &[f64], b_det_prev: &[f64], b_prev: &[f64], a_prev: &[f64]) -> Result<PriorOutput> {
        let lead = if self.config.has_task_state() { self.config.h_dim } else { OBJECTIVE_DIM };
        check_len("task input", h.len(), lead)?;
        check_len("b_det", b_det_prev.len(), self.config.recurrent_dim())?;
        check_len("b_sample", b_prev.len(), self.config.b_stoch_dim)?;
        check_len("previous action", a_prev.len(), ACTION_DIM)?;
        let mut g = Graph::new(&self.params);
        let x = g.input([h, b_prev, a_prev].concat());
        let hidden = g.input(b_det_prev.to_vec());
        let b_det = self.net.behaviour.apply(&mut g, x, hidden);
        check_finite(&g, b_det, "behaviour.rnn")?;
        let p = self.prior_graph(&mut g, b_det);
        check_finite(&g, p.mean, "behaviour.prior")?;
        Ok(PriorOutput {
            b_det: g.value(b_det).to_vec(),
            mean: g.value(p.mean).to_vec(),
            stddev: g.value(p.stddev).to_vec(),
        })
    }

    pub fn behaviour_posterior(&self, b_det: &[f64], d: &[f64]) -> Result<GaussianParams> {
        check_len("b_det", b_det.len(), self.config.recurrent_dim())?;
        check_len("description", d.len(), DESCRIPTION_DIM)?;
        let mut g = Graph::new(&self.params);
        let (bv, dv) = (g.input(b_det.to_vec()), g.input(d.to_vec()));
        let q = self.posterior_graph(&mut g, bv, dv);
        check_finite(&g, q.mean, "behaviour.posterior")?;
        check_finite(&g, q.stddev, "behaviour.posterior")?;
        Ok(GaussianParams {
            mean: g.value(q.mean).to_vec(),
            stddev: g.value(q.stddev).to_vec(),
        })
    }

    fn features_input(&self, g: &mut Graph, h: &[f64], b_det: &[f64], b: &[f64]) -> Result<(Var, Var)> {
        if self.config.has_task_state() {
            check_len("task state", h.len(), self.config.h_dim)?;
        } else {
            check_len("task state", h.len(), 0)?;
        }
        check_len("b_det", b_det.len(), self.config.recurrent_dim())?;
        check_len("b_sample", b.len(), self.config.b_stoch_dim)?;
        Ok((g.input([h, b_det].concat()), g.input(b.to_vec())))
    }

    /// Beta parameters for the latent `(h, b_det, b)`.
    pub fn animation_step(&self, h: &[f64], b_det: &[f64], b: &[f64]) -> Result<BetaPolicyOutput> {
        let mut g = Graph::new(&self.params);
        let (f, bv) = self.features_input(&mut g, h, b_det, b)?;
        let p = self.policy_graph(&mut g, f, bv);
        check_finite(&g, p.alpha, "policy.out")?;
        check_finite(&g, p.beta, "policy.out")?;
        Ok(BetaPolicyOutput {
            alpha: g.value(p.alpha).to_vec(),
            beta: g.value(p.beta).to_vec(),
        })
    }

    pub fn decode_description(&self, h: &[f64], b_det: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let (f, bv) = self.features_input(&mut g, h, b_det, b)?;
        let d = self.decoder_graph(&mut g, f, bv);
        check_finite(&g, d, "decoder.out")?;
        Ok(g.value(d).to_vec())
    }

    /// Replaces the parameter store, checking names and shapes.
    pub fn load_params(&mut self, store: ParamStore) -> Result<()> {
        let ours = self.params.tensors();
        let theirs = store.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Validation(format!(
                "parameter set has {} tensors, configuration needs {}",
                theirs.len(),
                ours.len()
            )));
        }
        for (a, b) in ours.iter().zip(theirs) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Validation(format!(
                    "tensor '{}' {:?} does not match expected '{}' {:?}",
                    b.name, b.shape, a.name, a.shape
                )));
            }
            if let Some(k) = b.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("tensor '{}' entry {k} is not finite", b.name)));
            }
        }
        self.params = store;
        Ok(())
    }

    /// Zeroes the policy readout so every Beta starts symmetric.
    pub fn zero_policy_readout(&mut self) {
        for id in [self.net.policy.out.w, self.net.policy.out.b] {
            self.params.tensor_mut(id.index()).data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn agent(variant: AgentVariant, seed: u64) -> Agent {
        let config = AgentConfig {
            seed,
            variant,
            ..AgentConfig::tiny()
        };
        Agent::new(config, &Skeleton::canonical()).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn portrayal_is_deterministic_and_normalized() {
        let a = agent(AgentVariant::Full, 1);
        let o = [1.0, 0.0, 0.0, 0.0, 1.0, 0.3];
        let s = vec![0.0; 8];
        let (d1, n1) = a.portrayal_step(&o, &s).unwrap();
        let (d2, n2) = a.portrayal_step(&o, &s).unwrap();
        assert_eq!((d1.clone(), n1), (d2, n2));
        for k in 0..4 {
            let n: f64 = d1[3 * k..3 * k + 3].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-6);
        }
        assert!(agent(AgentVariant::SingleState, 1).portrayal_step(&o, &s).is_err());
    }

    #[test]
    fn task_state_bounded() {
        let a = agent(AgentVariant::Full, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut h = vec![0.0; 8];
        for _ in 0..20 {
            h = a.task_state_update(&h, &random_vec(&mut rng, 6, 5.0)).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn stddev_floor_and_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let a = agent(AgentVariant::Full, seed);
            let h = random_vec(&mut rng, 8, 1.0);
            let bd = random_vec(&mut rng, 8, 1.0);
            let b = random_vec(&mut rng, 8, 1.0);
            let act = random_vec(&mut rng, ACTION_DIM, 0.5).iter().map(|v| v + 0.5).collect::<Vec<_>>();
            let p = a.behaviour_prior(&h, &bd, &b, &act).unwrap();
            assert!(p.stddev.iter().all(|s| *s >= 0.01));
            let mut act2 = act.clone();
            act2[3] += 0.2;
            let p2 = a.behaviour_prior(&h, &bd, &b, &act2).unwrap();
            assert!(p.b_det.iter().zip(&p2.b_det).any(|(x, y)| x != y));

            let d = random_vec(&mut rng, DESCRIPTION_DIM, 1.0);
            let q = a.behaviour_posterior(&p.b_det, &d).unwrap();
            assert!(q.stddev.iter().all(|s| *s >= 0.01));
            let mut d2 = d.clone();
            d2[20] += 0.3;
            assert_ne!(q.mean, a.behaviour_posterior(&p.b_det, &d2).unwrap().mean);
        }
    }

    #[test]
    fn beta_head_shapes() {
        let mut a = agent(AgentVariant::Full, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (h, bd, b) = (random_vec(&mut rng, 8, 1.0), random_vec(&mut rng, 8, 1.0), random_vec(&mut rng, 8, 3.0));
        let out = a.animation_step(&h, &bd, &b).unwrap();
        assert!(out.alpha.iter().chain(&out.beta).all(|v| *v > 1.0));
        assert!(out.mean().iter().all(|m| *m > 0.0 && *m < 1.0));
        assert_eq!(a.decode_description(&h, &bd, &b).unwrap().len(), DESCRIPTION_DIM);

        a.zero_policy_readout();
        let out = a.animation_step(&h, &bd, &b).unwrap();
        let expect = 1.0 + 2f64.ln();
        assert!(out.alpha.iter().chain(&out.beta).all(|v| *v == expect));
        assert!(out.mean().iter().all(|m| *m == 0.5));
    }

    #[test]
    fn merged_variant_widths() {
        let a = agent(AgentVariant::SingleDynamicsSpace, 4);
        assert_eq!(a.initial_state().b_det.len(), 16);
        assert!(a.initial_state().h.is_empty());
        assert!(a.task_state_update(&[0.0; 8], &[0.0; 6]).is_err());
        let out = a.animation_step(&[], &[0.1; 16], &[0.0; 8]).unwrap();
        assert_eq!(out.alpha.len(), ACTION_DIM);
    }

    #[test]
    fn config_validation() {
        let bad = AgentConfig {
            h_dim: 0,
            ..AgentConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(m)) if m.contains("h_dim")));
        let bad = AgentConfig {
            min_stddev: 0.0,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
