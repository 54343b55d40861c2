//! Policy/value network over (instruction, observation, previous action).
//!
//! ```text
//! s_x = mean_i LSTM(W_I w_i)           instruction
//! s_o = tanh(W2 tanh(W1 o + b1) + b2)  observation
//! s_a = W_A[:, prev]                   previous action (NO_PREV at t = 0)
//! s   = s_o ⊕ s_x ⊕ s_a
//! z   = tanh(W_t s + b_t)              optional trunk (identity when width 0)
//! p_b = softmax(block head z)          B classes
//! p_d = softmax(direction head z)      N, S, E, W, STOP
//! V   = value head z
//! ```
//!
//! The joint over the `4B + 1` actions is `π(move b, d) = p_b[b] p_d[d]` and
//! `π(STOP) = p_d[4]`, which sums to one by construction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::math;
use crate::world::{observation_len, Action, ActionId, ActionSpace, Direction, Observation};

/// Direction-head classes: the four moves plus STOP.
pub const DIRECTION_CLASSES: usize = 5;
pub const STOP_CLASS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub grid_size: usize,
    pub num_blocks: usize,
    pub vocab_size: usize,
    pub word_dim: usize,
    pub action_dim: usize,
    pub lstm_hidden: usize,
    pub obs_hidden: usize,
    pub obs_dim: usize,
    /// Width of the tanh layer between the state vector and the heads;
    /// 0 connects the heads directly to the state vector.
    pub trunk_hidden: usize,
    /// Scales each observation channel by `sigmoid(W_g s_x + b_g)` before the
    /// perceptron, so the instruction can pick out the blocks it names.
    pub instruction_gate: bool,
    pub init_bound: f64,
}

impl PolicyConfig {
    pub fn new(grid_size: usize, num_blocks: usize, vocab_size: usize) -> Self {
        Self {
            grid_size,
            num_blocks,
            vocab_size,
            word_dim: 16,
            action_dim: 8,
            lstm_hidden: 32,
            obs_hidden: 64,
            obs_dim: 32,
            trunk_hidden: 64,
            instruction_gate: true,
            init_bound: 0.08,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.obs_dim + self.lstm_hidden + self.action_dim
    }

    fn head_input_dim(&self) -> usize {
        if self.trunk_hidden > 0 {
            self.trunk_hidden
        } else {
            self.state_dim()
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(self.num_blocks)
    }

    /// Column of the action embedding used before the first action.
    pub fn no_prev_index(&self) -> usize {
        self.action_space().size()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    TokenOutOfRange { id: u32, vocab_size: usize },
    EmptyInstruction,
    ObservationShape { expected: usize, got: usize },
    ActionOutOfRange { code: u32, action_count: usize },
    MissingParam(String),
    ParamShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    Autodiff(AutodiffError),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::TokenOutOfRange { id, vocab_size } => {
                write!(f, "token id {id} outside vocabulary of size {vocab_size}")
            }
            PolicyError::EmptyInstruction => f.write_str("instruction has no tokens"),
            PolicyError::ObservationShape { expected, got } => {
                write!(f, "observation has {got} entries, expected {expected}")
            }
            PolicyError::ActionOutOfRange { code, action_count } => {
                write!(f, "action code {code} outside [0, {action_count})")
            }
            PolicyError::MissingParam(name) => write!(f, "missing parameter {name}"),
            PolicyError::ParamShape { name, expected, got } => {
                write!(f, "parameter {name} has shape {got:?}, expected {expected:?}")
            }
            PolicyError::Autodiff(e) => write!(f, "{e}"),
        }
    }
}

impl From<AutodiffError> for PolicyError {
    fn from(e: AutodiffError) -> Self {
        PolicyError::Autodiff(e)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ParamIds {
    word_embedding: ParamId,
    lstm: Layer,
    obs_fc1: Layer,
    obs_fc2: Layer,
    obs_gate: Option<Layer>,
    action_embedding: ParamId,
    trunk: Option<Layer>,
    block_head: Layer,
    direction_head: Layer,
    value_head: Layer,
}

#[derive(Debug, Clone)]
pub struct Policy {
    cfg: PolicyConfig,
    params: ParamSet,
    ids: ParamIds,
}

fn layer_shapes(cfg: &PolicyConfig) -> Vec<(&'static str, Vec<usize>)> {
    let obs_in = observation_len(cfg.num_blocks, cfg.grid_size);
    let z = cfg.head_input_dim();
    let mut shapes = vec![
        ("word_embedding", vec![cfg.word_dim, cfg.vocab_size]),
        ("lstm.weight", vec![4 * cfg.lstm_hidden, cfg.word_dim + cfg.lstm_hidden]),
        ("lstm.bias", vec![4 * cfg.lstm_hidden]),
        ("obs.fc1.weight", vec![cfg.obs_hidden, obs_in]),
        ("obs.fc1.bias", vec![cfg.obs_hidden]),
        ("obs.fc2.weight", vec![cfg.obs_dim, cfg.obs_hidden]),
        ("obs.fc2.bias", vec![cfg.obs_dim]),
        ("action_embedding", vec![cfg.action_dim, cfg.action_space().size() + 1]),
    ];
    if cfg.instruction_gate {
        shapes.push(("obs.gate.weight", vec![cfg.num_blocks + 1, cfg.lstm_hidden]));
        shapes.push(("obs.gate.bias", vec![cfg.num_blocks + 1]));
    }
    if cfg.trunk_hidden > 0 {
        shapes.push(("trunk.weight", vec![cfg.trunk_hidden, cfg.state_dim()]));
        shapes.push(("trunk.bias", vec![cfg.trunk_hidden]));
    }
    shapes.extend([
        ("head.block.weight", vec![cfg.num_blocks, z]),
        ("head.block.bias", vec![cfg.num_blocks]),
        ("head.direction.weight", vec![DIRECTION_CLASSES, z]),
        ("head.direction.bias", vec![DIRECTION_CLASSES]),
        ("head.value.weight", vec![1, z]),
        ("head.value.bias", vec![1]),
    ]);
    shapes
}

impl Policy {
    /// Every parameter drawn from `uniform(-init_bound, init_bound)`, except
    /// that the STOP bias is offset by `-ln B` so the initial joint over all
    /// `4B + 1` actions is close to uniform.
    pub fn new(cfg: PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in layer_shapes(&cfg) {
            let mut t = Tensor::uniform(shape, cfg.init_bound, &mut rng);
            if name == "head.direction.bias" {
                t.data_mut()[STOP_CLASS] -= math::ln(cfg.num_blocks as f64);
            }
            params.add(name, t).expect("layer names are unique");
        }
        Self::from_params(cfg, params).expect("shapes come from the config")
    }

    /// Wraps loaded parameters, checking names and shapes against `cfg`.
    pub fn from_params(cfg: PolicyConfig, params: ParamSet) -> Result<Self, PolicyError> {
        for (name, shape) in layer_shapes(&cfg) {
            let id = params.find(name).ok_or_else(|| PolicyError::MissingParam(name.into()))?;
            let got = params.get(id).shape();
            if got != shape.as_slice() {
                return Err(PolicyError::ParamShape {
                    name: name.into(),
                    expected: shape,
                    got: got.to_vec(),
                });
            }
        }
        let id = |name: &str| params.find(name).expect("checked above");
        let layer = |prefix: &str| Layer {
            weight: id(&[prefix, ".weight"].concat()),
            bias: id(&[prefix, ".bias"].concat()),
        };
        let ids = ParamIds {
            word_embedding: id("word_embedding"),
            lstm: layer("lstm"),
            obs_fc1: layer("obs.fc1"),
            obs_fc2: layer("obs.fc2"),
            obs_gate: cfg.instruction_gate.then(|| layer("obs.gate")),
            action_embedding: id("action_embedding"),
            trunk: (cfg.trunk_hidden > 0).then(|| layer("trunk")),
            block_head: layer("head.block"),
            direction_head: layer("head.direction"),
            value_head: layer("head.value"),
        };
        Ok(Self { cfg, params, ids })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    /// Starts a forward graph for one instruction; the instruction encoding is
    /// computed once and shared by every step recorded on the graph.
    pub fn graph<'p>(&'p self, tokens: &[u32]) -> Result<PolicyGraph<'p>, PolicyError> {
        PolicyGraph::new(self, tokens)
    }

    /// Action distribution and value for a single state, without keeping the
    /// graph.
    pub fn evaluate(
        &self,
        tokens: &[u32],
        obs: &Observation,
        prev: Option<ActionId>,
    ) -> Result<(ActionDistribution, f64), PolicyError> {
        let mut g = self.graph(tokens)?;
        let heads = g.step(obs, prev)?;
        Ok((g.distribution(&heads), g.value(&heads)))
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerVars {
    weight: Var,
    bias: Var,
}

#[derive(Debug, Clone, Copy)]
struct GraphParams {
    obs_fc1: LayerVars,
    obs_fc2: LayerVars,
    /// Per-channel gate broadcast to every cell, fixed for the instruction.
    obs_gate: Option<Var>,
    action_embedding: Var,
    trunk: Option<LayerVars>,
    block_head: LayerVars,
    direction_head: LayerVars,
    value_head: LayerVars,
}

/// Outputs of one forward step.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    pub state: Var,
    pub block_log_probs: Var,
    pub direction_log_probs: Var,
    pub value: Var,
}

/// A tape holding one instruction's encoding plus any number of steps.
pub struct PolicyGraph<'p> {
    pub tape: Tape<'p>,
    policy: &'p Policy,
    instruction: Var,
    vars: GraphParams,
}

impl<'p> PolicyGraph<'p> {
    fn new(policy: &'p Policy, tokens: &[u32]) -> Result<Self, PolicyError> {
        let cfg = &policy.cfg;
        if tokens.is_empty() {
            return Err(PolicyError::EmptyInstruction);
        }
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(PolicyError::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        let ids = policy.ids;
        let mut tape = Tape::new(&policy.params);
        let mut layer = |l: Layer| LayerVars {
            weight: tape.param(l.weight),
            bias: tape.param(l.bias),
        };
        let lstm = layer(ids.lstm);
        let gate = ids.obs_gate.map(&mut layer);
        let mut vars = GraphParams {
            obs_fc1: layer(ids.obs_fc1),
            obs_fc2: layer(ids.obs_fc2),
            obs_gate: None,
            trunk: ids.trunk.map(&mut layer),
            block_head: layer(ids.block_head),
            direction_head: layer(ids.direction_head),
            value_head: layer(ids.value_head),
            action_embedding: tape.param(ids.action_embedding),
        };
        let embedding = tape.param(ids.word_embedding);

        let hidden = cfg.lstm_hidden;
        let zeros = vec![0.0; hidden];
        let mut h = tape.constant_vec(&zeros)?;
        let mut c = tape.constant_vec(&zeros)?;
        let mut outputs = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            let x = tape.embed_column(embedding, tok as usize)?;
            let hc = tape.lstm_cell(x, h, c, lstm.weight, lstm.bias)?;
            h = tape.slice(hc, 0, hidden)?;
            c = tape.slice(hc, hidden, hidden)?;
            outputs.push(h);
        }
        let mut total = outputs[0];
        for &o in &outputs[1..] {
            total = tape.add(total, o)?;
        }
        let instruction = tape.scale(total, 1.0 / outputs.len() as f64)?;
        if let Some(g) = gate {
            let z = tape.matvec(g.weight, instruction)?;
            let z = tape.add(z, g.bias)?;
            let g = tape.sigmoid(z)?;
            vars.obs_gate = Some(tape.repeat_each(g, cfg.grid_size * cfg.grid_size)?);
        }
        Ok(Self {
            tape,
            policy,
            instruction,
            vars,
        })
    }

    pub fn policy(&self) -> &'p Policy {
        self.policy
    }

    /// The averaged LSTM output `s_x`.
    pub fn instruction(&self) -> Var {
        self.instruction
    }

    fn affine(&mut self, l: LayerVars, x: Var) -> Result<Var, PolicyError> {
        let y = self.tape.matvec(l.weight, x)?;
        Ok(self.tape.add(y, l.bias)?)
    }

    /// `s = s_o ⊕ s_x ⊕ s_a`.
    pub fn encode_state(&mut self, obs: &Observation, prev: Option<ActionId>) -> Result<Var, PolicyError> {
        let cfg = self.policy.cfg;
        let expected = observation_len(cfg.num_blocks, cfg.grid_size);
        if obs.len() != expected {
            return Err(PolicyError::ObservationShape {
                expected,
                got: obs.len(),
            });
        }
        let prev_index = match prev {
            None => cfg.no_prev_index(),
            Some(a) if a.index() < cfg.action_space().size() => a.index(),
            Some(a) => {
                return Err(PolicyError::ActionOutOfRange {
                    code: a.0,
                    action_count: cfg.action_space().size(),
                })
            }
        };
        let mut o = self.tape.constant_vec(&obs.data)?;
        if let Some(gate) = self.vars.obs_gate {
            o = self.tape.mul(o, gate)?;
        }
        let h1 = self.affine(self.vars.obs_fc1, o)?;
        let h1 = self.tape.tanh(h1)?;
        let h2 = self.affine(self.vars.obs_fc2, h1)?;
        let s_o = self.tape.tanh(h2)?;
        let s_a = self.tape.embed_column(self.vars.action_embedding, prev_index)?;
        Ok(self.tape.concat(&[s_o, self.instruction, s_a])?)
    }

    pub fn heads(&mut self, state: Var) -> Result<Heads, PolicyError> {
        let z = match self.vars.trunk {
            Some(trunk) => {
                let t = self.affine(trunk, state)?;
                self.tape.tanh(t)?
            }
            None => state,
        };
        let block = self.affine(self.vars.block_head, z)?;
        let block_log_probs = self.tape.log_softmax(block)?;
        let dir = self.affine(self.vars.direction_head, z)?;
        let direction_log_probs = self.tape.log_softmax(dir)?;
        let value = self.affine(self.vars.value_head, z)?;
        Ok(Heads {
            state,
            block_log_probs,
            direction_log_probs,
            value,
        })
    }

    pub fn step(&mut self, obs: &Observation, prev: Option<ActionId>) -> Result<Heads, PolicyError> {
        let s = self.encode_state(obs, prev)?;
        self.heads(s)
    }

    /// `log π(a | s)` on the induced joint.
    pub fn log_prob(&mut self, heads: &Heads, action: ActionId) -> Result<Var, PolicyError> {
        let space = self.policy.cfg.action_space();
        let decoded = space.decode(action).map_err(|_| PolicyError::ActionOutOfRange {
            code: action.0,
            action_count: space.size(),
        })?;
        Ok(match decoded {
            Action::Stop => self.tape.pick(heads.direction_log_probs, STOP_CLASS)?,
            Action::Move { block, dir } => {
                let lb = self.tape.pick(heads.block_log_probs, block)?;
                let ld = self.tape.pick(heads.direction_log_probs, dir.code())?;
                self.tape.add(lb, ld)?
            }
        })
    }

    /// Joint entropy `H(p_d) + (1 - p_d[STOP]) H(p_b)`, which equals
    /// `-Σ π ln π` over all `4B + 1` actions.
    pub fn entropy(&mut self, heads: &Heads) -> Result<Var, PolicyError> {
        let t = &mut self.tape;
        let entropy_of = |t: &mut Tape<'p>, lp: Var| -> Result<Var, AutodiffError> {
            let p = t.exp(lp)?;
            let plp = t.mul(p, lp)?;
            let s = t.sum(plp)?;
            t.scale(s, -1.0)
        };
        let hb = entropy_of(t, heads.block_log_probs)?;
        let hd = entropy_of(t, heads.direction_log_probs)?;
        let lstop = t.pick(heads.direction_log_probs, STOP_CLASS)?;
        let pstop = t.exp(lstop)?;
        let neg = t.scale(pstop, -1.0)?;
        let move_mass = t.add_scalar(neg, 1.0)?;
        let weighted = t.mul(move_mass, hb)?;
        Ok(t.add(hd, weighted)?)
    }

    pub fn distribution(&self, heads: &Heads) -> ActionDistribution {
        let exp_all = |v: Var| self.tape.value(v).iter().map(|&x| math::exp(x)).collect::<Vec<f64>>();
        let d = exp_all(heads.direction_log_probs);
        ActionDistribution {
            block: exp_all(heads.block_log_probs),
            direction: [d[0], d[1], d[2], d[3], d[4]],
        }
    }

    pub fn value(&self, heads: &Heads) -> f64 {
        self.tape.scalar(heads.value)
    }
}

/// Factorized action distribution: block probabilities and direction
/// probabilities (index 4 is STOP).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub block: Vec<f64>,
    pub direction: [f64; DIRECTION_CLASSES],
}

impl ActionDistribution {
    pub fn from_logits(block_logits: &[f64], direction_logits: &[f64; DIRECTION_CLASSES]) -> Self {
        let d = crate::autodiff::tape_softmax(direction_logits);
        Self {
            block: crate::autodiff::tape_softmax(block_logits),
            direction: [d[0], d[1], d[2], d[3], d[4]],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.block.len()
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace::new(self.block.len())
    }

    pub fn prob(&self, action: ActionId) -> f64 {
        match self.action_space().decode(action) {
            Ok(Action::Stop) => self.direction[STOP_CLASS],
            Ok(Action::Move { block, dir }) => self.block[block] * self.direction[dir.code()],
            Err(_) => 0.0,
        }
    }

    /// `ln π(a)`, computed from the factors so STOP never depends on `p_b`.
    pub fn log_prob(&self, action: ActionId) -> f64 {
        match self.action_space().decode(action) {
            Ok(Action::Stop) => math::ln(self.direction[STOP_CLASS]),
            Ok(Action::Move { block, dir }) => math::ln(self.block[block]) + math::ln(self.direction[dir.code()]),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Probabilities of all `4B + 1` actions, indexed by action code.
    pub fn joint(&self) -> Vec<f64> {
        self.action_space().iter().map(|a| self.prob(a)).collect()
    }

    /// `-Σ π ln π` over the joint, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.joint().into_iter().filter(|&p| p > 0.0).map(|p| -p * math::ln(p)).sum()
    }

    /// Direction first; a move then draws its block.
    pub fn sample(&self, rng: &mut impl Rng) -> ActionId {
        let space = self.action_space();
        let dir = sample_index(&self.direction, rng);
        if dir == STOP_CLASS {
            return space.stop();
        }
        let block = sample_index(&self.block, rng);
        space.encode(Action::Move {
            block,
            dir: Direction::ALL[dir],
        })
    }

    /// Most probable joint action; ties go to the lower code, and STOP wins
    /// ties against moves.
    pub fn greedy(&self) -> ActionId {
        let space = self.action_space();
        let best_block = math::argmax(&self.block);
        let best_dir = math::argmax(&self.direction[..STOP_CLASS]);
        if self.direction[STOP_CLASS] >= self.block[best_block] * self.direction[best_dir] {
            space.stop()
        } else {
            space.encode(Action::Move {
                block: best_block,
                dir: Direction::ALL[best_dir],
            })
        }
    }
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum; take the last non-zero entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{observe, Cell, Goal, WorldState};

    fn small_cfg() -> PolicyConfig {
        PolicyConfig::new(4, 3, 12)
    }

    fn obs() -> Observation {
        let w = WorldState::new(4, vec![Cell::new(0, 0), Cell::new(1, 2), Cell::new(3, 3)]).unwrap();
        observe(
            &w,
            &Goal {
                target_block: 1,
                target_cell: Cell::new(2, 2),
            },
        )
    }

    fn zeroed(mut p: Policy) -> Policy {
        let ids: Vec<_> = p.params().iter().map(|(id, _, _)| id).collect();
        for id in ids {
            p.params_mut().get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        p
    }

    #[test]
    fn state_dimension_is_sum_of_parts() {
        let p = Policy::new(small_cfg(), 1);
        let mut g = p.graph(&[3, 4, 5]).unwrap();
        let s = g.encode_state(&obs(), None).unwrap();
        assert_eq!(g.tape.value(s).len(), 32 + 32 + 8);
        let s = g.encode_state(&obs(), Some(ActionId(5))).unwrap();
        assert_eq!(g.tape.value(s).len(), small_cfg().state_dim());
    }

    #[test]
    fn single_token_instruction_is_its_lstm_output() {
        let p = Policy::new(small_cfg(), 2);
        let g = p.graph(&[7]).unwrap();
        let mut tape = Tape::new(p.params());
        let emb = tape.param(p.params().find("word_embedding").unwrap());
        let w = tape.param(p.params().find("lstm.weight").unwrap());
        let b = tape.param(p.params().find("lstm.bias").unwrap());
        let x = tape.embed_column(emb, 7).unwrap();
        let z = tape.constant_vec(&[0.0; 32]).unwrap();
        let hc = tape.lstm_cell(x, z, z, w, b).unwrap();
        assert_eq!(g.tape.value(g.instruction()), &tape.value(hc)[..32]);
    }

    #[test]
    fn zero_parameters_give_zero_instruction_encoding() {
        let p = zeroed(Policy::new(small_cfg(), 3));
        let g = p.graph(&[2, 3, 4, 5]).unwrap();
        assert!(g.tape.value(g.instruction()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn token_order_matters() {
        let p = Policy::new(small_cfg(), 4);
        let a = p.graph(&[2, 9]).unwrap();
        let b = p.graph(&[9, 2]).unwrap();
        assert_ne!(a.tape.value(a.instruction()), b.tape.value(b.instruction()));
    }

    #[test]
    fn input_errors() {
        let p = Policy::new(small_cfg(), 5);
        assert_eq!(p.graph(&[]).err(), Some(PolicyError::EmptyInstruction));
        assert_eq!(
            p.graph(&[12]).err(),
            Some(PolicyError::TokenOutOfRange { id: 12, vocab_size: 12 })
        );
        let mut g = p.graph(&[1]).unwrap();
        let bad = Observation {
            channels: 1,
            grid_size: 1,
            data: vec![0.0],
        };
        assert!(matches!(g.encode_state(&bad, None), Err(PolicyError::ObservationShape { .. })));
        assert!(matches!(
            g.encode_state(&obs(), Some(ActionId(13))),
            Err(PolicyError::ActionOutOfRange { .. })
        ));
    }

    #[test]
    fn uniform_heads_for_paper_scale() {
        let d = ActionDistribution::from_logits(&[0.0; 20], &[0.0; 5]);
        assert!(d.block.iter().all(|&p| (p - 0.05).abs() < 1e-15));
        assert!(d.direction.iter().all(|&p| (p - 0.2).abs() < 1e-15));
        let joint = d.joint();
        assert_eq!(joint.len(), 81);
        assert!(joint[..80].iter().all(|&p| (p - 0.01).abs() < 1e-15));
        assert!((joint[80] - 0.2).abs() < 1e-15);
        assert!((joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_uniform_joint_entropy_is_ln_81() {
        // Direction mass 0.8 on moves spread over 80 moves at 1/81 needs
        // p_d = (1/81 * 20, ..., 1/81) and p_b uniform.
        let q = 20.0 / 81.0;
        let d = ActionDistribution {
            block: vec![0.05; 20],
            direction: [q, q, q, q, 1.0 / 81.0],
        };
        assert!(d.joint().iter().all(|&p| (p - 1.0 / 81.0).abs() < 1e-15));
        assert!((d.entropy() - 81f64.ln()).abs() < 1e-12);
        assert!((d.entropy() - 4.3944).abs() < 1e-4);
    }

    #[test]
    fn stop_log_prob_ignores_block_head() {
        let a = ActionDistribution::from_logits(&[1.0, -2.0, 0.5], &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let b = ActionDistribution::from_logits(&[-3.0, 4.0, 0.0], &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let stop = ActionSpace::new(3).stop();
        assert_eq!(a.log_prob(stop), b.log_prob(stop));
        assert_eq!(a.log_prob(stop), a.direction[4].ln());
    }

    #[test]
    fn deterministic_stop_distribution() {
        let d = ActionDistribution {
            block: vec![0.2, 0.3, 0.5],
            direction: [0.0, 0.0, 0.0, 0.0, 1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), ActionSpace::new(3).stop());
        }
        assert_eq!(d.entropy(), 0.0);
        assert_eq!(d.greedy(), ActionSpace::new(3).stop());
    }

    #[test]
    fn greedy_picks_joint_argmax() {
        let d = ActionDistribution::from_logits(&[0.0, 3.0, 0.0], &[0.0, 0.0, 2.0, 0.0, 0.5]);
        let best = (0..13).map(ActionId).max_by(|a, b| d.prob(*a).total_cmp(&d.prob(*b))).unwrap();
        assert_eq!(d.greedy(), best);
    }

    #[test]
    fn graph_and_plain_distribution_agree() {
        let p = Policy::new(small_cfg(), 9);
        let mut g = p.graph(&[3, 1, 4]).unwrap();
        let heads = g.step(&obs(), Some(ActionId(2))).unwrap();
        let dist = g.distribution(&heads);
        for a in ActionSpace::new(3).iter() {
            let lp = g.log_prob(&heads, a).unwrap();
            assert!((g.tape.scalar(lp) - dist.log_prob(a)).abs() < 1e-12);
        }
        let h = g.entropy(&heads).unwrap();
        assert!((g.tape.scalar(h) - dist.entropy()).abs() < 1e-12);
        let (d2, v) = p.evaluate(&[3, 1, 4], &obs(), Some(ActionId(2))).unwrap();
        assert_eq!(d2, dist);
        assert_eq!(v, g.value(&heads));
    }

    #[test]
    fn initial_policy_is_near_uniform() {
        let p = Policy::new(PolicyConfig::new(6, 5, 40), 0);
        let o = observe(
            &WorldState::new(6, (0..5).map(|i| Cell::new(i, i)).collect()).unwrap(),
            &Goal {
                target_block: 0,
                target_cell: Cell::new(5, 0),
            },
        );
        let (d, _) = p.evaluate(&[5, 6, 7], &o, None).unwrap();
        let max = 21f64.ln();
        assert!(d.entropy() > 0.99 * max && d.entropy() <= max + 1e-12);
    }

    #[test]
    fn from_params_checks_shapes() {
        let p = Policy::new(small_cfg(), 1);
        let other = PolicyConfig::new(4, 4, 12);
        assert!(matches!(
            Policy::from_params(other, p.params().clone()),
            Err(PolicyError::ParamShape { .. })
        ));
        assert!(Policy::from_params(small_cfg(), p.clone().into_params()).is_ok());
        assert!(matches!(
            Policy::from_params(small_cfg(), ParamSet::new()),
            Err(PolicyError::MissingParam(_))
        ));
    }

    #[test]
    fn initialization_is_reproducible_and_bounded() {
        let a = Policy::new(small_cfg(), 42);
        assert_eq!(a.params(), Policy::new(small_cfg(), 42).params());
        assert_ne!(a.params(), Policy::new(small_cfg(), 43).params());
        let b = small_cfg().num_blocks as f64;
        for (_, name, t) in a.params().iter() {
            for (i, &x) in t.data().iter().enumerate() {
                let offset = if name == "head.direction.bias" && i == STOP_CLASS { -b.ln() } else { 0.0 };
                assert!((x - offset).abs() < 0.08);
            }
        }
    }
}
