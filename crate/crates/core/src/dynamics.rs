//! The asynchronous averaging process: one agent per step replaces its
//! opinion by the mean over its closed neighborhood, then its incident edges
//! may be pruned and pairs elsewhere may flip.

use std::time::Instant;

use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsSeries};
use crate::graph::{self, DynamicGraph, FlipMethod, GraphError};
use crate::harness::{CellParams, RunRecord};
use crate::rng::{labels, RngError, RngStream};

/// Sum of the selection probabilities may deviate from 1 by at most this.
pub const SELECTION_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Rng(#[from] RngError),
    #[error("invalid selection distribution: {0}")]
    InvalidSelection(String),
    #[error("initial state vector has length {got}, expected {expected}")]
    InitLength { expected: usize, got: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("state vector has length {states}, graph has {graph} vertices")]
    SizeMismatch { states: usize, graph: usize },
}

/// Opinions `x_i(t)`, one per agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentStates(Vec<f64>);

impl AgentStates {
    pub fn new(values: Vec<f64>) -> Result<Self, DynamicsError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DynamicsError::InvalidParam {
                name: "states",
                reason: format!("entry {i} is not finite"),
            });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `max_i x_i - min_i x_i`; zero for an empty vector.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self
            .0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        if lo > hi {
            0.0
        } else {
            hi - lo
        }
    }
}

impl std::ops::Index<usize> for AgentStates {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-step agent selection probabilities `p_i`, all strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDistribution {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SelectionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DynamicsError> {
        if probs.is_empty() {
            return Err(DynamicsError::InvalidSelection("no agents".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(DynamicsError::InvalidSelection(format!(
                "probability of agent {} is {p}, must be positive",
                i + 1
            )));
        }
        let cumulative: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let total = *cumulative.last().expect("nonempty");
        if (total - 1.0).abs() > SELECTION_SUM_TOLERANCE {
            return Err(DynamicsError::InvalidSelection(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { probs, cumulative })
    }

    pub fn uniform(n: usize) -> Result<Self, DynamicsError> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF draw; consumes exactly one uniform.
    pub fn select(&self, rng: &mut RngStream) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let target = rng.uniform() * total;
        self.cumulative
            .partition_point(|&c| c <= target)
            .min(self.probs.len() - 1)
    }
}

/// How initial opinions are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    /// i.i.d. uniform on `[0, 1]`.
    Uniform01,
    Constant(f64),
    Explicit(Vec<f64>),
}

pub fn init_states(
    n: usize,
    init: &InitSpec,
    rng: &mut RngStream,
) -> Result<AgentStates, DynamicsError> {
    if n == 0 {
        return Err(GraphError::Empty.into());
    }
    match init {
        InitSpec::Uniform01 => AgentStates::new((0..n).map(|_| rng.uniform()).collect()),
        InitSpec::Constant(c) => AgentStates::new(vec![*c; n]),
        InitSpec::Explicit(values) if values.len() == n => AgentStates::new(values.clone()),
        InitSpec::Explicit(values) => Err(DynamicsError::InitLength {
            expected: n,
            got: values.len(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub n: usize,
    pub p_init: f64,
    pub q_shrink: f64,
    pub q_flip: f64,
    /// Stop once the opinion diameter is strictly below this.
    pub tolerance: f64,
    /// Maximum number of steps.
    pub horizon: u64,
    pub selection: SelectionDistribution,
    pub init: InitSpec,
    pub flip_method: FlipMethod,
    pub er_max_attempts: usize,
}

impl SimParams {
    /// Uniform selection, uniform initial opinions, binomial flips.
    pub fn new(
        n: usize,
        p_init: f64,
        q_shrink: f64,
        q_flip: f64,
        tolerance: f64,
        horizon: u64,
    ) -> Result<Self, DynamicsError> {
        let params = Self {
            n,
            p_init,
            q_shrink,
            q_flip,
            tolerance,
            horizon,
            selection: SelectionDistribution::uniform(n.max(1))?,
            init: InitSpec::Uniform01,
            flip_method: FlipMethod::Binomial,
            er_max_attempts: graph::DEFAULT_ER_ATTEMPTS,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let prob = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(DynamicsError::InvalidParam {
                    name,
                    reason: format!("{v} outside [0, 1]"),
                })
            }
        };
        if self.n == 0 {
            return Err(DynamicsError::InvalidParam {
                name: "n",
                reason: "must be at least 1".into(),
            });
        }
        prob("p_init", self.p_init)?;
        prob("q_shrink", self.q_shrink)?;
        prob("q_flip", self.q_flip)?;
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(DynamicsError::InvalidParam {
                name: "tolerance",
                reason: format!("{} is not a positive number", self.tolerance),
            });
        }
        if self.selection.len() != self.n {
            return Err(DynamicsError::InvalidSelection(format!(
                "{} probabilities for {} agents",
                self.selection.len(),
                self.n
            )));
        }
        if let InitSpec::Explicit(values) = &self.init {
            if values.len() != self.n {
                return Err(DynamicsError::InitLength {
                    expected: self.n,
                    got: values.len(),
                });
            }
        }
        if self.er_max_attempts == 0 {
            return Err(DynamicsError::InvalidParam {
                name: "er_max_attempts",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn cell(&self) -> CellParams {
        CellParams {
            n: self.n,
            p_init: self.p_init,
            q_shrink: self.q_shrink,
            q_flip: self.q_flip,
            tolerance: self.tolerance,
            horizon: self.horizon,
        }
    }
}

/// The pair `(G_t, x(t))` at step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub t: u64,
    pub graph: DynamicGraph,
    pub states: AgentStates,
}

impl WorldState {
    pub fn new(graph: DynamicGraph, states: AgentStates) -> Result<Self, DynamicsError> {
        if graph.n() != states.len() {
            return Err(DynamicsError::SizeMismatch {
                states: states.len(),
                graph: graph.n(),
            });
        }
        Ok(Self {
            t: 0,
            graph,
            states,
        })
    }
}

/// The three per-step random streams of a run.
#[derive(Clone, Debug)]
pub struct StepStreams {
    pub selection: RngStream,
    pub shrink: RngStream,
    pub flip: RngStream,
}

impl StepStreams {
    pub fn from_root(root: &RngStream) -> Result<Self, RngError> {
        Ok(Self {
            selection: root.split(labels::SELECTION)?,
            shrink: root.split(labels::SHRINK)?,
            flip: root.split(labels::FLIP)?,
        })
    }
}

/// What happened during one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub selected: usize,
    pub previous_value: f64,
    pub removed: usize,
    pub toggled: usize,
}

/// Replaces `x_i` by the mean of `x_j` over the closed neighborhood of `i`
/// (summed in ascending agent order, divided once, then clamped to the
/// neighborhood's range). Returns the new value.
pub fn averaging_update(
    states: &mut AgentStates,
    g: &DynamicGraph,
    i: usize,
) -> Result<f64, DynamicsError> {
    if states.len() != g.n() {
        return Err(DynamicsError::SizeMismatch {
            states: states.len(),
            graph: g.n(),
        });
    }
    let hood = g.closed_neighborhood(i)?;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &j in &hood {
        let x = states.0[j];
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
    }
    // Rounding can push the quotient one ulp outside the neighborhood's range.
    let value = (sum / hood.len() as f64).clamp(lo, hi);
    states.0[i] = value;
    Ok(value)
}

/// One step with a chosen agent: average over the current graph, then
/// shrink, then flip.
pub fn step_with_agent(
    world: &mut WorldState,
    params: &SimParams,
    selected: usize,
    streams: &mut StepStreams,
) -> Result<StepOutcome, DynamicsError> {
    world.graph.check_agent(selected)?;
    let previous_value = world.states[selected];
    averaging_update(&mut world.states, &world.graph, selected)?;
    let removed = world
        .graph
        .shrink_neighborhood(selected, params.q_shrink, &mut streams.shrink)?;
    let toggled = world.graph.flip_nonincident_pairs(
        selected,
        params.q_flip,
        &mut streams.flip,
        params.flip_method,
    )?;
    world.t += 1;
    Ok(StepOutcome {
        selected,
        previous_value,
        removed,
        toggled,
    })
}

pub fn step(
    world: &mut WorldState,
    params: &SimParams,
    streams: &mut StepStreams,
) -> Result<StepOutcome, DynamicsError> {
    let selected = params.selection.select(&mut streams.selection);
    step_with_agent(world, params, selected, streams)
}

/// How thoroughly a run checks the per-step dissent drop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Check only the steps leaving a sample time.
    #[default]
    Fast,
    /// Check every step and record per-component deltas at sample times.
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub sample_stride: u64,
    pub mode: Mode,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sample_stride: 10,
            mode: Mode::Fast,
        }
    }
}

/// Initial world for `seed`: connected ER graph plus initial opinions, each
/// drawn from its own substream of `init`.
pub fn initial_world(params: &SimParams, root: &RngStream) -> Result<WorldState, DynamicsError> {
    let init = root.split(labels::INIT)?;
    let mut graph_rng = init.split(labels::INIT_GRAPH)?;
    let mut states_rng = init.split(labels::INIT_STATES)?;
    let graph = graph::er_connected(
        params.n,
        params.p_init,
        &mut graph_rng,
        params.er_max_attempts,
    )?;
    let states = init_states(params.n, &params.init, &mut states_rng)?;
    WorldState::new(graph, states)
}

/// Simulates until the diameter drops below the tolerance or the horizon
/// is reached.
pub fn run(params: &SimParams, seed: u64, options: RunOptions) -> Result<RunRecord, DynamicsError> {
    params.validate()?;
    if options.sample_stride == 0 {
        return Err(DynamicsError::InvalidParam {
            name: "sample_stride",
            reason: "must be positive".into(),
        });
    }
    let started = Instant::now();
    let root = RngStream::new(seed);
    let mut world = initial_world(params, &root)?;
    let mut streams = StepStreams::from_root(&root)?;
    let verify = options.mode == Mode::Verify;
    let stride = options.sample_stride;

    let mut samples = Vec::new();
    let mut diag = DiagnosticsSeries {
        component_delta: verify.then(Vec::new),
        ..Default::default()
    };
    let z0 = diagnostics::dissent_z(&world.states, &world.graph)?;
    record_sample(&world, z0, verify, &mut samples, &mut diag)?;
    // Z at the current step, when it has been computed.
    let mut z_current = Some(z0);

    let mut t_stop = None;
    loop {
        if world.states.diameter() < params.tolerance {
            t_stop = Some(world.t);
            break;
        }
        if world.t >= params.horizon {
            break;
        }
        let check = verify || world.t % stride == 0;
        let z_before = match (check, z_current) {
            (false, _) => None,
            (true, Some(z)) => Some(z),
            (true, None) => Some(diagnostics::dissent_z(&world.states, &world.graph)?),
        };
        let outcome = step(&mut world, params, &mut streams)?;
        let sampled = world.t % stride == 0;
        z_current = if check || sampled {
            Some(diagnostics::dissent_z(&world.states, &world.graph)?)
        } else {
            None
        };
        if let (Some(before), Some(after)) = (z_before, z_current) {
            let change = world.states[outcome.selected] - outcome.previous_value;
            let result = diagnostics::supermartingale_check(
                before,
                after,
                2.0 * change * change,
                format!(
                    "t={} selected={} removed={} toggled={}",
                    world.t - 1,
                    outcome.selected + 1,
                    outcome.removed,
                    outcome.toggled
                ),
            );
            if !result.holds {
                diag.drop_violations.push(result);
            }
        }
        if let (true, Some(z)) = (sampled, z_current) {
            record_sample(&world, z, verify, &mut samples, &mut diag)?;
        }
    }
    if samples.last().map(|(t, _)| *t) != Some(world.t) {
        let z_final = diagnostics::dissent_z(&world.states, &world.graph)?;
        record_sample(&world, z_final, verify, &mut samples, &mut diag)?;
    }
    diag.drop_violation_count = diag.drop_violations.len();

    Ok(RunRecord {
        cell: params.cell(),
        seed,
        t_stop,
        samples,
        diagnostics: diag,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

fn record_sample(
    world: &WorldState,
    z: f64,
    verify: bool,
    samples: &mut Vec<(u64, Vec<f64>)>,
    diag: &mut DiagnosticsSeries,
) -> Result<(), DynamicsError> {
    samples.push((world.t, world.states.values().to_vec()));
    diag.z.push((world.t, z));
    diag.diameter.push((world.t, world.states.diameter()));
    if verify {
        let deltas = diagnostics::component_deltas(&world.states, &world.graph)?;
        let worst = deltas.into_iter().fold(0.0, f64::max);
        diag.component_delta
            .get_or_insert_with(Vec::new)
            .push((world.t, worst));
    }
    Ok(())
}
