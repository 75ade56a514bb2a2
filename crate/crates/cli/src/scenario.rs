//! Scenario files: a single JSON document describing a game, a network, an
//! imitation mechanism, an initial state, integrator settings and the
//! requested analyses.

use std::path::Path;

use imitation_core::games::{
    anticoordination_game, congestion_game, constant_reward_game, rps_game,
};
use imitation_core::mechanisms::{
    affine_mechanism, constant_mechanism, pairwise_proportional_mechanism, replicator_mechanism,
    sigmoid_mechanism, sigmoid_uniform,
};
use imitation_core::state::balanced_state;
use imitation_core::{
    sampling, ActionSet, Game, IntegratorSettings, Mechanism, Network, Population, Settings, State,
};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Lower bound on every entry share of a `random_interior` initial state.
pub const RANDOM_INTERIOR_FLOOR: f64 = 0.01;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub game: GameSpec,
    pub network: NetworkSpec,
    pub mechanism: MechanismSpec,
    pub initial_state: InitialStateSpec,
    pub integrator: IntegratorSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analyses: Vec<AnalysisSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    /// One of `constant_reward`, `anticoordination`, `congestion`, `rps`.
    Builtin { name: String },
    /// `r_i(y) = b_i + Σ_j A_ij y_j` with an optional quadratic potential.
    Affine {
        actions: Vec<String>,
        a: Matrix,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        potential: Option<QuadraticPotential>,
    },
}

/// `Φ(y) = Σ_ij P_ij y_i y_j + Σ_i q_i y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticPotential {
    pub p: Matrix,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub communities: Vec<String>,
    pub eta: Vec<f64>,
    pub weights: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    Replicator {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
    PairwiseProportional,
    Sigmoid { k: Gain },
    Constant { rates: Matrix },
    /// `f(y) = base + Σ_l y_l · slopes[l]`.
    Affine { base: Matrix, slopes: Vec<Matrix> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Uniform(f64),
    Matrix(Matrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    Explicit { x: Matrix },
    Balanced { y: Vec<f64> },
    RandomInterior { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub step: f64,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_renorm_threshold")]
    pub renorm_threshold: f64,
    #[serde(default = "default_clamp_floor")]
    pub clamp_floor: f64,
}

fn default_record_every() -> usize {
    1
}

fn default_renorm_threshold() -> f64 {
    1e-9
}

fn default_clamp_floor() -> f64 {
    1e-14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisSpec {
    /// Distance of the trajectory to a target, with the oscillation heuristic.
    Convergence {
        target: TargetSpec,
        threshold: f64,
        window: f64,
    },
    /// Largest `‖x − y·ηᵀ‖∞` over the final `window` time units.
    Balancedness { window: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Point { y: Vec<f64> },
    SystemPoint { x: Matrix },
    /// The Nash set of an affine game.
    Nash,
    /// Nash set plus restricted faces that touch it.
    YCircle,
}

impl TargetSpec {
    pub fn label(&self) -> &'static str {
        match self {
            TargetSpec::Point { .. } => "point",
            TargetSpec::SystemPoint { .. } => "system_point",
            TargetSpec::Nash => "nash",
            TargetSpec::YCircle => "y_circle",
        }
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub step: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
}

impl Scenario {
    /// Reads and parses a scenario, reporting the line, column and field of
    /// the first problem.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("{}: cannot read scenario: {e}", path.display()))
        })?;
        Self::parse(&text).map_err(|msg| CliError::Validation(format!("{}:{msg}", path.display())))
    }

    /// Parses scenario text. Errors read `line:column: field `path`: reason`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            format!(
                "{}:{}: field `{}`: {}",
                inner.line(),
                inner.column(),
                e.path(),
                strip_position(&inner.to_string())
            )
        })?;
        Ok(scenario)
    }

    /// Canonical serialization: pretty-printed with a trailing newline.
    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(step) = o.step {
            self.integrator.step = step;
        }
        if let Some(t) = o.t_end {
            self.integrator.t_end = t;
        }
        if let Some(seed) = o.seed {
            if let InitialStateSpec::RandomInterior { seed: s } = &mut self.initial_state {
                *s = seed;
            }
        }
    }

    /// Validates every field and builds the model objects.
    pub fn build(&self) -> CliResult<Model> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(CliError::Validation(
                "field `name`: must be nonempty and use only [A-Za-z0-9_.-]".into(),
            ));
        }
        let game = build_game(&self.game)?;
        let net = build_network(&self.network)?;
        let mechanism = build_mechanism(&self.mechanism, &game)?;
        let x0 = build_initial_state(&self.initial_state, &game, &net)?;
        let settings = IntegratorSettings {
            step: self.integrator.step,
            t_end: self.integrator.t_end,
            record_every: self.integrator.record_every,
            renorm_threshold: self.integrator.renorm_threshold,
            clamp_floor: self.integrator.clamp_floor,
        };
        settings
            .validate()
            .map_err(|e| CliError::from_core("integrator", e))?;
        for (k, a) in self.analyses.iter().enumerate() {
            validate_analysis(a, k, &game, &net)?;
        }
        Ok(Model {
            game,
            net,
            mechanism,
            x0,
            settings,
        })
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Validated model objects built from a scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub game: Game,
    pub net: Network,
    pub mechanism: Mechanism,
    pub x0: State,
    pub settings: Settings,
}

pub fn matrix(rows: &Matrix, field: &str) -> CliResult<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(CliError::Validation(format!("field `{field}`: matrix is empty")));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != m) {
        return Err(CliError::Validation(format!(
            "field `{field}[{r}]`: expected {m} entries, got {}",
            rows[r].len()
        )));
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
}

fn square(rows: &Matrix, n: usize, field: &str) -> CliResult<Array2<f64>> {
    let a = matrix(rows, field)?;
    if a.dim() != (n, n) {
        return Err(CliError::Validation(format!(
            "field `{field}`: expected a {n}x{n} matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a)
}

fn build_game(spec: &GameSpec) -> CliResult<Game> {
    match spec {
        GameSpec::Builtin { name } => match name.as_str() {
            "constant_reward" => Ok(constant_reward_game()),
            "anticoordination" => Ok(anticoordination_game()),
            "congestion" => Ok(congestion_game()),
            "rps" => Ok(rps_game()),
            other => Err(CliError::Validation(format!(
                "field `game.name`: unknown built-in game `{other}` \
                 (expected constant_reward, anticoordination, congestion or rps)"
            ))),
        },
        GameSpec::Affine {
            actions,
            a,
            b,
            potential,
        } => {
            let labels = ActionSet::new(actions.iter().cloned())
                .map_err(|e| CliError::from_core("game.actions", e))?;
            let n = labels.len();
            let a = square(a, n, "game.a")?;
            if b.len() != n {
                return Err(CliError::Validation(format!(
                    "field `game.b`: expected {n} entries, got {}",
                    b.len()
                )));
            }
            let game = Game::affine("affine", labels, a, Array1::from(b.clone()))
                .map_err(|e| CliError::from_core("game", e))?;
            match potential {
                None => Ok(game),
                Some(QuadraticPotential { p, q }) => {
                    let p = square(p, n, "game.potential.p")?;
                    if q.len() != n {
                        return Err(CliError::Validation(format!(
                            "field `game.potential.q`: expected {n} entries, got {}",
                            q.len()
                        )));
                    }
                    game.with_quadratic_potential(p, Array1::from(q.clone()))
                        .map_err(|e| CliError::from_core("game.potential", e))
                }
            }
        }
    }
}

fn build_network(spec: &NetworkSpec) -> CliResult<Network> {
    let w = matrix(&spec.weights, "network.weights")?;
    Network::new(spec.communities.iter().cloned(), spec.eta.clone(), w)
        .map_err(|e| CliError::from_core("network", e))
}

fn build_mechanism(spec: &MechanismSpec, game: &Game) -> CliResult<Mechanism> {
    let n = game.n_actions();
    let field = "mechanism";
    let m = match spec {
        MechanismSpec::Replicator { c } => replicator_mechanism(game, *c),
        MechanismSpec::PairwiseProportional => Ok(pairwise_proportional_mechanism(game)),
        MechanismSpec::Sigmoid { k: Gain::Uniform(k) } => sigmoid_uniform(game, *k),
        MechanismSpec::Sigmoid { k: Gain::Matrix(k) } => {
            sigmoid_mechanism(game, square(k, n, "mechanism.k")?)
        }
        MechanismSpec::Constant { rates } => {
            constant_mechanism(square(rates, n, "mechanism.rates")?)
        }
        MechanismSpec::Affine { base, slopes } => {
            let base = square(base, n, "mechanism.base")?;
            if slopes.len() != n {
                return Err(CliError::Validation(format!(
                    "field `mechanism.slopes`: expected {n} matrices, got {}",
                    slopes.len()
                )));
            }
            let slopes = slopes
                .iter()
                .enumerate()
                .map(|(l, s)| square(s, n, &format!("mechanism.slopes[{l}]")))
                .collect::<CliResult<Vec<_>>>()?;
            affine_mechanism(base, slopes)
        }
    }
    .map_err(|e| CliError::from_core(field, e))?;
    if m.n_actions() != n {
        return Err(CliError::Validation(format!(
            "field `mechanism`: built for {} actions but the game has {n}",
            m.n_actions()
        )));
    }
    Ok(m)
}

fn build_initial_state(spec: &InitialStateSpec, game: &Game, net: &Network) -> CliResult<State> {
    let n = game.n_actions();
    let field = "initial_state";
    match spec {
        InitialStateSpec::Explicit { x } => {
            let x = matrix(x, "initial_state.x")?;
            if x.dim() != (n, net.len()) {
                return Err(CliError::Validation(format!(
                    "field `initial_state.x`: expected {n} actions x {} communities, got {}x{}",
                    net.len(),
                    x.nrows(),
                    x.ncols()
                )));
            }
            State::new(x, net).map_err(|e| CliError::from_core(field, e))
        }
        InitialStateSpec::Balanced { y } => {
            if y.len() != n {
                return Err(CliError::Validation(format!(
                    "field `initial_state.y`: expected {n} entries, got {}",
                    y.len()
                )));
            }
            let y = Population::new(y.clone()).map_err(|e| CliError::from_core(field, e))?;
            Ok(balanced_state(&y, net))
        }
        InitialStateSpec::RandomInterior { seed } => {
            let mut rng = sampling::rng(*seed);
            let cols: Vec<Vec<f64>> = (0..net.len())
                .map(|_| sampling::interior_simplex(&mut rng, n, RANDOM_INTERIOR_FLOOR))
                .collect();
            let x = Array2::from_shape_fn((n, net.len()), |(i, h)| cols[h][i] * net.eta()[h]);
            State::new(x, net).map_err(|e| CliError::from_core(field, e))
        }
    }
}

fn validate_analysis(a: &AnalysisSpec, k: usize, game: &Game, net: &Network) -> CliResult<()> {
    let bad = |what: &str| Err(CliError::Validation(format!("field `analyses[{k}]`: {what}")));
    match a {
        AnalysisSpec::Convergence {
            target,
            threshold,
            window,
        } => {
            if !(*threshold > 0.0) || !(*window > 0.0) {
                return bad("threshold and window must be positive");
            }
            match target {
                TargetSpec::Point { y } if y.len() != game.n_actions() => {
                    bad("target point has the wrong number of actions")
                }
                TargetSpec::SystemPoint { x } => {
                    let x = matrix(x, &format!("analyses[{k}].target.x"))?;
                    if x.dim() != (game.n_actions(), net.len()) {
                        return bad("target system point has the wrong shape");
                    }
                    Ok(())
                }
                TargetSpec::Nash | TargetSpec::YCircle if game.affine_form().is_none() => {
                    bad("set targets need an affine game")
                }
                _ => Ok(()),
            }
        }
        AnalysisSpec::Balancedness { window, threshold } => {
            if !(*threshold > 0.0) || !(*window > 0.0) {
                return bad("threshold and window must be positive");
            }
            Ok(())
        }
    }
}
