//! Round scheduling, debiased aggregation and the trust-window switch.

mod simulation;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{db_to_linear, ChannelError};
use crate::geometry::GeometryError;
use crate::harness::Normalize;
use crate::learning::{LearningError, ModelWeights};
use crate::trust::TrustError;

pub use simulation::{run_experiment, ChannelOutcome, Client, RunHeader, RunOutput, Simulation};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("round {0} has no participants")]
    NoParticipants(usize),
    #[error("upload layout does not match the global model")]
    Layout,
    #[error("schedule has {len} rounds; round {round} requested")]
    PastSchedule { round: usize, len: usize },
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Learning(#[from] LearningError),
}

/// Per-round decoding thresholds, kept in dB and linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrSchedule {
    thresholds_db: Vec<f64>,
    thresholds: Vec<f64>,
}

impl SinrSchedule {
    /// A schedule from explicit dB values; they must not increase.
    pub fn from_db(thresholds_db: Vec<f64>) -> Result<Self, OrchestratorError> {
        if thresholds_db.is_empty() {
            return Err(OrchestratorError::Schedule(
                "need at least one round".into(),
            ));
        }
        if thresholds_db
            .iter()
            .any(|z| z.is_nan() || *z == f64::INFINITY)
        {
            return Err(OrchestratorError::Schedule(
                "thresholds must be numbers below +inf".into(),
            ));
        }
        if thresholds_db.windows(2).any(|w| w[1] > w[0]) {
            return Err(OrchestratorError::Schedule(
                "thresholds must not increase".into(),
            ));
        }
        let thresholds = thresholds_db.iter().map(|&z| db_to_linear(z)).collect();
        Ok(Self {
            thresholds_db,
            thresholds,
        })
    }

    pub fn rounds(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds_db(&self) -> &[f64] {
        &self.thresholds_db
    }

    /// Linear thresholds.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

/// Descends from `start_db` by `step_db` per round and holds at `end_db`.
pub fn make_schedule(
    start_db: f64,
    end_db: f64,
    step_db: f64,
    rounds: usize,
) -> Result<SinrSchedule, OrchestratorError> {
    if rounds < 1 {
        return Err(OrchestratorError::Schedule(
            "need at least one round".into(),
        ));
    }
    if !(start_db.is_finite() && end_db.is_finite()) || start_db < end_db {
        return Err(OrchestratorError::Schedule(format!(
            "start {start_db} dB must be at least end {end_db} dB"
        )));
    }
    if !(step_db > 0.0 && step_db.is_finite()) {
        return Err(OrchestratorError::Schedule("step must be positive".into()));
    }
    let db = (0..rounds)
        .map(|t| (start_db - t as f64 * step_db).max(end_db))
        .collect();
    SinrSchedule::from_db(db)
}

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub client: usize,
    pub weights: ModelWeights,
    pub success: bool,
    /// `1 / S`, or `None` when the client is unreachable at this threshold.
    pub debias: Option<f64>,
}

/// `g + (1/N) * sum_n 1{success_n} * debias_n * (w_n - g)`, summed in the
/// order given. `N` is `participants` or the number of decoded uploads,
/// per `normalize`. Decoded uploads without a debias weight contribute zero.
pub fn aggregate(
    global: &ModelWeights,
    uploads: &[Upload],
    participants: usize,
    normalize: Normalize,
) -> Result<ModelWeights, OrchestratorError> {
    if participants == 0 {
        return Err(OrchestratorError::NoParticipants(0));
    }
    let counted: Vec<(&Upload, f64)> = uploads
        .iter()
        .filter(|u| u.success)
        .filter_map(|u| u.debias.map(|w| (u, w)))
        .collect();
    let divisor = match normalize {
        Normalize::Participants => participants,
        Normalize::Received => counted.len(),
    };
    let mut next = global.clone();
    if divisor == 0 {
        return Ok(next);
    }
    let mut sum = vec![0.0; global.len()];
    for (u, weight) in &counted {
        if u.weights.len() != global.len() || !u.weights.same_layout(global) {
            return Err(OrchestratorError::Layout);
        }
        for ((s, w), g) in sum.iter_mut().zip(u.weights.params()).zip(global.params()) {
            *s += weight * (w - g);
        }
    }
    let inv = 1.0 / divisor as f64;
    for (p, s) in next.params_mut().iter_mut().zip(&sum) {
        *p += inv * s;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentCase {
    /// Trusted and risky clients until the trust window fires, trusted only after.
    A,
    /// Trusted and risky clients throughout.
    B,
    /// Trusted clients only.
    C,
}

impl ExperimentCase {
    pub const ALL: [ExperimentCase; 3] = [Self::A, Self::B, Self::C];

    pub fn label(&self) -> &'static str {
        match self {
            Self::A => "risk_aware",
            Self::B => "risk_agnostic",
            Self::C => "conservative",
        }
    }

    pub fn initial_mode(&self) -> Mode {
        match self {
            Self::A | Self::B => Mode::RiskAgnostic,
            Self::C => Mode::TrustedOnly,
        }
    }
}

impl fmt::Display for ExperimentCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
        })
    }
}

impl FromStr for ExperimentCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            _ => Err(format!("unknown case `{s}`, expected A, B or C")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    RiskAgnostic,
    TrustedOnly,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RiskAgnostic => "risk_agnostic",
            Self::TrustedOnly => "trusted_only",
        }
    }
}

/// Validation-accuracy history for the switch to trusted-only rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustWindow {
    mu: usize,
    history: VecDeque<f64>,
    transitioned: bool,
}

impl TrustWindow {
    pub fn new(mu: usize) -> Self {
        Self {
            mu,
            history: VecDeque::with_capacity(mu + 1),
            transitioned: false,
        }
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn transitioned(&self) -> bool {
        self.transitioned
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    /// True iff `accuracy` is strictly below each of the last `mu` recorded
    /// values. Never true before `mu` values are recorded.
    pub fn check(&self, accuracy: f64) -> bool {
        self.mu > 0 && self.history.len() >= self.mu && self.history.iter().all(|&a| accuracy < a)
    }

    /// Records `accuracy`; returns true on the round the switch fires.
    pub fn observe(&mut self, accuracy: f64) -> bool {
        let fire = !self.transitioned && self.check(accuracy);
        if fire {
            self.transitioned = true;
        }
        self.history.push_back(accuracy);
        while self.history.len() > self.mu {
            self.history.pop_front();
        }
        fire
    }
}

/// Everything logged about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub zeta_db: f64,
    pub mode: Mode,
    pub participants: Vec<usize>,
    pub successes: Vec<usize>,
    /// Aligned with `participants`; `None` marks a client unreachable at this threshold.
    pub debias_weights: Vec<Option<f64>>,
    /// Validation loss of the aggregated model.
    pub loss: f64,
    pub accuracy: f64,
    /// Training loss of the aggregated model over every client's shard.
    pub global_objective: f64,
    /// Set on the round whose accuracy triggered the trusted-only switch.
    pub transition: bool,
}
