use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate, ExperimentCase, Mode, OrchestratorError, RoundRecord, SinrSchedule, TrustWindow,
    Upload,
};
use crate::channel::montecarlo::InterfererField;
use crate::channel::{
    draw_user_sinr, weight_from_probability, ChannelError, ChannelParams, SuccessCache,
};
use crate::geometry::{generate_topology, interferer_distances, NetworkTopology};
use crate::harness::{ExperimentConfig, InterferenceModel};
use crate::learning::{
    load_dataset, local_train, partition, Dataset, DatasetShard, Model, ModelWeights, TrainConfig,
};
use crate::rng::{names, Streams};
use crate::trust::{
    categorize, profiles, sample_scores, summarize, AttackModel, PartitionSummary, ScaledWeights,
    TrustCategory, TrustPartition, TrustProfile,
};

/// A test-cell user together with its data and trust profile.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: usize,
    /// Index of the user in the topology.
    pub user: usize,
    pub distance: f64,
    pub rb: usize,
    pub trust: TrustProfile,
    pub shard: DatasetShard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub id: usize,
    pub user: usize,
    pub distance: f64,
    pub rb: usize,
    pub score: f64,
    pub category: TrustCategory,
    pub shard_size: usize,
}

/// Static facts about a run, written ahead of the per-round records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub case: ExperimentCase,
    pub config: ExperimentConfig,
    pub n_bs: usize,
    pub trust: PartitionSummary,
    pub partition: TrustPartition,
    pub clients: Vec<ClientSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub header: RunHeader,
    pub records: Vec<RoundRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOutcome {
    pub client: usize,
    pub sinr: f64,
    pub success: bool,
}

pub struct Simulation {
    case: ExperimentCase,
    config: ExperimentConfig,
    model: Model,
    train_cfg: TrainConfig,
    params: ChannelParams,
    topology: NetworkTopology,
    clients: Vec<Client>,
    scores: Vec<f64>,
    partition: TrustPartition,
    train_set: Dataset,
    validation: Dataset,
    schedule: SinrSchedule,
    cache: SuccessCache,
    interferers: Vec<Vec<f64>>,
    field: InterfererField,
    streams: Streams,
    global: ModelWeights,
    window: TrustWindow,
    mode: Mode,
    attack: Box<dyn AttackModel>,
    pool: rayon::ThreadPool,
    next_round: usize,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("case", &self.case)
            .field("next_round", &self.next_round)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

fn setup(msg: impl Into<String>) -> OrchestratorError {
    OrchestratorError::Setup(msg.into())
}

impl Simulation {
    /// Builds topology, trust scores, client shards, the initial model and
    /// the schedule, all from `config.seed`.
    pub fn new(config: &ExperimentConfig, case: ExperimentCase) -> Result<Self, OrchestratorError> {
        config.validate().map_err(|e| setup(e.to_string()))?;
        let params = config.channel()?;
        let topology = generate_topology(&config.geometry())?;
        let scores = sample_scores(&config.trust(), config.n_clients)?;
        let (train_set, validation) = load_dataset(
            &config.dataset_source(),
            config.validation_size,
            config.seed,
        )?;
        let shards = partition(
            &train_set,
            config.n_clients,
            config.partition_mode(),
            config.seed,
        )?;
        let model = Model::new(
            config.model_kind(),
            train_set.n_features,
            train_set.n_classes,
        );
        let streams = Streams::new(config.seed);
        let global = model.init(&mut streams.rng(names::INIT, &[]));
        let schedule = config.schedule()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| setup(format!("thread pool: {e}")))?;
        let placeholder = TrustProfile {
            score: 1.0,
            category: TrustCategory::FullyTrusted,
        };
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| Client {
                id,
                user: 0,
                distance: 0.0,
                rb: 0,
                trust: placeholder,
                shard,
            })
            .collect();
        let mut sim = Self {
            case,
            config: config.clone(),
            model,
            train_cfg: config.train(),
            params,
            topology: topology.clone(),
            clients,
            scores: Vec::new(),
            partition: TrustPartition::default(),
            train_set,
            validation,
            schedule,
            cache: SuccessCache::new(params),
            interferers: Vec::new(),
            field: InterfererField::new(params, config.field_radius_m),
            streams,
            global,
            window: TrustWindow::new(config.trust_window),
            mode: case.initial_mode(),
            attack: Box::new(ScaledWeights),
            pool,
            next_round: 0,
        };
        sim = sim.with_topology(topology)?.with_trust_scores(scores)?;
        Ok(sim)
    }

    /// Replaces the topology; its test cell must hold one user per client.
    pub fn with_topology(mut self, topology: NetworkTopology) -> Result<Self, OrchestratorError> {
        let users = topology.test_cell_users();
        if users.len() != self.clients.len() {
            return Err(setup(format!(
                "topology test cell has {} users for {} clients",
                users.len(),
                self.clients.len()
            )));
        }
        for (c, &u) in self.clients.iter_mut().zip(&users) {
            c.user = u;
            c.distance = topology.distances[u];
            c.rb = topology.rb_assignment[u];
        }
        self.interferers = (0..topology.n_rb)
            .map(|rb| interferer_distances(&topology, rb))
            .collect();
        self.topology = topology;
        Ok(self)
    }

    /// Replaces the trust scores and re-derives categories.
    pub fn with_trust_scores(mut self, scores: Vec<f64>) -> Result<Self, OrchestratorError> {
        if scores.len() != self.clients.len() {
            return Err(setup(format!(
                "{} scores for {} clients",
                scores.len(),
                self.clients.len()
            )));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(setup("trust scores must lie in [0, 1]"));
        }
        let (rho, kappa) = (self.config.rho, self.config.kappa);
        for (c, p) in self.clients.iter_mut().zip(profiles(&scores, rho, kappa)) {
            c.trust = p;
        }
        self.partition = categorize(&scores, rho, kappa);
        self.scores = scores;
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: SinrSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_attack(mut self, attack: Box<dyn AttackModel>) -> Self {
        self.attack = attack;
        self
    }

    pub fn case(&self) -> ExperimentCase {
        self.case
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn partition(&self) -> &TrustPartition {
        &self.partition
    }

    pub fn validation(&self) -> &Dataset {
        &self.validation
    }

    pub fn schedule(&self) -> &SinrSchedule {
        &self.schedule
    }

    pub fn global(&self) -> &ModelWeights {
        &self.global
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn window(&self) -> &TrustWindow {
        &self.window
    }

    pub fn next_round(&self) -> usize {
        self.next_round
    }

    pub fn header(&self) -> RunHeader {
        RunHeader {
            case: self.case,
            config: self.config.clone(),
            n_bs: self.topology.n_bs(),
            trust: summarize(&self.config.trust(), &self.scores, &self.partition),
            partition: self.partition.clone(),
            clients: self
                .clients
                .iter()
                .map(|c| ClientSummary {
                    id: c.id,
                    user: c.user,
                    distance: c.distance,
                    rb: c.rb,
                    score: c.trust.score,
                    category: c.trust.category,
                    shard_size: c.shard.len(),
                })
                .collect(),
        }
    }

    /// Clients allowed to upload in the current mode. Malicious clients never are.
    pub fn eligible(&self) -> Vec<usize> {
        match self.mode {
            Mode::RiskAgnostic => self.partition.trusted_and_risky(),
            Mode::TrustedOnly => self.partition.fully_trusted.clone(),
        }
    }

    /// `1 / S(zeta, r_n)` per client; `None` where `S` is below the floor.
    pub fn debias_weights(
        &mut self,
        zeta: f64,
        clients: &[usize],
    ) -> Result<Vec<Option<f64>>, OrchestratorError> {
        let floor = self.config.debias_floor;
        clients
            .iter()
            .map(|&c| {
                let s = self.cache.probability(zeta, self.clients[c].distance)?;
                match weight_from_probability(s, floor) {
                    Ok(w) => Ok(Some(w)),
                    Err(ChannelError::Unreachable { .. }) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            })
            .collect()
    }

    /// SINR draws for round `t`, one independent stream per client.
    pub fn draw_channel(&self, t: usize, zeta: f64, clients: &[usize]) -> Vec<ChannelOutcome> {
        self.pool.install(|| {
            clients
                .par_iter()
                .map(|&c| {
                    let client = &self.clients[c];
                    let mut rng = self.streams.rng(names::FADING, &[t as u64, c as u64]);
                    let sinr = match self.config.interference_model {
                        InterferenceModel::Static => draw_user_sinr(
                            &self.params,
                            client.distance,
                            &self.interferers[client.rb],
                            &mut rng,
                        ),
                        InterferenceModel::Resampled => {
                            self.field.sample_sinr(client.distance, &mut rng)
                        }
                    };
                    ChannelOutcome {
                        client: c,
                        sinr,
                        success: sinr > zeta,
                    }
                })
                .collect()
        })
    }

    /// Local training of client `c` from the current global model in round
    /// `t`, followed by the attack when the client is risky.
    pub fn client_upload(&self, t: usize, c: usize) -> Result<ModelWeights, OrchestratorError> {
        let client = &self.clients[c];
        let mut rng = self.streams.rng(names::TRAIN, &[t as u64, c as u64]);
        let w = local_train(
            &self.model,
            &self.global,
            &client.shard,
            &self.train_cfg,
            &mut rng,
        )?;
        Ok(match client.trust.category {
            TrustCategory::Risky => self.attack.manipulate(&w, client.trust.score),
            _ => w,
        })
    }

    pub fn run_round(&mut self) -> Result<RoundRecord, OrchestratorError> {
        let t = self.next_round;
        if t >= self.schedule.rounds() {
            return Err(OrchestratorError::PastSchedule {
                round: t,
                len: self.schedule.rounds(),
            });
        }
        let zeta = self.schedule.thresholds()[t];
        let zeta_db = self.schedule.thresholds_db()[t];
        let mode = self.mode;
        let participants = self.eligible();
        let weights = self.debias_weights(zeta, &participants)?;
        let outcomes = self.draw_channel(t, zeta, &participants);

        // Undecoded or unreachable uploads add nothing, so only the rest train.
        let counted: Vec<usize> = (0..participants.len())
            .filter(|&i| outcomes[i].success && weights[i].is_some())
            .collect();
        let trained: Vec<Result<ModelWeights, OrchestratorError>> = self.pool.install(|| {
            counted
                .par_iter()
                .map(|&i| self.client_upload(t, participants[i]))
                .collect()
        });
        let mut uploads = Vec::with_capacity(counted.len());
        for (&i, w) in counted.iter().zip(trained) {
            uploads.push(Upload {
                client: participants[i],
                weights: w?,
                success: true,
                debias: weights[i],
            });
        }
        // An empty eligible set leaves the model where it is.
        if !participants.is_empty() {
            self.global = aggregate(
                &self.global,
                &uploads,
                participants.len(),
                self.config.normalize,
            )?;
        }

        let (loss, accuracy) = self.model.evaluate(&self.global, &self.validation);
        let (global_objective, _) = self.model.evaluate(&self.global, &self.train_set);
        let transition = self.case == ExperimentCase::A
            && mode == Mode::RiskAgnostic
            && self.window.observe(accuracy);
        if transition {
            self.mode = Mode::TrustedOnly;
        }
        self.next_round += 1;
        Ok(RoundRecord {
            t,
            zeta_db,
            mode,
            successes: outcomes
                .iter()
                .filter(|o| o.success)
                .map(|o| o.client)
                .collect(),
            participants,
            debias_weights: weights,
            loss,
            accuracy,
            global_objective,
            transition,
        })
    }

    /// Runs every remaining round of the schedule.
    pub fn run(&mut self) -> Result<Vec<RoundRecord>, OrchestratorError> {
        let mut out = Vec::with_capacity(self.schedule.rounds().saturating_sub(self.next_round));
        while self.next_round < self.schedule.rounds() {
            out.push(self.run_round()?);
        }
        Ok(out)
    }
}

pub fn run_experiment(
    config: &ExperimentConfig,
    case: ExperimentCase,
) -> Result<RunOutput, OrchestratorError> {
    let mut sim = Simulation::new(config, case)?;
    let header = sim.header();
    let records = sim.run()?;
    Ok(RunOutput { header, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NetworkTopology;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            area_side_m: 2_000.0,
            n_clients: 10,
            n_rb: 10,
            rounds: 12,
            synthetic_samples: 600,
            synthetic_features: 6,
            synthetic_classes: 4,
            validation_size: 200,
            seed: 1,
            ..ExperimentConfig::default()
        }
    }

    fn single_bs(n: usize) -> NetworkTopology {
        let users: Vec<[f64; 2]> = (0..n).map(|i| [20.0 + 7.0 * i as f64, 3.0]).collect();
        let rbs: Vec<usize> = (0..n).collect();
        NetworkTopology::from_parts(
            vec![[0.0, 0.0]],
            users,
            rbs,
            0,
            n,
            1_000.0,
            [-500.0, -500.0],
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn one_round_one_record() {
        let cfg = ExperimentConfig {
            rounds: 1,
            ..small()
        };
        let out = run_experiment(&cfg, ExperimentCase::A).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].t, 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = run_experiment(&small(), ExperimentCase::B).unwrap();
        let b = run_experiment(&small(), ExperimentCase::B).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let one = run_experiment(
            &ExperimentConfig {
                threads: 1,
                ..small()
            },
            ExperimentCase::A,
        )
        .unwrap();
        let four = run_experiment(
            &ExperimentConfig {
                threads: 4,
                ..small()
            },
            ExperimentCase::A,
        )
        .unwrap();
        assert_eq!(one.records, four.records);
    }

    #[test]
    fn case_c_uses_trusted_only() {
        let out = run_experiment(&small(), ExperimentCase::C).unwrap();
        let trusted = &out.header.partition.fully_trusted;
        assert!(!trusted.is_empty());
        for r in &out.records {
            assert_eq!(&r.participants, trusted);
            assert_eq!(r.mode, Mode::TrustedOnly);
        }
    }

    #[test]
    fn case_c_never_invokes_the_attack() {
        struct Panics;
        impl AttackModel for Panics {
            fn manipulate(&self, _: &ModelWeights, _: f64) -> ModelWeights {
                panic!("attack invoked")
            }
        }
        let mut sim = Simulation::new(&small(), ExperimentCase::C)
            .unwrap()
            .with_attack(Box::new(Panics));
        sim.run().unwrap();
    }

    #[test]
    fn malicious_never_participate() {
        let cfg = ExperimentConfig {
            trust_alpha: 1.0,
            trust_beta: 1.0,
            ..small()
        };
        for case in ExperimentCase::ALL {
            let out = run_experiment(&cfg, case).unwrap();
            assert!(!out.header.partition.malicious.is_empty());
            for r in &out.records {
                assert!(r
                    .participants
                    .iter()
                    .all(|p| !out.header.partition.malicious.contains(p)));
                assert!(r.successes.iter().all(|s| r.participants.contains(s)));
                assert!(r.debias_weights.iter().flatten().all(|&w| w >= 1.0));
            }
        }
    }

    #[test]
    fn all_trusted_makes_a_and_b_identical() {
        let n = small().n_clients;
        let run = |case| {
            let mut sim = Simulation::new(&small(), case)
                .unwrap()
                .with_trust_scores(vec![1.0; n])
                .unwrap();
            sim.run().unwrap()
        };
        let a = run(ExperimentCase::A);
        let b = run(ExperimentCase::B);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.participants, y.participants);
            assert_eq!(x.loss, y.loss);
            assert_eq!(x.accuracy, y.accuracy);
        }
    }

    #[test]
    fn impossible_threshold_freezes_model() {
        let cfg = small();
        let mut sim = Simulation::new(&cfg, ExperimentCase::B)
            .unwrap()
            .with_schedule(SinrSchedule::from_db(vec![400.0; 3]).unwrap());
        let before = sim.global().clone();
        for _ in 0..3 {
            let r = sim.run_round().unwrap();
            assert!(r.successes.is_empty());
        }
        assert_eq!(sim.global(), &before);
    }

    #[test]
    fn transition_is_single_and_irreversible() {
        for seed in 0..4 {
            let cfg = ExperimentConfig {
                seed,
                rounds: 40,
                trust_window: 2,
                ..small()
            };
            let out = run_experiment(&cfg, ExperimentCase::A).unwrap();
            let flips = out.records.iter().filter(|r| r.transition).count();
            assert!(flips <= 1);
            let first_trusted = out.records.iter().position(|r| r.mode == Mode::TrustedOnly);
            if let Some(k) = first_trusted {
                assert!(out.records[k - 1].transition);
                assert!(out.records[k..].iter().all(|r| r.mode == Mode::TrustedOnly));
            }
        }
    }

    #[test]
    fn noiseless_single_cell_averages_deltas() {
        let cfg = ExperimentConfig {
            noise_dbm: -300.0,
            ..small()
        };
        let n = cfg.n_clients;
        let mut sim = Simulation::new(&cfg, ExperimentCase::A)
            .unwrap()
            .with_topology(single_bs(n))
            .unwrap()
            .with_trust_scores(vec![1.0; n])
            .unwrap()
            .with_schedule(SinrSchedule::from_db(vec![f64::NEG_INFINITY; 4]).unwrap());
        for t in 0..4 {
            let g = sim.global().clone();
            let uploads: Vec<ModelWeights> =
                (0..n).map(|c| sim.client_upload(t, c).unwrap()).collect();
            let r = sim.run_round().unwrap();
            assert_eq!(r.successes.len(), n);
            assert!(r.debias_weights.iter().all(|w| *w == Some(1.0)));
            for (j, got) in sim.global().params().iter().enumerate() {
                let mean_delta: f64 = uploads
                    .iter()
                    .map(|w| w.params()[j] - g.params()[j])
                    .sum::<f64>()
                    / n as f64;
                assert!((got - (g.params()[j] + mean_delta)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_trusted_set_holds_the_model() {
        let n = small().n_clients;
        let mut sim = Simulation::new(&small(), ExperimentCase::C)
            .unwrap()
            .with_trust_scores(vec![0.5; n])
            .unwrap();
        let before = sim.global().clone();
        let r = sim.run_round().unwrap();
        assert!(r.participants.is_empty() && r.successes.is_empty());
        assert_eq!(sim.global(), &before);
    }

    #[test]
    fn topology_hook_checks_size() {
        let sim = Simulation::new(&small(), ExperimentCase::A).unwrap();
        assert!(sim.with_topology(single_bs(3)).is_err());
    }

    #[test]
    fn past_schedule_is_an_error() {
        let mut sim = Simulation::new(
            &ExperimentConfig {
                rounds: 1,
                ..small()
            },
            ExperimentCase::A,
        )
        .unwrap();
        sim.run_round().unwrap();
        assert!(matches!(
            sim.run_round(),
            Err(OrchestratorError::PastSchedule { .. })
        ));
    }
}
