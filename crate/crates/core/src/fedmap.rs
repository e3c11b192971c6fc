//! Federated radio mapping.
//!
//! Each simulated UAV owns a dataset of (position, connectivity) samples it
//! gathers on random-waypoint exploration flights. Every round the global
//! parameters are broadcast, each client extends its dataset and runs `H`
//! local SGD steps, and the aggregator replaces the global model by the
//! dataset-size weighted mean of the returned parameters.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Airspace;
use crate::neuralnet::{
    init_params, loss, loss_and_gradient, normalize_coord, sgd_step, LabeledSample,
    MlpArchitecture, ParamVector,
};
use crate::scenario::derive_stream;
use crate::{dist2d, Error, Result};

/// A client's local training set. With a capacity, the oldest samples are
/// dropped first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientDataset {
    samples: Vec<LabeledSample>,
    capacity: Option<usize>,
}

impl ClientDataset {
    pub fn new(capacity: Option<usize>) -> Self {
        ClientDataset {
            samples: Vec::new(),
            capacity,
        }
    }

    pub fn from_samples(samples: Vec<LabeledSample>) -> Self {
        ClientDataset {
            samples,
            capacity: None,
        }
    }

    pub fn extend(&mut self, new: &[LabeledSample]) {
        self.samples.extend_from_slice(new);
        if let Some(cap) = self.capacity {
            if self.samples.len() > cap {
                let excess = self.samples.len() - cap;
                self.samples.drain(..excess);
            }
        }
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlightKind {
    RandomWaypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlightPolicy {
    pub kind: FlightKind,
    pub samples_per_round: usize,
    /// m/s
    pub speed: f64,
    /// Distance flown between consecutive samples, meters.
    pub sample_spacing: f64,
}

impl Default for FlightPolicy {
    fn default() -> Self {
        FlightPolicy {
            kind: FlightKind::RandomWaypoint,
            samples_per_round: 100,
            speed: 5.0,
            sample_spacing: 25.0,
        }
    }
}

impl FlightPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite())
            || !(self.sample_spacing > 0.0 && self.sample_spacing.is_finite())
        {
            return Err(Error::Config(
                "flight speed and sample spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// When clients gather new samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Collection {
    /// Every round, before the local update.
    EveryRound,
    /// Only in the first round; later rounds reuse that data.
    FirstRoundOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub local_steps: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub num_clients: usize,
    /// Every local step uses the client's whole dataset.
    #[serde(default)]
    pub full_batch: bool,
    pub collection: Collection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_cap: Option<usize>,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            rounds: 200,
            local_steps: 10,
            step_size: 0.01,
            batch_size: 500,
            num_clients: 10,
            full_batch: false,
            collection: Collection::EveryRound,
            dataset_cap: None,
            hidden_layers: vec![256, 256, 256],
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "num_clients and batch_size must be positive".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.dataset_cap == Some(0) {
            return Err(Error::Config("dataset_cap must be positive".into()));
        }
        self.architecture()?;
        Ok(())
    }

    pub fn architecture(&self) -> Result<MlpArchitecture> {
        MlpArchitecture::with_hidden(&self.hidden_layers)
    }

    fn effective_batch(&self) -> usize {
        if self.full_batch {
            usize::MAX
        } else {
            self.batch_size
        }
    }
}

/// A simulated UAV: its exploration state, dataset and private random stream.
#[derive(Debug, Clone)]
pub struct Client {
    pub id: usize,
    pub position: [f64; 2],
    pub target: [f64; 2],
    pub flight_time: f64,
    pub dataset: ClientDataset,
    rng: ChaCha8Rng,
}

fn uniform_point<R: Rng + ?Sized>(airspace: &Airspace, rng: &mut R) -> [f64; 2] {
    let b = &airspace.bounds;
    [
        b.x_min + rng.random::<f64>() * b.width(),
        b.y_min + rng.random::<f64>() * b.height(),
    ]
}

impl Client {
    pub fn new(id: usize, airspace: &Airspace, capacity: Option<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let position = uniform_point(airspace, &mut rng);
        let target = uniform_point(airspace, &mut rng);
        Client {
            id,
            position,
            target,
            flight_time: 0.0,
            dataset: ClientDataset::new(capacity),
            rng,
        }
    }

    fn advance(&mut self, airspace: &Airspace, mut remaining: f64) {
        loop {
            let d = dist2d(self.position, self.target);
            if d > remaining {
                let t = remaining / d;
                self.position = [
                    self.position[0] + t * (self.target[0] - self.position[0]),
                    self.position[1] + t * (self.target[1] - self.position[1]),
                ];
                return;
            }
            remaining -= d;
            self.position = self.target;
            self.target = uniform_point(airspace, &mut self.rng);
        }
    }
}

/// Fly `samples_per_round` legs of `sample_spacing` meters along the
/// client's random-waypoint trajectory, labeling each visited point, and
/// append the samples to its dataset. Returns the new samples.
pub fn collect_data(
    client: &mut Client,
    policy: &FlightPolicy,
    airspace: &Airspace,
) -> Result<Vec<LabeledSample>> {
    policy.validate()?;
    let mut fresh = Vec::with_capacity(policy.samples_per_round);
    for _ in 0..policy.samples_per_round {
        client.advance(airspace, policy.sample_spacing);
        client.flight_time += policy.sample_spacing / policy.speed;
        let label = airspace.sample_label(client.position, &mut client.rng)?;
        let coord = normalize_coord(client.position, &airspace.bounds)?;
        fresh.push(LabeledSample { coord, label });
    }
    client.dataset.extend(&fresh);
    Ok(fresh)
}

/// `H` SGD steps from the broadcast parameters, each on a uniformly drawn
/// mini-batch of `min(batch_size, m_u)` samples without replacement. A
/// batch covering the whole dataset uses it in stored order. Returns `None`
/// for an empty dataset.
pub fn local_update<R: Rng + ?Sized>(
    theta_global: &ParamVector,
    dataset: &[LabeledSample],
    local_steps: usize,
    step_size: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<Option<ParamVector>> {
    if dataset.is_empty() {
        return Ok(None);
    }
    let mut theta = theta_global.clone();
    let mut batch = Vec::with_capacity(batch_size.min(dataset.len()));
    for _ in 0..local_steps {
        let (_, grad) = if batch_size >= dataset.len() {
            loss_and_gradient(&theta, dataset)?
        } else {
            batch.clear();
            batch.extend(
                index::sample(rng, dataset.len(), batch_size)
                    .into_iter()
                    .map(|i| dataset[i]),
            );
            loss_and_gradient(&theta, &batch)?
        };
        theta = sgd_step(&theta, &grad, step_size)?;
    }
    Ok(Some(theta))
}

/// Weighted average `sum_u (m_u / M) theta_u`.
pub fn aggregate(updates: &[(ParamVector, usize)]) -> Result<ParamVector> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to aggregate".into()))?;
    for (p, _) in updates {
        first.check_same_shape(p)?;
    }
    let total: usize = updates.iter().map(|(_, m)| m).sum();
    if total == 0 {
        return Err(Error::NoData);
    }
    let mut acc = vec![0.0; first.len()];
    for (p, m) in updates {
        let w = *m as f64 / total as f64;
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += w * v;
        }
    }
    ParamVector::from_values(first.arch().clone(), acc)
}

/// `f(theta) = sum_u (m_u / M) F_u(theta)` over the non-empty datasets.
pub fn global_loss(theta: &ParamVector, datasets: &[&[LabeledSample]]) -> Result<f64> {
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    if total == 0 {
        return Err(Error::NoData);
    }
    let mut f = 0.0;
    for d in datasets.iter().filter(|d| !d.is_empty()) {
        f += d.len() as f64 / total as f64 * loss(theta, d)?;
    }
    Ok(f)
}

/// Per-round training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    pub global_loss: f64,
    pub total_samples: usize,
    pub client_sizes: Vec<usize>,
}

/// Round-by-round driver for federated training.
pub struct Trainer<'a> {
    config: TrainingConfig,
    airspace: &'a Airspace,
    policies: Vec<FlightPolicy>,
    master_seed: u64,
    clients: Vec<Client>,
    theta: ParamVector,
    round: usize,
}

impl<'a> Trainer<'a> {
    /// `policies` holds either one policy shared by every client or one per
    /// client.
    pub fn new(
        config: TrainingConfig,
        airspace: &'a Airspace,
        policies: &[FlightPolicy],
        master_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let policies = match policies.len() {
            1 => vec![policies[0]; config.num_clients],
            n if n == config.num_clients => policies.to_vec(),
            n => {
                return Err(Error::Config(format!(
                    "{n} flight policies for {} clients",
                    config.num_clients
                )))
            }
        };
        for p in &policies {
            p.validate()?;
        }
        let arch = config.architecture()?;
        let theta = init_params(
            &arch,
            &mut ChaCha8Rng::seed_from_u64(derive_stream(master_seed, "init", 0)),
        );
        let clients = (0..config.num_clients)
            .map(|u| {
                Client::new(
                    u,
                    airspace,
                    config.dataset_cap,
                    derive_stream(master_seed, "uav", u as u64),
                )
            })
            .collect();
        Ok(Trainer {
            config,
            airspace,
            policies,
            master_seed,
            clients,
            theta,
            round: 0,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.theta
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }

    /// Broadcast, collect, update locally, aggregate, then score the new
    /// global model on all client data.
    pub fn step_round(&mut self) -> Result<RoundMetrics> {
        let round = self.round;
        let collect = match self.config.collection {
            Collection::EveryRound => true,
            Collection::FirstRoundOnly => round == 0,
        };
        let cfg = &self.config;
        let theta = &self.theta;
        let airspace = self.airspace;
        let seed = self.master_seed;
        let updates = self
            .clients
            .par_iter_mut()
            .zip(self.policies.par_iter())
            .map(|(client, policy)| {
                if collect {
                    collect_data(client, policy, airspace)?;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(
                    seed,
                    "sgd",
                    ((round as u64) << 32) | client.id as u64,
                ));
                let local = local_update(
                    theta,
                    client.dataset.samples(),
                    cfg.local_steps,
                    cfg.step_size,
                    cfg.effective_batch(),
                    &mut rng,
                )?;
                Ok(local.map(|p| (p, client.dataset.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        let updates: Vec<_> = updates.into_iter().flatten().collect();
        self.theta = aggregate(&updates)?;
        self.round += 1;

        let datasets: Vec<&[LabeledSample]> =
            self.clients.iter().map(|c| c.dataset.samples()).collect();
        let client_sizes: Vec<usize> = datasets.iter().map(|d| d.len()).collect();
        Ok(RoundMetrics {
            round: self.round,
            global_loss: global_loss(&self.theta, &datasets)?,
            total_samples: client_sizes.iter().sum(),
            client_sizes,
        })
    }

    pub fn into_params(self) -> ParamVector {
        self.theta
    }
}

/// Outcome of a full federated run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: ParamVector,
    pub history: Vec<RoundMetrics>,
}

/// Run `config.rounds` rounds of federated averaging.
pub fn train(
    config: &TrainingConfig,
    airspace: &Airspace,
    policies: &[FlightPolicy],
    master_seed: u64,
) -> Result<TrainingOutcome> {
    let mut trainer = Trainer::new(config.clone(), airspace, policies, master_seed)?;
    let history = (0..config.rounds)
        .map(|_| trainer.step_round())
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingOutcome {
        params: trainer.into_params(),
        history,
    })
}
