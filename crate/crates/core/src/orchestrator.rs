//! The federated round loop for PFELS and its baselines.
//!
//! Every round draws its randomness from paths `(round, purpose, actor)` under
//! the master seed, so two algorithms run with the same seed see the same
//! cohorts, minibatches and channel gains.

use serde::{Deserialize, Serialize};

use crate::channel::{aircomp_transmit, draw_channel, ChannelParams, EnergyLedger};
use crate::error::{Error, Result};
use crate::learner::{
    evaluate, local_train, make_synthetic_federation, Architecture, ClientDataset, LocalUpdate, ModelKind,
    SyntheticTask, TrainingConfig,
};
use crate::numerics::{purpose, ModelVector, RngStream};
use crate::power::{beta_pfels, beta_wflp, beta_wflpdp, PowerInputs, Regime};
use crate::privacy::{dpfedavg_perturb, pfels_c2, pfels_round_is_private, PrivacySpec};
use crate::sparsifier::{embed_transpose, generate_projection, project, RandKProjection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pfels,
    DpFedavg,
    Fedavg,
    WflP,
    WflPdp,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Pfels => "pfels",
            Algorithm::DpFedavg => "dp_fedavg",
            Algorithm::Fedavg => "fedavg",
            Algorithm::WflP => "wfl_p",
            Algorithm::WflPdp => "wfl_pdp",
        }
    }

    /// Algorithms that transmit over the fading channel.
    pub fn is_wireless(&self) -> bool {
        matches!(self, Algorithm::Pfels | Algorithm::WflP | Algorithm::WflPdp)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    /// Per-round ε; `inf` removes the constraint.
    pub epsilon: f64,
    /// Defaults to 1/N.
    pub delta: Option<f64>,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig {
            epsilon: 1.0,
            delta: None,
        }
    }
}

/// Device power budgets `P_i = d σ_ref² 10^(SNR_i/10)` with `SNR_i` uniform in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub snr_db_lo: f64,
    pub snr_db_hi: f64,
    pub reference_noise_std: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            snr_db_lo: 2.0,
            snr_db_hi: 15.0,
            reference_noise_std: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub model: ModelKind,
    pub n_features: usize,
    pub hidden: usize,
    pub classes: usize,
    pub samples_per_client: usize,
    pub test_samples: usize,
    pub heterogeneity: f64,
    pub separation: f64,
    pub noise_std: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            model: ModelKind::LogisticRegression,
            n_features: 10,
            hidden: 16,
            classes: 4,
            samples_per_client: 50,
            test_samples: 1000,
            heterogeneity: 0.5,
            separation: 1.0,
            noise_std: 1.0,
        }
    }
}

impl DataConfig {
    pub fn architecture(&self) -> Architecture {
        match self.model {
            ModelKind::LinearRegression => Architecture::linear(self.n_features),
            ModelKind::LogisticRegression => Architecture::logistic(self.n_features, self.classes),
            ModelKind::Mlp1Hidden => Architecture::mlp(self.n_features, self.hidden, self.classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpFedavgConfig {
    /// σ in the per-device noise `N(0, C²σ²/r)`.
    pub noise_multiplier: f64,
}

impl Default for DpFedavgConfig {
    fn default() -> Self {
        DpFedavgConfig { noise_multiplier: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default = "defaults::population")]
    pub population: usize,
    #[serde(default = "defaults::cohort")]
    pub cohort: usize,
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    /// p = k/d; k = max(1, round(p d)).
    #[serde(default = "defaults::compression")]
    pub compression: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::eval_every")]
    pub eval_every: usize,
    /// Multiply the PFELS reconstruction by d/k.
    #[serde(default)]
    pub debias: bool,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub dp_fedavg: DpFedavgConfig,
}

mod defaults {
    pub fn population() -> usize {
        100
    }
    pub fn cohort() -> usize {
        10
    }
    pub fn rounds() -> usize {
        50
    }
    pub fn compression() -> f64 {
        1.0
    }
    pub fn eval_every() -> usize {
        1
    }
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        ExperimentConfig {
            algorithm,
            population: defaults::population(),
            cohort: defaults::cohort(),
            rounds: defaults::rounds(),
            compression: defaults::compression(),
            seed: 0,
            eval_every: defaults::eval_every(),
            debias: false,
            privacy: PrivacyConfig::default(),
            training: TrainingConfig::default(),
            channel: ChannelParams::default(),
            power: PowerConfig::default(),
            data: DataConfig::default(),
            dp_fedavg: DpFedavgConfig::default(),
        }
    }

    pub fn delta(&self) -> f64 {
        self.privacy.delta.unwrap_or(1.0 / self.population as f64)
    }

    pub fn privacy_spec(&self) -> PrivacySpec {
        PrivacySpec {
            epsilon: self.privacy.epsilon,
            delta: self.delta(),
            cohort: self.cohort,
            population: self.population,
        }
    }

    /// Kept coordinates for model dimension `d` (always `d` for the full-dimension schemes).
    pub fn kept_dim(&self, d: usize) -> usize {
        match self.algorithm {
            Algorithm::Pfels => ((self.compression * d as f64).round() as usize).clamp(1, d),
            _ => d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::config("population must be positive"));
        }
        if self.cohort == 0 || self.cohort > self.population {
            return Err(Error::config(format!(
                "cohort must satisfy 1 <= cohort <= population, got cohort = {}, population = {}",
                self.cohort, self.population
            )));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1"));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::config("compression must lie in (0, 1]"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be positive"));
        }
        self.training.validate()?;
        self.channel.validate()?;
        self.data.architecture().validate()?;
        if self.data.samples_per_client < self.training.batch_size {
            return Err(Error::config(format!(
                "data.samples_per_client ({}) is smaller than training.batch_size ({})",
                self.data.samples_per_client, self.training.batch_size
            )));
        }
        if self.data.test_samples == 0 {
            return Err(Error::config("data.test_samples must be positive"));
        }
        if !(0.0..=1.0).contains(&self.data.heterogeneity) {
            return Err(Error::config("data.heterogeneity must lie in [0, 1]"));
        }
        if !(self.power.snr_db_lo <= self.power.snr_db_hi) || !(self.power.reference_noise_std > 0.0) {
            return Err(Error::config("power: need snr_db_lo <= snr_db_hi and reference_noise_std > 0"));
        }
        if !(self.dp_fedavg.noise_multiplier >= 0.0) {
            return Err(Error::config("dp_fedavg.noise_multiplier must be nonnegative"));
        }
        if !(self.privacy.epsilon > 0.0) {
            return Err(Error::config("privacy.epsilon must be positive"));
        }
        self.privacy_spec().validate()?;
        if self.algorithm.is_wireless() && !(self.training.learning_rate > 0.0) {
            return Err(Error::config("training.learning_rate must be positive for wireless algorithms"));
        }
        if matches!(self.algorithm, Algorithm::Pfels | Algorithm::WflPdp)
            && self.privacy.epsilon.is_finite()
            && self.channel.noise_std == 0.0
        {
            return Err(Error::config(
                "privacy.epsilon is finite but channel.noise_std is zero: no intrinsic privacy",
            ));
        }
        Ok(())
    }
}

/// Per-round telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub algorithm: Algorithm,
    /// Mean loss of the updated global model over every client's data.
    pub train_loss: f64,
    /// Test accuracy (classifiers) or test loss (regression); `None` between evaluations.
    pub test_metric: Option<f64>,
    pub beta: Option<f64>,
    pub regime: Option<Regime>,
    pub dp_feasible: bool,
    pub energy_round: f64,
    pub energy_cum: f64,
    pub subcarriers_cum: u64,
    pub k: usize,
    pub epsilon: f64,
    pub mean_clipped_grad_norm: f64,
}

/// Everything a round produced, for inspection by tests and tools.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub cohort: Vec<usize>,
    pub gains: Vec<f64>,
    pub budgets: Vec<f64>,
    pub beta: Option<f64>,
    pub projection: Option<RandKProjection>,
    pub deltas: Vec<ModelVector>,
    /// What each device put on the air (or uploaded, for the wired baselines).
    pub signals: Vec<ModelVector>,
    /// Server-side update applied to the global model.
    pub update: ModelVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub record: RoundRecord,
    pub trace: RoundTrace,
}

/// Uniform r-subset of `0..population`, returned sorted.
pub fn sample_cohort(population: usize, cohort: usize, stream: &RngStream) -> Result<Vec<usize>> {
    use rand::seq::index::sample;
    if cohort > population {
        return Err(Error::config(format!("cohort {cohort} exceeds population {population}")));
    }
    let mut ids = sample(&mut stream.rng(), population, cohort).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// `Aᵀ y / (r β)`, optionally scaled by d/k.
pub fn reconstruct_update(
    proj: &RandKProjection,
    received: &ModelVector,
    cohort: usize,
    beta: f64,
    debias: bool,
) -> Result<ModelVector> {
    let mut update = embed_transpose(proj, received)?;
    let mut scale = 1.0 / (cohort as f64 * beta);
    if debias {
        scale /= proj.ratio();
    }
    update.scale_in_place(scale);
    Ok(update)
}

/// Device budget from a uniformly drawn SNR in dB.
pub fn power_budget(d: usize, snr_db: f64, reference_noise_std: f64) -> f64 {
    d as f64 * reference_noise_std * reference_noise_std * 10f64.powf(snr_db / 10.0)
}

/// Federation plus global model; advanced one round at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ExperimentConfig,
    arch: Architecture,
    clients: Vec<ClientDataset>,
    test: ClientDataset,
    budgets: Vec<f64>,
    params: ModelVector,
    ledger: EnergyLedger,
    root: RngStream,
    certified_steps: usize,
    c2: Option<f64>,
    round: usize,
    last_test_metric: Option<f64>,
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let root = RngStream::new(cfg.seed);
        let arch = cfg.data.architecture();
        let task = SyntheticTask::new(arch, cfg.data.separation, cfg.data.noise_std, &root)?;
        let clients = make_synthetic_federation(
            cfg.population,
            cfg.data.samples_per_client,
            &task,
            cfg.data.heterogeneity,
            &root,
        )?;
        let test = task.test_set(cfg.data.test_samples, &root);
        Self::from_parts(cfg, arch, clients, test)
    }

    /// Builds a simulation over caller-supplied client data.
    pub fn from_parts(
        cfg: ExperimentConfig,
        arch: Architecture,
        clients: Vec<ClientDataset>,
        test: ClientDataset,
    ) -> Result<Self> {
        cfg.validate()?;
        if clients.len() != cfg.population {
            return Err(Error::config(format!(
                "population is {} but {} client datasets were supplied",
                cfg.population,
                clients.len()
            )));
        }
        let root = RngStream::new(cfg.seed);
        let d = arch.dim();
        let budgets = (0..cfg.population)
            .map(|i| {
                use rand::Rng;
                let mut rng = root.derive(&[purpose::BUDGET, i as u64]).rng();
                let snr = cfg.power.snr_db_lo + (cfg.power.snr_db_hi - cfg.power.snr_db_lo) * rng.random::<f64>();
                power_budget(d, snr, cfg.power.reference_noise_std)
            })
            .collect();
        let max_n = clients.iter().map(ClientDataset::len).max().unwrap_or(0);
        let certified_steps = cfg.training.steps_for(max_n);
        let c2 = if cfg.algorithm.is_wireless() && cfg.channel.noise_std > 0.0 {
            Some(pfels_c2(
                cfg.training.learning_rate,
                certified_steps,
                cfg.training.clip_gradient,
                cfg.cohort,
                cfg.population,
                cfg.delta(),
                cfg.channel.noise_std,
            )?)
        } else {
            None
        };
        let params = arch.init_params(&root.child(purpose::MODEL_INIT));
        Ok(Simulation {
            cfg,
            arch,
            clients,
            test,
            budgets,
            params,
            ledger: EnergyLedger::new(),
            root,
            certified_steps,
            c2,
            round: 0,
            last_test_metric: None,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn dim(&self) -> usize {
        self.arch.dim()
    }

    pub fn kept_dim(&self) -> usize {
        self.cfg.kept_dim(self.dim())
    }

    pub fn params(&self) -> &ModelVector {
        &self.params
    }

    pub fn clients(&self) -> &[ClientDataset] {
        &self.clients
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    /// SGD step count used in every sensitivity and power formula.
    pub fn certified_steps(&self) -> usize {
        self.certified_steps
    }

    /// C₂ for this run, when the channel is noisy.
    pub fn c2(&self) -> Option<f64> {
        self.c2
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Mean loss over all client data.
    pub fn train_loss(&self) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for c in &self.clients {
            let (loss, _) = evaluate(&self.arch, &self.params, c)?;
            total += loss * c.len() as f64;
            count += c.len();
        }
        Ok(total / count as f64)
    }

    pub fn test_metric(&self) -> Result<f64> {
        Ok(evaluate(&self.arch, &self.params, &self.test)?.1)
    }

    /// Runs the configured algorithm for one round.
    pub fn step(&mut self) -> Result<RoundOutput> {
        let t = self.round;
        match self.cfg.algorithm {
            Algorithm::Pfels => self.pfels_round(t),
            Algorithm::DpFedavg => self.dpfedavg_round(t),
            Algorithm::Fedavg => self.fedavg_round(t),
            Algorithm::WflP | Algorithm::WflPdp => self.baseline_round(t),
        }
    }

    fn round_stream(&self, t: usize, purpose: u64) -> RngStream {
        self.root.derive(&[t as u64, purpose])
    }

    fn train_cohort(&self, t: usize, cohort: &[usize]) -> Result<Vec<LocalUpdate>> {
        let stream = self.round_stream(t, purpose::MINIBATCH);
        cohort
            .iter()
            .map(|&i| {
                local_train(
                    &self.arch,
                    &self.params,
                    &self.clients[i],
                    &self.cfg.training,
                    &stream.child(i as u64),
                )
            })
            .collect()
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if t != self.round {
            return Err(Error::Invariant(format!("expected round {}, got {t}", self.round)));
        }
        Ok(())
    }

    /// Sparsified, power-aligned over-the-air round.
    pub fn pfels_round(&mut self, t: usize) -> Result<RoundOutput> {
        self.check_round(t)?;
        let k = self.kept_dim();
        self.wireless_round(t, k)
    }

    /// WFL-P or WFL-PDP: full-dimension over-the-air round.
    pub fn baseline_round(&mut self, t: usize) -> Result<RoundOutput> {
        self.check_round(t)?;
        let d = self.dim();
        self.wireless_round(t, d)
    }

    fn wireless_round(&mut self, t: usize, k: usize) -> Result<RoundOutput> {
        let algo = self.cfg.algorithm;
        let d = self.dim();
        let r = self.cfg.cohort;
        let eps = self.cfg.privacy.epsilon;

        let cohort = sample_cohort(self.cfg.population, r, &self.round_stream(t, purpose::COHORT))?;
        let proj = generate_projection(d, k, &self.round_stream(t, purpose::PROJECTION))?;
        let channel = draw_channel(&cohort, &self.cfg.channel, &self.round_stream(t, purpose::CHANNEL_GAIN))?;
        let budgets: Vec<f64> = cohort.iter().map(|&i| self.budgets[i]).collect();

        let inputs = PowerInputs {
            gains: &channel.gains,
            budgets: &budgets,
            d,
            k,
            learning_rate: self.cfg.training.learning_rate,
            steps: self.certified_steps,
            clip_gradient: self.cfg.training.clip_gradient,
        };
        // with ε unbounded C₂ never enters the decision
        let c2 = self.c2.unwrap_or(1.0);
        let decision = match algo {
            Algorithm::Pfels => beta_pfels(&inputs, eps, c2)?,
            Algorithm::WflPdp => beta_wflpdp(&inputs, eps, c2)?,
            Algorithm::WflP => beta_wflp(&inputs)?,
            _ => unreachable!("not a wireless algorithm"),
        };
        let beta = decision.beta;
        let dp_feasible = match self.c2 {
            Some(c2) => pfels_round_is_private(beta, c2, eps),
            None => eps.is_infinite(),
        };
        if matches!(algo, Algorithm::Pfels | Algorithm::WflPdp) && !dp_feasible {
            return Err(Error::Invariant(format!("round {t}: C2 * beta exceeds epsilon")));
        }

        let updates = self.train_cohort(t, &cohort)?;
        let mut signals = Vec::with_capacity(r);
        let mut round_energy = 0.0;
        for ((&dev, up), alpha) in cohort.iter().zip(&updates).zip(&decision.alphas) {
            let x = project(&proj, &up.delta)?.scaled(*alpha);
            round_energy += x.norm_squared();
            self.ledger.record_energy(dev, &x);
            signals.push(x);
        }
        let received = aircomp_transmit(
            &signals,
            &channel.gains,
            channel.noise_std,
            &self.round_stream(t, purpose::CHANNEL_NOISE),
        )?;
        let update = reconstruct_update(&proj, &received, r, beta, self.cfg.debias)?;
        self.params.add_assign(&update);

        let record = self.finish_round(t, &updates, Some(beta), Some(decision.regime), dp_feasible, round_energy, k)?;
        Ok(RoundOutput {
            record,
            trace: RoundTrace {
                cohort,
                gains: channel.gains,
                budgets,
                beta: Some(beta),
                projection: Some(proj),
                deltas: updates.into_iter().map(|u| u.delta).collect(),
                signals,
                update,
            },
        })
    }

    /// Clip to C, add N(0, C²σ²/r) per device, average.
    pub fn dpfedavg_round(&mut self, t: usize) -> Result<RoundOutput> {
        self.check_round(t)?;
        let r = self.cfg.cohort;
        let cohort = sample_cohort(self.cfg.population, r, &self.round_stream(t, purpose::COHORT))?;
        let updates = self.train_cohort(t, &cohort)?;
        let noise = self.round_stream(t, purpose::ARTIFICIAL_NOISE);
        let mut signals = Vec::with_capacity(r);
        let mut round_energy = 0.0;
        for (&dev, up) in cohort.iter().zip(&updates) {
            let perturbed = dpfedavg_perturb(
                &up.delta,
                self.cfg.training.clip_update,
                self.cfg.dp_fedavg.noise_multiplier,
                r,
                &noise.child(dev as u64),
            )?;
            round_energy += perturbed.norm_squared();
            self.ledger.record_energy(dev, &perturbed);
            signals.push(perturbed);
        }
        let update = average(&signals, self.dim());
        self.params.add_assign(&update);
        let record = self.finish_round(t, &updates, None, None, true, round_energy, self.dim())?;
        Ok(RoundOutput {
            record,
            trace: RoundTrace {
                cohort,
                gains: Vec::new(),
                budgets: Vec::new(),
                beta: None,
                projection: None,
                deltas: updates.into_iter().map(|u| u.delta).collect(),
                signals,
                update,
            },
        })
    }

    /// Plain FedAvg over an ideal channel.
    pub fn fedavg_round(&mut self, t: usize) -> Result<RoundOutput> {
        self.check_round(t)?;
        let r = self.cfg.cohort;
        let cohort = sample_cohort(self.cfg.population, r, &self.round_stream(t, purpose::COHORT))?;
        let updates = self.train_cohort(t, &cohort)?;
        let mut round_energy = 0.0;
        for (&dev, up) in cohort.iter().zip(&updates) {
            round_energy += up.delta.norm_squared();
            self.ledger.record_energy(dev, &up.delta);
        }
        let deltas: Vec<ModelVector> = updates.iter().map(|u| u.delta.clone()).collect();
        let update = average(&deltas, self.dim());
        self.params.add_assign(&update);
        let eps_unbounded = self.cfg.privacy.epsilon.is_infinite();
        let record = self.finish_round(t, &updates, None, None, eps_unbounded, round_energy, self.dim())?;
        Ok(RoundOutput {
            record,
            trace: RoundTrace {
                cohort,
                gains: Vec::new(),
                budgets: Vec::new(),
                beta: None,
                projection: None,
                signals: deltas.clone(),
                deltas,
                update,
            },
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_round(
        &mut self,
        t: usize,
        updates: &[LocalUpdate],
        beta: Option<f64>,
        regime: Option<Regime>,
        dp_feasible: bool,
        energy_round: f64,
        k: usize,
    ) -> Result<RoundRecord> {
        if self.params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invariant(format!("round {t}: global model diverged to a non-finite value")));
        }
        self.round += 1;
        let evaluate_now = self.round.is_multiple_of(self.cfg.eval_every) || self.round == self.cfg.rounds;
        let test_metric = if evaluate_now {
            let m = self.test_metric()?;
            self.last_test_metric = Some(m);
            Some(m)
        } else {
            None
        };
        Ok(RoundRecord {
            round: t,
            algorithm: self.cfg.algorithm,
            train_loss: self.train_loss()?,
            test_metric,
            beta,
            regime,
            dp_feasible,
            energy_round,
            energy_cum: self.ledger.total_energy(),
            subcarriers_cum: self.ledger.subcarrier_uses(),
            k,
            epsilon: self.cfg.privacy.epsilon,
            mean_clipped_grad_norm: updates.iter().map(|u| u.mean_clipped_grad_norm).sum::<f64>()
                / updates.len() as f64,
        })
    }
}

fn average(vectors: &[ModelVector], dim: usize) -> ModelVector {
    let mut sum = ModelVector::zeros(dim);
    for v in vectors {
        sum.add_assign(v);
    }
    sum.scale_in_place(1.0 / vectors.len() as f64);
    sum
}

/// Runs `cfg.rounds` rounds and returns one record per round.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>> {
    let mut sim = Simulation::new(cfg.clone())?;
    (0..cfg.rounds).map(|_| sim.step().map(|o| o.record)).collect()
}
