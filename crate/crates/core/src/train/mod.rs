//! Small-network adversarial training on synthetic data.
//!
//! Each iteration runs `n_critic` critic steps on
//! `mean φ(f(fake)) + mean ϕ(f(real)) + penalty` followed by one generator
//! step on `mean −f(g(z))`. The penalty is evaluated on blend points between
//! paired real and fake samples (plus the tracked-maximum list for maxgp).

mod adam;
mod data;
mod diag;
mod mlp;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use data::{sample_noise, sample_synthetic, Gaussian, Rect, SyntheticSpec};
pub use diag::{direction_cosines, drift_statistic, mode_coverage};
pub use mlp::{init_mlp, mlp_field, mlp_forward, Activation, MlpConfig, MlpNodes, Params};

use alloc::vec::Vec;
use core::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ExprGraph, GraphError, NodeId};
use crate::field::{field_grid, FieldError, FieldGrid};
use crate::loss::{make_metric, LossError, LossKind, LossMetric};
use crate::penalty::{grad_norm_node, sample_blend, PenaltyError, PenaltyKind, PenaltySpec, SMaxList};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    Config(&'static str),
    Contract(&'static str),
    /// A loss or parameter became NaN or infinite.
    NonFinite {
        iteration: usize,
        term: &'static str,
    },
    Loss(LossError),
    Penalty(PenaltyError),
    Graph(GraphError),
    Field(FieldError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(msg) | TrainError::Contract(msg) => f.write_str(msg),
            TrainError::NonFinite { iteration, term } => {
                write!(f, "non-finite {term} at iteration {iteration}")
            }
            TrainError::Loss(e) => e.fmt(f),
            TrainError::Penalty(e) => e.fmt(f),
            TrainError::Graph(e) => e.fmt(f),
            TrainError::Field(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        TrainError::Loss(e)
    }
}

impl From<PenaltyError> for TrainError {
    fn from(e: PenaltyError) -> Self {
        TrainError::Penalty(e)
    }
}

impl From<GraphError> for TrainError {
    fn from(e: GraphError) -> Self {
        TrainError::Graph(e)
    }
}

impl From<FieldError> for TrainError {
    fn from(e: FieldError) -> Self {
        TrainError::Field(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub metric: LossKind,
    /// Offset for quadratic and hinge; must be `None` for the other kinds.
    pub alpha: Option<f64>,
    pub penalty: PenaltySpec,
    pub critic: MlpConfig,
    /// Generator; its `input_dim` is the noise dimension.
    pub generator: MlpConfig,
    pub adam: AdamConfig,
    pub n_critic: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Real distribution.
    pub data: SyntheticSpec,
    pub fix_generator: bool,
    /// Fixed fake distribution used instead of the generator's samples.
    /// Only allowed together with `fix_generator`.
    pub fake_data: Option<SyntheticSpec>,
    pub field_lo: [f64; 2],
    pub field_hi: [f64; 2],
    pub field_resolution: [usize; 2],
    pub drift_window: usize,
}

/// Two unit-variance-ish Gaussians left and right of the origin.
pub fn two_gaussians() -> SyntheticSpec {
    SyntheticSpec::GaussianMixture {
        components: alloc::vec![
            Gaussian::isotropic(alloc::vec![-2.0, 0.0], 0.25, 0.5),
            Gaussian::isotropic(alloc::vec![2.0, 0.0], 0.25, 0.5),
        ],
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            metric: LossKind::Logistic,
            alpha: None,
            penalty: PenaltySpec::maxgp(1.0),
            critic: MlpConfig::new(2, 64, 2, 1),
            generator: MlpConfig::new(2, 64, 2, 2),
            adam: AdamConfig::default(),
            n_critic: 5,
            iterations: 1000,
            batch_size: 256,
            seed: 0,
            data: two_gaussians(),
            fix_generator: false,
            fake_data: None,
            field_lo: [-4.0, -4.0],
            field_hi: [4.0, 4.0],
            field_resolution: [41, 41],
            drift_window: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<LossMetric, TrainError> {
        let metric = make_metric(self.metric, self.alpha)?;
        self.penalty.validate()?;
        self.critic.validate()?;
        self.generator.validate()?;
        self.adam.validate()?;
        self.data.validate()?;
        if self.n_critic == 0 {
            return Err(TrainError::Config("n_critic must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1"));
        }
        if self.critic.output_dim != 1 {
            return Err(TrainError::Config("critic output_dim must be 1"));
        }
        if self.critic.input_dim != self.data.dim() {
            return Err(TrainError::Config("critic input_dim must match the data dimension"));
        }
        match &self.fake_data {
            Some(fake) => {
                if !self.fix_generator {
                    return Err(TrainError::Config("fake_data requires fix_generator"));
                }
                fake.validate()?;
                if fake.dim() != self.data.dim() {
                    return Err(TrainError::Config("fake_data dimension must match data"));
                }
            }
            None => {
                if self.generator.output_dim != self.data.dim() {
                    return Err(TrainError::Config("generator output_dim must match the data dimension"));
                }
            }
        }
        if self.field_resolution.iter().any(|&r| r < 2) {
            return Err(TrainError::Config("field resolution must be at least 2 per axis"));
        }
        if !(self.field_lo[0] < self.field_hi[0] && self.field_lo[1] < self.field_hi[1]) {
            return Err(TrainError::Config("field box lo must be below hi"));
        }
        if self.drift_window == 0 {
            return Err(TrainError::Config("drift_window must be at least 1"));
        }
        Ok(metric)
    }
}

/// Quantities recorded once per iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    /// Penalized critic loss of the last critic step.
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub mean_f_real: f64,
    pub mean_f_fake: f64,
    /// Largest gradient norm over the last critic step's penalty batch.
    pub k_hat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    /// Critic values and gradients on the configured box (2-D data only).
    pub field: Option<FieldGrid>,
    /// Windowed SD of `mean_f_real`; `None` without iterations.
    pub drift: Option<f64>,
    pub critic_params: Params,
    pub gen_params: Params,
}

impl TrainReport {
    pub fn series(&self, pick: impl Fn(&IterationRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(pick).collect()
    }
}

/// Result of one critic update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStep {
    pub loss: f64,
    pub k_hat: f64,
    pub mean_f_real: f64,
    pub mean_f_fake: f64,
}

struct CriticGraph {
    g: ExprGraph,
    net: MlpNodes,
    xr: NodeId,
    xf: NodeId,
    xb: NodeId,
    total: NodeId,
    norms: NodeId,
    k_hat: NodeId,
    mean_fr: NodeId,
    mean_ff: NodeId,
    grads: Vec<NodeId>,
}

impl CriticGraph {
    fn build(cfg: &MlpConfig, metric: &LossMetric, penalty: &PenaltySpec) -> Result<Self, GraphError> {
        let mut g = ExprGraph::new();
        let net = MlpNodes::declare(&mut g, cfg, "critic");
        let xr = g.input("x_real");
        let xf = g.input("x_fake");
        let xb = g.input("x_blend");
        let fr = net.forward(&mut g, xr);
        let ff = net.forward(&mut g, xf);
        let fb = net.forward(&mut g, xb);
        let mean_fr = g.mean(fr);
        let mean_ff = g.mean(ff);
        let phi = metric.phi_node(&mut g, ff);
        let phi = g.mean(phi);
        let varphi = metric.varphi_node(&mut g, fr);
        let varphi = g.mean(varphi);
        let disc = g.add(phi, varphi);
        let norms = grad_norm_node(&mut g, fb, xb)?;
        let k_hat = g.max(norms);
        let total = if penalty.lambda > 0.0 {
            let p = penalty.node(&mut g, norms);
            g.add(disc, p)
        } else {
            disc
        };
        let grads = g.gradient_nodes(total, &net.params)?;
        Ok(Self { g, net, xr, xf, xb, total, norms, k_hat, mean_fr, mean_ff, grads })
    }
}

struct GenGraph {
    g: ExprGraph,
    gen: MlpNodes,
    critic: MlpNodes,
    z: NodeId,
    xg: NodeId,
    loss: NodeId,
    grads: Vec<NodeId>,
}

impl GenGraph {
    fn build(gen_cfg: &MlpConfig, critic_cfg: &MlpConfig) -> Result<Self, GraphError> {
        let mut g = ExprGraph::new();
        let gen = MlpNodes::declare(&mut g, gen_cfg, "gen");
        let critic = MlpNodes::declare(&mut g, critic_cfg, "critic");
        let z = g.input("z");
        let xg = gen.forward(&mut g, z);
        let f = critic.forward(&mut g, xg);
        let m = g.mean(f);
        let loss = g.neg(m);
        let grads = g.gradient_nodes(loss, &gen.params)?;
        Ok(Self { g, gen, critic, z, xg, loss, grads })
    }
}

fn non_finite(iteration: usize, term: &'static str) -> impl Fn(GraphError) -> TrainError {
    move |e| match e {
        GraphError::NonFinite { .. } => TrainError::NonFinite { iteration, term },
        other => TrainError::Graph(other),
    }
}

fn all_finite(ts: &[Tensor]) -> bool {
    ts.iter().all(Tensor::is_finite)
}

/// Owns every piece of mutable state of one training run.
pub struct Trainer {
    cfg: TrainConfig,
    critic_params: Params,
    gen_params: Params,
    critic_adam: AdamState,
    gen_adam: AdamState,
    critic: CriticGraph,
    gen: GenGraph,
    smax: SMaxList,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        let metric = cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let critic_params = init_mlp(&cfg.critic, rng.next_u64());
        let gen_params = init_mlp(&cfg.generator, rng.next_u64());
        let critic = CriticGraph::build(&cfg.critic, &metric, &cfg.penalty)?;
        let gen = GenGraph::build(&cfg.generator, &cfg.critic)?;
        let smax_cap = if cfg.penalty.kind == PenaltyKind::MaxGp { cfg.penalty.smax } else { 0 };
        Ok(Self {
            critic_adam: AdamState::new(&critic_params),
            gen_adam: AdamState::new(&gen_params),
            critic_params,
            gen_params,
            critic,
            gen,
            smax: SMaxList::new(smax_cap),
            rng,
            iteration: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn critic_params(&self) -> &[Tensor] {
        &self.critic_params
    }

    pub fn gen_params(&self) -> &[Tensor] {
        &self.gen_params
    }

    pub fn set_critic_params(&mut self, params: Params) -> Result<(), TrainError> {
        if params.len() != self.critic_params.len()
            || params.iter().zip(&self.critic_params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(TrainError::Contract("critic parameter shapes differ"));
        }
        self.critic_params = params;
        Ok(())
    }

    pub fn smax(&self) -> &SMaxList {
        &self.smax
    }

    pub fn real_batch(&mut self) -> Result<Tensor, TrainError> {
        sample_synthetic(&self.cfg.data, self.cfg.batch_size, &mut self.rng)
    }

    pub fn noise_batch(&mut self) -> Tensor {
        sample_noise(self.cfg.batch_size, self.cfg.generator.input_dim, &mut self.rng)
    }

    /// Generated samples for the current generator, or the fixed fake data.
    pub fn fake_batch(&mut self) -> Result<Tensor, TrainError> {
        if let Some(spec) = &self.cfg.fake_data {
            return sample_synthetic(spec, self.cfg.batch_size, &mut self.rng);
        }
        let z = self.noise_batch();
        self.generate(&z)
    }

    pub fn generate(&mut self, noise: &Tensor) -> Result<Tensor, TrainError> {
        let gg = &mut self.gen;
        gg.gen.bind(&mut gg.g, &self.gen_params)?;
        gg.g.bind(gg.z, noise.clone())?;
        Ok(gg.g.eval(gg.xg).map_err(non_finite(self.iteration, "generator output"))?.clone())
    }

    /// One Adam step of the critic on the given real and fake batches.
    pub fn critic_step(&mut self, real: &Tensor, fake: &Tensor) -> Result<CriticStep, TrainError> {
        if real.shape().first() == Some(&0) || fake.shape().first() == Some(&0) {
            return Err(TrainError::Contract("critic_step: empty batch"));
        }
        let blend = sample_blend(real, fake, &mut self.rng)?;
        let xb = match self.smax.points() {
            Some(extra) => {
                let mut data = blend.into_data();
                data.extend_from_slice(extra.data());
                let d = real.shape()[1];
                Tensor::matrix(data.len() / d, d, data).expect("rows × d")
            }
            None => blend,
        };
        let cg = &mut self.critic;
        cg.net.bind(&mut cg.g, &self.critic_params)?;
        cg.g.bind(cg.xr, real.clone())?;
        cg.g.bind(cg.xf, fake.clone())?;
        cg.g.bind(cg.xb, xb.clone())?;
        let mut wanted = alloc::vec![cg.total, cg.k_hat, cg.mean_fr, cg.mean_ff, cg.norms];
        wanted.extend_from_slice(&cg.grads);
        cg.g.eval_many(&wanted).map_err(non_finite(self.iteration, "critic loss"))?;
        let scalar = |id| cg.g.value(id).and_then(Tensor::item).expect("scalar");
        let step = CriticStep {
            loss: scalar(cg.total),
            k_hat: scalar(cg.k_hat),
            mean_f_real: scalar(cg.mean_fr),
            mean_f_fake: scalar(cg.mean_ff),
        };
        let grads: Vec<Tensor> = cg.grads.iter().map(|&id| cg.g.value(id).expect("evaluated").clone()).collect();

        if self.smax.capacity() > 0 {
            let norms = cg.g.value(cg.norms).expect("evaluated").data().to_vec();
            self.smax.clear();
            self.smax.update(xb.row_iter().map(<[f64]>::to_vec).zip(norms));
        }
        adam_update(&mut self.critic_params, &grads, &mut self.critic_adam, &self.cfg.adam)?;
        if !all_finite(&self.critic_params) {
            return Err(TrainError::NonFinite { iteration: self.iteration, term: "critic parameters" });
        }
        Ok(step)
    }

    /// One Adam step of the generator against the current critic.
    pub fn generator_step(&mut self, noise: &Tensor) -> Result<f64, TrainError> {
        let gg = &mut self.gen;
        gg.gen.bind(&mut gg.g, &self.gen_params)?;
        gg.critic.bind(&mut gg.g, &self.critic_params)?;
        gg.g.bind(gg.z, noise.clone())?;
        let mut wanted = alloc::vec![gg.loss];
        wanted.extend_from_slice(&gg.grads);
        gg.g.eval_many(&wanted).map_err(non_finite(self.iteration, "generator loss"))?;
        let loss = gg.g.value(gg.loss).and_then(Tensor::item).expect("scalar");
        let grads: Vec<Tensor> = gg.grads.iter().map(|&id| gg.g.value(id).expect("evaluated").clone()).collect();
        adam_update(&mut self.gen_params, &grads, &mut self.gen_adam, &self.cfg.adam)?;
        if !all_finite(&self.gen_params) {
            return Err(TrainError::NonFinite { iteration: self.iteration, term: "generator parameters" });
        }
        Ok(loss)
    }

    /// `n_critic` critic steps, then a generator step unless it is fixed.
    pub fn iterate(&mut self) -> Result<IterationRecord, TrainError> {
        let mut last = None;
        for _ in 0..self.cfg.n_critic {
            let real = self.real_batch()?;
            let fake = self.fake_batch()?;
            last = Some(self.critic_step(&real, &fake)?);
        }
        let step = last.expect("n_critic ≥ 1");
        let gen_loss = if self.cfg.fix_generator {
            -step.mean_f_fake
        } else {
            let z = self.noise_batch();
            self.generator_step(&z)?
        };
        self.iteration += 1;
        Ok(IterationRecord {
            disc_loss: step.loss,
            gen_loss,
            mean_f_real: step.mean_f_real,
            mean_f_fake: step.mean_f_fake,
            k_hat: step.k_hat,
        })
    }

    /// The critic as a field, for diagnostics.
    pub fn critic_field(&self) -> Result<crate::field::GraphField, TrainError> {
        Ok(mlp_field(&self.cfg.critic, &self.critic_params)?)
    }

    pub fn finish(self, records: Vec<IterationRecord>) -> Result<TrainReport, TrainError> {
        let field = if self.cfg.critic.input_dim == 2 {
            let mut f = self.critic_field()?;
            Some(field_grid(&mut f, self.cfg.field_lo, self.cfg.field_hi, self.cfg.field_resolution)?)
        } else {
            None
        };
        let drift = if records.is_empty() {
            None
        } else {
            let series: Vec<f64> = records.iter().map(|r| r.mean_f_real).collect();
            Some(drift_statistic(&series, self.cfg.drift_window.min(series.len()))?)
        };
        Ok(TrainReport { records, field, drift, critic_params: self.critic_params, gen_params: self.gen_params })
    }
}

/// Runs the full alternating schedule for `cfg.iterations` iterations.
pub fn train(cfg: TrainConfig) -> Result<TrainReport, TrainError> {
    let mut t = Trainer::new(cfg)?;
    let mut records = Vec::with_capacity(t.cfg.iterations);
    for _ in 0..t.cfg.iterations {
        records.push(t.iterate()?);
    }
    t.finish(records)
}

#[cfg(test)]
mod tests;
