use std::io::Write;
use std::time::Instant;

use krew_core::encoders::{EncodedLayout, EncodedTable};
use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::condition::{Condition, ConditionSampler};
use crate::error::{Error, Result};
use crate::nets::{
    activate, condition_loss, gradient_penalty, gumbel_noise, BatchStats, BnMode, Discriminator,
    DropoutMasks, Generator, GpMode,
};
use crate::tape::{Tape, Tensor, Var};
use crate::transform::{DiscreteSlot, Segment, TransformSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub pac: usize,
    pub noise_dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub gp_lambda: f64,
    pub temperature: f64,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub discriminator_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub gp_mode: GpMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 350,
            batch_size: 60,
            pac: 10,
            noise_dim: 128,
            hidden: 256,
            learning_rate: 2e-4,
            betas: (0.5, 0.9),
            weight_decay: 1e-6,
            gp_lambda: 10.0,
            temperature: 0.2,
            dropout: 0.5,
            leaky_slope: 0.2,
            discriminator_steps: 1,
            seed: 0,
            gp_mode: GpMode::Exact,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.pac < 1 || self.batch_size < 1 || !self.batch_size.is_multiple_of(self.pac) {
            return bad(format!(
                "batch size {} is not a positive multiple of pac {}",
                self.batch_size, self.pac
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if self.noise_dim < 1 || self.hidden < 1 {
            return bad("noise dim and hidden width must be >= 1".into());
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return bad("temperature must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        if self.gp_lambda < 0.0 || self.discriminator_steps < 1 {
            return bad("penalty weight must be >= 0 and discriminator steps >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub millis: f64,
}

pub trait TrainHooks {
    fn on_epoch(&mut self, _stats: &EpochStats) {}
}

impl TrainHooks for () {}

/// Collects per-epoch rows for the training-log CSV. `probe` reports the
/// current peak memory, if available.
#[derive(Default)]
pub struct TrainLog {
    pub rows: Vec<(EpochStats, Option<u64>)>,
    probe: Option<Box<dyn FnMut() -> Option<u64>>>,
}

impl TrainLog {
    pub fn new() -> Self {
        TrainLog::default()
    }

    pub fn with_probe(probe: impl FnMut() -> Option<u64> + 'static) -> Self {
        TrainLog {
            rows: Vec::new(),
            probe: Some(Box::new(probe)),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,loss_d,loss_g,ms,peak_bytes")?;
        for (s, peak) in &self.rows {
            let peak = peak.map(|p| p.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{:.3},{}",
                s.epoch, s.loss_d, s.loss_g, s.millis, peak
            )?;
        }
        Ok(())
    }
}

impl TrainHooks for TrainLog {
    fn on_epoch(&mut self, stats: &EpochStats) {
        let peak = self.probe.as_mut().and_then(|p| p());
        self.rows.push((*stats, peak));
    }
}

fn with_cond(x: &Tensor, cond: &Tensor) -> Tensor {
    concatenate(Axis(1), &[x.view(), cond.view()]).expect("row counts agree")
}

fn normal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// All randomness of one critic update, drawn up front so the loss is a
/// deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct CriticBatch {
    /// Real rows with their conditional vectors appended.
    pub real: Tensor,
    pub fake: Tensor,
    /// One interpolation weight per pack.
    pub eps: Vec<f64>,
    /// Dropout for the real, fake and interpolated passes.
    pub masks: [DropoutMasks; 3],
}

/// `-mean D(real) + mean D(fake) + penalty`; also returns the penalty term.
pub fn critic_loss<'t>(
    tape: &'t Tape,
    disc: &Discriminator,
    params: &[Var<'t>],
    batch: &CriticBatch,
    lambda: f64,
    mode: GpMode,
) -> (Var<'t>, Var<'t>) {
    let real = disc
        .forward(params, tape.var(batch.real.clone()), &batch.masks[0])
        .mean();
    let fake = disc
        .forward(params, tape.var(batch.fake.clone()), &batch.masks[1])
        .mean();
    let mut critic = |x: Var<'t>| disc.forward(params, x, &batch.masks[2]);
    let gp = gradient_penalty(
        tape,
        &mut critic,
        &batch.real,
        &batch.fake,
        &batch.eps,
        disc.pac,
        lambda,
        mode,
    );
    (fake.sub(real).add(gp), gp)
}

#[derive(Debug, Clone)]
pub struct GeneratorBatch {
    pub noise: Tensor,
    pub cond: Tensor,
    /// Per discrete column, which rows are conditioned on which category.
    pub cond_masks: Vec<Tensor>,
    pub gumbel: Vec<Tensor>,
    pub masks: DropoutMasks,
}

/// Generator forward in training mode: activated rows and batch statistics.
#[allow(clippy::too_many_arguments)]
pub fn generate_batch<'t>(
    tape: &'t Tape,
    gen: &Generator,
    params: &[Var<'t>],
    segments: &[Segment],
    noise: &Tensor,
    cond: &Tensor,
    gumbel: &[Tensor],
    tau: f64,
) -> (Var<'t>, Var<'t>, Vec<BatchStats>) {
    let input = tape.var(with_cond(noise, cond));
    let (raw, stats) = gen.forward(params, input, BnMode::Batch);
    (raw, activate(raw, segments, gumbel, tau), stats)
}

/// `-mean D(G(z, v)) + CE(v, G)`.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<'t>(
    tape: &'t Tape,
    gen: &Generator,
    gen_params: &[Var<'t>],
    disc: &Discriminator,
    disc_params: &[Var<'t>],
    segments: &[Segment],
    slots: &[DiscreteSlot],
    batch: &GeneratorBatch,
    tau: f64,
) -> (Var<'t>, Vec<BatchStats>) {
    let (raw, act, stats) = generate_batch(
        tape,
        gen,
        gen_params,
        segments,
        &batch.noise,
        &batch.cond,
        &batch.gumbel,
        tau,
    );
    let x = Var::concat_cols(&[act, tape.var(batch.cond.clone())]);
    let y = disc.forward(disc_params, x, &batch.masks).mean();
    let ce = condition_loss(raw, slots, &batch.cond_masks);
    (y.scale(-1.0).add(ce), stats)
}

/// Learned networks plus everything needed to sample and invert rows.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub transform: TransformSpec,
    pub layout: EncodedLayout,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub config: TrainConfig,
    sampler: ConditionSampler,
}

impl PartialEq for TrainedModel {
    fn eq(&self, other: &Self) -> bool {
        self.transform == other.transform
            && self.layout == other.layout
            && self.generator == other.generator
            && self.discriminator == other.discriminator
            && self.config == other.config
    }
}

struct Trainer<'a> {
    data: &'a Tensor,
    sampler: ConditionSampler,
    segments: Vec<Segment>,
    slots: Vec<DiscreteSlot>,
    config: &'a TrainConfig,
    rng: ChaCha8Rng,
}

impl Trainer<'_> {
    fn draw_conditions(&mut self) -> Vec<Condition> {
        self.sampler
            .sample_training(self.config.batch_size, &mut self.rng)
    }

    fn real_rows(&mut self, conds: &[Condition]) -> Tensor {
        let n = self.config.batch_size;
        let (idx, cond) = if self.sampler.columns() == 0 {
            let idx: Vec<usize> = (0..n)
                .map(|_| self.rng.random_range(0..self.data.nrows()))
                .collect();
            (idx, Tensor::zeros((n, 0)))
        } else {
            let mut shuffled = conds.to_vec();
            shuffled.shuffle(&mut self.rng);
            let idx = self.sampler.sample_rows(&shuffled, &mut self.rng);
            (idx, self.sampler.encode(&shuffled))
        };
        with_cond(&self.data.select(Axis(0), &idx), &cond)
    }

    fn cond_tensor(&self, conds: &[Condition]) -> Tensor {
        if self.sampler.columns() == 0 {
            Tensor::zeros((self.config.batch_size, 0))
        } else {
            self.sampler.encode(conds)
        }
    }

    fn critic_step(&mut self, gen: &mut Generator, disc: &mut Discriminator, opt: &mut Adam) -> Result<f64> {
        let n = self.config.batch_size;
        let conds = self.draw_conditions();
        let cond = self.cond_tensor(&conds);
        let noise = normal(n, self.config.noise_dim, &mut self.rng);
        let gumbel = gumbel_noise(n, &self.segments, &mut self.rng);
        let fake = {
            let tape = Tape::new();
            let gp = gen.leaves(&tape);
            let (_, act, stats) = generate_batch(
                &tape,
                gen,
                &gp,
                &self.segments,
                &noise,
                &cond,
                &gumbel,
                self.config.temperature,
            );
            gen.update_running(&stats);
            with_cond(&act.value(), &cond)
        };
        let real = self.real_rows(&conds);
        let packs = n / self.config.pac;
        let eps: Vec<f64> = (0..packs).map(|_| self.rng.random::<f64>()).collect();
        let masks = [
            disc.sample_masks(n, &mut self.rng),
            disc.sample_masks(n, &mut self.rng),
            disc.sample_masks(n, &mut self.rng),
        ];
        let batch = CriticBatch {
            real,
            fake,
            eps,
            masks,
        };

        let tape = Tape::new();
        let params = disc.leaves(&tape);
        let (loss, _) = critic_loss(
            &tape,
            disc,
            &params,
            &batch,
            self.config.gp_lambda,
            self.config.gp_mode,
        );
        let value = loss.item();
        let grads: Vec<Option<Tensor>> = tape
            .grad(loss, &params)
            .into_iter()
            .map(|g| g.map(|g| (*g.value()).clone()))
            .collect();
        opt.update(&mut disc.params, &grads);
        Ok(value)
    }

    fn generator_step(&mut self, gen: &mut Generator, disc: &Discriminator, opt: &mut Adam) -> Result<f64> {
        let n = self.config.batch_size;
        let conds = self.draw_conditions();
        let batch = GeneratorBatch {
            cond: self.cond_tensor(&conds),
            cond_masks: self.sampler.column_masks(&conds),
            noise: normal(n, self.config.noise_dim, &mut self.rng),
            gumbel: gumbel_noise(n, &self.segments, &mut self.rng),
            masks: disc.sample_masks(n, &mut self.rng),
        };
        let tape = Tape::new();
        let gp = gen.leaves(&tape);
        let dp = disc.leaves(&tape);
        let (loss, stats) = generator_loss(
            &tape,
            gen,
            &gp,
            disc,
            &dp,
            &self.segments,
            &self.slots,
            &batch,
            self.config.temperature,
        );
        let value = loss.item();
        let grads: Vec<Option<Tensor>> = tape
            .grad(loss, &gp)
            .into_iter()
            .map(|g| g.map(|g| (*g.value()).clone()))
            .collect();
        gen.update_running(&stats);
        opt.update(&mut gen.params, &grads);
        Ok(value)
    }
}

/// Alternating critic/generator updates over `epochs`, each epoch running
/// `max(1, rows / batch)` steps.
pub fn train(table: &EncodedTable, config: &TrainConfig, hooks: &mut dyn TrainHooks) -> Result<TrainedModel> {
    config.validate()?;
    // real rows are drawn with replacement, so short tables still fill a batch
    if table.is_empty() {
        return Err(Error::Data("cannot train on an empty table".into()));
    }
    let spec = TransformSpec::fit(table)?;
    let data = spec.transform(&table.rows)?;
    let cats = spec.category_indices(&table.rows)?;
    let slots = spec.discrete_slots();
    let sampler = ConditionSampler::new(slots.clone(), &cats);
    let segments = spec.segments();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let out_w = spec.output_width();
    let cond_w = sampler.width();
    let mut gen = Generator::new(config.noise_dim + cond_w, config.hidden, out_w, &mut rng);
    let mut disc = Discriminator::new(
        out_w + cond_w,
        config.hidden,
        config.pac,
        config.dropout,
        config.leaky_slope,
        &mut rng,
    );
    let mut opt_g = Adam::new(
        &gen.params,
        config.learning_rate,
        config.betas,
        config.weight_decay,
    );
    let mut opt_d = Adam::new(
        &disc.params,
        config.learning_rate,
        config.betas,
        config.weight_decay,
    );

    let mut trainer = Trainer {
        data: &data,
        sampler: sampler.clone(),
        segments,
        slots,
        config,
        rng,
    };
    let steps = (table.len() / config.batch_size).max(1);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let (mut ld, mut lg) = (0.0, 0.0);
        for _ in 0..steps {
            for _ in 0..config.discriminator_steps {
                ld = trainer.critic_step(&mut gen, &mut disc, &mut opt_d)?;
            }
            lg = trainer.generator_step(&mut gen, &disc, &mut opt_g)?;
            if !ld.is_finite() || !lg.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    detail: format!("loss_d = {ld}, loss_g = {lg}"),
                });
            }
        }
        if gen
            .params
            .iter()
            .chain(&disc.params)
            .any(|p| p.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Numeric {
                epoch,
                detail: "network parameters became non-finite".into(),
            });
        }
        hooks.on_epoch(&EpochStats {
            epoch,
            loss_d: ld,
            loss_g: lg,
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok(TrainedModel {
        transform: spec,
        layout: table.layout.clone(),
        generator: gen,
        discriminator: disc,
        config: config.clone(),
        sampler,
    })
}

const SAMPLE_CHUNK: usize = 500;

impl TrainedModel {
    /// Reassembles a model from persisted parts.
    pub fn from_parts(
        transform: TransformSpec,
        layout: EncodedLayout,
        generator: Generator,
        discriminator: Discriminator,
        config: TrainConfig,
    ) -> Result<Self> {
        let sampler = ConditionSampler::from_counts(transform.discrete_slots(), &transform.discrete_counts());
        if generator.output_width != transform.output_width()
            || generator.input_width != config.noise_dim + sampler.width()
            || discriminator.row_width != transform.output_width() + sampler.width()
        {
            return Err(Error::Data("network shapes do not match the transform".into()));
        }
        Ok(TrainedModel {
            transform,
            layout,
            generator,
            discriminator,
            config,
            sampler,
        })
    }

    pub fn condition_sampler(&self) -> &ConditionSampler {
        &self.sampler
    }

    /// `n` encoded rows; identical for identical seeds.
    pub fn sample(&self, n: usize, seed: u64) -> Result<EncodedTable> {
        self.sample_inner(n, seed, None)
    }

    /// Like [`TrainedModel::sample`] but every row is conditioned on `cond`.
    pub fn sample_conditioned(&self, n: usize, cond: Condition, seed: u64) -> Result<EncodedTable> {
        if cond.column >= self.sampler.columns()
            || cond.category >= self.sampler.slots()[cond.column].categories
        {
            return Err(Error::Parameter(format!("no discrete category {cond:?}")));
        }
        self.sample_inner(n, seed, Some(cond))
    }

    /// Raw activated generator output for `n` rows (before inversion).
    pub fn sample_activations(&self, n: usize, seed: u64, fixed: Option<Condition>) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::Parameter("row count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let segments = self.transform.segments();
        let mut parts = Vec::new();
        let mut left = n;
        while left > 0 {
            let m = left.min(SAMPLE_CHUNK);
            left -= m;
            let conds = match fixed {
                Some(c) => vec![c; m],
                None => self.sampler.sample_generation(m, &mut rng),
            };
            let cond = if self.sampler.columns() == 0 {
                Tensor::zeros((m, 0))
            } else {
                self.sampler.encode(&conds)
            };
            let noise = normal(m, self.config.noise_dim, &mut rng);
            let gumbel = gumbel_noise(m, &segments, &mut rng);
            let tape = Tape::new();
            let gp = self.generator.leaves(&tape);
            let (raw, _) = self
                .generator
                .forward(&gp, tape.var(with_cond(&noise, &cond)), BnMode::Running);
            let act = activate(raw, &segments, &gumbel, self.config.temperature);
            parts.push((*act.value()).clone());
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("equal widths"))
    }

    fn sample_inner(&self, n: usize, seed: u64, fixed: Option<Condition>) -> Result<EncodedTable> {
        let act = self.sample_activations(n, seed, fixed)?;
        if act.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric {
                epoch: self.config.epochs,
                detail: "generator produced non-finite activations".into(),
            });
        }
        let rows = self.transform.inverse(&act);
        let mut table = EncodedTable::new(self.layout.clone(), rows)?;
        table.clamp_counts();
        Ok(table)
    }
}
