use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;

use crate::tape::{Tape, Tensor, Var};
use crate::transform::{Activation, Segment};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// `(in, out)` weight and `(1, out)` bias, initialised uniformly in
/// `±1/sqrt(in)`.
fn linear<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> [Tensor; 2] {
    let bound = 1.0 / (inputs as f64).sqrt();
    [
        uniform(inputs, outputs, bound, rng),
        uniform(1, outputs, bound, rng),
    ]
}

fn affine<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Var<'t> {
    x.matmul(w).add_row(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalise with the batch statistics.
    Batch,
    /// Normalise with the running averages.
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Tensor,
    /// Unbiased batch variance.
    pub var: Tensor,
}

fn batch_norm<'t>(x: Var<'t>, gamma: Var<'t>, beta: Var<'t>) -> (Var<'t>, BatchStats) {
    let n = x.shape().0;
    let mean = x.sum_rows().scale(1.0 / n as f64);
    let centered = x.sub(mean.broadcast_rows(n));
    let var = centered.mul(centered).sum_rows().scale(1.0 / n as f64);
    let inv = var.add_scalar(BN_EPS).powf(-0.5);
    let y = centered.mul_row(inv).mul_row(gamma).add_row(beta);
    let unbiased = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    let stats = BatchStats {
        mean: (*mean.value()).clone(),
        var: &*var.value() * unbiased,
    };
    (y, stats)
}

/// Two fully connected hidden layers with batch norm and ReLU, then a linear
/// output whose columns are activated per transform segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// `w1 b1 gamma1 beta1 w2 b2 gamma2 beta2 w3 b3`
    pub params: Vec<Tensor>,
    /// `mean1 var1 mean2 var2`
    pub running: Vec<Tensor>,
    pub input_width: usize,
    pub hidden: usize,
    pub output_width: usize,
}

impl Generator {
    pub fn new<R: Rng>(input_width: usize, hidden: usize, output_width: usize, rng: &mut R) -> Self {
        let [w1, b1] = linear(input_width, hidden, rng);
        let [w2, b2] = linear(hidden, hidden, rng);
        let [w3, b3] = linear(hidden, output_width, rng);
        let ones = Array2::ones((1, hidden));
        let zeros = Array2::zeros((1, hidden));
        Generator {
            params: vec![
                w1,
                b1,
                ones.clone(),
                zeros.clone(),
                w2,
                b2,
                ones.clone(),
                zeros.clone(),
                w3,
                b3,
            ],
            running: vec![zeros.clone(), ones.clone(), zeros, ones],
            input_width,
            hidden,
            output_width,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn leaves<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|p| tape.var(p.clone())).collect()
    }

    /// Raw output (pre-activation) plus the batch statistics of both
    /// normalisation layers when `mode` is [`BnMode::Batch`].
    pub fn forward<'t>(&self, p: &[Var<'t>], input: Var<'t>, mode: BnMode) -> (Var<'t>, Vec<BatchStats>) {
        let tape_var = |t: &Tensor| -> Var<'t> { input.tape().var(t.clone()) };
        let mut stats = Vec::new();
        let mut h = input;
        for layer in 0..2 {
            let base = layer * 4;
            let z = affine(h, p[base], p[base + 1]);
            let normed = match mode {
                BnMode::Batch => {
                    let (y, s) = batch_norm(z, p[base + 2], p[base + 3]);
                    stats.push(s);
                    y
                }
                BnMode::Running => {
                    let mean = &self.running[layer * 2];
                    let inv = self.running[layer * 2 + 1].mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                    let n = z.shape().0;
                    z.sub(tape_var(mean).broadcast_rows(n))
                        .mul_row(tape_var(&inv))
                        .mul_row(p[base + 2])
                        .add_row(p[base + 3])
                }
            };
            h = normed.relu();
        }
        (affine(h, p[8], p[9]), stats)
    }

    pub fn update_running(&mut self, stats: &[BatchStats]) {
        for (layer, s) in stats.iter().enumerate() {
            let m = &mut self.running[layer * 2];
            *m = &*m * (1.0 - BN_MOMENTUM) + &s.mean * BN_MOMENTUM;
            let v = &mut self.running[layer * 2 + 1];
            *v = &*v * (1.0 - BN_MOMENTUM) + &s.var * BN_MOMENTUM;
        }
    }
}

/// Gumbel noise `-ln(-ln u)` for every segment that is a softmax group.
pub fn gumbel_noise<R: Rng>(rows: usize, segments: &[Segment], rng: &mut R) -> Vec<Tensor> {
    segments
        .iter()
        .filter(|s| s.activation == Activation::Softmax)
        .map(|s| {
            Array2::from_shape_fn((rows, s.width), |_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                -(-u.ln()).ln()
            })
        })
        .collect()
}

/// Closed form `softmax((logits + g) / tau)` row by row.
pub fn gumbel_softmax_value(logits: &Tensor, gumbel: &Tensor, tau: f64) -> Tensor {
    let mut out = (logits + gumbel) / tau;
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}

/// tanh on scalar slots, Gumbel-softmax on every one-hot group.
pub fn activate<'t>(raw: Var<'t>, segments: &[Segment], gumbel: &[Tensor], tau: f64) -> Var<'t> {
    let tape = raw.tape();
    let mut g = gumbel.iter();
    let parts: Vec<Var<'t>> = segments
        .iter()
        .map(|s| {
            let slice = raw.slice_cols(s.start, s.start + s.width);
            match s.activation {
                Activation::Tanh => slice.tanh(),
                Activation::Softmax => {
                    let noise = g.next().expect("gumbel noise per softmax segment");
                    slice.add(tape.var(noise.clone())).scale(1.0 / tau).softmax()
                }
            }
        })
        .collect();
    Var::concat_cols(&parts)
}

/// Dropout masks for both hidden layers, already scaled by `1/(1-p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub layers: [Option<Rc<Tensor>>; 2],
}

impl DropoutMasks {
    pub fn none() -> Self {
        DropoutMasks { layers: [None, None] }
    }
}

/// PacGAN critic: `pac` consecutive rows are concatenated into one input, two
/// leaky-ReLU hidden layers with dropout, scalar output per pack.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    /// `w1 b1 w2 b2 w3 b3`
    pub params: Vec<Tensor>,
    pub row_width: usize,
    pub hidden: usize,
    pub pac: usize,
    pub dropout: f64,
    pub slope: f64,
}

impl Discriminator {
    pub fn new<R: Rng>(
        row_width: usize,
        hidden: usize,
        pac: usize,
        dropout: f64,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let [w1, b1] = linear(row_width * pac, hidden, rng);
        let [w2, b2] = linear(hidden, hidden, rng);
        let [w3, b3] = linear(hidden, 1, rng);
        Discriminator {
            params: vec![w1, b1, w2, b2, w3, b3],
            row_width,
            hidden,
            pac,
            dropout,
            slope,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn leaves<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|p| tape.var(p.clone())).collect()
    }

    pub fn sample_masks<R: Rng>(&self, rows: usize, rng: &mut R) -> DropoutMasks {
        if self.dropout <= 0.0 {
            return DropoutMasks::none();
        }
        let packs = rows / self.pac;
        let keep = 1.0 / (1.0 - self.dropout);
        let mut layer = || {
            Some(Rc::new(Array2::from_shape_fn((packs, self.hidden), |_| {
                if rng.random::<f64>() < self.dropout {
                    0.0
                } else {
                    keep
                }
            })))
        };
        let a = layer();
        let b = layer();
        DropoutMasks { layers: [a, b] }
    }

    /// `(rows, row_width)` in, `(rows / pac, 1)` out.
    pub fn forward<'t>(&self, p: &[Var<'t>], x: Var<'t>, masks: &DropoutMasks) -> Var<'t> {
        let (rows, width) = x.shape();
        assert_eq!(width, self.row_width, "critic input width");
        assert_eq!(rows % self.pac, 0, "critic rows must be a multiple of pac");
        let mut h = x.reshape(rows / self.pac, width * self.pac);
        for layer in 0..2 {
            h = affine(h, p[layer * 2], p[layer * 2 + 1]).leaky_relu(self.slope);
            if let Some(m) = &masks.layers[layer] {
                h = h.mask(Rc::clone(m));
            }
        }
        affine(h, p[4], p[5])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum GpMode {
    /// Exact input gradient through double backprop.
    #[default]
    Exact,
    /// Central differences of the critic; for debugging the exact path.
    FiniteDifference,
}

/// `lambda * mean((|grad D(x_hat)| - 1)^2)` over packs, where
/// `x_hat = eps * real + (1 - eps) * fake` with one `eps` per pack. The
/// result stays differentiable with respect to the critic parameters.
#[allow(clippy::too_many_arguments)]
pub fn gradient_penalty<'t>(
    tape: &'t Tape,
    critic: &mut dyn FnMut(Var<'t>) -> Var<'t>,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    pac: usize,
    lambda: f64,
    mode: GpMode,
) -> Var<'t> {
    let (rows, width) = real.dim();
    assert_eq!(real.dim(), fake.dim(), "penalty inputs differ in shape");
    assert_eq!(eps.len(), rows / pac, "one epsilon per pack");
    let mut mixed = real.clone();
    for (r, mut row) in mixed.rows_mut().into_iter().enumerate() {
        let e = eps[r / pac];
        row.zip_mut_with(&fake.row(r), |a, b| *a = e * *a + (1.0 - e) * b);
    }
    let packed_grad = match mode {
        GpMode::Exact => {
            let x_hat = tape.var(mixed);
            let out = critic(x_hat).sum();
            match tape.grad(out, &[x_hat])[0] {
                Some(g) => g.reshape(rows / pac, pac * width),
                None => tape.var(Array2::zeros((rows / pac, pac * width))),
            }
        }
        GpMode::FiniteDifference => {
            let h = 1e-5;
            let mut columns = Vec::with_capacity(pac * width);
            for k in 0..pac {
                for j in 0..width {
                    let shifted = |sign: f64| {
                        let mut m = mixed.clone();
                        for pack in 0..rows / pac {
                            m[(pack * pac + k, j)] += sign * h;
                        }
                        m
                    };
                    let up = critic(tape.var(shifted(1.0)));
                    let down = critic(tape.var(shifted(-1.0)));
                    columns.push(up.sub(down).scale(0.5 / h));
                }
            }
            Var::concat_cols(&columns)
        }
    };
    let norm = packed_grad
        .mul(packed_grad)
        .sum_cols()
        .add_scalar(1e-12)
        .powf(0.5);
    let dev = norm.add_scalar(-1.0);
    dev.mul(dev).mean().scale(lambda)
}

/// Cross-entropy between the conditioned category and the generator's raw
/// logits for that column, averaged over the batch.
pub fn condition_loss<'t>(
    raw: Var<'t>,
    slots: &[crate::transform::DiscreteSlot],
    masks: &[Tensor],
) -> Var<'t> {
    let tape = raw.tape();
    let rows = raw.shape().0;
    let mut total: Option<Var<'t>> = None;
    for (slot, m) in slots.iter().zip(masks) {
        if m.sum() == 0.0 {
            continue;
        }
        let lp = raw
            .slice_cols(slot.output_start, slot.output_start + slot.categories)
            .log_softmax()
            .mask(Rc::new(m.clone()))
            .sum();
        total = Some(match total {
            Some(t) => t.add(lp),
            None => lp,
        });
    }
    match total {
        Some(t) => t.scale(-1.0 / rows as f64),
        None => tape.scalar(0.0),
    }
}
