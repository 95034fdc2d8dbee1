//! Post-hoc recurrent models for the discriminative and predictive scores.

use dsdiff_nn::{Adam, Init, ParamId, ParamLayout, Tape, Var};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::series::SeriesWindow;
use crate::{Error, Result};

/// Shape and schedule of one of the post-hoc recurrent models.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentConfig {
    /// Hidden width; `None` uses the feature count.
    pub hidden: Option<usize>,
    pub layers: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            layers: 2,
            iterations: 2000,
            batch_size: 128,
            learning_rate: 1e-3,
        }
    }
}

impl RecurrentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == Some(0) || self.layers == 0 || self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!("recurrent model sizes must be positive: {self:?}")));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("recurrent model learning rate must be positive".into()));
        }
        Ok(())
    }
}

struct GruLayer {
    w: [ParamId; 3],
    u: [ParamId; 3],
    b: [ParamId; 3],
    /// Bias inside the reset-gated hidden term of the candidate.
    bu: ParamId,
}

/// Stacked GRU followed by a dense head applied to chosen hidden states.
pub(crate) struct Gru {
    layout: ParamLayout,
    layers: Vec<GruLayer>,
    head_w: ParamId,
    head_b: ParamId,
    hidden: usize,
}

impl Gru {
    pub(crate) fn new(input: usize, hidden: usize, layers: usize, output: usize) -> Self {
        let mut layout = ParamLayout::new();
        let bound = 1.0 / (hidden as f64).sqrt();
        let layers = (0..layers)
            .map(|l| {
                let din = if l == 0 { input } else { hidden };
                let gate = |layout: &mut ParamLayout, g: &str, rows: usize, what: &str| {
                    layout.push(format!("gru{l}.{g}.{what}"), &[rows, hidden], Init::Uniform(bound))
                };
                GruLayer {
                    w: ["z", "r", "n"].map(|g| gate(&mut layout, g, din, "w")),
                    u: ["z", "r", "n"].map(|g| gate(&mut layout, g, hidden, "u")),
                    b: ["z", "r", "n"].map(|g| layout.push(format!("gru{l}.{g}.b"), &[hidden], Init::Uniform(bound))),
                    bu: layout.push(format!("gru{l}.n.bu"), &[hidden], Init::Uniform(bound)),
                }
            })
            .collect();
        let head_w = layout.push("head.w", &[hidden, output], Init::Uniform(bound));
        let head_b = layout.push("head.b", &[output], Init::Zeros);
        Self {
            layout,
            layers,
            head_w,
            head_b,
            hidden,
        }
    }

    pub(crate) fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Top-layer hidden state after every step of `steps` (each `[B, in]`).
    pub(crate) fn run(&self, tape: &mut Tape, steps: &[Var], batch: usize) -> Vec<Var> {
        let p = |tape: &mut Tape, id: ParamId| tape.param(self.layout.spec(id));
        let mut seq = steps.to_vec();
        for layer in &self.layers {
            let mut h = tape.constant(vec![0.0; batch * self.hidden], &[batch, self.hidden]);
            let mut out = Vec::with_capacity(seq.len());
            for &x in &seq {
                let mut pre = [x; 2];
                for g in 0..2 {
                    let (w, b, u) = (p(tape, layer.w[g]), p(tape, layer.b[g]), p(tape, layer.u[g]));
                    let xw = tape.linear(x, w, b);
                    let hu = tape.matmul(h, u);
                    let s = tape.add(xw, hu);
                    pre[g] = tape.sigmoid(s);
                }
                let (z, r) = (pre[0], pre[1]);
                let (w, b, u, bu) = (p(tape, layer.w[2]), p(tape, layer.b[2]), p(tape, layer.u[2]), p(tape, layer.bu));
                let xw = tape.linear(x, w, b);
                let hu = tape.linear(h, u, bu);
                let gated = tape.mul(r, hu);
                let s = tape.add(xw, gated);
                let n = tape.tanh(s);
                // h' = n + z ⊙ (h − n)
                let diff = tape.sub(h, n);
                let zd = tape.mul(z, diff);
                h = tape.add(n, zd);
                out.push(h);
            }
            seq = out;
        }
        seq
    }

    pub(crate) fn head(&self, tape: &mut Tape, h: Var) -> Var {
        let w = tape.param(self.layout.spec(self.head_w));
        let b = tape.param(self.layout.spec(self.head_b));
        tape.linear(h, w, b)
    }
}

/// Column `k` of every window in `batch` as a `[B, F]` row block.
fn step_rows(batch: &[&SeriesWindow], k: usize) -> Vec<f64> {
    batch.iter().flat_map(|w| w.values().row(k).to_vec()).collect()
}

fn hidden_for(cfg: &RecurrentConfig, features: usize) -> usize {
    cfg.hidden.unwrap_or(features)
}

/// Held-out accuracy of a real-vs-generated sequence classifier.
pub(crate) fn classifier_accuracy(real: &[SeriesWindow], gen: &[SeriesWindow], cfg: &RecurrentConfig, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, f) = (real[0].len(), real[0].features());
    let split = |set: &[SeriesWindow], rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.shuffle(rng);
        let cut = (set.len() * 4) / 5;
        (idx[..cut].to_vec(), idx[cut..].to_vec())
    };
    let (real_train, real_test) = split(real, &mut rng);
    let (gen_train, gen_test) = split(gen, &mut rng);
    let train: Vec<(&SeriesWindow, f64)> = real_train
        .iter()
        .map(|&i| (&real[i], 1.0))
        .chain(gen_train.iter().map(|&i| (&gen[i], 0.0)))
        .collect();
    let test: Vec<(&SeriesWindow, f64)> = real_test
        .iter()
        .map(|&i| (&real[i], 1.0))
        .chain(gen_test.iter().map(|&i| (&gen[i], 0.0)))
        .collect();

    let gru = Gru::new(f, hidden_for(cfg, f), cfg.layers, 1);
    let mut weights = gru.layout().initialize(&mut rng);
    let mut adam = Adam::new(weights.len(), cfg.learning_rate);
    let bs = cfg.batch_size.min(train.len());
    for _ in 0..cfg.iterations {
        let batch: Vec<&(&SeriesWindow, f64)> = train.choose_multiple(&mut rng, bs).collect();
        let windows: Vec<&SeriesWindow> = batch.iter().map(|b| b.0).collect();
        let labels: Vec<f64> = batch.iter().map(|b| b.1).collect();
        let grads = {
            let mut tape = Tape::new(&weights);
            let steps: Vec<Var> = (0..l).map(|k| tape.constant(step_rows(&windows, k), &[bs, f])).collect();
            let hs = gru.run(&mut tape, &steps, bs);
            let logits = gru.head(&mut tape, hs[l - 1]);
            let loss = tape.bce_with_logits(logits, labels);
            tape.backward(loss).params
        };
        adam.step(&mut weights, &grads);
    }

    let windows: Vec<&SeriesWindow> = test.iter().map(|t| t.0).collect();
    let mut tape = Tape::new(&weights);
    let steps: Vec<Var> = (0..l)
        .map(|k| tape.constant(step_rows(&windows, k), &[windows.len(), f]))
        .collect();
    let hs = gru.run(&mut tape, &steps, windows.len());
    let logits = gru.head(&mut tape, hs[l - 1]);
    let correct = tape
        .value(logits)
        .iter()
        .zip(&test)
        .filter(|(&z, t)| (z > 0.0) == (t.1 > 0.5))
        .count();
    correct as f64 / test.len() as f64
}

/// One-step-ahead predictor trained on `train`, scored by mean absolute
/// error on `test`.
pub(crate) fn predictor_mae(train: &[SeriesWindow], test: &[SeriesWindow], cfg: &RecurrentConfig, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l, f) = (train[0].len(), train[0].features());
    let gru = Gru::new(f, hidden_for(cfg, f), cfg.layers, f);
    let mut weights = gru.layout().initialize(&mut rng);
    let mut adam = Adam::new(weights.len(), cfg.learning_rate);
    let bs = cfg.batch_size.min(train.len());
    let refs: Vec<&SeriesWindow> = train.iter().collect();

    let predictions = |tape: &mut Tape, windows: &[&SeriesWindow]| -> Vec<Var> {
        let b = windows.len();
        let steps: Vec<Var> = (0..l - 1).map(|k| tape.constant(step_rows(windows, k), &[b, f])).collect();
        let hs = gru.run(tape, &steps, b);
        hs.into_iter()
            .map(|h| {
                let o = gru.head(tape, h);
                tape.sigmoid(o)
            })
            .collect()
    };

    for _ in 0..cfg.iterations {
        let batch: Vec<&SeriesWindow> = refs.choose_multiple(&mut rng, bs).copied().collect();
        let grads = {
            let mut tape = Tape::new(&weights);
            let preds = predictions(&mut tape, &batch);
            let scale = 1.0 / (bs * (l - 1) * f) as f64;
            let mut loss = None;
            for (k, &p) in preds.iter().enumerate() {
                let term = tape.squared_error(p, step_rows(&batch, k + 1), scale);
                loss = Some(match loss {
                    None => term,
                    Some(acc) => tape.add(acc, term),
                });
            }
            let loss = loss.expect("windows have at least two steps");
            tape.backward(loss).params
        };
        adam.step(&mut weights, &grads);
    }

    let windows: Vec<&SeriesWindow> = test.iter().collect();
    let mut tape = Tape::new(&weights);
    let preds = predictions(&mut tape, &windows);
    let mut total = 0.0;
    for (k, &p) in preds.iter().enumerate() {
        let target = step_rows(&windows, k + 1);
        total += tape.value(p).iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    total / (windows.len() * (l - 1) * f) as f64
}

pub(crate) fn replicate_seeds<R: Rng + ?Sized>(replicates: usize, rng: &mut R) -> Vec<u64> {
    (0..replicates).map(|_| rng.random()).collect()
}
