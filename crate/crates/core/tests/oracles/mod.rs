//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use innovations::forecast::{point_mmae, quantile, ForecastEnsemble};
use innovations::metrics::crps_ensemble;
use innovations::model::{Mode, ModelConfig, Normalization, WiaeModel};
use innovations::ndiff::{Activation, Binding, LayerSpec, Network, NetworkSpec, Tape, Tensor, Var};
use innovations::trainer::{critic_loss, critic_spec, generator_loss, segment_length, CriticPair, GeneratorBatch, Terms};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-4;

/// Worst relative error of analytic against central differences.
#[derive(Debug, Default)]
pub struct Check {
    pub worst: f64,
    pub checked: usize,
    pub kinks: usize,
}

impl Check {
    /// `f(delta)` evaluates the objective with one coordinate shifted by `delta`.
    pub fn coord(&mut self, analytic: f64, mut f: impl FnMut(f64) -> f64) {
        let (fp, f0, fm) = (f(H), f(0.0), f(-H));
        let fwd = (fp - f0) / H;
        let bwd = (f0 - fm) / H;
        // A leaky-ReLU kink inside [-H, H] makes the one-sided slopes disagree.
        if (fwd - bwd).abs() > 1e-4 * fwd.abs().max(bwd.abs()).max(FLOOR) {
            self.kinks += 1;
            return;
        }
        let numeric = (fp - fm) / (2.0 * H);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        self.worst = self.worst.max(err);
        self.checked += 1;
    }

    /// Nonempty, at most 1% of coordinates skipped, and below `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.kinks * 100 <= self.checked && self.worst < tol
    }

    pub fn merge(&mut self, other: &Check) {
        self.worst = self.worst.max(other.worst);
        self.checked += other.checked;
        self.kinks += other.kinks;
    }

    pub fn assert_below(&self, tol: f64, what: &str) {
        eprintln!("{what}: {} coordinates, {} kinks, worst {:.2e}", self.checked, self.kinks, self.worst);
        assert!(self.passes(tol), "{what}: {self:?} against {tol:e}");
    }
}

fn perturbed(net: &Network, entry: usize, i: usize, delta: f64) -> Network {
    let mut out = net.clone();
    let e = &net.params().entries()[entry];
    let mut v = e.values.clone();
    v[i] += delta;
    out.params_mut().set(&e.name, &v).unwrap();
    out
}

fn random_activation(rng: &mut impl Rng) -> Activation {
    match rng.random_range(0..4) {
        0 => Activation::Identity,
        1 => Activation::LeakyRelu { slope: rng.random_range(0.05..0.5) },
        2 => Activation::Sigmoid,
        _ => Activation::Tanh,
    }
}

fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    let input_transform = if rng.random_bool(0.3) { Activation::Logit } else { Activation::Identity };
    let depth = rng.random_range(1..=4);
    let mut layers = Vec::new();
    let mut fan_in = 1;
    let mut window = 1;
    for d in 0..depth {
        let fan_out = if d + 1 == depth { rng.random_range(1..=2) } else { rng.random_range(1..=5) };
        let act = random_activation(rng);
        if rng.random_bool(0.5) {
            let k = rng.random_range(1..=4);
            window += k - 1;
            layers.push(LayerSpec::conv(fan_in, fan_out, k, act));
        } else {
            layers.push(LayerSpec::dense(fan_in, fan_out, act));
        }
        fan_in = fan_out;
    }
    NetworkSpec { input_transform, layers, window, outputs: fan_in }
}

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn weighted_output(net: &Network, x: &Tensor, w: &[f64]) -> f64 {
    net.eval(x).unwrap().data().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Random dense/conv stacks: `(parameter check, input check)`.
pub fn layer_gradients(seed: u64, configs: usize) -> (Check, Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Check::default();
    let mut inputs = Check::default();
    for _ in 0..configs {
        let spec = random_spec(&mut rng);
        let net = Network::new(spec.clone(), &mut rng).unwrap();
        let batch = rng.random_range(1..=3);
        let len = spec.window + rng.random_range(0..3);
        let (lo, hi) = if spec.input_transform == Activation::Logit { (0.1, 0.9) } else { (-2.0, 2.0) };
        let x = random_tensor(&mut rng, vec![batch, len, 1], lo, hi);
        let out_len = batch * (len - spec.window + 1) * spec.outputs;
        let w: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let y = net.apply(&mut tape, xv, Binding::Trainable).unwrap();
        let grads = tape.backward(y, &w).unwrap();
        let gp = grads.for_store(net.params()).unwrap();
        let gx = grads.wrt(xv).unwrap().to_vec();

        for (e, g) in gp.grads().iter().enumerate() {
            for (i, &a) in g.iter().enumerate() {
                params.coord(a, |d| weighted_output(&perturbed(&net, e, i, d), &x, &w));
            }
        }
        for (i, &a) in gx.iter().enumerate() {
            inputs.coord(a, |d| {
                let mut xp = x.clone();
                xp.data_mut()[i] += d;
                weighted_output(&net, &xp, &w)
            });
        }
    }
    (params, inputs)
}

/// A composite of every elementwise and reduction op on the tape.
pub fn tape_op_gradients(seed: u64, configs: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check::default();
    for _ in 0..configs {
        let n = rng.random_range(2..8);
        let a = random_tensor(&mut rng, vec![1, n, 1], -2.0, 2.0);
        let b = random_tensor(&mut rng, vec![1, n, 1], -2.0, 2.0);
        let scale: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = rng.random_range(-2.0..2.0);
        let start = rng.random_range(0..n - 1);
        let f = |a: &Tensor, b: &Tensor| -> (Tape, [Var; 3]) {
            let mut t = Tape::new();
            let av = t.input(a.clone());
            let bv = t.input(b.clone());
            let p = t.mul(av, bv).unwrap();
            let s = t.square(av);
            let q = t.sub(p, s).unwrap();
            let q = t.scale_by(q, scale.clone()).unwrap();
            let q = t.add(q, bv).unwrap();
            let q = t.mul_scalar(q, c);
            let q = t.add_scalar(q, 0.5);
            let q = t.activate(q, Activation::Tanh);
            let q = t.slice_len(q, start, n - start).unwrap();
            let m = t.mean(q);
            let s = t.sum(av);
            let m2 = t.mul(m, s).unwrap();
            (t, [m2, av, bv])
        };
        let (tape, [root, av, bv]) = f(&a, &b);
        let g = tape.backward(root, &[1.0]).unwrap();
        let value = |a: &Tensor, b: &Tensor| {
            let (t, [r, _, _]) = f(a, b);
            t.value(r).data()[0]
        };
        for i in 0..n {
            check.coord(g.wrt(av).unwrap()[i], |d| {
                let mut ap = a.clone();
                ap.data_mut()[i] += d;
                value(&ap, &b)
            });
            check.coord(g.wrt(bv).unwrap()[i], |d| {
                let mut bp = b.clone();
                bp.data_mut()[i] += d;
                value(&a, &bp)
            });
        }
    }
    check
}

/// Full gradient-penalised critic objective.
pub fn critic_gradients(seed: u64, configs: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check::default();
    for _ in 0..configs {
        let window = rng.random_range(2..=6);
        let hidden = rng.random_range(2..=6);
        let critic = Network::new(critic_spec(window, hidden), &mut rng).unwrap();
        let batch = rng.random_range(2..=4);
        let real = random_tensor(&mut rng, vec![batch, window, 1], 0.0, 1.0);
        let fake = random_tensor(&mut rng, vec![batch, window, 1], -1.0, 1.0);
        let mix: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
        let penalty = rng.random_range(0.0..20.0);
        let (_, grads) = critic_loss(&critic, &real, &fake, penalty, &mix).unwrap();
        for (e, g) in grads.grads().iter().enumerate() {
            for (i, &a) in g.iter().enumerate() {
                check.coord(a, |d| {
                    critic_loss(&perturbed(&critic, e, i, d), &real, &fake, penalty, &mix).unwrap().0.total
                });
            }
        }
    }
    check
}

fn small_model(rng: &mut impl Rng, mode: Mode) -> WiaeModel {
    let config = ModelConfig {
        k: rng.random_range(1..=3),
        embed: rng.random_range(1..=3),
        hidden: rng.random_range(2..=4),
        depth: rng.random_range(0..=1),
    };
    WiaeModel::new(config, mode, Normalization::identity(), rng.random()).unwrap()
}

/// Encoder and decoder gradients of the generator objective, alternating modes.
pub fn generator_gradients(seed: u64, configs: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = Check::default();
    for case in 0..configs {
        let mode = if case % 2 == 0 { Mode::Sir } else { Mode::Wir };
        let model = small_model(&mut rng, mode);
        let k = model.k();
        let critics = CriticPair::new(mode, k + 1, 4, &mut rng).unwrap();
        let b = rng.random_range(2..=4);
        let batch = GeneratorBatch {
            segments: random_tensor(&mut rng, vec![b, segment_length(mode, k), 1], -1.0, 1.0),
            noise: random_tensor(&mut rng, vec![b, k + 1, 1], 0.0, 1.0),
            variance: rng.random_range(0.1..1.0),
        };
        let lambda = rng.random_range(0.0..3.0);
        let (_, g_enc, g_dec) = generator_loss(&model, &critics, &batch, lambda, Terms::Both).unwrap();
        let eval = |enc: &Network, dec: &Network| {
            let m = WiaeModel::from_networks(mode, Normalization::identity(), enc.clone(), dec.clone()).unwrap();
            generator_loss(&m, &critics, &batch, lambda, Terms::Both).unwrap().0.total
        };
        for (e, g) in g_enc.grads().iter().enumerate() {
            for (i, &a) in g.iter().enumerate() {
                check.coord(a, |d| eval(&perturbed(model.encoder(), e, i, d), model.decoder()));
            }
        }
        for (e, g) in g_dec.grads().iter().enumerate() {
            for (i, &a) in g.iter().enumerate() {
                check.coord(a, |d| eval(model.encoder(), &perturbed(model.decoder(), e, i, d)));
            }
        }
    }
    check
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Integral of `(F_K(z) - 1{y <= z})^2`, split at every jump of the integrand.
pub fn crps_quadrature(samples: &[f64], y: f64) -> f64 {
    let k = samples.len() as f64;
    let integrand = |z: f64| {
        let f = samples.iter().filter(|&&s| s <= z).count() as f64 / k;
        let step = if y <= z { 1.0 } else { 0.0 };
        (f - step).powi(2)
    };
    let mut knots: Vec<f64> = samples.iter().copied().chain([y]).collect();
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|w| {
            // Evaluate strictly inside each piece so the jump points never enter.
            let (a, b) = (w[0], w[1]);
            let mid = integrand(0.5 * (a + b));
            adaptive(|z| if z <= a || z >= b { mid } else { integrand(z) }, a, b, 1e-12)
        })
        .sum()
}

/// Largest gap between closed-form and quadrature CRPS over random small ensembles.
pub fn crps_sweep(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = rng.random_range(1..=16);
        let samples: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = rng.random_range(-4.0..4.0);
        worst = worst.max((crps_ensemble(&samples, y).unwrap() - crps_quadrature(&samples, y)).abs());
    }
    worst
}

/// Order statistic `s(i)` with 1-based `i`, from an independent sort.
pub fn brute_quantile(samples: &[f64], num: u64, den: u64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len() as u64;
    let scaled = num * k;
    if scaled.is_multiple_of(den) {
        let i = (scaled / den) as usize;
        s[i.max(1) - 1]
    } else {
        let lo = (scaled / den) as usize;
        if lo == 0 {
            s[0]
        } else {
            0.5 * (s[lo - 1] + s[lo])
        }
    }
}

pub fn brute_median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

#[derive(Debug, Default)]
pub struct QuantileSweep {
    pub cases: usize,
    pub mismatches: usize,
    pub integer: usize,
    pub fractional: usize,
}

/// Runs quantile and MMAE against the sort-based oracle; equality is exact.
pub fn quantile_sweep(seed: u64, cases: usize) -> QuantileSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = QuantileSweep::default();
    while out.cases < cases {
        let k = rng.random_range(1..=50usize);
        let samples: Vec<f64> = (0..k).map(|_| rng.random_range(-10.0..10.0)).collect();
        // Denominators dividing k exercise the integer branch.
        let den = if rng.random_bool(0.5) { k as u64 } else { rng.random_range(2..=97) };
        let num = rng.random_range(1..den.max(2));
        if num >= den {
            continue;
        }
        out.cases += 1;
        if (num * k as u64).is_multiple_of(den) {
            out.integer += 1;
        } else {
            out.fractional += 1;
        }
        let e = ForecastEnsemble::new(samples.clone()).unwrap();
        if quantile(&e, num as f64 / den as f64).unwrap() != brute_quantile(&samples, num, den) {
            out.mismatches += 1;
        }
        if point_mmae(&e) != brute_median(&samples) {
            out.mismatches += 1;
        }
    }
    out
}
