use metamimic::distributional::{critic_loss_and_grad, project, softmax, SupportSpec, ValueDistribution};
use metamimic::net::{backward, forward, LayerSpec, NetworkParams, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Verdict;

const TRIALS: usize = 100;
const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

fn loss(spec: &NetworkSpec, params: &NetworkParams, x: &Tensor, c: &[f64]) -> f64 {
    let (y, _) = forward(spec, params, x).unwrap();
    y.data().iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Worst relative error over input and parameter gradients of a random linear loss.
fn check_layer(input_shape: Vec<usize>, layer: LayerSpec, rng: &mut ChaCha8Rng) -> f64 {
    let spec = NetworkSpec::new(input_shape.clone(), vec![layer]);
    let mut params = NetworkParams::init(&spec, rng).unwrap();
    for t in params.layers.iter_mut().flat_map(|l| l.tensors.iter_mut()) {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
    }
    let n: usize = input_shape.iter().product();
    let x = Tensor::new(input_shape, (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let (y, cache) = forward(&spec, &params, &x).unwrap();
    let c: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (grads, dx) = backward(&spec, &params, &cache, &Tensor::vector(c.clone())).unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let (mut hi, mut lo) = (x.clone(), x.clone());
        hi.data_mut()[i] += H;
        lo.data_mut()[i] -= H;
        let fd = (loss(&spec, &params, &hi, &c) - loss(&spec, &params, &lo, &c)) / (2.0 * H);
        worst = worst.max(rel_err(fd, dx.data()[i]));
    }
    for (ti, g) in grads.layers[0].tensors.iter().enumerate() {
        for i in 0..g.len() {
            let (mut hi, mut lo) = (params.clone(), params.clone());
            hi.layers[0].tensors[ti].data_mut()[i] += H;
            lo.layers[0].tensors[ti].data_mut()[i] -= H;
            let fd = (loss(&spec, &hi, &x, &c) - loss(&spec, &lo, &x, &c)) / (2.0 * H);
            worst = worst.max(rel_err(fd, g.data()[i]));
        }
    }
    worst
}

fn gradient_checks() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layers: [(&str, Vec<usize>, LayerSpec); 7] = [
        ("dense", vec![7], LayerSpec::dense(7, 5)),
        ("conv", vec![3, 6, 6], LayerSpec::conv(3, 4, 3, 1)),
        ("conv-stride2", vec![2, 7, 7], LayerSpec::conv(2, 3, 3, 2)),
        ("instance-norm", vec![3, 4, 4], LayerSpec::InstanceNorm { channels: 3 }),
        ("layer-norm", vec![9], LayerSpec::LayerNorm { width: 9 }),
        ("elu", vec![11], LayerSpec::Elu),
        ("tanh", vec![11], LayerSpec::Tanh),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, shape, layer) in layers {
        let worst = (0..TRIALS).map(|_| check_layer(shape.clone(), layer, &mut rng)).fold(0.0, f64::max);
        pass &= worst < 1e-4;
        parts.push(format!("{name} {worst:.1e}"));
    }
    (pass, format!("max rel err over {TRIALS} trials: {}", parts.join(", ")))
}

fn projection_checks() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mass_err, mut moment_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..1_000 {
        let spec = SupportSpec::new(rng.random_range(-50.0..0.0), rng.random_range(1.0..200.0), rng.random_range(2..120)).unwrap();
        let k = rng.random_range(1..60);
        let values: Vec<f64> = (0..k).map(|_| rng.random_range(spec.v_min()..=spec.v_max())).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let out = project(&spec, &values, &probs).unwrap();
        let mass: f64 = out.probs().iter().sum();
        let mean_in: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let mean_out: f64 = out.probs().iter().enumerate().map(|(i, p)| p * spec.atom(i)).sum();
        mass_err = mass_err.max((mass - 1.0).abs());
        moment_err = moment_err.max((mean_in - mean_out).abs());
    }
    (mass_err <= 1e-9 && moment_err <= 1e-9, format!("projection mass err {mass_err:.1e}, first-moment err {moment_err:.1e}"))
}

fn critic_loss_checks() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let target = ValueDistribution::new(raw.iter().map(|p| p / total).collect()).unwrap();
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, grad) = critic_loss_and_grad(&target, &logits).unwrap();
        let ce = |l: &[f64]| -> f64 { softmax(l).iter().zip(target.probs()).map(|(p, t)| -t * p.ln()).sum() };
        for i in 0..n {
            let (mut hi, mut lo) = (logits.clone(), logits.clone());
            hi[i] += H;
            lo[i] -= H;
            let fd = (ce(&hi) - ce(&lo)) / (2.0 * H);
            worst = worst.max((fd - grad[i]).abs());
        }
    }
    (worst < 1e-6, format!("critic-loss grad max abs err {worst:.1e}"))
}

pub fn run() -> Verdict {
    let started = std::time::Instant::now();
    let (g_ok, g) = gradient_checks();
    let (p_ok, p) = projection_checks();
    let (c_ok, c) = critic_loss_checks();
    let secs = started.elapsed().as_secs_f64();
    Verdict::new(g_ok && p_ok && c_ok && secs < 60.0, format!("{g}; {p}; {c}; {secs:.1}s (limit 60s)"))
}
