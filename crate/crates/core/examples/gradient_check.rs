//! Builds a small conv net, checks its backward pass against central differences and
//! then fits it to a toy regression target with Adam.
//!
//! cargo run --example gradient_check

use metamimic::net::{adam_step, backward, forward, AdamState, LayerSpec, NetworkParams, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = NetworkSpec::new(
        vec![1, 6, 6],
        vec![LayerSpec::conv(1, 4, 3, 1), LayerSpec::InstanceNorm { channels: 4 }, LayerSpec::Elu, LayerSpec::dense(64, 8), LayerSpec::Tanh, LayerSpec::dense(8, 1)],
    );
    let mut params = NetworkParams::init(&spec, &mut rng)?;
    println!("{} parameters", spec.param_count());

    let image = |rng: &mut ChaCha8Rng| Tensor::new(vec![1, 6, 6], (0..36).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    // Target: mean brightness of the top-left quadrant.
    let target = |x: &Tensor| (0..3).flat_map(|r| (0..3).map(move |c| r * 6 + c)).map(|i| x.data()[i]).sum::<f64>() / 9.0;

    let x = image(&mut rng);
    let (_, cache) = forward(&spec, &params, &x)?;
    let (grads, _) = backward(&spec, &params, &cache, &Tensor::vector(vec![1.0]))?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (li, layer) in grads.layers.iter().enumerate() {
        for (ti, g) in layer.tensors.iter().enumerate() {
            for i in (0..g.len()).step_by(7) {
                let mut hi = params.clone();
                let mut lo = params.clone();
                hi.layers[li].tensors[ti].data_mut()[i] += h;
                lo.layers[li].tensors[ti].data_mut()[i] -= h;
                let f = |p: &NetworkParams| forward(&spec, p, &x).unwrap().0.data()[0];
                let fd = (f(&hi) - f(&lo)) / (2.0 * h);
                worst = worst.max((fd - g.data()[i]).abs() / fd.abs().max(g.data()[i].abs()).max(1e-7));
            }
        }
    }
    println!("worst relative gradient error {worst:.2e}");

    let mut adam = AdamState::new(&params, 3e-3);
    for step in 0..=2000 {
        let mut total = params.zeros_like();
        let mut loss = 0.0;
        for _ in 0..16 {
            let x = image(&mut rng);
            let (y, cache) = forward(&spec, &params, &x)?;
            let err = y.data()[0] - target(&x);
            loss += err * err / 16.0;
            let (g, _) = backward(&spec, &params, &cache, &Tensor::vector(vec![2.0 * err / 16.0]))?;
            total.accumulate(&g);
        }
        adam_step(&mut params, &total, &mut adam)?;
        if step % 500 == 0 {
            println!("step {step:>4}  mse {loss:.5}");
        }
    }
    Ok(())
}
