//! Shows an n-step categorical target: shift and scale the atoms of a next-state value
//! distribution, project back onto the fixed support and take a cross-entropy step.
//!
//! cargo run --example categorical_projection

use metamimic::distributional::{atom_values, critic_loss_and_grad, expected_value, n_step_aggregate, project, softmax, SupportSpec, ValueDistribution};

fn bars(spec: &SupportSpec, d: &ValueDistribution) {
    for (z, p) in atom_values(spec).iter().zip(d.probs()) {
        if *p > 1e-4 {
            println!("  {z:>6.1} {:<40} {p:.3}", "#".repeat((p * 40.0).round() as usize));
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SupportSpec::new(0.0, 100.0, 11)?;
    let next = ValueDistribution::new(vec![0.0, 0.0, 0.1, 0.2, 0.4, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0])?;
    println!("next-state distribution, mean {:.2}", expected_value(&spec, &next));
    bars(&spec, &next);

    let (reward, discount) = n_step_aggregate(&[1.0, 0.0, 3.0, 0.5, 2.0], 0.99)?;
    let shifted: Vec<f64> = atom_values(&spec).iter().map(|z| reward + discount * z).collect();
    let target = project(&spec, &shifted, next.probs())?;
    println!("\n5-step target r = {reward:.3}, gamma^N = {discount:.4}, mean {:.2}", expected_value(&spec, &target));
    bars(&spec, &target);
    println!("  mean check: r + gamma^N * E[Z] = {:.2}", reward + discount * expected_value(&spec, &next));

    let mut logits = vec![0.0; spec.n_bins()];
    for step in 0..=300 {
        let (loss, grad) = critic_loss_and_grad(&target, &logits)?;
        if step % 100 == 0 {
            let mean: f64 = atom_values(&spec).iter().zip(softmax(&logits)).map(|(z, p)| z * p).sum();
            println!("step {step:>3}  cross-entropy {loss:.4}  predicted mean {mean:.2}");
        }
        logits.iter_mut().zip(&grad).for_each(|(l, g)| *l -= 0.5 * g);
    }
    Ok(())
}
