use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

fn params_for(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    NetworkParams::init(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn dense_identity_passes_input_through() {
    let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 2)]);
    let mut params = NetworkParams::zeros_like_layers(&spec.layers);
    params.layers[0].tensors[0] = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let y = predict(&spec, &params, &Tensor::vector(vec![3.0, -1.0])).unwrap();
    assert_eq!(y.data(), &[3.0, -1.0]);
}

#[test]
fn elu_saturates_at_minus_one() {
    let spec = NetworkSpec::new(vec![1], vec![LayerSpec::Elu]);
    let params = NetworkParams::zeros_like_layers(&spec.layers);
    let y = predict(&spec, &params, &Tensor::vector(vec![-1e9])).unwrap();
    assert!((y.data()[0] + 1.0).abs() < 1e-9);
}

#[test]
fn conv_with_ones_kernel_sums_the_window() {
    let spec = NetworkSpec::new(vec![1, 3, 3], vec![LayerSpec::conv(1, 1, 3, 1)]);
    let mut params = NetworkParams::zeros_like_layers(&spec.layers);
    params.layers[0].tensors[0].data_mut().fill(1.0);
    let y = predict(&spec, &params, &Tensor::filled(&[1, 3, 3], 1.0)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1]);
    assert_eq!(y.data(), &[9.0]);
}

#[test]
fn strided_conv_output_shape() {
    let spec = NetworkSpec::new(vec![2, 9, 9], vec![LayerSpec::conv(2, 3, 3, 2)]);
    assert_eq!(spec.output_shape().unwrap(), vec![3, 4, 4]);
}

#[test]
fn shape_mismatch_names_the_layer() {
    let spec = NetworkSpec::new(vec![4], vec![LayerSpec::dense(4, 3), LayerSpec::Elu, LayerSpec::dense(2, 1)]);
    match spec.shapes() {
        Err(NetError::ShapeMismatch { layer, .. }) => assert_eq!(layer, 2),
        other => panic!("expected shape mismatch, got {other:?}"),
    }
    let ok = NetworkSpec::new(vec![4], vec![LayerSpec::dense(4, 3)]);
    let params = params_for(&ok, 1);
    match forward(&ok, &params, &Tensor::vector(vec![1.0; 5])) {
        Err(NetError::ShapeMismatch { layer: 0, .. }) => {}
        other => panic!("expected input mismatch, got {other:?}"),
    }
}

#[test]
fn dense_weight_gradient_is_the_input() {
    let spec = NetworkSpec::new(vec![1], vec![LayerSpec::dense(1, 1)]);
    let mut params = NetworkParams::zeros_like_layers(&spec.layers);
    params.layers[0].tensors[0].data_mut()[0] = 0.7;
    let (_, cache) = forward(&spec, &params, &Tensor::vector(vec![2.5])).unwrap();
    let (grads, dx) = backward(&spec, &params, &cache, &Tensor::vector(vec![1.0])).unwrap();
    assert_eq!(grads.layers[0].tensors[0].data(), &[2.5]);
    assert_eq!(grads.layers[0].tensors[1].data(), &[1.0]);
    assert_eq!(dx.data(), &[0.7]);
}

#[test]
fn layer_norm_sum_gradient_vanishes_on_constant_input() {
    let spec = NetworkSpec::new(vec![5], vec![LayerSpec::LayerNorm { width: 5 }]);
    let params = params_for(&spec, 0);
    let (y, cache) = forward(&spec, &params, &Tensor::filled(&[5], 3.0)).unwrap();
    assert!(y.data().iter().all(|v| v.abs() < 1e-12));
    let (_, dx) = backward(&spec, &params, &cache, &Tensor::filled(&[5], 1.0)).unwrap();
    assert!(dx.data().iter().all(|v| v.abs() < 1e-12), "{:?}", dx.data());
}

#[test]
fn backward_rejects_foreign_cache() {
    let a = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 3), LayerSpec::Elu]);
    let b = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 3)]);
    let pa = params_for(&a, 2);
    let pb = params_for(&b, 2);
    let (_, cache) = forward(&a, &pa, &Tensor::vector(vec![0.1, 0.2, 0.3])).unwrap();
    assert!(matches!(
        backward(&b, &pb, &cache, &Tensor::vector(vec![1.0; 3])),
        Err(NetError::MissingCache(_))
    ));
}

fn linear_loss(y: &Tensor, coeffs: &[f64]) -> f64 {
    y.data().iter().zip(coeffs).map(|(a, b)| a * b).sum()
}

#[test]
fn two_layer_network_matches_finite_differences() {
    use rand::Rng;
    let spec = NetworkSpec::new(
        vec![4],
        vec![LayerSpec::dense(4, 6), LayerSpec::LayerNorm { width: 6 }, LayerSpec::Elu, LayerSpec::dense(6, 3), LayerSpec::Tanh],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = params_for(&spec, 5);
    let x = Tensor::vector((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
    let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, cache) = forward(&spec, &params, &x).unwrap();
    let (grads, _) = backward(&spec, &params, &cache, &Tensor::vector(c.clone())).unwrap();

    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    let analytic: Vec<f64> = grads.iter_values().copied().collect();
    for (k, &a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        *plus.iter_values_mut().nth(k).unwrap() += h;
        let mut minus = params.clone();
        *minus.iter_values_mut().nth(k).unwrap() -= h;
        let fp = linear_loss(&predict(&spec, &plus, &x).unwrap(), &c);
        let fm = linear_loss(&predict(&spec, &minus, &x).unwrap(), &c);
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    assert!(max_rel < 1e-4, "max relative error {max_rel}");
}

#[test]
fn residual_skip_adds_identity() {
    let mut spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 2)]);
    spec.residual = true;
    let params = NetworkParams::zeros_like_layers(&spec.layers);
    let (y, cache) = forward(&spec, &params, &Tensor::vector(vec![0.5, -2.0])).unwrap();
    assert_eq!(y.data(), &[0.5, -2.0]);
    let (_, dx) = backward(&spec, &params, &cache, &Tensor::vector(vec![1.0, 3.0])).unwrap();
    assert_eq!(dx.data(), &[1.0, 3.0]);
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 2)]);
    let mut params = params_for(&spec, 3);
    let before = params.clone();
    let mut state = AdamState::new(&params, 0.1);
    adam_step(&mut params, &before.zeros_like(), &mut state).unwrap();
    assert_eq!(params, before);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let spec = NetworkSpec::new(vec![1], vec![LayerSpec::dense(1, 1)]);
    let mut params = NetworkParams::zeros_like_layers(&spec.layers);
    let mut grads = params.zeros_like();
    grads.layers[0].tensors[0].data_mut()[0] = 1.0;
    let mut state = AdamState::with_betas(&params, 0.1, 0.9, 0.999, 1e-8);
    adam_step(&mut params, &grads, &mut state).unwrap();
    // m_hat = v_hat = 1, so the step is lr / (1 + eps)
    let w = params.layers[0].tensors[0].data()[0];
    assert!((w + 0.1 / (1.0 + 1e-8)).abs() < 1e-15, "{w}");
    assert_eq!(params.layers[0].tensors[1].data()[0], 0.0);
}

#[test]
fn adam_is_sign_symmetric() {
    let spec = NetworkSpec::new(vec![1], vec![LayerSpec::dense(1, 2)]);
    let mut params = NetworkParams::zeros_like_layers(&spec.layers);
    params.layers[0].tensors[0].data_mut().copy_from_slice(&[0.3, -0.3]);
    let mut grads = params.zeros_like();
    grads.layers[0].tensors[0].data_mut().copy_from_slice(&[0.2, -0.2]);
    let mut state = AdamState::new(&params, 0.01);
    adam_step(&mut params, &grads, &mut state).unwrap();
    adam_step(&mut params, &grads, &mut state).unwrap();
    let w = params.layers[0].tensors[0].data();
    assert_eq!(w[0], -w[1]);
}

#[test]
fn adam_rejects_non_finite_gradient_without_mutating() {
    let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 2), LayerSpec::Elu, LayerSpec::dense(2, 1)]);
    let mut params = params_for(&spec, 9);
    let before = params.clone();
    let mut grads = params.zeros_like();
    grads.layers[2].tensors[1].data_mut()[0] = f64::NAN;
    let mut state = AdamState::new(&params, 0.1);
    assert_eq!(adam_step(&mut params, &grads, &mut state), Err(NetError::NonFiniteGradient { layer: 2 }));
    assert_eq!(params, before);
    assert_eq!(state.step, 0);
}

#[test]
fn empty_network_serializes_to_header_only() {
    let bytes = serialize_params(&NetworkParams::default());
    assert_eq!(bytes, [b'M', b'M', b'N', b'P', 1, 0, 0, 0, 0, 0, 0, 0]);
    assert_eq!(deserialize_params(&bytes).unwrap(), NetworkParams::default());
}

#[test]
fn three_parameter_network_matches_fixture() {
    let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 1)]);
    let mut params = NetworkParams::zeros_like_layers(&spec.layers);
    params.layers[0].tensors[0].data_mut().copy_from_slice(&[1.0, -2.0]);
    params.layers[0].tensors[1].data_mut()[0] = 0.5;
    #[rustfmt::skip]
    let fixture: Vec<u8> = vec![
        b'M', b'M', b'N', b'P',
        1, 0, 0, 0,                                   // version
        1, 0, 0, 0,                                   // one layer
        1,                                            // dense
        2, 0, 0, 0,   1, 0, 0, 0,                     // in = 2, out = 1
        0, 0, 0, 0, 0, 0, 0xf0, 0x3f,                 // w[0] = 1.0
        0, 0, 0, 0, 0, 0, 0x00, 0xc0,                 // w[1] = -2.0
        0, 0, 0, 0, 0, 0, 0xe0, 0x3f,                 // b = 0.5
    ];
    assert_eq!(serialize_params(&params), fixture);
    assert_eq!(deserialize_params(&fixture).unwrap(), params);
}

#[test]
fn truncated_payload_reports_offset() {
    let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 2), LayerSpec::Tanh]);
    let bytes = serialize_params(&params_for(&spec, 4));
    let cut = &bytes[..bytes.len() - 3];
    match deserialize_params(cut) {
        Err(NetError::Decode { offset, .. }) => assert!(offset > 12 && offset < bytes.len()),
        other => panic!("expected decode error, got {other:?}"),
    }
    let mut bad_tag = bytes.clone();
    bad_tag[12] = 99;
    assert!(matches!(deserialize_params(&bad_tag), Err(NetError::Decode { offset: 12, .. })));
}

#[test]
fn tanh_head_stays_inside_open_interval() {
    let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 2), LayerSpec::Tanh]);
    let mut params = params_for(&spec, 8);
    params.layers[0].tensors[0].scale(100.0);
    let y = predict(&spec, &params, &Tensor::vector(vec![0.4, -0.2])).unwrap();
    assert!(y.data().iter().all(|v| v.abs() < 1.0));
}

/// Direct-sum convolution used as the oracle for both the dense and zero-skipping paths.
fn naive_conv(x: &[f64], w: &[f64], b: &[f64], (c_in, h, wd): (usize, usize, usize), c_out: usize, k: usize, s: usize) -> Vec<f64> {
    let (oh, ow) = ((h - k) / s + 1, (wd - k) / s + 1);
    let mut y = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[o];
                for c in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += w[((o * c_in + c) * k + ky) * k + kx] * x[(c * h + oy * s + ky) * wd + ox * s + kx];
                        }
                    }
                }
                y[o * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    y
}

#[test]
fn sparse_and_dense_conv_inputs_match_direct_sum() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for stride in [1, 2] {
        for density in [0.02, 0.6] {
            let spec = NetworkSpec::new(vec![3, 9, 9], vec![LayerSpec::conv(3, 4, 3, stride)]);
            let params = params_for(&spec, 5 + stride as u64);
            let mut x = vec![0.0; 3 * 81];
            for v in x.iter_mut() {
                if rng.random::<f64>() < density {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            let (w, b) = (params.layers[0].tensors[0].data(), params.layers[0].tensors[1].data());
            let input = Tensor::new(vec![3, 9, 9], x.clone()).unwrap();
            let (y, cache) = forward(&spec, &params, &input).unwrap();
            let want = naive_conv(&x, w, b, (3, 9, 9), 4, 3, stride);
            for (a, e) in y.data().iter().zip(&want) {
                assert!((a - e).abs() < 1e-12);
            }
            // Loss = sum(g * y): dW is the directional derivative of the oracle along each weight.
            let g: Vec<f64> = (0..y.len()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
            let grads = backward_params(&spec, &params, &cache, &Tensor::new(y.shape().to_vec(), g.clone()).unwrap()).unwrap();
            for (i, dw) in grads.layers[0].tensors[0].data().iter().enumerate() {
                let mut unit = vec![0.0; w.len()];
                unit[i] = 1.0;
                let basis = naive_conv(&x, &unit, &[0.0; 4], (3, 9, 9), 4, 3, stride);
                let want: f64 = basis.iter().zip(&g).map(|(a, b)| a * b).sum();
                assert!((dw - want).abs() < 1e-12, "stride {stride} density {density} weight {i}");
            }
        }
    }
}
