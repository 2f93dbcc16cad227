use super::{EnvConfig, EnvState, IMAGE_CHANNELS};

/// Splats gripper, block A and block B into their own channels with a bilinear 2x2
/// footprint. A cell center maps to a single full-intensity cell.
pub fn render(config: &EnvConfig, state: &EnvState) -> Vec<f64> {
    let g = config.grid;
    let mut image = vec![0.0; IMAGE_CHANNELS * g * g];
    for (channel, pos) in [state.gripper, state.block_a, state.block_b].into_iter().enumerate() {
        splat(&mut image[channel * g * g..(channel + 1) * g * g], g, pos);
    }
    image
}

fn splat(plane: &mut [f64], g: usize, pos: [f64; 2]) {
    let u = pos[0] * g as f64 - 0.5;
    let v = pos[1] * g as f64 - 0.5;
    let (c0, r0) = (u.floor(), v.floor());
    let (fx, fy) = (u - c0, v - r0);
    let taps = [
        (r0, c0, (1.0 - fy) * (1.0 - fx)),
        (r0, c0 + 1.0, (1.0 - fy) * fx),
        (r0 + 1.0, c0, fy * (1.0 - fx)),
        (r0 + 1.0, c0 + 1.0, fy * fx),
    ];
    for (r, c, w) in taps {
        if w > 0.0 && r >= 0.0 && c >= 0.0 && (r as usize) < g && (c as usize) < g {
            plane[r as usize * g + c as usize] += w;
        }
    }
}
