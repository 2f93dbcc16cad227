//! Runs the scripted expert on one episode and draws the scene as ASCII every few steps.
//!
//! cargo run --example blockworld_expert -- [seed]

use metamimic::demos::{plan, scripted_expert, ExpertStyle, StyleTag};
use metamimic::env::{BlockWorld, EnvConfig, EnvState};

fn draw(config: &EnvConfig, s: &EnvState) {
    let g = config.grid as f64;
    let cell = |p: [f64; 2]| ((p[0] * g).floor() as i64, (p[1] * g).floor() as i64);
    for row in (0..config.grid as i64).rev() {
        let line: String = (0..config.grid as i64)
            .map(|col| match (col, row) {
                p if p == cell(s.gripper) => if s.aperture > 0.5 { 'U' } else { 'V' },
                p if p == cell(s.block_a) => 'A',
                p if p == cell(s.block_b) => 'B',
                _ => '.',
            })
            .collect();
        println!("  {line}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let config = EnvConfig::default();
    let style = ExpertStyle::base(StyleTag::Train);
    let mut world = BlockWorld::new(config.clone())?;
    world.reset(seed);
    let mut task_return = 0.0;
    for t in 0..config.horizon {
        let s = *world.state();
        if t % 15 == 0 {
            println!("step {t}  stage {:?}  plan {:?}", world.stage(), plan(&config, &style, &s));
            draw(&config, &s);
        }
        let out = world.step(&scripted_expert(&config, &style, &s));
        task_return += out.reward;
        if out.done {
            println!("step {}  stage {:?}", t + 1, out.stage);
            draw(&config, &out.state);
            break;
        }
    }
    println!("task return {task_return:.2}, stacked: {}", config.is_stacked(world.state()));
    Ok(())
}
