//! Starts a replay server on a local port, feeds it from a client the way an actor does,
//! samples a prioritized batch, writes priorities back and prints the server statistics
//! (the same report as `metamimic inspect-replay`).
//!
//! cargo run --example replay_server

use std::sync::Arc;

use metamimic::cli::format_stats;
use metamimic::env::{BlockWorld, EnvConfig};
use metamimic::replay::{ReplayConfig, ReplayService, TaskTransition};
use metamimic::transport::{serve, BufferId, Hub, ParamStore, ReplayClient, SampleMode, TcpClient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ReplayConfig { imitation_capacity: 1_000, task_capacity: 1_000, min_fill: 32, seed: 0 };
    let hub = Arc::new(Hub::new(Arc::new(ReplayService::new(&config)?), Arc::new(ParamStore::new())));
    let server = serve(hub, "127.0.0.1:0")?;
    println!("replay server on {}", server.local_addr());

    let mut client = TcpClient::connect(&server.local_addr().to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut world = BlockWorld::new(EnvConfig::default())?;
    let (_, mut obs) = world.reset(7);
    for _ in 0..20 {
        let batch: Vec<TaskTransition> = (0..5)
            .map(|_| {
                let action = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let out = world.step(&action);
                let t = TaskTransition { obs: Arc::new(obs.clone()), action, next_obs: Arc::new(out.observation.clone()), reward_task: out.reward, discount: 0.99 };
                obs = out.observation;
                t
            })
            .collect();
        client.insert_task(batch, false)?;
    }

    match client.sample(BufferId::Task, SampleMode::Uniform, 8, 1)? {
        Some((ids, batch)) => println!("sampled {} task items, ids {ids:?}", batch.len()),
        None => println!("task buffer below min_fill"),
    }
    print!("{}", format_stats(&client.stats()?));
    server.shutdown();
    Ok(())
}
