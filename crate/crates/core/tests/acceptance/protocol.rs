use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use metamimic::env::Observation;
use metamimic::net::{LayerSpec, NetworkParams, NetworkSpec};
use metamimic::replay::{ImitationTransition, ReplayConfig, ReplayService, ReplayStats, TaskTransition};
use metamimic::transport::{decode, encode, serve, BufferId, Hub, InProcessClient, Message, NetId, Packed, ParamStore, ReplayClient, SampleMode, TcpClient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Verdict;

const WORKLOAD_OPS: usize = 10_000;
const FUZZ_FRAMES: usize = 1_000_000;

fn obs(rng: &mut ChaCha8Rng) -> Arc<Observation> {
    let grid = 3;
    Arc::new(Observation {
        grid,
        image: (0..3 * grid * grid).map(|_| rng.random_range(0.0..1.0)).collect(),
        body: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
    })
}

fn imitation(rng: &mut ChaCha8Rng) -> ImitationTransition {
    ImitationTransition {
        obs: obs(rng),
        action: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        next_obs: obs(rng),
        reward_imitate: rng.random_range(0.0..17.0),
        reward_task: rng.random_range(0.0..3.0),
        discount: if rng.random_bool(0.1) { 0.0 } else { 0.95 },
        next_goal: obs(rng),
        goal: obs(rng),
        demo_id: rng.random_range(0..100),
        step_index: rng.random_range(0..200),
    }
}

fn task(rng: &mut ChaCha8Rng) -> TaskTransition {
    TaskTransition {
        obs: obs(rng),
        action: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        next_obs: obs(rng),
        reward_task: rng.random_range(0.0..3.0),
        discount: 0.95,
    }
}

enum Op {
    Send(Message),
    Publish(NetId, NetworkParams),
}

fn script(seed: u64) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 2)]);
    let mut inserted = 0u64;
    (0..WORKLOAD_OPS as u64)
        .map(|i| match rng.random_range(0..100) {
            0..=34 => {
                let n = rng.random_range(1..4);
                inserted += n;
                Op::Send(Message::InsertTransitions { protected: false, transitions: Packed::Imitation((0..n).map(|_| imitation(&mut rng)).collect()) })
            }
            35..=54 => {
                let n = rng.random_range(1..4);
                Op::Send(Message::InsertTransitions { protected: rng.random_bool(0.05), transitions: Packed::Task((0..n).map(|_| task(&mut rng)).collect()) })
            }
            55..=74 => {
                let buffer = if rng.random_bool(0.6) { BufferId::Imitation } else { BufferId::Task };
                let mode = if rng.random_bool(0.7) { SampleMode::Prioritized } else { SampleMode::Uniform };
                Op::Send(Message::SampleRequest { buffer, mode, batch: rng.random_range(1..16), request_id: i })
            }
            75..=92 => {
                let k = rng.random_range(1..8);
                let ids = (0..k).map(|_| rng.random_range(inserted.saturating_sub(400)..inserted.max(1))).collect();
                let priorities = (0..k).map(|_| rng.random_range(1e-3..20.0)).collect();
                Op::Send(Message::UpdatePriorities { ids, priorities })
            }
            93..=95 => Op::Publish(NetId::ImitationPolicy, NetworkParams::init(&spec, &mut rng).unwrap()),
            96..=98 => Op::Send(Message::ParamsRequest { net: NetId::ImitationPolicy, known_version: rng.random_range(0..4) }),
            _ => Op::Send(Message::StatsRequest),
        })
        .collect()
}

fn hub() -> Arc<Hub> {
    let config = ReplayConfig { imitation_capacity: 500, task_capacity: 300, min_fill: 20, seed: 99 };
    Arc::new(Hub::new(Arc::new(ReplayService::new(&config).unwrap()), Arc::new(ParamStore::new())))
}

/// Runs the script and returns every reply plus the final replay stats.
fn drive(ops: &[Op], hub: &Hub, client: &mut dyn ReplayClient) -> (Vec<Option<Message>>, ReplayStats) {
    let mut replies = Vec::new();
    for op in ops {
        match op {
            Op::Send(m) => replies.push(client.request(m.clone()).unwrap()),
            Op::Publish(net, p) => {
                // Fire-and-forget frames must land before the publication.
                client.stats().unwrap();
                hub.params.publish(*net, p);
            }
        }
    }
    let stats = client.stats().unwrap();
    (replies, stats)
}

fn equivalence() -> (bool, String) {
    let ops = script(21);
    let local = hub();
    let (local_replies, local_stats) = drive(&ops, &local, &mut InProcessClient::new(Arc::clone(&local)));
    let remote = hub();
    let server = serve(Arc::clone(&remote), "127.0.0.1:0").unwrap();
    let mut client = TcpClient::connect(&server.local_addr().to_string()).unwrap();
    let (remote_replies, remote_stats) = drive(&ops, &remote, &mut client);
    drop(client);
    server.shutdown();
    let same_replies = local_replies == remote_replies;
    let same_state = local.replay.snapshot() == remote.replay.snapshot() && local_stats == remote_stats;
    let samples = local_replies.iter().filter(|r| matches!(r, Some(Message::SampleResponse { .. }))).count();
    (
        same_replies && same_state,
        format!(
            "{WORKLOAD_OPS} ops ({samples} sample replies, {} imitation / {} task items at end): replies equal {same_replies}, buffer state equal {same_state}",
            local_stats.imitation_len, local_stats.task_len
        ),
    )
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..9) {
        0 => Message::InsertTransitions { protected: false, transitions: Packed::Imitation(vec![imitation(rng)]) },
        1 => Message::InsertTransitions { protected: rng.random_bool(0.5), transitions: Packed::Task((0..rng.random_range(0..2)).map(|_| task(rng)).collect()) },
        2 => Message::SampleRequest { buffer: BufferId::Task, mode: SampleMode::Uniform, batch: rng.random(), request_id: rng.random() },
        3 => Message::SampleResponse { request_id: rng.random(), ids: vec![rng.random()], transitions: Packed::Task(vec![task(rng)]) },
        4 => Message::NotReady { request_id: rng.random() },
        5 => Message::UpdatePriorities { ids: vec![rng.random(), rng.random()], priorities: vec![rng.random(), rng.random()] },
        6 => Message::ParamsRequest { net: NetId::TaskPolicy, known_version: rng.random() },
        7 => Message::ParamsResponse { net: NetId::ImitationPolicy, version: rng.random(), params: rng.random_bool(0.5).then(|| vec![rng.random(); rng.random_range(0..8)]) },
        _ => Message::StatsRequest,
    }
}

fn frame_noise(rng: &mut ChaCha8Rng) -> Vec<u8> {
    match rng.random_range(0..4) {
        0 => (0..rng.random_range(0..48)).map(|_| rng.random()).collect(),
        1 => {
            // Consistent header over a random payload.
            let payload: Vec<u8> = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
            let mut f = (payload.len() as u32).to_le_bytes().to_vec();
            f.push(rng.random_range(0..12));
            f.extend(payload);
            f
        }
        _ => {
            let mut f = encode(&random_message(rng));
            match rng.random_range(0..4) {
                0 => {
                    let i = rng.random_range(0..f.len());
                    f[i] ^= 1 << rng.random_range(0..8);
                }
                1 => f.truncate(rng.random_range(0..f.len())),
                2 => f.extend((0..rng.random_range(1..4)).map(|_| rng.random::<u8>())),
                _ => {
                    let i = rng.random_range(0..f.len());
                    f[i] = rng.random();
                }
            }
            f
        }
    }
}

fn fuzz() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut accepted, mut panics, mut inconsistent) = (0usize, 0usize, 0usize);
    for _ in 0..FUZZ_FRAMES {
        let bytes = frame_noise(&mut rng);
        match catch_unwind(AssertUnwindSafe(|| decode(&bytes))) {
            Err(_) => panics += 1,
            Ok(Err(_)) => {}
            Ok(Ok(m)) => {
                accepted += 1;
                let len_ok = bytes.len() >= 5 && u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize == bytes.len() - 5;
                if !len_ok || bytes[4] != m.tag() || encode(&m) != bytes {
                    inconsistent += 1;
                }
            }
        }
    }
    (
        panics == 0 && inconsistent == 0,
        format!("{FUZZ_FRAMES} fuzzed frames: {panics} panics, {accepted} decoded, {inconsistent} decoded from inconsistent frames"),
    )
}

pub fn run() -> Verdict {
    let (eq_ok, eq) = equivalence();
    // Silence the default hook so an unexpected decoder panic is counted, not printed a million times.
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let (fz_ok, fz) = fuzz();
    std::panic::set_hook(hook);
    Verdict::new(eq_ok && fz_ok, format!("{eq}; {fz}"))
}
