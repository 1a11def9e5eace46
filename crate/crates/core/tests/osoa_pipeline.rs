use osoa::adapt::{apply_dynamics, AdaptationSchedule, OptimizerConfig, OptimizerState};
use osoa::container::{read_container, write_container, CoderKind};
use osoa::models::{ContextModel, ContextOrder, Model, ToyVae};
use osoa::osoa::{
    decode_chunk, osoa_decode, osoa_encode, osoa_encode_observed, static_encode, Event, OsoaConfig, OsoaError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn order1(alphabet: usize) -> Model {
    Model::Context(ContextModel::uniform(ContextOrder::One, alphabet).unwrap())
}

fn random_vae(alphabet: usize, latent: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = latent + 2 * latent * alphabet;
    Model::Vae(ToyVae::from_params(alphabet, latent, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
}

fn skewed(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| if rng.gen_bool(0.7) { (i / 3) % 4 } else { rng.gen_range(0..8) }).collect()
}

fn trace(config: &OsoaConfig, batches: usize) -> Vec<Event> {
    let data = skewed(batches * config.batch_size, 1);
    let mut events = Vec::new();
    osoa_encode_observed(&data, &order1(8), config, &mut |e| events.push(e.clone())).unwrap();
    events
}

#[test]
fn fifo_trace_codes_then_adapts_and_skips_final_update() {
    let config = OsoaConfig {
        coder: CoderKind::Ac,
        batch_size: 10,
        ..OsoaConfig::default()
    };
    use Event::*;
    assert_eq!(
        trace(&config, 3),
        [
            Encode { batch: 1 },
            Adapt { batch: 1 },
            Encode { batch: 2 },
            Adapt { batch: 2 },
            Encode { batch: 3 }
        ]
    );
}

#[test]
fn filo_trace_flushes_each_chunk_in_reverse() {
    let config = OsoaConfig {
        batch_size: 10,
        chunk_size: 3,
        ..OsoaConfig::default()
    };
    use Event::*;
    assert_eq!(
        trace(&config, 6),
        [
            Cache { batch: 1 },
            Adapt { batch: 1 },
            Cache { batch: 2 },
            Adapt { batch: 2 },
            Cache { batch: 3 },
            Flush {
                chunk: 0,
                order: vec![3, 2, 1]
            },
            Encode { batch: 3 },
            Encode { batch: 2 },
            Encode { batch: 1 },
            Adapt { batch: 3 },
            Cache { batch: 4 },
            Adapt { batch: 4 },
            Cache { batch: 5 },
            Adapt { batch: 5 },
            Cache { batch: 6 },
            Flush {
                chunk: 1,
                order: vec![6, 5, 4]
            },
            Encode { batch: 6 },
            Encode { batch: 5 },
            Encode { batch: 4 },
        ]
    );
}

#[test]
fn t_batches_adapt_t_minus_one_times() {
    for coder in [CoderKind::Ac, CoderKind::Rans] {
        for t in [1, 2, 7] {
            let config = OsoaConfig {
                coder,
                batch_size: 5,
                chunk_size: 2,
                ..OsoaConfig::default()
            };
            let adapts = trace(&config, t).iter().filter(|e| matches!(e, Event::Adapt { .. })).count();
            assert_eq!(adapts, t - 1);
        }
    }
}

#[test]
fn short_final_batch_seals_a_partial_chunk() {
    let config = OsoaConfig {
        batch_size: 10,
        chunk_size: 4,
        ..OsoaConfig::default()
    };
    let data = skewed(95, 2);
    let enc = osoa_encode(&data, &order1(8), &config).unwrap();
    let ranges: Vec<(u32, u32)> = enc
        .container
        .chunks
        .iter()
        .map(|c| (c.meta.first_batch, c.meta.last_batch))
        .collect();
    assert_eq!(ranges, [(0, 3), (4, 7), (8, 9)]);
    assert_eq!(enc.batch_log.last().unwrap().symbols, 5);
    assert_eq!(osoa_decode(&enc.container, &order1(8)).unwrap().data, data);
}

#[test]
fn background_flush_is_byte_identical() {
    let data = skewed(5000, 3);
    for bits_back in [false, true] {
        let base = if bits_back { random_vae(8, 4, 9) } else { order1(8) };
        let config = OsoaConfig {
            bits_back,
            batch_size: 64,
            chunk_size: 3,
            seed: 11,
            ..OsoaConfig::default()
        };
        let sync = osoa_encode(&data, &base, &config).unwrap();
        let background = osoa_encode(
            &data,
            &base,
            &OsoaConfig {
                background_flush: true,
                ..config
            },
        )
        .unwrap();
        assert_eq!(write_container(&sync.container), write_container(&background.container));
    }
}

#[test]
fn chunk_decodes_independently_from_replayed_state() {
    let data = skewed(600, 4);
    let base = order1(8);
    let config = OsoaConfig {
        batch_size: 50,
        chunk_size: 4,
        optimizer: OptimizerConfig::adamax(0.05),
        ..OsoaConfig::default()
    };
    let enc = osoa_encode(&data, &base, &config).unwrap();
    let header = &enc.container.header;

    // Replay adaptation through chunk 0 from the plaintext alone.
    let mut model = base.clone();
    let mut state = OptimizerState::new(config.optimizer.kind, model.param_count());
    for (t, batch) in data.chunks(50).take(4).enumerate() {
        apply_dynamics(&mut model, &mut state, batch, &config.optimizer, &config.schedule, t + 1).unwrap();
    }
    assert_eq!(model.checksum(), enc.container.chunks[0].meta.param_checksum);

    let second = decode_chunk(header, &enc.container.chunks[1], 1, &mut model, &mut state).unwrap();
    assert_eq!(second, &data[200..400]);
    assert_eq!(model.checksum(), enc.container.chunks[1].meta.param_checksum);
}

#[test]
fn bits_back_batches_decode_in_forward_order() {
    let base = random_vae(6, 3, 5);
    let data = skewed(40, 6).iter().map(|s| s % 6).collect::<Vec<_>>();
    let config = OsoaConfig {
        bits_back: true,
        batch_size: 20,
        chunk_size: 2,
        seed: 3,
        ..OsoaConfig::default()
    };
    let enc = osoa_encode(&data, &base, &config).unwrap();
    assert_eq!(enc.container.chunks.len(), 1);
    let header = &enc.container.header;
    let mut model = base.clone();
    let mut state = OptimizerState::new(config.optimizer.kind, model.param_count());
    let decoded = decode_chunk(header, &enc.container.chunks[0], 0, &mut model, &mut state).unwrap();
    assert_eq!(&decoded[..20], &data[..20]);
    assert_eq!(decoded, data);
}

#[test]
fn frozen_schedule_matches_static_coding() {
    let data = skewed(3000, 7);
    for (coder, bits_back) in [(CoderKind::Ac, false), (CoderKind::Rans, false), (CoderKind::Rans, true)] {
        let base = if bits_back { random_vae(8, 3, 1) } else { order1(8) };
        let config = OsoaConfig {
            coder,
            bits_back,
            batch_size: 100,
            chunk_size: 30,
            schedule: AdaptationSchedule {
                updates_per_batch: 3,
                early_stop_step: Some(0),
            },
            ..OsoaConfig::default()
        };
        let enc = osoa_encode(&data, &base, &config).unwrap();
        assert_eq!(enc.final_checksum, base.checksum());
        assert_eq!(enc.container.chunks[0].payload, static_encode(&data, &base, &config).unwrap());
    }
}

#[test]
fn early_stop_freezes_after_the_given_batch() {
    let data = skewed(1000, 8);
    let config = OsoaConfig {
        batch_size: 100,
        chunk_size: 1,
        schedule: AdaptationSchedule {
            updates_per_batch: 2,
            early_stop_step: Some(3),
        },
        ..OsoaConfig::default()
    };
    let enc = osoa_encode(&data, &order1(8), &config).unwrap();
    let steps: Vec<u32> = enc.batch_log.iter().map(|b| b.adapt_steps).collect();
    assert_eq!(steps, [2, 2, 2, 0, 0, 0, 0, 0, 0, 0]);
    let sums: Vec<u64> = enc.container.chunks.iter().map(|c| c.meta.param_checksum).collect();
    assert!(sums[3..].iter().all(|&s| s == sums[2]));
    assert_eq!(osoa_decode(&enc.container, &order1(8)).unwrap().data, data);
}

#[test]
fn diverging_decoder_reports_the_chunk() {
    let data = skewed(800, 9);
    let config = OsoaConfig {
        batch_size: 100,
        chunk_size: 2,
        ..OsoaConfig::default()
    };
    let mut enc = osoa_encode(&data, &order1(8), &config).unwrap();
    enc.container.chunks[2].meta.param_checksum ^= 1;
    match osoa_decode(&enc.container, &order1(8)) {
        Err(OsoaError::ChecksumMismatch { chunk, .. }) => assert_eq!(chunk, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn truncated_payload_is_detected() {
    let data = skewed(800, 10);
    let config = OsoaConfig {
        batch_size: 100,
        chunk_size: 2,
        ..OsoaConfig::default()
    };
    let mut enc = osoa_encode(&data, &order1(8), &config).unwrap();
    let payload = &mut enc.container.chunks[1].payload;
    payload.drain(0..8);
    assert!(matches!(
        osoa_decode(&enc.container, &order1(8)),
        Err(OsoaError::Truncated { chunk: 1 }) | Err(OsoaError::ChecksumMismatch { chunk: 1, .. })
    ));
}

#[test]
fn corrupted_container_bytes_are_rejected() {
    let data = skewed(500, 11);
    let enc = osoa_encode(&data, &order1(8), &OsoaConfig::default()).unwrap();
    let mut bytes = write_container(&enc.container);
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    let err = read_container(&bytes).unwrap_err();
    assert!(err.is_checksum());
}

#[test]
fn adaptation_beats_the_frozen_model_on_shifted_data() {
    // Pretrained on one skew, coding another: adapting must help.
    let base = order1(8);
    let config = OsoaConfig {
        batch_size: 200,
        optimizer: OptimizerConfig::adamax(0.05),
        ..OsoaConfig::default()
    };
    let data = skewed(20_000, 12);
    let adapted = osoa_encode(&data, &base, &config).unwrap();
    let frozen = osoa_encode(
        &data,
        &base,
        &OsoaConfig {
            schedule: AdaptationSchedule {
                updates_per_batch: 1,
                early_stop_step: Some(0),
            },
            ..config.clone()
        },
    )
    .unwrap();
    assert!(adapted.container.payload_len() < frozen.container.payload_len());
}
