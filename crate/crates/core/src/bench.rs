//! Desk-scale benchmark: a seeded order-1 Markov source for pretraining and
//! a shifted copy of it as the target corpus.
//!
//! Variants: PreTrain (static coding with the base model), OSOA, FineTune
//! (extra epochs on the target, static coding, plus the cost of storing the
//! tuned model) and optionally ReTrain (same as FineTune but from a uniform
//! model). Model storage is charged at [`BITS_PER_PARAMETER`] bits per
//! parameter, the size of one checkpointed `f64`.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapt::{train_epochs, AdaptationSchedule, OptimizerConfig, OptimizerState};
use crate::container::CoderKind;
use crate::models::{softmax, ContextModel, ContextOrder, Model};
use crate::osoa::{osoa_encode, EncodeOutput, OsoaConfig, OsoaError};
use crate::prob::Symbol;

/// Storage cost of one model parameter in a checkpoint.
pub const BITS_PER_PARAMETER: u32 = 64;

/// Flush overhead allowed per coded stream when comparing real and
/// theoretical code lengths.
pub const FLUSH_BITS_PER_STREAM: f64 = 64.0;

/// Order-1 Markov chain with a uniform first symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSource {
    transitions: Vec<Vec<f64>>,
}

impl MarkovSource {
    /// Rows are `softmax(sharpness * u)` with `u` uniform on `[-1, 1]`.
    pub fn random(alphabet: usize, sharpness: f64, rng: &mut impl Rng) -> Self {
        let logits = (0..alphabet)
            .map(|_| (0..alphabet).map(|_| sharpness * rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Self::from_logits(logits)
    }

    pub fn from_logits(logits: Vec<Vec<f64>>) -> Self {
        MarkovSource {
            transitions: logits.iter().map(|row| softmax(row)).collect(),
        }
    }

    /// A copy whose logits move by `shift * v`, `v` uniform on `[-1, 1]`.
    pub fn shifted(&self, shift: f64, rng: &mut impl Rng) -> Self {
        let logits = self
            .transitions
            .iter()
            .map(|row| row.iter().map(|p| p.ln() + shift * rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Self::from_logits(logits)
    }

    pub fn alphabet_size(&self) -> usize {
        self.transitions.len()
    }

    pub fn transition(&self, from: Symbol) -> &[f64] {
        &self.transitions[from]
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> Vec<Symbol> {
        let a = self.alphabet_size();
        let mut out: Vec<Symbol> = Vec::with_capacity(len);
        for i in 0..len {
            let s = if i == 0 {
                rng.gen_range(0..a)
            } else {
                draw(&self.transitions[out[i - 1]], rng.gen())
            };
            out.push(s);
        }
        out
    }
}

fn draw(probs: &[f64], u: f64) -> Symbol {
    let mut acc = 0.0;
    for (s, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub alphabet: usize,
    pub sharpness: f64,
    pub shift: f64,
    pub pretrain_len: usize,
    pub target_len: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub seed: u64,
    /// Coding and adaptation settings for OSOA; baselines reuse the coder,
    /// precision and batch size.
    pub osoa: OsoaConfig,
    pub include_retrain: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            alphabet: 16,
            sharpness: 2.5,
            shift: 1.5,
            pretrain_len: 50_000,
            target_len: 40_000,
            pretrain_epochs: 10,
            pretrain_lr: 0.05,
            finetune_epochs: 2,
            seed: 2024,
            osoa: OsoaConfig {
                batch_size: 256,
                optimizer: OptimizerConfig::adamax(0.02),
                ..OsoaConfig::default()
            },
            include_retrain: false,
        }
    }
}

/// Corpora and base model of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub source: MarkovSource,
    pub target_source: MarkovSource,
    pub pretrain: Vec<Symbol>,
    pub target: Vec<Symbol>,
    pub base: Model,
    pub pretrain_bpd: f64,
    pub pretrain_time: Duration,
}

pub fn prepare(scenario: &Scenario) -> Result<Prepared, OsoaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let source = MarkovSource::random(scenario.alphabet, scenario.sharpness, &mut rng);
    let target_source = source.shifted(scenario.shift, &mut rng);
    let pretrain = source.sample(scenario.pretrain_len, &mut rng);
    let target = target_source.sample(scenario.target_len, &mut rng);
    let start = Instant::now();
    let (base, pretrain_bpd) = train_from_uniform(
        scenario.alphabet,
        &pretrain,
        scenario.osoa.batch_size,
        scenario.pretrain_epochs,
        scenario.pretrain_lr,
    )?;
    Ok(Prepared {
        source,
        target_source,
        pretrain,
        target,
        base,
        pretrain_bpd,
        pretrain_time: start.elapsed(),
    })
}

/// Order-1 model trained with AdaMax from uniform logits.
pub fn train_from_uniform(
    alphabet: usize,
    corpus: &[Symbol],
    batch_size: usize,
    epochs: usize,
    lr: f64,
) -> Result<(Model, f64), OsoaError> {
    let mut model = Model::Context(ContextModel::uniform(ContextOrder::One, alphabet)?);
    let config = OptimizerConfig::adamax(lr);
    let mut state = OptimizerState::new(config.kind, model.param_count());
    let bpd = train_epochs(&mut model, &mut state, corpus, batch_size, epochs, &config)?;
    Ok((model, bpd))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: String,
    pub theoretical_bpd: f64,
    pub real_bpd: f64,
    pub model_bpd: f64,
    pub wall_time: Duration,
    /// Independently flushed coder streams in the payload.
    pub streams: usize,
    /// Bits per symbol under the unquantized model.
    pub model_nll_bpd: f64,
    /// Summed `KL(p ‖ p̄)` over every coded symbol, in bits.
    pub quantization_kl_bits: f64,
    pub real_bits: f64,
    pub theoretical_bits: f64,
}

impl BenchRow {
    pub fn total_bpd(&self) -> f64 {
        self.real_bpd + self.model_bpd
    }

    pub fn theoretical_total_bpd(&self) -> f64 {
        self.theoretical_bpd + self.model_bpd
    }

    /// Real minus theoretical code length, in bits.
    pub fn gap_bits(&self) -> f64 {
        self.real_bits - self.theoretical_bits
    }

    /// Largest gap the coder accounting allows: one flush per stream plus
    /// the quantization cost.
    pub fn gap_bound_bits(&self) -> f64 {
        FLUSH_BITS_PER_STREAM * self.streams as f64 + self.quantization_kl_bits
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub scenario: Scenario,
    pub symbols: usize,
    pub param_count: usize,
    pub pretrain_bpd: f64,
    pub rows: Vec<BenchRow>,
    /// Per-batch theoretical bpd of OSOA minus PreTrain.
    pub diff_series: Vec<f64>,
    pub osoa_cumulative_bpd: Vec<f64>,
}

impl BenchReport {
    pub fn row(&self, variant: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Least-squares slope of [`Self::diff_series`] against batch index.
    pub fn diff_slope(&self) -> f64 {
        least_squares_slope(&self.diff_series)
    }

    /// The report as a text table; timing columns only when requested, so
    /// that untimed reports are reproducible byte for byte.
    pub fn to_text(&self, with_timing: bool) -> String {
        let mut out = String::new();
        let s = &self.scenario;
        let _ = writeln!(
            out,
            "scenario: alphabet={} shift={} target_symbols={} batch_size={} coder={} seed={}",
            s.alphabet,
            s.shift,
            self.symbols,
            s.osoa.batch_size,
            coder_name(s.osoa.coder),
            s.seed
        );
        let _ = writeln!(
            out,
            "model: order-1 context model, {} parameters, {} bits/parameter",
            self.param_count, BITS_PER_PARAMETER
        );
        let _ = writeln!(out, "pretrain bpd: {:.4}", self.pretrain_bpd);
        let _ = write!(
            out,
            "{:<10} {:>12} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "variant", "theoretical", "real", "model", "total", "gap_bits", "gap_bound"
        );
        if with_timing {
            let _ = write!(out, " {:>10}", "time_s");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<10} {:>12.4} {:>10.4} {:>10.4} {:>10.4} {:>10.2} {:>10.2}",
                r.variant,
                r.theoretical_bpd,
                r.real_bpd,
                r.model_bpd,
                r.total_bpd(),
                r.gap_bits(),
                r.gap_bound_bits()
            );
            if with_timing {
                let _ = write!(out, " {:>10.3}", r.wall_time.as_secs_f64());
            }
            out.push('\n');
        }
        let _ = writeln!(out, "diff slope (OSOA - PreTrain per batch): {:.6}", self.diff_slope());
        out
    }

    /// One line per batch: index, OSOA bpd minus PreTrain bpd, OSOA
    /// cumulative bpd.
    pub fn series_text(&self) -> String {
        let mut out = String::from("batch\tdiff_bpd\tosoa_cumulative_bpd\n");
        for (t, (d, c)) in self.diff_series.iter().zip(&self.osoa_cumulative_bpd).enumerate() {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}", t + 1, d, c);
        }
        out
    }
}

pub fn coder_name(coder: CoderKind) -> &'static str {
    match coder {
        CoderKind::Ac => "ac",
        CoderKind::Rans => "rans",
    }
}

pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Configuration that codes with a frozen model in a single stream.
fn frozen(config: &OsoaConfig, batches: usize) -> OsoaConfig {
    OsoaConfig {
        chunk_size: batches.max(1),
        schedule: AdaptationSchedule {
            updates_per_batch: 1,
            early_stop_step: Some(0),
        },
        ..config.clone()
    }
}

fn row_from(variant: &str, out: &EncodeOutput, model_bits: f64, wall_time: Duration) -> BenchRow {
    let n = out.symbols() as f64;
    let theoretical_bits = out.theoretical_bits();
    let model_nll: f64 = out.batch_log.iter().map(|b| b.model_bits).sum();
    let kl: f64 = out.batch_log.iter().map(|b| b.quantization_kl_bits).sum();
    let real_bits = 8.0 * out.container.payload_len() as f64;
    BenchRow {
        variant: variant.to_string(),
        theoretical_bpd: theoretical_bits / n,
        real_bpd: real_bits / n,
        model_bpd: model_bits / n,
        wall_time,
        streams: out.container.chunks.len(),
        model_nll_bpd: model_nll / n,
        quantization_kl_bits: kl,
        real_bits,
        theoretical_bits,
    }
}

/// OSOA on the scenario's target corpus only.
pub fn run_osoa(prepared: &Prepared, config: &OsoaConfig) -> Result<EncodeOutput, OsoaError> {
    osoa_encode(&prepared.target, &prepared.base, config)
}

pub fn run_bench(scenario: &Scenario) -> Result<BenchReport, OsoaError> {
    let prepared = prepare(scenario)?;
    run_prepared(scenario, &prepared)
}

pub fn run_prepared(scenario: &Scenario, prepared: &Prepared) -> Result<BenchReport, OsoaError> {
    let data = &prepared.target;
    let n = data.len();
    let batches = n.div_ceil(scenario.osoa.batch_size);
    let static_config = frozen(&scenario.osoa, batches);
    let param_count = prepared.base.param_count();
    let model_bits = (param_count * BITS_PER_PARAMETER as usize) as f64;
    let mut rows = Vec::new();

    let start = Instant::now();
    let pre = osoa_encode(data, &prepared.base, &static_config)?;
    rows.push(row_from("PreTrain", &pre, 0.0, start.elapsed()));

    let start = Instant::now();
    let osoa = osoa_encode(data, &prepared.base, &scenario.osoa)?;
    rows.push(row_from("OSOA", &osoa, 0.0, start.elapsed()));

    let start = Instant::now();
    let mut tuned = prepared.base.clone();
    let mut state = OptimizerState::new(scenario.osoa.optimizer.kind, param_count);
    train_epochs(
        &mut tuned,
        &mut state,
        data,
        scenario.osoa.batch_size,
        scenario.finetune_epochs,
        &scenario.osoa.optimizer,
    )?;
    let fine = osoa_encode(data, &tuned, &static_config)?;
    rows.push(row_from("FineTune", &fine, model_bits, start.elapsed()));

    if scenario.include_retrain {
        let start = Instant::now();
        let (retrained, _) = train_from_uniform(
            scenario.alphabet,
            data,
            scenario.osoa.batch_size,
            scenario.pretrain_epochs,
            scenario.pretrain_lr,
        )?;
        let re = osoa_encode(data, &retrained, &static_config)?;
        rows.push(row_from("ReTrain", &re, model_bits, start.elapsed()));
    }

    let diff_series = osoa
        .batch_log
        .iter()
        .zip(&pre.batch_log)
        .map(|(o, p)| o.theoretical_bpd() - p.theoretical_bpd())
        .collect();
    Ok(BenchReport {
        scenario: scenario.clone(),
        symbols: n,
        param_count,
        pretrain_bpd: prepared.pretrain_bpd,
        rows,
        diff_series,
        osoa_cumulative_bpd: osoa.cumulative_bpd(),
    })
}

/// Theoretical OSOA bpd for each constant learning rate.
pub fn lr_sweep(prepared: &Prepared, config: &OsoaConfig, rates: &[f64]) -> Result<Vec<(f64, f64)>, OsoaError> {
    rates
        .iter()
        .map(|&lr| {
            let cfg = OsoaConfig {
                optimizer: OptimizerConfig {
                    learning_rate: lr,
                    ..config.optimizer
                },
                ..config.clone()
            };
            let out = run_osoa(prepared, &cfg)?;
            Ok((lr, out.theoretical_bits() / out.symbols() as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let ys: Vec<f64> = (0..10).map(|i| 3.0 - 0.5 * i as f64).collect();
        assert!((least_squares_slope(&ys) + 0.5).abs() < 1e-12);
        assert_eq!(least_squares_slope(&[1.0]), 0.0);
    }

    #[test]
    fn markov_sampling_follows_transitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = MarkovSource::random(4, 2.0, &mut rng);
        let xs = src.sample(200_000, &mut rng);
        let mut counts = [[0usize; 4]; 4];
        for w in xs.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
        for (from, row) in counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            for (to, &c) in row.iter().enumerate() {
                let freq = c as f64 / total as f64;
                assert!((freq - src.transition(from)[to]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn small_bench_is_reproducible() {
        let scenario = Scenario {
            pretrain_len: 4000,
            target_len: 3000,
            pretrain_epochs: 2,
            ..Scenario::default()
        };
        let a = run_bench(&scenario).unwrap();
        let b = run_bench(&scenario).unwrap();
        assert_eq!(a.to_text(false), b.to_text(false));
        assert_eq!(a.series_text(), b.series_text());
        for r in &a.rows {
            assert!(r.real_bpd >= r.theoretical_bpd);
            assert!(r.gap_bits() <= r.gap_bound_bits());
        }
    }
}
