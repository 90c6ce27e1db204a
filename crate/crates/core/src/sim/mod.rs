//! Monte-Carlo BER engine, codebook diversity certification and
//! constellation rotation search.

pub mod certify;
pub mod config;

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::code::{CodeDocument, CodeError, GroupDecodableCode};
use crate::construction::fixtures::{alamouti, blast, builtin_code, Builtin};
use crate::construction::ConstructionError;
use crate::matrix::FloatComplexMatrix;
use crate::transceiver::{
    encode, golden_code, real_equivalent, receive, stack_received, ChannelRealization, ConstellationPlan, Detector,
    FloatCode, GroupMode, PlanError, TransceiverError,
};

pub use certify::{
    certify_full_diversity, certify_groups, optimize_rotations, plan_components, CertifyResult, RotationMetric,
    RotationSearchConfig,
};
pub use config::{DecoderKind, SimulationConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Transceiver(#[from] TransceiverError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("codebook of {size} words exceeds the limit {limit}")]
    CodebookTooLarge { size: u128, limit: u128 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Independent random streams drawn for every trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamRole {
    Channel = 0,
    Noise = 1,
    Bits = 2,
}

/// Generator for one (seed, trial, role) triple. Streams never depend on
/// scheduling, and the same trial draws the same channel, noise and bits at
/// every SNR point.
pub fn trial_rng(seed: u64, trial: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial << 2) | role as u64);
    rng
}

/// Matrix of i.i.d. circular `CN(0, 1)` entries.
pub fn complex_gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> FloatComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    FloatComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// Names accepted wherever a code is expected, besides a path to a code file.
pub const NAMED_CODES: [&str; 8] = ["un2", "un2_reduced", "un4", "gpp3", "b4", "alamouti", "blast", "golden"];

/// Exact form of a named or file-backed code, when one exists.
pub fn load_exact_code(source: &str) -> Result<Option<GroupDecodableCode>, SimError> {
    if let Ok(b) = source.parse::<Builtin>() {
        return Ok(Some(builtin_code(b)?));
    }
    match source {
        "alamouti" => Ok(Some(alamouti())),
        "blast" => Ok(Some(blast())),
        "golden" => Ok(None),
        path => {
            let text = std::fs::read_to_string(Path::new(path))
                .map_err(|e| SimError::Config(format!("code {path:?} is neither a known name nor a readable file: {e}")))?;
            Ok(Some(GroupDecodableCode::from_json(&text)?))
        }
    }
}

pub fn load_code(source: &str) -> Result<FloatCode, SimError> {
    match load_exact_code(source)? {
        Some(code) => Ok(FloatCode::from_exact(source, &code)),
        None => Ok(golden_code()),
    }
}

/// Constellation plan used when none is configured. Builtin codes carry
/// their reference rotations (in multiples of pi).
pub fn default_plan(source: &str, l: usize) -> Result<ConstellationPlan, SimError> {
    let text = match source {
        "un2" | "un2_reduced" => "pam4:4; qam8@0.0735:1,5; qam8:2,3",
        "un4" => {
            "qam4:1,5; qam4@0.1413:2,6; qam4@0.1413:3,4; qam4@0.1538:7,8; qam4@0.2493:9,10; \
             qam4@0.1691:11,13; qam4@0.1044:12,16; qam4@0.214:14,15; pam2:17"
        }
        "gpp3" => "pam2:1; qam4@0.0875:2,6; qam4@0.0875:3,7; qam4@0.05:4,8; qam4@0.1625:5,9",
        "b4" => "qam4@0.1538:1,3; qam4@0.4625:2,5; qam4:4,9; qam4@0.1538:6,8; qam4@0.4625:7,10",
        "alamouti" => "qam16:1,2; qam16:3,4",
        "blast" => "qam4:1,2; qam4:3,4",
        "golden" => "qam4:1,2; qam4:3,4; qam4:5,6; qam4:7,8",
        _ => {
            return Ok(ConstellationPlan::paired(
                l,
                &crate::transceiver::Constellation::qam(4)?,
                None,
            )?)
        }
    };
    Ok(ConstellationPlan::parse(text, l)?)
}

/// 64-bit FNV-1a over the code's matrices and the plan description.
pub fn code_hash(code: &FloatCode, plan: &ConstellationPlan) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&(code.t() as u64).to_le_bytes());
    eat(&(code.n() as u64).to_le_bytes());
    for m in code.matrices() {
        for z in m.iter() {
            eat(&z.re.to_bits().to_le_bytes());
            eat(&z.im.to_bits().to_le_bytes());
        }
    }
    for g in code.partition().groups() {
        for &i in g {
            eat(&(i as u64).to_le_bytes());
        }
        eat(b"|");
    }
    eat(plan.describe().as_bytes());
    format!("{h:016x}")
}

/// Everything a trial needs, shared read-only across workers.
pub struct Link {
    pub code: FloatCode,
    pub plan: ConstellationPlan,
    pub alpha: f64,
    pub detector: Detector,
    pub receive_antennas: usize,
}

impl Link {
    pub fn new(code: FloatCode, plan: ConstellationPlan, receive_antennas: usize) -> Result<Self, SimError> {
        let needed = code.min_receive_antennas();
        if receive_antennas < needed {
            return Err(TransceiverError::TooFewReceiveAntennas {
                needed,
                got: receive_antennas,
            }
            .into());
        }
        let alpha = code.energy_scale(&plan)?;
        let detector = Detector::new(&code, &plan)?;
        Ok(Self {
            code,
            plan,
            alpha,
            detector,
            receive_antennas,
        })
    }

    /// Bit errors for one block.
    pub fn run_trial(
        &self,
        seed: u64,
        trial: u64,
        rho: f64,
        noiseless: bool,
        decoder: DecoderKind,
    ) -> Result<u64, SimError> {
        let nbits = self.plan.bits_per_block();
        let mut bit_rng = trial_rng(seed, trial, StreamRole::Bits);
        let bits: Vec<u8> = (0..nbits).map(|_| bit_rng.random::<bool>() as u8).collect();
        let sent = self.plan.assign(&self.plan.indices_from_bits(&bits)?)?;

        let ch = ChannelRealization {
            h: complex_gaussian(&mut trial_rng(seed, trial, StreamRole::Channel), self.code.n(), self.receive_antennas),
            rho,
        };
        let noise = if noiseless {
            FloatComplexMatrix::zeros(self.code.t(), self.receive_antennas)
        } else {
            complex_gaussian(&mut trial_rng(seed, trial, StreamRole::Noise), self.code.t(), self.receive_antennas)
        };
        let x = encode(&self.code, self.alpha, &sent.values)?;
        let r: DVector<f64> = stack_received(&receive(&x, &ch, &noise));
        let heq = real_equivalent(&self.code, self.alpha, &ch)?;
        let (decided, _) = match decoder {
            DecoderKind::Group => self.detector.group_decode(&heq, r.as_slice(), GroupMode::Conditional)?,
            DecoderKind::Ml => self.detector.ml_decode_exhaustive(&heq, r.as_slice())?,
        };
        let got = self.plan.bits_from_indices(&decided.indices);
        Ok(bits.iter().zip(&got).filter(|(a, b)| a != b).count() as u64)
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_halfwidth: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BerResult {
    pub code: String,
    pub code_hash: String,
    pub plan: String,
    pub receive_antennas: usize,
    pub bits_per_block: usize,
    pub seed: u64,
    pub target_bit_errors: u64,
    pub max_trials: u64,
    pub points: Vec<BerPoint>,
    /// BER never increases with SNR.
    pub monotone_nonincreasing: bool,
}

/// 95% normal-approximation half-width for a proportion.
pub fn ci_halfwidth(errors: u64, n_bits: u64) -> f64 {
    if n_bits == 0 {
        return 0.0;
    }
    let p = errors as f64 / n_bits as f64;
    1.96 * (p * (1.0 - p) / n_bits as f64).sqrt()
}

/// Trials are simulated in rounds of `batch` blocks on the worker pool and
/// consumed in trial order, so the stopping point and every count depend
/// only on the seed.
pub fn run_ber_sweep(cfg: &SimulationConfig) -> Result<BerResult, SimError> {
    cfg.validate()?;
    let code = load_code(&cfg.code)?;
    let plan = match &cfg.plan {
        Some(text) => ConstellationPlan::parse(text, code.len())?,
        None => default_plan(&cfg.code, code.len())?,
    };
    let hash = code_hash(&code, &plan);
    let link = Link::new(code, plan, cfg.receive_antennas)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let nbits = link.plan.bits_per_block() as u64;

    let mut points = Vec::with_capacity(cfg.snr_db.len());
    for &snr_db in &cfg.snr_db {
        let started = Instant::now();
        let rho = 10f64.powf(snr_db / 10.0);
        let mut trials = 0u64;
        let mut errors = 0u64;
        'rounds: while trials < cfg.max_trials && errors < cfg.target_bit_errors {
            let end = (trials + cfg.batch).min(cfg.max_trials);
            let outcomes: Vec<Result<u64, SimError>> = pool.install(|| {
                (trials..end)
                    .into_par_iter()
                    .map(|t| link.run_trial(cfg.seed, t, rho, cfg.noiseless, cfg.decoder))
                    .collect()
            });
            for e in outcomes {
                errors += e?;
                trials += 1;
                if errors >= cfg.target_bit_errors {
                    break 'rounds;
                }
            }
        }
        let n = trials * nbits;
        points.push(BerPoint {
            snr_db,
            trials,
            bit_errors: errors,
            ber: if n == 0 { 0.0 } else { errors as f64 / n as f64 },
            ci_halfwidth: ci_halfwidth(errors, n),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let monotone_nonincreasing = points.windows(2).all(|w| w[1].ber <= w[0].ber);
    Ok(BerResult {
        code: cfg.code.clone(),
        code_hash: hash,
        plan: link.plan.describe(),
        receive_antennas: cfg.receive_antennas,
        bits_per_block: link.plan.bits_per_block(),
        seed: cfg.seed,
        target_bit_errors: cfg.target_bit_errors,
        max_trials: cfg.max_trials,
        points,
        monotone_nonincreasing,
    })
}

#[derive(Serialize)]
struct CsvRow {
    snr_db: f64,
    trials: u64,
    bit_errors: u64,
    ber: f64,
    ci_halfwidth: f64,
}

impl BerResult {
    /// `snr_db,trials,bit_errors,ber,ci_halfwidth`; timing is left out so the
    /// output is reproducible byte for byte.
    pub fn to_csv(&self) -> Result<String, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.points {
            w.serialize(CsvRow {
                snr_db: p.snr_db,
                trials: p.trials,
                bit_errors: p.bit_errors,
                ber: p.ber,
                ci_halfwidth: p.ci_halfwidth,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// True when every consecutive pair strictly decreases.
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].ber < w[0].ber)
    }
}

/// Serialized code document for a named or file-backed exact code.
pub fn code_document(source: &str) -> Result<CodeDocument, SimError> {
    match load_exact_code(source)? {
        Some(code) => Ok(code.to_document()?),
        None => Err(SimError::Config(format!("{source} has no exact form"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = trial_rng(1, 5, StreamRole::Bits).random();
        let b: u64 = trial_rng(1, 5, StreamRole::Bits).random();
        let c: u64 = trial_rng(1, 5, StreamRole::Noise).random();
        let d: u64 = trial_rng(1, 6, StreamRole::Bits).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn ci_is_zero_without_errors() {
        assert_eq!(ci_halfwidth(0, 1000), 0.0);
        assert!((ci_halfwidth(50, 1000) - 1.96 * (0.05f64 * 0.95 / 1000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn noiseless_sweep_is_error_free() {
        let cfg = SimulationConfig {
            code: "un2_reduced".into(),
            snr_db: vec![0.0, 10.0],
            max_trials: 300,
            noiseless: true,
            workers: 2,
            ..SimulationConfig::default()
        };
        let res = run_ber_sweep(&cfg).unwrap();
        assert!(res.points.iter().all(|p| p.bit_errors == 0 && p.trials == 300));
        assert!(res.to_csv().unwrap().starts_with("snr_db,trials,bit_errors,ber,ci_halfwidth\n"));
    }

    #[test]
    fn default_plans_fit_their_codes() {
        for name in NAMED_CODES {
            let code = load_code(name).unwrap();
            let plan = default_plan(name, code.len()).unwrap();
            assert_eq!(plan.symbol_count(), code.len(), "{name}");
        }
    }

    #[test]
    fn receive_antenna_shortfall_is_an_error() {
        let cfg = SimulationConfig {
            code: "un4".into(),
            receive_antennas: 2,
            ..SimulationConfig::default()
        };
        assert!(matches!(
            run_ber_sweep(&cfg),
            Err(SimError::Transceiver(TransceiverError::TooFewReceiveAntennas { needed: 3, got: 2 }))
        ));
    }
}
