use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use gdstbc::code::{complexity_order, complexity_slope, CodeDocument, GroupDecodableCode};
use gdstbc::construction::fixtures::{builtin_code, Builtin};
use gdstbc::construction::{
    construct_balanced, construct_unbalanced, max_rate_balanced, max_rate_unbalanced, ConstructionOptions,
    SeedMatrix,
};
use gdstbc::matrix::{ExactComplexMatrix, ExactScalar, GaussRational};
use gdstbc::sim::{
    certify_full_diversity, default_plan, load_code, load_exact_code, optimize_rotations, run_ber_sweep, DecoderKind,
    RotationMetric, RotationSearchConfig, SimulationConfig,
};
use gdstbc::transceiver::ConstellationPlan;

/// Environment variable supplying the default RNG seed.
pub const SEED_ENV: &str = "GDSTBC_SEED";

#[derive(Parser, Debug)]
#[command(name = "gdstbc", version, about = "Group-decodable space-time block codes: construct, verify, simulate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a two-group code from a seed matrix, or stack two codes.
    Construct(ConstructArgs),
    /// Check group decodability of a code; exit status 0 iff clean.
    Verify {
        /// Builtin name or code file.
        code: String,
    },
    /// Largest achievable rate for a block length and antenna count.
    Rate {
        #[arg(long = "T")]
        t: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        balanced: bool,
    },
    /// Decoding complexity order K * 2^((L_max - K + 1) b / (2R)).
    Complexity {
        #[arg(long = "Lmax")]
        l_max: u64,
        #[arg(long = "K")]
        k: u64,
        /// Bits per constellation point; symbolic when omitted.
        #[arg(long = "b")]
        b: Option<String>,
        /// Code rate, e.g. `1.5` or `5/4`.
        #[arg(long = "R")]
        r: String,
    },
    /// Monte-Carlo BER sweep.
    Simulate(SimulateArgs),
    /// Search constellation rotations maximizing coding gain.
    Rotate(RotateArgs),
    /// Minimum rank and determinant over all codeword pairs.
    Certify(CertifyArgs),
    /// Write the builtin codes as code files.
    Fixtures {
        /// Output directory; prints one code to stdout with --name instead.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Args, Debug)]
struct ConstructArgs {
    /// Seed matrix rows separated by `;`, entries by `,` (e.g. `1,1,0,0;1,-1,0,0`, entries like `2`, `-j`, `1/2+3j`).
    #[arg(long, conflicts_with_all = ["seed_file", "t"])]
    seed_matrix: Option<String>,
    /// File holding a seed matrix in the same text form.
    #[arg(long, conflicts_with = "t")]
    seed_file: Option<PathBuf>,
    /// Use `[I; 0]` or `[I 0]` of shape T x N as the seed.
    #[arg(long = "T", requires = "n")]
    t: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    /// Stack two unbalanced code files into a balanced code instead.
    #[arg(long, num_args = 2, value_names = ["CODE_A", "CODE_B"], conflicts_with_all = ["seed_matrix", "seed_file", "t"])]
    stack: Option<Vec<String>>,
    #[arg(long, default_value_t = 2)]
    i: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    no_orthogonal: bool,
    /// Recombination seed (defaults to the environment seed, then 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    max_attempts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecoderArg {
    Group,
    Ml,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    code: Option<String>,
    #[arg(long)]
    plan: Option<String>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long = "M")]
    receive_antennas: Option<usize>,
    #[arg(long)]
    target_errors: Option<u64>,
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    decoder: Option<DecoderArg>,
    /// Zero the channel noise (diagnostics).
    #[arg(long)]
    noiseless: bool,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    MinDet,
    MinRankThenDet,
}

#[derive(Args, Debug)]
struct RotateArgs {
    code: String,
    /// Plan whose rotations are searched (existing rotations are ignored).
    #[arg(long)]
    plan: Option<String>,
    /// Grid step is pi / divisor.
    #[arg(long, default_value_t = 400)]
    step_divisor: u32,
    #[arg(long, value_enum, default_value_t = MetricArg::MinRankThenDet)]
    metric: MetricArg,
    /// Comma-separated 1-based group order.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    code: String,
    #[arg(long)]
    plan: Option<String>,
    /// Angles file written by `rotate`; overrides the plan's rotations.
    #[arg(long)]
    angles: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct AnglesFile {
    plan: String,
    /// Rotation of each plan slot in multiples of pi.
    angles_pi: Vec<f64>,
    min_rank: usize,
    min_det: f64,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{SEED_ENV}={v:?} is not an integer"))?)),
        Err(_) => Ok(None),
    }
}

fn parse_rational(text: &str) -> Result<Rational64> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: i64 = n.trim().parse()?;
        let d: i64 = d.trim().parse()?;
        if d == 0 {
            bail!("zero denominator in {text:?}");
        }
        return Ok(Rational64::new(n, d));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let negative = whole.starts_with('-');
        let w: i64 = if whole.is_empty() || whole == "-" { 0 } else { whole.parse()? };
        let scale = 10i64.checked_pow(frac.len() as u32).ok_or_else(|| anyhow!("too many decimals"))?;
        let f: i64 = if frac.is_empty() { 0 } else { frac.parse()? };
        let f = if negative { -f } else { f };
        return Ok(Rational64::new(w * scale + f, scale));
    }
    Ok(Rational64::from_integer(t.parse()?))
}

fn exact_scalar(text: &str) -> Result<ExactScalar> {
    let r = parse_rational(text)?;
    Ok(ExactScalar::new((*r.numer()).into(), (*r.denom()).into()))
}

/// Parses `a`, `bj`, `a+bj`, `a-bj` with rational `a`, `b`.
fn gauss_entry(text: &str) -> Result<GaussRational> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let zero = || exact_scalar("0");
    let Some(body) = t.strip_suffix('j') else {
        return Ok(GaussRational::new(exact_scalar(&t)?, zero()?));
    };
    let split = body
        .char_indices()
        .skip(1)
        .filter(|(_, c)| *c == '+' || *c == '-')
        .map(|(i, _)| i)
        .last();
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other.trim_start_matches('+'),
    };
    Ok(GaussRational::new(exact_scalar(re)?, exact_scalar(im)?))
}

fn parse_matrix(text: &str) -> Result<ExactComplexMatrix> {
    let rows: Vec<Vec<GaussRational>> = text
        .split(';')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| r.split(',').map(gauss_entry).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let cols = rows.first().map(Vec::len).ok_or_else(|| anyhow!("empty seed matrix"))?;
    if rows.iter().any(|r| r.len() != cols) {
        bail!("seed matrix rows have different lengths");
    }
    Ok(ExactComplexMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c].clone()))
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_code_file_or_name(source: &str) -> Result<GroupDecodableCode> {
    load_exact_code(source)?.ok_or_else(|| anyhow!("{source} has no exact form"))
}

fn construct(args: ConstructArgs) -> Result<ExitCode> {
    let code = if let Some(files) = args.stack {
        let a = load_code_file_or_name(&files[0])?;
        let b = load_code_file_or_name(&files[1])?;
        construct_balanced(&a, &b, args.i, args.k)?
    } else {
        let seed = match (&args.seed_matrix, &args.seed_file, args.t, args.n) {
            (Some(text), _, _, _) => parse_matrix(text)?,
            (None, Some(path), _, _) => parse_matrix(&fs::read_to_string(path)?)?,
            (None, None, Some(t), Some(n)) => ExactComplexMatrix::from_fn(t, n, |r, c| {
                if r == c {
                    GaussRational::one()
                } else {
                    GaussRational::zero()
                }
            }),
            _ => bail!("give --seed-matrix, --seed-file, --T/--N or --stack"),
        };
        let opts = ConstructionOptions {
            refine_full_rank: !args.no_refine,
            maximize_orthogonal: !args.no_orthogonal,
            recombination_seed: match args.seed {
                Some(s) => s,
                None => env_seed()?.unwrap_or(0),
            },
            max_refine_attempts: args.max_attempts,
        };
        construct_unbalanced(&SeedMatrix::new(seed)?, &opts)?
    };
    eprintln!(
        "constructed: T={} N={} L={} rate={} K={}",
        code.dispersion().t(),
        code.dispersion().n(),
        code.dispersion().len(),
        code.rate(),
        code.k_orthogonal()
    );
    write_or_print(&args.out, &code.to_json()?)?;
    Ok(ExitCode::SUCCESS)
}

fn verify(source: &str) -> Result<ExitCode> {
    let (set, partition) = match source.parse::<Builtin>() {
        Ok(b) => {
            let c = builtin_code(b)?;
            (c.dispersion().clone(), c.partition().clone())
        }
        Err(_) => match load_exact_code(source) {
            Ok(Some(c)) => (c.dispersion().clone(), c.partition().clone()),
            _ => CodeDocument::from_json(&fs::read_to_string(source).with_context(|| format!("reading {source}"))?)?
                .into_parts()?,
        },
    };
    let report = gdstbc::code::verify_group_decodable(&set, &partition)?;
    println!("code: {source}");
    println!("T={} N={} L={}", set.t(), set.n(), set.len());
    println!("groups: {}", partition.len());
    for (g, members) in partition.groups().iter().enumerate() {
        let names: Vec<String> = members.iter().map(|i| format!("s{}", i + 1)).collect();
        println!("  group {}: {}", g + 1, names.join(" "));
    }
    print!("{report}");
    if report.passed() {
        let k = gdstbc::code::greedy_qoc_clique(&set, &partition.groups()[partition.largest_group()]).len();
        println!("L_max: {}", partition.l_max());
        println!("K: {k}");
        println!("min receive antennas: {}", gdstbc::code::min_receive_antennas(&set));
        println!("status: ok");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("status: FAILED ({} violations)", report.violations.len());
        Ok(ExitCode::from(1))
    }
}

fn rate(t: usize, n: usize, balanced: bool) -> Result<ExitCode> {
    let p = if balanced { max_rate_balanced(t, n)? } else { max_rate_unbalanced(t, n) };
    println!("max_rate: {}", p.max_rate);
    println!("second_group_size: {}", p.second_group_size);
    println!("regime: {:?}", p.regime);
    Ok(ExitCode::SUCCESS)
}

fn complexity(l_max: u64, k: u64, b: Option<String>, r: &str) -> Result<ExitCode> {
    let r = parse_rational(r)?;
    match b {
        Some(b) => println!("{}", complexity_order(l_max, k, parse_rational(&b)?, r)?),
        None => println!("{}", complexity_slope(l_max, k, r)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => SimulationConfig::from_toml(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = env_seed()? {
        cfg.seed = s;
    }
    if let Some(v) = args.code {
        cfg.code = v;
    }
    if let Some(v) = args.plan {
        cfg.plan = Some(v);
    }
    if let Some(v) = args.snr {
        cfg.snr_db = v;
    }
    if let Some(v) = args.receive_antennas {
        cfg.receive_antennas = v;
    }
    if let Some(v) = args.target_errors {
        cfg.target_bit_errors = v;
    }
    if let Some(v) = args.max_trials {
        cfg.max_trials = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(d) = args.decoder {
        cfg.decoder = match d {
            DecoderArg::Group => DecoderKind::Group,
            DecoderArg::Ml => DecoderKind::Ml,
        };
    }
    cfg.noiseless |= args.noiseless;
    let result = run_ber_sweep(&cfg)?;
    write_or_print(&args.csv, result.to_csv()?.trim_end())?;
    if let Some(path) = &args.json {
        fs::write(path, result.to_json())?;
    }
    if !result.monotone_nonincreasing {
        eprintln!("warning: BER is not monotone in SNR");
    }
    Ok(ExitCode::SUCCESS)
}

fn plan_for(code_source: &str, l: usize, plan: &Option<String>) -> Result<ConstellationPlan> {
    Ok(match plan {
        Some(text) => ConstellationPlan::parse(text, l)?,
        None => default_plan(code_source, l)?,
    })
}

fn rotate(args: RotateArgs) -> Result<ExitCode> {
    let code = load_code(&args.code)?;
    let plan = plan_for(&args.code, code.len(), &args.plan)?;
    let mut search = RotationSearchConfig::new(plan.with_rotations(&vec![0.0; plan.slots().len()]));
    search.step = PI / f64::from(args.step_divisor.max(1));
    search.metric = match args.metric {
        MetricArg::MinDet => RotationMetric::MinDet,
        MetricArg::MinRankThenDet => RotationMetric::MinRankThenDet,
    };
    if let Some(groups) = args.groups {
        search.group_order = Some(
            groups
                .iter()
                .map(|g| g.checked_sub(1).ok_or_else(|| anyhow!("groups are 1-based")))
                .collect::<Result<_>>()?,
        );
    }
    let res = optimize_rotations(&code, &search)?;
    let rotated = search.plan.with_rotations(&res.angles);
    eprintln!(
        "baseline: min_rank={} min_det={:.6}; optimized: min_rank={} min_det={:.6}",
        res.baseline.min_rank, res.baseline.min_det, res.optimized.min_rank, res.optimized.min_det
    );
    let file = AnglesFile {
        plan: rotated.describe(),
        angles_pi: res.angles.iter().map(|a| a / PI).collect(),
        min_rank: res.optimized.min_rank,
        min_det: res.optimized.min_det,
    };
    write_or_print(&args.out, &serde_json::to_string_pretty(&file)?)?;
    Ok(ExitCode::SUCCESS)
}

fn certify(args: CertifyArgs) -> Result<ExitCode> {
    let code = load_code(&args.code)?;
    let mut plan = plan_for(&args.code, code.len(), &args.plan)?;
    if let Some(path) = &args.angles {
        let file: AnglesFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.angles_pi.len() != plan.slots().len() {
            bail!("angles file has {} angles, plan has {} slots", file.angles_pi.len(), plan.slots().len());
        }
        plan = plan.with_rotations(&file.angles_pi.iter().map(|a| a * PI).collect::<Vec<_>>());
    }
    let c = certify_full_diversity(&code, &plan)?;
    println!("plan: {}", plan.describe());
    println!("pairs: {}", c.pairs);
    println!("min_rank: {} (full: {})", c.min_rank, c.full_rank);
    println!("min_det: {:.6}", c.min_det);
    Ok(ExitCode::SUCCESS)
}

fn fixtures(out_dir: Option<PathBuf>, name: Option<String>) -> Result<ExitCode> {
    if let Some(n) = name {
        println!("{}", load_code_file_or_name(&n)?.to_json()?);
        return Ok(ExitCode::SUCCESS);
    }
    let dir = out_dir.ok_or_else(|| anyhow!("give --out-dir or --name"))?;
    fs::create_dir_all(&dir)?;
    for b in Builtin::ALL {
        let path = dir.join(format!("{}.json", b.name()));
        fs::write(&path, builtin_code(b)?.to_json()?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Construct(a) => construct(a),
        Command::Verify { code } => verify(&code),
        Command::Rate { t, n, balanced } => rate(t, n, balanced),
        Command::Complexity { l_max, k, b, r } => complexity(l_max, k, b, &r),
        Command::Simulate(a) => simulate(a),
        Command::Rotate(a) => rotate(a),
        Command::Certify(a) => certify(a),
        Command::Fixtures { out_dir, name } => fixtures(out_dir, name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals() {
        assert_eq!(parse_rational("1.5").unwrap(), Rational64::new(3, 2));
        assert_eq!(parse_rational("5/4").unwrap(), Rational64::new(5, 4));
        assert_eq!(parse_rational("-0.25").unwrap(), Rational64::new(-1, 4));
        assert_eq!(parse_rational("3").unwrap(), Rational64::from_integer(3));
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn gaussian_entries() {
        let g = |s: &str| gauss_entry(s).unwrap().to_f64();
        assert_eq!(g("2"), (2.0, 0.0));
        assert_eq!(g("j"), (0.0, 1.0));
        assert_eq!(g("-j"), (0.0, -1.0));
        assert_eq!(g("1/2+3j"), (0.5, 3.0));
        assert_eq!(g("1-j"), (1.0, -1.0));
        assert_eq!(g("-2j"), (0.0, -2.0));
    }

    #[test]
    fn matrix_text() {
        let m = parse_matrix("1,1,0,0; 1,-1,0,0").unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert!(parse_matrix("1,2;3").is_err());
    }
}
