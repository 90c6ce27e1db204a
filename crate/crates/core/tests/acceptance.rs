//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use gdstbc::code::{complexity_order, complexity_slope, verify_group_decodable};
use gdstbc::construction::fixtures::{builtin_code, companion_code, un2_matrices, Builtin};
use gdstbc::construction::{
    construct_balanced, construct_unbalanced, max_rate_balanced, max_rate_unbalanced, ConstructionOptions, SeedMatrix,
};
use gdstbc::matrix::{build_f, rank, vectorize, ExactComplexMatrix, ExactRealMatrix, GaussRational};
use gdstbc::sim::{
    certify_full_diversity, complex_gaussian, default_plan, load_code, run_ber_sweep, trial_rng, BerResult, DecoderKind,
    Link, SimulationConfig, StreamRole,
};
use gdstbc::transceiver::{
    encode, real_equivalent, receive, stack_received, ChannelRealization, GroupMode, TransceiverError,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

const FIXTURES: [&str; 5] = ["un2", "un2_reduced", "un4", "gpp3", "b4"];

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn rows_of(vs: &[Vec<gdstbc::matrix::ExactScalar>]) -> ExactRealMatrix {
    ExactRealMatrix::from_rows(vs)
}

fn construction_fixture() -> Outcome {
    let c1 = ExactComplexMatrix::from_int_pairs(2, 4, &[(1, 0), (1, 0), (0, 0), (0, 0), (1, 0), (-1, 0), (0, 0), (0, 0)]);
    let code = match SeedMatrix::new(c1).and_then(|s| construct_unbalanced(&s, &ConstructionOptions::default())) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("construction failed: {e}")),
    };
    let groups = code.partition().groups();
    let second: Vec<_> = groups[1].iter().map(|&l| vectorize(code.dispersion().get(l))).collect();
    let dim = rank(&rows_of(&second));
    let expected = &un2_matrices()[1..];
    let contained = expected
        .iter()
        .filter(|y| {
            let mut vs = second.clone();
            vs.push(vectorize(y));
            rank(&rows_of(&vs)) == dim
        })
        .count();
    outcome(
        groups[1].len() == 4 && dim == 4 && contained == expected.len(),
        format!("second group size {}, span dim {dim}, {contained}/4 reference matrices in span", groups[1].len()),
    )
}

fn random_gaussian_int(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ExactComplexMatrix {
    ExactComplexMatrix::from_fn(rows, cols, |_, _| {
        GaussRational::from_ints(rng.random_range(-3..=3), rng.random_range(-3..=3))
    })
}

fn full_rank_seed(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ExactComplexMatrix {
    loop {
        let m = random_gaussian_int(rng, rows, cols);
        if m.is_full_rank() {
            return m;
        }
    }
}

fn constraint_rank_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e57);
    let mut tall_ok = 0;
    for _ in 0..100 {
        let t = rng.random_range(1..=6);
        let n = rng.random_range(1..=t);
        let c = full_rank_seed(&mut rng, t, n);
        if rank(&build_f(&c)) == n * n {
            tall_ok += 1;
        }
    }
    let mut wide_ok = 0;
    for _ in 0..100 {
        let t = rng.random_range(1..=5);
        let n = rng.random_range(t + 1..=6);
        let sub = full_rank_seed(&mut rng, t, t);
        let c = ExactComplexMatrix::from_fn(t, n, |i, j| if j < t { sub.get(i, j).clone() } else { GaussRational::zero() });
        if rank(&build_f(&c)) == 2 * t * n - t * t {
            wide_ok += 1;
        }
    }
    outcome(
        tall_ok == 100 && wide_ok == 100,
        format!("T>=N: {tall_ok}/100 rank N^2; [C 0] with T<N: {wide_ok}/100 rank 2TN-T^2"),
    )
}

fn verifier_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for b in Builtin::ALL {
        let code = builtin_code(b).expect("builtin");
        let report = verify_group_decodable(code.dispersion(), code.partition()).expect("shapes agree");
        ok &= report.passed() && report.violations.is_empty();
        notes.push(format!("{}:{}", b.name(), report.violations.len()));
    }
    let a = builtin_code(Builtin::Un2).expect("builtin");
    let b = companion_code().expect("companion");
    let mut stacked = 0;
    for i in 2..=5 {
        for k in 2..=5 {
            let code = construct_balanced(&a, &b, i, k).expect("compatible inputs");
            let report = verify_group_decodable(code.dispersion(), code.partition()).expect("shapes agree");
            if report.qoc_ok && report.passed() {
                stacked += 1;
            }
        }
    }
    ok &= stacked == 16;
    outcome(ok, format!("violations {}; stacked codes clean {stacked}/16", notes.join(" ")))
}

fn complexity_tables() -> Outcome {
    // (L_max, K, R, slope of b, exact exponent at b = 4, printed exponent)
    let rows: [(u64, u64, Rational64, Rational64, Rational64, i64); 9] = [
        (1, 1, r(1, 1), r(1, 2), r(2, 1), 2),
        (4, 1, r(2, 1), r(1, 1), r(4, 1), 4),
        (8, 1, r(2, 1), r(2, 1), r(8, 1), 8),
        (4, 3, r(5, 4), r(4, 5), r(16, 5), 3),
        (1, 1, r(3, 4), r(2, 3), r(8, 3), 3),
        (2, 1, r(1, 1), r(1, 1), r(4, 1), 4),
        (16, 1, r(2, 1), r(4, 1), r(16, 1), 16),
        (16, 8, r(2, 1), r(9, 4), r(9, 1), 9),
        (15, 5, r(2, 1), r(11, 4), r(11, 1), 11),
    ];
    let mut bad = Vec::new();
    for (i, &(l_max, k, rate, slope, exp4, shown)) in rows.iter().enumerate() {
        let s = complexity_slope(l_max, k, rate).expect("valid inputs");
        let o = complexity_order(l_max, k, r(4, 1), rate).expect("valid inputs");
        let approx_ok = (o.exponent.numer() + o.exponent.denom() / 2) / o.exponent.denom() == shown;
        if s.coefficient != k || s.slope != slope || o.coefficient != k || o.exponent != exp4 || !approx_ok {
            bad.push(format!("row {}: got {s} / {o}", i + 1));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "9/9 rows exact".into() } else { bad.join("; ") })
}

fn rate_formulas() -> Outcome {
    let got = [
        max_rate_unbalanced(2, 4).max_rate,
        max_rate_unbalanced(4, 4).max_rate,
        max_rate_unbalanced(3, 2).max_rate,
        max_rate_balanced(4, 4).map(|p| p.max_rate).unwrap_or(r(0, 1)),
    ];
    let want = [r(5, 4), r(17, 8), r(3, 2), r(5, 4)];
    outcome(
        got == want,
        format!("{} {} {} {}", got[0], got[1], got[2], got[3]),
    )
}

fn receive_antennas(name: &str) -> usize {
    load_code(name).expect("fixture").min_receive_antennas().max(2)
}

fn link_for(name: &str) -> Link {
    let code = load_code(name).expect("fixture");
    let plan = default_plan(name, code.len()).expect("plan");
    Link::new(code, plan, receive_antennas(name)).expect("link")
}

/// Decisions of both decoders on one trial; `None` on a decoder error.
fn decide_both(link: &Link, trial: u64, rho: f64) -> Result<bool, TransceiverError> {
    let seed = 0xdec0de;
    let mut bit_rng = trial_rng(seed, trial, StreamRole::Bits);
    let idx: Vec<usize> = link
        .plan
        .slots()
        .iter()
        .map(|s| bit_rng.random_range(0..s.constellation.size()))
        .collect();
    let sent = link.plan.assign(&idx)?;
    let ch = ChannelRealization {
        h: complex_gaussian(&mut trial_rng(seed, trial, StreamRole::Channel), link.code.n(), link.receive_antennas),
        rho,
    };
    let noise = complex_gaussian(&mut trial_rng(seed, trial, StreamRole::Noise), link.code.t(), link.receive_antennas);
    let x = encode(&link.code, link.alpha, &sent.values)?;
    let rv = stack_received(&receive(&x, &ch, &noise));
    let heq = real_equivalent(&link.code, link.alpha, &ch)?;
    let (ml, _) = link.detector.ml_decode_exhaustive(&heq, rv.as_slice())?;
    let (cond, _) = link.detector.group_decode(&heq, rv.as_slice(), GroupMode::Conditional)?;
    let (plain, _) = link.detector.group_decode(&heq, rv.as_slice(), GroupMode::Plain)?;
    Ok(ml.indices == cond.indices && ml.indices == plain.indices)
}

fn decoder_equivalence() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in FIXTURES {
        let link = link_for(name);
        let mut mismatches = 0usize;
        let mut errors = 0usize;
        for (k, rho) in [1.0, 10.0, 100.0].into_iter().enumerate() {
            let res: Vec<Result<bool, TransceiverError>> = (0..1000u64)
                .into_par_iter()
                .map(|t| decide_both(&link, (k as u64) << 32 | t, rho))
                .collect();
            errors += res.iter().filter(|r| r.is_err()).count();
            mismatches += res.iter().filter(|r| matches!(r, Ok(false))).count();
        }
        ok &= mismatches == 0 && errors == 0;
        notes.push(format!("{name}:{mismatches}"));
    }
    outcome(ok, format!("3000 trials each, mismatches {}", notes.join(" ")))
}

fn real_equivalent_consistency() -> Outcome {
    let mut worst_rel = 0f64;
    let mut worst_cos = 0f64;
    let mut names: Vec<&str> = FIXTURES.to_vec();
    names.push("alamouti");
    for name in names {
        let link = link_for(name);
        let membership = link.code.partition().membership();
        let l = link.code.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5ea1);
        for _ in 0..100 {
            let s: Vec<f64> = (0..l).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ch = ChannelRealization {
                h: complex_gaussian(&mut rng, link.code.n(), link.receive_antennas),
                rho: 10f64.powf(rng.random_range(0.0..3.0)),
            };
            let noise = complex_gaussian(&mut rng, link.code.t(), link.receive_antennas);
            let x = encode(&link.code, link.alpha, &s).expect("lengths agree");
            let direct = stack_received(&receive(&x, &ch, &noise));
            let heq = real_equivalent(&link.code, link.alpha, &ch).expect("shapes agree");
            let via = heq.effective() * nalgebra::DVector::from_column_slice(&s) + stack_received(&noise);
            worst_rel = worst_rel.max((&direct - &via).norm() / direct.norm());
            for p in 0..l {
                for q in p + 1..l {
                    if membership[p] != membership[q] {
                        let (a, b) = (heq.h.column(p), heq.h.column(q));
                        worst_cos = worst_cos.max(a.dot(&b).abs() / (a.norm() * b.norm()));
                    }
                }
            }
        }
    }
    outcome(
        worst_rel <= 1e-9 && worst_cos < 1e-9,
        format!("max relative gap {worst_rel:.2e}, max cross-group cosine {worst_cos:.2e}"),
    )
}

fn diversity_certification() -> Outcome {
    let code = load_code("un2_reduced").expect("fixture");
    let plan = default_plan("un2_reduced", code.len()).expect("plan");
    match certify_full_diversity(&code, &plan) {
        Ok(c) => outcome(
            c.min_rank == 2,
            format!("{} codewords pairs {}, min_rank {}, min_det {:.4}", plan.codebook_size(), c.pairs, c.min_rank, c.min_det),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn sweep(code: &str, snr: Vec<f64>, target: u64, noiseless: bool) -> Result<BerResult, String> {
    let cfg = SimulationConfig {
        code: code.into(),
        receive_antennas: receive_antennas(code),
        snr_db: snr,
        target_bit_errors: target,
        max_trials: if noiseless { 500 } else { 20_000_000 },
        seed: 20,
        workers: workers(),
        batch: 20_000,
        noiseless,
        decoder: DecoderKind::Group,
        ..SimulationConfig::default()
    };
    run_ber_sweep(&cfg).map_err(|e| format!("{code}: {e}"))
}

fn ber_properties() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    // (a) every fixture decodes perfectly without noise.
    let mut zero = Vec::new();
    for name in gdstbc::sim::NAMED_CODES {
        match sweep(name, vec![10.0], 1, true) {
            Ok(res) => {
                let e = res.points[0].bit_errors;
                ok &= e == 0;
                if e != 0 {
                    zero.push(format!("{name}:{e}"));
                }
            }
            Err(e) => {
                ok = false;
                zero.push(e);
            }
        }
    }
    notes.push(if zero.is_empty() { "(a) noiseless BER 0 for all".to_string() } else { format!("(a) failing {}", zero.join(" ")) });

    // (b) strictly decreasing with at least 200 errors per point.
    match sweep("un2_reduced", (0..=6).map(|k| 4.0 * k as f64).collect(), 200, false) {
        Ok(res) => {
            let enough = res.points.iter().all(|p| p.bit_errors >= 200);
            let dec = res.strictly_decreasing();
            ok &= enough && dec && res.bits_per_block == 8;
            let bers: Vec<String> = res.points.iter().map(|p| format!("{:.2e}", p.ber)).collect();
            notes.push(format!("(b) decreasing={dec} >=200 errors={enough} BER {}", bers.join(" ")));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("(b) {e}"));
        }
    }

    // (c) ordering at 20 dB with disjoint 95% intervals.
    let at20: Result<Vec<BerResult>, String> = ["alamouti", "un2_reduced", "blast"]
        .into_iter()
        .map(|c| sweep(c, vec![20.0], 1000, false))
        .collect();
    match at20 {
        Ok(rs) => {
            let rate: Vec<f64> = rs.iter().map(|r| r.bits_per_block as f64 / load_code(&r.code).map(|c| c.t()).unwrap_or(1) as f64).collect();
            let p: Vec<(f64, f64)> = rs.iter().map(|r| (r.points[0].ber, r.points[0].ci_halfwidth)).collect();
            let same_rate = rate.iter().all(|&x| x == rate[0]);
            let lower = p[0].0 + p[0].1 < p[1].0 - p[1].1;
            let upper = p[1].0 + p[1].1 < p[2].0 - p[2].1;
            ok &= same_rate && lower && upper;
            notes.push(format!(
                "(c) alamouti {:.2e}±{:.1e} < un2_reduced {:.2e}±{:.1e} < blast {:.2e}±{:.1e} at {} b/cu",
                p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1, rate[0]
            ));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("(c) {e}"));
        }
    }
    outcome(ok, notes.join("; "))
}

fn determinism() -> Outcome {
    let base = SimulationConfig {
        code: "un2_reduced".into(),
        snr_db: vec![0.0, 8.0, 16.0],
        target_bit_errors: 300,
        max_trials: 40_000,
        seed: 99,
        batch: 777,
        ..SimulationConfig::default()
    };
    let csv = |w: usize| {
        run_ber_sweep(&SimulationConfig { workers: w, ..base.clone() })
            .and_then(|r| r.to_csv())
            .map_err(|e| e.to_string())
    };
    match (csv(1), csv(4)) {
        (Ok(a), Ok(b)) => outcome(a == b, format!("{} bytes, identical={}", a.len(), a == b)),
        (a, b) => outcome(false, format!("{:?} {:?}", a.err(), b.err())),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, Duration); 10] = [
        ("construction fixture match", construction_fixture, Duration::from_secs(1)),
        ("constraint rank suite", constraint_rank_suite, Duration::from_secs(30)),
        ("verifier suite", verifier_suite, Duration::MAX),
        ("complexity tables", complexity_tables, Duration::MAX),
        ("rate formulas", rate_formulas, Duration::MAX),
        ("decoder oracle equivalence", decoder_equivalence, Duration::from_secs(120)),
        ("real-equivalent consistency", real_equivalent_consistency, Duration::MAX),
        ("diversity certification", diversity_certification, Duration::from_secs(60)),
        ("BER properties", ber_properties, Duration::from_secs(600)),
        ("determinism across worker counts", determinism, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let out = check();
        let took = started.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget_note = if budget == Duration::MAX { String::new() } else { format!(" / {:.0} s", budget.as_secs_f64()) };
        println!(
            "{} {:>2} {name} ({:.2} s{budget_note}): {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
