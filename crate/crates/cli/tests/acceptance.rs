//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use abss_core::evaluation::{
    evaluate_pool, ndcg, overlap_rate, paired_t_test, EvalOptions, NdcgOptions, PairedSamples,
    QualityTable,
};
use abss_core::io::{read_tensor, validate_manifest, write_tensor, DiagnosticKind};
use abss_core::scoring::{
    gaussian_kernel_1d, gaussian_kernel_2d, score_dit, score_unet, sharpen, smooth_1d, smooth_2d,
};
use abss_core::selection::{nfe_baseline, nfe_dit, nfe_unet, BaselineMethod, BaselineParams};
use abss_core::synth::{generate_invalid_fixtures, generate_pool, write_pools, SynthSpec, UniformStream};
use abss_core::{oracle, AttnTensor, ScoringConfig, TokenCategory};
use ndarray::{Array1, Array2, Array3};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn nfe_reproduction() -> Outcome {
    let unet = nfe_unet(10, 3, 10, 50).map_err(|e| e.to_string())?;
    let dit = nfe_dit(10, 3, 10, 50, 12, 30).map_err(|e| e.to_string())?;
    let params = BaselineParams::reference_setting();
    let golden = nfe_baseline(BaselineMethod::Golden, &params).map_err(|e| e.to_string())?.nfe;
    let ns = nfe_baseline(BaselineMethod::Ns, &params).map_err(|e| e.to_string())?.nfe;
    check(
        (unet - 73.33).abs() <= 0.01
            && (dit - 71.33).abs() <= 0.01
            && (golden - 216.7).abs() <= 0.05
            && (ns - 333.3).abs() <= 0.05,
        format!("unet {unet:.4}, dit {dit:.4}, golden {golden:.4}, ns {ns:.4}"),
    )
}

fn random_data(u: &mut UniformStream, len: usize) -> Vec<f32> {
    (0..len).map(|_| u.next_f64() as f32).collect()
}

fn random_set(u: &mut UniformStream, lo: usize, hi: usize) -> BTreeSet<usize> {
    let size = 1 + (u.next_f64() * 4.0) as usize;
    (0..size).map(|_| lo + (u.next_f64() * (hi - lo) as f64) as usize).collect()
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut u = UniformStream::new(0xACCE);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (m, h, w, n) = if case == 0 {
            (8, 32, 32, 77)
        } else {
            (
                1 + (u.next_f64() * 8.0) as usize,
                1 + (u.next_f64() * 32.0) as usize,
                1 + (u.next_f64() * 32.0) as usize,
                3 + (u.next_f64() * 75.0) as usize,
            )
        };
        let data = random_data(&mut u, m * h * w * n);
        let set = random_set(&mut u, 1, n - 1);
        let cfg = ScoringConfig {
            kernel_radius: (u.next_f64() * 3.0) as usize,
            sigma: 0.5 + u.next_f64() * 2.0,
            ..ScoringConfig::default()
        };
        let tensor = AttnTensor::new(vec![m, h * w, n], data.clone()).map_err(|e| e.to_string())?;
        let got = score_unet(&tensor, (h, w), &set, &cfg).map_err(|e| e.to_string())?;
        let tokens: Vec<usize> = set.into_iter().collect();
        let want = oracle::unet_score(&data, m, h, w, n, &tokens, cfg.beta, cfg.kernel_radius, cfg.sigma);
        worst = worst.max(rel_err(got, want));
    }
    for case in 0..100 {
        let side = if case == 0 { 1200 } else { 2 + (u.next_f64() * 1199.0) as usize };
        let txt = if case == 0 { 77 } else { 1 + (u.next_f64() * (side - 1).min(300) as f64) as usize };
        let img = side - txt;
        let data = random_data(&mut u, side * side);
        let set = random_set(&mut u, 0, txt);
        let cfg = ScoringConfig {
            kernel_radius: (u.next_f64() * 3.0) as usize,
            sigma: 0.5 + u.next_f64() * 2.0,
            ..ScoringConfig::default()
        };
        let tensor = AttnTensor::new(vec![side, side], data.clone()).map_err(|e| e.to_string())?;
        let got = score_dit(&tensor, img, &set, &cfg).map_err(|e| e.to_string())?;
        let tokens: Vec<usize> = set.into_iter().collect();
        let want = oracle::dit_score(&data, side, img, &tokens, cfg.kernel_radius, cfg.sigma);
        worst = worst.max(rel_err(got, want));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 60.0,
        format!("200 inputs, worst relative error {worst:.3e}, {secs:.1}s"),
    )
}

fn softmax_kernel_invariants() -> Outcome {
    let mut u = UniformStream::new(7);
    let mut worst_sum: f64 = 0.0;
    for case in 0..50 {
        let (h, w, n) = (1 + case % 9, 1 + case % 7, 2 + case % 77);
        let scale = [1.0, 10.0, 1000.0][case % 3];
        let field = Array3::from_shape_fn((h, w, n), |_| u.next_f64() * scale);
        let beta = [1.0, 100.0, 1e4][case % 3];
        let p = sharpen(field.view(), beta);
        for row in p.rows() {
            worst_sum = worst_sum.max((row.sum() - 1.0).abs());
        }
    }

    let mut worst_norm: f64 = 0.0;
    let mut symmetric = true;
    for k in 0..=6 {
        for &sigma in &[0.2, 0.5, 1.0, 2.0, 5.0] {
            let k1 = gaussian_kernel_1d(k, sigma);
            let k2 = gaussian_kernel_2d(k, sigma);
            worst_norm = worst_norm.max((k1.weights().sum() - 1.0).abs());
            worst_norm = worst_norm.max((k2.weights().sum() - 1.0).abs());
            let r = k as isize;
            for dy in -r..=r {
                symmetric &= k1.at(dy) == k1.at(-dy);
                for dx in -r..=r {
                    let v = k2.at(dy, dx);
                    symmetric &= v == k2.at(-dy, dx) && v == k2.at(dy, -dx) && v == k2.at(dx, dy);
                }
            }
        }
    }

    let mut bounded = true;
    let mut constant_exact = true;
    for case in 0..100 {
        let (h, w) = (1 + case % 11, 1 + (case * 7) % 13);
        let k2 = gaussian_kernel_2d(case % 4, 0.3 + (case % 5) as f64);
        let k1 = gaussian_kernel_1d(case % 4, 0.3 + (case % 5) as f64);
        let field = Array2::from_shape_fn((h, w), |_| u.next_f64() * 10.0 - 5.0);
        let (lo, hi) = field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        bounded &= smooth_2d(field.view(), &k2).iter().all(|&v| lo <= v && v <= hi);
        let signal = Array1::from_shape_fn(h * w, |_| u.next_f64());
        let (lo, hi) = signal.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        bounded &= smooth_1d(signal.view(), &k1).iter().all(|&v| lo <= v && v <= hi);

        let c = u.next_f64() * 3.0;
        constant_exact &= smooth_2d(Array2::from_elem((h, w), c).view(), &k2).iter().all(|&v| v == c);
        constant_exact &= smooth_1d(Array1::from_elem(h * w, c).view(), &k1).iter().all(|&v| v == c);
    }
    check(
        worst_sum < 1e-6 && worst_norm <= 1e-9 && symmetric && bounded && constant_exact,
        format!(
            "max |row sum - 1| {worst_sum:.2e}, max |kernel sum - 1| {worst_norm:.2e}, symmetric {symmetric}, bounded {bounded}, constants exact {constant_exact}"
        ),
    )
}

fn planted_recovery() -> Outcome {
    let cfg = ScoringConfig::default();
    let opts = EvalOptions::default();
    let mut perfect = 0;
    for rng in 0..50 {
        let pool = generate_pool(&SynthSpec {
            rng_seed: rng,
            planted_gap: 0.5,
            noise_scale: 0.01,
            ..SynthSpec::unet("planted", (16, 16), 77, [5])
        })
        .map_err(|e| e.to_string())?;
        let a = evaluate_pool(&pool.records, &pool.annotations(), TokenCategory::Core, &cfg, &pool.quality, &opts)
            .map_err(|e| e.to_string())?;
        if a.selected == pool.ground_truth[..3] && a.overlap == 1.0 && a.ndcg.ndcg == 1.0 {
            perfect += 1;
        }
    }

    let trials = 1000;
    let mut total = 0.0;
    for rng in 0..trials {
        let pool = generate_pool(&SynthSpec {
            rng_seed: 10_000 + rng,
            planted_gap: 0.0,
            noise_scale: 1.0,
            ..SynthSpec::unet("null", (4, 4), 8, [3])
        })
        .map_err(|e| e.to_string())?;
        let a = evaluate_pool(&pool.records, &pool.annotations(), TokenCategory::Core, &cfg, &pool.quality, &opts)
            .map_err(|e| e.to_string())?;
        total += overlap_rate(&a.selected, &pool.ground_truth[..3]).map_err(|e| e.to_string())?;
    }
    let mean = total / trials as f64;
    check(
        perfect == 50 && (mean - 0.30).abs() <= 0.05,
        format!("planted: {perfect}/50 perfect (overlap 1, NDCG 1); null: mean overlap@3 {mean:.4} over {trials} seeds"),
    )
}

fn reference_p(t: f64, df: usize) -> f64 {
    2.0 * StudentsT::new(0.0, 1.0, df as f64).unwrap().cdf(-t.abs())
}

fn statistics_correctness() -> Outcome {
    let s = PairedSamples::new(vec![1.0, -1.0, 2.0, 0.0], vec![0.0; 4]).map_err(|e| e.to_string())?;
    let r = paired_t_test(&s).map_err(|e| e.to_string())?;
    let example_ok = (r.t_statistic - 0.7746).abs() < 1e-4
        && r.df == 3
        && (r.p_two_sided - 0.4950).abs() < 1e-4
        && (r.p_two_sided - reference_p(r.t_statistic, r.df)).abs() < 1e-3;

    let mut u = UniformStream::new(99);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 2 + (u.next_f64() * 60.0) as usize;
        let shift = (u.next_f64() - 0.5) * 2.0;
        let spread = 0.05 + u.next_f64() * 2.0;
        let a: Vec<f64> = (0..n).map(|_| u.next_f64() * 10.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + shift + (u.next_f64() - 0.5) * spread).collect();
        let r = paired_t_test(&PairedSamples::new(a, b).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max((r.p_two_sided - reference_p(r.t_statistic, r.df)).abs());
    }
    check(
        example_ok && worst < 1e-4,
        format!(
            "example t {:.4} df {} p {:.4}; 200-case grid max |p - reference| {worst:.2e}",
            r.t_statistic, r.df, r.p_two_sided
        ),
    )
}

fn run_cli(args: &[&str], threads: &str) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_abss"))
        .args(args)
        .env("ABSS_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("abss {args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn cli_outputs(dir: &Path, threads: &str, tag: &str) -> Result<(Vec<u8>, Vec<u8>), String> {
    let scores = dir.join(format!("scores-{tag}.json"));
    let ranking = dir.join(format!("ranking-{tag}.json"));
    let s = |p: &Path| p.to_str().unwrap().to_string();
    run_cli(
        &["score", "--manifest", &s(&dir.join("manifest.json")), "--annotations", &s(&dir.join("annotations.json")), "--out", &s(&scores)],
        threads,
    )?;
    run_cli(&["rank", "--scores", &s(&scores), "--k", "3", "--nfe", "t=10,T=50,family=unet", "--out", &s(&ranking)], threads)?;
    Ok((fs::read(&scores).map_err(|e| e.to_string())?, fs::read(&ranking).map_err(|e| e.to_string())?))
}

fn determinism_and_format() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let pools = (0..4)
        .map(|i| {
            generate_pool(&SynthSpec {
                prompt_id: format!("p{i}"),
                rng_seed: i,
                noise_scale: 0.5,
                layout: abss_core::synth::SynthLayout::Unet { spatial: (16, 16), stacked: 2 },
                ..SynthSpec::unet("", (16, 16), 77, [4, 5])
            })
        })
        .collect::<abss_core::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    write_pools(&pools, dir).map_err(|e| e.to_string())?;

    let reference = cli_outputs(dir, "1", "ref")?;
    let mut identical = true;
    for (i, threads) in ["1", "2", "8", "0"].iter().enumerate() {
        identical &= cli_outputs(dir, threads, &format!("run{i}"))? == reference;
    }

    let mut u = UniformStream::new(3);
    let mut round_trip = true;
    for case in 0..50 {
        let shape = match case % 3 {
            0 => vec![1 + case % 4, 1 + case % 9, 1 + case % 5],
            1 => vec![1 + case % 13, 1 + case % 6],
            _ => vec![1 + case],
        };
        let len: usize = shape.iter().product();
        let data: Vec<f32> = (0..len)
            .map(|i| match i % 7 {
                0 => 0.0,
                1 => f32::MIN_POSITIVE / 4.0,
                2 => f32::MAX,
                _ => (u.next_f64() * 1e3) as f32,
            })
            .collect();
        let t = AttnTensor::new(shape, data).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        write_tensor(&t, &mut bytes).map_err(|e| e.to_string())?;
        let back = read_tensor(bytes.as_slice()).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        write_tensor(&back, &mut again).map_err(|e| e.to_string())?;
        round_trip &= back.shape() == t.shape()
            && back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits())
            && again == bytes;
    }

    let invalid = generate_invalid_fixtures(dir.join("invalid")).map_err(|e| e.to_string())?;
    let expected = [DiagnosticKind::Truncated, DiagnosticKind::RowSum, DiagnosticKind::Shape];
    let mut rejected = Vec::new();
    for ((name, manifest), kind) in invalid.iter().zip(expected) {
        let report = validate_manifest(manifest);
        let o = Command::new(env!("CARGO_BIN_EXE_abss"))
            .args(["validate", "--manifest", manifest.to_str().unwrap(), "--format", "text"])
            .output()
            .map_err(|e| e.to_string())?;
        let lines = String::from_utf8_lossy(&o.stdout).lines().count();
        let ok = o.status.code() == Some(1)
            && lines == 1
            && report.diagnostics.len() == 1
            && report.diagnostics[0].kind == kind;
        rejected.push(format!("{name}={}", if ok { kind.as_str() } else { "MISSED" }));
    }
    let all_rejected = rejected.iter().all(|r| !r.ends_with("MISSED"));
    check(
        identical && round_trip && all_rejected,
        format!(
            "score/rank byte-identical across 5 runs and ABSS_THREADS 1/2/8/auto: {identical}; ATTN round trip bit-exact: {round_trip}; validate: {}",
            rejected.join(", ")
        ),
    )
}

fn ndcg_example() -> Outcome {
    let rel = QualityTable::new("p", BTreeMap::from([(1, 3.0), (2, 2.0), (3, 1.0)])).map_err(|e| e.to_string())?;
    let r = ndcg(&[2, 1, 3], &rel, NdcgOptions::default()).map_err(|e| e.to_string())?;
    check(
        (r.ndcg - 0.9225).abs() <= 0.0005,
        format!("DCG {:.4}, IDCG {:.4}, NDCG {:.4}", r.dcg, r.idcg, r.ndcg),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("nfe-reproduction", nfe_reproduction),
        ("oracle-equivalence", oracle_equivalence),
        ("softmax-kernel-invariants", softmax_kernel_invariants),
        ("planted-signal-recovery", planted_recovery),
        ("statistics-correctness", statistics_correctness),
        ("determinism-and-format", determinism_and_format),
        ("evaluation-example", ndcg_example),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
