//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line each and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use specequiv::catalog::{printed_forms, theorem_pair, theorem_pairs};
use specequiv::equiv::{run_suite, SuiteConfig, MATRIX_EXACT_TOL};
use specequiv::gof::{omega2, pvalue_imhof, Sample};
use specequiv::mc::{sample_quadratic_form, two_sample_compare, McConfig};
use specequiv::opeval::kron;
use specequiv::opexpr::{format, parse, Atom, OperatorExpr, Weight};
use specequiv::quad::gauss_legendre;
use specequiv::spectral::{grid_spectrum, nystrom_spectrum, pinned_sheet_spectrum, sym_eigenvalues};
use specequiv::process;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Outcome {
    let cases = [
        ("T T'", (|j: f64| ((j - 0.5) * PI).powi(-2)) as fn(f64) -> f64),
        ("T(I-P)T'", |j: f64| (j * PI).powi(-2)),
    ];
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for (text, oracle) in cases {
        let start = Instant::now();
        let s = match nystrom_spectrum(&parse(text).unwrap(), 1, 500, 10, true) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("{text}: {e}")),
        };
        slowest = slowest.max(start.elapsed().as_secs_f64());
        if s.values.len() < 10 {
            return outcome(false, format!("{text}: only {} eigenvalues", s.values.len()));
        }
        for (j, v) in s.values.iter().take(10).enumerate() {
            worst = worst.max(rel(*v, oracle(j as f64 + 1.0)));
        }
    }
    outcome(
        worst <= 1e-4 && slowest < 10.0,
        format!("max rel dev {worst:.2e}, slowest {slowest:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let d2 = pinned_sheet_spectrum(2, 300, 1).map(|s| s.values[0]);
    let d3 = pinned_sheet_spectrum(3, 80, 1).map(|s| s.values[0]);
    let elapsed = start.elapsed().as_secs_f64();
    let (Ok(l2), Ok(l3)) = (d2, d3) else {
        return outcome(false, "secular solver failed");
    };
    let expr = process("pinned-sheet", 2).unwrap().covariance;
    let ny = match nystrom_spectrum(&expr, 2, 80, 1, false) {
        Ok(s) => s.values[0],
        Err(e) => return outcome(false, format!("nystrom: {e}")),
    };
    let ok = (1.0 / l2 - 15.814).abs() <= 0.02
        && (1.0 / l3 - 30.196).abs() <= 0.05
        && elapsed < 60.0
        && rel(ny, l2) <= 0.01;
    outcome(
        ok,
        format!(
            "1/l1 = {:.6} (d=2), {:.6} (d=3) in {elapsed:.2}s; nystrom d=2 n=80 rel dev {:.2e}",
            1.0 / l2,
            1.0 / l3,
            rel(ny, l2)
        ),
    )
}

fn criterion_3() -> Outcome {
    let verdicts = match run_suite(&SuiteConfig::default()) {
        Ok(v) => v,
        Err(e) => return outcome(false, e.to_string()),
    };
    let positives: Vec<_> = verdicts.iter().filter(|v| v.expected == Some(true)).collect();
    let controls: Vec<_> = verdicts.iter().filter(|v| v.expected == Some(false)).collect();
    let bad: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.as_expected() || (v.expected == Some(true) && v.max_rel_dev > MATRIX_EXACT_TOL))
        .map(|v| format!("{}@d{}", v.id, v.d))
        .collect();
    let worst = positives.iter().map(|v| v.max_rel_dev).fold(0.0, f64::max);
    outcome(
        bad.is_empty() && positives.len() == theorem_pairs().len() && controls.len() == 2,
        format!(
            "{} pairs, worst rel dev {worst:.2e}, {} controls rejected{}",
            positives.len(),
            controls.iter().filter(|v| !v.pass).count(),
            if bad.is_empty() { String::new() } else { format!("; unexpected: {}", bad.join(", ")) }
        ),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_det = 0.0f64;
    for _ in 0..200 {
        let a = random_matrix(&mut rng, 6);
        let b = random_matrix(&mut rng, 6);
        let (ab, ba) = (&a * &b, &b * &a);
        for _ in 0..5 {
            let t: f64 = rng.random_range(-1.0..1.0);
            let id = Mat::<f64>::identity(6, 6);
            let l = (&id - &ab * faer::Scale(t)).determinant();
            let r = (&id - &ba * faer::Scale(t)).determinant();
            worst_det = worst_det.max((l - r).abs() / l.abs().max(1.0));
        }
    }
    let mut worst_kron = 0.0f64;
    for _ in 0..200 {
        let (p, q) = (rng.random_range(2..6), rng.random_range(2..6));
        let a = random_matrix(&mut rng, p);
        let b = random_matrix(&mut rng, q);
        let (a, b) = (&a + a.transpose(), &b + b.transpose());
        let ea = sym_eigenvalues(&a).unwrap();
        let eb = sym_eigenvalues(&b).unwrap();
        let mut products: Vec<f64> = ea.iter().flat_map(|x| eb.iter().map(move |y| x * y)).collect();
        products.sort_by(|x, y| y.total_cmp(x));
        let direct = sym_eigenvalues(&kron(&a, &b)).unwrap();
        let scale = products.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in products.iter().zip(&direct) {
            worst_kron = worst_kron.max((x - y).abs() / scale);
        }
    }
    outcome(
        worst_det <= 1e-10 && worst_kron <= 1e-10,
        format!("det identity dev {worst_det:.2e}, kronecker spectrum dev {worst_kron:.2e}"),
    )
}

/// Exact integral of `(F_n - prod z)^2`: on every cell cut out by the sample
/// coordinates `F_n` is constant and the integrand is quadratic per axis.
fn omega2_by_cells(rows: &[Vec<f64>]) -> f64 {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let rule = gauss_legendre(2);
    let axes: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| {
            let mut cuts: Vec<f64> = rows.iter().map(|r| r[k]).chain([0.0, 1.0]).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts.windows(2)
                .flat_map(|w| {
                    let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                    rule.0.iter().zip(&rule.1).map(move |(t, wt)| (mid + half * t, wt * half))
                })
                .collect()
        })
        .collect();
    let total_points: usize = axes.iter().map(Vec::len).product();
    (0..total_points)
        .map(|mut flat| {
            let mut z = Vec::with_capacity(d);
            let mut w = 1.0;
            for axis in &axes {
                let (x, wx) = axis[flat % axis.len()];
                flat /= axis.len();
                z.push(x);
                w *= wx;
            }
            let emp = rows.iter().filter(|r| r.iter().zip(&z).all(|(a, b)| a <= b)).count() as f64 / n;
            w * (emp - z.iter().product::<f64>()).powi(2)
        })
        .sum()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let d = rng.random_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let closed = omega2(&Sample::uniform(rows.clone()).unwrap()).unwrap();
        worst = worst.max((closed - omega2_by_cells(&rows)).abs());
    }
    let single = |r: Vec<f64>| omega2(&Sample::uniform(vec![r]).unwrap()).unwrap();
    let examples = [(vec![0.0], 1.0 / 3.0), (vec![0.5], 1.0 / 12.0), (vec![0.0, 0.0], 11.0 / 18.0)];
    let example_dev = examples.iter().map(|(r, v)| (single(r.clone()) - v).abs()).fold(0.0, f64::max);
    outcome(
        worst <= 1e-10 && example_dev <= 1e-15,
        format!("closed form vs quadrature {worst:.2e}, worked examples dev {example_dev:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let quantiles = [0.05, 0.2, 0.5, 1.0, 1.5, 2.5, 3.84, 5.0, 6.63, 9.0];
    let mut worst_chi = 0.0f64;
    for x in quantiles {
        let p1 = pvalue_imhof(&[1.0], x).unwrap();
        let p2 = pvalue_imhof(&[1.0, 1.0], x).unwrap();
        worst_chi = worst_chi.max((p1 - erfc((x / 2.0).sqrt())).abs());
        worst_chi = worst_chi.max((p2 - (-x / 2.0).exp()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reps = 200_000;
    let mut worst_z = 0.0f64;
    for list in 0..5u64 {
        let m = rng.random_range(1..=8);
        let eigs: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let x: f64 = eigs.iter().sum::<f64>() * rng.random_range(0.5..2.0);
        let draws = sample_quadratic_form(&eigs, &McConfig::new(reps, 600 + list, m)).unwrap();
        let emp = draws.iter().filter(|v| **v > x).count() as f64 / reps as f64;
        let p = pvalue_imhof(&eigs, x).unwrap();
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        worst_z = worst_z.max((emp - p).abs() / se);
    }
    outcome(
        worst_chi <= 1e-4 && worst_z <= 3.0,
        format!("chi-square tail dev {worst_chi:.2e}, worst mc deviation {worst_z:.2} s.e."),
    )
}

fn criterion_7() -> Outcome {
    let reps = 20_000;
    let trunc = 50;
    let pair = theorem_pair("thm3", None, 2).unwrap();
    let spectrum = |e: &OperatorExpr, d: usize, n: usize| grid_spectrum(e, d, n, Default::default()).unwrap().values;
    let (l, r) = (spectrum(&pair.lhs.covariance, 2, 40), spectrum(&pair.rhs.covariance, 2, 40));
    let wiener = spectrum(&process("wiener", 1).unwrap().covariance, 1, 256);
    let bridge = spectrum(&process("bridge", 1).unwrap().covariance, 1, 256);
    let mut accepted = 0;
    let mut rejected = 0;
    for k in 0..100u64 {
        let draw = |eigs: &[f64], seed: u64| sample_quadratic_form(&eigs[..trunc], &McConfig::new(reps, seed, trunc)).unwrap();
        if two_sample_compare(&draw(&l, 4 * k), &draw(&r, 4 * k + 1)).unwrap().p_approx >= 0.01 {
            accepted += 1;
        }
        if two_sample_compare(&draw(&wiener, 4 * k + 2), &draw(&bridge, 4 * k + 3)).unwrap().p_approx < 0.01 {
            rejected += 1;
        }
    }
    outcome(
        accepted >= 95 && rejected == 100,
        format!("equivalent pair not rejected {accepted}/100, wiener vs bridge rejected {rejected}/100"),
    )
}

fn random_atom(rng: &mut ChaCha8Rng) -> Atom {
    match rng.random_range(0..8) {
        0 => Atom::Identity,
        1 => Atom::Integrate,
        2 => Atom::IntegrateRight,
        3 => Atom::ConstProjector,
        4 => Atom::Multiplier(Weight::named(Weight::BUILTIN[rng.random_range(0..4)]).unwrap()),
        5 => Atom::rl(rng.random_range(0.51..4.0)).unwrap(),
        6 => Atom::PolyProjector(rng.random_range(0..5)),
        _ => Atom::Flip,
    }
}

fn random_scalar(rng: &mut ChaCha8Rng) -> f64 {
    let mag = match rng.random_range(0..3) {
        0 => rng.random_range(1..5) as f64,
        1 => rng.random_range(1..8) as f64 / 4.0,
        _ => rng.random_range(0.01..10.0),
    };
    if rng.random_bool(0.3) {
        -mag
    } else {
        mag
    }
}

fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> OperatorExpr {
    if depth == 0 || rng.random_bool(0.3) {
        return OperatorExpr::Atom(random_atom(rng));
    }
    let children = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> Vec<OperatorExpr> {
        (0..rng.random_range(lo..=hi)).map(|_| random_expr(rng, depth - 1)).collect()
    };
    match rng.random_range(0..5) {
        0 => OperatorExpr::Compose(children(rng, 2, 4)),
        1 => OperatorExpr::Adjoint(Box::new(random_expr(rng, depth - 1))),
        2 => OperatorExpr::Tensor(children(rng, 2, 3)),
        3 => OperatorExpr::Scale(random_scalar(rng), Box::new(random_expr(rng, depth - 1))),
        _ => OperatorExpr::Sum(children(rng, 2, 3).into_iter().map(|e| (random_scalar(rng), e)).collect()),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let e = random_expr(&mut rng, 4);
        let text = format(&e);
        match parse(&text) {
            Ok(back) if back == e.normalize() => {}
            Ok(_) => failures.push(format!("#{i} `{text}` changed")),
            Err(err) => failures.push(format!("#{i} `{text}`: {err}")),
        }
    }
    let forms = printed_forms();
    let unparsed: Vec<&String> = forms.iter().filter(|f| parse(f).is_err()).collect();
    let first = failures.first().cloned().unwrap_or_default();
    outcome(
        failures.is_empty() && unparsed.is_empty(),
        format!(
            "{} of 1000 fuzzed ASTs failed{}, {} of {} catalog forms unparsable",
            failures.len(),
            if first.is_empty() { String::new() } else { format!(" (first: {first})") },
            unparsed.len(),
            forms.len()
        ),
    )
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn cli_examples() -> Vec<Vec<String>> {
    let (u, clustered) = (fixture("u.csv"), fixture("clustered.csv"));
    let lines: Vec<Vec<&str>> = vec![
        vec!["spectrum", "--name", "pinned-sheet", "--dim", "2", "--method", "secular", "--modes", "300", "--top", "5"],
        vec!["spectrum", "--expr", "T T'", "--grid", "500", "--top", "3"],
        vec!["spectrum", "--expr", "I", "--grid", "8", "--top", "1"],
        vec!["equiv", "--theorem", "thm3", "--dim", "2", "--grid", "40"],
        vec!["equiv", "--lhs", "T T'", "--rhs", "T(I-P)T'", "--grid", "200"],
        vec!["equiv", "--suite", "--dims", "1,2"],
        vec!["gof", "--data", &u, "--dim", "2", "--margins", "uniform,uniform"],
        vec!["gof", "--data", &clustered, "--dim", "2", "--margins", "uniform,uniform", "--alpha", "0.05"],
        vec!["gof", "--data", &u, "--dim", "1", "--margins", "uniform"],
        vec!["simulate", "--name", "wiener", "--reps", "20000", "--seed", "7", "--grid", "200", "--modes", "100"],
        vec!["simulate", "--name", "bridge", "--reps", "20000", "--seed", "7", "--grid", "200", "--modes", "100"],
        vec!["simulate", "--name", "wiener", "--reps", "0"],
        vec!["table"],
    ];
    lines.into_iter().map(|l| l.into_iter().map(String::from).collect()).collect()
}

fn criterion_9() -> Outcome {
    let bin = PathBuf::from(env!("CARGO_BIN_EXE_specequiv"));
    let mut differing = Vec::new();
    let examples = cli_examples();
    for args in &examples {
        let run = || Command::new(&bin).args(args).output().expect("binary runs");
        let (a, b) = (run(), run());
        if a.stdout != b.stdout || a.stderr != b.stderr || a.status.code() != b.status.code() {
            differing.push(args[..2.min(args.len())].join(" "));
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} of {} examples byte-identical across runs{}",
            examples.len() - differing.len(),
            examples.len(),
            if differing.is_empty() { String::new() } else { format!("; differing: {}", differing.join(", ")) }
        ),
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 9] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ];
    let mut failed = 0;
    for (i, check) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = check();
        println!(
            "criterion {}: {} ({}) [{:.1}s]",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!r.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
