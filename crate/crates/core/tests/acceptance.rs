//! Acceptance criteria. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion, then exits non-zero if any failed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trialdesign::evaluation::{balance_statistic, mean_relative_gap, monte_carlo_beta_variance};
use trialdesign::inner_max::{solve_inner_max_with, InnerMethod};
use trialdesign::linalg::symmetric_eigenvalues;
use trialdesign::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn synthetic(n: usize, p: usize, seed: u64) -> CovariateMatrix64 {
    generate_synthetic(&SyntheticSpec::new(n, p, seed).unwrap())
}

fn hypercube(p: usize) -> Vec<Vec<f64>> {
    (0u64..1 << (p - 1))
        .map(|bits| {
            (0..p)
                .map(|k| if k == 0 || (bits >> (k - 1)) & 1 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

fn balanced_canonical(n: usize) -> Vec<Allocation> {
    (0u64..1 << (n - 1))
        .filter_map(|bits| {
            let x: Vec<i8> = (0..n)
                .map(|i| if i == 0 || (bits >> (i - 1)) & 1 == 0 { 1 } else { -1 })
                .collect();
            Allocation::balanced(x).ok()
        })
        .collect()
}

fn random_z(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..p)
        .map(|k| if k == 0 || rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// A random instance with even n in [lo, hi] and p in [p_lo, p_hi], with p
/// capped at n/2 as synthetic instances require.
fn random_instance(rng: &mut ChaCha8Rng, lo: usize, hi: usize, p_lo: usize, p_hi: usize) -> (CovariateMatrix64, Allocation) {
    let n = 2 * rng.random_range(lo / 2..=hi / 2);
    let p = rng.random_range(p_lo..=p_hi.min(n / 2));
    let h = synthetic(n, p, rng.random());
    let x = random_balanced_allocations(n, 1, rng.random()).unwrap().remove(0);
    (h, x)
}

fn identity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (h, x) = random_instance(&mut rng, 6, 40, 2, 6);
        let cache = SpectralCache::new(&h).unwrap();
        let z = random_z(h.p(), &mut rng);
        let lhs = cache.psi(&x).unwrap().quad_form(&z);
        let rhs = cache.upsilon(&z).unwrap().quad_form(&x.to_scalars());
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    outcome(worst <= 1e-8, format!("max scaled residual {worst:.2e}"))
}

fn psd_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lowest = f64::INFINITY;
    for _ in 0..100 {
        let (h, _) = random_instance(&mut rng, 6, 40, 2, 6);
        let cache = SpectralCache::new(&h).unwrap();
        let z = random_z(h.p(), &mut rng);
        lowest = lowest.min(symmetric_eigenvalues(&cache.upsilon(&z).unwrap())[0]);
        lowest = lowest.min(symmetric_eigenvalues(&cache.lb_matrix())[0]);
    }
    outcome(lowest >= -1e-8, format!("smallest eigenvalue {lowest:.2e}"))
}

fn lower_bound_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let (h, x) = random_instance(&mut rng, 6, 40, 2, 6);
        let cache = SpectralCache::new(&h).unwrap();
        let lb = cache.lb_value(&x).unwrap();
        let rows = cache.surrogate_value(&x, &CovariateSpace::Rows).unwrap().value;
        worst = worst.max(lb - rows);
    }
    outcome(worst <= 1e-8, format!("max lb − surrogate(rows) {worst:.2e}"))
}

fn exactness_of_exact() -> Outcome {
    let mut max_err = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..25u64 {
        let n = [8, 10, 12][seed as usize % 3];
        let p = 1 + (seed as usize / 3) % 4;
        let h = synthetic(n, p, 1000 + seed);
        let cache = SpectralCache::new(&h).unwrap();
        let zs = hypercube(p);
        let brute = balanced_canonical(n)
            .iter()
            .map(|x| {
                let s = cache.surrogate_matrix(x).unwrap();
                zs.iter().map(|z| s.quad_form(z)).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        let r = solve_exact(&h, &SolveLimits::default().with_epsilon(1e-6)).unwrap();
        let err = (r.surrogate_value - brute).abs();
        max_err = max_err.max(err);
        if err > 1e-6 || r.diagnostics.iterations > 1 << (p - 1) || r.status != Status::Optimal {
            failures.push(format!("seed {seed} (n={n}, p={p}): err {err:.2e}, {} iterations", r.diagnostics.iterations));
        }
    }
    outcome(failures.is_empty(), format!("max |exact − brute| {max_err:.2e} {}", failures.join("; ")))
}

fn exactness_of_solvers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bqp_bad = 0;
    for trial in 0..50 {
        let n = 4 + trial % 11;
        let k = 1 + trial % 3;
        let cuts: Vec<Cut<f64>> = (0..k)
            .map(|_| {
                let r = 1 + rng.random_range(0..n.min(4));
                let b = Matrix::from_fn(n, r, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let mut a = b.matmul(&b.transpose());
                a.symmetrize();
                Cut { constant: rng.random::<f64>(), matrix: a }
            })
            .collect();
        let set = CutSet::new(cuts).unwrap();
        let brute = balanced_canonical(n).iter().map(|x| set.evaluate(x)).fold(f64::INFINITY, f64::min);
        let r = minimize_max_quadratic(&set, &SolveLimits::unlimited().with_mode(SolveMode::Exact)).unwrap();
        if r.status != BqpStatus::Optimal || (r.value - brute).abs() > 1e-6 {
            bqp_bad += 1;
        }
    }
    let mut inner_bad = 0;
    for trial in 0..50 {
        let p = 2 + trial % 11;
        let m = Matrix::from_fn(p, p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let m = m.add(&m.transpose()).scale(0.5);
        let problem = InnerMaxProblem::new(m).unwrap();
        let e = solve_inner_max_with(&problem, &SolveLimits::unlimited(), InnerMethod::Enumeration);
        let b = solve_inner_max_with(&problem, &SolveLimits::unlimited(), InnerMethod::BranchAndBound);
        if !b.optimal || (e.value - b.value).abs() > 1e-9 * (1.0 + e.value.abs()) {
            inner_bad += 1;
        }
    }
    outcome(
        bqp_bad == 0 && inner_bad == 0,
        format!("bqp mismatches {bqp_bad}/50, inner-max mismatches {inner_bad}/50"),
    )
}

fn paper_trend() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for p in [4usize, 10] {
        for seed in 0..5u64 {
            let h = synthetic(100, p, seed);
            let limits = SolveLimits::default().with_seed(seed);
            let lb = solve_lb(&h, &limits).unwrap();
            let rand = rand_report(&h, &CovariateSpace::FullHypercube, 100, seed).unwrap();
            let summary = rand.rand.unwrap();
            let orig_q50 = summary.original.map_or(f64::INFINITY, |q| q.q50);
            let lb_orig = lb.original_value.unwrap_or(f64::INFINITY);
            let surr_ok = lb.surrogate_value <= summary.surrogate.q05;
            let orig_ok = lb_orig <= orig_q50;
            // The exact run gets a reduced budget here; the comparison only
            // binds when it certifies optimality.
            let exact = solve_exact(&h, &limits.clone().with_time_limit(Some(15.0))).unwrap();
            let exact_ok = exact.status != Status::Optimal || exact.surrogate_value <= lb.surrogate_value + 1e-6;
            ok &= surr_ok && orig_ok && exact_ok;
            lines.push(format!(
                "p={p} seed={seed}: LB surr {:.4} vs RAND5% {:.4}, LB orig {:.4} vs RAND50% {:.4}, EXACT {:.4} ({:?})",
                lb.surrogate_value, summary.surrogate.q05, lb_orig, orig_q50, exact.surrogate_value, exact.status
            ));
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    outcome(ok, format!("{} runs", lines.len()))
}

fn variance_reduction_trend() -> Outcome {
    let h = synthetic(100, 10, 7);
    let lb = solve_lb(&h, &SolveLimits::default().with_seed(7)).unwrap();
    let r = variance_reduction(&h, &lb.allocation, 1000, 1000, 7).unwrap();
    outcome(r.fraction_positive >= 0.9, format!("fraction positive {:.3}", r.fraction_positive))
}

fn balance_scaling() -> Outcome {
    let mut medians = Vec::new();
    for n in [50usize, 100, 200, 400] {
        let h = synthetic(n, 5, 11);
        let cache = SpectralCache::new(&h).unwrap();
        let mut stats: Vec<f64> = random_balanced_allocations(n, 20, 8)
            .unwrap()
            .iter()
            .map(|x| balance_statistic(&cache, x).unwrap())
            .collect();
        stats.sort_by(f64::total_cmp);
        medians.push(trialdesign::baselines::nearest_rank(&stats, 50));
    }
    let ok = medians.windows(2).all(|w| w[1] <= w[0]);
    outcome(ok, format!("medians {medians:.4?}"))
}

fn appendix_gap_trend() -> Outcome {
    let pooled = |n: usize| -> f64 {
        let mut gaps = Vec::new();
        for seed in 0..5u64 {
            let h = synthetic(n, 4, seed);
            let xs = random_balanced_allocations(n, 50, seed).unwrap();
            gaps.push(mean_relative_gap(&surrogate_gap_scan(&h, &xs).unwrap()).unwrap());
        }
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let (small, large) = (pooled(60), pooled(240));
    outcome(large < small, format!("mean relative gap n=60 {small:.4e}, n=240 {large:.4e}"))
}

fn monte_carlo_oracle() -> Outcome {
    let h = synthetic(60, 4, 21);
    let x = random_balanced_allocations(60, 1, 21).unwrap().remove(0);
    let sigma = SpectralCache::new(&h).unwrap().sigma_beta(&x).unwrap();
    let spec = SimulationSpec::new(vec![0.5, -1.0, 0.25, 2.0], vec![1.0, 0.5, -0.5, 0.0], 1.0, 21).unwrap();
    let empirical = monte_carlo_beta_variance(&h, &x, &spec, 2000).unwrap();
    let worst = (0..4)
        .map(|j| (empirical[j] - sigma[(j, j)]).abs() / sigma[(j, j)])
        .fold(0.0f64, f64::max);
    outcome(worst <= 0.10, format!("max relative deviation {worst:.3}"))
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

fn main() {
    // libtest-style filters are accepted but ignored.
    let criteria: [Criterion; 10] = [
        (1, "surrogate correction identity", 5.0, identity_suite),
        (2, "positive semidefinite cut matrices", 10.0, psd_suite),
        (3, "lower bound below row surrogate", 10.0, lower_bound_inequality),
        (4, "exact cutting plane vs brute force", 60.0, exactness_of_exact),
        (5, "bqp and inner-max vs enumeration", 60.0, exactness_of_solvers),
        (6, "LB_APPROX vs RAND quantiles", 600.0, paper_trend),
        (7, "variance reduction fraction", 300.0, variance_reduction_trend),
        (8, "balance ratio decreases with n", 120.0, balance_scaling),
        (9, "surrogate gap shrinks with n", 300.0, appendix_gap_trend),
        (10, "Monte Carlo interaction variance", 120.0, monte_carlo_oracle),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = o.passed && secs < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name} [{secs:.2}s / {budget:.0}s] {}",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
