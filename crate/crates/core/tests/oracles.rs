//! Brute-force oracles and property checks against the solvers.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use trialdesign::bqp::relaxation_bound;
use trialdesign::evaluation::{mean_random_sigma, mean_relative_gap};
use trialdesign::inner_max::{solve_inner_max_with, InnerMethod};
use trialdesign::*;

/// Every ±1 vector of length `n` with `|Σx| ≤ 1` and first entry +1.
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

fn hypercube(p: usize) -> Vec<Vec<f64>> {
    (0u64..1 << (p - 1))
        .map(|bits| {
            (0..p)
                .map(|k| if k == 0 || (bits >> (k - 1)) & 1 == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
    let b = Matrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut a = b.matmul(&b.transpose()).scale(1.0 / rank as f64);
    a.symmetrize();
    a
}

fn random_symmetric(p: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
    let mut a = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    a = a.add(&a.transpose()).scale(0.5);
    a
}

fn synthetic(n: usize, p: usize, seed: u64) -> CovariateMatrix64 {
    generate_synthetic(&SyntheticSpec::new(n, p, seed).unwrap())
}

fn brute_surrogate_minmax(h: &CovariateMatrix64) -> f64 {
    let cache = SpectralCache::new(h).unwrap();
    let zs = hypercube(h.p());
    balanced_canonical(h.n())
        .iter()
        .map(|x| {
            let s = cache.surrogate_matrix(x).unwrap();
            zs.iter().map(|z| s.quad_form(z)).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn inner_max_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..40 {
        let p = 1 + trial % 10;
        let m = random_symmetric(p, &mut rng);
        let best = hypercube(p)
            .iter()
            .map(|z| m.quad_form(z))
            .fold(f64::NEG_INFINITY, f64::max);
        let problem = InnerMaxProblem::new(m).unwrap();
        for method in [InnerMethod::Enumeration, InnerMethod::BranchAndBound] {
            let r = solve_inner_max_with(&problem, &SolveLimits::unlimited(), method);
            assert!((r.value - best).abs() <= 1e-10 * (1.0 + best.abs()), "{method:?} p = {p}");
            assert!(r.optimal);
        }
    }
}

#[test]
fn bqp_exact_matches_brute_force_with_several_cuts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..12 {
        let n = 6 + trial % 7;
        let cuts: Vec<Cut<f64>> = (0..3)
            .map(|_| Cut {
                constant: rng.random::<f64>(),
                matrix: random_psd(n, 2 + trial % 3, &mut rng),
            })
            .collect();
        let set = CutSet::new(cuts).unwrap();
        let brute = balanced_canonical(n)
            .iter()
            .map(|x| set.evaluate(x))
            .fold(f64::INFINITY, f64::min);
        let r = minimize_max_quadratic(&set, &SolveLimits::unlimited().with_mode(SolveMode::Exact)).unwrap();
        assert_eq!(r.status, BqpStatus::Optimal);
        assert!(r.value <= brute + 1e-6, "n = {n}: {} vs {brute}", r.value);
        assert!(r.lower_bound <= brute + 1e-8);
        assert!(r.x_star.is_balanced() && r.x_star.as_slice()[0] == 1);
        assert!((set.evaluate(&r.x_star) - r.value).abs() < 1e-12);
    }
}

#[test]
fn relaxation_never_exceeds_subcube_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..30 {
        let n = 5 + trial % 6;
        let set = CutSet::new(vec![
            Cut { constant: 0.0, matrix: random_psd(n, 3, &mut rng) },
            Cut { constant: 0.3, matrix: random_psd(n, 2, &mut rng) },
        ])
        .unwrap();
        let mut partial = vec![0i8; n];
        for v in partial.iter_mut().take(trial % 4) {
            *v = if rng.random::<bool>() { 1 } else { -1 };
        }
        let fixed: Vec<usize> = (0..n).filter(|&i| partial[i] != 0).collect();
        let completions: Vec<Allocation> = (0u64..1 << n)
            .filter_map(|bits| {
                let x: Vec<i8> = (0..n).map(|i| if (bits >> i) & 1 == 1 { 1 } else { -1 }).collect();
                let a = Allocation::balanced(x).ok()?;
                fixed.iter().all(|&i| a.as_slice()[i] == partial[i]).then_some(a)
            })
            .collect();
        if completions.is_empty() {
            continue;
        }
        let truth = completions.iter().map(|x| set.evaluate(x)).fold(f64::INFINITY, f64::min);
        let bound = relaxation_bound(&set, &partial);
        assert!(bound <= truth + 1e-9, "bound {bound} above subcube minimum {truth}");
    }
}

#[test]
fn cutting_plane_matches_double_enumeration() {
    for seed in 0..8 {
        let n = [8, 10, 12][seed as usize % 3];
        let p = 2 + seed as usize % 3;
        let h = synthetic(n, p, seed);
        let brute = brute_surrogate_minmax(&h);
        let r = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.surrogate_value - brute).abs() <= 1e-6, "seed {seed}");
        assert!(r.diagnostics.iterations <= 1 << (p - 1));
    }
}

#[test]
fn synthetic_ten_by_three_seed_one() {
    let h = synthetic(10, 3, 1);
    let r = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
    assert!((r.surrogate_value - brute_surrogate_minmax(&h)).abs() <= 1e-6);
}

#[test]
fn intercept_only_closed_form() {
    for n in 2..9usize {
        let rows = vec![[1.0f64]; n];
        let h = CovariateMatrix::from_rows(&rows).unwrap();
        let r = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
        let s = (n % 2) as f64 / n as f64;
        assert!((r.surrogate_value - (1.0 + s * s) / n as f64).abs() < 1e-12);
    }
}

#[test]
fn lb_approx_matches_enumeration_on_twelve_by_four() {
    let h = synthetic(12, 4, 3);
    let cache = SpectralCache::new(&h).unwrap();
    let all = balanced_canonical(12);
    assert_eq!(all.len(), 462);
    let brute = all
        .iter()
        .map(|x| cache.lb_quadratic(x).unwrap())
        .fold(f64::INFINITY, f64::min);
    let r = solve_lb(&h, &SolveLimits::unlimited().with_mode(SolveMode::Exact)).unwrap();
    let q = cache.lb_quadratic(&r.allocation).unwrap();
    assert!((q - brute).abs() < 1e-9);
    assert_eq!(r.status, Status::Optimal);
}

#[test]
fn heuristic_agrees_with_exact_on_small_instances() {
    let mut agree = 0;
    for seed in 0..50u64 {
        let n = [8, 10, 12, 14][seed as usize % 4];
        let p = 2 + seed as usize % 3;
        let h = synthetic(n, p, 100 + seed);
        let cuts = CutSet::single(SpectralCache::new(&h).unwrap().lb_matrix()).unwrap();
        let exact = minimize_max_quadratic(&cuts, &SolveLimits::unlimited().with_mode(SolveMode::Exact)).unwrap();
        let heur = minimize_max_quadratic(
            &cuts,
            &SolveLimits::unlimited().with_mode(SolveMode::Heuristic).with_seed(seed),
        )
        .unwrap();
        assert!(heur.value >= exact.value - 1e-6);
        if heur.value <= exact.value + 1e-9 {
            agree += 1;
        }
    }
    assert!(agree >= 45, "heuristic matched exact on {agree} of 50");
}

#[test]
fn rand_minimum_is_above_exact_optimum() {
    for seed in 0..4 {
        let h = synthetic(10, 3, 40 + seed);
        let exact = solve_exact(&h, &SolveLimits::unlimited()).unwrap();
        let xs = random_balanced_allocations(10, 60, seed).unwrap();
        let b = rand_quantiles(&h, &CovariateSpace::FullHypercube, &xs, Objective::Surrogate).unwrap();
        let min = b.values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= exact.surrogate_value - 1e-9);
    }
}

#[test]
fn toy_rand_values() {
    let h = CovariateMatrix64::from_rows(&[[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]]).unwrap();
    let all: Vec<Allocation> = balanced_canonical(4).into_iter().flat_map(|x| [x.negated(), x]).collect();
    assert_eq!(all.len(), 6);
    let b = rand_quantiles(&h, &CovariateSpace::FullHypercube, &all, Objective::Surrogate).unwrap();
    for v in b.values.iter().flatten() {
        assert!((v - 0.5).abs() < 1e-12 || (v - 1.0).abs() < 1e-12, "{v}");
    }
    assert!((b.quantiles.q50 - 0.5).abs() < 1e-12);
}

#[test]
fn balanced_states_are_uniform() {
    let draws = 10_000;
    let mut counts = std::collections::HashMap::new();
    for a in random_balanced_allocations(4, draws, 2).unwrap() {
        *counts.entry(a).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 6);
    let p = 1.0 / 6.0;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    for &c in counts.values() {
        assert!((c as f64 / draws as f64 - p).abs() <= 3.0 * se);
    }
}

#[test]
fn mean_sigma_commutes_with_quadratic_form() {
    let h = synthetic(16, 3, 2);
    let cache = SpectralCache::new(&h).unwrap();
    let (mean, _) = mean_random_sigma(&cache, 40, 7).unwrap();
    let designs: Vec<Allocation> = BalancedSampler::new(16, 7)
        .filter(|x| cache.sigma_beta(x).is_ok())
        .take(40)
        .collect();
    for z in hypercube(3) {
        let direct = designs.iter().map(|x| cache.sigma_beta(x).unwrap().quad_form(&z)).sum::<f64>() / 40.0;
        assert!((mean.quad_form(&z) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }
}

#[test]
fn gap_shrinks_with_sample_size() {
    let gap = |n: usize| {
        let h = synthetic(n, 4, 1);
        let xs = random_balanced_allocations(n, 50, 3).unwrap();
        mean_relative_gap(&surrogate_gap_scan(&h, &xs).unwrap()).unwrap()
    };
    assert!(gap(100) < gap(60));
}

fn small_instance() -> impl Strategy<Value = (usize, usize, u64, u64)> {
    (3usize..=10, 2usize..=5, any::<u64>(), any::<u64>()).prop_filter_map("n ≥ 2p", |(half, p, s1, s2)| {
        let n = 2 * half;
        (n >= 2 * p).then_some((n, p, s1, s2))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn surrogate_correction_equals_upsilon_form((n, p, hs, xs) in small_instance()) {
        let h = synthetic(n, p, hs);
        let cache = SpectralCache::new(&h).unwrap();
        let x = random_balanced_allocations(n, 1, xs).unwrap().remove(0);
        let psi = cache.psi(&x).unwrap();
        let xv = x.to_scalars::<f64>();
        for z in hypercube(p) {
            let lhs = psi.quad_form(&z);
            let rhs = cache.upsilon(&z).unwrap().quad_form(&xv);
            prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn lower_bound_below_row_surrogate((n, p, hs, xs) in small_instance()) {
        let h = synthetic(n, p, hs);
        let cache = SpectralCache::new(&h).unwrap();
        let x = random_balanced_allocations(n, 1, xs).unwrap().remove(0);
        let lb = cache.lb_value(&x).unwrap();
        let rows = cache.surrogate_value(&x, &CovariateSpace::Rows).unwrap().value;
        prop_assert!(lb <= rows + 1e-8);
    }

    #[test]
    fn lb_matrix_is_scale_invariant((n, p, hs, _xs) in small_instance(), c in 0.1f64..20.0) {
        let h = synthetic(n, p, hs);
        let q = SpectralCache::new(&h).unwrap().lb_matrix();
        let q2 = SpectralCache::new(&h.scaled_covariates(c).unwrap()).unwrap().lb_matrix();
        prop_assert!(q.sub(&q2).max_abs() < 1e-9);
    }

    #[test]
    fn negation_preserves_objectives((n, p, hs, xs) in small_instance()) {
        let h = synthetic(n, p, hs);
        let cache = SpectralCache::new(&h).unwrap();
        let x = random_balanced_allocations(n, 1, xs).unwrap().remove(0);
        let a = cache.surrogate_value(&x, &CovariateSpace::FullHypercube).unwrap().value;
        let b = cache.surrogate_value(&x.negated(), &CovariateSpace::FullHypercube).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a));
        prop_assert_eq!(cache.lb_value(&x).unwrap().to_bits(), cache.lb_value(&x).unwrap().to_bits());
    }

    #[test]
    fn quantiles_are_ordered(values in prop::collection::vec(-1e6f64..1e6, 1..300)) {
        let q = trialdesign::baselines::quantiles(&values);
        prop_assert!(q.q01 <= q.q05 && q.q05 <= q.q50);
    }

    #[test]
    fn recommendation_ignores_positive_scale(beta in prop::collection::vec(-5f64..5.0, 4), scale in 0.01f64..100.0, bits in 0u8..8) {
        let z: Vec<f64> = (0..4).map(|k| if k == 0 || (bits >> (k - 1)) & 1 == 0 { 1.0 } else { -1.0 }).collect();
        let m = FittedModel { alpha_hat: vec![0.0; 4], beta_hat: beta.clone() };
        let scaled = FittedModel { alpha_hat: vec![0.0; 4], beta_hat: beta.iter().map(|b| b * scale).collect() };
        prop_assert_eq!(recommend(&m, &z), recommend(&scaled, &z));
    }
}
