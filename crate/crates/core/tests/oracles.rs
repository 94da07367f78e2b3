//! The factorized solutions checked against closed forms and against routes
//! that share no code with the factorization: a hand-written dense
//! exponential for constant rates, and the adaptive integrator otherwise.

use wei_norman::models::birth_death::poisson_pmf;
use wei_norman::ode::{rk45_solve, OdeOptions};
use wei_norman::{
    BirthDeathModel, CohortModel, KrylovExpm, KrylovOptions, ProbabilityVector, PureBirthModel, RateFunction,
    SparseGenerator,
};

fn tight() -> OdeOptions {
    OdeOptions::with_tolerances(1e-11, 1e-13)
}

fn krylov(tol: f64) -> KrylovExpm {
    KrylovExpm::new(KrylovOptions {
        tol,
        ..KrylovOptions::default()
    })
    .unwrap()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `e^{A} v` by Taylor series with scaling and squaring on plain row-major
/// arrays.
fn dense_expm_action(a: &SparseGenerator, v: &[f64]) -> Vec<f64> {
    let n = a.dim();
    let mut m: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| a.get(r, c)).collect()).collect();
    let norm = m.iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    m.iter_mut().flatten().for_each(|x| *x *= scale);
    let matmul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|r| (0..n).map(|c| (0..n).map(|k| x[r][k] * y[k][c]).sum()).collect())
            .collect()
    };
    let mut sum: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = sum.clone();
    for k in 1..=24 {
        term = matmul(&term, &m);
        term.iter_mut().flatten().for_each(|x| *x /= k as f64);
        sum.iter_mut().flatten().zip(term.iter().flatten()).for_each(|(s, t)| *s += t);
    }
    for _ in 0..squarings {
        sum = matmul(&sum, &sum);
    }
    (0..n).map(|r| (0..n).map(|c| sum[r][c] * v[c]).sum()).collect()
}

fn delta(dim: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[k] = 1.0;
    v
}

#[test]
fn birth_death_constant_rates_match_dense_exponential_from_any_state() {
    let (b, d, t) = (1.3, 0.7, 1.8);
    let model = BirthDeathModel::build(RateFunction::Constant(b), RateFunction::Constant(d), 24).unwrap();
    let u = model.factorization().unwrap();
    let h = model.generator(0.0).unwrap().scaled(t);
    for start in [0, 3, 7] {
        let p0 = delta(model.dim(), start);
        let wn = u.apply(t, &p0, &krylov(1e-12)).unwrap().vector;
        let exact = dense_expm_action(&h, &p0);
        assert!(linf(&wn, &exact) < 1e-10, "start {start}: {}", linf(&wn, &exact));
    }
}

#[test]
fn birth_death_mean_solves_its_moment_equation() {
    let (b, d) = (2.0, 0.5);
    let model = BirthDeathModel::build(RateFunction::Constant(b), RateFunction::Constant(d), 4).unwrap();
    for t in [0.1, 1.0, 4.0, 20.0] {
        let exact = b / d * (1.0 - (-d * t).exp());
        assert!((model.mean(t).unwrap() - exact).abs() < 1e-12);
    }
}

#[test]
fn birth_death_time_varying_rates_match_integrator_from_mixed_start() {
    let b = RateFunction::exponential(1.0, 0.3).unwrap();
    let d = RateFunction::square_wave(0.2, 1.0, 0.7, 0.4).unwrap();
    let model = BirthDeathModel::build(b, d, 40).unwrap();
    let mut p0 = vec![0.0; model.dim()];
    p0[1] = 0.25;
    p0[4] = 0.75;
    let t = 2.5;
    let wn = model.factorization().unwrap().apply(t, &p0, &krylov(1e-12)).unwrap().vector;
    let rk = rk45_solve(&model.family().unwrap(), &p0, 0.0, t, tight()).unwrap().values;
    assert!(linf(&wn, &rk) < 1e-8, "{}", linf(&wn, &rk));
}

#[test]
fn birth_death_from_empty_is_poisson() {
    let model = BirthDeathModel::build(RateFunction::Constant(1.0), RateFunction::Constant(1.0), 30).unwrap();
    let t = 1.0;
    let mean = 1.0 - (-1.0f64).exp();
    let wn = model
        .factorization()
        .unwrap()
        .apply(t, &delta(30, 0), &krylov(1e-12))
        .unwrap()
        .vector;
    let mut factorial = 1.0;
    for (n, p) in wn.iter().take(29).enumerate() {
        if n > 0 {
            factorial *= n as f64;
        }
        let exact = (-mean).exp() * mean.powi(n as i32) / factorial;
        assert!((p - exact).abs() < 1e-12, "n = {n}");
    }
    assert!(linf(&poisson_pmf(mean, 29), &wn[..29]) < 1e-12);
}

#[test]
fn cohort_of_one_follows_individual_probabilities() {
    let (lambda, gamma) = (0.4, 0.9);
    let model = CohortModel::build(RateFunction::Constant(lambda), RateFunction::Constant(gamma), 1).unwrap();
    for t in [0.5, 2.0, 7.0] {
        let pi1 = (-lambda * t).exp();
        let pi2 = lambda / (gamma - lambda) * ((-lambda * t).exp() - (-gamma * t).exp());
        let (a, b) = model.pi(t).unwrap();
        assert!((a - pi1).abs() < 1e-13 && (b - pi2).abs() < 1e-13);
        let p0 = delta(3, model.space().index(1, 0).unwrap());
        let wn = model.factorization().unwrap().apply(t, &p0, &krylov(1e-12)).unwrap().vector;
        assert!((wn[model.space().index(1, 0).unwrap()] - pi1).abs() < 1e-11);
        assert!((wn[model.space().index(0, 1).unwrap()] - pi2).abs() < 1e-11);
        assert!((wn[model.space().index(0, 0).unwrap()] - (1.0 - pi1 - pi2)).abs() < 1e-11);
    }
}

#[test]
fn cohort_constant_rates_match_dense_exponential() {
    let model = CohortModel::build(RateFunction::Constant(0.6), RateFunction::Constant(0.25), 5).unwrap();
    let t = 3.0;
    let h = model.generator(0.0).unwrap().scaled(t);
    let mut p0 = vec![0.0; model.dim()];
    p0[model.space().index(3, 1).unwrap()] = 0.5;
    p0[model.space().index(2, 2).unwrap()] = 0.5;
    let wn = model.factorization().unwrap().apply(t, &p0, &krylov(1e-12)).unwrap().vector;
    let exact = dense_expm_action(&h, &p0);
    assert!(linf(&wn, &exact) < 1e-11, "{}", linf(&wn, &exact));
}

#[test]
fn cohort_time_varying_rates_match_integrator_from_mixed_start() {
    let lambda = RateFunction::exponential(0.1, 0.2).unwrap();
    let gamma = RateFunction::square_wave(0.1, 0.5, 1.0, 0.5).unwrap();
    let model = CohortModel::build(lambda, gamma, 8).unwrap();
    let mut p0 = vec![0.0; model.dim()];
    p0[model.space().index(6, 2).unwrap()] = 0.4;
    p0[model.space().index(3, 1).unwrap()] = 0.6;
    let t = 4.0;
    let wn = model.factorization().unwrap().apply(t, &p0, &krylov(1e-12)).unwrap().vector;
    let rk = rk45_solve(&model.family().unwrap(), &p0, 0.0, t, tight()).unwrap().values;
    assert!(linf(&wn, &rk) < 1e-9, "{}", linf(&wn, &rk));
}

#[test]
fn cohort_multinomial_matches_factorized_product() {
    let model = CohortModel::build(RateFunction::Constant(0.2), RateFunction::Constant(0.3), 12).unwrap();
    let p0 = delta(model.dim(), model.space().index(12, 0).unwrap());
    for t in [0.5, 3.0, 10.0] {
        let wn = model.factorization().unwrap().apply(t, &p0, &krylov(1e-12)).unwrap().vector;
        let oracle = model.multinomial_solution(t).unwrap();
        assert!(oracle.linf_distance(&wn).unwrap() < 1e-10);
    }
}

#[test]
fn pure_birth_coefficients_have_closed_form_for_rational_rate() {
    let model = PureBirthModel::build(RateFunction::Constant(1.0), RateFunction::rational(1.0).unwrap(), 12).unwrap();
    for t in [0.3, 2.0, 15.0] {
        let c = model.coefficients(t).unwrap();
        assert!((c.g - (1.0f64 + t).ln()).abs() < 1e-14);
        for (idx, fi) in c.f.iter().enumerate() {
            let i = (idx + 1) as i32;
            let exact = t.powi(i) / (i as f64 * (1.0 + t).powi(i - 1));
            assert!((fi - exact).abs() <= 1e-10 * exact.max(1e-3), "f_{i}({t}) = {fi}, want {exact}");
        }
    }
}

#[test]
fn pure_birth_mean_solves_its_moment_equation() {
    let model = PureBirthModel::build(RateFunction::Constant(1.0), RateFunction::rational(1.0).unwrap(), 120).unwrap();
    for t in [0.5, 1.5, 3.0] {
        let p = model.solve_delta0(t).unwrap().distribution;
        assert!(p.overflow_mass() < 1e-12);
        let mean: f64 = p.values()[..model.overflow_index()]
            .iter()
            .enumerate()
            .map(|(k, pk)| k as f64 * pk)
            .sum();
        let exact = (1.0 + t) * (1.0 + t).ln();
        assert!((mean - exact).abs() < 1e-8, "t = {t}: {mean} vs {exact}");
    }
}

#[test]
fn pure_birth_general_start_matches_integrator() {
    let a = RateFunction::square_wave(0.0, 2.0, 0.3, 0.5).unwrap();
    let b = RateFunction::exponential(0.2, -0.1).unwrap();
    let model = PureBirthModel::build(a, b, 40).unwrap();
    let mut values = vec![0.0; model.dim()];
    values[2] = 0.3;
    values[5] = 0.7;
    let p0 = ProbabilityVector::new(values.clone(), Some(model.overflow_index()), 1e-12).unwrap();
    let t = 3.0;
    let wn = model.solve_general(t, &p0).unwrap().distribution;
    let rk = rk45_solve(&model.family().unwrap(), &values, 0.0, t, tight()).unwrap().values;
    assert!(wn.linf_distance(&rk).unwrap() < 1e-8);
}

#[test]
fn pure_birth_without_linear_births_is_poisson() {
    let a = RateFunction::exponential(0.5, 0.2).unwrap();
    let model = PureBirthModel::build(a.clone(), RateFunction::Constant(0.0), 30).unwrap();
    let t = 4.0;
    let mean = a.antiderivative(t);
    let p = model.solve_delta0(t).unwrap().distribution;
    assert!(linf(&p.values()[..30], &poisson_pmf(mean, 30)) < 1e-10);
}
