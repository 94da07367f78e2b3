//! Lie-algebra identities of the three models, checked from the matrices.

use wei_norman::lie::ad_power;
use wei_norman::models::sir_cohort::{bracket_table, exp_ad_table, LABELS};
use wei_norman::{commutator, expm_dense, BirthDeathModel, CohortModel, PureBirthModel, RateFunction, SparseGenerator};

fn cohort(n: usize) -> CohortModel {
    CohortModel::build(RateFunction::Constant(0.2), RateFunction::Constant(0.3), n).unwrap()
}

#[test]
fn birth_death_brackets_on_interior_block() {
    let model = BirthDeathModel::build(RateFunction::Constant(1.0), RateFunction::Constant(1.0), 12).unwrap();
    let interior = 12 - 4;
    let (r, l, m) = (model.raise(), model.lower(), model.number());
    let residual = |x: SparseGenerator, y: &SparseGenerator| x.add_scaled(1.0, y, -1.0).unwrap().restrict(interior).max_abs();
    assert_eq!(residual(commutator(l, r).unwrap(), model.identity()), 0.0);
    assert_eq!(residual(commutator(m, r).unwrap(), r), 0.0);
    assert_eq!(residual(commutator(l, m).unwrap(), l), 0.0);
    let report = model.verify_algebra().unwrap();
    assert!(report.passed(), "{report}");
    assert_eq!(report.max_residual(), 0.0);
}

#[test]
fn cohort_bracket_table_holds_on_matrices() {
    let model = cohort(6);
    let ops = model.operators();
    for a in 0..5 {
        for b in 0..5 {
            let got = commutator(&ops[a], &ops[b]).unwrap();
            let terms: Vec<(f64, &SparseGenerator)> = bracket_table(a, b).into_iter().map(|(k, c)| (c, &ops[k])).collect();
            let want = SparseGenerator::linear_combination(model.dim(), &terms).unwrap();
            assert_eq!(
                got.add_scaled(1.0, &want, -1.0).unwrap().max_abs(),
                0.0,
                "[{}, {}]",
                LABELS[a],
                LABELS[b]
            );
        }
    }
}

#[test]
fn cohort_bracket_table_is_antisymmetric() {
    for a in 0..5 {
        assert!(bracket_table(a, a).is_empty());
        for b in 0..5 {
            let ab = bracket_table(a, b);
            let ba: Vec<(usize, f64)> = bracket_table(b, a).into_iter().map(|(k, c)| (k, -c)).collect();
            assert_eq!(ab, ba);
        }
    }
}

/// `e^{xA} B e^{-xA}` from two dense exponentials, independent of the
/// nested-commutator series.
#[test]
fn cohort_exp_ad_table_matches_conjugation() {
    let model = cohort(4);
    let ops = model.operators();
    for x in [0.3, 1.0, 2.0] {
        for a in 0..5 {
            let forward = expm_dense(&ops[a].scaled(x).to_dense()).unwrap();
            let backward = expm_dense(&ops[a].scaled(-x).to_dense()).unwrap();
            for b in 0..5 {
                let conjugated = &forward * ops[b].to_dense() * &backward;
                let terms: Vec<(f64, &SparseGenerator)> =
                    exp_ad_table(a, b, x).into_iter().map(|(k, c)| (c, &ops[k])).collect();
                let want = SparseGenerator::linear_combination(model.dim(), &terms).unwrap().to_dense();
                let err = (conjugated - want).abs().max();
                assert!(err < 1e-11, "x = {x}, exp(ad {}) {}: {err:e}", LABELS[a], LABELS[b]);
            }
        }
    }
}

#[test]
fn cohort_verify_reports_every_identity() {
    let report = cohort(6).verify_tables(&[0.3, 1.0, 2.0], 1e-12).unwrap();
    assert!(report.passed(), "{report}");
    assert_eq!(report.len(), 51);
}

#[test]
fn pure_birth_relations_hold_away_from_truncation() {
    let model = PureBirthModel::build(RateFunction::Constant(1.0), RateFunction::rational(1.0).unwrap(), 8).unwrap();
    let keep = model.dim() - 2;
    for i in 1..=6 {
        for j in 1..=6 {
            assert_eq!(commutator(model.p(i), model.p(j)).unwrap().max_abs(), 0.0);
        }
        let got = commutator(model.p(i), model.q()).unwrap();
        let want = model.p(i + 1).scaled(-(i as f64)).add_scaled(1.0, model.p(i), (i - 1) as f64).unwrap();
        assert_eq!(got.add_scaled(1.0, &want, -1.0).unwrap().restrict(keep).max_abs(), 0.0, "[P{i}, Q]");
    }
    assert!(model.verify_commutation(2).unwrap().passed());
}

#[test]
fn pure_birth_q_raises_p_index() {
    let model = PureBirthModel::build(RateFunction::Constant(1.0), RateFunction::Constant(1.0), 8).unwrap();
    let ad2 = ad_power(model.q(), model.p(1), 2).unwrap();
    let want = model.p(3).scaled(2.0).add_scaled(1.0, model.p(2), -1.0).unwrap();
    assert_eq!(ad2.add_scaled(1.0, &want, -1.0).unwrap().restrict(model.dim() - 2).max_abs(), 0.0);
}
