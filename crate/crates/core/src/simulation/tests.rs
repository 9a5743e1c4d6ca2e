use std::collections::BTreeMap;

use super::*;
use crate::classifier::{Classifier, LinearClassifier};
use crate::elicitation::{ChoiceModel, ChoiceQuery};
use crate::recourse::{brute_force_search, ConstraintSet, PreferenceWeights, RecourseProblem, RecourseResult};
use crate::schema::tests::{toy_profile, toy_schema};
use crate::schema::{Action, FeatureSet, Intervention, UserProfile, Value};
use crate::session::SessionMode;

fn salary_rule() -> LabelRule {
    LabelRule {
        terms: BTreeMap::from([("salary".to_string(), RuleTerm::Numeric(1.0))]),
        threshold: Some(0.5),
    }
}

fn spec(n_rows: usize, noise: f64, seed: u64) -> SyntheticDataSpec {
    SyntheticDataSpec { schema: toy_schema(), n_rows, label_rule: salary_rule(), label_noise: noise, seed }
}

#[test]
fn noiseless_rule_labels_are_exact() {
    let data = gen_dataset(&spec(500, 0.0, 3)).unwrap();
    assert_eq!(data.rows.len(), 500);
    for (p, y) in &data.rows {
        let salary = p.get("salary").unwrap().as_num().unwrap();
        let scaled = (salary - 1000.0) / 9000.0;
        assert_eq!(*y, u8::from(scaled > 0.5), "salary {salary}");
    }
}

#[test]
fn dataset_generation_is_deterministic_and_validated() {
    let a = gen_dataset(&spec(200, 0.1, 9)).unwrap();
    let b = gen_dataset(&spec(200, 0.1, 9)).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(gen_dataset(&spec(0, 0.0, 0)), Err(SimulationError::EmptyDataset));
    assert_eq!(gen_dataset(&spec(10, 0.5, 0)), Err(SimulationError::InvalidNoise(0.5)));
}

#[test]
fn unreachable_threshold_falls_back_to_median() {
    let mut s = spec(300, 0.0, 1);
    s.label_rule.threshold = Some(100.0);
    let data = gen_dataset(&s).unwrap();
    let positives = data.rows.iter().filter(|(_, y)| *y == 1).count();
    assert!(positives > 0 && positives < 300);
}

#[test]
fn unknown_rule_feature_is_rejected() {
    let mut s = spec(10, 0.0, 0);
    s.label_rule.terms.insert("height".into(), RuleTerm::Numeric(1.0));
    assert!(matches!(gen_dataset(&s), Err(SimulationError::InvalidRule(_))));
}

fn salary_to(v: f64) -> Intervention {
    Intervention::new(vec![Action::new("salary", v)]).unwrap()
}

/// Three salary raises of increasing size: costs 0.1, 0.2, 0.3 under weight 1 on salary.
fn three_raises(schema: &FeatureSet) -> ChoiceQuery {
    let x = toy_profile(schema);
    ChoiceQuery::new(
        vec![salary_to(2900.0), salary_to(3800.0), salary_to(4700.0)],
        x,
        ConstraintSet::default(),
        schema,
    )
    .unwrap()
}

fn user(beta: f64, seed: u64) -> SimulatedUser {
    let w = PreferenceWeights::new(vec![0.5, 0.5]).unwrap();
    SimulatedUser::new(w, ChoiceModel::new(beta).unwrap(), [0.1, 0.2, 0.3, 0.4], seed).unwrap()
}

#[test]
fn near_deterministic_user_picks_the_cheapest() {
    let schema = toy_schema();
    let q = three_raises(&schema);
    let mut u = user(1e6, 5);
    assert!((0..1000).all(|_| sim_choose(&mut u, &q) == 0));
}

#[test]
fn indifferent_user_chooses_uniformly() {
    let schema = toy_schema();
    let q = three_raises(&schema);
    let mut u = user(0.0, 11);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[sim_choose(&mut u, &q)] += 1;
    }
    let p = 1.0 / 3.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn single_alternative_is_always_chosen() {
    let schema = toy_schema();
    let q = ChoiceQuery::new(vec![salary_to(2900.0)], toy_profile(&schema), ConstraintSet::default(), &schema).unwrap();
    let mut u = user(1.0, 0);
    assert_eq!(sim_choose(&mut u, &q), 0);
}

#[test]
fn ratings_follow_cutpoints() {
    let schema = toy_schema();
    let x = toy_profile(&schema);
    let cs = ConstraintSet::default();
    let w = PreferenceWeights::new(vec![1.0, 0.0]).unwrap();
    let u = SimulatedUser::new(w, ChoiceModel::default(), [0.1, 0.2, 0.3, 0.4], 0).unwrap();
    assert_eq!(sim_rate(&u, &salary_to(2400.0), &x, &cs, &schema).unwrap(), 5);
    assert_eq!(sim_rate(&u, &salary_to(7000.0), &x, &cs, &schema).unwrap(), 1);
    assert_eq!(sim_rate(&u, &salary_to(4000.0), &x, &cs, &schema).unwrap(), 3);
}

#[test]
fn rating_at_a_cutpoint_rounds_down() {
    assert_eq!(user::rating_for_cost(&[0.1, 0.2, 0.3, 0.4], 0.2), 3);
    assert_eq!(user::rating_for_cost(&[0.1, 0.2, 0.3, 0.4], 0.19), 4);
    assert_eq!(user::rating_for_cost(&[0.1, 0.2, 0.3, 0.4], 0.0), 5);
    assert_eq!(user::rating_for_cost(&[0.1, 0.2, 0.3, 0.4], 0.41), 1);
}

#[test]
fn thresholds_are_validated_and_calibrated() {
    let w = PreferenceWeights::new(vec![0.5, 0.5]).unwrap();
    assert_eq!(
        SimulatedUser::new(w.clone(), ChoiceModel::default(), [0.1, 0.1, 0.3, 0.4], 0).unwrap_err(),
        SimulationError::InvalidThresholds
    );
    let unnormalized = PreferenceWeights::new(vec![1.0, 1.0]).unwrap();
    assert_eq!(
        SimulatedUser::new(unnormalized, ChoiceModel::default(), [0.1, 0.2, 0.3, 0.4], 0).unwrap_err(),
        SimulationError::InvalidTrueWeights
    );
    let costs: Vec<f64> = (0..=10).map(f64::from).collect();
    assert_eq!(calibrate_thresholds(&costs).unwrap(), [2.0, 4.0, 6.0, 8.0]);
    let flat = calibrate_thresholds(&[1.0; 5]).unwrap();
    assert!(flat.windows(2).all(|p| p[0] < p[1]));
    assert_eq!(calibrate_thresholds(&[]), Err(SimulationError::InvalidThresholds));
}

#[test]
fn drawn_weights_lie_on_the_simplex() {
    for seed in 0..20 {
        let w = SimulatedUser::draw_weights(6, seed);
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.as_slice().iter().all(|v| *v > 0.0));
    }
    assert_eq!(SimulatedUser::draw_weights(4, 3), SimulatedUser::draw_weights(4, 3));
}

fn fake_optimum(cost: f64) -> RecourseResult {
    RecourseResult { intervention: Intervention::empty(), cost, valid: true, rollouts_used: 0 }
}

#[test]
fn regret_is_the_cost_gap() {
    let schema = toy_schema();
    let x = toy_profile(&schema);
    let cs = ConstraintSet::default();
    let w = PreferenceWeights::new(vec![0.5, 0.5]).unwrap();
    let to_msc = Intervention::new(vec![Action::new("education", "msc")]).unwrap();
    let r = regret(&to_msc, &x, &w, &cs, &schema, &fake_optimum(0.2)).unwrap();
    assert!((r - 0.3).abs() < 1e-12, "{r}");
    assert!(matches!(
        regret(&to_msc, &x, &w, &cs, &schema, &fake_optimum(0.6)),
        Err(SimulationError::BelowOptimum(_))
    ));
}

/// Approves when scaled salary plus an education bonus exceeds 0.6.
fn toy_classifier() -> LinearClassifier {
    LinearClassifier::new(vec![1.0, 0.0, 0.3, 0.6, 0.0], 0.6)
}

#[test]
fn regret_of_the_optimum_is_zero() {
    let schema = toy_schema();
    let x = toy_profile(&schema);
    let cs = ConstraintSet::default();
    let w = PreferenceWeights::new(vec![0.7, 0.3]).unwrap();
    let h = toy_classifier();
    let problem = RecourseProblem { schema: &schema, classifier: &h, profile: &x, weights: &w, constraints: &cs };
    let best = brute_force_search(&problem, 2).unwrap();
    assert_eq!(regret(&best.intervention, &x, &w, &cs, &schema, &best).unwrap(), 0.0);
}

fn toy_profiles(schema: &FeatureSet) -> Vec<UserProfile> {
    [(1500.0, "hs"), (2000.0, "bsc"), (3000.0, "hs"), (9000.0, "msc")]
        .into_iter()
        .map(|(s, e)| {
            let m = BTreeMap::from([
                ("salary".to_string(), Value::Num(s)),
                ("education".to_string(), Value::from(e)),
                ("age_at_enrollment".to_string(), Value::Num(40.0)),
            ]);
            UserProfile::new(m, schema).unwrap()
        })
        .collect()
}

fn small_benchmark(mode: SessionMode, seeds: Vec<u64>, rounds: u32) -> BenchmarkConfig {
    let mut c = BenchmarkConfig { seeds, rounds, mode, stop_on_accept: false, calibration_rollouts: 300, ..Default::default() };
    c.session.budget.max_rollouts = 300;
    c.session.particles = 100;
    c.max_len = 2;
    c.session.budget.max_intervention_len = 2;
    c
}

#[test]
fn one_seed_one_round_gives_one_row() {
    let schema = toy_schema();
    let h = toy_classifier();
    let report = run_benchmark(&small_benchmark(SessionMode::GuidedChoice, vec![4], 1), &schema, &h, &toy_profiles(&schema)).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!((row.seed, row.round), (4, 1));
    assert!(row.regret >= 0.0);
    assert!(row.cosine.is_some());
    assert_eq!(report.summary.validity_violations, 0);
    assert!(report.to_csv().starts_with("seed,round,mode,regret,cosine,cost,accepted\n"));
}

#[test]
fn exploratory_rows_have_no_cosine() {
    let schema = toy_schema();
    let h = toy_classifier();
    let report = run_benchmark(&small_benchmark(SessionMode::Exploratory, vec![0, 1], 2), &schema, &h, &toy_profiles(&schema)).unwrap();
    assert!(!report.rows.is_empty());
    assert!(report.rows.iter().all(|r| r.cosine.is_none()));
}

#[test]
fn benchmark_is_deterministic() {
    let schema = toy_schema();
    let h = toy_classifier();
    let cfg = small_benchmark(SessionMode::GuidedRate, vec![0, 1, 2], 3);
    let a = run_benchmark(&cfg, &schema, &h, &toy_profiles(&schema)).unwrap();
    let b = run_benchmark(&cfg, &schema, &h, &toy_profiles(&schema)).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.summary_json(), b.summary_json());
}

#[test]
fn benchmark_without_rejected_profiles_fails() {
    let schema = toy_schema();
    let h = LinearClassifier::new(vec![0.0; 5], -1.0);
    assert_eq!(
        run_benchmark(&small_benchmark(SessionMode::GuidedChoice, vec![0], 1), &schema, &h, &toy_profiles(&schema)).unwrap_err(),
        SimulationError::NoProfiles
    );
}

#[test]
fn oracle_instances_are_rejected_and_small() {
    for index in 0..30 {
        let inst = random_instance(17, index, 3);
        let a = inst.schema.actionable_count();
        assert!((2..=5).contains(&a));
        assert!(inst.schema.features().iter().all(|f| f.domain_len() <= 4));
        assert_eq!(inst.classifier.predict(&inst.profile, &inst.schema).unwrap(), 0);
    }
}

#[test]
fn oracle_suite_passes_on_a_sample() {
    let report = oracle_check(&OracleConfig { instances: 10, rollouts: 5000, max_len: 3, seed: 2 }).unwrap();
    assert_eq!(report.outcomes.len(), 10);
    assert_eq!(report.dominance_violations(), 0);
    assert!(report.render().ends_with(&format!(
        "instances 10  passed {}  pass_rate {:.4}  dominance_violations 0\n",
        report.passed(),
        report.pass_rate()
    )));
}
