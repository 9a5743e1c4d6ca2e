//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recourse_core::classifier::{train_ensemble, Classifier, Dense, EnsembleClassifier, FnClassifier, MlpModel, TrainConfig};
use recourse_core::dataset::Dataset;
use recourse_core::elicitation::{init_posterior, select_choice_set, update_posterior, ChoiceModel, ChoiceQuery, WeightPosterior};
use recourse_core::fixtures::{self, fixture_dir, COMPACT_DATASPEC, COMPACT_MODEL};
use recourse_core::recourse::{ConstraintSet, SearchBudget};
use recourse_core::schema::{parse_schema, Action, FeatureKind, FeatureSet, Intervention, UserProfile, Value};
use recourse_core::session::{
    replay, start_session, Clock, ConstraintUpdate, Phase, SessionConfig, SessionEnv, SessionError, SessionMode,
    SessionState,
};
use recourse_core::simulation::{gen_dataset, oracle_check, run_benchmark, BenchmarkConfig, OracleConfig};

struct Fixture {
    schema: FeatureSet,
    model: EnsembleClassifier,
    rows: Vec<UserProfile>,
}

impl Fixture {
    fn load() -> Fixture {
        let spec = fixtures::load_data_spec(&fixture_dir().join(COMPACT_DATASPEC)).expect("data spec loads");
        let model = fixtures::load_classifier(&fixture_dir().join(COMPACT_MODEL)).expect("model loads");
        let rows = gen_dataset(&spec).expect("dataset generates").rows.into_iter().map(|(p, _)| p).collect();
        Fixture { schema: spec.schema, model, rows }
    }

    fn rejected(&self) -> Vec<UserProfile> {
        self.rows.iter().filter(|p| self.model.predict(p, &self.schema) == Ok(0)).cloned().collect()
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn fixed_clock() -> Clock {
    Clock::Fixed(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap())
}

fn flips(schema: &FeatureSet, h: &dyn Classifier, x: &UserProfile, i: &Intervention) -> bool {
    let mut values = x.values().clone();
    for a in i.actions() {
        values.insert(a.feature.clone(), a.target.clone());
    }
    h.predict_encoded(&schema.encode(&UserProfile::from_map_unchecked(values)).expect("encodes")) == 1
}

/// A random intervention of one to three distinct actionable features, each
/// moved to a different value of its domain.
fn random_intervention(rng: &mut ChaCha8Rng, schema: &FeatureSet, x: &UserProfile) -> Intervention {
    let mut idx: Vec<usize> = schema.actionable_indices().to_vec();
    let len = rng.random_range(1..=3.min(idx.len()));
    let mut actions = Vec::new();
    for _ in 0..len {
        let f = &schema.features()[idx.swap_remove(rng.random_range(0..idx.len()))];
        let current = x.get(&f.name).expect("profile is complete");
        let others: Vec<Value> = f.domain().into_iter().filter(|v| v != current).collect();
        actions.push(Action::new(f.name.clone(), others[rng.random_range(0..others.len())].clone()));
    }
    Intervention::new(actions).expect("distinct features").canonical(schema)
}

fn distinct_interventions(rng: &mut ChaCha8Rng, schema: &FeatureSet, x: &UserProfile, count: usize) -> Vec<Intervention> {
    let mut out: Vec<Intervention> = Vec::new();
    while out.len() < count {
        let i = random_intervention(rng, schema, x);
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Validity of every proposed and accepted plan over 500 sessions.
fn criterion_1(fx: &Fixture) -> Verdict {
    let started = Instant::now();
    let rejected = fx.rejected();
    let env = SessionEnv { schema: &fx.schema, classifier: &fx.model, clock: fixed_clock() };
    let modes = [SessionMode::GuidedChoice, SessionMode::GuidedRate, SessionMode::Exploratory];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut plans, mut assertions, mut violations, mut accepted, mut exhausted) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for n in 0..500u64 {
        let x = &rejected[rng.random_range(0..rejected.len())];
        let mode = modes[(n % 3) as usize];
        let mut st = start_session(x.clone(), mode, &env, SessionConfig::default(), n).expect("session starts");
        for round in 1..=5 {
            st = st.propose(&env).expect("propose");
            if st.phase == Phase::Exhausted {
                exhausted += 1;
                break;
            }
            for p in &st.current_plans {
                plans += 1;
                assertions += 1;
                violations += usize::from(!flips(&fx.schema, &fx.model, x, &p.intervention));
            }
            let pick = st.current_plans[rng.random_range(0..st.current_plans.len())].id.clone();
            st = match mode {
                SessionMode::GuidedChoice => st.submit_choice(&env, &pick).expect("choice"),
                SessionMode::GuidedRate => st.submit_rating(&env, &pick, rng.random_range(1..=5)).expect("rating"),
                SessionMode::Exploratory => st,
            };
            if rng.random_bool(0.3) {
                let feature = match mode {
                    SessionMode::Exploratory => {
                        let a = fx.schema.actionable_indices();
                        fx.schema.features()[a[rng.random_range(0..a.len())]].name.clone()
                    }
                    _ => st.current_plans[0].intervention.actions()[0].feature.clone(),
                };
                let update = ConstraintUpdate { achievability: Some(rng.random_range(1..=5)), ..ConstraintUpdate::default() };
                st = st.submit_constraints(&env, &BTreeMap::from([(feature, update)])).expect("constraints");
            }
            if round == 5 || rng.random_bool(0.2) {
                let done = st.accept(&env, &pick).expect("accept");
                let plan = &done.accepted.as_ref().expect("accepted").plan;
                plans += 1;
                assertions += 1;
                violations += usize::from(!flips(&fx.schema, &fx.model, x, &plan.intervention));
                accepted += 1;
                break;
            }
            st = st.regenerate(&env).expect("regenerate");
        }
    }
    let elapsed = started.elapsed();
    verdict(
        plans > 0 && assertions == plans && violations == 0 && elapsed < Duration::from_secs(300),
        format!(
            "plans {plans}, assertions {assertions}, violations {violations}, accepted {accepted}, exhausted {exhausted}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Tree search against exhaustive enumeration on small random instances.
fn criterion_2() -> Verdict {
    let report = oracle_check(&OracleConfig::default()).expect("oracle check runs");
    let n = report.outcomes.len();
    let passed = report.passed();
    let dominance = report.dominance_violations();
    verdict(
        n == 100 && passed >= 95 && dominance == 0,
        format!("{passed}/{n} within 5%, dominance violations {dominance}"),
    )
}

fn benchmark(fx: &Fixture, mode: SessionMode) -> recourse_core::simulation::BenchmarkSummary {
    let config = BenchmarkConfig { mode, stop_on_accept: false, ..BenchmarkConfig::default() };
    run_benchmark(&config, &fx.schema, &fx.model, &fx.rows).expect("benchmark runs").summary
}

/// Elicitation convergence in guided choice mode.
fn criterion_3(fx: &Fixture) -> Verdict {
    let s = benchmark(fx, SessionMode::GuidedChoice);
    let first = s.per_round.first().expect("round 1").regret_median;
    let last = s.per_round.last().expect("round 10").regret_median;
    let cosines: Vec<f64> = s.per_round.iter().map(|r| r.cosine_median.expect("guided rounds have a cosine")).collect();
    let monotone = cosines.windows(2).all(|w| w[1] >= w[0]);
    let ratio = last / first;
    let shown: Vec<String> = cosines.iter().map(|c| format!("{c:.3}")).collect();
    verdict(
        s.per_round.len() == 10 && first > 0.0 && ratio <= 0.40 && monotone,
        format!("median regret {first:.5} -> {last:.5} (ratio {ratio:.3}), cosine medians [{}]", shown.join(" ")),
    )
}

/// Exploratory control: regret stays flat without learning.
fn criterion_4(fx: &Fixture) -> Verdict {
    let s = benchmark(fx, SessionMode::Exploratory);
    let first = s.per_round.first().expect("round 1").regret_median;
    let last = s.per_round.last().expect("round 10").regret_median;
    let ratio = last / first;
    verdict(
        s.per_round.len() == 10 && first > 0.0 && (ratio - 1.0).abs() <= 0.15,
        format!("median regret {first:.5} -> {last:.5} (ratio {ratio:.3})"),
    )
}

/// Total probability and non-negativity over 10^4 updates; exact identity for
/// uninformative observations.
fn criterion_5(fx: &Fixture) -> Verdict {
    let rejected = fx.rejected();
    let cs = ConstraintSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut updates, mut worst, mut negatives, mut identities, mut identity_failures) = (0usize, 0f64, 0usize, 0usize, 0usize);
    for chain in 0..500u64 {
        let x = &rejected[rng.random_range(0..rejected.len())];
        let mut p = init_posterior(&fx.schema, 200, chain).expect("prior");
        for _ in 0..20 {
            let k = rng.random_range(1..=4);
            let q = ChoiceQuery::new(distinct_interventions(&mut rng, &fx.schema, x, k), x.clone(), cs.clone(), &fx.schema)
                .expect("query");
            let cm = ChoiceModel::new(rng.random_range(0.0..50.0)).expect("beta");
            p = update_posterior(&p, &q, rng.random_range(0..k), &cm).expect("update");
            updates += 1;
            worst = worst.max((p.probabilities().iter().sum::<f64>() - 1.0).abs());
            negatives += p.probabilities().iter().filter(|v| **v < 0.0).count();
        }
        // beta = 0 gives every particle the likelihood 1/k
        let q = ChoiceQuery::new(distinct_interventions(&mut rng, &fx.schema, x, 3), x.clone(), cs.clone(), &fx.schema)
            .expect("query");
        identities += 1;
        identity_failures += usize::from(update_posterior(&p, &q, 1, &ChoiceModel::new(0.0).unwrap()).unwrap() != p);
        // two moves of equal size on the same feature cost the same under every weight
        if let Some(pair) = symmetric_pair(&fx.schema, x) {
            let q = ChoiceQuery::new(pair, x.clone(), cs.clone(), &fx.schema).expect("query");
            identities += 1;
            identity_failures += usize::from(update_posterior(&p, &q, 0, &ChoiceModel::new(10.0).unwrap()).unwrap() != p);
        }
    }
    verdict(
        updates >= 10_000 && worst <= 1e-9 && negatives == 0 && identity_failures == 0,
        format!(
            "{updates} updates, max |sum - 1| {worst:.2e}, negative entries {negatives}, identity checks {identities} ({identity_failures} failed)"
        ),
    )
}

/// Moves one numeric feature one grid step down and one step up.
fn symmetric_pair(schema: &FeatureSet, x: &UserProfile) -> Option<Vec<Intervention>> {
    schema.actionable_indices().iter().find_map(|&i| {
        let f = &schema.features()[i];
        let FeatureKind::Numeric { min, max, step, .. } = f.kind else { return None };
        let v = x.get(&f.name)?.as_num()?;
        (v - step >= min && v + step <= max).then(|| {
            [v - step, v + step]
                .iter()
                .map(|t| Intervention::new(vec![Action::new(f.name.clone(), *t)]).unwrap())
                .collect()
        })
    })
}

/// Cost of `i` for a profile under weights `w`, with no constraints.
fn reference_cost(schema: &FeatureSet, x: &UserProfile, w: &[f64], i: &Intervention) -> f64 {
    i.actions()
        .iter()
        .map(|a| {
            let f = schema.feature(&a.feature).unwrap();
            let effort = match f.kind {
                FeatureKind::Numeric { min, max, .. } => {
                    (a.target.as_num().unwrap() - x.get(&a.feature).unwrap().as_num().unwrap()).abs() / (max - min)
                }
                FeatureKind::Categorical { .. } => 1.0,
            };
            w[schema.actionable_position(&a.feature).unwrap()] * effort
        })
        .sum()
}

/// Greedy choice-set selection against exhaustive search over all k-subsets.
fn criterion_6(fx: &Fixture) -> Verdict {
    let rejected = fx.rejected();
    let cs = ConstraintSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let bound = 1.0 - (-1.0f64).exp();
    let (mut below, mut equal, mut worst_ratio) = (0usize, 0usize, f64::INFINITY);
    for trial in 0..100u64 {
        let x = &rejected[rng.random_range(0..rejected.len())];
        let prior = init_posterior(&fx.schema, 40, trial).unwrap();
        let raw: Vec<f64> = (0..prior.len()).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let p = WeightPosterior::new(prior.particles().to_vec(), raw.iter().map(|r| r / total).collect()).unwrap();
        let size = rng.random_range(3..=8);
        let k = rng.random_range(1..=3);
        let pool = distinct_interventions(&mut rng, &fx.schema, x, size);

        let utility: Vec<Vec<f64>> = p
            .particles()
            .iter()
            .map(|w| pool.iter().map(|i| -reference_cost(&fx.schema, x, w.as_slice(), i)).collect())
            .collect();
        let floor = utility.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let value = |members: &[usize]| -> f64 {
            utility
                .iter()
                .zip(p.probabilities())
                .map(|(u, pr)| pr * (members.iter().map(|&j| u[j]).fold(f64::NEG_INFINITY, f64::max) - floor))
                .sum()
        };
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << size) {
            if mask.count_ones() as usize == k {
                let members: Vec<usize> = (0..size).filter(|j| mask & (1 << j) != 0).collect();
                best = best.max(value(&members));
            }
        }
        let q = select_choice_set(&p, &pool, k, x, &cs, &fx.schema).unwrap();
        let chosen: Vec<usize> = q.alternatives().iter().map(|a| pool.iter().position(|c| c == a).unwrap()).collect();
        let greedy = value(&chosen);
        below += usize::from(greedy < bound * best - 1e-12);
        equal += usize::from((greedy - best).abs() <= 1e-12 * best.abs().max(1e-12));
        if best > 0.0 {
            worst_ratio = worst_ratio.min(greedy / best);
        }
    }
    verdict(
        below == 0 && equal >= 90,
        format!("below (1-1/e) bound {below}/100, equal to exhaustive {equal}/100, worst ratio {worst_ratio:.4}"),
    )
}

/// Analytic gradients against central differences, separable training and
/// the ensemble's AND rule.
fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst = 0f64;
    for _ in 0..100 {
        let input = rng.random_range(2..=8);
        let mut dims = vec![input];
        for _ in 0..rng.random_range(1..=2) {
            dims.push(rng.random_range(2..=8));
        }
        dims.push(1);
        let mut m = MlpModel::init(&dims, &mut rng).unwrap();
        // nonzero biases keep pre-activations off the rectifier kink
        let params: Vec<f64> = m.flat_params().into_iter().map(|v| if v == 0.0 { rng.random_range(-0.5..0.5) } else { v }).collect();
        m.set_flat_params(&params);
        let n = rng.random_range(1..=16);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let batch: Vec<(&[f64], f64)> = xs.iter().map(|x| x.as_slice()).zip(ys.iter().copied()).collect();
        let analytic = m.gradient(&batch).flat();
        let params = m.flat_params();
        let mut numeric = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let mut shifted = params.clone();
            shifted[i] = params[i] + h;
            m.set_flat_params(&shifted);
            let up = m.loss(&batch);
            shifted[i] = params[i] - h;
            m.set_flat_params(&shifted);
            let down = m.loss(&batch);
            numeric.push((up - down) / (2.0 * h));
        }
        m.set_flat_params(&params);
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(diff / scale);
    }

    let accuracy = separable_accuracy();

    let mut and_failures = 0;
    let levels = [0.0, 0.2, 0.49, 0.5, 0.51, 0.8, 1.0];
    for &t in &[0.3, 0.5, 0.7] {
        for &p0 in &levels {
            for &p1 in &levels {
                let h = EnsembleClassifier::new([constant_member(p0), constant_member(p1)], t).unwrap();
                let expected = u8::from(p0 > t && p1 > t);
                and_failures += usize::from(h.predict_encoded(&[0.0]) != expected);
            }
        }
    }
    verdict(
        worst < 1e-4 && accuracy >= 0.99 && and_failures == 0,
        format!("max relative gradient error {worst:.2e}, separable accuracy {accuracy:.4}, AND-rule failures {and_failures}/147"),
    )
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A one-input member whose probability is `p` everywhere; 0 and 1 use a saturating bias.
fn constant_member(p: f64) -> MlpModel {
    let bias = match p {
        p if p <= 0.0 => -1e3,
        p if p >= 1.0 => 1e3,
        p => (p / (1.0 - p)).ln(),
    };
    MlpModel::from_layers(vec![Dense { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![bias] }]).unwrap()
}

fn separable_accuracy() -> f64 {
    let schema = parse_schema(
        r#"{"features":[
            {"name":"a","kind":"numeric","actionable":true,"min":0,"max":100,"step":1},
            {"name":"b","kind":"numeric","actionable":true,"min":0,"max":100,"step":1}
        ]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut rows = Vec::new();
    while rows.len() < 500 {
        let a = f64::from(rng.random_range(0..=100u32));
        let b = f64::from(rng.random_range(0..=100u32));
        if (2.0 * a - b - 40.0).abs() < 10.0 {
            continue;
        }
        let values = BTreeMap::from([("a".to_string(), Value::Num(a)), ("b".to_string(), Value::Num(b))]);
        rows.push((UserProfile::new(values, &schema).unwrap(), u8::from(2.0 * a - b > 40.0)));
    }
    let data = Dataset { schema, rows };
    let cfg = TrainConfig { learning_rate: 0.1, epochs: 200, batch_size: 16, seed: 3, ..TrainConfig::default() };
    let h = train_ensemble(&data, &cfg).unwrap();
    let hits = data.rows.iter().filter(|(x, y)| h.predict(x, &data.schema) == Ok(*y)).count();
    hits as f64 / data.len() as f64
}

#[derive(Debug, Clone)]
enum Cmd {
    Propose,
    Rate(usize, i64),
    Choose(usize),
    Constrain(usize, i64),
    Regenerate,
    Accept(usize),
}

fn cmd() -> impl Strategy<Value = Cmd> {
    prop_oneof![
        3 => Just(Cmd::Propose),
        2 => (0usize..4, 0i64..7).prop_map(|(p, l)| Cmd::Rate(p, l)),
        2 => (0usize..4).prop_map(Cmd::Choose),
        2 => (0usize..5, 0i64..7).prop_map(|(f, l)| Cmd::Constrain(f, l)),
        2 => Just(Cmd::Regenerate),
        1 => (0usize..4).prop_map(Cmd::Accept),
    ]
}

const PROTOCOL_FEATURES: [&str; 5] = ["income", "savings", "degree", "hours", "age"];

fn protocol_schema() -> FeatureSet {
    parse_schema(
        r#"{"version":"protocol","features":[
            {"name":"income","kind":"numeric","actionable":true,"min":0,"max":1000,"step":100},
            {"name":"savings","kind":"numeric","actionable":true,"min":0,"max":50,"step":10},
            {"name":"degree","kind":"categorical","actionable":true,"options":["none","bsc","msc"]},
            {"name":"hours","kind":"numeric","actionable":true,"min":10,"max":50,"step":10},
            {"name":"age","kind":"numeric","actionable":false,"min":18,"max":80,"step":1}
        ]}"#,
    )
    .unwrap()
}

// min-max encoding: [income, savings, none, bsc, msc, hours, age]
fn protocol_rule(z: &[f64]) -> bool {
    z[0] + z[1] + 0.5 * z[3] + 0.8 * z[4] + 0.6 * z[5] > 1.0
}

/// Phase a successful command must lead to, or `None` if the command is
/// illegal from `before`. `Proposed` after a proposal also allows `Exhausted`.
fn expected_phase(mode: SessionMode, before: Phase, c: &Cmd) -> Option<Phase> {
    use Phase::*;
    let guided = mode != SessionMode::Exploratory;
    match (c, before) {
        (Cmd::Propose, AwaitingProposal) => Some(Proposed),
        (Cmd::Rate(..), Proposed) if guided => Some(AwaitingFeedback),
        (Cmd::Choose(_), Proposed) if mode == SessionMode::GuidedChoice => Some(AwaitingFeedback),
        (Cmd::Constrain(..), AwaitingFeedback) if guided => Some(AwaitingFeedback),
        (Cmd::Constrain(..), Proposed) if !guided => Some(Proposed),
        (Cmd::Regenerate, Proposed | AwaitingFeedback) => Some(AwaitingProposal),
        (Cmd::Accept(_), Proposed | AwaitingFeedback) => Some(Accepted),
        _ => None,
    }
}

fn apply(st: &SessionState, env: &SessionEnv<'_>, c: &Cmd) -> Result<SessionState, SessionError> {
    let plan_id = |i: usize| st.current_plans.get(i).map_or_else(|| format!("r{}-p{}", st.round, i + 1), |p| p.id.clone());
    match c {
        Cmd::Propose => st.propose(env),
        Cmd::Rate(p, l) => st.submit_rating(env, &plan_id(*p), *l),
        Cmd::Choose(p) => st.submit_choice(env, &plan_id(*p)),
        Cmd::Constrain(f, l) => {
            let update = ConstraintUpdate { achievability: Some(*l), ..ConstraintUpdate::default() };
            st.submit_constraints(env, &BTreeMap::from([(PROTOCOL_FEATURES[*f].to_string(), update)]))
        }
        Cmd::Regenerate => st.regenerate(env),
        Cmd::Accept(p) => st.accept(env, &plan_id(*p)),
    }
}

/// Random command sequences against a test-side transition table.
fn criterion_8() -> Verdict {
    let schema = protocol_schema();
    let h = FnClassifier::new(7, protocol_rule as fn(&[f64]) -> bool);
    let env = SessionEnv { schema: &schema, classifier: &h, clock: fixed_clock() };
    let x = UserProfile::new(
        BTreeMap::from([
            ("income".to_string(), Value::Num(200.0)),
            ("savings".to_string(), Value::Num(0.0)),
            ("degree".to_string(), Value::from("none")),
            ("hours".to_string(), Value::Num(20.0)),
            ("age".to_string(), Value::Num(40.0)),
        ]),
        &schema,
    )
    .unwrap();
    let config = SessionConfig {
        particles: 20,
        budget: SearchBudget { max_rollouts: 150, max_intervention_len: 3, ..SearchBudget::default() },
        pool_searches: 1,
        ..SessionConfig::default()
    };
    let mode = prop_oneof![Just(SessionMode::GuidedRate), Just(SessionMode::GuidedChoice), Just(SessionMode::Exploratory)];
    let strategy = (mode, 0u64..100_000, prop::collection::vec(cmd(), 1..16));
    let cases = 10_000;
    let mut runner = TestRunner::new_with_rng(
        ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let counts = std::cell::Cell::new((0usize, 0usize));
    let reached = std::cell::RefCell::new(BTreeMap::<String, usize>::new());
    let result = runner.run(&strategy, |(mode, seed, commands)| {
        let mut st = start_session(x.clone(), mode, &env, config.clone(), seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (mut ok, mut err) = counts.get();
        for c in &commands {
            let before = st.clone();
            let expected = expected_phase(mode, before.phase, c);
            match apply(&st, &env, c) {
                Ok(next) => {
                    ok += 1;
                    let Some(phase) = expected else {
                        return Err(TestCaseError::fail(format!("{c:?} accepted in {:?}", before.phase)));
                    };
                    let allowed = next.phase == phase || (phase == Phase::Proposed && next.phase == Phase::Exhausted);
                    prop_assert!(allowed, "{:?} from {:?} led to {:?}", c, before.phase, next.phase);
                    prop_assert_eq!(&next.history[..before.history.len()], &before.history[..]);
                    prop_assert!(next.history.len() > before.history.len());
                    if matches!(c, Cmd::Regenerate) {
                        prop_assert_eq!(next.round, before.round + 1);
                    }
                    st = next;
                }
                Err(_) => {
                    err += 1;
                    prop_assert_eq!(&st, &before);
                }
            }
            if let Err(msg) = st.check_invariants(&env) {
                return Err(TestCaseError::fail(msg));
            }
            for p in &st.current_plans {
                prop_assert!(flips(&schema, &h, &x, &p.intervention), "plan {} does not flip", p.id);
            }
        }
        counts.set((ok, err));
        *reached.borrow_mut().entry(format!("{:?}", st.phase)).or_default() += 1;
        let rebuilt = replay(&schema, &st.history).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(rebuilt, st);
        Ok(())
    });
    let (executed, rejected) = counts.get();
    match result {
        Ok(()) => verdict(
            true,
            format!(
                "{cases} sequences, {executed} commands applied, {rejected} rejected without state change, final phases {:?}, replay exact",
                reached.borrow()
            ),
        ),
        Err(e) => verdict(false, format!("{e}")),
    }
}

fn recourse(args: &[&str]) -> (Vec<u8>, bool) {
    let out = Process::new(env!("CARGO_BIN_EXE_recourse")).args(args).output().expect("binary runs");
    (out.stdout, out.status.success())
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).expect("output exists")
}

/// Byte-identical outputs of train, simulate and oracle-check across two runs.
fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| -> PathBuf { dir.path().join(name) };
    let s = |path: &PathBuf| path.to_str().unwrap().to_owned();
    let fixtures = fixture_dir();
    let dataspec = s(&fixtures.join(COMPACT_DATASPEC));
    let model = s(&fixtures.join(COMPACT_MODEL));
    let schema = s(&fixtures.join("compact_schema.json"));
    let mut mismatches = Vec::new();
    let mut failures = Vec::new();

    let (_, ok) = recourse(&["gen-data", "--spec", &dataspec, "--out", &s(&p("data.csv"))]);
    if !ok {
        failures.push("gen-data");
    }
    let mut train = Vec::new();
    for run in ["a", "b"] {
        let out = p(&format!("model-{run}.json"));
        let (stdout, ok) =
            recourse(&["train", "--schema", &schema, "--data", &s(&p("data.csv")), "--out", &s(&out), "--seed", "3", "--epochs", "4"]);
        if !ok {
            failures.push("train");
        }
        let text = String::from_utf8_lossy(&stdout).replace(&s(&out), "OUT");
        train.push((text, read(&out)));
    }
    if train[0] != train[1] {
        mismatches.push("train");
    }

    let mut simulate = Vec::new();
    for run in ["a", "b"] {
        let (csv, summary) = (p(&format!("sim-{run}.csv")), p(&format!("sim-{run}.json")));
        let (stdout, ok) = recourse(&[
            "simulate", "--seeds", "4", "--rounds", "3", "--rollouts", "500", "--dataspec", &dataspec, "--model", &model,
            "--out", &s(&csv), "--summary", &s(&summary),
        ]);
        if !ok {
            failures.push("simulate");
        }
        simulate.push((stdout, read(&csv), read(&summary)));
    }
    if simulate[0] != simulate[1] {
        mismatches.push("simulate");
    }

    let a = recourse(&["oracle-check", "--instances", "30", "--rollouts", "5000", "--seed", "9"]);
    let b = recourse(&["oracle-check", "--instances", "30", "--rollouts", "5000", "--seed", "9"]);
    if !(a.1 && b.1) {
        failures.push("oracle-check");
    }
    if a.0 != b.0 {
        mismatches.push("oracle-check");
    }
    verdict(
        mismatches.is_empty() && failures.is_empty(),
        format!("mismatched outputs {mismatches:?}, failed runs {failures:?}"),
    )
}

fn main() {
    let fx = Fixture::load();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("1 plan validity", Box::new(|| criterion_1(&fx))),
        ("2 oracle equivalence", Box::new(criterion_2)),
        ("3 elicitation convergence", Box::new(|| criterion_3(&fx))),
        ("4 exploratory control", Box::new(|| criterion_4(&fx))),
        ("5 posterior integrity", Box::new(|| criterion_5(&fx))),
        ("6 choice-set optimality", Box::new(|| criterion_6(&fx))),
        ("7 gradient check", Box::new(criterion_7)),
        ("8 protocol safety", Box::new(criterion_8)),
        ("9 determinism", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let started = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        failed += usize::from(!v.pass);
        println!(
            "criterion {name}: {} ({}; {:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            started.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
