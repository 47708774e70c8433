//! Acceptance suite: eight end-to-end criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the verdict lines always reach
//! the terminal; the process exits non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hypermult_cli::run::{self, RunOptions};
use hypermult_core::interchange::{self, Dims, SpaceCheck};
use hypermult_core::learners::boosting::leaf_weight;
use hypermult_core::learners::cart::{Tree, TreeParams};
use hypermult_core::learners::elastic_net::Problem;
use hypermult_core::metrics::{
    disagreement, disagreement_count, joint_discrepancy, marginal_discrepancy, model_discrepancy,
    tunability, tunability_in,
};
use hypermult_core::reports::{self, equal_range_bins, ResultRow};
use hypermult_core::seed::{self, Rng};
use hypermult_core::space::space_for_dims;
use hypermult_core::{
    aggregate, marginal_grid, pairwise_grid, run_sweep, sample_full, space_for, split,
    AggregateStat, Config, Entry, Error, EvalOn, HyperparamSpace, ModelKind, PredictionSet, Scope,
};
use rand::seq::SliceRandom;
use rand::Rng as _;

type Outcome = Result<(), String>;
/// Predicate an import error must satisfy.
type ErrorCheck<'a> = Box<dyn Fn(&Error) -> bool + 'a>;
type Criterion = (u8, &'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            1,
            "oracle equivalence",
            Duration::from_secs(10),
            oracle_equivalence,
        ),
        (
            2,
            "metric invariants",
            Duration::from_secs(30),
            metric_invariants,
        ),
        (
            3,
            "learner correctness",
            Duration::from_secs(60),
            learner_correctness,
        ),
        (
            4,
            "regularization direction",
            Duration::from_secs(10),
            regularization_direction,
        ),
        (
            5,
            "sweep determinism",
            Duration::from_secs(300),
            sweep_determinism,
        ),
        (
            6,
            "bivariate classification",
            Duration::from_secs(60),
            bivariate_classification,
        ),
        (
            7,
            "report formatting",
            Duration::from_secs(10),
            report_formatting,
        ),
        (
            8,
            "interchange round-trip",
            Duration::from_secs(60),
            interchange_round_trip,
        ),
    ];
    let mut failures = 0;
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            if elapsed > limit {
                Err(format!("took {elapsed:.2?}, limit {limit:.0?}"))
            } else {
                Ok(())
            }
        });
        match result {
            Ok(()) => println!("criterion {n} ({name}): PASS [{elapsed:.2?}]"),
            Err(e) => {
                failures += 1;
                println!("criterion {n} ({name}): FAIL [{elapsed:.2?}] {e}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------
// Random prediction sets and a brute-force oracle
// ---------------------------------------------------------------------

fn tree_space() -> HyperparamSpace {
    space_for_dims(ModelKind::DecisionTree, 100, 5).unwrap()
}

fn random_labels(rng: &mut Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..=1u8)).collect()
}

/// Up to 64 entries over the tree space. Non-default entries vary one
/// parameter (half the time), two, or a random subset, so every scope
/// usually has members; about a tenth fail.
fn random_set(rng: &mut Rng, space: &HyperparamSpace) -> PredictionSet {
    let n = rng.random_range(1..=50);
    let m = rng.random_range(1..=64);
    let truth = random_labels(rng, n);
    let base = random_labels(rng, n);
    let default = space.default_config();
    let names: Vec<String> = space.params.iter().map(|p| p.name.clone()).collect();
    let mut entries = vec![Entry::ok(default.clone(), base.clone())];
    for _ in 1..m {
        let k = match rng.random_range(0..4) {
            0 | 1 => 1,
            2 => 2,
            _ => rng.random_range(1..=names.len()),
        };
        let mut chosen = names.clone();
        chosen.shuffle(rng);
        chosen.truncate(k);
        let mut values = default.values().clone();
        for h in &chosen {
            let axis = space.param(h).unwrap().axis(4);
            let d = default.get(h).unwrap();
            let others: Vec<f64> = axis.into_iter().filter(|v| *v != d).collect();
            values.insert(h.clone(), others[rng.random_range(0..others.len())]);
        }
        let config = Config::new(values, false);
        if rng.random_bool(0.1) {
            entries.push(Entry::failed(config, "injected failure"));
        } else {
            let flip = rng.random_range(0.0..0.6);
            let labels = base
                .iter()
                .map(|&b| if rng.random_bool(flip) { 1 - b } else { b })
                .collect();
            entries.push(Entry::ok(config, labels));
        }
    }
    entries.shuffle(rng);
    let positive = rng.random_range(0..=1u8);
    PredictionSet::new("rand", ModelKind::DecisionTree, positive, truth, entries).unwrap()
}

/// Parameters in which `c` differs from `d`, computed from raw values.
fn varied(c: &Config, d: &Config) -> BTreeSet<String> {
    c.values()
        .iter()
        .filter(|(k, v)| d.values().get(*k) != Some(*v))
        .map(|(k, _)| k.clone())
        .collect()
}

fn oracle_f1(pred: &[u8], truth: &[u8], positive: u8) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// (disagreement count, config id) maximum with ties to the lowest id,
/// and (F1, config id) maximum likewise, over candidate entries.
struct OracleResult {
    count: usize,
    disc_id: String,
    best_f1: f64,
    f1_id: String,
    default_f1: f64,
}

fn oracle(ps: &PredictionSet, keep: impl Fn(&BTreeSet<String>) -> bool) -> Option<OracleResult> {
    let entries = ps.entries();
    let default = entries.iter().find(|e| e.config.is_default()).unwrap();
    let mut best: Option<OracleResult> = None;
    let default_f1 = oracle_f1(&default.labels, ps.eval_labels(), ps.positive_label());
    for e in entries {
        if e.config.is_default()
            || e.failure.is_some()
            || !keep(&varied(&e.config, &default.config))
        {
            continue;
        }
        let mut count = 0;
        for i in 0..e.labels.len() {
            if e.labels[i] != default.labels[i] {
                count += 1;
            }
        }
        let f = oracle_f1(&e.labels, ps.eval_labels(), ps.positive_label());
        let id = e.config.id().to_string();
        match &mut best {
            None => {
                best = Some(OracleResult {
                    count,
                    disc_id: id.clone(),
                    best_f1: f,
                    f1_id: id,
                    default_f1,
                })
            }
            Some(b) => {
                if count > b.count || (count == b.count && id < b.disc_id) {
                    b.count = count;
                    b.disc_id = id.clone();
                }
                if f > b.best_f1 || (f == b.best_f1 && id < b.f1_id) {
                    b.best_f1 = f;
                    b.f1_id = id;
                }
            }
        }
    }
    best
}

/// Sub-set holding the default plus entries accepted by `keep`.
fn subset(ps: &PredictionSet, keep: impl Fn(&BTreeSet<String>) -> bool) -> PredictionSet {
    let default = ps.default_entry().config.clone();
    let entries = ps
        .entries()
        .iter()
        .filter(|e| e.config.is_default() || keep(&varied(&e.config, &default)))
        .cloned()
        .collect();
    PredictionSet::new(
        ps.dataset_id(),
        ps.model(),
        ps.positive_label(),
        ps.eval_labels().to_vec(),
        entries,
    )
    .unwrap()
}

fn compare(
    what: &str,
    ps: &PredictionSet,
    scope: Scope,
    expected: Option<OracleResult>,
) -> Outcome {
    let d = hypermult_core::discrepancy(ps, scope.clone());
    let t = tunability_in(ps, scope);
    match expected {
        None => {
            ensure!(
                matches!(d, Err(Error::NoComparableEntry))
                    && matches!(t, Err(Error::NoComparableEntry)),
                "{what}: expected NoComparableEntry, got {d:?} / {t:?}"
            );
        }
        Some(o) => {
            let d = d.map_err(|e| format!("{what}: {e}"))?;
            let t = t.map_err(|e| format!("{what}: {e}"))?;
            let n = ps.eval_labels().len();
            ensure!(
                d.disagreements == o.count && d.value == o.count as f64 / n as f64,
                "{what}: discrepancy {} ({}) vs oracle {}/{n}",
                d.value,
                d.disagreements,
                o.count
            );
            ensure!(
                d.argmax_config.id() == o.disc_id,
                "{what}: argmax {} vs {}",
                d.argmax_config.id(),
                o.disc_id
            );
            ensure!(
                t.default_f1 == o.default_f1,
                "{what}: default F1 {} vs {}",
                t.default_f1,
                o.default_f1
            );
            ensure!(
                t.best_f1 == o.best_f1,
                "{what}: best F1 {} vs {}",
                t.best_f1,
                o.best_f1
            );
            ensure!(
                t.value == o.best_f1 - o.default_f1,
                "{what}: tunability {} vs {}",
                t.value,
                o.best_f1 - o.default_f1
            );
            ensure!(
                t.best_config.id() == o.f1_id,
                "{what}: best config {} vs {}",
                t.best_config.id(),
                o.f1_id
            );
        }
    }
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    let space = tree_space();
    let names: Vec<String> = space.params.iter().map(|p| p.name.clone()).collect();
    let mut rng = seed::rng(1);
    // scopes with at least one comparable entry
    let mut scored = 0;
    for case in 0..1000 {
        let ps = random_set(&mut rng, &space);
        for e in ps.entries().iter().filter(|e| !e.is_failed()) {
            let got = hypermult_core::f1(&e.labels, ps.eval_labels(), ps.positive_label()).unwrap();
            let want = oracle_f1(&e.labels, ps.eval_labels(), ps.positive_label());
            ensure!(got == want, "case {case}: F1 {got} vs {want}");
        }
        compare(
            &format!("case {case} model"),
            &ps,
            Scope::Model,
            oracle(&ps, |_| true),
        )?;
        for h in &names {
            let keep = |v: &BTreeSet<String>| v.iter().all(|p| p == h);
            let sub = subset(&ps, keep);
            let expected = oracle(&ps, keep);
            scored += usize::from(expected.is_some());
            compare(
                &format!("case {case} marginal {h}"),
                &sub,
                Scope::marginal(h.as_str()),
                expected,
            )?;
        }
        for (i, h1) in names.iter().enumerate() {
            for h2 in &names[i + 1..] {
                let keep = |v: &BTreeSet<String>| v.iter().all(|p| p == h1 || p == h2);
                let sub = subset(&ps, keep);
                let expected = oracle(&ps, keep);
                scored += usize::from(expected.is_some());
                compare(
                    &format!("case {case} joint {h1}×{h2}"),
                    &sub,
                    Scope::joint(h1.as_str(), h2.as_str()),
                    expected,
                )?;
            }
        }
    }
    ensure!(
        scored >= 5000,
        "only {scored} marginal/joint scopes had comparable entries"
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Invariants
// ---------------------------------------------------------------------

const CASES: usize = 600;

fn metric_invariants() -> Outcome {
    let space = tree_space();
    let mut rng = seed::rng(2);

    // boundedness
    let mut checked = 0;
    while checked < CASES {
        let ps = random_set(&mut rng, &space);
        let (Ok(d), Ok(t)) = (model_discrepancy(&ps), tunability(&ps)) else {
            continue;
        };
        ensure!(
            (0.0..=1.0).contains(&d.value),
            "discrepancy {} out of [0, 1]",
            d.value
        );
        ensure!(
            (-1.0..=1.0).contains(&t.value),
            "tunability {} out of [-1, 1]",
            t.value
        );
        ensure!(
            (0.0..=1.0).contains(&t.best_f1) && (0.0..=1.0).contains(&t.default_f1),
            "F1 out of range"
        );
        checked += 1;
    }

    // symmetry
    for _ in 0..CASES {
        let n = rng.random_range(1..=80);
        let a = random_labels(&mut rng, n);
        let b = random_labels(&mut rng, n);
        ensure!(
            disagreement(&a, &b).unwrap() == disagreement(&b, &a).unwrap()
                && disagreement_count(&a, &b).unwrap() == disagreement_count(&b, &a).unwrap(),
            "disagreement not symmetric"
        );
        ensure!(
            disagreement(&a, &a).unwrap() == 0.0,
            "self-disagreement non-zero"
        );
    }

    // max-monotonicity over nested configuration sets
    let mut checked = 0;
    while checked < CASES {
        let ps = random_set(&mut rng, &space);
        let keep_prob = rng.random_range(0.1..0.9);
        let mut coin = seed::rng(rng.random());
        let small = ps.filtered(|_| coin.random_bool(keep_prob));
        let (Ok(big_d), Ok(small_d)) = (model_discrepancy(&ps), model_discrepancy(&small)) else {
            continue;
        };
        let (big_t, small_t) = (tunability(&ps).unwrap(), tunability(&small).unwrap());
        ensure!(
            small_d.value <= big_d.value,
            "subset discrepancy {} > {}",
            small_d.value,
            big_d.value
        );
        ensure!(
            small_t.value <= big_t.value,
            "subset tunability {} > {}",
            small_t.value,
            big_t.value
        );
        checked += 1;
    }

    // joint ≥ marginal on grids sharing an axis
    let mut compared = 0;
    for case in 0..CASES {
        let kind = ModelKind::BUILTIN[case % ModelKind::BUILTIN.len()];
        let space = space_for_dims(kind, 100, 5).unwrap();
        let names: Vec<&str> = space.params.iter().map(|p| p.name.as_str()).collect();
        if names.len() < 2 {
            continue_knn(&space, &mut rng)?;
            continue;
        }
        let i = rng.random_range(0..names.len());
        let mut j = rng.random_range(0..names.len() - 1);
        if j >= i {
            j += 1;
        }
        let (h1, h2) = (names[i], names[j]);
        let points = rng.random_range(2..=6);
        let n = rng.random_range(5..=40);
        let label_seed: u64 = rng.random();
        // labels are a function of the configuration, so shared configs
        // predict identically in every grid
        let labels_of = |c: &Config| {
            let mut r = seed::rng(seed::derive_seed(label_seed, &[c.id()]));
            random_labels(&mut r, n)
        };
        let truth = labels_of(&space.default_config().as_candidate());
        let make = |configs: Vec<Config>| {
            let entries = configs
                .iter()
                .map(|c| Entry::ok(c.clone(), labels_of(c)))
                .collect();
            PredictionSet::new("grid", kind, 1, truth.clone(), entries).unwrap()
        };
        let joint_configs = pairwise_grid(&space, h1, h2, points).unwrap();
        let joint_ids: BTreeSet<&str> = joint_configs.iter().map(|c| c.id()).collect();
        for h in [h1, h2] {
            let marg = marginal_grid(&space, h, points).unwrap();
            ensure!(
                marg.iter().all(|c| joint_ids.contains(c.id())),
                "{kind} marginal grid of {h} not nested in ({h1}, {h2})"
            );
            let m = make(marg);
            let jset = make(joint_configs.clone());
            match (
                marginal_discrepancy(&m, h),
                joint_discrepancy(&jset, h1, h2),
            ) {
                (Ok(md), Ok(jd)) => {
                    compared += 1;
                    ensure!(
                        jd.value >= md.value,
                        "{kind} joint {} < marginal {}",
                        jd.value,
                        md.value
                    );
                    let mt = tunability_in(&m, Scope::marginal(h)).unwrap();
                    let jt = tunability_in(&jset, Scope::joint(h1, h2)).unwrap();
                    ensure!(
                        jt.value >= mt.value,
                        "{kind} joint tunability below marginal"
                    );
                }
                (Err(Error::NoComparableEntry), _) => {}
                (a, b) => return Err(format!("{kind} unexpected {a:?} / {b:?}")),
            }
        }
    }

    ensure!(
        compared >= CASES,
        "only {compared} joint/marginal comparisons"
    );

    // permutation invariance: entry order and evaluation-row order
    let mut checked = 0;
    while checked < CASES {
        let ps = random_set(&mut rng, &space);
        let Ok(d) = model_discrepancy(&ps) else {
            continue;
        };
        let t = tunability(&ps).unwrap();
        let mut entries = ps.entries().to_vec();
        entries.shuffle(&mut rng);
        let shuffled = PredictionSet::new(
            "rand",
            ps.model(),
            ps.positive_label(),
            ps.eval_labels().to_vec(),
            entries.clone(),
        )
        .unwrap();
        let d2 = model_discrepancy(&shuffled).unwrap();
        let t2 = tunability(&shuffled).unwrap();
        ensure!(
            d2.value == d.value && d2.argmax_config.id() == d.argmax_config.id(),
            "entry order changed discrepancy"
        );
        ensure!(
            t2.value == t.value && t2.best_config.id() == t.best_config.id(),
            "entry order changed tunability"
        );

        let mut perm: Vec<usize> = (0..ps.eval_labels().len()).collect();
        perm.shuffle(&mut rng);
        let permute = |v: &[u8]| perm.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        let rows: Vec<Entry> = entries
            .iter()
            .map(|e| {
                if e.is_failed() {
                    e.clone()
                } else {
                    Entry::ok(e.config.clone(), permute(&e.labels))
                }
            })
            .collect();
        let permuted = PredictionSet::new(
            "rand",
            ps.model(),
            ps.positive_label(),
            permute(ps.eval_labels()),
            rows,
        )
        .unwrap();
        ensure!(
            model_discrepancy(&permuted).unwrap().value == d.value,
            "row order changed discrepancy"
        );
        ensure!(
            tunability(&permuted).unwrap().value == t.value,
            "row order changed tunability"
        );
        checked += 1;
    }
    Ok(())
}

/// KNN has a single parameter, so there is no pair; its marginal grid
/// still contains the default exactly once.
fn continue_knn(space: &HyperparamSpace, rng: &mut Rng) -> Outcome {
    let grid = marginal_grid(space, "k", rng.random_range(2..=8)).unwrap();
    ensure!(
        grid.iter().filter(|c| c.is_default()).count() == 1,
        "KNN grid default count"
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Learners
// ---------------------------------------------------------------------

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let q = pos as f64 / n as f64;
    n as f64 * 2.0 * q * (1.0 - q)
}

fn learner_correctness() -> Outcome {
    let mut rng = seed::rng(3);

    // elastic-net smooth gradient against central differences
    for case in 0..100 {
        let n = rng.random_range(5..=30);
        let p = rng.random_range(1..=6);
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = random_labels(&mut rng, n);
        let problem = Problem {
            x: &x,
            y: &y,
            n_cols: p,
            lambda: 2f64.powf(rng.random_range(-10.0..2.0)),
            alpha: rng.random_range(0.0..1.0),
        };
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let b = rng.random_range(-1.0..1.0);
        let (gw, gb) = problem.smooth_gradient(&w, b);
        let h = 1e-6;
        let mut fd = Vec::with_capacity(p + 1);
        for j in 0..p {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[j] += h;
            down[j] -= h;
            fd.push((problem.smooth_value(&up, b) - problem.smooth_value(&down, b)) / (2.0 * h));
        }
        fd.push((problem.smooth_value(&w, b + h) - problem.smooth_value(&w, b - h)) / (2.0 * h));
        let analytic: Vec<f64> = gw.iter().copied().chain([gb]).collect();
        let err: f64 = analytic
            .iter()
            .zip(&fd)
            .map(|(a, f)| (a - f).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-8);
        ensure!(
            err / scale <= 1e-4,
            "case {case}: gradient relative error {}",
            err / scale
        );
    }

    // CART structural invariants
    let (mut split_nodes, mut split_trees) = (0, 0);
    for case in 0..100 {
        let n = rng.random_range(20..=200);
        let p = rng.random_range(1..=5);
        let x: Vec<f64> = (0..n * p)
            .map(|_| f64::from(rng.random_range(0..12u8)) * 0.5)
            .collect();
        let y: Vec<u8> = (0..n)
            .map(|i| u8::from(x[i * p] + rng.random_range(-2.0..2.0) > 2.5))
            .collect();
        // every other tree draws from the full ranges; the rest favour
        // deep trees so most constraints are exercised
        let full = case % 2 == 0;
        let params = TreeParams {
            max_depth: rng.random_range(1..=30),
            min_split: rng.random_range(1..=if full { 60 } else { 20 }),
            min_bucket: rng.random_range(1..=if full { 60 } else { 10 }),
            cp: rng.random_range(0.0f64..1.0).powi(3) * if full { 1.0 } else { 0.02 },
            mtry: None,
        };
        let rows: Vec<usize> = (0..n).collect();
        let mut tree_rng = seed::rng(case);
        let tree = Tree::fit(&x, &y, p, &rows, params, &mut tree_rng);
        let root = &tree.nodes[0];
        ensure!(
            root.n_samples == n,
            "case {case}: root holds {} rows",
            root.n_samples
        );
        let root_total = gini(root.n_positive, root.n_samples);
        split_trees += usize::from(root.split.is_some());
        for node in &tree.nodes {
            ensure!(
                node.depth <= params.max_depth,
                "case {case}: depth {} > {}",
                node.depth,
                params.max_depth
            );
            let Some(s) = &node.split else { continue };
            split_nodes += 1;
            let (l, r) = (&tree.nodes[s.left], &tree.nodes[s.right]);
            ensure!(
                node.n_samples >= params.min_split,
                "case {case}: split below minsplit"
            );
            ensure!(
                l.n_samples >= params.min_bucket && r.n_samples >= params.min_bucket,
                "case {case}: child below minbucket"
            );
            ensure!(
                l.n_samples + r.n_samples == node.n_samples
                    && l.n_positive + r.n_positive == node.n_positive,
                "case {case}: children do not partition the node"
            );
            ensure!(
                l.depth == node.depth + 1 && r.depth == node.depth + 1,
                "case {case}: child depth"
            );
            let decrease = gini(node.n_positive, node.n_samples)
                - gini(l.n_positive, l.n_samples)
                - gini(r.n_positive, r.n_samples);
            ensure!(
                decrease > 0.0 && decrease >= params.cp * root_total - 1e-9,
                "case {case}: decrease {decrease} below cp × root {}",
                params.cp * root_total
            );
        }
    }

    ensure!(
        split_trees >= 30 && split_nodes >= 200,
        "trees too shallow to test: {split_trees} split, {split_nodes} splits"
    );

    // boosting leaf weights
    for _ in 0..10_000 {
        let g = rng.random_range(-50.0..50.0);
        let h = rng.random_range(0.0..50.0);
        let lambda = 2f64.powf(rng.random_range(-10.0..10.0));
        ensure!(
            leaf_weight(g, h, 0.0, lambda) == -g / (h + lambda),
            "alpha = 0: {} vs {}",
            leaf_weight(g, h, 0.0, lambda),
            -g / (h + lambda)
        );
        let alpha = 2f64.powf(rng.random_range(-10.0..10.0));
        let w = leaf_weight(g, h, alpha, lambda);
        if g.abs() <= alpha {
            ensure!(w == 0.0, "|G| ≤ alpha gave {w}");
        } else {
            let expected = -(g - alpha * g.signum()) / (h + lambda);
            ensure!(
                (w - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                "L1 leaf {w} vs {expected}"
            );
        }
        // |G| exactly at the threshold
        ensure!(
            leaf_weight(alpha, h, alpha, lambda) == 0.0,
            "G = alpha not zero"
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Regularization direction
// ---------------------------------------------------------------------

fn regularization_direction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = common::write_dataset(dir.path(), "separable", 500, 5, 0.0, 0.35, 4);
    let data = hypermult_core::load_csv(
        &path,
        &hypermult_core::LoadOptions::new(hypermult_core::TargetColumn::Name("y".into())),
    )
    .map_err(|e| e.to_string())?;
    let s = split(&data, 0.3, 5).unwrap();
    let space = space_for(ModelKind::ElasticNet, &s.train).unwrap();
    let grid = marginal_grid(&space, "lambda", 21).unwrap();
    let out = run_sweep(ModelKind::ElasticNet, &grid, &s, EvalOn::Holdout, 6)
        .map_err(|e| e.to_string())?;
    let ps = out.predictions;
    let default = &ps.default_entry().labels;
    let ones = default.iter().filter(|&&l| l == 1).count();
    let minority_rate = ones.min(default.len() - ones) as f64 / default.len() as f64;
    let at = |lambda: f64| {
        ps.entries()
            .iter()
            .find(|e| !e.config.is_default() && e.config.get("lambda") == Some(lambda))
            .unwrap()
    };
    let strongest = at(1024.0);
    let weakest = at(2f64.powi(-10));
    ensure!(
        strongest.labels.iter().all(|&l| l == strongest.labels[0]),
        "lambda = 2^10 does not predict a constant"
    );
    let strong_d = disagreement(&strongest.labels, default).unwrap();
    ensure!(
        strong_d == minority_rate,
        "lambda = 2^10 disagreement {strong_d} vs minority rate {minority_rate}"
    );
    let weak_d = disagreement(&weakest.labels, default).unwrap();
    ensure!(
        weak_d <= strong_d,
        "lambda = 2^-10 disagreement {weak_d} > {strong_d}"
    );
    let marginal = marginal_discrepancy(&ps, "lambda").unwrap();
    ensure!(
        marginal.value >= minority_rate,
        "marginal {} below minority rate",
        marginal.value
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------

fn three_datasets(dir: &Path) -> Vec<PathBuf> {
    (0..3u64)
        .map(|i| common::write_dataset(dir, &format!("synthetic{i}"), 150, 4, 0.8, 0.4, 100 + i))
        .collect()
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn without_timestamp(report: &[u8]) -> String {
    String::from_utf8(report.to_vec())
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"created_at\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn sweep_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = three_datasets(dir.path());
    let config = dir.path().join("sweep.toml");
    let mut text = String::from("seed = 2024\n");
    for kind in ModelKind::BUILTIN {
        text.push_str(&format!("[[models]]\nname = \"{kind}\"\ncount = 50\n"));
    }
    fs::write(&config, text).unwrap();
    let mut outputs = Vec::new();
    for (i, jobs) in [(0, 1), (1, 3)] {
        let mut opts = RunOptions::new(dir.path().join(format!("out{i}")));
        opts.jobs = jobs;
        let r = run::cmd_sweep(&config, &data, &opts).map_err(|e| format!("{e:#}"))?;
        ensure!(
            r.report.summary.len() == 5,
            "expected 5 summary rows, got {}",
            r.report.summary.len()
        );
        ensure!(
            r.report.per_dataset.len() == 15,
            "expected 15 per-dataset rows"
        );
        ensure!(
            r.manifest
                .models
                .iter()
                .all(|m| m.configs_trained == 3 * 51),
            "unexpected configuration counts"
        );
        outputs.push(files_under(&opts.out));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    ensure!(a.keys().eq(b.keys()), "runs wrote different file sets");
    for (name, bytes) in a {
        let other = &b[name];
        if name == Path::new(run::REPORT_FILE) {
            ensure!(
                without_timestamp(bytes) == without_timestamp(other),
                "report.json differs beyond the timestamp"
            );
        } else if name == Path::new(run::MANIFEST_FILE) {
            // timestamps and the report hash differ; the rest must not
            let strip = |b: &[u8]| {
                let mut m: serde_json::Value = serde_json::from_slice(b).unwrap();
                let o = m.as_object_mut().unwrap();
                o.remove("started_at");
                o.remove("finished_at");
                o.remove("outputs");
                m
            };
            ensure!(
                strip(bytes) == strip(other),
                "manifests differ beyond timestamps"
            );
        } else {
            ensure!(bytes == other, "{} differs between runs", name.display());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Bivariate classification
// ---------------------------------------------------------------------

fn bivariate_classification() -> Outcome {
    let (bins, breaks) = equal_range_bins(&[0.1, 0.5, 0.9]);
    ensure!(bins == [0, 1, 2], "bins {bins:?}");
    let [b1, b2] = breaks.ok_or("no breaks")?;
    ensure!(
        format!("{b1:.4} {b2:.4}") == "0.3667 0.6333",
        "breaks {b1} {b2}"
    );
    let (bins, _) = equal_range_bins(&[0.0, 1.0, 2.0, 3.0]);
    ensure!(
        bins == [0, 1, 2, 2],
        "break-point values must take the higher bin: {bins:?}"
    );
    let (bins, breaks) = equal_range_bins(&[0.42; 5]);
    ensure!(
        bins == [0; 5] && breaks.is_none(),
        "all-equal values must fall into bin 0"
    );

    let dir = tempfile::tempdir().unwrap();
    let data = three_datasets(dir.path());
    let mut opts = RunOptions::new(dir.path().join("joint"));
    opts.axis_bins = 5;
    opts.seed = 77;
    run::cmd_joint("DecisionTree", "cp", "maxdepth", 5, &data, &opts)
        .map_err(|e| format!("{e:#}"))?;

    // everything below works from the files alone
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(opts.out.join(run::REPORT_FILE)).unwrap())
            .unwrap();
    let panel = &report["bivariate"][0];
    let regions = panel["regions"].as_array().ok_or("no regions")?;
    ensure!(
        regions.len() == 25,
        "expected 25 regions, got {}",
        regions.len()
    );
    ensure!(
        panel["statistic"] == "mean",
        "panel statistic must be labelled mean"
    );
    ensure!(
        report["joint"]["statistic"] == "max",
        "joint results must be labelled max"
    );

    let mut sums: BTreeMap<(usize, usize), (usize, f64, f64)> = BTreeMap::new();
    let pred_dir = opts.out.join(run::PREDICTIONS_DIR);
    let mut files = 0;
    for entry in fs::read_dir(&pred_dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let (ps, _) = interchange::from_str(&text, SpaceCheck::Skip).map_err(|e| e.to_string())?;
        files += 1;
        let base = ps.default_entry().labels.clone();
        for e in ps.entries().iter().filter(|e| !e.is_failed()) {
            let cp = e.config.get("cp").unwrap();
            let depth = e.config.get("maxdepth").unwrap();
            let i = (((cp - 0.0) / 1.0 * 5.0).floor() as usize).min(4);
            let j = (((depth - 1.0) / 29.0 * 5.0).floor() as usize).min(4);
            let f = oracle_f1(&e.labels, ps.eval_labels(), ps.positive_label());
            let diff = e.labels.iter().zip(&base).filter(|(a, b)| a != b).count();
            let s = sums.entry((i, j)).or_default();
            s.0 += 1;
            s.1 += f;
            s.2 += diff as f64 / base.len() as f64;
        }
    }
    ensure!(files == 3, "expected 3 prediction files, got {files}");
    let mut filled = 0;
    for r in regions {
        let key = (
            r["h1_bin"].as_u64().unwrap() as usize,
            r["h2_bin"].as_u64().unwrap() as usize,
        );
        match sums.get(&key) {
            None => {
                ensure!(
                    r["members"] == 0 && r.get("mean_f1").is_none(),
                    "region {key:?} should be empty"
                );
            }
            Some(&(count, f, d)) => {
                filled += 1;
                ensure!(
                    r["members"].as_u64() == Some(count as u64),
                    "region {key:?} member count"
                );
                let mf = r["mean_f1"].as_f64().unwrap();
                let md = r["mean_discrepancy"].as_f64().unwrap();
                ensure!(
                    (mf - f / count as f64).abs() <= 1e-12,
                    "region {key:?} mean F1 {mf} vs {}",
                    f / count as f64
                );
                ensure!(
                    (md - d / count as f64).abs() <= 1e-12,
                    "region {key:?} mean discrepancy {md} vs {}",
                    d / count as f64
                );
            }
        }
    }
    let cells = panel["grid"]["cells"].as_array().ok_or("no grid")?;
    ensure!(
        cells.len() == filled,
        "grid has {} cells for {filled} filled regions",
        cells.len()
    );
    for c in cells {
        let fb = c["f1_bin"].as_u64().unwrap();
        let db = c["disc_bin"].as_u64().unwrap();
        ensure!(fb <= 2 && db <= 2, "bin out of range");
    }
    // recompute the 3×3 assignment from the emitted means
    let f1s: Vec<f64> = cells
        .iter()
        .map(|c| c["mean_f1"].as_f64().unwrap())
        .collect();
    let discs: Vec<f64> = cells
        .iter()
        .map(|c| c["mean_discrepancy"].as_f64().unwrap())
        .collect();
    let expect_bins = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = (hi - lo) / 3.0;
        v.iter()
            .map(|&x| {
                if hi == lo {
                    0
                } else if x >= lo + 2.0 * w || x == hi {
                    2
                } else if x >= lo + w {
                    1
                } else {
                    0
                }
            })
            .collect::<Vec<u64>>()
    };
    let got_f: Vec<u64> = cells
        .iter()
        .map(|c| c["f1_bin"].as_u64().unwrap())
        .collect();
    let got_d: Vec<u64> = cells
        .iter()
        .map(|c| c["disc_bin"].as_u64().unwrap())
        .collect();
    ensure!(
        got_f == expect_bins(&f1s),
        "F1 bins differ from recomputation"
    );
    ensure!(
        got_d == expect_bins(&discs),
        "discrepancy bins differ from recomputation"
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------

fn report_formatting() -> Outcome {
    let injected = AggregateStat {
        count: 21,
        mean: 0.2020,
        std: Some(0.2170),
        median: 0.15,
        min: 0.0,
        max: 0.7,
    };
    ensure!(
        injected.render() == "0.2020 ± 0.2170",
        "rendered {:?}",
        injected.render()
    );
    let single = AggregateStat {
        std: None,
        ..injected
    };
    ensure!(
        single.render() == "0.2020 ± NA",
        "rendered {:?}",
        single.render()
    );

    // two values with mean 0.2020 and sample std 0.2170, through the
    // summary table
    let half = 0.2170 / 2f64.sqrt();
    let values = [0.2020 + half, 0.2020 - half];
    let space = space_for_dims(ModelKind::ElasticNet, 50, 3).unwrap();
    let c = space.default_config();
    let rows: Vec<ResultRow> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| ResultRow {
            dataset_id: format!("d{i}"),
            model: ModelKind::ElasticNet,
            scope: Scope::Model,
            n_eval: 100,
            compared: 10,
            failed: 0,
            discrepancy: v,
            disagreements: 0,
            discrepancy_config: c.clone(),
            default_f1: 0.5,
            best_f1: 0.5,
            tunability: 0.0,
            tunability_config: c.clone(),
        })
        .collect();
    let table = reports::summary_table(&rows).map_err(|e| e.to_string())?;
    ensure!(table.len() == 1, "one model, one row");
    ensure!(
        table[0].discrepancy_text == "0.2020 ± 0.2170",
        "summary row rendered {:?}",
        table[0].discrepancy_text
    );
    ensure!(
        table[0].discrepancy.count == 2,
        "row must record its dataset count"
    );
    let agg = aggregate(&values).unwrap();
    ensure!(
        agg.render() == table[0].discrepancy_text,
        "aggregate and summary disagree"
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Interchange
// ---------------------------------------------------------------------

fn same_result(a: &ResultRow, b: &ResultRow) -> bool {
    a.dataset_id == b.dataset_id
        && a.model == b.model
        && a.discrepancy.to_bits() == b.discrepancy.to_bits()
        && a.tunability.to_bits() == b.tunability.to_bits()
        && a.default_f1.to_bits() == b.default_f1.to_bits()
        && a.best_f1.to_bits() == b.best_f1.to_bits()
        && a.disagreements == b.disagreements
        && a.discrepancy_config.id() == b.discrepancy_config.id()
        && a.tunability_config.id() == b.tunability_config.id()
        && a.compared == b.compared
        && a.failed == b.failed
}

fn interchange_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = three_datasets(dir.path());

    // library level: every built-in family, export → import → same set
    for (i, kind) in ModelKind::BUILTIN.into_iter().enumerate() {
        let d = hypermult_core::load_csv(
            &data[i % 3],
            &hypermult_core::LoadOptions::new(hypermult_core::TargetColumn::Last),
        )
        .unwrap();
        let s = split(&d, 0.3, 8).unwrap();
        let space = space_for(kind, &s.train).unwrap();
        let configs = sample_full(&space, 15, 9);
        let ps = run_sweep(kind, &configs, &s, EvalOn::Holdout, 10)
            .unwrap()
            .predictions;
        let dims = Dims {
            n_train: Some(s.train.n_rows()),
            n_features: Some(s.train.n_cols()),
        };
        let text = interchange::to_string(&ps, dims);
        let (back, back_dims) =
            interchange::from_str(&text, SpaceCheck::FromHeader).map_err(|e| e.to_string())?;
        ensure!(
            back == ps && back_dims == dims,
            "{kind}: imported set differs"
        );
        let (d1, d2) = (
            model_discrepancy(&ps).unwrap(),
            model_discrepancy(&back).unwrap(),
        );
        let (t1, t2) = (tunability(&ps).unwrap(), tunability(&back).unwrap());
        ensure!(
            d1.value.to_bits() == d2.value.to_bits() && t1.value.to_bits() == t2.value.to_bits(),
            "{kind}: metrics not bit-identical"
        );
    }

    // command level: sweep, then import its exported predictions
    let config = dir.path().join("sweep.toml");
    fs::write(
        &config,
        "seed = 5\n[[models]]\nname = \"KNN\"\ncount = 12\n[models.points]\nk = 8\n\
         [[models]]\nname = \"GradientBoosting\"\ncount = 12\n",
    )
    .unwrap();
    let swept = run::cmd_sweep(&config, &data, &RunOptions::new(dir.path().join("sweep")))
        .map_err(|e| format!("{e:#}"))?;
    let pred_dir = dir.path().join("sweep").join(run::PREDICTIONS_DIR);
    let mut full = Vec::new();
    let mut marginal = Vec::new();
    for entry in fs::read_dir(&pred_dir).unwrap() {
        let p = entry.unwrap().path();
        if p.to_string_lossy().ends_with("__full.tsv") {
            full.push(p);
        } else {
            marginal.push(p);
        }
    }
    full.sort();
    marginal.sort();
    let imported = run::cmd_import(&full, &RunOptions::new(dir.path().join("import")))
        .map_err(|e| format!("{e:#}"))?;
    ensure!(
        imported.report.per_dataset.len() == swept.report.per_dataset.len(),
        "imported {} results, swept {}",
        imported.report.per_dataset.len(),
        swept.report.per_dataset.len()
    );
    for row in &imported.report.per_dataset {
        let original = swept
            .report
            .per_dataset
            .iter()
            .find(|r| r.dataset_id == row.dataset_id && r.model == row.model)
            .ok_or("imported result without a swept counterpart")?;
        ensure!(
            same_result(row, original),
            "{} {}: imported metrics differ",
            row.dataset_id,
            row.model
        );
    }
    ensure!(
        imported.report.summary == swept.report.summary,
        "summary rows differ after import"
    );
    let imported_marg = run::cmd_import(
        &marginal,
        &RunOptions::new(dir.path().join("import_marginal")),
    )
    .map_err(|e| format!("{e:#}"))?;
    for row in &swept.report.marginal.results {
        let back = imported_marg
            .report
            .marginal
            .results
            .iter()
            .find(|r| r.dataset_id == row.dataset_id && r.scope == row.scope)
            .ok_or("marginal result missing after import")?;
        ensure!(
            same_result(row, back),
            "{}: marginal metrics differ after import: {row:?} vs {back:?}",
            row.dataset_id
        );
    }

    // malformed files
    let good = fs::read_to_string(&full[0]).unwrap();
    let lines: Vec<&str> = good.lines().collect();
    let first_row = lines
        .iter()
        .position(|l| l.starts_with("config_id\t"))
        .unwrap()
        + 1;
    let row_line = first_row + 1; // 1-based
    let with_row = |f: &dyn Fn(&str) -> String| {
        let mut l: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        l[first_row] = f(&l[first_row]);
        l.join("\n") + "\n"
    };
    let default_line = lines
        .iter()
        .find(|l| l.split('\t').nth(2) == Some("1"))
        .unwrap()
        .to_string();
    let cases: Vec<(&str, String, ErrorCheck<'_>)> = vec![
        (
            "bad magic",
            good.replacen("#hypermult-predictions", "#predictions", 1),
            Box::new(|e| matches!(e, Error::SchemaError { line: 1, .. })),
        ),
        (
            "truncated header",
            lines[..3].join("\n"),
            Box::new(|e| matches!(e, Error::SchemaError { .. })),
        ),
        (
            "short label vector",
            with_row(&|r| {
                let mut cells: Vec<String> = r.split('\t').map(str::to_string).collect();
                cells[3] = "0,1".into();
                cells.join("\t")
            }),
            Box::new(move |e| matches!(e, Error::SchemaError { line, .. } if *line == row_line)),
        ),
        (
            "label outside {0,1}",
            with_row(&|r| {
                let mut cells: Vec<String> = r.split('\t').map(str::to_string).collect();
                let mut labels: Vec<&str> = cells[3].split(',').collect();
                labels[0] = "7";
                cells[3] = labels.join(",");
                cells.join("\t")
            }),
            Box::new(
                move |e| matches!(e, Error::LabelDomainError { line, .. } if *line == row_line),
            ),
        ),
        (
            "values not JSON",
            with_row(&|r| {
                let mut cells: Vec<String> = r.split('\t').map(str::to_string).collect();
                cells[1] = "{k: 3".into();
                cells.join("\t")
            }),
            Box::new(move |e| matches!(e, Error::SchemaError { line, .. } if *line == row_line)),
        ),
        (
            "no default row",
            lines
                .iter()
                .filter(|l| **l != default_line)
                .cloned()
                .collect::<Vec<_>>()
                .join("\n")
                + "\n",
            Box::new(|e| matches!(e, Error::NoDefaultRow)),
        ),
        (
            "two default rows",
            format!("{good}{default_line}\n"),
            Box::new(
                move |e| matches!(e, Error::DuplicateDefault { line } if *line == lines.len() + 1),
            ),
        ),
    ];
    for (what, text, expected) in cases {
        match interchange::from_str(&text, SpaceCheck::FromHeader) {
            Ok(_) => return Err(format!("{what}: accepted")),
            Err(e) => ensure!(expected(&e), "{what}: unexpected error {e:?}"),
        }
    }
    Ok(())
}
