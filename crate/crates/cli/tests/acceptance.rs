//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the `dtirs` binary for the end-to-end criteria.

#[path = "acceptance/dsdl_fuzz.rs"]
mod dsdl_fuzz;
#[path = "acceptance/synth.rs"]
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dtirs_core::dsdl::{parse_and_validate, parse_dsdl, serialize, validate_schema, ColumnType, Schema, TargetType};
use dtirs_core::features::{self, FeatureConfig, FeatureMatrix};
use dtirs_core::models::{Link, MfModel, ModelId, PairIndex, SgdModel};
use dtirs_core::table::{read_table, split_indices, Fractions, ReadOptions, SplitSpec};
use dtirs_core::task::{metric_auc, metric_ranking, metric_set, ndcg, RankedOutput, TruthRelevance};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

const CLICKED_AD: &str = include_str!("../../core/tests/fixtures/clicked_ad.dsdl");
const MOVIE_RATING: &str = include_str!("../../core/tests/fixtures/movie_rating.dsdl");
const NEXT_BASKET: &str = include_str!("../../core/tests/fixtures/next_basket.dsdl");
const MOVIE_TOP_N: &str = include_str!("../../core/tests/fixtures/movie_top_n.dsdl");

const PARSER_LIMIT: Duration = Duration::from_secs(1);
const ROUND_TRIP_LIMIT: Duration = Duration::from_secs(5);
const GRADIENT_LIMIT: Duration = Duration::from_secs(10);
const END_TO_END_LIMIT: Duration = Duration::from_secs(300);

const ROUND_TRIP_SCHEMAS: usize = 100;
const AUC_CASES: usize = 2000;
const RANKING_TOL: f64 = 1e-12;
const WORKED_TOL: f64 = 1e-6;

const FD_STEP: f64 = 1e-5;
const GRADIENT_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, so components whose true
/// value is zero are judged on absolute error.
const GRADIENT_FLOOR: f64 = 1e-6;
const GRADIENT_INSTANCES: usize = 60;

const MIN_AUC: f64 = 0.90;
const MAX_RMSE: f64 = 0.6;
const RUN_SEED: &str = "42";
/// Shared by every run. The synthetic users never repeat an interaction,
/// so already-seen labels are excluded from the top-N lists; scalar tasks
/// ignore the flag.
const RUN_FLAGS: &[&str] = &["--exclude-seen"];

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:.2?}, limit {limit:.0?}");
    Ok(took)
}

// ---------------------------------------------------------------- C1

/// (name, source, find, replace, expected line, expected column)
const MUTATIONS: &[(&str, &str, &str, &str, usize, usize)] = &[
    ("wrong header", CLICKED_AD, "DsDL:", "Schema:", 1, 1),
    ("header colon", CLICKED_AD, "DsDL:", "DsDL", 2, 5),
    (
        "unknown column type",
        CLICKED_AD,
        "type: numeric}",
        "type: numerc}",
        2,
        42,
    ),
    (
        "misspelt field",
        CLICKED_AD,
        "{col_name: ad_id",
        "{col_nme: ad_id",
        4,
        16,
    ),
    (
        "duplicate column",
        CLICKED_AD,
        "col_name: ad_id",
        "col_name: user_id",
        4,
        26,
    ),
    (
        "undeclared label",
        CLICKED_AD,
        "label_col: clicked",
        "label_col: click",
        10,
        26,
    ),
    (
        "undeclared key",
        CLICKED_AD,
        "key_col: index_id",
        "key_col: idx",
        11,
        24,
    ),
    (
        "undeclared timestamp",
        CLICKED_AD,
        "timestamp_col: timestamp",
        "timestamp_col: ts",
        8,
        20,
    ),
    (
        "unclosed target list",
        CLICKED_AD,
        "key_col: index_id}]",
        "key_col: index_id}",
        11,
        32,
    ),
    (
        "unclosed column object",
        CLICKED_AD,
        "{col_name: device_type, type: categorical},",
        "{col_name: device_type, type: categorical,",
        5,
        56,
    ),
    (
        "stray bracket",
        CLICKED_AD,
        "timestamp_col: timestamp",
        "timestamp_col: timestamp ]",
        8,
        30,
    ),
    (
        "repeated field",
        CLICKED_AD,
        "{col_name: clicked, type: binary}",
        "{col_name: clicked, type: binary, type: binary}",
        7,
        47,
    ),
    (
        "binary label not binary",
        CLICKED_AD,
        "{col_name: clicked, type: binary}",
        "{col_name: clicked, type: categorical}",
        10,
        26,
    ),
    ("missing label_col", CLICKED_AD, "label_col: clicked, \n", "\n", 11, 15),
    (
        "unknown target type",
        CLICKED_AD,
        "[{type: binary,",
        "[{type: boolean,",
        9,
        21,
    ),
    (
        "illegal character",
        CLICKED_AD,
        "col_name: ad_id",
        "col_name: ad@id",
        4,
        28,
    ),
    (
        "timestamp not numeric",
        CLICKED_AD,
        "{col_name: timestamp, type: numeric}",
        "{col_name: timestamp, type: textual}",
        8,
        20,
    ),
    (
        "list_size on scalar target",
        CLICKED_AD,
        "key_col: index_id}]",
        "key_col: index_id, list_size: 5}]",
        11,
        46,
    ),
    (
        "key equals label",
        CLICKED_AD,
        "key_col: index_id",
        "key_col: clicked",
        11,
        24,
    ),
    ("list_size zero", MOVIE_TOP_N, "list_size: 10", "list_size: 0", 9, 26),
    (
        "fractional list_size",
        MOVIE_TOP_N,
        "list_size: 10",
        "list_size: 2.5",
        9,
        27,
    ),
    ("missing list_size", MOVIE_TOP_N, "list_size: 10, \n", "", 9, 29),
    (
        "undeclared relevance",
        MOVIE_TOP_N,
        "relevance_col: rating",
        "relevance_col: score",
        10,
        30,
    ),
    (
        "categorical relevance",
        MOVIE_TOP_N,
        "relevance_col: rating",
        "relevance_col: genre",
        10,
        30,
    ),
    (
        "numeric list label",
        MOVIE_TOP_N,
        "{col_name: movie_id, type: categorical}",
        "{col_name: movie_id, type: numeric}",
        7,
        26,
    ),
    (
        "numeric label not numeric",
        MOVIE_RATING,
        "{col_name: rating, type: numeric}",
        "{col_name: rating, type: binary}",
        9,
        26,
    ),
    (
        "bad escape",
        NEXT_BASKET,
        "col_name: user_id",
        "col_name: \"us\\er\"",
        2,
        29,
    ),
];

struct Expect {
    columns: usize,
    timestamp: Option<&'static str>,
    target: (
        TargetType,
        &'static str,
        &'static str,
        Option<u64>,
        Option<&'static str>,
    ),
}

fn check_listing(name: &str, text: &str, e: &Expect) -> Result<(), String> {
    let doc = parse_dsdl(text).map_err(|d| format!("{name}: {d:?}"))?;
    let diags = validate_schema(&doc.schema);
    ensure!(diags.is_empty(), "{name}: diagnostics {diags:?}");
    let s = &doc.schema;
    ensure!(s.columns.len() == e.columns, "{name}: {} columns", s.columns.len());
    ensure!(
        s.timestamp_col.as_deref() == e.timestamp,
        "{name}: timestamp {:?}",
        s.timestamp_col
    );
    ensure!(s.targets.len() == 1, "{name}: {} targets", s.targets.len());
    let t = &s.targets[0];
    let (tt, label, key, size, rel) = e.target;
    ensure!(
        t.target_type == tt
            && t.label_col == label
            && t.key_col == key
            && t.list_size == size
            && t.relevance_col.as_deref() == rel,
        "{name}: target {t:?}"
    );
    Ok(())
}

fn parser_conformance() -> Outcome {
    let start = Instant::now();
    let references = [
        (
            "clicked_ad",
            CLICKED_AD,
            Expect {
                columns: 6,
                timestamp: Some("timestamp"),
                target: (TargetType::Binary, "clicked", "index_id", None, None),
            },
        ),
        (
            "movie_rating",
            MOVIE_RATING,
            Expect {
                columns: 6,
                timestamp: None,
                target: (TargetType::Numeric, "rating", "index_id", None, None),
            },
        ),
        (
            "next_basket",
            NEXT_BASKET,
            Expect {
                columns: 5,
                timestamp: Some("order_timestamp"),
                target: (
                    TargetType::UnorderedList,
                    "product_id",
                    "user_id",
                    Some(10),
                    Some("bought"),
                ),
            },
        ),
        (
            "movie_top_n",
            MOVIE_TOP_N,
            Expect {
                columns: 4,
                timestamp: None,
                target: (TargetType::OrderedList, "movie_id", "user_id", Some(10), Some("rating")),
            },
        ),
    ];
    for (name, text, e) in &references {
        check_listing(name, text, e)?;
    }
    let clicked = parse_dsdl(CLICKED_AD).unwrap().schema;
    let types: Vec<ColumnType> = clicked.columns.iter().map(|c| c.col_type).collect();
    ensure!(
        types
            == [
                ColumnType::Numeric,
                ColumnType::Categorical,
                ColumnType::Categorical,
                ColumnType::Categorical,
                ColumnType::Numeric,
                ColumnType::Binary
            ],
        "clicked_ad column types {types:?}"
    );

    for &(name, source, find, replace, line, column) in MUTATIONS {
        ensure!(source.contains(find), "mutation '{name}' does not apply");
        let text = source.replacen(find, replace, 1);
        let diags = match parse_and_validate(&text) {
            Ok(_) => return Err(format!("mutation '{name}' parsed cleanly")),
            Err(d) => d,
        };
        let first = diags
            .iter()
            .find(|d| d.is_error())
            .ok_or(format!("'{name}': no error"))?;
        ensure!(
            (first.line, first.column) == (line, column),
            "mutation '{name}': error at {}:{}, expected {line}:{column} ({})",
            first.line,
            first.column,
            first.message
        );
    }
    let took = within(PARSER_LIMIT, start)?;
    Ok(format!(
        "4 reference schemas exact, {} invalid documents located ({took:.2?})",
        MUTATIONS.len()
    ))
}

// ---------------------------------------------------------------- C2

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xd5d1);
    for case in 0..ROUND_TRIP_SCHEMAS {
        let schema = dsdl_fuzz::random_schema(&mut rng);
        let text = dsdl_fuzz::scrambled_text(&schema, &mut rng);
        let first: Schema = parse_and_validate(&text).map_err(|d| format!("case {case}: {d:?}\n{text}"))?;
        ensure!(
            first == schema,
            "case {case}: parse differs from generated schema\n{text}"
        );
        let canonical = serialize(&first);
        let second = parse_and_validate(&canonical).map_err(|d| format!("case {case}: {d:?}\n{canonical}"))?;
        ensure!(
            second == first,
            "case {case}: parse∘serialize∘parse differs\n{canonical}"
        );
        ensure!(
            serialize(&second) == canonical,
            "case {case}: canonical form not stable"
        );
    }
    let took = within(ROUND_TRIP_LIMIT, start)?;
    Ok(format!("{ROUND_TRIP_SCHEMAS} random schemas ({took:.2?})"))
}

// ---------------------------------------------------------------- C3

fn brute_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// NDCG, AP and RR of `order` written out from the definitions.
fn direct_ranking(order: &[usize], rel: &[f64], k: usize) -> (Option<f64>, Option<f64>, f64) {
    let top: Vec<f64> = order.iter().take(k).map(|&i| rel[i]).collect();
    let dcg: f64 = top.iter().enumerate().map(|(i, r)| r / ((i + 2) as f64).log2()).sum();
    let mut ideal = rel.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, r)| r / ((i + 2) as f64).log2())
        .sum();
    let ndcg = (idcg > 0.0).then(|| dcg / idcg);
    let relevant = rel.iter().filter(|&&r| r > 0.0).count();
    let mut hits = 0;
    let mut sum = 0.0;
    for (i, r) in top.iter().enumerate() {
        if *r > 0.0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let ap = (relevant > 0).then(|| sum / relevant.min(k) as f64);
    let rr = top.iter().position(|&r| r > 0.0).map_or(0.0, |i| 1.0 / (i + 1) as f64);
    (ndcg, ap, rr)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa0c);
    let mut defined = 0;
    for case in 0..AUC_CASES {
        let n = rng.gen_range(1..=12);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let scores: Vec<f64> = if rng.gen_bool(0.5) {
            (0..n).map(|_| f64::from(rng.gen_range(0..4u8))).collect()
        } else {
            (0..n).map(|_| rng.gen::<f64>()).collect()
        };
        let got = metric_auc(&scores, &labels).map_err(|e| format!("case {case}: {e}"))?;
        let want = brute_auc(&scores, &labels);
        ensure!(got == want, "case {case}: auc {got:?} vs brute force {want:?}");
        defined += usize::from(want.is_some());
    }

    let mut checked = 0;
    for n in 1..=5 {
        for trial in 0..4 {
            let rel: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..4u8))).collect();
            if trial == 0 && rel.iter().all(|&r| r == 0.0) {
                continue;
            }
            let labels: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
            let truth: TruthRelevance = BTreeMap::from([(
                "k".to_string(),
                labels.iter().cloned().zip(rel.iter().copied()).collect(),
            )]);
            for order in permutations(n) {
                let ranked: RankedOutput = BTreeMap::from([(
                    "k".to_string(),
                    order
                        .iter()
                        .enumerate()
                        .map(|(pos, &i)| (labels[i].clone(), (n - pos) as f64))
                        .collect(),
                )]);
                for k in 1..=n + 1 {
                    let m = metric_ranking(&ranked, &truth, k).map_err(|e| e.to_string())?;
                    let (nd, ap, rr) = direct_ranking(&order, &rel, k);
                    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                        (Some(a), Some(b)) => (a - b).abs() <= RANKING_TOL,
                        (a, b) => a == b,
                    };
                    let any = rel.iter().any(|&r| r > 0.0);
                    ensure!(
                        close(m.ndcg, nd) && close(m.map, ap) && close(m.mrr, any.then_some(rr)),
                        "rel {rel:?} order {order:?} k {k}: got {m:?}, direct ({nd:?}, {ap:?}, {rr})"
                    );
                    checked += 1;
                }
            }
        }
    }

    let worked_ndcg = ndcg(&[1.0, 3.0], &[1.0, 3.0], 2).ok_or("ndcg undefined")?;
    ensure!((worked_ndcg - 0.796707).abs() < WORKED_TOL, "worked ndcg {worked_ndcg}");
    let worked_auc = metric_auc(&[0.9, 0.8, 0.3], &[1, 0, 1]).map_err(|e| e.to_string())?;
    ensure!(worked_auc == Some(0.5), "worked auc {worked_auc:?}");
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    let predicted = BTreeMap::from([("k".to_string(), set(&["a", "b"]))]);
    let truth = BTreeMap::from([("k".to_string(), set(&["b", "c"]))]);
    let s = metric_set(&predicted, &truth, 2).map_err(|e| e.to_string())?;
    let jd = s.jaccard_distance.ok_or("jaccard undefined")?;
    ensure!((jd - 2.0 / 3.0).abs() < WORKED_TOL, "worked jaccard distance {jd}");
    Ok(format!(
        "{AUC_CASES} AUC cases exact ({defined} defined), {checked} ranking evaluations, worked values"
    ))
}

// ---------------------------------------------------------------- C4

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

/// Largest relative error between `grad` and central differences of `f`.
fn worst_error(params: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..p.len() {
        let orig = p[j];
        p[j] = orig + FD_STEP;
        let up = f(&p);
        p[j] = orig - FD_STEP;
        let down = f(&p);
        p[j] = orig;
        worst = worst.max(rel_err(grad[j], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn normal(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    scale * z
}

fn sgd_case(rng: &mut ChaCha8Rng, model_id: ModelId, link: Link, factors: usize) -> f64 {
    let dim = rng.gen_range(1..=8);
    let n = rng.gen_range(1..=10);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { normal(rng, 1.0) })
                .collect()
        })
        .collect();
    let x = FeatureMatrix::from_dense(&rows);
    let y: Vec<f64> = (0..n)
        .map(|_| match link {
            Link::Logistic => f64::from(rng.gen_range(0..2u8)),
            Link::Identity => normal(rng, 2.0),
        })
        .collect();
    let l2 = if rng.gen_bool(0.5) {
        0.0
    } else {
        rng.gen_range(0.0..0.1)
    };
    let mut model = SgdModel::init(model_id, link, dim, factors, rng.gen());
    let params: Vec<f64> = (0..model.param_len()).map(|_| normal(rng, 0.5)).collect();
    model.set_params(&params);
    let all: Vec<usize> = (0..n).collect();
    let grad = model.gradient(&x, &y, &all, l2);
    let mut probe = model.clone();
    worst_error(&params, &grad, |p| {
        probe.set_params(p);
        probe.objective(&x, &y, &all, l2)
    })
}

fn bpr_case(rng: &mut ChaCha8Rng) -> f64 {
    let keys = rng.gen_range(1..=4);
    let labels = rng.gen_range(2..=6);
    let factors = rng.gen_range(1..=4);
    let mut model = MfModel {
        factors,
        keys: (0..keys).map(|i| format!("k{i}")).collect(),
        labels: (0..labels).map(|i| format!("l{i}")).collect(),
        key_embeddings: vec![0.0; keys * factors],
        label_embeddings: vec![0.0; labels * factors],
        label_bias: vec![0.0; labels],
    };
    let params: Vec<f64> = (0..model.param_len()).map(|_| normal(rng, 0.5)).collect();
    model.set_params(&params);
    let pairs: Vec<PairIndex> = (0..rng.gen_range(1..=10))
        .map(|_| {
            let mut ls: Vec<usize> = (0..labels).collect();
            ls.shuffle(rng);
            (rng.gen_range(0..keys), ls[0], ls[1])
        })
        .collect();
    let l2 = if rng.gen_bool(0.5) {
        0.0
    } else {
        rng.gen_range(0.0..0.1)
    };
    let grad = model.gradient(&pairs, l2);
    let mut probe = model.clone();
    worst_error(&params, &grad, |p| {
        probe.set_params(p);
        probe.objective(&pairs, l2)
    })
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x96ad);
    let mut report = Vec::new();
    for name in ["logistic", "linear", "fm", "bpr"] {
        let mut worst: f64 = 0.0;
        for case in 0..GRADIENT_INSTANCES {
            let e = match name {
                "logistic" => sgd_case(&mut rng, ModelId::LogisticRegression, Link::Logistic, 0),
                "linear" => sgd_case(&mut rng, ModelId::LinearRegression, Link::Identity, 0),
                "fm" => {
                    let link = if case % 2 == 0 { Link::Logistic } else { Link::Identity };
                    let factors = rng.gen_range(1..=4);
                    sgd_case(&mut rng, ModelId::FactorizationMachine, link, factors)
                }
                _ => bpr_case(&mut rng),
            };
            ensure!(e < GRADIENT_TOL, "{name} instance {case}: relative error {e:.3e}");
            worst = worst.max(e);
        }
        report.push(format!("{name} {worst:.1e}"));
    }
    let took = within(GRADIENT_LIMIT, start)?;
    Ok(format!(
        "{GRADIENT_INSTANCES} instances each, worst relative error: {} ({took:.2?})",
        report.join(", ")
    ))
}

// ---------------------------------------------------------------- C5-C8

struct Task {
    name: &'static str,
    dsdl: PathBuf,
    csv: PathBuf,
}

fn dtirs(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dtirs"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "dtirs {} exited with {}: {}",
        args.join(" "),
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn run_task(task: &Task, csv: &Path, out: &Path, workers: usize) -> Result<(), String> {
    let workers = workers.to_string();
    let mut args = vec![
        "run",
        "--data",
        csv.to_str().unwrap(),
        "--dsdl",
        task.dsdl.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        RUN_SEED,
        "--workers",
        &workers,
    ];
    args.extend_from_slice(RUN_FLAGS);
    dtirs(&args).map(drop)
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn metric(v: &Value, path: &[&str]) -> Result<f64, String> {
    let mut cur = v;
    for p in path {
        cur = cur.get(p).ok_or_else(|| format!("report has no {}", path.join(".")))?;
    }
    cur.as_f64().ok_or_else(|| format!("{} is {cur}", path.join(".")))
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    tasks: Vec<Task>,
    /// Every output directory produced, for the ledger audit.
    outputs: Vec<PathBuf>,
}

impl Workspace {
    fn new() -> Result<Workspace, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = dir.path().to_path_buf();
        let specs = [
            ("clicked_ad", CLICKED_AD, synth::clicks()),
            ("movie_rating", MOVIE_RATING, synth::ratings()),
            ("movie_top_n", MOVIE_TOP_N, synth::top_n()),
            ("next_basket", NEXT_BASKET, synth::baskets()),
        ];
        let mut tasks = Vec::new();
        for (name, dsdl, csv) in specs {
            let t = Task {
                name,
                dsdl: root.join(format!("{name}.dsdl")),
                csv: root.join(format!("{name}.csv")),
            };
            std::fs::write(&t.dsdl, dsdl).map_err(|e| e.to_string())?;
            std::fs::write(&t.csv, csv).map_err(|e| e.to_string())?;
            tasks.push(t);
        }
        Ok(Workspace {
            _dir: dir,
            root,
            tasks,
            outputs: Vec::new(),
        })
    }

    fn out_dir(&self, task: &Task, label: &str) -> PathBuf {
        self.root.join(format!("out-{}-{label}", task.name))
    }

    fn report(&self, task: &Task, label: &str) -> Result<Value, String> {
        read_json(&self.out_dir(task, label).join("report.target0.json"))
    }
}

fn end_to_end(ws: &mut Workspace) -> Outcome {
    let start = Instant::now();
    for i in 0..ws.tasks.len() {
        let task = &ws.tasks[i];
        let out = ws.out_dir(task, "w1");
        run_task(task, &task.csv, &out, 1)?;
        ws.outputs.push(out);
    }
    let took = within(END_TO_END_LIMIT, start)?;

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let [click, rating, top_n, basket] = &ws.tasks[..] else {
        unreachable!()
    };

    let r = ws.report(click, "w1")?;
    let auc = metric(&r, &["metrics", "auc"])?;
    let ll = metric(&r, &["metrics", "log_loss"])?;
    let base_ll = metric(&r, &["baseline", "metrics", "log_loss"])?;
    lines.push(format!("binary auc {auc:.4} log_loss {ll:.4} < {base_ll:.4}"));
    if !(auc >= MIN_AUC && ll < base_ll) {
        failures.push("binary");
    }

    let r = ws.report(rating, "w1")?;
    let rmse = metric(&r, &["metrics", "rmse"])?;
    lines.push(format!("numeric rmse {rmse:.4}"));
    if rmse > MAX_RMSE {
        failures.push("numeric");
    }

    let r = ws.report(top_n, "w1")?;
    let nd = metric(&r, &["metrics", "ndcg@10"])?;
    let base_nd = metric(&r, &["baseline", "metrics", "ndcg@10"])?;
    lines.push(format!("ordered ndcg@10 {nd:.4} vs popularity {base_nd:.4}"));
    if nd < base_nd {
        failures.push("ordered_list");
    }

    let r = ws.report(basket, "w1")?;
    let jd = metric(&r, &["metrics", "jaccard_distance@10"])?;
    let base_jd = metric(&r, &["baseline", "metrics", "jaccard_distance@10"])?;
    lines.push(format!(
        "unordered jaccard_distance@10 {jd:.4} vs popularity {base_jd:.4}"
    ));
    if jd > base_jd {
        failures.push("unordered_list");
    }

    let detail = format!("{}; {took:.1?}", lines.join("; "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} below threshold: {detail}", failures.join(", ")))
    }
}

fn dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism(ws: &mut Workspace) -> Outcome {
    let mut compared = 0;
    for i in 0..ws.tasks.len() {
        let task = &ws.tasks[i];
        let (a, b) = (ws.out_dir(task, "w4"), ws.out_dir(task, "w4-again"));
        run_task(task, &task.csv, &a, 4)?;
        run_task(task, &task.csv, &b, 4)?;
        ws.outputs.extend([a.clone(), b.clone()]);
        let base = dir_bytes(&ws.out_dir(task, "w1"))?;
        for (label, other) in [("workers 4", dir_bytes(&a)?), ("rerun", dir_bytes(&b)?)] {
            ensure!(
                base.keys().eq(other.keys()),
                "{}: {label} wrote {:?}, workers 1 wrote {:?}",
                task.name,
                other.keys().collect::<Vec<_>>(),
                base.keys().collect::<Vec<_>>()
            );
            for (file, bytes) in &base {
                ensure!(&other[file] == bytes, "{}: {file} differs for {label}", task.name);
                compared += 1;
            }
        }
    }
    Ok(format!(
        "{compared} files byte-identical across workers 1, 4 and a rerun"
    ))
}

/// Rewrites feature and label cells of the given data rows.
fn mutate_rows(csv: &str, rows: &BTreeSet<usize>, rng: &mut ChaCha8Rng, task: &str) -> String {
    let mut out = String::new();
    for (line_no, line) in csv.lines().enumerate() {
        if line_no == 0 || !rows.contains(&(line_no - 1)) {
            out += line;
            out.push('\n');
            continue;
        }
        let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
        if task == "clicked_ad" {
            // index_id,user_id,ad_id,device_type,timestamp,clicked
            cells[1] = format!("u{}", rng.gen_range(0..1000));
            cells[2] = format!("a{}", rng.gen_range(0..100));
            cells[3] = ["watch", "tv", "mobile"].choose(rng).unwrap().to_string();
            cells[5] = if cells[5] == "1" { "0".into() } else { "1".into() };
        } else {
            // index_id,user_id,movie_id,movie_genre,user_age,rating
            cells[1] = format!("u{}", rng.gen_range(0..1000));
            cells[2] = format!("m{}", rng.gen_range(0..1000));
            cells[3] = format!("g{}", rng.gen_range(0..9));
            cells[4] = rng.gen_range(0..120).to_string();
            cells[5] = (rng.gen_range(-50.0..50.0_f64)).to_string();
        }
        out += &cells.join(",");
        out.push('\n');
    }
    out
}

fn no_leakage(ws: &mut Workspace) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1eaf);
    let mut details = Vec::new();
    for i in 0..2 {
        let task = &ws.tasks[i];
        let text = std::fs::read_to_string(&task.csv).map_err(|e| e.to_string())?;
        let schema = Arc::new(parse_and_validate(&std::fs::read_to_string(&task.dsdl).unwrap()).unwrap());
        let target = &schema.targets[0];
        let read = |csv: &str| {
            read_table(csv.as_bytes(), &schema, ReadOptions::default())
                .map(|o| o.dataset)
                .map_err(|e| format!("{:?}", e.issues))
        };
        let data = read(&text)?;
        let spec = SplitSpec::default_for(&schema, target, Fractions::default(), RUN_SEED.parse().unwrap());
        let idx = split_indices(&data, &spec).map_err(|e| e.to_string())?;
        let held_out: BTreeSet<usize> = idx.validation.iter().chain(&idx.test).copied().collect();
        let mutated = mutate_rows(&text, &held_out, &mut rng, task.name);
        ensure!(mutated != text, "{}: mutation changed nothing", task.name);

        // direct plan fit on the train partition of each version
        let fit = |d: &dtirs_core::table::Dataset| {
            let i = split_indices(d, &spec).map_err(|e| e.to_string())?;
            ensure!(i == idx, "{}: mutation moved rows between partitions", task.name);
            features::fit(&d.take(&i.train), &schema, target, FeatureConfig::default()).map_err(|e| e.to_string())
        };
        let plan = fit(&data)?;
        ensure!(plan == fit(&read(&mutated)?)?, "{}: fitted plan changed", task.name);

        // and through the binary: the persisted plan is unchanged
        let mutated_csv = ws.root.join(format!("{}-mutated.csv", task.name));
        std::fs::write(&mutated_csv, &mutated).map_err(|e| e.to_string())?;
        let out = ws.out_dir(task, "mutated");
        run_task(task, &mutated_csv, &out, 0)?;
        let original = read_json(&ws.out_dir(task, "w1").join("model.target0.json"))?;
        let changed = read_json(&out.join("model.target0.json"))?;
        ensure!(
            original["feature_plan"] == changed["feature_plan"],
            "{}: persisted feature plan changed",
            task.name
        );
        let report_changed = ws.report(task, "w1")? != ws.report(task, "mutated")?;
        ws.outputs.push(out);
        details.push(format!(
            "{} ({} held-out rows mutated, report {})",
            task.name,
            held_out.len(),
            if report_changed { "changed" } else { "unchanged" }
        ));
    }
    Ok(format!("plans equal: {}", details.join(", ")))
}

fn ledger_consistency(ws: &Workspace) -> Outcome {
    let mut runs = 0;
    for dir in &ws.outputs {
        let r = read_json(&dir.join("report.target0.json"))?;
        let maximize = r["selection_metric"]["direction"] == "max";
        let mut best: Option<(Option<f64>, u64)> = None;
        for t in r["trials"].as_array().ok_or("trials missing")? {
            if t["status"] != "ok" {
                continue;
            }
            let v = t["validation_metric"].as_f64();
            let idx = t["trial_index"].as_u64().ok_or("trial_index missing")?;
            let better = match (best, v) {
                (None, _) => true,
                (Some((None, _)), Some(_)) => true,
                (Some((Some(b), _)), Some(v)) => {
                    if maximize {
                        v > b
                    } else {
                        v < b
                    }
                }
                _ => false,
            };
            if better {
                best = Some((v, idx));
            }
        }
        let recorded = r["winner"]["trial_index"].as_u64();
        ensure!(
            best.map(|b| b.1) == recorded,
            "{}: recomputed winner {best:?}, recorded {recorded:?}",
            dir.display()
        );
        runs += 1;
    }
    ensure!(runs > 0, "no runs to audit");
    Ok(format!("winner reproduced from the trial list in {runs} runs"))
}

/// The saved model, reloaded by `dtirs predict`, reproduces the run's
/// predictions.
fn artifact_round_trip(ws: &Workspace) -> Outcome {
    for task in &ws.tasks {
        let dir = ws.out_dir(task, "w1");
        let file = dir.join("predict.csv");
        dtirs(&[
            "predict",
            "--model",
            dir.join("model.target0.json").to_str().unwrap(),
            "--data",
            task.csv.to_str().unwrap(),
            "--out",
            file.to_str().unwrap(),
        ])?;
        let again = std::fs::read_to_string(&file).map_err(|e| e.to_string())?;
        std::fs::remove_file(&file).map_err(|e| e.to_string())?;
        let run = std::fs::read_to_string(dir.join("predictions.target0.csv")).map_err(|e| e.to_string())?;
        if matches!(task.name, "clicked_ad" | "movie_rating") {
            // run predictions cover the test rows; keys are unique row ids
            let all: BTreeMap<&str, &str> = again.lines().skip(1).filter_map(|l| l.split_once(',')).collect();
            for line in run.lines().skip(1) {
                let (key, score) = line.split_once(',').ok_or("bad prediction row")?;
                ensure!(
                    all.get(key) == Some(&score),
                    "{}: key {key} scored differently",
                    task.name
                );
            }
        } else {
            ensure!(again == run, "{}: list predictions differ", task.name);
        }
    }
    Ok("predict reproduces run predictions for all four tasks".into())
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut guarded = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name}: {detail}");
        results.push((name, outcome));
    };

    guarded("C1 parser conformance", &mut parser_conformance);
    guarded("C2 parse/serialize round trip", &mut round_trip);
    guarded("C3 metric oracles", &mut metric_oracles);
    guarded("C4 gradient checks", &mut gradient_checks);

    match Workspace::new() {
        Ok(mut ws) => {
            guarded("C5 end-to-end synthetic tasks", &mut || end_to_end(&mut ws));
            guarded("C6 determinism and worker invariance", &mut || determinism(&mut ws));
            guarded("C7 no leakage into the feature plan", &mut || no_leakage(&mut ws));
            guarded("C8 trial ledger reproduces the winner", &mut || ledger_consistency(&ws));
            guarded("artifact round trip", &mut || artifact_round_trip(&ws));
        }
        Err(e) => {
            for name in ["C5", "C6", "C7", "C8"] {
                println!("FAIL {name}: could not prepare data: {e}");
            }
            std::process::exit(1);
        }
    }

    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
