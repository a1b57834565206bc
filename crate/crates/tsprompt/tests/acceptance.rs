//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach the
//! terminal; exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use tsprompt::experiment::{self, ExperimentPlan, RunOptions};
use tsprompt::fixtures::{generate_fixtures, FixtureConfig};
use tsprompt::llm::build_backend;
use tsprompt_core::metrics::EmbedError;
use tsprompt_core::prompt::sample_indices;
use tsprompt_core::{
    bertscore_f1, bleu, build_prompt, judge, meteor_exact, serialize, serialize_pair, ClockTime, Continuation, Direction,
    Embedder, MovementLexicon, PriceSeries, PromptError, PromptFormat, SerializerConfig, SeriesKind, Split, TaskInstance,
    Timestamp, TokenizationScheme, Verdict, Yen, MAX_SHOTS,
};

/// Tolerances and budgets, pinned here rather than scattered through checks.
const BLEU_ORACLE_TOL: f64 = 1e-9;
const BLEU_HAND_CASE: f64 = 77.88;
const BLEU_HAND_TOL: f64 = 0.01;
const METEOR_LONG_IDENTITY_TOL: f64 = 0.1;
const EXACT_TOL: f64 = 1e-12;
const GOLDEN_BUDGET: Duration = Duration::from_secs(1);
const PRESERVATION_BUDGET: Duration = Duration::from_secs(10);
const END_TO_END_BUDGET: Duration = Duration::from_secs(10);

type Criterion = (&'static str, fn() -> Result<String, String>);

fn main() {
    let criteria: [Criterion; 9] = [
        ("serializer golden strings", serializer_goldens),
        ("information preservation, 1000 series x 10 formats", information_preservation),
        ("BLEU brute-force oracle and hand case", bleu_oracle),
        ("METEOR and BERTScore identity / zero / swap cases", meteor_bertscore_cases),
        ("prompt template structure for k in {0,2,5,10}", prompt_structure),
        ("end-to-end determinism and resume on the mock backend", end_to_end),
        ("consistency checker on an (Up, Rebound, +421.00) fixture", consistency_fixture),
        ("HTML prompt is the longest on identical full-day series", html_longest),
        ("published absolute scores are not reproduced; live-run grid shape", reproduction_statement),
    ];
    // Failing checks report through the returned message, not the panic hook.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{ms} ms] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{ms} ms] {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(started: Instant, budget: Duration) -> Result<(), String> {
    ensure(started.elapsed() < budget, || format!("took {:?}, budget {budget:?}", started.elapsed()))
}

fn yen(s: &str) -> Yen {
    Yen::parse_strict(s).unwrap()
}

fn clock(s: &str) -> ClockTime {
    s.parse().unwrap()
}

// ---------------------------------------------------------------------------

fn serializer_goldens() -> Result<String, String> {
    let started = Instant::now();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let cfg = SerializerConfig::default();
    let short = PriceSeries::new(
        SeriesKind::ShortTerm,
        vec![(Timestamp::Clock(clock("15:00")), yen("9988.05")), (Timestamp::Clock(clock("14:55")), yen("9982.06"))],
        "Nikkei225",
    )
    .unwrap();
    let long = PriceSeries::new(
        SeriesKind::LongTerm,
        vec![(Timestamp::DaysAgo(7), yen("9988.05")), (Timestamp::DaysAgo(6), yen("9982.06"))],
        "Nikkei225",
    )
    .unwrap();
    let full_day = PriceSeries::new(
        SeriesKind::ShortTerm,
        ClockTime::session_times().enumerate().map(|(i, t)| (Timestamp::Clock(t), Yen::from_hundredths(1_000_000 + i as i64))).collect(),
        "Nikkei225",
    )
    .unwrap();
    let week = PriceSeries::new(
        SeriesKind::LongTerm,
        (1..=7).map(|d| (Timestamp::DaysAgo(d), Yen::from_hundredths(990_000 + i64::from(d)))).collect(),
        "Nikkei225",
    )
    .unwrap();
    ensure(full_day.len() == 62 && week.len() == 7, || "fixture sizes".into())?;
    let mut compared = 0;
    for format in PromptFormat::ALL {
        for (prefix, series) in [("short", &short), ("long", &long)] {
            let path = dir.join(format!("{prefix}_{}.txt", format.cli_name()));
            let want = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let got = serialize(series, format, &cfg).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("{prefix} {format}: got {got:?}"))?;
            compared += 1;
        }
        for series in [&full_day, &week] {
            serialize(series, format, &cfg).map_err(|e| format!("{format} full series: {e}"))?;
        }
    }
    within(started, GOLDEN_BUDGET)?;
    Ok(format!("{compared} goldens byte-exact; 62- and 7-point series serialize in all formats"))
}

fn information_preservation() -> Result<String, String> {
    let started = Instant::now();
    let cfg = SerializerConfig::default();
    let mut rng = common::rng(2024);
    let mut checked = 0;
    for i in 0..1000 {
        let kind = if i % 2 == 0 { SeriesKind::ShortTerm } else { SeriesKind::LongTerm };
        let series = common::random_series(&mut rng, kind);
        for format in PromptFormat::ALL {
            let text = serialize(&series, format, &cfg).map_err(|e| e.to_string())?;
            let got = common::extract(format, &text).ok_or_else(|| format!("{format}: cannot parse {text:?}"))?;
            ensure(got == common::expected_points(&series, format), || format!("{format}: mismatch on {text:?}"))?;
            checked += 1;
        }
    }
    within(started, PRESERVATION_BUDGET)?;
    Ok(format!("{checked} round trips (Direct recovers prices only)"))
}

// Brute-force single-pair BLEU: every n-gram occurrence is counted by a
// linear scan, precisions multiplied directly.
fn oracle_bleu(c: &[&str], r: &[&str]) -> f64 {
    if c.is_empty() {
        return if r.is_empty() { 100.0 } else { 0.0 };
    }
    let count = |hay: &[&str], gram: &[&str]| hay.windows(gram.len()).filter(|w| *w == gram).count();
    let (mut product, mut orders) = (1.0f64, 0i32);
    for n in 1..=4.min(c.len()) {
        let total = c.len() + 1 - n;
        let mut clipped = 0.0;
        // Each occurrence contributes 1/occurrences_in_c of its clipped count.
        for gram in c.windows(n) {
            let in_c = count(c, gram) as f64;
            let in_r = if r.len() >= n { count(r, gram) as f64 } else { 0.0 };
            clipped += in_c.min(in_r) / in_c;
        }
        let matched = clipped.round();
        product *= if matched == 0.0 { 1e-9 } else { matched } / total as f64;
        orders += 1;
    }
    let (cl, rl) = (c.len() as f64, r.len() as f64);
    let bp = if cl >= rl { 1.0 } else { (1.0 - rl / cl).exp() };
    100.0 * bp * product.powf(1.0 / f64::from(orders))
}

fn bleu_oracle() -> Result<String, String> {
    let mut strings: Vec<Vec<&str>> = vec![vec![]];
    let mut frontier = strings.clone();
    for _ in 0..6 {
        frontier = frontier.iter().flat_map(|s| ["a", "b", "c"].map(|t| [s.as_slice(), &[t]].concat())).collect();
        strings.extend(frontier.iter().cloned());
    }
    let joined: Vec<String> = strings.iter().map(|s| s.join(" ")).collect();
    let mut worst = 0.0f64;
    for (c, cs) in strings.iter().zip(&joined) {
        for (r, rs) in strings.iter().zip(&joined) {
            let got = bleu(&[cs], &[rs], TokenizationScheme::Whitespace, 4).map_err(|e| e.to_string())?;
            let diff = (got - oracle_bleu(c, r)).abs();
            worst = worst.max(diff);
            ensure(diff <= BLEU_ORACLE_TOL, || format!("{cs:?} vs {rs:?}: got {got}"))?;
        }
    }
    let hand = bleu(&["a b c d"], &["a b c d e"], TokenizationScheme::Whitespace, 4).unwrap();
    ensure((hand - BLEU_HAND_CASE).abs() <= BLEU_HAND_TOL, || format!("hand case {hand}"))?;
    // Closed form of the hand case: all precisions 1, brevity penalty exp(1 - 5/4).
    ensure((hand - 100.0 * (-0.25f64).exp()).abs() < 1e-9, || format!("hand case closed form {hand}"))?;
    Ok(format!("{} pairs, max |diff| {worst:.1e}; BLEU(\"a b c d\",\"a b c d e\") = {hand:.4}", strings.len().pow(2)))
}

/// One-hot vectors per distinct token: identical tokens have cosine 1,
/// distinct tokens cosine 0.
struct OneHot;

impl Embedder for OneHot {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(tokens
            .iter()
            .map(|t| {
                let mut v = vec![0.0; 64];
                v[t.bytes().fold(7usize, |h, b| h.wrapping_mul(31).wrapping_add(b as usize)) % 64] = 1.0;
                v
            })
            .collect())
    }
}

fn meteor_bertscore_cases() -> Result<String, String> {
    let ws = TokenizationScheme::Whitespace;
    let long = "the index rose sharply in the afternoon on heavy buying of exporters";
    ensure(long.split(' ').count() >= 10, || "fixture too short".into())?;
    let m_long = meteor_exact(long, long, ws);
    ensure((m_long - 100.0).abs() <= METEOR_LONG_IDENTITY_TOL, || format!("METEOR identity {m_long}"))?;
    let m_zero = meteor_exact("a b c", "x y z", ws);
    ensure(m_zero.abs() <= EXACT_TOL, || format!("METEOR disjoint {m_zero}"))?;
    let m_swap = meteor_exact("b a", "a b", ws);
    ensure((m_swap - 50.0).abs() <= EXACT_TOL, || format!("METEOR swap {m_swap}"))?;

    let b_same = bertscore_f1(&[long], &[long], ws, &OneHot).map_err(|e| e.to_string())?;
    ensure((b_same - 100.0).abs() <= 1e-9, || format!("BERTScore identity {b_same}"))?;
    let b_zero = bertscore_f1(&["a b c"], &["x y z"], ws, &OneHot).map_err(|e| e.to_string())?;
    ensure(b_zero.abs() <= EXACT_TOL, || format!("BERTScore disjoint {b_zero}"))?;
    Ok(format!("METEOR identity {m_long:.4}, disjoint {m_zero}, swap {m_swap}; BERTScore identity {b_same}, disjoint {b_zero}"))
}

fn prompt_structure() -> Result<String, String> {
    let data = generate_fixtures(&FixtureConfig { train: 12, valid: 0, test: 1, seed: 4 }).map_err(|e| e.to_string())?;
    let train: Vec<&TaskInstance> = data.iter().filter(|i| i.split() == Split::Train).collect();
    let target = data.iter().find(|i| i.split() == Split::Test).unwrap();
    let cfg = SerializerConfig::default();
    for k in [0, 2, 5, 10] {
        let shots: Vec<&TaskInstance> = sample_indices(train.len(), k, 1).unwrap().into_iter().map(|i| train[i]).collect();
        let p = build_prompt(target, &shots, PromptFormat::PythonDictionary, &cfg, 1).map_err(|e| e.to_string())?;
        let blocks = p.text.matches("###").count();
        ensure(blocks == k + 1, || format!("k={k}: {blocks} ### blocks"))?;
        let lines: Vec<&str> = p.text.lines().collect();
        let filled = lines
            .iter()
            .enumerate()
            .filter(|(i, l)| l.starts_with("Output:") && lines.get(i + 1).is_some_and(|n| !n.trim().is_empty()))
            .count();
        ensure(filled == k, || format!("k={k}: {filled} filled Output: lines"))?;
        ensure(p.text.ends_with("Output: "), || format!("k={k}: target block is not left open"))?;
    }
    let eleven: Vec<&TaskInstance> = train.iter().copied().take(MAX_SHOTS).chain([train[11]]).collect();
    let over = build_prompt(target, &eleven, PromptFormat::Row, &cfg, 1);
    ensure(matches!(over, Err(PromptError::TooManyShots { .. })), || "k=11 accepted".into())?;
    ensure(sample_indices(train.len(), 11, 0).is_err(), || "sampling 11 shots accepted".into())?;
    Ok("k+1 blocks and k filled outputs for each k; k=11 rejected".into())
}

const E2E_PLAN: &str = r#"
formats = ["python-dictionary", "html-table"]
shot_counts = [0, 5, 10]
repeats = 2
base_seed = 7
[backend]
kind = "mock"
model_name = "mock-commentator"
parallelism = 4
[embedder]
kind = "hash"
dim = 32
"#;

fn end_to_end() -> Result<String, String> {
    let started = Instant::now();
    let data = generate_fixtures(&FixtureConfig { train: 40, valid: 10, test: 20, seed: 5 }).map_err(|e| e.to_string())?;
    let plan = ExperimentPlan::from_toml(E2E_PLAN, "plan.toml", Path::new(".")).map_err(|e| e.to_string())?;
    let backend = build_backend(&plan.backend).map_err(|e| e.to_string())?;
    let roots: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let go = |root: &Path, stop_after| experiment::run(&plan, &data, backend.as_ref(), root, &RunOptions { stop_after });
    let a = go(roots[0].path(), None).map_err(|e| e.to_string())?;
    let b = go(roots[1].path(), None).map_err(|e| e.to_string())?;
    let total = 2 * 3 * 2 * 20;
    let half = go(roots[2].path(), Some(total / 2)).map_err(|e| e.to_string())?;
    ensure(half.summary.is_none() && half.new_records == total / 2, || "interrupt did not stop at 50%".into())?;
    let resumed = go(roots[2].path(), None).map_err(|e| e.to_string())?;
    ensure(resumed.reused_records == total / 2 && resumed.new_records == total / 2, || "resume redid work".into())?;
    within(started, END_TO_END_BUDGET)?;

    let read = |dir: &Path| fs::read(dir.join("aggregate.csv")).unwrap();
    let agg = read(&a.run_dir);
    ensure(agg == read(&b.run_dir), || "aggregate.csv differs between identical runs".into())?;
    ensure(agg == read(&resumed.run_dir), || "resumed aggregate.csv differs".into())?;
    let summary = a.summary.unwrap();
    ensure(summary.cells.len() == 12 && summary.rows.len() == 6, || "grid shape".into())?;
    Ok(format!("{total} generations x3 runs; aggregate.csv byte-identical ({} bytes), resume matches", agg.len()))
}

fn rebound_fixture() -> TaskInstance {
    // Yesterday fell 100 yen; now 421 yen above yesterday's close.
    let long = PriceSeries::new(
        SeriesKind::LongTerm,
        (1..=7)
            .map(|d| {
                let close = match d {
                    1 => 1_592_800,
                    _ => 1_602_800 + 1000 * i64::from(d),
                };
                (Timestamp::DaysAgo(d as u8), Yen::from_hundredths(close))
            })
            .collect(),
        "Nikkei225",
    )
    .unwrap();
    let short = PriceSeries::new(
        SeriesKind::ShortTerm,
        vec![(Timestamp::Clock(clock("09:00")), yen("15990.00")), (Timestamp::Clock(clock("09:05")), yen("16349.00"))],
        "Nikkei225",
    )
    .unwrap();
    TaskInstance::new("fixture", clock("09:05"), short, long, "日経平均、反発 前引けは421円高", Split::Test).unwrap()
}

fn consistency_fixture() -> Result<String, String> {
    let inst = rebound_fixture();
    let gold = tsprompt_core::derive_gold_label(&inst).map_err(|e| e.to_string())?;
    ensure(
        gold.direction == Direction::Up && gold.continuation == Continuation::Rebound && gold.magnitude_yen == yen("421.00"),
        || format!("gold {gold:?}"),
    )?;
    let lex = MovementLexicon::default();
    let cases = [
        ("日経平均、反発 前引けは421円高", Verdict::Consistent),
        ("日経平均、反落 前引けは421円安", Verdict::Inconsistent),
        ("日経平均 前引けは1万6349円", Verdict::NoClaim),
    ];
    for (comment, want) in cases {
        let got = judge(comment, &gold, &lex);
        ensure(got == want, || format!("{comment}: {got:?}, expected {want:?}"))?;
    }
    Ok("反発 Consistent, 反落 Inconsistent, no term NoClaim".into())
}

fn html_longest() -> Result<String, String> {
    let cfg = SerializerConfig::default();
    let mut rng = common::rng(99);
    let mut checked = 0;
    for _ in 0..50 {
        let short = PriceSeries::new(
            SeriesKind::ShortTerm,
            ClockTime::session_times()
                .map(|t| (Timestamp::Clock(t), Yen::from_hundredths(rand::Rng::random_range(&mut rng, 100_000..9_999_999))))
                .collect(),
            "Nikkei225",
        )
        .unwrap();
        let long = common::random_series(&mut rng, SeriesKind::LongTerm);
        let inst = TaskInstance::new("x", clock("15:00"), short, long, "-", Split::Test).unwrap();
        let lengths: HashMap<PromptFormat, usize> = PromptFormat::ALL
            .iter()
            .map(|&f| (f, serialize_pair(&inst, f, &cfg).unwrap().chars().count()))
            .collect();
        let html = lengths[&PromptFormat::HtmlTable];
        ensure(lengths.iter().all(|(&f, &l)| f == PromptFormat::HtmlTable || l < html), || format!("{lengths:?}"))?;
        checked += 1;
    }
    // The same check computed by the runner from recorded prompt lengths.
    let data = generate_fixtures(&FixtureConfig { train: 1, valid: 0, test: 12, seed: 8 }).unwrap();
    let formats: Vec<String> = PromptFormat::ALL.iter().map(|f| format!("\"{}\"", f.cli_name())).collect();
    let plan = ExperimentPlan::from_toml(
        &format!("formats = [{}]\nshot_counts = [0]\nrepeats = 1\nbase_seed = 0\n[backend]\nkind = \"mock\"\nmodel_name = \"m\"\n", formats.join(", ")),
        "plan.toml",
        Path::new("."),
    )
    .unwrap();
    let root = tempfile::tempdir().unwrap();
    let backend = build_backend(&plan.backend).unwrap();
    let s = experiment::run(&plan, &data, backend.as_ref(), root.path(), &RunOptions::default()).unwrap().summary.unwrap();
    ensure(s.ordering.full_day_instances > 0, || "no full-day test instances".into())?;
    ensure(s.ordering.html_longest_on_full_day == Some(true), || format!("runner check {:?}", s.ordering))?;
    Ok(format!("{checked} random full-day pairs plus {} runner instances", s.ordering.full_day_instances))
}

fn reproduction_statement() -> Result<String, String> {
    // The published absolute BLEU/METEOR/BERTScore figures come from a
    // proprietary model snapshot and a licensed dataset, so they are not a
    // target here. What is checked is that a run emits the grid and curves
    // those figures would be compared against.
    let data = generate_fixtures(&FixtureConfig { train: 12, valid: 0, test: 3, seed: 2 }).unwrap();
    let formats: Vec<String> = PromptFormat::ALL.iter().map(|f| format!("\"{}\"", f.cli_name())).collect();
    let plan = ExperimentPlan::from_toml(
        &format!("formats = [{}]\nshot_counts = [0, 5, 10]\nrepeats = 2\nbase_seed = 0\n[backend]\nkind = \"mock\"\nmodel_name = \"m\"\nparallelism = 4\n", formats.join(", ")),
        "plan.toml",
        Path::new("."),
    )
    .unwrap();
    let root = tempfile::tempdir().unwrap();
    let backend = build_backend(&plan.backend).unwrap();
    let out = experiment::run(&plan, &data, backend.as_ref(), root.path(), &RunOptions::default()).unwrap();
    let table = fs::read_to_string(out.run_dir.join("table.csv")).unwrap();
    let curves = fs::read_to_string(out.run_dir.join("curves.csv")).unwrap();
    ensure(table.lines().count() == 1 + PromptFormat::ALL.len(), || format!("table.csv rows: {table}"))?;
    ensure(curves.lines().count() == 1 + 3, || format!("curves.csv rows: {curves}"))?;
    ensure(table.contains("Python Dictionary"), || "table.csv lacks display names".into())?;
    Ok("NOT REPRODUCED: published absolute scores (e.g. Python Dictionary 10-shot BLEU 10.41) need the original model and licensed data; live-run mode emits the 10x{0,5,10} grid and BLEU curves".into())
}
