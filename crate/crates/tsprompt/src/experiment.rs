//! The formats x shot counts x repeats grid: planning, resumable execution
//! and report emission.
//!
//! A run directory `runs/<plan-id>/` holds:
//!
//! - `plan.json`: the plan, dataset digest, lexicon and sampling policies
//! - `records.jsonl`: one [`GenerationRecord`] per (cell, test instance),
//!   appended as answers arrive
//! - `results.json`, `aggregate.csv`, `table.csv`, `curves.csv`,
//!   `prompt_lengths.csv`: written once every record is present

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use tsprompt_core::aggregate::mean_std;
use tsprompt_core::consistency::derive_gold_label_with;
use tsprompt_core::prompt::sample_indices;
use tsprompt_core::seed::cell_seed;
use tsprompt_core::timeseries::MAX_SHORT_TERM_POINTS;
use tsprompt_core::{
    aggregate, build_prompt, judge, serialize_pair, AggregateRow, CellSummary, ConsistencyCounts,
    Embedder, LexiconEntry, MetricError, MetricReport, MovementLexicon, PromptFormat, SerializerConfig, Split, TaskInstance,
    TokenizationScheme, Yen, MAX_SHOTS, window_until,
};

use crate::embed::EmbedderConfig;
use crate::error::{Error, Result};
use crate::formats::dataset::write_dataset_jsonl;
use crate::formats::lexicon::load_lexicon;
use crate::llm::{extract_comment, sha256_hex, Backend, BackendConfig, GenerationRecord};

/// A cell whose excluded share exceeds this fraction is marked invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

pub const SHOT_POLICY: &str = "one shot draw per (format, shots, repeat), shared by every test instance of the cell";
pub const SEED_POLICY: &str = "cell seed = splitmix64 fold of (base_seed, format index, shots, repeat)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub formats: Vec<PromptFormat>,
    pub shot_counts: Vec<usize>,
    pub repeats: usize,
    pub base_seed: u64,
    /// Empty selects the whole test split.
    #[serde(default)]
    pub test_ids: Vec<String>,
    #[serde(default = "default_scheme", with = "scheme_text")]
    pub scheme: TokenizationScheme,
    /// Mean sentence BLEU instead of corpus BLEU.
    #[serde(default)]
    pub sentence_bleu: bool,
    #[serde(default, with = "yen_text")]
    pub flat_threshold: Yen,
    /// Keep full prompt text in records; the hash and length are always kept.
    #[serde(default = "yes")]
    pub store_prompt_text: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub serializer: SerializerConfig,
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<EmbedderConfig>,
}

fn default_scheme() -> TokenizationScheme {
    TokenizationScheme::Character
}

fn yes() -> bool {
    true
}

mod scheme_text {
    use serde::{Deserialize, Deserializer, Serializer};
    use tsprompt_core::TokenizationScheme;

    pub fn serialize<S: Serializer>(s: &TokenizationScheme, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(s.short_name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<TokenizationScheme, D::Error> {
        String::deserialize(de)?.parse().map_err(serde::de::Error::custom)
    }
}

mod yen_text {
    use serde::{Deserialize, Deserializer, Serializer};
    use tsprompt_core::Yen;

    pub fn serialize<S: Serializer>(y: &Yen, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(y)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Yen, D::Error> {
        Yen::parse_lenient(&String::deserialize(de)?).map_err(serde::de::Error::custom)
    }
}

impl ExperimentPlan {
    /// Parses a TOML plan; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, source_name: &str, base_dir: &Path) -> Result<Self> {
        let mut plan: ExperimentPlan = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::parse(source_name, line, e.message().to_owned())
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        plan.lexicon.as_mut().map(resolve);
        plan.backend.mock_fixtures.as_mut().map(resolve);
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string(), path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("invalid plan: {m}")));
        if self.formats.is_empty() {
            return bad("formats must not be empty".into());
        }
        let distinct: HashSet<_> = self.formats.iter().collect();
        if distinct.len() != self.formats.len() {
            return bad("formats must be distinct".into());
        }
        if self.shot_counts.is_empty() {
            return bad("shot_counts must not be empty".into());
        }
        if self.shot_counts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("shot_counts must be strictly ascending".into());
        }
        if let Some(&k) = self.shot_counts.iter().find(|&&k| k > MAX_SHOTS) {
            return bad(format!("shot count {k} exceeds the maximum of {MAX_SHOTS}"));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        let ids: HashSet<_> = self.test_ids.iter().collect();
        if ids.len() != self.test_ids.len() {
            return bad("test_ids must be distinct".into());
        }
        if self.flat_threshold < Yen::ZERO {
            return bad("flat_threshold must be >= 0".into());
        }
        self.serializer.validate()?;
        self.backend.validate()?;
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.formats.len() * self.shot_counts.len() * self.repeats
    }

    fn lexicon(&self) -> Result<MovementLexicon> {
        match &self.lexicon {
            Some(path) => load_lexicon(path),
            None => Ok(MovementLexicon::default()),
        }
    }
}

/// Snapshot of everything that determines a run, written to `plan.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub plan_id: String,
    pub plan: ExperimentPlan,
    pub dataset_sha256: String,
    pub test_ids: Vec<String>,
    /// Test instances whose short-term window covers the whole trading day.
    pub full_day_test_ids: Vec<String>,
    pub train_size: usize,
    pub lexicon: Vec<LexiconEntry>,
    pub shot_policy: String,
    pub seed_policy: String,
    pub bleu_variant: String,
    pub meteor_variant: String,
    pub max_failure_fraction: f64,
}

/// Identifier of a run: a digest of the plan (with file paths replaced by
/// their contents), the dataset and the lexicon.
pub fn plan_id(plan: &ExperimentPlan, dataset_sha256: &str, lexicon: &MovementLexicon) -> Result<String> {
    let mut hashed = plan.clone();
    hashed.lexicon = None;
    let fixtures = match hashed.backend.mock_fixtures.take() {
        Some(path) => sha256_hex(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?),
        None => String::new(),
    };
    let payload = serde_json::json!({
        "plan": hashed,
        "dataset": dataset_sha256,
        "lexicon": lexicon.entries(),
        "fixtures": fixtures,
    });
    Ok(sha256_hex(&payload.to_string())[..16].to_owned())
}

pub fn dataset_sha256(dataset: &[TaskInstance]) -> String {
    sha256_hex(&write_dataset_jsonl(dataset))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this many new records, leaving the run resumable.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub plan_id: String,
    pub new_records: usize,
    pub reused_records: usize,
    /// Present once every record exists.
    pub summary: Option<RunSummary>,
}

/// Per-cell results beyond the aggregate scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub summary: CellSummary,
    pub metrics: Option<MetricReport>,
    pub exemplar_ids: Vec<String>,
    pub prompt_chars_mean: f64,
    pub prompt_chars_max: usize,
    pub untagged: usize,
    pub retries: u64,
}

/// Mechanical versions of the qualitative length comparisons between
/// formats, on prompts of the smallest planned shot count of repeat 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingChecks {
    pub shots: usize,
    /// Mean prompt length in characters per format.
    pub mean_prompt_chars: BTreeMap<PromptFormat, f64>,
    pub full_day_instances: usize,
    /// Whether the HTML prompt is strictly the longest on every test
    /// instance with a full-day short-term window. Only checked with
    /// zero shots (where prompts differ in the serialized series alone),
    /// HTML and at least one other format planned, and a full-day instance.
    pub html_longest_on_full_day: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub plan_id: String,
    pub cells: Vec<CellResult>,
    pub rows: Vec<AggregateRow>,
    pub ordering: OrderingChecks,
    pub excluded_total: usize,
    pub invalid_cells: usize,
}

struct Cell {
    format: PromptFormat,
    shots: usize,
    repeat: usize,
    seed: u64,
    exemplars: Vec<usize>,
}

type RecordKey = (PromptFormat, usize, usize, String);

fn key_of(r: &GenerationRecord) -> RecordKey {
    (r.bundle.format, r.bundle.shot_count, r.repeat_index, r.instance_id.clone())
}

/// Runs (or resumes) `plan` on `dataset`, writing under `runs_root/<plan-id>/`.
pub fn run(
    plan: &ExperimentPlan,
    dataset: &[TaskInstance],
    backend: &dyn Backend,
    runs_root: &Path,
    options: &RunOptions,
) -> Result<RunOutcome> {
    plan.validate()?;
    let lexicon = plan.lexicon()?;
    let train: Vec<&TaskInstance> = dataset.iter().filter(|i| i.split() == Split::Train).collect();
    let tests = select_tests(plan, dataset)?;
    let dataset_sha = dataset_sha256(dataset);
    let id = plan_id(plan, &dataset_sha, &lexicon)?;
    let run_dir = runs_root.join(&id);
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;

    let manifest = RunManifest {
        plan_id: id.clone(),
        plan: plan.clone(),
        dataset_sha256: dataset_sha,
        test_ids: tests.iter().map(|t| t.id().to_owned()).collect(),
        full_day_test_ids: tests
            .iter()
            .filter(|t| window_until(t.short_term(), t.target_time()).len() == MAX_SHORT_TERM_POINTS)
            .map(|t| t.id().to_owned())
            .collect(),
        train_size: train.len(),
        lexicon: lexicon.entries().to_vec(),
        shot_policy: SHOT_POLICY.into(),
        seed_policy: SEED_POLICY.into(),
        bleu_variant: if plan.sentence_bleu { "sentence-mean" } else { "corpus" }.into(),
        meteor_variant: "exact".into(),
        max_failure_fraction: MAX_FAILURE_FRACTION,
    };
    write_json(&run_dir.join("plan.json"), &manifest)?;

    let cells = plan_cells(plan, &train)?;
    let records_path = run_dir.join("records.jsonl");
    let existing = load_records(&records_path, &id, true)?;
    let done: HashSet<RecordKey> = existing.values().filter(|r| r.succeeded()).map(key_of).collect();

    let mut pending: Vec<(usize, usize)> = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for (ti, t) in tests.iter().enumerate() {
            if !done.contains(&(cell.format, cell.shots, cell.repeat, t.id().to_owned())) {
                pending.push((ci, ti));
            }
        }
    }
    let reused = cells.len() * tests.len() - pending.len();
    if let Some(limit) = options.stop_after {
        pending.truncate(limit);
    }
    info!("run {id}: {} cells, {} pending requests, {reused} reused", cells.len(), pending.len());

    let file = OpenOptions::new().create(true).append(true).open(&records_path).map_err(|e| Error::io(&records_path, e))?;
    let mut writer = BufWriter::new(file);
    let workers = plan.backend.parallelism.min(pending.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Result<GenerationRecord>>();
    let mut written = 0;
    let mut first_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, cells, tests, train, id) = (&next, &pending, &cells, &tests, &train, &id);
            scope.spawn(move || loop {
                let n = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(ci, ti)) = pending.get(n) else { break };
                let record = generate(plan, id, &cells[ci], train, tests[ti], backend);
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for record in rx {
            let outcome = record.and_then(|r| append_record(&mut writer, &records_path, &r));
            match outcome {
                Ok(()) => written += 1,
                Err(e) => {
                    // Drain the remaining work quickly and report the first failure.
                    next.store(usize::MAX / 2, Ordering::SeqCst);
                    first_error.get_or_insert(e);
                }
            }
        }
    });
    writer.flush().map_err(|e| Error::io(&records_path, e))?;
    if let Some(e) = first_error {
        return Err(e);
    }

    let all = load_records(&records_path, &id, false)?;
    let complete = cells.iter().all(|c| {
        tests.iter().all(|t| all.contains_key(&(c.format, c.shots, c.repeat, t.id().to_owned())))
    });
    let summary = if complete { Some(report(&run_dir)?) } else { None };
    Ok(RunOutcome { run_dir, plan_id: id, new_records: written, reused_records: reused, summary })
}

fn select_tests<'a>(plan: &ExperimentPlan, dataset: &'a [TaskInstance]) -> Result<Vec<&'a TaskInstance>> {
    let test_split: Vec<&TaskInstance> = dataset.iter().filter(|i| i.split() == Split::Test).collect();
    if plan.test_ids.is_empty() {
        if test_split.is_empty() {
            return Err(Error::Invalid("dataset has no test instances".into()));
        }
        return Ok(test_split);
    }
    let by_id: HashMap<&str, &TaskInstance> = test_split.iter().map(|i| (i.id(), *i)).collect();
    plan.test_ids
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| Error::Invalid(format!("test id `{id}` is not in the test split"))))
        .collect()
}

fn plan_cells(plan: &ExperimentPlan, train: &[&TaskInstance]) -> Result<Vec<Cell>> {
    let max_k = plan.shot_counts.last().copied().unwrap_or(0);
    if max_k > train.len() {
        return Err(Error::Invalid(format!("{max_k} shots requested but the train split has {} instances", train.len())));
    }
    let mut cells = Vec::with_capacity(plan.cell_count());
    for &format in &plan.formats {
        for &shots in &plan.shot_counts {
            for repeat in 0..plan.repeats {
                let seed = cell_seed(plan.base_seed, format.index(), shots, repeat);
                let exemplars = sample_indices(train.len(), shots, seed)?;
                cells.push(Cell { format, shots, repeat, seed, exemplars });
            }
        }
    }
    Ok(cells)
}

fn generate(
    plan: &ExperimentPlan,
    plan_id: &str,
    cell: &Cell,
    train: &[&TaskInstance],
    target: &TaskInstance,
    backend: &dyn Backend,
) -> Result<GenerationRecord> {
    let shots: Vec<&TaskInstance> = cell.exemplars.iter().map(|&i| train[i]).collect();
    let mut bundle = build_prompt(target, &shots, cell.format, &plan.serializer, cell.seed)?;
    let prompt_sha256 = sha256_hex(&bundle.text);
    let prompt_chars = bundle.text.chars().count();
    let gold_label = derive_gold_label_with(target, plan.flat_threshold).ok();
    let answer = backend.complete(&bundle.text);
    if !plan.store_prompt_text {
        bundle.text.clear();
    }
    let mut record = GenerationRecord {
        plan_id: plan_id.into(),
        repeat_index: cell.repeat,
        instance_id: target.id().into(),
        bundle,
        prompt_sha256,
        prompt_chars,
        reference_comment: target.reference_comment().into(),
        gold_label,
        raw_response: None,
        extracted_comment: None,
        untagged: false,
        latency_ms: 0,
        retries: 0,
        error: None,
        backend_meta: BTreeMap::new(),
    };
    match answer {
        Ok(c) => {
            let extraction = extract_comment(&c.text);
            record.extracted_comment = extraction.comment;
            record.untagged = extraction.untagged;
            record.raw_response = Some(c.text);
            record.latency_ms = c.latency.as_millis() as u64;
            record.retries = c.retries;
            record.backend_meta = c.meta;
            if record.extracted_comment.is_none() {
                record.error = Some("empty comment".into());
            }
        }
        Err(e) => {
            warn!("{} / {} shots / repeat {} / {}: {e}", cell.format, cell.shots, cell.repeat, target.id());
            record.error = Some(e.to_string());
        }
    }
    Ok(record)
}

fn append_record(writer: &mut BufWriter<File>, path: &Path, record: &GenerationRecord) -> Result<()> {
    let line = serde_json::to_string(record).map_err(|e| Error::Invalid(format!("cannot encode record: {e}")))?;
    writeln!(writer, "{line}").and_then(|_| writer.flush()).map_err(|e| Error::io(path, e))
}

/// Reads `records.jsonl`, keeping the latest record per key. A torn final
/// line (no trailing newline) is dropped, and cut from the file when
/// `repair` is set so appends start on a fresh line.
pub fn load_records(path: &Path, plan_id: &str, repair: bool) -> Result<HashMap<RecordKey, GenerationRecord>> {
    let mut out = HashMap::new();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(path, e)),
    };
    let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
    if complete_len < text.len() {
        warn!("{}: dropping torn final line", path.display());
        if repair {
            let file = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
            file.set_len(complete_len as u64).map_err(|e| Error::io(path, e))?;
        }
    }
    let name = path.display().to_string();
    for (i, line) in text[..complete_len].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: GenerationRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(&name, i + 1, format!("bad record: {e}")))?;
        if record.plan_id != plan_id {
            return Err(Error::parse(&name, i + 1, format!("record belongs to plan `{}`, expected `{plan_id}`", record.plan_id)));
        }
        out.insert(key_of(&record), record);
    }
    Ok(out)
}

/// Recomputes scores from a run directory and rewrites the report files.
pub fn report(run_dir: &Path) -> Result<RunSummary> {
    report_to(run_dir, run_dir)
}

/// Like [`report`], writing the report files into `out_dir`.
pub fn report_to(run_dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    let manifest_path = run_dir.join("plan.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(manifest_path.display().to_string(), e.line(), e.to_string()))?;
    let records = load_records(&run_dir.join("records.jsonl"), &manifest.plan_id, false)?;
    let summary = summarize(&manifest, &records)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_outputs(out_dir, &manifest, &summary)?;
    Ok(summary)
}

fn summarize(manifest: &RunManifest, records: &HashMap<RecordKey, GenerationRecord>) -> Result<RunSummary> {
    let plan = &manifest.plan;
    let lexicon = MovementLexicon::new(manifest.lexicon.clone())?;
    let embedder: Option<Box<dyn Embedder + Send + Sync>> =
        plan.embedder.as_ref().map(|c| c.build()).transpose().map_err(|e| MetricError::Embedder(e.0))?;
    let mut cells = Vec::new();
    for &format in &plan.formats {
        for &shots in &plan.shot_counts {
            for repeat in 0..plan.repeats {
                let mut recs = Vec::with_capacity(manifest.test_ids.len());
                for id in &manifest.test_ids {
                    let r = records.get(&(format, shots, repeat, id.clone())).ok_or_else(|| {
                        Error::Invalid(format!("run is incomplete: no record for {format} / {shots} shots / repeat {repeat} / `{id}`"))
                    })?;
                    recs.push(r);
                }
                cells.push(score_cell(manifest, format, shots, repeat, &recs, &lexicon, embedder.as_deref())?);
            }
        }
    }
    let summaries: Vec<CellSummary> = cells.iter().map(|c| c.summary.clone()).collect();
    let rows = aggregate(&summaries)?;
    let ordering = ordering_checks(manifest, records);
    Ok(RunSummary {
        plan_id: manifest.plan_id.clone(),
        excluded_total: summaries.iter().map(|c| c.n_excluded).sum(),
        invalid_cells: summaries.iter().filter(|c| !c.valid).count(),
        cells,
        rows,
        ordering,
    })
}

fn score_cell(
    manifest: &RunManifest,
    format: PromptFormat,
    shots: usize,
    repeat: usize,
    records: &[&GenerationRecord],
    lexicon: &MovementLexicon,
    embedder: Option<&(dyn Embedder + Send + Sync)>,
) -> Result<CellResult> {
    let plan = &manifest.plan;
    let ok: Vec<&GenerationRecord> = records.iter().copied().filter(|r| r.succeeded()).collect();
    let candidates: Vec<&str> = ok.iter().filter_map(|r| r.extracted_comment.as_deref()).collect();
    let references: Vec<&str> = ok.iter().map(|r| r.reference_comment.as_str()).collect();
    let n_excluded = records.len() - ok.len();
    let valid = !ok.is_empty() && (n_excluded as f64) <= MAX_FAILURE_FRACTION * records.len() as f64;

    let metrics = if ok.is_empty() {
        None
    } else {
        let mut report = MetricReport::compute(&candidates, &references, plan.scheme, embedder.map(|e| e as &dyn Embedder))?;
        if plan.sentence_bleu {
            report.bleu = tsprompt_core::sentence_bleu(&candidates, &references, plan.scheme, 4)?;
        }
        Some(report)
    };
    let mut consistency = ConsistencyCounts::default();
    for r in &ok {
        if let (Some(comment), Some(gold)) = (&r.extracted_comment, &r.gold_label) {
            consistency.record(judge(comment, gold, lexicon));
        }
    }
    let seed = records.first().map_or(0, |r| r.bundle.seed);
    let (prompt_chars_mean, _) = mean_std(records.iter().map(|r| r.prompt_chars as f64));
    let summary = CellSummary {
        plan_id: manifest.plan_id.clone(),
        format,
        shot_count: shots,
        repeat_index: repeat,
        seed,
        bleu: metrics.as_ref().map_or(0.0, |m| m.bleu),
        meteor: metrics.as_ref().map_or(0.0, |m| m.meteor),
        bertscore: match (&metrics, embedder) {
            (Some(m), _) => m.bertscore_f1,
            (None, Some(_)) => Some(0.0),
            (None, None) => None,
        },
        consistency,
        n_excluded,
        n_records: records.len(),
        valid,
    };
    Ok(CellResult {
        summary,
        metrics,
        exemplar_ids: records.first().map(|r| r.bundle.exemplar_ids.clone()).unwrap_or_default(),
        prompt_chars_mean,
        prompt_chars_max: records.iter().map(|r| r.prompt_chars).max().unwrap_or(0),
        untagged: ok.iter().filter(|r| r.untagged).count(),
        retries: records.iter().map(|r| u64::from(r.retries)).sum(),
    })
}

fn ordering_checks(manifest: &RunManifest, records: &HashMap<RecordKey, GenerationRecord>) -> OrderingChecks {
    let plan = &manifest.plan;
    let k = plan.shot_counts[0];
    let len = |format: PromptFormat, id: &String| records.get(&(format, k, 0, id.clone())).map(|r| r.prompt_chars);
    let mean_prompt_chars = plan
        .formats
        .iter()
        .map(|&f| (f, mean_std(manifest.test_ids.iter().filter_map(|id| len(f, id)).map(|l| l as f64)).0))
        .collect();
    let checkable = k == 0
        && plan.formats.len() > 1
        && plan.formats.contains(&PromptFormat::HtmlTable)
        && !manifest.full_day_test_ids.is_empty();
    let html_longest_on_full_day = checkable.then(|| {
        manifest.full_day_test_ids.iter().all(|id| {
            let html = len(PromptFormat::HtmlTable, id);
            plan.formats.iter().filter(|&&f| f != PromptFormat::HtmlTable).all(|&f| len(f, id) < html)
        })
    });
    OrderingChecks {
        shots: k,
        mean_prompt_chars,
        full_day_instances: manifest.full_day_test_ids.len(),
        html_longest_on_full_day,
    }
}

/// Character lengths of the serialized input pair of `instance` in every format.
pub fn pair_lengths(instance: &TaskInstance, config: &SerializerConfig) -> Result<Vec<(PromptFormat, usize)>> {
    PromptFormat::ALL
        .into_iter()
        .map(|f| Ok((f, serialize_pair(instance, f, config)?.chars().count())))
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(format!("cannot encode {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `aggregate.csv`: one row per (format, shots).
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "format,shots,bleu_mean,bleu_std,meteor_mean,meteor_std,bertscore_mean,bertscore_std,consistent,inconsistent,noclaim,n_excluded\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.format.cli_name(),
            r.shots,
            num(r.bleu_mean),
            num(r.bleu_std),
            num(r.meteor_mean),
            num(r.meteor_std),
            opt(r.bertscore_mean),
            opt(r.bertscore_std),
            r.consistency.consistent,
            r.consistency.inconsistent,
            r.consistency.noclaim,
            r.n_excluded
        );
    }
    out
}

/// `table.csv`: one row per format, metric means grouped by shot count.
pub fn table_csv(plan: &ExperimentPlan, rows: &[AggregateRow]) -> String {
    let mut out = String::from("format");
    for k in &plan.shot_counts {
        let _ = write!(out, ",bleu_{k}shot,meteor_{k}shot,bertscore_{k}shot");
    }
    out.push('\n');
    for &format in &plan.formats {
        out.push_str(format.display_name());
        for &k in &plan.shot_counts {
            match rows.iter().find(|r| r.format == format && r.shots == k) {
                Some(r) => {
                    let _ = write!(out, ",{},{},{}", num(r.bleu_mean), num(r.meteor_mean), opt(r.bertscore_mean));
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}

/// `curves.csv`: mean BLEU by shot count, one column per format.
pub fn curves_csv(plan: &ExperimentPlan, rows: &[AggregateRow]) -> String {
    let mut out = String::from("shots");
    for f in &plan.formats {
        let _ = write!(out, ",{}", f.cli_name());
    }
    out.push('\n');
    for &k in &plan.shot_counts {
        let _ = write!(out, "{k}");
        for &f in &plan.formats {
            let v = rows.iter().find(|r| r.format == f && r.shots == k).map(|r| r.bleu_mean);
            let _ = write!(out, ",{}", opt(v));
        }
        out.push('\n');
    }
    out
}

/// `prompt_lengths.csv`: prompt size in characters per (format, shots).
pub fn prompt_lengths_csv(cells: &[CellResult]) -> String {
    let mut groups: BTreeMap<(PromptFormat, usize), Vec<&CellResult>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.summary.format, c.summary.shot_count)).or_default().push(c);
    }
    let mut out = String::from("format,shots,mean_chars,max_chars\n");
    for ((format, shots), group) in groups {
        let (mean, _) = mean_std(group.iter().map(|c| c.prompt_chars_mean));
        let max = group.iter().map(|c| c.prompt_chars_max).max().unwrap_or(0);
        let _ = writeln!(out, "{},{shots},{},{max}", format.cli_name(), num(mean));
    }
    out
}

fn write_outputs(dir: &Path, manifest: &RunManifest, summary: &RunSummary) -> Result<()> {
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write_json(&dir.join("results.json"), summary)?;
    write("aggregate.csv", aggregate_csv(&summary.rows))?;
    write("table.csv", table_csv(&manifest.plan, &summary.rows))?;
    write("curves.csv", curves_csv(&manifest.plan, &summary.rows))?;
    write("prompt_lengths.csv", prompt_lengths_csv(&summary.cells))?;
    Ok(())
}
