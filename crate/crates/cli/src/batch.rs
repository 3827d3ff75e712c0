use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use bodyregion::analysis::{AnalysisOptions, EdgeReport};
use bodyregion::decision::{Classifier, ClassificationResult, DecisionPolicy, Method, RegionAssessment, ResultFlags};
use bodyregion::labels::{Category, RegionSet};
use bodyregion::mllm::{
    classify_via_mllm, ordered_parallel_map, HttpClient, HttpConfig, MllmConfig, MllmError, MockClient, MockStrategy,
    ModelClient, PromptBundle, PromptMode, RetryingClient, TransportError,
};
use bodyregion::taxonomy::{Modality, Taxonomy};
use bodyregion::volume::{load_volume, VolumeError, VolumeKind};
use serde::Serialize;

use crate::args::{ClassifyArgs, ModeArg};
use crate::io::{collect_inputs, create_dir, load_taxonomy, scan_id, write_file};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Rules,
    MllmPlain,
    MllmSegAware,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    Mock { strategy: MockStrategy },
    Http { config: HttpConfig, retries: u32 },
}

/// Every setting that influences a label; echoed in each record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub modality: Modality,
    pub taxonomy: Option<PathBuf>,
    pub mode: Mode,
    pub policy: DecisionPolicy,
    pub min_voxels: u64,
    pub window: Option<(f64, f64)>,
    pub backend: Option<Backend>,
    pub labels_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub effective: EffectiveConfig,
    pub taxonomy: Taxonomy,
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
}

fn parse_mock(s: &str) -> Result<MockStrategy, CliError> {
    match s {
        "largest-extent" => Ok(MockStrategy::LargestExtent),
        "image-digest" => Ok(MockStrategy::ImageDigest),
        _ => s
            .strip_prefix("fixed:")
            .map(|t| MockStrategy::Fixed(t.to_string()))
            .ok_or_else(|| CliError::BadConfig(format!("unknown mock strategy {s:?}"))),
    }
}

impl RunConfig {
    /// Checks the arguments and resolves inputs. Fails with `BadConfig`
    /// or `NoInputs`.
    pub fn from_args(a: ClassifyArgs) -> Result<Self, CliError> {
        let bad = |m: &str| Err(CliError::BadConfig(m.to_string()));
        if !(a.tau > 0.0 && a.tau <= 1.0) {
            return bad("--tau must be in (0, 1]");
        }
        let mode = match a.mode {
            ModeArg::Rules => Mode::Rules,
            ModeArg::MllmPlain => Mode::MllmPlain,
            ModeArg::MllmSegAware => Mode::MllmSegAware,
        };
        let backend = match (&a.mock, &a.endpoint) {
            (Some(_), Some(_)) => return bad("--mock and --endpoint are mutually exclusive"),
            (Some(m), None) => Some(Backend::Mock { strategy: parse_mock(m)? }),
            (None, Some(e)) => {
                let Some(model) = a.model.clone() else {
                    return bad("--endpoint needs --model");
                };
                Some(Backend::Http {
                    config: HttpConfig {
                        endpoint: e.clone(),
                        model,
                        token_env: a.token_env.clone(),
                        timeout_secs: a.timeout,
                    },
                    retries: a.retries,
                })
            }
            (None, None) => None,
        };
        match mode {
            Mode::Rules if backend.is_some() => return bad("rules mode takes no model backend"),
            Mode::MllmPlain | Mode::MllmSegAware if backend.is_none() => {
                return bad("MLLM modes need --mock or --endpoint")
            }
            Mode::MllmSegAware if a.labels_dir.is_none() => return bad("mllm-seg-aware needs --labels-dir"),
            _ => {}
        }
        if a.inputs.is_empty() {
            return Err(CliError::NoInputs);
        }
        let taxonomy = load_taxonomy(&a.taxonomy)?;
        let inputs = collect_inputs(&a.inputs)?;
        if inputs.is_empty() {
            return Err(CliError::NoInputs);
        }
        let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
        Ok(RunConfig {
            effective: EffectiveConfig {
                modality: a.taxonomy.modality,
                taxonomy: a.taxonomy.taxonomy,
                mode,
                policy: DecisionPolicy {
                    tau: a.tau,
                    selection: a.policy.into(),
                },
                min_voxels: a.min_voxels,
                window: a.window,
                backend,
                labels_dir: a.labels_dir,
            },
            taxonomy,
            inputs,
            out: a.out,
            jobs,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRecord {
    pub scan_id: String,
    pub path: PathBuf,
    pub label: RegionSet,
    pub method: Method,
    pub assessments: Vec<RegionAssessment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeReport>,
    pub flags: ResultFlags,
    /// Why the scan fell back to `other`, if it did for a reason other
    /// than the rules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    pub config: EffectiveConfig,
    #[serde(skip)]
    pub transcript: Option<String>,
    #[serde(skip)]
    pub unreadable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub n_scans: usize,
    pub labels: BTreeMap<String, usize>,
    pub categories: BTreeMap<Category, usize>,
    pub errors: usize,
    pub empty_volumes: usize,
    pub parse_failures: usize,
    pub transport_errors: usize,
    pub config: EffectiveConfig,
}

/// Wraps a client for one scan and keeps the exchange for the audit log.
struct Recording<'a> {
    inner: &'a dyn ModelClient,
    log: Mutex<String>,
}

impl ModelClient for Recording<'_> {
    fn send(&self, bundle: &PromptBundle) -> Result<String, TransportError> {
        let reply = self.inner.send(bundle);
        let mut log = self.log.lock().unwrap();
        log.push_str(&bundle.to_text());
        match &reply {
            Ok(r) => log.push_str(&format!("\n\n=== RESPONSE ===\n{r}\n")),
            Err(e) => log.push_str(&format!("\n\n=== TRANSPORT ERROR ===\n{e}\n")),
        }
        reply
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

fn build_client(backend: &Backend) -> Result<Box<dyn ModelClient>, CliError> {
    Ok(match backend {
        Backend::Mock { strategy } => Box::new(MockClient::new(strategy.clone())),
        Backend::Http { config, retries } => {
            let http = HttpClient::new(config.clone()).map_err(|e| CliError::BadConfig(e.to_string()))?;
            let mut c = RetryingClient::new(http, *retries + 1);
            c.max_delay = Duration::from_secs(30);
            Box::new(c)
        }
    })
}

fn record(cfg: &RunConfig, path: &Path, result: Result<ClassificationResult, String>, method: Method) -> ScanRecord {
    let (r, error) = match result {
        Ok(r) => (r, None),
        Err(e) => {
            let mut r = ClassificationResult {
                label: RegionSet::other(),
                method,
                assessments: Vec::new(),
                measurements: None,
                edge: None,
                policy: None,
                flags: ResultFlags::default(),
                raw_response: None,
            };
            r.flags.transport_error = e.starts_with("transport");
            (r, Some(e))
        }
    };
    ScanRecord {
        scan_id: scan_id(path),
        path: path.to_path_buf(),
        label: r.label,
        method: r.method,
        assessments: r.assessments,
        edge: r.edge,
        flags: r.flags,
        error,
        raw_response: r.raw_response,
        config: cfg.effective.clone(),
        transcript: None,
        unreadable: false,
    }
}

fn unreadable(e: &VolumeError) -> bool {
    matches!(e, VolumeError::Io(_) | VolumeError::MalformedHeader(_) | VolumeError::DimensionMismatch { .. })
}

fn classify_rules(cfg: &RunConfig, classifier: &Classifier, path: &Path) -> ScanRecord {
    match classifier.classify_path(path) {
        Ok(r) => record(cfg, path, Ok(r), Method::Rules),
        Err(e) => {
            let mut rec = record(cfg, path, Err(e.to_string()), Method::Rules);
            rec.unreadable = unreadable(&e);
            rec
        }
    }
}

fn classify_mllm(cfg: &RunConfig, client: &dyn ModelClient, mllm: &MllmConfig, path: &Path) -> ScanRecord {
    let id = scan_id(path);
    let method = match cfg.effective.mode {
        Mode::MllmSegAware => Method::MllmSegmentation,
        _ => Method::Mllm,
    };
    let image = match load_volume(path, VolumeKind::Intensity) {
        Ok(v) => v,
        Err(e) => {
            let mut rec = record(cfg, path, Err(e.to_string()), method);
            rec.unreadable = unreadable(&e);
            return rec;
        }
    };
    let labels = match &cfg.effective.labels_dir {
        Some(dir) if cfg.effective.mode == Mode::MllmSegAware => {
            let p = dir.join(path.file_name().unwrap_or_default());
            match load_volume(&p, VolumeKind::Label) {
                Ok(v) => Some(v),
                Err(e) => {
                    let mut rec = record(cfg, path, Err(format!("label map {}: {e}", p.display())), method);
                    rec.unreadable = unreadable(&e);
                    return rec;
                }
            }
        }
        _ => None,
    };
    let recording = Recording {
        inner: client,
        log: Mutex::new(String::new()),
    };
    let result = classify_via_mllm(&recording, &id, &image, labels.as_ref(), &cfg.taxonomy, mllm).map_err(|e| match e {
        MllmError::Transport { .. } => format!("transport: {e}"),
        other => other.to_string(),
    });
    let mut rec = record(cfg, path, result, method);
    let log = recording.log.into_inner().unwrap();
    rec.transcript = (!log.is_empty()).then_some(log);
    rec
}

fn summarize(cfg: &RunConfig, records: &[ScanRecord]) -> Summary {
    let mut labels = BTreeMap::new();
    let mut categories: BTreeMap<Category, usize> = Category::ALL.into_iter().map(|c| (c, 0)).collect();
    for r in records {
        *labels.entry(r.label.to_string()).or_insert(0) += 1;
        for c in Category::ALL {
            if r.label.has_category(c) {
                *categories.get_mut(&c).unwrap() += 1;
            }
        }
    }
    Summary {
        n_scans: records.len(),
        labels,
        categories,
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        empty_volumes: records.iter().filter(|r| r.flags.empty_volume).count(),
        parse_failures: records.iter().filter(|r| r.flags.parse_failure).count(),
        transport_errors: records.iter().filter(|r| r.flags.transport_error).count(),
        config: cfg.effective.clone(),
    }
}

fn to_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("records serialize")
}

/// Classifies every input. Records keep input order whatever the worker
/// count. Per-scan problems become `other` records; the run fails with
/// `Io` afterwards if any input could not be read.
pub fn run_classify(cfg: &RunConfig) -> Result<(Vec<ScanRecord>, Summary), CliError> {
    let records = match cfg.effective.mode {
        Mode::Rules => {
            let classifier = Classifier::new(cfg.taxonomy.clone())
                .with_policy(cfg.effective.policy)
                .with_options(AnalysisOptions {
                    min_voxels: cfg.effective.min_voxels,
                    ..Default::default()
                });
            ordered_parallel_map(&cfg.inputs, cfg.jobs, |p| classify_rules(cfg, &classifier, p))
        }
        Mode::MllmPlain | Mode::MllmSegAware => {
            let backend = cfg.effective.backend.as_ref().ok_or_else(|| CliError::BadConfig("no model backend".into()))?;
            let client = build_client(backend)?;
            let mut mllm = MllmConfig::new(
                &cfg.taxonomy,
                if cfg.effective.mode == Mode::MllmSegAware {
                    PromptMode::SegmentationAware
                } else {
                    PromptMode::Plain
                },
            );
            mllm.render.window = cfg.effective.window;
            mllm.analysis.min_voxels = cfg.effective.min_voxels;
            ordered_parallel_map(&cfg.inputs, cfg.jobs, |p| classify_mllm(cfg, client.as_ref(), &mllm, p))
        }
    };
    let summary = summarize(cfg, &records);
    let lines: String = records.iter().map(|r| to_line(r) + "\n").collect();
    match &cfg.out {
        Some(dir) => {
            create_dir(dir)?;
            write_file(&dir.join("results.jsonl"), &lines)?;
            write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
            for r in &records {
                if let Some(t) = &r.transcript {
                    write_file(&dir.join("transcripts").join(format!("{}.txt", r.scan_id)), t)?;
                }
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(lines.as_bytes()).map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    eprintln!(
        "{} scans, {} with errors; labels: {}",
        summary.n_scans,
        summary.errors,
        summary.labels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    );
    if let Some(bad) = records.iter().find(|r| r.unreadable) {
        return Err(CliError::io(&bad.path, bad.error.clone().unwrap_or_default()));
    }
    Ok((records, summary))
}
