use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use ethnocode_core::coder::{
    self, build_review_queue, read_predictions, run_code, CodeRunConfig, CoderError, Decision, MergeReport, ReliabilityReport,
    ReviewQueue,
};
use ethnocode_core::corpus::{self, CodeOrigin, Corpus, CorpusError, TableConfig, UnitKey};
use ethnocode_core::embeddings::{self, UnitEmbeddings};
use ethnocode_core::textprep::TokenizedCorpus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{DecisionLog, LogError};
use crate::state::{CodeState, Event, QueuedUnit, ReviewState};

pub const CONFIG_FILE: &str = "project.json";
pub const MERGED_FILE: &str = "merged.csv";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("unknown code `{0}`")]
    UnknownCode(String),
    #[error("unit {unit} is not queued for `{code}`")]
    NotQueued { code: String, unit: UnitKey },
    #[error("`{code}` is being reviewed by {holder}")]
    LeaseHeld { code: String, holder: String },
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("{0} item(s) still pending")]
    Incomplete(usize),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("project config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Coder(#[from] CoderError),
    #[error(transparent)]
    Embedding(#[from] embeddings::EmbeddingError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProjectError>;

/// Contents of `project.json`; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    /// Corpus table, relative to the project directory.
    pub corpus: String,
    pub table: TableConfig,
    /// Codes under review; defaults to the whole codebook.
    pub codes: Option<Vec<String>>,
    pub coder: CodeRunConfig,
    /// Initial queues are read from this predictions file when it exists,
    /// otherwise built by training.
    pub predictions: String,
    pub embeddings: Option<String>,
    pub lease_seconds: u64,
    pub snapshot_every: u64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            corpus: "corpus.csv".into(),
            table: TableConfig::default(),
            codes: None,
            coder: CodeRunConfig::default(),
            predictions: "predictions.csv".into(),
            embeddings: None,
            lease_seconds: 900,
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
struct Lease {
    reviewer: String,
    expires: Instant,
}

struct Inner {
    state: ReviewState,
    log: DecisionLog,
    leases: BTreeMap<String, Lease>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Running { code: String },
    Succeeded { code: String, version: u64, queued: usize },
    Failed { code: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRef {
    pub document: String,
    pub reference: usize,
}

impl From<&UnitKey> for UnitRef {
    fn from(k: &UnitKey) -> Self {
        UnitRef {
            document: k.doc_id.clone(),
            reference: k.reference,
        }
    }
}

impl From<&UnitRef> for UnitKey {
    fn from(r: &UnitRef) -> Self {
        UnitKey::new(r.document.clone(), r.reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextUnit {
    pub reference: usize,
    pub speaker: Option<String>,
    pub text: String,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItemView {
    pub unit: UnitRef,
    pub score: f64,
    pub decision: Decision,
    pub reviewer: Option<String>,
    pub timestamp: Option<String>,
    pub seq: u64,
    pub speaker: Option<String>,
    pub section: Option<String>,
    pub text: String,
    pub context: Vec<ContextUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub code: String,
    pub version: u64,
    pub total: usize,
    pub pending: usize,
    pub offset: usize,
    pub items: Vec<QueueItemView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusFilter {
    #[default]
    All,
    Pending,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub unit: UnitRef,
    pub code: String,
    pub decision: Decision,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub seq: u64,
    pub duplicate: bool,
    pub version: u64,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewProgress {
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Decided share of the queue; 1.0 for an empty queue.
    pub progress: f64,
    /// Accepted share of decided items; `None` before any decision.
    pub accept_rate: Option<f64>,
    /// Expected precision of the surviving machine codes: accepts count as
    /// true positives, pending items at the observed accept rate.
    pub post_review_precision: f64,
    /// Set when nothing survives, so the precision above is a convention.
    pub precision_by_convention: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub code: String,
    pub version: u64,
    pub report: Option<ReliabilityReport>,
    pub review: ReviewProgress,
}

pub struct Project {
    pub id: String,
    pub dir: PathBuf,
    pub config: ProjectConfig,
    corpus: Arc<Corpus>,
    tokens: Arc<TokenizedCorpus>,
    embeddings: Option<Arc<UnitEmbeddings>>,
    codes: Vec<String>,
    inner: RwLock<Inner>,
    jobs: Mutex<BTreeMap<String, JobStatus>>,
    next_job: AtomicU64,
}

impl std::fmt::Debug for Project {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Project").field("id", &self.id).field("dir", &self.dir).finish()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Project {
    /// Loads a project directory. Codes without a logged queue get one
    /// from the predictions file or, failing that, from a training run;
    /// codes that cannot be trained start with an empty queue.
    pub fn open(id: &str, dir: &Path) -> Result<Project> {
        let config: ProjectConfig = match fs::read_to_string(dir.join(CONFIG_FILE)) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| ProjectError::Config(e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ProjectConfig::default(),
            Err(e) => return Err(e.into()),
        };
        let corpus = corpus::load_corpus(&dir.join(&config.corpus), &config.table)?;
        let codes = match &config.codes {
            Some(c) => {
                if let Some(missing) = c.iter().find(|c| !corpus.codebook().contains(*c)) {
                    return Err(ProjectError::Config(format!("code `{missing}` is not in the codebook")));
                }
                c.clone()
            }
            None => corpus.codebook().iter().cloned().collect(),
        };
        let tokens = coder::prepare_tokens(&corpus, config.coder.stopwords);
        let embeddings = match &config.embeddings {
            Some(p) => Some(Arc::new(embeddings::load_unit_embeddings(&dir.join(p), &corpus, p)?)),
            None => None,
        };
        let (log, state) = DecisionLog::open(dir, config.snapshot_every)?;
        let project = Project {
            id: id.to_string(),
            dir: dir.to_path_buf(),
            corpus: Arc::new(corpus),
            tokens: Arc::new(tokens),
            embeddings,
            codes,
            inner: RwLock::new(Inner {
                state,
                log,
                leases: BTreeMap::new(),
            }),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            config,
        };
        project.publish_initial_queues()?;
        Ok(project)
    }

    fn publish_initial_queues(&self) -> Result<()> {
        let predictions_path = self.dir.join(&self.config.predictions);
        let predictions = if predictions_path.exists() {
            Some(read_predictions(fs::File::open(&predictions_path)?)?)
        } else {
            None
        };
        for code in &self.codes {
            if self.inner.read().unwrap().state.code(code).is_some() {
                continue;
            }
            let (queue, report) = match &predictions {
                Some(p) => (build_review_queue(p, &self.corpus, code), None),
                None => match run_code(&self.corpus, &self.tokens, code, &self.config.coder, self.embeddings.as_deref()) {
                    Ok(run) => (run.queue, Some(run.report)),
                    Err(CoderError::TooFewExamples { .. } | CoderError::DegenerateLabels | CoderError::NoPositives) => (
                        ReviewQueue {
                            code: code.clone(),
                            items: Vec::new(),
                        },
                        None,
                    ),
                    Err(e) => return Err(e.into()),
                },
            };
            self.publish(code, &queue, report, false)?;
        }
        Ok(())
    }

    /// Appends a new queue version. With `skip_decided`, units already
    /// decided in any earlier version are left out.
    fn publish(&self, code: &str, queue: &ReviewQueue, report: Option<ReliabilityReport>, skip_decided: bool) -> Result<(u64, usize)> {
        let mut inner = self.inner.write().unwrap();
        let Inner { state, log, .. } = &mut *inner;
        let decided = state.code(code).map(CodeState::decided).unwrap_or_default();
        let items: Vec<QueuedUnit> = queue
            .items
            .iter()
            .filter(|i| !skip_decided || !decided.contains_key(&i.unit))
            .map(|i| QueuedUnit {
                unit: i.unit.clone(),
                score: i.score,
            })
            .collect();
        let queued = items.len();
        let version = state.code(code).map_or(0, |c| c.version) + 1;
        log.append(
            state,
            Event::Queue {
                code: code.to_string(),
                version,
                items,
                report,
            },
        )?;
        Ok((version, queued))
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn known(&self, code: &str) -> Result<()> {
        if self.codes.iter().any(|c| c == code) {
            Ok(())
        } else {
            Err(ProjectError::UnknownCode(code.to_string()))
        }
    }

    pub fn state(&self) -> ReviewState {
        self.inner.read().unwrap().state.clone()
    }

    pub fn queue_page(&self, code: &str, offset: usize, limit: usize, filter: StatusFilter) -> Result<QueuePage> {
        self.known(code)?;
        let inner = self.inner.read().unwrap();
        let empty = CodeState::default();
        let state = inner.state.code(code).unwrap_or(&empty);
        let items = state
            .items
            .iter()
            .filter(|i| match filter {
                StatusFilter::All => true,
                StatusFilter::Pending => i.decision == Decision::Pending,
                StatusFilter::Decided => i.decision != Decision::Pending,
            })
            .skip(offset)
            .take(limit)
            .map(|i| {
                let unit = self.corpus.unit(&i.unit);
                let context = self
                    .corpus
                    .context_window(&i.unit, 1)
                    .map(|units| {
                        units
                            .iter()
                            .map(|u| ContextUnit {
                                reference: u.reference,
                                speaker: u.speaker.clone(),
                                text: u.text.clone(),
                                target: u.reference == i.unit.reference,
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                QueueItemView {
                    unit: UnitRef::from(&i.unit),
                    score: i.score,
                    decision: i.decision,
                    reviewer: i.reviewer.clone(),
                    timestamp: i.timestamp.clone(),
                    seq: i.seq,
                    speaker: unit.and_then(|u| u.speaker.clone()),
                    section: unit.and_then(|u| u.section.clone()),
                    text: unit.map(|u| u.text.clone()).unwrap_or_default(),
                    context,
                }
            })
            .collect();
        Ok(QueuePage {
            code: code.to_string(),
            version: state.version,
            total: state.items.len(),
            pending: state.count(Decision::Pending),
            offset,
            items,
        })
    }

    /// Records a decision. Re-posting the current decision returns the
    /// sequence number that set it and writes nothing.
    pub fn decide(&self, req: &DecisionRequest) -> Result<DecisionAck> {
        self.known(&req.code)?;
        if req.reviewer.trim().is_empty() {
            return Err(ProjectError::Invalid("reviewer must not be empty".into()));
        }
        let unit = UnitKey::from(&req.unit);
        let mut inner = self.inner.write().unwrap();
        let Inner { state, log, leases } = &mut *inner;
        let code_state = state.code(&req.code).ok_or_else(|| ProjectError::UnknownCode(req.code.clone()))?;
        if code_state.item(&unit).is_none() {
            return Err(ProjectError::NotQueued {
                code: req.code.clone(),
                unit,
            });
        }
        let version = code_state.version;
        let now_instant = Instant::now();
        if let Some(lease) = leases.get(&req.code) {
            if lease.expires > now_instant && lease.reviewer != req.reviewer {
                return Err(ProjectError::LeaseHeld {
                    code: req.code.clone(),
                    holder: lease.reviewer.clone(),
                });
            }
        }
        leases.insert(
            req.code.clone(),
            Lease {
                reviewer: req.reviewer.clone(),
                expires: now_instant + Duration::from_secs(self.config.lease_seconds),
            },
        );
        if let Some(seq) = state.duplicate_of(&req.code, &unit, req.decision, &req.reviewer) {
            return Ok(DecisionAck {
                seq,
                duplicate: true,
                version,
                pending: state.code(&req.code).map_or(0, |c| c.count(Decision::Pending)),
            });
        }
        let entry = log.append(
            state,
            Event::Decision {
                code: req.code.clone(),
                version,
                unit,
                decision: req.decision,
                reviewer: req.reviewer.clone(),
                timestamp: now(),
            },
        )?;
        Ok(DecisionAck {
            seq: entry.seq,
            duplicate: false,
            version,
            pending: state.code(&req.code).map_or(0, |c| c.count(Decision::Pending)),
        })
    }

    /// Drops the lease on `code` if `reviewer` holds it.
    pub fn release(&self, code: &str, reviewer: &str) -> Result<bool> {
        self.known(code)?;
        let mut inner = self.inner.write().unwrap();
        match inner.leases.get(code) {
            Some(l) if l.reviewer == reviewer => {
                inner.leases.remove(code);
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn metrics(&self, code: &str) -> Result<Metrics> {
        self.known(code)?;
        let inner = self.inner.read().unwrap();
        let empty = CodeState::default();
        let state = inner.state.code(code).unwrap_or(&empty);
        let pending = state.count(Decision::Pending);
        let accepted = state.count(Decision::Accept);
        let rejected = state.count(Decision::Reject);
        let total = state.items.len();
        let decided = accepted + rejected;
        let accept_rate = (decided > 0).then(|| accepted as f64 / decided as f64);
        let surviving = accepted as f64 + pending as f64;
        let expected_true = accepted as f64 + pending as f64 * accept_rate.unwrap_or(1.0);
        Ok(Metrics {
            code: code.to_string(),
            version: state.version,
            report: state.report.clone(),
            review: ReviewProgress {
                total,
                pending,
                accepted,
                rejected,
                progress: if total == 0 { 1.0 } else { decided as f64 / total as f64 },
                accept_rate,
                post_review_precision: if surviving == 0.0 { 1.0 } else { expected_true / surviving },
                precision_by_convention: surviving == 0.0,
            },
        })
    }

    /// The corpus with every decision on `code` folded in.
    fn folded_corpus(&self, code: &str, decided: &BTreeMap<UnitKey, Decision>, corpus: &mut Corpus) -> Result<()> {
        for (unit, decision) in decided {
            match decision {
                Decision::Accept => {
                    corpus.assign_code(unit, code, CodeOrigin::Review)?;
                }
                Decision::Reject => {
                    if corpus.code_origin(unit, code) != Some(CodeOrigin::Human) {
                        corpus.remove_code(unit, code)?;
                        corpus.mark_negative(unit, code)?;
                    }
                }
                Decision::Pending => {}
            }
        }
        Ok(())
    }

    pub fn start_retrain(&self, code: &str) -> Result<String> {
        self.known(code)?;
        let id = format!("job-{}", self.next_job.fetch_add(1, Ordering::SeqCst));
        self.jobs
            .lock()
            .unwrap()
            .insert(id.clone(), JobStatus::Running { code: code.to_string() });
        Ok(id)
    }

    /// Trains on the corpus with review decisions folded in and swaps in
    /// the resulting queue. The live queue is untouched until the swap.
    pub fn run_retrain(&self, job: &str, code: &str) {
        let outcome = self.retrain(code);
        let status = match outcome {
            Ok((version, queued)) => JobStatus::Succeeded {
                code: code.to_string(),
                version,
                queued,
            },
            Err(e) => JobStatus::Failed {
                code: code.to_string(),
                error: e.to_string(),
            },
        };
        self.jobs.lock().unwrap().insert(job.to_string(), status);
    }

    pub fn retrain(&self, code: &str) -> Result<(u64, usize)> {
        self.known(code)?;
        let decided = self
            .inner
            .read()
            .unwrap()
            .state
            .code(code)
            .map(CodeState::decided)
            .unwrap_or_default();
        let mut corpus = (*self.corpus).clone();
        self.folded_corpus(code, &decided, &mut corpus)?;
        let run = run_code(&corpus, &self.tokens, code, &self.config.coder, self.embeddings.as_deref())?;
        self.publish(code, &run.queue, Some(run.report), true)
    }

    pub fn job(&self, id: &str) -> Result<JobStatus> {
        self.jobs
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ProjectError::UnknownJob(id.to_string()))
    }

    /// Folds every decision into the corpus and writes `merged.csv`. The
    /// queue for `code` must be fully decided.
    pub fn merge(&self, code: &str) -> Result<MergeReport> {
        self.known(code)?;
        let state = self.state();
        let code_state = state.code(code).cloned().unwrap_or_default();
        let pending = code_state.count(Decision::Pending);
        if pending > 0 {
            return Err(ProjectError::Incomplete(pending));
        }
        let mut corpus = (*self.corpus).clone();
        for (c, s) in &state.codes {
            self.folded_corpus(c, &s.decided(), &mut corpus)?;
        }
        corpus::save_corpus(&corpus, &self.dir.join(MERGED_FILE), &self.config.table)?;
        let accepted = code_state.count(Decision::Accept);
        let rejected = code_state.count(Decision::Reject);
        let total = accepted + rejected;
        Ok(MergeReport {
            code: code.to_string(),
            accepted,
            rejected,
            raw_precision: if total == 0 { 1.0 } else { accepted as f64 / total as f64 },
            post_review_precision: 1.0,
            precision_by_convention: accepted == 0,
        })
    }
}

/// Every subdirectory of `data_dir` holding a corpus table is a project,
/// named after the directory.
pub fn load_projects(data_dir: &Path) -> Result<BTreeMap<String, Arc<Project>>> {
    let mut out = BTreeMap::new();
    let mut dirs: Vec<PathBuf> = fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let config_corpus = fs::read_to_string(dir.join(CONFIG_FILE))
            .ok()
            .and_then(|s| serde_json::from_str::<ProjectConfig>(&s).ok())
            .map(|c| c.corpus)
            .unwrap_or_else(|| ProjectConfig::default().corpus);
        if !dir.join(&config_corpus).exists() {
            continue;
        }
        let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let project = Project::open(&id, &dir)?;
        out.insert(id, Arc::new(project));
    }
    Ok(out)
}
