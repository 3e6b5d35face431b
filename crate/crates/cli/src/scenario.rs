//! Scenario files for `mcl-sim`.
//!
//! A scenario is a JSON object. Its link fields (`seed`, `loss_pct`,
//! `dup_pct`, `reorder_pct`, `latency_ms`, `outage_schedule`) sit at the top
//! level next to the scenario keys below:
//!
//! ```json
//! {
//!   "seed": 7,
//!   "loss_pct": 20.0,
//!   "items": [{"url": "doc", "media": "data", "text": "<page>hi</page>"}],
//!   "grammar": "ROOT page\nELEMENT page TEXT\n",
//!   "actions": [{"fetch": "doc"}, {"at_ms": 5000, "modify": "doc", "spec": "to_upper"}],
//!   "assertions": [{"name": "all ok", "all_succeeded": true}]
//! }
//! ```
//!
//! The seed drives the link and the warehouse, so a scenario fully
//! determines its report.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use mcl_core::client::{media_dispatch, ClientConfig, ClientSession, FetchOptions, SimConduit};
use mcl_core::link::Millis;
use mcl_core::modloop::ModificationSpec;
use mcl_core::netsim::LinkConfig;
use mcl_core::server::{Outcome, ServerConfig};
use mcl_core::transport::{ArqConfig, DEFAULT_BUFFER_CAPACITY};
use mcl_core::types::{ContentId, ContentRequest, DeviceProfile, MediaType, NetworkStatus};
use mcl_core::warehouse::Warehouse;
use mcl_parse::{load_grammar, DtdGrammar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{Map, Value};

/// How long the runner keeps servicing the link after each action.
const SETTLE_MS: Millis = 60_000;

pub const CSV_HEADER: [&str; 7] = [
    "request",
    "url",
    "bytes",
    "chunks",
    "retransmissions",
    "buffered_frames",
    "outcome",
];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("assertion failed: {0}")]
    AssertionFailed(String),
}

fn syntax(msg: impl fmt::Display) -> ScenarioError {
    ScenarioError::Syntax(msg.to_string())
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArqSection {
    #[serde(default = "default_window")]
    window_size: usize,
    #[serde(default = "default_timeout")]
    timeout_ms: Millis,
    #[serde(default = "default_retries")]
    max_retries: u32,
}

fn default_window() -> usize {
    ArqConfig::default().window_size
}
fn default_timeout() -> Millis {
    ArqConfig::default().timeout_ms
}
fn default_retries() -> u32 {
    ArqConfig::default().max_retries
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemSpec {
    url: String,
    media: MediaType,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    file: Option<PathBuf>,
    #[serde(default)]
    generate: Option<Generate>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct Generate {
    bytes: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModifyAfter {
    chunks: u32,
    spec: ModificationSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSpec {
    #[serde(default)]
    at_ms: Option<Millis>,
    #[serde(default)]
    fetch: Option<String>,
    #[serde(default)]
    modify: Option<String>,
    #[serde(default)]
    spec: Option<ModificationSpec>,
    #[serde(default)]
    modify_after: Option<ModifyAfter>,
    #[serde(default)]
    net: Option<NetworkStatus>,
    #[serde(default)]
    profile: Option<DeviceProfile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeCheck {
    request: usize,
    equals: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssertionSpec {
    name: String,
    #[serde(default)]
    all_succeeded: Option<bool>,
    #[serde(default)]
    outcome: Option<OutcomeCheck>,
    #[serde(default)]
    column: Option<String>,
    #[serde(default)]
    request: Option<usize>,
    #[serde(default)]
    equals: Option<u64>,
    #[serde(default)]
    at_least: Option<u64>,
    #[serde(default)]
    at_most: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Fetch {
        url: String,
        spec: Option<ModificationSpec>,
        modify_after: Option<(u32, ModificationSpec)>,
    },
    /// Modify the content last fetched under `url`.
    Modify { url: String, spec: ModificationSpec },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedAction {
    pub at_ms: Option<Millis>,
    pub action: Action,
    pub net: Option<NetworkStatus>,
    pub profile: Option<DeviceProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Bytes,
    Chunks,
    Retransmissions,
    BufferedFrames,
}

impl Column {
    fn parse(s: &str) -> Option<Column> {
        Some(match s {
            "bytes" => Column::Bytes,
            "chunks" => Column::Chunks,
            "retransmissions" => Column::Retransmissions,
            "buffered_frames" => Column::BufferedFrames,
            _ => return None,
        })
    }

    fn of(self, row: &ReportRow) -> u64 {
        match self {
            Column::Bytes => row.bytes,
            Column::Chunks => row.chunks,
            Column::Retransmissions => row.retransmissions,
            Column::BufferedFrames => row.buffered_frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    AllSucceeded,
    Outcome {
        request: usize,
        equals: String,
    },
    /// Compares one row's value, or the column total when `request` is
    /// absent.
    Column {
        column: Column,
        request: Option<usize>,
        equals: Option<u64>,
        at_least: Option<u64>,
        at_most: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub check: Check,
}

impl TryFrom<AssertionSpec> for Assertion {
    type Error = ScenarioError;

    fn try_from(a: AssertionSpec) -> Result<Self, ScenarioError> {
        let kinds = usize::from(a.all_succeeded.is_some())
            + usize::from(a.outcome.is_some())
            + usize::from(a.column.is_some());
        if kinds != 1 {
            return Err(syntax(format!(
                "assertion {:?} needs exactly one of all_succeeded, outcome, column",
                a.name
            )));
        }
        let check = if let Some(column) = a.column {
            let column = Column::parse(&column)
                .ok_or_else(|| syntax(format!("unknown column {column:?}")))?;
            if a.equals.is_none() && a.at_least.is_none() && a.at_most.is_none() {
                return Err(syntax(format!("assertion {:?} compares nothing", a.name)));
            }
            Check::Column {
                column,
                request: a.request,
                equals: a.equals,
                at_least: a.at_least,
                at_most: a.at_most,
            }
        } else {
            if a.request.is_some()
                || a.equals.is_some()
                || a.at_least.is_some()
                || a.at_most.is_some()
            {
                return Err(syntax(format!(
                    "assertion {:?}: comparison fields only apply to column checks",
                    a.name
                )));
            }
            match (a.all_succeeded, a.outcome) {
                (Some(true), None) => Check::AllSucceeded,
                (Some(false), None) => {
                    return Err(syntax("all_succeeded must be true"));
                }
                (None, Some(o)) => Check::Outcome {
                    request: o.request,
                    equals: o.equals,
                },
                _ => unreachable!("exactly one kind"),
            }
        };
        Ok(Assertion {
            name: a.name,
            check,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub link: LinkConfig,
    pub arq: ArqConfig,
    pub buffer_capacity: usize,
    pub profile: DeviceProfile,
    pub grammar: Option<DtdGrammar>,
    pub items: Vec<(String, MediaType, Vec<u8>)>,
    pub actions: Vec<TimedAction>,
    pub assertions: Vec<Assertion>,
}

fn take<T: serde::de::DeserializeOwned>(
    obj: &mut Map<String, Value>,
    key: &str,
) -> Result<Option<T>, ScenarioError> {
    obj.remove(key)
        .map(|v| serde_json::from_value(v).map_err(|e| syntax(format!("{key}: {e}"))))
        .transpose()
}

fn generate(media: MediaType, g: Generate) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    match media {
        MediaType::Graph => {
            let mut out = String::new();
            let mut x = 0u32;
            while out.len() < g.bytes {
                out.push_str(&format!("{x}\t{}\n", rng.gen_range(-1000..1000)));
                x += 1;
            }
            out.into_bytes()
        }
        MediaType::Data => (0..g.bytes).map(|_| rng.gen_range(b'a'..=b'z')).collect(),
        MediaType::Image | MediaType::Voice => {
            let mut v = vec![0u8; g.bytes];
            rng.fill(&mut v[..]);
            v
        }
    }
}

impl Scenario {
    /// Parses scenario text. Relative `file` and `grammar_file` paths are
    /// resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
        let value: Value = serde_json::from_str(text).map_err(syntax)?;
        let Value::Object(mut obj) = value else {
            return Err(syntax("top level must be an object"));
        };
        let items: Vec<ItemSpec> = take(&mut obj, "items")?.unwrap_or_default();
        let actions: Vec<ActionSpec> =
            take(&mut obj, "actions")?.ok_or_else(|| syntax("missing actions"))?;
        let assertions: Vec<AssertionSpec> = take(&mut obj, "assertions")?.unwrap_or_default();
        let arq = take::<ArqSection>(&mut obj, "arq")?
            .map(|a| ArqConfig {
                window_size: a.window_size,
                timeout_ms: a.timeout_ms,
                max_retries: a.max_retries,
            })
            .unwrap_or_default();
        let buffer_capacity = take(&mut obj, "buffer_capacity")?.unwrap_or(DEFAULT_BUFFER_CAPACITY);
        let profile: DeviceProfile = take(&mut obj, "profile")?.unwrap_or_default();
        let grammar_text: Option<String> = take(&mut obj, "grammar")?;
        let grammar_file: Option<PathBuf> = take(&mut obj, "grammar_file")?;
        let link: LinkConfig =
            serde_json::from_value(Value::Object(obj)).map_err(|e| syntax(format!("link: {e}")))?;
        link.validate().map_err(syntax)?;
        if arq.window_size == 0 || arq.timeout_ms == 0 {
            return Err(syntax("arq window_size and timeout_ms must be positive"));
        }
        profile.validate().map_err(syntax)?;

        let grammar_text = match (grammar_text, grammar_file) {
            (Some(_), Some(_)) => return Err(syntax("give grammar or grammar_file, not both")),
            (Some(t), None) => Some(t),
            (None, Some(p)) => Some(
                std::fs::read_to_string(base_dir.join(&p))
                    .map_err(|e| syntax(format!("{}: {e}", p.display())))?,
            ),
            (None, None) => None,
        };
        let grammar = grammar_text
            .map(|t| load_grammar(&t).map_err(|e| syntax(format!("grammar: {e}"))))
            .transpose()?;

        let items = items
            .into_iter()
            .map(|it| {
                let payload = match (it.text, it.file, it.generate) {
                    (Some(t), None, None) => t.into_bytes(),
                    (None, Some(p), None) => std::fs::read(base_dir.join(&p))
                        .map_err(|e| syntax(format!("{}: {e}", p.display())))?,
                    (None, None, Some(g)) => generate(it.media, g),
                    _ => {
                        return Err(syntax(format!(
                            "item {:?} needs exactly one of text, file, generate",
                            it.url
                        )))
                    }
                };
                Ok((it.url, it.media, payload))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let actions = actions
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let action = match (a.fetch, a.modify) {
                    (Some(url), None) => Action::Fetch {
                        url,
                        spec: a.spec,
                        modify_after: a.modify_after.map(|m| (m.chunks, m.spec)),
                    },
                    (None, Some(url)) => {
                        if a.modify_after.is_some() {
                            return Err(syntax(format!(
                                "action {}: modify_after needs fetch",
                                i + 1
                            )));
                        }
                        let spec = a.spec.ok_or_else(|| {
                            syntax(format!("action {}: modify needs spec", i + 1))
                        })?;
                        Action::Modify { url, spec }
                    }
                    _ => {
                        return Err(syntax(format!(
                            "action {} needs exactly one of fetch, modify",
                            i + 1
                        )))
                    }
                };
                Ok(TimedAction {
                    at_ms: a.at_ms,
                    action,
                    net: a.net,
                    profile: a.profile,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let assertions = assertions
            .into_iter()
            .map(Assertion::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        for a in &assertions {
            let req = match &a.check {
                Check::Outcome { request, .. } => Some(*request),
                Check::Column { request, .. } => *request,
                Check::AllSucceeded => None,
            };
            if let Some(r) = req {
                if r == 0 || r > actions.len() {
                    return Err(syntax(format!(
                        "assertion {:?} names request {r}, scenario has {}",
                        a.name,
                        actions.len()
                    )));
                }
            }
        }

        Ok(Scenario {
            link,
            arq,
            buffer_capacity,
            profile,
            grammar,
            items,
            actions,
            assertions,
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| syntax(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::from_json(&text, base)
    }

    /// Runs every action in order over a fresh simulated link.
    pub fn run(&self) -> Result<Report, ScenarioError> {
        let mut warehouse = Warehouse::with_seed(self.link.seed);
        for (url, media, payload) in &self.items {
            warehouse
                .ingest(url, *media, payload.clone())
                .map_err(|e| syntax(format!("item {url:?}: {e}")))?;
        }
        let server_cfg = ServerConfig {
            arq: self.arq,
            buffer_capacity: self.buffer_capacity,
            ..ServerConfig::default()
        };
        let client_cfg = ClientConfig {
            arq: self.arq,
            buffer_capacity: self.buffer_capacity,
            ..ClientConfig::default()
        };
        let conduit = SimConduit::new(self.link.clone(), warehouse.into_shared(), server_cfg);
        let mut session = ClientSession::new(conduit, client_cfg);
        let mut fetched: HashMap<String, ContentId> = HashMap::new();
        let mut rows = Vec::with_capacity(self.actions.len());

        for (i, ta) in self.actions.iter().enumerate() {
            if let Some(at) = ta.at_ms {
                if at > session.now() {
                    // A transport failure while idling surfaces on the next
                    // request; nothing is pending here.
                    let _ = session.advance_to(at);
                }
            }
            let log_start = session.conduit().server().log().len();
            let retrans_start = session.retransmissions();
            let buffered_start = session.outbox_stats().buffered
                + session.conduit().server().outbox_stats().buffered;

            let profile = ta.profile.clone().unwrap_or_else(|| self.profile.clone());
            let net = ta
                .net
                .unwrap_or_else(|| NetworkStatus::new(profile.connection_class));
            let (url, result) = match &ta.action {
                Action::Fetch {
                    url,
                    spec,
                    modify_after,
                } => {
                    let mut req = ContentRequest::new(url.clone(), profile, net);
                    req.mod_spec = spec.clone();
                    let opts = FetchOptions {
                        modify_after_chunks: modify_after.clone(),
                    };
                    (url.clone(), session.fetch(req, opts))
                }
                Action::Modify { url, spec } => {
                    let id = fetched.get(url).copied().unwrap_or(ContentId::ZERO);
                    (url.clone(), session.request_modification(id, spec.clone()))
                }
            };
            let settle = session.now().saturating_add(SETTLE_MS);
            let _ = session.linger(settle);

            let (bytes, outcome) = match result {
                Ok(report) => {
                    fetched.insert(url.clone(), report.item.content_id);
                    let shown = match report.item.media {
                        MediaType::Data if self.grammar.is_none() => Ok(()),
                        MediaType::Data | MediaType::Graph => {
                            media_dispatch(&report.item, self.grammar.as_ref(), None).map(drop)
                        }
                        MediaType::Image | MediaType::Voice => Ok(()),
                    };
                    let outcome = match shown {
                        Ok(()) => "ok".to_string(),
                        Err(e) => e.outcome_name().to_string(),
                    };
                    (report.item.payload.len() as u64, outcome)
                }
                Err(e) => (0, e.outcome_name().to_string()),
            };

            let server = session.conduit().server();
            let new_log = &server.log()[log_start..];
            let chunks = new_log
                .iter()
                .rev()
                .find(|l| l.outcome == Outcome::Delivered)
                .map_or(0, |l| u64::from(l.chunks));
            let server_retries: u64 = new_log.iter().map(|l| l.retries).sum();
            let buffered_end = session.outbox_stats().buffered + server.outbox_stats().buffered;
            rows.push(ReportRow {
                request: i + 1,
                url,
                bytes,
                chunks,
                retransmissions: server_retries + (session.retransmissions() - retrans_start),
                buffered_frames: buffered_end - buffered_start,
                outcome,
            });
        }

        let results = self
            .assertions
            .iter()
            .map(|a| (a.name.clone(), evaluate(&a.check, &rows)))
            .collect();
        Ok(Report { rows, results })
    }
}

fn evaluate(check: &Check, rows: &[ReportRow]) -> bool {
    match check {
        Check::AllSucceeded => rows.iter().all(|r| r.outcome == "ok"),
        Check::Outcome { request, equals } => rows[request - 1].outcome == *equals,
        Check::Column {
            column,
            request,
            equals,
            at_least,
            at_most,
        } => {
            let v = match request {
                Some(r) => column.of(&rows[r - 1]),
                None => rows.iter().map(|r| column.of(r)).sum(),
            };
            equals.is_none_or(|e| v == e)
                && at_least.is_none_or(|m| v >= m)
                && at_most.is_none_or(|m| v <= m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub request: usize,
    pub url: String,
    pub bytes: u64,
    pub chunks: u64,
    pub retransmissions: u64,
    pub buffered_frames: u64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Assertion name and whether it held, in file order.
    pub results: Vec<(String, bool)>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.request.to_string(),
                r.url.clone(),
                r.bytes.to_string(),
                r.chunks.to_string(),
                r.retransmissions.to_string(),
                r.buffered_frames.to_string(),
                r.outcome.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// First failing assertion, if any.
    pub fn verdict(&self) -> Result<(), ScenarioError> {
        match self.results.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(ScenarioError::AssertionFailed(name.clone())),
            None => Ok(()),
        }
    }
}
