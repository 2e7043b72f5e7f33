//! Append-only view history with annotation.
//!
//! Layout under the data root:
//!
//! ```text
//! <user>/history/<source_id>/<seq>_<timestamp>.png
//! <user>/history/index.jsonl
//! <user>/annotations.jsonl
//! ```
//!
//! Index and annotation files are JSON lines written one whole line per
//! append; a torn last line is ignored on load. A record counts as annotated
//! once an annotation references it, so the index itself is never rewritten.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{Frame, Region};
use crate::intervention::{parse_label, InterventionSpec, Registry};
use crate::source::is_slug;

pub const PAGE_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub record_id: String,
    pub user: String,
    pub source_id: String,
    pub seq_no: u64,
    pub timestamp_ms: u64,
    /// Relative to the data root.
    pub frame_path: String,
    #[serde(default)]
    pub annotated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: String,
    pub record_id: String,
    pub region: Region,
    pub label: String,
    pub annotator: String,
    pub created_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryQuery {
    pub source_id: Option<String>,
    /// Inclusive.
    pub from_ms: Option<u64>,
    /// Inclusive.
    pub to_ms: Option<u64>,
    /// Zero-based.
    #[serde(default)]
    pub page: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPage {
    pub records: Vec<ViewRecord>,
    pub page: usize,
    pub page_size: usize,
    /// Matching records over all pages.
    pub total: usize,
}

#[derive(Default)]
struct UserHistory {
    records: Vec<ViewRecord>,
    annotations: Vec<Annotation>,
    /// Last persisted `(seq_no, timestamp_ms)` per source.
    last: HashMap<String, (u64, u64)>,
}

pub struct HistoryStore {
    root: PathBuf,
    users: BTreeMap<String, UserHistory>,
    /// record id -> (user, index into that user's records)
    by_id: HashMap<String, (String, usize)>,
    annotated: HashSet<String>,
}

pub fn record_id(user: &str, source_id: &str, seq_no: u64) -> String {
    let mut h = Sha256::new();
    h.update(user.as_bytes());
    h.update([0]);
    h.update(source_id.as_bytes());
    h.update([0]);
    h.update(seq_no.to_le_bytes());
    hex::encode(&h.finalize()[..12])
}

impl HistoryStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        let mut store = HistoryStore { root, users: BTreeMap::new(), by_id: HashMap::new(), annotated: HashSet::new() };
        let mut names: Vec<String> = std::fs::read_dir(&store.root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        for user in names {
            let dir = store.root.join(&user);
            let records: Vec<ViewRecord> = read_lines(&dir.join("history").join("index.jsonl"))?;
            let annotations: Vec<Annotation> = read_lines(&dir.join("annotations.jsonl"))?;
            let mut h = UserHistory::default();
            for r in records {
                let e = h.last.entry(r.source_id.clone()).or_insert((r.seq_no, r.timestamp_ms));
                *e = (e.0.max(r.seq_no), e.1.max(r.timestamp_ms));
                store.by_id.insert(r.record_id.clone(), (user.clone(), h.records.len()));
                h.records.push(r);
            }
            for a in &annotations {
                store.annotated.insert(a.record_id.clone());
            }
            h.annotations = annotations;
            store.users.insert(user, h);
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ensure_user(&mut self, user: &str) {
        self.users.entry(user.to_string()).or_default();
    }

    pub fn has_user(&self, user: &str) -> bool {
        self.users.contains_key(user)
    }

    /// First sequence number a new stream of `source_id` should use so that
    /// its frames sort after everything already recorded.
    pub fn next_seq(&self, user: &str, source_id: &str) -> u64 {
        self.users.get(user).and_then(|h| h.last.get(source_id)).map_or(0, |(s, _)| s + 1)
    }

    /// Persists `f` unless a frame of the same source was persisted less
    /// than `1 / capture_fps` seconds earlier (with 1 ms tolerance for
    /// millisecond timestamps). Frames whose timestamp goes backwards are
    /// dropped; repeated sequence numbers are a conflict.
    pub fn record(&mut self, user: &str, f: &Frame, capture_fps: f64) -> Result<Option<ViewRecord>> {
        if !(capture_fps.is_finite() && capture_fps > 0.0) {
            return Err(Error::invalid(format!("capture_fps must be positive, got {capture_fps}")));
        }
        if !crate::is_valid_user(user) {
            return Err(Error::invalid(format!("user {user:?} is not a valid name")));
        }
        if !is_slug(&f.source_id) {
            return Err(Error::invalid(format!("frame source id {:?} must match [a-z0-9-]+", f.source_id)));
        }
        let h = self.users.entry(user.to_string()).or_default();
        if let Some(&(seq, ts)) = h.last.get(&f.source_id) {
            if f.seq_no <= seq {
                return Err(Error::Conflict(format!("seq {} already recorded for {}", f.seq_no, f.source_id)));
            }
            if f.timestamp_ms < ts || (f.timestamp_ms - ts) as f64 + 1.0 < 1000.0 / capture_fps {
                return Ok(None);
            }
        }
        let rel = format!("{user}/history/{}/{}_{}.png", f.source_id, f.seq_no, f.timestamp_ms);
        let rec = ViewRecord {
            record_id: record_id(user, &f.source_id, f.seq_no),
            user: user.to_string(),
            source_id: f.source_id.clone(),
            seq_no: f.seq_no,
            timestamp_ms: f.timestamp_ms,
            frame_path: rel.clone(),
            annotated: false,
        };
        let write = || -> Result<()> {
            let path = self.root.join(&rel);
            std::fs::create_dir_all(path.parent().expect("frame path has a parent"))?;
            f.write_png(&path)?;
            append_line(&self.root.join(user).join("history").join("index.jsonl"), &rec)
        };
        write().map_err(|e| Error::RecordFailed(e.to_string()))?;
        let h = self.users.get_mut(user).expect("inserted above");
        h.last.insert(f.source_id.clone(), (f.seq_no, f.timestamp_ms));
        self.by_id.insert(rec.record_id.clone(), (user.to_string(), h.records.len()));
        h.records.push(rec.clone());
        Ok(Some(rec))
    }

    /// Records ordered by (timestamp, source, seq), filtered and paged.
    pub fn list(&self, user: &str, q: &HistoryQuery) -> Result<HistoryPage> {
        let h = self.users.get(user).ok_or_else(|| Error::NotFound(format!("user {user}")))?;
        let mut hits: Vec<&ViewRecord> = h
            .records
            .iter()
            .filter(|r| q.source_id.as_ref().is_none_or(|s| &r.source_id == s))
            .filter(|r| q.from_ms.is_none_or(|t| r.timestamp_ms >= t))
            .filter(|r| q.to_ms.is_none_or(|t| r.timestamp_ms <= t))
            .collect();
        hits.sort_by(|a, b| (a.timestamp_ms, &a.source_id, a.seq_no).cmp(&(b.timestamp_ms, &b.source_id, b.seq_no)));
        let total = hits.len();
        let records = hits
            .into_iter()
            .skip(q.page.saturating_mul(PAGE_SIZE))
            .take(PAGE_SIZE)
            .map(|r| self.with_flag(r))
            .collect();
        Ok(HistoryPage { records, page: q.page, page_size: PAGE_SIZE, total })
    }

    pub fn get(&self, record_id: &str) -> Option<ViewRecord> {
        let (user, i) = self.by_id.get(record_id)?;
        Some(self.with_flag(&self.users[user].records[*i]))
    }

    pub fn load_frame(&self, rec: &ViewRecord) -> Result<Frame> {
        let f = Frame::read_png(&self.root.join(&rec.frame_path))?;
        Ok(f.with_meta(rec.source_id.clone(), rec.seq_no, rec.timestamp_ms))
    }

    pub fn annotations(&self, user: &str) -> Result<&[Annotation]> {
        self.users.get(user).map(|h| h.annotations.as_slice()).ok_or_else(|| Error::NotFound(format!("user {user}")))
    }

    /// Validates and compiles an annotation of one of `user`'s records, then
    /// persists it. Nothing is stored when compilation fails.
    pub fn annotate(
        &mut self,
        user: &str,
        record_id: &str,
        region: Region,
        label: &str,
        registry: &mut Registry,
    ) -> Result<(Annotation, InterventionSpec)> {
        let rec = self.get(record_id).ok_or_else(|| Error::NotFound(format!("record {record_id}")))?;
        if rec.user != user {
            return Err(Error::PermissionDenied(format!("record {record_id} belongs to another user")));
        }
        parse_label(label)?;
        let frame = self.load_frame(&rec)?;
        if region.w == 0 || region.h == 0 || !region.fits(frame.width, frame.height) {
            return Err(Error::invalid(format!(
                "region {region:?} is not inside the {}x{} frame",
                frame.width, frame.height
            )));
        }
        let h = self.users.get(user).expect("record owner exists");
        let a = Annotation {
            annotation_id: format!("{record_id}-{}", h.annotations.len() + 1),
            record_id: record_id.to_string(),
            region,
            label: label.to_string(),
            annotator: user.to_string(),
            created_ms: crate::now_ms(),
        };
        let spec = registry.compile_annotation(&a, &frame)?;
        append_line(&self.root.join(user).join("annotations.jsonl"), &a)?;
        self.annotated.insert(record_id.to_string());
        self.users.get_mut(user).expect("record owner exists").annotations.push(a.clone());
        Ok((a, spec))
    }

    fn with_flag(&self, r: &ViewRecord) -> ViewRecord {
        ViewRecord { annotated: self.annotated.contains(&r.record_id), ..r.clone() }
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::create_dir_all(path.parent().expect("index path has a parent"))?;
    let mut line = serde_json::to_vec(value)?;
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&line)?;
    Ok(())
}

/// Parses a JSON-lines file, discarding an unterminated or unparsable last
/// line.
fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut out = Vec::new();
    for line in bytes[..complete].split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        match serde_json::from_slice(line) {
            Ok(v) => out.push(v),
            Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable index line"),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seq: u64, ts: u64) -> Frame {
        Frame::filled(8, 6, [seq as u8, 10, 20]).with_meta("cam", seq, ts)
    }

    #[test]
    fn rate_limit() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = HistoryStore::open(dir.path()).unwrap();
        assert!(h.record("ana", &frame(0, 1000), 60.0).unwrap().is_some());
        assert!(h.record("ana", &frame(1, 1001), 60.0).unwrap().is_none());
        assert!(h.record("ana", &frame(2, 1016), 60.0).unwrap().is_some());
        assert!(matches!(h.record("ana", &frame(2, 2000), 60.0), Err(Error::Conflict(_))));
        assert!(matches!(h.record("ana", &frame(3, 2000), 0.0), Err(Error::InvalidArgument(_))));
        let mut all = HistoryStore::open(tempfile::tempdir().unwrap().path()).unwrap();
        let kept = (0..30u64).filter(|&i| all.record("bo", &frame(i, i * 1000 / 60), 1000.0).unwrap().is_some()).count();
        assert_eq!(kept, 30);
    }

    #[test]
    fn pages_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = HistoryStore::open(dir.path()).unwrap();
        h.ensure_user("ana");
        assert_eq!(h.list("ana", &HistoryQuery::default()).unwrap().total, 0);
        assert!(matches!(h.list("zed", &HistoryQuery::default()), Err(Error::NotFound(_))));
        for i in 0..250 {
            h.record("ana", &frame(i, 10_000 + i * 20), 60.0).unwrap().unwrap();
        }
        let sizes: Vec<usize> = (0..4)
            .map(|page| h.list("ana", &HistoryQuery { page, ..Default::default() }).unwrap().records.len())
            .collect();
        assert_eq!(sizes, vec![100, 100, 50, 0]);
        let none = HistoryQuery { from_ms: Some(1), to_ms: Some(5), ..Default::default() };
        assert!(h.list("ana", &none).unwrap().records.is_empty());
        let other = HistoryQuery { source_id: Some("other".into()), ..Default::default() };
        assert!(h.list("ana", &other).unwrap().records.is_empty());
        assert_eq!(h.next_seq("ana", "cam"), 250);
    }

    #[test]
    fn reload_ignores_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut h = HistoryStore::open(dir.path()).unwrap();
            for i in 0..3 {
                h.record("ana", &frame(i, i * 100), 60.0).unwrap();
            }
        }
        let index = dir.path().join("ana/history/index.jsonl");
        let mut f = OpenOptions::new().append(true).open(&index).unwrap();
        f.write_all(b"{\"record_id\":\"trunc").unwrap();
        let h = HistoryStore::open(dir.path()).unwrap();
        let page = h.list("ana", &HistoryQuery::default()).unwrap();
        assert_eq!(page.total, 3);
        let rec = &page.records[2];
        assert_eq!(h.load_frame(rec).unwrap().pixels, frame(2, 200).pixels);
    }

    #[test]
    fn annotate_rules() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = HistoryStore::open(dir.path().join("data")).unwrap();
        let mut reg = Registry::open(dir.path().join("interventions")).unwrap();
        let mut f = Frame::filled(40, 30, [250, 250, 250]);
        for y in 5..15 {
            for x in 5..20 {
                f.set_pixel(x, y, [(x * 13) as u8, (y * 17) as u8, 90]);
            }
        }
        let rec = h.record("ana", &f.with_meta("cam", 0, 0), 60.0).unwrap().unwrap();
        h.ensure_user("bo");
        let r = Region { x: 5, y: 5, w: 15, h: 10 };
        assert!(matches!(h.annotate("bo", &rec.record_id, r, "mask-x", &mut reg), Err(Error::PermissionDenied(_))));
        assert!(matches!(h.annotate("ana", &rec.record_id, r, "remove-ads", &mut reg), Err(Error::InvalidArgument(_))));
        let big = Region { x: 30, y: 0, w: 20, h: 10 };
        assert!(matches!(h.annotate("ana", &rec.record_id, big, "mask-x", &mut reg), Err(Error::InvalidArgument(_))));
        assert!(!h.get(&rec.record_id).unwrap().annotated);
        let (a, spec) = h.annotate("ana", &rec.record_id, r, "mask-sharebar", &mut reg).unwrap();
        assert_eq!(spec.name, "mask-sharebar");
        assert!(h.get(&rec.record_id).unwrap().annotated);
        let reopened = HistoryStore::open(dir.path().join("data")).unwrap();
        assert_eq!(reopened.annotations("ana").unwrap(), &[a]);
        assert!(reopened.get(&rec.record_id).unwrap().annotated);
    }
}
