//! Message stream ingestion.
//!
//! Streams are UTF-8 JSON-lines, one object per line with the required
//! fields `id`, `created_at` (UTC seconds) and `text`, plus an optional
//! `lang` hint. Sources are either local files or `tcp://host:port`
//! addresses.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of leading lines inspected for the malformed-input check.
pub const PROBE_LINES: usize = 1000;

/// Maximum fraction of malformed lines tolerated in the probe window.
pub const MAX_MALFORMED_FRACTION: f64 = 0.5;

/// One ingested microblog post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMessage {
    pub id: u64,
    /// Seconds since the Unix epoch, UTC.
    pub created_at: i64,
    pub text: String,
    #[serde(default, rename = "lang", skip_serializing_if = "Option::is_none")]
    pub lang_hint: Option<String>,
}

impl RawMessage {
    pub fn new(id: u64, created_at: i64, text: impl Into<String>) -> Self {
        RawMessage {
            id,
            created_at,
            text: text.into(),
            lang_hint: None,
        }
    }

    pub fn timestamp(&self) -> Option<DateTime<Utc>> {
        DateTime::from_timestamp(self.created_at, 0)
    }

    /// UTC calendar day of the message.
    pub fn day(&self) -> NaiveDate {
        day_of(self.created_at)
    }
}

/// UTC calendar day containing `secs`; timestamps outside chrono's range
/// are clamped to the representable extremes.
pub fn day_of(secs: i64) -> NaiveDate {
    let days = secs.div_euclid(86_400);
    NaiveDate::from_num_days_from_ce_opt(i32::try_from(days + 719_163).unwrap_or(if days < 0 {
        i32::MIN
    } else {
        i32::MAX
    }))
    .unwrap_or(if days < 0 {
        NaiveDate::MIN
    } else {
        NaiveDate::MAX
    })
}

/// Where a stream comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    File(PathBuf),
    Tcp(String),
}

impl Source {
    /// `tcp://host:port` selects a socket; anything else is a file path.
    pub fn parse(spec: &str) -> Source {
        match spec.strip_prefix("tcp://") {
            Some(addr) => Source::Tcp(addr.to_string()),
            None => Source::File(PathBuf::from(spec)),
        }
    }

    fn describe(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Tcp(a) => format!("tcp://{a}"),
        }
    }
}

/// Opens `source` and returns a message reader over it.
pub fn read_stream(source: &Source) -> Result<MessageReader<Box<dyn BufRead + Send>>> {
    let reader: Box<dyn BufRead + Send> = match source {
        Source::File(path) => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            Box::new(BufReader::new(f))
        }
        Source::Tcp(addr) => {
            let s = TcpStream::connect(addr).map_err(|e| Error::Connection {
                addr: addr.clone(),
                source: e,
            })?;
            Box::new(BufReader::new(s))
        }
    };
    MessageReader::new(reader, source.describe())
}

#[derive(Deserialize)]
struct WireMessage {
    id: u64,
    created_at: i64,
    text: String,
    #[serde(default)]
    lang: Option<String>,
}

fn parse_line(line: &str) -> Option<RawMessage> {
    let w: WireMessage = serde_json::from_str(line).ok()?;
    Some(RawMessage {
        id: w.id,
        created_at: w.created_at,
        text: w.text,
        lang_hint: w.lang,
    })
}

/// Iterator over the messages of a JSON-lines stream.
///
/// Malformed lines are counted and skipped. The first [`PROBE_LINES`] lines
/// are read up front; if more than half of them are malformed the stream is
/// rejected before any message is yielded.
pub struct MessageReader<R> {
    inner: R,
    origin: String,
    pending: VecDeque<RawMessage>,
    lines_in: usize,
    skipped: usize,
    buf: String,
    failed: bool,
}

impl<R: BufRead> MessageReader<R> {
    pub fn new(inner: R, origin: impl Into<String>) -> Result<Self> {
        let mut reader = MessageReader {
            inner,
            origin: origin.into(),
            pending: VecDeque::new(),
            lines_in: 0,
            skipped: 0,
            buf: String::new(),
            failed: false,
        };
        while reader.lines_in < PROBE_LINES {
            match reader.next_line()? {
                Some(Some(msg)) => reader.pending.push_back(msg),
                Some(None) => {}
                None => break,
            }
        }
        if reader.lines_in > 0
            && reader.skipped as f64 > MAX_MALFORMED_FRACTION * reader.lines_in as f64
        {
            return Err(Error::format(
                reader.origin.clone(),
                None,
                format!(
                    "{} of the first {} lines are malformed; not a message stream?",
                    reader.skipped, reader.lines_in
                ),
            ));
        }
        Ok(reader)
    }

    /// Lines consumed so far.
    pub fn lines_in(&self) -> usize {
        self.lines_in
    }

    /// Malformed lines skipped so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    // None at EOF, Some(None) for a skipped line.
    fn next_line(&mut self) -> Result<Option<Option<RawMessage>>> {
        self.buf.clear();
        let n = self
            .inner
            .read_line(&mut self.buf)
            .map_err(|e| Error::io(self.origin.clone(), e))?;
        if n == 0 {
            return Ok(None);
        }
        self.lines_in += 1;
        match parse_line(self.buf.trim_end_matches(['\n', '\r'])) {
            Some(m) => Ok(Some(Some(m))),
            None => {
                self.skipped += 1;
                Ok(Some(None))
            }
        }
    }
}

impl<R: BufRead> Iterator for MessageReader<R> {
    type Item = Result<RawMessage>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(m) = self.pending.pop_front() {
            return Some(Ok(m));
        }
        if self.failed {
            return None;
        }
        loop {
            match self.next_line() {
                Ok(Some(Some(m))) => return Some(Ok(m)),
                Ok(Some(None)) => continue,
                Ok(None) => return None,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// All messages of one UTC calendar day, in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailySlice {
    pub date: NaiveDate,
    pub messages: Vec<RawMessage>,
}

/// Out-of-order tolerance; later arrivals older than this are still routed
/// by their own timestamp but logged.
pub const REORDER_TOLERANCE_SECS: i64 = 600;

/// Partitions messages by UTC day. Slices come out in date order and keep
/// stream order within a day.
pub fn split_by_day<I>(messages: I) -> Vec<DailySlice>
where
    I: IntoIterator<Item = RawMessage>,
{
    let mut days: BTreeMap<NaiveDate, Vec<RawMessage>> = BTreeMap::new();
    let mut latest = i64::MIN;
    let mut late = 0usize;
    for m in messages {
        if m.created_at < latest.saturating_sub(REORDER_TOLERANCE_SECS) {
            late += 1;
        }
        latest = latest.max(m.created_at);
        days.entry(m.day()).or_default().push(m);
    }
    if late > 0 {
        log::warn!("{late} messages arrived more than {REORDER_TOLERANCE_SECS}s out of order");
    }
    days.into_iter()
        .map(|(date, messages)| DailySlice { date, messages })
        .collect()
}

/// Append-only, duplicate-free list of message ids written to a text sink,
/// one decimal id per line.
pub struct IdRegistry {
    seen: HashSet<u64>,
    order: Vec<u64>,
    path: PathBuf,
    sink: BufWriter<File>,
}

impl IdRegistry {
    /// Creates (truncates) the sink at `path`.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(IdRegistry {
            seen: HashSet::new(),
            order: Vec::new(),
            sink: BufWriter::new(f),
            path,
        })
    }

    /// Appends every id not registered before; returns how many were new.
    pub fn register_ids<'a, I>(&mut self, messages: I) -> Result<usize>
    where
        I: IntoIterator<Item = &'a RawMessage>,
    {
        let mut added = 0;
        for m in messages {
            if self.register(m.id)? {
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn register(&mut self, id: u64) -> Result<bool> {
        if !self.seen.insert(id) {
            return Ok(false);
        }
        self.order.push(id);
        writeln!(self.sink, "{id}").map_err(|e| Error::io(&self.path, e))?;
        Ok(true)
    }

    /// Ids in first-seen order.
    pub fn ids(&self) -> &[u64] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn flush(&mut self) -> Result<()> {
        self.sink.flush().map_err(|e| Error::io(&self.path, e))
    }
}

impl Drop for IdRegistry {
    fn drop(&mut self) {
        let _ = self.sink.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn reader(text: &str) -> Result<MessageReader<Cursor<Vec<u8>>>> {
        MessageReader::new(Cursor::new(text.as_bytes().to_vec()), "test")
    }

    #[test]
    fn parses_a_line() {
        let r = reader("{\"id\":1,\"created_at\":0,\"text\":\"привет мир\"}\n").unwrap();
        let msgs: Vec<_> = r.map(Result::unwrap).collect();
        assert_eq!(msgs, vec![RawMessage::new(1, 0, "привет мир")]);
        assert_eq!(
            msgs[0].timestamp().unwrap().to_rfc3339(),
            "1970-01-01T00:00:00+00:00"
        );
    }

    #[test]
    fn empty_stream() {
        let mut r = reader("").unwrap();
        assert!(r.next().is_none());
        assert_eq!(r.skipped(), 0);
        assert_eq!(r.lines_in(), 0);
    }

    #[test]
    fn skips_malformed_line() {
        let text = "{\"id\":1,\"created_at\":0,\"text\":\"a\"}\n{oops\n{\"id\":2,\"created_at\":5,\"text\":\"b\"}\n";
        let mut r = reader(text).unwrap();
        let msgs: Vec<_> = r.by_ref().map(Result::unwrap).collect();
        assert_eq!(msgs.len(), 2);
        assert_eq!(r.skipped(), 1);
    }

    #[test]
    fn missing_field_is_malformed() {
        let text = "{\"id\":1,\"created_at\":0,\"text\":\"a\"}\n{\"id\":2,\"text\":\"b\"}\n{\"id\":3,\"created_at\":0,\"text\":\"c\"}\n";
        let mut r = reader(text).unwrap();
        assert_eq!(r.by_ref().count(), 2);
        assert_eq!(r.skipped(), 1);
    }

    #[test]
    fn mostly_garbage_is_rejected() {
        let mut text = String::new();
        for i in 0..1200 {
            if i % 3 == 0 {
                text.push_str(&format!("{{\"id\":{i},\"created_at\":0,\"text\":\"x\"}}\n"));
            } else {
                text.push_str("not json\n");
            }
        }
        assert!(matches!(reader(&text), Err(Error::Format { .. })));
    }

    #[test]
    fn unreachable_socket() {
        // Port 1 on localhost is not listening in the test environment.
        let err = read_stream(&Source::parse("tcp://127.0.0.1:1"))
            .err()
            .unwrap();
        assert!(matches!(err, Error::Connection { .. }));
    }

    #[test]
    fn source_parsing() {
        assert_eq!(Source::parse("tcp://h:1"), Source::Tcp("h:1".into()));
        assert_eq!(Source::parse("a.jsonl"), Source::File("a.jsonl".into()));
    }

    #[test]
    fn day_boundary() {
        let day = 86_400;
        let a = RawMessage::new(1, day - 60, "a");
        let b = RawMessage::new(2, day + 60, "b");
        let slices = split_by_day(vec![a, b]);
        assert_eq!(slices.len(), 2);
        assert!(slices.iter().all(|s| s.messages.len() == 1));
        assert_eq!(slices[1].date, NaiveDate::from_ymd_opt(1970, 1, 2).unwrap());
    }

    #[test]
    fn same_day_single_slice() {
        let msgs = (0..10).map(|i| RawMessage::new(i, 3600 * i as i64, "x"));
        let slices = split_by_day(msgs);
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].messages.len(), 10);
    }

    #[test]
    fn negative_timestamps() {
        assert_eq!(day_of(-1), NaiveDate::from_ymd_opt(1969, 12, 31).unwrap());
        assert_eq!(day_of(0), NaiveDate::from_ymd_opt(1970, 1, 1).unwrap());
    }

    #[test]
    fn registry_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.txt");
        let mut reg = IdRegistry::create(&path).unwrap();
        let msgs: Vec<_> = [5, 7, 5]
            .iter()
            .map(|&i| RawMessage::new(i, 0, ""))
            .collect();
        assert_eq!(reg.register_ids(&msgs).unwrap(), 2);
        reg.flush().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "5\n7\n");
    }

    #[test]
    fn registry_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.txt");
        let mut reg = IdRegistry::create(&path).unwrap();
        reg.register_ids(&[]).unwrap();
        reg.flush().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn registry_unwritable_sink() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("ids.txt");
        assert!(matches!(IdRegistry::create(path), Err(Error::Io { .. })));
    }

    #[test]
    fn registry_random_ids_match_set_size() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ids: Vec<u64> = (0..1000).map(|_| rng.gen_range(0..600)).collect();
        let distinct: HashSet<u64> = ids.iter().copied().collect();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.txt");
        let mut reg = IdRegistry::create(&path).unwrap();
        for &id in &ids {
            reg.register(id).unwrap();
        }
        reg.flush().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), distinct.len());
    }

    proptest! {
        #[test]
        fn conservation(lines in prop::collection::vec((any::<bool>(), 0u64..1000, 0i64..1_000_000), 0..200)) {
            let mut text = String::new();
            let mut valid = 0;
            for (ok, id, ts) in &lines {
                if *ok {
                    valid += 1;
                    text.push_str(&format!("{{\"id\":{id},\"created_at\":{ts},\"text\":\"t\"}}\n"));
                } else {
                    text.push_str("{\"id\":\n");
                }
            }
            match reader(&text) {
                Ok(mut r) => {
                    let n = r.by_ref().count();
                    prop_assert_eq!(n, valid);
                    prop_assert_eq!(n + r.skipped(), r.lines_in());
                    prop_assert_eq!(r.lines_in(), lines.len());
                }
                Err(_) => prop_assert!(2 * (lines.len() - valid) > lines.len()),
            }
        }

        #[test]
        fn split_is_a_partition(ts in prop::collection::vec(-1_000_000i64..10_000_000, 0..300)) {
            let msgs: Vec<_> = ts.iter().enumerate().map(|(i, &t)| RawMessage::new(i as u64, t, "")).collect();
            let slices = split_by_day(msgs.clone());
            let mut seen: Vec<u64> = Vec::new();
            for s in &slices {
                for m in &s.messages {
                    prop_assert_eq!(m.day(), s.date);
                    seen.push(m.id);
                }
            }
            seen.sort_unstable();
            let expected: Vec<u64> = (0..msgs.len() as u64).collect();
            prop_assert_eq!(seen, expected);
            prop_assert!(slices.windows(2).all(|w| w[0].date < w[1].date));
        }

        #[test]
        fn registry_first_seen_order(ids in prop::collection::vec(0u64..50, 0..100)) {
            let dir = tempfile::tempdir().unwrap();
            let mut reg = IdRegistry::create(dir.path().join("ids")).unwrap();
            for &id in &ids {
                reg.register(id).unwrap();
            }
            let mut expected = Vec::new();
            for id in ids {
                if !expected.contains(&id) {
                    expected.push(id);
                }
            }
            prop_assert_eq!(reg.ids(), &expected[..]);
        }
    }
}
