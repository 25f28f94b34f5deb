//! Detector time tags and their file formats.
//!
//! QTT1 binary layout, little-endian:
//!
//! ```text
//! b"QTTAGS01" | u32 channel_count | { u8 channel, u64 timestamp_ps }*
//! ```
//!
//! Records are written in time order. The CSV form has the header
//! `channel,timestamp_ps` with channel names `A1`, `A2`, `B1`, `B2`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"QTTAGS01";
const RECORD_LEN: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    A1,
    A2,
    B1,
    B2,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::A1, Channel::A2, Channel::B1, Channel::B2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Result<Channel> {
        Channel::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::TagFormat(format!("unknown channel {i}")))
    }

    /// Analyzer side (0 = A) and detector port (1 or 2).
    pub fn side_port(self) -> (u8, u8) {
        match self {
            Channel::A1 => (0, 1),
            Channel::A2 => (0, 2),
            Channel::B1 => (1, 1),
            Channel::B2 => (1, 2),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Channel::A1 => "A1",
            Channel::A2 => "A2",
            Channel::B1 => "B1",
            Channel::B2 => "B2",
        };
        f.write_str(s)
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Channel> {
        match s.trim() {
            "A1" | "0" => Ok(Channel::A1),
            "A2" | "1" => Ok(Channel::A2),
            "B1" | "2" => Ok(Channel::B1),
            "B2" | "3" => Ok(Channel::B2),
            other => Err(Error::TagFormat(format!("unknown channel {other:?}"))),
        }
    }
}

/// Strictly increasing picosecond timestamps of one channel.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    timestamps: Vec<u64>,
}

/// First index whose value does not exceed its predecessor.
pub fn first_unsorted(ts: &[u64]) -> Option<usize> {
    ts.windows(2).position(|w| w[1] <= w[0]).map(|i| i + 1)
}

impl TimeTagStream {
    pub fn new(timestamps: Vec<u64>) -> Result<Self> {
        match first_unsorted(&timestamps) {
            Some(index) => Err(Error::Unsorted { index }),
            None => Ok(TimeTagStream { timestamps }),
        }
    }

    pub(crate) fn new_unchecked(timestamps: Vec<u64>) -> Self {
        debug_assert!(first_unsorted(&timestamps).is_none());
        TimeTagStream { timestamps }
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.timestamps
    }

    /// Shifts every tag by `offset` picoseconds.
    pub fn shifted(&self, offset: u64) -> Result<Self> {
        let ts = self
            .timestamps
            .iter()
            .map(|t| {
                t.checked_add(offset)
                    .ok_or_else(|| Error::InvalidParameter("timestamp overflow".into()))
            })
            .collect::<Result<_>>()?;
        Ok(TimeTagStream { timestamps: ts })
    }
}

/// The four detector streams of one acquisition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub streams: [TimeTagStream; 4],
}

impl TagSet {
    pub fn get(&self, c: Channel) -> &TimeTagStream {
        &self.streams[c.index()]
    }

    pub fn total(&self) -> usize {
        self.streams.iter().map(|s| s.len()).sum()
    }

    /// `(channel, timestamp)` in time order, channel order breaking ties.
    pub fn merged(&self) -> Vec<(Channel, u64)> {
        let mut all: Vec<(u64, Channel)> = Channel::ALL
            .iter()
            .flat_map(|&c| self.get(c).as_slice().iter().map(move |&t| (t, c)))
            .collect();
        all.sort_unstable();
        all.into_iter().map(|(t, c)| (c, t)).collect()
    }

    fn from_records<I>(records: I) -> Result<TagSet>
    where
        I: IntoIterator<Item = Result<(Channel, u64)>>,
    {
        let mut raw: [Vec<u64>; 4] = Default::default();
        for r in records {
            let (c, t) = r?;
            raw[c.index()].push(t);
        }
        let mut streams: [TimeTagStream; 4] = Default::default();
        for (i, ts) in raw.into_iter().enumerate() {
            streams[i] = TimeTagStream::new(ts)
                .map_err(|e| e.context(format!("channel {}", Channel::ALL[i])))?;
        }
        Ok(TagSet { streams })
    }

    pub fn write_qtt<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&4u32.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.total() * RECORD_LEN);
        for (c, t) in self.merged() {
            buf.push(c.index() as u8);
            buf.extend_from_slice(&t.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_qtt<R: Read>(mut input: R) -> Result<TagSet> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::parse_qtt(&bytes)
    }

    pub fn parse_qtt(bytes: &[u8]) -> Result<TagSet> {
        if bytes.len() < 12 {
            return Err(Error::TagFormat("file shorter than the header".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::TagFormat("bad magic".into()));
        }
        let channels = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if channels == 0 || channels > 4 {
            return Err(Error::TagFormat(format!(
                "channel count {channels} not in 1..=4"
            )));
        }
        let body = &bytes[12..];
        if !body.len().is_multiple_of(RECORD_LEN) {
            return Err(Error::TagFormat(format!(
                "truncated record at byte {}",
                12 + body.len() / RECORD_LEN * RECORD_LEN
            )));
        }
        Self::from_records(body.chunks_exact(RECORD_LEN).map(|r| {
            if r[0] as u32 >= channels {
                return Err(Error::TagFormat(format!(
                    "channel {} outside declared count {channels}",
                    r[0]
                )));
            }
            let t = u64::from_le_bytes(r[1..].try_into().expect("8 bytes"));
            Ok((Channel::from_index(r[0])?, t))
        }))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["channel", "timestamp_ps"])?;
        for (c, t) in self.merged() {
            w.write_record([c.to_string(), t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<TagSet> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "channel" || &headers[1] != "timestamp_ps" {
            return Err(Error::TagFormat(
                "CSV header must be channel,timestamp_ps".into(),
            ));
        }
        Self::from_records(r.records().map(|rec| {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::TagFormat(format!(
                    "record with {} fields",
                    rec.len()
                )));
            }
            let c: Channel = rec[0].parse()?;
            let t = rec[1]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::TagFormat(format!("timestamp {:?}: {e}", &rec[1])))?;
            Ok((c, t))
        }))
    }

    /// Reads either format, by magic.
    pub fn read_any(bytes: &[u8]) -> Result<TagSet> {
        if bytes.starts_with(MAGIC) {
            Self::parse_qtt(bytes)
        } else {
            Self::read_csv(bytes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TagSet {
        TagSet {
            streams: [
                TimeTagStream::new(vec![5, 1070, 2140]).unwrap(),
                TimeTagStream::new(vec![]).unwrap(),
                TimeTagStream::new(vec![1070, 9000]).unwrap(),
                TimeTagStream::new(vec![u64::MAX]).unwrap(),
            ],
        }
    }

    #[test]
    fn qtt_round_trip() {
        let mut buf = Vec::new();
        sample().write_qtt(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf.len(), 12 + 6 * RECORD_LEN);
        assert_eq!(TagSet::parse_qtt(&buf).unwrap(), sample());
        assert_eq!(TagSet::read_any(&buf).unwrap(), sample());
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("channel,timestamp_ps\nA1,5\n"));
        assert_eq!(TagSet::read_any(&buf).unwrap(), sample());
    }

    #[test]
    fn rejects_malformed() {
        assert!(TagSet::parse_qtt(b"QTTAGS0").is_err());
        assert!(TagSet::parse_qtt(b"QTTAGS02\x04\0\0\0").is_err());
        let mut buf = Vec::new();
        sample().write_qtt(&mut buf).unwrap();
        assert!(TagSet::parse_qtt(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[12] = 7;
        assert!(TagSet::parse_qtt(&bad).is_err());
        assert!(TagSet::read_csv("chan,t\nA1,4\n".as_bytes()).is_err());
        assert!(TagSet::read_csv("channel,timestamp_ps\nC3,4\n".as_bytes()).is_err());
        assert!(TagSet::read_csv("channel,timestamp_ps\nA1,-4\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_unsorted_channel() {
        let e = TagSet::read_csv("channel,timestamp_ps\nB1,9\nB1,3\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("B1"));
        assert!(matches!(
            TimeTagStream::new(vec![1, 1]),
            Err(Error::Unsorted { index: 1 })
        ));
    }
}
