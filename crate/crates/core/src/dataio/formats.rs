//! On-disk formats.
//!
//! * waveform: `WV1D`, `u32` LE sample count, then `f32` LE samples
//! * events: CSV `begin,end`, half-open integer sample indices, sorted
//! * detections: CSV `begin,end,score,scale`, score with 6 decimals,
//!   scale `-1` for detections that do not come from a network scale
//! * manifest: JSON tying a dataset's files, splits and generator together

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::synth::{validate_events, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::geomeval::{Detection, Interval};

pub const WAVEFORM_MAGIC: &[u8; 4] = b"WV1D";

pub fn write_waveform(path: &Path, samples: &[f32]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(WAVEFORM_MAGIC).map_err(io)?;
    let count = u32::try_from(samples.len())
        .map_err(|_| Error::InvalidArgument("waveform longer than u32::MAX samples".into()))?;
    w.write_u32::<LittleEndian>(count).map_err(io)?;
    for &s in samples {
        w.write_f32::<LittleEndian>(s).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn parse_waveform(bytes: &[u8]) -> Result<Vec<f32>> {
    let err = |offset: usize, message: String| Error::Parse {
        what: "waveform",
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 || &bytes[..4] != WAVEFORM_MAGIC {
        return Err(err(0, "bad magic, expected WV1D".into()));
    }
    let mut rest = &bytes[4..];
    let count = rest
        .read_u32::<LittleEndian>()
        .map_err(|_| err(4, "truncated sample count".into()))? as usize;
    let body = &bytes[8..];
    if body.len() < count * 4 {
        return Err(err(
            8 + body.len() / 4 * 4,
            format!(
                "truncated: header says {count} samples, file holds {}",
                body.len() / 4
            ),
        ));
    }
    if body.len() > count * 4 {
        return Err(err(8 + count * 4, "trailing bytes after samples".into()));
    }
    let mut out = Vec::with_capacity(count);
    let mut cursor = body;
    for _ in 0..count {
        out.push(cursor.read_f32::<LittleEndian>().expect("length checked"));
    }
    Ok(out)
}

pub fn read_waveform(path: &Path) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_waveform(&bytes)
}

fn csv_error(what: &'static str, offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        what,
        offset,
        message: message.into(),
    }
}

fn check_header(
    what: &'static str,
    reader: &mut csv::Reader<&[u8]>,
    expected: &[&str],
) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| csv_error(what, 0, e.to_string()))?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(csv_error(
            what,
            0,
            format!("expected header '{}'", expected.join(",")),
        ));
    }
    Ok(())
}

pub fn parse_events(text: &str) -> Result<Vec<Interval>> {
    const WHAT: &str = "events";
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(WHAT, &mut reader, &["begin", "end"])?;
    let mut events: Vec<Interval> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            csv_error(WHAT, off, e.to_string())
        })?;
        let off = rec.position().map_or(0, |p| p.byte());
        if rec.len() != 2 {
            return Err(csv_error(
                WHAT,
                off,
                format!("expected 2 fields, got {}", rec.len()),
            ));
        }
        let num = |i: usize| -> Result<i64> {
            rec[i]
                .parse()
                .map_err(|_| csv_error(WHAT, off, format!("'{}' is not an integer", &rec[i])))
        };
        let (begin, end) = (num(0)?, num(1)?);
        if begin >= end {
            return Err(csv_error(WHAT, off, format!("begin {begin} >= end {end}")));
        }
        if let Some(prev) = events.last() {
            if begin < prev.end {
                return Err(csv_error(
                    WHAT,
                    off,
                    format!("event [{begin}, {end}) unsorted or overlapping previous {prev}"),
                ));
            }
        }
        events.push(Interval { begin, end });
    }
    Ok(events)
}

pub fn read_events(path: &Path) -> Result<Vec<Interval>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text)
}

pub fn format_events(events: &[Interval]) -> String {
    let mut s = String::from("begin,end\n");
    for e in events {
        s.push_str(&format!("{},{}\n", e.begin, e.end));
    }
    s
}

pub fn write_events(path: &Path, events: &[Interval]) -> Result<()> {
    fs::write(path, format_events(events)).map_err(|e| Error::io(path, e))
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::from("begin,end,score,scale\n");
    for d in dets {
        let scale = d.scale_index.map_or(-1, |i| i as i64);
        s.push_str(&format!(
            "{},{},{:.6},{}\n",
            d.interval.begin, d.interval.end, d.score, scale
        ));
    }
    s
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    fs::write(path, format_detections(dets)).map_err(|e| Error::io(path, e))
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    const WHAT: &str = "detections";
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(WHAT, &mut reader, &["begin", "end", "score", "scale"])?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            csv_error(WHAT, off, e.to_string())
        })?;
        let off = rec.position().map_or(0, |p| p.byte());
        if rec.len() != 4 {
            return Err(csv_error(
                WHAT,
                off,
                format!("expected 4 fields, got {}", rec.len()),
            ));
        }
        let bad = |i: usize| csv_error(WHAT, off, format!("bad field '{}'", &rec[i]));
        let begin: i64 = rec[0].parse().map_err(|_| bad(0))?;
        let end: i64 = rec[1].parse().map_err(|_| bad(1))?;
        let score: f64 = rec[2].parse().map_err(|_| bad(2))?;
        let scale: i64 = rec[3].parse().map_err(|_| bad(3))?;
        if begin >= end {
            return Err(csv_error(WHAT, off, format!("begin {begin} >= end {end}")));
        }
        out.push(Detection::new(
            Interval { begin, end },
            score,
            usize::try_from(scale).ok(),
        ));
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Paths are relative to the manifest's directory.
    pub waveform: String,
    pub events: String,
    pub splits: SplitIndices,
    pub generator_config: Option<SynthConfig>,
    pub seed: Option<u64>,
}

/// Writes `waveform.wv1d`, `events.csv` and `manifest.json` into `dir`.
pub fn save_dataset(
    dir: &Path,
    dataset: &Dataset,
    generator: Option<&SynthConfig>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_waveform(&dir.join("waveform.wv1d"), &dataset.waveform)?;
    write_events(&dir.join("events.csv"), &dataset.events)?;
    let manifest = Manifest {
        waveform: "waveform.wv1d".into(),
        events: "events.csv".into(),
        splits: SplitIndices {
            train: dataset.train.clone(),
            val: dataset.val.clone(),
            test: dataset.test.clone(),
        },
        generator_config: generator.cloned(),
        seed: generator.map(|g| g.seed),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let waveform = read_waveform(&base.join(&manifest.waveform))?;
    let events = read_events(&base.join(&manifest.events))?;
    validate_events(&events, waveform.len()).map_err(|e| Error::Parse {
        what: "manifest",
        offset: 0,
        message: e.to_string(),
    })?;
    let n = events.len();
    let s = manifest.splits;
    if let Some(bad) = s
        .train
        .iter()
        .chain(&s.val)
        .chain(&s.test)
        .find(|&&i| i >= n)
    {
        return Err(Error::Parse {
            what: "manifest",
            offset: 0,
            message: format!("split references event {bad} but only {n} events exist"),
        });
    }
    Ok(Dataset {
        waveform,
        events,
        train: s.train,
        val: s.val,
        test: s.test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.wv1d");
        let samples = vec![0.0f32, -1.5, f32::MAX, 3.25e-7];
        write_waveform(&p, &samples).unwrap();
        assert_eq!(read_waveform(&p).unwrap(), samples);

        write_waveform(&p, &[]).unwrap();
        assert!(read_waveform(&p).unwrap().is_empty());

        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            parse_waveform(&bytes),
            Err(Error::Parse { offset: 0, .. })
        ));

        let mut bytes = WAVEFORM_MAGIC.to_vec();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0]);
        match parse_waveform(&bytes) {
            Err(Error::Parse {
                offset, message, ..
            }) => {
                assert_eq!(offset, 12);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn events_validation() {
        let ok = parse_events("begin,end\n0,10\n10,20\n").unwrap();
        assert_eq!(ok.len(), 2);
        let err = parse_events("begin,end\n0,10\n30,30\n").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 15, .. }), "{err}");
        assert!(parse_events("begin,end\n20,30\n0,10\n").is_err());
        assert!(parse_events("begin,end\n0,10\n5,15\n").is_err());
        assert!(parse_events("start,stop\n0,10\n").is_err());
        assert!(parse_events("begin,end\n").unwrap().is_empty());
    }

    #[test]
    fn detections_format() {
        let d = [
            Detection::new(Interval { begin: 5, end: 9 }, 0.5, Some(2)),
            Detection::new(Interval { begin: 10, end: 20 }, 0.123456789, None),
        ];
        let text = format_detections(&d);
        assert_eq!(
            text,
            "begin,end,score,scale\n5,9,0.500000,2\n10,20,0.123457,-1\n"
        );
        let back = parse_detections(&text).unwrap();
        assert_eq!(back[1].scale_index, None);
        assert_eq!(back[0].interval, d[0].interval);
    }
}
