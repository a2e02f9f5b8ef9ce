//! Bit-packed shot records and their file formats (see `docs/FORMATS.md`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::sequence::SequenceKind;

pub const MAGIC: &[u8; 8] = b"QPBSHOT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Sequence(SequenceKind),
    Ramsey,
}

impl RecordKind {
    pub fn sequence(&self) -> Option<SequenceKind> {
        match self {
            RecordKind::Sequence(k) => Some(*k),
            RecordKind::Ramsey => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RecordKind::Sequence(k) => k.label(),
            RecordKind::Ramsey => "ramsey",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    /// Absolute trigger time, s.
    pub time: f64,
    /// Time of readout `pre_cycles` relative to the trigger, s.
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kev: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyMeta {
    pub n_delays: usize,
    pub delay_step: f64,
    pub detuning_hz: f64,
    pub group_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub format_version: u32,
    pub kind: RecordKind,
    pub n_qubits: usize,
    #[serde(default)]
    pub qubit_labels: Vec<String>,
    pub cycles_per_trigger: usize,
    /// Readouts in each window before the one closest to the trigger.
    pub pre_cycles: usize,
    /// Time between readouts, s.
    pub cadence: f64,
    pub t1: f64,
    pub t2: f64,
    /// Alternation phase of sequence C (A on cycles with (k + phase) even).
    #[serde(default)]
    pub c_phase: u8,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramsey: Option<RamseyMeta>,
    pub triggers: Vec<Trigger>,
}

impl RecordHeader {
    pub fn words_per_row(&self) -> usize {
        self.cycles_per_trigger.div_ceil(64)
    }

    /// Readout time of `cycle` relative to trigger `trig`.
    pub fn time_of(&self, trig: usize, cycle: usize) -> f64 {
        (cycle as f64 - self.pre_cycles as f64) * self.cadence + self.triggers[trig].offset
    }
}

/// Binary outcomes, one window of `cycles_per_trigger` readouts per trigger
/// and qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub header: RecordHeader,
    words: Vec<u64>,
}

impl ShotRecord {
    pub fn new(header: RecordHeader) -> Self {
        let n = header.triggers.len() * header.n_qubits * header.words_per_row();
        Self { header, words: vec![0; n] }
    }

    pub fn n_triggers(&self) -> usize {
        self.header.triggers.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.header.n_qubits
    }

    pub fn cycles(&self) -> usize {
        self.header.cycles_per_trigger
    }

    fn row_start(&self, trig: usize, qubit: usize) -> usize {
        (trig * self.header.n_qubits + qubit) * self.header.words_per_row()
    }

    pub fn row_words(&self, trig: usize, qubit: usize) -> &[u64] {
        let s = self.row_start(trig, qubit);
        &self.words[s..s + self.header.words_per_row()]
    }

    pub fn set_row_words(&mut self, trig: usize, qubit: usize, words: &[u64]) -> Result<()> {
        let w = self.header.words_per_row();
        if words.len() != w {
            return Err(Error::Size(format!("row has {} words, expected {w}", words.len())));
        }
        let s = self.row_start(trig, qubit);
        self.words[s..s + w].copy_from_slice(words);
        Ok(())
    }

    #[inline]
    pub fn bit(&self, trig: usize, qubit: usize, cycle: usize) -> bool {
        let s = self.row_start(trig, qubit);
        (self.words[s + cycle / 64] >> (cycle % 64)) & 1 == 1
    }

    pub fn set_bit(&mut self, trig: usize, qubit: usize, cycle: usize, v: bool) {
        let s = self.row_start(trig, qubit) + cycle / 64;
        let m = 1u64 << (cycle % 64);
        if v {
            self.words[s] |= m;
        } else {
            self.words[s] &= !m;
        }
    }

    /// Outcomes of one window as 0/1 bytes.
    pub fn bits(&self, trig: usize, qubit: usize) -> Vec<u8> {
        let row = self.row_words(trig, qubit);
        (0..self.cycles()).map(|c| ((row[c / 64] >> (c % 64)) & 1) as u8).collect()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.words.len() * 8);
        for word in &self.words {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a shot record (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: RecordHeader = serde_json::from_slice(&header).map_err(|e| Error::Format(format!("record header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported record version {}", header.format_version)));
        }
        let n = header.triggers.len() * header.n_qubits * header.words_per_row();
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != n * 8 {
            return Err(Error::Format(format!("payload has {} bytes, header implies {}", raw.len(), n * 8)));
        }
        let words = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { header, words })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(f))
    }

    /// One row per (trigger, qubit) with the window as a 0/1 string.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trigger", "qubit", "bits"])?;
        for t in 0..self.n_triggers() {
            for q in 0..self.n_qubits() {
                let s: String = self.bits(t, q).iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
                out.write_record([t.to_string(), q.to_string(), s])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_triggers_csv<W: Write>(&self, w: W) -> Result<()> {
        write_triggers_csv(&self.header.triggers, w)
    }
}

pub fn write_triggers_csv<W: Write>(triggers: &[Trigger], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "time", "offset", "energy_kev"])?;
    for (i, t) in triggers.iter().enumerate() {
        out.write_record([
            i.to_string(),
            format!("{:e}", t.time),
            format!("{:e}", t.offset),
            t.energy_kev.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_triggers_csv`]; an empty energy field means none.
pub fn read_triggers_csv<R: Read>(r: R) -> Result<Vec<Trigger>> {
    let mut rdr = csv::Reader::from_reader(r);
    let h = rdr.headers()?.clone();
    if h.iter().map(str::trim).collect::<Vec<_>>() != ["index", "time", "offset", "energy_kev"] {
        return Err(Error::Format("trigger CSV needs columns index,time,offset,energy_kev".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Format(format!("trigger CSV row {}: bad field {i}", out.len())))
        };
        let energy = match rec.get(3).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(f(3)?),
        };
        out.push(Trigger { time: f(1)?, offset: f(2)?, energy_kev: energy });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(cycles: usize) -> RecordHeader {
        RecordHeader {
            format_version: FORMAT_VERSION,
            kind: RecordKind::Sequence(SequenceKind::C),
            n_qubits: 2,
            qubit_labels: vec!["q0".into(), "q1".into()],
            cycles_per_trigger: cycles,
            pre_cycles: 3,
            cadence: 6.95e-6,
            t1: 3e-6,
            t2: 3.45e-6,
            c_phase: 1,
            seed: 9,
            ramsey: None,
            triggers: vec![
                Trigger { time: 0.0, offset: 0.0, energy_kev: None },
                Trigger { time: 0.1, offset: 1e-6, energy_kev: Some(290.0) },
            ],
        }
    }

    #[test]
    fn binary_round_trip() {
        let mut r = ShotRecord::new(header(130));
        for c in (0..130).step_by(7) {
            r.set_bit(1, 1, c, true);
        }
        r.set_bit(0, 0, 129, true);
        let mut buf = Vec::new();
        r.write_binary(&mut buf).unwrap();
        let back = ShotRecord::read_binary(&buf[..]).unwrap();
        assert_eq!(back, r);
        assert!(back.bit(0, 0, 129) && back.bit(1, 1, 7) && !back.bit(1, 1, 8));
    }

    #[test]
    fn truncated_payload_rejected() {
        let r = ShotRecord::new(header(64));
        let mut buf = Vec::new();
        r.write_binary(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(ShotRecord::read_binary(&buf[..]), Err(Error::Format(_))));
    }
}
