//! Heralded relaxation/excitation flags.
//!
//! A readout following a |0⟩ readout is classified by whether X_π was
//! applied in between: with X_π, reading |0⟩ again is a relaxation; without,
//! reading |1⟩ is an excitation. Readouts following |1⟩ are not classified.

use crate::error::{Error, Result};
use crate::measurement::record::ShotRecord;
use crate::measurement::sequence::SequenceKind;

/// Per-readout counts summed over qubits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeraldSeries {
    /// Cycle index of the first entry.
    pub start_cycle: u64,
    pub n_qubits: usize,
    pub relax_flags: Vec<u32>,
    pub relax_valid: Vec<u32>,
    pub exc_flags: Vec<u32>,
    pub exc_valid: Vec<u32>,
}

fn ratio(f: &[u32], v: &[u32]) -> Vec<f64> {
    f.iter()
        .zip(v)
        .map(|(&f, &v)| if v == 0 { f64::NAN } else { f as f64 / v as f64 })
        .collect()
}

impl HeraldSeries {
    pub fn len(&self) -> usize {
        self.relax_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relax_flags.is_empty()
    }

    /// Relaxation flags per valid qubit; NaN where no qubit was valid.
    pub fn relax_probability(&self) -> Vec<f64> {
        ratio(&self.relax_flags, &self.relax_valid)
    }

    pub fn excite_probability(&self) -> Vec<f64> {
        ratio(&self.exc_flags, &self.exc_valid)
    }

    /// Accumulate another series of equal length (e.g. another trigger).
    pub fn accumulate(&mut self, other: &HeraldSeries) -> Result<()> {
        if self.is_empty() && self.n_qubits == 0 {
            *self = other.clone();
            return Ok(());
        }
        if other.len() != self.len() {
            return Err(Error::Size(format!("series lengths {} and {}", self.len(), other.len())));
        }
        let add = |a: &mut Vec<u32>, b: &[u32]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.relax_flags, &other.relax_flags);
        add(&mut self.relax_valid, &other.relax_valid);
        add(&mut self.exc_flags, &other.exc_flags);
        add(&mut self.exc_valid, &other.exc_valid);
        Ok(())
    }
}

/// Classify readouts `bits[q][k]` (cycle index `start_cycle + k`). `prev[q]`
/// is the readout preceding the first entry, if any.
pub fn herald_bits(kind: SequenceKind, c_phase: u8, start_cycle: u64, prev: &[Option<u8>], bits: &[&[u8]]) -> Result<HeraldSeries> {
    if kind.is_active_reset() {
        return Err(Error::Invalid(format!("heralding needs sequence A, B or C, not {kind}")));
    }
    if prev.len() != bits.len() {
        return Err(Error::Size("one previous readout per qubit is required".into()));
    }
    let n = bits.first().map_or(0, |b| b.len());
    if bits.iter().any(|b| b.len() != n) {
        return Err(Error::Size("qubit rows differ in length".into()));
    }
    let mut s = HeraldSeries {
        start_cycle,
        n_qubits: bits.len(),
        relax_flags: vec![0; n],
        relax_valid: vec![0; n],
        exc_flags: vec![0; n],
        exc_valid: vec![0; n],
    };
    for k in 0..n {
        let cycle = start_cycle + k as u64;
        // X_π (if any) sits in the cycle ending at this readout.
        let x = match cycle.checked_sub(1) {
            Some(c) => kind.applies_x(c, c_phase),
            // Cycle −1 has the parity of cycle 1.
            None => kind.applies_x(1, c_phase),
        }
        .expect("heralded kinds have a fixed X pattern");
        for (q, row) in bits.iter().enumerate() {
            let before = if k == 0 { prev[q] } else { Some(row[k - 1]) };
            if before != Some(0) {
                continue;
            }
            if x {
                s.relax_valid[k] += 1;
                s.relax_flags[k] += u32::from(row[k] == 0);
            } else {
                s.exc_valid[k] += 1;
                s.exc_flags[k] += u32::from(row[k] == 1);
            }
        }
    }
    Ok(s)
}

/// Heralded flags of one trigger window of a record, summed over qubits.
pub fn herald_errors(record: &ShotRecord, trigger: usize) -> Result<HeraldSeries> {
    let kind = record
        .header
        .kind
        .sequence()
        .ok_or_else(|| Error::Invalid("heralding needs a sequence record, not Ramsey".into()))?;
    if trigger >= record.n_triggers() {
        return Err(Error::Invalid(format!("trigger {trigger} out of range")));
    }
    let rows: Vec<Vec<u8>> = (0..record.n_qubits()).map(|q| record.bits(trigger, q)).collect();
    let refs: Vec<&[u8]> = rows.iter().map(|r| r.as_slice()).collect();
    let prev = vec![None; rows.len()];
    herald_bits(kind, record.header.c_phase, 0, &prev, &refs)
}

/// Flags summed over all triggers of a record.
pub fn herald_all(record: &ShotRecord) -> Result<HeraldSeries> {
    let mut acc = HeraldSeries::default();
    for t in 0..record.n_triggers() {
        acc.accumulate(&herald_errors(record, t)?)?;
    }
    Ok(acc)
}
