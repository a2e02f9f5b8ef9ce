//! Trajectory CSV and the kernel-cache binary layout.
//!
//! Kernel cache layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `QPKCACHE` |
//! | 4 | version (u32, currently 1) |
//! | 8 | grid step, K (f64) |
//! | 24 | gaps Δ1, Δ2, Δ3, GHz (f64 each) |
//! | 8 | entry count n (u64) |
//! | 40·n | entries: T (f64), τ3⁻¹, τ2>⁻¹, τ2<⁻¹, τ_Rlx⁻¹ (f64 each) |
//!
//! Heralded stream layout, little-endian: magic `QPBHERLD`, version (u32),
//! qubit count (u32), cadence in s (f64), then one (relaxation flags,
//! valid qubits) byte pair per readout until end of file.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::measurement::HeraldSeries;
use crate::qp::{KernelGaps, QpState, TauTable, Trajectory, TrajectoryPoint};

pub const TRAJECTORY_COLUMNS: [&str; 10] = ["t", "temperature", "x_2lt", "x_2gt", "x_3", "x_l", "x_r", "p_0", "gamma_up", "gamma_down"];

pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_COLUMNS)?;
    for p in points {
        let s = p.state;
        let row = [p.t, p.temperature, s.x_2lt, s.x_2gt, s.x_3, s.x_l, s.x_r, s.p_0, p.gamma_up, p.gamma_down];
        out.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Vec<TrajectoryPoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let h = rdr.headers()?.clone();
    if h.iter().map(str::trim).collect::<Vec<_>>() != TRAJECTORY_COLUMNS {
        return Err(Error::Format(format!("trajectory CSV needs columns {}", TRAJECTORY_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut v = [0.0; 10];
        for (i, x) in v.iter_mut().enumerate() {
            *x = rec
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("trajectory row {}: bad `{}`", out.len(), TRAJECTORY_COLUMNS[i])))?;
        }
        out.push(TrajectoryPoint {
            t: v[0],
            temperature: v[1],
            state: QpState::from_slice(&v[2..8]),
            gamma_up: v[8],
            gamma_down: v[9],
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("trajectory CSV has no rows".into()));
    }
    Ok(out)
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_trajectory_csv(&self.points, w)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"QPKCACHE";
const CACHE_VERSION: u32 = 1;

pub fn dump_kernel_cache<W: Write>(table: &TauTable, mut w: W) -> Result<()> {
    let entries = table.filled();
    let g = table.gaps();
    let mut buf = Vec::with_capacity(52 + 40 * entries.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for v in [table.step(), g.d1, g.d2, g.d3] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (t, k) in &entries {
        buf.extend_from_slice(&t.to_le_bytes());
        for v in k {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Cache header and entries as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCache {
    pub step: f64,
    pub gaps: KernelGaps,
    pub entries: Vec<(f64, [f64; 4])>,
}

pub fn read_kernel_cache<R: Read>(mut r: R) -> Result<KernelCache> {
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() < 52 || &raw[..8] != CACHE_MAGIC {
        return Err(Error::Format("not a kernel cache (bad magic or truncated header)".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(raw[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(raw[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(8);
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported kernel cache version {version}")));
    }
    let n = u64::from_le_bytes(raw[44..52].try_into().expect("8 bytes")) as usize;
    if raw.len() != 52 + 40 * n {
        return Err(Error::Format(format!("kernel cache has {} bytes, header implies {}", raw.len(), 52 + 40 * n)));
    }
    let entries = (0..n)
        .map(|i| {
            let o = 52 + 40 * i;
            (f64_at(o), std::array::from_fn(|k| f64_at(o + 8 + 8 * k)))
        })
        .collect();
    Ok(KernelCache {
        step: f64_at(12),
        gaps: KernelGaps { d1: f64_at(20), d2: f64_at(28), d3: f64_at(36) },
        entries,
    })
}

/// Load a dump into `table`, refusing one built for another grid or gaps.
pub fn load_kernel_cache<R: Read>(table: &TauTable, r: R) -> Result<usize> {
    let cache = read_kernel_cache(r)?;
    if cache.step != table.step() || cache.gaps != table.gaps() {
        return Err(Error::Invalid(format!(
            "kernel cache built for step {} K and gaps {:?}, table has step {} K and gaps {:?}",
            cache.step,
            cache.gaps,
            table.step(),
            table.gaps()
        )));
    }
    table.preload(&cache.entries);
    Ok(cache.entries.len())
}

const STREAM_MAGIC: &[u8; 8] = b"QPBHERLD";
const STREAM_VERSION: u32 = 1;

/// Appends heralded relaxation counts to a stream file.
pub struct HeraldStreamWriter<W: Write> {
    out: W,
    n_qubits: usize,
    readouts: u64,
}

impl<W: Write> HeraldStreamWriter<W> {
    pub fn new(mut out: W, n_qubits: usize, cadence: f64) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 255 {
            return Err(Error::range("n_qubits", "stream files hold 1 to 255 qubits"));
        }
        out.write_all(STREAM_MAGIC)?;
        out.write_all(&STREAM_VERSION.to_le_bytes())?;
        out.write_all(&(n_qubits as u32).to_le_bytes())?;
        out.write_all(&cadence.to_le_bytes())?;
        Ok(Self { out, n_qubits, readouts: 0 })
    }

    pub fn push(&mut self, s: &HeraldSeries) -> Result<()> {
        if s.n_qubits != self.n_qubits {
            return Err(Error::Size(format!("series has {} qubits, stream {}", s.n_qubits, self.n_qubits)));
        }
        let mut buf = Vec::with_capacity(2 * s.len());
        for (&f, &v) in s.relax_flags.iter().zip(&s.relax_valid) {
            buf.push(f as u8);
            buf.push(v as u8);
        }
        self.out.write_all(&buf)?;
        self.readouts += s.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush()?;
        Ok(self.readouts)
    }
}

/// Reads a stream file chunk by chunk as relaxation-only herald series.
pub struct HeraldStreamReader<R: Read> {
    input: R,
    pub n_qubits: usize,
    pub cadence: f64,
    next_cycle: u64,
}

impl<R: Read> HeraldStreamReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut head = [0u8; 24];
        input.read_exact(&mut head).map_err(|_| Error::Format("not a herald stream (truncated header)".into()))?;
        if &head[..8] != STREAM_MAGIC {
            return Err(Error::Format("not a herald stream (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
        if version != STREAM_VERSION {
            return Err(Error::Format(format!("unsupported herald stream version {version}")));
        }
        let n_qubits = u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as usize;
        let cadence = f64::from_le_bytes(head[16..24].try_into().expect("8 bytes"));
        if n_qubits == 0 || !(cadence > 0.0) {
            return Err(Error::Format("herald stream header has no qubits or a bad cadence".into()));
        }
        Ok(Self { input, n_qubits, cadence, next_cycle: 0 })
    }

    /// Up to `max` readouts; `None` at end of file.
    pub fn next_chunk(&mut self, max: usize) -> Result<Option<HeraldSeries>> {
        let mut buf = vec![0u8; 2 * max.max(1)];
        let mut filled = 0;
        while filled < buf.len() {
            let n = self.input.read(&mut buf[filled..])?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled % 2 != 0 {
            return Err(Error::Format("herald stream ends mid-record".into()));
        }
        if filled == 0 {
            return Ok(None);
        }
        let n = filled / 2;
        let relax_flags: Vec<u32> = buf[..filled].iter().step_by(2).map(|&b| b as u32).collect();
        let relax_valid: Vec<u32> = buf[1..filled].iter().step_by(2).map(|&b| b as u32).collect();
        let s = HeraldSeries {
            start_cycle: self.next_cycle,
            n_qubits: self.n_qubits,
            relax_flags,
            relax_valid,
            exc_flags: vec![0; n],
            exc_valid: vec![0; n],
        };
        self.next_cycle += n as u64;
        Ok(Some(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip() {
        let p = TrajectoryPoint {
            t: 1.5e-6,
            temperature: 0.06,
            state: QpState { x_2lt: 1e-8, x_2gt: 2e-8, x_3: 3e-9, x_l: 4e-8, x_r: 5e-8, p_0: 0.99 },
            gamma_up: 12.5,
            gamma_down: 2.9e4,
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&[p, p], &mut buf).unwrap();
        assert_eq!(read_trajectory_csv(&buf[..]).unwrap(), vec![p, p]);
    }

    #[test]
    fn cache_rejects_garbage() {
        assert!(matches!(read_kernel_cache(&b"QPKCACHE"[..]), Err(Error::Format(_))));
        let mut bad = Vec::new();
        bad.extend_from_slice(CACHE_MAGIC);
        bad.extend_from_slice(&7u32.to_le_bytes());
        bad.resize(52, 0);
        assert!(matches!(read_kernel_cache(&bad[..]), Err(Error::Format(_))));
    }

    #[test]
    fn herald_stream_round_trip() {
        let s = HeraldSeries {
            start_cycle: 0,
            n_qubits: 9,
            relax_flags: vec![1, 0, 3],
            relax_valid: vec![5, 4, 9],
            exc_flags: vec![0; 3],
            exc_valid: vec![0; 3],
        };
        let mut buf = Vec::new();
        let mut w = HeraldStreamWriter::new(&mut buf, 9, 6.95e-6).unwrap();
        w.push(&s).unwrap();
        w.push(&s).unwrap();
        assert_eq!(w.finish().unwrap(), 6);
        let mut r = HeraldStreamReader::new(&buf[..]).unwrap();
        let a = r.next_chunk(4).unwrap().unwrap();
        let b = r.next_chunk(4).unwrap().unwrap();
        assert!(r.next_chunk(4).unwrap().is_none());
        assert_eq!(a.relax_flags, vec![1, 0, 3, 1]);
        assert_eq!((b.start_cycle, b.relax_valid.clone()), (4, vec![4, 9]));
        assert_eq!(r.cadence, 6.95e-6);
    }
}
