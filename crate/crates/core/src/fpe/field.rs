use std::io::{Read, Write};

use crate::error::{QsdError, Result};
use crate::num::Real;

use super::{Grid1D, GridKind};

/// Densities are floored here before taking logarithms.
pub const LN_FLOOR_DENSITY: f64 = 1e-300;

const MAGIC: &[u8; 7] = b"QSDPDF1";

/// Density on a grid at uniformly spaced times `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfField<T> {
    grid: Grid1D<T>,
    t0: T,
    dt: T,
    values: Vec<Vec<T>>,
    ln_values: Vec<Vec<T>>,
}

impl<T: Real> PdfField<T> {
    pub fn new(grid: Grid1D<T>, t0: T, dt: T, values: Vec<Vec<T>>) -> Result<Self> {
        if values.is_empty() {
            return Err(QsdError::InvalidParameter("field has no time slices".into()));
        }
        if let Some(bad) = values.iter().find(|s| s.len() != grid.n) {
            return Err(QsdError::InvalidParameter(format!(
                "slice of length {} on a grid of {} nodes",
                bad.len(),
                grid.n
            )));
        }
        if values.len() > 1 && !(dt > T::zero()) {
            return Err(QsdError::NonPositiveTimeStep(dt.to_f64_lossless()));
        }
        let floor = T::lit(LN_FLOOR_DENSITY).max(T::min_positive_value());
        let ln_values = values
            .iter()
            .map(|s| s.iter().map(|&v| v.max(floor).ln()).collect())
            .collect();
        Ok(Self {
            grid,
            t0,
            dt,
            values,
            ln_values,
        })
    }

    /// A single slice that is used for every time (e.g. a stationary density).
    pub fn constant(grid: Grid1D<T>, values: Vec<T>) -> Result<Self> {
        Self::new(grid, T::zero(), T::zero(), vec![values])
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_times(&self) -> usize {
        self.values.len()
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + T::from_usize(k).unwrap() * self.dt
    }

    pub fn t_end(&self) -> T {
        self.time(self.values.len() - 1)
    }

    pub fn slice(&self, k: usize) -> &[T] {
        &self.values[k]
    }

    pub fn ln_slice(&self, k: usize) -> &[T] {
        &self.ln_values[k]
    }

    pub fn masses(&self) -> Vec<T> {
        self.values.iter().map(|s| self.grid.mass(s)).collect()
    }

    /// Slice index and weight for time `t`.
    fn locate_time(&self, t: T) -> Option<(usize, T)> {
        if self.values.len() == 1 {
            return Some((0, T::zero()));
        }
        let s = (t - self.t0) / self.dt;
        let last = T::from_usize(self.values.len() - 1).unwrap();
        let slack = T::lit(1e-9);
        if s < -slack || s > last + slack {
            return None;
        }
        let s = s.max(T::zero()).min(last);
        let k = s.floor().to_usize().unwrap().min(self.values.len() - 2);
        Some((k, s - T::from_usize(k).unwrap()))
    }

    /// Bilinear interpolation of `ln p` in `(x, t)`.
    pub fn ln_density(&self, x: T, t: T) -> Result<T> {
        let out = || QsdError::OutOfRange {
            x: x.to_f64_lossless(),
            t: t.to_f64_lossless(),
        };
        let (i, wx) = self.grid.locate(x).ok_or_else(out)?;
        let (k, wt) = self.locate_time(t).ok_or_else(out)?;
        let j = self.grid.next(i);
        let at = |k: usize| {
            let row = &self.ln_values[k];
            if wx == T::zero() {
                row[i]
            } else {
                (T::one() - wx) * row[i] + wx * row[j]
            }
        };
        if wt == T::zero() {
            Ok(at(k))
        } else {
            Ok((T::one() - wt) * at(k) + wt * at(k + 1))
        }
    }

    /// `exp` of [`ln_density`](Self::ln_density).
    pub fn density(&self, x: T, t: T) -> Result<T> {
        self.ln_density(x, t).map(|v| v.exp())
    }

    /// Writes `t,x,p` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "p"])?;
        let xs = self.grid.nodes();
        for (k, row) in self.values.iter().enumerate() {
            let t = format!("{:.16e}", self.time(k).to_f64_lossless());
            for (x, p) in xs.iter().zip(row) {
                out.write_record([
                    t.as_str(),
                    &format!("{:.16e}", x.to_f64_lossless()),
                    &format!("{:.16e}", p.to_f64_lossless()),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a CSV produced by [`write_csv`](Self::write_csv). The grid kind is
    /// not stored in CSV and must be supplied.
    pub fn read_csv<R: Read>(r: R, kind: GridKind) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut times: Vec<f64> = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<T>> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| QsdError::Format("short row".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| QsdError::Format(e.to_string()))
            };
            let (t, x, p) = (get(0)?, get(1)?, get(2)?);
            if times.last() != Some(&t) {
                times.push(t);
                values.push(Vec::new());
            }
            if times.len() == 1 {
                xs.push(x);
            }
            values.last_mut().unwrap().push(T::lit(p));
        }
        if xs.len() < 2 {
            return Err(QsdError::Format("field CSV has fewer than two nodes".into()));
        }
        let n = xs.len();
        let h = xs[1] - xs[0];
        let hi = match kind {
            GridKind::Periodic => xs[0] + h * n as f64,
            _ => xs[n - 1],
        };
        let grid = Grid1D::new(kind, T::lit(xs[0]), T::lit(hi), n)?;
        let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
        Self::new(grid, T::lit(times[0]), T::lit(dt), values)
    }

    /// Compact little-endian layout: magic `QSDPDF1`, kind `u8`, `N u64`,
    /// `lo f64`, `hi f64`, `K u64`, `t0 f64`, `dt f64`, then `K × N` values
    /// as `f64`, one time slice after another.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[self.grid.kind.code()])?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        w.write_all(&self.grid.lo.to_f64_lossless().to_le_bytes())?;
        w.write_all(&self.grid.hi.to_f64_lossless().to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        w.write_all(&self.t0.to_f64_lossless().to_le_bytes())?;
        w.write_all(&self.dt.to_f64_lossless().to_le_bytes())?;
        for row in &self.values {
            for v in row {
                w.write_all(&v.to_f64_lossless().to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(QsdError::Format("bad magic bytes".into()));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let kind = GridKind::from_code(kind[0])?;
        let mut b8 = [0u8; 8];
        let mut u64_ = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = u64_(&mut r)? as usize;
        let lo = f64::from_bits(u64_(&mut r)?);
        let hi = f64::from_bits(u64_(&mut r)?);
        let k = u64_(&mut r)? as usize;
        let t0 = f64::from_bits(u64_(&mut r)?);
        let dt = f64::from_bits(u64_(&mut r)?);
        let grid = Grid1D::new(kind, T::lit(lo), T::lit(hi), n)?;
        let mut values = Vec::with_capacity(k);
        for _ in 0..k {
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                row.push(T::lit(f64::from_bits(u64_(&mut r)?)));
            }
            values.push(row);
        }
        Self::new(grid, T::lit(t0), T::lit(dt), values)
    }
}
