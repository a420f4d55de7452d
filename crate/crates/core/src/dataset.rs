//! Snapshot matrices, grids, region masks and the SNP1 file format.
//!
//! SNP1 layout (little-endian): magic `"SNP1"`, `u32` version (1), `u32 nx`,
//! `u32 ny`, `u64 n_steps`, `f64 lx`, `f64 ly`, `f64 t_final`, `u8` parameter
//! kind, `f64` parameter value, then `nx·ny·n_steps` `f64` values in
//! column-major order (one column per time instant, row `iy·nx + ix`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{ensure_arg, Error, Result};

pub const SNP_MAGIC: &[u8; 4] = b"SNP1";
pub const SNP_VERSION: u32 = 1;

/// Uniform collocated grid on `[0, lx] × [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        ensure_arg!(nx >= 2 && ny >= 2, "grid needs at least 2x2 cells, got {nx}x{ny}");
        ensure_arg!(
            lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0,
            "grid extents must be positive, got {lx}x{ly}"
        );
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }

    /// Number of spatial degrees of freedom `N_x = nx·ny`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn x_center(&self, ix: usize) -> f64 {
        (ix as f64 + 0.5) * self.lx / self.nx as f64
    }
    pub fn y_center(&self, iy: usize) -> f64 {
        (iy as f64 + 0.5) * self.ly / self.ny as f64
    }

    /// Cell center of flat index `j`.
    pub fn center(&self, j: usize) -> (f64, f64) {
        (self.x_center(j % self.nx), self.y_center(j / self.nx))
    }
}

/// Uniform sampling of `[0, t_final]` with `n_steps` instants (both ends included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAxis {
    n_steps: usize,
    t_final: f64,
}

impl TimeAxis {
    pub fn new(n_steps: usize, t_final: f64) -> Result<Self> {
        ensure_arg!(n_steps >= 2, "time axis needs at least 2 instants, got {n_steps}");
        ensure_arg!(
            t_final.is_finite() && t_final > 0.0,
            "final time must be positive, got {t_final}"
        );
        Ok(Self { n_steps, t_final })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn instant(&self, l: usize) -> f64 {
        if l + 1 == self.n_steps {
            self.t_final
        } else {
            self.t_final * l as f64 / (self.n_steps - 1) as f64
        }
    }

    pub fn instants(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(|l| self.instant(l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Inlet velocity, m/s.
    Velocity,
    /// Inlet temperature, °C.
    Temperature,
    Synthetic,
}

impl ParamKind {
    pub fn code(self) -> u8 {
        match self {
            ParamKind::Velocity => 0,
            ParamKind::Temperature => 1,
            ParamKind::Synthetic => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ParamKind::Velocity),
            1 => Some(ParamKind::Temperature),
            2 => Some(ParamKind::Synthetic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Velocity => "velocity",
            ParamKind::Temperature => "temperature",
            ParamKind::Synthetic => "synthetic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "velocity" => Some(ParamKind::Velocity),
            "temperature" => Some(ParamKind::Temperature),
            "synthetic" => Some(ParamKind::Synthetic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Param {
    pub kind: ParamKind,
    pub value: f64,
}

impl Param {
    pub fn new(kind: ParamKind, value: f64) -> Self {
        Self { kind, value }
    }
}

/// `N_x × N_s` field samples for a single parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    grid: Grid,
    times: TimeAxis,
    param: Param,
    values: DMatrix<f64>,
}

impl SnapshotMatrix {
    pub fn new(grid: Grid, times: TimeAxis, param: Param, values: DMatrix<f64>) -> Result<Self> {
        ensure_arg!(
            values.nrows() == grid.len() && values.ncols() == times.n_steps(),
            "snapshot matrix is {}x{}, grid/time axis expect {}x{}",
            values.nrows(),
            values.ncols(),
            grid.len(),
            times.n_steps()
        );
        ensure_arg!(
            values.iter().all(|v| v.is_finite()),
            "snapshot matrix has non-finite entries"
        );
        ensure_arg!(param.value.is_finite(), "parameter value must be finite");
        Ok(Self {
            grid,
            times,
            param,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn times(&self) -> &TimeAxis {
        &self.times
    }
    pub fn param(&self) -> Param {
        self.param
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn with_param(mut self, param: Param) -> Self {
        self.param = param;
        self
    }
    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains_strictly(&self, x: f64, y: f64) -> bool {
        x > self.x_min && x < self.x_max && y > self.y_min && y < self.y_max
    }
}

/// Grid cells whose centers lie strictly inside a rectangle, with their
/// quadrature weights (cell areas).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    rect: Rect,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl RegionMask {
    pub fn rect(&self) -> Rect {
        self.rect
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    /// Total mask area, `cell area × cell count`.
    pub fn area(&self) -> f64 {
        self.weights.first().map_or(0.0, |w| w * self.weights.len() as f64)
    }
}

pub fn build_mask(grid: &Grid, rect: Rect) -> Result<RegionMask> {
    ensure_arg!(
        rect.x_min < rect.x_max && rect.y_min < rect.y_max,
        "degenerate mask rectangle {rect:?}"
    );
    let indices: Vec<usize> = (0..grid.len())
        .filter(|&j| {
            let (x, y) = grid.center(j);
            rect.contains_strictly(x, y)
        })
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyMask);
    }
    let weights = vec![grid.cell_area(); indices.len()];
    Ok(RegionMask {
        rect,
        indices,
        weights,
    })
}

pub fn write_snapshots(m: &SnapshotMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut enc = Encoder::default();
    enc.bytes(SNP_MAGIC);
    enc.u32(SNP_VERSION);
    encode_geometry(&mut enc, &m.grid, &m.times, m.param.kind);
    enc.f64(m.param.value);
    enc.f64s(m.values.as_slice());
    w.write_all(&enc.buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshots(path: impl AsRef<Path>) -> Result<SnapshotMatrix> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut dec = Decoder::new(&bytes, "SNP1");
    dec.magic(SNP_MAGIC, SNP_VERSION)?;
    let (grid, times, kind) = decode_geometry(&mut dec)?;
    let value = dec.f64()?;
    let values = dec.matrix(grid.len(), times.n_steps())?;
    dec.finish()?;
    SnapshotMatrix::new(grid, times, Param::new(kind, value), values)
        .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

pub(crate) fn encode_geometry(enc: &mut Encoder, grid: &Grid, times: &TimeAxis, kind: ParamKind) {
    enc.u32(grid.nx as u32);
    enc.u32(grid.ny as u32);
    enc.u64(times.n_steps as u64);
    enc.f64(grid.lx);
    enc.f64(grid.ly);
    enc.f64(times.t_final);
    enc.u8(kind.code());
}

pub(crate) fn decode_geometry(dec: &mut Decoder) -> Result<(Grid, TimeAxis, ParamKind)> {
    let nx = dec.u32()? as usize;
    let ny = dec.u32()? as usize;
    let n_steps = usize::try_from(dec.u64()?)
        .map_err(|_| Error::Corrupt("step count overflows usize".into()))?;
    let lx = dec.f64()?;
    let ly = dec.f64()?;
    let t_final = dec.f64()?;
    let code = dec.u8()?;
    let kind = ParamKind::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown parameter kind {code}")))?;
    let grid = Grid::new(nx, ny, lx, ly).map_err(|e| Error::Corrupt(e.to_string()))?;
    let times = TimeAxis::new(n_steps, t_final).map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok((grid, times, kind))
}

#[derive(Default)]
pub(crate) struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }
}

pub(crate) struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub fn magic(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        if self.bytes.len() < 8 || &self.bytes[..4] != magic {
            return Err(Error::Format(format!("bad magic, expected {}", self.what)));
        }
        self.pos = 4;
        let v = self.u32()?;
        if v != version {
            return Err(Error::Format(format!(
                "unsupported {} version {v}",
                self.what
            )));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated {} file", self.what)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Corrupt(format!("{} dimensions overflow", self.what)))?;
        let raw = self.take(n).map_err(|_| {
            Error::Corrupt(format!(
                "{} payload shorter than declared {rows}x{cols}",
                self.what
            ))
        })?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DMatrix::from_vec(rows, cols, data))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after {} payload",
                self.bytes.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}
