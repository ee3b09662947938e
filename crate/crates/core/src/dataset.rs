//! Snapshot storage: the in-memory [`SnapshotSet`], its manifest + raw payload
//! on-disk format, sample splitting and snapshot-matrix assembly.
//!
//! Column `k * n_times + j` of the state matrix holds the pressure field for
//! parameter `params[k]` at time `times[j]`. Cells are numbered `j * nx + i`.
//!
//! The manifest is a plain `key = value` text file:
//!
//! ```text
//! format = poddl-snapshots-1
//! nx = 64
//! ny = 48
//! dx = 2.5
//! dy = 2.5
//! origin = 0, 0
//! obstacle = 26, 38, 28, 38
//! p0 = 100000
//! times = 0.025, 0.0298, ...
//! params = 50, 56.6, ...
//! payload = desk.bin
//! endianness = little
//! ```
//!
//! The payload holds `nx * ny * n_params * n_times` little-endian `f64` values
//! in column-major order.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVectorView};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const SNAPSHOT_FORMAT: &str = "poddl-snapshots-1";

/// Axis-aligned rigid obstacle, as half-open cell index ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Obstacle {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Obstacle {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        (self.i0..self.i1).contains(&i) && (self.j0..self.j1).contains(&j)
    }
}

/// Uniform Cartesian cell-centred grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeta {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: (f64, f64),
    pub obstacle: Option<Obstacle>,
}

impl GridMeta {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.dx,
            self.origin.1 + (j as f64 + 0.5) * self.dy,
        )
    }

    pub fn extent(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.origin.0, self.origin.0 + self.nx as f64 * self.dx),
            (self.origin.1, self.origin.1 + self.ny as f64 * self.dy),
        )
    }

    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.obstacle.is_some_and(|o| o.contains(i, j))
    }

    /// Cell containing the point, if it lies inside the grid.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = (x - self.origin.0) / self.dx;
        let fj = (y - self.origin.1) / self.dy;
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("grid must have at least one cell".into()));
        }
        if !(self.dx > 0.0 && self.dy > 0.0 && self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::InvalidArgument("cell sizes must be positive".into()));
        }
        if let Some(o) = self.obstacle {
            if o.i0 >= o.i1 || o.j0 >= o.j1 || o.i1 > self.nx || o.j1 > self.ny {
                return Err(Error::InvalidArgument(format!(
                    "obstacle {o:?} is empty or not inside the {}x{} grid",
                    self.nx, self.ny
                )));
            }
        }
        Ok(())
    }
}

/// Half-open time window `[start, end)`, optionally closed on the right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
    pub right_closed: bool,
}

impl TimeWindow {
    pub fn half_open(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            right_closed: false,
        }
    }

    pub fn closed(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            right_closed: true,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && (t < self.end || (self.right_closed && t == self.end))
    }
}

/// Full-order pressure snapshots over a (parameter, time) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    states: DMatrix<f64>,
    times: Vec<f64>,
    params: Vec<f64>,
    grid: GridMeta,
    p0: f64,
}

impl SnapshotSet {
    pub fn new(
        states: DMatrix<f64>,
        times: Vec<f64>,
        params: Vec<f64>,
        grid: GridMeta,
        p0: f64,
    ) -> Result<Self> {
        grid.validate()?;
        if times.is_empty() || params.is_empty() {
            return Err(Error::Shape("need at least one time and one parameter".into()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        for (a, &pa) in params.iter().enumerate() {
            if params[..a].contains(&pa) {
                return Err(Error::InvalidArgument(format!("duplicate parameter value {pa}")));
            }
        }
        if states.nrows() != grid.n_cells() || states.ncols() != times.len() * params.len() {
            return Err(Error::Shape(format!(
                "states are {}x{}, expected {}x{}",
                states.nrows(),
                states.ncols(),
                grid.n_cells(),
                times.len() * params.len()
            )));
        }
        check_finite(&states)?;
        if !p0.is_finite() {
            return Err(Error::InvalidArgument("p0 must be finite".into()));
        }
        Ok(Self {
            states,
            times,
            params,
            grid,
            p0,
        })
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn grid(&self) -> &GridMeta {
        &self.grid
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_samples(&self) -> usize {
        self.states.ncols()
    }

    pub fn column_index(&self, param_idx: usize, time_idx: usize) -> usize {
        param_idx * self.times.len() + time_idx
    }

    /// `(param index, time index)` of a column.
    pub fn column_coords(&self, col: usize) -> (usize, usize) {
        (col / self.times.len(), col % self.times.len())
    }

    pub fn column_time(&self, col: usize) -> f64 {
        self.times[col % self.times.len()]
    }

    pub fn column_param(&self, col: usize) -> f64 {
        self.params[col / self.times.len()]
    }

    pub fn snapshot(&self, col: usize) -> DVectorView<'_, f64> {
        self.states.column(col)
    }

    /// Mutable access for tests that need to perturb individual snapshots.
    pub fn snapshot_mut(&mut self, col: usize) -> nalgebra::DVectorViewMut<'_, f64> {
        self.states.column_mut(col)
    }

    /// Columns of one parameter's trajectory, in time order.
    pub fn trajectory_columns(&self, param_idx: usize) -> std::ops::Range<usize> {
        let start = param_idx * self.times.len();
        start..start + self.times.len()
    }

    /// SHA-256 over the grid, times, params, p0 and payload bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(manifest_text(self, "").as_bytes());
        for v in self.states.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn check_finite(states: &DMatrix<f64>) -> Result<()> {
    for (col, c) in states.column_iter().enumerate() {
        if let Some(row) = c.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { column: col, row });
        }
    }
    Ok(())
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn manifest_text(set: &SnapshotSet, payload: &str) -> String {
    let g = &set.grid;
    let obstacle = match g.obstacle {
        Some(o) => format!("{}, {}, {}, {}", o.i0, o.i1, o.j0, o.j1),
        None => "none".to_string(),
    };
    format!(
        "format = {SNAPSHOT_FORMAT}\nnx = {}\nny = {}\ndx = {}\ndy = {}\norigin = {}, {}\n\
         obstacle = {obstacle}\np0 = {}\ntimes = {}\nparams = {}\npayload = {payload}\nendianness = little\n",
        g.nx,
        g.ny,
        g.dx,
        g.dy,
        g.origin.0,
        g.origin.1,
        set.p0,
        join_floats(&set.times),
        join_floats(&set.params),
    )
}

/// Write `set` as a manifest plus a sibling `<stem>.bin` payload.
pub fn save_snapshots(set: &SnapshotSet, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let payload_name = payload_name_for(manifest_path);
    let payload_path = manifest_path.with_file_name(&payload_name);

    let mut bytes = Vec::with_capacity(set.states.len() * 8);
    for v in set.states.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(&payload_path, &bytes)?;
    write_atomic(manifest_path, manifest_text(set, &payload_name).as_bytes())
}

fn payload_name_for(manifest_path: &Path) -> String {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "snapshots".into());
    format!("{stem}.bin")
}

struct Manifest {
    path: PathBuf,
    entries: HashMap<String, (usize, String)>,
}

impl Manifest {
    fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Manifest {
                    path: path.into(),
                    line: n + 1,
                    msg: format!("expected `key = value`, found `{line}`"),
                });
            };
            entries.insert(k.trim().to_string(), (n + 1, v.trim().to_string()));
        }
        Ok(Self {
            path: path.into(),
            entries,
        })
    }

    fn raw(&self, key: &str) -> Result<(usize, &str)> {
        self.entries
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| Error::Manifest {
                path: self.path.clone(),
                line: 0,
                msg: format!("missing key `{key}`"),
            })
    }

    fn err(&self, line: usize, msg: String) -> Error {
        Error::Manifest {
            path: self.path.clone(),
            line,
            msg,
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (line, v) = self.raw(key)?;
        v.parse()
            .map_err(|_| self.err(line, format!("cannot parse `{key}` from `{v}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let (line, v) = self.raw(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.err(line, format!("bad entry `{}` in `{key}`", s.trim())))
            })
            .collect()
    }
}

/// Read a snapshot set from its manifest and payload.
pub fn load_snapshots(manifest_path: impl AsRef<Path>) -> Result<SnapshotSet> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m = Manifest::parse(manifest_path, &text)?;

    let (line, format) = m.raw("format")?;
    if format != SNAPSHOT_FORMAT {
        return Err(m.err(line, format!("unsupported format `{format}`")));
    }
    let (line, endian) = m.raw("endianness")?;
    if endian != "little" {
        return Err(m.err(line, format!("unsupported endianness `{endian}`")));
    }
    let origin: Vec<f64> = m.list("origin")?;
    if origin.len() != 2 {
        let (line, _) = m.raw("origin")?;
        return Err(m.err(line, "origin needs two coordinates".into()));
    }
    let (obs_line, obs_raw) = m.raw("obstacle")?;
    let obstacle = if obs_raw == "none" {
        None
    } else {
        let o: Vec<usize> = m.list("obstacle")?;
        if o.len() != 4 {
            return Err(m.err(obs_line, "obstacle needs `i0, i1, j0, j1`".into()));
        }
        Some(Obstacle {
            i0: o[0],
            i1: o[1],
            j0: o[2],
            j1: o[3],
        })
    };
    let grid = GridMeta {
        nx: m.get("nx")?,
        ny: m.get("ny")?,
        dx: m.get("dx")?,
        dy: m.get("dy")?,
        origin: (origin[0], origin[1]),
        obstacle,
    };
    let p0: f64 = m.get("p0")?;
    let times: Vec<f64> = m.list("times")?;
    let params: Vec<f64> = m.list("params")?;
    let (_, payload) = m.raw("payload")?;
    let payload_path = manifest_path.with_file_name(payload);

    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let rows = grid.n_cells();
    let cols = times.len() * params.len();
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Shape(format!(
            "payload {} holds {} bytes, manifest declares {} x {} values ({} bytes)",
            payload_path.display(),
            bytes.len(),
            rows,
            cols,
            rows * cols * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let states = DMatrix::from_vec(rows, cols, values);
    SnapshotSet::new(states, times, params, grid, p0)
}

/// Disjoint train/validation/test column lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Set sizes: `floor(f * n)` each, remainder to train first, then validation.
pub fn split_sizes(n_samples: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    if n_samples < 3 {
        return Err(Error::InvalidArgument(format!(
            "{n_samples} samples cannot populate train, validation and test sets"
        )));
    }
    // the 1e-9 guard keeps e.g. 0.15 * 20 from flooring to 2
    let floor = |f: f64| ((f * n_samples as f64) + 1e-9).floor() as usize;
    let (mut tr, mut va, te) = (floor(a), floor(b), floor(c));
    let mut rem = n_samples - (tr + va + te);
    if rem > 0 {
        tr += 1;
        rem -= 1;
    }
    if rem > 0 {
        va += 1;
        rem -= 1;
    }
    debug_assert_eq!(rem, 0);
    Ok((tr, va, te))
}

/// Random snapshot-wise split over all `(t, mu)` columns, deterministic in `seed`.
pub fn split_samples(
    set: &SnapshotSet,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SampleSplit> {
    split_indices(set.n_samples(), fractions, seed)
}

pub fn split_indices(
    n_samples: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SampleSplit> {
    let (tr, va, _) = split_sizes(n_samples, fractions)?;
    let mut idx: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut train = idx[..tr].to_vec();
    let mut val = idx[tr..tr + va].to_vec();
    let mut test = idx[tr + va..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SampleSplit { train, val, test })
}

/// Selected snapshots, with the originating column of each.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub data: DMatrix<f64>,
    pub columns: Vec<usize>,
}

/// Columns of `idx` whose time lies in `window`, ordered parameter-major then time.
pub fn select_columns(set: &SnapshotSet, window: TimeWindow, idx: &[usize]) -> Vec<usize> {
    let mut cols: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&c| window.contains(set.column_time(c)))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

pub fn assemble_matrix(
    set: &SnapshotSet,
    window: TimeWindow,
    idx: &[usize],
) -> Result<SnapshotMatrix> {
    let columns = select_columns(set, window, idx);
    if columns.is_empty() {
        return Err(Error::EmptyInterval {
            t_a: window.start,
            t_b: window.end,
        });
    }
    let data = set.states.select_columns(columns.iter());
    Ok(SnapshotMatrix { data, columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_grid(nx: usize, ny: usize) -> GridMeta {
        GridMeta {
            nx,
            ny,
            dx: 1.0,
            dy: 1.0,
            origin: (0.0, 0.0),
            obstacle: None,
        }
    }

    fn tiny_set(times: Vec<f64>, params: Vec<f64>, cells: usize) -> SnapshotSet {
        let cols = times.len() * params.len();
        let states = DMatrix::from_fn(cells, cols, |r, c| (r * 100 + c) as f64);
        SnapshotSet::new(states, times, params, tiny_grid(cells, 1), 1e5).unwrap()
    }

    #[test]
    fn load_two_params_three_times_four_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.manifest");
        let set = tiny_set(vec![0.0, 0.1, 0.2], vec![1.0, 2.0], 4);
        save_snapshots(&set, &path).unwrap();
        let back = load_snapshots(&path).unwrap();
        assert_eq!(back.states().shape(), (4, 6));
        assert_eq!(back, set);
    }

    #[test]
    fn nan_payload_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.manifest");
        let set = tiny_set(vec![0.0, 0.1, 0.2], vec![1.0, 2.0], 4);
        save_snapshots(&set, &path).unwrap();
        let bin = dir.path().join("s.bin");
        let mut bytes = fs::read(&bin).unwrap();
        let off = (3 * 4 + 1) * 8;
        bytes[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        fs::write(&bin, bytes).unwrap();
        match load_snapshots(&path) {
            Err(Error::NonFinite { column, row }) => {
                assert_eq!((column, row), (3, 1));
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.manifest");
        save_snapshots(&tiny_set(vec![0.0, 1.0], vec![1.0], 3), &path).unwrap();
        let bin = dir.path().join("s.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_snapshots(&path), Err(Error::Shape(_))));
    }

    #[test]
    fn missing_manifest_is_io_error() {
        assert!(matches!(
            load_snapshots("/nonexistent/nowhere.manifest"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.manifest");
        fs::write(&path, "format = poddl-snapshots-1\nthis line is wrong\n").unwrap();
        match load_snapshots(&path) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invariants_rejected() {
        let g = tiny_grid(2, 1);
        let m = DMatrix::zeros(2, 2);
        assert!(SnapshotSet::new(m.clone(), vec![0.2, 0.1], vec![1.0], g.clone(), 0.0).is_err());
        assert!(SnapshotSet::new(m.clone(), vec![0.1], vec![1.0, 1.0], g.clone(), 0.0).is_err());
        assert!(SnapshotSet::new(m, vec![0.1], vec![1.0], g, 0.0).is_err());
    }

    #[test]
    fn split_sizes_follow_floor_and_remainder_rule() {
        assert_eq!(split_sizes(20, (0.75, 0.15, 0.10)).unwrap(), (15, 3, 2));
        let third = 1.0 / 3.0;
        assert_eq!(split_sizes(10, (third, third, third)).unwrap(), (4, 3, 3));
        assert!(split_sizes(2, (0.75, 0.15, 0.10)).is_err());
        assert!(split_sizes(20, (0.5, 0.5, 0.1)).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_indices(57, (0.75, 0.15, 0.10), 9).unwrap();
        let b = split_indices(57, (0.75, 0.15, 0.10), 9).unwrap();
        let c = split_indices(57, (0.75, 0.15, 0.10), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn assemble_identity_selection() {
        let set = tiny_set(vec![0.0, 0.1, 0.2], vec![1.0, 2.0], 4);
        let all: Vec<usize> = (0..6).collect();
        let m = assemble_matrix(&set, TimeWindow::closed(0.0, 0.2), &all).unwrap();
        assert_eq!(&m.data, set.states());
    }

    #[test]
    fn assemble_half_open_membership() {
        let set = tiny_set(vec![0.05, 0.1, 0.15, 0.2], vec![1.0], 2);
        let all: Vec<usize> = (0..4).collect();
        let m = assemble_matrix(&set, TimeWindow::half_open(0.1, 0.2), &all).unwrap();
        let times: Vec<f64> = m.columns.iter().map(|&c| set.column_time(c)).collect();
        assert_eq!(times, vec![0.1, 0.15]);
    }

    #[test]
    fn assemble_orders_parameter_major() {
        let set = tiny_set(vec![0.0, 1.0, 2.0], vec![10.0, 20.0], 2);
        let idx = vec![4, 1, 3, 0];
        let m = assemble_matrix(&set, TimeWindow::half_open(0.0, 2.0), &idx).unwrap();
        let pairs: Vec<(f64, f64)> = m
            .columns
            .iter()
            .map(|&c| (set.column_param(c), set.column_time(c)))
            .collect();
        assert_eq!(pairs, vec![(10.0, 0.0), (10.0, 1.0), (20.0, 0.0), (20.0, 1.0)]);
    }

    #[test]
    fn assemble_empty_interval_errors() {
        let set = tiny_set(vec![0.0, 1.0], vec![1.0], 2);
        assert!(matches!(
            assemble_matrix(&set, TimeWindow::half_open(5.0, 6.0), &[0, 1]),
            Err(Error::EmptyInterval { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_partitions_all_columns(n in 3usize..400, seed in any::<u64>()) {
                let s = split_indices(n, (0.75, 0.15, 0.10), seed).unwrap();
                let (tr, va, te) = split_sizes(n, (0.75, 0.15, 0.10)).unwrap();
                prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (tr, va, te));
                let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                let fl = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
                prop_assert!(tr >= fl(0.75) && tr <= fl(0.75) + 1);
                prop_assert!(va >= fl(0.15) && va <= fl(0.15) + 1);
                prop_assert_eq!(te, fl(0.10));
            }

            #[test]
            fn save_load_is_bit_exact(values in proptest::collection::vec(-1e6f64..1e6, 12), p0 in 0.0f64..2e5) {
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("r.manifest");
                let states = DMatrix::from_vec(3, 4, values);
                let set = SnapshotSet::new(states, vec![0.1, 0.3], vec![-1.5, 2.25], tiny_grid(3, 1), p0).unwrap();
                save_snapshots(&set, &path).unwrap();
                let back = load_snapshots(&path).unwrap();
                for (a, b) in back.states().iter().zip(set.states().iter()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                prop_assert_eq!(back.digest(), set.digest());
            }
        }
    }
}
