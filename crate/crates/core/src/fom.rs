//! Desk-scale full-order solver for blast-like pressure snapshots.
//!
//! Solves 2D linear acoustics
//!
//! ```text
//! dq/dt = -rho c^2 div(v),   dv/dt = -grad(q) / rho,   q = p - p0
//! ```
//!
//! with a finite-volume staggered layout: overpressure `q` at cell centres,
//! normal velocities on interior faces. Faces touching the obstacle carry zero
//! normal velocity. Outer faces use a first-order characteristic outflow
//! `v_n = q / (rho c)`. Time integration is classical RK4.
//!
//! The spatial operator is skew-adjoint in the acoustic energy inner product,
//! so away from the outflow boundary the discrete energy never grows for
//! `cfl <= 1`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::{GridMeta, Obstacle, SnapshotSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FomConfig {
    pub grid: GridMeta,
    /// Sound speed (m/s).
    pub c: f64,
    /// Air density (kg/m^3).
    pub density: f64,
    /// Ambient pressure (Pa).
    pub p0: f64,
    pub t_end: f64,
    pub cfl: f64,
    pub bubble_radius: f64,
    pub bubble_overpressure: f64,
    pub n_output_times: usize,
    /// Fraction of `t_end` skipped before the first output instant.
    pub burn_in_fraction: f64,
    /// Fixed y-coordinate of the source (m).
    pub source_y: f64,
    /// Admissible band for the source x-position `mu` (m).
    pub mu_range: (f64, f64),
}

impl FomConfig {
    /// The desk configuration: 64 x 48 cells of 2.5 m with a rectangular
    /// building, source 20 m from the lower edge.
    pub fn desk() -> Self {
        Self {
            grid: GridMeta {
                nx: 64,
                ny: 48,
                dx: 2.5,
                dy: 2.5,
                origin: (0.0, 0.0),
                obstacle: Some(Obstacle {
                    i0: 26,
                    i1: 40,
                    j0: 24,
                    j1: 34,
                }),
            },
            c: 340.0,
            density: 1.225,
            p0: 1.0e5,
            t_end: 0.2,
            cfl: 0.5,
            bubble_radius: 6.0,
            bubble_overpressure: 5.0e5,
            n_output_times: 100,
            burn_in_fraction: 0.05,
            source_y: 20.0,
            mu_range: (40.0, 120.0),
        }
    }

    /// The ten evenly spaced source positions used by the desk dataset.
    pub fn desk_params() -> Vec<f64> {
        linspace(50.0, 110.0, 10)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let bad = |field: &str, why: &str| Err(Error::InvalidArgument(format!("{field}: {why}")));
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl", "must lie in (0, 1]");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c", "must be positive");
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density", "must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", "must be positive");
        }
        if self.n_output_times < 2 {
            return bad("n_output_times", "must be at least 2");
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn_in_fraction", "must lie in [0, 1)");
        }
        if !(self.bubble_radius > 0.0) {
            return bad("bubble_radius", "must be positive");
        }
        if !self.bubble_overpressure.is_finite() || !self.p0.is_finite() {
            return bad("bubble_overpressure", "must be finite");
        }
        let ((x0, x1), (y0, y1)) = self.grid.extent();
        if 2.0 * self.bubble_radius >= (x1 - x0).min(y1 - y0) {
            return bad("bubble_radius", "bubble does not fit inside the grid");
        }
        if self.mu_range.0 > self.mu_range.1 {
            return bad("mu_range", "lower bound exceeds upper bound");
        }
        Ok(())
    }

    /// Largest stable step, `cfl * min(dx, dy) / (c * sqrt 2)`.
    pub fn max_time_step(&self) -> f64 {
        self.cfl * self.grid.dx.min(self.grid.dy) / (self.c * std::f64::consts::SQRT_2)
    }

    /// Uniform output instants from the end of the burn-in window to `t_end`.
    pub fn output_times(&self) -> Vec<f64> {
        let t0 = self.burn_in_fraction * self.t_end;
        linspace(t0, self.t_end, self.n_output_times)
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
        .collect()
}

/// Pressure field of one source position over the output instants.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `N_h x n_times` absolute pressure (Pa).
    pub fields: DMatrix<f64>,
    pub mu: f64,
}

/// Ambient field plus a disc of elevated pressure around the source.
///
/// A cell is inside the bubble when its centre lies within `bubble_radius`
/// of `(x_exp, y_exp)`.
pub fn initial_bubble(grid: &GridMeta, x_exp: f64, y_exp: f64, cfg: &FomConfig) -> Result<DVector<f64>> {
    let Some((si, sj)) = grid.locate(x_exp, y_exp) else {
        return Err(Error::Source(format!("({x_exp}, {y_exp}) lies outside the grid")));
    };
    if grid.is_solid(si, sj) {
        return Err(Error::Source(format!("({x_exp}, {y_exp}) lies inside the obstacle")));
    }
    let r2 = cfg.bubble_radius * cfg.bubble_radius;
    let mut p = DVector::from_element(grid.n_cells(), cfg.p0);
    let (rx, ry) = (x_exp - grid.origin.0, y_exp - grid.origin.1);
    for j in 0..grid.ny {
        let ddy = (j as f64 + 0.5) * grid.dy - ry;
        for i in 0..grid.nx {
            if grid.is_solid(i, j) {
                continue;
            }
            let ddx = (i as f64 + 0.5) * grid.dx - rx;
            if ddx * ddx + ddy * ddy <= r2 {
                p[grid.cell_index(i, j)] = cfg.p0 + cfg.bubble_overpressure;
            }
        }
    }
    Ok(p)
}

/// Explicit time stepper over the packed state `[q | u | v]`.
///
/// `u` holds the `(nx - 1) * ny` interior x-faces and `v` the
/// `nx * (ny - 1)` interior y-faces; closed faces stay identically zero.
pub struct AcousticSolver {
    grid: GridMeta,
    rho: f64,
    c: f64,
    fluid: Vec<bool>,
    u_open: Vec<bool>,
    v_open: Vec<bool>,
    state: Vec<f64>,
    scratch: [Vec<f64>; 5],
    time: f64,
}

impl AcousticSolver {
    pub fn new(cfg: &FomConfig, initial_pressure: &DVector<f64>) -> Self {
        let g = cfg.grid.clone();
        let (nx, ny) = (g.nx, g.ny);
        let fluid: Vec<bool> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| !g.is_solid(i, j))
            .collect();
        let mut u_open = vec![false; (nx - 1) * ny];
        for j in 0..ny {
            for i in 1..nx {
                u_open[j * (nx - 1) + i - 1] = fluid[j * nx + i - 1] && fluid[j * nx + i];
            }
        }
        let mut v_open = vec![false; nx * (ny - 1)];
        for j in 1..ny {
            for i in 0..nx {
                v_open[(j - 1) * nx + i] = fluid[(j - 1) * nx + i] && fluid[j * nx + i];
            }
        }
        let n = nx * ny + u_open.len() + v_open.len();
        let mut state = vec![0.0; n];
        for (k, q) in state[..nx * ny].iter_mut().enumerate() {
            if fluid[k] {
                *q = initial_pressure[k] - cfg.p0;
            }
        }
        Self {
            grid: g,
            rho: cfg.density,
            c: cfg.c,
            fluid,
            u_open,
            v_open,
            state,
            scratch: std::array::from_fn(|_| vec![0.0; n]),
            time: 0.0,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Overpressure `q = p - p0` per cell.
    pub fn overpressure(&self) -> &[f64] {
        &self.state[..self.grid.n_cells()]
    }

    pub fn velocities(&self) -> (&[f64], &[f64]) {
        let nc = self.grid.n_cells();
        let nu = self.u_open.len();
        (&self.state[nc..nc + nu], &self.state[nc + nu..])
    }

    /// Discrete acoustic energy `sum (q^2 / (rho c^2) + rho |v|^2) * dx * dy`.
    pub fn energy(&self) -> f64 {
        let area = self.grid.dx * self.grid.dy;
        let rc2 = self.rho * self.c * self.c;
        let nc = self.grid.n_cells();
        let pot: f64 = self.state[..nc].iter().map(|q| q * q).sum::<f64>() / rc2;
        let kin: f64 = self.state[nc..].iter().map(|v| v * v).sum::<f64>() * self.rho;
        (pot + kin) * area
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let nc = nx * ny;
        let nu = self.u_open.len();
        let (q, vel) = y.split_at(nc);
        let (u, v) = vel.split_at(nu);
        let (dq, dvel) = out.split_at_mut(nc);
        let (du, dv) = dvel.split_at_mut(nu);

        let inv_rho_dx = 1.0 / (self.rho * g.dx);
        let inv_rho_dy = 1.0 / (self.rho * g.dy);
        let inv_z = 1.0 / (self.rho * self.c);
        let rc2 = self.rho * self.c * self.c;

        for j in 0..ny {
            for i in 1..nx {
                let f = j * (nx - 1) + i - 1;
                du[f] = if self.u_open[f] {
                    -(q[j * nx + i] - q[j * nx + i - 1]) * inv_rho_dx
                } else {
                    0.0
                };
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let f = (j - 1) * nx + i;
                dv[f] = if self.v_open[f] {
                    -(q[j * nx + i] - q[(j - 1) * nx + i]) * inv_rho_dy
                } else {
                    0.0
                };
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !self.fluid[k] {
                    dq[k] = 0.0;
                    continue;
                }
                let ul = if i == 0 { -q[k] * inv_z } else { u[j * (nx - 1) + i - 1] };
                let ur = if i == nx - 1 { q[k] * inv_z } else { u[j * (nx - 1) + i] };
                let vb = if j == 0 { -q[k] * inv_z } else { v[(j - 1) * nx + i] };
                let vt = if j == ny - 1 { q[k] * inv_z } else { v[j * nx + i] };
                dq[k] = -rc2 * ((ur - ul) / g.dx + (vt - vb) / g.dy);
            }
        }
    }

    /// One classical RK4 step of size `dt`.
    pub fn step(&mut self, dt: f64) {
        let mut s = std::mem::take(&mut self.scratch);
        let [k1, k2, k3, k4, tmp] = &mut s;
        let y = &self.state;

        self.rhs(y, k1);
        for ((t, a), b) in tmp.iter_mut().zip(y).zip(k1.iter()) {
            *t = a + 0.5 * dt * b;
        }
        self.rhs(tmp, k2);
        for ((t, a), b) in tmp.iter_mut().zip(y).zip(k2.iter()) {
            *t = a + 0.5 * dt * b;
        }
        self.rhs(tmp, k3);
        for ((t, a), b) in tmp.iter_mut().zip(y).zip(k3.iter()) {
            *t = a + dt * b;
        }
        self.rhs(tmp, k4);
        let w = dt / 6.0;
        for (i, yi) in self.state.iter_mut().enumerate() {
            *yi += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.scratch = s;
        self.time += dt;
    }

    pub fn max_abs_overpressure(&self) -> f64 {
        self.overpressure().iter().fold(0.0, |m, q| m.max(q.abs()))
    }
}

fn check_mu(cfg: &FomConfig, mu: f64) -> Result<()> {
    if !(mu >= cfg.mu_range.0 && mu <= cfg.mu_range.1) {
        return Err(Error::Source(format!(
            "mu = {mu} outside admissible band [{}, {}]",
            cfg.mu_range.0, cfg.mu_range.1
        )));
    }
    let ((x0, x1), (y0, y1)) = cfg.grid.extent();
    let r = cfg.bubble_radius;
    if mu - r < x0 || mu + r > x1 || cfg.source_y - r < y0 || cfg.source_y + r > y1 {
        return Err(Error::Source(format!("bubble around x = {mu} leaves the grid")));
    }
    Ok(())
}

/// Run the solver for source position `mu` and sample the output instants.
pub fn solve_fom(cfg: &FomConfig, mu: f64) -> Result<Trajectory> {
    cfg.validate()?;
    check_mu(cfg, mu)?;
    let p_init = initial_bubble(&cfg.grid, mu, cfg.source_y, cfg)?;
    let mut solver = AcousticSolver::new(cfg, &p_init);

    let times = cfg.output_times();
    let dt_max = cfg.max_time_step();
    let limit = 1.0e3 * cfg.bubble_overpressure.abs();
    let n_h = cfg.grid.n_cells();
    let mut fields = DMatrix::zeros(n_h, times.len());

    let mut t_prev = 0.0;
    for (col, &t) in times.iter().enumerate() {
        let span = t - t_prev;
        if span > 0.0 {
            let steps = (span / dt_max).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            for _ in 0..steps {
                solver.step(dt);
            }
            let amp = solver.max_abs_overpressure();
            if !amp.is_finite() || amp > limit {
                return Err(Error::Unstable { t, amplitude: amp });
            }
        }
        for (dst, q) in fields.column_mut(col).iter_mut().zip(solver.overpressure()) {
            *dst = cfg.p0 + q;
        }
        t_prev = t;
    }
    Ok(Trajectory { times, fields, mu })
}

/// Solve every parameter (in parallel) and stack the trajectories.
pub fn generate_dataset(cfg: &FomConfig, params: &[f64]) -> Result<SnapshotSet> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("no parameters given".into()));
    }
    let trajectories: Vec<Trajectory> = params
        .par_iter()
        .map(|&mu| {
            solve_fom(cfg, mu).map_err(|e| Error::Parameter {
                mu,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let n_t = cfg.n_output_times;
    let n_h = cfg.grid.n_cells();
    let mut states = DMatrix::zeros(n_h, n_t * params.len());
    for (k, tr) in trajectories.iter().enumerate() {
        states.columns_mut(k * n_t, n_t).copy_from(&tr.fields);
    }
    SnapshotSet::new(
        states,
        cfg.output_times(),
        params.to_vec(),
        cfg.grid.clone(),
        cfg.p0,
    )
}
