//! Exact continuous-time simulation of the microscopic two-type jump
//! process on a periodic torus.
//!
//! Each type-`i` particle at `x` jumps to `y` with rate density
//! `a_i(x - y) exp(-sum_z phi_i(y - z))`, the sum running over particles of
//! the other type. The simulator uses Gillespie sampling with thinning:
//! proposals fire at the exact marginal rate `alpha_i` per particle (the
//! jump-kernel mass), the displacement is drawn from `a_i / alpha_i`, and
//! the proposal is accepted with probability `exp(-energy)`. Because the
//! acceptance factor lies in `(0, 1]` this thinning is exact: accepted moves
//! occur at exactly the model rate, with no time discretization error.
//!
//! Interaction sums run over a uniform spatial hash with cell size at least
//! the potential cutoff, so neighbor queries return a superset of the
//! interacting particles and the cell-index energy equals the brute-force
//! energy bitwise (both accumulate in particle-id order). Distances are
//! minimum-image; potentials are truncated where they fall below 1e-12
//! (exact for the top-hat family).

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Field, GridSpec, KernelSpec};
use crate::kinetic::{DensityPair, ModelParams};
use crate::seeds::stream_rng;

const POTENTIAL_TAIL: f64 = 1e-12;

/// Microscopic state: two finite point sets on the torus `[0, L)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    pub box_length: f64,
    pub dimension: u8,
    /// positions per type; only the first `dimension` coordinates are used
    pub points: [Vec<[f64; 2]>; 2],
    pub sim_time: f64,
}

impl ParticleConfig {
    pub fn empty(box_length: f64, dimension: u8) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::UnsupportedDimension(dimension));
        }
        if !(box_length > 0.0) {
            return Err(Error::InvalidConfig("box_length must be positive".into()));
        }
        Ok(Self {
            box_length,
            dimension,
            points: [Vec::new(), Vec::new()],
            sim_time: 0.0,
        })
    }

    pub fn counts(&self) -> [usize; 2] {
        [self.points[0].len(), self.points[1].len()]
    }

    /// Signed minimum-image difference `a - b` per axis.
    pub fn min_image(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let l = self.box_length;
        let mut out = [0.0; 2];
        for ax in 0..self.dimension as usize {
            let mut d = a[ax] - b[ax];
            if d > 0.5 * l {
                d -= l;
            } else if d < -0.5 * l {
                d += l;
            }
            out[ax] = d;
        }
        out
    }

    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = self.min_image(a, b);
        match self.dimension {
            1 => d[0].abs(),
            _ => d[0].hypot(d[1]),
        }
    }

    fn wrap(&self, mut x: [f64; 2]) -> [f64; 2] {
        let l = self.box_length;
        for ax in 0..self.dimension as usize {
            x[ax] = x[ax].rem_euclid(l);
            if x[ax] >= l {
                // rem_euclid can return l for tiny negative inputs
                x[ax] = 0.0;
            }
        }
        x
    }
}

/// Draw a Poisson configuration: counts `~ Poisson(intensity_i L^d)`,
/// positions i.i.d. uniform.
pub fn init_poisson<R: Rng + ?Sized>(
    box_length: f64,
    dimension: u8,
    intensity0: f64,
    intensity1: f64,
    rng: &mut R,
) -> Result<ParticleConfig> {
    if intensity0 < 0.0 || intensity1 < 0.0 {
        return Err(Error::InvalidConfig("intensities must be nonnegative".into()));
    }
    let mut config = ParticleConfig::empty(box_length, dimension)?;
    let volume = box_length.powi(dimension as i32);
    for (i, &intensity) in [intensity0, intensity1].iter().enumerate() {
        let mean = intensity * volume;
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::InvalidConfig(format!("poisson: {e}")))?
                .sample(rng) as usize
        } else {
            0
        };
        config.points[i] = (0..count)
            .map(|_| {
                let mut p = [0.0_f64; 2];
                for slot in p.iter_mut().take(dimension as usize) {
                    *slot = rng.gen_range(0.0..box_length);
                }
                p
            })
            .collect();
    }
    Ok(config)
}

/// Poisson configuration with piecewise-constant intensity given by density
/// fields: each grid cell receives `Poisson(value h^d / eps)` particles
/// placed uniformly inside it. With constant fields this reduces to
/// [`init_poisson`] at intensity `value / eps`.
pub fn init_poisson_from_fields<R: Rng + ?Sized>(
    rho: &DensityPair,
    eps: f64,
    rng: &mut R,
) -> Result<ParticleConfig> {
    let grid = rho.grid();
    let mut config = ParticleConfig::empty(grid.box_length(), grid.dimension())?;
    let h = grid.spacing();
    let cell_vol = grid.cell_volume();
    for i in 0..2 {
        let mut pts = Vec::new();
        for (idx, &value) in rho.component(i).values().iter().enumerate() {
            let mean = value.max(0.0) * cell_vol / eps;
            if mean <= 0.0 {
                continue;
            }
            let count = Poisson::new(mean)
                .map_err(|e| Error::InvalidConfig(format!("poisson: {e}")))?
                .sample(rng) as usize;
            let corner = grid.coordinate(idx);
            for _ in 0..count {
                let mut p = [0.0_f64; 2];
                for (ax, slot) in p.iter_mut().enumerate().take(grid.dimension() as usize) {
                    *slot = corner[ax] + rng.gen_range(0.0..h);
                }
                pts.push(config.wrap(p));
            }
        }
        config.points[i] = pts;
    }
    Ok(config)
}

/// Uniform spatial hash over the torus. Cell size never falls below the
/// interaction cutoff, so the 3^d neighborhood of a cell is a superset of
/// the interaction range.
#[derive(Debug, Clone)]
pub struct CellIndex {
    n_axis: usize,
    cell_size: f64,
    dimension: u8,
    cells: Vec<Vec<u32>>,
    cell_of: Vec<usize>,
}

impl CellIndex {
    pub fn new(box_length: f64, dimension: u8, r_cut: f64, positions: &[[f64; 2]]) -> Self {
        let n_axis = if r_cut > 0.0 {
            ((box_length / r_cut).floor() as usize).clamp(1, 128)
        } else {
            1
        };
        let cell_size = box_length / n_axis as f64;
        let n_cells = match dimension {
            1 => n_axis,
            _ => n_axis * n_axis,
        };
        let mut index = Self {
            n_axis,
            cell_size,
            dimension,
            cells: vec![Vec::new(); n_cells],
            cell_of: Vec::with_capacity(positions.len()),
        };
        for (id, &p) in positions.iter().enumerate() {
            let c = index.cell_of_position(p);
            index.cells[c].push(id as u32);
            index.cell_of.push(c);
        }
        index
    }

    fn axis_cell(&self, x: f64) -> usize {
        ((x / self.cell_size) as usize).min(self.n_axis - 1)
    }

    fn cell_of_position(&self, p: [f64; 2]) -> usize {
        match self.dimension {
            1 => self.axis_cell(p[0]),
            _ => self.axis_cell(p[0]) * self.n_axis + self.axis_cell(p[1]),
        }
    }

    /// Ids of all particles in the 3^d cells around `p` (deduplicated when
    /// the wrap makes neighborhoods overlap), in ascending id order.
    pub fn neighbors_into(&self, p: [f64; 2], out: &mut Vec<u32>) {
        out.clear();
        let n = self.n_axis as isize;
        let cx = self.axis_cell(p[0]) as isize;
        let mut visit = |cell: usize| out.extend_from_slice(&self.cells[cell]);
        match self.dimension {
            1 => {
                let mut seen = [usize::MAX; 3];
                for (k, dx) in (-1..=1).enumerate() {
                    let c = (cx + dx).rem_euclid(n) as usize;
                    if !seen[..k].contains(&c) {
                        visit(c);
                    }
                    seen[k] = c;
                }
            }
            _ => {
                let cy = self.axis_cell(p[1]) as isize;
                let mut seen: Vec<usize> = Vec::with_capacity(9);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let c = ((cx + dx).rem_euclid(n) * n + (cy + dy).rem_euclid(n)) as usize;
                        if !seen.contains(&c) {
                            seen.push(c);
                            visit(c);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }

    pub fn move_particle(&mut self, id: usize, new_pos: [f64; 2]) {
        let old_cell = self.cell_of[id];
        let new_cell = self.cell_of_position(new_pos);
        if old_cell == new_cell {
            return;
        }
        let slot = self.cells[old_cell]
            .iter()
            .position(|&q| q as usize == id)
            .expect("particle indexed in its cell");
        self.cells[old_cell].swap_remove(slot);
        self.cells[new_cell].push(id as u32);
        self.cell_of[id] = new_cell;
    }
}

#[derive(Debug, Clone, Copy)]
struct TruncatedPotential {
    spec: KernelSpec,
    r_cut: f64,
}

impl TruncatedPotential {
    fn new(spec: &KernelSpec) -> Self {
        Self {
            spec: *spec,
            r_cut: spec.cutoff_radius(POTENTIAL_TAIL),
        }
    }

    fn is_trivial(&self) -> bool {
        self.r_cut <= 0.0 || self.spec.amplitude() == 0.0
    }

    fn eval(&self, r: f64) -> f64 {
        if r <= self.r_cut {
            self.spec.eval(r).expect("r >= 0")
        } else {
            0.0
        }
    }
}

/// Per-run counters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimStats {
    pub events_attempted: [u64; 2],
    pub events_accepted: [u64; 2],
    pub clock_time: f64,
    pub rng_seed: u64,
}

impl SimStats {
    fn new(seed: u64) -> Self {
        Self {
            events_attempted: [0, 0],
            events_accepted: [0, 0],
            clock_time: 0.0,
            rng_seed: seed,
        }
    }

    pub fn acceptance_ratio(&self, i: usize) -> f64 {
        if self.events_attempted[i] == 0 {
            1.0
        } else {
            self.events_accepted[i] as f64 / self.events_attempted[i] as f64
        }
    }
}

/// One Gillespie event (proposal), accepted or not.
#[derive(Debug, Clone, Copy)]
pub struct EventRecord {
    pub time: f64,
    pub particle_type: usize,
    pub particle_index: usize,
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub accepted: bool,
}

/// A particle configuration wired to its interaction tables and spatial
/// indexes, ready to step.
pub struct Simulation {
    config: ParticleConfig,
    model: ModelParams,
    alphas: [f64; 2],
    potentials: [TruncatedPotential; 2],
    index: [CellIndex; 2],
    stats: SimStats,
    scratch: Vec<u32>,
}

impl Simulation {
    pub fn new(config: ParticleConfig, model: &ModelParams, seed: u64) -> Result<Self> {
        if config.dimension != model.dimension() {
            return Err(Error::GridMismatch(
                "configuration dimension differs from model".into(),
            ));
        }
        let potentials = [
            TruncatedPotential::new(model.potential(0)),
            TruncatedPotential::new(model.potential(1)),
        ];
        // cell size must cover both potentials' reach
        let r_cut = potentials[0].r_cut.max(potentials[1].r_cut);
        let index = [
            CellIndex::new(config.box_length, config.dimension, r_cut, &config.points[0]),
            CellIndex::new(config.box_length, config.dimension, r_cut, &config.points[1]),
        ];
        Ok(Self {
            config,
            model: *model,
            alphas: [model.alpha(0), model.alpha(1)],
            potentials,
            index,
            stats: SimStats::new(seed),
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.config
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    fn total_rate(&self) -> f64 {
        self.alphas[0] * self.config.points[0].len() as f64
            + self.alphas[1] * self.config.points[1].len() as f64
    }

    /// Interaction energy a type-`i` particle would feel at destination `y`:
    /// `sum_z phi_i(|y - z|)` over particles `z` of the other type, via the
    /// cell index. Terms accumulate in ascending particle-id order.
    pub fn interaction_energy(&mut self, mover_type: usize, y: [f64; 2]) -> f64 {
        if self.potentials[mover_type].is_trivial() {
            return 0.0;
        }
        let other = 1 - mover_type;
        let mut scratch = std::mem::take(&mut self.scratch);
        self.index[other].neighbors_into(y, &mut scratch);
        let mut energy = 0.0;
        for &id in &scratch {
            let z = self.config.points[other][id as usize];
            let r = self.config.distance(y, z);
            energy += self.potentials[mover_type].eval(r);
        }
        self.scratch = scratch;
        energy
    }

    /// Reference energy summing over every particle of the other type,
    /// bypassing the cell index. Equals [`Self::interaction_energy`]
    /// exactly (same truncation, same summation order).
    pub fn interaction_energy_brute(&self, mover_type: usize, y: [f64; 2]) -> f64 {
        if self.potentials[mover_type].is_trivial() {
            return 0.0;
        }
        let other = 1 - mover_type;
        let mut energy = 0.0;
        for z in &self.config.points[other] {
            let r = self.config.distance(y, *z);
            energy += self.potentials[mover_type].eval(r);
        }
        energy
    }

    /// Exponential waiting time to the next proposal, or `None` when the
    /// total rate is zero (nothing will ever move).
    fn waiting_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let rate = self.total_rate();
        if rate <= 0.0 {
            return None;
        }
        let e: f64 = rand_distr::Exp1.sample(rng);
        Some(e / rate)
    }

    /// Proposal + thinning at the current clock. Selects the moving type
    /// with probability proportional to `alpha_i N_i`, a particle of that
    /// type uniformly, draws the displacement from the jump kernel, and
    /// accepts with probability `exp(-energy)`.
    fn attempt<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventRecord> {
        let w0 = self.alphas[0] * self.config.points[0].len() as f64;
        let total = self.total_rate();
        let i = if rng.gen_range(0.0..total) < w0 { 0 } else { 1 };
        let j = rng.gen_range(0..self.config.points[i].len());
        let from = self.config.points[i][j];
        let xi = self.model.jump_kernel(i).sample_displacement(self.config.dimension, rng)?;
        let to = self.config.wrap([from[0] + xi[0], from[1] + xi[1]]);
        let energy = self.interaction_energy(i, to);
        let accepted = rng.gen::<f64>() < (-energy).exp();
        self.stats.events_attempted[i] += 1;
        if accepted {
            self.config.points[i][j] = to;
            self.index[i].move_particle(j, to);
            self.stats.events_accepted[i] += 1;
        }
        Ok(EventRecord {
            time: self.config.sim_time,
            particle_type: i,
            particle_index: j,
            from,
            to,
            accepted,
        })
    }

    /// Advance the clock to the next proposal and execute it.
    pub fn event_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventRecord> {
        if self.config.counts().iter().sum::<usize>() == 0 {
            return Err(Error::EmptyConfiguration);
        }
        let dt = self
            .waiting_time(rng)
            .ok_or_else(|| Error::Integrator("total jump rate is zero".into()))?;
        self.config.sim_time += dt;
        self.stats.clock_time = self.config.sim_time;
        self.attempt(rng)
    }
}

/// Single Gillespie event on a bare configuration (builds the interaction
/// tables, steps once, and returns the updated configuration). For event
/// loops prefer a long-lived [`Simulation`].
pub fn event_step<R: Rng + ?Sized>(
    config: ParticleConfig,
    model: &ModelParams,
    rng: &mut R,
) -> Result<(ParticleConfig, EventRecord)> {
    let mut sim = Simulation::new(config, model, 0)?;
    let record = sim.event_step(rng)?;
    Ok((sim.config, record))
}

/// A configuration snapshot at a fixed simulated time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub config: ParticleConfig,
}

/// Output of a trajectory run.
pub struct SimOutput {
    pub snapshots: Vec<Snapshot>,
    pub stats: SimStats,
}

/// Simulate to `t_end`, recording snapshots every `snapshot_every` units of
/// simulated time (plus the initial state, plus `t_end` when it is not on
/// the cadence). Deterministic given the seed: identical seed and initial
/// configuration reproduce the event sequence bitwise. Jumps preserve the
/// particle count of each type.
pub fn simulate(
    config0: &ParticleConfig,
    model: &ModelParams,
    t_end: f64,
    snapshot_every: f64,
    rng_seed: u64,
) -> Result<SimOutput> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidConfig("t_end must be nonnegative".into()));
    }
    if !(snapshot_every > 0.0) {
        return Err(Error::InvalidConfig("snapshot_every must be positive".into()));
    }
    let mut rng = stream_rng(rng_seed, &[]);
    let mut sim = Simulation::new(config0.clone(), model, rng_seed)?;
    sim.config.sim_time = 0.0;

    let mut snap_times: Vec<f64> = Vec::new();
    let n_full = (t_end / snapshot_every + 1e-9).floor() as usize;
    for k in 0..=n_full {
        snap_times.push(k as f64 * snapshot_every);
    }
    if t_end - n_full as f64 * snapshot_every > 1e-9 * snapshot_every {
        snap_times.push(t_end);
    }

    let mut snapshots: Vec<Snapshot> = Vec::with_capacity(snap_times.len());
    let mut next_snap = 0usize;
    let take = |sim: &Simulation, time: f64| Snapshot {
        time,
        config: ParticleConfig {
            sim_time: time,
            ..sim.config.clone()
        },
    };

    // state at t = 0
    while next_snap < snap_times.len() && snap_times[next_snap] <= 0.0 {
        snapshots.push(take(&sim, snap_times[next_snap]));
        next_snap += 1;
    }

    if sim.config.counts().iter().sum::<usize>() > 0 {
        loop {
            let Some(dt) = sim.waiting_time(&mut rng) else {
                break;
            };
            let t_next = sim.config.sim_time + dt;
            // snapshots strictly before the next event carry the pre-event state
            while next_snap < snap_times.len() && snap_times[next_snap] < t_next.min(t_end) + 1e-18
            {
                if snap_times[next_snap] < t_next {
                    snapshots.push(take(&sim, snap_times[next_snap]));
                    next_snap += 1;
                } else {
                    break;
                }
            }
            if t_next > t_end {
                break;
            }
            sim.config.sim_time = t_next;
            sim.stats.clock_time = t_next;
            sim.attempt(&mut rng)?;
        }
    }
    // remaining snapshots (rate hit zero or t_end reached)
    while next_snap < snap_times.len() {
        snapshots.push(take(&sim, snap_times[next_snap]));
        next_snap += 1;
    }
    sim.config.sim_time = t_end;
    sim.stats.clock_time = t_end;

    Ok(SimOutput {
        snapshots,
        stats: sim.stats,
    })
}

/// Histogram estimator of the density pair from an ensemble of
/// configurations observed at a common time: counts per grid cell divided
/// by cell volume and ensemble size.
pub fn empirical_density(configs: &[&ParticleConfig], grid: GridSpec) -> Result<DensityPair> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("empty ensemble".into()));
    }
    for c in configs {
        if c.dimension != grid.dimension()
            || (c.box_length - grid.box_length()).abs() > 1e-12 * grid.box_length()
        {
            return Err(Error::GridMismatch(
                "configuration box does not match the grid".into(),
            ));
        }
    }
    let h = grid.spacing();
    let norm = 1.0 / (grid.cell_volume() * configs.len() as f64);
    let mut fields = [Field::zeros(grid), Field::zeros(grid)];
    for config in configs {
        for i in 0..2 {
            for p in &config.points[i] {
                let ij = [
                    ((p[0] / h) as isize).min(grid.points() as isize - 1),
                    ((p[1] / h) as isize).min(grid.points() as isize - 1),
                ];
                let idx = grid.flat_index(ij);
                fields[i].values_mut()[idx] += norm;
            }
        }
    }
    let [f0, f1] = fields;
    DensityPair::new(f0, f1)
}

/// Outcome of the correlation-envelope check at one observation time.
#[derive(Debug, Clone, Serialize)]
pub struct SubpoissonReport {
    pub time: f64,
    pub order1_ok: bool,
    pub order2_ok: bool,
    /// worst z-score of the order-1 estimates against their bound
    pub worst_z1: f64,
    /// worst z-score of the order-2 (factorial pair) estimates
    pub worst_z2: f64,
    pub cells: usize,
    pub pairs: usize,
}

impl SubpoissonReport {
    pub fn passed(&self) -> bool {
        self.order1_ok && self.order2_ok
    }
}

/// Check the propagated moment envelope on an ensemble observed at time `t`:
/// densities of type `i` must stay below `C e^{alpha_i t}` and factorial
/// two-point densities below `C^2 e^{2 alpha_i t}`, both with `3 SE`
/// statistical slack estimated across replicas. Report-only.
pub fn subpoisson_check(
    ensemble: &[&ParticleConfig],
    model: &ModelParams,
    c: f64,
    t: f64,
    grid: GridSpec,
) -> Result<SubpoissonReport> {
    let reps = ensemble.len();
    if reps < 2 {
        return Err(Error::InvalidConfig(
            "need at least two replicas for standard errors".into(),
        ));
    }
    let cells = grid.num_cells();
    let h = grid.spacing();
    let vol = grid.cell_volume();
    // counts[i][replica][cell]
    let mut counts = vec![vec![vec![0.0_f64; cells]; reps]; 2];
    for (r, config) in ensemble.iter().enumerate() {
        for i in 0..2 {
            for p in &config.points[i] {
                let ij = [
                    ((p[0] / h) as isize).min(grid.points() as isize - 1),
                    ((p[1] / h) as isize).min(grid.points() as isize - 1),
                ];
                counts[i][r][grid.flat_index(ij)] += 1.0;
            }
        }
    }

    let z_score = |samples: &[f64], bound: f64| -> f64 {
        let est = crate::stats::mean(samples);
        let se = crate::stats::standard_error(samples);
        if se > 0.0 {
            (est - bound) / se
        } else if est <= bound {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    };

    let mut worst_z1 = f64::NEG_INFINITY;
    let mut worst_z2 = f64::NEG_INFINITY;
    let mut pairs = 0usize;
    for i in 0..2 {
        let bound1 = c * (model.alpha(i) * t).exp();
        let bound2 = c * c * (2.0 * model.alpha(i) * t).exp();
        let mut density = vec![0.0_f64; reps];
        for cell in 0..cells {
            for r in 0..reps {
                density[r] = counts[i][r][cell] / vol;
            }
            worst_z1 = worst_z1.max(z_score(&density, bound1));
        }
        // factorial pair densities over all unordered cell pairs
        let mut pair_density = vec![0.0_f64; reps];
        for a in 0..cells {
            for b in a..cells {
                for r in 0..reps {
                    let na = counts[i][r][a];
                    pair_density[r] = if a == b {
                        na * (na - 1.0) / (vol * vol)
                    } else {
                        na * counts[i][r][b] / (vol * vol)
                    };
                }
                worst_z2 = worst_z2.max(z_score(&pair_density, bound2));
                pairs += 1;
            }
        }
    }

    Ok(SubpoissonReport {
        time: t,
        order1_ok: worst_z1 <= 3.0,
        order2_ok: worst_z2 <= 3.0,
        worst_z1,
        worst_z2,
        cells,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::stats;

    fn free_model() -> ModelParams {
        ModelParams::new(
            1,
            [
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
            ],
            [
                KernelSpec::gaussian(0.0, 1.0).unwrap(),
                KernelSpec::gaussian(0.0, 1.0).unwrap(),
            ],
        )
        .unwrap()
    }

    fn interacting_model() -> ModelParams {
        ModelParams::new(
            1,
            [
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
            ],
            [
                KernelSpec::gaussian(0.8, 0.8).unwrap(),
                KernelSpec::tophat(0.6, 1.0).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn poisson_counts_and_fano() {
        let mut rng = stream_rng(11, &[]);
        let replicas = 1000;
        let counts: Vec<f64> = (0..replicas)
            .map(|_| {
                init_poisson(10.0, 1, 5.0, 0.0, &mut rng).unwrap().points[0].len() as f64
            })
            .collect();
        let mean = stats::mean(&counts);
        let var = stats::variance(&counts);
        // mean within 3 sigma of 50
        assert!((mean - 50.0).abs() < 3.0 * (50.0_f64 / replicas as f64).sqrt());
        let fano = var / mean;
        assert!((fano - 1.0).abs() < 0.1, "fano {fano}");
        // zero intensity gives an empty type
        let cfg = init_poisson(10.0, 1, 0.0, 1.0, &mut rng).unwrap();
        assert!(cfg.points[0].is_empty());
        assert!(!cfg.points[1].is_empty());
    }

    #[test]
    fn free_jumps_accept_everything() {
        let mut rng = stream_rng(12, &[]);
        let config = init_poisson(10.0, 1, 3.0, 3.0, &mut rng).unwrap();
        let mut sim = Simulation::new(config, &free_model(), 12).unwrap();
        for _ in 0..2000 {
            let rec = sim.event_step(&mut rng).unwrap();
            assert!(rec.accepted);
        }
        assert_eq!(sim.stats().events_accepted, sim.stats().events_attempted);
    }

    #[test]
    fn single_pair_acceptance_is_boltzmann_factor() {
        // one particle per type: acceptance probability for a type-0 move
        // to distance r from the type-1 particle is e^{-phi_0(r)}
        let model = interacting_model();
        let mut config = ParticleConfig::empty(20.0, 1).unwrap();
        config.points[0] = vec![[5.0, 0.0]];
        config.points[1] = vec![[6.0, 0.0]];
        let mut sim = Simulation::new(config, &model, 0).unwrap();
        let y = [5.5, 0.0];
        let expected = model.potential(0).eval(0.5).unwrap();
        assert_eq!(sim.interaction_energy(0, y), expected);
        assert_eq!(sim.interaction_energy_brute(0, y), expected);
    }

    #[test]
    fn cell_index_energy_equals_brute_force_exactly() {
        let model = interacting_model();
        let mut rng = stream_rng(13, &[]);
        for trial in 0..1000 {
            let config = init_poisson(16.0, 1, 1.5, 1.5, &mut rng).unwrap();
            if config.counts().iter().sum::<usize>() == 0 {
                continue;
            }
            let mut sim = Simulation::new(config, &model, 0).unwrap();
            let y = [rng.gen_range(0.0..16.0), 0.0];
            for i in 0..2 {
                let fast = sim.interaction_energy(i, y);
                let brute = sim.interaction_energy_brute(i, y);
                assert!(
                    fast == brute,
                    "trial {trial} type {i}: {fast} != {brute} (bitwise)"
                );
            }
        }
        // and in two dimensions
        let model2 = ModelParams::new(
            2,
            [
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
            ],
            [
                KernelSpec::gaussian(0.8, 0.8).unwrap(),
                KernelSpec::tophat(0.6, 1.0).unwrap(),
            ],
        )
        .unwrap();
        for _ in 0..200 {
            let config = init_poisson(8.0, 2, 0.8, 0.8, &mut rng).unwrap();
            let mut sim = Simulation::new(config, &model2, 0).unwrap();
            let y = [rng.gen_range(0.0..8.0), rng.gen_range(0.0..8.0)];
            for i in 0..2 {
                assert_eq!(sim.interaction_energy(i, y), sim.interaction_energy_brute(i, y));
            }
        }
    }

    #[test]
    fn cell_index_stays_consistent_through_moves() {
        let model = interacting_model();
        let mut rng = stream_rng(14, &[]);
        let config = init_poisson(16.0, 1, 2.0, 2.0, &mut rng).unwrap();
        let mut sim = Simulation::new(config, &model, 0).unwrap();
        for k in 0..5000 {
            sim.event_step(&mut rng).unwrap();
            if k % 500 == 0 {
                let y = [rng.gen_range(0.0..16.0), 0.0];
                assert_eq!(sim.interaction_energy(0, y), sim.interaction_energy_brute(0, y));
            }
        }
    }

    #[test]
    fn simulate_is_reproducible_and_conserves_counts() {
        let model = interacting_model();
        let mut rng = stream_rng(15, &[]);
        let config = init_poisson(16.0, 1, 2.0, 2.0, &mut rng).unwrap();
        let counts = config.counts();
        let a = simulate(&config, &model, 1.0, 0.25, 99).unwrap();
        let b = simulate(&config, &model, 1.0, 0.25, 99).unwrap();
        assert_eq!(a.snapshots.len(), 5);
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.config, sb.config, "bit-identical under a fixed seed");
            assert_eq!(sa.config.counts(), counts);
        }
        assert_eq!(a.stats.events_attempted, b.stats.events_attempted);
        // a different seed produces a different sequence
        let c = simulate(&config, &model, 1.0, 0.25, 100).unwrap();
        assert_ne!(
            a.snapshots.last().unwrap().config,
            c.snapshots.last().unwrap().config
        );
    }

    #[test]
    fn simulate_t_end_zero_returns_initial() {
        let model = free_model();
        let mut rng = stream_rng(16, &[]);
        let config = init_poisson(10.0, 1, 1.0, 1.0, &mut rng).unwrap();
        let out = simulate(&config, &model, 0.0, 0.5, 1).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].config.points, config.points);
    }

    #[test]
    fn thinning_law_chi_square() {
        // one particle per type; type 1 frozen (alpha_1 = 0). accepted
        // destinations follow a_0(x-y) e^{-phi_0(y-z)} exactly
        let model = ModelParams::new(
            1,
            [
                KernelSpec::tophat(0.5, 2.0).unwrap(), // proposals uniform on [-2, 2]
                KernelSpec::tophat(0.0, 1.0).unwrap(), // frozen type
            ],
            [
                KernelSpec::gaussian(1.5, 0.7).unwrap(),
                KernelSpec::gaussian(0.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let l = 20.0;
        let x0 = [8.0, 0.0];
        let z = [9.0, 0.0];
        let mut base = ParticleConfig::empty(l, 1).unwrap();
        base.points[0] = vec![x0];
        base.points[1] = vec![z];

        let mut rng = stream_rng(17, &[]);
        let phi = TruncatedPotential::new(model.potential(0));
        let weight = |y: f64| {
            let mut d = (y - z[0]).abs();
            if d > l / 2.0 {
                d = l - d;
            }
            (-phi.eval(d)).exp()
        };

        // analytic bin probabilities on [x0 - 2, x0 + 2] by fine Simpson
        let bins = 40;
        let (lo, hi) = (x0[0] - 2.0, x0[0] + 2.0);
        let bin_w = (hi - lo) / bins as f64;
        let simpson = |a: f64, b: f64| {
            let n = 200; // even
            let h = (b - a) / n as f64;
            let mut s = weight(a) + weight(b);
            for k in 1..n {
                s += weight(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let mut expected: Vec<f64> = (0..bins)
            .map(|b| simpson(lo + b as f64 * bin_w, lo + (b + 1) as f64 * bin_w))
            .collect();
        let total: f64 = expected.iter().sum();

        let n_events = 100_000;
        let mut observed = vec![0.0_f64; bins];
        let mut collected = 0usize;
        while collected < n_events {
            let mut sim = Simulation::new(base.clone(), &model, 0).unwrap();
            let rec = sim.event_step(&mut rng).unwrap();
            assert_eq!(rec.particle_type, 0);
            if rec.accepted {
                // map back to the unwrapped displacement window
                let mut y = rec.to[0];
                if y < lo {
                    y += l;
                }
                if y > hi {
                    y -= l;
                }
                let b = (((y - lo) / bin_w) as usize).min(bins - 1);
                observed[b] += 1.0;
                collected += 1;
            }
        }
        for e in expected.iter_mut() {
            *e *= n_events as f64 / total;
        }
        let p = stats::chi_square_gof(&observed, &expected);
        assert!(p > 1e-3, "thinning chi-square p = {p}");
    }

    #[test]
    fn free_dynamics_preserves_poisson() {
        // phi = 0: uniform positions stay uniform (KS) and counts stay
        // Poisson across an ensemble (Fano)
        let model = free_model();
        let l = 10.0;
        let replicas = 500;
        let mut positions = Vec::new();
        let mut counts = Vec::new();
        for r in 0..replicas {
            let mut rng = stream_rng(18, &[r]);
            let config = init_poisson(l, 1, 3.0, 1.0, &mut rng).unwrap();
            let out = simulate(&config, &model, 1.0, 1.0, 1800 + r).unwrap();
            let fin = &out.snapshots.last().unwrap().config;
            counts.push(fin.points[0].len() as f64);
            positions.extend(fin.points[0].iter().map(|p| p[0] / l));
        }
        let (_, p) = stats::ks_uniform_p_value(&positions);
        assert!(p > 1e-3, "KS p = {p}");
        let fano = stats::variance(&counts) / stats::mean(&counts);
        assert!((fano - 1.0).abs() < 0.2, "fano {fano}");
    }

    #[test]
    fn empirical_density_basics() {
        let grid = GridSpec::new(1, 10.0, 10).unwrap();
        let mut config = ParticleConfig::empty(10.0, 1).unwrap();
        config.points[0] = vec![[2.5, 0.0]];
        let rho = empirical_density(&[&config], grid).unwrap();
        // single particle in cell 2 at density 1/h
        assert_eq!(rho.component(0).values()[2], 1.0);
        assert_eq!(
            rho.component(0).values().iter().filter(|&&v| v != 0.0).count(),
            1
        );
        // bookkeeping identity: integral equals count
        let mut rng = stream_rng(19, &[]);
        let config = init_poisson(10.0, 1, 4.0, 2.0, &mut rng).unwrap();
        let rho = empirical_density(&[&config], grid).unwrap();
        let (m0, m1) = crate::kinetic::mass_totals(&rho);
        assert!((m0 - config.points[0].len() as f64).abs() < 1e-9);
        assert!((m1 - config.points[1].len() as f64).abs() < 1e-9);
    }

    #[test]
    fn empirical_density_estimates_intensity() {
        let grid = GridSpec::new(1, 10.0, 20).unwrap();
        let replicas = 1000;
        let configs: Vec<ParticleConfig> = (0..replicas)
            .map(|r| {
                let mut rng = stream_rng(20, &[r]);
                init_poisson(10.0, 1, 5.0, 0.0, &mut rng).unwrap()
            })
            .collect();
        let refs: Vec<&ParticleConfig> = configs.iter().collect();
        let rho = empirical_density(&refs, grid).unwrap();
        // per-cell relative error O(1/sqrt(rho h R)) ~ 2%
        for &v in rho.component(0).values() {
            assert!((v - 5.0).abs() < 5.0 * 0.1, "cell density {v}");
        }
    }

    #[test]
    fn subpoisson_envelope_passes_and_control_fails() {
        // unit jump rates keep the envelope below 2C over the horizon, so
        // the doubled-intensity control is detectable at every checked time
        let model = ModelParams::new(
            1,
            [
                KernelSpec::tophat(0.5, 1.0).unwrap(),
                KernelSpec::tophat(0.5, 1.0).unwrap(),
            ],
            [
                KernelSpec::gaussian(0.8, 0.8).unwrap(),
                KernelSpec::tophat(0.6, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let grid = GridSpec::new(1, 10.0, 8).unwrap();
        let c = 1.0;
        let replicas = 200u64;
        let run_ensemble = |intensity: f64, tag: u64| -> Vec<ParticleConfig> {
            (0..replicas)
                .map(|r| {
                    let mut rng = stream_rng(21, &[tag, r]);
                    let config = init_poisson(10.0, 1, intensity, intensity, &mut rng).unwrap();
                    simulate(&config, &model, 0.3, 0.3, 2100 + r)
                        .unwrap()
                        .snapshots
                        .pop()
                        .unwrap()
                        .config
                })
                .collect()
        };
        let good = run_ensemble(c, 0);
        let refs: Vec<&ParticleConfig> = good.iter().collect();
        let report = subpoisson_check(&refs, &model, c, 0.3, grid).unwrap();
        assert!(report.passed(), "z1 {} z2 {}", report.worst_z1, report.worst_z2);

        // at t = 0 the density bound is tight: k^(1) = C exactly
        let t0: Vec<ParticleConfig> = (0..replicas)
            .map(|r| {
                let mut rng = stream_rng(22, &[r]);
                init_poisson(10.0, 1, c, c, &mut rng).unwrap()
            })
            .collect();
        let refs: Vec<&ParticleConfig> = t0.iter().collect();
        let report = subpoisson_check(&refs, &model, c, 0.0, grid).unwrap();
        assert!(report.order1_ok, "z1 {}", report.worst_z1);

        // negative control: doubled intensity violates the order-1 bound
        let bad = run_ensemble(2.0 * c, 1);
        let refs: Vec<&ParticleConfig> = bad.iter().collect();
        let report = subpoisson_check(&refs, &model, c, 0.3, grid).unwrap();
        assert!(!report.order1_ok, "z1 {}", report.worst_z1);
    }
}
