//! The scaling experiment connecting the particle simulator to the kinetic
//! solver.
//!
//! At scale `eps in (0, 1]` the potentials shrink to `eps phi_i` while the
//! initial Poisson intensities grow to `rho_{i,0} / eps`. Rescaled
//! correlation functions carry a factor `eps^{order}`, so at first order the
//! rescaled particle density is `eps` times the physical one — which is why
//! intensities must be `rho / eps` for the rescaled density to start at
//! `rho_0`. As `eps -> 0` the rescaled empirical density converges,
//! uniformly on the horizon, to the solution of the kinetic equations with
//! the *unscaled* potentials: `eps phi * (rho/eps) = phi * rho` leaves the
//! crowding factor invariant, and the jump part is linear.
//!
//! [`meso_experiment`] measures exactly that: for each `eps` it runs an
//! ensemble of particle trajectories, rescales their empirical densities,
//! and reports the sup-norm gap to the kinetic solution over shared
//! snapshot times, with bootstrap standard errors. No convergence rate is
//! asserted — only the trend.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::{integrate_rk4, DensityPair, KineticRunConfig, Method, ModelParams};
use crate::particles::{empirical_density, init_poisson_from_fields, simulate, ParticleConfig};
use crate::seeds::{derive_seed, stream_rng};

/// Replace both potentials `phi_i` by `eps phi_i`; jump kernels unchanged.
/// Derived constants follow the closed forms: `<eps phi_i> = eps <phi_i>`,
/// sup scales by `eps`.
pub fn scale_model(model: &ModelParams, eps: f64) -> Result<ModelParams> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::ScaleOutOfRange(eps));
    }
    model.with_scaled_potentials(eps)
}

/// Configuration of the scaling experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MesoRunConfig {
    /// scales, any order; the report sorts them descending
    pub epsilons: Vec<f64>,
    pub replicas: usize,
    pub t_end: f64,
    pub snapshot_every: f64,
    /// kinetic reference step size
    pub dt: f64,
    /// cap on expected particles per replica
    pub particle_budget: f64,
    pub bootstrap_resamples: usize,
}

impl Default for MesoRunConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![1.0, 0.5, 0.25, 0.125],
            replicas: 50,
            t_end: 0.5,
            snapshot_every: 0.1,
            dt: 1e-3,
            particle_budget: 1e6,
            bootstrap_resamples: 200,
        }
    }
}

/// Per-scale results of the experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    /// descending scales
    pub epsilons: Vec<f64>,
    /// sup over snapshots, cells, and types of |eps rho_hat - rho_kinetic|
    pub errors: Vec<f64>,
    /// bootstrap standard error of each entry of `errors`
    pub standard_errors: Vec<f64>,
    pub replicas: Vec<usize>,
    /// shared snapshot times of the comparison
    pub times: Vec<f64>,
}

impl ScalingReport {
    /// `(epsilon, error, se, replicas)` rows, ready for CSV.
    pub fn rows(&self) -> Vec<(f64, f64, f64, usize)> {
        (0..self.epsilons.len())
            .map(|k| {
                (
                    self.epsilons[k],
                    self.errors[k],
                    self.standard_errors[k],
                    self.replicas[k],
                )
            })
            .collect()
    }
}

/// Sup-norm gap between the eps-rescaled mean empirical density over the
/// chosen replica subset and the kinetic reference, over all snapshot
/// times, cells, and types.
fn sup_error(
    per_replica: &[Vec<DensityPair>],
    subset: &[usize],
    eps: f64,
    reference: &[DensityPair],
) -> f64 {
    let mut worst = 0.0_f64;
    let n = subset.len() as f64;
    for (k, kin) in reference.iter().enumerate() {
        for i in 0..2 {
            let cells = kin.component(i).values().len();
            for c in 0..cells {
                let mut acc = 0.0;
                for &r in subset {
                    acc += per_replica[r][k].component(i).values()[c];
                }
                let diff = eps * acc / n - kin.component(i).values()[c];
                worst = worst.max(diff.abs());
            }
        }
    }
    worst
}

/// Run the scaling experiment. For each `eps`: simulate `replicas` particle
/// trajectories with potentials `eps phi_i` from Poisson initial data of
/// intensity `rho_0 / eps`, rescale the empirical densities by `eps`, and
/// compare with the kinetic solution of the unscaled model on the shared
/// snapshot mesh. Replicas run in parallel; seeds derive from
/// `(seed, eps, replica)` so the report is reproducible.
pub fn meso_experiment(
    model: &ModelParams,
    rho0: &DensityPair,
    cfg: &MesoRunConfig,
    seed: u64,
) -> Result<ScalingReport> {
    if cfg.epsilons.is_empty() {
        return Err(Error::InvalidConfig("empty epsilon ladder".into()));
    }
    if cfg.replicas < 2 {
        return Err(Error::InvalidConfig("need at least two replicas".into()));
    }
    if rho0.min_value() < 0.0 {
        return Err(Error::InvalidConfig("initial densities must be nonnegative".into()));
    }
    let mut epsilons = cfg.epsilons.clone();
    for &e in &epsilons {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::ScaleOutOfRange(e));
        }
    }
    epsilons.sort_by(|a, b| b.partial_cmp(a).unwrap());
    epsilons.dedup();

    // budget check at the smallest scale (the most particles)
    let (m0, m1) = crate::kinetic::mass_totals(rho0);
    let eps_min = *epsilons.last().expect("nonempty");
    let expected = (m0 + m1) / eps_min;
    if expected > cfg.particle_budget {
        return Err(Error::BudgetExceeded {
            expected,
            budget: cfg.particle_budget,
        });
    }

    // kinetic reference on the unscaled model
    let kin_cfg = KineticRunConfig {
        t_end: cfg.t_end,
        dt: cfg.dt,
        method: Method::Rk4,
        snapshot_every: cfg.snapshot_every,
        ..Default::default()
    };
    let reference = integrate_rk4(rho0, model, &kin_cfg)?.trajectory;

    let grid = rho0.grid();
    let mut errors = Vec::with_capacity(epsilons.len());
    let mut standard_errors = Vec::with_capacity(epsilons.len());
    let mut replica_counts = Vec::with_capacity(epsilons.len());

    for &eps in &epsilons {
        let scaled = scale_model(model, eps)?;
        let per_replica: Vec<Vec<DensityPair>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| -> Result<Vec<DensityPair>> {
                let tags = [eps.to_bits(), r as u64, 0];
                let mut rng = stream_rng(seed, &tags);
                let config0: ParticleConfig = init_poisson_from_fields(rho0, eps, &mut rng)?;
                let out = simulate(
                    &config0,
                    &scaled,
                    cfg.t_end,
                    cfg.snapshot_every,
                    derive_seed(seed, &[eps.to_bits(), r as u64, 1]),
                )?;
                if out.snapshots.len() != reference.times.len() {
                    return Err(Error::GridMismatch(
                        "snapshot meshes of simulator and solver differ".into(),
                    ));
                }
                out.snapshots
                    .iter()
                    .map(|s| empirical_density(&[&s.config], grid))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;

        let all: Vec<usize> = (0..cfg.replicas).collect();
        let err = sup_error(&per_replica, &all, eps, &reference.states);

        // replica bootstrap for the statistic's spread
        let mut boot_rng = stream_rng(seed, &[eps.to_bits(), u64::MAX]);
        let mut boot = Vec::with_capacity(cfg.bootstrap_resamples);
        for _ in 0..cfg.bootstrap_resamples {
            let subset: Vec<usize> = (0..cfg.replicas)
                .map(|_| rand::Rng::gen_range(&mut boot_rng, 0..cfg.replicas))
                .collect();
            boot.push(sup_error(&per_replica, &subset, eps, &reference.states));
        }
        let se = crate::stats::variance(&boot).sqrt();

        errors.push(err);
        standard_errors.push(se);
        replica_counts.push(cfg.replicas);
    }

    Ok(ScalingReport {
        epsilons,
        errors,
        standard_errors,
        replicas: replica_counts,
        times: reference.times.clone(),
    })
}
