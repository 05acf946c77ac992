//! Stationary states of the density system and their stability.
//!
//! Constant profiles `(C_0, C_1)` are stationary for any kernels. They are
//! parameterized by `(Ct_0, Ct_1)` through
//!
//! ```text
//! Ct_0 = C_0 exp(<phi_0> C_1),     Ct_1 = C_1 exp(<phi_1> C_0),
//! ```
//!
//! and classified by the product `P = C_0 C_1 <phi_0> <phi_1>`: locally
//! stable for `P < 1`, unstable against integrable spatial perturbations for
//! `P > 1`. In the symmetric parameterization `<phi_1> Ct_0 = <phi_0> Ct_1
//! = a` the constants reduce to the transcendental system `x e^y = a`,
//! `y e^x = a`, which bifurcates at `a = e` from one solution to three.
//!
//! # Dispersion relation
//!
//! Linearizing the density system around `(C_0, C_1)` with perturbations
//! `~ e^{i p x}` gives the mode matrix
//!
//! ```text
//! M(p) = [ A_0              -C_0 phihat_0(p) A_0 ]
//!        [ -C_1 phihat_1(p) A_1              A_1 ],
//! A_i = exp(-<phi_i> C_{1-i}) (ahat_i(p) - alpha_i)  <=  0.
//! ```
//!
//! Derivation sketch: perturbing `rho_i = C_i + eps_i` in the right-hand
//! side, the gain and loss terms contribute `(ahat_i - alpha_i) eps_i` from
//! the direct dependence and `C_i phihat_i (ahat_i - alpha_i) eps_{1-i}`
//! from the crowding factor, all damped by `exp(-<phi_i> C_{1-i})`. The
//! off-diagonal signs here follow the convention that flips the sign of one
//! perturbation component; the conjugation by `diag(1, -1)` leaves the
//! spectrum unchanged, and
//!
//! ```text
//! det M(p) = A_0 A_1 [1 - C_0 C_1 phihat_0(p) phihat_1(p)],
//! ```
//!
//! so the zero-eigenvalue locus is exactly the static criterion
//! `[1 - C_0 C_1 phihat_0 phihat_1(p)] [alpha_i - ahat_i(p)] = 0`. One
//! eigenvalue is positive iff `C_0 C_1 phihat_0 phihat_1(p) > 1` with both
//! `A_i < 0`: spatial symmetry breaking of the uniform state.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::PeriodicConvolver;
use crate::kinetic::{DensityPair, ModelParams};

/// Stability classification of a constant stationary solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

const CLASSIFY_TOL: f64 = 1e-9;

/// A constant stationary solution with its parameters and classification.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StationaryPoint {
    pub c0: f64,
    pub c1: f64,
    pub ctilde0: f64,
    pub ctilde1: f64,
    /// `C_0 C_1 <phi_0> <phi_1>`
    pub product: f64,
    pub classification: Classification,
}

/// One point of the dispersion relation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DispersionPoint {
    pub p: f64,
    /// `C_0 C_1 phihat_0(p) phihat_1(p)`
    pub product_hat: f64,
    /// eigenvalues of the mode matrix, sorted descending; for the rare
    /// complex pair both entries carry the common real part
    pub growth_rates: [f64; 2],
}

/// Classify by the product `C_0 C_1 <phi_0> <phi_1>` with threshold 1;
/// ties within 1e-9 are reported marginal, never silently resolved.
pub fn classify_stability(c0: f64, c1: f64, model: &ModelParams) -> (Classification, f64) {
    let product = c0 * c1 * model.phi_mass(0) * model.phi_mass(1);
    let class = if product < 1.0 - CLASSIFY_TOL {
        Classification::Stable
    } else if product > 1.0 + CLASSIFY_TOL {
        Classification::Unstable
    } else {
        Classification::Marginal
    };
    (class, product)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64, rel_tol: f64) -> f64 {
    let (flo, fhi) = (f(lo), f(hi));
    debug_assert!(flo * fhi <= 0.0, "bisection bracket without sign change");
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    let lo_sign = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * hi.abs().max(1.0) {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Newton polish of a bisection seed; falls back to the seed on stall.
fn newton_polish(seed: f64, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> f64 {
    let mut x = seed;
    for _ in 0..8 {
        let d = df(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = f(x) / d;
        let next = x - step;
        if !next.is_finite() {
            break;
        }
        x = next;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Solve the symmetric constant-solution system `x e^y = a`, `y e^x = a`.
///
/// Always returns the symmetric root `(x_s, x_s)` with `x_s e^{x_s} = a`;
/// for `a > e` additionally the asymmetric pair `(x_1, x_3)` and its mirror,
/// found from the scalar reduction `y exp(a e^{-y}) = a` on `y > x_s`.
/// Roots are accurate to 1e-12.
pub fn symmetric_roots(a: f64) -> Result<Vec<(f64, f64)>> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "symmetric parameter must be positive, got {a}"
        )));
    }
    let f = |x: f64| x * x.exp() - a;
    let hi = (a.ln() + 2.0).max(1.0);
    let xs = bisect(0.0, hi, f, 1e-14);
    let xs = newton_polish(xs, f, |x| (1.0 + x) * x.exp());
    let mut roots = vec![(xs, xs)];

    if a > std::f64::consts::E {
        // log form of y exp(a e^{-y}) = a is better conditioned
        let g = |y: f64| y.ln() + a * (-y).exp() - a.ln();
        let dg = |y: f64| 1.0 / y - a * (-y).exp();
        // g(xs) = 0 and g decreases just above xs (since xs > 1); march to a
        // positive value to bracket the second root. When a is so close to e
        // that the branches have not separated beyond floating resolution,
        // only the symmetric root is distinguishable and returned.
        let lo = xs * (1.0 + 1e-6);
        if g(lo) < 0.0 {
            let mut hi = lo * 2.0;
            while g(hi) < 0.0 {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::InvalidConfig(
                        "failed to bracket the asymmetric root".into(),
                    ));
                }
            }
            let x3 = newton_polish(bisect(lo, hi, g, 1e-14), g, dg);
            let x1 = a * (-x3).exp();
            // one Newton step on the second equation tightens x1
            let x1 = newton_polish(x1, |x| x3 * x.exp() - a, |x| x3 * x.exp());
            roots.push((x1, x3));
            roots.push((x3, x1));
        }
    }
    Ok(roots)
}

/// Find all constant stationary solutions for given `(Ct_0, Ct_1)`.
///
/// Reduces the parameterization to the scalar equation
/// `C_1 = Ct_1 exp(-<phi_1> Ct_0 exp(-<phi_0> C_1))`, scans `[0, Ct_1]`
/// for sign changes of the residual (10^4 points), bisects each bracket to
/// 1e-12 relative, reconstructs `C_0`, and classifies. The scalar map is
/// continuous from `[0, Ct_1]` into itself, so at least one root always
/// exists.
pub fn constant_solutions(
    ctilde0: f64,
    ctilde1: f64,
    model: &ModelParams,
) -> Result<Vec<StationaryPoint>> {
    if !(ctilde0 > 0.0) || !(ctilde1 > 0.0) {
        return Err(Error::InvalidConfig(
            "constant_solutions requires positive parameters".into(),
        ));
    }
    let phi0 = model.phi_mass(0);
    let phi1 = model.phi_mass(1);
    let c0_of = |c1: f64| ctilde0 * (-phi0 * c1).exp();
    let residual = |c1: f64| c1 - ctilde1 * (-phi1 * c0_of(c1)).exp();

    const SCAN_POINTS: usize = 10_000;
    let mut roots: Vec<f64> = Vec::new();
    let step = ctilde1 / SCAN_POINTS as f64;
    let mut prev_x = 0.0;
    let mut prev_f = residual(0.0);
    for k in 1..=SCAN_POINTS {
        let x = k as f64 * step;
        let fx = residual(x);
        if prev_f == 0.0 {
            roots.push(prev_x);
        } else if prev_f * fx < 0.0 {
            roots.push(bisect(prev_x, x, residual, 1e-13));
        }
        prev_x = x;
        prev_f = fx;
    }
    if prev_f == 0.0 {
        roots.push(prev_x);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));

    Ok(roots
        .into_iter()
        .map(|c1| {
            let c0 = c0_of(c1);
            let (classification, product) = classify_stability(c0, c1, model);
            StationaryPoint {
                c0,
                c1,
                ctilde0,
                ctilde1,
                product,
                classification,
            }
        })
        .collect())
}

/// `C_0 C_1 phihat_0(p) phihat_1(p)` with the analytic transforms.
pub fn product_hat(p: f64, c0: f64, c1: f64, model: &ModelParams) -> Result<f64> {
    let d = model.dimension();
    Ok(c0 * c1 * model.potential(0).fourier(p, d)? * model.potential(1).fourier(p, d)?)
}

/// Smallest positive wavenumber where `C_0 C_1 phihat_0(p) phihat_1(p)`
/// crosses 1, or `None` when the product never exceeds 1. The crossing marks
/// the onset of spatial symmetry breaking.
pub fn critical_wavenumber(c0: f64, c1: f64, model: &ModelParams) -> Result<Option<f64>> {
    let at = |p: f64| product_hat(p, c0, c1, model);
    if at(0.0)? <= 1.0 {
        return Ok(None);
    }
    // transform decay guarantees the product eventually drops below 1
    let mut p_max = 1.0 / model.potential(0).range().min(model.potential(1).range());
    while at(p_max)? >= 1.0 {
        p_max *= 2.0;
        if p_max > 1e12 {
            return Err(Error::InvalidConfig(
                "no decay of the transform product; kernels invalid".into(),
            ));
        }
    }
    const SCAN: usize = 4096;
    let step = p_max / SCAN as f64;
    let mut prev = 0.0;
    for k in 1..=SCAN {
        let p = k as f64 * step;
        if at(p)? < 1.0 {
            let f = |q: f64| product_hat(q, c0, c1, model).expect("validated model") - 1.0;
            let root = bisect(prev, p, f, 1e-12);
            return Ok(Some(root));
        }
        prev = p;
    }
    Ok(None)
}

/// Mode matrix eigenvalues at radial wavenumber `p` (see the module docs for
/// the matrix and its derivation). One growth rate is positive exactly when
/// `product_hat > 1` and both jump-kernel factors are strictly negative.
pub fn dispersion_growth(p: f64, c0: f64, c1: f64, model: &ModelParams) -> Result<DispersionPoint> {
    if !(p >= 0.0) {
        return Err(Error::NegativeRadius(p));
    }
    let d = model.dimension();
    let a: [f64; 2] = [
        (-model.phi_mass(0) * c1).exp() * (model.jump_kernel(0).fourier(p, d)? - model.alpha(0)),
        (-model.phi_mass(1) * c0).exp() * (model.jump_kernel(1).fourier(p, d)? - model.alpha(1)),
    ];
    let ph = product_hat(p, c0, c1, model)?;
    let trace = a[0] + a[1];
    let det = a[0] * a[1] * (1.0 - ph);
    let disc = trace * trace - 4.0 * det;
    let growth_rates = if disc >= 0.0 {
        let s = disc.sqrt();
        [(trace + s) / 2.0, (trace - s) / 2.0]
    } else {
        [trace / 2.0, trace / 2.0]
    };
    Ok(DispersionPoint {
        p,
        product_hat: ph,
        growth_rates,
    })
}

/// Which stationary system a residual is measured against.
#[derive(Debug, Clone, Copy)]
pub enum ResidualSystem {
    /// the full gain/loss balance of the density system
    FullBalance,
    /// the reduced exponential form with explicit parameters
    BirthDeath { ctilde0: f64, ctilde1: f64 },
}

/// Sup-norm residuals of a candidate stationary profile, one per component.
pub fn stationary_residual(
    rho: &DensityPair,
    model: &ModelParams,
    which: ResidualSystem,
) -> Result<(f64, f64)> {
    let grid = rho.grid();
    if grid.dimension() != model.dimension() {
        return Err(Error::GridMismatch(
            "state grid dimension differs from model".into(),
        ));
    }
    let mut out = [0.0_f64; 2];
    match which {
        ResidualSystem::FullBalance => {
            for i in 0..2 {
                let conv_a = PeriodicConvolver::new(model.jump_kernel(i), grid)?;
                let conv_phi = PeriodicConvolver::new(model.potential(i), grid)?;
                let gain = conv_a.convolve(rho.component(i))?;
                let damp = conv_phi.convolve(rho.component(1 - i))?.map(|v| (-v).exp());
                let loss = conv_a.convolve(&damp)?;
                let mut sup: f64 = 0.0;
                for c in 0..grid.num_cells() {
                    let r = gain.values()[c] * damp.values()[c]
                        - rho.component(i).values()[c] * loss.values()[c];
                    sup = sup.max(r.abs());
                }
                out[i] = sup;
            }
        }
        ResidualSystem::BirthDeath { ctilde0, ctilde1 } => {
            let ct = [ctilde0, ctilde1];
            for i in 0..2 {
                let conv_phi = PeriodicConvolver::new(model.potential(i), grid)?;
                let damp = conv_phi.convolve(rho.component(1 - i))?.map(|v| (-v).exp());
                let mut sup: f64 = 0.0;
                for c in 0..grid.num_cells() {
                    let r = rho.component(i).values()[c] - ct[i] * damp.values()[c];
                    sup = sup.max(r.abs());
                }
                out[i] = sup;
            }
        }
    }
    Ok((out[0], out[1]))
}

/// The nonlinear perturbation map around a constant solution:
/// `Phi(eps) = (C_0 [exp(-(phi_0 * eps_1)) - 1], C_1 [exp(-(phi_1 * eps_0)) - 1])`.
/// Nonzero fixed points are exactly the nonuniform stationary profiles
/// `C + eps` sharing the constants' parameters.
pub fn perturbation_map(
    eps: &DensityPair,
    c0: f64,
    c1: f64,
    model: &ModelParams,
) -> Result<DensityPair> {
    let grid = eps.grid();
    let conv0 = PeriodicConvolver::new(model.potential(0), grid)?;
    let conv1 = PeriodicConvolver::new(model.potential(1), grid)?;
    let comp0 = conv0
        .convolve(eps.component(1))?
        .map(|v| c0 * ((-v).exp() - 1.0));
    let comp1 = conv1
        .convolve(eps.component(0))?
        .map(|v| c1 * ((-v).exp() - 1.0));
    DensityPair::new(comp0, comp1)
}

/// Derivative of [`perturbation_map`] at zero:
/// `Phi'(eps) = (-C_0 (phi_0 * eps_1), -C_1 (phi_1 * eps_0))`.
pub fn frechet_apply(
    eps: &DensityPair,
    c0: f64,
    c1: f64,
    model: &ModelParams,
) -> Result<DensityPair> {
    let grid = eps.grid();
    let conv0 = PeriodicConvolver::new(model.potential(0), grid)?;
    let conv1 = PeriodicConvolver::new(model.potential(1), grid)?;
    let comp0 = conv0.convolve(eps.component(1))?.map(|v| -c0 * v);
    let comp1 = conv1.convolve(eps.component(0))?.map(|v| -c1 * v);
    DensityPair::new(comp0, comp1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Field, GridSpec, KernelSpec};
    use approx::assert_relative_eq;

    /// model with unit-mass gaussian potentials, d = 1
    fn unit_phi_model() -> ModelParams {
        ModelParams::new(
            1,
            [
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
            ],
            [
                KernelSpec::gaussian_with_mass(1.0, 1.0, 1).unwrap(),
                KernelSpec::gaussian_with_mass(1.0, 1.0, 1).unwrap(),
            ],
        )
        .unwrap()
    }

    // frozen by an independent high-precision bisection oracle
    const OMEGA: f64 = 0.567_143_290_409_783_8;
    const XS_3: f64 = 1.049_908_894_964_040_0;
    const X1_3: f64 = 0.408_359_649_836_329_7;
    const X3_3: f64 = 1.994_219_286_837_482_9;

    #[test]
    fn symmetric_singleton_cases() {
        let roots = symmetric_roots(std::f64::consts::E).unwrap();
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0].0, 1.0, max_relative = 1e-12);

        let roots = symmetric_roots(1.0).unwrap();
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0].0, OMEGA, max_relative = 1e-12);

        assert!(symmetric_roots(-1.0).is_err());
    }

    #[test]
    fn symmetric_triple_case() {
        let roots = symmetric_roots(3.0).unwrap();
        assert_eq!(roots.len(), 3);
        assert_relative_eq!(roots[0].0, XS_3, max_relative = 1e-12);
        assert_relative_eq!(roots[1].0, X1_3, max_relative = 1e-11);
        assert_relative_eq!(roots[1].1, X3_3, max_relative = 1e-11);
        assert_eq!(roots[2], (roots[1].1, roots[1].0));
        // middle (symmetric) root unstable, asymmetric pair stable
        assert!(XS_3 * XS_3 > 1.0);
        assert!(X1_3 * X3_3 < 1.0);
        assert!(roots[1].1 > 1.0);
        // residuals against both equations
        for &(x, y) in &roots {
            assert!((x * y.exp() - 3.0).abs() < 1e-10);
            assert!((y * x.exp() - 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn bifurcation_counts() {
        for a in [1.0, 2.0, 2.5] {
            assert_eq!(symmetric_roots(a).unwrap().len(), 1, "a = {a}");
        }
        for a in [3.0, 4.0, 6.0] {
            assert_eq!(symmetric_roots(a).unwrap().len(), 3, "a = {a}");
        }
    }

    #[test]
    fn constant_solutions_match_symmetric_reduction() {
        let model = unit_phi_model();
        // a = 1: single stable point at Omega
        let pts = constant_solutions(1.0, 1.0, &model).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].c0, OMEGA, max_relative = 1e-10);
        assert_relative_eq!(pts[0].c1, OMEGA, max_relative = 1e-10);
        assert_eq!(pts[0].classification, Classification::Stable);

        // a = 3: three points matching the scalar system, middle unstable
        let pts = constant_solutions(3.0, 3.0, &model).unwrap();
        assert_eq!(pts.len(), 3);
        let mut c1s: Vec<f64> = pts.iter().map(|p| p.c1).collect();
        c1s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(c1s[0], X1_3, max_relative = 1e-9);
        assert_relative_eq!(c1s[1], XS_3, max_relative = 1e-9);
        assert_relative_eq!(c1s[2], X3_3, max_relative = 1e-9);
        for p in &pts {
            // parameter consistency
            assert_relative_eq!(
                p.ctilde0,
                p.c0 * (model.phi_mass(0) * p.c1).exp(),
                max_relative = 1e-10
            );
            assert_relative_eq!(
                p.ctilde1,
                p.c1 * (model.phi_mass(1) * p.c0).exp(),
                max_relative = 1e-10
            );
            let expect = if (p.c1 - XS_3).abs() < 1e-6 {
                Classification::Unstable
            } else {
                Classification::Stable
            };
            assert_eq!(p.classification, expect);
        }
    }

    #[test]
    fn decoupled_case_is_explicit() {
        // <phi_0> = 0: C_0 = Ct_0 and C_1 = Ct_1 e^{-<phi_1> Ct_0}
        let model = ModelParams::new(
            1,
            [
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
            ],
            [
                KernelSpec::gaussian(0.0, 1.0).unwrap(),
                KernelSpec::gaussian_with_mass(1.0, 1.0, 1).unwrap(),
            ],
        )
        .unwrap();
        let pts = constant_solutions(2.0, 3.0, &model).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].c0, 2.0, max_relative = 1e-10);
        assert_relative_eq!(pts[0].c1, 3.0 * (-2.0_f64).exp(), max_relative = 1e-10);
        assert_eq!(pts[0].classification, Classification::Stable);
        assert_eq!(pts[0].product, 0.0);
    }

    #[test]
    fn classification_thresholds() {
        let model = unit_phi_model();
        assert_eq!(
            classify_stability(0.0, 0.0, &model),
            (Classification::Stable, 0.0)
        );
        let (class, product) = classify_stability(2.0, 2.0, &model);
        assert_eq!(class, Classification::Unstable);
        assert_relative_eq!(product, 4.0, max_relative = 1e-12);
        let (class, _) = classify_stability(1.0, 1.0, &model);
        assert_eq!(class, Classification::Marginal);
        // asymmetric pair of a = 3 is stable
        let (class, _) = classify_stability(X1_3, X3_3, &model);
        assert_eq!(class, Classification::Stable);
    }

    #[test]
    fn critical_wavenumber_gaussian_analytic() {
        // product_hat(p) = 4 e^{-p^2}: root at sqrt(ln 4)
        let model = unit_phi_model();
        let p_star = critical_wavenumber(2.0, 2.0, &model).unwrap().unwrap();
        assert_relative_eq!(p_star, (4.0_f64).ln().sqrt(), epsilon = 1e-10);
        assert!(
            (product_hat(p_star, 2.0, 2.0, &model).unwrap() - 1.0).abs() < 1e-10
        );
        // subcritical: no crossing
        assert!(critical_wavenumber(0.9, 1.0, &model).unwrap().is_none());
    }

    #[test]
    fn critical_wavenumber_tophat_self_consistent() {
        let model = ModelParams::new(
            1,
            [
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
                KernelSpec::gaussian(1.0, 1.0).unwrap(),
            ],
            [
                KernelSpec::tophat(0.5, 1.0).unwrap(),
                KernelSpec::tophat(0.5, 1.0).unwrap(),
            ],
        )
        .unwrap();
        // masses are 1; product at p = 0 is 4
        let p_star = critical_wavenumber(2.0, 2.0, &model).unwrap().unwrap();
        assert!((product_hat(p_star, 2.0, 2.0, &model).unwrap() - 1.0).abs() < 1e-10);
        // below the first zero of the transform, pi/R
        assert!(p_star < std::f64::consts::PI);
        // determinant of the mode matrix changes sign at the root
        let before = dispersion_growth(p_star * 0.99, 2.0, 2.0, &model).unwrap();
        let after = dispersion_growth(p_star * 1.01, 2.0, 2.0, &model).unwrap();
        assert!(before.growth_rates[0] > 0.0);
        assert!(after.growth_rates[0] < 0.0);
    }

    #[test]
    fn dispersion_endpoints() {
        let model = unit_phi_model();
        // p = 0: transforms equal masses, both factors vanish
        let d0 = dispersion_growth(0.0, 2.0, 2.0, &model).unwrap();
        assert_eq!(d0.growth_rates, [0.0, 0.0]);
        assert_relative_eq!(d0.product_hat, 4.0, max_relative = 1e-12);
        // at the crossing the determinant factor vanishes: top rate 0
        let p_star = (4.0_f64).ln().sqrt();
        let dc = dispersion_growth(p_star, 2.0, 2.0, &model).unwrap();
        assert!(dc.growth_rates[0].abs() < 1e-12);
        // beyond the crossing both rates negative
        let dp = dispersion_growth(1.5, 2.0, 2.0, &model).unwrap();
        assert!(dp.product_hat < 1.0);
        assert!(dp.growth_rates[0] < 0.0 && dp.growth_rates[1] < 0.0);
    }

    #[test]
    fn residual_constant_pairs_satisfy_full_balance() {
        let model = unit_phi_model();
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let rho = DensityPair::constant(grid, 0.8, 1.7);
        let (r0, r1) = stationary_residual(&rho, &model, ResidualSystem::FullBalance).unwrap();
        assert!(r0 < 1e-12 && r1 < 1e-12, "({r0}, {r1})");
        // random positive fields have honestly positive residuals
        let rho = DensityPair::new(
            Field::from_fn(grid, |x| 1.0 + 0.4 * (x[0] * 0.9).sin()),
            Field::from_fn(grid, |x| 0.7 + 0.3 * (x[0] * 1.3).cos()),
        )
        .unwrap();
        let (r0, r1) = stationary_residual(&rho, &model, ResidualSystem::FullBalance).unwrap();
        assert!(r0 > 1e-6 && r1 > 1e-6);
    }

    #[test]
    fn birth_death_profiles_solve_full_balance() {
        // iterate rho_i <- Ct_i exp(-(phi_i * rho_{1-i})) to convergence from
        // a perturbed start; the limit solves the full balance
        let model = unit_phi_model();
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let (ct0, ct1) = (1.2, 0.9);
        let conv0 = PeriodicConvolver::new(model.potential(0), grid).unwrap();
        let conv1 = PeriodicConvolver::new(model.potential(1), grid).unwrap();
        let mut rho = DensityPair::new(
            Field::from_fn(grid, |x| 0.8 + 0.1 * (x[0] * 0.8).cos()),
            Field::from_fn(grid, |x| 0.6 + 0.1 * (x[0] * 0.8).sin()),
        )
        .unwrap();
        for _ in 0..400 {
            let next0 = conv0
                .convolve(rho.component(1))
                .unwrap()
                .map(|v| ct0 * (-v).exp());
            let next1 = conv1
                .convolve(rho.component(0))
                .unwrap()
                .map(|v| ct1 * (-v).exp());
            rho = DensityPair::new(next0, next1).unwrap();
        }
        let (b0, b1) = stationary_residual(
            &rho,
            &model,
            ResidualSystem::BirthDeath {
                ctilde0: ct0,
                ctilde1: ct1,
            },
        )
        .unwrap();
        assert!(b0 < 1e-12 && b1 < 1e-12, "({b0}, {b1})");
        let (r0, r1) = stationary_residual(&rho, &model, ResidualSystem::FullBalance).unwrap();
        assert!(r0 < 1e-8 && r1 < 1e-8, "({r0}, {r1})");
    }

    #[test]
    fn perturbation_map_linearizes_to_frechet() {
        let model = unit_phi_model();
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let (c0, c1) = (0.9, 1.1);
        let shape = DensityPair::new(
            Field::from_fn(grid, |x| (x[0] * 0.8).cos()),
            Field::from_fn(grid, |x| (x[0] * 1.2).sin()),
        )
        .unwrap();
        assert!(
            perturbation_map(&DensityPair::constant(grid, 0.0, 0.0), c0, c1, &model)
                .unwrap()
                .sup_distance(&DensityPair::constant(grid, 0.0, 0.0))
                == 0.0
        );
        let gap_at = |amp: f64| {
            let eps = DensityPair::new(
                shape.component(0).map(|v| amp * v),
                shape.component(1).map(|v| amp * v),
            )
            .unwrap();
            let full = perturbation_map(&eps, c0, c1, &model).unwrap();
            let lin = frechet_apply(&eps, c0, c1, &model).unwrap();
            full.sup_distance(&lin) / amp
        };
        let g3 = gap_at(1e-3);
        let g4 = gap_at(1e-4);
        // relative linearization error shrinks linearly with amplitude
        assert!(g4 < g3 / 5.0, "g3 = {g3:.3e}, g4 = {g4:.3e}");
    }

    #[test]
    fn frechet_cosine_mode_and_eigenvector() {
        let model = unit_phi_model();
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let l = grid.box_length();
        let k = 2usize;
        let p = std::f64::consts::TAU * k as f64 / l;
        let conv0 = PeriodicConvolver::new(model.potential(0), grid).unwrap();
        let conv1 = PeriodicConvolver::new(model.potential(1), grid).unwrap();
        let gain0 = conv0.mode_gain([k, 0]);
        let gain1 = conv1.mode_gain([k, 0]);
        // component test: eps_1 = cos(2 pi k x / L), eps_0 = 0
        let cosine = Field::from_fn(grid, |x| (p * x[0]).cos());
        let eps = DensityPair::new(Field::zeros(grid), cosine.clone()).unwrap();
        let out = frechet_apply(&eps, 0.9, 1.1, &model).unwrap();
        for c in 0..grid.num_cells() {
            assert_relative_eq!(
                out.component(0).values()[c],
                -0.9 * gain0 * cosine.values()[c],
                epsilon = 1e-12
            );
        }
        assert!(out.component(1).sup_norm() < 1e-14);

        // eigen-equation: pick C_0, C_1 with product_hat = 1 at this grid
        // mode; then (1, -1/(C_0 gain0)) is a fixed direction
        let c0 = 1.3;
        let c1 = 1.0 / (c0 * gain0 * gain1);
        let eps = DensityPair::new(
            cosine.clone(),
            cosine.map(|v| -v / (c0 * gain0)),
        )
        .unwrap();
        let out = frechet_apply(&eps, c0, c1, &model).unwrap();
        assert!(
            out.sup_distance(&eps) < 1e-8,
            "gap {}",
            out.sup_distance(&eps)
        );
    }
}
