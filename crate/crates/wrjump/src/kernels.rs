//! Radially symmetric interaction kernels and periodic grids.
//!
//! Three parametric families (top-hat, Gaussian, exponential) are supported,
//! chosen so that mass, sup, Fourier transform, and displacement sampling all
//! have closed forms. Kernels play two roles: jump kernels `a_i` (rate
//! densities for particle displacements, total rate `alpha_i = mass`) and
//! repulsion potentials `phi_i` (nonnegative, integrable, bounded).
//!
//! All field computation lives on a periodic torus `[0, L)^d`, `d in {1, 2}`,
//! discretized with `N` points per axis. Convolutions wrap periodically and
//! are normalized by the cell volume `h^d`, so they approximate the continuum
//! integral `(k * f)(x) = int k(x-y) f(y) dy`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fourier sign convention: `k_hat(p) = int k(x) e^{+i p.x} dx`. For the
/// symmetric kernels used here the transform is real, so the sign only
/// matters for consistency with the dispersion formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `A * 1[r <= R]`
    Tophat,
    /// `A * exp(-r^2 / (2 R^2))`
    Gaussian,
    /// `A * exp(-r / R)`
    Exponential,
}

/// A radially symmetric nonnegative kernel with closed-form functionals.
///
/// `amplitude` is the height at the origin, `range` the length scale
/// (top-hat radius, Gaussian sigma, exponential decay length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec", into = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    amplitude: f64,
    range: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernelSpec {
    family: KernelFamily,
    amplitude: f64,
    range: f64,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;
    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.family, raw.amplitude, raw.range)
    }
}

impl From<KernelSpec> for RawKernelSpec {
    fn from(spec: KernelSpec) -> Self {
        RawKernelSpec {
            family: spec.family,
            amplitude: spec.amplitude,
            range: spec.range,
        }
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, amplitude: f64, range: f64) -> Result<Self> {
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidKernel(format!(
                "amplitude must be finite and nonnegative, got {amplitude}"
            )));
        }
        if !range.is_finite() || range <= 0.0 {
            return Err(Error::InvalidKernel(format!(
                "range must be finite and positive, got {range}"
            )));
        }
        Ok(Self {
            family,
            amplitude,
            range,
        })
    }

    pub fn tophat(amplitude: f64, radius: f64) -> Result<Self> {
        Self::new(KernelFamily::Tophat, amplitude, radius)
    }

    pub fn gaussian(amplitude: f64, sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, amplitude, sigma)
    }

    pub fn exponential(amplitude: f64, decay: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, amplitude, decay)
    }

    /// Gaussian with unit mass in dimension `d`, handy for potentials
    /// specified by their integral.
    pub fn gaussian_with_mass(mass: f64, sigma: f64, d: u8) -> Result<Self> {
        let unit = match d {
            1 => sigma * (2.0 * std::f64::consts::PI).sqrt(),
            2 => 2.0 * std::f64::consts::PI * sigma * sigma,
            _ => return Err(Error::UnsupportedDimension(d)),
        };
        Self::gaussian(mass / unit, sigma)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// Same kernel with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.family, self.amplitude * factor, self.range)
    }

    /// Pointwise value at radius `r >= 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::NegativeRadius(r));
        }
        Ok(match self.family {
            KernelFamily::Tophat => {
                if r <= self.range {
                    self.amplitude
                } else {
                    0.0
                }
            }
            KernelFamily::Gaussian => {
                let z = r / self.range;
                self.amplitude * (-0.5 * z * z).exp()
            }
            KernelFamily::Exponential => self.amplitude * (-r / self.range).exp(),
        })
    }

    /// Integral over `R^d` (closed form).
    pub fn mass(&self, d: u8) -> Result<f64> {
        use std::f64::consts::PI;
        let (a, r) = (self.amplitude, self.range);
        Ok(match (self.family, d) {
            (KernelFamily::Tophat, 1) => 2.0 * a * r,
            (KernelFamily::Tophat, 2) => a * PI * r * r,
            (KernelFamily::Gaussian, 1) => a * r * (2.0 * PI).sqrt(),
            (KernelFamily::Gaussian, 2) => 2.0 * PI * a * r * r,
            (KernelFamily::Exponential, 1) => 2.0 * a * r,
            (KernelFamily::Exponential, 2) => 2.0 * PI * a * r * r,
            (_, d) => return Err(Error::UnsupportedDimension(d)),
        })
    }

    /// Essential supremum; all three families peak at the origin.
    pub fn sup(&self) -> f64 {
        self.amplitude
    }

    /// Radial Fourier transform at wavenumber `p >= 0`, convention
    /// `int k(x) e^{+i p.x} dx` (real for symmetric kernels).
    ///
    /// At `p = 0` this equals `mass(d)` exactly; the magnitude never
    /// exceeds the mass and decays as `p -> inf`.
    pub fn fourier(&self, p: f64, d: u8) -> Result<f64> {
        use std::f64::consts::PI;
        if !(p >= 0.0) {
            return Err(Error::NegativeRadius(p));
        }
        if p == 0.0 {
            return self.mass(d);
        }
        let (a, r) = (self.amplitude, self.range);
        Ok(match (self.family, d) {
            (KernelFamily::Tophat, 1) => 2.0 * a * (p * r).sin() / p,
            // 2 pi A R J1(pR) / p
            (KernelFamily::Tophat, 2) => 2.0 * PI * a * r * libm::j1(p * r) / p,
            (KernelFamily::Gaussian, 1) => {
                a * r * (2.0 * PI).sqrt() * (-0.5 * r * r * p * p).exp()
            }
            (KernelFamily::Gaussian, 2) => {
                2.0 * PI * a * r * r * (-0.5 * r * r * p * p).exp()
            }
            (KernelFamily::Exponential, 1) => 2.0 * a * r / (1.0 + r * r * p * p),
            (KernelFamily::Exponential, 2) => {
                2.0 * PI * a * r * r * (1.0 + r * r * p * p).powf(-1.5)
            }
            (_, d) => return Err(Error::UnsupportedDimension(d)),
        })
    }

    /// Radius beyond which the kernel is below `tail` and treated as zero
    /// in particle-sum truncations. Exact (`= range`) for the top-hat.
    pub fn cutoff_radius(&self, tail: f64) -> f64 {
        let (a, r) = (self.amplitude, self.range);
        if a <= tail {
            return 0.0;
        }
        match self.family {
            KernelFamily::Tophat => r,
            KernelFamily::Gaussian => r * (2.0 * (a / tail).ln()).sqrt(),
            KernelFamily::Exponential => r * (a / tail).ln(),
        }
    }

    /// Draw a displacement with density `kernel / mass` on `R^d`.
    /// Only the first `d` components of the result are populated.
    pub fn sample_displacement<R: Rng + ?Sized>(&self, d: u8, rng: &mut R) -> Result<[f64; 2]> {
        if d != 1 && d != 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        if self.mass(d)? <= 0.0 {
            return Err(Error::ZeroMassKernel);
        }
        let r = self.range;
        let mut out = [0.0_f64; 2];
        match (self.family, d) {
            (KernelFamily::Tophat, 1) => {
                out[0] = rng.gen_range(-r..=r);
            }
            (KernelFamily::Tophat, 2) => {
                let radius = r * rng.gen::<f64>().sqrt();
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                out[0] = radius * angle.cos();
                out[1] = radius * angle.sin();
            }
            (KernelFamily::Gaussian, _) => {
                for slot in out.iter_mut().take(d as usize) {
                    let z: f64 = StandardNormal.sample(rng);
                    *slot = r * z;
                }
            }
            (KernelFamily::Exponential, 1) => {
                // Laplace law: unit exponential radius, random sign.
                let e: f64 = Exp1.sample(rng);
                out[0] = if rng.gen_bool(0.5) { r * e } else { -r * e };
            }
            (KernelFamily::Exponential, 2) => {
                // Radial density r e^{-r/R}: Gamma(2, R) = sum of two exponentials.
                let e1: f64 = Exp1.sample(rng);
                let e2: f64 = Exp1.sample(rng);
                let radius = r * (e1 + e2);
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                out[0] = radius * angle.cos();
                out[1] = radius * angle.sin();
            }
            _ => unreachable!(),
        }
        Ok(out)
    }
}

/// A periodic square grid: torus side `box_length`, `points` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec", into = "RawGridSpec")]
pub struct GridSpec {
    dimension: u8,
    box_length: f64,
    points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridSpec {
    dimension: u8,
    box_length: f64,
    points: usize,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;
    fn try_from(raw: RawGridSpec) -> Result<Self> {
        GridSpec::new(raw.dimension, raw.box_length, raw.points)
    }
}

impl From<GridSpec> for RawGridSpec {
    fn from(g: GridSpec) -> Self {
        RawGridSpec {
            dimension: g.dimension,
            box_length: g.box_length,
            points: g.points,
        }
    }
}

impl GridSpec {
    pub fn new(dimension: u8, box_length: f64, points: usize) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::UnsupportedDimension(dimension));
        }
        if !box_length.is_finite() || box_length <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive, got {box_length}"
            )));
        }
        if points == 0 {
            return Err(Error::InvalidGrid("points must be positive".into()));
        }
        Ok(Self {
            dimension,
            box_length,
            points,
        })
    }

    pub fn dimension(&self) -> u8 {
        self.dimension
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Grid spacing `h = L / N`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.points as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    /// Total number of cells `N^d`.
    pub fn num_cells(&self) -> usize {
        match self.dimension {
            1 => self.points,
            _ => self.points * self.points,
        }
    }

    /// Flat index of the cell with per-axis indices `ij` (wrapped mod N).
    pub fn flat_index(&self, ij: [isize; 2]) -> usize {
        let n = self.points as isize;
        let wrap = |k: isize| (k.rem_euclid(n)) as usize;
        match self.dimension {
            1 => wrap(ij[0]),
            _ => wrap(ij[0]) * self.points + wrap(ij[1]),
        }
    }

    /// Per-axis indices of flat cell `idx`.
    pub fn axis_indices(&self, idx: usize) -> [usize; 2] {
        match self.dimension {
            1 => [idx, 0],
            _ => [idx / self.points, idx % self.points],
        }
    }

    /// Coordinate of grid point `idx` (node at `j * h` per axis).
    pub fn coordinate(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        let ij = self.axis_indices(idx);
        match self.dimension {
            1 => [ij[0] as f64 * h, 0.0],
            _ => [ij[0] as f64 * h, ij[1] as f64 * h],
        }
    }

    /// Signed minimum-image displacement for an index offset along one axis.
    pub fn min_image_offset(&self, j: usize) -> f64 {
        let n = self.points;
        let h = self.spacing();
        if j <= n / 2 {
            j as f64 * h
        } else {
            (j as f64 - n as f64) * h
        }
    }

    /// Radial minimum-image distance of the cell offset `idx`.
    pub fn offset_radius(&self, idx: usize) -> f64 {
        let ij = self.axis_indices(idx);
        match self.dimension {
            1 => self.min_image_offset(ij[0]).abs(),
            _ => {
                let dx = self.min_image_offset(ij[0]);
                let dy = self.min_image_offset(ij[1]);
                dx.hypot(dy)
            }
        }
    }
}

/// A real scalar field sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.num_cells()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.num_cells()],
        }
    }

    /// Build a field from a function of the grid-point coordinate.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.num_cells())
            .map(|idx| f(grid.coordinate(idx)))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("zip_with on different grids".into()));
        }
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Cell-volume-weighted total `h^d * sum(values)`.
    pub fn total(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }
}

/// FFT-backed periodic convolution with a fixed kernel on a fixed grid.
///
/// The kernel is sampled at minimum-image distances and wrapped, so the
/// convolution is exactly translation invariant; results carry the Riemann
/// factor `h^d`. Plans and the kernel spectrum are cached, making repeated
/// applications cheap.
pub struct PeriodicConvolver {
    grid: GridSpec,
    kernel_hat: Vec<rustfft::num_complex::Complex<f64>>,
    fft_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fft_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    discrete_mass: f64,
}

impl PeriodicConvolver {
    pub fn new(spec: &KernelSpec, grid: GridSpec) -> Result<Self> {
        let mut planner = rustfft::FftPlanner::new();
        let n = grid.points();
        let fft_fwd = planner.plan_fft_forward(n);
        let fft_inv = planner.plan_fft_inverse(n);

        let mut kernel = vec![0.0_f64; grid.num_cells()];
        for (idx, slot) in kernel.iter_mut().enumerate() {
            *slot = spec.eval(grid.offset_radius(idx))?;
        }
        let discrete_mass = grid.cell_volume() * kernel.iter().sum::<f64>();

        let mut kernel_hat: Vec<rustfft::num_complex::Complex<f64>> = kernel
            .iter()
            .map(|&v| rustfft::num_complex::Complex::new(v, 0.0))
            .collect();
        forward_nd(&fft_fwd, grid, &mut kernel_hat);

        Ok(Self {
            grid,
            kernel_hat,
            fft_fwd,
            fft_inv,
            discrete_mass,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Riemann-sum mass of the sampled kernel; converges to the analytic
    /// mass as `h -> 0` (O(h^2) for smooth kernels).
    pub fn discrete_mass(&self) -> f64 {
        self.discrete_mass
    }

    /// Discrete transform of the sampled kernel at integer mode `k` per
    /// axis: the exact gain with which this convolver multiplies the grid
    /// mode `exp(2 pi i k.x / L)`.
    pub fn mode_gain(&self, k: [usize; 2]) -> f64 {
        let idx = match self.grid.dimension() {
            1 => k[0] % self.grid.points(),
            _ => (k[0] % self.grid.points()) * self.grid.points() + k[1] % self.grid.points(),
        };
        self.grid.cell_volume() * self.kernel_hat[idx].re
    }

    pub fn convolve(&self, f: &Field) -> Result<Field> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch(
                "convolver and field grids differ".into(),
            ));
        }
        let mut buf: Vec<rustfft::num_complex::Complex<f64>> = f
            .values()
            .iter()
            .map(|&v| rustfft::num_complex::Complex::new(v, 0.0))
            .collect();
        forward_nd(&self.fft_fwd, self.grid, &mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        inverse_nd(&self.fft_inv, self.grid, &mut buf);
        let scale = self.grid.cell_volume() / self.grid.num_cells() as f64;
        let values = buf.iter().map(|c| c.re * scale).collect();
        Field::new(self.grid, values)
    }
}

fn forward_nd(
    fft: &std::sync::Arc<dyn rustfft::Fft<f64>>,
    grid: GridSpec,
    buf: &mut [rustfft::num_complex::Complex<f64>],
) {
    let n = grid.points();
    match grid.dimension() {
        1 => fft.process(buf),
        _ => {
            // rows
            for row in buf.chunks_exact_mut(n) {
                fft.process(row);
            }
            // columns
            let mut col = vec![rustfft::num_complex::Complex::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                fft.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }
}

fn inverse_nd(
    fft: &std::sync::Arc<dyn rustfft::Fft<f64>>,
    grid: GridSpec,
    buf: &mut [rustfft::num_complex::Complex<f64>],
) {
    // same axis sweep; normalization handled by the caller
    forward_nd(fft, grid, buf)
}

/// Periodic grid convolution `(kernel * f)(x) ~= h^d sum_j k(x - x_j) f(x_j)`.
///
/// One-shot convenience around [`PeriodicConvolver`]; logs a warning when the
/// kernel range exceeds `L/4` and wrap-around interaction becomes material.
pub fn periodic_convolve(f: &Field, spec: &KernelSpec) -> Result<Field> {
    if spec.range() > f.grid().box_length() / 4.0 {
        log::warn!(
            "kernel range {} exceeds a quarter of the box {}; wrap-around is not negligible",
            spec.range(),
            f.grid().box_length()
        );
    }
    PeriodicConvolver::new(spec, f.grid())?.convolve(f)
}

/// Direct-sum reference implementation of [`periodic_convolve`]; O(N^2d),
/// used to cross-check the transform route.
pub fn periodic_convolve_direct(f: &Field, spec: &KernelSpec) -> Result<Field> {
    let grid = f.grid();
    let n = grid.points() as isize;
    let mut kernel = vec![0.0_f64; grid.num_cells()];
    for (idx, slot) in kernel.iter_mut().enumerate() {
        *slot = spec.eval(grid.offset_radius(idx))?;
    }
    let mut out = vec![0.0_f64; grid.num_cells()];
    match grid.dimension() {
        1 => {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    let off = grid.flat_index([i - j, 0]);
                    acc += kernel[off] * f.values()[j as usize];
                }
                out[i as usize] = acc * grid.cell_volume();
            }
        }
        _ => {
            for i0 in 0..n {
                for i1 in 0..n {
                    let mut acc = 0.0;
                    for j0 in 0..n {
                        for j1 in 0..n {
                            let off = grid.flat_index([i0 - j0, i1 - j1]);
                            let src = grid.flat_index([j0, j1]);
                            acc += kernel[off] * f.values()[src];
                        }
                    }
                    out[grid.flat_index([i0, i1])] = acc * grid.cell_volume();
                }
            }
        }
    }
    Field::new(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_matches_family_formulas() {
        let th = KernelSpec::tophat(2.0, 0.5).unwrap();
        assert_eq!(th.eval(0.4).unwrap(), 2.0);
        assert_eq!(th.eval(0.6).unwrap(), 0.0);

        let ga = KernelSpec::gaussian(1.0, 1.0).unwrap();
        assert_eq!(ga.eval(0.0).unwrap(), 1.0);

        let ex = KernelSpec::exponential(3.0, 2.0).unwrap();
        assert_relative_eq!(
            ex.eval(2.0).unwrap(),
            3.0 * (-1.0_f64).exp(),
            max_relative = 1e-14
        );
        assert!(ex.eval(-0.1).is_err());
    }

    #[test]
    fn mass_closed_forms() {
        use std::f64::consts::PI;
        assert_eq!(KernelSpec::tophat(1.0, 1.0).unwrap().mass(1).unwrap(), 2.0);
        assert_relative_eq!(
            KernelSpec::gaussian(1.0, 1.0).unwrap().mass(2).unwrap(),
            2.0 * PI,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            KernelSpec::exponential(0.5, 2.0).unwrap().mass(1).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        assert!(KernelSpec::tophat(1.0, 1.0).unwrap().mass(3).is_err());
    }

    #[test]
    fn sup_is_amplitude() {
        assert_eq!(KernelSpec::tophat(2.0, 0.5).unwrap().sup(), 2.0);
        assert_eq!(KernelSpec::gaussian(1.5, 3.0).unwrap().sup(), 1.5);
        assert_eq!(KernelSpec::exponential(0.1, 1.0).unwrap().sup(), 0.1);
    }

    #[test]
    fn fourier_closed_forms() {
        use std::f64::consts::PI;
        let ga = KernelSpec::gaussian(1.0, 1.0).unwrap();
        assert_relative_eq!(
            ga.fourier(0.0, 1).unwrap(),
            (2.0 * PI).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            ga.fourier(1.0, 1).unwrap(),
            (2.0 * PI).sqrt() * (-0.5_f64).exp(),
            max_relative = 1e-14
        );
        let th = KernelSpec::tophat(1.0, 1.0).unwrap();
        assert!(th.fourier(PI, 1).unwrap().abs() < 1e-15);
    }

    #[test]
    fn fourier_equals_mass_at_zero_and_is_dominated() {
        let specs = [
            KernelSpec::tophat(1.3, 0.7).unwrap(),
            KernelSpec::gaussian(0.8, 1.4).unwrap(),
            KernelSpec::exponential(2.0, 0.5).unwrap(),
        ];
        for spec in &specs {
            for d in [1u8, 2] {
                let mass = spec.mass(d).unwrap();
                assert_eq!(spec.fourier(0.0, d).unwrap(), mass);
                for k in 1..200 {
                    let p = 0.1 * k as f64;
                    let v = spec.fourier(p, d).unwrap();
                    assert!(
                        v.abs() <= mass * (1.0 + 1e-12),
                        "family {:?} d={} p={} value {} mass {}",
                        spec.family(),
                        d,
                        p,
                        v,
                        mass
                    );
                }
                // decay at large wavenumber
                assert!(spec.fourier(200.0, d).unwrap().abs() < 0.05 * mass);
            }
        }
    }

    #[test]
    fn sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;

        let th = KernelSpec::tophat(1.0, 1.0).unwrap();
        let mean: f64 = (0..n)
            .map(|_| th.sample_displacement(1, &mut rng).unwrap()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.01, "tophat mean {mean}");

        let ga = KernelSpec::gaussian(1.0, 2.0).unwrap();
        let var: f64 = (0..n)
            .map(|_| {
                let x = ga.sample_displacement(1, &mut rng).unwrap()[0];
                x * x
            })
            .sum::<f64>()
            / n as f64;
        assert!((var - 4.0).abs() < 0.2, "gaussian var {var}");

        let ex = KernelSpec::exponential(1.0, 1.0).unwrap();
        let mean_abs: f64 = (0..n)
            .map(|_| ex.sample_displacement(1, &mut rng).unwrap()[0].abs())
            .sum::<f64>()
            / n as f64;
        assert!((mean_abs - 1.0).abs() < 0.05, "laplace |x| mean {mean_abs}");
    }

    #[test]
    fn sampler_chi_square_gof() {
        use crate::stats::chi_square_uniformized;
        let n = 100_000;

        // map each draw through its analytic CDF; uniformity then tests the law
        let cases: Vec<(KernelSpec, u8, Box<dyn Fn([f64; 2]) -> f64>)> = vec![
            (
                KernelSpec::tophat(1.0, 1.0).unwrap(),
                1,
                Box::new(|x: [f64; 2]| (x[0] + 1.0) / 2.0),
            ),
            (
                KernelSpec::gaussian(1.0, 1.5).unwrap(),
                1,
                Box::new(|x: [f64; 2]| {
                    0.5 * (1.0 + statrs::function::erf::erf(x[0] / (1.5 * 2.0_f64.sqrt())))
                }),
            ),
            (
                KernelSpec::exponential(1.0, 2.0).unwrap(),
                1,
                Box::new(|x: [f64; 2]| {
                    let z = x[0] / 2.0;
                    if z < 0.0 {
                        0.5 * z.exp()
                    } else {
                        1.0 - 0.5 * (-z).exp()
                    }
                }),
            ),
            (
                // 2-d exponential: radius CDF is Gamma(2) regularized
                KernelSpec::exponential(1.0, 1.0).unwrap(),
                2,
                Box::new(|x: [f64; 2]| {
                    let r = x[0].hypot(x[1]);
                    1.0 - (1.0 + r) * (-r).exp()
                }),
            ),
        ];

        for (i, (spec, d, cdf)) in cases.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let u: Vec<f64> = (0..n)
                .map(|_| cdf(spec.sample_displacement(*d, &mut rng).unwrap()))
                .collect();
            let p = chi_square_uniformized(&u, 50);
            assert!(
                p > 1e-3,
                "chi-square p = {p} for case {i} ({:?}, d={d})",
                spec.family()
            );
        }
    }

    #[test]
    fn convolve_constant_gives_discrete_mass() {
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let spec = KernelSpec::gaussian(1.0, 1.0).unwrap();
        let f = Field::constant(grid, 3.0);
        let conv = PeriodicConvolver::new(&spec, grid).unwrap();
        let out = conv.convolve(&f).unwrap();
        for &v in out.values() {
            assert_relative_eq!(v, 3.0 * conv.discrete_mass(), max_relative = 1e-12);
        }
        // discrete mass converges to the analytic mass
        assert_relative_eq!(
            conv.discrete_mass(),
            spec.mass(1).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn convolve_impulse_recovers_kernel() {
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let spec = KernelSpec::gaussian(1.0, 1.0).unwrap();
        let j = 20usize;
        let mut f = Field::zeros(grid);
        f.values_mut()[j] = 1.0 / grid.cell_volume();
        let out = periodic_convolve(&f, &spec).unwrap();
        for idx in 0..grid.num_cells() {
            let off = grid.flat_index([idx as isize - j as isize, 0]);
            let expect = spec.eval(grid.offset_radius(off)).unwrap();
            assert_relative_eq!(out.values()[idx], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn convolve_cosine_eigenfunction() {
        let grid = GridSpec::new(1, 16.0, 64).unwrap();
        let spec = KernelSpec::gaussian(0.7, 1.0).unwrap();
        let l = grid.box_length();
        let f = Field::from_fn(grid, |x| (std::f64::consts::TAU * x[0] / l).cos());
        let conv = PeriodicConvolver::new(&spec, grid).unwrap();
        let out = conv.convolve(&f).unwrap();
        let gain = conv.mode_gain([1, 0]);
        // the discrete gain agrees with the analytic transform to grid accuracy
        assert_relative_eq!(
            gain,
            spec.fourier(std::f64::consts::TAU / l, 1).unwrap(),
            max_relative = 1e-10
        );
        for idx in 0..grid.num_cells() {
            assert_relative_eq!(
                out.values()[idx],
                gain * f.values()[idx],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn convolve_linearity() {
        let grid = GridSpec::new(1, 12.0, 48).unwrap();
        let spec = KernelSpec::exponential(1.0, 0.8).unwrap();
        let f = Field::from_fn(grid, |x| (x[0] * 0.9).sin() + 0.3);
        let g = Field::from_fn(grid, |x| (x[0] * 0.4).cos());
        let (a, b) = (1.7, -0.6);
        let combo = f.zip_with(&g, |u, v| a * u + b * v).unwrap();
        let lhs = periodic_convolve(&combo, &spec).unwrap();
        let cf = periodic_convolve(&f, &spec).unwrap();
        let cg = periodic_convolve(&g, &spec).unwrap();
        let rhs = cf.zip_with(&cg, |u, v| a * u + b * v).unwrap();
        let scale = lhs.sup_norm().max(1e-300);
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            assert!(((x - y) / scale).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        for n in [32usize, 64, 128] {
            let grid = GridSpec::new(1, 16.0, n).unwrap();
            let spec = KernelSpec::tophat(1.2, 1.0).unwrap();
            let f = Field::from_fn(grid, |x| 1.0 + 0.5 * (x[0] * 0.7).sin());
            let a = periodic_convolve(&f, &spec).unwrap();
            let b = periodic_convolve_direct(&f, &spec).unwrap();
            let scale = a.sup_norm();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!(((x - y) / scale).abs() < 1e-10, "n={n}");
            }
        }
        // 2-d check on a smaller grid
        let grid = GridSpec::new(2, 8.0, 16).unwrap();
        let spec = KernelSpec::gaussian(1.0, 0.7).unwrap();
        let f = Field::from_fn(grid, |x| (x[0] * 0.8).cos() + (x[1] * 0.5).sin() + 2.0);
        let a = periodic_convolve(&f, &spec).unwrap();
        let b = periodic_convolve_direct(&f, &spec).unwrap();
        let scale = a.sup_norm();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(((x - y) / scale).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_spec_json_round_trip() {
        let spec = KernelSpec::tophat(2.0, 0.5).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"family":"tophat","amplitude":2.0,"range":0.5}"#);
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        // invalid payloads are rejected at parse time
        assert!(serde_json::from_str::<KernelSpec>(
            r#"{"family":"tophat","amplitude":-1.0,"range":0.5}"#
        )
        .is_err());
        assert!(serde_json::from_str::<KernelSpec>(
            r#"{"family":"tophat","amplitude":1.0,"range":0.5,"extra":1}"#
        )
        .is_err());
    }
}
