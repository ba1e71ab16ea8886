//! Fourier collocation layer: periodic grids, transforms, Bessel-potential
//! multipliers, spectral derivatives, de-aliasing and off-grid evaluation.
//!
//! Conventions.  A grid covers [x_min, x_min + length) with n equispaced
//! nodes, n a power of two.  Mode j carries wavenumber kappa_j = 2*pi*j /
//! length for j in the symmetric index set {-n/2, ..., n/2 - 1}, stored in
//! FFT order.  The forward transform divides by n so that coefficients are
//! Fourier-series coefficients of the interpolating trigonometric polynomial
//! sum_j c_j exp(i kappa_j (x - x_min)); they do not depend on n for
//! band-limited fields.

use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Immutable description of a uniform periodic grid.
#[derive(Debug)]
pub struct GridSpec {
    x_min: f64,
    length: f64,
    n: usize,
    dx: f64,
    /// Signed wavenumbers in FFT storage order; index n/2 holds -n/2.
    wavenumbers: Vec<f64>,
}

/// Grids are shared, never copied.
pub type Grid = Arc<GridSpec>;

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.x_min == other.x_min && self.length == other.length && self.n == other.n
    }
}

impl GridSpec {
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node coordinate of index i in 0..n.
    pub fn node(&self, i: usize) -> f64 {
        self.x_min + self.dx * i as f64
    }

    /// Signed mode index for FFT storage slot m.
    pub fn signed_index(&self, m: usize) -> i64 {
        let m = m as i64;
        let n = self.n as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Wavenumber of FFT storage slot m.
    pub fn wavenumber(&self, m: usize) -> f64 {
        self.wavenumbers[m]
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Largest retained |j| under the 1/3 de-aliasing rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Index of the node closest to x (periodic wrap).
    pub fn nearest_node(&self, x: f64) -> usize {
        let u = (x - self.x_min) / self.dx;
        let i = u.round() as i64;
        i.rem_euclid(self.n as i64) as usize
    }
}

/// Builds a grid after validating the spacing invariants.
pub fn make_grid(x_min: f64, length: f64, n_points: usize) -> Result<Grid> {
    if !x_min.is_finite() {
        return Err(Error::BadDomainOrigin(x_min));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::BadDomainLength(length));
    }
    if n_points < 8 || !n_points.is_power_of_two() {
        return Err(Error::BadGridSize(n_points));
    }
    let dk = 2.0 * std::f64::consts::PI / length;
    let n = n_points;
    let mut wavenumbers = Vec::with_capacity(n);
    for m in 0..n {
        let j = if m < n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        };
        wavenumbers.push(dk * j as f64);
    }
    Ok(Arc::new(GridSpec {
        x_min,
        length,
        n,
        dx: length / n as f64,
        wavenumbers,
    }))
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Real-valued samples on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: &Grid) -> Self {
        RealField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::BadFieldLength {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(RealField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        RealField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Node value nearest to x.
    pub fn value_near(&self, x: f64) -> f64 {
        self.values[self.grid.nearest_node(x)]
    }

    /// Pointwise product; both fields must share the grid.
    pub fn product(&self, other: &RealField) -> Result<RealField> {
        check_same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(RealField {
            grid: self.grid.clone(),
            values,
        })
    }

    /// self + scale * other.
    pub fn add_scaled(&self, scale: f64, other: &RealField) -> Result<RealField> {
        check_same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(RealField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scaled(&self, scale: f64) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| scale * v).collect(),
        }
    }
}

/// Fourier coefficients of a real field, FFT storage order.
#[derive(Debug, Clone)]
pub struct SpectrumField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectrumField {
    /// Assembles a spectrum from raw FFT-order coefficients.
    pub fn from_parts(grid: Grid, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(grid.len(), coeffs.len(), "coefficient count must match grid");
        SpectrumField { grid, coeffs }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of signed mode j (0 when |j| exceeds the stored range).
    pub fn coeff(&self, j: i64) -> Complex64 {
        let n = self.grid.len() as i64;
        if j < -n / 2 || j > n / 2 - 1 {
            return Complex64::new(0.0, 0.0);
        }
        let m = j.rem_euclid(n) as usize;
        self.coeffs[m]
    }

    /// Largest deviation from the conjugate symmetry c_{-j} = conj(c_j)
    /// that real fields must satisfy.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let n = self.grid.len();
        let mut worst = self.coeffs[0].im.abs();
        worst = worst.max(self.coeffs[n / 2].im.abs());
        for j in 1..n / 2 {
            let d = self.coeffs[j] - self.coeffs[n - j].conj();
            worst = worst.max(d.norm());
        }
        worst
    }

    /// Applies a real multiplier given as a function of the wavenumber.
    pub fn map_multiplier(&self, mut m: impl FnMut(f64) -> f64) -> SpectrumField {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, &k)| c * m(k))
            .collect();
        SpectrumField {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Applies a complex multiplier, e.g. i*kappa for one derivative.  The
    /// unmatched Nyquist mode is zeroed whenever the multiplier there is not
    /// purely real, mirroring the odd-derivative convention.
    pub fn map_multiplier_complex(
        &self,
        mut m: impl FnMut(f64) -> Complex64,
    ) -> SpectrumField {
        let n = self.grid.len();
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .enumerate()
            .map(|(i, (c, &k))| {
                let f = m(k);
                if i == n / 2 && f.im != 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * f
                }
            })
            .collect();
        SpectrumField {
            grid: self.grid.clone(),
            coeffs,
        }
    }
}

fn fft_plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("fft planner lock");
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Discrete Fourier transform with 1/n normalisation.
pub fn forward_transform(f: &RealField) -> SpectrumField {
    let n = f.grid.len();
    let (fwd, _) = fft_plans(n);
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let scale = 1.0 / n as f64;
    for c in &mut buf {
        *c *= scale;
    }
    SpectrumField {
        grid: f.grid.clone(),
        coeffs: buf,
    }
}

/// Inverse transform; imaginary parts are rounding noise for symmetric input
/// and are dropped.
pub fn inverse_transform(spec: &SpectrumField) -> RealField {
    let n = spec.grid.len();
    let (_, inv) = fft_plans(n);
    let mut buf = spec.coeffs.clone();
    inv.process(&mut buf);
    RealField {
        grid: spec.grid.clone(),
        values: buf.into_iter().map(|c| c.re).collect(),
    }
}

/// Applies the Bessel-potential multiplier (1 + kappa^2)^(p/2).
pub fn apply_bessel_multiplier(f: &RealField, p: f64) -> RealField {
    let spec = forward_transform(f);
    let spec = spec.map_multiplier(|k| (1.0 + k * k).powf(0.5 * p));
    inverse_transform(&spec)
}

/// Inverse Helmholtz operator (1 - d^2/dx^2)^{-1}, the p = -2 multiplier.
pub fn helmholtz_inverse(f: &RealField) -> RealField {
    let spec = forward_transform(f);
    let spec = spec.map_multiplier(|k| 1.0 / (1.0 + k * k));
    inverse_transform(&spec)
}

/// Derivative acting on an existing spectrum; orders 1 to 3.
pub fn derivative_spectrum(spec: &SpectrumField, order: u32) -> Result<SpectrumField> {
    if !(1..=3).contains(&order) {
        return Err(Error::BadDerivativeOrder(order));
    }
    let n = spec.grid.len();
    let mut coeffs = Vec::with_capacity(n);
    for (m, (&c, &k)) in spec.coeffs.iter().zip(spec.grid.wavenumbers()).enumerate() {
        let ik = Complex64::new(0.0, k);
        let mut factor = Complex64::new(1.0, 0.0);
        for _ in 0..order {
            factor *= ik;
        }
        // The unmatched Nyquist mode has no symmetric partner; odd-order
        // derivatives would make it imaginary, so it is dropped.
        let c = if m == n / 2 && order % 2 == 1 {
            Complex64::new(0.0, 0.0)
        } else {
            c * factor
        };
        coeffs.push(c);
    }
    Ok(SpectrumField {
        grid: spec.grid.clone(),
        coeffs,
    })
}

/// Spectral derivative of order 1, 2 or 3.
pub fn derivative(f: &RealField, order: u32) -> Result<RealField> {
    let spec = forward_transform(f);
    Ok(inverse_transform(&derivative_spectrum(&spec, order)?))
}

/// Zeroes coefficients with 3|j| > n, retaining |j| <= n/3.
pub fn dealias_spectrum(spec: &SpectrumField) -> SpectrumField {
    let n = spec.grid.len() as i64;
    let mut out = spec.clone();
    for m in 0..spec.coeffs.len() {
        let j = spec.grid.signed_index(m);
        if 3 * j.abs() > n {
            out.coeffs[m] = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Round-trip de-aliasing of a real field.
pub fn dealias(f: &RealField) -> RealField {
    inverse_transform(&dealias_spectrum(&forward_transform(f)))
}

/// Zero-pads a spectrum onto a grid refined by `factor`; the inverse
/// transform of the result reproduces the trigonometric interpolant on
/// the finer nodes.
pub fn upsample_spectrum(spec: &SpectrumField, factor: usize) -> Result<SpectrumField> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::BadParameter(format!(
            "upsample factor must be a power of two >= 1, got {factor}"
        )));
    }
    if factor == 1 {
        return Ok(spec.clone());
    }
    let n = spec.grid.len();
    let fine = make_grid(spec.grid.x_min(), spec.grid.length(), n * factor)?;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); fine.len()];
    for m in 0..n {
        let j = spec.grid.signed_index(m);
        if j == -(n as i64) / 2 {
            // Split the unmatched mode symmetrically to stay real.
            let half = spec.coeffs[m] * 0.5;
            coeffs[n / 2] += half;
            coeffs[fine.len() - n / 2] += half;
        } else {
            let slot = j.rem_euclid(fine.len() as i64) as usize;
            coeffs[slot] = spec.coeffs[m];
        }
    }
    Ok(SpectrumField {
        grid: fine,
        coeffs,
    })
}

/// Zero-pads the spectrum onto a grid refined by `factor`, reproducing the
/// trigonometric interpolant on the finer nodes.
pub fn upsample(f: &RealField, factor: usize) -> Result<RealField> {
    if factor == 1 {
        return Ok(f.clone());
    }
    Ok(inverse_transform(&upsample_spectrum(
        &forward_transform(f),
        factor,
    )?))
}

/// Trigonometric interpolant evaluated by a pair of Horner recurrences on the
/// unit circle; cost is one complex multiply-add per retained mode.
pub struct TrigInterpolant {
    spec: SpectrumField,
    /// Highest nonzero positive / negative mode, for skipping zero tails.
    j_pos: usize,
    j_neg: usize,
    has_nyquist: bool,
}

impl TrigInterpolant {
    pub fn new(f: &RealField) -> Self {
        TrigInterpolant::from_spectrum(forward_transform(f))
    }

    pub fn from_spectrum(spec: SpectrumField) -> Self {
        let n = spec.grid.len();
        let mut j_pos = 0;
        for j in (1..n / 2).rev() {
            if spec.coeffs[j].norm_sqr() > 0.0 {
                j_pos = j;
                break;
            }
        }
        let mut j_neg = 0;
        for j in (1..n / 2).rev() {
            if spec.coeffs[n - j].norm_sqr() > 0.0 {
                j_neg = j;
                break;
            }
        }
        let has_nyquist = spec.coeffs[n / 2].norm_sqr() > 0.0;
        TrigInterpolant {
            spec,
            j_pos,
            j_neg,
            has_nyquist,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.spec.grid()
    }

    /// Interpolant of the spectral derivative of this field.
    pub fn derivative(&self, order: u32) -> Result<TrigInterpolant> {
        Ok(TrigInterpolant::from_spectrum(derivative_spectrum(
            &self.spec, order,
        )?))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let grid = self.spec.grid();
        let n = grid.len();
        let theta =
            2.0 * std::f64::consts::PI * ((x - grid.x_min()) / grid.length()).rem_euclid(1.0);
        let z = Complex64::new(theta.cos(), theta.sin());
        let zc = z.conj();
        let c = &self.spec.coeffs;
        // sum_{j=1}^{j_pos} c_j z^j by Horner from the top mode down
        let mut pos = Complex64::new(0.0, 0.0);
        for j in (1..=self.j_pos).rev() {
            pos = (pos + c[j]) * z;
        }
        // sum_{j=1}^{j_neg} c_{-j} conj(z)^j stored at slot n - j
        let mut neg = Complex64::new(0.0, 0.0);
        for j in (1..=self.j_neg).rev() {
            neg = (neg + c[n - j]) * zc;
        }
        let mut val = (c[0] + pos + neg).re;
        if self.has_nyquist {
            // unmatched mode, interpolated symmetrically as a cosine
            val += c[n / 2].re * (0.5 * n as f64 * theta).cos();
        }
        val
    }
}

/// Evaluates the interpolating trigonometric polynomial at an arbitrary point.
pub fn interpolate_at(f: &RealField, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinitePoint(x));
    }
    Ok(TrigInterpolant::new(f).eval(x))
}

/// Discrete L2 inner product dx * sum f g.
pub fn inner_product(f: &RealField, g: &RealField) -> Result<f64> {
    check_same_grid(f.grid(), g.grid())?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.grid.dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn unit_grid(n: usize) -> Grid {
        make_grid(0.0, 2.0 * PI, n).unwrap()
    }

    #[test]
    fn grid_layout_matches_examples() {
        let g = make_grid(0.0, 2.0 * PI, 8).unwrap();
        assert_relative_eq!(g.dx(), PI / 4.0, max_relative = 1e-15);
        let ks: Vec<i64> = (0..8).map(|m| g.signed_index(m)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for m in 0..8 {
            assert_relative_eq!(
                g.wavenumber(m),
                g.signed_index(m) as f64,
                max_relative = 1e-15
            );
        }
        let g = make_grid(-24.0, 256.0, 1024).unwrap();
        assert_relative_eq!(g.dx(), 0.25, max_relative = 1e-15);
        assert_relative_eq!(g.wavenumber(1), 2.0 * PI / 256.0, max_relative = 1e-15);
        assert_eq!(g.dealias_cutoff(), 341);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(make_grid(0.0, 2.0 * PI, 12).is_err());
        assert!(make_grid(0.0, 2.0 * PI, 4).is_err());
        assert!(make_grid(0.0, -1.0, 16).is_err());
        assert!(make_grid(0.0, 0.0, 16).is_err());
        assert!(make_grid(f64::NAN, 1.0, 16).is_err());
    }

    #[test]
    fn forward_transform_cosine_has_two_modes() {
        let g = unit_grid(64);
        let f = RealField::from_fn(&g, |x| x.cos());
        let spec = forward_transform(&f);
        assert_relative_eq!(spec.coeff(1).re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(spec.coeff(-1).re, 0.5, epsilon = 1e-14);
        for j in -32..32_i64 {
            if j.abs() != 1 {
                assert!(spec.coeff(j).norm() < 1e-14, "mode {j} leaked");
            }
        }
        assert!(spec.conjugate_symmetry_error() < 1e-15);
    }

    #[test]
    fn round_trip_on_random_fields() {
        let mut rng = StdRng::seed_from_u64(7);
        let g = unit_grid(128);
        for _ in 0..1000 {
            let f = RealField::from_fn(&g, |_| rng.random_range(-1.0..1.0));
            let back = inverse_transform(&forward_transform(&f));
            let scale = f.max_abs().max(1e-300);
            let err = f
                .values()
                .iter()
                .zip(back.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-13 * scale, "round trip error {err}");
        }
    }

    #[test]
    fn parseval_identity_is_exact() {
        let mut rng = StdRng::seed_from_u64(8);
        let g = make_grid(-3.0, 10.0, 256).unwrap();
        let f = RealField::from_fn(&g, |_| rng.random_range(-2.0..2.0));
        let phys: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.dx();
        let spec = forward_transform(&f);
        let freq: f64 =
            spec.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() * g.length();
        assert_relative_eq!(phys, freq, max_relative = 1e-13);
    }

    #[test]
    fn bessel_multiplier_matches_cosine_eigenvalue() {
        let g = unit_grid(64);
        let f = RealField::from_fn(&g, |x| x.cos());
        for p in [-2.0, -1.0, 1.0, 2.0] {
            let out = apply_bessel_multiplier(&f, p);
            let factor = 2.0_f64.powf(0.5 * p);
            for (i, v) in out.values().iter().enumerate() {
                assert_relative_eq!(*v, factor * g.node(i).cos(), epsilon = 1e-12);
            }
        }
        let id = apply_bessel_multiplier(&f, 0.0);
        for (a, b) in id.values().iter().zip(f.values()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-13);
        }
    }

    #[test]
    fn bessel_multipliers_compose() {
        let mut rng = StdRng::seed_from_u64(9);
        let g = unit_grid(128);
        for _ in 0..50 {
            let f = dealias(&RealField::from_fn(&g, |_| rng.random_range(-1.0..1.0)));
            let p: f64 = rng.random_range(-2.0..2.0);
            let q: f64 = rng.random_range(-2.0..2.0);
            let one = apply_bessel_multiplier(&apply_bessel_multiplier(&f, p), q);
            let two = apply_bessel_multiplier(&f, p + q);
            let scale = two.max_abs().max(1.0);
            for (a, b) in one.values().iter().zip(two.values()) {
                assert!((a - b).abs() <= 1e-11 * scale);
            }
        }
    }

    #[test]
    fn helmholtz_inverse_halves_cosine() {
        let g = unit_grid(64);
        let f = RealField::from_fn(&g, |x| x.cos());
        let out = helmholtz_inverse(&f);
        for (i, v) in out.values().iter().enumerate() {
            assert_relative_eq!(*v, 0.5 * g.node(i).cos(), epsilon = 1e-13);
        }
        let zero = helmholtz_inverse(&RealField::zeros(&g));
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn helmholtz_inverse_inverts_operator() {
        let mut rng = StdRng::seed_from_u64(10);
        let g = make_grid(-5.0, 17.0, 256).unwrap();
        let f = RealField::from_fn(&g, |_| rng.random_range(-1.0..1.0));
        let w = helmholtz_inverse(&f);
        let back = w.add_scaled(-1.0, &derivative(&w, 2).unwrap()).unwrap();
        let scale = f.max_abs();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    /// Narrow Gaussian vs. direct quadrature of the exp(-|x-y|)/2 kernel.
    /// The trapezoid reference is second order, so its disagreement with the
    /// spectral value must shrink by ~4x when the quadrature grid doubles.
    #[test]
    fn helmholtz_inverse_matches_kernel_quadrature() {
        let sigma = 0.25;
        let gauss = |x: f64| (-0.5 * (x / sigma).powi(2)).exp();
        let quad_err_at = |nq: usize| -> f64 {
            let g = make_grid(-20.0, 40.0, nq).unwrap();
            let f = RealField::from_fn(&g, gauss);
            let w = helmholtz_inverse(&f);
            let mut worst = 0.0_f64;
            for &xi in &[0.0, 0.5, -1.25, 3.0] {
                let i = g.nearest_node(xi);
                let x = g.node(i);
                let mut acc = 0.0;
                for jn in 0..g.len() {
                    acc += 0.5 * (-(x - g.node(jn)).abs()).exp() * f.values()[jn];
                }
                acc *= g.dx();
                worst = worst.max((w.values()[i] - acc).abs());
            }
            worst
        };
        let coarse = quad_err_at(1024);
        let fine = quad_err_at(2048);
        assert!(coarse < 1e-3, "coarse disagreement {coarse}");
        assert!(fine < 0.25 * coarse * 1.3, "no quadratic decay: {coarse} -> {fine}");
    }

    #[test]
    fn derivative_matches_trig_calculus() {
        let g = unit_grid(64);
        let f = RealField::from_fn(&g, |x| x.cos());
        let d1 = derivative(&f, 1).unwrap();
        let d2 = derivative(&f, 2).unwrap();
        let d3 = derivative(&f, 3).unwrap();
        for i in 0..g.len() {
            let x = g.node(i);
            assert_relative_eq!(d1.values()[i], -x.sin(), epsilon = 1e-12);
            assert_relative_eq!(d2.values()[i], -x.cos(), epsilon = 1e-12);
            assert_relative_eq!(d3.values()[i], x.sin(), epsilon = 1e-11);
        }
        let c = RealField::from_fn(&g, |_| 3.25);
        assert!(derivative(&c, 1).unwrap().max_abs() < 1e-13);
        assert!(matches!(
            derivative(&f, 0),
            Err(Error::BadDerivativeOrder(0))
        ));
        assert!(matches!(
            derivative(&f, 4),
            Err(Error::BadDerivativeOrder(4))
        ));
    }

    #[test]
    fn derivative_is_diagonal_on_modes() {
        let g = make_grid(-1.0, 5.0, 64).unwrap();
        for j in [1_i64, 5, 20, 31] {
            let k = 2.0 * PI * j as f64 / g.length();
            let fc = RealField::from_fn(&g, |x| (k * (x - g.x_min())).cos());
            let fs = RealField::from_fn(&g, |x| (k * (x - g.x_min())).sin());
            let dc = derivative(&fc, 1).unwrap();
            for i in 0..g.len() {
                let x = g.node(i) - g.x_min();
                assert_relative_eq!(
                    dc.values()[i],
                    -k * (k * x).sin(),
                    epsilon = 1e-9 * k.max(1.0)
                );
            }
            let ds = derivative(&fs, 1).unwrap();
            for i in 0..g.len() {
                let x = g.node(i) - g.x_min();
                assert_relative_eq!(ds.values()[i], k * (k * x).cos(), epsilon = 1e-9 * k.max(1.0));
            }
        }
    }

    #[test]
    fn dealias_keeps_low_modes_and_is_idempotent() {
        let g = unit_grid(256);
        // cutoff 85: mode 85 kept, 86 zeroed
        let f = RealField::from_fn(&g, |x| (85.0 * x).cos() + (86.0 * x).cos());
        let spec = forward_transform(&dealias(&f));
        assert_relative_eq!(spec.coeff(85).re, 0.5, epsilon = 1e-12);
        assert!(spec.coeff(86).norm() < 1e-13);

        let mut rng = StdRng::seed_from_u64(11);
        let r = RealField::from_fn(&g, |_| rng.random_range(-1.0..1.0));
        let once = dealias(&r);
        let twice = dealias(&once);
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() <= 1e-13);
        }
        // band-limited fields are fixed points
        let bl = RealField::from_fn(&g, |x| (3.0 * x).sin() - 0.5 * (40.0 * x).cos());
        let kept = dealias(&bl);
        for (a, b) in kept.values().iter().zip(bl.values()) {
            assert!((a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_cosine() {
        let g = unit_grid(64);
        let f = RealField::from_fn(&g, |x| x.cos());
        let v = interpolate_at(&f, PI / 5.0).unwrap();
        assert_relative_eq!(v, (PI / 5.0).cos(), epsilon = 1e-12);
        let mut rng = StdRng::seed_from_u64(12);
        let r = RealField::from_fn(&g, |_| rng.random_range(-1.0..1.0));
        for i in (0..g.len()).step_by(7) {
            let v = interpolate_at(&r, g.node(i)).unwrap();
            assert!((v - r.values()[i]).abs() <= 1e-12 * r.max_abs().max(1.0));
        }
        assert!(interpolate_at(&f, f64::NAN).is_err());
        assert!(interpolate_at(&f, f64::INFINITY).is_err());
    }

    #[test]
    fn interpolation_hits_closed_form_gaussian() {
        // Periodised Gaussian whose tails die below 1e-15 inside the box.
        let g = make_grid(-10.0, 20.0, 256).unwrap();
        let sigma = 0.7;
        let f = RealField::from_fn(&g, |x| (-0.5 * (x / sigma).powi(2)).exp());
        for &x in &[0.123, -2.5, 3.3377, 0.0, -9.99] {
            let v = interpolate_at(&f, x).unwrap();
            let exact = (-0.5 * (x / sigma).powi(2)).exp();
            assert!((v - exact).abs() <= 1e-10, "x={x}: {v} vs {exact}");
        }
    }

    #[test]
    fn interpolation_is_exact_on_band_limited_fields() {
        let mut rng = StdRng::seed_from_u64(13);
        let g = make_grid(-4.0, 9.0, 128).unwrap();
        for _ in 0..20 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            let j1 = rng.random_range(1..20) as f64;
            let j2 = rng.random_range(1..20) as f64;
            let k1 = 2.0 * PI * j1 / g.length();
            let k2 = 2.0 * PI * j2 / g.length();
            let f = RealField::from_fn(&g, |x| {
                a * (k1 * (x - g.x_min())).cos() + b * (k2 * (x - g.x_min())).sin()
            });
            let x = rng.random_range(g.x_min()..g.x_max());
            let exact =
                a * (k1 * (x - g.x_min())).cos() + b * (k2 * (x - g.x_min())).sin();
            let v = interpolate_at(&f, x).unwrap();
            assert!((v - exact).abs() <= 1e-11, "{v} vs {exact}");
        }
    }

    #[test]
    fn interpolant_derivative_matches_spectral_derivative() {
        let g = make_grid(-4.0, 9.0, 128).unwrap();
        let f = RealField::from_fn(&g, |x| (2.0 * PI * 3.0 * (x - g.x_min()) / g.length()).sin());
        let it = TrigInterpolant::new(&f);
        let dt = it.derivative(1).unwrap();
        let df = derivative(&f, 1).unwrap();
        for i in (0..g.len()).step_by(11) {
            assert_relative_eq!(dt.eval(g.node(i)), df.values()[i], epsilon = 1e-11);
        }
    }

    #[test]
    fn upsample_preserves_band_limited_values() {
        let g = unit_grid(32);
        let f = RealField::from_fn(&g, |x| (3.0 * x).cos() - 2.0 * (5.0 * x).sin());
        let fine = upsample(&f, 4).unwrap();
        assert_eq!(fine.grid().len(), 128);
        for i in 0..fine.grid().len() {
            let x = fine.grid().node(i);
            let exact = (3.0 * x).cos() - 2.0 * (5.0 * x).sin();
            assert!((fine.values()[i] - exact).abs() <= 1e-12);
        }
        assert!(upsample(&f, 3).is_err());
    }

    /// Perf probe for sizing long runs; run explicitly with --ignored.
    #[test]
    #[ignore]
    fn fft_throughput_probe() {
        use std::time::Instant;
        for p in [14_u32, 16, 17, 18, 19, 20] {
            let n = 1usize << p;
            let g = make_grid(0.0, 1.0, n).unwrap();
            let f = RealField::from_fn(&g, |x| (20.0 * x).sin());
            let mut spec = forward_transform(&f);
            let reps = if p <= 16 { 40 } else { 8 };
            let t0 = Instant::now();
            for _ in 0..reps {
                spec = forward_transform(&inverse_transform(&spec));
            }
            let per = t0.elapsed().as_secs_f64() / (2 * reps) as f64;
            println!(
                "n=2^{p}: {:.3} ms per transform, {:.2} s per 44-transform step",
                per * 1e3,
                per * 44.0
            );
        }
    }

    #[test]
    fn product_and_add_check_grids() {
        let g1 = unit_grid(32);
        let g2 = unit_grid(64);
        let a = RealField::from_fn(&g1, |x| x.cos());
        let b = RealField::from_fn(&g2, |x| x.sin());
        assert!(matches!(a.product(&b), Err(Error::GridMismatch)));
        let g3 = make_grid(0.0, 2.0 * PI, 32).unwrap();
        let c = RealField::from_fn(&g3, |x| x.sin());
        // structurally equal grids are interchangeable
        assert!(a.product(&c).is_ok());
    }
}
