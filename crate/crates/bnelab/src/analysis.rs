//! Sobolev norms, special-function constants, the Riccati comparison
//! machinery and norm-inflation reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrange::TrajectoryRecord;
use crate::spectral::{forward_transform, RealField};

/// Ratio bound between the whole-line embedding integral and its periodic
/// mode-sum analogue for sigma >= 0.6 on a 2*pi box, measured once by
/// Euler-Maclaurin summation (worst case coth(pi) = 1.00374 at sigma = 1).
pub const PERIODIC_EMBEDDING_CORRECTION: f64 = 1.01;

/// || u ||_{H^s} = ( L * sum_j (1 + kappa_j^2)^s |c_j|^2 )^{1/2}.
/// With the crate's 1/n forward normalisation, s = 0 reproduces the L^2
/// integral over one period.
pub fn sobolev_norm(u: &RealField, s: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::BadParameter(format!(
            "Sobolev index must be finite, got {s}"
        )));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("field in sobolev_norm"));
    }
    let spec = forward_transform(u);
    let mut acc = 0.0;
    for (c, &k) in spec.coeffs().iter().zip(u.grid().wavenumbers()) {
        acc += (1.0 + k * k).powf(s) * c.norm_sqr();
    }
    Ok((u.grid().length() * acc).sqrt())
}

/// Lanczos approximation (g = 7, 9 terms), relative error below 1e-12 on the
/// positive axis.
pub fn gamma_function(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::BadParameter(format!(
            "gamma_function requires x > 0, got {x}"
        )));
    }
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let z = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    let sqrt_two_pi = (2.0 * std::f64::consts::PI).sqrt();
    Ok(sqrt_two_pi * t.powf(z + 0.5) * (-t).exp() * acc)
}

/// Whole-line embedding integral int (1 + xi^2)^{-sigma} dxi via the Gamma
/// closed form sqrt(pi) Gamma(sigma - 1/2) / Gamma(sigma).
pub fn embedding_constant(sigma: f64) -> Result<f64> {
    if !(sigma > 0.5) || !sigma.is_finite() {
        return Err(Error::BadParameter(format!(
            "embedding integral diverges unless sigma > 1/2, got {sigma}"
        )));
    }
    let pi = std::f64::consts::PI;
    Ok(pi.sqrt() * gamma_function(sigma - 0.5)? / gamma_function(sigma)?)
}

/// The same integral by adaptive quadrature on [0, A] plus a three-term
/// asymptotic tail, used as an independent cross-check of the Gamma route.
pub fn embedding_constant_quadrature(sigma: f64) -> Result<f64> {
    if !(sigma > 0.5) || !sigma.is_finite() {
        return Err(Error::BadParameter(format!(
            "embedding integral diverges unless sigma > 1/2, got {sigma}"
        )));
    }
    let a = 1000.0_f64;
    let main = adaptive_simpson(&|x: f64| (1.0 + x * x).powf(-sigma), 0.0, a, 1e-11, 40);
    let tail = a.powf(1.0 - 2.0 * sigma) / (2.0 * sigma - 1.0)
        - sigma * a.powf(-1.0 - 2.0 * sigma) / (2.0 * sigma + 1.0)
        + 0.5 * sigma * (sigma + 1.0) * a.powf(-3.0 - 2.0 * sigma) / (2.0 * sigma + 3.0);
    Ok(2.0 * (main + tail))
}

/// Periodic analogue of the embedding integral: (2 pi / L) * sum over the
/// grid's modes of (1 + kappa^2)^{-sigma}.  Exceeds the whole-line value by
/// at most `PERIODIC_EMBEDDING_CORRECTION` for sigma >= 0.6.
pub fn periodic_mode_sum(grid: &crate::spectral::Grid, sigma: f64) -> f64 {
    let s: f64 = grid
        .wavenumbers()
        .iter()
        .map(|&k| (1.0 + k * k).powf(-sigma))
        .sum();
    s * 2.0 * std::f64::consts::PI / grid.length()
}

/// Local-existence time scale (2s - 3) / ||u0||^2 times an absolute constant;
/// only ratios and orderings of this quantity are ever used.
pub fn lifespan_estimate(u0_norm: f64, s: f64, absolute_constant: f64) -> Result<f64> {
    if !(s > 1.5) {
        return Err(Error::BadParameter(format!(
            "lifespan scale needs a Sobolev index above 3/2, got {s}"
        )));
    }
    if !(u0_norm > 0.0) || !u0_norm.is_finite() {
        return Err(Error::BadParameter(format!(
            "lifespan scale needs a positive norm, got {u0_norm}"
        )));
    }
    Ok(absolute_constant * (2.0 * s - 3.0) / (u0_norm * u0_norm))
}

/// Coefficients of the comparison inequality
///   f'(t) <= -((b-2)/2) f(t)^2 + c1 eps^{-4 alpha}
/// together with the entry threshold f(0) < -c2 eps^{-2 alpha}.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RiccatiParams {
    pub b: f64,
    pub alpha: f64,
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
}

impl RiccatiParams {
    pub fn new(b: f64, alpha: f64, eps: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(b >= 3.0) {
            return Err(Error::BadParameter(format!(
                "comparison argument requires b >= 3, got {b}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::BadParameter(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::BadParameter(format!(
                "eps must be positive, got {eps}"
            )));
        }
        if !(c1 >= 0.0 && c1.is_finite()) {
            return Err(Error::BadParameter(format!(
                "c1 must be non-negative, got {c1}"
            )));
        }
        if !(c2 > 0.0 && c2.is_finite()) {
            return Err(Error::BadParameter(format!(
                "c2 must be positive, got {c2}"
            )));
        }
        let p = RiccatiParams { b, alpha, eps, c1, c2 };
        if !(c1 < p.damping() * c2 * c2) {
            return Err(Error::BadParameter(format!(
                "forcing too strong: need c1 < ((b-2)/2) c2^2, got c1 = {c1}, bound = {}",
                p.damping() * c2 * c2
            )));
        }
        Ok(p)
    }

    /// (b - 2) / 2, the quadratic damping strength.
    pub fn damping(&self) -> f64 {
        0.5 * (self.b - 2.0)
    }

    /// Entry threshold -c2 eps^{-2 alpha}.
    pub fn entry_threshold(&self) -> f64 {
        -self.c2 * self.eps.powf(-2.0 * self.alpha)
    }

    /// Slope of 1/f along the comparison:
    /// m = (b-2)/2 - c1/c2^2, positive by the c1 constraint.
    pub fn reciprocal_slope(&self) -> f64 {
        self.damping() - self.c1 / (self.c2 * self.c2)
    }
}

/// Comparison blow-up time.  Integrating (1/f)' >= m from the entry
/// condition gives 1/f(t) >= 1/f0 + m t, hence f escapes to -infinity no
/// later than T* = 1/(|f0| m); with c1 = 0 this is the separable solution
/// 2/((b-2)|f0|).  Returns infinity when f0 misses the entry threshold.
pub fn riccati_blowup_time(f0: f64, params: &RiccatiParams) -> f64 {
    if !(f0 < params.entry_threshold()) {
        return f64::INFINITY;
    }
    1.0 / (f0.abs() * params.reciprocal_slope())
}

/// A time series of one Sobolev norm along a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormSeries {
    s: f64,
    samples: Vec<(f64, f64)>,
}

impl NormSeries {
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::BadParameter(format!(
                "Sobolev index must be finite, got {s}"
            )));
        }
        Ok(NormSeries {
            s,
            samples: Vec::new(),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn push(&mut self, t: f64, norm: f64) -> Result<()> {
        if !(norm >= 0.0) || !norm.is_finite() {
            return Err(Error::BadParameter(format!(
                "norms must be non-negative and finite, got {norm}"
            )));
        }
        if let Some(&(prev, _)) = self.samples.last() {
            if !(t > prev) {
                return Err(Error::NonMonotoneTime { prev, next: t });
            }
        }
        self.samples.push((t, norm));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn initial_norm(&self) -> Option<f64> {
        self.samples.first().map(|&(_, n)| n)
    }

    /// (time, norm) of the largest recorded norm.
    pub fn max_sample(&self) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .copied()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Midpoint time of the interval with the steepest logarithmic growth.
    pub fn time_of_fastest_growth(&self) -> Option<f64> {
        if self.samples.len() < 2 {
            return self.samples.first().map(|&(t, _)| t);
        }
        let mut best = f64::NEG_INFINITY;
        let mut at = self.samples[0].0;
        for w in self.samples.windows(2) {
            let (t0, n0) = w[0];
            let (t1, n1) = w[1];
            let rate = if n0 > 0.0 && n1 > 0.0 {
                (n1.ln() - n0.ln()) / (t1 - t0)
            } else {
                (n1 - n0) / (t1 - t0)
            };
            if rate > best {
                best = rate;
                at = 0.5 * (t0 + t1);
            }
        }
        Some(at)
    }
}

/// Summary of one inflation run: the measured entry slope, the fitted
/// comparison coefficients, the predicted blow-up time and the norm growth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InflationReport {
    pub num_scales: u32,
    pub eps: f64,
    pub alpha: f64,
    pub b: f64,
    /// f(0) = 2 u u_x at the tracked point, scaled data.
    pub slope_product_initial: f64,
    /// Fitted entry coefficient c2 = |f(0)| eps^{2 alpha} / 2.
    pub entry_coefficient: f64,
    /// Fitted forcing coefficient c1 = ((b-2)/4) c2^2.
    pub forcing_coefficient: f64,
    /// Comparison time from the fitted coefficients; None when the entry
    /// condition fails (no blow-up guaranteed).
    pub predicted_blowup_time: Option<f64>,
    pub norm_index: f64,
    pub initial_norm: f64,
    pub max_norm: f64,
    pub inflation_ratio: f64,
    pub time_of_max_norm: f64,
    pub time_of_fastest_growth: f64,
    pub terminal_status: String,
    pub terminal_time: f64,
}

/// Assembles the report for a finished run.  The comparison coefficients are
/// fitted deterministically from the measured f(0): c2 as half the entry
/// margin and c1 at half its admissible bound.
pub fn inflation_report(
    series: &NormSeries,
    trajectory: &[TrajectoryRecord],
    b: f64,
    alpha: f64,
    eps: f64,
    num_scales: u32,
    terminal_status: &str,
    terminal_time: f64,
) -> Result<InflationReport> {
    if series.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if trajectory.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let f0 = trajectory[0].slope_product;
    let c2 = 0.5 * f0.abs() * eps.powf(2.0 * alpha);
    let c1 = 0.25 * (b - 2.0) * c2 * c2;
    let predicted = if c2 > 0.0 {
        let params = RiccatiParams::new(b, alpha, eps, c1, c2)?;
        let t = riccati_blowup_time(f0, &params);
        t.is_finite().then_some(t)
    } else {
        None
    };
    let initial_norm = series.initial_norm().unwrap();
    let (t_max, max_norm) = series.max_sample().unwrap();
    let ratio = if initial_norm > 0.0 {
        max_norm / initial_norm
    } else {
        1.0
    };
    Ok(InflationReport {
        num_scales,
        eps,
        alpha,
        b,
        slope_product_initial: f0,
        entry_coefficient: c2,
        forcing_coefficient: c1,
        predicted_blowup_time: predicted,
        norm_index: series.s(),
        initial_norm,
        max_norm,
        inflation_ratio: ratio,
        time_of_max_norm: t_max,
        time_of_fastest_growth: series.time_of_fastest_growth().unwrap(),
        terminal_status: terminal_status.to_string(),
        terminal_time,
    })
}

/// The asymptotic parameter regime of the underlying construction, kept as
/// formulas.  The scale count eps^{-9} is astronomically beyond any desk
/// grid; `feasible` records whether a given cap covers it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticRegime {
    pub eps: f64,
    pub ideal_num_scales: f64,
    pub sobolev_index: f64,
    pub model_norm: f64,
    pub lifespan_scale: f64,
    pub lifespan_to_eps_ratio: f64,
    pub feasible_at_max_scales: bool,
}

/// Evaluates the construction's own parameter choices K = eps^{-9},
/// s = (3 + eps^9)/2 and the resulting lifespan ratio eps^{-6}/2.
pub fn asymptotic_regime(eps: f64, max_feasible_scales: u32) -> Result<AsymptoticRegime> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadParameter(format!(
            "asymptotic regime needs 0 < eps < 1, got {eps}"
        )));
    }
    let kf = eps.powf(-9.0);
    let s = 0.5 * (3.0 + eps.powi(9));
    let two_s_minus_3 = eps.powi(9);
    // || eps * u_{0,K} ||_{H^s} model: eps * 2^{K(2s-3)/2} / K^{2/3}
    let model_norm = eps * 2f64.powf(0.5 * kf * two_s_minus_3) / kf.powf(2.0 / 3.0);
    let lifespan = lifespan_estimate(model_norm, s, 1.0)?;
    Ok(AsymptoticRegime {
        eps,
        ideal_num_scales: kf,
        sobolev_index: s,
        model_norm,
        lifespan_scale: lifespan,
        lifespan_to_eps_ratio: lifespan / eps,
        feasible_at_max_scales: kf <= max_feasible_scales as f64,
    })
}

/// Composite Simpson rule with `panels` even subdivisions.
pub fn composite_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels.max(2) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Adaptive Simpson quadrature with Richardson acceptance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}
