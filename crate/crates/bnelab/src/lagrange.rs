//! Flow-map diagnostics along a tracked characteristic.
//!
//! A characteristic obeys dq/dt = u^k(q, t). Its spatial stretch has the
//! closed form q_x = exp of the time integral of k u^{k-1} u_x along the
//! path, and the momentum density y = (1 - d^2/dx^2)u times stretch^{b/k}
//! is constant along it. The half-line integrals weighted by exp(-|xi - q|)
//! connect the slope sum u + u_x and difference u - u_x to y, and feed the
//! differential inequality for the slope product u u_x at the tracked point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::spectral::{self, Grid, RealField, SpectrumField, TrigInterpolant};

/// Half-line quadrature is refused when the exponential weight at the
/// domain edge is still larger than this.
const EDGE_WEIGHT_LIMIT: f64 = 1e-9;

/// Fraction of the domain length kept clear of each edge by trajectories.
const TRUST_MARGIN_FRACTION: f64 = 1.0 / 16.0;

/// Upsampled quadrature aims for roughly this many nodes; the trapezoid
/// boundary error at the split point scales with the inverse square.
const QUADRATURE_TARGET_NODES: usize = 131_072;

/// Snapshot of one tracked characteristic with its pointwise and
/// half-line diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// Current location q of the characteristic.
    pub position: f64,
    /// Spatial derivative of the flow map at the seed; positive while the
    /// flow remains a diffeomorphism.
    pub stretch: f64,
    /// (u u_x) evaluated at the current location.
    pub slope_product: f64,
    pub u_at: f64,
    pub ux_at: f64,
    /// Weighted half-line integral over points right of the location.
    pub boundary_plus: f64,
    /// Weighted half-line integral over points left of the location.
    pub boundary_minus: f64,
    /// Largest wrong-signed momentum magnitude relative to the split at
    /// the current location.
    pub sign_violation: f64,
}

impl TrajectoryRecord {
    /// Synthetic record for a quiescent characteristic at the origin.
    pub fn at_origin(t: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            position: 0.0,
            stretch: 1.0,
            slope_product: 0.0,
            u_at: 0.0,
            ux_at: 0.0,
            boundary_plus: 0.0,
            boundary_minus: 0.0,
            sign_violation: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.position,
            self.stretch,
            self.slope_product,
            self.u_at,
            self.ux_at,
            self.boundary_plus,
            self.boundary_minus,
            self.sign_violation,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn trust_region(grid: &Grid) -> (f64, f64) {
    let margin = grid.length() * TRUST_MARGIN_FRACTION;
    (grid.x_min() + margin, grid.x_max() - margin)
}

fn check_in_domain(grid: &Grid, x: f64) -> Result<()> {
    if !(x.is_finite() && x >= grid.x_min() && x < grid.x_min() + grid.length()) {
        return Err(Error::TrajectoryOutOfRange {
            q: x,
            lo: grid.x_min(),
            hi: grid.x_min() + grid.length(),
        });
    }
    Ok(())
}

fn quadrature_upsample_factor(n: usize) -> usize {
    (QUADRATURE_TARGET_NODES / n).clamp(1, 64)
}

/// Refined grid together with the spectra and fields the half-line
/// quadratures share.
struct FineLevel {
    grid: Grid,
    spec: SpectrumField,
    u: RealField,
    ux: RealField,
}

impl FineLevel {
    fn build(u: &RealField) -> Result<FineLevel> {
        let factor = quadrature_upsample_factor(u.grid().len());
        let spec = spectral::upsample_spectrum(&spectral::forward_transform(u), factor)?;
        let fine_u = spectral::inverse_transform(&spec);
        let fine_ux = spectral::inverse_transform(&spectral::derivative_spectrum(&spec, 1)?);
        Ok(FineLevel {
            grid: fine_u.grid().clone(),
            spec,
            u: fine_u,
            ux: fine_ux,
        })
    }
}

/// Cubic integrand of the exponentially weighted half-line term; the
/// `right_side` flag flips the odd-order signs for the mirrored side.
pub fn half_line_cubic(u: f64, ux: f64, b: f64, right_side: bool) -> f64 {
    let s = if right_side { 1.0 } else { -1.0 };
    u * u * u
        + s * (b - 3.0) * u * u * ux
        + 0.5 * (6.0 - b) * u * ux * ux
        + s * 0.5 * (b - 2.0) * ux * ux * ux
}

/// The same cubic factored through the comparison quadratic plus the
/// exactly integrable remainder.
pub fn half_line_cubic_decomposed(u: f64, ux: f64, b: f64, right_side: bool) -> f64 {
    let s = if right_side { 1.0 } else { -1.0 };
    (u + s * ux)
        * (0.5 * (b - 2.0) * u * u + s * (4.0 - b) * u * ux + 0.5 * (b - 2.0) * ux * ux)
        + 0.5 * (4.0 - b) * (u * u * u - s * 3.0 * u * u * ux)
}

/// Quadratic factor appearing in the cubic decomposition.
pub fn comparison_quadratic(z: f64, b: f64, plus_branch: bool) -> f64 {
    let s = if plus_branch { 1.0 } else { -1.0 };
    0.5 * (b - 2.0) * z * z + s * (4.0 - b) * z + 0.5 * (b - 2.0)
}

/// Discriminant of the comparison quadratic; nonpositive exactly for
/// parameters b >= 3, which is where the quadratic keeps one sign.
pub fn comparison_discriminant(b: f64) -> f64 {
    12.0 - 4.0 * b
}

/// Trapezoid of the exponentially weighted integrand over the half-line
/// on one side of `q0`, clipped to the periodic window; the window edge
/// is closed with the wrapped node value on the right side. `at_q0` is
/// the unweighted integrand at `q0` itself.
fn weighted_side_integral(
    fine: &Grid,
    integrand: &[f64],
    at_q0: f64,
    q0: f64,
    right_side: bool,
) -> Result<f64> {
    check_in_domain(fine, q0)?;
    if integrand.len() != fine.len() {
        return Err(Error::BadFieldLength {
            expected: fine.len(),
            got: integrand.len(),
        });
    }
    let x_min = fine.x_min();
    let edge_hi = x_min + fine.length();
    let mut sum;
    let mut prev_x;
    let mut prev_g;
    if right_side {
        let edge_weight = (q0 - edge_hi).exp();
        if edge_weight > EDGE_WEIGHT_LIMIT {
            return Err(Error::QuadratureTruncated {
                weight: edge_weight,
            });
        }
        sum = 0.0;
        prev_x = q0;
        prev_g = at_q0;
        for (i, gi) in integrand.iter().enumerate() {
            let x = fine.node(i);
            if x <= q0 {
                continue;
            }
            let g = (q0 - x).exp() * gi;
            sum += 0.5 * (prev_g + g) * (x - prev_x);
            prev_x = x;
            prev_g = g;
        }
        let g = edge_weight * integrand[0];
        sum += 0.5 * (prev_g + g) * (edge_hi - prev_x);
    } else {
        let edge_weight = (x_min - q0).exp();
        if edge_weight > EDGE_WEIGHT_LIMIT {
            return Err(Error::QuadratureTruncated {
                weight: edge_weight,
            });
        }
        sum = 0.0;
        prev_x = x_min;
        prev_g = edge_weight * integrand[0];
        for (i, gi) in integrand.iter().enumerate().skip(1) {
            let x = fine.node(i);
            if x >= q0 {
                break;
            }
            let g = (x - q0).exp() * gi;
            sum += 0.5 * (prev_g + g) * (x - prev_x);
            prev_x = x;
            prev_g = g;
        }
        sum += 0.5 * (prev_g + at_q0) * (q0 - prev_x);
    }
    Ok(sum)
}

/// Point values of a field and its slope at an off-grid location.
fn point_values(u: &RealField, x: f64) -> Result<(f64, f64)> {
    check_in_domain(u.grid(), x)?;
    let interp = TrigInterpolant::new(u);
    let value = interp.eval(x);
    let slope = interp.derivative(1)?.eval(x);
    Ok((value, slope))
}

/// Slope product (u u_x) at an off-grid location.
pub fn slope_product_at(u: &RealField, q0: f64) -> Result<f64> {
    let (value, slope) = point_values(u, q0)?;
    Ok(value * slope)
}

/// Momentum density (1 - d^2/dx^2)u interpolated at an off-grid location.
pub fn momentum_at(u: &RealField, x: f64) -> Result<f64> {
    check_in_domain(u.grid(), x)?;
    let spec = spectral::forward_transform(u);
    let momentum_spec = spec.map_multiplier(|kap| 1.0 + kap * kap);
    Ok(TrigInterpolant::from_spectrum(momentum_spec).eval(x))
}

/// Residual of the along-flow momentum invariant: the momentum density at
/// the tracked point times stretch^(b/k), minus its initial value.
pub fn momentum_residual(
    u: &RealField,
    record: &TrajectoryRecord,
    initial_momentum: f64,
    params: &ModelParams,
) -> Result<f64> {
    if !(record.stretch > 0.0) {
        return Err(Error::InvariantFailure {
            name: "stretch_positive".into(),
            detail: format!("stretch {} at t {}", record.stretch, record.t),
        });
    }
    let transported = momentum_at(u, record.position)?
        * record.stretch.powf(params.b() / params.k() as f64);
    Ok(transported - initial_momentum)
}

/// Both weighted half-line integrals in evaluated form: local slope terms
/// at `q0` plus the cubic tail quadratures.
pub fn boundary_integrals(u: &RealField, q0: f64, b: f64) -> Result<(f64, f64)> {
    if !b.is_finite() {
        return Err(Error::BadParameter(format!("family weight {b}")));
    }
    check_in_domain(u.grid(), q0)?;
    let level = FineLevel::build(u)?;
    let n = level.grid.len();
    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    for i in 0..n {
        let (uv, sv) = (level.u.values()[i], level.ux.values()[i]);
        right.push(half_line_cubic(uv, sv, b, true));
        left.push(half_line_cubic(uv, sv, b, false));
    }

    let interp = TrigInterpolant::from_spectrum(level.spec.clone());
    let u0v = interp.eval(q0);
    let ux0v = interp.derivative(1)?.eval(q0);

    let tail_right = weighted_side_integral(
        &level.grid,
        &right,
        half_line_cubic(u0v, ux0v, b, true),
        q0,
        true,
    )?;
    let tail_left = weighted_side_integral(
        &level.grid,
        &left,
        half_line_cubic(u0v, ux0v, b, false),
        q0,
        false,
    )?;

    let local = u0v * u0v * ux0v;
    let skew = 0.5 * (b - 2.0) * u0v * ux0v * ux0v;
    Ok((-local - skew - tail_right, -local + skew + tail_left))
}

/// The same half-line integrals computed from the time derivative of the
/// momentum density, with no integration by parts: the weighted trapezoid
/// of exp(-|xi - q0|) times dy/dt, using dy/dt from the evolution law.
pub fn boundary_integrals_reference(u: &RealField, q0: f64, b: f64) -> Result<(f64, f64)> {
    if !b.is_finite() {
        return Err(Error::BadParameter(format!("family weight {b}")));
    }
    check_in_domain(u.grid(), q0)?;
    let level = FineLevel::build(u)?;
    let momentum_spec = level.spec.map_multiplier(|kap| 1.0 + kap * kap);
    let fine_yx = spectral::inverse_transform(&spectral::derivative_spectrum(&momentum_spec, 1)?);
    let fine_y = spectral::inverse_transform(&momentum_spec);

    let n = level.grid.len();
    let mut rate = Vec::with_capacity(n);
    for i in 0..n {
        let (uv, sv) = (level.u.values()[i], level.ux.values()[i]);
        let (yv, yxv) = (fine_y.values()[i], fine_yx.values()[i]);
        rate.push(-uv * uv * yxv - b * uv * sv * yv);
    }
    let rate_field = RealField::from_values(&level.grid, rate)?;
    let at_q0 = TrigInterpolant::new(&rate_field).eval(q0);
    let plus = weighted_side_integral(&level.grid, rate_field.values(), at_q0, q0, true)?;
    let minus = weighted_side_integral(&level.grid, rate_field.values(), at_q0, q0, false)?;
    Ok((plus, minus))
}

/// Reconstructs (u + u_x, u - u_x) at a point from the weighted half-line
/// integrals of the momentum density.
pub fn half_line_reconstruction(u: &RealField, x: f64) -> Result<(f64, f64)> {
    check_in_domain(u.grid(), x)?;
    let level = FineLevel::build(u)?;
    let momentum_spec = level.spec.map_multiplier(|kap| 1.0 + kap * kap);
    let fine_y = spectral::inverse_transform(&momentum_spec);
    let at_x = TrigInterpolant::from_spectrum(momentum_spec).eval(x);
    let sum_part = weighted_side_integral(&level.grid, fine_y.values(), at_x, x, true)?;
    let diff_part = weighted_side_integral(&level.grid, fine_y.values(), at_x, x, false)?;
    Ok((sum_part, diff_part))
}

/// Largest wrong-signed momentum magnitude for the split at `q0`: the
/// momentum density should be nonnegative left of `q0` and nonpositive
/// right of it.
pub fn sign_split_check(u: &RealField, q0: f64) -> Result<f64> {
    check_in_domain(u.grid(), q0)?;
    let momentum = spectral::apply_bessel_multiplier(u, 2.0);
    let grid = u.grid();
    let mut worst = 0.0f64;
    for (i, yv) in momentum.values().iter().enumerate() {
        let z = grid.node(i);
        let bad = if z < q0 {
            -yv
        } else if z > q0 {
            *yv
        } else {
            continue;
        };
        worst = worst.max(bad);
    }
    Ok(worst)
}

/// Largest violation of the slope sign facts implied by the momentum
/// split: u + u_x should be nonpositive right of `q0`, and u - u_x
/// nonnegative left of it.
pub fn slope_sign_violation(u: &RealField, q0: f64) -> Result<f64> {
    check_in_domain(u.grid(), q0)?;
    let spec = spectral::forward_transform(u);
    let ux = spectral::inverse_transform(&spectral::derivative_spectrum(&spec, 1)?);
    let grid = u.grid();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let z = grid.node(i);
        let (uv, sv) = (u.values()[i], ux.values()[i]);
        let bad = if z > q0 {
            uv + sv
        } else if z < q0 {
            sv - uv
        } else {
            continue;
        };
        worst = worst.max(bad);
    }
    Ok(worst)
}

/// Worst normalized signed residual of the along-flow differential
/// inequality: the centered time derivative of twice the slope product,
/// minus (b - 2) u^2 (u^2 - u_x^2) at the tracked point. Theory puts it
/// at or below zero for b >= 3 when the momentum sign split holds, so
/// positive values mean discretization error.
pub fn inequality_residual(records: &[TrajectoryRecord], b: f64) -> Result<f64> {
    if records.len() < 3 {
        return Err(Error::TooFewSamples {
            need: 3,
            got: records.len(),
        });
    }
    let mut residuals = Vec::with_capacity(records.len() - 2);
    let mut scale_max = 0.0f64;
    for window in records.windows(3) {
        let (before, here, after) = (&window[0], &window[1], &window[2]);
        let h1 = here.t - before.t;
        let h2 = after.t - here.t;
        if !(h1 > 0.0 && h2 > 0.0) {
            return Err(Error::NonMonotoneTime {
                prev: before.t,
                next: after.t,
            });
        }
        let g_m = 2.0 * before.slope_product;
        let g_0 = 2.0 * here.slope_product;
        let g_p = 2.0 * after.slope_product;
        // Three-point derivative on a possibly nonuniform stencil.
        let lhs = (h1 * h1 * g_p + (h2 * h2 - h1 * h1) * g_0 - h2 * h2 * g_m)
            / (h1 * h2 * (h1 + h2));
        let u2 = here.u_at * here.u_at;
        let rhs = (b - 2.0) * u2 * (u2 - here.ux_at * here.ux_at);
        let scale = lhs.abs().max(rhs.abs());
        scale_max = scale_max.max(scale);
        residuals.push((lhs - rhs, scale));
    }
    if scale_max == 0.0 {
        return Ok(0.0);
    }
    let floor = 1e-3 * scale_max;
    Ok(residuals
        .into_iter()
        .map(|(diff, scale)| diff / scale.max(floor))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Interpolants of one time level shared by every tracked seed.
struct FlowLevel {
    value: TrigInterpolant,
    slope: TrigInterpolant,
    t: f64,
}

impl FlowLevel {
    fn build(u: &RealField, t: f64) -> Result<FlowLevel> {
        let spec = spectral::forward_transform(u);
        let slope_spec = spectral::derivative_spectrum(&spec, 1)?;
        Ok(FlowLevel {
            value: TrigInterpolant::from_spectrum(spec),
            slope: TrigInterpolant::from_spectrum(slope_spec),
            t,
        })
    }
}

/// Per-seed integration state.
#[derive(Debug, Clone)]
struct SeedState {
    position: f64,
    log_stretch: f64,
    u_here: f64,
    ux_here: f64,
}

fn stretch_integrand(u: f64, ux: f64, k: u32) -> f64 {
    k as f64 * u.powi(k as i32 - 1) * ux
}

/// One RK4 step of the characteristic with the field blended linearly in
/// time between the two levels, plus the trapezoid update of the
/// log-stretch integral.
fn advance_seed(
    seed: &SeedState,
    old: &FlowLevel,
    new: &FlowLevel,
    dt: f64,
    k: u32,
    grid: &Grid,
) -> Result<SeedState> {
    let blend = |x: f64, theta: f64| -> f64 {
        ((1.0 - theta) * old.value.eval(x) + theta * new.value.eval(x)).powi(k as i32)
    };
    let q = seed.position;
    let v1 = seed.u_here.powi(k as i32);
    let v2 = blend(q + 0.5 * dt * v1, 0.5);
    let v3 = blend(q + 0.5 * dt * v2, 0.5);
    let v4 = blend(q + dt * v3, 1.0);
    let next_q = q + dt / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
    let (lo, hi) = trust_region(grid);
    if !(next_q.is_finite() && next_q >= lo && next_q <= hi) {
        return Err(Error::TrajectoryOutOfRange {
            q: next_q,
            lo,
            hi,
        });
    }
    let u_next = new.value.eval(next_q);
    let ux_next = new.slope.eval(next_q);
    let g0 = stretch_integrand(seed.u_here, seed.ux_here, k);
    let g1 = stretch_integrand(u_next, ux_next, k);
    Ok(SeedState {
        position: next_q,
        log_stretch: seed.log_stretch + 0.5 * dt * (g0 + g1),
        u_here: u_next,
        ux_here: ux_next,
    })
}

fn assemble_record(
    u: &RealField,
    t: f64,
    seed: &SeedState,
    params: &ModelParams,
    with_boundary: bool,
) -> Result<TrajectoryRecord> {
    let (boundary_plus, boundary_minus) = if with_boundary {
        boundary_integrals(u, seed.position, params.b())?
    } else {
        (0.0, 0.0)
    };
    let record = TrajectoryRecord {
        t,
        position: seed.position,
        stretch: seed.log_stretch.exp(),
        slope_product: seed.u_here * seed.ux_here,
        u_at: seed.u_here,
        ux_at: seed.ux_here,
        boundary_plus,
        boundary_minus,
        sign_violation: sign_split_check(u, seed.position)?,
    };
    if !record.is_finite() {
        return Err(Error::NonFinite("trajectory record"));
    }
    Ok(record)
}

/// Fully populated record for a characteristic seeded at `seed` in the
/// field `u0` at time `t0`.
pub fn initial_record(
    u0: &RealField,
    seed: f64,
    t0: f64,
    params: &ModelParams,
) -> Result<TrajectoryRecord> {
    let (u_here, ux_here) = point_values(u0, seed)?;
    let state = SeedState {
        position: seed,
        log_stretch: 0.0,
        u_here,
        ux_here,
    };
    assemble_record(u0, t0, &state, params, true)
}

/// Advances a record across one accepted PDE step from `u_old` at the
/// record's time to `u_new` at time t + dt, recomputing every diagnostic
/// in the new field. The record's point values must belong to `u_old`.
pub fn advance_trajectory(
    record: &TrajectoryRecord,
    u_old: &RealField,
    u_new: &RealField,
    dt: f64,
    params: &ModelParams,
) -> Result<TrajectoryRecord> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if u_old.grid() != u_new.grid() {
        return Err(Error::GridMismatch);
    }
    if !(record.stretch > 0.0) {
        return Err(Error::InvariantFailure {
            name: "stretch_positive".into(),
            detail: format!("stretch {} at t {}", record.stretch, record.t),
        });
    }
    let old = FlowLevel::build(u_old, record.t)?;
    let new = FlowLevel::build(u_new, record.t + dt)?;
    let state = SeedState {
        position: record.position,
        log_stretch: record.stretch.ln(),
        u_here: record.u_at,
        ux_here: record.ux_at,
    };
    let advanced = advance_seed(&state, &old, &new, dt, params.k(), u_new.grid())?;
    assemble_record(u_new, record.t + dt, &advanced, params, true)
}

/// Observer tracking a set of characteristics through a simulation and
/// emitting diagnostic records on the record cadence.
pub struct TrajectoryTracker {
    params: ModelParams,
    seeds: Vec<f64>,
    with_boundary: bool,
    states: Vec<SeedState>,
    initial_momenta: Vec<f64>,
    series: Vec<Vec<TrajectoryRecord>>,
    momentum_worst: f64,
    current: Option<FlowLevel>,
}

impl TrajectoryTracker {
    pub fn new(seeds: Vec<f64>, params: ModelParams) -> Result<TrajectoryTracker> {
        if seeds.iter().any(|s| !s.is_finite()) {
            return Err(Error::BadParameter("non-finite trajectory seed".into()));
        }
        Ok(TrajectoryTracker {
            params,
            seeds,
            with_boundary: false,
            states: Vec::new(),
            initial_momenta: Vec::new(),
            series: Vec::new(),
            momentum_worst: 0.0,
            current: None,
        })
    }

    /// Enables the half-line integral columns; needs a domain wide enough
    /// for the exponential weight to die out on both sides of each seed.
    pub fn with_boundary_diagnostics(mut self, enabled: bool) -> TrajectoryTracker {
        self.with_boundary = enabled;
        self
    }

    pub fn series(&self) -> &[Vec<TrajectoryRecord>] {
        &self.series
    }

    pub fn into_series(self) -> Vec<Vec<TrajectoryRecord>> {
        self.series
    }

    pub fn initial_momenta(&self) -> &[f64] {
        &self.initial_momenta
    }

    /// Largest |transported momentum - initial| seen at any record time.
    pub fn worst_momentum_residual(&self) -> f64 {
        self.momentum_worst
    }

    fn require_init(&self) -> Result<()> {
        if self.current.is_none() {
            return Err(Error::InvariantFailure {
                name: "tracker_initialized".into(),
                detail: "observer stepped before initialization".into(),
            });
        }
        Ok(())
    }

    fn record_all(&mut self, state: &crate::evolve::SimulationState) -> Result<()> {
        let spec = spectral::forward_transform(&state.u);
        let momentum_interp =
            TrigInterpolant::from_spectrum(spec.map_multiplier(|kap| 1.0 + kap * kap));
        let exponent = self.params.b() / self.params.k() as f64;
        for i in 0..self.states.len() {
            let record = assemble_record(
                &state.u,
                state.t,
                &self.states[i],
                &self.params,
                self.with_boundary,
            )?;
            let transported =
                momentum_interp.eval(record.position) * record.stretch.powf(exponent);
            let residual = (transported - self.initial_momenta[i]).abs();
            self.momentum_worst = self.momentum_worst.max(residual);
            self.series[i].push(record);
        }
        Ok(())
    }
}

impl crate::evolve::Observer for TrajectoryTracker {
    fn on_init(&mut self, state: &crate::evolve::SimulationState) -> Result<()> {
        let level = FlowLevel::build(&state.u, state.t)?;
        self.states.clear();
        self.initial_momenta.clear();
        self.series = vec![Vec::new(); self.seeds.len()];
        self.momentum_worst = 0.0;
        let spec = spectral::forward_transform(&state.u);
        let momentum_interp =
            TrigInterpolant::from_spectrum(spec.map_multiplier(|kap| 1.0 + kap * kap));
        for &seed in &self.seeds {
            check_in_domain(state.u.grid(), seed)?;
            self.states.push(SeedState {
                position: seed,
                log_stretch: 0.0,
                u_here: level.value.eval(seed),
                ux_here: level.slope.eval(seed),
            });
            self.initial_momenta.push(momentum_interp.eval(seed));
        }
        self.current = Some(level);
        self.record_all(state)
    }

    fn on_step(
        &mut self,
        prev: &crate::evolve::SimulationState,
        next: &crate::evolve::SimulationState,
    ) -> Result<()> {
        self.require_init()?;
        let old = self.current.take().expect("checked by require_init");
        if (old.t - prev.t).abs() > 1e-12 * prev.t.abs().max(1.0) {
            return Err(Error::NonMonotoneTime {
                prev: old.t,
                next: prev.t,
            });
        }
        let new = FlowLevel::build(&next.u, next.t)?;
        let dt = next.t - prev.t;
        for state in &mut self.states {
            *state = advance_seed(state, &old, &new, dt, self.params.k(), next.u.grid())?;
        }
        self.current = Some(new);
        Ok(())
    }

    fn on_record(&mut self, state: &crate::evolve::SimulationState) -> Result<()> {
        self.require_init()?;
        self.record_all(state)
    }
}
