//! Fixed points, their linear stability, hysteresis scans and the bistability
//! threshold.
//!
//! At a fixed point the orientation sits at `pump_steady(I)` (or 0 with
//! pumping off) and the field equation reduces to the scalar state equation
//!
//! ```text
//! f(I) = I [(kappa + A)^2 + phi_cav^2] - t^2 I_in = 0,   0 < I <= t^2 I_in / kappa^2
//! ```
//!
//! which is solved by sign-change bracketing on a merged log/linear grid with
//! extremum refinement, followed by bisection.

use num_complex::Complex64;

use crate::eigen::{eigenvalues, Mat3};
use crate::error::{Error, Result};
use crate::model::{CavityState, DrivePoint, ModelParams};

/// Number of bracketing nodes per grid family (log and linear).
pub const GRID_NODES: usize = 2500;

/// Linear stability class of a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    /// At least one real positive eigenvalue and no unstable complex pair.
    Saddle,
    /// A complex-conjugate pair with positive real part (Hopf side).
    Oscillatory,
}

impl Stability {
    pub fn label(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Saddle => "saddle",
            Stability::Oscillatory => "oscillatory-unstable",
        }
    }

    pub fn classify(eigs: &[Complex64; 3]) -> Self {
        let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let eps = 1e-10 * scale;
        let unstable: Vec<&Complex64> = eigs.iter().filter(|z| z.re > eps).collect();
        if unstable.is_empty() {
            Stability::Stable
        } else if unstable.iter().any(|z| z.im.abs() > eps) {
            Stability::Oscillatory
        } else {
            Stability::Saddle
        }
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A fixed point of the field + orientation equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub intensity: f64,
    pub alpha: Complex64,
    pub p: f64,
    /// Total round-trip phase at the fixed point, rad.
    pub phi_cav: f64,
    /// Transmitted (end-mirror) intensity, proportional to `intensity`.
    pub transmitted: f64,
    /// Eigenvalues of the Jacobian, 1/s, sorted by descending real part.
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
}

impl SteadyState {
    pub fn state(&self) -> CavityState {
        CavityState::new(self.alpha, self.p)
    }

    /// Largest real part among the eigenvalues.
    pub fn growth_rate(&self) -> f64 {
        self.eigenvalues[0].re
    }

    /// The complex pair with the largest real part, if any.
    pub fn hopf_pair(&self) -> Option<Complex64> {
        self.eigenvalues
            .iter()
            .copied()
            .find(|z| z.im > 1e-10 * z.norm())
    }
}

/// Orientation at a fixed point of intensity `intensity`.
fn orientation(intensity: f64, params: &ModelParams) -> f64 {
    params.pump(intensity)
}

/// Residual of the scalar state equation.
pub fn state_residual(
    intensity: f64,
    input_intensity: f64,
    phi_0: f64,
    params: &ModelParams,
) -> f64 {
    let p = orientation(intensity, params);
    let k = params.decay(intensity, p, phi_0);
    intensity * k.norm_sqr() - params.t_mirror * params.t_mirror * input_intensity
}

/// Upper bound on the intracavity intensity, `t^2 I_in / kappa^2`.
pub fn intensity_bound(input_intensity: f64, params: &ModelParams) -> f64 {
    let k = params.kappa();
    params.t_mirror * params.t_mirror * input_intensity / (k * k)
}

fn bracketing_grid(i_max: f64) -> Vec<f64> {
    let n = GRID_NODES;
    let mut grid = Vec::with_capacity(2 * n + 2);
    grid.push(0.0);
    let lo = (i_max * 1e-12).ln();
    let hi = i_max.ln();
    for k in 0..n {
        grid.push((lo + (hi - lo) * k as f64 / (n - 1) as f64).exp());
    }
    for k in 1..=n {
        grid.push(i_max * k as f64 / n as f64);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    *grid.last_mut().unwrap() = i_max;
    grid
}

/// Golden-section search for an extremum of `f` on `[a, b]`; `sign = 1` finds a
/// minimum, `-1` a maximum. Returns the abscissa.
pub(crate) fn golden<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    sign: f64,
    iters: usize,
) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = sign * f(c);
    let mut fd = sign * f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = sign * f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = sign * f(d);
        }
        if (b - a) <= 1e-15 * b.abs().max(a.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Bisection on a bracket with a sign change; returns the midpoint of the
/// final bracket.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || (b - a) <= rel_tol * m.abs() {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Inserts the extremum inside each grid cell pair where `values` turns
/// around without changing sign, so that pairs of close roots get bracketed.
fn refine_extrema<F: Fn(f64) -> f64>(f: &F, grid: &mut Vec<f64>, values: &mut Vec<f64>) {
    let mut extra = Vec::new();
    for k in 1..grid.len() - 1 {
        let (l, c, r) = (values[k - 1], values[k], values[k + 1]);
        let is_min = c <= l && c <= r;
        let is_max = c >= l && c >= r;
        if !(is_min || is_max) {
            continue;
        }
        let sign = if is_min { 1.0 } else { -1.0 };
        // only useful when the extremum could cross zero away from the node
        if (is_min && c <= 0.0) || (is_max && c >= 0.0) {
            continue;
        }
        let x = golden(f, grid[k - 1], grid[k + 1], sign, 200);
        let v = f(x);
        if (v < 0.0) != (c < 0.0) {
            extra.push((x, v));
        }
    }
    if extra.is_empty() {
        return;
    }
    let mut pts: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    pts.extend(extra);
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| a.0 == b.0);
    *grid = pts.iter().map(|p| p.0).collect();
    *values = pts.iter().map(|p| p.1).collect();
}

/// All intensities solving the state equation, ascending.
pub fn steady_intensities(
    input_intensity: f64,
    phi_0: f64,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if !(input_intensity >= 0.0) {
        return Err(Error::Domain {
            quantity: "input intensity",
            value: input_intensity,
        });
    }
    if input_intensity == 0.0 {
        return Ok(vec![0.0]);
    }
    let i_max = intensity_bound(input_intensity, params);
    let f = |i: f64| state_residual(i, input_intensity, phi_0, params);
    let mut grid = bracketing_grid(i_max);
    let mut values: Vec<f64> = grid.iter().map(|&i| f(i)).collect();
    refine_extrema(&f, &mut grid, &mut values);

    let mut roots = Vec::new();
    for k in 0..grid.len() - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let (fa, fb) = (values[k], values[k + 1]);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && (fa < 0.0) != (fb < 0.0) {
            roots.push(bisect(f, a, b, 1e-15));
        }
    }
    // both grid families end at i_max, so a root sitting there is seen twice
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(b.abs()));
    if roots.is_empty() {
        return Err(Error::NoBracket {
            i_in: input_intensity,
            i_max,
        });
    }
    Ok(roots)
}

/// Analytic Jacobian of the right-hand side in `(Re alpha, Im alpha, p)`.
pub fn jacobian(state: &CavityState, drive: &DrivePoint, params: &ModelParams) -> Mat3 {
    let params = drive.params(params);
    let alpha = state.alpha;
    let p = state.p;
    let (x, y) = (alpha.re, alpha.im);
    let intensity = state.intensity();
    let tau = params.tau;
    let k = params.decay(intensity, p, drive.phi_0);
    let k_i = Complex64::new(
        params.absorption_di(intensity, p),
        -params.phase_di(intensity),
    );
    let k_p = Complex64::new(params.absorption_dp(intensity), -params.phi_linear());
    let i = Complex64::new(0.0, 1.0);

    let dx = -(k + alpha * k_i * (2.0 * x)) / tau;
    let dy = -(i * k + alpha * k_i * (2.0 * y)) / tau;
    let dp = -(alpha * k_p) / tau;

    let pump_row = if params.pumping_on {
        [
            2.0 * params.beta * x * (1.0 - p),
            2.0 * params.beta * y * (1.0 - p),
            -params.gamma_p - params.beta * intensity,
        ]
    } else {
        [0.0; 3]
    };
    [[dx.re, dy.re, dp.re], [dx.im, dy.im, dp.im], pump_row]
}

fn build_state(
    intensity: f64,
    input_intensity: f64,
    phi_0: f64,
    params: &ModelParams,
) -> SteadyState {
    let p = orientation(intensity, params);
    let k = params.decay(intensity, p, phi_0);
    let alpha = params.t_mirror * input_intensity.sqrt() / k;
    let phi_cav = phi_0 + params.phase(intensity, p);
    let state = CavityState::new(alpha, p);
    let jac = jacobian(
        &state,
        &DrivePoint::steady(input_intensity.sqrt(), phi_0),
        params,
    );
    let eigs = eigenvalues(&jac);
    SteadyState {
        intensity,
        alpha,
        p,
        phi_cav,
        transmitted: intensity,
        eigenvalues: eigs,
        stability: Stability::classify(&eigs),
    }
}

/// All steady states at fixed drive, ascending in intensity.
pub fn solve_steady(
    input_intensity: f64,
    phi_0: f64,
    params: &ModelParams,
) -> Result<Vec<SteadyState>> {
    params.validate()?;
    let roots = steady_intensities(input_intensity, phi_0, params)?;
    Ok(roots
        .into_iter()
        .map(|i| build_state(i, input_intensity, phi_0, params))
        .collect())
}

/// Uniform grid of cavity detunings `Theta = phi_0 / gamma_cav`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaRange {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl ThetaRange {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || points < 2 || start == end {
            return Err(Error::param(
                "theta_range",
                format!("need finite distinct bounds and >= 2 points, got {start}:{end}:{points}"),
            ));
        }
        Ok(Self { start, end, points })
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points)
            .map(|k| self.start + (self.end - self.start) * k as f64 / (self.points - 1) as f64)
            .collect()
    }

    pub fn span(&self) -> f64 {
        (self.end - self.start).abs()
    }
}

/// One point of an adiabatic sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub theta: f64,
    pub state: SteadyState,
    /// Index of the occupied state in the ascending root list.
    pub index: usize,
    /// No stable state exists; the trace continues on an unstable branch.
    pub unstable_region: bool,
    /// The occupied branch was left at this point.
    pub switched: bool,
}

/// Up- and down-sweeps of the cavity detuning at fixed input intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisTrace {
    pub input_intensity: f64,
    /// Sweep coordinate, ascending.
    pub theta: Vec<f64>,
    /// Coexisting steady states at every `theta`.
    pub states: Vec<Vec<SteadyState>>,
    /// Occupied branch for the ascending sweep, in ascending `theta`.
    pub up: Vec<BranchPoint>,
    /// Occupied branch for the descending sweep, in ascending `theta`.
    pub down: Vec<BranchPoint>,
}

impl HysteresisTrace {
    pub fn up_switches(&self) -> Vec<f64> {
        self.up
            .iter()
            .filter(|b| b.switched)
            .map(|b| b.theta)
            .collect()
    }

    pub fn down_switches(&self) -> Vec<f64> {
        self.down
            .iter()
            .filter(|b| b.switched)
            .map(|b| b.theta)
            .collect()
    }

    pub fn unstable_points(&self) -> usize {
        self.up
            .iter()
            .chain(self.down.iter())
            .filter(|b| b.unstable_region)
            .count()
    }
}

/// Index in `next` that continues root `index` of `prev`, matching sorted
/// roots in log-intensity. `None` when the root was annihilated at a fold.
fn continue_root(prev: &[SteadyState], next: &[SteadyState], index: usize) -> Option<usize> {
    let key = |s: &SteadyState| s.intensity.max(1e-300).ln();
    let n = prev.len();
    let m = next.len();
    if n == m {
        return Some(index);
    }
    if m < n {
        // find which consecutive block of (n - m) roots disappeared
        let gap = n - m;
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..=m {
            let cost: f64 = (0..m)
                .map(|q| {
                    let src = if q < j { q } else { q + gap };
                    (key(&prev[src]) - key(&next[q])).abs()
                })
                .sum();
            if cost < best.0 {
                best = (cost, j);
            }
        }
        let j = best.1;
        if index < j {
            Some(index)
        } else if index >= j + gap {
            Some(index - gap)
        } else {
            None
        }
    } else {
        let gap = m - n;
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..=n {
            let cost: f64 = (0..n)
                .map(|q| {
                    let dst = if q < j { q } else { q + gap };
                    (key(&prev[q]) - key(&next[dst])).abs()
                })
                .sum();
            if cost < best.0 {
                best = (cost, j);
            }
        }
        Some(if index < best.1 { index } else { index + gap })
    }
}

fn nearest_stable(states: &[SteadyState], intensity: f64) -> Option<usize> {
    let key = intensity.max(1e-300).ln();
    states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.stability == Stability::Stable)
        .min_by(|a, b| {
            let da = (a.1.intensity.max(1e-300).ln() - key).abs();
            let db = (b.1.intensity.max(1e-300).ln() - key).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(k, _)| k)
}

/// Adiabatic branch following over `states`, visited in the given order.
/// The first point starts on the lowest-intensity stable state.
pub fn follow_branch(
    theta: &[f64],
    states: &[Vec<SteadyState>],
    order: &[usize],
) -> Vec<BranchPoint> {
    let mut out: Vec<BranchPoint> = Vec::with_capacity(order.len());
    let mut current: Option<usize> = None;
    let mut prev_k: Option<usize> = None;
    for &k in order {
        let here = &states[k];
        let (index, switched) = match (current, prev_k) {
            (Some(idx), Some(pk)) => {
                let prev_state = states[pk][idx];
                let continued = continue_root(&states[pk], here, idx);
                match continued {
                    Some(next) if here[next].stability == Stability::Stable => (next, false),
                    _ => match nearest_stable(here, prev_state.intensity) {
                        Some(s) => (s, true),
                        None => (
                            continued.unwrap_or_else(|| nearest_any(here, prev_state.intensity)),
                            false,
                        ),
                    },
                }
            }
            _ => (nearest_stable(here, 0.0).unwrap_or(0), false),
        };
        // leaving an unstable region onto a stable branch is not a fold switch
        let switched = switched && out.last().is_none_or(|b: &BranchPoint| !b.unstable_region);
        let state = here[index];
        out.push(BranchPoint {
            theta: theta[k],
            state,
            index,
            unstable_region: state.stability != Stability::Stable,
            switched,
        });
        current = Some(index);
        prev_k = Some(k);
    }
    out
}

fn nearest_any(states: &[SteadyState], intensity: f64) -> usize {
    let key = intensity.max(1e-300).ln();
    states
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1.intensity.max(1e-300).ln() - key).abs();
            let db = (b.1.intensity.max(1e-300).ln() - key).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(k, _)| k)
        .unwrap_or(0)
}

/// Static hysteresis scan over `range` at fixed input intensity.
pub fn scan_detuning(
    input_intensity: f64,
    range: &ThetaRange,
    params: &ModelParams,
) -> Result<HysteresisTrace> {
    params.validate()?;
    let mut theta = range.values();
    theta.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let states = theta
        .iter()
        .map(|&th| solve_steady(input_intensity, th * params.gamma_cav, params))
        .collect::<Result<Vec<_>>>()?;
    let ascending: Vec<usize> = (0..theta.len()).collect();
    let descending: Vec<usize> = (0..theta.len()).rev().collect();
    let up = follow_branch(&theta, &states, &ascending);
    let mut down = follow_branch(&theta, &states, &descending);
    down.reverse();
    Ok(HysteresisTrace {
        input_intensity,
        theta,
        states,
        up,
        down,
    })
}

/// Lowest input intensity admitting three coexisting steady states for some
/// cavity detuning, in the absence of optical pumping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub input_intensity: f64,
    /// Cavity detuning at which the threshold is reached.
    pub theta: f64,
}

/// `g(I) = I |K(I)|^2` and its derivative with the orientation frozen at 0.
fn g_and_slope(intensity: f64, phi_0: f64, params: &ModelParams) -> (f64, f64) {
    let a = params.kappa() + params.absorption(intensity, 0.0);
    let phi = phi_0 + params.phase(intensity, 0.0);
    let g = intensity * (a * a + phi * phi);
    let slope = a * a
        + phi * phi
        + 2.0
            * intensity
            * (a * params.absorption_di(intensity, 0.0) + phi * params.phase_di(intensity));
    (g, slope)
}

struct FoldScan {
    /// Smallest `g` among local minima that follow a local maximum.
    lowest_min: Option<f64>,
    /// `min_I g'(I)`.
    min_slope: f64,
    slope_at: f64,
}

fn intensity_probe(params: &ModelParams) -> Vec<f64> {
    let base = 1.0 + params.delta_a * params.delta_a;
    let n = 4000;
    let lo = (base * 1e-6).ln();
    let hi = (base * 1e5).ln();
    (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn fold_scan(phi_0: f64, probe: &[f64], params: &ModelParams) -> FoldScan {
    let vals: Vec<(f64, f64)> = probe
        .iter()
        .map(|&i| g_and_slope(i, phi_0, params))
        .collect();
    let (mut min_slope, mut slope_at) = (f64::INFINITY, probe[0]);
    for (k, v) in vals.iter().enumerate() {
        if v.1 < min_slope {
            min_slope = v.1;
            slope_at = probe[k];
        }
    }
    let mut lowest_min: Option<f64> = None;
    let mut seen_max = false;
    for k in 1..vals.len() - 1 {
        let (l, c, r) = (vals[k - 1].0, vals[k].0, vals[k + 1].0);
        if c > l && c >= r {
            seen_max = true;
        } else if seen_max && c < l && c <= r {
            let x = golden(
                |i| g_and_slope(i, phi_0, params).0,
                probe[k - 1],
                probe[k + 1],
                1.0,
                200,
            );
            let v = g_and_slope(x, phi_0, params).0;
            lowest_min = Some(lowest_min.map_or(v, |m: f64| m.min(v)));
        }
    }
    // refine the slope minimum
    let k = probe.iter().position(|&i| i == slope_at).unwrap_or(0);
    let (a, b) = (
        probe[k.saturating_sub(1)],
        probe[(k + 1).min(probe.len() - 1)],
    );
    let x = golden(|i| g_and_slope(i, phi_0, params).1, a, b, 1.0, 200);
    let s = g_and_slope(x, phi_0, params).1;
    if s < min_slope {
        min_slope = s;
        slope_at = x;
    }
    FoldScan {
        lowest_min,
        min_slope,
        slope_at,
    }
}

/// Range of input intensities with three steady states at cavity phase
/// `phi_0`, pumping off. `None` when the response is single-valued.
pub fn bistable_window(phi_0: f64, params: &ModelParams) -> Option<(f64, f64)> {
    let params = params.with_pumping(false);
    let probe = intensity_probe(&params);
    let vals: Vec<f64> = probe
        .iter()
        .map(|&i| g_and_slope(i, phi_0, &params).0)
        .collect();
    let t2 = params.t_mirror * params.t_mirror;
    let mut window: Option<(f64, f64)> = None;
    let mut last_max: Option<f64> = None;
    for k in 1..vals.len() - 1 {
        let (l, c, r) = (vals[k - 1], vals[k], vals[k + 1]);
        if c > l && c >= r {
            let x = golden(
                |i| g_and_slope(i, phi_0, &params).0,
                probe[k - 1],
                probe[k + 1],
                -1.0,
                200,
            );
            last_max = Some(g_and_slope(x, phi_0, &params).0);
        } else if c < l && c <= r {
            if let Some(hi) = last_max {
                let x = golden(
                    |i| g_and_slope(i, phi_0, &params).0,
                    probe[k - 1],
                    probe[k + 1],
                    1.0,
                    200,
                );
                let lo = g_and_slope(x, phi_0, &params).0;
                let (a, b) = (lo / t2, hi / t2);
                window = Some(match window {
                    Some((wa, wb)) => (wa.min(a), wb.max(b)),
                    None => (a, b),
                });
            }
        }
    }
    window
}

/// Bistability threshold with pumping forced off; `None` when no cavity
/// detuning produces three steady states at any power.
pub fn bistability_threshold(params: &ModelParams) -> Result<Option<Threshold>> {
    params.validate()?;
    let params = params.with_pumping(false);
    let gamma = params.gamma_cav;
    let reach =
        2.0 * (params.phi_linear().abs() + params.absorption(0.0, 0.0)) + 20.0 * params.kappa();
    let (lo, hi) = (-reach / gamma, reach / gamma);
    let probe = intensity_probe(&params);
    let n = 801;
    let thetas: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();
    let scans: Vec<FoldScan> = thetas
        .iter()
        .map(|&th| fold_scan(th * gamma, &probe, &params))
        .collect();

    let t2 = params.t_mirror * params.t_mirror;
    let mut best: Option<Threshold> = None;
    let mut consider = |theta: f64, value: f64| {
        if best.is_none_or(|b| value < b.input_intensity) {
            best = Some(Threshold {
                input_intensity: value,
                theta,
            });
        }
    };
    for (k, s) in scans.iter().enumerate() {
        if let Some(v) = s.lowest_min {
            consider(thetas[k], v / t2);
        }
        // cusp boundaries: slope minimum crosses zero between neighbours
        if k + 1 < scans.len() {
            let (a, b) = (&scans[k], &scans[k + 1]);
            if (a.min_slope < 0.0) != (b.min_slope < 0.0) {
                let root = bisect(
                    |th| fold_scan(th * gamma, &probe, &params).min_slope,
                    thetas[k],
                    thetas[k + 1],
                    1e-13,
                );
                let cusp = fold_scan(root * gamma, &probe, &params);
                let (g, _) = g_and_slope(cusp.slope_at, root * gamma, &params);
                consider(root, g / t2);
            }
        }
    }
    // interior minima of the fold curve
    if let Some(b) = best {
        let k = thetas
            .iter()
            .position(|&t| t >= b.theta)
            .unwrap_or(0)
            .min(n - 2)
            .max(1);
        let val = |th: f64| {
            fold_scan(th * gamma, &probe, &params)
                .lowest_min
                .map_or(f64::INFINITY, |v| v / t2)
        };
        let x = golden(val, thetas[k - 1], thetas[k + 1], 1.0, 120);
        let v = val(x);
        if v < b.input_intensity {
            best = Some(Threshold {
                input_intensity: v,
                theta: x,
            });
        }
    }
    Ok(best)
}

/// Cavity detuning `Theta` at which `intensity` is a steady state for the
/// given drive, on the lower (`sign = -1`) or upper (`sign = 1`) branch of
/// the square root. `None` when no detuning makes it one.
fn detuning_of(
    intensity: f64,
    input_intensity: f64,
    sign: f64,
    params: &ModelParams,
) -> Option<f64> {
    let p = orientation(intensity, params);
    let a = params.kappa() + params.absorption(intensity, p);
    let rest = params.t_mirror * params.t_mirror * input_intensity / intensity - a * a;
    (rest >= 0.0).then(|| (-params.phase(intensity, p) + sign * rest.sqrt()) / params.gamma_cav)
}

/// Runs of intracavity intensity that are steady states for some detuning,
/// ascending. Interior run ends are pinned to the point where both detuning
/// branches meet.
fn steady_segments(input_intensity: f64, params: &ModelParams) -> Vec<Vec<f64>> {
    let i_max = intensity_bound(input_intensity, params);
    let n = 20_000;
    let (lo, hi) = ((i_max * 1e-12).ln(), i_max.ln());
    let grid: Vec<f64> = (0..n)
        .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
        .collect();
    let valid = |i: f64| detuning_of(i, input_intensity, 1.0, params).is_some();
    let edge = |inside: f64, outside: f64| {
        let (mut a, mut b) = (inside, outside);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            if valid(m) {
                a = m;
            } else {
                b = m;
            }
        }
        a
    };
    let mut segments: Vec<Vec<f64>> = Vec::new();
    let mut run = Vec::new();
    for (k, &i) in grid.iter().enumerate() {
        if valid(i) {
            if run.is_empty() && k > 0 {
                run.push(edge(i, grid[k - 1]));
            }
            run.push(i);
        } else if !run.is_empty() {
            run.push(edge(grid[k - 1], i));
            segments.push(std::mem::take(&mut run));
        }
    }
    if !run.is_empty() {
        segments.push(run);
    }
    for segment in &mut segments {
        segment.dedup();
    }
    segments
}

/// Ranges of `Theta` with three or more steady states at fixed input
/// intensity, sorted and disjoint.
///
/// Each intracavity intensity is a steady state for at most two detunings.
/// Walking the lower branch up in intensity and the upper one back down traces
/// a curve in `Theta`; its folds bound the multistable ranges, so windows far
/// narrower than any practical `Theta` grid are still found.
pub fn multistable_windows(input_intensity: f64, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
    params.validate()?;
    if !(input_intensity.is_finite() && input_intensity > 0.0) {
        return Err(Error::param(
            "I_in",
            format!("must be finite and > 0, got {input_intensity}"),
        ));
    }
    let segments = steady_segments(input_intensity, params);

    let mut windows = Vec::new();
    for (s, segment) in segments.iter().enumerate() {
        // (intensity, branch sign) in curve order
        let curve: Vec<(f64, f64)> = segment
            .iter()
            .map(|&i| (i, -1.0))
            .chain(segment.iter().rev().map(|&i| (i, 1.0)))
            .collect();
        let theta = |&(i, sign): &(f64, f64)| {
            detuning_of(i, input_intensity, sign, params).unwrap_or(f64::NAN)
        };
        let values: Vec<f64> = curve.iter().map(theta).collect();
        // refined extrema in curve order: (value, is_max)
        let mut extrema = Vec::new();
        for k in 1..curve.len().saturating_sub(1) {
            let (l, c, r) = (values[k - 1], values[k], values[k + 1]);
            let is_max = c > l && c >= r;
            let is_min = c < l && c <= r;
            if !(is_max || is_min) {
                continue;
            }
            let sign = curve[k].1;
            let mut value = c;
            if curve[k - 1].1 == sign && curve[k + 1].1 == sign {
                let (a, b) = (
                    curve[k - 1].0.min(curve[k + 1].0),
                    curve[k - 1].0.max(curve[k + 1].0),
                );
                let f = |i: f64| detuning_of(i, input_intensity, sign, params).unwrap_or(f64::NAN);
                let x = golden(f, a, b, if is_max { -1.0 } else { 1.0 }, 200);
                let refined = f(x);
                if refined.is_finite()
                    && (if is_max {
                        refined > value
                    } else {
                        refined < value
                    })
                {
                    value = refined;
                }
            }
            extrema.push((value, is_max));
        }
        if s == 0 {
            // open curve from -inf to +inf: each fold pair adds two roots
            let mut last_max: Option<f64> = None;
            for &(v, is_max) in &extrema {
                if is_max {
                    last_max = Some(v);
                } else if let Some(top) = last_max.take() {
                    if v < top {
                        windows.push((v, top));
                    }
                }
            }
        } else {
            // closed loop: every detuning it spans gains two roots
            let finite = values.iter().copied().filter(|v| v.is_finite());
            let lo = extrema
                .iter()
                .map(|e| e.0)
                .chain(finite.clone())
                .fold(f64::INFINITY, f64::min);
            let hi = extrema
                .iter()
                .map(|e| e.0)
                .chain(finite)
                .fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                windows.push((lo, hi));
            }
        }
    }
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
            _ => merged.push(w),
        }
    }
    Ok(merged)
}

/// Detuning ranges at fixed input intensity, by the kind of steady states
/// they hold. All lists are sorted and disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMap {
    /// Three or more steady states.
    pub multistable: Vec<(f64, f64)>,
    /// Two or more stable steady states.
    pub bistable: Vec<(f64, f64)>,
    /// No stable steady state: the dynamics cannot settle.
    pub unstable: Vec<(f64, f64)>,
}

/// Largest detuning step between neighbouring curve samples in
/// [`stability_map`], in cavity linewidths.
const MAP_STEP: f64 = 2e-3;
const MAP_SAMPLES: usize = 1 << 20;
/// Windows narrower than this, in cavity linewidths, are seams between
/// curve pieces rather than physical ranges.
const MAP_RESOLUTION: f64 = 1e-9;

/// Classifies every detuning at fixed input intensity without solving for
/// roots: the steady-state curve is walked as in [`multistable_windows`] and
/// each piece of it is labelled by the stability of its fixed points.
pub fn stability_map(input_intensity: f64, params: &ModelParams) -> Result<StabilityMap> {
    let multistable = multistable_windows(input_intensity, params)?;
    let gamma = params.gamma_cav;
    // beyond this detuning the atoms barely shift the resonance
    let reach = (2.0 * (params.phi_linear().abs() + params.absorption(0.0, 1.0))
        + 20.0 * params.kappa())
        / gamma;
    let theta_at =
        |i: f64, sign: f64| detuning_of(i, input_intensity, sign, params).unwrap_or(f64::NAN);
    let stability_at = |i: f64, sign: f64| {
        let theta = theta_at(i, sign);
        build_state(i, input_intensity, theta * gamma, params).stability
    };

    // (theta_lo, theta_hi, stable)
    let mut pieces: Vec<(f64, f64, bool)> = Vec::new();
    for segment in steady_segments(input_intensity, params) {
        // where the two branches meet, bridge the sliver between them
        for &end in [segment[0], *segment.last().unwrap()].iter() {
            let (lo, hi) = (theta_at(end, -1.0), theta_at(end, 1.0));
            if hi - lo < MAP_STEP {
                pieces.push((lo, hi, stability_at(end, 1.0) == Stability::Stable));
            }
        }
        for sign in [-1.0, 1.0] {
            // refine until neighbouring samples are close in detuning
            let mut samples = segment.clone();
            for _ in 0..40 {
                let mut refined = Vec::with_capacity(samples.len());
                let mut changed = false;
                for w in samples.windows(2) {
                    refined.push(w[0]);
                    let (ta, tb) = (theta_at(w[0], sign), theta_at(w[1], sign));
                    let relevant = ta.abs().min(tb.abs()) < reach;
                    if relevant
                        && (tb - ta).abs() > MAP_STEP
                        && w[1] - w[0] > 1e-12 * w[1]
                        && samples.len() < MAP_SAMPLES
                    {
                        refined.push(0.5 * (w[0] + w[1]));
                        changed = true;
                    }
                }
                refined.push(*samples.last().unwrap());
                samples = refined;
                if !changed {
                    break;
                }
            }
            let labels: Vec<Stability> = samples.iter().map(|&i| stability_at(i, sign)).collect();
            for k in 0..samples.len() - 1 {
                let (a, b) = (samples[k], samples[k + 1]);
                let (ta, tb) = (theta_at(a, sign), theta_at(b, sign));
                if !(ta.is_finite() && tb.is_finite()) {
                    continue;
                }
                let (sa, sb) = (
                    labels[k] == Stability::Stable,
                    labels[k + 1] == Stability::Stable,
                );
                if sa == sb {
                    pieces.push((ta.min(tb), ta.max(tb), sa));
                    continue;
                }
                let split = bisect(
                    |i| {
                        if (stability_at(i, sign) == Stability::Stable) == sa {
                            -1.0
                        } else {
                            1.0
                        }
                    },
                    a,
                    b,
                    1e-14,
                );
                let ts = theta_at(split, sign);
                pieces.push((ta.min(ts), ta.max(ts), sa));
                pieces.push((ts.min(tb), ts.max(tb), sb));
            }
        }
    }

    // sweep the stable pieces; closing events sort before opening ones
    let mut events: Vec<(f64, i32)> = pieces
        .iter()
        .filter(|p| p.2 && p.1 > p.0)
        .flat_map(|p| [(p.0, 1), (p.1, -1)])
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let lowest = pieces.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let highest = pieces.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut bistable = Vec::new();
    let mut unstable = Vec::new();
    let mut depth = 0;
    let mut last = lowest;
    for (theta, step) in events {
        if theta > last {
            if depth == 0 {
                unstable.push((last, theta));
            } else if depth >= 2 {
                bistable.push((last, theta));
            }
        }
        depth += step;
        last = last.max(theta);
    }
    if highest > last {
        unstable.push((last, highest));
    }
    let merge = |list: Vec<(f64, f64)>| {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for w in list {
            match out.last_mut() {
                Some(prev) if w.0 <= prev.1 + MAP_RESOLUTION => prev.1 = prev.1.max(w.1),
                _ => out.push(w),
            }
        }
        out.retain(|w| w.1 - w.0 > MAP_RESOLUTION);
        out
    };
    Ok(StabilityMap {
        multistable,
        bistable: merge(bistable),
        unstable: merge(unstable),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lossless(coop: f64) -> ModelParams {
        ModelParams::default()
            .with_coop(coop)
            .with_loss(0.0)
            .with_pumping(false)
    }

    #[test]
    fn empty_cavity_resonance() {
        let p = lossless(0.0);
        let ss = solve_steady(1.0, 0.0, &p).unwrap();
        assert_eq!(ss.len(), 1);
        assert_relative_eq!(ss[0].intensity, 40.0, max_relative = 1e-12);
        assert_eq!(ss[0].stability, Stability::Stable);
    }

    #[test]
    fn zero_drive_gives_trivial_root() {
        let ss = solve_steady(0.0, 0.1, &ModelParams::default()).unwrap();
        assert_eq!(ss.len(), 1);
        assert_eq!(ss[0].intensity, 0.0);
    }

    #[test]
    fn empty_cavity_jacobian_block() {
        let p = lossless(0.0);
        let ss = solve_steady(1.0, 0.0, &p).unwrap()[0];
        let j = jacobian(&ss.state(), &DrivePoint::steady(1.0, 0.0), &p);
        let r = p.gamma_cav / p.tau;
        assert_relative_eq!(j[0][0], -r, max_relative = 1e-12);
        assert_relative_eq!(j[1][1], -r, max_relative = 1e-12);
        assert!(j[0][1].abs() < 1e-6 * r && j[1][0].abs() < 1e-6 * r);
        assert_eq!(j[2], [0.0; 3]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut p = ModelParams::default().with_coop(150.0);
        p.absorption_on = true;
        let drive = DrivePoint::steady(12.0, -0.15);
        let st = CavityState::new(Complex64::new(30.0, -17.0), 0.4);
        let j = jacobian(&st, &drive, &p);
        let y = st.to_array();
        for c in 0..3 {
            let h = 1e-6 * y[c].abs().max(1e-3);
            let mut a = y;
            let mut b = y;
            a[c] += h;
            b[c] -= h;
            let fa = crate::model::rhs(&CavityState::from_array(a), &drive, &p).to_array();
            let fb = crate::model::rhs(&CavityState::from_array(b), &drive, &p).to_array();
            for r in 0..3 {
                let fd = (fa[r] - fb[r]) / (2.0 * h);
                let scale = j[r].iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(
                    (fd - j[r][c]).abs() <= 1e-5 * scale,
                    "entry ({r},{c}): fd {fd} vs {}",
                    j[r][c]
                );
            }
        }
    }

    #[test]
    fn classification() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        assert_eq!(
            Stability::classify(&[c(-1.0, 0.0), c(-2.0, 1.0), c(-2.0, -1.0)]),
            Stability::Stable
        );
        assert_eq!(
            Stability::classify(&[c(1.0, 0.0), c(-2.0, 1.0), c(-2.0, -1.0)]),
            Stability::Saddle
        );
        assert_eq!(
            Stability::classify(&[c(1.0, 3.0), c(1.0, -3.0), c(-2.0, 0.0)]),
            Stability::Oscillatory
        );
    }

    #[test]
    fn no_threshold_without_atoms() {
        assert!(bistability_threshold(&lossless(0.0)).unwrap().is_none());
    }

    #[test]
    fn threshold_decreases_with_coop() {
        let a = bistability_threshold(&lossless(100.0)).unwrap().unwrap();
        let b = bistability_threshold(&lossless(200.0)).unwrap().unwrap();
        assert!(b.input_intensity < a.input_intensity);
    }

    #[test]
    fn flat_scan_without_atoms() {
        let p = lossless(0.0);
        let range = ThetaRange::new(-5.0, 5.0, 41).unwrap();
        let h = scan_detuning(2.0, &range, &p).unwrap();
        assert!(h.up_switches().is_empty() && h.down_switches().is_empty());
        for (u, d) in h.up.iter().zip(&h.down) {
            let phi = u.theta * p.gamma_cav;
            let lorentz = p.t_mirror.powi(2) * 2.0 / (p.gamma_cav.powi(2) + phi * phi);
            assert_relative_eq!(u.state.intensity, lorentz, max_relative = 1e-10);
            assert_eq!(u.state.intensity, d.state.intensity);
        }
    }
}
