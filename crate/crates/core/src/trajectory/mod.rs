//! Keyframe-to-trajectory compilation with per-joint cubic splines.
//!
//! Interior knot velocities minimize `Σ ∫ q̈² dt` with the first velocity fixed
//! to the controller's current velocity and the last to zero. Joints decouple,
//! and stationarity gives, for every interior knot `i`,
//!
//! ```text
//!     vᵢ₋₁/hᵢ₋₁ + 2 (1/hᵢ₋₁ + 1/hᵢ) vᵢ + vᵢ₊₁/hᵢ = 3 (Δᵢ₋₁/hᵢ₋₁² + Δᵢ/hᵢ²)
//! ```
//!
//! which is solved as one tridiagonal system per joint.

mod validate;

pub use validate::{validate, CollisionEvent, LimitViolation, ValidationOptions, ValidationReport};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::{Profile, Script};

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot times must be strictly increasing (t[{0}] = {1} after {2})")]
    NonIncreasingTimes(usize, f64, f64),
    #[error("knot {0} has {1} coordinates, expected {2}")]
    Dimension(usize, usize, usize),
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

/// One cubic per segment and coordinate: `q(t) = a₀ + a₁τ + a₂τ² + a₃τ³` with
/// `τ = t − tᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicSplineTrajectory {
    pub times: Vec<f64>,
    /// `segments[i][j]` holds the coefficients of coordinate `j` on `[tᵢ, tᵢ₊₁]`.
    pub segments: Vec<Vec<[f64; 4]>>,
    /// Knot configurations, kept so sampling at a knot is exact.
    pub knots: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
    /// The query time was outside `[t₀, tₙ]` and was clamped.
    pub clamped: bool,
}

/// Knot velocities minimizing the integrated squared acceleration of one
/// coordinate, with both end velocities fixed.
pub fn optimal_knot_velocities(q: &[f64], times: &[f64], v_start: f64, v_end: f64) -> Vec<f64> {
    let n = q.len();
    let mut v = vec![0.0; n];
    v[0] = v_start;
    v[n - 1] = v_end;
    if n <= 2 {
        return v;
    }
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = q.windows(2).map(|w| w[1] - w[0]).collect();
    // Unknowns v₁ … vₙ₋₂; Thomas algorithm.
    let m = n - 2;
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut lower = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        let (a, b) = (1.0 / h[i - 1], 1.0 / h[i]);
        diag[k] = 2.0 * (a + b);
        lower[k] = a;
        upper[k] = b;
        rhs[k] = 3.0 * (d[i - 1] * a * a + d[i] * b * b);
    }
    rhs[0] -= lower[0] * v_start;
    rhs[m - 1] -= upper[m - 1] * v_end;
    for k in 1..m {
        let w = lower[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        rhs[k] -= w * rhs[k - 1];
    }
    v[m] = rhs[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        v[k + 1] = (rhs[k] - upper[k] * v[k + 2]) / diag[k];
    }
    v
}

/// `∫ q̈² dt` of the cubic Hermite segment with end values `q0, q1`, end
/// velocities `v0, v1` and length `h`.
pub fn segment_cost(q0: f64, q1: f64, v0: f64, v1: f64, h: f64) -> f64 {
    let d = q1 - q0;
    4.0 / h * (v0 * v0 + v0 * v1 + v1 * v1) - 12.0 / (h * h) * d * (v0 + v1) + 12.0 * d * d / (h * h * h)
}

pub fn compile(configs: &[DVector<f64>], times: &[f64], v0: &DVector<f64>) -> Result<CubicSplineTrajectory, TrajectoryError> {
    let n = configs.len();
    if n < 2 {
        return Err(TrajectoryError::TooFewKnots(n));
    }
    if times.len() != n {
        return Err(TrajectoryError::Dimension(0, times.len(), n));
    }
    let dim = configs[0].len();
    for (i, q) in configs.iter().enumerate() {
        if q.len() != dim {
            return Err(TrajectoryError::Dimension(i, q.len(), dim));
        }
        if !q.iter().all(|x| x.is_finite()) {
            return Err(TrajectoryError::NonFinite(format!("knot {i}")));
        }
    }
    if v0.len() != dim {
        return Err(TrajectoryError::Dimension(0, v0.len(), dim));
    }
    if !times.iter().chain(v0.iter()).all(|x| x.is_finite()) {
        return Err(TrajectoryError::NonFinite("times or start velocity".into()));
    }
    for i in 1..n {
        if times[i] <= times[i - 1] {
            return Err(TrajectoryError::NonIncreasingTimes(i, times[i], times[i - 1]));
        }
    }

    let mut segments = vec![vec![[0.0; 4]; dim]; n - 1];
    for j in 0..dim {
        let q: Vec<f64> = configs.iter().map(|c| c[j]).collect();
        let v = optimal_knot_velocities(&q, times, v0[j], 0.0);
        for i in 0..n - 1 {
            let h = times[i + 1] - times[i];
            let d = q[i + 1] - q[i];
            segments[i][j] = [
                q[i],
                v[i],
                (3.0 * d / h - 2.0 * v[i] - v[i + 1]) / h,
                (v[i] + v[i + 1] - 2.0 * d / h) / (h * h),
            ];
        }
    }
    Ok(CubicSplineTrajectory {
        times: times.to_vec(),
        segments,
        knots: configs.iter().map(|c| c.iter().copied().collect()).collect(),
    })
}

impl CubicSplineTrajectory {
    pub fn dim(&self) -> usize {
        self.knots[0].len()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("at least two knots")
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Segment index and local time for `t` inside the knot range.
    fn locate(&self, t: f64) -> (usize, f64) {
        let i = self.times.partition_point(|&k| k <= t).saturating_sub(1).min(self.segments.len() - 1);
        (i, t - self.times[i])
    }

    pub fn sample(&self, t: f64) -> Sample {
        let (t0, t1) = (self.start_time(), self.end_time());
        let clamped = !(t >= t0 && t <= t1);
        let t = if t.is_nan() { t0 } else { t.clamp(t0, t1) };
        let dim = self.dim();
        let mut q = DVector::zeros(dim);
        let mut qd = DVector::zeros(dim);
        let mut qdd = DVector::zeros(dim);
        let (i, tau) = self.locate(t);
        for j in 0..dim {
            let [a0, a1, a2, a3] = self.segments[i][j];
            q[j] = a0 + tau * (a1 + tau * (a2 + tau * a3));
            qd[j] = a1 + tau * (2.0 * a2 + 3.0 * tau * a3);
            qdd[j] = 2.0 * a2 + 6.0 * tau * a3;
        }
        if t == t1 {
            q = DVector::from_column_slice(self.knots.last().expect("knots"));
        }
        Sample { q, qd, qdd, clamped }
    }

    /// Knot velocities as stored in the segment coefficients; the last one is
    /// the end velocity of the final segment.
    pub fn knot_velocities(&self) -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = self
            .segments
            .iter()
            .map(|seg| DVector::from_iterator(seg.len(), seg.iter().map(|c| c[1])))
            .collect();
        let (last, h) = (self.segments.last().expect("segments"), self.duration_of(self.segments.len() - 1));
        out.push(DVector::from_iterator(
            last.len(),
            last.iter().map(|c| c[1] + h * (2.0 * c[2] + 3.0 * h * c[3])),
        ));
        out
    }

    fn duration_of(&self, segment: usize) -> f64 {
        self.times[segment + 1] - self.times[segment]
    }

    /// `Σ ∫ q̈² dt` over all coordinates, from the coefficients.
    pub fn acceleration_cost(&self) -> f64 {
        let mut total = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let h = self.duration_of(i);
            for c in seg {
                let (a2, a3) = (c[2], c[3]);
                total += 4.0 * a2 * a2 * h + 12.0 * a2 * a3 * h * h + 12.0 * a3 * a3 * h * h * h;
            }
        }
        total
    }

    /// Rows `t, q…, q̇…` every `1/rate` seconds plus the final knot.
    pub fn to_csv(&self, rate: f64, names: &[String]) -> String {
        let dim = self.dim();
        let mut out = String::from("t");
        for k in 0..dim {
            out.push_str(&format!(",q_{}", names.get(k).map(String::as_str).unwrap_or(&k.to_string())));
        }
        for k in 0..dim {
            out.push_str(&format!(",qd_{}", names.get(k).map(String::as_str).unwrap_or(&k.to_string())));
        }
        out.push('\n');
        for t in sample_times(self.start_time(), self.end_time(), rate) {
            let s = self.sample(t);
            out.push_str(&format!("{t}"));
            for v in s.q.iter().chain(s.qd.iter()) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `t₀, t₀ + 1/rate, …` up to and including `t₁`. Times are computed as
/// `t₀ + k/rate` so there is no accumulated drift.
pub fn sample_times(t0: f64, t1: f64, rate: f64) -> Vec<f64> {
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| t0 + k as f64 / rate).filter(|&t| t < t1).collect();
    v.push(t1);
    v
}

/// Knots and times of a script: the first controller configuration, then
/// each keyframe's puppet configuration after its transition duration.
pub fn script_knots(script: &Script, profile: Profile) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut configs = Vec::with_capacity(script.keyframes.len() + 1);
    let mut times = Vec::with_capacity(script.keyframes.len() + 1);
    if let Some(first) = script.keyframes.first() {
        configs.push(first.controller_q.clone());
        times.push(0.0);
    }
    let mut t = 0.0;
    for kf in &script.keyframes {
        t += kf.duration(profile);
        configs.push(kf.puppet_q.clone());
        times.push(t);
    }
    (configs, times)
}

/// Compile a script starting at rest.
pub fn compile_script(script: &Script, profile: Profile) -> Result<CubicSplineTrajectory, TrajectoryError> {
    let (configs, times) = script_knots(script, profile);
    let dim = configs.first().map_or(0, |c| c.len());
    compile(&configs, &times, &DVector::zeros(dim))
}
