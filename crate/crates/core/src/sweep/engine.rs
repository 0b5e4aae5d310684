use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use super::{Motion, MotionState, SweepError};
use crate::geometry::MeshDistanceIndex;

/// Where the minimizing time landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgminLocation {
    Interior,
    TMin,
    TMax,
}

impl ArgminLocation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Interior => "interior",
            Self::TMin => "t_min",
            Self::TMax => "t_max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Seed sampling stride; derived from the motion when `None`.
    pub seed_stride: Option<f64>,
    pub initial_step: f64,
    pub armijo_c: f64,
    pub stationarity_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Upper limit on descents started from seed samples in a cold query.
    pub max_starts: usize,
    /// Warm start from the previous query when it lies this close (m);
    /// defaults to a quarter of the body radius.
    pub neighbor_radius: Option<f64>,
    /// Falls back to a cold query when some seed sample lies below the warm
    /// result, so the answer depends on `x` rather than on the cache history.
    pub verify_warm: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            seed_stride: None,
            initial_step: 0.02,
            armijo_c: 0.5,
            stationarity_tol: 1e-8,
            step_tol: 1e-10,
            max_iterations: 128,
            max_halvings: 32,
            max_starts: 6,
            neighbor_radius: None,
            verify_warm: false,
        }
    }
}

/// Body-frame evaluation of the moving SDF at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSample {
    pub f: f64,
    /// ∂f/∂t
    pub fdot: f64,
    pub x_rel: Vector3<f64>,
    pub grad_body: Vector3<f64>,
    pub state: MotionState,
}

impl TimeSample {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweptQueryResult {
    pub f_star: f64,
    pub t_star: f64,
    pub at_boundary: ArgminLocation,
    pub x_rel: Vector3<f64>,
    pub grad_body: Vector3<f64>,
    pub fdot: f64,
    pub iterations: usize,
    /// Whether the query sampled the horizon instead of using a cached time.
    pub cold: bool,
    pub state: MotionState,
}

/// Last argmin times, keyed by obstacle id, plus the most recent query for
/// spatial continuation.
#[derive(Debug, Clone, Default)]
pub struct WarmStartCache {
    by_id: HashMap<usize, f64>,
    last: Option<(Vector3<f64>, f64)>,
}

impl WarmStartCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.by_id.clear();
        self.last = None;
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<f64> {
        self.by_id.get(&id).copied()
    }

    /// Forgets the spatial neighbor so the next anonymous query starts cold.
    pub fn forget_last(&mut self) {
        self.last = None;
    }
}

struct Descent {
    sample: TimeSample,
    iterations: usize,
    exhausted: bool,
}

/// Swept-volume SDF queries for one body, one motion.
pub struct SweepEngine<'a, M: Motion + ?Sized> {
    index: &'a MeshDistanceIndex,
    motion: &'a M,
    options: SweepOptions,
    t_min: f64,
    t_max: f64,
    body_radius: f64,
    seed_stride: f64,
    speed_bound: f64,
    rate_bound: f64,
    /// (t, Rᵀ, p) at the seed times.
    seeds: Vec<(f64, Matrix3<f64>, Vector3<f64>)>,
}

const MOTION_PROBES: usize = 256;

impl<'a, M: Motion + ?Sized> SweepEngine<'a, M> {
    pub fn new(index: &'a MeshDistanceIndex, motion: &'a M, options: SweepOptions) -> Result<Self, SweepError> {
        let (t_min, t_max) = motion.time_range();
        if !(t_max >= t_min) {
            return Err(SweepError::EmptyHorizon);
        }
        let body_radius = index.mesh().circumscribed_radius();

        let mut speed_bound: f64 = 0.0;
        let mut rate_bound: f64 = 0.0;
        for k in 0..=MOTION_PROBES {
            let t = t_min + (t_max - t_min) * k as f64 / MOTION_PROBES as f64;
            let s = motion.state(t)?;
            speed_bound = speed_bound.max(s.v.norm());
            rate_bound = rate_bound.max(s.omega.norm());
        }

        let span = t_max - t_min;
        let seed_stride = match options.seed_stride {
            Some(dt) if dt > 0.0 && dt.is_finite() => dt,
            Some(dt) => return Err(SweepError::InvalidStride(dt)),
            None => {
                let body_speed = speed_bound + rate_bound * body_radius;
                let natural = if body_speed > 0.0 { body_radius / (2.0 * body_speed) } else { f64::INFINITY };
                let capped = natural.min(span / 32.0);
                if capped > 0.0 { capped } else { 1.0 }
            }
        };

        let mut seeds = Vec::new();
        let mut k = 0usize;
        loop {
            let t = t_min + k as f64 * seed_stride;
            if t >= t_max {
                break;
            }
            let (r, p) = motion.pose(t)?;
            seeds.push((t, r.transpose(), p));
            k += 1;
        }
        let (r, p) = motion.pose(t_max)?;
        seeds.push((t_max, r.transpose(), p));

        Ok(Self { index, motion, options, t_min, t_max, body_radius, seed_stride, speed_bound, rate_bound, seeds })
    }

    pub fn index(&self) -> &MeshDistanceIndex {
        self.index
    }

    pub fn motion(&self) -> &M {
        self.motion
    }

    pub fn options(&self) -> &SweepOptions {
        &self.options
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    pub fn seed_stride(&self) -> f64 {
        self.seed_stride
    }

    pub fn body_radius(&self) -> f64 {
        self.body_radius
    }

    fn check_time(&self, t: f64) -> Result<(), SweepError> {
        if t >= self.t_min && t <= self.t_max {
            Ok(())
        } else {
            Err(SweepError::TimeOutOfRange { t, start: self.t_min, end: self.t_max })
        }
    }

    /// `SDF(R(t)ᵀ(x − p(t)))`.
    pub fn sdf_at_time(&self, x: &Vector3<f64>, t: f64) -> Result<f64, SweepError> {
        self.check_time(t)?;
        let (r, p) = self.motion.pose(t)?;
        Ok(self.index.signed_distance(&(r.transpose() * (x - p))))
    }

    /// `∂/∂t SDF(R(t)ᵀ(x − p(t))) = ∇ᵀ(ω̂ Rᵀ(p − x) − Rᵀ v)`.
    pub fn sdf_time_derivative(&self, x: &Vector3<f64>, t: f64) -> Result<f64, SweepError> {
        Ok(self.sample(x, t)?.fdot)
    }

    pub fn sample(&self, x: &Vector3<f64>, t: f64) -> Result<TimeSample, SweepError> {
        self.check_time(t)?;
        let state = self.motion.state(t)?;
        Ok(self.sample_state(x, state))
    }

    pub fn sample_state(&self, x: &Vector3<f64>, state: MotionState) -> TimeSample {
        let rt = state.rotation.transpose();
        let x_rel = rt * (x - state.p);
        let s = self.index.sample(&x_rel);
        let y = -state.omega.cross(&x_rel) - rt * state.v;
        TimeSample { f: s.value, fdot: s.gradient.dot(&y), x_rel, grad_body: s.gradient, state }
    }

    fn seed_values(&self, x: &Vector3<f64>) -> Vec<f64> {
        self.seeds.iter().map(|(_, rt, p)| self.index.signed_distance(&(rt * (x - p)))).collect()
    }

    /// Whether some seed sample lies strictly below `f`. Seeds whose bounding
    /// sphere is already at least `f` away are skipped.
    fn seed_below(&self, x: &Vector3<f64>, f: f64) -> bool {
        self.seeds.iter().any(|(_, rt, p)| {
            (x - p).norm() - self.body_radius < f && self.index.signed_distance(&(rt * (x - p))) < f
        })
    }

    /// Best seed sample time; ties go to the earlier sample.
    pub fn seed_time(&self, x: &Vector3<f64>) -> f64 {
        let values = self.seed_values(x);
        let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))).unwrap_or(0);
        self.seeds[best].0
    }

    fn descend(&self, x: &Vector3<f64>, t_init: f64) -> Result<Descent, SweepError> {
        let o = &self.options;
        let span = self.t_max - self.t_min;
        let mut cur = self.sample(x, t_init)?;
        let mut eta = o.initial_step;
        let mut prev: Option<(f64, f64)> = None;
        let mut iterations = 0;

        for _ in 0..o.max_iterations {
            let g = cur.fdot;
            let t = cur.t();
            if g.abs() <= o.stationarity_tol
                || (t <= self.t_min && g > 0.0)
                || (t >= self.t_max && g < 0.0)
            {
                break;
            }
            // secant curvature gives a Newton-like trial step
            let mut trial = eta;
            if let Some((tp, gp)) = prev {
                let (s, y) = (t - tp, g - gp);
                if s * y > 0.0 {
                    trial = s / y;
                }
            }
            if span > 0.0 {
                trial = trial.min(span / g.abs());
            }

            let mut accepted = None;
            for _ in 0..=o.max_halvings {
                let tn = (t - trial * g).clamp(self.t_min, self.t_max);
                let cand = self.sample(x, tn)?;
                let slack = 1e-15 * (1.0 + cur.f.abs());
                if cand.f <= cur.f + o.armijo_c * g * (tn - t) + slack {
                    accepted = Some(cand);
                    break;
                }
                trial *= 0.5;
            }
            let Some(next) = accepted else {
                return Ok(Descent { sample: cur, iterations, exhausted: true });
            };
            iterations += 1;
            let step = (next.t() - t).abs();
            prev = Some((t, g));
            eta = trial;
            cur = next;
            if step < o.step_tol {
                break;
            }
        }
        Ok(Descent { sample: cur, iterations, exhausted: false })
    }

    fn finish(&self, d: Descent, cold: bool) -> SweptQueryResult {
        let s = d.sample;
        let t = s.t();
        let at_boundary = if t <= self.t_min && self.t_max > self.t_min {
            ArgminLocation::TMin
        } else if t >= self.t_max && self.t_max > self.t_min {
            ArgminLocation::TMax
        } else {
            ArgminLocation::Interior
        };
        SweptQueryResult {
            f_star: s.f,
            t_star: t,
            at_boundary,
            x_rel: s.x_rel,
            grad_body: s.grad_body,
            fdot: s.fdot,
            iterations: d.iterations,
            cold,
            state: s.state,
        }
    }

    fn better(a: &Descent, b: &Descent) -> bool {
        a.sample.f < b.sample.f || (a.sample.f == b.sample.f && a.sample.t() < b.sample.t())
    }

    /// Local descent in time from `t_init`. If the line search stalls, the
    /// second-best seed sample is tried as well.
    pub fn argmin_time(&self, x: &Vector3<f64>, t_init: f64) -> Result<SweptQueryResult, SweepError> {
        self.check_time(t_init)?;
        let d = self.descend(x, t_init)?;
        if !d.exhausted {
            return Ok(self.finish(d, false));
        }
        let values = self.seed_values(x);
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let mut best = d;
        if let Some(&k) = order.get(1) {
            let alt = self.descend(x, self.seeds[k].0)?;
            if Self::better(&alt, &best) {
                best = alt;
            }
        }
        Ok(self.finish(best, false))
    }

    /// Seeds from every stride sample whose Lipschitz lower bound could still
    /// beat the incumbent, up to `max_starts` descents.
    fn cold_query(&self, x: &Vector3<f64>) -> Result<SweptQueryResult, SweepError> {
        let values = self.seed_values(x);
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

        let reach = self.seeds.iter().map(|(_, _, p)| (x - p).norm()).fold(0.0, f64::max);
        let lipschitz = self.speed_bound + self.rate_bound * (reach + self.speed_bound * self.seed_stride);
        let margin = 0.5 * lipschitz * self.seed_stride;

        let mut best: Option<Descent> = None;
        let mut started: Vec<usize> = Vec::new();
        let mut iterations = 0;
        for &k in &order {
            if started.len() >= self.options.max_starts {
                break;
            }
            if let Some(b) = &best {
                if values[k] - margin >= b.sample.f {
                    break;
                }
                if started.iter().any(|&s| s.abs_diff(k) <= 1) {
                    continue;
                }
            }
            started.push(k);
            let d = self.descend(x, self.seeds[k].0)?;
            iterations += d.iterations;
            let d = if d.exhausted {
                // retry from the next seed in value order
                match order.iter().find(|&&o| !started.contains(&o)) {
                    Some(&alt) => {
                        started.push(alt);
                        let r = self.descend(x, self.seeds[alt].0)?;
                        iterations += r.iterations;
                        if Self::better(&r, &d) { r } else { d }
                    }
                    None => d,
                }
            } else {
                d
            };
            if best.as_ref().is_none_or(|b| Self::better(&d, b)) {
                best = Some(d);
            }
        }
        let mut best = best.expect("at least one seed");
        best.iterations = iterations;
        Ok(self.finish(best, true))
    }

    /// Swept-volume SDF at `x`. Uses the cached time for `id`, or the previous
    /// query when it is close to `x`, and records the new argmin.
    pub fn swept_sdf(
        &self,
        x: &Vector3<f64>,
        id: Option<usize>,
        cache: &mut WarmStartCache,
    ) -> Result<SweptQueryResult, SweepError> {
        self.query(x, id, cache, self.options.verify_warm)
    }

    /// A warm descent stalls where `ḟ` vanishes without a minimum, for example
    /// at rest endpoints, so `verify` compares it against the seed samples.
    pub(crate) fn query(
        &self,
        x: &Vector3<f64>,
        id: Option<usize>,
        cache: &mut WarmStartCache,
        verify: bool,
    ) -> Result<SweptQueryResult, SweepError> {
        let radius = self.options.neighbor_radius.unwrap_or(0.25 * self.body_radius);
        let warm = id
            .and_then(|i| cache.get(i))
            .or_else(|| cache.last.filter(|(y, _)| (x - y).norm() <= radius).map(|(_, t)| t))
            .map(|t| t.clamp(self.t_min, self.t_max));
        let result = match warm {
            Some(t) => {
                let r = self.argmin_time(x, t)?;
                if verify && self.seed_below(x, r.f_star) {
                    let c = self.cold_query(x)?;
                    if c.f_star <= r.f_star { c } else { r }
                } else {
                    r
                }
            }
            None => self.cold_query(x)?,
        };
        if let Some(i) = id {
            cache.by_id.insert(i, result.t_star);
        }
        cache.last = Some((*x, result.t_star));
        Ok(result)
    }

    /// Cold query that ignores and does not touch any cache.
    pub fn swept_sdf_cold(&self, x: &Vector3<f64>) -> Result<SweptQueryResult, SweepError> {
        self.cold_query(x)
    }
}
