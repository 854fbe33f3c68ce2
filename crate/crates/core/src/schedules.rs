//! Power-law step-size schedules `c / n^delta`, their limiting ratios against
//! a dominant schedule, and the algorithmic timescale built from the dominant
//! schedule's partial sums.

use crate::error::{Error, Result};

/// Admissible exponent band for tapering schedules is `(LOWER, UPPER]`.
pub const DELTA_LOWER: f64 = 0.75;
pub const DELTA_UPPER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Tapering,
    Constant,
}

/// A per-client step-size rule.
///
/// Tapering schedules evaluate `c / (n + 1)^delta`; the index shift keeps
/// step 0 finite and leaves every limit unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeSchedule {
    c: f64,
    delta: f64,
    kind: ScheduleKind,
}

impl StepSizeSchedule {
    /// Tapering schedule with `c > 0` and `delta` in `(0.75, 1]`.
    pub fn tapering(c: f64, delta: f64) -> Result<Self> {
        if !(delta > DELTA_LOWER && delta <= DELTA_UPPER) {
            return Err(Error::InvalidSchedule(format!(
                "delta = {delta} outside the admissible band (0.75, 1]"
            )));
        }
        Self::tapering_unchecked(c, delta)
    }

    /// Tapering schedule that skips the exponent band check (only `delta > 0`
    /// is enforced). Runs built on it are outside the convergence guarantees.
    pub fn tapering_unchecked(c: f64, delta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidSchedule(format!("c = {c} must be positive")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "delta = {delta} must be positive"
            )));
        }
        Ok(Self {
            c,
            delta,
            kind: ScheduleKind::Tapering,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidSchedule(format!("c = {c} must be positive")));
        }
        Ok(Self {
            c,
            delta: 0.0,
            kind: ScheduleKind::Constant,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn is_tapering(&self) -> bool {
        self.kind == ScheduleKind::Tapering
    }

    /// Whether `delta` lies in the admissible band.
    pub fn within_band(&self) -> bool {
        match self.kind {
            ScheduleKind::Constant => true,
            ScheduleKind::Tapering => self.delta > DELTA_LOWER && self.delta <= DELTA_UPPER,
        }
    }

    pub fn step_size(&self, n: u64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.c,
            ScheduleKind::Tapering => self.c / ((n + 1) as f64).powf(self.delta),
        }
    }

    /// True when `self` eventually dominates `other`: `a_self(n) >= a_other(n)`
    /// for all large `n`.
    fn dominates(&self, other: &Self) -> bool {
        self.delta < other.delta || (self.delta == other.delta && self.c >= other.c)
    }
}

/// `lim a_i(n) / a_ref(n)` evaluated analytically.
pub fn limiting_ratio(sched: &StepSizeSchedule, reference: &StepSizeSchedule) -> Result<f64> {
    if !sched.is_tapering() || !reference.is_tapering() {
        return Err(Error::InvalidSchedule(
            "limiting ratios are defined for tapering schedules only".into(),
        ));
    }
    if !reference.dominates(sched) {
        return Err(Error::DominanceViolation { index: 0 });
    }
    if sched.delta == reference.delta {
        Ok(sched.c / reference.c)
    } else {
        Ok(0.0)
    }
}

/// Limiting weights of every client relative to the dominant schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitingWeights {
    p: Vec<f64>,
    ref_index: usize,
}

impl LimitingWeights {
    /// Equal weights, used where no tapering reference exists (constant-step
    /// baselines).
    pub fn uniform(len: usize) -> Self {
        Self {
            p: vec![1.0; len],
            ref_index: 0,
        }
    }

    /// Builds weights from explicit values. `p[ref_index]` must be 1 and every
    /// entry must lie in `[0, 1]`.
    pub fn from_values(p: Vec<f64>, ref_index: usize) -> Result<Self> {
        if ref_index >= p.len() || p[ref_index] != 1.0 {
            return Err(Error::InvalidSchedule(
                "reference weight must equal 1".into(),
            ));
        }
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidSchedule(
                "limiting weights must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { p, ref_index })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn ref_index(&self) -> usize {
        self.ref_index
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Picks the dominant schedule (smallest `delta`, ties broken by largest `c`,
/// then by lowest index) and returns every client's limiting weight against it.
pub fn validate_and_rank(schedules: &[StepSizeSchedule]) -> Result<LimitingWeights> {
    if schedules.is_empty() {
        return Err(Error::NoDominantSchedule);
    }
    if let Some(i) = schedules.iter().position(|s| !s.is_tapering()) {
        return Err(Error::InvalidSchedule(format!(
            "schedule {i} is constant; limiting weights need tapering schedules"
        )));
    }
    let mut ref_index = 0;
    for (i, s) in schedules.iter().enumerate().skip(1) {
        let r = &schedules[ref_index];
        if s.delta < r.delta || (s.delta == r.delta && s.c > r.c) {
            ref_index = i;
        }
    }
    let reference = schedules[ref_index];
    let p = schedules
        .iter()
        .enumerate()
        .map(|(i, s)| {
            limiting_ratio(s, &reference).map_err(|e| match e {
                Error::DominanceViolation { .. } => Error::DominanceViolation { index: i },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::NoDominantSchedule);
    }
    Ok(LimitingWeights { p, ref_index })
}

/// `T_0 = 0`, `T_n = sum_{k=1}^{nN} a_ref(k)` for `n = 1..=n_rounds`.
pub fn event_times(reference: &StepSizeSchedule, period: usize, n_rounds: usize) -> Vec<f64> {
    let mut times = Vec::with_capacity(n_rounds + 1);
    times.push(0.0);
    let mut t = 0.0;
    let mut k: u64 = 1;
    for _ in 0..n_rounds {
        for _ in 0..period {
            t += reference.step_size(k);
            k += 1;
        }
        times.push(t);
    }
    times
}
