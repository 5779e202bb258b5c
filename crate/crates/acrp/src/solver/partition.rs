//! Piecewise-linear upper envelopes of `t = delta^2` and the variables and
//! constraints that tie `delta_tilde` to them.

use crate::model::{IndicatorConstraint, LinearConstraint, Meaning, MixedIntegerModel, QuadConstraint, Sense, VarKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Knots closer than this are the same knot.
pub const KNOT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("breakpoint {0} coincides with an existing knot")]
    BreakpointOnExistingKnot(f64),
    #[error("breakpoint {0} lies outside the partition range")]
    OutOfRange(f64),
    #[error("empty range [{0}, {1}]")]
    EmptyRange(f64, f64),
}

/// Strictly increasing knots `b_0 < ... < b_K` over one control axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePartition {
    pub knots: Vec<f64>,
}

/// Chord of the parabola through `(a, a^2)` and `(b, b^2)`: slope, intercept.
pub fn chord(a: f64, b: f64) -> (f64, f64) {
    (a + b, -a * b)
}

impl PiecewisePartition {
    pub fn new(lo: f64, hi: f64) -> Result<Self, PartitionError> {
        if lo >= hi - KNOT_TOL {
            return Err(PartitionError::EmptyRange(lo, hi));
        }
        Ok(Self { knots: vec![lo, hi] })
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn segment(&self, k: usize) -> (f64, f64) {
        (self.knots[k], self.knots[k + 1])
    }

    /// `(alpha_k, beta_k)` per segment.
    pub fn chords(&self) -> Vec<(f64, f64)> {
        self.knots.windows(2).map(|w| chord(w[0], w[1])).collect()
    }

    /// Upper envelope value at `d`: the chord of the segment holding `d`.
    pub fn envelope(&self, d: f64) -> f64 {
        let k = self.locate(d);
        let (a, b) = chord(self.knots[k], self.knots[k + 1]);
        a * d + b
    }

    fn locate(&self, d: f64) -> usize {
        let k = self.knots.partition_point(|&b| b <= d);
        k.clamp(1, self.knots.len() - 1) - 1
    }

    /// Splits the segment containing `at` into two that meet at `at`.
    pub fn refine(&mut self, at: f64) -> Result<(), PartitionError> {
        let (lo, hi) = (self.knots[0], *self.knots.last().unwrap());
        if at < lo || at > hi {
            return Err(PartitionError::OutOfRange(at));
        }
        if self.knots.iter().any(|&b| (b - at).abs() <= KNOT_TOL * (1.0 + at.abs())) {
            return Err(PartitionError::BreakpointOnExistingKnot(at));
        }
        let k = self.locate(at);
        self.knots.insert(k + 1, at);
        Ok(())
    }
}

/// Adds `tilde_dx`, `tilde_dy` for aircraft `i` with `dx^2 <= tdx`,
/// `dy^2 <= tdy`, `tdx + tdy >= q_lo^2` and the piecewise upper envelopes.
/// Multi-segment envelopes get one selector binary per segment.
pub fn add_tilde_machinery(m: &mut MixedIntegerModel, i: usize, px: &PiecewisePartition, py: &PiecewisePartition, q_lo: f64) {
    let av = m.aircraft[i];
    let sq_max = |p: &PiecewisePartition| {
        let (a, b) = (p.knots[0], *p.knots.last().unwrap());
        let lo = if a <= 0.0 && b >= 0.0 { 0.0 } else { (a * a).min(b * b) };
        (lo, (a * a).max(b * b))
    };
    let (xl, xh) = sq_max(px);
    let (yl, yh) = sq_max(py);
    let tdx = m.add_var(VarKind::Continuous, xl, xh, Meaning::TildeDx(i));
    let tdy = m.add_var(VarKind::Continuous, yl, yh, Meaning::TildeDy(i));
    m.quad.push(QuadConstraint { name: format!("tilde_x_{i}"), quad: vec![(av.dx, av.dx, 1.0)], linear: vec![(tdx, -1.0)], rhs: 0.0 });
    m.quad.push(QuadConstraint { name: format!("tilde_y_{i}"), quad: vec![(av.dy, av.dy, 1.0)], linear: vec![(tdy, -1.0)], rhs: 0.0 });
    m.linear.push(LinearConstraint::new(format!("speed_lo_{i}"), vec![(tdx, 1.0), (tdy, 1.0)], Sense::Ge, q_lo * q_lo));
    for (axis, p, d, t) in [('x', px, av.dx, tdx), ('y', py, av.dy, tdy)] {
        let (a0, b0) = chord(p.knots[0], *p.knots.last().unwrap());
        m.linear.push(LinearConstraint::new(format!("env_{axis}_{i}"), vec![(t, 1.0), (d, -a0)], Sense::Le, b0));
        if p.segments() < 2 {
            continue;
        }
        let mut sel = Vec::new();
        for (k, (alpha, beta)) in p.chords().into_iter().enumerate() {
            let meaning = if axis == 'x' { Meaning::SegX(i, k) } else { Meaning::SegY(i, k) };
            let s = m.add_var(VarKind::Binary, 0.0, 1.0, meaning);
            sel.push((s, 1.0));
            let (lo, hi) = p.segment(k);
            let on = vec![(s, true)];
            m.indicators.push(IndicatorConstraint {
                conditions: on.clone(),
                constraint: LinearConstraint::new(format!("seg_lo_{axis}_{i}_{k}"), vec![(d, 1.0)], Sense::Ge, lo),
            });
            m.indicators.push(IndicatorConstraint {
                conditions: on.clone(),
                constraint: LinearConstraint::new(format!("seg_hi_{axis}_{i}_{k}"), vec![(d, 1.0)], Sense::Le, hi),
            });
            m.indicators.push(IndicatorConstraint {
                conditions: on,
                constraint: LinearConstraint::new(format!("cut_{axis}_{i}_{k}"), vec![(t, 1.0), (d, -alpha)], Sense::Le, beta),
            });
        }
        m.linear.push(LinearConstraint::new(format!("one_seg_{axis}_{i}"), sel, Sense::Eq, 1.0));
    }
}
