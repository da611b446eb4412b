//! Bounding functions applied to soft advantages.
//!
//! A valid bounding function `h` is non-decreasing with `h(0) = 0`,
//! `0 ≤ h(x) ≤ x` for `x ≥ 0`, `x ≤ h(x) ≤ 0` for `x ≤ 0`, and has a
//! connected codomain inside `[-c_h, c_h]`. `Sign` breaks these rules and is
//! kept only for ablations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A bounding function variant with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundingFn {
    Identity,
    Zero,
    /// `clamp(x / scale, lo, hi)`
    Clip { scale: f64, lo: f64, hi: f64 },
    /// `tanh(x / scale)`
    Tanh { scale: f64 },
    Sign,
    /// `clip(x ρ, −c, c)` with `c = (t + T1) / T1` and `ρ = c / (c + T2)`,
    /// where `t` is the iteration index.
    #[serde(rename = "tdclip")]
    TimeDependentClip {
        #[serde(rename = "T1")]
        t1: f64,
        #[serde(rename = "T2")]
        t2: f64,
    },
}

impl BoundingFn {
    /// `clip(x, -1, 1)`.
    pub fn clip_unit() -> Self {
        BoundingFn::Clip { scale: 1.0, lo: -1.0, hi: 1.0 }
    }

    /// The Munchausen clip `[x]^0_{-1}`.
    pub fn munchausen_clip() -> Self {
        BoundingFn::Clip { scale: 1.0, lo: -1.0, hi: 0.0 }
    }

    pub fn tanh(scale: f64) -> Self {
        BoundingFn::Tanh { scale }
    }

    pub fn eval(&self, x: f64, step: u64) -> f64 {
        match *self {
            BoundingFn::Identity => x,
            BoundingFn::Zero => 0.0,
            BoundingFn::Clip { scale, lo, hi } => (x / scale).clamp(lo, hi),
            BoundingFn::Tanh { scale } => (x / scale).tanh(),
            BoundingFn::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            BoundingFn::TimeDependentClip { t1, t2 } => {
                let (c, rho) = td_schedule(t1, t2, step);
                (x * rho).clamp(-c, c)
            }
        }
    }

    /// `c_h` at `step`; `+∞` for the identity.
    pub fn bound(&self, step: u64) -> f64 {
        match *self {
            BoundingFn::Identity => f64::INFINITY,
            BoundingFn::Zero => 0.0,
            BoundingFn::Clip { lo, hi, .. } => lo.abs().max(hi.abs()),
            BoundingFn::Tanh { .. } | BoundingFn::Sign => 1.0,
            BoundingFn::TimeDependentClip { t1, t2, .. } => td_schedule(t1, t2, step).0,
        }
    }

    /// Whether the variant and its parameters satisfy the bounding
    /// conditions analytically.
    pub fn is_valid(&self) -> bool {
        match *self {
            BoundingFn::Identity | BoundingFn::Zero => true,
            BoundingFn::Clip { scale, lo, hi } => scale >= 1.0 && lo <= 0.0 && hi >= 0.0 && scale.is_finite(),
            BoundingFn::Tanh { scale } => scale >= 1.0 && scale.is_finite(),
            BoundingFn::Sign => false,
            BoundingFn::TimeDependentClip { t1, t2 } => t1 > 0.0 && t2 >= 0.0 && t1.is_finite() && t2.is_finite(),
        }
    }

    /// `lim_{x→−∞} h(x)/x`.
    fn slope_at_neg_infinity(&self) -> f64 {
        match self {
            BoundingFn::Identity => 1.0,
            _ => 0.0,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

fn td_schedule(t1: f64, t2: f64, step: u64) -> (f64, f64) {
    let c = (step as f64 + t1) / t1;
    (c, c / (c + t2))
}

impl fmt::Display for BoundingFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundingFn::Identity => write!(f, "identity"),
            BoundingFn::Zero => write!(f, "zero"),
            BoundingFn::Clip { scale, lo, hi } => write!(f, "clip(x/{}, {}, {})", scale, lo, hi),
            BoundingFn::Tanh { scale } => write!(f, "tanh(x/{})", scale),
            BoundingFn::Sign => write!(f, "sign"),
            BoundingFn::TimeDependentClip { t1, t2 } => write!(f, "tdclip(T1={}, T2={})", t1, t2),
        }
    }
}

/// `bound_eval` in function form.
pub fn bound_eval(h: &BoundingFn, x: f64, step: u64) -> f64 {
    h.eval(x, step)
}

/// Per-condition outcome of [`validate_bounding`] on a sample grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub monotone: bool,
    /// `x ≥ h(x) ≥ 0` for `x ≥ 0` and `x ≤ h(x) ≤ 0` for `x ≤ 0`.
    pub sign_and_magnitude: bool,
    pub bounded: bool,
    pub zero_at_zero: bool,
    /// Analytic, not sampled.
    pub connected_codomain: bool,
    pub c_h: f64,
    /// First grid point violating `sign_and_magnitude`, if any.
    pub first_magnitude_violation: Option<f64>,
}

impl ValidityReport {
    pub fn all_pass(&self) -> bool {
        self.monotone && self.sign_and_magnitude && self.bounded && self.zero_at_zero && self.connected_codomain
    }
}

/// Checks the bounding conditions on the sorted sample `grid` at `step`.
pub fn validate_bounding(h: &BoundingFn, grid: &[f64], step: u64) -> ValidityReport {
    let mut xs = grid.to_vec();
    xs.sort_by(f64::total_cmp);
    let ys: Vec<f64> = xs.iter().map(|&x| h.eval(x, step)).collect();
    let c_h = h.bound(step);
    let monotone = ys.windows(2).all(|w| w[1] >= w[0]);
    let first_magnitude_violation = xs.iter().zip(&ys).find_map(|(&x, &y)| {
        let ok = if x >= 0.0 { x >= y && y >= 0.0 } else { x <= y && y <= 0.0 };
        (!ok).then_some(x)
    });
    ValidityReport {
        monotone,
        sign_and_magnitude: first_magnitude_violation.is_none(),
        bounded: ys.iter().all(|y| y.abs() <= c_h),
        zero_at_zero: h.eval(0.0, step) == 0.0,
        connected_codomain: !matches!(h, BoundingFn::Sign),
        c_h,
        first_magnitude_violation,
    }
}

/// Log-spaced sample of `z ∈ [−10⁶, −10⁻⁹]` used by [`delta_bar`]:
/// 100 points per decade.
pub fn delta_bar_grid() -> Vec<f64> {
    const DECADES: i32 = 15;
    const PER_DECADE: i32 = 100;
    (0..=DECADES * PER_DECADE)
        .map(|i| -(10f64).powf(-9.0 + i as f64 / PER_DECADE as f64))
        .collect()
}

/// `Δ̄_g = sup_{z<0} (1 − g(αz)/(αz))`, clamped to `[0, 1]`.
///
/// Identity and Zero are exact. Otherwise the supremum is taken over
/// [`delta_bar_grid`] together with the limit `z → −∞`, which is 1 for every
/// bounded function.
pub fn delta_bar(g: &BoundingFn, alpha: f64) -> f64 {
    match g {
        BoundingFn::Identity => return 0.0,
        BoundingFn::Zero => return 1.0,
        _ => {}
    }
    let tail = 1.0 - g.slope_at_neg_infinity();
    delta_bar_grid()
        .into_iter()
        .map(|z| {
            let x = alpha * z;
            1.0 - g.eval(x, 0) / x
        })
        .fold(tail, f64::max)
        .clamp(0.0, 1.0)
}
