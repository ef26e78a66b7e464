//! Small log-domain helpers shared by inference, prediction and learning.

/// Log-potential assigned to configurations that violate a hard constraint.
///
/// Kept finite so message arithmetic never produces NaN.
pub const HARD_PENALTY: f64 = -1e30;

/// Anything below this is treated as carrying no probability mass.
pub(crate) const NEGLIGIBLE: f64 = -1e20;

#[inline]
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln(1 - e^a)` for `a <= 0`; returns `-inf` at `a = 0`.
#[inline]
pub fn log1mexp(a: f64) -> f64 {
    if a >= 0.0 {
        f64::NEG_INFINITY
    } else if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(x)`, stable for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Shift a binary log-message so it sums to one in probability space and
/// snap negligible entries to [`HARD_PENALTY`].
#[inline]
pub(crate) fn normalize_log2(m: [f64; 2]) -> [f64; 2] {
    let z = logsumexp2(m[0], m[1]);
    let mut out = [m[0] - z, m[1] - z];
    for v in &mut out {
        if *v < NEGLIGIBLE {
            *v = HARD_PENALTY;
        }
    }
    out
}
