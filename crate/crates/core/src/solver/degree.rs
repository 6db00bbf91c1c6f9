//! Brouwer degree of a map `g: R^d → R^d` on a box (`d ≤ 3`) by enumerating
//! zeros: a lattice scan marks cells whose corner values straddle zero in every
//! component, Newton with a finite-difference Jacobian refines them, and the
//! signs of the Jacobian determinants are summed. In one and two dimensions the
//! result is compared with endpoint signs or the boundary winding number.

use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dense::{determinant, DenseLu};
use crate::linalg::Mat;
use crate::math;

/// A located zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroInfo {
    pub point: Vec<f64>,
    pub det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeReport {
    pub degree: i64,
    /// Endpoint count (`d = 1`) or winding number (`d = 2`).
    pub winding: Option<i64>,
    pub zeros: Vec<ZeroInfo>,
}

impl DegreeReport {
    /// The independent boundary count agrees with the zero count, where one
    /// is available.
    pub fn consistent(&self) -> bool {
        self.winding.is_none_or(|w| w == self.degree)
    }
}

/// Relative Jacobian determinant below which a located zero counts as degenerate.
pub const DEGENERATE_DET: f64 = 1e-6;

fn eval(g: &dyn Fn(&[f64], &mut [f64]), x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    g(x, &mut out);
    out
}

fn jacobian(g: &dyn Fn(&[f64], &mut [f64]), x: &[f64], step: f64) -> Mat {
    let d = x.len();
    let mut j = Mat::zeros(d, d);
    let mut xp = x.to_vec();
    for c in 0..d {
        let e = step * (1.0 + math::abs(x[c]));
        xp[c] = x[c] + e;
        let fp = eval(g, &xp);
        xp[c] = x[c] - e;
        let fm = eval(g, &xp);
        xp[c] = x[c];
        for r in 0..d {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * e);
        }
    }
    j
}

/// Degree of `g` on `[lo, hi]` with `density` lattice cells per axis.
pub fn brouwer_degree_small(g: &dyn Fn(&[f64], &mut [f64]), lo: &[f64], hi: &[f64], density: usize) -> Result<DegreeReport> {
    let d = lo.len();
    if d == 0 || d > 3 || hi.len() != d {
        return Err(Error::InvalidArgument("box dimension must be 1, 2 or 3".into()));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(Error::InvalidArgument("box must have lo < hi".into()));
    }
    let n = density.max(2);
    let pts = n + 1;
    let total = pts.pow(d as u32);
    let coord = |idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; d];
        let mut r = idx;
        for a in (0..d).rev() {
            let i = r % pts;
            r /= pts;
            x[a] = lo[a] + (hi[a] - lo[a]) * i as f64 / n as f64;
        }
        x
    };
    let values: Vec<Vec<f64>> = (0..total).map(|i| eval(g, &coord(i))).collect();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(math::norm(v))).max(f64::MIN_POSITIVE);
    let diam = math::sqrt(lo.iter().zip(hi).map(|(a, b)| (b - a) * (b - a)).sum());

    // Boundary: no lattice value may be (nearly) zero.
    let on_boundary = |idx: usize| {
        let mut r = idx;
        for _ in 0..d {
            let i = r % pts;
            r /= pts;
            if i == 0 || i == n {
                return true;
            }
        }
        false
    };
    for (i, v) in values.iter().enumerate() {
        if on_boundary(i) && math::norm(v) <= 1e-10 * scale {
            return Err(Error::ZeroOnBoundary { point: coord(i) });
        }
    }

    let mut zeros: Vec<ZeroInfo> = Vec::new();
    let cells = n.pow(d as u32);
    for cell in 0..cells {
        let mut base = vec![0usize; d];
        let mut r = cell;
        for a in (0..d).rev() {
            base[a] = r % n;
            r /= n;
        }
        let mut lo_v = vec![f64::INFINITY; d];
        let mut hi_v = vec![f64::NEG_INFINITY; d];
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            for a in 0..d {
                idx = idx * pts + base[a] + (corner >> a & 1);
            }
            for k in 0..d {
                lo_v[k] = lo_v[k].min(values[idx][k]);
                hi_v[k] = hi_v[k].max(values[idx][k]);
            }
        }
        if (0..d).any(|k| lo_v[k] > 0.0 || hi_v[k] < 0.0) {
            continue;
        }
        let mut x: Vec<f64> =
            (0..d).map(|a| lo[a] + (hi[a] - lo[a]) * (base[a] as f64 + 0.5) / n as f64).collect();
        let mut ok = false;
        for _ in 0..60 {
            let fx = eval(g, &x);
            if math::norm(&fx) <= 1e-13 * scale {
                ok = true;
                break;
            }
            let Some(lu) = DenseLu::new(&jacobian(g, &x, 1e-7)) else { break };
            let step = lu.solve(&fx);
            let mut t = 1.0;
            let f0 = math::norm(&fx);
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                if math::norm(&eval(g, &trial)) < f0 {
                    x = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                ok = math::norm(&fx) <= 1e-10 * scale;
                break;
            }
        }
        if !ok {
            continue;
        }
        let cell_w = diam / n as f64;
        let inside = (0..d).all(|a| x[a] >= lo[a] - 1e-12 * diam && x[a] <= hi[a] + 1e-12 * diam);
        if !inside {
            continue;
        }
        if (0..d).any(|a| math::abs(x[a] - lo[a]) <= 1e-9 * diam || math::abs(x[a] - hi[a]) <= 1e-9 * diam) {
            return Err(Error::ZeroOnBoundary { point: x });
        }
        if zeros.iter().any(|z| math::dist(&z.point, &x) <= 1e-6 * cell_w) {
            continue;
        }
        let det = determinant(&jacobian(g, &x, 1e-6));
        let jscale = math::pow(scale / diam, d as f64);
        if !(math::abs(det) > DEGENERATE_DET * jscale) {
            return Err(Error::DegenerateZero { point: x, det });
        }
        zeros.push(ZeroInfo { point: x, det });
    }
    let degree = zeros.iter().map(|z| if z.det > 0.0 { 1 } else { -1 }).sum();
    let winding = match d {
        1 => {
            let a = values[0][0];
            let b = values[n][0];
            Some(((b > 0.0) as i64 - (b < 0.0) as i64 - (a > 0.0) as i64 + (a < 0.0) as i64) / 2)
        }
        2 => Some(winding_number(g, lo, hi, 8 * n)),
        _ => None,
    };
    Ok(DegreeReport { degree, winding, zeros })
}

/// Winding number of `g` along the boundary of a rectangle traversed
/// counter-clockwise; segments are bisected until the angle increment is
/// below a quarter turn.
pub fn winding_number(g: &dyn Fn(&[f64], &mut [f64]), lo: &[f64], hi: &[f64], per_side: usize) -> i64 {
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let angle = |p: &[f64]| {
        let v = eval(g, p);
        math::atan2(v[1], v[0])
    };
    let wrap = |mut a: f64| {
        let pi = core::f64::consts::PI;
        while a > pi {
            a -= 2.0 * pi;
        }
        while a < -pi {
            a += 2.0 * pi;
        }
        a
    };
    let mut total = 0.0;
    for s in 0..4 {
        let a = corners[s];
        let b = corners[(s + 1) % 4];
        let point = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let mut stack: Vec<(f64, f64)> = (0..per_side).rev().map(|i| (i as f64 / per_side as f64, (i + 1) as f64 / per_side as f64)).collect();
        while let Some((t0, t1)) = stack.pop() {
            let d = wrap(angle(&point(t1)) - angle(&point(t0)));
            if math::abs(d) > 0.5 * core::f64::consts::PI && t1 - t0 > 1e-9 {
                let tm = 0.5 * (t0 + t1);
                stack.push((tm, t1));
                stack.push((t0, tm));
            } else {
                total += d;
            }
        }
    }
    math::round(total / (2.0 * core::f64::consts::PI)) as i64
}
