//! Bézier splines over Bernstein bases, plus the linear-algebra views the
//! planner needs: derivative rows at arbitrary sample times, endpoint rows
//! for boundary conditions, and Gram matrices for integrated-effort costs.
//!
//! A trajectory is a clamped spline of `M` pieces, each a degree-`n` Bézier
//! curve over a fixed duration `tau`. Every quantity the optimizer touches
//! (positions, velocities, accelerations at sample times; effort integrals)
//! is linear or quadratic in the stacked control points, which is what makes
//! the per-robot subproblem a convex QP.

use crate::linalg::Vec2;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Binomial coefficient C(n, k). Exact for every size used in this crate
/// (degrees stay below 20, so products fit comfortably in u128).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..k {
        num *= (n - i) as u128;
        den *= (i + 1) as u128;
    }
    (num / den) as f64
}

/// Bernstein basis polynomial b_{j,n}(s) = C(n,j) s^j (1-s)^(n-j).
pub fn bernstein(j: usize, n: usize, s: f64) -> Result<f64> {
    if j > n {
        return Err(Error::Domain(format!(
            "bernstein index j={j} exceeds degree n={n}"
        )));
    }
    Ok(binomial(n, j) * s.powi(j as i32) * (1.0 - s).powi((n - j) as i32))
}

/// Coefficients of the c-th time derivative of a degree-`n` Bézier piece at
/// normalized parameter `s` in [0, 1], expressed over the piece's `n + 1`
/// control points. The derivative of a Bézier curve is a Bézier curve of
/// degree `n - c` over iterated forward differences of the control points,
/// scaled by n! / (n-c)! / tau^c; expanding the differences gives one
/// coefficient per original point. Orders above `n` give the zero row.
pub fn derivative_basis_row(n: usize, tau: f64, s: f64, c: usize) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    if c > n {
        return row;
    }
    let mut factor = 1.0;
    for i in 0..c {
        factor *= (n - i) as f64;
    }
    factor /= tau.powi(c as i32);
    for j in 0..=(n - c) {
        let b = bernstein(j, n - c, s).expect("j <= n - c");
        if b == 0.0 {
            continue;
        }
        for i in 0..=c {
            let sign = if (c - i) % 2 == 0 { 1.0 } else { -1.0 };
            row[j + i] += factor * b * sign * binomial(c, i);
        }
    }
    row
}

/// Derivative row at a piece boundary: `s = 0` (start) or `s = 1` (end).
pub fn endpoint_derivative_row(n: usize, tau: f64, c: usize, at_end: bool) -> Vec<f64> {
    derivative_basis_row(n, tau, if at_end { 1.0 } else { 0.0 }, c)
}

/// Gram matrix G of the integrated squared c-th derivative of one piece:
/// `integral_0^tau || B^(c)(t) ||^2 dt = p^T G p` per coordinate, where `p`
/// stacks the piece's control points. Built as `D^T H D` with `D` the
/// c-th-order difference operator and `H` the Bernstein product integrals
/// `H[a][b] = tau * C(m,a) C(m,b) / (C(2m,a+b) (2m+1))`, `m = n - c`.
/// Symmetric positive semidefinite; zero when `c > n`.
pub fn effort_gram(n: usize, c: usize, tau: f64) -> crate::linalg::Mat {
    use crate::linalg::Mat;
    let mut g = Mat::zeros(n + 1, n + 1);
    if c > n {
        return g;
    }
    let m = n - c;
    let mut factor = 1.0;
    for i in 0..c {
        factor *= (n - i) as f64;
    }
    factor /= tau.powi(c as i32);
    // D[j][j+i] = factor * (-1)^(c-i) C(c,i), j = 0..=m.
    let mut d = Mat::zeros(m + 1, n + 1);
    for j in 0..=m {
        for i in 0..=c {
            let sign = if (c - i) % 2 == 0 { 1.0 } else { -1.0 };
            d.set(j, j + i, factor * sign * binomial(c, i));
        }
    }
    for a in 0..=m {
        for b in 0..=m {
            let h = tau * binomial(m, a) * binomial(m, b)
                / (binomial(2 * m, a + b) * (2 * m + 1) as f64);
            for p in 0..=n {
                let dap = d.get(a, p);
                if dap == 0.0 {
                    continue;
                }
                for q in 0..=n {
                    g.add_to(p, q, dap * h * d.get(b, q));
                }
            }
        }
    }
    g
}

/// One Bézier piece: `n + 1` control points swept over a duration `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierPiece {
    pub points: Vec<Vec2>,
    pub tau: f64,
}

impl BezierPiece {
    pub fn new(points: Vec<Vec2>, tau: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain(format!(
                "a Bezier piece needs at least 2 control points, got {}",
                points.len()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("piece duration must be positive, got {tau}")));
        }
        Ok(BezierPiece { points, tau })
    }

    pub fn degree(&self) -> usize {
        self.points.len() - 1
    }

    /// Evaluate the c-th time derivative at local time `t` in `[0, tau]`,
    /// by de Casteljau on the c-times-differenced control points. This is
    /// an independent code path from `derivative_basis_row`, which the
    /// tests exploit.
    pub fn eval_derivative(&self, t: f64, c: usize) -> Vec2 {
        let n = self.degree();
        if c > n {
            return Vec2::ZERO;
        }
        let mut pts = self.points.clone();
        for i in 0..c {
            let deg = n - i;
            let scale = deg as f64 / self.tau;
            for j in 0..deg {
                pts[j] = (pts[j + 1] - pts[j]).scale(scale);
            }
            pts.truncate(deg);
        }
        let s = (t / self.tau).clamp(0.0, 1.0);
        let mut len = pts.len();
        while len > 1 {
            for j in 0..len - 1 {
                pts[j] = pts[j].scale(1.0 - s) + pts[j + 1].scale(s);
            }
            len -= 1;
        }
        pts[0]
    }
}

/// A spline of `M` pieces with a common degree and per-piece duration.
/// Pieces are stored in order; continuity between them is the planner's
/// responsibility (it imposes equality rows), not a structural guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierSpline {
    pub pieces: Vec<BezierPiece>,
}

impl BezierSpline {
    pub fn new(pieces: Vec<BezierPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Domain("spline needs at least one piece".into()));
        }
        let degree = pieces[0].degree();
        let tau = pieces[0].tau;
        for (i, p) in pieces.iter().enumerate() {
            if p.degree() != degree {
                return Err(Error::Domain(format!(
                    "piece {i} has degree {} but piece 0 has {degree}",
                    p.degree()
                )));
            }
            if (p.tau - tau).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "piece {i} has duration {} but piece 0 has {tau}",
                    p.tau
                )));
            }
        }
        Ok(BezierSpline { pieces })
    }

    pub fn degree(&self) -> usize {
        self.pieces[0].degree()
    }

    pub fn piece_duration(&self) -> f64 {
        self.pieces[0].tau
    }

    pub fn duration(&self) -> f64 {
        self.pieces.iter().map(|p| p.tau).sum()
    }

    /// Map a global time to `(piece index, local time)`. Interior piece
    /// boundaries resolve to the *later* piece; times outside `[0, T]`
    /// clamp to the ends.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let tau = self.piece_duration();
        if t <= 0.0 {
            return (0, 0.0);
        }
        let idx = (t / tau).floor() as usize;
        if idx >= self.pieces.len() {
            return (self.pieces.len() - 1, tau);
        }
        (idx, t - idx as f64 * tau)
    }

    /// Evaluate the c-th time derivative at global time `t`.
    pub fn eval(&self, t: f64, c: usize) -> Vec2 {
        let (idx, local) = self.locate(t);
        self.pieces[idx].eval_derivative(local, c)
    }

    /// Flat control-point count, `M * (n + 1)`.
    pub fn point_count(&self) -> usize {
        self.pieces.len() * (self.degree() + 1)
    }

    /// Stacked control points in piece order.
    pub fn flat_points(&self) -> Vec<Vec2> {
        self.pieces.iter().flat_map(|p| p.points.iter().copied()).collect()
    }

    /// Rebuild a spline from stacked points (inverse of `flat_points`).
    pub fn from_flat_points(points: &[Vec2], m_pieces: usize, degree: usize, tau: f64) -> Result<Self> {
        if points.len() != m_pieces * (degree + 1) {
            return Err(Error::Domain(format!(
                "expected {} stacked points, got {}",
                m_pieces * (degree + 1),
                points.len()
            )));
        }
        let mut pieces = Vec::with_capacity(m_pieces);
        for m in 0..m_pieces {
            let chunk = points[m * (degree + 1)..(m + 1) * (degree + 1)].to_vec();
            pieces.push(BezierPiece::new(chunk, tau)?);
        }
        BezierSpline::new(pieces)
    }
}

/// One sampling row: the value of a derivative at one sample time as a
/// linear functional of the spline's stacked control points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    /// Piece the sample falls in.
    pub piece: usize,
    /// `(flat control-point index, coefficient)`; flat index is
    /// `piece * (n + 1) + j`.
    pub entries: Vec<(usize, f64)>,
}

impl SampleRow {
    /// Apply the row to stacked control points.
    pub fn apply(&self, points: &[Vec2]) -> Vec2 {
        let mut acc = Vec2::ZERO;
        for &(idx, w) in &self.entries {
            acc += points[idx].scale(w);
        }
        acc
    }
}

/// Precomputed sampling of a horizon: for each derivative order `c` in
/// `0..=max_order` and each of `K` sample times `t_k = k * sigma`, the
/// linear row mapping stacked control points to the sampled value. The map
/// depends only on the spline layout, so the planner builds it once.
#[derive(Debug, Clone)]
pub struct SampleMap {
    pub m_pieces: usize,
    pub degree: usize,
    pub tau: f64,
    pub sigma: f64,
    /// Sample times, `times[k] = k * sigma`.
    pub times: Vec<f64>,
    /// `rows[c][k]` is the row for derivative order `c` at `times[k]`.
    pub rows: Vec<Vec<SampleRow>>,
}

/// Build a [`SampleMap`] with `count` samples spaced `sigma` apart.
/// Requires the last sample to land within the horizon,
/// `(count - 1) * sigma <= m_pieces * tau`.
pub fn build_sample_map(
    m_pieces: usize,
    degree: usize,
    tau: f64,
    sigma: f64,
    count: usize,
    max_order: usize,
) -> Result<SampleMap> {
    if m_pieces == 0 || count == 0 {
        return Err(Error::Domain("sample map needs at least one piece and one sample".into()));
    }
    if !(tau > 0.0) || !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "piece duration and sample spacing must be positive, got tau={tau}, sigma={sigma}"
        )));
    }
    let horizon = m_pieces as f64 * tau;
    let last = (count - 1) as f64 * sigma;
    if last > horizon + 1e-9 {
        return Err(Error::Domain(format!(
            "last sample t={last} exceeds horizon {horizon}"
        )));
    }
    let times: Vec<f64> = (0..count).map(|k| k as f64 * sigma).collect();
    let mut rows = Vec::with_capacity(max_order + 1);
    for c in 0..=max_order {
        let mut order_rows = Vec::with_capacity(count);
        for &t in &times {
            // Interior boundaries resolve to the later piece; the horizon
            // end stays on the last piece.
            let mut piece = (t / tau).floor() as usize;
            let mut local = t - piece as f64 * tau;
            if piece >= m_pieces {
                piece = m_pieces - 1;
                local = tau;
            }
            let coeffs = derivative_basis_row(degree, tau, local / tau, c);
            let base = piece * (degree + 1);
            let entries = coeffs
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(j, w)| (base + j, *w))
                .collect();
            order_rows.push(SampleRow { piece, entries });
        }
        rows.push(order_rows);
    }
    Ok(SampleMap { m_pieces, degree, tau, sigma, times, rows })
}
