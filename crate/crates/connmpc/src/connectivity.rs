//! Weighted proximity graphs and their Laplacian spectra.
//!
//! Robots within communication range `R` of each other share an edge whose
//! weight decays smoothly from 1 (coincident) to 0 (at range). The team's
//! algebraic connectivity is the second-smallest eigenvalue `lambda_2` of
//! the weighted Laplacian; it is positive exactly when the graph is
//! connected, and its gradient with respect to robot positions (through
//! the Fiedler eigenvector) is what the barrier constraints push on.
//!
//! Eigenproblems here are tiny (one row per robot), so a cyclic Jacobi
//! iteration is plenty and keeps the crate dependency-free.

use crate::linalg::{Mat, Vec2};
use crate::{Error, Result};

/// Decay scale giving edge weight exactly 1 at zero distance:
/// `varsigma = R^4 / ln 2`.
pub fn default_varsigma(r: f64) -> f64 {
    r.powi(4) / std::f64::consts::LN_2
}

/// Edge weight between two positions:
/// `exp((R^2 - d^2)^2 / varsigma) - 1` for `d <= R`, zero beyond range.
/// Continuous at `d = R`, strictly decreasing in `d` on `[0, R]`.
pub fn edge_weight(pi: Vec2, pj: Vec2, r: f64, varsigma: f64) -> f64 {
    let d_sq = (pi - pj).norm_sq();
    let r_sq = r * r;
    if d_sq > r_sq {
        return 0.0;
    }
    let gap = r_sq - d_sq;
    (gap * gap / varsigma).exp() - 1.0
}

/// Gradient of [`edge_weight`] with respect to `pi`:
/// `-(4 / varsigma) * exp((R^2 - d^2)^2 / varsigma) * (R^2 - d^2) * (pi - pj)`
/// inside range, zero beyond. (The gradient with respect to `pj` is the
/// negative.) Points from `pi` toward `pj` while in range: closing the
/// gap raises the weight.
pub fn edge_weight_gradient(pi: Vec2, pj: Vec2, r: f64, varsigma: f64) -> Vec2 {
    let rel = pi - pj;
    let d_sq = rel.norm_sq();
    let r_sq = r * r;
    if d_sq > r_sq {
        return Vec2::ZERO;
    }
    let gap = r_sq - d_sq;
    rel.scale(-(4.0 / varsigma) * (gap * gap / varsigma).exp() * gap)
}

/// Weighted adjacency and Laplacian matrices for a set of positions.
pub fn weighted_laplacian(positions: &[Vec2], r: f64, varsigma: f64) -> (Mat, Mat) {
    let n = positions.len();
    let mut adj = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = edge_weight(positions[i], positions[j], r, varsigma);
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
    }
    let mut lap = Mat::zeros(n, n);
    for i in 0..n {
        let degree: f64 = adj.row(i).iter().sum();
        lap.set(i, i, degree);
        for j in 0..n {
            if j != i {
                lap.set(i, j, -adj.get(i, j));
            }
        }
    }
    (adj, lap)
}

/// Eigendecomposition of a symmetric matrix: `values` ascending, with
/// `vectors` column `k` the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl EigenDecomposition {
    /// Column `k` of the eigenvector matrix.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.rows).map(|i| self.vectors.get(i, k)).collect()
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi
/// rotations. Rejects non-square or visibly asymmetric input. Intended for
/// the small matrices this crate produces (one row per robot).
pub fn symmetric_eigensolve(s: &Mat) -> Result<EigenDecomposition> {
    if s.rows != s.cols {
        return Err(Error::Domain(format!(
            "eigensolve needs a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    let n = s.rows;
    if n == 0 {
        return Err(Error::Domain("eigensolve needs a non-empty matrix".into()));
    }
    let scale = s.max_abs().max(1.0);
    if s.max_asymmetry() > 1e-9 * scale {
        return Err(Error::Domain(format!(
            "eigensolve input is not symmetric (max |a_ij - a_ji| = {})",
            s.max_asymmetry()
        )));
    }
    let mut a = s.clone();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut v = Mat::identity(n);
    let off = |a: &Mat| -> f64 {
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += a.get(i, j) * a.get(i, j);
            }
        }
        sum.sqrt()
    };
    for _sweep in 0..64 {
        if off(&a) <= 1e-12 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // Rotate rows/columns p and q of A.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - sn * akq);
                    a.set(k, q, sn * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - sn * aqk);
                    a.set(q, k, sn * apk + c * aqk);
                }
                // Accumulate the rotation into V.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// A proximity graph with its connectivity spectrum and position gradient.
#[derive(Debug, Clone)]
pub struct ConnectivityGraph {
    pub n: usize,
    pub adjacency: Mat,
    pub laplacian: Mat,
    /// Algebraic connectivity: second-smallest Laplacian eigenvalue.
    /// `+inf` for a single robot (nothing to disconnect).
    pub lambda2: f64,
    /// Unit Fiedler vector. Sign fixed so its first component of
    /// magnitude above 1e-9 is positive, which makes results reproducible
    /// across permutation-equivalent inputs.
    pub fiedler: Vec<f64>,
    /// Gradient of `lambda2` with respect to each robot position:
    /// `sum_j grad a_ij * (v_i - v_j)^2` over the Fiedler components.
    /// Valid when `lambda2` is a simple eigenvalue; see `eigen_gap`.
    pub lambda2_gradient: Vec<Vec2>,
    /// Spectral gap `lambda_3 - lambda_2` (`+inf` when fewer than three
    /// robots). The gradient above is only trustworthy when this is
    /// bounded away from zero.
    pub eigen_gap: f64,
}

/// Build the proximity graph for a team. Errors on an empty team; a
/// single robot yields the trivial always-connected graph.
pub fn build_graph(positions: &[Vec2], r: f64, varsigma: f64) -> Result<ConnectivityGraph> {
    let n = positions.len();
    if n == 0 {
        return Err(Error::Domain("connectivity graph needs at least one robot".into()));
    }
    if !(r > 0.0) || !(varsigma > 0.0) {
        return Err(Error::Domain(format!(
            "communication range and varsigma must be positive, got r={r}, varsigma={varsigma}"
        )));
    }
    if n == 1 {
        return Ok(ConnectivityGraph {
            n,
            adjacency: Mat::zeros(1, 1),
            laplacian: Mat::zeros(1, 1),
            lambda2: f64::INFINITY,
            fiedler: vec![1.0],
            lambda2_gradient: vec![Vec2::ZERO],
            eigen_gap: f64::INFINITY,
        });
    }
    let (adjacency, laplacian) = weighted_laplacian(positions, r, varsigma);
    let eig = symmetric_eigensolve(&laplacian)?;
    let lambda2 = eig.values[1];
    let mut fiedler = eig.vector(1);
    fix_sign(&mut fiedler);
    let eigen_gap = if n >= 3 { eig.values[2] - lambda2 } else { f64::INFINITY };
    let mut lambda2_gradient = vec![Vec2::ZERO; n];
    for i in 0..n {
        let mut g = Vec2::ZERO;
        for j in 0..n {
            if j == i {
                continue;
            }
            let dv = fiedler[i] - fiedler[j];
            if dv == 0.0 {
                continue;
            }
            g += edge_weight_gradient(positions[i], positions[j], r, varsigma).scale(dv * dv);
        }
        lambda2_gradient[i] = g;
    }
    Ok(ConnectivityGraph {
        n,
        adjacency,
        laplacian,
        lambda2,
        fiedler,
        lambda2_gradient,
        eigen_gap,
    })
}

/// Spectrum-only construction from an explicit adjacency matrix; positions
/// are unknown, so the gradient is left empty. Used to cross-check the
/// spectral pipeline against graphs with known eigenvalues.
pub fn graph_from_adjacency(adjacency: &Mat) -> Result<ConnectivityGraph> {
    if adjacency.rows != adjacency.cols || adjacency.rows == 0 {
        return Err(Error::Domain("adjacency must be square and non-empty".into()));
    }
    if adjacency.max_asymmetry() > 1e-9 * adjacency.max_abs().max(1.0) {
        return Err(Error::Domain("adjacency must be symmetric".into()));
    }
    let n = adjacency.rows;
    let mut laplacian = Mat::zeros(n, n);
    for i in 0..n {
        let degree: f64 = adjacency.row(i).iter().sum();
        laplacian.set(i, i, degree);
        for j in 0..n {
            if j != i {
                laplacian.set(i, j, -adjacency.get(i, j));
            }
        }
    }
    if n == 1 {
        return Ok(ConnectivityGraph {
            n,
            adjacency: adjacency.clone(),
            laplacian,
            lambda2: f64::INFINITY,
            fiedler: vec![1.0],
            lambda2_gradient: Vec::new(),
            eigen_gap: f64::INFINITY,
        });
    }
    let eig = symmetric_eigensolve(&laplacian)?;
    let lambda2 = eig.values[1];
    let mut fiedler = eig.vector(1);
    fix_sign(&mut fiedler);
    let eigen_gap = if n >= 3 { eig.values[2] - lambda2 } else { f64::INFINITY };
    Ok(ConnectivityGraph {
        n,
        adjacency: adjacency.clone(),
        laplacian,
        lambda2,
        fiedler,
        lambda2_gradient: Vec::new(),
        eigen_gap,
    })
}

fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > 1e-9 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Breadth-first connectivity over the unweighted proximity graph
/// (an edge exists when `d <= r`, boundary inclusive). Teams of zero or
/// one robot count as connected.
pub fn is_bfs_connected(positions: &[Vec2], r: f64) -> bool {
    let n = positions.len();
    if n <= 1 {
        return true;
    }
    let r_sq = r * r;
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0);
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && (positions[i] - positions[j]).norm_sq() <= r_sq {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const R: f64 = 8.0;

    fn vs() -> f64 {
        default_varsigma(R)
    }

    #[test]
    fn weight_is_one_at_zero_distance_with_default_varsigma() {
        let w = edge_weight(Vec2::ZERO, Vec2::ZERO, R, vs());
        assert!((w - 1.0).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn weight_vanishes_at_and_beyond_range() {
        let at_range = edge_weight(Vec2::ZERO, Vec2::new(R, 0.0), R, vs());
        assert_eq!(at_range, 0.0);
        let beyond = edge_weight(Vec2::ZERO, Vec2::new(1.5 * R, 0.0), R, vs());
        assert_eq!(beyond, 0.0);
        let just_inside = edge_weight(Vec2::ZERO, Vec2::new(0.999 * R, 0.0), R, vs());
        assert!(just_inside > 0.0 && just_inside < 1e-3);
    }

    #[test]
    fn weight_decreases_with_distance() {
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let d = k as f64 / 40.0 * R;
            let w = edge_weight(Vec2::ZERO, Vec2::new(d, 0.0), R, vs());
            assert!(w < prev, "weight not decreasing at d={d}");
            prev = w;
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let pj = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let dir = rng.gen_range(0.0..std::f64::consts::TAU);
            let dist = rng.gen_range(0.3..0.97 * R);
            let pi = pj + Vec2::new(dir.cos(), dir.sin()).scale(dist);
            let g = edge_weight_gradient(pi, pj, R, vs());
            let fd_x = (edge_weight(pi + Vec2::new(h, 0.0), pj, R, vs())
                - edge_weight(pi - Vec2::new(h, 0.0), pj, R, vs()))
                / (2.0 * h);
            let fd_y = (edge_weight(pi + Vec2::new(0.0, h), pj, R, vs())
                - edge_weight(pi - Vec2::new(0.0, h), pj, R, vs()))
                / (2.0 * h);
            let fd = Vec2::new(fd_x, fd_y);
            assert!(
                (g - fd).norm() <= 1e-6 * (1.0 + fd.norm()),
                "analytic {g:?} vs fd {fd:?} at d={dist}"
            );
        }
    }

    #[test]
    fn weight_gradient_zero_out_of_range() {
        let g = edge_weight_gradient(Vec2::ZERO, Vec2::new(2.0 * R, 0.0), R, vs());
        assert_eq!(g, Vec2::ZERO);
    }

    #[test]
    fn gradient_points_toward_neighbor() {
        // Closing distance raises the weight, so the gradient at p_i points
        // from p_i toward p_j.
        let pi = Vec2::new(3.0, 0.0);
        let pj = Vec2::new(-1.0, 0.0);
        let g = edge_weight_gradient(pi, pj, R, vs());
        assert!(g.x < 0.0 && g.y == 0.0);
    }

    #[test]
    fn eigensolve_identity_and_diagonal() {
        let eig = symmetric_eigensolve(&Mat::identity(4)).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let mut d = Mat::zeros(3, 3);
        d.set(0, 0, 5.0);
        d.set(1, 1, -2.0);
        d.set(2, 2, 1.0);
        let eig = symmetric_eigensolve(&d).unwrap();
        assert_eq!(eig.values, vec![-2.0, 1.0, 5.0]);
    }

    #[test]
    fn eigensolve_reconstructs_random_symmetric_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [2usize, 3, 6, 10] {
            let mut s = Mat::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = rng.gen_range(-2.0..2.0);
                    s.set(i, j, v);
                    s.set(j, i, v);
                }
            }
            let eig = symmetric_eigensolve(&s).unwrap();
            // A v_k = lambda_k v_k for every pair.
            for k in 0..n {
                let v = eig.vector(k);
                let mut av = vec![0.0; n];
                s.mul_vec(&v, &mut av);
                for i in 0..n {
                    assert!(
                        (av[i] - eig.values[k] * v[i]).abs() < 1e-9,
                        "n={n} k={k}: residual {}",
                        (av[i] - eig.values[k] * v[i]).abs()
                    );
                }
            }
            // Columns are orthonormal.
            for a in 0..n {
                let va = eig.vector(a);
                for b in a..n {
                    let vb = eig.vector(b);
                    let dot: f64 = va.iter().zip(vb.iter()).map(|(x, y)| x * y).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-9);
                }
            }
            // Values ascend.
            for k in 1..n {
                assert!(eig.values[k] >= eig.values[k - 1]);
            }
        }
    }

    #[test]
    fn eigensolve_rejects_asymmetric_input() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![0.5, 1.0]]);
        assert!(symmetric_eigensolve(&m).is_err());
        let rect = Mat::zeros(2, 3);
        assert!(symmetric_eigensolve(&rect).is_err());
    }

    #[test]
    fn complete_graph_lambda2_equals_team_size() {
        // K_n with unit weights has Laplacian spectrum {0, n, ..., n}.
        for n in [3usize, 5, 8] {
            let mut adj = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        adj.set(i, j, 1.0);
                    }
                }
            }
            let g = graph_from_adjacency(&adj).unwrap();
            assert!((g.lambda2 - n as f64).abs() < 1e-9, "n={n}: {}", g.lambda2);
            assert!((g.eigen_gap - 0.0).abs() < 1e-9);
        }
    }

    #[test]
    fn path_graph_spectrum_is_known() {
        // P_3 with unit weights: Laplacian eigenvalues {0, 1, 3}.
        let mut adj = Mat::zeros(3, 3);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        adj.set(1, 2, 1.0);
        adj.set(2, 1, 1.0);
        let g = graph_from_adjacency(&adj).unwrap();
        assert!((g.lambda2 - 1.0).abs() < 1e-9);
        assert!((g.eigen_gap - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_robots_have_closed_form_connectivity() {
        // L = [[a, -a], [-a, a]] has eigenvalues {0, 2a}; the Fiedler
        // vector is (1, -1)/sqrt(2), so grad lambda2 at robot 0 is
        // 2 * grad a.
        let p0 = Vec2::new(1.0, 2.0);
        let p1 = Vec2::new(4.0, -1.0);
        let g = build_graph(&[p0, p1], R, vs()).unwrap();
        let a = edge_weight(p0, p1, R, vs());
        assert!((g.lambda2 - 2.0 * a).abs() < 1e-12);
        let expect = edge_weight_gradient(p0, p1, R, vs()).scale(2.0);
        assert!((g.lambda2_gradient[0] - expect).norm() < 1e-9);
        assert!((g.lambda2_gradient[1] + expect).norm() < 1e-9);
    }

    #[test]
    fn lambda2_gradient_matches_finite_differences() {
        // Perturb each coordinate of each robot and compare d lambda2
        // against the analytic gradient. Geometry chosen with a clear
        // spectral gap so lambda2 is simple.
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(5.0, 1.0),
            Vec2::new(2.5, 4.0),
            Vec2::new(7.0, 5.0),
        ];
        let g = build_graph(&positions, R, vs()).unwrap();
        assert!(g.eigen_gap > 1e-3, "test geometry must have a simple lambda2");
        let h = 1e-6;
        for i in 0..positions.len() {
            for k in 0..2 {
                let mut plus = positions.clone();
                let mut minus = positions.clone();
                let delta = if k == 0 { Vec2::new(h, 0.0) } else { Vec2::new(0.0, h) };
                plus[i] += delta;
                minus[i] -= delta;
                let lp = build_graph(&plus, R, vs()).unwrap().lambda2;
                let lm = build_graph(&minus, R, vs()).unwrap().lambda2;
                let fd = (lp - lm) / (2.0 * h);
                let an = g.lambda2_gradient[i].coord(k);
                assert!(
                    (fd - an).abs() < 1e-5 * (1.0 + fd.abs()),
                    "robot {i} coord {k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn spectral_and_bfs_connectivity_agree() {
        // Random teams, regenerated when any pair sits within 1% of the
        // range boundary (where the weight is numerically zero but the
        // unweighted edge still exists).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 200 {
            let n = rng.gen_range(2..=8);
            let span = rng.gen_range(0.5 * R..3.0 * R);
            let positions: Vec<Vec2> = (0..n)
                .map(|_| Vec2::new(rng.gen_range(-span..span), rng.gen_range(-span..span)))
                .collect();
            let near_boundary = (0..n).any(|i| {
                (i + 1..n).any(|j| {
                    let d = (positions[i] - positions[j]).norm();
                    (d - R).abs() < 0.01 * R
                })
            });
            if near_boundary {
                continue;
            }
            checked += 1;
            let spectral = build_graph(&positions, R, vs()).unwrap().lambda2 > 1e-9;
            let bfs = is_bfs_connected(&positions, R);
            assert_eq!(spectral, bfs, "disagreement on {positions:?}");
        }
    }

    #[test]
    fn permutation_equivariance() {
        let positions = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.5),
            Vec2::new(1.0, 5.0),
            Vec2::new(6.0, 4.0),
            Vec2::new(3.0, 2.0),
        ];
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<Vec2> = perm.iter().map(|&i| positions[i]).collect();
        let g0 = build_graph(&positions, R, vs()).unwrap();
        let g1 = build_graph(&permuted, R, vs()).unwrap();
        assert!((g0.lambda2 - g1.lambda2).abs() < 1e-9);
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            let diff = g1.lambda2_gradient[new_idx] - g0.lambda2_gradient[old_idx];
            assert!(diff.norm() < 1e-8, "gradient mismatch for robot {old_idx}");
        }
    }

    #[test]
    fn chain_breaks_when_middle_robot_leaves() {
        let spacing = 0.9 * R;
        let chain: Vec<Vec2> = (0..4).map(|i| Vec2::new(i as f64 * spacing, 0.0)).collect();
        let g = build_graph(&chain, R, vs()).unwrap();
        assert!(g.lambda2 > 1e-9);
        assert!(is_bfs_connected(&chain, R));
        let mut broken = chain.clone();
        broken[2].y += 2.0 * R;
        let g = build_graph(&broken, R, vs()).unwrap();
        assert!(g.lambda2.abs() <= 1e-9);
        assert!(!is_bfs_connected(&broken, R));
    }

    #[test]
    fn bfs_boundary_is_inclusive() {
        let pair = [Vec2::ZERO, Vec2::new(R, 0.0)];
        assert!(is_bfs_connected(&pair, R));
        let apart = [Vec2::ZERO, Vec2::new(R + 1e-9, 0.0)];
        assert!(!is_bfs_connected(&apart, R));
    }

    #[test]
    fn single_robot_is_trivially_connected() {
        let g = build_graph(&[Vec2::new(3.0, 3.0)], R, vs()).unwrap();
        assert_eq!(g.lambda2, f64::INFINITY);
        assert_eq!(g.fiedler, vec![1.0]);
        assert_eq!(g.lambda2_gradient, vec![Vec2::ZERO]);
        assert!(build_graph(&[], R, vs()).is_err());
    }

    #[test]
    fn fiedler_sign_is_deterministic() {
        let positions = vec![Vec2::ZERO, Vec2::new(6.0, 0.0), Vec2::new(3.0, 4.0)];
        let g = build_graph(&positions, R, vs()).unwrap();
        let first_nonzero = g.fiedler.iter().find(|v| v.abs() > 1e-9).unwrap();
        assert!(*first_nonzero > 0.0);
    }
}
