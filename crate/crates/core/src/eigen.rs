//! Eigen-decomposition of symmetric 3×3 matrices.
//!
//! Eigenvalues come from the trigonometric closed form. Eigenvectors come
//! from cross products of the rows of `A - λI`; when two eigenvalues are
//! too close for that to be well conditioned the cyclic Jacobi method is
//! used instead.

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen {
    /// Descending.
    pub values: [f64; 3],
    /// `vectors[k]` is the unit eigenvector of `values[k]`.
    pub vectors: [[f64; 3]; 3],
}

const GAP_TOL: f64 = 1e-6;

pub fn sym3_eigen(a: &Mat3) -> SymEigen {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return SymEigen {
            values: [0.0; 3],
            vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
    }
    let values = closed_form_values(a);
    let gap = (values[0] - values[1]).min(values[1] - values[2]);
    if gap <= GAP_TOL * scale {
        return jacobi(a);
    }
    let u0 = match null_vector(a, values[0]) {
        Some(v) => v,
        None => return jacobi(a),
    };
    let u2 = match null_vector(a, values[2]) {
        Some(v) => v,
        None => return jacobi(a),
    };
    let u1 = normalize(cross(&u2, &u0));
    SymEigen {
        values,
        vectors: [u0, u1, u2],
    }
}

fn closed_form_values(a: &Mat3) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if p1 == 0.0 {
        let mut d = [a[0][0], a[1][1], a[2][2]];
        d.sort_by(|x, y| y.total_cmp(x));
        return d;
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = *a;
    for (i, row) in b.iter_mut().enumerate() {
        row[i] -= q;
        for v in row.iter_mut() {
            *v /= p;
        }
    }
    let r = (det(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e0 = q + 2.0 * p * phi.cos();
    let e2 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e1 = 3.0 * q - e0 - e2;
    [e0, e1, e2]
}

fn null_vector(a: &Mat3, lambda: f64) -> Option<[f64; 3]> {
    let mut m = *a;
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let cands = [
        cross(&m[0], &m[1]),
        cross(&m[0], &m[2]),
        cross(&m[1], &m[2]),
    ];
    let best = cands
        .iter()
        .max_by(|x, y| norm2(x).total_cmp(&norm2(y)))
        .unwrap();
    let row_scale = m.iter().map(norm2).fold(0.0f64, f64::max);
    if norm2(best) <= 1e-20 * row_scale * row_scale || row_scale == 0.0 {
        return None;
    }
    Some(normalize(*best))
}

/// Cyclic Jacobi rotations; robust for repeated eigenvalues.
pub fn jacobi(a: &Mat3) -> SymEigen {
    let mut m = *a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| m[y][y].total_cmp(&m[x][x]));
    let col = |k: usize| normalize([v[0][k], v[1][k], v[2][k]]);
    SymEigen {
        values: [
            m[order[0]][order[0]],
            m[order[1]][order[1]],
            m[order[2]][order[2]],
        ],
        vectors: [col(order[0]), col(order[1]), col(order[2])],
    }
}

fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm2(a: &[f64; 3]) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = norm2(&a).sqrt();
    if n == 0.0 {
        return a;
    }
    [a[0] / n, a[1] / n, a[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &Mat3, e: &SymEigen, tol: f64) {
        for k in 0..3 {
            let u = e.vectors[k];
            for r in 0..3 {
                let au = a[r][0] * u[0] + a[r][1] * u[1] + a[r][2] * u[2];
                assert!((au - e.values[k] * u[r]).abs() < tol, "{a:?} {e:?}");
            }
            assert!((norm2(&u) - 1.0).abs() < 1e-9);
        }
        assert!(e.values[0] >= e.values[1] && e.values[1] >= e.values[2]);
    }

    #[test]
    fn diagonal() {
        let a = [[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let e = sym3_eigen(&a);
        assert_eq!(e.values, [3.0, 2.0, 1.0]);
        check(&a, &e, 1e-12);
    }

    #[test]
    fn generic_matrix() {
        let a = [[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]];
        check(&a, &sym3_eigen(&a), 1e-10);
    }

    #[test]
    fn repeated_eigenvalue_falls_back() {
        // rank one: eigenvalues (3, 0, 0)
        let a = [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let e = sym3_eigen(&a);
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        check(&a, &e, 1e-10);
    }

    #[test]
    fn jacobi_agrees_with_closed_form() {
        let a = [[2.0, -0.3, 0.7], [-0.3, 1.0, 0.2], [0.7, 0.2, 0.5]];
        let c = sym3_eigen(&a);
        let j = jacobi(&a);
        for k in 0..3 {
            assert!((c.values[k] - j.values[k]).abs() < 1e-12);
        }
    }
}
