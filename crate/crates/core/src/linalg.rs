//! Small dense least-squares solvers (a handful of unknowns).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RankDeficient;

const RANK_TOL: f64 = 1e-10;

/// Minimizes `||A x - b||` by Householder QR. `rows` is row-major `m x k`.
pub(crate) fn lstsq(rows: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, RankDeficient> {
    let m = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if k == 0 {
        return Ok(Vec::new());
    }
    if m < k {
        return Err(RankDeficient);
    }
    // column-major copy
    let mut a: Vec<Vec<f64>> = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut rhs = b.to_vec();
    let scale = a
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(RankDeficient);
    }

    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * scale {
            return Err(RankDeficient);
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j) {
                let dot: f64 = v.iter().zip(&col[j..]).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&rhs[j..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in rhs[j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
    }

    let mut x = vec![0.0; k];
    for j in (0..k).rev() {
        let s: f64 = (j + 1..k).map(|l| a[l][j] * x[l]).sum();
        x[j] = (rhs[j] - s) / a[j][j];
    }
    Ok(x)
}

fn residual_ss(rows: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    rows.iter()
        .zip(b)
        .map(|(r, y)| {
            let p: f64 = r.iter().zip(x).map(|(a, w)| a * w).sum();
            (p - y).powi(2)
        })
        .sum()
}

/// Minimizes `||A x - b||` subject to `x >= 0` and `sum(x) = 1`.
///
/// The optimum lies in the relative interior of some face of the simplex,
/// where it is the least-squares solution on that face's affine hull. Each
/// face (non-empty support set) is solved with the sum constraint
/// eliminated and the best feasible candidate is kept. Exponential in `k`,
/// which is fine for three weights.
pub(crate) fn simplex_lstsq(rows: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, RankDeficient> {
    let k = rows.first().map_or(0, Vec::len);
    assert!(k > 0 && k < 16, "simplex solver supports 1..16 unknowns");
    let mut best: Option<(f64, Vec<f64>)> = None;

    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let last = *support.last().expect("non-empty support");
        let free = &support[..support.len() - 1];
        // x_last = 1 - sum(free): A_free' = a_j - a_last, b' = b - a_last
        let reduced: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| free.iter().map(|&j| r[j] - r[last]).collect())
            .collect();
        let target: Vec<f64> = rows.iter().zip(b).map(|(r, y)| y - r[last]).collect();
        let Ok(sol) = lstsq(&reduced, &target) else {
            continue;
        };
        let mut x = vec![0.0; k];
        for (&j, &v) in free.iter().zip(&sol) {
            x[j] = v;
        }
        x[last] = 1.0 - sol.iter().sum::<f64>();
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        for v in &mut x {
            *v = v.max(0.0);
        }
        let total: f64 = x.iter().sum();
        for v in &mut x {
            *v /= total;
        }
        let loss = residual_ss(rows, b, &x);
        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, x));
        }
    }
    best.map(|(_, x)| x).ok_or(RankDeficient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = lstsq(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        // fit y = c*x through (1,1),(2,2),(3,2): c = (1+4+6)/(1+4+9) = 11/14
        let a = vec![vec![1.0], vec![2.0], vec![3.0]];
        let x = lstsq(&a, &[1.0, 2.0, 2.0]).unwrap();
        assert!((x[0] - 11.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn collinear_columns_detected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert_eq!(lstsq(&a, &[1.0, 2.0, 3.0]), Err(RankDeficient));
        let zero = vec![vec![0.0, 1.0], vec![0.0, 2.0]];
        assert_eq!(lstsq(&zero, &[1.0, 2.0]), Err(RankDeficient));
    }

    #[test]
    fn simplex_interior_solution() {
        // exact mixture 0.2/0.3/0.5 is feasible, so it is the optimum
        let a = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.3, 0.5, 0.9],
        ];
        let w = [0.2, 0.3, 0.5];
        let b: Vec<f64> = a.iter().map(|r| r.iter().zip(&w).map(|(x, y)| x * y).sum()).collect();
        let x = simplex_lstsq(&a, &b).unwrap();
        for (xi, wi) in x.iter().zip(&w) {
            assert!((xi - wi).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_vertex_solution() {
        // targets far beyond column 0 -> all weight on column 0
        let a = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let x = simplex_lstsq(&a, &[5.0, 5.0]).unwrap();
        assert_eq!(x, vec![1.0, 0.0]);
    }
}
