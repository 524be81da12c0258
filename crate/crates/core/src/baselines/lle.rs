use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LleParams {
    pub k_neighbors: usize,
    pub d_out: usize,
    pub reg: f64,
}

impl Default for LleParams {
    fn default() -> Self {
        Self {
            k_neighbors: 12,
            d_out: 4,
            reg: 1e-3,
        }
    }
}

/// Neighbour lists and reconstruction weights, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct LleWeights {
    pub neighbors: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
}

fn points(x: &DataMatrix) -> (usize, Vec<f64>) {
    let r = x.to_real_stacked();
    (r.rows(), r.as_real().expect("real view").to_vec())
}

fn knn(dim: usize, flat: &[f64], k_total: usize, k: usize) -> Vec<Vec<(usize, f64)>> {
    let p = |i: usize| &flat[i * dim..(i + 1) * dim];
    (0..k_total)
        .into_par_iter()
        .map(|i| {
            let pi = p(i);
            let mut d: Vec<(usize, f64)> = (0..k_total)
                .filter(|&j| j != i)
                .map(|j| (j, pi.iter().zip(p(j)).map(|(a, b)| (a - b) * (a - b)).sum()))
                .collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            d
        })
        .collect()
}

fn components(k_total: usize, neighbors: &[Vec<usize>]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..k_total).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sizes = vec![0usize; k_total];
    for i in 0..k_total {
        let root = find(&mut parent, i);
        sizes[root] += 1;
    }
    sizes.into_iter().filter(|&s| s > 0).collect()
}

/// k-nearest-neighbour graph and regularized local reconstruction weights.
pub fn lle_weights(x: &DataMatrix, k_neighbors: usize, reg: f64) -> Result<LleWeights> {
    let k_total = x.cols();
    if k_neighbors == 0 || k_neighbors >= k_total {
        return Err(RfError::InvalidSpec(format!(
            "k_neighbors must be in [1, {}), got {k_neighbors}",
            k_total
        )));
    }
    let (dim, flat) = points(x);
    let nn = knn(dim, &flat, k_total, k_neighbors);
    let neighbors: Vec<Vec<usize>> = nn.iter().map(|v| v.iter().map(|p| p.0).collect()).collect();
    let sizes = components(k_total, &neighbors);
    if sizes.len() > 1 {
        return Err(RfError::Connectivity { sizes });
    }
    let weights = nn
        .par_iter()
        .enumerate()
        .map(|(i, nb)| {
            if let Some(&(j, _)) = nb.iter().find(|p| p.1 == 0.0) {
                return Err(RfError::Numeric {
                    point: i,
                    reason: format!("duplicate of point {j}"),
                });
            }
            let xi = &flat[i * dim..(i + 1) * dim];
            let z = DMatrix::from_fn(dim, nb.len(), |r, c| flat[nb[c].0 * dim + r] - xi[r]);
            let mut g = z.transpose() * &z;
            let bump = reg * g.trace() / nb.len() as f64;
            for d in 0..nb.len() {
                g[(d, d)] += bump;
            }
            let ones = DVector::from_element(nb.len(), 1.0);
            let w = g
                .clone()
                .cholesky()
                .map(|c| c.solve(&ones))
                .or_else(|| g.lu().solve(&ones))
                .ok_or_else(|| RfError::Numeric {
                    point: i,
                    reason: "singular local Gram matrix".into(),
                })?;
            let s = w.sum();
            if !s.is_finite() || s.abs() < f64::EPSILON {
                return Err(RfError::Numeric {
                    point: i,
                    reason: "weights do not normalize".into(),
                });
            }
            Ok((w / s).iter().copied().collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(LleWeights { neighbors, weights })
}

/// Classical LLE: bottom eigenvectors of `(I−W)ᵀ(I−W)` without the constant
/// one, each output row scaled to unit variance and signed so its
/// largest-magnitude entry is positive.
pub fn lle_embed(x: &DataMatrix, params: &LleParams) -> Result<DataMatrix> {
    let k_total = x.cols();
    if params.d_out == 0 || params.d_out + 1 > k_total {
        return Err(RfError::InvalidSpec(format!(
            "d_out must be in [1, {}), got {}",
            k_total,
            params.d_out
        )));
    }
    let w = lle_weights(x, params.k_neighbors, params.reg)?;
    let mut m = DMatrix::<f64>::identity(k_total, k_total);
    for (i, (nb, wi)) in w.neighbors.iter().zip(&w.weights).enumerate() {
        for (&j, &a) in nb.iter().zip(wi) {
            m[(i, j)] -= a;
            m[(j, i)] -= a;
            for (&l, &b) in nb.iter().zip(wi) {
                m[(j, l)] += a * b;
            }
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..k_total).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = DMatrix::zeros(params.d_out, k_total);
    for (row, &src) in order.iter().skip(1).take(params.d_out).enumerate() {
        let v = eig.eigenvectors.column(src);
        let mean = v.mean();
        let centered: Vec<f64> = v.iter().map(|a| a - mean).collect();
        let var = centered.iter().map(|a| a * a).sum::<f64>() / k_total as f64;
        if !(var > 0.0) {
            return Err(RfError::Numeric {
                point: 0,
                reason: format!("embedding coordinate {row} is constant"),
            });
        }
        let peak = centered.iter().cloned().fold(0.0, |acc: f64, a| if a.abs() > acc.abs() { a } else { acc });
        let s = peak.signum() / var.sqrt();
        for (c, a) in centered.iter().enumerate() {
            out[(row, c)] = a * s;
        }
    }
    Ok(DataMatrix::from_nalgebra(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::procrustes_distance;
    use crate::rng::SplitMix64;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SplitMix64::new(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.next_f64() - 0.5)
    }

    fn plane_in_r10() -> (DMatrix<f64>, DMatrix<f64>) {
        let side = 15;
        let coords = DMatrix::from_fn(2, side * side, |r, c| {
            if r == 0 {
                (c % side) as f64
            } else {
                (c / side) as f64
            }
        });
        let basis = random(10, 2, 7).qr().q();
        (coords.clone(), basis * coords)
    }

    #[test]
    fn weights_sum_to_one() {
        let x = DataMatrix::from_nalgebra(&random(5, 60, 1));
        let w = lle_weights(&x, 8, 1e-3).unwrap();
        for row in &w.weights {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn recovers_plane() {
        let (coords, x) = plane_in_r10();
        let params = LleParams {
            k_neighbors: 12,
            d_out: 2,
            reg: 1e-3,
        };
        let y = lle_embed(&DataMatrix::from_nalgebra(&x), &params).unwrap();
        let d = procrustes_distance(&y, &DataMatrix::from_nalgebra(&coords), true).unwrap();
        assert!(d <= 0.05, "{d}");
    }

    #[test]
    fn line_ordering_on_complete_graph() {
        let k = 7;
        let x = DMatrix::from_fn(3, k + 1, |r, c| (c as f64).powf(1.3) * [1.0, -2.0, 0.5][r]);
        let params = LleParams {
            k_neighbors: k,
            d_out: 1,
            reg: 1e-3,
        };
        let y = lle_embed(&DataMatrix::from_nalgebra(&x), &params).unwrap();
        let v = y.as_real().unwrap();
        let up = v.windows(2).all(|w| w[0] < w[1]);
        let down = v.windows(2).all(|w| w[0] > w[1]);
        assert!(up || down, "{v:?}");
    }

    #[test]
    fn rotation_invariant() {
        let x = random(6, 80, 2);
        let q = random(6, 6, 3).qr().q();
        let params = LleParams {
            k_neighbors: 10,
            d_out: 3,
            reg: 1e-3,
        };
        let a = lle_embed(&DataMatrix::from_nalgebra(&x), &params).unwrap();
        let b = lle_embed(&DataMatrix::from_nalgebra(&(q * x)), &params).unwrap();
        assert!(procrustes_distance(&a, &b, true).unwrap() <= 1e-6);
    }

    #[test]
    fn duplicates_rejected() {
        let mut x = random(3, 20, 4);
        let c = x.column(0).into_owned();
        x.set_column(5, &c);
        match lle_embed(&DataMatrix::from_nalgebra(&x), &LleParams { k_neighbors: 4, d_out: 2, reg: 1e-3 }) {
            Err(RfError::Numeric { point, .. }) => assert!(point == 0 || point == 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn disconnected_graph_rejected() {
        let mut x = random(2, 20, 5);
        for c in 10..20 {
            x[(0, c)] += 100.0;
        }
        match lle_weights(&DataMatrix::from_nalgebra(&x), 3, 1e-3) {
            Err(RfError::Connectivity { sizes }) => assert_eq!(sizes, vec![10, 10]),
            other => panic!("{other:?}"),
        }
    }
}
