//! Embedding-quality metrics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;
use crate::operator::RfOperator;
use crate::rng::SplitMix64;
use crate::Complex64;

/// Largest sample count accepted for exhaustive pair enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub delta: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub q_mean: f64,
    pub pair_count: usize,
}

impl IsometryReport {
    /// Mean-normalized distortion of a set of distance ratios `d_r / d_o`.
    pub fn from_ratios(q: &[f64]) -> Result<Self> {
        if q.is_empty() {
            return Err(RfError::InsufficientData("no pairs to compare".into()));
        }
        let (mut q_min, mut q_max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in q {
            q_min = q_min.min(v);
            q_max = q_max.max(v);
            sum += v;
        }
        let q_mean = sum / q.len() as f64;
        let (delta_lower, delta_upper) = if q_mean > 0.0 {
            (1.0 - q_min / q_mean, q_max / q_mean - 1.0)
        } else {
            // Every reduced distance is zero: total collapse.
            (1.0, 0.0)
        };
        Ok(Self {
            delta: delta_lower.max(delta_upper),
            delta_lower,
            delta_upper,
            q_min,
            q_max,
            q_mean,
            pair_count: q.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairSampling {
    Exhaustive,
    /// Uniform draws of `count` pairs `i < j`, with replacement.
    Random { count: usize, seed: u64 },
}

/// Pairwise distances of one point cloud, reusable across many embeddings.
#[derive(Clone, Debug)]
pub struct PairwiseDistances {
    k: usize,
    pairs: Option<Vec<(usize, usize)>>,
    dist: Vec<f64>,
}

fn column_slices(x: &DataMatrix) -> (usize, Vec<f64>) {
    let real = x.to_real_stacked();
    (real.rows(), real.as_real().expect("stacked view is real").to_vec())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

impl PairwiseDistances {
    pub fn new(x: &DataMatrix, sampling: PairSampling) -> Result<Self> {
        let k = x.cols();
        if k < 2 {
            return Err(RfError::InsufficientData(format!(
                "need at least 2 samples, got {k}"
            )));
        }
        let pairs = match sampling {
            PairSampling::Exhaustive => {
                if k > EXHAUSTIVE_LIMIT {
                    return Err(RfError::InvalidDimension(format!(
                        "{k} samples exceed the exhaustive limit of {EXHAUSTIVE_LIMIT}; use pair sampling"
                    )));
                }
                None
            }
            PairSampling::Random { count, seed } => {
                if count == 0 {
                    return Err(RfError::InsufficientData("pair sample count is 0".into()));
                }
                let mut rng = SplitMix64::new(seed);
                Some(
                    (0..count)
                        .map(|_| {
                            let i = rng.next_below(k as u64) as usize;
                            let mut j = rng.next_below(k as u64 - 1) as usize;
                            if j >= i {
                                j += 1;
                            }
                            (i.min(j), i.max(j))
                        })
                        .collect(),
                )
            }
        };
        let out = Self {
            k,
            dist: Self::measure(x, pairs.as_deref()),
            pairs,
        };
        let zero: Vec<(usize, usize)> = out
            .iter_pairs()
            .zip(&out.dist)
            .filter(|(_, &d)| d == 0.0)
            .map(|(p, _)| p)
            .collect();
        if !zero.is_empty() {
            return Err(RfError::DegeneratePair { pairs: zero });
        }
        Ok(out)
    }

    pub fn exhaustive(x: &DataMatrix) -> Result<Self> {
        Self::new(x, PairSampling::Exhaustive)
    }

    fn measure(x: &DataMatrix, pairs: Option<&[(usize, usize)]>) -> Vec<f64> {
        let (rows, flat) = column_slices(x);
        let col = |j: usize| &flat[j * rows..(j + 1) * rows];
        match pairs {
            None => {
                let k = x.cols();
                let per_row: Vec<Vec<f64>> = (0..k)
                    .into_par_iter()
                    .map(|i| {
                        let ci = col(i);
                        ((i + 1)..k).map(|j| sq_dist(ci, col(j)).sqrt()).collect()
                    })
                    .collect();
                per_row.concat()
            }
            Some(p) => p
                .par_iter()
                .map(|&(i, j)| sq_dist(col(i), col(j)).sqrt())
                .collect(),
        }
    }

    fn iter_pairs(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match &self.pairs {
            Some(p) => Box::new(p.iter().copied()),
            None => {
                let k = self.k;
                Box::new((0..k).flat_map(move |i| ((i + 1)..k).map(move |j| (i, j))))
            }
        }
    }

    pub fn sample_count(&self) -> usize {
        self.k
    }

    pub fn pair_count(&self) -> usize {
        self.dist.len()
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    /// Distances between the same pairs in another embedding of the samples.
    pub fn matching(&self, y: &DataMatrix) -> Result<Vec<f64>> {
        if y.cols() != self.k {
            return Err(RfError::DimensionMismatch {
                expected: self.k,
                got: y.cols(),
            });
        }
        Ok(Self::measure(y, self.pairs.as_deref()))
    }

    /// Isometry report for an embedding `y` of the same samples.
    pub fn isometry(&self, y: &DataMatrix) -> Result<IsometryReport> {
        let reduced = self.matching(y)?;
        let q: Vec<f64> = reduced.iter().zip(&self.dist).map(|(r, o)| r / o).collect();
        IsometryReport::from_ratios(&q)
    }
}

/// Exhaustive isometry constant of the embedding `x -> y` (samples as columns).
pub fn isometry_constant(x: &DataMatrix, y: &DataMatrix) -> Result<IsometryReport> {
    PairwiseDistances::exhaustive(x)?.isometry(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductCheck {
    pub observed: f64,
    pub bound: f64,
}

impl InnerProductCheck {
    pub fn holds(&self) -> bool {
        self.observed <= self.bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductDeviation {
    /// Constant of the pooled set `{±x_i, ±y_i}`, measured on squared ratios.
    pub delta_hat: f64,
    /// Mean squared distance ratio used to remove the operator's gain.
    pub gain: f64,
    pub checks: Vec<InnerProductCheck>,
}

fn dedup_columns(cols: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(cols.len());
    for c in cols {
        if !out.iter().any(|o| o == &c) {
            out.push(c);
        }
    }
    out
}

fn re_inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u.re * v.re + u.im * v.im).sum()
}

/// Compares `Re⟨Φx, Φy⟩` against `Re⟨x, y⟩` for each column pair.
///
/// The stable-embedding bound is stated on squared distance ratios, so
/// `delta_hat` is computed from `‖Φu−Φv‖²/‖u−v‖²` over the pooled set and the
/// compressed inner product is divided by the mean of those ratios. With that
/// normalization the bound `(δ̂/2)(‖x‖²+‖y‖²)` holds by construction of the
/// pooled set; the check measures how tight it is.
pub fn inner_product_deviation(
    op: &RfOperator,
    xs: &DataMatrix,
    ys: &DataMatrix,
) -> Result<InnerProductDeviation> {
    if xs.cols() == 0 {
        return Err(RfError::InsufficientData("empty pair list".into()));
    }
    if xs.cols() != ys.cols() {
        return Err(RfError::DimensionMismatch {
            expected: xs.cols(),
            got: ys.cols(),
        });
    }
    for m in [xs, ys] {
        if m.rows() != op.n() {
            return Err(RfError::DimensionMismatch {
                expected: op.n(),
                got: m.rows(),
            });
        }
    }
    let xc: Vec<Vec<Complex64>> = xs.columns().map(|c| c.to_complex()).collect();
    let yc: Vec<Vec<Complex64>> = ys.columns().map(|c| c.to_complex()).collect();
    let neg = |v: &Vec<Complex64>| v.iter().map(|z| -z).collect::<Vec<_>>();
    let mut pooled = Vec::with_capacity(4 * xc.len());
    for (x, y) in xc.iter().zip(&yc) {
        pooled.extend([x.clone(), neg(x), y.clone(), neg(y)]);
    }
    // Zero vectors and x = ±y produce exact duplicates; they carry no pair.
    let pooled = dedup_columns(pooled);
    if pooled.len() < 2 {
        return Err(RfError::InsufficientData(
            "pooled set has fewer than 2 distinct points".into(),
        ));
    }
    let pooled = DataMatrix::from_complex_columns(op.n(), &pooled)?;
    let dist = PairwiseDistances::exhaustive(&pooled)?;
    let reduced = dist.matching(&op.apply_batch(&pooled)?)?;
    let q: Vec<f64> = reduced
        .iter()
        .zip(dist.distances())
        .map(|(r, o)| (r * r) / (o * o))
        .collect();
    let report = IsometryReport::from_ratios(&q)?;
    let gain = report.q_mean;
    let checks = xc
        .iter()
        .zip(&yc)
        .map(|(x, y)| {
            let px = op.apply(x)?;
            let py = op.apply(y)?;
            let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let ny: f64 = y.iter().map(|v| v.norm_sqr()).sum();
            Ok(InnerProductCheck {
                observed: (re_inner(&px, &py) / gain - re_inner(x, y)).abs(),
                bound: 0.5 * report.delta * (nx + ny),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InnerProductDeviation {
        delta_hat: report.delta,
        gain,
        checks,
    })
}

/// Normalized Procrustes residual between two `d×K` point clouds.
///
/// Minimizes `‖L − s·R·Lp‖²_F` over a scale `s` and an orthogonal `R`
/// (reflections included), divided by `‖L‖²_F`. Both clouds are centered
/// first unless `center` is false.
pub fn procrustes_distance(l: &DataMatrix, lp: &DataMatrix, center: bool) -> Result<f64> {
    if l.rows() != lp.rows() || l.cols() != lp.cols() {
        return Err(RfError::DimensionMismatch {
            expected: l.rows() * l.cols(),
            got: lp.rows() * lp.cols(),
        });
    }
    if l.cols() < l.rows() {
        return Err(RfError::InsufficientData(format!(
            "{} points cannot determine a {}-dimensional alignment",
            l.cols(),
            l.rows()
        )));
    }
    let prep = |m: &DataMatrix| -> DMatrix<f64> {
        let mut a = m.to_real_stacked().to_nalgebra().expect("real view");
        if center {
            for mut row in a.row_iter_mut() {
                let mean = row.mean();
                row.add_scalar_mut(-mean);
            }
        }
        a
    };
    let a = prep(l);
    let b = prep(lp);
    let na = a.norm_squared();
    let nb = b.norm_squared();
    if nb == 0.0 || na == 0.0 {
        return Err(RfError::DegenerateCloud);
    }
    let trace_norm: f64 = (&a * b.transpose()).singular_values().sum();
    Ok((1.0 - trace_norm * trace_norm / (na * nb)).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl DetectionScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        Self {
            precision: ratio(tp, fp),
            recall: ratio(tp, fn_),
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// One-to-one event matching within `±tol`.
///
/// Both lists are walked in time order; each detection takes the earliest
/// unmatched truth event inside its window. For interval windows on sorted
/// lists this greedy is a maximum matching, so swapping the roles of the two
/// lists leaves `tp` (and F1) unchanged.
pub fn f1_score(detected: &[f64], truth: &[f64], tol: f64) -> DetectionScore {
    let mut tp = 0;
    let mut t = 0;
    for &d in detected {
        while t < truth.len() && truth[t] < d - tol {
            t += 1;
        }
        if t < truth.len() && truth[t] <= d + tol {
            tp += 1;
            t += 1;
        }
    }
    DetectionScore::from_counts(tp, detected.len() - tp, truth.len() - tp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut rng = SplitMix64::new(seed);
        DataMatrix::from_real(rows, cols, (0..rows * cols).map(|_| rng.next_f64() - 0.5).collect())
            .unwrap()
    }

    #[test]
    fn identity_embedding_has_zero_delta() {
        let x = random_matrix(6, 10, 1);
        let r = isometry_constant(&x, &x).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.pair_count, 45);
    }

    #[test]
    fn constant_scaling_absorbed() {
        let x = random_matrix(6, 10, 2);
        let r = isometry_constant(&x, &x.scaled(3.0)).unwrap();
        assert!(r.delta < 1e-15, "{}", r.delta);
    }

    #[test]
    fn unitary_rf_is_isometric() {
        let x = random_matrix(32, 5, 3);
        let op = RfOperator::new(32, 32, 17).unwrap();
        let r = isometry_constant(&x, &op.apply_batch(&x).unwrap()).unwrap();
        assert!(r.delta <= 1e-10);
    }

    #[test]
    fn duplicate_columns_reported() {
        let x = DataMatrix::from_real(1, 3, vec![1.0, 2.0, 1.0]).unwrap();
        match isometry_constant(&x, &x) {
            Err(RfError::DegeneratePair { pairs }) => assert_eq!(pairs, vec![(0, 2)]),
            other => panic!("{other:?}"),
        }
        let one = DataMatrix::zeros_real(3, 1);
        assert!(matches!(
            isometry_constant(&one, &one),
            Err(RfError::InsufficientData(_))
        ));
    }

    #[test]
    fn report_formulas() {
        let r = IsometryReport::from_ratios(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.q_mean, 2.0);
        assert_eq!(r.delta_lower, 0.5);
        assert_eq!(r.delta_upper, 0.5);
        assert_eq!(r.delta, 0.5);
    }

    #[test]
    fn sampled_pairs_subset_of_exhaustive() {
        let x = random_matrix(4, 30, 5);
        let y = random_matrix(4, 30, 6);
        let full = isometry_constant(&x, &y).unwrap();
        let part = PairwiseDistances::new(&x, PairSampling::Random { count: 200, seed: 1 })
            .unwrap()
            .isometry(&y)
            .unwrap();
        assert_eq!(part.pair_count, 200);
        assert!(part.q_min >= full.q_min && part.q_max <= full.q_max);
    }

    #[test]
    fn inner_products_exact_at_full_sampling() {
        let op = RfOperator::new(64, 64, 2).unwrap();
        let x = random_matrix(64, 5, 7);
        let y = random_matrix(64, 5, 8);
        let dev = inner_product_deviation(&op, &x, &y).unwrap();
        assert!(dev.checks.iter().all(|c| c.observed <= 1e-12));
    }

    #[test]
    fn equal_pair_reduces_to_norm_distortion() {
        let op = RfOperator::new(64, 16, 2).unwrap();
        let x = random_matrix(64, 1, 9);
        let dev = inner_product_deviation(&op, &x, &x).unwrap();
        let xv = x.real_column(0).unwrap();
        let nx: f64 = xv.iter().map(|v| v * v).sum();
        let px: f64 = op.apply_real(xv).unwrap().iter().map(|v| v.norm_sqr()).sum();
        let c = dev.checks[0];
        assert!((c.observed - (px / dev.gain - nx).abs()).abs() < 1e-10 * nx);
        assert!((c.bound - dev.delta_hat * nx).abs() < 1e-12 * nx);
    }

    #[test]
    fn bound_holds_on_random_pairs() {
        let op = RfOperator::new(256, 64, 4).unwrap();
        let x = random_matrix(256, 20, 10);
        let y = random_matrix(256, 20, 11);
        let dev = inner_product_deviation(&op, &x, &y).unwrap();
        for c in &dev.checks {
            assert!(c.holds(), "{c:?}");
        }
    }

    fn rot2(theta: f64, reflect: bool) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        let f = if reflect { -1.0 } else { 1.0 };
        DMatrix::from_row_slice(2, 2, &[c, -s * f, s, c * f])
    }

    #[test]
    fn procrustes_identity_and_similarity() {
        let l = random_matrix(2, 12, 12);
        assert!(procrustes_distance(&l, &l, true).unwrap() < 1e-14);
        let lm = l.to_nalgebra().unwrap();
        let moved = rot2(0.7, false) * &lm * 2.0;
        let lp = DataMatrix::from_nalgebra(&moved);
        assert!(procrustes_distance(&l, &lp, true).unwrap() <= 1e-10);
    }

    #[test]
    fn procrustes_matches_grid_search() {
        let l = random_matrix(2, 4, 13);
        let lp = random_matrix(2, 4, 14);
        let center = |m: &DataMatrix| {
            let mut a = m.to_nalgebra().unwrap();
            for mut row in a.row_iter_mut() {
                let mean = row.mean();
                row.add_scalar_mut(-mean);
            }
            a
        };
        let (a, b) = (center(&l), center(&lp));
        let mut best = f64::INFINITY;
        let steps = 200_000;
        for reflect in [false, true] {
            for s in 0..steps {
                let theta = 2.0 * std::f64::consts::PI * s as f64 / steps as f64;
                let rb = rot2(theta, reflect) * &b;
                // Optimal scale for a fixed rotation, in closed form.
                let scale = a.dot(&rb) / rb.norm_squared();
                let resid = (&a - rb * scale).norm_squared() / a.norm_squared();
                best = best.min(resid);
            }
        }
        let d = procrustes_distance(&l, &lp, true).unwrap();
        assert!((d - best).abs() < 1e-6, "{d} vs {best}");
    }

    #[test]
    fn procrustes_degenerate_cloud() {
        let l = random_matrix(2, 5, 15);
        let lp = DataMatrix::from_real(2, 5, vec![1.0; 10]).unwrap();
        assert!(matches!(
            procrustes_distance(&l, &lp, true),
            Err(RfError::DegenerateCloud)
        ));
    }

    #[test]
    fn f1_examples() {
        let s = f1_score(&[1.0, 2.0], &[1.0, 2.0], 0.0);
        assert_eq!(s.f1, 1.0);
        let s = f1_score(&[], &[3.0], 1.0);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = f1_score(&[11.0, 29.0, 50.0], &[10.0, 20.0, 30.0], 1.0);
        assert_eq!((s.tp, s.fp, s.fn_), (2, 1, 1));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_prefers_earliest_truth() {
        // Nearest-first would pair 2.0 with 2.5 and strand the event at 1.2.
        let s = f1_score(&[2.0, 3.5], &[1.2, 2.5], 1.0);
        assert_eq!(s.tp, 2);
    }
}
