//! Dataset ingestion and synthetic data generation.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{FeatureDistribution, RegressionModel};
use crate::rng::stream;

/// Immutable table of `n` observations `(x ∈ [0,1]^p, y ∈ ℝ)` with
/// per-feature sorted index arrays.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    p: usize,
    /// Row-major features, `xs[i * p + j]`.
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// `sorted[j]` lists row indices ordered by `(x_{ij}, i)` ascending.
    sorted: Vec<Vec<u32>>,
}

impl Dataset {
    pub fn from_parts(xs: Vec<f64>, ys: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 || ys.is_empty() || xs.len() != ys.len() * p {
            return Err(Error::NoObservations);
        }
        for (idx, &v) in xs.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::FeatureOutOfBounds {
                    line: idx / p + 1,
                    column: format!("x{}", idx % p + 1),
                    value: v,
                });
            }
        }
        let n = ys.len();
        let mut sorted = Vec::with_capacity(p);
        for j in 0..p {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                let (xa, xb) = (xs[a as usize * p + j], xs[b as usize * p + j]);
                xa.partial_cmp(&xb).unwrap().then(a.cmp(&b))
            });
            sorted.push(idx);
        }
        Ok(Dataset { n, p, xs, ys, sorted })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.xs[i * self.p + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    /// Row indices sorted by feature `j`, ties by row index.
    pub fn sorted_by_feature(&self, j: usize) -> &[u32] {
        &self.sorted[j]
    }
}

/// Draws `n` i.i.d. observations from the model: features from its feature
/// distribution, responses `m(x_i) + ε_i` with `ε ~ Uniform[-m_eps, m_eps]`.
///
/// Bit-deterministic under `(seed, n, model)`: coordinates are drawn row by
/// row, then the noise for that row.
pub fn generate_sample(model: &RegressionModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let p = model.p();
    let dist = model.distribution();
    let mut rng = stream(seed, "generate", &[n as u64]);
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = xs.len();
        for j in 0..p {
            let v = match &dist {
                FeatureDistribution::Uniform => rng.random::<f64>(),
                FeatureDistribution::BernoulliHalf => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeatureDistribution::Product(ds) => ds[j].quantile(rng.random::<f64>()),
            };
            xs.push(v);
        }
        let eps = if model.m_eps > 0.0 {
            rng.random_range(-model.m_eps..model.m_eps)
        } else {
            0.0
        };
        let m = model.eval_unchecked(&xs[start..]);
        ys.push(m + eps);
    }
    Dataset::from_parts(xs, ys, p)
}

/// Loads a dataset from a CSV file with header `x1,...,xp,y`.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            line: 0,
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || headers.iter().last() != Some("y") {
        return Err(Error::CsvParse {
            line: 1,
            message: "header must be x1,...,xp,y".into(),
        });
    }
    let p = headers.len() - 1;
    for (j, h) in headers.iter().take(p).enumerate() {
        let expected = format!("x{}", j + 1);
        if h != expected {
            return Err(Error::CsvParse {
                line: 1,
                message: format!("expected column `{expected}`, found `{h}`"),
            });
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (rec_idx, record) in reader.records().enumerate() {
        let line = rec_idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::CsvParse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != p + 1 {
            return Err(Error::CsvParse {
                line,
                message: format!("expected {} fields, found {}", p + 1, record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::CsvParse {
                line,
                message: format!("not a number: `{field}`"),
            })?;
            if j < p {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::FeatureOutOfBounds {
                        line,
                        column: format!("x{}", j + 1),
                        value: v,
                    });
                }
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::NoObservations);
    }
    Dataset::from_parts(xs, ys, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{binary_linear, indicator};
    use std::io::Write;

    #[test]
    fn binary_sample_is_binary_and_noiseless_values_match() {
        let model = binary_linear(4, 3, 2.0, 0.0).unwrap();
        let data = generate_sample(&model, 4, 11).unwrap();
        for i in 0..4 {
            let ones = (0..3).filter(|&j| data.x(i, j) == 1.0).count();
            assert!((0..4).all(|j| data.x(i, j) == 0.0 || data.x(i, j) == 1.0));
            assert_eq!(data.y(i), 2.0 * ones as f64);
        }
    }

    #[test]
    fn indicator_sample_mean_near_half() {
        let model = indicator(1, 0.5, 0.0).unwrap();
        let n = 1000;
        let data = generate_sample(&model, n, 5).unwrap();
        let mean: f64 = (0..n).map(|i| data.y(i)).sum::<f64>() / n as f64;
        // P(X1 >= 0.5) = 0.5; allow 3 binomial standard errors.
        let se = (0.25 / n as f64).sqrt();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn same_seed_gives_bit_identical_datasets() {
        let model = indicator(3, 0.4, 0.25).unwrap();
        let a = generate_sample(&model, 64, 99).unwrap();
        let b = generate_sample(&model, 64, 99).unwrap();
        for i in 0..64 {
            assert_eq!(a.row(i), b.row(i));
            assert_eq!(a.y(i).to_bits(), b.y(i).to_bits());
        }
    }

    #[test]
    fn sorted_indices_are_consistent_permutations() {
        let model = indicator(2, 0.5, 0.1).unwrap();
        let data = generate_sample(&model, 100, 3).unwrap();
        for j in 0..2 {
            let idx = data.sorted_by_feature(j);
            assert_eq!(idx.len(), 100);
            for w in idx.windows(2) {
                assert!(data.x(w[0] as usize, j) <= data.x(w[1] as usize, j));
            }
            let mut seen = idx.to_vec();
            seen.sort_unstable();
            assert!(seen.iter().enumerate().all(|(i, &v)| v as usize == i));
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.csv");
        writeln!(std::fs::File::create(&ok).unwrap(), "x1,y\n0.2,0\n0.8,1").unwrap();
        let data = load_csv(&ok).unwrap();
        assert_eq!((data.n(), data.p()), (2, 1));
        assert_eq!(data.x(1, 0), 0.8);

        let bad = dir.path().join("bad.csv");
        writeln!(std::fs::File::create(&bad).unwrap(), "x1,y\n1.5,0").unwrap();
        match load_csv(&bad) {
            Err(Error::FeatureOutOfBounds { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected bounds error, got {other:?}"),
        }

        let empty = dir.path().join("empty.csv");
        writeln!(std::fs::File::create(&empty).unwrap(), "x1,y").unwrap();
        assert!(matches!(load_csv(&empty), Err(Error::NoObservations)));
    }
}
