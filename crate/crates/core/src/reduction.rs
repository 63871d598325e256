//! Random reduction maps `S` (k×n): random feature selection and random projection.
//!
//! A serialized map is the detector's secret key; anyone holding the file knows
//! which features the deployed detector looks at.

use crate::error::{check_dim, Error, Result};
use crate::synthetic::{symmetrize, GaussianHypothesisModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReductionKind {
    Rfs,
    Rp,
}

impl ReductionKind {
    pub fn label(self) -> &'static str {
        match self {
            ReductionKind::Rfs => "RFS",
            ReductionKind::Rp => "RP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Indices(Vec<usize>),
    // row-major k×n
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MapJson", try_from = "MapJson")]
pub struct ReductionMap {
    n: usize,
    k: usize,
    repr: Repr,
    seed: Option<u64>,
}

impl ReductionMap {
    /// Feature selection from explicit indices (must be distinct and `< n`).
    pub fn from_indices(n: usize, indices: Vec<usize>) -> Result<Self> {
        let k = indices.len();
        validate_sizes(n, k)?;
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::param(format!(
                    "selected index {i} out of range for n = {n}"
                )));
            }
            if seen[i] {
                return Err(Error::param(format!("selected index {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(ReductionMap {
            n,
            k,
            repr: Repr::Indices(indices),
            seed: None,
        })
    }

    /// Projection from a row-major `k×n` matrix whose rows have unit norm.
    pub fn from_rows(n: usize, k: usize, rows: Vec<f64>) -> Result<Self> {
        validate_sizes(n, k)?;
        check_dim(n * k, rows.len())?;
        for r in 0..k {
            let norm = rows[r * n..(r + 1) * n]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::param(format!(
                    "projection row {r} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(ReductionMap {
            n,
            k,
            repr: Repr::Dense(rows),
            seed: None,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_indices(n, (0..n).collect())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn kind(&self) -> ReductionKind {
        match self.repr {
            Repr::Indices(_) => ReductionKind::Rfs,
            Repr::Dense(_) => ReductionKind::Rp,
        }
    }
    pub fn rows(&self) -> usize {
        self.k
    }
    pub fn cols(&self) -> usize {
        self.n
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Selected feature indices (RFS maps only).
    pub fn indices(&self) -> Option<&[usize]> {
        match &self.repr {
            Repr::Indices(ix) => Some(ix),
            Repr::Dense(_) => None,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Indices(ix) => {
                let mut m = DMatrix::zeros(self.k, self.n);
                for (r, &c) in ix.iter().enumerate() {
                    m[(r, c)] = 1.0;
                }
                m
            }
            Repr::Dense(rows) => DMatrix::from_row_slice(self.k, self.n, rows),
        }
    }

    /// `S v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        Ok(match &self.repr {
            Repr::Indices(ix) => ix.iter().map(|&i| v[i]).collect(),
            Repr::Dense(rows) => rows.chunks_exact(self.n).map(|r| dot(r, v)).collect(),
        })
    }

    pub fn apply_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.apply(v.as_slice())?))
    }

    /// `Sᵀ r`, lifting a reduced-space vector back to the full space.
    pub fn lift(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.k, r.len())?;
        let mut out = vec![0.0; self.n];
        match &self.repr {
            Repr::Indices(ix) => {
                for (&i, &x) in ix.iter().zip(r) {
                    out[i] += x;
                }
            }
            Repr::Dense(rows) => {
                for (row, &x) in rows.chunks_exact(self.n).zip(r) {
                    for (o, s) in out.iter_mut().zip(row) {
                        *o += s * x;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Reduced model with mean `S u` and covariance `S Σ Sᵀ`.
    pub fn reduce_model(&self, model: &GaussianHypothesisModel) -> Result<GaussianHypothesisModel> {
        check_dim(self.n, model.dim())?;
        let mean = self.apply_vec(model.mean())?;
        let cov = match &self.repr {
            Repr::Indices(ix) => {
                let c = model.covariance();
                DMatrix::from_fn(self.k, self.k, |a, b| c[(ix[a], ix[b])])
            }
            Repr::Dense(_) => {
                let s = self.matrix();
                let mut c = &s * model.covariance() * s.transpose();
                symmetrize(&mut c);
                c
            }
        };
        GaussianHypothesisModel::new(mean, cov, model.regime())
    }

    pub fn to_json(&self) -> MapJson {
        let (indices, matrix) = match &self.repr {
            Repr::Indices(ix) => (Some(ix.clone()), None),
            Repr::Dense(m) => (None, Some(m.clone())),
        };
        MapJson {
            kind: self.kind(),
            n: self.n,
            k: self.k,
            indices,
            matrix,
            seed: self.seed,
        }
    }

    pub fn from_json(j: &MapJson) -> Result<Self> {
        let m = match j.kind {
            ReductionKind::Rfs => {
                let ix = j.indices.clone().ok_or_else(|| Error::Schema {
                    field: "indices".into(),
                    message: "RFS map requires an index list".into(),
                })?;
                check_dim(j.k, ix.len())?;
                Self::from_indices(j.n, ix)?
            }
            ReductionKind::Rp => {
                let rows = j.matrix.clone().ok_or_else(|| Error::Schema {
                    field: "matrix".into(),
                    message: "RP map requires a row-major matrix".into(),
                })?;
                Self::from_rows(j.n, j.k, rows)?
            }
        };
        Ok(match j.seed {
            Some(s) => m.with_seed(s),
            None => m,
        })
    }
}

impl From<ReductionMap> for MapJson {
    fn from(m: ReductionMap) -> Self {
        m.to_json()
    }
}

impl TryFrom<MapJson> for ReductionMap {
    type Error = Error;
    fn try_from(j: MapJson) -> Result<Self> {
        ReductionMap::from_json(&j)
    }
}

/// Serialized form of a [`ReductionMap`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MapJson {
    pub kind: ReductionKind,
    pub n: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

fn validate_sizes(n: usize, k: usize) -> Result<()> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::param(format!(
            "reduction needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Selects `k` of `n` features uniformly without replacement.
pub fn draw_rfs<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<ReductionMap> {
    validate_sizes(n, k)?;
    let ix = rand::seq::index::sample(rng, n, k).into_vec();
    ReductionMap::from_indices(n, ix)
}

/// Gaussian projection with each row normalized to unit Euclidean norm.
pub fn draw_rp<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<ReductionMap> {
    validate_sizes(n, k)?;
    let mut rows = Vec::with_capacity(n * k);
    for _ in 0..k {
        let mut row: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
        rows.extend(row);
    }
    ReductionMap::from_rows(n, k, rows)
}

pub fn draw(
    kind: ReductionKind,
    n: usize,
    k: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<ReductionMap> {
    match kind {
        ReductionKind::Rfs => draw_rfs(n, k, rng),
        ReductionKind::Rp => draw_rp(n, k, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use crate::synthetic::{make_dependent_model, make_iid_model};

    #[test]
    fn full_rfs_is_permutation() {
        let m = draw_rfs(5, 5, &mut rng_from_seed(1)).unwrap();
        let mut ix = m.indices().unwrap().to_vec();
        ix.sort();
        assert_eq!(ix, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rfs_indices_distinct_in_range() {
        let m = draw_rfs(686, 20, &mut rng_from_seed(2)).unwrap();
        let mut ix = m.indices().unwrap().to_vec();
        assert!(ix.iter().all(|&i| i < 686));
        ix.sort();
        ix.dedup();
        assert_eq!(ix.len(), 20);
        let s = m.matrix();
        assert_eq!(&s * s.transpose(), DMatrix::identity(20, 20));
    }

    #[test]
    fn rfs_reproducible() {
        let a = draw_rfs(4, 2, &mut rng_from_seed(3)).unwrap();
        let b = draw_rfs(4, 2, &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
        assert!(draw_rfs(3, 4, &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn rp_rows_unit_norm() {
        let m = draw_rp(30, 7, &mut rng_from_seed(4)).unwrap();
        let s = m.matrix();
        for r in 0..7 {
            assert!((s.row(r).norm() - 1.0).abs() < 1e-12);
        }
        let one = draw_rp(1, 1, &mut rng_from_seed(5)).unwrap();
        assert!((one.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rp_rows_nearly_orthogonal() {
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..100 {
            let s = draw_rp(300, 150, &mut rng_from_seed(seed))
                .unwrap()
                .matrix();
            // a strided subset of pairs keeps this quick
            for i in (0..150).step_by(15) {
                for j in (i + 1..150).step_by(7) {
                    total += s.row(i).dot(&s.row(j)).abs();
                    count += 1;
                }
            }
        }
        assert!(total / (count as f64) < 0.15);
    }

    #[test]
    fn gather_semantics() {
        let m = ReductionMap::from_indices(3, vec![2, 0]).unwrap();
        assert_eq!(m.apply(&[10.0, 20.0, 30.0]).unwrap(), vec![30.0, 10.0]);
        let id = ReductionMap::identity(3).unwrap();
        assert_eq!(id.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(m.apply(&[1.0]).is_err());
        assert_eq!(m.lift(&[1.0, 2.0]).unwrap(), vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn rp_apply_matches_dot() {
        let m = draw_rp(6, 1, &mut rng_from_seed(6)).unwrap();
        let v = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let s = m.matrix();
        let oracle: f64 = (0..6).map(|j| s[(0, j)] * v[j]).sum();
        assert!((m.apply(&v).unwrap()[0] - oracle).abs() < 1e-14);
    }

    #[test]
    fn reduce_model_cases() {
        let dep = make_dependent_model(8, true, &mut rng_from_seed(7)).unwrap();
        let id = ReductionMap::identity(8).unwrap();
        let same = id.reduce_model(&dep).unwrap();
        assert_eq!(same.covariance(), dep.covariance());
        assert_eq!(same.mean(), dep.mean());

        let iid = make_iid_model(8, 3.0).unwrap();
        let m = draw_rfs(8, 3, &mut rng_from_seed(8)).unwrap();
        assert_eq!(
            m.reduce_model(&iid).unwrap().covariance(),
            &DMatrix::identity(3, 3)
        );

        let r = m.reduce_model(&dep).unwrap();
        let ix = m.indices().unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(r.covariance()[(a, b)], dep.covariance()[(ix[a], ix[b])]);
            }
        }
    }

    #[test]
    fn json_round_trip_both_kinds() {
        for kind in [ReductionKind::Rfs, ReductionKind::Rp] {
            let m = draw(kind, 9, 4, &mut rng_from_seed(9))
                .unwrap()
                .with_seed(9);
            let s = serde_json::to_string(&m.to_json()).unwrap();
            let back = ReductionMap::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }
}
