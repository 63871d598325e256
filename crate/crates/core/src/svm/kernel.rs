use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Polynomial { c: f64, degree: u32 },
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let k = Kernel::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(Error::param(
                format!("RBF gamma must be positive, got {gamma}"),
            )),
            Kernel::Polynomial { degree: 0, .. } => {
                Err(Error::param("polynomial degree must be at least 1"))
            }
            Kernel::Polynomial { c, .. } if !c.is_finite() => {
                Err(Error::param("polynomial offset must be finite"))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Polynomial { c, degree } => (dot(a, b) + c).powi(degree as i32),
            Kernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Gram { n, data }
    }

    pub fn kernel(kernel: &Kernel, x: &[Vec<f64>]) -> Self {
        Gram::from_fn(x.len(), |i, j| kernel.eval(&x[i], &x[j]))
    }

    /// Pairwise squared distances, reusable across RBF bandwidths.
    pub fn sq_distances(x: &[Vec<f64>]) -> Self {
        Gram::from_fn(
            x.len(),
            |i, j| if i == j { 0.0 } else { sq_dist(&x[i], &x[j]) },
        )
    }

    pub fn rbf_from_distances(&self, gamma: f64) -> Self {
        Gram {
            n: self.n,
            data: self.data.iter().map(|d| (-gamma * d).exp()).collect(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Gram::from_fn(idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let total: f64 = (0..self.n)
            .map(|i| self.row(i).iter().sum::<f64>() - self.get(i, i))
            .sum();
        total / (self.n * (self.n - 1)) as f64
    }
}
