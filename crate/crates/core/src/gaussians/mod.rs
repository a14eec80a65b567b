//! Multivariate Gaussians, mixtures, EM, Gaussian products and Gaussian
//! mixture regression.

mod em;
mod gmr;

pub use em::{em_fit, EmFit, EmOptions, EmReport, Init};
pub(crate) use em::fit_views;
pub use gmr::gmr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::linalg::{pinv_truncated, symmetrize, PINV_RTOL};

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return invalid(format!(
                "covariance is {}x{} for a {d}-dimensional mean",
                cov.nrows(),
                cov.ncols()
            ));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean `Aμ + b`, covariance `AΣAᵀ`; `A` may be rectangular.
    pub fn transform(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Gaussian> {
        if a.ncols() != self.dim() || b.len() != a.nrows() {
            return invalid(format!(
                "transform: A is {}x{}, b has {}, gaussian is {}-dimensional",
                a.nrows(),
                a.ncols(),
                b.len(),
                self.dim()
            ));
        }
        let mut cov = a * &self.cov * a.transpose();
        symmetrize(&mut cov);
        Ok(Gaussian {
            mean: a * &self.mean + b,
            cov,
        })
    }

    /// Marginal over the listed dimensions.
    pub fn marginal(&self, dims: &[usize]) -> Gaussian {
        Gaussian {
            mean: DVector::from_iterator(dims.len(), dims.iter().map(|&i| self.mean[i])),
            cov: DMatrix::from_fn(dims.len(), dims.len(), |r, c| self.cov[(dims[r], dims[c])]),
        }
    }
}

/// One factor of a Gaussian product.
#[derive(Debug, Clone, Copy)]
pub enum ProductTerm<'a> {
    Covariance(&'a DVector<f64>, &'a DMatrix<f64>),
    Precision(&'a DVector<f64>, &'a DMatrix<f64>),
}

impl<'a> From<&'a Gaussian> for ProductTerm<'a> {
    fn from(g: &'a Gaussian) -> Self {
        ProductTerm::Covariance(&g.mean, &g.cov)
    }
}

/// `Σ̂ = (Σ_j Λ_j)⁻¹`, `μ̂ = Σ̂ Σ_j Λ_j μ_j`.
///
/// A covariance term that cannot be inverted contributes its truncated
/// pseudoinverse, i.e. no information along its null directions; the product
/// fails only if the summed precision is itself singular.
pub fn gaussian_product(terms: &[ProductTerm<'_>]) -> Result<Gaussian> {
    let Some(first) = terms.first() else {
        return invalid("gaussian product needs at least one term");
    };
    let d = match first {
        ProductTerm::Covariance(m, _) | ProductTerm::Precision(m, _) => m.len(),
    };
    if let [ProductTerm::Covariance(m, c)] = terms {
        return Gaussian::new((*m).clone(), (*c).clone());
    }
    let mut lambda = DMatrix::zeros(d, d);
    let mut eta = DVector::zeros(d);
    for term in terms {
        let (mean, prec) = match term {
            ProductTerm::Covariance(m, c) => {
                let p = match (*c).clone().cholesky() {
                    Some(ch) => ch.inverse(),
                    None => pinv_truncated(c, PINV_RTOL),
                };
                (*m, p)
            }
            ProductTerm::Precision(m, p) => (*m, (*p).clone()),
        };
        if mean.len() != d || prec.shape() != (d, d) {
            return invalid("gaussian product terms disagree on dimension");
        }
        eta += &prec * mean;
        lambda += prec;
    }
    symmetrize(&mut lambda);
    let ch = lambda.clone().cholesky().ok_or_else(|| {
        Error::IllConditionedProduct(format!("summed precision of {} terms is singular", terms.len()))
    })?;
    let mut cov = ch.inverse();
    symmetrize(&mut cov);
    Ok(Gaussian {
        mean: ch.solve(&eta),
        cov,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub priors: Vec<f64>,
    pub components: Vec<Gaussian>,
}

impl Gmm {
    pub fn new(priors: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if priors.len() != components.len() || priors.is_empty() {
            return invalid("mixture needs one prior per component and at least one component");
        }
        if priors.iter().any(|&p| !(p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("mixture priors must be non-negative and sum to one");
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return invalid("mixture components disagree on dimension");
        }
        Ok(Self { priors, components })
    }

    pub fn k(&self) -> usize {
        self.priors.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Draws `n` samples.
    pub fn sample<R: rand::Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<DVector<f64>>> {
        use rand::distr::weighted::WeightedIndex;
        use rand_distr::{Distribution, StandardNormal};
        let pick = WeightedIndex::new(&self.priors)
            .map_err(|e| Error::InvalidArgument(format!("priors: {e}")))?;
        let chols: Vec<_> = self
            .components
            .iter()
            .map(|g| {
                g.cov
                    .clone()
                    .cholesky()
                    .map(|c| c.l())
                    .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))
            })
            .collect::<Result<_>>()?;
        let d = self.dim();
        Ok((0..n)
            .map(|_| {
                let i = pick.sample(rng);
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
                &self.components[i].mean + &chols[i] * z
            })
            .collect())
    }
}

impl Serialize for Gaussian {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianDoc {
            mean: self.mean.iter().cloned().collect(),
            cov: self.cov.row_iter().map(|r| r.iter().cloned().collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gaussian {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = GaussianDoc::deserialize(d)?;
        let n = doc.mean.len();
        if doc.cov.len() != n || doc.cov.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom("covariance must be a square matrix matching the mean"));
        }
        Ok(Gaussian {
            mean: DVector::from_vec(doc.mean),
            cov: DMatrix::from_fn(n, n, |r, c| doc.cov[r][c]),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianDoc {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g1(m: f64, v: f64) -> Gaussian {
        Gaussian::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn product_equal_precision_midpoint() {
        let (a, b) = (g1(0.0, 1.0), g1(2.0, 1.0));
        let p = gaussian_product(&[(&a).into(), (&b).into()]).unwrap();
        assert_relative_eq!(p.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.cov[(0, 0)], 0.5, epsilon = 1e-15);
        let single = gaussian_product(&[(&a).into()]).unwrap();
        assert_eq!(single, a);
    }

    #[test]
    fn product_singular_total_precision_errors() {
        let m = DVector::zeros(2);
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let err = gaussian_product(&[ProductTerm::Precision(&m, &p), ProductTerm::Precision(&m, &p)]);
        assert!(matches!(err, Err(Error::IllConditionedProduct(_))));
    }

    #[test]
    fn transform_examples() {
        let g = Gaussian::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let same = g.transform(&DMatrix::identity(2, 2), &DVector::zeros(2)).unwrap();
        assert_eq!(same, g);
        let scaled = g.transform(&(DMatrix::identity(2, 2) * 2.0), &DVector::zeros(2)).unwrap();
        assert_relative_eq!(scaled.cov, DMatrix::identity(2, 2) * 4.0);
        assert!(g.transform(&DMatrix::identity(3, 3), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn json_shape() {
        let gmm = Gmm::new(vec![1.0], vec![g1(0.5, 2.0)]).unwrap();
        let s = serde_json::to_string(&gmm).unwrap();
        assert_eq!(s, r#"{"priors":[1.0],"components":[{"mean":[0.5],"cov":[[2.0]]}]}"#);
        let back: Gmm = serde_json::from_str(&s).unwrap();
        assert_eq!(back, gmm);
        assert!(Gmm::new(vec![0.4, 0.4], vec![g1(0.0, 1.0), g1(1.0, 1.0)]).is_err());
    }
}
