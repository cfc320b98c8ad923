//! Synthetic data: three Gaussian feature families plus noisy linear labels.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::BagLearnError;
use crate::rng;

/// Feature distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFamily {
    /// Rows i.i.d. standard Gaussian; covariance I.
    Isotropic,
    /// Independent coordinates with variances drawn uniform from (0.1, 10).
    NonIsotropicIndependent,
    /// Standard Gaussian rows pushed through a random square transform M;
    /// covariance MᵀM.
    NonIsotropicCorrelated,
}

impl DataFamily {
    pub const ALL: [DataFamily; 3] = [
        DataFamily::Isotropic,
        DataFamily::NonIsotropicIndependent,
        DataFamily::NonIsotropicCorrelated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DataFamily::Isotropic => "isotropic",
            DataFamily::NonIsotropicIndependent => "noniso-independent",
            DataFamily::NonIsotropicCorrelated => "noniso-correlated",
        }
    }
}

impl fmt::Display for DataFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataFamily {
    type Err = BagLearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "isotropic" => Ok(DataFamily::Isotropic),
            "noniso-independent" => Ok(DataFamily::NonIsotropicIndependent),
            "noniso-correlated" => Ok(DataFamily::NonIsotropicCorrelated),
            other => Err(BagLearnError::param(format!(
                "unknown data family {other:?} (expected isotropic, \
                 noniso-independent, or noniso-correlated)"
            ))),
        }
    }
}

/// Recipe for one synthetic dataset.
#[derive(Debug, Clone, Copy)]
pub struct DataSpec {
    pub n: usize,
    pub d: usize,
    pub family: DataFamily,
    pub sigma: f64,
    pub seed: u64,
}

impl DataSpec {
    pub fn validate(&self) -> Result<(), BagLearnError> {
        if self.n <= self.d {
            return Err(BagLearnError::param(format!(
                "n = {} must exceed d = {}",
                self.n, self.d
            )));
        }
        if self.sigma < 0.0 {
            return Err(BagLearnError::param("sigma must be nonnegative"));
        }
        Ok(())
    }
}

fn standard_normal_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Draws the feature matrix and returns it with the generating covariance Σ.
pub fn gen_features<R: Rng>(
    spec: &DataSpec,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>), BagLearnError> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    match spec.family {
        DataFamily::Isotropic => Ok((standard_normal_matrix(n, d, rng), Array2::eye(d))),
        DataFamily::NonIsotropicIndependent => {
            let variances: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..10.0)).collect();
            let mut x = standard_normal_matrix(n, d, rng);
            for (j, &v) in variances.iter().enumerate() {
                let scale = v.sqrt();
                x.column_mut(j).mapv_inplace(|g| g * scale);
            }
            let sigma = Array2::from_diag(&Array1::from_vec(variances));
            Ok((x, sigma))
        }
        DataFamily::NonIsotropicCorrelated => {
            let m = standard_normal_matrix(d, d, rng);
            let g = standard_normal_matrix(n, d, rng);
            let x = g.dot(&m);
            let sigma = m.t().dot(&m);
            Ok((x, sigma))
        }
    }
}

/// Draws `θ*` standard Gaussian and forms `ỹ = Xθ*`, `y = ỹ + σγ`.
pub fn attach_labels<R: Rng>(x: Array2<f64>, sigma: f64, rng: &mut R) -> Dataset {
    let d = x.ncols();
    let theta_star: Array1<f64> =
        Array1::from_shape_simple_fn(d, || rng.sample(StandardNormal));
    let expected = x.dot(&theta_star);
    let labels = if sigma == 0.0 {
        expected.clone()
    } else {
        let noise: Array1<f64> =
            Array1::from_shape_simple_fn(x.nrows(), || rng.sample::<f64, _>(StandardNormal));
        &expected + &(noise * sigma)
    };
    Dataset {
        features: x,
        labels,
        expected_labels: Some(expected),
        theta_star: Some(theta_star),
        noise_sigma: sigma,
    }
}

/// Generates a complete dataset from a spec: features, then `θ*`, then label
/// noise, all from one stream seeded by `spec.seed`. Same spec, same bits.
pub fn generate_dataset(spec: &DataSpec) -> Result<(Dataset, Array2<f64>), BagLearnError> {
    let mut rng = rng::rng_from_seed(spec.seed);
    let (x, covariance) = gen_features(spec, &mut rng)?;
    let ds = attach_labels(x, spec.sigma, &mut rng);
    Ok((ds, covariance))
}
