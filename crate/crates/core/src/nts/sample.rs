//! Scenario sampling from the subordinated-Gaussian representation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::inversion::{GridSettings, SubordinatorTable};
use super::{MntsParams, SubordinatorParams};
use crate::error::{Error, Result};
use crate::risk::ScenarioMatrix;

/// Draws `X = mu + beta (T - 1) + diag(gamma) sqrt(T) Z`.
///
/// The subordinator sampler is built once at construction and reused for
/// every draw.
#[derive(Debug, Clone)]
pub struct MntsSampler {
    params: MntsParams,
    subordinator: SubordinatorSampler,
    /// `L` with `L L' = Sigma`.
    factor: Vec<Vec<f64>>,
}

impl MntsSampler {
    pub fn new(params: MntsParams, settings: &GridSettings) -> Result<Self> {
        params.validate()?;
        let subordinator = SubordinatorSampler::new(params.subordinator(), settings)?;
        let factor = sqrt_factor(&params.sigma_corr);
        Ok(Self { params, subordinator, factor })
    }

    pub fn params(&self) -> &MntsParams {
        &self.params
    }

    pub fn subordinator(&self) -> &SubordinatorSampler {
        &self.subordinator
    }

    /// Fills `out` (length `dim`) with one joint draw.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        let p = &self.params;
        let t = self.subordinator.sample(rng);
        let st = t.sqrt();
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..p.dim() {
            let zi: f64 = self.factor[i][..=i].iter().zip(z.iter()).map(|(l, v)| l * v).sum();
            out[i] = p.mu[i] + p.beta[i] * (t - 1.0) + p.gamma[i] * st * zi;
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n_scenarios: usize, rng: &mut R) -> Vec<f64> {
        let d = self.params.dim();
        let mut values = vec![0.0; n_scenarios * d];
        let mut z = vec![0.0; d];
        for row in values.chunks_exact_mut(d) {
            self.draw_into(rng, &mut z, row);
        }
        values
    }

    /// `n_scenarios x dim` draws, reproducible from `seed`.
    pub fn sample(&self, n_scenarios: usize, seed: u64) -> ScenarioMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = self.sample_with(n_scenarios, &mut rng);
        let ids = (0..self.params.dim()).map(|i| format!("x{i}")).collect();
        ScenarioMatrix::new(values, n_scenarios, ids, Some(seed)).expect("consistent shape")
    }
}

/// Draws of the unit-mean subordinator `T`.
///
/// The inverse-CDF table is used whenever the Fourier grid meets its accuracy
/// target. Otherwise `T` is drawn exactly as a sum of `m` independent
/// exponentially tilted positive stable pieces, each obtained by rejection
/// from a positive stable draw (Kanter's representation) with acceptance
/// probability `exp(-theta S)`.
#[derive(Debug, Clone)]
pub enum SubordinatorSampler {
    Table(SubordinatorTable),
    Rejection { params: SubordinatorParams, pieces: usize },
}

impl SubordinatorSampler {
    pub fn new(params: SubordinatorParams, settings: &GridSettings) -> Result<Self> {
        match SubordinatorTable::new(params, settings) {
            Ok(t) => Ok(Self::Table(t)),
            Err(Error::Accuracy(_)) => Ok(Self::rejection(params)),
            Err(e) => Err(e),
        }
    }

    pub fn rejection(params: SubordinatorParams) -> Self {
        // total Levy mass scale c theta^(alpha/2) = 2 theta / alpha; each piece keeps acceptance >= e^-1
        let pieces = (2.0 * params.theta / params.alpha).ceil().max(1.0) as usize;
        Self::Rejection { params, pieces }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Table(t) => t.sample(rng),
            Self::Rejection { params, pieces } => {
                let a = params.index();
                let c = 2.0 * params.theta.powf(1.0 - a) / params.alpha / *pieces as f64;
                let scale = c.powf(1.0 / a);
                let mut total = 0.0;
                for _ in 0..*pieces {
                    loop {
                        let s = scale * positive_stable(a, rng);
                        if rng.random::<f64>() <= (-params.theta * s).exp() {
                            total += s;
                            break;
                        }
                    }
                }
                total
            }
        }
    }
}

/// Positive stable draw with `E[exp(-s S)] = exp(-s^a)`, `0 < a < 1`.
fn positive_stable<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u = std::f64::consts::PI * rng.random::<f64>();
    let e: f64 = -(1.0 - rng.random::<f64>()).ln();
    let part1 = (a * u).sin() / u.sin().powf(1.0 / a);
    let part2 = (((1.0 - a) * u).sin() / e).powf((1.0 - a) / a);
    part1 * part2
}

/// Lower-triangular `L` with `L L' = m`: Cholesky when `m` is positive
/// definite, otherwise the triangular factor of the symmetric square root.
pub(crate) fn sqrt_factor(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    if let Some(ch) = dm.clone().cholesky() {
        let l = ch.l();
        return (0..n).map(|i| (0..n).map(|j| l[(i, j)]).collect()).collect();
    }
    let eig = dm.symmetric_eigen();
    let root = &eig.eigenvectors
        * nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    // `root` is symmetric with root * root = m; QR of root' gives a triangular factor
    let qr = root.transpose().qr();
    let r = qr.r();
    let l = r.transpose();
    (0..n)
        .map(|i| (0..n).map(|j| if j <= i { l[(i, j)] } else { 0.0 }).collect())
        .collect()
}
