//! Gaussian model of finitely squeezed graph states.
//!
//! States are represented by a mean vector and covariance matrix over the
//! quadratures ordered `(x_1..x_n, p_1..p_n)` with the `[x, p] = i`
//! convention. The ideal graph state (infinite squeezing) is not
//! representable; callers approximate it with a large finite `sigma`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::graph::{NoiseModel, NullifierSpec, WeightedGraph};
use crate::{Error, Result};

/// The crate-wide width convention: a width `w` parametrizes a Gaussian
/// density proportional to `exp(-t^2/w^2)`.
///
/// This is the unique convention under which the honest pass probability
/// `(1 + (delta^2 + 1/sigma^2)/eps^2)^(-1/2)` and the quadrature-noise
/// additivity `delta^2 = nu^2 + mu^2` hold at the same time. All modules
/// convert widths to variances through these helpers.
pub struct WidthConvention;

impl WidthConvention {
    /// Variance of a Gaussian of width `w`: `w^2 / 2`.
    pub fn variance(width: f64) -> f64 {
        width * width / 2.0
    }

    /// Width of a Gaussian with the given variance: `sqrt(2 v)`.
    pub fn width_from_variance(variance: f64) -> f64 {
        (2.0 * variance).sqrt()
    }

    /// Standard deviation of a Gaussian of width `w`: `w / sqrt(2)`.
    pub fn std_dev(width: f64) -> f64 {
        width / std::f64::consts::SQRT_2
    }
}

/// Eigenvalues of a marginal covariance in `[-MARGINAL_CLAMP_TOL, 0)` are
/// clamped to zero before factorization; anything more negative is an error.
const MARGINAL_CLAMP_TOL: f64 = 1e-9;

/// Mean vector and covariance matrix of an `n`-mode register, ordered
/// `(x_1..x_n, p_1..p_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n: usize,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianState {
    /// Covariance model of the finitely squeezed graph state `|G^sigma>`:
    /// per-mode `Var x = sigma^2/2`, `Var p = 1/(2 sigma^2)` propagated
    /// through the CZ symplectic map `p_i -> p_i + sum_j W_ij x_j`.
    pub fn graph_state(graph: &WeightedGraph, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "squeezing parameter must be positive and finite, got {sigma}"
            )));
        }
        let n = graph.n();
        let var_x = sigma * sigma / 2.0;
        let var_p = 1.0 / (2.0 * sigma * sigma);

        // Adjacency matrix W (symmetric, zero diagonal).
        let mut adj = DMatrix::zeros(n, n);
        for &(i, j, w) in graph.edges() {
            adj[(i - 1, j - 1)] = w;
            adj[(j - 1, i - 1)] = w;
        }

        // S Sigma0 S^T with S = [[I, 0], [W, I]] in (x, p) block order.
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for a in 0..n {
            cov[(a, a)] = var_x;
            cov[(n + a, n + a)] = var_p;
        }
        for a in 0..n {
            for b in 0..n {
                // Cov(x_a, p_b) = W_ba Var(x_a)
                cov[(a, n + b)] = adj[(b, a)] * var_x;
                cov[(n + b, a)] = adj[(b, a)] * var_x;
            }
        }
        for a in 0..n {
            for b in 0..n {
                let mut extra = 0.0;
                for c in 0..n {
                    extra += adj[(a, c)] * adj[(b, c)];
                }
                cov[(n + a, n + b)] += extra * var_x;
            }
        }

        Ok(Self {
            n,
            mean: DVector::zeros(2 * n),
            covariance: cov,
        })
    }

    /// Builds a state from explicit moments, checking symmetry and the
    /// uncertainty principle.
    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if !dim.is_multiple_of(2) || covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::InvalidParameter(
                "moments must have matching 2n dimensions".into(),
            ));
        }
        let state = Self {
            n: dim / 2,
            mean,
            covariance,
        };
        state.check_symmetric()?;
        state.check_uncertainty()?;
        Ok(state)
    }

    pub fn mode_count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn check_symmetric(&self) -> Result<()> {
        let c = &self.covariance;
        let scale = c.amax().max(1.0);
        for a in 0..c.nrows() {
            for b in (a + 1)..c.ncols() {
                if (c[(a, b)] - c[(b, a)]).abs() > 1e-12 * scale {
                    return Err(Error::Numerical(format!(
                        "covariance not symmetric at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Uncertainty principle: `C + (i/2) J >= 0`, tested through the real
    /// embedding `[[C, -J/2], [J/2, C]]` of the Hermitian matrix.
    pub fn check_uncertainty(&self) -> Result<()> {
        let n = self.n;
        let dim = 2 * n;
        let mut embed = DMatrix::zeros(2 * dim, 2 * dim);
        for a in 0..dim {
            for b in 0..dim {
                embed[(a, b)] = self.covariance[(a, b)];
                embed[(dim + a, dim + b)] = self.covariance[(a, b)];
            }
        }
        // J maps (x, p) -> (p, -x): J[a, n+a] = 1, J[n+a, a] = -1.
        for a in 0..n {
            let (r, c, v) = (a, n + a, 0.5);
            embed[(r, dim + c)] = -v;
            embed[(c, dim + r)] = v;
            embed[(dim + r, c)] = v;
            embed[(dim + c, r)] = -v;
        }
        let eigen = embed.symmetric_eigen();
        let min = eigen.eigenvalues.min();
        if min < -1e-9 {
            return Err(Error::Numerical(format!(
                "uncertainty principle violated: min eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Applies `Z(s) = exp(i s x)` mode-wise: momenta means shift by `s`,
    /// covariance unchanged.
    pub fn displace(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "shift length {} does not match mode count {}",
                shift.len(),
                self.n
            )));
        }
        let mut mean = self.mean.clone();
        for (i, s) in shift.iter().enumerate() {
            mean[self.n + i] += s;
        }
        Ok(Self {
            n: self.n,
            mean,
            covariance: self.covariance.clone(),
        })
    }

    /// Mean and width of the nullifier observable `g_i` on this state,
    /// in the `exp(-t^2/w^2)` width convention.
    pub fn nullifier_statistics(&self, spec: &NullifierSpec) -> Result<(f64, f64)> {
        let c = self.nullifier_coefficient_vector(spec)?;
        let mean = c.dot(&self.mean);
        let variance = (&self.covariance * &c).dot(&c);
        Ok((mean, WidthConvention::width_from_variance(variance)))
    }

    fn nullifier_coefficient_vector(&self, spec: &NullifierSpec) -> Result<DVector<f64>> {
        if spec.vertex < 1 || spec.vertex > self.n {
            return Err(Error::VertexOutOfRange {
                index: spec.vertex,
                n: self.n,
            });
        }
        let mut c = DVector::zeros(2 * self.n);
        c[self.n + spec.vertex - 1] = spec.p_coefficient;
        for &(j, coeff) in &spec.x_coefficients {
            if j < 1 || j > self.n {
                return Err(Error::VertexOutOfRange {
                    index: j,
                    n: self.n,
                });
            }
            c[j - 1] = coeff;
        }
        Ok(c)
    }
}

/// Prepared sampler for one nullifier test: holds the Cholesky-style factor
/// of the joint marginal of `{p_i} u {x_j : j in N(i)}` so repeated draws are
/// cheap.
#[derive(Debug, Clone)]
pub struct NullifierSampler {
    spec: NullifierSpec,
    marginal_mean: DVector<f64>,
    factor: DMatrix<f64>,
    noise: NoiseModel,
}

impl NullifierSampler {
    pub fn prepare(
        state: &GaussianState,
        spec: &NullifierSpec,
        noise: &NoiseModel,
    ) -> Result<Self> {
        let n = state.mode_count();
        if spec.vertex < 1 || spec.vertex > n {
            return Err(Error::VertexOutOfRange {
                index: spec.vertex,
                n,
            });
        }
        // Marginal indices: p_i first, then the neighboring x_j.
        let mut idx = vec![n + spec.vertex - 1];
        for &(j, _) in &spec.x_coefficients {
            idx.push(j - 1);
        }
        let m = idx.len();
        let mut mean = DVector::zeros(m);
        let mut cov = DMatrix::zeros(m, m);
        for (a, &ia) in idx.iter().enumerate() {
            mean[a] = state.mean()[ia];
            for (b, &ib) in idx.iter().enumerate() {
                cov[(a, b)] = state.covariance()[(ia, ib)];
            }
        }
        let factor = factorize_covariance(cov)?;
        Ok(Self {
            spec: spec.clone(),
            marginal_mean: mean,
            factor,
            noise: *noise,
        })
    }

    /// Draws one noisy nullifier measurement outcome.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_shifted(rng, 0.0)
    }

    /// Same, for the register displaced so that the nullifier mean gains
    /// `p_shift` (the `Z(s)` eigenvalue identity: `g_i` shifts by `s_i`).
    pub fn sample_shifted<R: Rng + ?Sized>(&self, rng: &mut R, p_shift: f64) -> f64 {
        let m = self.marginal_mean.len();
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut draw = &self.factor * z + &self.marginal_mean;
        draw[0] += p_shift;
        // Independent measurement noise on each local quadrature outcome.
        draw[0] +=
            WidthConvention::std_dev(self.noise.p_width) * rng.sample::<f64, _>(StandardNormal);
        for a in 1..m {
            draw[a] +=
                WidthConvention::std_dev(self.noise.x_width) * rng.sample::<f64, _>(StandardNormal);
        }
        let x_outcomes: Vec<f64> = (1..m).map(|a| draw[a]).collect();
        self.spec.evaluate(draw[0], &x_outcomes)
    }
}

/// Draws one noisy nullifier measurement from `state`. For repeated draws
/// prepare a [`NullifierSampler`] once instead.
pub fn sample_nullifier_measurement<R: Rng + ?Sized>(
    state: &GaussianState,
    spec: &NullifierSpec,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    Ok(NullifierSampler::prepare(state, spec, noise)?.sample(rng))
}

/// Symmetric square-root factor of a covariance matrix, clamping tiny
/// negative eigenvalues from floating-point drift on near-singular states.
fn factorize_covariance(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eigen = cov.symmetric_eigen();
    let mut scaled = eigen.eigenvectors.clone();
    for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
        let lambda = if lambda >= 0.0 {
            lambda
        } else if lambda >= -MARGINAL_CLAMP_TOL {
            0.0
        } else {
            return Err(Error::Numerical(format!(
                "marginal covariance has eigenvalue {lambda:.3e} below tolerance"
            )));
        };
        let s = lambda.sqrt();
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= s;
        }
    }
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn two_vertex() -> WeightedGraph {
        WeightedGraph::new(2, &[(1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn vacuum_covariance() {
        let g = WeightedGraph::new(1, &[]).unwrap();
        let s = GaussianState::graph_state(&g, 1.0).unwrap();
        assert!((s.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s.covariance()[(1, 1)] - 0.5).abs() < 1e-15);
        s.check_uncertainty().unwrap();
    }

    #[test]
    fn squeezed_single_mode() {
        let g = WeightedGraph::new(1, &[]).unwrap();
        let s = GaussianState::graph_state(&g, 2.0).unwrap();
        assert!((s.covariance()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((s.covariance()[(1, 1)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn two_mode_moments() {
        let s = GaussianState::graph_state(&two_vertex(), 1.0).unwrap();
        // Var(p1) = 1/2 + 1/2 = 1; Cov(p1, x2) = 1/2.
        assert!((s.covariance()[(2, 2)] - 1.0).abs() < 1e-15);
        assert!((s.covariance()[(1, 2)] - 0.5).abs() < 1e-15);
        s.check_uncertainty().unwrap();
    }

    #[test]
    fn invalid_sigma_rejected() {
        assert!(GaussianState::graph_state(&two_vertex(), 0.0).is_err());
        assert!(GaussianState::graph_state(&two_vertex(), -1.0).is_err());
    }

    #[test]
    fn honest_nullifier_width_is_inverse_sigma() {
        // Large sigma excluded: the variance combination cancels
        // catastrophically near the ideal limit.
        for sigma in [0.5, 1.0, 3.0, 50.0] {
            let g = two_vertex();
            let s = GaussianState::graph_state(&g, sigma).unwrap();
            for i in 1..=2 {
                let spec = g.nullifier_coefficients(i).unwrap();
                let (mean, width) = s.nullifier_statistics(&spec).unwrap();
                assert!(mean.abs() < 1e-12);
                assert!((width - 1.0 / sigma).abs() < 1e-6 / sigma);
            }
        }
    }

    #[test]
    fn displacement_shifts_nullifier_mean() {
        let g = two_vertex();
        let s = GaussianState::graph_state(&g, 1.0).unwrap();
        let d = s.displace(&[1.0, 0.0]).unwrap();
        let (m1, w1) = d
            .nullifier_statistics(&g.nullifier_coefficients(1).unwrap())
            .unwrap();
        let (m2, _) = d
            .nullifier_statistics(&g.nullifier_coefficients(2).unwrap())
            .unwrap();
        assert!((m1 - 1.0).abs() < 1e-12);
        assert!(m2.abs() < 1e-12);
        let (_, w0) = s
            .nullifier_statistics(&g.nullifier_coefficients(1).unwrap())
            .unwrap();
        assert!((w1 - w0).abs() < 1e-12);
    }

    #[test]
    fn displacement_round_trip() {
        let g = two_vertex();
        let s = GaussianState::graph_state(&g, 1.3).unwrap();
        let back = s
            .displace(&[0.7, -2.0])
            .unwrap()
            .displace(&[-0.7, 2.0])
            .unwrap();
        assert!((back.mean() - s.mean()).amax() < 1e-12);
        // s = 0 is the identity.
        let same = s.displace(&[0.0, 0.0]).unwrap();
        assert_eq!(same.mean(), s.mean());
    }

    #[test]
    fn near_ideal_state_is_nullified() {
        let g = two_vertex();
        let s = GaussianState::graph_state(&g, 1e6).unwrap();
        let spec = g.nullifier_coefficients(1).unwrap();
        let sampler = NullifierSampler::prepare(&s, &spec, &NoiseModel::noiseless()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            assert!(sampler.sample(&mut rng).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = two_vertex();
        let s = GaussianState::graph_state(&g, 2.0).unwrap();
        let spec = g.nullifier_coefficients(1).unwrap();
        let noise = NoiseModel::new(0.1, 0.2).unwrap();
        let sampler = NullifierSampler::prepare(&s, &spec, &noise).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| sampler.sample(&mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn displaced_sampling_matches_shift() {
        let g = two_vertex();
        let s = GaussianState::graph_state(&g, 1.0).unwrap();
        let spec = g.nullifier_coefficients(1).unwrap();
        let sampler = NullifierSampler::prepare(&s, &spec, &NoiseModel::noiseless()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sampler.sample_shifted(&mut rng, 3.0))
            .sum::<f64>()
            / n as f64;
        // Honest width 1, so stderr of the mean is (1/sqrt 2)/sqrt(n).
        let stderr = WidthConvention::std_dev(1.0) / (n as f64).sqrt();
        assert!((mean - 3.0).abs() < 5.0 * stderr, "mean {mean}");
    }
}
