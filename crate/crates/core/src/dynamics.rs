//! Linear time-invariant plant `x' = A x + w`, `y = C x + v`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, psd_sqrt};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LinearSystem {
    /// Builds a system after checking that the shapes agree. Numerical
    /// invariants (PSD noise, rank, controllability) are left to [`validate`].
    ///
    /// [`validate`]: LinearSystem::validate
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C must be q2x{n}, got {}x{}", c.nrows(), c.ncols())));
        }
        if q.shape() != (n, n) {
            return Err(Error::Dimension(format!("Q must be {n}x{n}, got {}x{}", q.nrows(), q.ncols())));
        }
        let m = c.nrows();
        if r.shape() != (m, m) {
            return Err(Error::Dimension(format!("R must be {m}x{m}, got {}x{}", r.nrows(), r.ncols())));
        }
        Ok(Self { a, c, q, r })
    }

    /// The two-state plant used throughout the evaluation:
    /// `A = [[1.05, 0], [1, 0.9]]`, `C = I`, `Q = I`, `R = 0.8 I`.
    pub fn reference_plant() -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[1.05, 0.0, 1.0, 0.9]),
            c: DMatrix::identity(2, 2),
            q: DMatrix::identity(2, 2),
            r: DMatrix::identity(2, 2) * 0.8,
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    /// State dimension q1.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    /// Measurement dimension q2.
    pub fn meas_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    pub fn validate(&self) -> ValidationReport {
        let n = self.state_dim();
        let mut checks = Vec::with_capacity(4);

        let q_sym = linalg::is_symmetric(&self.q, 1e-12);
        let q_min = linalg::min_eigenvalue(&self.q);
        checks.push(InvariantCheck {
            name: "q_symmetric_psd",
            passed: q_sym && linalg::is_psd(&self.q),
            evidence: format!("symmetric={q_sym}, min eigenvalue={q_min:e}"),
        });

        let r_sym = linalg::is_symmetric(&self.r, 1e-12);
        let r_min = linalg::min_eigenvalue(&self.r);
        checks.push(InvariantCheck {
            name: "r_symmetric_pd",
            passed: r_sym && r_min > 0.0,
            evidence: format!("symmetric={r_sym}, min eigenvalue={r_min:e}"),
        });

        let c_rank = linalg::numerical_rank(&self.c, RANK_TOL);
        checks.push(InvariantCheck {
            name: "c_full_column_rank",
            passed: c_rank == n,
            evidence: format!("rank(C)={c_rank}, required {n}"),
        });

        let ctrb_rank = linalg::numerical_rank(&self.controllability_matrix(), RANK_TOL);
        checks.push(InvariantCheck {
            name: "a_q_controllable",
            passed: ctrb_rank == n,
            evidence: format!("rank([Q^1/2, A Q^1/2, ...])={ctrb_rank}, required {n}"),
        });

        ValidationReport {
            checks,
            spectral_radius: self.spectral_radius(),
        }
    }

    /// `[Q^{1/2}, A Q^{1/2}, …, A^{q1-1} Q^{1/2}]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut out = DMatrix::zeros(n, n * n);
        let mut block = psd_sqrt(&self.q);
        for i in 0..n {
            out.view_mut((0, i * n), (n, n)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    /// One transition of the plant. The measurement is taken of the new state.
    pub fn simulate_step<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.state_dim()
            )));
        }
        let w = gaussian(&self.q, rng);
        let x_next = &self.a * x + w;
        let v = gaussian(&self.r, rng);
        let y = &self.c * &x_next + v;
        Ok((x_next, y))
    }
}

/// Zero-mean Gaussian sample with covariance `cov` (PSD, possibly singular).
fn gaussian<R: Rng + ?Sized>(cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(cov.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    if cov.iter().all(|&v| v == 0.0) {
        return DVector::zeros(cov.nrows());
    }
    psd_sqrt(cov) * z
}

#[derive(Debug, Clone)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub evidence: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
    pub spectral_radius: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}
