//! Dense discrete-time LQR kernels: Riccati and Lyapunov solvers, the
//! closed-loop LQ cost, its policy gradient and the spectral radius.
//!
//! Gains use the `u = K x` convention, so the closed loop is `A + B K` and
//! the optimal gain is `K = -(R + BᵀPB)⁻¹ BᵀPA`.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;

use crate::cost::Cost;
use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Closed loops with spectral radius at or above this are treated as unstable.
pub const STABILITY_THRESHOLD: f64 = 1.0 - 1e-9;

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 10_000;
pub const LYAP_TOL: f64 = 1e-12;

const LYAP_MAX_DOUBLINGS: usize = 80;
const SCHUR_MAX_ITER: usize = 100_000;

fn check_square(m: &Matrix, name: &str) -> Result<usize> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{name} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

fn check_system(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(usize, usize)> {
    let nx = check_square(a, "A")?;
    let nu = b.ncols();
    if b.nrows() != nx || nu == 0 {
        return Err(Error::Dimension(format!("B must be {nx}xN_u, got {}x{}", b.nrows(), b.ncols())));
    }
    if q.shape() != (nx, nx) {
        return Err(Error::Dimension(format!("Q must be {nx}x{nx}")));
    }
    if r.shape() != (nu, nu) {
        return Err(Error::Dimension(format!("R must be {nu}x{nu}")));
    }
    Ok((nx, nu))
}

fn check_gain(k: &Matrix, nx: usize, nu: usize) -> Result<()> {
    if k.shape() != (nu, nx) {
        return Err(Error::Dimension(format!(
            "K must be {nu}x{nx}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(())
}

fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    check_square(m, "matrix")?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenNotConverged);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::EigenNotConverged)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn is_schur_stable(m: &Matrix) -> Result<bool> {
    Ok(spectral_radius(m)? < STABILITY_THRESHOLD)
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Frobenius norm of the DARE residual `AᵀPA − P − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let bpa = pb.transpose() * a;
    let Some(x) = s.lu().solve(&bpa) else {
        return f64::INFINITY;
    };
    let res = a.transpose() * p * a - p - bpa.transpose() * x + q;
    res.norm()
}

/// Frobenius norm of the Lyapunov residual `A_clᵀ P A_cl − P + W`.
pub fn lyap_residual(a_cl: &Matrix, w: &Matrix, p: &Matrix) -> f64 {
    (a_cl.transpose() * p * a_cl - p + w).norm()
}

/// Stabilizing solution of the discrete algebraic Riccati equation by the
/// structured doubling algorithm.
///
/// Iterates `A ← A(I+GH)⁻¹A`, `G ← G + A(I+GH)⁻¹GAᵀ`, `H ← H + Aᵀ(I+HG)⁻¹HA`
/// from `(A, BR⁻¹Bᵀ, Q)`; `H` converges quadratically to `P`. Stops when the
/// Frobenius change of `H` falls below `tol · max(1, ‖H‖_F)`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, tol: f64, max_iter: usize) -> Result<Matrix> {
    let (nx, _) = check_system(a, b, q, r)?;
    let r_chol = r.clone().cholesky().ok_or(Error::Singular("R is not positive definite"))?;
    let eye = Matrix::identity(nx, nx);

    let mut ak = a.clone();
    let mut gk = b * r_chol.solve(&b.transpose());
    symmetrize(&mut gk);
    let mut hk = q.clone();
    symmetrize(&mut hk);

    let mut last_step = f64::INFINITY;
    for _ in 0..max_iter {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        // (I + G H)⁻¹ A and (I + G H)⁻¹ G
        let wa = lu.solve(&ak).ok_or(Error::Singular("I + G H in doubling step"))?;
        let wg = lu.solve(&gk).ok_or(Error::Singular("I + G H in doubling step"))?;
        let at = ak.transpose();
        // Aᵀ H (I + G H)⁻¹ A, using H (I+GH)⁻¹ = (I+HG)⁻¹ H
        let mut h_next = &hk + &at * &hk * &wa;
        let mut g_next = &gk + &ak * &wg * &at;
        let a_next = &ak * &wa;
        symmetrize(&mut h_next);
        symmetrize(&mut g_next);

        last_step = (&h_next - &hk).norm();
        let scale = h_next.norm().max(1.0);
        if !last_step.is_finite() {
            break;
        }
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if last_step <= tol * scale {
            return Ok(hk);
        }
    }
    Err(Error::RiccatiNotConverged { iterations: max_iter, last_step })
}

/// `K = −(R + BᵀPB)⁻¹ BᵀPA`.
pub fn lqr_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let chol = s.cholesky().ok_or(Error::Singular("R + BᵀPB is not positive definite"))?;
    Ok(-chol.solve(&(pb.transpose() * a)))
}

/// Solves `A_clᵀ P A_cl − P + W = 0` by Smith doubling: `P ← P + AᵀPA`, `A ← A²`.
pub fn solve_dlyap(a_cl: &Matrix, w: &Matrix, tol: f64) -> Result<Matrix> {
    let n = check_square(a_cl, "A_cl")?;
    if w.shape() != (n, n) {
        return Err(Error::Dimension(format!("W must be {n}x{n}")));
    }
    let radius = spectral_radius(a_cl)?;
    if radius >= STABILITY_THRESHOLD {
        return Err(Error::UnstableClosedLoop(radius));
    }
    smith_doubling(a_cl, w, tol)
}

/// Smith doubling without the stability pre-check. Callers must have
/// established that `a` is Schur stable.
pub(crate) fn smith_doubling(a: &Matrix, w: &Matrix, tol: f64) -> Result<Matrix> {
    let mut ak = a.clone();
    let mut p = w.clone();
    symmetrize(&mut p);
    for _ in 0..LYAP_MAX_DOUBLINGS {
        let inc = ak.transpose() * &p * &ak;
        let inc_norm = inc.norm();
        p += inc;
        if !inc_norm.is_finite() {
            return Err(Error::LyapunovNotConverged);
        }
        if inc_norm <= tol * p.norm().max(f64::MIN_POSITIVE) {
            symmetrize(&mut p);
            return Ok(p);
        }
        ak = &ak * &ak;
    }
    Err(Error::LyapunovNotConverged)
}

/// A discrete LQR problem `(A, B, Q, R)` with initial-state covariance `Σ`.
#[derive(Clone, Debug)]
pub struct LqrProblem {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub sigma: Matrix,
}

/// Riccati solution, dense optimal gain and its cost.
#[derive(Clone, Debug)]
pub struct LqrSolution {
    pub p: Matrix,
    pub gain: Matrix,
    pub cost: f64,
}

impl LqrProblem {
    /// Problem with `Σ = I`.
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let nx = a.nrows();
        Self::with_sigma(a, b, q, r, Matrix::identity(nx, nx))
    }

    pub fn with_sigma(a: Matrix, b: Matrix, q: Matrix, r: Matrix, sigma: Matrix) -> Result<Self> {
        let (nx, _) = check_system(&a, &b, &q, &r)?;
        if sigma.shape() != (nx, nx) {
            return Err(Error::Dimension(format!("Sigma must be {nx}x{nx}")));
        }
        Ok(Self { a, b, q, r, sigma })
    }

    /// `Q = I`, `R = I`, `Σ = I`.
    pub fn identity_weights(a: Matrix, b: Matrix) -> Result<Self> {
        let (nx, nu) = (a.nrows(), b.ncols());
        Self::new(a, b, Matrix::identity(nx, nx), Matrix::identity(nu, nu))
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn closed_loop(&self, k: &Matrix) -> Matrix {
        &self.a + &self.b * k
    }

    pub fn solve(&self) -> Result<LqrSolution> {
        let p = solve_dare(&self.a, &self.b, &self.q, &self.r, DARE_TOL, DARE_MAX_ITER)?;
        let gain = lqr_gain(&self.a, &self.b, &self.r, &p)?;
        let cost = match self.cost(&gain)?.finite() {
            Some(c) => c,
            None => {
                let radius = spectral_radius(&self.closed_loop(&gain))?;
                return Err(Error::UnstableClosedLoop(radius));
            }
        };
        Ok(LqrSolution { p, gain, cost })
    }

    /// Value matrix `P_K` solving `A_clᵀ P A_cl − P + Q + KᵀRK = 0`, or
    /// `None` when the closed loop is unstable.
    pub fn value_matrix(&self, k: &Matrix) -> Result<Option<Matrix>> {
        check_gain(k, self.n_states(), self.n_inputs())?;
        let a_cl = self.closed_loop(k);
        if !is_schur_stable(&a_cl)? {
            return Ok(None);
        }
        let w = &self.q + k.transpose() * &self.r * k;
        smith_doubling(&a_cl, &w, LYAP_TOL).map(Some)
    }

    /// `J(K) = tr(P_K Σ)`; `+inf` when `A + BK` is not Schur stable.
    pub fn cost(&self, k: &Matrix) -> Result<Cost> {
        Ok(match self.value_matrix(k)? {
            Some(p) => Cost::new((p * &self.sigma).trace()),
            None => Cost::INFINITY,
        })
    }

    /// `∇J(K) = 2((R + BᵀP_K B)K + BᵀP_K A) Σ_K` with `Σ_K` the closed-loop
    /// state covariance solving `A_cl Σ_K A_clᵀ − Σ_K + Σ = 0`.
    pub fn gradient(&self, k: &Matrix) -> Result<Matrix> {
        let a_cl = self.closed_loop(k);
        let p = self
            .value_matrix(k)?
            .ok_or_else(|| Error::UnstableClosedLoop(spectral_radius(&a_cl).unwrap_or(f64::NAN)))?;
        let sigma_k = smith_doubling(&a_cl.transpose(), &self.sigma, LYAP_TOL)?;
        let pb = &p * &self.b;
        let e = (&self.r + self.b.transpose() * &pb) * k + pb.transpose() * &self.a;
        Ok(2.0 * e * sigma_k)
    }
}

/// Free-function form of [`LqrProblem::cost`].
pub fn lqr_cost(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, k: &Matrix, sigma: &Matrix) -> Result<Cost> {
    LqrProblem::with_sigma(a.clone(), b.clone(), q.clone(), r.clone(), sigma.clone())?.cost(k)
}

/// Free-function form of [`LqrProblem::gradient`].
pub fn lqr_gradient(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, k: &Matrix, sigma: &Matrix) -> Result<Matrix> {
    LqrProblem::with_sigma(a.clone(), b.clone(), q.clone(), r.clone(), sigma.clone())?.gradient(k)
}
