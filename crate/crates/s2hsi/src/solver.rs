//! Quasi-Split-Bregman reconstruction loop: augmented Lagrangian evaluation,
//! closed-form T-update, gradient-based A-update with backtracking, and the
//! dual U-update.
//!
//! The objective is
//!   L(A,T,U) = 1/2 ||S_u - D A B||_F^2 + lambda1/2 ||1 - T||_F^2
//!            + lambda2/2 ||A A^T - P||_F^2 + mu/2 ||disc(A) - T - U||_F^2
//! minimized by alternating the T, A, and U updates.

use ndarray::Array2;

use crate::cube::{BandPixelMatrix, HsiCube};
use crate::discriminator::{disc_forward, disc_vjp, DiscriminatorParams};
use crate::error::{Error, Result};
use crate::operators::{
    apply_blur, apply_blur_adjoint, apply_srf, apply_srf_adjoint, solver_blur_kernel, BlurKernel,
    SrfMatrix,
};
use crate::prior::{spatial_prior_image, SpectralPriorMatrix};
use crate::simulate::SentinelProduct;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Discriminator-maximization weight.
    pub lambda1: f64,
    /// Spectrum-regularization weight.
    pub lambda2: f64,
    /// Penalty parameter.
    pub mu: f64,
    /// A-update step size (starting point for backtracking).
    pub gamma: f64,
    /// Outer iterations.
    pub outer_iters: usize,
    /// Gradient steps per A-update.
    pub inner_grad_steps: usize,
    /// Relative-change stopping threshold between outer iterations.
    pub tol: f64,
    /// Clamp the final cube to nonnegative reflectance.
    pub clamp_output: bool,
    pub use_backtracking: bool,
    /// Keep a copy of A after every inner step (test instrumentation).
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda1: 5e-4,
            lambda2: 5e-1,
            mu: 5e-2,
            gamma: 1e-3,
            outer_iters: 2,
            inner_grad_steps: 10,
            tol: 1e-5,
            clamp_output: true,
            use_backtracking: true,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    /// Single fixed-size gradient step per outer iteration.
    pub fn unfold_faithful(mut self) -> Self {
        self.inner_grad_steps = 1;
        self.use_backtracking = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.mu < 0.0 {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianTerms {
    pub df: f64,
    pub dmr: f64,
    pub spm: f64,
    pub penalty: f64,
}

impl LagrangianTerms {
    pub fn total(&self) -> f64 {
        self.df + self.dmr + self.spm + self.penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub inner_step: usize,
    pub total: f64,
    pub df: f64,
    pub dmr: f64,
    pub spm: f64,
    pub penalty: f64,
    pub step_size: f64,
    pub stalled: bool,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub a: BandPixelMatrix,
    pub t: Array2<f64>,
    pub u: Array2<f64>,
    pub k: usize,
    pub trace: Vec<TraceRow>,
}

fn frob_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Minimum-norm spectral lift A = D^T (D D^T)^{-1} S_u, before clamping.
/// Returns the lift and whether the ridge fallback was needed.
pub fn spectral_lift(s_u: &BandPixelMatrix, d: &SrfMatrix) -> Result<(BandPixelMatrix, bool)> {
    let m = d.msi_bands();
    if s_u.bands() != m {
        return Err(Error::ShapeMismatch(format!(
            "S_u has {} bands, SRF has {} rows",
            s_u.bands(),
            m
        )));
    }
    let gram = d.values.dot(&d.values.t());
    let na_gram = nalgebra::DMatrix::from_fn(m, m, |i, j| gram[[i, j]]);
    let rhs = nalgebra::DMatrix::from_fn(m, s_u.pixels(), |i, j| s_u.values[[i, j]]);
    let (solved, used_ridge) = match na_gram.clone().cholesky() {
        Some(chol) => (chol.solve(&rhs), false),
        None => {
            let trace: f64 = (0..m).map(|i| na_gram[(i, i)]).sum();
            let ridge = na_gram + nalgebra::DMatrix::identity(m, m) * (1e-8 * trace.max(1.0));
            let chol = ridge
                .cholesky()
                .ok_or_else(|| Error::Data("SRF Gram matrix is not invertible".into()))?;
            (chol.solve(&rhs), true)
        }
    };
    let x = Array2::from_shape_fn((m, s_u.pixels()), |(i, j)| solved[(i, j)]);
    Ok((
        BandPixelMatrix {
            values: d.values.t().dot(&x),
            rows: s_u.rows,
            cols: s_u.cols,
        },
        used_ridge,
    ))
}

/// A^0: the spectral lift clamped to nonnegative entries.
pub fn init_a(s_u: &BandPixelMatrix, d: &SrfMatrix) -> Result<(BandPixelMatrix, bool)> {
    let (mut a, used_ridge) = spectral_lift(s_u, d)?;
    a.values.mapv_inplace(|v| v.max(0.0));
    Ok((a, used_ridge))
}

/// U^0 is all zeros.
pub fn init_u(bands: usize, pixels: usize) -> Array2<f64> {
    Array2::zeros((bands, pixels))
}

/// Closed-form T minimizer: T = (lambda1 * 1 + mu * R) / (lambda1 + mu),
/// R = disc(A) - U.
pub fn update_t(disc_out: &Array2<f64>, u: &Array2<f64>, lambda1: f64, mu: f64) -> Result<Array2<f64>> {
    if lambda1 + mu <= 0.0 {
        return Err(Error::InvalidArgument(
            "lambda1 + mu must be positive for the T-update".into(),
        ));
    }
    let r = disc_out - u;
    Ok(r.mapv(|v| (lambda1 + mu * v) / (lambda1 + mu)))
}

/// Gradient of the data-fitting term: D^T (D A B) B^T - D^T S_u B^T.
pub fn grad_g1(
    a: &BandPixelMatrix,
    s_u: &BandPixelMatrix,
    d: &SrfMatrix,
    kernel: &BlurKernel,
) -> Result<Array2<f64>> {
    let dab = apply_srf(d, &apply_blur(a, kernel)?)?;
    if dab.values.dim() != s_u.values.dim() {
        return Err(Error::ShapeMismatch("S_u does not match D A B".into()));
    }
    let residual = BandPixelMatrix {
        values: &dab.values - &s_u.values,
        rows: a.rows,
        cols: a.cols,
    };
    let lifted = apply_srf_adjoint(d, &residual)?;
    Ok(apply_blur_adjoint(&lifted, kernel)?.values)
}

/// Gradient of the spectrum regularization: 2 lambda2 (A A^T - P) A.
pub fn grad_g2(a: &BandPixelMatrix, p: &SpectralPriorMatrix, lambda2: f64) -> Result<Array2<f64>> {
    if lambda2 == 0.0 {
        return Ok(Array2::zeros(a.values.dim()));
    }
    if p.bands() != a.bands() {
        return Err(Error::ShapeMismatch(format!(
            "prior is {}x{}, cube has {} bands",
            p.bands(),
            p.bands(),
            a.bands()
        )));
    }
    if p.asymmetry() > 1e-10 {
        return Err(Error::InvalidArgument("prior matrix is not symmetric".into()));
    }
    let gram = a.values.dot(&a.values.t());
    Ok((gram - &p.matrix).dot(&a.values) * (2.0 * lambda2))
}

/// Gradient of the penalty term: mu * J^T (disc(A) - T - U).
pub fn grad_g3(
    a: &BandPixelMatrix,
    t: &Array2<f64>,
    u: &Array2<f64>,
    mu: f64,
    disc: &DiscriminatorParams,
) -> Result<Array2<f64>> {
    if mu == 0.0 {
        return Ok(Array2::zeros(a.values.dim()));
    }
    let (out, tape) = disc_forward(disc, a)?;
    let cotangent = BandPixelMatrix {
        values: &out.values - t - u,
        rows: a.rows,
        cols: a.cols,
    };
    Ok(disc_vjp(disc, &tape, &cotangent)?.values * mu)
}

/// Dual ascent step: U^{k+1} = U^k - (disc(A^{k+1}) - T^{k+1}).
pub fn update_u(u: &Array2<f64>, disc_out_at_new_a: &Array2<f64>, t_new: &Array2<f64>) -> Array2<f64> {
    u - &(disc_out_at_new_a - t_new)
}

/// Full augmented Lagrangian with a per-term breakdown. Optional terms drop
/// out when their weight is zero or the corresponding input is absent.
#[allow(clippy::too_many_arguments)]
pub fn lagrangian(
    a: &BandPixelMatrix,
    t: &Array2<f64>,
    u: &Array2<f64>,
    s_u: &BandPixelMatrix,
    d: &SrfMatrix,
    kernel: &BlurKernel,
    p: Option<&SpectralPriorMatrix>,
    disc: Option<&DiscriminatorParams>,
    config: &SolverConfig,
) -> Result<LagrangianTerms> {
    let dab = apply_srf(d, &apply_blur(a, kernel)?)?;
    let df = 0.5 * frob_sq(&(&dab.values - &s_u.values));

    let dmr = if config.lambda1 > 0.0 {
        0.5 * config.lambda1 * t.iter().map(|&v| (1.0 - v) * (1.0 - v)).sum::<f64>()
    } else {
        0.0
    };

    let spm = match p {
        Some(p) if config.lambda2 > 0.0 => {
            let gram = a.values.dot(&a.values.t());
            0.5 * config.lambda2 * frob_sq(&(gram - &p.matrix))
        }
        _ => 0.0,
    };

    let penalty = match disc {
        Some(disc) if config.mu > 0.0 => {
            let (out, _) = disc_forward(disc, a)?;
            0.5 * config.mu * frob_sq(&(&out.values - t - u))
        }
        _ => 0.0,
    };

    Ok(LagrangianTerms {
        df,
        dmr,
        spm,
        penalty,
    })
}

/// Sum of the three A-gradients at the current iterate.
#[allow(clippy::too_many_arguments)]
pub fn full_gradient(
    a: &BandPixelMatrix,
    t: &Array2<f64>,
    u: &Array2<f64>,
    s_u: &BandPixelMatrix,
    d: &SrfMatrix,
    kernel: &BlurKernel,
    p: Option<&SpectralPriorMatrix>,
    disc: Option<&DiscriminatorParams>,
    config: &SolverConfig,
) -> Result<Array2<f64>> {
    let mut g = grad_g1(a, s_u, d, kernel)?;
    if let Some(p) = p {
        if config.lambda2 > 0.0 {
            g += &grad_g2(a, p, config.lambda2)?;
        }
    }
    if let Some(disc) = disc {
        if config.mu > 0.0 {
            g += &grad_g3(a, t, u, config.mu, disc)?;
        }
    }
    Ok(g)
}

pub struct StepOutcome {
    pub a: BandPixelMatrix,
    pub accepted_gamma: f64,
    pub stalled: bool,
    pub terms: LagrangianTerms,
}

const MAX_HALVINGS: usize = 30;

/// One gradient step on A. With backtracking, gamma is halved until the
/// Lagrangian does not increase; an exhausted search returns A unchanged
/// with the stall flag set.
#[allow(clippy::too_many_arguments)]
pub fn update_a(
    a: &BandPixelMatrix,
    gradient: &Array2<f64>,
    t: &Array2<f64>,
    u: &Array2<f64>,
    s_u: &BandPixelMatrix,
    d: &SrfMatrix,
    kernel: &BlurKernel,
    p: Option<&SpectralPriorMatrix>,
    disc: Option<&DiscriminatorParams>,
    config: &SolverConfig,
) -> Result<StepOutcome> {
    let candidate = |gamma: f64| -> BandPixelMatrix {
        BandPixelMatrix {
            values: &a.values - &(gradient * gamma),
            rows: a.rows,
            cols: a.cols,
        }
    };
    if !config.use_backtracking {
        let next = candidate(config.gamma);
        let terms = lagrangian(&next, t, u, s_u, d, kernel, p, disc, config)?;
        return Ok(StepOutcome {
            a: next,
            accepted_gamma: config.gamma,
            stalled: false,
            terms,
        });
    }
    let current = lagrangian(a, t, u, s_u, d, kernel, p, disc, config)?;
    let mut gamma = config.gamma;
    for _ in 0..=MAX_HALVINGS {
        let next = candidate(gamma);
        let terms = lagrangian(&next, t, u, s_u, d, kernel, p, disc, config)?;
        if terms.total() <= current.total() {
            return Ok(StepOutcome {
                a: next,
                accepted_gamma: gamma,
                stalled: false,
                terms,
            });
        }
        gamma *= 0.5;
    }
    Ok(StepOutcome {
        a: a.clone(),
        accepted_gamma: 0.0,
        stalled: true,
        terms: current,
    })
}

pub struct SolveOutput {
    pub cube: HsiCube,
    pub trace: Vec<TraceRow>,
    pub stalled: bool,
    pub used_ridge: bool,
    /// A after each inner step, when recording is enabled.
    pub iterates: Vec<Array2<f64>>,
    /// The spatial prior image actually used.
    pub s_u: BandPixelMatrix,
}

/// Run Algorithm 1 on a multiresolution product: build S_u by bicubic
/// upsampling, lift it spectrally for A^0, then alternate the T, A, and U
/// updates for `outer_iters` rounds.
pub fn solve(
    s: &SentinelProduct,
    d: &SrfMatrix,
    p: Option<&SpectralPriorMatrix>,
    disc: Option<&DiscriminatorParams>,
    config: &SolverConfig,
) -> Result<SolveOutput> {
    config.validate()?;
    let s_u_cube = spatial_prior_image(s)?;
    let s_u = s_u_cube.as_matrix();
    solve_from_su(&s_u, d, p, disc, config)
}

/// Algorithm 1 starting from an already-unified S_u.
pub fn solve_from_su(
    s_u: &BandPixelMatrix,
    d: &SrfMatrix,
    p: Option<&SpectralPriorMatrix>,
    disc: Option<&DiscriminatorParams>,
    config: &SolverConfig,
) -> Result<SolveOutput> {
    config.validate()?;
    let dmr_active = config.mu > 0.0 || config.lambda1 > 0.0;
    if dmr_active && disc.is_none() && config.mu > 0.0 {
        return Err(Error::InvalidArgument(
            "mu > 0 requires a discriminator".into(),
        ));
    }
    let kernel = solver_blur_kernel();
    let (mut a, used_ridge) = init_a(s_u, d)?;
    let bands = a.bands();
    let pixels = a.pixels();
    let mut t = Array2::ones((bands, pixels));
    let mut u = init_u(bands, pixels);
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut stalled_any = false;

    for k in 0..config.outer_iters {
        let a_outer_start = a.values.clone();

        if let Some(disc) = disc {
            if config.lambda1 + config.mu > 0.0 {
                let (out, _) = disc_forward(disc, &a)?;
                t = update_t(&out.values, &u, config.lambda1, config.mu)?;
            }
        }

        for i in 0..config.inner_grad_steps {
            let g = full_gradient(&a, &t, &u, s_u, d, &kernel, p, disc, config)?;
            let outcome = update_a(&a, &g, &t, &u, s_u, d, &kernel, p, disc, config)?;
            stalled_any |= outcome.stalled;
            trace.push(TraceRow {
                outer_iter: k,
                inner_step: i,
                total: outcome.terms.total(),
                df: outcome.terms.df,
                dmr: outcome.terms.dmr,
                spm: outcome.terms.spm,
                penalty: outcome.terms.penalty,
                step_size: outcome.accepted_gamma,
                stalled: outcome.stalled,
            });
            a = outcome.a;
            if config.record_iterates {
                iterates.push(a.values.clone());
            }
            if outcome.stalled {
                break;
            }
        }

        if let Some(disc) = disc {
            if config.mu > 0.0 {
                let (out, _) = disc_forward(disc, &a)?;
                u = update_u(&u, &out.values, &t);
            }
        }

        let denom = frob_sq(&a_outer_start).sqrt();
        if denom > 0.0 {
            let change = frob_sq(&(&a.values - &a_outer_start)).sqrt() / denom;
            if change < config.tol {
                break;
            }
        }
    }

    let mut final_a = a;
    if config.clamp_output {
        final_a.values.mapv_inplace(|v| v.max(0.0));
    }
    let cube = HsiCube::from_matrix(&final_a, None)?;
    Ok(SolveOutput {
        cube,
        trace,
        stalled: stalled_any,
        used_ridge,
        iterates,
        s_u: s_u.clone(),
    })
}

pub fn write_trace_csv(trace: &[TraceRow], path: &std::path::Path) -> Result<()> {
    let mut out = String::from("outer_iter,inner_step,total,df,dmr,spm,penalty,step_size,stalled\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.outer_iter,
            r.inner_step,
            r.total,
            r.df,
            r.dmr,
            r.spm,
            r.penalty,
            r.step_size,
            r.stalled as u8
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
