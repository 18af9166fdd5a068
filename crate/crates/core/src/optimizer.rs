//! Joint precoding / reflection optimisation for one coherence slot.
//!
//! The sum-rate is lifted with the Lagrangian dual transform (auxiliary `α`),
//! and the resulting sum of ratios is handled with quadratic-transform
//! variables: `λ` for the precoder block and `δ` for the reflection block.
//! Each block update maximises a lower bound that is tight at the current
//! point, so the lifted objective never decreases across outer iterations.
//!
//! Conventions: `W` is `M × K` (column `k` is `w_k`), the reflection vector
//! `θ` is stored as a length-`N` vector but acts as a row, and the effective
//! row channel of UE `k` is `a_k = θ·D_k` (length `M`, no conjugation).

use nalgebra::{DMatrix, DVector};
use std::f64::consts::LN_2;

use crate::channel::{EffectiveCsi, C64};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReflectionMode {
    Optimize,
    /// Keep `θ` at its initial value (direct-link baseline).
    Fixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub p_max: f64,
    pub outer_tolerance: f64,
    pub max_outer_iterations: usize,
    pub inner_tolerance: f64,
    pub max_inner_iterations: usize,
    /// Projected-gradient steps per reflection update.
    pub max_reflection_iterations: usize,
    pub kappa_bisection_tolerance: f64,
    pub reflection: ReflectionMode,
    pub single_user_starts: bool,
}

impl OptimizerConfig {
    pub fn new(p_max: f64) -> Self {
        OptimizerConfig {
            p_max,
            outer_tolerance: 1e-6,
            max_outer_iterations: 200,
            inner_tolerance: 1e-8,
            max_inner_iterations: 50,
            max_reflection_iterations: 20,
            kappa_bisection_tolerance: 1e-10,
            reflection: ReflectionMode::Optimize,
            single_user_starts: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0) {
            return Err(Error::field("p_max", "must be > 0"));
        }
        for (name, v) in [
            ("outer_tolerance", self.outer_tolerance),
            ("inner_tolerance", self.inner_tolerance),
            ("kappa_bisection_tolerance", self.kappa_bisection_tolerance),
        ] {
            if !(v > 0.0) {
                return Err(Error::field(name, "must be > 0"));
            }
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::field("max_outer_iterations", "must be >= 1"));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::field("max_inner_iterations", "must be >= 1"));
        }
        if self.max_reflection_iterations == 0 {
            return Err(Error::field("max_reflection_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BeamformingSolution {
    pub w: DMatrix<C64>,
    pub theta: DVector<C64>,
    /// bits/s.
    pub sum_rate: f64,
    pub per_ue_sinr: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Lifted objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// `|C_α − C| / C` right after each `α` update.
    pub alpha_gap_trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PrecodingUpdate {
    pub w: DMatrix<C64>,
    pub kappa: f64,
}

/// `−θUθᴴ + 2Re{θv} − C`, the reflection subproblem for fixed `δ`.
#[derive(Clone, Debug)]
pub struct Qcqp {
    pub u: DMatrix<C64>,
    pub v: DVector<C64>,
    pub c: f64,
}

impl Qcqp {
    /// Objective without the constant `C`.
    pub fn objective(&self, theta: &DVector<C64>) -> f64 {
        let x = theta.map(|t| t.conj());
        let quad = x.dotc(&(&self.u * &x)).re;
        -quad + 2.0 * x.dotc(&self.v).re
    }
}

fn check_noise(csi: &EffectiveCsi) -> Result<()> {
    if csi.noise_power > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveNoise(csi.noise_power))
    }
}

fn check_dims(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi) -> Result<()> {
    let (n, m, k) = (csi.reflector_len(), csi.antenna_count(), csi.ue_count());
    if w.nrows() != m || w.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "W is {}x{}, expected {m}x{k}",
            w.nrows(),
            w.ncols()
        )));
    }
    if theta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, expected {n}",
            theta.len()
        )));
    }
    if csi.d.iter().any(|d| d.nrows() != n || d.ncols() != m) {
        return Err(Error::DimensionMismatch("D_k shapes differ".into()));
    }
    Ok(())
}

/// `a_k = θ·D_k` for every UE.
pub fn effective_rows(theta: &DVector<C64>, csi: &EffectiveCsi) -> Vec<DVector<C64>> {
    csi.d.iter().map(|d| d.tr_mul(theta)).collect()
}

/// `gains[(k, i)] = θ·D_k·w_i`.
fn cross_gains(rows: &[DVector<C64>], w: &DMatrix<C64>) -> DMatrix<C64> {
    let k = rows.len();
    DMatrix::from_fn(k, w.ncols(), |r, c| rows[r].dot(&w.column(c)))
}

fn sinrs_from_gains(gains: &DMatrix<C64>, noise: f64) -> Vec<f64> {
    (0..gains.nrows())
        .map(|k| {
            let signal = gains[(k, k)].norm_sqr();
            let interference: f64 = gains
                .row(k)
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, g)| g.norm_sqr())
                .sum();
            signal / (interference + noise)
        })
        .collect()
}

pub fn sinrs(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi) -> Result<Vec<f64>> {
    check_noise(csi)?;
    check_dims(w, theta, csi)?;
    let gains = cross_gains(&effective_rows(theta, csi), w);
    Ok(sinrs_from_gains(&gains, csi.noise_power))
}

pub fn sinr(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi, k: usize) -> Result<f64> {
    let all = sinrs(w, theta, csi)?;
    all.get(k)
        .copied()
        .ok_or_else(|| Error::DimensionMismatch(format!("UE index {k} out of range")))
}

fn rate_from_sinrs(sinrs: &[f64], bandwidth: f64) -> f64 {
    sinrs.iter().map(|s| bandwidth * (1.0 + s).log2()).sum()
}

/// Downlink sum-rate in bits/s.
pub fn sum_rate(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi) -> Result<f64> {
    Ok(rate_from_sinrs(&sinrs(w, theta, csi)?, csi.bandwidth))
}

/// Per-UE received signal power `Σ_i |θ D_k w_i|²` (noise excluded).
pub fn received_powers(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi) -> Vec<f64> {
    let gains = cross_gains(&effective_rows(theta, csi), w);
    gains
        .row_iter()
        .map(|r| r.iter().map(|g| g.norm_sqr()).sum())
        .collect()
}

/// Lagrangian-dual-transformed sum-rate `C_α`, expressed in bits/s.
///
/// The natural-log form is used inside the bracket so that `α = η` is the
/// maximiser over `α`; with it the value equals the sum-rate at `α = η`.
pub fn surrogate_objective(
    w: &DMatrix<C64>,
    theta: &DVector<C64>,
    alpha: &[f64],
    csi: &EffectiveCsi,
) -> Result<f64> {
    let eta = sinrs(w, theta, csi)?;
    Ok(surrogate_from_sinrs(&eta, alpha, csi.bandwidth))
}

fn surrogate_from_sinrs(eta: &[f64], alpha: &[f64], bandwidth: f64) -> f64 {
    eta.iter()
        .zip(alpha)
        .map(|(&e, &a)| (a.ln_1p() - a + (1.0 + a) * e / (1.0 + e)) / LN_2)
        .sum::<f64>()
        * bandwidth
}

pub fn update_alpha(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi) -> Result<Vec<f64>> {
    sinrs(w, theta, csi)
}

/// `α̂_k = b·(1 + α_k)`.
fn alpha_hat(alpha: &[f64], bandwidth: f64) -> Vec<f64> {
    alpha.iter().map(|a| bandwidth * (1.0 + a)).collect()
}

/// Sum of weighted ratios `Σ α̂_k |a_k w_k|² / (Σ_i |a_k w_i|² + σ²)`.
fn fractional_objective(gains: &DMatrix<C64>, weights: &[f64], noise: f64) -> f64 {
    (0..gains.nrows())
        .map(|k| {
            let total: f64 = gains.row(k).iter().map(|g| g.norm_sqr()).sum();
            weights[k] * gains[(k, k)].norm_sqr() / (total + noise)
        })
        .sum()
}

fn quadratic_transform_vars(gains: &DMatrix<C64>, weights: &[f64], noise: f64) -> Vec<C64> {
    (0..gains.nrows())
        .map(|k| {
            let total: f64 = gains.row(k).iter().map(|g| g.norm_sqr()).sum();
            gains[(k, k)] * (weights[k].sqrt() / (total + noise))
        })
        .collect()
}

/// Optimal `λ` for fixed `W`, `θ`, `α`.
pub fn update_lambda(
    w: &DMatrix<C64>,
    theta: &DVector<C64>,
    alpha: &[f64],
    csi: &EffectiveCsi,
) -> Vec<C64> {
    let gains = cross_gains(&effective_rows(theta, csi), w);
    quadratic_transform_vars(&gains, &alpha_hat(alpha, csi.bandwidth), csi.noise_power)
}

/// Optimal `δ` for fixed `W`, `θ`, `α`. Same closed form as `λ`.
pub fn update_delta(
    w: &DMatrix<C64>,
    theta: &DVector<C64>,
    alpha: &[f64],
    csi: &EffectiveCsi,
) -> Vec<C64> {
    update_lambda(w, theta, alpha, csi)
}

/// Maximises the `λ`-transformed objective over `W` under `Σ‖w_k‖² ≤ P_max`.
///
/// With `g_k = conj(a_k)` and `A = Σ_i |λ_i|² g_i g_iᴴ`, the maximiser is
/// `w_k = √α̂_k λ_k (κI + A)⁻¹ g_k`; `κ` is zero when that is feasible and
/// otherwise found by bisection in the eigenbasis of `A`.
pub fn update_precoding(
    theta: &DVector<C64>,
    alpha: &[f64],
    lambda: &[C64],
    csi: &EffectiveCsi,
    p_max: f64,
    kappa_tolerance: f64,
) -> Result<PrecodingUpdate> {
    let m = csi.antenna_count();
    let k_count = csi.ue_count();
    let weights = alpha_hat(alpha, csi.bandwidth);
    let g: Vec<DVector<C64>> = effective_rows(theta, csi)
        .into_iter()
        .map(|a| a.map(|x| x.conj()))
        .collect();

    let mut a_mat = DMatrix::<C64>::zeros(m, m);
    for (gi, li) in g.iter().zip(lambda) {
        a_mat.gerc(C64::from(li.norm_sqr()), gi, gi, C64::from(1.0));
    }
    let rhs = DMatrix::from_fn(m, k_count, |r, c| g[c][r] * lambda[c] * weights[c].sqrt());
    if rhs.iter().all(|x| x.norm_sqr() == 0.0) {
        return Ok(PrecodingUpdate {
            w: DMatrix::zeros(m, k_count),
            kappa: 0.0,
        });
    }

    // Hermitian by construction; symmetrise against round-off before the solve.
    let a_herm = (&a_mat + a_mat.adjoint()) * C64::from(0.5);
    let eig = a_herm.symmetric_eigen();
    let mu: Vec<f64> = eig.eigenvalues.iter().map(|x| x.max(0.0)).collect();
    let mu_max = mu.iter().cloned().fold(0.0, f64::max);
    let rank_tol = mu_max * 1e-12;
    let y = eig.eigenvectors.adjoint() * &rhs;
    let strength: Vec<f64> = (0..m)
        .map(|j| y.row(j).iter().map(|v| v.norm_sqr()).sum())
        .collect();

    let power_at = |kappa: f64| -> f64 {
        (0..m)
            .map(|j| {
                if kappa == 0.0 {
                    if mu[j] > rank_tol {
                        strength[j] / (mu[j] * mu[j])
                    } else {
                        0.0
                    }
                } else {
                    strength[j] / ((mu[j] + kappa) * (mu[j] + kappa))
                }
            })
            .sum()
    };

    let kappa = if power_at(0.0) <= p_max {
        0.0
    } else {
        let mut hi = 1.0f64;
        while power_at(hi) > p_max {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::InfeasibleBracketing(hi));
            }
        }
        while hi > 1e-300 && power_at(hi / 2.0) <= p_max {
            hi /= 2.0;
        }
        let mut lo = hi / 2.0;
        for _ in 0..200 {
            if p_max - power_at(hi) <= kappa_tolerance * p_max {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if power_at(mid) > p_max {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };

    let scale = DVector::from_iterator(
        m,
        (0..m).map(|j| {
            if kappa == 0.0 {
                if mu[j] > rank_tol {
                    1.0 / mu[j]
                } else {
                    0.0
                }
            } else {
                1.0 / (mu[j] + kappa)
            }
        }),
    );
    let mut scaled = y;
    for (mut row, s) in scaled.row_iter_mut().zip(scale.iter()) {
        row *= C64::from(*s);
    }
    let mut w = &eig.eigenvectors * scaled;
    let power = w.norm_squared();
    if power > p_max {
        w *= C64::from((p_max / power).sqrt());
    }
    Ok(PrecodingUpdate { w, kappa })
}

/// Builds the reflection subproblem for fixed `W`, `α`, `δ`:
/// `U = Σ_k |δ_k|² Σ_i (D_k w_i)(D_k w_i)ᴴ`, `v = Σ_k √α̂_k δ_k* D_k w_k`,
/// `C = Σ_k |δ_k|² σ²`.
pub fn build_qcqp(
    w: &DMatrix<C64>,
    alpha: &[f64],
    delta: &[C64],
    csi: &EffectiveCsi,
) -> Qcqp {
    let n = csi.reflector_len();
    let weights = alpha_hat(alpha, csi.bandwidth);
    let mut u = DMatrix::<C64>::zeros(n, n);
    let mut v = DVector::<C64>::zeros(n);
    let mut c = 0.0;
    for (k, dk) in csi.d.iter().enumerate() {
        let dsq = delta[k].norm_sqr();
        c += dsq * csi.noise_power;
        for i in 0..w.ncols() {
            let x = dk * w.column(i);
            if dsq > 0.0 {
                u.gerc(C64::from(dsq), &x, &x, C64::from(1.0));
            }
            if i == k {
                v.axpy(delta[k].conj() * weights[k].sqrt(), &x, C64::from(1.0));
            }
        }
    }
    Qcqp { u, v, c }
}

fn project_unit_disks(x: &mut DVector<C64>) {
    for z in x.iter_mut() {
        let r = z.norm();
        if r > 1.0 {
            *z /= r;
        }
    }
}

/// Projected gradient ascent with Armijo backtracking for
/// `max −θUθᴴ + 2Re{θv}` over `|θ_n| ≤ 1`, started from `theta`.
///
/// Works in `x = conj(θ)` where the problem reads `max −xᴴUx + 2Re{xᴴv}`.
pub fn update_reflection(
    qcqp: &Qcqp,
    theta: &DVector<C64>,
    tolerance: f64,
    max_iterations: usize,
) -> DVector<C64> {
    let n = qcqp.v.len();
    let u_herm = (&qcqp.u + qcqp.u.adjoint()) * C64::from(0.5);
    let lipschitz = u_herm
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0, f64::max);

    if lipschitz <= 0.0 {
        // Linear objective: every unit disk is maximised independently.
        return DVector::from_fn(n, |i, _| {
            let vi = qcqp.v[i];
            let r = vi.norm();
            if r > 0.0 {
                vi.conj() / r
            } else {
                C64::new(0.0, 0.0)
            }
        });
    }

    let objective = |x: &DVector<C64>| -> f64 {
        -x.dotc(&(&u_herm * x)).re + 2.0 * x.dotc(&qcqp.v).re
    };

    let mut x = theta.map(|t| t.conj());
    project_unit_disks(&mut x);
    let mut value = objective(&x);
    let mut step = 1.0 / lipschitz;
    for _ in 0..max_iterations {
        let grad = &qcqp.v - &u_herm * &x;
        let mut probe = &x + &grad * C64::from(1.0 / lipschitz);
        project_unit_disks(&mut probe);
        if (&probe - &x).norm() < tolerance {
            break;
        }

        step *= 2.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = &x + &grad * C64::from(step);
            project_unit_disks(&mut cand);
            let diff = &cand - &x;
            let cand_value = objective(&cand);
            if cand_value >= value + 1e-4 * 2.0 * grad.dotc(&diff).re {
                accepted = Some((cand, cand_value));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, cand_value)) if cand_value >= value => {
                x = cand;
                value = cand_value;
            }
            _ => break,
        }
    }
    x.map(|z| z.conj())
}

/// Equal-power matched-filter precoder for the all-ones reflection vector.
pub fn initial_point(csi: &EffectiveCsi, p_max: f64) -> (DMatrix<C64>, DVector<C64>) {
    let theta = DVector::from_element(csi.reflector_len(), C64::new(1.0, 0.0));
    let w = matched_filter(&theta, csi, p_max);
    (w, theta)
}

/// Columns `w_k ∝ (θD_k)ᴴ`, each carrying `P_max / K`.
pub fn matched_filter(theta: &DVector<C64>, csi: &EffectiveCsi, p_max: f64) -> DMatrix<C64> {
    let k_count = csi.ue_count();
    let m = csi.antenna_count();
    let per_ue = p_max / k_count as f64;
    let rows = effective_rows(theta, csi);
    let mut w = DMatrix::zeros(m, k_count);
    for (k, a) in rows.iter().enumerate() {
        let norm = a.norm();
        if norm > 0.0 {
            let col = a.map(|x| x.conj()) * C64::from(per_ue.sqrt() / norm);
            w.set_column(k, &col);
        }
    }
    w
}

/// Alternating optimisation of `W` and `θ` for one slot.
///
/// With `single_user_starts` the ascent is also run from each single-UE
/// matched filter (same `θ`) and the best run is returned.
pub fn optimize(
    csi: &EffectiveCsi,
    config: &OptimizerConfig,
    initial_w: &DMatrix<C64>,
    initial_theta: &DVector<C64>,
) -> Result<BeamformingSolution> {
    config.validate()?;
    check_noise(csi)?;
    check_dims(initial_w, initial_theta, csi)?;
    let mut best = ascend(csi, config, initial_w, initial_theta)?;
    if config.single_user_starts && csi.ue_count() > 1 {
        let full = matched_filter(initial_theta, csi, config.p_max * csi.ue_count() as f64);
        for k in 0..csi.ue_count() {
            let mut w = DMatrix::zeros(full.nrows(), full.ncols());
            w.set_column(k, &full.column(k));
            let norm = w.norm_squared();
            if norm == 0.0 {
                continue;
            }
            w *= C64::from((config.p_max / norm).sqrt());
            let run = ascend(csi, config, &w, initial_theta)?;
            if run.sum_rate > best.sum_rate {
                best = run;
            }
        }
    }
    Ok(best)
}

/// One alternating-ascent run from the given point.
///
/// Outer loop: `α ← η`, then alternating `λ`/`W` and `δ`/`θ` steps until the
/// weighted ratio sum stalls. Stops when `C_α` changes by
/// less than `outer_tolerance` (relative). If the cap is hit the best iterate
/// is returned with `converged = false`.
fn ascend(
    csi: &EffectiveCsi,
    config: &OptimizerConfig,
    initial_w: &DMatrix<C64>,
    initial_theta: &DVector<C64>,
) -> Result<BeamformingSolution> {
    let noise = csi.noise_power;
    let bandwidth = csi.bandwidth;
    let mut w = initial_w.clone();
    let mut theta = initial_theta.clone();

    let eta0 = sinrs(&w, &theta, csi)?;
    let mut previous = rate_from_sinrs(&eta0, bandwidth);
    let mut best = (previous, w.clone(), theta.clone());
    let mut trace = Vec::new();
    let mut gaps = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_outer_iterations {
        iterations += 1;
        let alpha = update_alpha(&w, &theta, csi)?;
        let weights = alpha_hat(&alpha, bandwidth);
        let rate_now = rate_from_sinrs(&alpha, bandwidth);
        if rate_now > 0.0 {
            let tight = surrogate_from_sinrs(&alpha, &alpha, bandwidth);
            gaps.push((tight - rate_now).abs() / rate_now);
        }

        let mut rows = effective_rows(&theta, csi);
        let mut gains = cross_gains(&rows, &w);
        let mut f_prev = fractional_objective(&gains, &weights, noise);
        for _ in 0..config.max_inner_iterations {
            let start = f_prev;

            let lambda = quadratic_transform_vars(&gains, &weights, noise);
            let candidate = update_precoding(
                &theta,
                &alpha,
                &lambda,
                csi,
                config.p_max,
                config.kappa_bisection_tolerance,
            )?
            .w;
            let cand_gains = cross_gains(&rows, &candidate);
            let f = fractional_objective(&cand_gains, &weights, noise);
            if f >= f_prev {
                w = candidate;
                gains = cand_gains;
                f_prev = f;
            }

            if config.reflection == ReflectionMode::Optimize {
                let delta = quadratic_transform_vars(&gains, &weights, noise);
                let qcqp = build_qcqp(&w, &alpha, &delta, csi);
                let candidate = update_reflection(
                    &qcqp,
                    &theta,
                    config.inner_tolerance,
                    config.max_reflection_iterations,
                );
                let cand_rows = effective_rows(&candidate, csi);
                let cand_gains = cross_gains(&cand_rows, &w);
                let f = fractional_objective(&cand_gains, &weights, noise);
                if f >= f_prev {
                    theta = candidate;
                    rows = cand_rows;
                    gains = cand_gains;
                    f_prev = f;
                }
            }

            if f_prev - start <= config.inner_tolerance * f_prev.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }

        let eta = sinrs_from_gains(&gains, noise);
        let c_alpha = surrogate_from_sinrs(&eta, &alpha, bandwidth);
        trace.push(c_alpha);
        let rate = rate_from_sinrs(&eta, bandwidth);
        if rate >= best.0 {
            best = (rate, w.clone(), theta.clone());
        }
        let scale = c_alpha.abs().max(previous.abs());
        if (c_alpha - previous).abs() <= config.outer_tolerance * scale {
            converged = true;
            break;
        }
        previous = c_alpha;
    }

    let (_, w, theta) = best;
    let per_ue_sinr = sinrs(&w, &theta, csi)?;
    Ok(BeamformingSolution {
        sum_rate: rate_from_sinrs(&per_ue_sinr, bandwidth),
        per_ue_sinr,
        w,
        theta,
        iterations,
        converged,
        objective_trace: trace,
        alpha_gap_trace: gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::synthetic_csi;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(m: usize, n: usize, k: usize, seed: u64) -> EffectiveCsi {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        synthetic_csi(m, n, k, 10.0, 0.1, &mut rng)
    }

    fn random_point(csi: &EffectiveCsi, p_max: f64, seed: u64) -> (DMatrix<C64>, DVector<C64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DMatrix::from_fn(csi.antenna_count(), csi.ue_count(), |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let norm = w.norm_squared();
        w *= C64::from((p_max / norm).sqrt());
        let theta = DVector::from_fn(csi.reflector_len(), |_, _| {
            C64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..6.3))
        });
        (w, theta)
    }

    /// SINR from explicit element loops over θ, D_k and w_i.
    fn sinr_by_loops(w: &DMatrix<C64>, theta: &DVector<C64>, csi: &EffectiveCsi, k: usize) -> f64 {
        let gain = |i: usize| {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..csi.reflector_len() {
                for m in 0..csi.antenna_count() {
                    acc += theta[n] * csi.d[k][(n, m)] * w[(m, i)];
                }
            }
            acc.norm_sqr()
        };
        let interference: f64 = (0..w.ncols()).filter(|&i| i != k).map(gain).sum();
        gain(k) / (interference + csi.noise_power)
    }

    fn lambda_objective(
        w: &DMatrix<C64>,
        theta: &DVector<C64>,
        alpha: &[f64],
        lambda: &[C64],
        csi: &EffectiveCsi,
    ) -> f64 {
        let rows = effective_rows(theta, csi);
        let mut total = 0.0;
        for k in 0..csi.ue_count() {
            let weight = csi.bandwidth * (1.0 + alpha[k]);
            let own = rows[k].dot(&w.column(k));
            let power: f64 = (0..w.ncols())
                .map(|i| rows[k].dot(&w.column(i)).norm_sqr())
                .sum();
            total += 2.0 * weight.sqrt() * (lambda[k].conj() * own).re
                - lambda[k].norm_sqr() * (power + csi.noise_power);
        }
        total
    }

    #[test]
    fn sinr_matches_element_loops() {
        let csi = instance(3, 4, 2, 1);
        let (w, theta) = random_point(&csi, 2.0, 2);
        let fast = sinrs(&w, &theta, &csi).unwrap();
        for k in 0..2 {
            assert_relative_eq!(fast[k], sinr_by_loops(&w, &theta, &csi, k), max_relative = 1e-12);
        }
    }

    #[test]
    fn single_link_sinr_is_gain_over_noise() {
        let csi = EffectiveCsi {
            d: vec![DMatrix::from_element(1, 1, C64::new(0.0, 2.0))],
            noise_power: 0.5,
            bandwidth: 1.0,
        };
        let w = DMatrix::from_element(1, 1, C64::new(1.5, 0.0));
        let theta = DVector::from_element(1, C64::new(1.0, 0.0));
        assert_relative_eq!(sinr(&w, &theta, &csi, 0).unwrap(), 18.0, max_relative = 1e-15);
        assert_relative_eq!(sum_rate(&w, &theta, &csi).unwrap(), 19f64.log2(), max_relative = 1e-15);
    }

    #[test]
    fn zero_noise_is_rejected() {
        let mut csi = instance(2, 2, 1, 3);
        csi.noise_power = 0.0;
        let (w, theta) = initial_point(&csi, 1.0);
        assert!(matches!(sinrs(&w, &theta, &csi), Err(Error::NonPositiveNoise(_))));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let csi = instance(2, 3, 2, 4);
        let w = DMatrix::zeros(3, 2);
        let theta = DVector::from_element(3, C64::new(1.0, 0.0));
        assert!(matches!(sinrs(&w, &theta, &csi), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn surrogate_is_tight_at_alpha_equal_sinr() {
        for seed in 0..10 {
            let csi = instance(4, 4, 2, seed);
            let (w, theta) = random_point(&csi, 1.0, seed + 100);
            let alpha = update_alpha(&w, &theta, &csi).unwrap();
            let c = sum_rate(&w, &theta, &csi).unwrap();
            let ca = surrogate_objective(&w, &theta, &alpha, &csi).unwrap();
            assert!((ca - c).abs() <= 1e-12 * c);
        }
    }

    #[test]
    fn surrogate_never_exceeds_rate() {
        let csi = instance(4, 4, 2, 5);
        let (w, theta) = random_point(&csi, 1.0, 6);
        let c = sum_rate(&w, &theta, &csi).unwrap();
        for scale in [0.0, 0.3, 0.9, 1.7, 10.0] {
            let alpha: Vec<f64> = update_alpha(&w, &theta, &csi)
                .unwrap()
                .iter()
                .map(|a| a * scale)
                .collect();
            let ca = surrogate_objective(&w, &theta, &alpha, &csi).unwrap();
            assert!(ca <= c * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lambda_update_maximises_quadratic_transform() {
        let csi = instance(3, 3, 3, 7);
        let (w, theta) = random_point(&csi, 1.0, 8);
        let alpha = update_alpha(&w, &theta, &csi).unwrap();
        let lambda = update_lambda(&w, &theta, &alpha, &csi);
        let at_opt = lambda_objective(&w, &theta, &alpha, &lambda, &csi);
        let gains = cross_gains(&effective_rows(&theta, &csi), &w);
        let ratio = fractional_objective(&gains, &alpha_hat(&alpha, csi.bandwidth), csi.noise_power);
        assert_relative_eq!(at_opt, ratio, max_relative = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let perturbed: Vec<C64> = lambda
                .iter()
                .map(|l| l + C64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)) * l.norm())
                .collect();
            assert!(lambda_objective(&w, &theta, &alpha, &perturbed, &csi) <= at_opt);
        }
        assert_eq!(update_delta(&w, &theta, &alpha, &csi), lambda);
    }

    /// Projected gradient ascent on the Frobenius ball, independent of the
    /// eigenbasis solve.
    fn precoding_oracle(
        theta: &DVector<C64>,
        alpha: &[f64],
        lambda: &[C64],
        csi: &EffectiveCsi,
        p_max: f64,
    ) -> DMatrix<C64> {
        let m = csi.antenna_count();
        let kc = csi.ue_count();
        let rows = effective_rows(theta, csi);
        let mut a = DMatrix::<C64>::zeros(m, m);
        for (r, l) in rows.iter().zip(lambda) {
            let g = r.map(|x| x.conj());
            a += &g * g.adjoint() * C64::from(l.norm_sqr());
        }
        let lip = a.clone().symmetric_eigenvalues().iter().cloned().fold(1e-12, f64::max);
        let mut w = DMatrix::<C64>::zeros(m, kc);
        for _ in 0..20000 {
            let mut grad = -(&a * &w);
            for k in 0..kc {
                let g = rows[k].map(|x| x.conj()) * (lambda[k] * (csi.bandwidth * (1.0 + alpha[k])).sqrt());
                let mut col = grad.column_mut(k);
                col += g;
            }
            w += grad * C64::from(1.0 / lip);
            let norm = w.norm_squared();
            if norm > p_max {
                w *= C64::from((p_max / norm).sqrt());
            }
        }
        w
    }

    #[test]
    fn precoding_matches_projected_gradient_oracle() {
        for (seed, p_max) in [(10, 1.0), (11, 0.01), (12, 100.0), (13, 5.0)] {
            let csi = instance(3, 4, 2, seed);
            let (w0, theta) = random_point(&csi, p_max, seed + 50);
            let alpha = update_alpha(&w0, &theta, &csi).unwrap();
            let lambda = update_lambda(&w0, &theta, &alpha, &csi);
            let fast = update_precoding(&theta, &alpha, &lambda, &csi, p_max, 1e-12).unwrap();
            assert!(fast.w.norm_squared() <= p_max * (1.0 + 1e-9));
            let oracle = precoding_oracle(&theta, &alpha, &lambda, &csi, p_max);
            let f_fast = lambda_objective(&fast.w, &theta, &alpha, &lambda, &csi);
            let f_oracle = lambda_objective(&oracle, &theta, &alpha, &lambda, &csi);
            assert!(f_fast >= f_oracle - 1e-6 * f_oracle.abs(), "{f_fast} < {f_oracle}");
            if fast.kappa > 0.0 {
                assert_relative_eq!(fast.w.norm_squared(), p_max, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn precoding_with_zero_lambda_is_zero() {
        let csi = instance(2, 2, 2, 14);
        let theta = DVector::from_element(2, C64::new(1.0, 0.0));
        let lambda = vec![C64::new(0.0, 0.0); 2];
        let out = update_precoding(&theta, &[1.0, 1.0], &lambda, &csi, 1.0, 1e-10).unwrap();
        assert_eq!(out.w.norm_squared(), 0.0);
    }

    #[test]
    fn qcqp_objective_uses_conjugated_row_convention() {
        let csi = instance(2, 3, 2, 15);
        let (w, theta) = random_point(&csi, 1.0, 16);
        let alpha = update_alpha(&w, &theta, &csi).unwrap();
        let delta = update_delta(&w, &theta, &alpha, &csi);
        let qcqp = build_qcqp(&w, &alpha, &delta, &csi);
        // The δ-transformed objective evaluated directly equals the QCQP form.
        let direct = lambda_objective(&w, &theta, &alpha, &delta, &csi);
        assert_relative_eq!(qcqp.objective(&theta) - qcqp.c, direct, max_relative = 1e-10);
    }

    #[test]
    fn reflection_matches_grid_for_single_element() {
        let cases = [(2.0, C64::new(0.5, 0.3)), (0.5, C64::new(1.0, -2.0)), (1.0, C64::new(-0.2, 0.1))];
        for (u, v) in cases {
            let qcqp = Qcqp {
                u: DMatrix::from_element(1, 1, C64::from(u)),
                v: DVector::from_element(1, v),
                c: 0.0,
            };
            let out = update_reflection(&qcqp, &DVector::from_element(1, C64::new(0.0, 0.0)), 1e-12, 10000);
            let got = qcqp.objective(&out);
            let mut best = f64::NEG_INFINITY;
            for i in 0..=400 {
                for j in 0..720 {
                    let theta = DVector::from_element(
                        1,
                        C64::from_polar(i as f64 / 400.0, j as f64 * std::f64::consts::PI / 360.0),
                    );
                    best = best.max(qcqp.objective(&theta));
                }
            }
            assert!(got >= best - 1e-4, "{got} < {best}");
            let ratio = v / u;
            let closed = if ratio.norm() <= 1.0 { ratio } else { v / v.norm() };
            assert_relative_eq!(out[0].conj().re, closed.re, epsilon = 1e-6);
            assert_relative_eq!(out[0].conj().im, closed.im, epsilon = 1e-6);
        }
    }

    #[test]
    fn reflection_ascends_and_stays_feasible() {
        let csi = instance(3, 6, 2, 17);
        let (w, theta) = random_point(&csi, 1.0, 18);
        let alpha = update_alpha(&w, &theta, &csi).unwrap();
        let delta = update_delta(&w, &theta, &alpha, &csi);
        let qcqp = build_qcqp(&w, &alpha, &delta, &csi);
        let out = update_reflection(&qcqp, &theta, 1e-10, 500);
        assert!(out.iter().all(|t| t.norm() <= 1.0 + 1e-12));
        assert!(qcqp.objective(&out) >= qcqp.objective(&theta));
    }

    #[test]
    fn single_antenna_single_element_reaches_closed_form() {
        let d = C64::new(0.8, -0.6) * 0.7;
        let csi = EffectiveCsi {
            d: vec![DMatrix::from_element(1, 1, d)],
            noise_power: 0.2,
            bandwidth: 2.0,
        };
        let p_max = 3.0;
        let (w0, theta0) = initial_point(&csi, p_max);
        let sol = optimize(&csi, &OptimizerConfig::new(p_max), &w0, &theta0).unwrap();
        let closed = 2.0 * (1.0 + p_max * d.norm_sqr() / 0.2).log2();
        assert_relative_eq!(sol.sum_rate, closed, max_relative = 1e-9);
    }

    #[test]
    fn optimizer_is_monotone_feasible_and_improves_on_start() {
        for seed in 0..5 {
            let csi = instance(4, 4, 2, seed + 20);
            let (w0, theta0) = initial_point(&csi, 1.0);
            let start = sum_rate(&w0, &theta0, &csi).unwrap();
            let sol = optimize(&csi, &OptimizerConfig::new(1.0), &w0, &theta0).unwrap();
            assert!(sol.converged);
            assert!(sol.sum_rate >= start);
            assert!(sol.w.norm_squared() <= 1.0 + 1e-9);
            assert!(sol.theta.iter().all(|t| t.norm() <= 1.0 + 1e-9));
            for pair in sol.objective_trace.windows(2) {
                assert!(pair[1] >= pair[0] * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn fixed_reflection_keeps_theta() {
        let csi = instance(3, 3, 2, 30);
        let (w0, theta0) = initial_point(&csi, 1.0);
        let mut cfg = OptimizerConfig::new(1.0);
        cfg.reflection = ReflectionMode::Fixed;
        let sol = optimize(&csi, &cfg, &w0, &theta0).unwrap();
        assert_eq!(sol.theta, theta0);
    }

    #[test]
    fn optimum_beats_random_feasible_points() {
        let csi = instance(2, 2, 2, 31);
        let (w0, theta0) = initial_point(&csi, 1.0);
        let sol = optimize(&csi, &OptimizerConfig::new(1.0), &w0, &theta0).unwrap();
        for s in 0..2000 {
            let (w, theta) = random_point(&csi, 1.0, 1000 + s);
            assert!(sum_rate(&w, &theta, &csi).unwrap() <= sol.sum_rate * (1.0 + 1e-3));
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let mut cfg = OptimizerConfig::new(1.0);
        cfg.max_outer_iterations = 0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidField { field, .. }) if field == "max_outer_iterations"));
    }
}
