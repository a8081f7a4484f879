//! Passivity-based tracking of the planned trajectory by one vessel.
//!
//! The position error is taken at a look-ahead point a distance `β` ahead
//! of the hull and expressed in the body frame, which makes the two
//! actuated inputs (surge force, yaw moment) sufficient to regulate both
//! error components. The closed loop is matched to the error dynamics
//!
//! ```text
//! ė_b = S11 ∇_{e_b} H_e + S12 ∇_{p̃} H_e
//! ṗ̃   = −S12ᵀ ∇_{e_b} H_e + S22 ∇_{p̃} H_e,   H_e = ½ p̃ᵀM⁻¹p̃ + e_bᵀ K_d e_b
//! ```
//!
//! while an immersion-and-invariance estimator supplies `τ̂_d`.

use nalgebra::{DMatrix, Matrix2, Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::max_eigenvalue;
use crate::vessel::{damping_bar, rotation, Vec3, VesselParams, VesselState, Wrench};

type Vec2 = Vector2<f64>;

/// How the look-ahead scaling `Ω⁻¹ = diag(1, 1/β)` enters the reference
/// velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaScope {
    /// `Ω⁻¹((𝒯 + 2 S11 K_d) e_b − [0, v] + Rᵀ Q̇*)`; matches the target
    /// error dynamics exactly.
    #[default]
    Full,
    /// `Ω⁻¹(𝒯 + 2 S11 K_d) e_b − [0, v] + Rᵀ Q̇*`. Leaves a residual
    /// `(1 − β)(v − [RᵀQ̇*]₂)` in the sway error rate unless `β = 1`.
    FirstTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingGains {
    /// Diagonal of `K_d`.
    pub k_d: [f64; 2],
    /// Diagonal of the damping injection `S22`; non-positive, with strictly
    /// negative surge and yaw entries.
    pub s22: [f64; 3],
    /// Look-ahead distance (m).
    pub beta: f64,
    /// Estimator gain (1/s).
    pub alpha: f64,
    /// Young's-inequality split used only by the UUB certificate, `0 < ε < α`.
    pub epsilon: f64,
    #[serde(default)]
    pub omega_scope: OmegaScope,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            k_d: [0.62, 0.68],
            s22: [-1500.0, 0.0, -1700.0],
            beta: 0.5,
            alpha: 500.0,
            epsilon: 250.0,
            omega_scope: OmegaScope::Full,
        }
    }
}

impl TrackingGains {
    pub fn validate(&self) -> Result<()> {
        if self.k_d.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(domain(format!("K_d must be positive definite: {:?}", self.k_d)));
        }
        if self.s22.iter().any(|s| !(*s <= 0.0)) {
            return Err(domain(format!("S22 must be negative semi-definite: {:?}", self.s22)));
        }
        if !(self.s22[0] < 0.0 && self.s22[2] < 0.0) {
            return Err(domain("S22 must be strictly negative on the surge and yaw axes"));
        }
        if !(self.beta > 0.0) {
            return Err(domain("look-ahead distance beta must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(domain("estimator gain alpha must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.alpha) {
            return Err(domain("epsilon must satisfy 0 < epsilon < alpha"));
        }
        Ok(())
    }

    pub fn k_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.k_d[0], 0.0, 0.0, self.k_d[1])
    }

    /// `S11(r)`, rebuilt from the measured yaw rate.
    pub fn s11(&self, r: f64) -> Matrix2<f64> {
        let [k1, k2] = self.k_d;
        Matrix2::new(-1.0, r / (2.0 * k2), -r / (2.0 * k1), -1.0)
    }

    pub fn s12(&self) -> Matrix2x3<f64> {
        Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 0.0, self.beta)
    }

    /// `Δ = [β, 0]`
    pub fn delta(&self) -> Vec2 {
        Vec2::new(self.beta, 0.0)
    }
}

/// Position and reference projected onto the current body axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyFrame {
    /// `[ξ¹, ξ², ψ]`
    pub xi: Vec3,
    /// `[ξ¹_d, ξ²_d]`
    pub xi_d: Vec2,
}

pub fn body_transform(q: &Vec3, q_ref: &Vec2) -> BodyFrame {
    let rt = rotation(q[2]).transpose();
    let xi = rt * Vec2::new(q[0], q[1]);
    BodyFrame {
        xi: Vec3::new(xi[0], xi[1], q[2]),
        xi_d: rt * q_ref,
    }
}

/// Look-ahead error `e_b = [ξ¹ + β − ξ¹_d, ξ² − ξ²_d]`.
pub fn tracking_error(frame: &BodyFrame, beta: f64) -> Vec2 {
    Vec2::new(frame.xi[0] + beta - frame.xi_d[0], frame.xi[1] - frame.xi_d[1])
}

/// `𝒯(r) = [[0, −r], [r, 0]]`
pub fn yaw_coupling(r: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, -r, r, 0.0)
}

/// Surge and yaw-rate references `(u_d, r_d)`.
pub fn reference_velocity(e_b: &Vec2, r: f64, v: f64, psi: f64, qdot_ref: &Vec2, gains: &TrackingGains) -> (f64, f64) {
    let omega_inv = Vec2::new(1.0, 1.0 / gains.beta);
    let feedback = (yaw_coupling(r) + 2.0 * gains.s11(r) * gains.k_matrix()) * e_b;
    let rest = rotation(psi).transpose() * qdot_ref - Vec2::new(0.0, v);
    let out = match gains.omega_scope {
        OmegaScope::Full => (feedback + rest).component_mul(&omega_inv),
        OmegaScope::FirstTerm => feedback.component_mul(&omega_inv) + rest,
    };
    (out[0], out[1])
}

/// Rate of the estimator's auxiliary state `z`, where `τ̂_d = z + α p`.
///
/// Chosen so that `d/dt τ̂_d = −α (τ̂_d − τ_d)`.
pub fn estimator_rhs(z: &Vec3, state: &VesselState, params: &VesselParams, tau_c: &Wrench, alpha: f64) -> Vec3 {
    let nu = params.velocity(&state.p);
    let open_loop = -damping_bar(&state.p, params) * nu + tau_c.tau;
    -(z + state.p * alpha) * alpha - open_loop * alpha
}

/// Initial auxiliary state giving `τ̂_d(0) = tau_hat0`.
pub fn estimator_init(tau_hat0: &Vec3, state: &VesselState, alpha: f64) -> Vec3 {
    tau_hat0 - state.p * alpha
}

pub fn estimate(z: &Vec3, state: &VesselState, alpha: f64) -> Vec3 {
    z + state.p * alpha
}

/// IDA-PBC law. Returns `(τ_u, τ_r)`; sway is never commanded.
pub fn control_law(
    state: &VesselState,
    e_b: &Vec2,
    p_tilde: &Vec3,
    tau_hat: &Vec3,
    ref_vel_dot: (f64, f64),
    gains: &TrackingGains,
    params: &VesselParams,
) -> (f64, f64) {
    let s12t = gains.s12().transpose();
    let k = gains.k_matrix();
    let nu = params.velocity(&state.p);
    let s22 = Vec3::from(gains.s22);
    let feedforward = Vec3::new(params.mass[0] * ref_vel_dot.0, 0.0, params.mass[2] * ref_vel_dot.1);
    let full = damping_bar(&state.p, params) * nu - 2.0 * s12t * (k * e_b)
        + 2.0 * s12t * (k * gains.delta())
        + s22.component_mul(&params.velocity(p_tilde))
        - tau_hat
        + feedforward;
    (full[0], full[2])
}

/// `½ p̃ᵀM⁻¹p̃ + e_bᵀ K_d e_b`
pub fn error_hamiltonian(e_b: &Vec2, p_tilde: &Vec3, gains: &TrackingGains, params: &VesselParams) -> f64 {
    0.5 * p_tilde.dot(&params.velocity(p_tilde)) + e_b.dot(&(gains.k_matrix() * e_b))
}

/// Ultimate-bound constants: `L̇ ≤ −c1 L + c2` and the radius `√(c2/c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UubCertificate {
    pub c1: f64,
    pub c2: f64,
    pub radius: f64,
}

/// The three candidate decay constants whose minimum is `c1`.
pub fn decay_terms(gains: &TrackingGains, params: &VesselParams) -> [f64; 3] {
    // damping injection, restricted to the actuated (surge, yaw) subspace
    let m_inv = [1.0 / params.mass[0], 1.0 / params.mass[2]];
    let s22 = [gains.s22[0], gains.s22[2]];
    let weighted = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        m_inv[0] * s22[0] * m_inv[0],
        m_inv[1] * s22[1] * m_inv[1],
    ]));
    let first = -2.0 * max_eigenvalue(&weighted) / m_inv[0].max(m_inv[1]);

    let k = gains.k_matrix();
    let ks11k = k.transpose() * gains.s11(0.0) * k;
    let sym = DMatrix::from_row_slice(2, 2, ks11k.as_slice()).transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let second = -max_eigenvalue(&sym) / gains.k_d[0].max(gains.k_d[1]);

    let third = 2.0 * gains.alpha - 2.0 * gains.epsilon;
    [first, second, third]
}

pub fn uub_certificate(gains: &TrackingGains, params: &VesselParams, tau_max: f64) -> Result<UubCertificate> {
    gains.validate()?;
    let c1 = decay_terms(gains, params).into_iter().fold(f64::INFINITY, f64::min);
    if !(c1 > 0.0) {
        return Err(Error::CertificateUnavailable { c1 });
    }
    let c2 = tau_max * tau_max / (4.0 * gains.epsilon);
    Ok(UubCertificate {
        c1,
        c2,
        radius: (c2 / c1).sqrt(),
    })
}

/// What one controller update produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub tau_u: f64,
    pub tau_r: f64,
    pub e_b: Vec2,
    pub p_tilde: Vec3,
    pub u_d: f64,
    pub r_d: f64,
}

impl ControlOutput {
    pub fn wrench(&self) -> Wrench {
        Wrench::actuated(self.tau_u, self.tau_r)
    }
}

/// Sampled controller for one vessel. Reference accelerations come from
/// backward differences of `(u_d, r_d)` between updates.
#[derive(Debug, Clone)]
pub struct TrackingController {
    gains: TrackingGains,
    params: VesselParams,
    period: f64,
    prev_ref_vel: Option<(f64, f64)>,
}

impl TrackingController {
    pub fn new(gains: TrackingGains, params: VesselParams, period: f64) -> Result<Self> {
        gains.validate()?;
        params.validate()?;
        if !(period > 0.0) {
            return Err(domain("controller period must be positive"));
        }
        Ok(Self {
            gains,
            params,
            period,
            prev_ref_vel: None,
        })
    }

    pub fn gains(&self) -> &TrackingGains {
        &self.gains
    }

    pub fn params(&self) -> &VesselParams {
        &self.params
    }

    pub fn update(&mut self, state: &VesselState, tau_hat: &Vec3, q_ref: &Vec2, qdot_ref: &Vec2) -> ControlOutput {
        let frame = body_transform(&state.q, q_ref);
        let e_b = tracking_error(&frame, self.gains.beta);
        let nu = self.params.velocity(&state.p);
        let (u_d, r_d) = reference_velocity(&e_b, nu[2], nu[1], state.q[2], qdot_ref, &self.gains);
        let ref_vel_dot = match self.prev_ref_vel {
            Some((u0, r0)) => ((u_d - u0) / self.period, (r_d - r0) / self.period),
            None => (0.0, 0.0),
        };
        self.prev_ref_vel = Some((u_d, r_d));
        // sway reference is the measured sway, so p̃ has no sway component
        let p_d = self.params.momentum(&Vec3::new(u_d, nu[1], r_d));
        let p_tilde = state.p - p_d;
        let (tau_u, tau_r) = control_law(state, &e_b, &p_tilde, tau_hat, ref_vel_dot, &self.gains, &self.params);
        ControlOutput {
            tau_u,
            tau_r,
            e_b,
            p_tilde,
            u_d,
            r_d,
        }
    }
}
