//! 3-DOF underactuated surface vessel in port-Hamiltonian form.
//!
//! State is the pose `q = [x, y, ψ]` and the body-frame momentum `p = Mν`,
//! `ν = [u, v, r]`. With zero potential energy the Hamiltonian is
//! `½ pᵀM⁻¹p` and
//!
//! ```text
//! q̇ = J(ψ) M⁻¹p
//! ṗ = −(C(M⁻¹p) + D) M⁻¹p + τ_c + τ_d
//! ```

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::ode::OdeState;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselParams {
    /// Diagonal of the generalized mass matrix (kg, kg, kg·m²).
    pub mass: [f64; 3],
    /// Diagonal of the linear damping matrix (N·s/m, N·s/m, N·m·s).
    pub damping: [f64; 3],
    /// Distance between the two stern thrusters (m).
    pub thruster_separation: f64,
}

impl Default for VesselParams {
    fn default() -> Self {
        Self {
            mass: [60.0, 60.0, 6.0],
            damping: [20.0, 40.0, 5.0],
            thruster_separation: 0.4,
        }
    }
}

impl VesselParams {
    pub fn validate(&self) -> Result<()> {
        if self.mass.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(domain(format!("vessel masses must be positive: {:?}", self.mass)));
        }
        if self.damping.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(domain(format!("vessel damping must be positive: {:?}", self.damping)));
        }
        if !(self.thruster_separation > 0.0) {
            return Err(domain("thruster separation must be positive"));
        }
        Ok(())
    }

    pub fn mass_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::from(self.mass))
    }

    pub fn mass_inverse(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::new(1.0 / self.mass[0], 1.0 / self.mass[1], 1.0 / self.mass[2]))
    }

    pub fn damping_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vec3::from(self.damping))
    }

    /// `ν = M⁻¹p`
    pub fn velocity(&self, p: &Vec3) -> Vec3 {
        Vec3::new(p[0] / self.mass[0], p[1] / self.mass[1], p[2] / self.mass[2])
    }

    /// `p = Mν`
    pub fn momentum(&self, nu: &Vec3) -> Vec3 {
        Vec3::new(nu[0] * self.mass[0], nu[1] * self.mass[1], nu[2] * self.mass[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VesselState {
    /// Pose `[x, y, ψ]`; heading is never wrapped.
    pub q: Vec3,
    /// Momentum `M ν`.
    pub p: Vec3,
}

impl VesselState {
    pub fn at_rest(x: f64, y: f64, psi: f64) -> Self {
        Self {
            q: Vec3::new(x, y, psi),
            p: Vec3::zeros(),
        }
    }

    pub fn kinetic_energy(&self, params: &VesselParams) -> f64 {
        0.5 * self.p.dot(&params.velocity(&self.p))
    }

    /// Heading wrapped into (−π, π], for reporting only.
    pub fn wrapped_heading(&self) -> f64 {
        let w = self.q[2].rem_euclid(std::f64::consts::TAU);
        if w > std::f64::consts::PI {
            w - std::f64::consts::TAU
        } else {
            w
        }
    }
}

impl OdeState for VesselState {
    fn add_scaled(&self, h: f64, rate: &Self) -> Self {
        Self {
            q: self.q + rate.q * h,
            p: self.p + rate.p * h,
        }
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

/// Generalized force `[τ_u, τ_v, τ_r]` in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub tau: Vec3,
}

impl Wrench {
    pub fn new(tau_u: f64, tau_v: f64, tau_r: f64) -> Self {
        Self {
            tau: Vec3::new(tau_u, tau_v, tau_r),
        }
    }

    /// Surge force and yaw moment only; sway is unactuated.
    pub fn actuated(tau_u: f64, tau_r: f64) -> Self {
        Self::new(tau_u, 0.0, tau_r)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_actuated(&self) -> bool {
        self.tau[1] == 0.0
    }
}

pub fn rotation(psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `J(q) = blockdiag(R(ψ), 1)`
pub fn kinematic_transform(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Coriolis–centripetal matrix for body velocity `ν`.
pub fn coriolis(nu: &Vec3, params: &VesselParams) -> Matrix3<f64> {
    let [m1, m2, _] = params.mass;
    let (u, v) = (nu[0], nu[1]);
    Matrix3::new(0.0, 0.0, -m2 * v, 0.0, 0.0, m1 * u, m2 * v, -m1 * u, 0.0)
}

/// `D̄(p) = C(M⁻¹p) + D`
pub fn damping_bar(p: &Vec3, params: &VesselParams) -> Matrix3<f64> {
    coriolis(&params.velocity(p), params) + params.damping_matrix()
}

/// Port-Hamiltonian right-hand side in `(q, p)` coordinates.
pub fn vessel_rhs(state: &VesselState, params: &VesselParams, tau_c: &Wrench, tau_d: &Wrench) -> VesselState {
    let nu = params.velocity(&state.p);
    VesselState {
        q: kinematic_transform(state.q[2]) * nu,
        p: -damping_bar(&state.p, params) * nu + tau_c.tau + tau_d.tau,
    }
}

/// Right-hand side of the same plant in `(q, ν)` coordinates.
pub fn velocity_form_rhs(q: &Vec3, nu: &Vec3, params: &VesselParams, tau_c: &Wrench, tau_d: &Wrench) -> (Vec3, Vec3) {
    let qdot = kinematic_transform(q[2]) * nu;
    let force = -(coriolis(nu, params) + params.damping_matrix()) * nu + tau_c.tau + tau_d.tau;
    (qdot, params.mass_inverse() * force)
}

/// Thrusts of the two stern propellers to a body wrench.
pub fn mix_thrusters(f1: f64, f2: f64, l: f64) -> Result<Wrench> {
    if !(l > 0.0) {
        return Err(domain(format!("thruster separation must be positive, got {l}")));
    }
    Ok(Wrench::actuated(f1 + f2, l * (f1 - f2) / 2.0))
}

/// Inverse of [`mix_thrusters`].
pub fn allocate_thrusters(tau_u: f64, tau_r: f64, l: f64) -> Result<(f64, f64)> {
    if !(l > 0.0) {
        return Err(domain(format!("thruster separation must be positive, got {l}")));
    }
    Ok((tau_u / 2.0 + tau_r / l, tau_u / 2.0 - tau_r / l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    /// N (or N·m on the yaw axis)
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    /// rad
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisDisturbance {
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
    #[serde(default)]
    pub bias: f64,
}

impl AxisDisturbance {
    fn eval(&self, t: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|h| h.amplitude * (h.frequency * t + h.phase).sin())
            .sum::<f64>()
            + self.bias
    }

    fn rate(&self, t: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|h| h.amplitude * h.frequency * (h.frequency * t + h.phase).cos())
            .sum()
    }

    fn bound(&self) -> f64 {
        self.harmonics.iter().map(|h| h.amplitude.abs()).sum::<f64>() + self.bias.abs()
    }

    fn rate_bound(&self) -> f64 {
        self.harmonics.iter().map(|h| (h.amplitude * h.frequency).abs()).sum()
    }
}

/// Sum of harmonics plus a constant bias on each body axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceModel {
    pub axes: [AxisDisturbance; 3],
    /// Declared bound on ‖τ_d(t)‖. Derived from the coefficients if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
}

impl DisturbanceModel {
    pub fn none() -> Self {
        Self::default()
    }

    /// `b¹ sin(b² t + b³) + b⁴` with the same coefficients on every axis.
    pub fn uniform(amplitude: f64, frequency: f64, phase: f64, bias: f64) -> Self {
        let axis = AxisDisturbance {
            harmonics: vec![Harmonic {
                amplitude,
                frequency,
                phase,
            }],
            bias,
        };
        Self {
            axes: [axis.clone(), axis.clone(), axis],
            tau_max: None,
        }
    }

    /// Constant wrench.
    pub fn constant(tau: Vec3) -> Self {
        let axis = |b| AxisDisturbance {
            harmonics: Vec::new(),
            bias: b,
        };
        Self {
            axes: [axis(tau[0]), axis(tau[1]), axis(tau[2])],
            tau_max: None,
        }
    }

    /// `(0.01 sin(0.01 t + 0.01) + 0.01)` on all three axes.
    pub fn pond_experiment() -> Self {
        Self::uniform(0.01, 0.01, 0.01, 0.01)
    }

    pub fn eval(&self, t: f64) -> Wrench {
        Wrench {
            tau: Vec3::new(self.axes[0].eval(t), self.axes[1].eval(t), self.axes[2].eval(t)),
        }
    }

    /// `τ̇_d(t)`
    pub fn rate(&self, t: f64) -> Vec3 {
        Vec3::new(self.axes[0].rate(t), self.axes[1].rate(t), self.axes[2].rate(t))
    }

    /// Per-axis bound `Σ|b¹| + |b⁴|`.
    pub fn axis_bounds(&self) -> Vec3 {
        Vec3::new(self.axes[0].bound(), self.axes[1].bound(), self.axes[2].bound())
    }

    /// Per-axis bound on `|τ̇_d|`.
    pub fn rate_bounds(&self) -> Vec3 {
        Vec3::new(
            self.axes[0].rate_bound(),
            self.axes[1].rate_bound(),
            self.axes[2].rate_bound(),
        )
    }

    /// Bound on the Euclidean norm of `τ_d`: the declared value, or the norm
    /// of the per-axis bounds.
    pub fn tau_max(&self) -> f64 {
        self.tau_max.unwrap_or_else(|| self.axis_bounds().norm())
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = self.axes.iter().all(|a| {
            a.bias.is_finite()
                && a.harmonics
                    .iter()
                    .all(|h| h.amplitude.is_finite() && h.frequency.is_finite() && h.phase.is_finite())
        });
        if !all_finite {
            return Err(domain("disturbance coefficients must be finite"));
        }
        if let Some(declared) = self.tau_max {
            let needed = self.axis_bounds().norm();
            if declared < needed {
                return Err(domain(format!(
                    "declared tau_max {declared} is below the coefficient bound {needed}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::rk4_step;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(0.0), Matrix2::identity());
        let r = rotation(FRAC_PI_2);
        let want = Matrix2::new(0.0, -1.0, 1.0, 0.0);
        assert!((r - want).amax() < 1e-15);
    }

    #[test]
    fn coriolis_examples() {
        let params = VesselParams {
            mass: [1.0, 2.0, 5.0],
            ..VesselParams::default()
        };
        assert_eq!(coriolis(&Vec3::zeros(), &params), Matrix3::zeros());
        let c = coriolis(&Vec3::new(1.0, 2.0, 3.0), &params);
        assert_eq!(c, Matrix3::new(0.0, 0.0, -4.0, 0.0, 0.0, 1.0, 4.0, -1.0, 0.0));
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let params = VesselParams::default();
        let s = VesselState::at_rest(3.0, -2.0, 0.7);
        let d = vessel_rhs(&s, &params, &Wrench::zero(), &Wrench::zero());
        assert_eq!(d, VesselState::default());
    }

    #[test]
    fn pure_surge_by_hand() {
        let params = VesselParams::default();
        let s = VesselState {
            q: Vec3::zeros(),
            p: Vec3::new(params.mass[0], 0.0, 0.0),
        };
        let d = vessel_rhs(&s, &params, &Wrench::zero(), &Wrench::zero());
        assert_eq!(d.q, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(d.p, Vec3::new(-params.damping[0], 0.0, 0.0));
    }

    #[test]
    fn thruster_examples() {
        assert_eq!(mix_thrusters(10.0, 10.0, 0.5).unwrap(), Wrench::new(20.0, 0.0, 0.0));
        assert_eq!(mix_thrusters(10.0, 0.0, 0.5).unwrap(), Wrench::new(10.0, 0.0, 2.5));
        assert_eq!(allocate_thrusters(20.0, 0.0, 0.5).unwrap(), (10.0, 10.0));
        assert!(mix_thrusters(1.0, 1.0, 0.0).is_err());
        assert!(allocate_thrusters(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn disturbance_examples() {
        assert_eq!(DisturbanceModel::none().eval(12.0), Wrench::zero());
        let pond = DisturbanceModel::pond_experiment();
        let at0 = pond.eval(0.0);
        let want = 0.01 * 0.01f64.sin() + 0.01;
        assert!((want - 0.0100999983).abs() < 1e-10);
        for k in 0..3 {
            assert_eq!(at0.tau[k], want);
        }
        assert_eq!(pond.axis_bounds(), Vec3::new(0.02, 0.02, 0.02));
        for k in 0..10_000 {
            let t = k as f64 * 0.37;
            assert!(pond.eval(t).tau.amax() <= 0.02);
            assert!(pond.eval(t).tau.norm() <= pond.tau_max());
        }
    }

    #[test]
    fn declared_bound_must_cover_coefficients() {
        let mut m = DisturbanceModel::pond_experiment();
        m.tau_max = Some(0.01);
        assert!(m.validate().is_err());
        m.tau_max = Some(0.05);
        assert!(m.validate().is_ok());
        assert_eq!(m.tau_max(), 0.05);
    }

    #[test]
    fn unforced_energy_never_increases() {
        let params = VesselParams::default();
        let mut s = VesselState {
            q: Vec3::new(1.0, 2.0, 0.3),
            p: params.momentum(&Vec3::new(1.5, -0.4, 0.8)),
        };
        let mut e = s.kinetic_energy(&params);
        for _ in 0..20_000 {
            s = rk4_step(&s, 0.0, 1e-3, |_, x| {
                vessel_rhs(x, &params, &Wrench::zero(), &Wrench::zero())
            });
            let e1 = s.kinetic_energy(&params);
            assert!(e1 <= e);
            e = e1;
        }
    }

    #[test]
    fn momentum_and_velocity_forms_agree() {
        let params = VesselParams::default();
        let dist = DisturbanceModel::uniform(0.5, 0.7, 0.2, 0.1);
        let tau_c = |t: f64| Wrench::actuated(5.0 * (0.3 * t).sin(), 0.8 * (0.5 * t).cos());
        let h = 1e-3;
        let mut ph = VesselState::at_rest(0.0, 0.0, 0.1);
        let mut vel = (ph.q, Vec3::zeros());
        for k in 0..10_000 {
            let t = k as f64 * h;
            ph = rk4_step(&ph, t, h, |s_t, s| vessel_rhs(s, &params, &tau_c(s_t), &dist.eval(s_t)));
            let flat = nalgebra::Vector6::new(vel.0[0], vel.0[1], vel.0[2], vel.1[0], vel.1[1], vel.1[2]);
            let next = rk4_step(&flat, t, h, |s_t, x| {
                let q = Vec3::new(x[0], x[1], x[2]);
                let nu = Vec3::new(x[3], x[4], x[5]);
                let (qd, nd) = velocity_form_rhs(&q, &nu, &params, &tau_c(s_t), &dist.eval(s_t));
                nalgebra::Vector6::new(qd[0], qd[1], qd[2], nd[0], nd[1], nd[2])
            });
            vel = (
                Vec3::new(next[0], next[1], next[2]),
                Vec3::new(next[3], next[4], next[5]),
            );
        }
        assert!((ph.q - vel.0).amax() < 1e-9);
        assert!((params.velocity(&ph.p) - vel.1).amax() < 1e-9);
    }

    fn arb_vec3(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn rotation_is_orthogonal(psi in -20.0..20.0f64) {
            let r = rotation(psi);
            prop_assert!((r.transpose() * r - Matrix2::identity()).amax() < 1e-14);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn coriolis_is_skew(nu in arb_vec3(10.0)) {
            let c = coriolis(&nu, &VesselParams::default());
            prop_assert_eq!(c + c.transpose(), Matrix3::zeros());
        }

        #[test]
        fn thruster_round_trip(tu in -500.0..500.0f64, tr in -100.0..100.0f64, l in 0.1..2.0f64) {
            let (f1, f2) = allocate_thrusters(tu, tr, l).unwrap();
            let w = mix_thrusters(f1, f2, l).unwrap();
            let scale = f1.abs().max(f2.abs()).max(1.0);
            prop_assert!((w.tau[0] - tu).abs() <= 4.0 * f64::EPSILON * scale);
            prop_assert!((w.tau[2] - tr).abs() <= 4.0 * f64::EPSILON * scale * l);
            prop_assert_eq!(w.tau[1], 0.0);
        }

        #[test]
        fn power_balance(p in arb_vec3(50.0), tu in -10.0..10.0f64, tr in -10.0..10.0f64, d in arb_vec3(1.0)) {
            // d/dt ½pᵀM⁻¹p = −νᵀDν + νᵀ(τ_c + τ_d), checked by central differences in time
            let params = VesselParams::default();
            let s = VesselState { q: Vec3::zeros(), p };
            let tc = Wrench::actuated(tu, tr);
            let td = Wrench { tau: d };
            let rate = vessel_rhs(&s, &params, &tc, &td);
            // the energy is quadratic in p, so a wide central difference is exact
            let h = 1e-2;
            let e = |x: &VesselState| x.kinetic_energy(&params);
            let fd = (e(&s.add_scaled(h, &rate)) - e(&s.add_scaled(-h, &rate))) / (2.0 * h);
            let nu = params.velocity(&p);
            let want = -nu.dot(&(params.damping_matrix() * nu)) + nu.dot(&(tc.tau + td.tau));
            prop_assert!((fd - want).abs() < 1e-9 * want.abs().max(1.0) + 1e-9);
        }
    }
}
