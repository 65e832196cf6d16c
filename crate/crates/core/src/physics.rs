//! Compressible-flow state algebra in two dimensions.
//!
//! Conserved variables are `[rho, rho v1, rho v2, rho e]`. Convective fluxes
//! are written in arbitrary Lagrangian-Eulerian form, i.e. shifted by the
//! grid velocity; viscous fluxes are not.

use serde::{Deserialize, Serialize};
use crate::error::{Error, Result};

pub const NVAR: usize = 4;

pub type StateVec = [f64; NVAR];
/// One 4-vector per coordinate direction.
pub type FluxPair = [StateVec; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedState(pub StateVec);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub v1: f64,
    pub v2: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridVelocity {
    pub vg1: f64,
    pub vg2: f64,
}

impl GridVelocity {
    pub const ZERO: Self = Self { vg1: 0.0, vg2: 0.0 };

    pub fn new(vg1: f64, vg2: f64) -> Self {
        Self { vg1, vg2 }
    }

    pub fn normal(&self, n: [f64; 2]) -> f64 {
        self.vg1 * n[0] + self.vg2 * n[1]
    }
}

/// Perfect gas with Stokes' hypothesis and constant Prandtl number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasModel {
    pub gamma: f64,
    pub r_gas: f64,
    pub mu: f64,
    pub prandtl: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            r_gas: 287.058,
            mu: 0.0,
            prandtl: 0.72,
        }
    }
}

impl GasModel {
    pub fn new(gamma: f64, r_gas: f64, mu: f64, prandtl: f64) -> Result<Self> {
        let gas = Self {
            gamma,
            r_gas,
            mu,
            prandtl,
        };
        gas.validate()?;
        Ok(gas)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.r_gas > 0.0 && self.mu >= 0.0 && self.prandtl > 0.0) {
            return Err(Error::Config(format!("invalid gas model {self:?}")));
        }
        Ok(())
    }

    /// Second viscosity, `-2/3 mu`.
    pub fn lambda(&self) -> f64 {
        -2.0 / 3.0 * self.mu
    }

    /// Heat conductivity `k = gamma R mu / ((gamma - 1) Pr)`.
    pub fn conductivity(&self) -> f64 {
        self.gamma * self.r_gas * self.mu / ((self.gamma - 1.0) * self.prandtl)
    }

    pub fn is_viscous(&self) -> bool {
        self.mu > 0.0
    }

    pub fn sound_speed(&self, rho: f64, p: f64) -> f64 {
        (self.gamma * p / rho).sqrt()
    }
}

impl ConservedState {
    pub fn rho(&self) -> f64 {
        self.0[0]
    }

    pub fn from_primitive(prim: Primitive, gas: &GasModel) -> Result<Self> {
        if !(prim.rho > 0.0 && prim.p > 0.0) {
            return Err(Error::InvalidState {
                rho: prim.rho,
                pressure: prim.p,
            });
        }
        Ok(Self(primitive_to_conserved(&prim, gas.gamma)))
    }

    pub fn to_primitive(&self, gas: &GasModel) -> Result<Primitive> {
        let p = eos_pressure(self, gas)?;
        let rho = self.0[0];
        Ok(Primitive {
            rho,
            v1: self.0[1] / rho,
            v2: self.0[2] / rho,
            p,
        })
    }
}

pub(crate) fn primitive_to_conserved(prim: &Primitive, gamma: f64) -> StateVec {
    let kin = 0.5 * prim.rho * (prim.v1 * prim.v1 + prim.v2 * prim.v2);
    [
        prim.rho,
        prim.rho * prim.v1,
        prim.rho * prim.v2,
        prim.p / (gamma - 1.0) + kin,
    ]
}

#[inline]
pub(crate) fn pressure_unchecked(u: &StateVec, gamma: f64) -> f64 {
    (gamma - 1.0) * (u[3] - 0.5 * (u[1] * u[1] + u[2] * u[2]) / u[0])
}

/// `p = (gamma - 1)(rho e - rho |v|^2 / 2)`, rejecting non-positive results.
pub fn eos_pressure(state: &ConservedState, gas: &GasModel) -> Result<f64> {
    let u = &state.0;
    if !(u[0] > 0.0) {
        return Err(Error::InvalidState {
            rho: u[0],
            pressure: f64::NAN,
        });
    }
    let p = pressure_unchecked(u, gas.gamma);
    if !(p > 0.0) {
        return Err(Error::InvalidState {
            rho: u[0],
            pressure: p,
        });
    }
    Ok(p)
}

#[inline]
pub(crate) fn state_is_admissible(u: &StateVec, gamma: f64) -> bool {
    u[0] > 0.0 && pressure_unchecked(u, gamma) > 0.0
}

/// ALE Euler flux in both coordinate directions for a pre-computed pressure.
#[inline]
pub(crate) fn ale_flux_with_pressure(u: &StateVec, p: f64, vg: &GridVelocity) -> FluxPair {
    let v1 = u[1] / u[0];
    let v2 = u[2] / u[0];
    let w1 = v1 - vg.vg1;
    let w2 = v2 - vg.vg2;
    [
        [u[0] * w1, u[1] * w1 + p, u[2] * w1, u[3] * w1 + p * v1],
        [u[0] * w2, u[1] * w2, u[2] * w2 + p, u[3] * w2 + p * v2],
    ]
}

/// Convective flux columns `F_i(U) - vg_i U`.
pub fn ale_convective_flux(
    state: &ConservedState,
    vg: &GridVelocity,
    gas: &GasModel,
) -> Result<FluxPair> {
    let p = eos_pressure(state, gas)?;
    Ok(ale_flux_with_pressure(&state.0, p, vg))
}

/// Normal ALE flux `(F - vg_n U) . n` without validity checks.
#[inline]
pub(crate) fn ale_normal_flux(u: &StateVec, p: f64, n: [f64; 2], vgn: f64) -> StateVec {
    let rho = u[0];
    let vn = (u[1] * n[0] + u[2] * n[1]) / rho;
    let wn = vn - vgn;
    [
        rho * wn,
        u[1] * wn + p * n[0],
        u[2] * wn + p * n[1],
        u[3] * wn + p * vn,
    ]
}

/// Temperature `T = p / (rho R)`.
pub fn temperature(state: &ConservedState, gas: &GasModel) -> Result<f64> {
    Ok(eos_pressure(state, gas)? / (state.0[0] * gas.r_gas))
}

/// Primitive variable set used for gradients: `[rho, v1, v2, T]`.
#[inline]
pub(crate) fn lifting_variables(u: &StateVec, gas: &GasModel) -> StateVec {
    let rho = u[0];
    let p = pressure_unchecked(u, gas.gamma);
    [rho, u[1] / rho, u[2] / rho, p / (rho * gas.r_gas)]
}

/// Viscous flux columns from gradients of `[rho, v1, v2, T]`.
///
/// `grad[d][k]` is the derivative of lifting variable `k` along `x_d`. The
/// density gradient is carried along but does not enter the flux.
pub fn viscous_flux(state: &ConservedState, grad: &FluxPair, gas: &GasModel) -> FluxPair {
    viscous_flux_raw(&state.0, grad, gas)
}

#[inline]
pub(crate) fn viscous_flux_raw(u: &StateVec, grad: &FluxPair, gas: &GasModel) -> FluxPair {
    let v1 = u[1] / u[0];
    let v2 = u[2] / u[0];
    let mu = gas.mu;
    let lambda = gas.lambda();
    let k = gas.conductivity();
    let (du1_dx1, du1_dx2) = (grad[0][1], grad[1][1]);
    let (du2_dx1, du2_dx2) = (grad[0][2], grad[1][2]);
    let div = du1_dx1 + du2_dx2;
    let tau11 = 2.0 * mu * du1_dx1 + lambda * div;
    let tau22 = 2.0 * mu * du2_dx2 + lambda * div;
    let tau12 = mu * (du1_dx2 + du2_dx1);
    let q1 = -k * grad[0][3];
    let q2 = -k * grad[1][3];
    [
        [0.0, tau11, tau12, tau11 * v1 + tau12 * v2 - q1],
        [0.0, tau12, tau22, tau12 * v1 + tau22 * v2 - q2],
    ]
}

/// Harten-Hyman modulus for an acoustic wave.
#[inline]
fn entropy_fixed_abs(lambda_roe: f64, lambda_left: f64, lambda_right: f64) -> f64 {
    let delta = 0.0f64
        .max(lambda_roe - lambda_left)
        .max(lambda_right - lambda_roe);
    let a = lambda_roe.abs();
    if a < delta {
        0.5 * (lambda_roe * lambda_roe + delta * delta) / delta
    } else {
        a
    }
}

/// Roe flux across a face with unit normal `normal` pointing from left to
/// right, for a face moving with normal grid speed `vg_normal`.
pub fn roe_flux(
    left: &ConservedState,
    right: &ConservedState,
    normal: [f64; 2],
    vg_normal: f64,
    gas: &GasModel,
) -> Result<StateVec> {
    let pl = eos_pressure(left, gas)?;
    let pr = eos_pressure(right, gas)?;
    roe_flux_raw(&left.0, &right.0, pl, pr, normal, vg_normal, gas.gamma)
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn roe_flux_raw(
    ul: &StateVec,
    ur: &StateVec,
    pl: f64,
    pr: f64,
    n: [f64; 2],
    vgn: f64,
    gamma: f64,
) -> Result<StateVec> {
    let fl = ale_normal_flux(ul, pl, n, vgn);
    let fr = ale_normal_flux(ur, pr, n, vgn);

    let (rl, rr) = (ul[0], ur[0]);
    let (v1l, v2l) = (ul[1] / rl, ul[2] / rl);
    let (v1r, v2r) = (ur[1] / rr, ur[2] / rr);
    let hl = (ul[3] + pl) / rl;
    let hr = (ur[3] + pr) / rr;

    let sl = rl.sqrt();
    let sr = rr.sqrt();
    let inv = 1.0 / (sl + sr);
    let v1 = (sl * v1l + sr * v1r) * inv;
    let v2 = (sl * v2l + sr * v2r) * inv;
    let h = (sl * hl + sr * hr) * inv;
    let q2 = v1 * v1 + v2 * v2;
    let c2 = (gamma - 1.0) * (h - 0.5 * q2);
    if !(c2 > 0.0) {
        return Err(Error::InvalidState {
            rho: sl * sr,
            pressure: c2,
        });
    }
    let c = c2.sqrt();
    let rho = sl * sr;
    let vn = v1 * n[0] + v2 * n[1];

    let vnl = v1l * n[0] + v2l * n[1];
    let vnr = v1r * n[0] + v2r * n[1];
    let cl = (gamma * pl / rl).sqrt();
    let cr = (gamma * pr / rr).sqrt();

    let d_rho = rr - rl;
    let d_p = pr - pl;
    let d_vn = vnr - vnl;
    let d_v1 = v1r - v1l;
    let d_v2 = v2r - v2l;

    let a1 = (d_p - rho * c * d_vn) / (2.0 * c2);
    let a2 = d_rho - d_p / c2;
    let a4 = (d_p + rho * c * d_vn) / (2.0 * c2);
    let shear1 = rho * (d_v1 - d_vn * n[0]);
    let shear2 = rho * (d_v2 - d_vn * n[1]);

    let l1 = entropy_fixed_abs(vn - c - vgn, vnl - cl - vgn, vnr - cr - vgn);
    let l2 = (vn - vgn).abs();
    let l4 = entropy_fixed_abs(vn + c - vgn, vnl + cl - vgn, vnr + cr - vgn);

    let r1 = [1.0, v1 - c * n[0], v2 - c * n[1], h - c * vn];
    let r2 = [1.0, v1, v2, 0.5 * q2];
    let rs = [0.0, shear1, shear2, v1 * shear1 + v2 * shear2];
    let r4 = [1.0, v1 + c * n[0], v2 + c * n[1], h + c * vn];

    let mut out = [0.0; NVAR];
    for k in 0..NVAR {
        let diss = l1 * a1 * r1[k] + l2 * (a2 * r2[k] + rs[k]) + l4 * a4 * r4[k];
        out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * diss;
    }
    Ok(out)
}

/// Parameters of the advected isentropic vortex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VortexParams {
    /// Vortex intensity.
    pub eps: f64,
    /// Vortex radius.
    pub rc: f64,
    pub rho_inf: f64,
    pub v_inf: f64,
    /// Freestream flow angle.
    pub theta: f64,
    pub ma_inf: f64,
    pub center: [f64; 2],
    /// Periodic box lengths; images are folded to the nearest copy.
    pub period: Option<[f64; 2]>,
}

impl Default for VortexParams {
    fn default() -> Self {
        Self {
            eps: 1.0,
            rc: 1.0,
            rho_inf: 1.0,
            v_inf: 1.0,
            theta: 0.5f64.atan(),
            ma_inf: 0.3,
            center: [10.0, 10.0],
            period: Some([20.0, 20.0]),
        }
    }
}

impl VortexParams {
    /// Freestream pressure consistent with the Mach number.
    pub fn p_inf(&self, gamma: f64) -> f64 {
        self.rho_inf * self.v_inf * self.v_inf / (gamma * self.ma_inf * self.ma_inf)
    }

    pub fn freestream_velocity(&self) -> [f64; 2] {
        [
            self.v_inf * self.theta.cos(),
            self.v_inf * self.theta.sin(),
        ]
    }
}

/// Isentropic vortex on a uniform stream, advected with the stream.
///
/// Tangential velocity `eps v_inf (r/rc) exp((1 - r^2/rc^2)/2)`; temperature
/// and density follow from radial equilibrium along an isentrope.
pub fn exact_isentropic_vortex(x: [f64; 2], t: f64, params: &VortexParams, gamma: f64) -> ConservedState {
    let vel = params.freestream_velocity();
    let mut dx = [
        x[0] - params.center[0] - vel[0] * t,
        x[1] - params.center[1] - vel[1] * t,
    ];
    if let Some(period) = params.period {
        for d in 0..2 {
            dx[d] -= period[d] * (dx[d] / period[d]).round();
        }
    }
    let (xr, yr) = (dx[0] / params.rc, dx[1] / params.rc);
    let r2 = xr * xr + yr * yr;
    let f = 0.5 * (1.0 - r2);
    let ef = f.exp();
    let amp = params.eps * params.v_inf * ef;
    let v1 = vel[0] - amp * yr;
    let v2 = vel[1] + amp * xr;
    let temp_ratio =
        1.0 - 0.5 * (gamma - 1.0) * params.eps * params.eps * params.ma_inf * params.ma_inf * ef * ef;
    let rho = params.rho_inf * temp_ratio.powf(1.0 / (gamma - 1.0));
    let p = params.p_inf(gamma) * temp_ratio.powf(gamma / (gamma - 1.0));
    ConservedState(primitive_to_conserved(&Primitive { rho, v1, v2, p }, gamma))
}

/// Oblique density wave advected by a uniform stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityWaveParams {
    pub alpha: f64,
    pub advect_velocity: [f64; 2],
    pub p0: f64,
}

impl Default for DensityWaveParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            advect_velocity: [1.0, 1.0],
            p0: 1.0,
        }
    }
}

/// `rho = 2 + alpha sin(pi (x1 + x2 - (a1 + a2) t))` with uniform velocity and
/// pressure; an exact solution of the Euler equations.
pub fn exact_density_wave(x: [f64; 2], t: f64, params: &DensityWaveParams, gamma: f64) -> ConservedState {
    let a = params.advect_velocity;
    let phase = std::f64::consts::PI * (x[0] + x[1] - (a[0] + a[1]) * t);
    let rho = 2.0 + params.alpha * phase.sin();
    ConservedState(primitive_to_conserved(
        &Primitive {
            rho,
            v1: a[0],
            v2: a[1],
            p: params.p0,
        },
        gamma,
    ))
}
