//! Jerk-controlled point-mass model with linear drag:
//! p' = v, v' = a - D v, a' = j, discretized with the explicit Euler step.

use serde::{Deserialize, Serialize};

use crate::real::{real, Real};
use crate::vec3::Vec3;

/// Standard gravity used by the default limit set.
pub const GRAVITY: f64 = 9.81;

/// Full agent state: position, velocity, acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState<T> {
    pub p: Vec3<T>,
    pub v: Vec3<T>,
    pub a: Vec3<T>,
}

impl<T: Real> AgentState<T> {
    pub fn at_rest(p: Vec3<T>) -> Self {
        Self { p, v: Vec3::zero(), a: Vec3::zero() }
    }

    pub fn to_array(&self) -> [T; 9] {
        [
            self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z, self.a.x, self.a.y,
            self.a.z,
        ]
    }

    pub fn from_array(x: [T; 9]) -> Self {
        Self {
            p: Vec3::new(x[0], x[1], x[2]),
            v: Vec3::new(x[3], x[4], x[5]),
            a: Vec3::new(x[6], x[7], x[8]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

/// Control input: jerk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JerkInput<T> {
    pub j: Vec3<T>,
}

impl<T: Real> JerkInput<T> {
    pub fn new(j: Vec3<T>) -> Self {
        Self { j }
    }

    pub fn zero() -> Self {
        Self { j: Vec3::zero() }
    }
}

/// Actuation bounds and drag coefficients. `v_max` is not an optimization
/// constraint (drag limits the speed); it only sizes reachable regions and
/// caps reference sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits<T> {
    pub a_x_max: T,
    pub a_y_max: T,
    pub a_z_max: T,
    pub a_z_min: T,
    pub j_x_max: T,
    pub j_y_max: T,
    pub j_z_max: T,
    pub v_max: T,
    /// Diagonal linear drag coefficients (1/s).
    pub d_lin: Vec3<T>,
}

impl<T: Real> Default for Limits<T> {
    /// Benchmark limit set: |a_xy| <= 2g, a_z in [-g, g], |j| <= 90,
    /// v_max = 4, unit drag on every axis.
    fn default() -> Self {
        let g: T = real(GRAVITY);
        Self {
            a_x_max: real::<T>(2.0) * g,
            a_y_max: real::<T>(2.0) * g,
            a_z_max: g,
            a_z_min: -g,
            j_x_max: real(90.0),
            j_y_max: real(90.0),
            j_z_max: real(90.0),
            v_max: real(4.0),
            d_lin: Vec3::splat(T::one()),
        }
    }
}

impl<T: Real> Limits<T> {
    pub fn unbounded() -> Self {
        Self {
            a_x_max: T::infinity(),
            a_y_max: T::infinity(),
            a_z_max: T::infinity(),
            a_z_min: T::neg_infinity(),
            j_x_max: T::infinity(),
            j_y_max: T::infinity(),
            j_z_max: T::infinity(),
            v_max: T::infinity(),
            d_lin: Vec3::zero(),
        }
    }
}

/// One explicit Euler step of the drag model.
pub fn step<T: Real>(
    state: &AgentState<T>,
    input: &JerkInput<T>,
    h: T,
    d_lin: Vec3<T>,
) -> AgentState<T> {
    let drag = Vec3::new(
        d_lin.x * state.v.x,
        d_lin.y * state.v.y,
        d_lin.z * state.v.z,
    );
    AgentState {
        p: state.p + state.v * h,
        v: state.v + (state.a - drag) * h,
        a: state.a + input.j * h,
    }
}

/// A named bound violated by a state or input.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation<T> {
    pub bound: &'static str,
    pub excess: T,
}

const CHECK_TOL: f64 = 1e-9;

/// Checks the acceleration and jerk bounds at the default tolerance.
pub fn check<T: Real>(
    state: &AgentState<T>,
    input: &JerkInput<T>,
    limits: &Limits<T>,
) -> Vec<Violation<T>> {
    check_with_tol(state, input, limits, real(CHECK_TOL))
}

/// Checks the acceleration and jerk bounds at a caller-chosen tolerance;
/// each violation reports the bound name and the excess.
pub fn check_with_tol<T: Real>(
    state: &AgentState<T>,
    input: &JerkInput<T>,
    limits: &Limits<T>,
    tol: T,
) -> Vec<Violation<T>> {
    let mut out = Vec::new();
    let mut push = |bound: &'static str, excess: T| {
        if excess > tol {
            out.push(Violation { bound, excess });
        }
    };
    push("a_x_max", state.a.x.abs() - limits.a_x_max);
    push("a_y_max", state.a.y.abs() - limits.a_y_max);
    push("a_z_max", state.a.z - limits.a_z_max);
    push("a_z_min", limits.a_z_min - state.a.z);
    push("j_x_max", input.j.x.abs() - limits.j_x_max);
    push("j_y_max", input.j.y.abs() - limits.j_y_max);
    push("j_z_max", input.j.z.abs() - limits.j_z_max);
    out
}
