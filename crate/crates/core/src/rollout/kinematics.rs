//! Longitudinal kinematics with a zero-order hold on acceleration.

use crate::domain::VehicleKinState;

/// Advances one step: `v' = v + a dt`, `s' = s + (v + v') dt / 2`.
///
/// If the commanded deceleration would reverse the vehicle, speed is clamped
/// to zero and the position advances by the stopping distance `v² / (2|a|)`.
#[inline]
pub fn step_dynamics(x: VehicleKinState, a: f64, dt: f64) -> VehicleKinState {
    debug_assert!(dt > 0.0);
    let v_next = x.v + a * dt;
    if v_next >= 0.0 {
        VehicleKinState {
            s: x.s + 0.5 * (v_next + x.v) * dt,
            v: v_next,
        }
    } else {
        // a < 0 here, otherwise v_next could not be negative
        VehicleKinState {
            s: x.s + x.v * x.v / (2.0 * -a),
            v: 0.0,
        }
    }
}

/// Closed-form multistep propagation `X_N = (prod A_k) X_0 + sum_n (prod_{k>n} A_k) B_n a_n`
/// with `A_n = [[1, dt_n], [0, 1]]` and `B_n = [dt_n² / 2, dt_n]`. Valid while no
/// zero-speed clamping occurs. Returns every intermediate state `X_1..X_N`.
pub fn propagate_closed_form(x0: VehicleKinState, accels: &[f64], dts: &[f64]) -> Vec<VehicleKinState> {
    assert_eq!(accels.len(), dts.len());
    let mut out = Vec::with_capacity(accels.len());
    for n in 1..=accels.len() {
        // state after n steps as a fresh matrix product (no reuse of step n-1)
        let mut phi = [[1.0, 0.0], [0.0, 1.0]];
        let mut acc = [0.0, 0.0];
        for j in (0..n).rev() {
            let b = [0.5 * dts[j] * dts[j], dts[j]];
            // contribution of a_j: (prod_{k=j+1}^{n-1} A_k) B_j a_j = phi * B_j * a_j
            acc[0] += (phi[0][0] * b[0] + phi[0][1] * b[1]) * accels[j];
            acc[1] += (phi[1][0] * b[0] + phi[1][1] * b[1]) * accels[j];
            // phi <- phi * A_j
            let a = [[1.0, dts[j]], [0.0, 1.0]];
            phi = [
                [
                    phi[0][0] * a[0][0] + phi[0][1] * a[1][0],
                    phi[0][0] * a[0][1] + phi[0][1] * a[1][1],
                ],
                [
                    phi[1][0] * a[0][0] + phi[1][1] * a[1][0],
                    phi[1][0] * a[0][1] + phi[1][1] * a[1][1],
                ],
            ];
        }
        out.push(VehicleKinState {
            s: phi[0][0] * x0.s + phi[0][1] * x0.v + acc[0],
            v: phi[1][0] * x0.s + phi[1][1] * x0.v + acc[1],
        });
    }
    out
}
