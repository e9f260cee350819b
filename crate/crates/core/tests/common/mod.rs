#![allow(dead_code)]

use mvharnack::model::{DriftSpec, HamiltonianModel, SigmaSpec};
use mvharnack::{DiniModulus, Mat};

/// `m = d = 1` kinetic model with drift `a1 x1 + a2 x2 + a3 · mean`.
pub fn scalar_linear(a1: f64, a2: f64, a3: [f64; 2], sigma: f64, horizon: f64) -> HamiltonianModel {
    HamiltonianModel::new(
        1,
        1,
        Mat::identity(1),
        SigmaSpec::Constant {
            matrix: Mat::from_rows(&[vec![sigma]]).unwrap(),
        },
        DriftSpec::LinearMeanField {
            a1: Mat::from_rows(&[vec![a1]]).unwrap(),
            a2: Mat::from_rows(&[vec![a2]]).unwrap(),
            a3: Mat::from_rows(&[a3.to_vec()]).unwrap(),
        },
        2.0,
        0.75,
        DiniModulus::power(0.5).unwrap(),
        horizon,
    )
    .unwrap()
}

pub fn bounded_scalar(horizon: f64) -> HamiltonianModel {
    use mvharnack::model::{FourierTerm, RidgeTerm};
    HamiltonianModel::new(
        1,
        1,
        Mat::identity(1),
        SigmaSpec::Constant {
            matrix: Mat::identity(1),
        },
        DriftSpec::BoundedInteraction {
            fourier: vec![FourierTerm {
                amplitude: vec![0.5],
                frequency: vec![1.0, 0.5],
            }],
            ridges: vec![RidgeTerm {
                coefficient: vec![-0.8],
                direction: vec![0.5, 1.0],
            }],
            holder: Some(vec![0.2]),
        },
        2.0,
        0.75,
        DiniModulus::power(0.5).unwrap(),
        horizon,
    )
    .unwrap()
}

fn add(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// Classical RK4 for `z' = rhs(z)` from `z0` over `[0, t]` in `n` steps.
pub fn rk4(rhs: impl Fn(&[f64]) -> Vec<f64>, z0: &[f64], t: f64, n: usize) -> Vec<f64> {
    let h = t / n as f64;
    let mut z = z0.to_vec();
    for _ in 0..n {
        let k1 = rhs(&z);
        let k2 = rhs(&add(&z, &k1, h / 2.0));
        let k3 = rhs(&add(&z, &k2, h / 2.0));
        let k4 = rhs(&add(&z, &k3, h));
        for i in 0..z.len() {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z
}

/// Self-consistent mean of the scalar linear mean-field model.
pub fn mean_field_mean(a1: f64, a2: f64, a3: [f64; 2], z0: [f64; 2], t: f64) -> [f64; 2] {
    let z = rk4(
        |z| vec![z[1], a1 * z[0] + a2 * z[1] + a3[0] * z[0] + a3[1] * z[1]],
        &z0,
        t,
        20_000,
    );
    [z[0], z[1]]
}

/// `e^{Kt} v` for `K = [[0, 1], [a1, a2]]` (frozen-law linear flow).
pub fn linear_flow(a1: f64, a2: f64, v: [f64; 2], t: f64) -> [f64; 2] {
    let z = rk4(|z| vec![z[1], a1 * z[0] + a2 * z[1]], &v, t, 20_000);
    [z[0], z[1]]
}
