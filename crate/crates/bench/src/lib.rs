//! Fixtures shared by the benchmarks.

use mvharnack::model::{FourierTerm, RidgeTerm};
use mvharnack::{DiniModulus, DriftSpec, EmpiricalMeasure, HamiltonianModel, InitialLaw, Mat, RngPolicy, SigmaSpec};

/// `m = d = 1` model with bounded Fourier and ridge drift terms.
pub fn bounded_model(horizon: f64) -> HamiltonianModel {
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
        DiniModulus::power(0.5).expect("modulus"),
        horizon,
    )
    .expect("model")
}

/// `n` uniform atoms drawn from a standard Gaussian around `mean`.
pub fn gaussian_cloud(n: usize, mean: [f64; 2], seed: u64) -> EmpiricalMeasure {
    let law = InitialLaw::Gaussian {
        mean: mean.to_vec(),
        std: 1.0,
    };
    let coords = law.sample(n, &RngPolicy::new(seed)).expect("sample");
    EmpiricalMeasure::uniform(1, 1, coords).expect("cloud")
}
