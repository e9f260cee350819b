//! Log-Harnack check between two point masses for a bounded-drift model.

use mvharnack::harnack::{log_harnack_check, HarnackSettings, TestFunction};
use mvharnack::model::{FourierTerm, RidgeTerm};
use mvharnack::{
    DiniModulus, DriftSpec, EmpiricalMeasure, HamiltonianModel, Mat, Result, RngPolicy, SigmaSpec, SplitState,
};

fn main() -> Result<()> {
    let model = HamiltonianModel::new(
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
            holder: None,
        },
        2.0,
        0.75,
        DiniModulus::power(0.5)?,
        1.0,
    )?;
    let gamma = EmpiricalMeasure::dirac(&SplitState::new(vec![0.0], vec![0.0])?);
    let gamma_tilde = EmpiricalMeasure::dirac(&SplitState::new(vec![0.3], vec![0.0])?);
    let f = TestFunction::Bump {
        floor: 0.1,
        scale: 1.0,
    };
    let settings = HarnackSettings {
        t: 1.0,
        dt: 0.01,
        n_particles: 64,
        n_paths: 20_000,
        max_pairs: 4,
    };
    let report = log_harnack_check(&model, &gamma, &gamma_tilde, &f, &settings, &RngPolicy::new(1))?;
    println!(
        "lhs {:.4} ± {:.4}, rhs {:.4} ± {:.4}, slack {:.4}, pass {}",
        report.lhs.value, report.lhs.stderr, report.rhs.value, report.rhs.stderr, report.slack, report.pass
    );
    Ok(())
}
