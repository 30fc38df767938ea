use dipl0::admm::{run, run_with, Reference, RunConfig};
use dipl0::synth::{gen_synthetic, SynthSpec};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn reference_run_invariants() {
    let (clean, corrupted) = gen_synthetic(&SynthSpec::reference()).unwrap();
    let cfg = RunConfig {
        outer_iterations: 20,
        ..RunConfig::smoothing(3)
    };
    let reference = Reference {
        image: &clean,
        crop: None,
    };
    let mut seen = 0;
    let out = run_with(&corrupted, &cfg, Some(reference), |row| {
        seen += 1;
        assert_eq!(row.t, seen);
    })
    .unwrap();
    assert_eq!(out.history.len(), 20);
    assert_eq!(out.state.t, 20);
    assert!(out.u.data().iter().all(|&v| v > 0.0 && v < 1.0));

    let residuals: Vec<f64> = out.history.iter().map(|r| r.dual_residual).collect();
    let early = median(residuals[..4].to_vec());
    let late = median(residuals[16..].to_vec());
    assert!(late <= early, "residual median grew from {early} to {late}");

    assert!(out.history.iter().all(|r| !r.prox_violation()));
    assert!(out
        .history
        .iter()
        .all(|r| r.psnr.is_some() && r.ssim.is_some()));
    let first = out.history[0].psnr.unwrap().db();
    let last = out.history[19].psnr.unwrap().db();
    assert!(last > first);
}

#[test]
fn identical_configs_give_identical_bits() {
    let spec = SynthSpec {
        size: 32,
        ..SynthSpec::reference()
    };
    let (_, corrupted) = gen_synthetic(&spec).unwrap();
    let cfg = RunConfig {
        outer_iterations: 3,
        inner_iterations: 5,
        ..RunConfig::smoothing(3)
    };
    let a = run(&corrupted, &cfg).unwrap();
    let b = run(&corrupted, &cfg).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.u.data()), bits(b.u.data()));
    assert_eq!(a.history, b.history);
    let other = RunConfig {
        seeds: dipl0::admm::Seeds::from_master(1),
        ..cfg
    };
    assert_ne!(run(&corrupted, &other).unwrap().u, a.u);
}

#[test]
fn unaligned_input_is_rejected_by_the_network() {
    let spec = SynthSpec {
        size: 33,
        ..SynthSpec::reference()
    };
    let (_, corrupted) = gen_synthetic(&spec).unwrap();
    assert!(run(
        &corrupted,
        &RunConfig {
            outer_iterations: 1,
            ..RunConfig::smoothing(3)
        }
    )
    .is_err());
}
