use fracdens::bridge::BridgeMethod;
use fracdens::density::{
    conditional_density_many, stationary_density_many, transition_density_many, ConditioningPath, DensityEstimate,
    NestedParams, StationaryParams,
};
use fracdens::grid::Grid;
use fracdens::sde::{DriftSpec, ModelSpec};
use fracdens::stats::normal_pdf;
use fracdens::validate::{check_stationary_fou, FouStationaryParams};

fn pts(ys: &[f64]) -> Vec<Vec<f64>> {
    ys.iter().map(|y| vec![*y]).collect()
}

fn z(e: &DensityEstimate, oracle: f64) -> f64 {
    (e.value - oracle) / e.stderr
}

#[test]
fn ou_transition_at_half() {
    // H = 1/2 and no past: the OU transition density
    let (lambda, t, y0) = (1.0, 1.0, 0.5);
    let m = ModelSpec::scalar(DriftSpec::linear_scalar(lambda, 1), 1.0, 0.5).unwrap();
    let ell = ConditioningPath::constant(Grid::uniform(t, 1000).unwrap(), &[y0]);
    let ys = [-1.5, -0.5, 0.0, 0.5, 1.5];
    let est = conditional_density_many(&m, None, &ell, &pts(&ys), t, 4000, BridgeMethod::ExactConditioning, 3).unwrap();
    let mean = y0 * (-lambda * t).exp();
    let var = -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda);
    for (y, e) in ys.iter().zip(&est) {
        let o = normal_pdf(*y, mean, var);
        assert!(z(e, o).abs() < 3.0, "y={y}: {} +- {} vs {o}", e.value, e.stderr);
    }
}

#[test]
fn symmetric_drift_gives_symmetric_density() {
    let m = ModelSpec::scalar(DriftSpec::tanh_well(2.0, 1), 1.0, 0.3).unwrap();
    let ell = ConditioningPath::constant(Grid::uniform(1.0, 200).unwrap(), &[0.0]);
    let ys = [0.4, 1.0, 1.8, -0.4, -1.0, -1.8];
    let est = conditional_density_many(&m, None, &ell, &pts(&ys), 1.0, 4000, BridgeMethod::ExactConditioning, 8).unwrap();
    for k in 0..3 {
        let (a, b) = (&est[k], &est[k + 3]);
        let d = (a.value - b.value) / a.stderr.hypot(b.stderr);
        assert!(d.abs() < 3.0, "y = +-{}: {} vs {}", ys[k], a.value, b.value);
    }
}

#[test]
fn bridge_samplers_agree_on_the_density() {
    let m = ModelSpec::scalar(DriftSpec::tanh_well(1.0, 1), 1.0, 0.7).unwrap();
    let ell = ConditioningPath::constant(Grid::uniform(1.0, 2000).unwrap(), &[0.5]);
    let ys = pts(&[-1.0, 0.0, 1.0]);
    let a = conditional_density_many(&m, None, &ell, &ys, 1.0, 3000, BridgeMethod::ExactConditioning, 21).unwrap();
    let b = conditional_density_many(&m, None, &ell, &ys, 1.0, 3000, BridgeMethod::Sde, 22).unwrap();
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        let d = (x.value - y.value) / x.stderr.hypot(y.stderr);
        assert!(d.abs() < 3.0, "point {k}: exact {} sde {}", x.value, y.value);
    }
}

#[test]
fn zero_drift_transition_at_half_is_exact() {
    let m = ModelSpec::scalar(DriftSpec::zero(1), 1.5, 0.5).unwrap();
    let p = NestedParams { n_outer: 8, n_inner: 4, t_past: 10.0, n_steps: 50, method: BridgeMethod::ExactConditioning };
    let ys = [-2.0, 0.3, 1.0];
    let est = transition_density_many(&m, None, &[0.3], &pts(&ys), 0.8, &p, 4).unwrap();
    for (y, e) in ys.iter().zip(&est) {
        let o = normal_pdf(*y, 0.3, 1.5 * 1.5 * 0.8);
        assert!((e.value - o).abs() < 1e-12 * o, "y={y}: {} vs {o}", e.value);
        assert_eq!(e.stderr, 0.0);
    }
}

#[test]
fn stationary_ou_at_half() {
    let p = FouStationaryParams {
        hurst: 0.5,
        lambda: 1.0,
        ys_sd: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        stationary: StationaryParams {
            t0: 1.0,
            t_burn: 20.0,
            n_replicas: 200,
            n_inner: 100,
            t_past: 300.0,
            n_steps: 200,
            method: BridgeMethod::ExactConditioning,
        },
        z_max: 3.0,
    };
    let r = check_stationary_fou(&p, 12).unwrap();
    assert!(r.passed(), "{:?}", r.notes);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let m = ModelSpec::scalar(DriftSpec::tanh_well(2.0, 1), 1.0, 0.7).unwrap();
    let p = StationaryParams {
        t0: 1.0,
        t_burn: 3.0,
        n_replicas: 12,
        n_inner: 10,
        t_past: 20.0,
        n_steps: 40,
        method: BridgeMethod::Sde,
    };
    let ys = pts(&[-1.0, 0.5]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| stationary_density_many(&m, None, &ys, &p, 99).unwrap())
    };
    let (a, b) = (run(1), run(3));
    for (x, y) in a.estimates.iter().zip(&b.estimates) {
        assert_eq!(x.value.to_bits(), y.value.to_bits());
        assert_eq!(x.stderr.to_bits(), y.stderr.to_bits());
    }
    assert_eq!(a.burn_in, b.burn_in);
}
