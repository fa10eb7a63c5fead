use conehj::cone::{ConePoint, Partition};
use conehj::nonlinearity::{CovarianceModel, Regularization};
use conehj::solvers::initial::cone_step_path;
use conehj::solvers::{hopf_lax, hopf_with, solve_surface, MaxAffine, Method, PiecewiseLinearMean, SolverOptions};
use conehj::viscosity::{fd_solve, FdGrid};

fn reg() -> Regularization<f64> {
    Regularization::new(CovarianceModel::quadratic(1.0).unwrap()).unwrap()
}

#[test]
fn hopf_matches_hopf_lax_for_max_affine_data() {
    let j = Partition::from_breaks(vec![0.3, 0.7, 1.0]).unwrap();
    let psi = MaxAffine::new(vec![
        (cone_step_path(Partition::uniform(2).unwrap(), &[0.1, 0.8]).unwrap(), 0.1),
        (cone_step_path(Partition::uniform(3).unwrap(), &[0.4, 0.5, 0.6]).unwrap(), -0.05),
    ])
    .unwrap();
    let x = ConePoint::from_scalars(j, &[0.2, 0.5, 1.3]).unwrap();
    let opts = SolverOptions { force_numeric: true, ..SolverOptions::default() };
    for t in [0.1, 0.5, 1.0] {
        let a = hopf_lax(&psi, &reg(), t, &x).unwrap().value;
        let b = hopf_with(&psi, reg().model(), t, &x, &opts).unwrap().value;
        assert!((a - b).abs() < 1e-6, "t={t}: {a} vs {b}");
    }
}

#[test]
fn finite_differences_preserve_order_and_track_hopf_lax() {
    let lo = PiecewiseLinearMean::new(0.0, vec![0.5], vec![0.2, 0.6]).unwrap();
    let hi = PiecewiseLinearMean::new(0.1, vec![0.5], vec![0.3, 0.6]).unwrap();
    let r = reg();
    let grid = FdGrid::for_horizon(&r, 1.0, 1.0, 1.0, 0.01).unwrap();
    let times = [0.0, 0.5, 1.0];
    let a = fd_solve(&lo, &r, &grid, &times).unwrap().surface;
    let b = fd_solve(&hi, &r, &grid, &times).unwrap().surface;
    // monotone scheme: ordered data give ordered solutions
    for (ra, rb) in a.values.iter().zip(&b.values) {
        assert!(ra.iter().zip(rb).all(|(x, y)| x <= y));
    }
    let idx: Vec<usize> = (0..grid.nodes()).step_by(10).take_while(|&i| grid.x(i) <= 1.0).collect();
    let fd = a.select(&idx);
    let hl = solve_surface(&lo, &r, &times, &fd.samples, Method::HopfLax, &SolverOptions::default()).unwrap();
    let gap =
        hl.values.iter().flatten().zip(fd.values.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 10.0 * 0.01 * 2.0, "gap {gap}");
}
