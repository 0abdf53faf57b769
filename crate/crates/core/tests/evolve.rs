use cnls_core::evolve::*;
use cnls_core::grid::*;
use cnls_core::model::*;
use num_complex::Complex64;

fn cubic() -> (SystemParams, Nonlinearity) {
    let p = SystemParams::new(4, vec![1.0, 3.0], vec![1.0, 1.0], vec![0.0, 0.0], Some(vec![1.0, 3.0])).unwrap();
    (p, Nonlinearity::new(PotentialF::parse(CUBIC_SYSTEM, 2).unwrap()))
}

fn gaussian(grid: &RadialGrid, l: usize, width: f64, amp: f64) -> RadialState {
    let g: Vec<f64> = grid.r.iter().map(|r| amp * (-(r / width).powi(2)).exp()).collect();
    RadialState::from_real(0.0, &vec![g; l])
}

fn mass_l2(grid: &RadialGrid, s: &RadialState) -> Vec<f64> {
    s.u.iter().map(|c| grid.norm2(c)).collect()
}

#[test]
fn linear_halfstep_of_zero_is_zero() {
    let grid = make_grid(4, 128, 10.0).unwrap();
    let (p, _) = cubic();
    let z = RadialState::zeros(2, 128);
    assert_eq!(linear_halfstep(&z, 0.1, &p, &grid).unwrap().u, z.u);
}

#[test]
fn linear_halfstep_is_unitary() {
    let grid = make_grid(4, 512, 20.0).unwrap();
    let p = SystemParams::new(4, vec![1.0, 3.0], vec![1.0, 2.0], vec![0.3, 1.0], None).unwrap();
    let mut s = gaussian(&grid, 2, 2.0, 1.0);
    s.u[0].iter_mut().zip(&grid.r).for_each(|(z, r)| *z *= Complex64::from_polar(1.0, *r));
    let before = mass_l2(&grid, &s);
    let mut cur = s;
    for _ in 0..10 {
        let next = linear_halfstep(&cur, 0.05, &p, &grid).unwrap();
        for (a, b) in mass_l2(&grid, &cur).iter().zip(mass_l2(&grid, &next)) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
        cur = next;
    }
    for (a, b) in before.iter().zip(mass_l2(&grid, &cur)) {
        assert!((a - b).abs() <= 1e-11 * a);
    }
}

#[test]
fn mass_term_is_an_exact_phase() {
    let grid = make_grid(3, 64, 5.0).unwrap();
    let p = SystemParams::new(3, vec![2.0], vec![1.0], vec![0.7], None).unwrap();
    let nl = Nonlinearity::new(PotentialF::zero(1));
    let zero_lap = LaplacianBands {
        lower: vec![0.0; 64],
        diag: vec![0.0; 64],
        upper: vec![0.0; 64],
    };
    let ev = Evolver::new(&grid, &p, &nl).with_bands(zero_lap);
    let s = gaussian(&grid, 1, 1.5, 1.0);
    let dt = 0.37;
    let out = ev.linear_halfstep(&s, dt / 2.0).unwrap();
    let phase = Complex64::from_polar(1.0, -0.7 * dt / (2.0 * 2.0));
    for (a, b) in out.u[0].iter().zip(&s.u[0]) {
        assert!((a - b * phase).norm() <= 1e-15);
    }
}

#[test]
fn nonlinear_substep_examples() {
    let grid = make_grid(4, 256, 10.0).unwrap();
    let (p, nl) = cubic();
    let z = RadialState::zeros(2, 256);
    assert_eq!(nonlinear_substep(&z, 0.1, &p, &grid, &nl).unwrap().u, z.u);

    // pointwise charge sum sigma_k alpha_k |u_k|^2 drifts only at RK4 order
    let mut s = gaussian(&grid, 2, 2.0, 0.9);
    s.u[1].iter_mut().for_each(|z| *z *= Complex64::from_polar(1.0, 0.4));
    let charge = |s: &RadialState, j: usize| s.u[0][j].norm_sqr() + 9.0 * s.u[1][j].norm_sqr();
    let drift = |dt: f64| {
        let out = nonlinear_substep(&s, dt, &p, &grid, &nl).unwrap();
        (0..256).map(|j| (charge(&out, j) - charge(&s, j)).abs()).fold(0.0, f64::max)
    };
    let (d1, d2) = (drift(0.02), drift(0.01));
    assert!(d1 < 1e-8, "{d1}");
    assert!(d1 / d2 > 20.0, "drift ratio {}", d1 / d2);

    // scalar power with real data: only the phase rotates
    let p1 = SystemParams::scalar(5);
    let g5 = make_grid(5, 256, 10.0).unwrap();
    let nl1 = Nonlinearity::new(PotentialF::scalar_power(5));
    let s = gaussian(&g5, 1, 2.0, 1.3);
    let out = nonlinear_substep(&s, 0.01, &p1, &g5, &nl1).unwrap();
    for (a, b) in out.u[0].iter().zip(&s.u[0]) {
        assert!((a.norm() - b.norm()).abs() <= 1e-12 * (1.0 + b.norm()));
    }
}

#[test]
fn step_with_zero_potential_is_linear_evolution() {
    let grid = make_grid(4, 256, 20.0).unwrap();
    let (p, _) = cubic();
    let nl = Nonlinearity::new(PotentialF::zero(2));
    let s = gaussian(&grid, 2, 2.0, 1.0);
    let a = step(&s, 0.04, &p, &grid, &nl).unwrap();
    let b = linear_halfstep(&linear_halfstep(&s, 0.02, &p, &grid).unwrap(), 0.02, &p, &grid).unwrap();
    assert!(a.distance(&b, &grid) <= 1e-14 * s.norm(&grid));
    assert!((a.t - 0.04).abs() < 1e-15);
    for (x, y) in mass_l2(&grid, &s).iter().zip(mass_l2(&grid, &a)) {
        assert!((x - y).abs() <= 1e-12 * x);
    }
}

#[test]
fn strang_self_convergence_is_second_order() {
    let grid = make_grid(4, 1024, 40.0).unwrap();
    let (p, nl) = cubic();
    let ev = Evolver::new(&grid, &p, &nl);
    let s0 = gaussian(&grid, 2, 2.0, 1.0);
    let t_end = 0.4;
    let run = |n: usize| {
        let dt = t_end / n as f64;
        let mut s = s0.clone();
        for _ in 0..n {
            s = ev.step(&s, dt).unwrap();
        }
        s
    };
    let reference = run(160);
    let e1 = run(10).distance(&reference, &grid);
    let e2 = run(20).distance(&reference, &grid);
    let e3 = run(40).distance(&reference, &grid);
    let (r1, r2) = (e1 / e2, e2 / e3);
    assert!((3.5..=4.5).contains(&r1), "ratio {r1}");
    assert!((3.5..=4.5).contains(&r2), "ratio {r2}");
}

#[test]
fn time_reversal() {
    // beta = 0, real coefficients: conj(u(t)) evolved forward gives back conj(u(0))
    let grid = make_grid(4, 512, 20.0).unwrap();
    let (p, nl) = cubic();
    let ev = Evolver::new(&grid, &p, &nl);
    let mut s = gaussian(&grid, 2, 2.0, 0.8);
    s.u[1].iter_mut().zip(&grid.r).for_each(|(z, r)| *z *= Complex64::from_polar(1.0, 0.2 * *r));
    let mut cur = s.clone();
    for _ in 0..20 {
        cur = ev.step(&cur, 0.01).unwrap();
    }
    let mut back: RadialState = RadialState {
        t: 0.0,
        u: cur.u.iter().map(|c| c.iter().map(|z| z.conj()).collect()).collect(),
    };
    for _ in 0..20 {
        back = ev.step(&back, 0.01).unwrap();
    }
    let conj0 = RadialState {
        t: 0.0,
        u: s.u.iter().map(|c| c.iter().map(|z| z.conj()).collect()).collect(),
    };
    assert!(back.distance(&conj0, &grid) <= 1e-10 * s.norm(&grid));
}

#[test]
fn gauge_equivariance() {
    let grid = make_grid(4, 512, 20.0).unwrap();
    let (p, nl) = cubic();
    let ev = Evolver::new(&grid, &p, &nl);
    let s = gaussian(&grid, 2, 2.0, 0.8);
    let theta = 1.1_f64;
    let rot = |s: &RadialState| RadialState {
        t: s.t,
        u: s
            .u
            .iter()
            .zip([1.0, 3.0])
            .map(|(c, sig)| c.iter().map(|z| z * Complex64::from_polar(1.0, sig * theta / 2.0)).collect())
            .collect(),
    };
    let mut a = rot(&s);
    let mut b = s.clone();
    for _ in 0..10 {
        a = ev.step(&a, 0.02).unwrap();
        b = ev.step(&b, 0.02).unwrap();
    }
    assert!(a.distance(&rot(&b), &grid) <= 1e-10 * a.norm(&grid));
}

#[test]
fn adapt_dt_formula() {
    let c = StepControls {
        dt0: 1e-3,
        dt_min: 1e-8,
        dt_max: 1.0,
        safety: 1.0,
        c_amp: 1e6,
        tol: 1e-6,
    };
    assert!((adapt_dt(0.0, 4, &c, 0.01, 1e-6) - 0.01).abs() < 1e-15);
    assert!((adapt_dt(0.0, 4, &c, 0.01, 8e-6) - 0.005).abs() < 1e-15);
    assert_eq!(adapt_dt(0.0, 4, &c, 0.5, 0.0), 1.0);
    assert_eq!(adapt_dt(0.0, 4, &c, 1e-9, 1.0), 1e-8);
    // the amplitude cap scales like |u|^{-4/(d-2)}: doubling |u| at d=4 shrinks it by about 4
    let r = amplitude_cap(100.0, 4, 0.2) / amplitude_cap(200.0, 4, 0.2);
    assert!((r - 4.0).abs() < 1e-3, "{r}");
    let capped = StepControls { c_amp: 0.2, ..c };
    assert!((adapt_dt(100.0, 4, &capped, 0.01, 1e-6) - amplitude_cap(100.0, 4, 0.2)).abs() < 1e-18);
}

#[test]
fn step_controls_validation() {
    assert!(StepControls::default().validate().is_ok());
    let bad = StepControls {
        dt_min: 1.0,
        ..StepControls::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn blowup_rule() {
    let rule = BlowupRule::default();
    assert_eq!(detect_blowup(&[1.0, 1.0, 1.0, 1.0], 0.01, 1e-6, false, &rule), BlowupCheck::Continue);
    match detect_blowup(&[1.0, 4.0, 12.0, 40.0], 1e-6, 1e-6, true, &rule) {
        BlowupCheck::BlowUp(ev) => {
            assert_eq!(ev.k_growth, 40.0);
            assert_eq!(ev.final_dt, 1e-6);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(detect_blowup(&[1.0, 12.0, 4.0], 1e-6, 1e-6, true, &rule), BlowupCheck::Unresolved(_)));
    // growth without step collapse is not yet a verdict
    assert_eq!(detect_blowup(&[1.0, 4.0, 12.0, 40.0], 0.01, 1e-6, false, &rule), BlowupCheck::Continue);
}

#[test]
fn zero_data_completes_with_zero_functionals() {
    let grid = make_grid(4, 256, 20.0).unwrap();
    let (p, nl) = cubic();
    let ev = Evolver::new(&grid, &p, &nl);
    let opts = EvolveOptions::new(&grid, 1.0, 0.1);
    let traj = evolve_until(&ev, &RadialState::zeros(2, 256), &StepControls::default(), &opts, &mut ()).unwrap();
    assert_eq!(traj.verdict, Verdict::Completed { t_final: 1.0 });
    assert_eq!(traj.rows.len(), 11);
    for r in &traj.rows {
        assert_eq!((r.record.M, r.record.E, r.record.K, r.record.P, r.V, r.R), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }
    assert!(traj.rows.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn small_gaussian_stays_below_the_ground_state_level() {
    let grid = make_grid(4, 1024, 50.0).unwrap();
    let p = SystemParams::scalar(4);
    let nl = Nonlinearity::new(PotentialF::scalar_power(4));
    let gs = cnls_core::groundstate::solve_ground_state(&grid, &p, &nl, &Default::default()).unwrap();
    let ev = Evolver::new(&grid, &p, &nl);
    let opts = EvolveOptions::new(&grid, 3.0, 0.1);
    let traj = evolve_until(&ev, &gaussian(&grid, 1, 1.5, 0.3), &StepControls::default(), &opts, &mut ()).unwrap();
    assert!(matches!(traj.verdict, Verdict::Completed { .. }));
    let kmax = traj.rows.iter().map(|r| r.record.K).fold(0.0, f64::max);
    assert!(kmax < gs.kpsi, "{kmax} vs {}", gs.kpsi);
}

#[test]
fn conservation_over_unit_time() {
    let grid = make_grid(4, 2048, 100.0).unwrap();
    let (p, nl) = cubic();
    let ev = Evolver::new(&grid, &p, &nl);
    let opts = EvolveOptions::new(&grid, 1.0, 0.05);
    let traj = evolve_until(&ev, &gaussian(&grid, 2, 4.0, 0.3), &StepControls::default(), &opts, &mut ()).unwrap();
    let r0 = traj.rows[0].record;
    for r in &traj.rows {
        assert!((r.record.M - r0.M).abs() / r0.M <= 1e-6);
        assert!((r.record.E - r0.E).abs() / r0.E.abs().max(r0.K) <= 1e-6);
    }
}

#[test]
fn snapshots_and_observer() {
    struct Count(usize);
    impl Observer for Count {
        fn on_record(&mut self, _row: &TrajectoryRow, _state: &RadialState) {
            self.0 += 1;
        }
    }
    let grid = make_grid(4, 256, 20.0).unwrap();
    let (p, nl) = cubic();
    let ev = Evolver::new(&grid, &p, &nl);
    let mut opts = EvolveOptions::new(&grid, 0.5, 0.1);
    opts.snapshot_times = vec![0.0, 0.25, 0.5];
    let mut obs = Count(0);
    let traj = evolve_until(&ev, &gaussian(&grid, 2, 2.0, 0.5), &StepControls::default(), &opts, &mut obs).unwrap();
    assert_eq!(obs.0, traj.rows.len());
    assert_eq!(traj.snapshots.len(), 3);
    assert_eq!(traj.snapshots[0].t, 0.0);
    assert!(traj.snapshots[1].t >= 0.25);
    assert_eq!(traj.final_state.t, 0.5);
    assert!(evolve_until(&ev, &traj.final_state, &StepControls::default(), &opts, &mut ()).is_err());
}

#[test]
fn forced_floor_is_unresolved() {
    // dt_min = dt_max far above what the tolerance allows on large data
    let grid = make_grid(4, 512, 20.0).unwrap();
    let p = SystemParams::scalar(4);
    let nl = Nonlinearity::new(PotentialF::scalar_power(4));
    let ev = Evolver::new(&grid, &p, &nl);
    let c = StepControls {
        dt0: 0.05,
        dt_min: 0.05,
        dt_max: 0.05,
        ..StepControls::default()
    };
    let opts = EvolveOptions::new(&grid, 1.0, 0.1);
    let traj = evolve_until(&ev, &gaussian(&grid, 1, 1.0, 3.0), &c, &opts, &mut ()).unwrap();
    assert!(matches!(traj.verdict, Verdict::Unresolved { .. }), "{:?}", traj.verdict);
}
