use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wgqb::configs::*;
use wgqb::dynamics::*;
use wgqb::metrics::*;
use wgqb::slh::MasterEqCoefficients;

const ONE_WAY: [SetupKind; 3] = [SetupKind::FourPointOpen, SetupKind::ThreePointOpen, SetupKind::ThreePointMirror];

fn table_point(kind: SetupKind, gamma: f64, k1: f64, k2: f64) -> MasterEqCoefficients {
    coefficients(kind, &nonreciprocal_point(kind), &CouplingRates::equal(gamma, k1, k2))
        .unwrap()
        .tuned_to_resonance()
}

fn random_point(rng: &mut ChaCha8Rng, kind: SetupKind) -> MasterEqCoefficients {
    let mut p = || rng.random_range(0.0..TAU);
    let phases = PhaseSet { phi1: p(), phiw: p(), phi2: p(), phim: p(), theta1: p(), theta2: p() };
    let rates = CouplingRates::equal(rng.random_range(0.005..0.02), rng.random_range(0.0..0.02), rng.random_range(0.0..0.02));
    coefficients(kind, &phases, &rates).unwrap().tuned_to_resonance()
}

fn grid(gamma: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| 10.0 / gamma * k as f64 / (n - 1) as f64).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 { 0.0 } else { d / a.abs().max(b.abs()) }
}

#[test]
fn linear_closed_form_tracks_evolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases: Vec<(MasterEqCoefficients, f64)> = SetupKind::ALL.iter().map(|&k| (table_point(k, 0.01, 0.01, 0.01), 0.01)).collect();
    for i in 0..40 {
        cases.push((random_point(&mut rng, SetupKind::ALL[i % 4]), 0.01));
    }
    let mut worst = 0.0f64;
    for (c, gamma) in cases {
        for side in [DriveSide::Left, DriveSide::Right] {
            let d = DriveSpec::new(DriveKind::Linear, side, 0.15);
            let sys = second_moment_system(&c, &d);
            let ts = grid(gamma, 101);
            let traj = evolve(&sys, &sys.vacuum(), &ts).unwrap();
            for (k, &t) in ts.iter().enumerate() {
                let cf = closed_form_linear(&c, &d, t).unwrap();
                if cf.via == Evaluation::Numerical {
                    continue;
                }
                let m = traj.moments(k);
                let (nb, nc) = (m.mode(d.battery_mode()).1, m.mode(d.driven_mode()).1);
                worst = worst.max(rel(cf.e_b, nb)).max(rel(cf.e_c, nc));
            }
        }
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn quadratic_closed_form_tracks_evolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for i in 0..30 {
        let kind = ONE_WAY[i % 3];
        let c = table_point(kind, rng.random_range(0.005..0.02), rng.random_range(0.0..0.02), rng.random_range(0.0..0.02));
        let om = rng.random_range(0.0..0.9) * c.linewidth_1 / 2.0;
        let d = DriveSpec::new(DriveKind::Quadratic, DriveSide::Left, om);
        let sys = second_moment_system(&c, &d);
        let ts = grid(0.01, 101);
        let traj = evolve(&sys, &sys.vacuum(), &ts).unwrap();
        for (k, &t) in ts.iter().enumerate() {
            let cf = closed_form_quadratic_nr(&c, &d, t).unwrap();
            if cf.via == Evaluation::Numerical {
                continue;
            }
            let m = traj.moments(k);
            worst = worst.max(rel(cf.e_b, m.n2)).max(rel(cf.e_c, m.n1));
            let ds = (cf.s2 - m.s2).norm();
            if ds > 0.0 {
                worst = worst.max(ds / cf.s2.norm().max(m.s2.norm()));
            }
        }
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn linear_drive_keeps_coherent_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..24 {
        let kind = SetupKind::ALL[i % 4];
        let c = if i < 4 { table_point(kind, 0.01, 0.01, 0.01) } else { random_point(&mut rng, kind) };
        for side in [DriveSide::Left, DriveSide::Right] {
            let d = DriveSpec::new(DriveKind::Linear, side, 0.15);
            let sys = second_moment_system(&c, &d);
            let traj = evolve(&sys, &sys.vacuum(), &grid(0.01, 201)).unwrap();
            for k in 0..traj.len() {
                let m = traj.moments(k);
                let scale = 1.0 + m.n1.max(m.n2);
                assert!((m.n1 - m.m1.norm_sqr()).abs() <= 1e-10 * scale);
                assert!((m.n2 - m.m2.norm_sqr()).abs() <= 1e-10 * scale);
                assert!((m.s1 - m.m1 * m.m1).norm() <= 1e-10 * scale);
                assert!((m.s2 - m.m2 * m.m2).norm() <= 1e-10 * scale);
                assert!((m.x12 - m.m1.conj() * m.m2).norm() <= 1e-10 * scale);
                let b = battery_metrics(&m, d.battery_mode() + 1, 1.0).unwrap();
                assert!(b.d_param >= 1.0 - 1e-9);
                if b.energy > 1e-6 {
                    assert!((b.extractable_fraction - 1.0).abs() <= 1e-9, "{}", b.extractable_fraction);
                }
            }
        }
    }
}

#[test]
fn quadratic_drive_has_no_first_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..12 {
        let c = random_point(&mut rng, SetupKind::ALL[i % 4]);
        let d = DriveSpec::new(DriveKind::Quadratic, DriveSide::Left, 0.3 * c.linewidth_1.min(c.linewidth_2));
        if !stability(&c, &d).unwrap().stable {
            continue;
        }
        let first = first_moment_system(&c, &d);
        let traj = evolve(&first, &first.vacuum(), &grid(0.01, 51)).unwrap();
        for x in &traj.states {
            assert_eq!(x.camax(), 0.0);
        }
    }
}

#[test]
fn quadratic_states_are_physical_and_partly_passive() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for i in 0..40 {
        let c = random_point(&mut rng, SetupKind::ALL[i % 4]);
        let side = if i % 2 == 0 { DriveSide::Left } else { DriveSide::Right };
        let d = DriveSpec::new(DriveKind::Quadratic, side, rng.random_range(0.05..0.45) * c.linewidth_1.min(c.linewidth_2));
        if !stability(&c, &d).unwrap().stable {
            continue;
        }
        checked += 1;
        let sys = second_moment_system(&c, &d);
        let traj = evolve(&sys, &sys.vacuum(), &grid(0.01, 101)).unwrap();
        for k in 1..traj.len() {
            let m = traj.moments(k);
            let (mean, n, s) = m.mode(d.battery_mode());
            let b = battery_metrics(&m, d.battery_mode() + 1, 1.0).unwrap();
            assert!(b.d_param >= 1.0 - 1e-9);
            assert!(b.ergotropy >= 0.0 && b.ergotropy <= b.energy + 1e-12);
            assert!((b.passive_energy - (b.energy - b.ergotropy)).abs() < 1e-15);
            assert_eq!(mean.norm(), 0.0);
            assert!((ergotropy_zero_mean(n, s) - b.ergotropy).abs() <= 1e-12);
            if s.norm() > 1e-12 && b.d_param > 1.0 + 1e-9 {
                assert!(b.extractable_fraction < 1.0);
            }
        }
    }
    assert!(checked >= 20);
}

#[test]
fn decay_toward_steady_state_matches_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 8 {
        let c = random_point(&mut rng, SetupKind::ALL[checked % 4]);
        let d = DriveSpec::new(DriveKind::Linear, DriveSide::Left, 0.01);
        let rep = stability(&c, &d).unwrap();
        let mut re: Vec<f64> = rep.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // Nearly equal decay rates beat against each other; skip those.
        if re[1] > 1.5 * re[0] {
            continue;
        }
        checked += 1;
        let sys = first_moment_system(&c, &d);
        let xinf = steady_state(&sys).unwrap();
        let rate = -rep.max_real;
        let (t1, t2) = (5.0 / rate, 15.0 / rate);
        let traj = evolve(&sys, &sys.vacuum(), &[t1, t2]).unwrap();
        let e1 = (&traj.states[0] - &xinf).norm();
        let e2 = (&traj.states[1] - &xinf).norm();
        let measured = (e1 / e2).ln() / (t2 - t1);
        assert!((measured - rate).abs() <= 0.05 * rate, "{measured} vs {rate}");
    }
}

#[test]
fn steady_ratio_from_energies_matches_couplings() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..100 {
        let c = random_point(&mut rng, SetupKind::ALL[i % 4]);
        let el = closed_form_linear(&c, &DriveSpec::new(DriveKind::Linear, DriveSide::Left, 0.1), f64::INFINITY).unwrap();
        let er = closed_form_linear(&c, &DriveSpec::new(DriveKind::Linear, DriveSide::Right, 0.1), f64::INFINITY).unwrap();
        let from_e = nonreciprocal_ratio(el.e_b, er.e_b).unwrap();
        let from_g = steady_r_from_couplings(&directional_couplings(&c)).unwrap();
        assert!((from_e - from_g).abs() <= 1e-10, "{from_e} {from_g}");
    }
}

#[test]
fn threepoint_eta_from_steady_states() {
    let (g, k2) = (0.01, 0.01);
    let n = 24;
    let mut worst = 0.0f64;
    for kind in [SetupKind::ThreePointOpen, SetupKind::ThreePointMirror] {
        for a in 0..n {
            for b in 0..n {
                let theta2 = TAU * a as f64 / n as f64;
                let phiw = TAU * b as f64 / n as f64;
                let phases = PhaseSet { phi2: std::f64::consts::FRAC_PI_2, theta2, phiw, ..Default::default() };
                let c = coefficients(kind, &phases, &CouplingRates::equal(g, 0.01, k2)).unwrap().tuned_to_resonance();
                let d = DriveSpec::new(DriveKind::Linear, DriveSide::Left, 0.01);
                let sys = second_moment_system(&c, &d);
                let m = MomentState::from_vector(&sys.labels, &steady_state(&sys).unwrap());
                let eta = storage_ratio(m.n2, m.n1).unwrap();
                let want = analytic_eta_threepoint_scan(kind, theta2, phiw, g, k2).unwrap();
                worst = worst.max((eta - want).abs());
            }
        }
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn quadratic_charger_energy_diverges_at_threshold() {
    let c = table_point(SetupKind::ThreePointOpen, 0.01, 0.01, 0.01);
    let half = c.linewidth_1 / 2.0;
    let threshold = instability_threshold(&c, DriveSide::Left, 1e-12).unwrap();
    assert!((threshold - half).abs() <= 1e-10);
    // E_c ~ (half - Omega)^p with p = -1 as Omega approaches the threshold.
    let energy = |eps: f64| {
        let d = DriveSpec::new(DriveKind::Quadratic, DriveSide::Left, half - eps);
        let sys = second_moment_system(&c, &d);
        MomentState::from_vector(&sys.labels, &steady_state(&sys).unwrap()).n1
    };
    let (e1, e2) = (energy(1e-6), energy(1e-7));
    let p = (e2 / e1).ln() / (1e-7f64 / 1e-6).ln();
    assert!((p + 1.0).abs() < 1e-3, "{p}");
    let past = DriveSpec::new(DriveKind::Quadratic, DriveSide::Left, half * 1.01);
    assert!(steady_state(&second_moment_system(&c, &past)).is_err());
}

#[test]
fn right_drive_leaves_battery_empty_at_one_way_points() {
    for kind in ONE_WAY {
        let c = table_point(kind, 0.01, 0.01, 0.01);
        for dk in [DriveKind::Linear, DriveKind::Quadratic] {
            let d = DriveSpec::new(dk, DriveSide::Right, if dk == DriveKind::Linear { 0.15 } else { 0.005 });
            let sys = second_moment_system(&c, &d);
            let traj = evolve(&sys, &sys.vacuum(), &grid(0.01, 201)).unwrap();
            for k in 0..traj.len() {
                assert!(traj.moments(k).n1.abs() <= 1e-12, "{kind} {dk:?}");
            }
        }
    }
}
