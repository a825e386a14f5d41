use nlch_web::{kernel_profile, trace_curve, Simulation};

#[test]
fn simulation_conserves_mass_without_reaction() {
    let mut sim = Simulation::new(64, 1.0, 0.1, "none", 0.0, 1e-3, 3).unwrap();
    let m0 = sim.mass();
    let e0 = sim.energy();
    sim.advance(50).unwrap();
    assert!((sim.mass() - m0).abs() < 1e-12);
    assert!(sim.energy() <= e0 + 1e-10);
    assert!((sim.time() - 0.05).abs() < 1e-12);
    assert_eq!(sim.field().len(), 64);
    assert_eq!(sim.coords()[0], 0.5 / 64.0);
}

#[test]
fn oono_simulation_loses_mass() {
    let mut sim = Simulation::new(64, 1.0, 0.1, "oono", 1.0, 1e-3, 1).unwrap();
    let m0 = sim.mass();
    sim.advance(100).unwrap();
    assert!(sim.mass() < m0);
    assert!(sim.field().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn profiles_and_traces() {
    let g = kernel_profile("gaussian", 2.0, 0.5, 11, 1.0).unwrap();
    assert_eq!(g.len(), 11);
    assert_eq!(g[0], 2.0);
    assert!(g.windows(2).all(|p| p[1] < p[0]));
    let m = kernel_profile("mollifier", 1.0, 0.5, 11, 1.0).unwrap();
    assert_eq!(m[10], 0.0);
    let n = kernel_profile("newton", 1.0, 0.0, 3, 1.0).unwrap();
    assert!(n[0].is_nan() || n[0].is_infinite() || n[0] > 0.0);

    let curve = trace_curve(2.0, 0.2, 4, 1.2).unwrap();
    assert_eq!(curve.len(), 4);
    assert!(curve[0] < 0.0);
}
