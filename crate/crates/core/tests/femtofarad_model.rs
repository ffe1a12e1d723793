use squidsim_core::spectrum::{
    extract_four_level_model, level_diagram, predict_resonances, DiabaticState, StaticGround, EigenGridSpec, SpectrumError,
};
use squidsim_core::CircuitParams;

fn grid() -> EigenGridSpec {
    EigenGridSpec::centered(0.5, 0.35, 3001, 8).unwrap()
}

#[test]
fn femtofarad_diagram_yields_ordered_splittings() {
    let p = CircuitParams::femtofarad_device();
    let d = level_diagram(&p, (0.49, 0.51), 201, &grid()).unwrap();
    let m = extract_four_level_model(&d).unwrap();
    println!("{m:?}");
    assert!(m.delta00 < m.delta01);
    assert!(m.delta01 < m.delta11);
    // mirror symmetry of the device
    let k0l = m.slope(DiabaticState::GroundLeft);
    let k0r = m.slope(DiabaticState::GroundRight);
    assert!((k0l + k0r).abs() < 1e-3 * k0l.abs(), "{k0l} {k0r}");
    assert!(k0l > 0.0);
    let e0l = m.energy(DiabaticState::GroundLeft);
    let e0r = m.energy(DiabaticState::GroundRight);
    assert!((e0l - e0r).abs() < 1e-3);
    assert_eq!(m.static_ground(), StaticGround::Degenerate);
    assert_eq!(m.at_bias(0.499).static_ground(), StaticGround::Left);
    assert_eq!(m.at_bias(0.501).static_ground(), StaticGround::Right);

    let hits = predict_resonances(&d, 15.9, 3);
    println!("{hits:?}");
    assert!(hits.iter().any(|r| r.n == 1));
    assert!(hits.iter().any(|r| r.n == 2));
}

#[test]
fn nominal_picofarad_has_no_resolvable_crossing() {
    let p = CircuitParams::nominal();
    let d = level_diagram(&p, (0.49, 0.51), 21, &grid()).unwrap();
    let err = extract_four_level_model(&d).unwrap_err();
    assert!(matches!(err, SpectrumError::NoCrossingFound { .. } | SpectrumError::BranchAmbiguity { .. }), "{err}");
}
