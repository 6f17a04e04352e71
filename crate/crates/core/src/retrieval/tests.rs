use super::*;
use crate::forward::BoundaryCondition;
use crate::geometry::{make_admissible, ClosedCurve};
use crate::measurement::{
    add_noise, build_grid, compute_fields, dataset_from_fields, GrazeSpec,
};
use crate::measurement::tests::{demo_config, demo_grid};
use std::f64::consts::PI;

fn demo_data() -> (ScatteringConfig, MeasurementGrid, NearFieldTruth, PhaselessDataset) {
    let config = demo_config();
    let grid = demo_grid(&config, 12, 6);
    let fields = compute_fields(&config, &grid).unwrap();
    let ds = dataset_from_fields(&config, &grid, &fields);
    (config, grid, fields, ds)
}

fn toy_dataset(r: f64, s: f64, t: f64) -> PhaselessDataset {
    let config = demo_config();
    let grid = demo_grid(&config, 2, 2);
    let fields = compute_fields(&config, &grid).unwrap();
    let mut ds = dataset_from_fields(&config, &grid, &fields);
    ds.r = vec![r; 2];
    ds.s = vec![vec![s; 2]; 2];
    ds.t = vec![vec![t; 2]; 2];
    ds
}

#[test]
fn cross_term_algebra() {
    // Aligned phases: r = s = 1, t = 2 gives cross = 1.
    let ds = toy_dataset(1.0, 1.0, 2.0);
    let cross = cross_term(&ds).unwrap();
    assert!((cross[0][0] - 1.0).abs() < 1e-15);
    // Orthogonal phases: 3-4-5 gives cross = 0.
    let ds = toy_dataset(3.0, 4.0, 5.0);
    let cross = cross_term(&ds).unwrap();
    assert!(cross[1][1].abs() < 1e-15);
}

#[test]
fn cross_term_matches_forward_fields() {
    let (_, _, fields, ds) = demo_data();
    let cross = cross_term(&ds).unwrap();
    let mut scale = 0.0f64;
    for i in 0..ds.n_receivers() {
        for j in 0..ds.n_sources() {
            scale = scale.max(ds.r[i] * ds.s[i][j]);
        }
    }
    for i in 0..ds.n_receivers() {
        for j in 0..ds.n_sources() {
            let want = (fields.z0_value(i) * fields.value(i, j).conj()).re;
            assert!(
                (cross[i][j] - want).abs() < 1e-12 * scale,
                "cross term off at ({i},{j})"
            );
        }
    }
}

#[test]
fn decompose_rules() {
    // cos delta = cross / (r s); zero cross means orthogonal phases.
    let ds = toy_dataset(3.0, 4.0, 5.0);
    let pd = decompose(&ds, 1e-6).unwrap();
    assert!(pd.mask[0][0]);
    assert!(pd.cos_delta[0][0].abs() < 1e-14);

    // A cosine within the clamp tolerance of 1 is clamped, not flagged.
    let mut ds = toy_dataset(1.0, 1.0, 2.0);
    let eps = 2.5e-10_f64; // t^2 = 4 + 2*eps => cos = 1 + eps/2
    ds.t[0][0] = (4.0 + 2.0 * eps).sqrt();
    let pd = decompose(&ds, 1e-6).unwrap();
    assert!(pd.mask[0][0]);
    assert!((pd.cos_delta[0][0] - 1.0).abs() < 1e-15);
    assert!(pd.flagged.is_empty());

    // A larger excursion is flagged and excluded from the mask.
    let mut ds = toy_dataset(1.0, 1.0, 2.0);
    ds.t[0][0] = (4.0 + 2.0 * 1e-6_f64).sqrt();
    let pd = decompose(&ds, 1e-6).unwrap();
    assert!(!pd.mask[0][0]);
    assert!(pd.flagged.contains(&(0, 0)));

    // Zero data is degenerate.
    let mut ds = toy_dataset(1.0, 1.0, 2.0);
    ds.r = vec![0.0; 2];
    assert!(matches!(
        decompose(&ds, 1e-6),
        Err(Error::DegenerateData(_))
    ));
}

#[test]
fn mask_covers_most_of_the_demo_grid() {
    let (_, _, _, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    let total = ds.n_receivers() * ds.n_sources();
    let masked = pd.mask.iter().flatten().filter(|&&m| m).count();
    assert!(
        masked as f64 > 0.95 * total as f64,
        "mask covers only {masked}/{total}"
    );
}

#[test]
fn true_anchors_reproduce_the_field() {
    let (_, _, fields, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    let anchors: Vec<Option<C64>> = (0..ds.n_receivers())
        .map(|i| Some(fields.z0_value(i)))
        .collect();
    let (direct, conjugate) = build_branches(&ds, &pd, &anchors).unwrap();
    let err = direct.max_rel_error(&fields);
    assert!(err < 1e-10, "direct branch error {err}");
    // Modulus preservation is exact by construction.
    for i in 0..ds.n_receivers() {
        for j in 0..ds.n_sources() {
            if let Some(v) = direct.value(i, j) {
                assert!((v.norm() - ds.s[i][j]).abs() < 1e-14 * ds.s[i][j]);
            }
        }
    }
    // The conjugate branch is the entrywise conjugate.
    for i in 0..ds.n_receivers() {
        for j in 0..ds.n_sources() {
            if let (Some(d), Some(c)) = (direct.value(i, j), conjugate.value(i, j)) {
                assert!((d.conj() - c).norm() < 1e-15);
            }
        }
    }
}

#[test]
fn either_or_branch_relations_hold() {
    // On masked entries the true field satisfies exactly one of the two
    // sign relations for delta, to 1e-8 in phase.
    let (_, _, fields, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    for i in 0..ds.n_receivers() {
        let alpha = fields.z0_value(i).arg();
        for j in 0..ds.n_sources() {
            if !pd.mask[i][j] {
                continue;
            }
            let base = pd.cos_delta[i][j].acos();
            let beta = fields.value(i, j).arg();
            let plus = (C64::from_polar(1.0, alpha - base) - C64::from_polar(1.0, beta)).norm();
            let minus = (C64::from_polar(1.0, alpha + base) - C64::from_polar(1.0, beta)).norm();
            assert!(
                plus.min(minus) < 1e-8,
                "neither branch matches at ({i},{j}): {plus} {minus}"
            );
        }
    }
}

#[test]
fn anchors_from_graze_are_accurate_and_physical() {
    let (_, _, fields, ds) = demo_data();
    let anchors = anchor_from_graze(&ds).unwrap();
    let mut worst = 0.0f64;
    for (i, fit) in anchors.physical.iter().enumerate() {
        let fit = fit.expect("all receivers anchored in the demo");
        let true_alpha = fields.z0_value(i).arg();
        let err = (C64::from_polar(1.0, fit.alpha) - C64::from_polar(1.0, true_alpha)).norm();
        worst = worst.max(err);
        assert!(fit.absorption > 0.0, "physical fit must absorb");
    }
    // Phase error under 0.05 rad (|e^{ia} - e^{ib}| ~ |a - b| for small gaps).
    assert!(worst < 0.05, "anchor phase error {worst}");
}

#[test]
fn single_level_anchor_error_decreases_with_epsilon() {
    let config = demo_config();
    let mut errors = Vec::new();
    for &frac in &[1e-2, 1e-3, 1e-4] {
        let sigma = make_admissible(config.k, [0.0, 0.0], 1.2, [0.0, PI]).unwrap();
        let gamma = make_admissible(config.k, [0.0, 0.0], 0.7, [0.0, PI]).unwrap();
        let grid = build_grid(
            &config,
            sigma,
            gamma,
            [0.3, -0.55],
            6,
            4,
            Some(&GrazeSpec {
                epsilon_fractions: vec![frac],
                receiver_stride: 1,
            }),
        )
        .unwrap();
        let fields = compute_fields(&config, &grid).unwrap();
        let ds = dataset_from_fields(&config, &grid, &fields);
        let anchors = anchor_from_graze(&ds).unwrap();
        let mut worst = 0.0f64;
        for (i, fit) in anchors.physical.iter().enumerate() {
            if let Some(fit) = fit {
                let true_alpha = fields.z0_value(i).arg();
                worst = worst
                    .max((C64::from_polar(1.0, fit.alpha) - C64::from_polar(1.0, true_alpha)).norm());
            }
        }
        errors.push(worst);
    }
    assert!(
        errors[0] > errors[1] && errors[1] > errors[2],
        "anchor error not monotone over epsilon levels: {errors:?}"
    );
}

#[test]
fn end_to_end_retrieval_selects_direct() {
    let (_, _, fields, ds) = demo_data();
    let report = retrieve(&ds, DEFAULT_TAU).unwrap();
    assert_eq!(report.status, SelectionStatus::Selected);
    assert_eq!(report.selected, Some(BranchTag::Direct));
    assert!(report.margin > 0.5, "margin {}", report.margin);
    let recovered = report.recovered.as_ref().unwrap();
    let err = recovered.max_rel_error(&fields);
    assert!(err < 1e-2, "recovered field error {err}");
}

#[test]
fn retrieval_survives_one_percent_noise() {
    let (_, _, _, ds) = demo_data();
    let noisy = add_noise(&ds, 0.01, 11).unwrap();
    let report = retrieve(&noisy, DEFAULT_TAU).unwrap();
    assert_eq!(report.status, SelectionStatus::Selected);
    assert_eq!(report.selected, Some(BranchTag::Direct));
}

#[test]
fn conjugated_anchors_flip_the_selection() {
    // Candidates built from a conjugated oracle field: the selector must
    // pick the conjugate-tagged branch, symmetrically.
    let (_, _, fields, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    let conj_fields = fields.conjugated();
    let anchors: Vec<Option<C64>> = (0..ds.n_receivers())
        .map(|i| Some(conj_fields.z0_value(i)))
        .collect();
    let (direct, conjugate) = build_branches(&ds, &pd, &anchors).unwrap();
    let report = select_branch(direct, conjugate, &pd);
    assert_eq!(report.status, SelectionStatus::Selected);
    assert_eq!(report.selected, Some(BranchTag::Conjugate));
    // And the winning candidate is the true field again.
    let err = report.recovered.unwrap().max_rel_error(&fields);
    assert!(err < 1e-2, "flipped recovery error {err}");
}

#[test]
fn missing_graze_data_is_an_explicit_error() {
    let config = demo_config();
    let sigma = make_admissible(config.k, [0.0, 0.0], 1.2, [0.0, PI]).unwrap();
    let gamma = make_admissible(config.k, [0.0, 0.0], 0.7, [0.0, PI]).unwrap();
    let grid = build_grid(&config, sigma, gamma, [0.3, -0.55], 6, 4, None).unwrap();
    let ds = crate::measurement::synthesize(&config, &grid).unwrap();
    assert!(matches!(
        anchor_from_graze(&ds),
        Err(Error::AnchorUnavailable(_))
    ));
    assert!(matches!(retrieve(&ds, DEFAULT_TAU), Err(Error::AnchorUnavailable(_))));
}

#[test]
fn degenerate_real_data_is_reported() {
    // Real anchors and cos delta = 1 everywhere: conjugation fixes the data,
    // both branches coincide and the report says so.
    let mut ds = toy_dataset(1.0, 1.0, 2.0);
    ds.graze_s = Vec::new();
    ds.graze_t = Vec::new();
    ds.grid.graze = None;
    let pd = decompose(&ds, 1e-6).unwrap();
    let anchors: Vec<Option<C64>> = vec![Some(C64::new(1.0, 0.0)); 2];
    let (direct, conjugate) = build_branches(&ds, &pd, &anchors).unwrap();
    assert!(direct.degenerate);
    for i in 0..2 {
        for j in 0..2 {
            if let (Some(d), Some(c)) = (direct.value(i, j), conjugate.value(i, j)) {
                assert!((d - c).norm() < 1e-14);
            }
        }
    }
    let report = select_branch(direct, conjugate, &pd);
    assert_eq!(report.status, SelectionStatus::Degenerate);
}

#[test]
fn anchor_modulus_consistency_enforced() {
    let (_, _, _, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    let mut anchors: Vec<Option<C64>> = (0..ds.n_receivers()).map(|_| None).collect();
    anchors[0] = Some(C64::new(ds.r[0] * 1.1, 0.0)); // wrong modulus
    assert!(build_branches(&ds, &pd, &anchors).is_err());
}

#[test]
fn uniqueness_check_separates_configs() {
    // Shared grid sized for the kite (min radius ~0.92).
    let kite = ScatteringConfig {
        cavity: ClosedCurve::kite([0.0, 0.0], 1.0).unwrap(),
        n_cavity: 96,
        ..demo_config()
    };
    let circle = demo_config();
    let sigma = make_admissible(1.0, [0.0, 0.0], 0.8, [0.0, PI]).unwrap();
    let gamma = make_admissible(1.0, [0.0, 0.0], 0.45, [0.0, PI]).unwrap();
    let grid = build_grid(&kite, sigma, gamma, [0.25, -0.4], 8, 4, None).unwrap();

    let same = verify_uniqueness_steps(&circle, &circle.clone(), &grid, 1e-3).unwrap();
    assert!(!same.distinguishable);
    assert!(same.max_dr.max(same.max_ds).max(same.max_dt) < 1e-10);

    let diff = verify_uniqueness_steps(&circle, &kite, &grid, 1e-3).unwrap();
    assert!(diff.distinguishable, "{diff:?}");

    // Same shape, different boundary condition.
    let impedance = ScatteringConfig {
        bc: BoundaryCondition::impedance_const(1.0, 0.0),
        ..demo_config()
    };
    let bc_diff = verify_uniqueness_steps(&circle, &impedance, &grid, 1e-3).unwrap();
    assert!(bc_diff.distinguishable);

    // Mismatched wavenumbers are rejected.
    let other_k = ScatteringConfig {
        k: 1.1,
        ..demo_config()
    };
    assert!(verify_uniqueness_steps(&circle, &other_k, &grid, 1e-3).is_err());
}

#[test]
fn probe_tracking() {
    let (_, _, fields, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    for i in 0..ds.n_receivers() {
        let alpha = fields.z0_value(i).arg();
        let mut row = String::new();
        for j in 0..ds.n_sources() {
            if !pd.mask[i][j] { row.push('.'); continue; }
            let true_delta = wrap_angle(alpha - fields.value(i, j).arg());
            let base = pd.cos_delta[i][j].acos();
            let sign = if true_delta >= 0.0 { '+' } else { '-' };
            row.push(sign);
            row.push_str(&format!("{:.2}({:.2}) ", true_delta, base));
        }
        println!("row {i}: {row}");
    }
}

#[test]
fn probe_flips() {
    let (_, _, fields, ds) = demo_data();
    let pd = decompose(&ds, DEFAULT_TAU).unwrap();
    let anchors: Vec<Option<C64>> = (0..ds.n_receivers())
        .map(|i| Some(fields.z0_value(i)))
        .collect();
    let (direct, _) = build_branches(&ds, &pd, &anchors).unwrap();
    println!("flip_margin {}", direct.flip_margin);
    for i in 0..ds.n_receivers() {
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..ds.n_sources() {
            if let Some(v) = direct.value(i, j) {
                err = err.max((v - fields.value(i, j)).norm());
                scale = scale.max(fields.value(i, j).norm());
            }
        }
        println!("row {i}: err {err:.3e} scale {scale:.3e}");
    }
}
