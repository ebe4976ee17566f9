mod common;

use common::{combine_oracle, random_mass, triple};
use dgn::ds_fusion::{
    conflict, ds_combine, fuse, inverse_sensor_model, FusionError, GridSpec, LidarScan,
    MassAssignment, OccupancyGrid, SensorModel, SensorPose, DEFAULT_LAMBDA_FREE,
};
use dgn::scenario_sim::{build_scene, cast_rays, front_rear_poses, ContextClass};
use proptest::prelude::*;

#[test]
fn combination_matches_focal_enumeration() {
    let rep = common::ds_algebra(1000, 42);
    assert!(rep.oracle_err <= 1e-12, "{rep:?}");
    assert!(rep.commutative);
    assert!(rep.identity_err <= 1e-12);
    assert!(rep.assoc_err <= 1e-9);
    assert!(rep.conflict_flag_ok);
}

#[test]
fn worked_pair_against_oracle() {
    let a = MassAssignment::new(0.6, 0.0, 0.4).unwrap();
    let b = MassAssignment::new(0.5, 0.3, 0.2).unwrap();
    let (want, k) = combine_oracle(&a, &b);
    let want = want.unwrap();
    assert!((k - 0.18).abs() < 1e-12);
    assert!((conflict(&a, &b) - k).abs() < 1e-15);
    let got = triple(&ds_combine(&a, &b).unwrap());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
    for (g, w) in got.iter().zip([0.7561, 0.1463, 0.0976]) {
        assert!((g - w).abs() < 1e-3);
    }
}

#[test]
fn certain_opposites_conflict_totally() {
    let f = MassAssignment::new(1.0, 0.0, 0.0).unwrap();
    let o = MassAssignment::new(0.0, 1.0, 0.0).unwrap();
    assert!(matches!(ds_combine(&f, &o), Err(FusionError::TotalConflict { .. })));
    assert_eq!(combine_oracle(&f, &o).0, None);
}

fn mass() -> impl Strategy<Value = MassAssignment> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(f, t)| MassAssignment::from_evidence(f, t * (1.0 - f)).unwrap())
}

proptest! {
    #[test]
    fn combination_is_closed_and_commutative(a in mass(), b in mass()) {
        match (ds_combine(&a, &b), ds_combine(&b, &a)) {
            (Ok(ab), Ok(ba)) => {
                prop_assert_eq!(triple(&ab), triple(&ba));
                let t = triple(&ab);
                prop_assert!(t.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!((t.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric conflict"),
        }
    }

    #[test]
    fn combination_is_associative(a in mass(), b in mass(), c in mass()) {
        let left = ds_combine(&a, &b).and_then(|ab| ds_combine(&ab, &c));
        let right = ds_combine(&b, &c).and_then(|bc| ds_combine(&a, &bc));
        if let (Ok(l), Ok(r)) = (left, right) {
            // Near-total conflict amplifies rounding through the normaliser.
            prop_assume!(conflict(&a, &b) < 0.99 && conflict(&b, &c) < 0.99);
            prop_assert!(common::max_diff(&triple(&l), &triple(&r)) <= 1e-9);
        }
    }

    #[test]
    fn random_pairs_agree_with_oracle(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (a, b) = (random_mass(&mut r), random_mass(&mut r));
        let want = combine_oracle(&a, &b).0.unwrap();
        prop_assert!(common::max_diff(&triple(&ds_combine(&a, &b).unwrap()), &want) <= 1e-12);
    }
}

#[test]
fn circular_room_is_free_inside() {
    let spec = GridSpec::centered(81, 81, 0.25);
    let radius = 9.0;
    let scan = LidarScan {
        fov: std::f64::consts::TAU,
        max_range: 30.0,
        ranges: vec![radius; 360],
    };
    let pose = SensorPose::new(0.0, 0.0, 0.0);
    let grid = inverse_sensor_model(&scan, &pose, &spec, &SensorModel::default()).unwrap();
    let own = spec.cell_of(0.0, 0.0).unwrap();
    let rim = std::f64::consts::SQRT_2 * spec.resolution;
    let (mut inside, mut free, mut occupied) = (0, 0, 0);
    for row in 0..spec.height {
        for col in 0..spec.width {
            let (x, y) = spec.cell_center(col, row);
            if (col, row) == own || x.hypot(y) >= radius - rim {
                continue;
            }
            inside += 1;
            let m = grid.get(col, row);
            if m.m_occ() > 0.0 {
                occupied += 1;
            } else if (m.m_free() - DEFAULT_LAMBDA_FREE).abs() < 1e-12 {
                free += 1;
            }
        }
    }
    assert_eq!(occupied, 0);
    assert!(free as f64 >= 0.99 * inside as f64, "{free}/{inside}");
}

#[test]
fn fused_grid_matches_cellwise_oracle() {
    let spec = GridSpec::default();
    for (k, class) in ContextClass::ALL.into_iter().enumerate() {
        let scene = build_scene(class, 100 + k as u64);
        let [front, rear] = front_rear_poses(&scene.ego_pose, 1.0);
        let model = SensorModel::default();
        let g1 = inverse_sensor_model(&cast_rays(&scene, &front, 720, std::f64::consts::PI, 30.0), &front, &spec, &model).unwrap();
        let g2 = inverse_sensor_model(&cast_rays(&scene, &rear, 720, std::f64::consts::PI, 30.0), &rear, &spec, &model).unwrap();
        let fused = fuse(&g1, &g2, 1.0).unwrap();
        let mut oracle = OccupancyGrid::vacuous(spec).unwrap();
        for row in 0..spec.height {
            for col in 0..spec.width {
                let (want, _) = combine_oracle(g1.get(col, row), g2.get(col, row));
                let m = want.map_or(MassAssignment::VACUOUS, |t| MassAssignment::new(t[0], t[1], t[2]).unwrap());
                oracle.set(col, row, m);
            }
        }
        for (a, b) in fused.cells().iter().zip(oracle.cells()) {
            assert!(common::max_diff(&triple(a), &triple(b)) <= 1e-12);
        }
    }
}
