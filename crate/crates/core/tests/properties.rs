mod common;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rmpnav_core::analysis::edf_distance;
use rmpnav_core::extraction::{extract_fixed_resolution, extract_obstacles};
use rmpnav_core::rmp::{
    combine, damper, evaluate_navigation, evaluate_navigation_par, obstacle_policy, repulsor, soft_normalize, w_r,
};
use rmpnav_core::{NavigationParams, ObstacleCell, ObstaclePolicyParams, Policy, ResolutionSchedule};

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_policies(rng: &mut ChaCha8Rng, n: usize) -> Vec<Policy> {
    (0..n)
        .map(|_| Policy::new(random_vector(rng, 20.0), random_spd(rng, 0.05)))
        .collect()
}

fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
    (a - b).norm() <= tol * b.norm().max(1.0)
}

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn combine_single_policy_is_identity(seed in any::<u64>()) {
        let p = random_policies(&mut rng(seed), 1)[0];
        let out = combine(&[p]).unwrap();
        prop_assert!(close(&out.accel, &p.accel, 1e-9));
        prop_assert_eq!(out.metric, p.metric);
    }

    #[test]
    fn combine_is_permutation_invariant(seed in any::<u64>(), n in 2usize..12) {
        let mut r = rng(seed);
        let mut ps = random_policies(&mut r, n);
        let a = combine(&ps).unwrap();
        ps.reverse();
        ps.rotate_left(n / 2);
        let b = combine(&ps).unwrap();
        prop_assert!(close(&a.accel, &b.accel, 1e-9));
        prop_assert!((a.metric - b.metric).norm() <= 1e-9 * a.metric.norm());
    }

    #[test]
    fn zero_metric_policies_are_neutral(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let ps = random_policies(&mut r, n);
        let mut padded = ps.clone();
        padded.push(Policy::new(random_vector(&mut r, 1e6), Matrix3::zeros()));
        padded.insert(0, Policy::new(random_vector(&mut r, 1e6), Matrix3::zeros()));
        let a = combine(&ps).unwrap();
        let b = combine(&padded).unwrap();
        prop_assert!(close(&a.accel, &b.accel, 1e-9));
    }

    #[test]
    fn identity_metrics_average(seed in any::<u64>(), n in 1usize..16) {
        let mut r = rng(seed);
        let accels: Vec<_> = (0..n).map(|_| random_vector(&mut r, 50.0)).collect();
        let ps: Vec<_> = accels.iter().map(|&a| Policy::new(a, Matrix3::identity())).collect();
        let mean = accels.iter().sum::<Vector3<f64>>() / n as f64;
        prop_assert!(close(&combine(&ps).unwrap().accel, &mean, 1e-9));
    }

    #[test]
    fn identical_accelerations_are_a_fixed_point(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let f = random_vector(&mut r, 10.0);
        let ps: Vec<_> = (0..n).map(|_| Policy::new(f, random_spd(&mut r, 0.05))).collect();
        prop_assert!(close(&combine(&ps).unwrap().accel, &f, 1e-9));
    }

    #[test]
    fn soft_normalize_is_bounded_parallel_and_monotone(v in vec3(100.0), c in 0.01f64..200.0, k in 1.0f64..10.0) {
        let s = soft_normalize(&v, c);
        prop_assert!(s.norm() <= 1.0 + 4.0 * f64::EPSILON);
        if v.norm() > 0.0 {
            prop_assert!(s.dot(&v) >= 0.0);
            prop_assert!(s.cross(&v).norm() <= 1e-12 * v.norm().max(1.0));
            prop_assert!(soft_normalize(&(v * k), c).norm() >= s.norm() - 1e-15);
        }
    }

    #[test]
    fn damper_is_zero_when_receding(x_dot in vec3(5.0), dir in vec3(1.0), d in 0.0f64..3.0) {
        prop_assume!(dir.norm() > 1e-3);
        let r_hat = dir.normalize();
        let params = ObstaclePolicyParams::default();
        let out = damper(&x_dot, &r_hat, d, &params);
        if x_dot.dot(&r_hat) >= 0.0 {
            prop_assert_eq!(out, Vector3::zeros());
        } else {
            // approach braking points away from the obstacle once subtracted
            prop_assert!(out.dot(&r_hat) <= 0.0);
        }
    }

    #[test]
    fn range_weight_in_unit_interval(d in 0.0f64..10.0, r in 0.01f64..10.0) {
        let w = w_r(d, r);
        prop_assert!((0.0..=1.0).contains(&w));
        if d >= r {
            prop_assert_eq!(w, 0.0);
        }
    }

    #[test]
    fn repulsor_decays_with_distance(d in 0.0f64..5.0, dd in 0.001f64..2.0) {
        let params = ObstaclePolicyParams::default();
        let r_hat = Vector3::x();
        prop_assert!(repulsor(d + dd, &r_hat, &params).norm() < repulsor(d, &r_hat, &params).norm());
    }

    #[test]
    fn obstacle_metric_is_psd_rank_one_and_bounded(
        x in vec3(3.0), x_dot in vec3(4.0), height in 0u8..6, center in vec3(1.0)
    ) {
        let params = NavigationParams::default();
        let p = params.scale.apply(height, &params.obstacle);
        let side = 0.1 * 2f64.powi(height as i32);
        let cell = ObstacleCell { center, height, side_length: side };
        let response = obstacle_policy(&x, &x_dot, &cell, &p);
        let m = response.policy.metric;
        prop_assert!(is_psd(&m));
        prop_assert!(m.trace() <= 1.0 + 1e-12);
        let eig = nalgebra::SymmetricEigen::new(m).eigenvalues;
        let mut sorted: Vec<f64> = eig.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        prop_assert!(sorted[1].abs() <= 1e-12, "rank above one: {sorted:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_occupied_cell_covered_once(seed in any::<u64>()) {
        let mut r = rng(seed);
        let map = random_map(&mut r, 8.0);
        let b = map.bounds();
        for _ in 0..3 {
            let pos = Vector3::from_fn(|a, _| {
                rand::Rng::random_range(&mut r, b.min[a] - 2.0..b.max[a] + 2.0)
            });
            let cells = extract_obstacles(&map, &pos, &ResolutionSchedule::default());
            let (bad, dangling) = coverage_violations(&map, &cells);
            prop_assert!(bad.is_empty(), "{} cells covered != 1 times", bad.len());
            prop_assert_eq!(dangling, 0);
        }
    }

    #[test]
    fn fixed_resolution_matches_brute_force(seed in any::<u64>(), radius in 0.2f64..3.0) {
        let mut r = rng(seed);
        let map = random_map(&mut r, 6.0);
        let pos = map.bounds().center();
        let mut got: Vec<_> = extract_fixed_resolution(&map, &pos, radius)
            .iter()
            .map(|c| address_of(&map, c).index)
            .collect();
        got.sort();
        let mut expected: Vec<_> = map
            .occupied_cells()
            .into_iter()
            .filter(|&i| (map.center(&rmpnav_core::octree::NodeAddress::new(0, i)) - pos).norm() <= radius)
            .collect();
        expected.sort();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn nearest_distance_matches_edf_and_is_lipschitz(seed in any::<u64>()) {
        let mut r = rng(seed);
        let map = random_map(&mut r, 5.0);
        let b = map.bounds();
        for _ in 0..20 {
            let p = Vector3::from_fn(|a, _| rand::Rng::random_range(&mut r, b.min[a]..b.max[a]));
            let q = p + random_vector(&mut r, 0.5);
            let dp = edf_distance(&map, &p, 2.0);
            prop_assert!((map.nearest_occupied_distance(&p, 2.0) - dp).abs() < 1e-12);
            if map.cell_index(&q).is_some() {
                let dq = edf_distance(&map, &q, 2.0);
                prop_assert!((dp - dq).abs() <= (p - q).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn parallel_evaluation_matches_sequential(seed in any::<u64>()) {
        let mut r = rng(seed);
        let map = random_map(&mut r, 8.0);
        let b = map.bounds();
        let x = b.center() + random_vector(&mut r, 0.5);
        let x_dot = random_vector(&mut r, 2.0);
        let cells = extract_obstacles(&map, &x, &ResolutionSchedule::default());
        let params = NavigationParams::default();
        let goal = params.attractor(b.max);
        let seq = evaluate_navigation(&x, &x_dot, &cells, &goal, &params).unwrap();
        let par = evaluate_navigation_par(&x, &x_dot, &cells, &goal, &params).unwrap();
        prop_assert!(close(&par.accel, &seq.accel, 1e-9));
        prop_assert_eq!(par.collisions, seq.collisions);
    }

    #[test]
    fn single_height_fusion_equals_flat_fusion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let params = NavigationParams::default();
        let p0 = params.scale.apply(0, &params.obstacle);
        let x = Vector3::zeros();
        let x_dot = random_vector(&mut r, 1.0);
        let cells: Vec<_> = (0..20)
            .map(|_| {
                let dir = random_vector(&mut r, 1.0).normalize();
                ObstacleCell { center: dir * rand::Rng::random_range(&mut r, 0.1..0.6), height: 0, side_length: 0.1 }
            })
            .collect();
        let goal = params.attractor(Vector3::new(5.0, 0.0, 0.0));
        let mut flat: Vec<Policy> = cells.iter().map(|c| obstacle_policy(&x, &x_dot, c, &p0).policy).collect();
        let level = combine(&flat).unwrap();
        flat = vec![level, rmpnav_core::rmp::attractor_policy(&x, &x_dot, &goal)];
        let expected = combine(&flat).unwrap().accel;
        let got = evaluate_navigation(&x, &x_dot, &cells, &goal, &params).unwrap().accel;
        prop_assert!(close(&got, &expected, 1e-9));
    }
}
