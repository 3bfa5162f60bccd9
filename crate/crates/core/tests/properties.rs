mod common;

use nalgebra::DMatrix;
use nestfactor::amplitude::{adjoint_diagonal, check_intertwining, image_nest, partial_diagonal};
use nestfactor::config::{parse_config, Command, ExperimentConfig, NestSpec, OperatorSpec};
use nestfactor::factor::{admissibility, canonical_factor, cholesky_upper, FactorOptions};
use nestfactor::nest::{increments, refine, refinement_schedule, standard_nest, validate, Nest, Partition};
use nestfactor::opcore::{op_norm, psd_sqrt, range_projection, spectral_norm, sym_eig, DEFAULT_RANK_TOL};
use nestfactor::probes::ProbeSet;
use nestfactor::report::{read_matrix_csv, write_matrix_csv};
use nestfactor::stability::{counterexample_instance, posdef_projection};
use nestfactor::Operator;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: std::env::var("NESTFACTOR_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(48),
        rng_seed: match std::env::var("NESTFACTOR_RANDOM_SEED") {
            Ok(_) => RngSeed::Random,
            Err(_) => RngSeed::Fixed(0x5eed),
        },
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), dim in 1usize..=24) {
        let mut rng = common::rng(seed);
        let a = common::random_square(dim, &mut rng);
        let sym = Operator::new((a.matrix() + a.matrix().transpose()) * 0.5).unwrap();
        let spec = sym_eig(&sym).unwrap();
        prop_assert!(spec.residual(&sym) <= 1e-10 * (1.0 + op_norm(&sym)));
        prop_assert!(spec.orthonormality_defect() <= 1e-10);
        prop_assert!(spec.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn square_root_squares_back(seed in any::<u64>(), dim in 1usize..=24) {
        let mut rng = common::rng(seed);
        let a = common::gaussian(dim, dim, &mut rng);
        // positive semidefinite, often singular
        let rank = 1 + (seed as usize) % dim;
        let b = a.columns(0, rank).into_owned();
        let c = Operator::new(&b * b.transpose()).unwrap();
        let root = psd_sqrt(&c, 1e-12).unwrap();
        prop_assert!(root.is_symmetric());
        let err = spectral_norm(&(root.matrix() * root.matrix() - c.matrix()));
        prop_assert!(err <= 1e-9 * (1.0 + op_norm(&c)), "err {err:e}");
        prop_assert!(sym_eig(&root).unwrap().min() >= -1e-12);
    }

    #[test]
    fn norm_is_subadditive_and_submultiplicative(seed in any::<u64>(), dim in 1usize..=20) {
        let mut rng = common::rng(seed);
        let a = common::random_square(dim, &mut rng);
        let b = common::random_square(dim, &mut rng);
        prop_assert!(op_norm(&(&a + &b)) <= op_norm(&a) + op_norm(&b) + 1e-12);
        prop_assert!(op_norm(&(&a * &b)) <= op_norm(&a) * op_norm(&b) + 1e-12);
        prop_assert!((op_norm(&a.transpose()) - op_norm(&a)).abs() <= 1e-12 * (1.0 + op_norm(&a)));
    }

    #[test]
    fn range_projection_captures_image(seed in any::<u64>(), dim in 2usize..=24) {
        let mut rng = common::rng(seed);
        let w = common::random_square(dim, &mut rng);
        let nest = common::random_nest(dim, &mut rng);
        for x in nest.projections() {
            let p = range_projection(&w, x, DEFAULT_RANK_TOL).unwrap();
            prop_assert!(p.defects().within_contract(), "{:?}", p.defects());
            let wx = w.matrix() * x.matrix();
            prop_assert!(spectral_norm(&(p.matrix() * &wx - &wx)) <= 1e-9);
            prop_assert!(p.rank() <= x.rank());
        }
    }

    #[test]
    fn random_nests_validate(seed in any::<u64>(), dim in 1usize..=24) {
        let mut rng = common::rng(seed);
        let nest = common::random_nest(dim, &mut rng);
        let d = validate(&nest);
        prop_assert!(d.passes(), "{d:?}");
        let back = Nest::from_text(&nest.to_text()).unwrap();
        prop_assert_eq!(back.grid(), nest.grid());
        for (a, b) in back.projections().iter().zip(nest.projections()) {
            prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-14);
        }
    }

    #[test]
    fn refinement_shrinks_range(seed in any::<u64>(), dim in 1usize..=40) {
        let mut rng = common::rng(seed);
        let nest = common::random_nest(dim, &mut rng);
        let part = common::random_partition(&nest, &mut rng);
        let finer = refine(&part, &nest);
        prop_assert!(finer.range() <= part.range());
        prop_assert!(part.indices().iter().all(|k| finer.indices().contains(k)));
        if !part.is_finest() {
            prop_assert!(finer.intervals() > part.intervals());
        }
        let schedule = refinement_schedule(&nest, 12);
        prop_assert!(schedule.last().unwrap().is_finest() || schedule.len() == 13);
        prop_assert!(schedule.windows(2).all(|w| w[1].range() <= w[0].range()));
        // increments sum to the identity
        let total = increments(&nest, &part).iter().fold(DMatrix::zeros(dim, dim), |acc, p| acc + p.matrix());
        prop_assert!((total - DMatrix::<f64>::identity(dim, dim)).amax() <= 1e-12);
    }

    #[test]
    fn diagonal_identities(seed in any::<u64>(), dim in 2usize..=24) {
        let mut rng = common::rng(seed);
        let w = common::random_square(dim, &mut rng);
        let nest = common::random_nest(dim, &mut rng);
        let part = common::random_partition(&nest, &mut rng);
        let img = image_nest(&w, &nest, DEFAULT_RANK_TOL).unwrap();
        prop_assert!(img.ranks_nondecreasing());
        prop_assert!(img.capture_defect(&w, &nest) <= 1e-9);

        let d = partial_diagonal(&w, &nest, &part, &img);
        prop_assert!(op_norm(&d) <= op_norm(&w) + 1e-9);
        prop_assert!(check_intertwining(&d, &nest, &img, &part) <= 1e-10);
        let adj = adjoint_diagonal(&w, &nest, &part, &img);
        prop_assert!((adj.matrix() - d.matrix().transpose()).amax() <= 1e-13);

        // one interval: the diagonal is P_T W = W
        let whole = partial_diagonal(&w, &nest, &Partition::coarsest(&nest), &img);
        prop_assert!((whole.matrix() - w.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn upper_triangular_sources_keep_block_structure(seed in any::<u64>(), dim in 2usize..=24) {
        let mut rng = common::rng(seed);
        let mut m = common::gaussian(dim, dim, &mut rng);
        for i in 0..dim {
            m[(i, i)] = 1.0 + m[(i, i)].abs();
            for j in 0..i {
                m[(i, j)] = 0.0;
            }
        }
        let w = Operator::new(m).unwrap();
        let nest = standard_nest(dim).unwrap();
        let part = common::random_partition(&nest, &mut rng);
        let img = image_nest(&w, &nest, DEFAULT_RANK_TOL).unwrap();
        let d = partial_diagonal(&w, &nest, &part, &img);
        let idx = part.indices();
        for b in 0..idx.len() - 1 {
            for i in idx[b + 1]..dim {
                for j in idx[b]..idx[b + 1] {
                    prop_assert!(d.get(i, j).abs() <= 1e-12, "D[{i},{j}] = {:e}", d.get(i, j));
                }
            }
        }
    }

    #[test]
    fn factor_at_finest_standard_partition_is_scaled_cholesky(seed in any::<u64>(), dim in 2usize..=20) {
        let mut rng = common::rng(seed);
        let c = common::random_spd(dim, &mut rng);
        let nest = standard_nest(dim).unwrap();
        let mut opts = FactorOptions::default();
        opts.diagonal.schedule = 12;
        opts.diagonal.eps = Some(1e-300);
        let rep = canonical_factor(&c, &nest, &opts, &ProbeSet::seeded(dim, seed)).unwrap();
        prop_assert!(rep.partition().is_finest());
        let r = cholesky_upper(&c).unwrap();
        let rm = r.matrix();
        let expected = DMatrix::from_fn(dim, dim, |i, j| rm[(i, i)] * rm[(i, j)]);
        prop_assert!((rep.v.matrix() - &expected).amax() <= 1e-9 * (1.0 + op_norm(&c)));
        prop_assert!(rep.residual_bound_holds());
        prop_assert!(rep.triangularity_defect <= 1e-10);
    }

    #[test]
    fn orthogonal_diagonals_are_admissible(seed in any::<u64>(), dim in 1usize..=24) {
        let mut rng = common::rng(seed);
        let q = Operator::new(common::orthogonal(dim, &mut rng)).unwrap();
        let a = admissibility(&q, DEFAULT_RANK_TOL);
        prop_assert!(a.isometry_defect <= 1e-12);
        prop_assert_eq!(a.rank_defect, 0);
    }

    #[test]
    fn posdef_formula_on_random_nests(seed in any::<u64>(), dim in 2usize..=20) {
        let mut rng = common::rng(seed);
        let c = common::random_spd(dim, &mut rng);
        let nest = common::random_nest(dim, &mut rng);
        let root = psd_sqrt(&c, 1e-12).unwrap();
        for k in 0..nest.grid().len() {
            let p = posdef_projection(&c, &nest, k).unwrap();
            let q = range_projection(&root, nest.projection(k), DEFAULT_RANK_TOL).unwrap();
            prop_assert!(spectral_norm(&(p.matrix() - q.matrix())) <= 1e-9);
        }
    }

    #[test]
    fn counterexample_closed_forms(n in 2usize..=40, extra in 1usize..=20) {
        let ce = counterexample_instance(n, n + extra).unwrap();
        prop_assert!(ce.perturbation_norm() <= 2.0 / n as f64 + 1e-12);
        prop_assert!((ce.phi1_defect().powi(2) - ce.closed_form_phi1_defect_sq()).abs() <= 1e-10);
        prop_assert!(ce.projection_agreement() <= 1e-10);
    }

    #[test]
    fn matrix_csv_round_trips(seed in any::<u64>(), dim in 1usize..=12) {
        let mut rng = common::rng(seed);
        let a = common::random_square(dim, &mut rng);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &a).unwrap();
        let back = read_matrix_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.matrix(), a.matrix());
    }

    #[test]
    fn config_round_trips(
        cmd in 0usize..6,
        n in 2usize..=1024,
        schedule in 0usize..=12,
        kappa in -0.99f64..0.99,
        seed in any::<u64>(),
        tol in 1e-12f64..1.0,
        first_alpha in 1.0f64..10.0,
        file_nest in any::<bool>(),
    ) {
        let mut cfg = ExperimentConfig::new(Command::ALL[cmd]);
        cfg.n = n;
        cfg.schedule = schedule;
        cfg.kappa = kappa;
        cfg.seed = seed;
        cfg.tol = tol;
        cfg.alphas = vec![first_alpha, first_alpha * 2.5, first_alpha * 7.0];
        if file_nest {
            cfg.nest = NestSpec::File("nests/custom.txt".into());
            cfg.operator = OperatorSpec::Matrix("m.csv".into());
        }
        prop_assert_eq!(parse_config(&cfg.serialize()).unwrap(), cfg);
    }
}
