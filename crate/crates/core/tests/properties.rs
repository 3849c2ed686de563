use drquery::deviation::chain_referral_payoff;
use drquery::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_point() -> impl Strategy<Value = OffspringDistribution> {
    (0.05f64..0.6, 2usize..4).prop_map(|(c0, d)| {
        OffspringDistribution::from_sparse(d, &[(0, c0), (d, 1.0 - c0)]).unwrap()
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn lambda_telescopes(dist in two_point(), n in 2.0f64..500.0, h in 1usize..80) {
        let p = BranchingProfile::new(&dist, n, h).unwrap();
        let total: f64 = p.lambda.iter().sum();
        prop_assert!(close(total, 1.0 - p.phi[h], 1e-12));
        prop_assert!(p.lambda.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn stable_lambda_matches_differences_near_root(dist in two_point(), n in 2.0f64..50.0) {
        let p = BranchingProfile::new(&dist, n, 8).unwrap();
        let naive = first_answer_distribution(&p.phi);
        for (a, b) in p.lambda.iter().zip(&naive) {
            prop_assert!((a - b).abs() <= 1e-13);
        }
    }

    #[test]
    fn chain_lambda_closed_form(n in 1.5f64..1000.0, h in 1usize..120) {
        let p = BranchingProfile::new(&OffspringDistribution::chain(), n, h).unwrap();
        let q = 1.0 - 1.0 / n;
        for i in 1..=h {
            prop_assert!(close(p.lambda_at(i), q.powi(i as i32 - 1) / n, 1e-12));
        }
    }

    #[test]
    fn tree_x_is_non_increasing(dist in two_point(), n in 5.0f64..500.0, h in 2usize..60) {
        let p = BranchingProfile::new(&dist, n, h).unwrap();
        let t = dr_tree_scheme_for(&p, h).unwrap();
        let (x, a) = t.tree_aux().unwrap();
        for w in x.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        // a_i = 1 + Σ_{j=i}^{h-1} (x_j + 1)
        let mut acc = 1.0;
        for i in (1..=h).rev() {
            prop_assert!(close(a[i - 1], acc, 1e-12));
            if i >= 2 {
                acc += x[i - 2] + 1.0;
            }
        }
    }

    #[test]
    fn tree_cost_matches_closed_form(dist in two_point(), n in 5.0f64..500.0, h in 1usize..60) {
        let p = BranchingProfile::new(&dist, n, h).unwrap();
        let lam = p.lambda_prefix(h);
        let t = dr_tree_scheme(lam, h).unwrap();
        let (x, a) = t.tree_aux().unwrap();
        let mut closed = 0.0;
        for i in 1..=h {
            closed += lam[i - 1] * (a[i - 1] + (i - 1) as f64);
            if i >= 2 {
                closed += lam[i - 1] * x[i - 2];
            }
        }
        prop_assert!(close(expected_cost(&t, lam).unwrap(), closed, 1e-12));
    }

    #[test]
    fn allocation_sums_to_path_total(n in 1.5f64..100.0, h in 1usize..40, len in 1usize..40) {
        let t = dr_chain_scheme(n, h, ChainVariant::Normalized).unwrap();
        match t.allocate(len) {
            Ok(r) => {
                prop_assert!(len <= h);
                prop_assert_eq!(r.len(), len);
                prop_assert!(close(r.iter().sum::<f64>(), t.path_total(len), 1e-14));
            }
            Err(_) => prop_assert!(len > h),
        }
    }

    #[test]
    fn chain_referral_payoff_matches_aux(n in 1.5f64..100.0, h in 2usize..30, i in 1usize..30, k in 0usize..30) {
        prop_assume!(i < h && i + k < h);
        let t = dr_chain_scheme(n, h, ChainVariant::Normalized).unwrap();
        let honest = chain_referral_payoff(&t, n, i, 0).unwrap().value;
        let deviant = chain_referral_payoff(&t, n, i, k).unwrap().value;
        prop_assert!(deviant <= honest + 1e-9);
        let aux = drquery::deviation::chain_referral_from_aux(&t, i, k).unwrap();
        prop_assert!(close(deviant, aux, 1e-12), "{} vs {}", deviant, aux);
    }

    #[test]
    fn normalized_holder_never_gains(n in 1.5f64..100.0, h in 2usize..30, i in 1usize..30, k in 1usize..30) {
        prop_assume!(i + k <= h);
        let t = dr_chain_scheme(n, h, ChainVariant::Normalized).unwrap();
        let honest = chain_holder_payoff(&t, i, 0).unwrap().value;
        let deviant = chain_holder_payoff(&t, i, k).unwrap().value;
        prop_assert!(deviant <= honest + 1e-9);
    }

    #[test]
    fn shortest_path_never_deeper_than_random_walk(dist in two_point(), n in 2.0f64..30.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = sample_tree(&dist, n, 8, &mut rng).unwrap();
        let sp = select_answer(&tree, SelectionRule::ShortestPath, &mut rng.clone());
        let rw = select_answer(&tree, SelectionRule::RandomWalk, &mut rng);
        prop_assert_eq!(sp.is_some(), rw.is_some());
        if let (Some(sp), Some(rw)) = (sp, rw) {
            prop_assert!(sp.len() <= rw.len());
            prop_assert!(tree.has_answer(*sp.last().unwrap()));
            prop_assert!(tree.has_answer(*rw.last().unwrap()));
        }
    }

    #[test]
    fn estimates_are_deterministic(seed: u64, block in 1u64..300) {
        let dist = OffspringDistribution::from_sparse(2, &[(0, 0.25), (2, 0.75)]).unwrap();
        let p = BranchingProfile::new(&dist, 10.0, 5).unwrap();
        let mut config = EstimateConfig::new(dist, 10.0, dr_tree_scheme_for(&p, 5).unwrap());
        config.trials = 500;
        config.master_seed = seed;
        config.block_size = block;
        let a = estimate(&config).unwrap();
        config.block_size = 500;
        let b = estimate(&config).unwrap();
        prop_assert_eq!(&a.level_histogram, &b.level_histogram);
        prop_assert_eq!(&a.dr_frequency, &b.dr_frequency);
        prop_assert!(close(a.mean_cost, b.mean_cost, 1e-12));
    }
}
