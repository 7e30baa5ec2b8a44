use dhgl::admm::AdmmConfig;
use dhgl::datagen::{choose_known_hubs, generate_truth, sample_gaussian, NetworkSpec};
use dhgl::evaluation::GroundTruth;
use dhgl::linalg::{empirical_covariance, SymmetricMatrix};
use dhgl::selection::{grid_select, BicConfig, GridSpec};
use dhgl::workflows::{
    algorithm1_known_hubs, algorithm2_screening, default_lambda_path, extract_hubs, fit_hgl,
    run_gl, DiscriminationGrid, HubExtractionConfig, Provenance, ScreeningConfig, WorkflowSettings,
};

fn settings(r: usize) -> WorkflowSettings {
    WorkflowSettings {
        extraction: HubExtractionConfig { t: 0.005, r },
        ..WorkflowSettings::default()
    }
}

fn problem(p: usize, hubs: usize, n: usize, seed: u64) -> (SymmetricMatrix, GroundTruth) {
    let truth = generate_truth(&NetworkSpec::new(p, hubs, seed)).unwrap();
    let sample = sample_gaussian(&truth, n, seed + 1000).unwrap();
    (empirical_covariance(&sample.x).unwrap(), truth)
}

fn hgl_grid() -> GridSpec {
    GridSpec::new(vec![0.4], vec![0.4], vec![1.0], None, None).unwrap()
}

#[test]
fn known_hub_result_keeps_every_plain_hub() {
    let mut discriminated_runs = 0;
    for seed in 0..6 {
        let (s, truth) = problem(40, 3, 25, seed);
        let known = choose_known_hubs(&truth, 2, seed).unwrap();
        let set = settings(8);
        let res = algorithm1_known_hubs(
            &s,
            25,
            &known,
            &hgl_grid(),
            &DiscriminationGrid::known_hubs(),
            &set,
        )
        .unwrap();
        assert!(res.hgl_hubs.is_subset(&res.hubs), "seed {seed}");
        assert!(res.discriminated.is_subset(&known));
        assert!(res.discriminated.is_disjoint(&res.hgl_hubs));
        if res.provenance == Provenance::Dhgl {
            discriminated_runs += 1;
            assert!(res.penalty.lambda4() <= res.penalty.lambda2());
            assert!(res.penalty.lambda5() <= res.penalty.lambda3());
        }
    }
    assert!(
        discriminated_runs > 0,
        "no seed exercised the discriminated branch"
    );
}

#[test]
fn known_hubs_already_found_leave_the_fit_unchanged() {
    let (s, _) = problem(30, 2, 30, 5);
    let set = settings(6);
    let fit = fit_hgl(&s, 30, &hgl_grid(), &set).unwrap();
    let known = fit.hubs.clone();
    let res = algorithm1_known_hubs(
        &s,
        30,
        &known,
        &hgl_grid(),
        &DiscriminationGrid::known_hubs(),
        &set,
    )
    .unwrap();
    assert_eq!(res.provenance, Provenance::HglOnly);
    assert_eq!(res.estimate, fit.result);
}

#[test]
fn screening_with_unit_lambda5_matches_plain_fit() {
    let mut screened = 0;
    for seed in 0..4 {
        let (s, _) = problem(30, 3, 20, seed);
        let mut set = settings(5);
        set.admm = AdmmConfig {
            tau: 1e-12,
            max_iterations: 20_000,
            ..AdmmConfig::default()
        };
        let hgl = GridSpec::new(vec![0.4], vec![0.3], vec![1.0], None, None).unwrap();
        let unit = DiscriminationGrid::fixed(1.0, 1.0);
        let res =
            algorithm2_screening(&s, 20, &hgl, &ScreeningConfig::default(), &unit, &set).unwrap();
        let fit = fit_hgl(&s, 20, &hgl, &set).unwrap();
        let gap = (res.estimate.theta_hat.as_matrix() - fit.result.theta_hat.as_matrix()).norm();
        assert!(gap <= 1e-8, "seed {seed}: gap {gap:e}");
        if res.provenance == Provenance::Dhgl {
            screened += 1;
            assert!(!res.discriminated.is_empty());
            assert!(res.screening_lambda.is_some());
        }
    }
    assert!(screened > 0, "screening never added hubs");
}

#[test]
fn gl_hub_count_grows_as_penalty_shrinks() {
    let (s, _) = problem(40, 3, 30, 2);
    let cfg = HubExtractionConfig { t: 0.005, r: 6 };
    let path = default_lambda_path(&s, 10);
    assert!(path.windows(2).all(|w| w[0] > w[1]));
    let admm = AdmmConfig {
        tau: 1e-12,
        max_iterations: 20_000,
        ..AdmmConfig::default()
    };
    let counts: Vec<usize> = path
        .iter()
        .map(|&l| extract_hubs(&run_gl(&s, l, &admm).unwrap().theta_hat, &cfg).len())
        .collect();
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    assert_eq!(counts[0], 0);
}

#[test]
fn grid_selection_is_reproducible() {
    let (s, _) = problem(20, 2, 30, 9);
    let grid = GridSpec::new(vec![0.2, 0.4], vec![0.1, 0.3], vec![0.5, 1.0], None, None).unwrap();
    let a = grid_select(&s, 30, &grid, &AdmmConfig::default(), &BicConfig::default()).unwrap();
    let b = grid_select(&s, 30, &grid, &AdmmConfig::default(), &BicConfig::default()).unwrap();
    assert_eq!(a.penalty, b.penalty);
    assert_eq!(a.result, b.result);
    assert_eq!(a.evaluated.len(), 8);
}
