use growthid::rng;
use growthid::simulation::{
    generate_study, gillespie_exact, noise_factor, read_manifest, run_study, simulate_readouts,
    synthesize_dataset, ReactionRates, ScenarioName, ScenarioSpec, Simulator,
};
use growthid::stats::{mean, variance};

fn within_three_se(samples: &[f64], expected: f64) -> bool {
    let se = (variance(samples) / samples.len() as f64).sqrt();
    (mean(samples) - expected).abs() <= 3.0 * se
}

#[test]
fn exact_mean_follows_mean_field() {
    let rates = ReactionRates::new(0.2, 0.11, 0.0, 0.0).unwrap();
    let x1: Vec<f64> = (0..2000)
        .map(|i| {
            *gillespie_exact(&rates, 500, 1, 10.0, i)
                .unwrap()
                .x1
                .last()
                .unwrap()
        })
        .collect();
    assert!(
        within_three_se(&x1, 500.0 * (0.09f64 * 10.0).exp()),
        "mean {}",
        mean(&x1)
    );
}

#[test]
fn tau_leap_mean_follows_mean_field_at_strong_rates() {
    let rates = ScenarioName::Strong.rates().unwrap();
    let sim = Simulator::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..500 {
        let mut r = rng::stream(42, &[i]);
        let s = simulate_readouts(&rates, [50_000, 50_000], &[14.0], sim, &mut r).unwrap()[0];
        a.push(s[0] as f64);
        b.push(s[1] as f64);
    }
    assert!(
        within_three_se(&a, 50_000.0 * (-0.01f64 * 14.0).exp()),
        "x1 mean {}",
        mean(&a)
    );
    assert!(
        within_three_se(&b, 50_000.0 * (0.09f64 * 14.0).exp()),
        "x2 mean {}",
        mean(&b)
    );
}

#[test]
fn noise_has_unit_mean_and_lognormal_moments() {
    let mut r = rng::stream(7, &[]);
    let draws: Vec<f64> = (0..100_000).map(|_| noise_factor(0.2, &mut r)).collect();
    assert!(within_three_se(&draws, 1.0));
    let logs: Vec<f64> = draws.iter().map(|v| v.ln()).collect();
    assert!(within_three_se(&logs, -0.02));
    assert!((variance(&logs).sqrt() - 0.2).abs() < 0.003);
}

#[test]
fn every_sample_size_passes_dataset_checks() {
    for mice in [2, 4, 8, 16] {
        let spec = ScenarioSpec::named(ScenarioName::Weak, mice).unwrap();
        let syn = synthesize_dataset(&spec, mice as u64).unwrap();
        assert_eq!(syn.dataset.len(), 4 * mice);
        syn.dataset.validate_pairing().unwrap();
        assert!(syn.dataset.values().all(|v| v > 0.0 && v <= 1.0));
    }
}

#[test]
fn archive_is_byte_identical_for_a_seed() {
    let mut spec = ScenarioSpec::named(ScenarioName::Medium, 2).unwrap();
    spec.n_datasets = 3;
    let specs = vec![spec];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let rows = run_study(&specs, 5, a.path()).unwrap();
    run_study(&specs, 5, b.path()).unwrap();
    assert_eq!(rows.len(), 3);
    for name in ["manifest.csv", &rows[0].file, &rows[2].file] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(read_manifest(a.path()).unwrap(), rows);
}

#[test]
fn single_dataset_study() {
    let mut spec = ScenarioSpec::named(ScenarioName::NoEffect, 2).unwrap();
    spec.n_datasets = 1;
    let out = generate_study(&[spec], 1).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].id, "no-effect_n8_r000");
}
