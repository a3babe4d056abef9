use std::sync::Arc;
use std::time::Instant;

use growthid::inference::{fit, FitConfig, ModelKind, Objective, ParamVector};
use growthid::profiles::{
    classify_identifiability, confidence_region, profile, profile_all, IdentifiabilityKind,
    ScanPolicy, Threshold,
};
use growthid::simulation::identifiability_dataset;

fn setup(
    model: ModelKind,
    truth: &[f64],
    fixed: &[&str],
    seed: u64,
) -> (Objective, growthid::inference::FitResult) {
    let truth = ParamVector::new(model, truth.to_vec()).unwrap();
    let data = identifiability_dataset(&truth, seed).unwrap();
    let mut template = truth.clone();
    for f in fixed {
        template = template.fix(f).unwrap();
    }
    let obj = Objective::new(Arc::new(data), template, 1e-3).unwrap();
    let fit = fit(&obj, &FitConfig::default(), seed).unwrap();
    (obj, fit)
}

fn verdicts(
    obj: &Objective,
    fit: &growthid::inference::FitResult,
) -> Vec<(String, IdentifiabilityKind)> {
    let t = Instant::now();
    let res = profile_all(fit, obj, &ScanPolicy::default(), Threshold::Chi1Sq, 0.05).unwrap();
    let out: Vec<_> = res
        .iter()
        .map(|r| {
            eprintln!(
                "{:>8}: {} region {} range {:.2e} points {} ends {:?}/{:?}",
                r.curve.parameter,
                r.verdict.kind,
                r.region,
                r.verdict.flatness,
                r.curve.grid.len(),
                r.curve.lower_end,
                r.curve.upper_end
            );
            (r.curve.parameter.clone(), r.verdict.kind)
        })
        .collect();
    eprintln!("profiles took {:?}", t.elapsed());
    out
}

#[test]
fn reparametrised_exponential_is_identifiable() {
    let (obj, fit) = setup(ModelKind::Exponential, &[0.1, 1.0, 0.2], &[], 1);
    for (name, kind) in verdicts(&obj, &fit) {
        assert_eq!(kind, IdentifiabilityKind::Identifiable, "{name}");
    }
}

#[test]
fn raw_exponential_is_flat_except_sigma() {
    let (obj, fit) = setup(
        ModelKind::ExponentialRaw,
        &[0.1, 0.2, 10.0, 10.0, 0.2],
        &[],
        1,
    );
    for (name, kind) in verdicts(&obj, &fit) {
        let expected = if name == "sigma" {
            IdentifiabilityKind::Identifiable
        } else {
            IdentifiabilityKind::StructuralNonIdentifiable
        };
        assert_eq!(kind, expected, "{name}");
    }
}

#[test]
fn profile_passes_through_the_optimum() {
    let (obj, fit) = setup(ModelKind::Exponential, &[0.1, 1.0, 0.2], &[], 2);
    let c = profile("theta1", &fit, &obj, &ScanPolicy::default()).unwrap();
    let k = c.grid.iter().position(|&q| q == c.mle_value).unwrap();
    assert!((c.profile_loglik[k] - c.mle_loglik).abs() < 1e-6);
    assert!(c.profile_loglik.iter().all(|&pl| pl <= c.mle_loglik + 1e-6));
    let chi = confidence_region(&c, Threshold::Chi1Sq, 0.05).unwrap();
    let cant = confidence_region(&c, Threshold::Cantelli, 0.05).unwrap();
    assert!(chi.is_subset_of(&cant));
    assert!(chi.contains(c.mle_value) && chi.pieces.len() == 1);
    let v = classify_identifiability(&c, &chi, 1e-3);
    assert_eq!(v.kind, IdentifiabilityKind::Identifiable);
}

fn is_non_identifiable(kind: IdentifiabilityKind) -> bool {
    kind != IdentifiabilityKind::Identifiable
}

#[test]
fn logistic_capacity_and_initial_sizes_are_non_identifiable() {
    let (obj, fit) = setup(
        ModelKind::logistic(),
        &[0.1, 0.2, 1000.0, 10.0, 10.0, 0.2],
        &[],
        3,
    );
    for (name, kind) in verdicts(&obj, &fit) {
        if ["K", "x1_0", "x2_0"].contains(&name.as_str()) {
            assert!(is_non_identifiable(kind), "{name}: {kind}");
        }
    }
}

#[test]
fn fixing_x1_makes_logistic_identifiable() {
    let (obj, fit) = setup(
        ModelKind::logistic(),
        &[0.1, 0.2, 1000.0, 10.0, 10.0, 0.2],
        &["x1_0"],
        4,
    );
    for (name, kind) in verdicts(&obj, &fit) {
        assert_eq!(kind, IdentifiabilityKind::Identifiable, "{name}");
    }
}

#[test]
fn equal_logistic_rates_are_non_identifiable() {
    let (obj, fit) = setup(
        ModelKind::logistic(),
        &[0.1, 0.1, 1000.0, 10.0, 10.0, 0.2],
        &["x1_0"],
        5,
    );
    for (name, kind) in verdicts(&obj, &fit) {
        if name.starts_with("lambda") {
            assert!(is_non_identifiable(kind), "{name}: {kind}");
        }
    }
}

mod props {
    use super::*;
    use growthid::profiles::{format_pieces, parse_pieces, ConfidenceRegion, Interval};
    use growthid::simulation::{synthesize_dataset, ScenarioName, ScenarioSpec};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn regions_nest_and_cover_the_optimum(seed in 0u64..10_000, mice in 2usize..9, strong in any::<bool>()) {
            let name = if strong { ScenarioName::Strong } else { ScenarioName::NoEffect };
            let spec = ScenarioSpec::named(name, mice).unwrap();
            let data = synthesize_dataset(&spec, seed).unwrap().dataset;
            let template = ParamVector::new(ModelKind::Exponential, vec![0.0, 1.0, 0.2]).unwrap();
            let obj = Objective::new(Arc::new(data), template, 1e-3).unwrap();
            let f = fit(&obj, &FitConfig::default(), seed).unwrap();
            let c = profile("theta1", &f, &obj, &ScanPolicy::default()).unwrap();
            let chi = confidence_region(&c, Threshold::Chi1Sq, 0.05).unwrap();
            let cant = confidence_region(&c, Threshold::Cantelli, 0.05).unwrap();
            prop_assert!(chi.is_subset_of(&cant), "{} vs {}", chi, cant);
            prop_assert!(chi.contains(c.mle_value), "{} misses {}", chi, c.mle_value);
        }

        #[test]
        fn region_text_round_trips(cuts in proptest::collection::vec(-50.0f64..50.0, 1..6), open_lo in any::<bool>(), open_hi in any::<bool>()) {
            let mut cuts = cuts;
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut edges = cuts.clone();
            edges.extend(cuts.iter().map(|c| c + 0.5));
            edges.sort_by(f64::total_cmp);
            let mut pieces: Vec<Interval> = edges.chunks(2).filter(|p| p.len() == 2 && p[0] < p[1]).map(|p| Interval::new(p[0], p[1])).collect();
            prop_assume!(!pieces.is_empty());
            if open_lo { pieces[0].lo = f64::NEG_INFINITY; }
            let last = pieces.len() - 1;
            if open_hi { pieces[last].hi = f64::INFINITY; }
            prop_assume!(ConfidenceRegion::new(pieces.clone(), Threshold::Chi1Sq, Some(3.84), 0.95, false).is_ok());
            let text = format_pieces(&pieces, false);
            prop_assert_eq!(parse_pieces(&text).unwrap(), pieces);
        }
    }
}
