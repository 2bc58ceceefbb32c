use tsec_demo::{fit_counts, regret_curves, truth_histogram, StudyParams, MAX_FIT_FACTORS};

fn small() -> StudyParams {
    StudyParams {
        num_factors: 4,
        active_set_size: 8,
        runs_per_period: 20,
        periods_per_switch: 3,
        switches: 2,
        effect_scale: 0.1,
        seed: 3,
    }
}

#[test]
fn regret_curves_cover_every_method_and_period() {
    let out = regret_curves(small()).unwrap();
    assert_eq!(out.num_arms, 16);
    let names: Vec<_> = out.curves.iter().map(|c| c.method.as_str()).collect();
    assert_eq!(names, ["TSEC", "B1", "B2", "B3"]);
    for c in &out.curves {
        assert_eq!(c.cumulative.len(), 6);
        assert!(c.cumulative.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
    let again = regret_curves(small()).unwrap();
    assert_eq!(out.curves[0].cumulative, again.curves[0].cumulative);
}

#[test]
fn regret_curves_reject_bad_budget() {
    let p = StudyParams {
        active_set_size: 40,
        ..small()
    };
    assert!(regret_curves(p).is_err());
}

#[test]
fn fit_orders_arms_by_evidence() {
    // Arm (1,1) does well, arm (1,2) badly, the rest untried.
    let mut s = vec![0; 4];
    let mut f = vec![0; 4];
    s[0] = 40;
    f[0] = 10;
    s[1] = 10;
    f[1] = 40;
    let fits = fit_counts(2, &s, &f, 1).unwrap();
    assert_eq!(fits.len(), 4);
    assert_eq!(fits[0].levels, vec![1, 1]);
    assert_eq!(fits[1].levels, vec![1, 2]);
    assert!(fits[0].mean > 0.65 && fits[1].mean < 0.35);
    for a in &fits {
        assert!(a.lower <= a.mean && a.mean <= a.upper);
    }
    // Untried arms stay more uncertain than the observed ones.
    let width = |a: &tsec_demo::ArmFit| a.upper - a.lower;
    assert!(width(&fits[3]) > width(&fits[0]));
}

#[test]
fn fit_validates_shapes() {
    assert!(fit_counts(2, &[1, 2, 3], &[1, 2, 3, 4], 0).is_err());
    assert!(fit_counts(MAX_FIT_FACTORS + 1, &[], &[], 0).is_err());
}

#[test]
fn histogram_counts_every_arm() {
    let h = truth_histogram(6, 1.0, 10, 5).unwrap();
    assert_eq!(h.counts.iter().sum::<usize>(), 64);
    assert_eq!(h.num_arms, 64);
    assert!(h.mu_star > 0.0 && h.mu_star <= 1.0);
    assert!(truth_histogram(6, 1.0, 0, 5).is_err());
    assert!(truth_histogram(6, -1.0, 10, 5).is_err());
}

#[test]
fn json_shape_is_stable() {
    let h = truth_histogram(3, 0.5, 4, 1).unwrap();
    let v: serde_json::Value = serde_json::to_value(&h).unwrap();
    assert!(v["counts"].is_array() && v["mu_star"].is_number() && v["num_arms"] == 8);
}
