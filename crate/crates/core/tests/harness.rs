use langevin_core::harness::figure::{comparison_params, initial_law, is_non_monotone, iterations_to_kl};
use langevin_core::harness::{figure_accel, run, FigureConfig, ResolvedRun, RunConfig};
use langevin_core::schedule::initial_lyapunov_bound;
use langevin_core::{QuadraticPotential, SamplerKind};

fn config(json: &str) -> RunConfig {
    RunConfig::from_json(json).unwrap()
}

#[test]
fn initial_row_against_lyapunov_bound() {
    let base = r#"{"potential":"quadratic","spectrum":[0.5,1.0,2.0],"sampler":"underdamped",
        "schedule":"manual","h":0.01,"k":0,"epsilon":0.1"#;
    let bound_of = |r: &ResolvedRun| initial_lyapunov_bound(r.schedule.c_n_tilde, r.schedule.c_m, r.schedule.d);

    let lemma = ResolvedRun::new(config(&format!("{base},\"momentum_init\":\"lemma\"}}"))).unwrap();
    let out = lemma.run().unwrap();
    assert_eq!(out.rows.len(), 1);
    assert!(out.rows[0].lyapunov <= bound_of(&lemma));

    let alg = ResolvedRun::new(config(&format!("{base}}}"))).unwrap();
    let out = alg.run().unwrap();
    assert!(out.rows[0].lyapunov > bound_of(&alg));
}

#[test]
fn derived_schedule_reaches_epsilon() {
    let cfg = config(
        r#"{"potential":"quadratic","spectrum":[1.0],"sampler":"underdamped","epsilon":0.5,
            "stop_at_epsilon":false}"#,
    );
    let r = ResolvedRun::new(cfg).unwrap();
    let out = r.run().unwrap();
    let last = out.last();
    assert_eq!(last.iter, r.schedule.k);
    assert!(last.kl_joint <= 0.5, "{}", last.kl_joint);
}

#[test]
fn sampled_runs_are_reproducible() {
    let json = r#"{"potential":"quadratic","d":3,"kappa":5.0,"sampler":"hmc","schedule":"manual",
        "h":0.1,"k":30,"epsilon":1e-3,"chains":200,"seed":5,"diagnostics":"sample_moments",
        "stop_at_epsilon":false}"#;
    let a = run(&config(json)).unwrap().to_csv_string();
    let b = run(&config(json)).unwrap().to_csv_string();
    assert_eq!(a, b);
    let c = run(&config(&json.replace("\"seed\":5", "\"seed\":6"))).unwrap().to_csv_string();
    assert_ne!(a, c);
}

#[test]
fn diagnostic_rows_are_ordered() {
    for sampler in ["underdamped", "em", "hmc"] {
        let json = format!(
            r#"{{"potential":"quadratic","d":4,"kappa":10.0,"sampler":"{sampler}","schedule":"manual",
                "h":0.05,"k":200,"epsilon":1e-6}}"#
        );
        let out = run(&config(&json)).unwrap();
        for row in &out.rows {
            assert!(row.kl_theta <= row.kl_joint + 1e-12, "{sampler} {row:?}");
            assert!(row.lyapunov >= row.kl_joint - 1e-12, "{sampler} {row:?}");
        }
    }
}

#[test]
fn isotropic_targets_need_similar_iterations() {
    // The shared start already has the target θ-marginal when κ = 1.
    let dir = tempfile::tempdir().unwrap();
    let out = figure_accel(&FigureConfig::new(4, 1.0, 1e-6, 0), dir.path()).unwrap();
    assert_eq!(out.curves[0].hit, out.curves[1].hit);

    // From a displaced mean the counts stay within a factor of five.
    let q = QuadraticPotential::log_spaced(4, 1.0).unwrap();
    let eps = 1e-6;
    let p = comparison_params(&q, &FigureConfig::new(4, 1.0, eps, 0), eps).unwrap();
    let hit = |kind: SamplerKind, params| {
        let mut init = initial_law(&q, kind.is_kinetic());
        for m in &mut init.modes {
            m.mean[0] = 1.0;
        }
        iterations_to_kl(kind, &q, params, &init, eps, u64::MAX).unwrap().unwrap() as f64
    };
    let (a, b) = (hit(SamplerKind::Overdamped, &p.overdamped), hit(SamplerKind::Underdamped, &p.underdamped));
    assert!(a / b < 5.0 && b / a < 5.0, "{a} vs {b}");
}

#[test]
fn figure_curves_have_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = figure_accel(&FigureConfig::new(8, 64.0, 1e-6, 0), dir.path()).unwrap();
    assert_eq!(out.files.len(), 3);
    assert!(!is_non_monotone(&out.curves[0].kl_theta, 1e-12));
    assert!(is_non_monotone(&out.curves[1].kl_theta, 1e-12));
    let text = std::fs::read_to_string(&out.files[1]).unwrap();
    assert!(text.lines().any(|l| l == "iter,kl_theta"));
}
