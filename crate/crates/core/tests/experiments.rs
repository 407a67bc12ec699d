use std::io::Write;

use hetmatch_core::experiments::*;
use hetmatch_core::theory::{bound_chain, limit_bilateral_h};
use hetmatch_core::{Error, MarketParams};
use proptest::prelude::*;

fn config_error(text: &str) -> (usize, String) {
    match parse_config(text) {
        Err(Error::Config { line, msg }) => (line, msg),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_example_parses() {
    let text = "name = priorities\nlambda_h = 1,2,3,4\nlambda_e = 5\np_h = 0.002\np_e = 0.5\narrivals = 2000000\nseed = 7";
    let spec = parse_config(text).unwrap();
    assert_eq!(spec.name, ExperimentName::Priorities);
    assert_eq!(spec.grid.len(), 4);
    assert_eq!(spec.grid.lambda_h, vec![1.0, 2.0, 3.0, 4.0]);
    assert_eq!((spec.rc.arrivals, spec.rc.seed), (2_000_000, 7));
    assert_eq!(spec.grid.points()[3].lambda_h, 4.0);
}

#[test]
fn config_errors_carry_line_numbers() {
    let (line, msg) = config_error("lambda_h = 1\n");
    assert_eq!(line, 0);
    assert!(msg.contains("name"));
    let (line, msg) = config_error("name = priorities\np_h = 1.5\n");
    assert_eq!(line, 2);
    assert!(msg.contains("p_h") && msg.contains("range"), "{msg}");
    let (line, msg) = config_error("# comment\nname = priorities\n\nspeed = 3\n");
    assert_eq!(line, 4);
    assert!(msg.contains("unknown key `speed`"));
    let (line, msg) = config_error("name = nonsense\n");
    assert_eq!(line, 1);
    assert!(msg.contains("nonsense"));
    let (line, _) = config_error("name = chain-statics\nd = 1.5\n");
    assert_eq!(line, 2);
    let (line, _) = config_error("name = chain-statics\nseed = 1\nseed = 2\n");
    assert_eq!(line, 3);
    let (line, _) = config_error("name = chain-statics\nseed = 1, 2\n");
    assert_eq!(line, 2);
    let (line, _) = config_error("name = chain-statics\njust words\n");
    assert_eq!(line, 2);
    let (line, _) = config_error("name = chain-statics\np_h = 0.3\np_e = 0.2\n");
    assert_eq!(line, 2);
    assert_eq!(
        Error::Config {
            line: 1,
            msg: String::new()
        }
        .exit_code(),
        2
    );
}

#[test]
fn config_keeps_preset_defaults_and_accepts_comments() {
    let spec = parse_config(
        "name = merging # scenario\nlambda_h = 0, 1 # second market\narrivals = 1e5\n",
    )
    .unwrap();
    assert_eq!(spec.grid.lambda_h, vec![0.0, 1.0]);
    assert_eq!(spec.rc.arrivals, 100_000);
    assert_eq!((spec.base_lambda_h, spec.base_lambda_e), (1.0, 1.3));
    assert_eq!(spec.grid.p_h, vec![0.02]);
}

#[test]
fn config_loads_from_file() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        f,
        "name = solver-vs-sim\nreplicas = 2\nwarmup_fraction = 0.25\nout = results.csv"
    )
    .unwrap();
    let spec = load_config(f.path()).unwrap();
    assert_eq!(spec.rc.replicas, 2);
    assert_eq!(spec.rc.warmup_fraction, 0.25);
    assert_eq!(spec.out.unwrap().to_str(), Some("results.csv"));
    assert!(matches!(
        load_config(std::path::Path::new("/nonexistent/config")),
        Err(Error::Io(_))
    ));
}

#[test]
fn presets_carry_default_grids() {
    let s = ExperimentSpec::preset(ExperimentName::Priorities);
    assert_eq!(
        (
            s.grid.lambda_e.as_slice(),
            s.grid.p_h.as_slice(),
            s.grid.p_e.as_slice()
        ),
        (&[5.0][..], &[0.002][..], &[0.5][..])
    );
    assert_eq!(s.rc.arrivals, 2_000_000);
    assert_eq!(s.clone().quick().rc.arrivals, 100_000);
    let s = ExperimentSpec::preset(ExperimentName::Table1Search);
    assert_eq!(s.grid.p_e, vec![0.1, 0.3, 0.5, 0.9, 1.0]);
    assert_eq!(s.grid.d, vec![1, 10, 50]);
    assert_eq!(s.rc.arrivals, 1_000_000);
    for name in ExperimentName::ALL {
        assert_eq!(name.name().parse::<ExperimentName>().unwrap(), name);
        ExperimentSpec::preset(name).validate().unwrap();
    }
    assert!(matches!(
        "nope".parse::<ExperimentName>(),
        Err(Error::UnknownExperiment(_))
    ));
}

#[test]
fn sig6_formatting() {
    for (x, s) in [
        (388.123456, "388.123"),
        (0.000123456789, "0.000123457"),
        (1234567.0, "1.23457e6"),
        (1e-7, "1e-7"),
        (100.0, "100"),
        (-2.5, "-2.5"),
        (0.0, "0"),
        (9.9999996, "10"),
        (123456.4, "123456"),
    ] {
        assert_eq!(format_sig6(x), s);
    }
}

#[test]
fn empty_rows_give_header_only() {
    let mut buf = Vec::new();
    write_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), HEADER.join(",") + "\n");
    assert!(parse_csv(HEADER.join(",").as_bytes()).unwrap().is_empty());
    assert!(matches!(
        parse_csv("a,b\n".as_bytes()),
        Err(Error::Malformed { line: 1, .. })
    ));
}

fn arb_row() -> impl Strategy<Value = ResultRow> {
    let real = || prop_oneof![-1e9f64..1e9, 1e-9f64..1e-3, Just(0.0)];
    (
        (
            real(),
            real(),
            real(),
            real(),
            real(),
            real(),
            real(),
            real(),
        ),
        (
            proptest::option::of(real()),
            proptest::option::of(real()),
            proptest::option::of(real()),
        ),
        (
            any::<u32>(),
            any::<u64>(),
            any::<u64>(),
            0usize..3,
            "[a-z_]{1,8}",
        ),
    )
        .prop_map(
            |((a, b, c, dd, e, f, g, h), (cl, ci, tv), (d, arrivals, seed, engine, policy))| {
                ResultRow {
                    experiment: "priorities".into(),
                    policy,
                    lambda_h: a,
                    lambda_e: b,
                    p_h: c,
                    p_e: dd,
                    d,
                    arrivals,
                    seed,
                    mean_h: e,
                    mean_e: f,
                    w_h: g,
                    w_e: h,
                    chain_len: cl,
                    ci_half_width: ci,
                    theory_value: tv,
                    engine: [Engine::Counts, Engine::Graph, Engine::Ctmc][engine],
                }
            },
        )
}

proptest! {
    #[test]
    fn csv_round_trip(rows in proptest::collection::vec(arb_row(), 0..20)) {
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back = parse_csv(buf.as_slice()).unwrap();
        let expected: Vec<ResultRow> = rows.iter().map(ResultRow::rounded).collect();
        prop_assert_eq!(&back, &expected);
        let mut again = Vec::new();
        write_csv(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }
}

#[test]
fn non_finite_rows_are_rejected() {
    let mut rows = Vec::new();
    let spec = small(ExperimentName::Priorities);
    rows.extend(run_experiment(&spec).unwrap());
    rows[0].w_h = f64::NAN;
    assert!(write_csv(&rows, Vec::new()).is_err());
}

/// Preset cut down to its first grid point and a short run.
fn small(name: ExperimentName) -> ExperimentSpec {
    let mut s = ExperimentSpec::preset(name);
    s.grid.lambda_h.truncate(1);
    s.grid.lambda_e.truncate(1);
    s.grid.p_e.truncate(1);
    s.rc.arrivals = 20_000;
    s.rc.replicas = 2;
    s
}

#[test]
fn every_scenario_runs_and_orders_rows() {
    for name in ExperimentName::ALL {
        let mut spec = small(name);
        if name == ExperimentName::MaxVsLocal || name == ExperimentName::Table1Search {
            spec.grid.p_h = vec![0.05];
        }
        if name == ExperimentName::Table1Search {
            spec.grid.p_e = vec![1.0];
            spec.grid.d.truncate(1);
        }
        if name == ExperimentName::SolverVsSim {
            spec.grid.p_h = vec![0.1];
        }
        let rows = run_experiment(&spec).unwrap();
        assert!(!rows.is_empty(), "{name}");
        for r in &rows {
            r.check_finite().unwrap();
            assert_eq!(r.experiment, name.name());
        }
        // Replica rows of one job are adjacent.
        let per_job = if name == ExperimentName::SolverVsSim {
            1
        } else {
            2
        };
        assert!(rows.len().is_multiple_of(per_job));
    }
}

#[test]
fn theory_values_come_from_theory_module() {
    let spec = small(ExperimentName::ChainsVsBilateral);
    let rows = run_experiment(&spec).unwrap();
    let policies: Vec<_> = rows.iter().map(|r| (r.policy.as_str(), r.d)).collect();
    assert_eq!(
        policies,
        vec![
            ("B_H", 0),
            ("B_H", 0),
            ("C", 1),
            ("C", 1),
            ("C", 20),
            ("C", 20)
        ]
    );
    let p = MarketParams::new(1.0, 5.0, 0.02, 0.5, 1).unwrap();
    assert_eq!(
        rows[0].theory_value,
        Some(limit_bilateral_h(&p).unwrap().constant)
    );
    assert_eq!(
        rows[2].theory_value,
        Some(bound_chain(&p).unwrap().constant)
    );
    assert_eq!(
        rows[4].theory_value,
        Some(bound_chain(&p.with_d(20)).unwrap().constant)
    );

    let mut spec = small(ExperimentName::SolverVsSim);
    spec.grid.p_h = vec![0.1];
    spec.rc.replicas = 1;
    let rows = run_experiment(&spec).unwrap();
    let tilde: Vec<_> = rows.iter().filter(|r| r.policy == "B_E_tilde").collect();
    assert_eq!(tilde.len(), 2);
    assert!(tilde.iter().all(|r| r.theory_value.is_none()));
    let engines: Vec<_> = rows
        .iter()
        .filter(|r| r.policy == "C")
        .map(|r| r.engine)
        .collect();
    assert_eq!(engines, vec![Engine::Counts, Engine::Graph, Engine::Ctmc]);

    let mut spec = small(ExperimentName::Priorities);
    spec.grid.lambda_h = vec![5.0];
    let rows = run_experiment(&spec).unwrap();
    assert!(rows.iter().all(|r| r.theory_value.is_none()));
}

#[test]
fn equal_seeds_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small(ExperimentName::ChainStatics);
    spec.grid.d = vec![1, 3];
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let rows = run_experiment_to_csv(&spec, &a).unwrap();
    run_experiment_to_csv(&spec, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        read_csv(&a).unwrap(),
        rows.iter().map(ResultRow::rounded).collect::<Vec<_>>()
    );
    spec.rc.seed += 1;
    run_experiment_to_csv(&spec, &b).unwrap();
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn failures_flush_completed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.csv");
    let mut spec = small(ExperimentName::Table1Search);
    // The first cell succeeds; in the second the bracket cannot straddle a
    // sign change because the chain market has almost no E arrivals.
    spec.grid.p_h = vec![0.05];
    spec.grid.p_e = vec![1.0];
    spec.grid.lambda_e = vec![2.0, 1e-9];
    spec.grid.d = vec![1];
    let (rows, err) = run_partial(&spec);
    let err = err.expect("second cell fails");
    assert!(!rows.is_empty());
    assert!(run_experiment_to_csv(&spec, &path).is_err());
    assert_eq!(read_csv(&path).unwrap().len(), rows.len());
    assert_ne!(err.exit_code(), 0);
}

#[test]
fn table1_rows_dominate_threshold() {
    let mut spec = small(ExperimentName::Table1Search);
    spec.grid.p_e = vec![0.5, 1.0];
    spec.grid.d = vec![1, 10];
    spec.rc.arrivals = 100_000;
    spec.rc.replicas = 1;
    let rows = run_experiment(&spec).unwrap();
    let bilateral: Vec<_> = rows.iter().filter(|r| r.policy == "B_H").collect();
    assert_eq!(bilateral.len(), 4);
    for r in bilateral {
        let t = r.theory_value.unwrap();
        assert!(r.lambda_e >= t, "{} < {}", r.lambda_e, t);
    }
}
