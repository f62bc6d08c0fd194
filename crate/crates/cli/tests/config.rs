use kpzlab::winding::Boundary;
use kpzlab_cli::config::{parse_assignment, parse_config, parse_config_str, ExperimentConfig};
use kpzlab_cli::error::{CliError, EXIT_CONFIG};

fn overrides(pairs: &[&str]) -> toml::Table {
    let mut t: toml::Table = pairs.iter().map(|s| parse_assignment(s).unwrap()).collect();
    t.insert("command".into(), "gamma-closed".into());
    t
}

fn closed() -> ExperimentConfig {
    ExperimentConfig {
        command: "gamma-closed".into(),
        ..Default::default()
    }
}

#[test]
fn empty_text_gives_defaults() {
    assert_eq!(parse_config_str("", overrides(&[])).unwrap(), closed());
    assert_eq!(parse_config(None, overrides(&[])).unwrap(), closed());
    let err = parse_config_str("", toml::Table::new()).unwrap_err();
    assert!(matches!(
        err,
        CliError::Constraint {
            field: "command",
            ..
        }
    ));
}

#[test]
fn overrides_win_over_file() {
    let c = parse_config_str(
        "beta = 2.0\nn = 64\n",
        overrides(&["beta=0.5", "times=[1.0, 2.0]"]),
    )
    .unwrap();
    assert_eq!(c.beta, 0.5);
    assert_eq!(c.n, 64);
    assert_eq!(c.times, vec![1.0, 2.0]);
}

#[test]
fn unknown_key_is_rejected() {
    let err = parse_config_str("betta = 1.0", toml::Table::new()).unwrap_err();
    assert!(matches!(&err, CliError::UnknownKey(k) if k == "betta"));
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn type_mismatch_names_the_key() {
    let err = parse_config_str("n = 64\nbeta = \"strong\"\n", toml::Table::new()).unwrap_err();
    match &err {
        CliError::TypeMismatch { key, .. } => assert_eq!(key, "beta"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("beta"));
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn constraint_violations_name_the_field() {
    for (text, field) in [("beta = -1.0", "beta"), ("n = 0", "n"), ("L = 0.0", "L")] {
        let err = parse_config_str(text, overrides(&[])).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG, "{text}");
        assert!(err.to_string().contains(field), "{text}: {err}");
    }
}

#[test]
fn serialization_round_trips() {
    let c = ExperimentConfig {
        command: "winding-sigma".into(),
        beta: 0.75,
        times: vec![5.0, 10.0],
        boundary: vec![Boundary::Stationary, Boundary::LebesgueDelta],
        gamma: Some(-0.5),
        ..Default::default()
    };
    let text = c.to_toml();
    let back = parse_config_str(&text, toml::Table::new()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_toml(), text);
    assert_eq!(back.fingerprint(), c.fingerprint());
}

#[test]
fn fingerprint_tracks_parameters() {
    let a = ExperimentConfig::default();
    let b = ExperimentConfig {
        seed: 2,
        ..a.clone()
    };
    assert_ne!(a.fingerprint(), b.fingerprint());
    assert_eq!(a.fingerprint().len(), 8);
}

#[test]
fn assignments_fall_back_to_strings() {
    assert_eq!(
        parse_assignment("rho=stationary").unwrap().1,
        toml::Value::String("stationary".into())
    );
    assert_eq!(
        parse_assignment("n = 32").unwrap(),
        ("n".to_string(), toml::Value::Integer(32))
    );
    assert!(parse_assignment("novalue").is_err());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let err = parse_config(
        Some(std::path::Path::new("/nonexistent/run.toml")),
        toml::Table::new(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}
