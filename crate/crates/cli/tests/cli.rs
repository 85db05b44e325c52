use qhedge_cli::run;

fn run_to_file(args: &[&str]) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut argv = vec!["qhedge"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--out", out.to_str().unwrap()]);
    let code = run(argv);
    (code, std::fs::read_to_string(&out).unwrap_or_default())
}

#[test]
fn price_csv_has_schema_header() {
    let (code, text) = run_to_file(&["price", "--theta-scale", "1", "--alpha", "0.3"]);
    assert_eq!(code, 0);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# qhedge price schema v1"));
    assert_eq!(lines.next(), Some("n,alpha,v_alpha,stderr,q_n_alpha,method,alpha0,strong_price"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let v: f64 = row[2].parse().unwrap();
    assert!((v - 0.06370434605716796).abs() < 1e-15);
}

#[test]
fn dyadic_example_rows() {
    let (code, text) = run_to_file(&["dyadic-example", "--delta", "0.6", "--alpha", "0.5", "--n", "4"]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with(",0.5,0.3,0.3")));
}

#[test]
fn classify_is_json() {
    let (code, text) = run_to_file(&["classify", "--theta-scale", "1"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["regime"], "NoAsymptoticArbitrage");
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(run(["qhedge", "price", "--theta-scale", "1", "--alpha", "1.5"]), 2);
    assert_eq!(run(["qhedge", "price", "--theta-scale", "-1", "--alpha", "0.5"]), 2);
    assert_eq!(run(["qhedge", "no-such-command"]), 2);
    assert_eq!(run(["qhedge", "price", "--spec", "/nonexistent/spec.json", "--alpha", "0.5"]), 2);
    // A call needs Monte Carlo, which needs a seed.
    assert_eq!(
        run(["qhedge", "price", "--theta-scale", "1", "--claim", "call:1:1", "--alpha", "0.5"]),
        2
    );
}

#[test]
fn help_exits_0() {
    assert_eq!(run(["qhedge", "--help"]), 0);
}
