use cohen_cli::{run, EXIT_OK, EXIT_USAGE};

fn cohen(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("cohen").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn collect_prints_normal_form_and_terms() {
    let (code, out, _) = cohen(&["collect", "--expr", "[x2,x1]", "--mode", "z"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("[x1,x2]^-1"));
    let terms: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(terms[0]["exponent"], "-1");
}

#[test]
fn collect_of_a_trivial_power_is_e() {
    let (code, out, _) = cohen(&["collect", "--expr", "(x1 x2 x3 x4)^27", "--p", "3", "--r", "2"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("e\n[]"));
}

#[test]
fn bad_parameters_exit_with_2() {
    for args in [
        &["collect", "--expr", "x1", "--p", "4"][..],
        &["collect", "--expr", "x1 x"],
        &["verify", "--claim", "cor28", "--mode", "z"],
        &["verify", "--claim", "lemma26", "--p", "3", "--r", "1"],
        &["verify", "--claim", "q1", "--mode", "z", "--p", "3"],
        &["verify", "--claim", "nope"],
        &["verify", "--claim", "engel", "--n", "2", "--l", "5"],
        &["perm", "--n", "3", "--l", "4"],
    ] {
        let (code, _, err) = cohen(args);
        assert_eq!(code, EXIT_USAGE, "{:?}: {}", args, err);
        assert!(!err.is_empty());
    }
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = cohen(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("verify"));
}

#[test]
fn verify_json_to_stdout_is_a_manifest() {
    let (code, out, _) = cohen(&["verify", "--claim", "lemma26", "--json", "-"]);
    assert_eq!(code, EXIT_OK);
    let m: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(m["report-schema"], 1);
    assert_eq!(m["summary"]["member"], 4);
    assert_eq!(m["overall"], "pass");
}

#[test]
fn timings_are_opt_in() {
    let (_, plain, _) = cohen(&["verify", "--claim", "shuffle", "--n", "2", "--json", "-"]);
    assert!(!plain.contains("elapsed_ms"));
    let (_, timed, _) = cohen(&["verify", "--claim", "shuffle", "--n", "2", "--json", "-", "--timings"]);
    assert!(timed.contains("elapsed_ms"));
}

#[test]
fn perm_first_symbol_filter_reports_closed_form() {
    let (code, out, _) = cohen(&["perm", "--n", "4", "--l", "2", "--first", "1"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 7);
    assert!(out.ends_with("sum: 7 (S(n,l) (l-1)! = 7)\n"), "{}", out);
}

#[test]
fn basis_lists_every_commutator() {
    let (code, out, _) = cohen(&["basis", "--n", "3"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.ends_with("basis size: 8\n"));
}
