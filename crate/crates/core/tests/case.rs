use std::io::Write;

use mtdc_opf::case::{load_case, validate_case, NetworkCase};
use mtdc_opf::error::CaseError;

const CASES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/cases");

#[test]
fn bundled_files_match_the_embedded_cases() {
    assert_eq!(load_case(format!("{CASES}/fig4.case")).unwrap(), NetworkCase::fig4());
    assert_eq!(load_case(format!("{CASES}/fig4_tight.case")).unwrap(), NetworkCase::fig4_tight());
}

#[test]
fn bundled_topology() {
    let case = NetworkCase::fig4();
    assert_eq!(case.res_units.len(), 2);
    assert_eq!(case.dc_nodes.len(), 4);
    let lines: Vec<(u32, u32)> = case.dc_lines.iter().map(|l| (l.from, l.to)).collect();
    assert_eq!(lines, [(1, 2), (2, 3), (3, 4), (4, 1), (1, 3), (2, 4)]);
    assert!(validate_case(&case).is_valid());
}

#[test]
fn file_round_trip() {
    let case = NetworkCase::fig4_tight();
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(case.to_toml_string().as_bytes()).unwrap();
    assert_eq!(load_case(f.path()).unwrap(), case);
}

#[test]
fn file_errors() {
    assert!(matches!(load_case("/nonexistent/fig4.case"), Err(CaseError::Io { .. })));
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(b"format_version = 99\n").unwrap();
    assert!(matches!(load_case(f.path()), Err(CaseError::Version(99))));
}
