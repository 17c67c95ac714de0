use std::collections::BTreeMap;
use std::path::Path;

use crashsolver_core::catalog::{render, Catalog, TemplateId};
use crashsolver_core::crash::{BuggyCode, CrashDescription, CrashInfo, Language};

fn description() -> CrashDescription {
    CrashDescription {
        buggy_code: Some(BuggyCode {
            text: "int x = 1 / 0;".into(),
            language: Language::Java,
        }),
        crash_info: Some(CrashInfo {
            exception_type: "java.lang.ArithmeticException".into(),
            error_message: "/ by zero".into(),
            frames: vec![],
            raw: "java.lang.ArithmeticException: / by zero".into(),
        }),
        crash_context: Some("The program crashes on start.".into()),
        loc_lines: Some(vec![1]),
    }
}

fn extras() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("LIBRARY-1".to_string(), "Smack".to_string()),
        ("LIBRARY-2".to_string(), "Android SDK".to_string()),
    ])
}

#[test]
fn every_template_matches_its_golden_file() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    assert_eq!(TemplateId::ALL.len(), 12);
    for id in TemplateId::ALL {
        let expected = std::fs::read_to_string(golden.join(id.file_name())).unwrap();
        let rendered = render(id, &description(), &extras()).unwrap();
        assert_eq!(rendered.text, expected, "{id}");
        assert!(!rendered.text.contains('['), "{id} left a placeholder");
    }
}

#[test]
fn basic_prompt_2_character_for_character() {
    let d = CrashDescription {
        buggy_code: Some(BuggyCode {
            text: "int x=1/0;".into(),
            language: Language::Java,
        }),
        crash_info: Some(CrashInfo {
            exception_type: "java.lang.ArithmeticException".into(),
            error_message: "/ by zero".into(),
            frames: vec![],
            raw: "java.lang.ArithmeticException: / by zero".into(),
        }),
        ..CrashDescription::default()
    };
    let r = render(TemplateId::Basic2, &d, &BTreeMap::new()).unwrap();
    assert_eq!(
        r.text,
        "This is my code: int x=1/0; I'm getting java.lang.ArithmeticException: / by zero, how do I fix it?"
    );
}

#[test]
fn catalog_lists_every_template_once() {
    let catalog = Catalog::global();
    let ids: Vec<TemplateId> = catalog.templates().iter().map(|t| t.id).collect();
    assert_eq!(ids, TemplateId::ALL.to_vec());
    for t in catalog.templates() {
        assert!(!t.applicability.is_empty(), "{}", t.id);
    }
}
