use proptest::prelude::*;

use crashsolver_core::crash::{
    parse_crash_info, project, read_case_pool, validate_case, write_case_pool, BugCategory, BuggyCode, CaseRecord,
    CrashBugCase, CrashDescription, CrashInfo, FrameLanguage, GroundTruth, InformationLevel, Language,
};

fn arb_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9.;(){}=][a-zA-Z0-9 .;(){}=]{0,39}"
}

fn arb_case() -> impl Strategy<Value = CrashBugCase> {
    (
        "[a-z]{1,8}-[0-9]{1,4}",
        any::<bool>(),
        prop::option::of(prop::collection::vec(arb_text(), 1..6)),
        prop::option::of(arb_text()),
        arb_text(),
    )
        .prop_filter_map("needs a part", |(id, env, code, ctx, fix)| {
            let code_text = code.map(|lines| lines.join("\n"));
            let info = Some(CrashInfo {
                exception_type: "java.lang.IllegalStateException".into(),
                error_message: "bad".into(),
                frames: vec![],
                raw: "java.lang.IllegalStateException: bad".into(),
            });
            let loc = code_text.as_ref().map(|_| vec![1]);
            Some(CrashBugCase {
                id,
                language: Language::Java,
                category: if env {
                    BugCategory::EnvironmentRelated
                } else {
                    BugCategory::CodeRelated
                },
                description: CrashDescription {
                    buggy_code: code_text.map(|text| BuggyCode {
                        text,
                        language: Language::Java,
                    }),
                    crash_info: info,
                    crash_context: ctx,
                    loc_lines: loc,
                },
                ground_truth: GroundTruth {
                    localization_answer: "the call".into(),
                    repair_answer: fix,
                    solution_summary: String::new(),
                },
                source_url: None,
            })
        })
}

proptest! {
    #[test]
    fn case_pool_round_trip(cases in prop::collection::vec(arb_case(), 1..5)) {
        let mut seen = std::collections::HashSet::new();
        let cases: Vec<_> = cases.into_iter().filter(|c| seen.insert(c.id.clone())).collect();
        let mut buf = Vec::new();
        write_case_pool(&mut buf, &cases).unwrap();
        let back = read_case_pool(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), cases.len());
        for (a, b) in back.iter().zip(&cases) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.category, b.category);
            prop_assert_eq!(&a.description.buggy_code, &b.description.buggy_code);
            prop_assert_eq!(&a.description.crash_context, &b.description.crash_context);
            prop_assert_eq!(&a.ground_truth, &b.ground_truth);
            prop_assert_eq!(
                a.description.crash_info.as_ref().map(|i| &i.raw),
                b.description.crash_info.as_ref().map(|i| &i.raw)
            );
        }
    }

    #[test]
    fn parsing_never_panics(raw in ".{0,400}", hint in 0usize..4) {
        let hint = [FrameLanguage::Java, FrameLanguage::Python, FrameLanguage::Cpp, FrameLanguage::Unknown][hint];
        match parse_crash_info(&raw, hint) {
            Ok(info) => prop_assert_eq!(info.raw, raw),
            Err(_) => prop_assert!(raw.trim().is_empty()),
        }
    }

    #[test]
    fn higher_levels_carry_more(case in arb_case()) {
        let mut previous: Option<CrashDescription> = None;
        for level in InformationLevel::ALL {
            let Ok(d) = project(&case.description, level) else { break };
            for part in level.parts() {
                prop_assert!(d.has(*part));
            }
            if let Some(p) = &previous {
                prop_assert!(!p.buggy_code.is_some() || d.buggy_code.is_some());
                prop_assert!(!p.crash_info.is_some() || d.crash_info.is_some());
                prop_assert!(!p.crash_context.is_some() || d.crash_context.is_some());
            }
            previous = Some(d);
        }
    }
}

#[test]
fn invalid_records_report_every_violation() {
    let rec = CaseRecord {
        id: String::new(),
        language: "cobol".into(),
        ..CaseRecord::default()
    };
    let err = validate_case(&rec).unwrap_err().to_string();
    for needle in ["id is empty", "cobol", "category", "ground_truth", "at least one"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn bundled_smack_case_is_valid() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/smack-case.jsonl");
    let cases = read_case_pool(std::io::BufReader::new(std::fs::File::open(path).unwrap())).unwrap();
    assert_eq!(cases.len(), 1);
    let info = cases[0].description.crash_info.as_ref().unwrap();
    assert_eq!(info.exception_type, "java.lang.NoClassDefFoundError");
    assert_eq!(info.frames.len(), 6);
    assert_eq!(cases[0].category, BugCategory::EnvironmentRelated);
}
