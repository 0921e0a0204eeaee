use super::*;
use apk_synth::apps;
use apk_synth::dexw::{ClassSpec, DexBuilder, Ins, MethodSpec, TrySpec};

fn broken_service_dex() -> Vec<u8> {
    apps::broken_app("com.example.music").dexes[0].build()
}

fn fixed_app_dex() -> Vec<u8> {
    apps::fixed_app("com.example.music").dexes[0].build()
}

fn find_class<'a>(classes: &'a [DexClass], name: &str) -> &'a DexClass {
    classes.iter().find(|c| c.name == name).unwrap()
}

#[test]
fn broken_service_lacks_ui_callbacks() {
    let classes = parse_dex(&broken_service_dex()).unwrap();
    let service = find_class(&classes, "com.example.music.MusicService");
    assert_eq!(
        service.superclass.as_deref(),
        Some("androidx.media.MediaBrowserServiceCompat")
    );
    let names: Vec<&str> = service.methods.iter().map(|m| m.name.as_str()).collect();
    assert!(names.contains(&"onCreate"));
    assert!(!names.contains(&"onGetRoot"));
    assert!(!names.contains(&"onLoadChildren"));
}

#[test]
fn fixed_service_has_ui_callbacks_with_code() {
    let classes = parse_dex(&fixed_app_dex()).unwrap();
    let service = find_class(&classes, "com.example.music.MusicService");
    for name in ["onGetRoot", "onLoadChildren"] {
        let m = service.methods.iter().find(|m| m.name == name).unwrap();
        assert!(m.code.is_some(), "{name} must carry code");
    }
    // Method census against the builder specification.
    let spec_app = apps::fixed_app("com.example.music");
    let _ = spec_app;
    assert_eq!(service.methods.len(), 5); // <init>, onCreate, onGetRoot, isValidAutoClient, onLoadChildren
    let callback = find_class(&classes, "com.example.music.MusicCallback");
    assert_eq!(callback.methods.len(), 8); // <init> + six media callbacks + search
}

#[test]
fn empty_dex_has_no_classes() {
    let bytes = DexBuilder::new().build();
    assert!(parse_dex(&bytes).unwrap().is_empty());
}

#[test]
fn bad_magic_is_rejected() {
    assert!(matches!(parse_dex(b"nope"), Err(DexError::BadMagic)));
    let mut bytes = DexBuilder::new().build();
    bytes[0] = b'x';
    assert!(matches!(parse_dex(&bytes), Err(DexError::BadMagic)));
    // Pre-035 versions are rejected too.
    let mut old = DexBuilder::new().build();
    old[4..7].copy_from_slice(b"034");
    assert!(matches!(parse_dex(&old), Err(DexError::BadMagic)));
}

#[test]
fn truncated_file_is_reported() {
    let bytes = broken_service_dex();
    let err = parse_dex(&bytes[..0x90]).unwrap_err();
    assert!(matches!(err, DexError::TruncatedSection(_)));
}

#[test]
fn corrupt_type_index_is_reported() {
    let mut bytes = broken_service_dex();
    // type_ids live at the offset named in the header; point the first
    // entry at a string index far out of range.
    let type_ids_off = u32::from_le_bytes(bytes[0x44..0x48].try_into().unwrap()) as usize;
    bytes[type_ids_off..type_ids_off + 4].copy_from_slice(&0x00ff_ffffu32.to_le_bytes());
    // Checksum is not verified, so the parse proceeds to the bad index.
    let err = parse_dex(&bytes).unwrap_err();
    assert!(matches!(err, DexError::BadIndex(_)));
}

#[test]
fn instruction_lengths_sum_to_declared_size() {
    for dex in [broken_service_dex(), fixed_app_dex()] {
        for class in parse_dex(&dex).unwrap() {
            for method in &class.methods {
                if let Some(code) = &method.code {
                    let sum: u32 = code.insn_units.iter().sum();
                    assert_eq!(
                        sum, code.insns_size,
                        "{}.{} lengths disagree",
                        class.name, method.name
                    );
                }
            }
        }
    }
}

#[test]
fn invoke_targets_resolve_to_method_refs() {
    for class in parse_dex(&fixed_app_dex()).unwrap() {
        for method in &class.methods {
            for insn in method.code.iter().flat_map(|c| &c.instructions) {
                if let InsnKind::Invoke { target, .. } = &insn.kind {
                    assert!(!target.owner.is_empty());
                    assert!(!target.name.is_empty());
                    assert!(target.descriptor.starts_with('('));
                }
            }
        }
    }
}

#[test]
fn const_zero_decodes_as_null_load() {
    let class = ClassSpec::new("t.Probe", "java.lang.Object").method(MethodSpec::virtual_method(
        "probe",
        &[],
        "V",
        vec![
            Ins::Const4 { reg: 0, val: 0 },
            Ins::Const4 { reg: 1, val: 3 },
            Ins::ReturnVoid,
        ],
    ));
    let classes = parse_dex(&DexBuilder::new().class(class).build()).unwrap();
    let code = classes[0].methods[0].code.as_ref().unwrap();
    assert_eq!(code.instructions[0].kind, InsnKind::ConstNull { reg: 0 });
    assert_eq!(
        code.instructions[1].kind,
        InsnKind::Other { units: 1, writes: Some(1) }
    );
}

#[test]
fn switch_targets_decode_and_validate() {
    let class = ClassSpec::new("t.Sw", "java.lang.Object").method(MethodSpec::virtual_method(
        "pick",
        &[],
        "V",
        vec![
            Ins::PackedSwitch {
                reg: 0,
                first_key: 0,
                targets: vec!["a".into(), "b".into()],
            },
            Ins::Label("a".into()),
            Ins::ReturnVoid,
            Ins::Label("b".into()),
            Ins::ReturnVoid,
        ],
    ));
    let classes = parse_dex(&DexBuilder::new().class(class).build()).unwrap();
    let code = classes[0].methods[0].code.as_ref().unwrap();
    match &code.instructions[0].kind {
        InsnKind::Branch { targets } => assert_eq!(targets, &vec![3, 4, 3]),
        other => panic!("expected switch branch, got {other:?}"),
    }
}

#[test]
fn try_blocks_are_decoded() {
    let class = ClassSpec::new("t.Try", "java.lang.Object").method(MethodSpec {
        tries: vec![TrySpec {
            start: "s".into(),
            end: "e".into(),
            handler: "h".into(),
            catch_type: Some("java.lang.Exception".into()),
        }],
        ..MethodSpec::virtual_method(
            "risky",
            &[],
            "V",
            vec![
                Ins::Label("s".into()),
                Ins::Nop,
                Ins::Label("e".into()),
                Ins::ReturnVoid,
                Ins::Label("h".into()),
                Ins::ReturnVoid,
            ],
        )
    });
    let classes = parse_dex(&DexBuilder::new().class(class).build()).unwrap();
    let code = classes[0].methods[0].code.as_ref().unwrap();
    assert_eq!(code.try_handlers.len(), 1);
    assert_eq!(code.try_handlers[0].start, 0);
    assert_eq!(code.try_handlers[0].count, 1);
}

#[test]
fn merge_keeps_first_definition() {
    let a1 = DexClass {
        name: "a.A".into(),
        superclass: Some("java.lang.Object".into()),
        interfaces: vec![],
        methods: vec![],
    };
    let mut a2 = a1.clone();
    a2.interfaces.push("a.I".into());
    let b = DexClass {
        name: "b.B".into(),
        superclass: Some("java.lang.Object".into()),
        interfaces: vec![],
        methods: vec![],
    };

    let plain = merge_multidex(vec![vec![a1.clone()], vec![b.clone()]]);
    assert_eq!(plain.classes.len(), 2);
    assert!(plain.duplicates.is_empty());

    let dup = merge_multidex(vec![vec![a1.clone()], vec![a2]]);
    assert_eq!(dup.classes.len(), 1);
    assert!(dup.classes[0].interfaces.is_empty(), "first definition wins");
    assert_eq!(dup.duplicates, vec!["a.A".to_string()]);
}

#[test]
fn multidex_class_counts_match_per_file_parses() {
    let app = apps::multidex_app("com.example.multidex");
    let per_dex: Vec<Vec<DexClass>> = app
        .dexes
        .iter()
        .map(|d| parse_dex(&d.build()).unwrap())
        .collect();
    assert_eq!(per_dex[0].len(), 3);
    assert_eq!(per_dex[1].len(), 2);
    let merged = merge_multidex(per_dex);
    assert_eq!(merged.classes.len(), 5);
    assert!(merged.duplicates.is_empty());
}

#[test]
fn subclass_walk_is_transitive() {
    let mk = |name: &str, superclass: &str| DexClass {
        name: name.into(),
        superclass: Some(superclass.into()),
        interfaces: vec![],
        methods: vec![],
    };
    let classes = vec![
        mk("app.A", "app.B"),
        mk("app.B", "androidx.media.MediaBrowserServiceCompat"),
        mk("app.C", "java.lang.Object"),
    ];
    let suffixes: BTreeSet<String> = ["MediaBrowserServiceCompat".to_string()].into();
    let hits = subclasses_of(&classes, &suffixes).unwrap();
    let names: Vec<&str> = hits.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, vec!["app.A", "app.B"]);

    // Adding suffixes never removes results.
    let mut wider = suffixes.clone();
    wider.insert("Object".to_string());
    let more = subclasses_of(&classes, &wider).unwrap();
    assert!(hits.iter().all(|h| more.iter().any(|m| m.name == h.name)));
    assert_eq!(more.len(), 3);
}

#[test]
fn cyclic_hierarchy_is_detected() {
    let mk = |name: &str, superclass: &str| DexClass {
        name: name.into(),
        superclass: Some(superclass.into()),
        interfaces: vec![],
        methods: vec![],
    };
    let classes = vec![mk("app.A", "app.B"), mk("app.B", "app.A")];
    let suffixes: BTreeSet<String> = ["Nothing".to_string()].into();
    assert!(matches!(
        subclasses_of(&classes, &suffixes),
        Err(DexError::CyclicHierarchy(_))
    ));
}

#[test]
fn suffix_matching_respects_boundaries() {
    assert!(suffix_matches("androidx.media.MediaBrowserServiceCompat", "MediaBrowserServiceCompat"));
    assert!(suffix_matches("a.b.Outer$Callback", "Callback"));
    assert!(!suffix_matches("a.b.NotACallback", "Callback"));
    assert!(suffix_matches("Callback", "Callback"));
}

#[test]
fn mutf8_surrogate_pairs_decode() {
    // U+10400 as a CESU-8 surrogate pair, with an embedded C0 80 NUL.
    let bytes = [0xed, 0xa0, 0x81, 0xed, 0xb0, 0x80, 0xc0, 0x80, b'x'];
    let s = decode_mutf8(&bytes).unwrap();
    let mut chars = s.chars();
    assert_eq!(chars.next(), Some('\u{10400}'));
    assert_eq!(chars.next(), Some('\0'));
    assert_eq!(chars.next(), Some('x'));
}
