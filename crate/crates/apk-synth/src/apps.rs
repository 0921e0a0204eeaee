//! Fixture app definitions: synthetic APKs covering the motivating broken
//! and fixed media services, multidex layouts, and a seeded corpus of
//! twelve apps with a known defect census.

use crate::axmlw::{XmlDoc, XmlElem, XmlVal};
use crate::dexw::{ClassSpec, DexBuilder, Ins, InvokeFlavor, MethodKind, MethodRefSpec, MethodSpec};
use crate::zipw::{ZipEntrySpec, ZipWriter};

pub const MEDIA_BROWSER_SERVICE_COMPAT: &str = "androidx.media.MediaBrowserServiceCompat";
pub const SESSION_CALLBACK: &str = "android.support.v4.media.session.MediaSessionCompat$Callback";
pub const MEDIA_SESSION: &str = "android.support.v4.media.session.MediaSessionCompat";
pub const BROWSER_ROOT: &str = "androidx.media.MediaBrowserServiceCompat$BrowserRoot";
pub const RESULT_CLASS: &str = "androidx.media.MediaBrowserServiceCompat$Result";
pub const AUTO_METADATA_NAME: &str = "com.google.android.gms.car.application";
pub const BROWSE_ACTION: &str = "android.media.browse.MediaBrowserService";
pub const SEARCH_ACTION: &str = "android.media.action.MEDIA_PLAY_FROM_SEARCH";

pub const MEDIA_CALLBACKS: [&str; 6] = [
    "onPlay",
    "onPause",
    "onStop",
    "onSkipToNext",
    "onSkipToPrevious",
    "onPlayFromMediaId",
];

fn obj(dotted: &str) -> String {
    crate::dexw::obj(dotted)
}

/// Manifest with the automotive meta-data entry and one media browser
/// service, optionally also declaring the play-from-search action.
pub fn auto_manifest(package: &str, with_metadata: bool, with_browse: bool, with_search: bool) -> XmlDoc {
    let mut app = XmlElem::new("application");
    if with_metadata {
        app = app.child(
            XmlElem::new("meta-data")
                .attr("name", XmlVal::Str(AUTO_METADATA_NAME.to_string()))
                .attr("resource", XmlVal::Ref(0x7f01_0000)),
        );
    }
    let mut filter = XmlElem::new("intent-filter");
    if with_browse {
        filter = filter.child(
            XmlElem::new("action").attr("name", XmlVal::Str(BROWSE_ACTION.to_string())),
        );
    }
    if with_search {
        filter = filter.child(
            XmlElem::new("action").attr("name", XmlVal::Str(SEARCH_ACTION.to_string())),
        );
    }
    let service = XmlElem::new("service")
        .attr("name", XmlVal::Str(".MusicService".to_string()))
        .attr("exported", XmlVal::Bool(true))
        .child(filter);
    app = app.child(service);
    XmlDoc::new(
        XmlElem::new("manifest")
            .plain_attr("package", XmlVal::Str(package.to_string()))
            .child(app),
    )
}

/// Manifest with a package declaration and no services at all.
pub fn phone_manifest(package: &str) -> XmlDoc {
    XmlDoc::new(
        XmlElem::new("manifest")
            .plain_attr("package", XmlVal::Str(package.to_string()))
            .child(XmlElem::new("application")),
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum GetRoot {
    Missing,
    /// Client-validation branch; both arms return a constructed root.
    Valid,
    /// The rejection arm returns a null constant.
    NullableBranch,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum LoadChildren {
    Missing,
    Valid,
    /// Two-arm branch where one arm skips sendResult.
    BranchMissingSendResult,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum SearchHandler {
    Missing,
    Valid,
    EmptyBody,
}

pub struct ServiceShape {
    pub get_root: GetRoot,
    pub load_children: LoadChildren,
    /// Instantiate and register the session callback class in onCreate.
    pub register_callback: bool,
}

pub struct CallbackShape {
    /// Which of the six media callbacks exist.
    pub media: Vec<&'static str>,
    /// Implemented media callbacks whose bodies contain no calls.
    pub empty_bodies: Vec<&'static str>,
    pub search: SearchHandler,
}

impl CallbackShape {
    pub fn full() -> Self {
        CallbackShape {
            media: MEDIA_CALLBACKS.to_vec(),
            empty_bodies: Vec::new(),
            search: SearchHandler::Valid,
        }
    }
}

fn object_ctor() -> MethodSpec {
    MethodSpec {
        name: "<init>".into(),
        params: vec![],
        ret: "V".into(),
        kind: MethodKind::Direct,
        locals: 0,
        code: Some(vec![
            Ins::InvokeRange {
                flavor: InvokeFlavor::Direct,
                first: 0,
                count: 1,
                target: MethodRefSpec::new("java.lang.Object", "<init>", &[], "V"),
            },
            Ins::ReturnVoid,
        ]),
        tries: Vec::new(),
    }
}

fn on_create(pkg: &str, register_callback: bool) -> MethodSpec {
    let mut code = vec![Ins::Invoke {
        flavor: InvokeFlavor::Super,
        regs: vec![4],
        target: MethodRefSpec::new(MEDIA_BROWSER_SERVICE_COMPAT, "onCreate", &[], "V"),
    }];
    code.push(Ins::NewInstance {
        reg: 0,
        class: MEDIA_SESSION.into(),
    });
    code.push(Ins::Invoke {
        flavor: InvokeFlavor::Direct,
        regs: vec![0],
        target: MethodRefSpec::new(MEDIA_SESSION, "<init>", &[], "V"),
    });
    if register_callback {
        let cb = format!("{pkg}.MusicCallback");
        code.push(Ins::NewInstance {
            reg: 1,
            class: cb.clone(),
        });
        code.push(Ins::Invoke {
            flavor: InvokeFlavor::Direct,
            regs: vec![1],
            target: MethodRefSpec::new(&cb, "<init>", &[], "V"),
        });
        code.push(Ins::Invoke {
            flavor: InvokeFlavor::Virtual,
            regs: vec![0, 1],
            target: MethodRefSpec::new(MEDIA_SESSION, "setCallback", &[&obj(SESSION_CALLBACK)], "V"),
        });
    }
    code.push(Ins::ReturnVoid);
    MethodSpec::virtual_method("onCreate", &[], "V", code)
}

fn on_get_root(pkg: &str, shape: GetRoot) -> Option<MethodSpec> {
    if shape == GetRoot::Missing {
        return None;
    }
    let service = format!("{pkg}.MusicService");
    let browser_root = obj(BROWSER_ROOT);
    let params = ["Ljava/lang/String;", "I", "Landroid/os/Bundle;"];
    // locals=3, this=v3, clientPackageName=v4.
    let mut code = vec![
        Ins::Invoke {
            flavor: InvokeFlavor::Virtual,
            regs: vec![3, 4],
            target: MethodRefSpec::new(&service, "isValidAutoClient", &["Ljava/lang/String;"], "Z"),
        },
        Ins::MoveResult { reg: 0 },
        Ins::IfEqz {
            reg: 0,
            target: "reject".into(),
        },
        Ins::NewInstance {
            reg: 1,
            class: BROWSER_ROOT.into(),
        },
        Ins::ConstString {
            reg: 0,
            val: "media_root_id".into(),
        },
        Ins::Const4 { reg: 2, val: 0 },
        Ins::Invoke {
            flavor: InvokeFlavor::Direct,
            regs: vec![1, 0, 2],
            target: MethodRefSpec::new(
                BROWSER_ROOT,
                "<init>",
                &["Ljava/lang/String;", "Landroid/os/Bundle;"],
                "V",
            ),
        },
        Ins::ReturnObject { reg: 1 },
        Ins::Label("reject".into()),
    ];
    match shape {
        GetRoot::Valid => {
            code.extend([
                Ins::NewInstance {
                    reg: 1,
                    class: BROWSER_ROOT.into(),
                },
                Ins::ConstString {
                    reg: 0,
                    val: "empty_root_id".into(),
                },
                Ins::Const4 { reg: 2, val: 0 },
                Ins::Invoke {
                    flavor: InvokeFlavor::Direct,
                    regs: vec![1, 0, 2],
                    target: MethodRefSpec::new(
                        BROWSER_ROOT,
                        "<init>",
                        &["Ljava/lang/String;", "Landroid/os/Bundle;"],
                        "V",
                    ),
                },
                Ins::ReturnObject { reg: 1 },
            ]);
        }
        GetRoot::NullableBranch => {
            code.extend([Ins::Const4 { reg: 1, val: 0 }, Ins::ReturnObject { reg: 1 }]);
        }
        GetRoot::Missing => unreachable!(),
    }
    Some(MethodSpec {
        locals: 3,
        ..MethodSpec::virtual_method("onGetRoot", &params, &browser_root, code)
    })
}

fn on_load_children(shape: LoadChildren) -> Option<MethodSpec> {
    if shape == LoadChildren::Missing {
        return None;
    }
    let params = ["Ljava/lang/String;", &obj(RESULT_CLASS)];
    let send_result = MethodRefSpec::new(RESULT_CLASS, "sendResult", &["Ljava/lang/Object;"], "V");
    // locals=2, this=v2, parentId=v3, result=v4.
    let code = match shape {
        LoadChildren::Valid => vec![
            Ins::Const4 { reg: 0, val: 0 },
            Ins::Invoke {
                flavor: InvokeFlavor::Virtual,
                regs: vec![4, 0],
                target: send_result,
            },
            Ins::ReturnVoid,
        ],
        LoadChildren::BranchMissingSendResult => vec![
            Ins::ConstString {
                reg: 0,
                val: "media_root_id".into(),
            },
            Ins::Invoke {
                flavor: InvokeFlavor::Virtual,
                regs: vec![3, 0],
                target: MethodRefSpec::new("java.lang.String", "equals", &["Ljava/lang/Object;"], "Z"),
            },
            Ins::MoveResult { reg: 1 },
            Ins::IfEqz {
                reg: 1,
                target: "skip".into(),
            },
            Ins::Const4 { reg: 0, val: 0 },
            Ins::Invoke {
                flavor: InvokeFlavor::Virtual,
                regs: vec![4, 0],
                target: send_result,
            },
            Ins::ReturnVoid,
            Ins::Label("skip".into()),
            Ins::ReturnVoid,
        ],
        LoadChildren::Missing => unreachable!(),
    };
    Some(MethodSpec {
        locals: 2,
        ..MethodSpec::virtual_method("onLoadChildren", &params, "V", code)
    })
}

fn is_valid_auto_client() -> MethodSpec {
    MethodSpec {
        locals: 1,
        ..MethodSpec::virtual_method(
            "isValidAutoClient",
            &["Ljava/lang/String;"],
            "Z",
            vec![Ins::Const4 { reg: 0, val: 1 }, Ins::Return { reg: 0 }],
        )
    }
}

/// The media browser service class.
pub fn service_class(pkg: &str, shape: &ServiceShape) -> ClassSpec {
    let mut class = ClassSpec::new(&format!("{pkg}.MusicService"), MEDIA_BROWSER_SERVICE_COMPAT)
        .method(object_ctor())
        .method(on_create(pkg, shape.register_callback));
    if let Some(m) = on_get_root(pkg, shape.get_root) {
        class = class.method(m).method(is_valid_auto_client());
    }
    if let Some(m) = on_load_children(shape.load_children) {
        class = class.method(m);
    }
    class
}

/// The session callback class delegating to the app's player.
pub fn callback_class(pkg: &str, shape: &CallbackShape) -> ClassSpec {
    let player = format!("{pkg}.Player");
    let mut class = ClassSpec::new(&format!("{pkg}.MusicCallback"), SESSION_CALLBACK)
        .method(object_ctor());
    for cb in &shape.media {
        let code = if shape.empty_bodies.contains(cb) {
            vec![Ins::ReturnVoid]
        } else {
            let delegate = match *cb {
                "onPlay" => "play",
                "onPause" => "pause",
                "onStop" => "stop",
                "onSkipToNext" => "skipToNext",
                "onSkipToPrevious" => "skipToPrevious",
                "onPlayFromMediaId" => "playFromId",
                other => panic!("unknown media callback {other}"),
            };
            vec![
                Ins::Invoke {
                    flavor: InvokeFlavor::Static,
                    regs: vec![],
                    target: MethodRefSpec::new(&player, delegate, &[], "V"),
                },
                Ins::ReturnVoid,
            ]
        };
        let params: Vec<&str> = if *cb == "onPlayFromMediaId" {
            vec!["Ljava/lang/String;", "Landroid/os/Bundle;"]
        } else {
            vec![]
        };
        class = class.method(MethodSpec {
            locals: 1,
            ..MethodSpec::virtual_method(cb, &params, "V", code)
        });
    }
    match shape.search {
        SearchHandler::Missing => {}
        SearchHandler::Valid => {
            class = class.method(MethodSpec {
                locals: 1,
                ..MethodSpec::virtual_method(
                    "onPlayFromSearch",
                    &["Ljava/lang/String;", "Landroid/os/Bundle;"],
                    "V",
                    vec![
                        Ins::Invoke {
                            flavor: InvokeFlavor::Static,
                            regs: vec![],
                            target: MethodRefSpec::new(&player, "playFromSearch", &[], "V"),
                        },
                        Ins::ReturnVoid,
                    ],
                )
            });
        }
        SearchHandler::EmptyBody => {
            class = class.method(MethodSpec {
                locals: 1,
                ..MethodSpec::virtual_method(
                    "onPlayFromSearch",
                    &["Ljava/lang/String;", "Landroid/os/Bundle;"],
                    "V",
                    vec![Ins::ReturnVoid],
                )
            });
        }
    }
    class
}

/// Playback delegate whose method names carry the player vocabulary the
/// reach analysis looks for.
pub fn player_class(pkg: &str) -> ClassSpec {
    let mut class = ClassSpec::new(&format!("{pkg}.Player"), "java.lang.Object").method(object_ctor());
    for name in [
        "play",
        "pause",
        "stop",
        "skipToNext",
        "skipToPrevious",
        "playFromId",
        "playFromSearch",
    ] {
        class = class.method(MethodSpec {
            name: name.into(),
            params: vec![],
            ret: "V".into(),
            kind: MethodKind::Direct,
            locals: 1,
            code: Some(vec![
                Ins::Invoke {
                    flavor: InvokeFlavor::Static,
                    regs: vec![],
                    target: MethodRefSpec::new("android.media.session.PlaybackState", "getState", &[], "V"),
                },
                Ins::ReturnVoid,
            ]),
            tries: Vec::new(),
        });
    }
    class
}

pub struct AppSpec {
    pub package: String,
    pub manifest: XmlDoc,
    /// One builder per classesN.dex entry.
    pub dexes: Vec<DexBuilder>,
}

impl AppSpec {
    pub fn to_apk(&self) -> Vec<u8> {
        let mut w = ZipWriter::new().entry(ZipEntrySpec::deflated(
            "AndroidManifest.xml",
            self.manifest.to_binary(false),
        ));
        for (i, dex) in self.dexes.iter().enumerate() {
            let name = if i == 0 {
                "classes.dex".to_string()
            } else {
                format!("classes{}.dex", i + 1)
            };
            w = w.entry(ZipEntrySpec::deflated(&name, dex.build()));
        }
        w = w.entry(ZipEntrySpec::stored(
            "res/xml/automotive_app_desc.xml",
            b"<automotiveApp><uses name=\"media\"/></automotiveApp>".to_vec(),
        ));
        w = w.entry(ZipEntrySpec::stored("META-INF/MANIFEST.MF", b"Manifest-Version: 1.0\n".to_vec()));
        w.finish()
    }
}

/// Fully compliant app: validated root, sendResult on every path, all six
/// session callbacks plus search, both manifest declarations.
pub fn fixed_app(pkg: &str) -> AppSpec {
    let service = service_class(
        pkg,
        &ServiceShape {
            get_root: GetRoot::Valid,
            load_children: LoadChildren::Valid,
            register_callback: true,
        },
    );
    let callback = callback_class(pkg, &CallbackShape::full());
    AppSpec {
        package: pkg.to_string(),
        manifest: auto_manifest(pkg, true, true, true),
        dexes: vec![DexBuilder::new()
            .class(service)
            .class(callback)
            .class(player_class(pkg))],
    }
}

/// The motivating broken app: service registered in the manifest but the
/// class only implements onCreate.
pub fn broken_app(pkg: &str) -> AppSpec {
    let service = service_class(
        pkg,
        &ServiceShape {
            get_root: GetRoot::Missing,
            load_children: LoadChildren::Missing,
            register_callback: false,
        },
    );
    AppSpec {
        package: pkg.to_string(),
        manifest: auto_manifest(pkg, true, true, false),
        dexes: vec![DexBuilder::new().class(service)],
    }
}

/// Compliant app split across classes.dex (3 classes) and classes2.dex
/// (2 utility classes).
pub fn multidex_app(pkg: &str) -> AppSpec {
    let mut base = fixed_app(pkg);
    let cache = ClassSpec::new(&format!("{pkg}.util.Cache"), "java.lang.Object")
        .method(object_ctor())
        .method(MethodSpec {
            locals: 1,
            ..MethodSpec::virtual_method("warm", &[], "V", vec![Ins::ReturnVoid])
        });
    let lru = ClassSpec::new(&format!("{pkg}.util.LruCache"), &format!("{pkg}.util.Cache"))
        .method(object_ctor());
    base.dexes.push(DexBuilder::new().class(cache).class(lru));
    base
}

/// Manifest-only APK: the declared service has no backing code.
pub fn manifest_only_app(pkg: &str) -> AppSpec {
    AppSpec {
        package: pkg.to_string(),
        manifest: auto_manifest(pkg, true, true, false),
        dexes: Vec::new(),
    }
}

/// Plain phone app with no Auto surface at all.
pub fn phone_app(pkg: &str) -> AppSpec {
    AppSpec {
        package: pkg.to_string(),
        manifest: phone_manifest(pkg),
        dexes: vec![DexBuilder::new().class(
            ClassSpec::new(&format!("{pkg}.MainActivity"), "android.app.Activity")
                .method(object_ctor()),
        )],
    }
}

/// One corpus entry: the APK plus its seeded defect census.
pub struct CorpusApp {
    pub file_stem: &'static str,
    pub spec: AppSpec,
    pub seeded_violations: Vec<String>,
    pub seeded_warnings: Vec<String>,
}

/// The seeded twelve-app corpus: four apps per violation category, each a
/// compliant app with a specific defect introduced.
pub fn corpus() -> Vec<CorpusApp> {
    fn app(
        file_stem: &'static str,
        spec: AppSpec,
        seeded_violations: &[&str],
        seeded_warnings: &[&str],
    ) -> CorpusApp {
        CorpusApp {
            file_stem,
            spec,
            seeded_violations: seeded_violations.iter().map(|s| s.to_string()).collect(),
            seeded_warnings: seeded_warnings.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn media_variant(pkg: &str, media: Vec<&'static str>, empty: Vec<&'static str>) -> AppSpec {
        let service = service_class(
            pkg,
            &ServiceShape {
                get_root: GetRoot::Valid,
                load_children: LoadChildren::Valid,
                register_callback: true,
            },
        );
        let callback = callback_class(
            pkg,
            &CallbackShape {
                media,
                empty_bodies: empty,
                search: SearchHandler::Valid,
            },
        );
        AppSpec {
            package: pkg.to_string(),
            manifest: auto_manifest(pkg, true, true, true),
            dexes: vec![DexBuilder::new()
                .class(service)
                .class(callback)
                .class(player_class(pkg))],
        }
    }

    fn ui_variant(pkg: &str, get_root: GetRoot, load_children: LoadChildren) -> AppSpec {
        let service = service_class(
            pkg,
            &ServiceShape {
                get_root,
                load_children,
                register_callback: true,
            },
        );
        let callback = callback_class(pkg, &CallbackShape::full());
        AppSpec {
            package: pkg.to_string(),
            manifest: auto_manifest(pkg, true, true, true),
            dexes: vec![DexBuilder::new()
                .class(service)
                .class(callback)
                .class(player_class(pkg))],
        }
    }

    fn voice_variant(pkg: &str, with_search_filter: bool, search: SearchHandler) -> AppSpec {
        let service = service_class(
            pkg,
            &ServiceShape {
                get_root: GetRoot::Valid,
                load_children: LoadChildren::Valid,
                register_callback: true,
            },
        );
        let callback = callback_class(
            pkg,
            &CallbackShape {
                media: MEDIA_CALLBACKS.to_vec(),
                empty_bodies: Vec::new(),
                search,
            },
        );
        AppSpec {
            package: pkg.to_string(),
            manifest: auto_manifest(pkg, true, true, with_search_filter),
            dexes: vec![DexBuilder::new()
                .class(service)
                .class(callback)
                .class(player_class(pkg))],
        }
    }

    let media_minus = |missing: &[&str]| -> Vec<&'static str> {
        MEDIA_CALLBACKS
            .iter()
            .copied()
            .filter(|cb| !missing.contains(cb))
            .collect()
    };

    vec![
        app(
            "m1_missing_onstop",
            media_variant("com.corpus.m1", media_minus(&["onStop"]), vec![]),
            &["MEDIA-003-missing-onStop"],
            &[],
        ),
        app(
            "m2_missing_skips",
            media_variant(
                "com.corpus.m2",
                media_minus(&["onSkipToNext", "onSkipToPrevious"]),
                vec![],
            ),
            &[
                "MEDIA-004-missing-onSkipToNext",
                "MEDIA-005-missing-onSkipToPrevious",
            ],
            &[],
        ),
        app(
            "m3_empty_onplay",
            media_variant("com.corpus.m3", MEDIA_CALLBACKS.to_vec(), vec!["onPlay"]),
            &[],
            &["MEDIA-007-unreachable-playback-logic"],
        ),
        app(
            "m4_no_media_callbacks",
            {
                let pkg = "com.corpus.m4";
                let service = service_class(
                    pkg,
                    &ServiceShape {
                        get_root: GetRoot::Valid,
                        load_children: LoadChildren::Valid,
                        register_callback: true,
                    },
                );
                let callback = callback_class(
                    pkg,
                    &CallbackShape {
                        media: vec![],
                        empty_bodies: vec![],
                        search: SearchHandler::Valid,
                    },
                );
                AppSpec {
                    package: pkg.to_string(),
                    manifest: auto_manifest(pkg, true, true, true),
                    dexes: vec![DexBuilder::new()
                        .class(service)
                        .class(callback)
                        .class(player_class(pkg))],
                }
            },
            &[
                "MEDIA-001-missing-onPlay",
                "MEDIA-002-missing-onPause",
                "MEDIA-003-missing-onStop",
                "MEDIA-004-missing-onSkipToNext",
                "MEDIA-005-missing-onSkipToPrevious",
                "MEDIA-006-missing-onPlayFromMediaId",
            ],
            &[],
        ),
        app(
            "u1_missing_ongetroot",
            ui_variant("com.corpus.u1", GetRoot::Missing, LoadChildren::Valid),
            &["UI-001-missing-onGetRoot"],
            &[],
        ),
        app(
            "u2_missing_onloadchildren",
            ui_variant("com.corpus.u2", GetRoot::Valid, LoadChildren::Missing),
            &["UI-002-missing-onLoadChildren"],
            &[],
        ),
        app(
            "u3_nullable_root",
            ui_variant("com.corpus.u3", GetRoot::NullableBranch, LoadChildren::Valid),
            &["UI-003-nullable-browser-root"],
            &[],
        ),
        app(
            "u4_missing_sendresult",
            ui_variant(
                "com.corpus.u4",
                GetRoot::Valid,
                LoadChildren::BranchMissingSendResult,
            ),
            &["UI-004-missing-sendResult"],
            &[],
        ),
        app(
            "v1_missing_intent_filter",
            voice_variant("com.corpus.v1", false, SearchHandler::Valid),
            &["VOICE-001-missing-intent-filter"],
            &[],
        ),
        app(
            "v2_missing_onplayfromsearch",
            voice_variant("com.corpus.v2", true, SearchHandler::Missing),
            &["VOICE-002-missing-onPlayFromSearch"],
            &[],
        ),
        app(
            "v3_empty_search_handler",
            voice_variant("com.corpus.v3", true, SearchHandler::EmptyBody),
            &[],
            &["VOICE-003-empty-search-handler"],
        ),
        app(
            "v4_missing_both",
            voice_variant("com.corpus.v4", false, SearchHandler::Missing),
            &[
                "VOICE-001-missing-intent-filter",
                "VOICE-002-missing-onPlayFromSearch",
            ],
            &[],
        ),
    ]
}
