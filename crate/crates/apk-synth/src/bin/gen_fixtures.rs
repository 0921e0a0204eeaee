//! Writes the checked-in fixture corpus: APKs for the broken/fixed example
//! apps, the seeded twelve-app corpus with its defect census, and paired
//! textual/binary manifest files.
//!
//! Usage: gen-fixtures [OUT_DIR]   (default: fixtures)

use std::fs;
use std::path::{Path, PathBuf};

use apk_synth::apps;

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures"));

    let apk_dir = out.join("apk");
    let corpus_dir = apk_dir.join("corpus");
    let manifest_dir = out.join("manifest");
    for d in [&apk_dir, &corpus_dir, &manifest_dir] {
        fs::create_dir_all(d).unwrap();
    }

    write(&apk_dir.join("broken_app.apk"), &apps::broken_app("com.example.music").to_apk());
    write(&apk_dir.join("fixed_app.apk"), &apps::fixed_app("com.example.music").to_apk());
    write(&apk_dir.join("multidex.apk"), &apps::multidex_app("com.example.multidex").to_apk());
    write(
        &apk_dir.join("manifest_only.apk"),
        &apps::manifest_only_app("com.example.nocode").to_apk(),
    );
    write(&apk_dir.join("phone_app.apk"), &apps::phone_app("com.example.phone").to_apk());

    let mut census = String::from("# Seeded defects per corpus app; used for precision/recall checks.\n");
    for app in apps::corpus() {
        let file = format!("{}.apk", app.file_stem);
        write(&corpus_dir.join(&file), &app.spec.to_apk());
        census.push_str("\n[[app]]\n");
        census.push_str(&format!("file = \"{file}\"\n"));
        census.push_str(&format!("package = \"{}\"\n", app.spec.package));
        census.push_str(&format!("violations = {}\n", toml_list(&app.seeded_violations)));
        census.push_str(&format!("warnings = {}\n", toml_list(&app.seeded_warnings)));
    }
    write(&corpus_dir.join("census.toml"), census.as_bytes());

    // Paired textual/binary manifests for decoder fidelity checks.
    let pairs = [
        ("listing1", apps::auto_manifest("com.example.music", true, true, false), false),
        ("listing1_utf8", apps::auto_manifest("com.example.music", true, true, false), true),
        ("no_metadata", apps::auto_manifest("com.example.music", false, true, false), false),
        ("no_filter", apps::auto_manifest("com.example.music", true, false, false), false),
        ("with_search", apps::auto_manifest("com.example.music", true, true, true), false),
        ("phone", apps::phone_manifest("com.example.phone"), false),
    ];
    for (name, doc, utf8) in pairs {
        write(&manifest_dir.join(format!("{name}.xml")), doc.to_text_xml().as_bytes());
        write(&manifest_dir.join(format!("{name}.axml")), &doc.to_binary(utf8));
    }

    println!("fixtures written to {}", out.display());
}

fn write(path: &Path, bytes: &[u8]) {
    fs::write(path, bytes).unwrap_or_else(|e| panic!("write {}: {e}", path.display()));
    println!("  {} ({} bytes)", path.display(), bytes.len());
}

fn toml_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("\"{s}\"")).collect();
    format!("[{}]", quoted.join(", "))
}
