use std::path::PathBuf;

use remixd_core::repo::{license_allows_remix, FixtureBackend};
use remixd_core::stl::{load_stl, write_stl, StlError, StlFormat};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn corpus() -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["models", "env"] {
        for entry in std::fs::read_dir(fixtures().join(sub)).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "stl") {
                files.push((format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()), std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// The 50-byte facet records after the 84-byte preamble.
fn payload(bytes: &[u8]) -> &[u8] {
    &bytes[84..]
}

#[test]
fn binary_roundtrip_is_bitwise_for_the_corpus() {
    let mut checked = 0;
    for (name, bytes) in corpus() {
        let loaded = match load_stl(&bytes) {
            Ok(l) => l,
            Err(e) => {
                assert_eq!(name, "models/pot-broken.stl", "{name}: {e}");
                continue;
            }
        };
        assert_eq!(loaded.format, StlFormat::Binary);
        assert_eq!(loaded.mesh.triangle_count(), loaded.facet_count, "{name}");
        let written = write_stl(&loaded.mesh, StlFormat::Binary).unwrap();
        assert_eq!(payload(&written), payload(&bytes), "{name}");
        let again = load_stl(&written).unwrap().mesh;
        assert_eq!(again, loaded.mesh, "{name}");
        checked += 1;
    }
    assert!(checked >= 14, "{checked}");
}

#[test]
fn ascii_roundtrip_preserves_f32_positions() {
    for (name, bytes) in corpus().into_iter().filter(|(n, _)| n != "models/pot-broken.stl") {
        let mesh = load_stl(&bytes).unwrap().mesh;
        let ascii = write_stl(&mesh, StlFormat::Ascii).unwrap();
        let back = load_stl(&ascii).unwrap();
        assert_eq!(back.format, StlFormat::Ascii);
        assert_eq!(back.mesh, mesh, "{name}");
    }
}

#[test]
fn truncated_file_reports_expected_length() {
    let bytes = std::fs::read(fixtures().join("models/pot-broken.stl")).unwrap();
    match load_stl(&bytes) {
        Err(StlError::Truncated { expected, actual }) => {
            assert_eq!(actual, bytes.len());
            assert!(expected > actual);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_area_ascii_facet_is_dropped_with_warning() {
    let text = "solid s\nfacet normal 0 0 0\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nvertex 2 0 0\nendloop\nendfacet\nendsolid s\n";
    let loaded = load_stl(text.as_bytes()).unwrap();
    assert_eq!(loaded.mesh.triangle_count(), 0);
    assert_eq!(loaded.dropped_degenerate, 1);
    assert!(!loaded.warnings.is_empty());
}

#[test]
fn every_fixture_model_is_watertight_except_the_broken_upload() {
    for (name, bytes) in corpus() {
        if let Ok(l) = load_stl(&bytes) {
            assert!(l.mesh.is_watertight(), "{name}");
            assert!(l.mesh.signed_volume() > 0.0, "{name}");
        }
    }
}

#[test]
fn index_marks_exactly_the_permissive_licenses() {
    let backend = FixtureBackend::open(fixtures()).unwrap();
    let entries = backend.all_entries();
    assert!(entries.len() >= 12);
    let denied: Vec<&str> = entries.iter().filter(|e| !e.remix_allowed).map(|e| e.id.as_str()).collect();
    assert_eq!(denied, ["pot-designer-nd", "pot-store", "hook-cable-nd", "hook-mystery"]);
    for e in entries {
        assert_eq!(e.remix_allowed, license_allows_remix(&e.license));
        assert!(fixtures().join(&e.thumbnail_url).is_file(), "{}", e.id);
        for f in &e.file_locators {
            assert!(fixtures().join(f).is_file(), "{}: {f}", e.id);
        }
    }
}

#[test]
fn license_table() {
    for l in ["CC0-1.0", "CC-BY-4.0", "CC-BY-SA-4.0", "CC-BY-NC-4.0", "CC-BY-NC-SA-3.0", "public domain", "GPL-3.0", "MIT"] {
        assert!(license_allows_remix(l), "{l}");
    }
    for l in ["CC-BY-ND-4.0", "CC-BY-NC-ND-4.0", "All Rights Reserved", "custom", "", "proprietary"] {
        assert!(!license_allows_remix(l), "{l}");
    }
}
