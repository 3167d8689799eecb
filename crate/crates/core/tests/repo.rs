use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use remixd_core::decimate::DecimationConfig;
use remixd_core::repo::{
    license_allows_remix, BackendConfig, FixtureBackend, JobState, LiveBackend, RepoClient, RepoConfig, RepoEntry,
    RepoError, MAX_CONCURRENT_DOWNLOADS,
};
use remixd_core::stl::{write_stl, StlFormat};
use remixd_core::synth;

const WAIT: Duration = Duration::from_secs(120);

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn client() -> RepoClient {
    let cfg = RepoConfig {
        backend: BackendConfig::Fixture(fixtures()),
        ..Default::default()
    };
    RepoClient::from_config(&cfg).unwrap()
}

#[test]
fn pot_search_lists_only_remixable_planters() {
    let page = client().search("pot", 0).unwrap();
    let ids: Vec<&str> = page.entries.iter().map(|e| e.id.as_str()).collect();
    assert!(ids.contains(&"planter-ribbed"), "{ids:?}");
    assert!(!ids.contains(&"pot-designer-nd"));
    assert!(!ids.contains(&"pot-store"));
    assert!(page.entries.iter().all(|e| e.remix_allowed));
    assert_eq!(page.total_available, page.entries.len());
}

#[test]
fn hook_search_drops_no_derivatives_and_custom_licenses() {
    let page = client().search("Hook", 0).unwrap();
    let mut ids: Vec<&str> = page.entries.iter().map(|e| e.id.as_str()).collect();
    ids.sort();
    assert_eq!(ids, ["hook-cloth", "hook-headphone"]);
}

#[test]
fn blank_query_is_rejected() {
    assert_eq!(client().search("   ", 0).unwrap_err(), RepoError::EmptyQuery);
}

#[test]
fn paging_splits_results() {
    let cfg = RepoConfig {
        backend: BackendConfig::Fixture(fixtures()),
        page_size: 2,
        ..Default::default()
    };
    let c = RepoClient::from_config(&cfg).unwrap();
    let all = c.search("pot", 0).unwrap().total_available;
    let mut seen = Vec::new();
    for page in 0..all.div_ceil(2) + 1 {
        let p = c.search("pot", page).unwrap();
        assert!(p.entries.len() <= 2);
        seen.extend(p.entries.into_iter().map(|e| e.id));
    }
    assert_eq!(seen.len(), all);
}

#[test]
fn filter_agrees_with_license_table_for_every_fixture() {
    let backend = FixtureBackend::open(fixtures()).unwrap();
    let c = client();
    for e in backend.all_entries() {
        let expect = license_allows_remix(&e.license);
        assert_eq!(e.remix_allowed, expect, "{}", e.id);
        let found = c
            .search(&e.title, 0)
            .unwrap()
            .entries
            .iter()
            .any(|x| x.id == e.id);
        assert_eq!(found, expect, "{} ({})", e.id, e.license);
        if !expect {
            assert!(matches!(c.entry(&e.id), Err(RepoError::NotRemixable(_))));
        }
    }
}

#[test]
fn download_walks_through_every_state() {
    let c = client();
    let entry = c.entry("hook-cloth").unwrap();
    let job = c.enqueue_download(&entry).unwrap();
    let done = c.wait_for(job.id, WAIT).unwrap();
    assert_eq!(done.state, JobState::Ready);
    assert_eq!(
        done.history,
        [JobState::Queued, JobState::Downloading, JobState::Preprocessing, JobState::Ready]
    );
    let mesh = done.mesh.unwrap();
    assert!(mesh.is_watertight());
    assert_eq!(done.triangles, Some(mesh.triangle_count()));
    assert!(done.decimation.is_none());
}

#[test]
fn truncated_upload_fails_with_parse_error() {
    let c = client();
    let job = c.enqueue_download(&c.entry("pot-broken").unwrap()).unwrap();
    let done = c.wait_for(job.id, WAIT).unwrap();
    assert_eq!(done.state, JobState::Failed);
    assert!(done.failure.as_deref().unwrap().contains("stl parse error"), "{:?}", done.failure);
    assert!(done.mesh.is_none());
}

#[test]
fn repeated_requests_share_one_job() {
    let c = client();
    let e = c.entry("planter-hex").unwrap();
    let a = c.enqueue_download(&e).unwrap();
    let b = c.enqueue_download(&e).unwrap();
    assert_eq!(a.id, b.id);
    c.wait_for(a.id, WAIT).unwrap();
    assert_eq!(c.enqueue_download(&e).unwrap().id, a.id);
    assert_eq!(c.queue().jobs().len(), 1);
}

#[test]
fn non_remixable_entries_are_not_queued() {
    let c = client();
    let backend = FixtureBackend::open(fixtures()).unwrap();
    let nd = backend.all_entries().iter().find(|e| e.id == "pot-designer-nd").unwrap();
    assert!(matches!(c.enqueue_download(nd), Err(RepoError::NotRemixable(_))));
    let mut empty = c.entry("hook-cloth").unwrap();
    empty.file_locators.clear();
    assert!(matches!(c.enqueue_download(&empty), Err(RepoError::NoFiles(_))));
}

#[test]
fn at_most_three_downloads_run_at_once() {
    let c = client();
    let backend = FixtureBackend::open(fixtures()).unwrap();
    let jobs: Vec<_> = backend
        .all_entries()
        .iter()
        .filter(|e| e.remix_allowed)
        .map(|e| c.enqueue_download(e).unwrap())
        .collect();
    assert!(jobs.len() > MAX_CONCURRENT_DOWNLOADS);
    for j in &jobs {
        assert!(c.wait_for(j.id, WAIT).unwrap().state.is_terminal());
    }
    let peak = c.queue().peak_concurrency();
    assert!((1..=MAX_CONCURRENT_DOWNLOADS).contains(&peak), "peak {peak}");
}

#[test]
fn dense_download_is_simplified_on_arrival() {
    let dir = tempfile::tempdir().unwrap();
    // About 160k triangles, over the default auto threshold.
    let mesh = synth::uv_sphere(30.0, 400, 201, 0.5);
    assert!(mesh.triangle_count() > 150_000);
    std::fs::write(dir.path().join("scan.stl"), write_stl(&mesh, StlFormat::Binary).unwrap()).unwrap();
    let entry = RepoEntry {
        id: "scan".into(),
        title: "Dense scan".into(),
        thumbnail_url: "scan.png".into(),
        license: "CC0-1.0".into(),
        remix_allowed: false,
        file_locators: vec!["scan.stl".into()],
        tags: vec![],
    };
    std::fs::write(dir.path().join("index.json"), serde_json::to_vec(&[&entry]).unwrap()).unwrap();
    let cfg = RepoConfig {
        backend: BackendConfig::Fixture(dir.path().to_path_buf()),
        decimation: DecimationConfig::default(),
        ..Default::default()
    };
    let c = RepoClient::from_config(&cfg).unwrap();
    let job = c.enqueue_download(&c.entry("scan").unwrap()).unwrap();
    let done = c.wait_for(job.id, WAIT).unwrap();
    assert_eq!(done.state, JobState::Ready, "{:?}", done.failure);
    let stats = done.decimation.unwrap();
    let target = (0.30 * mesh.triangle_count() as f64).round();
    let out = done.triangles.unwrap() as f64;
    assert!((out - target).abs() / target <= 0.02, "{out} vs {target}");
    assert_eq!(stats.output_triangles, done.triangles.unwrap());
}

/// Serves `routes` (path prefix, content type, body) over plain HTTP/1.1,
/// one connection at a time, until the listener is dropped with the thread.
fn serve(routes: Vec<(String, &'static str, Vec<u8>)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let routes = Arc::new(routes);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let routes = routes.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    return;
                }
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let (status, ctype, body) = routes
                    .iter()
                    .find(|(p, _, _)| path.starts_with(p.as_str()))
                    .map(|(_, c, b)| ("200 OK", *c, b.clone()))
                    .unwrap_or(("404 Not Found", "text/plain", b"missing".to_vec()));
                let head = format!(
                    "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    body.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(&body);
                let _ = stream.flush();
                let _ = reader.read(&mut [0u8; 1]);
            });
        }
    });
    format!("http://{addr}")
}

#[test]
fn live_backend_searches_and_downloads_over_http() {
    let cube = write_stl(&synth::box_mesh([0.0; 3].into(), [10.0; 3].into()), StlFormat::Binary).unwrap();
    let index = serde_json::json!([
        {"id": "live-cube", "title": "Live cube", "thumbnail_url": "/files/cube.png",
         "license": "CC-BY-4.0", "file_locators": ["/files/cube.stl"]},
        {"id": "live-nd", "title": "Live cube ND", "thumbnail_url": "/files/cube.png",
         "license": "CC-BY-ND-4.0", "remix_allowed": true, "file_locators": ["/files/cube.stl"]}
    ]);
    let base = serve(vec![
        ("/api/search".into(), "application/json", serde_json::to_vec(&index).unwrap()),
        ("/files/cube.stl".into(), "model/stl", cube),
        ("/files/cube.png".into(), "image/png", b"\x89PNG".to_vec()),
    ]);
    let cfg = RepoConfig {
        backend: BackendConfig::Live {
            base_url: base.clone(),
            search_path: "/api/search".into(),
        },
        timeout: Duration::from_secs(10),
        ..Default::default()
    };
    let c = RepoClient::from_config(&cfg).unwrap();
    let page = c.search("cube", 0).unwrap();
    assert_eq!(page.entries.len(), 1, "the ND entry's own remix flag is ignored");
    assert_eq!(page.entries[0].id, "live-cube");
    assert_eq!(c.thumbnail("live-cube").unwrap(), b"\x89PNG");
    let job = c.enqueue_download(&page.entries[0]).unwrap();
    let done = c.wait_for(job.id, WAIT).unwrap();
    assert_eq!(done.state, JobState::Ready, "{:?}", done.failure);
    assert_eq!(done.triangles, Some(12));

    let missing = LiveBackend::new(&base, "/nope", Duration::from_secs(5));
    let err = remixd_core::repo::RepoBackend::search(&missing, "cube").unwrap_err();
    assert!(matches!(err, RepoError::Unreachable(_)), "{err:?}");
}

#[test]
fn unreachable_live_backend_is_reported() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = RepoConfig {
        backend: BackendConfig::Live {
            base_url: format!("http://127.0.0.1:{port}"),
            search_path: "/search".into(),
        },
        timeout: Duration::from_secs(5),
        ..Default::default()
    };
    let c = RepoClient::from_config(&cfg).unwrap();
    assert!(matches!(c.search("pot", 0), Err(RepoError::Unreachable(_))));
}

#[test]
fn malformed_live_payload_is_reported() {
    let base = serve(vec![("/search".into(), "application/json", b"{\"not\": \"a list\"}".to_vec())]);
    let cfg = RepoConfig {
        backend: BackendConfig::Live {
            base_url: base,
            search_path: "/search".into(),
        },
        timeout: Duration::from_secs(5),
        ..Default::default()
    };
    let c = RepoClient::from_config(&cfg).unwrap();
    assert!(matches!(c.search("pot", 0), Err(RepoError::Malformed(_))));
}

#[test]
fn config_reads_environment_style_lookup() {
    let vars = [
        ("REMIXD_FIXTURE_DIR", "/data/fx"),
        ("REMIXD_PAGE_SIZE", "5"),
        ("REMIXD_QUALITY", "0.5"),
    ];
    let cfg = RepoConfig::from_lookup(|k| vars.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())).unwrap();
    assert_eq!(cfg.backend, BackendConfig::Fixture("/data/fx".into()));
    assert_eq!(cfg.page_size, 5);
    assert_eq!(cfg.decimation.quality, 0.5);
    assert!(RepoConfig::from_lookup(|k| (k == "REMIXD_QUALITY").then(|| "1.5".into())).is_err());
    let live = RepoConfig::from_lookup(|k| (k == "REMIXD_REPO_BASE_URL").then(|| "http://x".into())).unwrap();
    assert!(matches!(live.backend, BackendConfig::Live { ref search_path, .. } if search_path == "/search"));
}
