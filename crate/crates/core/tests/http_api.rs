use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use lfq_core::scaling::{build_matrix, partition_responses};
use lfq_core::service::{router, StudyStore};
use lfq_core::study::{build_study, read_responses, Catalog, Phase, Ruleset, Stimulus, StudyParams};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::Arc;
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn quality(s: &Stimulus) -> f64 {
    s.condition.as_ref().map_or(f64::INFINITY, |c| c.bitrate_bpp)
}

#[tokio::test]
async fn full_session_round_trips_through_export() {
    let dir = tempfile::tempdir().unwrap();
    let ruleset = Ruleset {
        codecs: vec!["vvc".into()],
        cross_codec_exclusions: vec![],
        ..Ruleset::default()
    };
    let catalog = Catalog::complete(&["a", "b"], &[(2, 2), (0, 0)], &ruleset);
    let training = Catalog::complete(&["t"], &[(2, 2)], &ruleset);
    let params = StudyParams {
        observers: 4,
        evals_per_triplet: 2,
        ..StudyParams::default()
    };
    let manifest = build_study(&catalog, &ruleset, &params, Some(&training)).unwrap();
    let assets = dir.path().join("assets");
    let mut by_image: HashMap<String, Stimulus> = HashMap::new();
    for e in catalog.entries.iter().chain(&training.entries) {
        for s in &e.stimuli {
            let p = assets.join(&s.image);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(&p, s.image.as_bytes()).unwrap();
            by_image.insert(s.image.clone(), s.clone());
        }
    }

    let app = router(Arc::new(StudyStore::open(&dir.path().join("store")).unwrap()));
    let (status, created) = call_json(
        &app,
        "POST",
        "/studies",
        Some(json!({ "manifest": manifest, "assets_dir": assets, "options": { "flicker_ms": 500, "min_break_s": 0, "zoom": 2, "snapshot_every": 7 } })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["study_id"].as_str().unwrap().to_string();

    let (status, _) = call_json(&app, "GET", &format!("/studies/{id}/observers/ghost/next"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let first = &manifest.sessions[0].observer_id;
    let (status, _) = call_json(&app, "GET", &format!("/studies/{id}/observers/{first}/next"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut swapped = [0usize; 2];
    for session in &manifest.sessions {
        let oid = &session.observer_id;
        let record = json!({ "observer_id": oid, "acuity_ok": true, "color_vision_ok": true, "consent": true });
        let (status, _) = call_json(&app, "POST", &format!("/studies/{id}/observers"), Some(record)).await;
        assert_eq!(status, StatusCode::OK);
        let mut answered = 0;
        loop {
            let (status, mut d) = call_json(&app, "GET", &format!("/studies/{id}/observers/{oid}/next"), None).await;
            assert_eq!(status, StatusCode::OK, "{d}");
            if d["kind"] == "break" {
                // resuming serves the next item
                let (status, resumed) = call_json(&app, "POST", &format!("/studies/{id}/observers/{oid}/resume"), None).await;
                assert_eq!(status, StatusCode::OK);
                d = resumed;
            }
            if d["kind"] == "done" {
                break;
            }
            assert_eq!(d["zoom"], 2);
            let prefix = format!("/assets/{id}/");
            let side = |k: &str| by_image[d[k].as_str().unwrap().strip_prefix(&prefix).unwrap()].clone();
            let (left, right) = (side("left"), side("right"));
            let (status, bytes) = call(&app, "GET", d["left"].as_str().unwrap(), None).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(bytes, left.image.as_bytes());
            swapped[d["swapped"].as_bool().unwrap() as usize] += 1;

            // A second `next` while the item is unanswered is refused.
            let (status, _) = call_json(&app, "GET", &format!("/studies/{id}/observers/{oid}/next"), None).await;
            assert_eq!(status, StatusCode::CONFLICT);

            // The lower-rate side flickers more.
            let choice = if quality(&left) < quality(&right) { "left" } else { "right" };
            let sub = json!({ "triplet_id": d["triplet_id"], "choice": choice, "latency_ms": 900 });
            let (status, ack) = call_json(&app, "POST", &format!("/studies/{id}/observers/{oid}/responses"), Some(sub.clone())).await;
            assert_eq!(status, StatusCode::OK, "{ack}");
            assert_eq!(ack["accepted"], true);
            let (status, _) = call_json(&app, "POST", &format!("/studies/{id}/observers/{oid}/responses"), Some(sub)).await;
            assert_eq!(status, StatusCode::CONFLICT);
            answered += 1;
        }
        assert_eq!(answered, session.items.len() + manifest.training.len());
    }
    assert!(swapped[0] > 0 && swapped[1] > 0, "{swapped:?}");

    let (status, body) = call(&app, "GET", &format!("/studies/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    let responses = read_responses(body.as_slice()).unwrap();
    assert_eq!(responses.len(), manifest.sessions.iter().map(|s| s.items.len()).sum::<usize>());
    assert!(responses.iter().all(|r| r.phase == Phase::Testing));
    let (_, body) = call(&app, "GET", &format!("/studies/{id}/export?include_training=true"), None).await;
    assert_eq!(read_responses(body.as_slice()).unwrap().len(), responses.len() + 4 * manifest.training.len());

    // Once the swap is undone every win goes to the higher-rate condition.
    let rate: HashMap<String, f64> = by_image.values().map(|s| (s.condition_key(), quality(s))).collect();
    let groups = partition_responses(&responses, &manifest.triplets).unwrap();
    assert!(!groups.is_empty());
    let mut wins = 0.0;
    for (key, rs) in &groups {
        let m = build_matrix(rs, &manifest.triplets, key).unwrap();
        for (i, a) in m.conditions.iter().enumerate() {
            for (j, b) in m.conditions.iter().enumerate() {
                if rate[a] < rate[b] {
                    assert_eq!(m.v[i][j], 0.0, "{key}: {a} beat {b}");
                }
                wins += m.v[i][j];
            }
        }
    }
    assert!(wins > 0.0);

    let (status, _) = call(&app, "GET", &format!("/assets/{id}/../store"), None).await;
    assert_ne!(status, StatusCode::OK);
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(StudyStore::open(dir.path()).unwrap()));
    let (status, _) = call_json(&app, "GET", "/studies/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call_json(&app, "POST", "/studies", Some(json!({ "manifest": 1, "assets_dir": "x" }))).await;
    assert!(status.is_client_error());
}
