use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use coplan::experiment::{run, ConfigDocument, ExperimentMeta, Origin, Override, RunStore};
use coplan_service::{openapi, router, serve, AppState, ServiceError};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn repo_file(rel: &str) -> String {
    std::fs::read_to_string(format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

struct Api {
    _dir: tempfile::TempDir,
    store: RunStore,
    app: Router,
}

fn api() -> Api {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    store.import_table("table4", &repo_file("fixtures/table4.csv")).unwrap();
    store.import_table("table9", &repo_file("fixtures/table9.csv")).unwrap();
    let app = router(AppState::new(store.clone()));
    Api { _dir: dir, store, app }
}

impl Api {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let text = String::from_utf8(bytes.to_vec()).unwrap();
        let json = if ctype.starts_with("application/json") {
            serde_json::from_str(&text).unwrap()
        } else {
            Value::Null
        };
        (status, json, text)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, v, _) = self.call("GET", uri, None).await;
        (s, v)
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let (s, v, _) = self.call("POST", uri, Some(body)).await;
        (s, v)
    }
}

fn cell(risk: &Value, a: &str, b: &str) -> (i64, i64) {
    let names: Vec<&str> = risk["regret"]["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let i = names.iter().position(|n| *n == a).unwrap();
    let j = names.iter().position(|n| *n == b).unwrap();
    let c = &risk["regret"]["cells"][i][j];
    (c["min"].as_i64().unwrap(), c["max"].as_i64().unwrap())
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap()
}

/// Base experiment with two simulated scenarios.
fn small_config() -> ConfigDocument {
    let o: Vec<Override> = [
        "doe.trends=[\"T1\"]",
        "doe.consolidation=[\"Min\"]",
        "doe.visibility=[{label=\"V4\", firm_length=10}]",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect();
    ConfigDocument::parse(&repo_file("configs/reference.toml"), &o).unwrap()
}

fn simulate_into(store: &RunStore, doc: &ConfigDocument) -> String {
    let id = doc.config.hash();
    let mut meta = ExperimentMeta::new(&id, Origin::Simulation);
    meta.config_hash = Some(id.clone());
    store.write_config(&id, doc).unwrap();
    store.write_meta(&meta).unwrap();
    let r = run(&doc.config, None).unwrap();
    store.write_run(&mut meta, &r).unwrap();
    id
}

#[tokio::test]
async fn health_and_listing() {
    let a = api();
    let (s, v) = a.get("/health").await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "ok"})));
    let (s, v) = a.get("/experiments").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["origin"], "import");
    let (s, v) = a.get("/experiments/table4").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "complete");
}

#[tokio::test]
async fn empty_store_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(RunStore::open(dir.path()).unwrap()));
    let resp = app
        .oneshot(Request::get("/experiments").body(Body::empty()).unwrap())
        .await
        .unwrap();
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"[]");
}

#[tokio::test]
async fn results_mirror_the_csv_schema() {
    let a = api();
    let (s, v) = a.get("/experiments/table4/results").await;
    assert_eq!(s, StatusCode::OK);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 32);
    let keys: Vec<&str> = v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    for k in &keys {
        assert!(rows[0].get(*k).is_some(), "{k}");
    }
    assert_eq!(rows[0].as_object().unwrap().len(), keys.len());
    assert_eq!(rows[0]["global_gain"], json!(245201));
    assert!(rows[0]["global_gain"].is_i64());
}

#[tokio::test]
async fn unknown_ids_are_404_with_a_code() {
    let a = api();
    for uri in [
        "/experiments/nope",
        "/experiments/nope/results",
        "/experiments/nope/risk?actor=supplier",
        "/experiments/nope/decision",
        "/experiments/table4/traces/T1-Min-V1-S1",
    ] {
        let (s, v) = a.get(uri).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert!(error_code(&v).starts_with("unknown_"), "{uri}");
    }
}

#[tokio::test]
async fn supplier_risk_on_fixture() {
    let a = api();
    let (s, v) = a.get("/experiments/table4/risk?actor=supplier").await;
    assert_eq!(s, StatusCode::OK);
    let bp = &v["diagram"]["breakpoints"];
    assert_eq!(bp.as_array().unwrap().len(), 1);
    assert!((bp[0]["alpha"].as_f64().unwrap() - 0.855).abs() <= 1e-3);
    assert_eq!(bp[0]["exact"], "29383/34382");
    assert_eq!(cell(&v, "S1", "S2"), (-46597, 73034));
    assert_eq!(v["diagram"]["savage"]["winners"], json!(["S1"]));
    assert_eq!(v["diagram"]["extremes"][0]["worst"], json!(235470));
}

#[tokio::test]
async fn customer_risk_and_penalties() {
    let a = api();
    let (s, v) = a.get("/experiments/table4/risk?actor=customer").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(cell(&v, "V1", "V2"), (-44240, 300));
    assert_eq!(cell(&v, "V1", "V4"), (-76100, 900));
    assert_eq!(v["diagram"]["intervals"][0]["winners"], json!(["V4"]));

    let (_, t10) = a.get("/experiments/table9/risk?actor=customer").await;
    assert_eq!(cell(&t10, "V1", "V2"), (-43240, 1300));
    assert_eq!(cell(&t10, "V1", "V4"), (-63760, 5900));

    let start = Instant::now();
    let (s, p) = a
        .get("/experiments/table4/risk?actor=customer&penalties=V2%3D1000,V3%3D2000,V4%3D5000")
        .await;
    assert!(start.elapsed() < Duration::from_millis(100), "{:?}", start.elapsed());
    assert_eq!(s, StatusCode::OK);
    assert_eq!(p["penalties"], json!({"V2": 1000, "V3": 2000, "V4": 5000}));
    assert_eq!(cell(&p, "V1", "V2").1, 1300);
    let winners: Vec<&Value> = p["diagram"]["intervals"].as_array().unwrap().iter().map(|i| &i["winners"]).collect();
    assert!(winners.contains(&&json!(["V3"])));

    let (s, e) = a.get("/experiments/table4/risk?actor=supplier&penalties=S1%3D5").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error"]["fields"][0]["field"], "penalties");
    let (s, _) = a.get("/experiments/table4/risk?actor=board").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = a.get("/experiments/table4/risk").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn incomplete_experiment_is_409() {
    let a = api();
    a.store.write_meta(&ExperimentMeta::new("pending", Origin::Simulation)).unwrap();
    for uri in ["/experiments/pending/risk?actor=supplier", "/experiments/pending/results"] {
        let (s, v) = a.get(uri).await;
        assert_eq!(s, StatusCode::CONFLICT);
        assert_eq!(error_code(&v), "experiment_incomplete");
    }
}

#[tokio::test]
async fn whatif_penalties_only() {
    let a = api();
    let (s, v) = a
        .post("/whatif", json!({"base": "table4", "penalties": {"V2": 1000, "V3": 2000, "V4": 5000}}))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["kind"], "reaggregated");
    assert!(v.get("experiment").is_none());
    assert_eq!(cell(&v["customer"], "V1", "V2").1, 1300);
    assert_eq!(v["supplier"]["diagram"]["breakpoints"][0]["exact"], "29383/34382");
    assert_eq!(a.get("/experiments").await.1.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn whatif_validation() {
    let a = api();
    let (s, v) = a.post("/whatif", json!({"base": "table4", "inventory_cap": -1})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["fields"][0]["field"], "inventory_cap");
    let (s, v) = a
        .post("/whatif", json!({"base": "ghost", "penalties": {"V2": -5}}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = v["error"]["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["penalties.V2", "base"]);
    let (s, _) = a.post("/whatif", json!({"base": "table4", "colour": 1})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, v) = a.post("/whatif", json!({"base": "table4", "visibility": "V9"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["fields"][0]["field"], "visibility");
    // Imported tables have no configuration to re-simulate.
    let (s, v) = a.post("/whatif", json!({"base": "table4", "inventory_cap": 80})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["fields"][0]["field"], "inventory_cap");
}

#[tokio::test(flavor = "multi_thread")]
async fn whatif_cap_creates_a_derived_experiment() {
    let a = api();
    let doc = small_config();
    let base = simulate_into(&a.store, &doc);

    let (s, v) = a
        .post("/whatif", json!({"base": base, "inventory_cap": 80, "supplier_strategy": "S2"}))
        .await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["kind"], "derived");
    let child = v["experiment"].as_str().unwrap().to_string();
    assert_ne!(child, base);

    let deadline = Instant::now() + Duration::from_secs(300);
    loop {
        let (_, m) = a.get(&format!("/experiments/{child}")).await;
        if m["status"] == "complete" {
            assert_eq!(m["parent"], json!(base));
            assert_eq!(m["delta"], json!({"run.inventory_cap": 80.0}));
            break;
        }
        assert_ne!(m["status"], "failed", "{m}");
        assert!(Instant::now() < deadline, "derived run did not finish");
        tokio::time::sleep(Duration::from_millis(100)).await;
    }

    let derived = a.store.config(&child).unwrap().unwrap();
    let mut reset = derived.config.clone();
    reset.run.inventory_cap = None;
    assert_eq!(reset, doc.config);
    assert_eq!(derived.config.run.inventory_cap, Some(80.0));

    let (s, r) = a.get(&format!("/experiments/{child}/results")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["rows"].as_array().unwrap().len(), 2);

    // Same request again points at the same experiment.
    let (_, again) = a.post("/whatif", json!({"base": base, "inventory_cap": 80})).await;
    assert_eq!(again["experiment"], json!(child));

    let (s, _, text) = a.call("GET", &format!("/experiments/{child}/traces/T1-Min-V4-S1"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(text.lines().next().unwrap().contains("\"event\":\"header\""));
    let (s, _) = a.get(&format!("/experiments/{child}/traces/T1-Min-V4-S9")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn decisions_are_appended_in_order() {
    let a = api();
    for (s, v) in [("S2", "V4"), ("S2", "V3")] {
        let (status, rec) = a
            .post(
                "/experiments/table4/decision",
                json!({"supplier_strategy": s, "visibility": v, "author": "supplier+customer"}),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED);
        assert_eq!(rec["visibility"], v);
    }
    let (s, h) = a.get("/experiments/table4/decision").await;
    assert_eq!(s, StatusCode::OK);
    let pairs: Vec<(String, String)> = h
        .as_array()
        .unwrap()
        .iter()
        .map(|d| (d["supplier_strategy"].as_str().unwrap().into(), d["visibility"].as_str().unwrap().into()))
        .collect();
    assert_eq!(pairs, [("S2".into(), "V4".into()), ("S2".into(), "V3".into())]);

    let (s, v) = a
        .post("/experiments/table4/decision", json!({"supplier_strategy": "S3", "visibility": "V3", "author": "x"}))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["fields"][0]["field"], "supplier_strategy");
    let (s, _) = a
        .post("/experiments/ghost/decision", json!({"supplier_strategy": "S2", "visibility": "V3", "author": "x"}))
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[test]
fn schema_document_is_current() {
    let path = format!("{}/../../docs/openapi.json", env!("CARGO_MANIFEST_DIR"));
    let generated = serde_json::to_string_pretty(&openapi()).unwrap() + "\n";
    if std::env::var_os("COPLAN_WRITE_DOCS").is_some() {
        std::fs::create_dir_all(std::path::Path::new(&path).parent().unwrap()).unwrap();
        std::fs::write(&path, &generated).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).expect("docs/openapi.json exists");
    assert_eq!(on_disk, generated, "regenerate with COPLAN_WRITE_DOCS=1");
    let v: Value = serde_json::from_str(&on_disk).unwrap();
    for p in [
        "/health",
        "/experiments",
        "/experiments/{id}/results",
        "/experiments/{id}/traces/{scenario}",
        "/experiments/{id}/risk",
        "/experiments/{id}/decision",
        "/whatif",
    ] {
        assert!(v["paths"].get(p).is_some(), "{p}");
    }
}

#[tokio::test]
async fn busy_port_is_reported() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    match serve(dir.path().to_path_buf(), &addr).await {
        Err(ServiceError::Bind { .. }) => {}
        other => panic!("expected a bind error, got {other:?}"),
    }
}
