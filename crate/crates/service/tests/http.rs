use std::net::SocketAddr;
use std::path::Path;

use mmal_core::harness::{
    generate_synthetic, load_events, replay, save_scenario, EventRecord, Response, Scenario, SyntheticSpec,
};
use mmal_service::{bind, router, Service, ServiceConfig, LOCALHOST};
use reqwest::StatusCode;
use serde_json::{json, Value};

fn scenario(dir: &Path, n_cars: usize) -> (Scenario, Vec<EventRecord>) {
    let (s, events) = generate_synthetic(&SyntheticSpec {
        n_cars,
        target_occupancy: 20,
        ..SyntheticSpec::default()
    });
    save_scenario(dir, &s).unwrap();
    (s, events)
}

async fn start(dir: &Path, log: &Path) -> SocketAddr {
    let (addr, server) = bind(ServiceConfig {
        scenario_dir: dir.to_path_buf(),
        decision_log: Some(log.to_path_buf()),
        host: LOCALHOST,
        port: 0,
    })
    .await
    .unwrap();
    tokio::spawn(server);
    let client = reqwest::Client::new();
    loop {
        let r = client.get(format!("http://{addr}/status")).send().await.unwrap();
        if r.status() == StatusCode::OK {
            return addr;
        }
        assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
}

async fn post(client: &reqwest::Client, addr: SocketAddr, path: &str, body: Value) -> (StatusCode, Value) {
    let r = client.post(format!("http://{addr}{path}")).json(&body).send().await.unwrap();
    let code = r.status();
    (code, r.json().await.unwrap())
}

#[tokio::test]
async fn loading_service_answers_503() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(Service::loading())).await });
    let client = reqwest::Client::new();
    let r = client.get(format!("http://{addr}/status")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    let (code, _) = post(&client, addr, "/dequeue", json!({"timestamp": 0})).await;
    assert_eq!(code, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn endpoints_map_controller_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = scenario(dir.path(), 30);
    let log = dir.path().join("decisions.jsonl");
    let addr = start(dir.path(), &log).await;
    let client = reqwest::Client::new();

    let status: Value = client.get(format!("http://{addr}/status")).send().await.unwrap().json().await.unwrap();
    assert_eq!(status["occupancy"], 0);
    assert_eq!(status["pool_size"], s.catalog.orders.len());

    let (code, body) = post(&client, addr, "/dequeue", json!({"timestamp": "2023-05-01T00:00:00Z"})).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert_eq!(body["code"], "NoEligibleHead");

    let (code, body) = post(
        &client,
        addr,
        "/enqueue",
        json!({"car_id": "c1", "body_type": "wagon", "timestamp": "2023-05-01T00:01:00Z", "available_lanes": [7]}),
    )
    .await;
    assert_eq!(code, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "enqueued");
    assert_eq!(body["lane"], 7);

    let (code, body) = post(&client, addr, "/substitute", json!({"car_id": "c1", "timestamp": "2023-05-01T00:02:00Z"})).await;
    assert_eq!(code, StatusCode::OK, "{body}");
    assert_eq!(body["car_id"], "c1");

    let (code, _) = post(&client, addr, "/event", json!({"kind": "lane_lock_changed", "lane": 3, "locked": true})).await;
    assert_eq!(code, StatusCode::OK);
    let status: Value = client.get(format!("http://{addr}/status")).send().await.unwrap().json().await.unwrap();
    assert_eq!(status["locked_lanes"], json!([3]));
    assert_eq!(status["emitted"], 1);

    // every answered request is in the log, rejected ones included
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
}

#[tokio::test]
async fn malformed_payloads_are_400() {
    let dir = tempfile::tempdir().unwrap();
    scenario(dir.path(), 10);
    let log = dir.path().join("decisions.jsonl");
    let addr = start(dir.path(), &log).await;
    let client = reqwest::Client::new();
    for (path, body) in [
        ("/enqueue", json!({"car_id": "c1"})),
        ("/dequeue", json!({"timestamp": "yesterday"})),
        ("/dequeue", json!({"timestamp": 0, "colour": "R"})),
        ("/event", json!({"kind": "dequeue_request", "timestamp": 0})),
    ] {
        let (code, body) = post(&client, addr, path, body).await;
        assert_eq!(code, StatusCode::BAD_REQUEST, "{path} {body}");
    }
    let r = client
        .post(format!("http://{addr}/enqueue"))
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "");
}

#[tokio::test]
async fn concurrent_requests_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = scenario(dir.path(), 40);
    let log = dir.path().join("decisions.jsonl");
    let addr = start(dir.path(), &log).await;
    let client = reqwest::Client::new();
    let requests = (0..24).map(|i| {
        let client = client.clone();
        async move {
            post(
                &client,
                addr,
                "/enqueue",
                json!({"car_id": format!("c{i}"), "body_type": "limousine", "timestamp": 1000}),
            )
            .await
        }
    });
    let answers = futures::future::join_all(requests).await;
    assert!(answers.iter().all(|(c, _)| *c == StatusCode::OK));

    let lines: Vec<Value> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let versions: Vec<u64> = lines.iter().map(|l| l["response"]["version"].as_u64().unwrap()).collect();
    assert_eq!(versions, (1..=24).collect::<Vec<_>>());

    // the log order is a sequential order that reproduces every answer
    let events = load_events(&log).unwrap();
    let out = replay(&events, s.compile().unwrap(), s.config.buffer, s.config.controller().unwrap()).unwrap();
    let answered: Vec<Value> = lines.iter().map(|l| l["response"].clone()).collect();
    let replayed: Vec<Value> = out.log.iter().map(|e| serde_json::to_value(&e.response).unwrap()).collect();
    assert_eq!(answered, replayed);
}

#[tokio::test]
async fn decision_log_replays_to_same_leaving_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let (s, events) = scenario(dir.path(), 80);
    let log = dir.path().join("decisions.jsonl");
    let addr = start(dir.path(), &log).await;
    let client = reqwest::Client::new();
    let mut leaving = Vec::new();
    for e in &events {
        let (path, body) = match e {
            EventRecord::EnqueueRequest { .. } => ("/enqueue", serde_json::to_value(e).unwrap()),
            EventRecord::DequeueRequest { .. } => ("/dequeue", serde_json::to_value(e).unwrap()),
            _ => unreachable!(),
        };
        let mut body = body;
        body.as_object_mut().unwrap().remove("kind");
        let (code, answer) = post(&client, addr, path, body).await;
        assert_eq!(code, StatusCode::OK, "{answer}");
        if let Ok(Response::Dequeued { car_id, order_id, .. }) = serde_json::from_value(answer) {
            leaving.push((car_id, order_id));
        }
    }
    let out = replay(&load_events(&log).unwrap(), s.compile().unwrap(), s.config.buffer, s.config.controller().unwrap())
        .unwrap();
    let replayed: Vec<(String, String)> = out.leaving.iter().map(|e| (e.car_id.clone(), e.order_id.clone())).collect();
    assert_eq!(replayed, leaving);
    assert_eq!(leaving.len(), 80);
}
