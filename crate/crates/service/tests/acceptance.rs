//! Acceptance check for the case service: prints one PASS/FAIL line and
//! exits non-zero on failure.

mod common;

use std::time::Instant;

use common::{week, Server};
use escalate_core::fixtures;
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

async fn send(req: reqwest::RequestBuilder) -> Result<(StatusCode, Vec<u8>), String> {
    let resp = req.send().await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.bytes().await.map_err(|e| e.to_string())?;
    Ok((status, bytes.to_vec()))
}

fn json_of(bytes: &[u8]) -> Result<Value, String> {
    serde_json::from_slice(bytes).map_err(|e| e.to_string())
}

fn posterior_bits(timeline: &Value) -> Vec<Vec<u64>> {
    timeline["steps"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|p| {
            p["posterior"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|x| x.as_f64().unwrap_or(f64::NAN).to_bits())
                .collect()
        })
        .collect()
}

async fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let client = Client::new();
    let server = Server::start(dir.path());

    let (_, m) = send(client.post(server.url("/models")).body(fixtures::VEHICLE_JSON)).await?;
    let model_id = json_of(&m)?["model_id"].clone();
    let (_, c) = send(client.post(server.url("/cases")).json(&json!({"model_id": model_id}))).await?;
    let case = json_of(&c)?["case_id"].as_str().ok_or("no case id")?.to_string();
    let obs_url = |s: &Server| s.url(&format!("/cases/{case}/observations"));
    let tl_url = |s: &Server| s.url(&format!("/cases/{case}/timeline"));

    for t in 1..=16 {
        let (status, body) = send(client.post(obs_url(&server)).json(&week(t))).await?;
        check(status == StatusCode::OK, format!("ingest t={t}: {status} {}", String::from_utf8_lossy(&body)))?;
    }
    let (status, _) = send(
        client
            .post(server.url(&format!("/cases/{case}/evidence")))
            .json(&json!({"t": 17, "tasks": {"ReconnoitreTargets": 1, "MoveToTarget": 0}})),
    )
    .await?;
    check(status == StatusCode::OK, format!("evidence: {status}"))?;
    let (_, before) = send(client.get(tl_url(&server))).await?;
    server.kill();

    let server = Server::start(dir.path());
    let (_, after) = send(client.get(tl_url(&server))).await?;
    let (b, a) = (json_of(&before)?, json_of(&after)?);
    check(posterior_bits(&b).len() == 17, "timeline before the crash is incomplete")?;
    check(posterior_bits(&b) == posterior_bits(&a), "replayed posteriors differ from the pre-crash ones")?;
    check(before == after, "replayed timeline response is not byte-identical")?;

    let mut conflicts = 0;
    let rounds = 20;
    for t in 18..18 + rounds {
        let mut x = week(t);
        let mut y = week(t);
        x["values"]["RadWebVisits"] = json!(0.5);
        y["values"]["RadWebVisits"] = json!(25.0);
        let (rx, ry) = tokio::join!(
            send(client.post(obs_url(&server)).json(&x)),
            send(client.post(obs_url(&server)).json(&y))
        );
        let mut codes = [rx?.0, ry?.0];
        codes.sort();
        check(
            codes == [StatusCode::OK, StatusCode::CONFLICT],
            format!("t={t}: statuses {codes:?}"),
        )?;
        conflicts += 1;
    }
    let (_, tl) = send(client.get(tl_url(&server))).await?;
    let steps = posterior_bits(&json_of(&tl)?).len();
    check(steps == 17 + rounds as usize, format!("{steps} steps after conflicting rounds"))?;

    Ok(format!(
        "17 ingests replayed bit-for-bit after SIGKILL; {conflicts}/{rounds} conflicting pairs gave one 200 and one 409; {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let outcome = rt.block_on(criterion_9());
    let name = "criterion 9 (service durability)";
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            std::process::exit(1);
        }
    }
}
