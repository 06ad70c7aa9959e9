//! Start the service on a local port and play a game over HTTP.

use std::sync::Arc;

use serde_json::{json, Value};

use exag::service::{router, App, ServiceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ServiceConfig::default();
    let app = Arc::new(App::new(cfg.build_engine()?, cfg)?);
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    rt.spawn(async move { axum::serve(listener, router(app)).await });

    let client = reqwest::blocking::Client::new();
    let post = |path: &str, body: Value| -> Result<Value, reqwest::Error> {
        client.post(format!("{base}{path}")).json(&body).send()?.json()
    };
    let game = post("/games", json!({"worker_id": "demo"}))?;
    let id = game["session_id"].as_str().unwrap_or_default().to_string();
    println!("game {id}: mode {}, {} images", game["explanation_mode"], game["images"].as_array().map_or(0, Vec::len));

    let round = post(&format!("/games/{id}/questions"), json!({"text": "is there a dog?"}))?;
    println!("answer {} ({} points left)", round["answer"], round["points_remaining"]);
    if round["state"] == "awaiting_rating" {
        post(&format!("/games/{id}/ratings"), json!({"level": 4}))?;
    }
    let first = game["images"][0]["image_id"].clone();
    let out = post(&format!("/games/{id}/guess"), json!({"image_id": first}))?;
    println!("outcome {} score {} secret {}", out["outcome"], out["score"], out["secret_id"]);
    rt.shutdown_background();
    Ok(())
}
