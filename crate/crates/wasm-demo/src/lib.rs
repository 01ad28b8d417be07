//! WebAssembly bindings for the static demo page in `www/`.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

#[wasm_bindgen]
pub fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Synthesizes one excerpt and returns its samples, log-mel frames and events as JSON.
#[wasm_bindgen]
pub fn tonal(seed: u32, duration: f64, event_rate: f64) -> Result<String, JsValue> {
    to_json(&demo::render_tonal(seed as u64, duration, event_rate).map_err(js_err)?)
}

/// `params` is a JSON object `{n, dim, shift, scale, seed}`.
#[wasm_bindgen]
pub fn clouds(params: &str) -> Result<String, JsValue> {
    let p: demo::CloudParams = serde_json::from_str(params).map_err(js_err)?;
    to_json(&demo::cloud_distances(&p).map_err(js_err)?)
}

#[wasm_bindgen]
pub fn sweep(params: &str) -> Result<String, JsValue> {
    let p: demo::CloudParams = serde_json::from_str(params).map_err(js_err)?;
    to_json(&demo::cloud_sweep(&p).map_err(js_err)?)
}
