//! Replay-cassette loading on arbitrary bytes: building a replay client
//! parses the whole cassette up front and must never crash.

#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::inference::{EndpointConfig, InferenceClient, ReplayMode};

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".jsonl")
        .tempfile()
        .expect("temp file");
    file.write_all(data).expect("write fuzz input");
    let config = EndpointConfig {
        base_url: "http://replay.invalid".to_string(),
        model: "fuzz-model".to_string(),
        timeout_ms: 1000,
        auth_env: None,
        mode: ReplayMode::Replay,
        cassette_path: Some(file.path().to_path_buf()),
    };
    let _ = InferenceClient::new(config);
});
