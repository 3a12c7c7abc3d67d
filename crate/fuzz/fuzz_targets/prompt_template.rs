//! Prompt-template loader (TOML front matter plus body). Accepted files
//! must carry each placeholder exactly once; that is the precondition the
//! renderer relies on.

#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::classify::PromptTemplate;

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".prompt")
        .tempfile()
        .expect("create temp file");
    file.write_all(data).expect("write temp file");
    if let Ok(template) = PromptTemplate::load(file.path()) {
        for placeholder in ["{{instruction}}", "{{notebook}}", "{{taxonomy}}"] {
            assert_eq!(
                template.body.matches(placeholder).count(),
                1,
                "loader accepted a template with a bad {placeholder} count"
            );
        }
    }
});
