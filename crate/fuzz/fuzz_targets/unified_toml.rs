//! Unified-taxonomy TOML loader. Accepted files must survive a serialize
//! and reload round trip unchanged, and every group must be reachable
//! through headword lookup.

#![no_main]

use std::io::Write;

use libfuzzer_sys::fuzz_target;
use stagekit::taxonomy::UnifiedTaxonomy;

fuzz_target!(|data: &[u8]| {
    let mut file = tempfile::Builder::new()
        .suffix(".toml")
        .tempfile()
        .expect("create temp file");
    file.write_all(data).expect("write temp file");
    if let Ok(tax) = UnifiedTaxonomy::load(file.path()) {
        for group in tax.groups() {
            let found = tax.group_containing(&group.headword);
            assert!(
                found.is_some(),
                "group `{}` unreachable via its own headword",
                group.headword
            );
        }
        let _ = tax.provenance();
        let _ = tax.mutations();
        let reparsed: UnifiedTaxonomy =
            toml::from_str(&tax.to_toml()).expect("serialized taxonomy reparses");
        assert_eq!(
            reparsed, tax,
            "serialize/reload round trip changed the taxonomy"
        );
    }
});
