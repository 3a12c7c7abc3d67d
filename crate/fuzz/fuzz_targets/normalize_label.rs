//! Label normalization on arbitrary text. The documented contract is
//! idempotence: normalizing a headword the function itself produced must
//! yield that same headword again.

#![no_main]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use stagekit::classify::{normalize_label, Label};
use stagekit::taxonomy::{
    build_cross_mapping, unify, Stage, StageTaxonomy, UnifiedTaxonomy, UnifyOptions,
};

fn taxonomy() -> &'static UnifiedTaxonomy {
    static TAX: OnceLock<UnifiedTaxonomy> = OnceLock::new();
    TAX.get_or_init(|| {
        let stage = |headword: &str, aliases: &[&str]| Stage {
            headword: headword.to_string(),
            definition: format!("{headword} work"),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
        };
        let tax_a = StageTaxonomy::new(
            "a",
            vec![
                stage("Data Preparation", &["prep", "cleaning"]),
                stage("Modeling", &["model building"]),
                stage("Evaluation", &[]),
            ],
        )
        .unwrap();
        let tax_b = StageTaxonomy::new(
            "b",
            vec![stage("data_preprocessing", &[]), stage("modelling", &[])],
        )
        .unwrap();
        let mut map_a: BTreeMap<String, std::collections::BTreeSet<String>> = BTreeMap::new();
        map_a.insert(
            "Data Preparation".to_string(),
            ["data_preprocessing".to_string()].into_iter().collect(),
        );
        map_a.insert(
            "Modeling".to_string(),
            ["modelling".to_string()].into_iter().collect(),
        );
        let mapping = build_cross_mapping(&tax_a, &tax_b, &map_a, &BTreeMap::new()).unwrap();
        unify(
            &tax_a,
            &tax_b,
            &mapping,
            "fuzz-v1",
            &UnifyOptions::default(),
        )
        .unwrap()
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else {
        return;
    };
    let tax = taxonomy();
    if let Label::Stage(headword) = normalize_label(raw, tax) {
        assert!(
            tax.group(&headword).is_some(),
            "normalization produced `{headword}`, which is not a group headword"
        );
        assert_eq!(
            normalize_label(&headword, tax),
            Label::Stage(headword.clone()),
            "normalization is not idempotent over `{headword}`"
        );
    }
});
