use std::collections::BTreeMap;
use std::path::Path;

use stagekit::taxonomy::{
    build_cross_mapping, load_cross_mapping, unify, HeadwordRule, StageTaxonomy, UnifyOptions,
};

use crate::config::{resolve, LoadedConfig, UnifyConfig};
use crate::manifest::RunManifest;
use crate::CliError;

pub fn cmd_unify(loaded: &LoadedConfig, output_override: Option<&Path>) -> Result<(), CliError> {
    let cfg: &UnifyConfig = crate::config::require_section(loaded.file.unify.as_ref(), "unify")?;
    let base = &loaded.base_dir;

    let path_a = resolve(base, &cfg.taxonomy_a);
    let path_b = resolve(base, &cfg.taxonomy_b);
    let tax_a = StageTaxonomy::load(&path_a)?;
    let tax_b = StageTaxonomy::load(&path_b)?;

    let mapping = match &cfg.cross_mapping {
        Some(rel) => load_cross_mapping(&resolve(base, rel), &tax_a, &tax_b)?,
        None => build_cross_mapping(&tax_a, &tax_b, &BTreeMap::new(), &BTreeMap::new())?,
    };

    let options = UnifyOptions {
        headword_rule: if cfg.headword_overrides.is_empty() {
            HeadwordRule::MostFrequent
        } else {
            HeadwordRule::Overrides(cfg.headword_overrides.clone())
        },
        remove_unmatched: cfg.remove_unmatched.iter().cloned().collect(),
    };

    let unified = unify(&tax_a, &tax_b, &mapping, cfg.version.clone(), &options)?;

    let out_dir = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &cfg.output_dir));
    super::ensure_output_dir(&out_dir)?;
    let out_path = out_dir.join("unified.toml");
    std::fs::write(&out_path, unified.to_toml()).map_err(|e| crate::io_data(&out_path, e))?;

    let mut manifest = RunManifest::new("unify", &loaded.raw);
    manifest.taxonomy_version = Some(unified.version.clone());
    manifest.add_input(&cfg.taxonomy_a, &path_a)?;
    manifest.add_input(&cfg.taxonomy_b, &path_b)?;
    if let Some(rel) = &cfg.cross_mapping {
        manifest.add_input(rel, &resolve(base, rel))?;
    }
    manifest.add_output(&out_path);
    manifest.write(&out_dir)?;

    println!(
        "unified {} + {} into {} groups -> {}",
        tax_a.name(),
        tax_b.name(),
        unified.groups().len(),
        out_path.display()
    );
    Ok(())
}
