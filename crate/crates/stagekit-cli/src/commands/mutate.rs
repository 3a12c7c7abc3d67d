use std::path::Path;

use serde::Deserialize;
use stagekit::taxonomy::{MutationSpec, UnifiedTaxonomy};

use crate::config::{resolve, LoadedConfig, MutateConfig};
use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Deserialize)]
struct SynonymFile {
    #[serde(rename = "mutation", default)]
    mutations: Vec<MutationSpec>,
}

pub fn cmd_mutate(loaded: &LoadedConfig, output_override: Option<&Path>) -> Result<(), CliError> {
    let cfg: &MutateConfig = crate::config::require_section(loaded.file.mutate.as_ref(), "mutate")?;
    let base = &loaded.base_dir;

    let tax_path = resolve(base, &cfg.taxonomy);
    let syn_path = resolve(base, &cfg.synonyms);
    let mut taxonomy = UnifiedTaxonomy::load(&tax_path)?;

    let text = std::fs::read_to_string(&syn_path).map_err(|e| crate::io_data(&syn_path, e))?;
    let parsed: SynonymFile = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", syn_path.display())))?;
    if parsed.mutations.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no [[mutation]] entries",
            syn_path.display()
        )));
    }

    let out_dir = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &cfg.output_dir));
    super::ensure_output_dir(&out_dir)?;

    let mut manifest = RunManifest::new("mutate", &loaded.raw);
    manifest.add_input(&cfg.taxonomy, &tax_path)?;
    manifest.add_input(&cfg.synonyms, &syn_path)?;

    for (i, spec) in parsed.mutations.iter().enumerate() {
        taxonomy = taxonomy.mutate(spec)?;
        let out_path = out_dir.join(format!("mutated_{}.toml", i + 1));
        std::fs::write(&out_path, taxonomy.to_toml()).map_err(|e| crate::io_data(&out_path, e))?;
        manifest.add_output(&out_path);
        println!(
            "applied {} => {} (chain index {}) -> {}",
            spec.target,
            spec.replacement,
            spec.index,
            out_path.display()
        );
    }

    manifest.taxonomy_version = Some(taxonomy.version.clone());
    manifest.write(&out_dir)?;
    println!("final version {}", taxonomy.version);
    Ok(())
}
