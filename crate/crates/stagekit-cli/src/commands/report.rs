use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::config::{resolve, LoadedConfig, ReportConfig};
use crate::manifest::RunManifest;
use crate::CliError;

fn load_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::io_data(path, e))?;
    text.parse::<Value>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn get<'a>(value: &'a Value, path: &[&str]) -> Option<&'a Value> {
    let mut cursor = value;
    for key in path {
        cursor = cursor.get(key)?;
    }
    Some(cursor)
}

fn fmt_num(value: &Value) -> String {
    match value {
        Value::Float(f) => format!("{f:.4}"),
        Value::Integer(i) => i.to_string(),
        other => other.to_string(),
    }
}

fn eval_section(out: &mut String, eval: &Value) {
    out.push_str("## Evaluation\n\n");
    if let Some(systems) = get(eval, &["systems"]).and_then(Value::as_array) {
        let names: Vec<&str> = systems.iter().filter_map(Value::as_str).collect();
        let _ = writeln!(out, "Systems: {}\n", names.join(", "));
    }
    if let Some(instr) = get(eval, &["instruction_eval"]) {
        out.push_str("### Instruction level\n\n");
        for (label, key) in [
            ("Instructions", "items"),
            ("Accuracy", "accuracy"),
            ("MCC", "mcc"),
            ("Multi-stage cells skipped", "multi_label_cells_skipped"),
        ] {
            if let Some(v) = get(instr, &[key]) {
                let _ = writeln!(out, "- {label}: {}", fmt_num(v));
            }
        }
        if let Some(classes) = get(instr, &["per_class"]).and_then(Value::as_array) {
            out.push_str("\n| Stage | Precision | Recall | F1 | Support |\n");
            out.push_str("|---|---|---|---|---|\n");
            for class in classes {
                let cell = |key: &str| get(class, &[key]).map(fmt_num).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    get(class, &["label"]).and_then(Value::as_str).unwrap_or(""),
                    cell("precision"),
                    cell("recall"),
                    cell("f1"),
                    cell("support"),
                );
            }
        }
        out.push('\n');
    }
    if let Some(cell) = get(eval, &["cell_eval"]) {
        out.push_str("### Cell level\n\n");
        for (label, key) in [
            ("Cells", "cells"),
            ("Exact-match rate", "exact_match_rate"),
            ("Mean Jaccard", "mean_jaccard"),
            ("Unlabeled cells", "unlabeled_cells"),
        ] {
            if let Some(v) = get(cell, &[key]) {
                let _ = writeln!(out, "- {label}: {}", fmt_num(v));
            }
        }
        out.push('\n');
    }
    for (title, key) in [
        ("Instruction-level comparison", "instruction_comparison"),
        ("Cell-level comparison", "cell_comparison"),
    ] {
        let Some(block) = get(eval, &[key]) else {
            continue;
        };
        let _ = writeln!(out, "### {title}\n");
        if let Some(q) = get(block, &["cochran_q"]) {
            let _ = writeln!(
                out,
                "- Cochran's Q: statistic {}, p {}",
                get(q, &["statistic"]).map(fmt_num).unwrap_or_default(),
                get(q, &["p_value"]).map(fmt_num).unwrap_or_default(),
            );
        }
        if let Some(pairs) = get(block, &["pairwise"]).and_then(Value::as_array) {
            out.push_str("\n| First | Second | Test | p | p (Holm) | Significant |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            for pair in pairs {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} |",
                    get(pair, &["first"]).and_then(Value::as_str).unwrap_or(""),
                    get(pair, &["second"]).and_then(Value::as_str).unwrap_or(""),
                    get(pair, &["result", "test_name"])
                        .and_then(Value::as_str)
                        .unwrap_or(""),
                    get(pair, &["result", "p_value"])
                        .map(fmt_num)
                        .unwrap_or_default(),
                    get(pair, &["p_adjusted"]).map(fmt_num).unwrap_or_default(),
                    get(pair, &["significant_adjusted"])
                        .and_then(Value::as_bool)
                        .map(|b| if b { "yes" } else { "no" })
                        .unwrap_or("?"),
                );
            }
        }
        out.push('\n');
    }
    if let Some(durations) = get(eval, &["durations"]) {
        out.push_str("### Timing\n\n");
        for (label, key) in [
            ("Predictions", "count"),
            ("Total ms", "total_ms"),
            ("Mean ms", "mean_ms"),
            ("Min ms", "min_ms"),
            ("Max ms", "max_ms"),
        ] {
            if let Some(v) = get(durations, &[key]) {
                let _ = writeln!(out, "- {label}: {}", fmt_num(v));
            }
        }
        out.push('\n');
    }
    if let Some(perplexity) = get(eval, &["perplexity"]) {
        out.push_str("### Perplexity\n\n");
        for (label, key) in [
            ("Scored predictions", "count"),
            ("Mean", "mean"),
            ("Min", "min"),
            ("Max", "max"),
        ] {
            if let Some(v) = get(perplexity, &[key]) {
                let _ = writeln!(out, "- {label}: {}", fmt_num(v));
            }
        }
        out.push('\n');
    }
}

fn insights_section(out: &mut String, insights: &Value) {
    out.push_str("## Insights\n\n");
    if let Some(freq) =
        get(insights, &["instruction_frequencies", "frequencies"]).and_then(Value::as_table)
    {
        out.push_str("### Stage distribution (instructions)\n\n");
        out.push_str("| Stage | Share |\n|---|---|\n");
        for (stage, share) in freq {
            let _ = writeln!(out, "| {stage} | {} |", fmt_num(share));
        }
        out.push('\n');
    }
    if let Some(patterns) = get(insights, &["patterns", "patterns"]).and_then(Value::as_array) {
        out.push_str("### Frequent stage patterns\n\n");
        out.push_str("| Pattern | Support | Notebooks |\n|---|---|---|\n");
        for pattern in patterns.iter().take(15) {
            let labels = get(pattern, &["labels"])
                .and_then(Value::as_array)
                .map(|a| {
                    a.iter()
                        .filter_map(Value::as_str)
                        .collect::<Vec<_>>()
                        .join(" -> ")
                })
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "| {labels} | {} | {} |",
                get(pattern, &["support"]).map(fmt_num).unwrap_or_default(),
                get(pattern, &["notebook_coverage"])
                    .map(fmt_num)
                    .unwrap_or_default(),
            );
        }
        out.push('\n');
    }
    if let Some(comparisons) = get(insights, &["comparisons"]).and_then(Value::as_array) {
        if !comparisons.is_empty() {
            out.push_str("### Reference comparisons\n\n");
            out.push_str("| Test | Statistic | p | Significant |\n|---|---|---|---|\n");
            for test in comparisons {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    get(test, &["test_name"])
                        .and_then(Value::as_str)
                        .unwrap_or(""),
                    get(test, &["statistic"]).map(fmt_num).unwrap_or_default(),
                    get(test, &["p_value"]).map(fmt_num).unwrap_or_default(),
                    get(test, &["significant"])
                        .and_then(Value::as_bool)
                        .map(|b| if b { "yes" } else { "no" })
                        .unwrap_or("?"),
                );
            }
            out.push('\n');
        }
    }
}

pub fn cmd_report(loaded: &LoadedConfig, output_override: Option<&Path>) -> Result<(), CliError> {
    let cfg: &ReportConfig = crate::config::require_section(loaded.file.report.as_ref(), "report")?;
    let base = &loaded.base_dir;
    if cfg.evaluation.is_none() && cfg.insights.is_none() {
        return Err(CliError::Usage(
            "[report] needs evaluation and/or insights artifacts to collate".into(),
        ));
    }

    let mut out = String::from("# Stage classification run report\n\n");
    let mut inputs: Vec<(String, PathBuf)> = Vec::new();

    if let Some(rel) = &cfg.evaluation {
        let path = resolve(base, rel);
        let value = load_value(&path)?;
        if let Some(version) = get(&value, &["taxonomy_version"]).and_then(Value::as_str) {
            let _ = writeln!(out, "Taxonomy version: `{version}`\n");
        }
        eval_section(&mut out, &value);
        inputs.push((rel.clone(), path));
    }
    if let Some(rel) = &cfg.insights {
        let path = resolve(base, rel);
        let value = load_value(&path)?;
        insights_section(&mut out, &value);
        inputs.push((rel.clone(), path));
    }

    let out_dir = output_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(base, &cfg.output_dir));
    super::ensure_output_dir(&out_dir)?;
    let out_path = out_dir.join("report.md");
    std::fs::write(&out_path, &out).map_err(|e| crate::io_data(&out_path, e))?;

    let mut manifest = RunManifest::new("report", &loaded.raw);
    for (label, path) in &inputs {
        manifest.add_input(label, path)?;
    }
    manifest.add_output(&out_path);
    manifest.write(&out_dir)?;

    println!("report -> {}", out_path.display());
    Ok(())
}
