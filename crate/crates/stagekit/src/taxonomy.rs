//! Stage taxonomies and the unification algebra.
//!
//! Two source taxonomies are merged by collecting an expert cross-mapping
//! into a set of pairs, identifying connected components of the bipartite
//! graph those pairs induce, and naming each component with a headword.
//! Unified labels can be projected back onto either source taxonomy, and
//! headwords can be mutated (replaced by curated synonyms) to probe how
//! sensitive a classifier is to wording.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("stage headword must be non-empty")]
    EmptyHeadword,
    #[error("taxonomy `{0}` has no stages")]
    EmptyTaxonomy(String),
    #[error(
        "duplicate headword `{headword}` in taxonomy `{taxonomy}` (headwords are case-insensitive)"
    )]
    DuplicateHeadword { taxonomy: String, headword: String },
    #[error("mapping references unknown stage `{stage}` in taxonomy `{taxonomy}`")]
    UnknownStage { taxonomy: String, stage: String },
    #[error("no unified group has headword `{0}`")]
    UnknownLabel(String),
    #[error("`{0}` is not a source taxonomy of this unified taxonomy")]
    UnknownSource(String),
    #[error("removal list names `{0}`, which is not an unmatched stage")]
    RemoveNotUnmatched(String),
    #[error("conflicting headword overrides for one group: `{0}` and `{1}`")]
    ConflictingOverride(String, String),
    #[error(
        "group headwords collide on `{0}` (case-insensitive); disambiguate via headword overrides"
    )]
    GroupHeadwordCollision(String),
    #[error("mutation replacement must differ from target `{0}`")]
    IdentityMutation(String),
    #[error("mutation index {0} outside 1..=3")]
    MutationIndexOutOfRange(u8),
    #[error(
        "mutation index {index} for `{target}` does not continue its chain (expected {expected})"
    )]
    MutationIndexMismatch {
        target: String,
        index: u8,
        expected: u8,
    },
    #[error("headword `{0}` has already been mutated 3 times")]
    MutationBudgetExhausted(String),
    #[error("mutating `{target}` to `{replacement}` collides with existing headword")]
    MutationCollision { target: String, replacement: String },
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse `{path}`: {message}")]
    Parse { path: String, message: String },
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

/// One stage of a taxonomy: a headword, a definition, and alternative
/// surface forms the classifier output may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub headword: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
}

/// An ordered, duplicate-free stage vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageTaxonomy {
    name: String,
    stages: Vec<Stage>,
}

impl StageTaxonomy {
    pub fn new(name: impl Into<String>, stages: Vec<Stage>) -> Result<Self, TaxonomyError> {
        let name = name.into();
        if stages.is_empty() {
            return Err(TaxonomyError::EmptyTaxonomy(name));
        }
        let mut seen = BTreeSet::new();
        for stage in &stages {
            if stage.headword.trim().is_empty() {
                return Err(TaxonomyError::EmptyHeadword);
            }
            if !seen.insert(fold(&stage.headword)) {
                return Err(TaxonomyError::DuplicateHeadword {
                    taxonomy: name,
                    headword: stage.headword.clone(),
                });
            }
        }
        Ok(Self { name, stages })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Case-insensitive stage lookup returning the canonical record.
    pub fn get(&self, headword: &str) -> Option<&Stage> {
        let key = fold(headword);
        self.stages.iter().find(|s| fold(&s.headword) == key)
    }

    pub fn contains(&self, headword: &str) -> bool {
        self.get(headword).is_some()
    }

    fn position(&self, headword: &str) -> Option<usize> {
        let key = fold(headword);
        self.stages.iter().position(|s| fold(&s.headword) == key)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        #[derive(Deserialize)]
        struct FileFormat {
            name: String,
            #[serde(rename = "stage")]
            stages: Vec<Stage>,
        }
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed: FileFormat = toml::from_str(&text).map_err(|e| TaxonomyError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(parsed.name, parsed.stages)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct FileFormat<'a> {
            name: &'a str,
            stage: &'a [Stage],
        }
        toml::to_string_pretty(&FileFormat {
            name: &self.name,
            stage: &self.stages,
        })
        .expect("taxonomy serializes")
    }
}

/// The collected expert mapping between two taxonomies: the union of both
/// directed mappings, held as unordered-but-canonical (a, b) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossMapping {
    pub source_a: String,
    pub source_b: String,
    pairs: BTreeSet<(String, String)>,
}

impl CrossMapping {
    pub fn pairs(&self) -> &BTreeSet<(String, String)> {
        &self.pairs
    }
}

/// Collects the two directed mappings into one pair set: a pair (a, b) is
/// present exactly when b appears in `map_a[a]` or a appears in `map_b[b]`.
/// Stage names are canonicalized to the surface form stored in the taxonomy,
/// so a pair contributed by both directions appears once.
pub fn build_cross_mapping(
    tax_a: &StageTaxonomy,
    tax_b: &StageTaxonomy,
    map_a: &BTreeMap<String, BTreeSet<String>>,
    map_b: &BTreeMap<String, BTreeSet<String>>,
) -> Result<CrossMapping, TaxonomyError> {
    let canon = |tax: &StageTaxonomy, name: &str| -> Result<String, TaxonomyError> {
        tax.get(name)
            .map(|s| s.headword.clone())
            .ok_or_else(|| TaxonomyError::UnknownStage {
                taxonomy: tax.name().to_string(),
                stage: name.to_string(),
            })
    };
    let mut pairs = BTreeSet::new();
    for (a, bs) in map_a {
        let a = canon(tax_a, a)?;
        for b in bs {
            pairs.insert((a.clone(), canon(tax_b, b)?));
        }
    }
    for (b, aas) in map_b {
        let b = canon(tax_b, b)?;
        for a in aas {
            pairs.insert((canon(tax_a, a)?, b.clone()));
        }
    }
    Ok(CrossMapping {
        source_a: tax_a.name().to_string(),
        source_b: tax_b.name().to_string(),
        pairs,
    })
}

/// How a group's headword is chosen.
#[derive(Debug, Clone, Default)]
pub enum HeadwordRule {
    /// Most frequent surface form among the group's member headwords across
    /// both taxonomies, ties broken lexicographically.
    #[default]
    MostFrequent,
    /// Explicit overrides keyed by a member headword (case-insensitive).
    /// A group with no override falls back to the most-frequent rule. The
    /// override value may be a fresh term absent from both taxonomies.
    Overrides(BTreeMap<String, String>),
}

#[derive(Debug, Clone, Default)]
pub struct UnifyOptions {
    pub headword_rule: HeadwordRule,
    /// Unmatched stages to drop instead of keeping as singleton groups.
    /// Naming a matched stage is an error.
    pub remove_unmatched: BTreeSet<String>,
}

/// One connected component of the bipartite mapping graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedGroup {
    pub headword: String,
    pub definition: String,
    pub members_a: BTreeSet<String>,
    pub members_b: BTreeSet<String>,
    /// Member headwords and member aliases other than the group headword;
    /// accepted by label normalization.
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProvenanceDecision {
    KeptSingleton,
    Removed,
}

/// Record of what happened to a stage that had no counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub stage: String,
    pub source: String,
    pub decision: ProvenanceDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedMutation {
    pub target: String,
    pub replacement: String,
    pub index: u8,
}

/// The merged taxonomy: groups partition both source stage sets (stages
/// absent from every group are recorded as removed in provenance).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedTaxonomy {
    pub version: String,
    pub source_a: String,
    pub source_b: String,
    #[serde(rename = "group")]
    groups: Vec<UnifiedGroup>,
    #[serde(rename = "provenance", default)]
    provenance: Vec<ProvenanceEntry>,
    #[serde(rename = "mutation", default)]
    mutations: Vec<AppliedMutation>,
}

/// A single headword replacement: `index` is the 1-based position in the
/// target headword's mutation chain, capped at 3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub target: String,
    pub replacement: String,
    pub index: u8,
}

/// Merges two taxonomies along a cross-mapping by connected components.
///
/// Groups correspond one-to-one with the connected components of the
/// bipartite graph over `tax_a`'s and `tax_b`'s stages whose edges are the
/// mapping pairs. Unmatched stages become singleton groups (or are removed
/// when listed in `options.remove_unmatched`); either way they are recorded
/// in provenance. Groups are ordered by first appearance in the sources.
pub fn unify(
    tax_a: &StageTaxonomy,
    tax_b: &StageTaxonomy,
    mapping: &CrossMapping,
    version: impl Into<String>,
    options: &UnifyOptions,
) -> Result<UnifiedTaxonomy, TaxonomyError> {
    let n_a = tax_a.len();
    let n_b = tax_b.len();
    // Node ids: 0..n_a are A stages, n_a..n_a+n_b are B stages.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_a + n_b];
    for (a, b) in mapping.pairs() {
        let ia = tax_a
            .position(a)
            .ok_or_else(|| TaxonomyError::UnknownStage {
                taxonomy: tax_a.name().to_string(),
                stage: a.clone(),
            })?;
        let ib = tax_b
            .position(b)
            .ok_or_else(|| TaxonomyError::UnknownStage {
                taxonomy: tax_b.name().to_string(),
                stage: b.clone(),
            })?;
        adjacency[ia].push(n_a + ib);
        adjacency[n_a + ib].push(ia);
    }

    // Breadth-first search per unvisited node; components in first-appearance
    // order (all of A in order, then whatever of B is still unseen).
    let mut visited = vec![false; n_a + n_b];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..n_a + n_b {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut component = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &next in &adjacency[node] {
                if !visited[next] {
                    visited[next] = true;
                    component.push(next);
                    queue.push_back(next);
                }
            }
        }
        components.push(component);
    }

    let overrides: Option<BTreeMap<String, String>> = match &options.headword_rule {
        HeadwordRule::MostFrequent => None,
        HeadwordRule::Overrides(map) => {
            Some(map.iter().map(|(k, v)| (fold(k), v.clone())).collect())
        }
    };
    let removals: BTreeSet<String> = options.remove_unmatched.iter().map(|s| fold(s)).collect();
    let mut removed_hit: BTreeSet<String> = BTreeSet::new();

    let mut groups = Vec::new();
    let mut provenance = Vec::new();
    let mut seen_headwords: BTreeSet<String> = BTreeSet::new();
    for component in components {
        let members_a: Vec<&Stage> = component
            .iter()
            .filter(|&&n| n < n_a)
            .map(|&n| &tax_a.stages()[n])
            .collect();
        let members_b: Vec<&Stage> = component
            .iter()
            .filter(|&&n| n >= n_a)
            .map(|&n| &tax_b.stages()[n - n_a])
            .collect();
        let members: Vec<&Stage> = members_a.iter().chain(members_b.iter()).copied().collect();

        let singleton = members.len() == 1;
        if singleton {
            let stage = members[0];
            let source = if members_a.is_empty() {
                tax_b.name()
            } else {
                tax_a.name()
            };
            if removals.contains(&fold(&stage.headword)) {
                removed_hit.insert(fold(&stage.headword));
                provenance.push(ProvenanceEntry {
                    stage: stage.headword.clone(),
                    source: source.to_string(),
                    decision: ProvenanceDecision::Removed,
                });
                continue;
            }
            provenance.push(ProvenanceEntry {
                stage: stage.headword.clone(),
                source: source.to_string(),
                decision: ProvenanceDecision::KeptSingleton,
            });
        }

        let headword = choose_headword(&members, overrides.as_ref())?;
        if !seen_headwords.insert(fold(&headword)) {
            return Err(TaxonomyError::GroupHeadwordCollision(headword));
        }
        let definition = members
            .iter()
            .find(|s| s.headword == headword)
            .map(|s| s.definition.clone())
            .unwrap_or_else(|| {
                let mut parts: Vec<&str> = members
                    .iter()
                    .map(|s| s.definition.as_str())
                    .filter(|d| !d.is_empty())
                    .collect();
                parts.dedup();
                parts.join(" ; ")
            });
        let mut aliases: BTreeSet<String> = BTreeSet::new();
        for stage in &members {
            if fold(&stage.headword) != fold(&headword) {
                aliases.insert(stage.headword.clone());
            }
            for alias in &stage.aliases {
                if fold(alias) != fold(&headword) {
                    aliases.insert(alias.clone());
                }
            }
        }
        groups.push(UnifiedGroup {
            headword,
            definition,
            members_a: members_a.iter().map(|s| s.headword.clone()).collect(),
            members_b: members_b.iter().map(|s| s.headword.clone()).collect(),
            aliases,
        });
    }

    for name in &removals {
        if !removed_hit.contains(name) {
            return Err(TaxonomyError::RemoveNotUnmatched(name.clone()));
        }
    }

    Ok(UnifiedTaxonomy {
        version: version.into(),
        source_a: tax_a.name().to_string(),
        source_b: tax_b.name().to_string(),
        groups,
        provenance,
        mutations: Vec::new(),
    })
}

fn choose_headword(
    members: &[&Stage],
    overrides: Option<&BTreeMap<String, String>>,
) -> Result<String, TaxonomyError> {
    if let Some(map) = overrides {
        let mut chosen: Option<String> = None;
        for stage in members {
            if let Some(over) = map.get(&fold(&stage.headword)) {
                match &chosen {
                    Some(existing) if existing != over => {
                        return Err(TaxonomyError::ConflictingOverride(
                            existing.clone(),
                            over.clone(),
                        ));
                    }
                    _ => chosen = Some(over.clone()),
                }
            }
        }
        if let Some(word) = chosen {
            if word.trim().is_empty() {
                return Err(TaxonomyError::EmptyHeadword);
            }
            return Ok(word);
        }
    }
    // Most frequent surface form, ties broken lexicographically.
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for stage in members {
        *counts.entry(stage.headword.as_str()).or_default() += 1;
    }
    let best = counts
        .iter()
        .max_by(|(wa, ca), (wb, cb)| ca.cmp(cb).then(wb.cmp(wa)))
        .map(|(w, _)| w.to_string())
        .expect("group has at least one member");
    Ok(best)
}

impl UnifiedTaxonomy {
    pub fn groups(&self) -> &[UnifiedGroup] {
        &self.groups
    }

    pub fn provenance(&self) -> &[ProvenanceEntry] {
        &self.provenance
    }

    pub fn mutations(&self) -> &[AppliedMutation] {
        &self.mutations
    }

    pub fn headwords(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.headword.as_str())
    }

    /// Case-insensitive group lookup by headword.
    pub fn group(&self, label: &str) -> Option<&UnifiedGroup> {
        let key = fold(label);
        self.groups.iter().find(|g| fold(&g.headword) == key)
    }

    /// Finds the group a source-taxonomy stage belongs to, matching the
    /// headword or either side's members case-insensitively. The inverse
    /// direction of `project`.
    pub fn group_containing(&self, name: &str) -> Option<&UnifiedGroup> {
        let key = fold(name);
        self.groups.iter().find(|g| {
            fold(&g.headword) == key
                || g.members_a.iter().any(|m| fold(m) == key)
                || g.members_b.iter().any(|m| fold(m) == key)
        })
    }

    /// Projects a unified label back onto one of the source taxonomies,
    /// returning that side's members (empty when the group has no
    /// counterpart there).
    pub fn project(&self, label: &str, target: &str) -> Result<&BTreeSet<String>, TaxonomyError> {
        let group = self
            .group(label)
            .ok_or_else(|| TaxonomyError::UnknownLabel(label.to_string()))?;
        if target == self.source_a {
            Ok(&group.members_a)
        } else if target == self.source_b {
            Ok(&group.members_b)
        } else {
            Err(TaxonomyError::UnknownSource(target.to_string()))
        }
    }

    /// Number of prior mutations in the chain ending at the group currently
    /// named `headword` (case-insensitive), reconstructed from the log.
    fn chain_length(&self, headword: &str) -> u8 {
        let mut counts: HashMap<String, u8> = HashMap::new();
        for m in &self.mutations {
            let n = counts.remove(&fold(&m.target)).unwrap_or(0);
            counts.insert(fold(&m.replacement), n + 1);
        }
        counts.get(&fold(headword)).copied().unwrap_or(0)
    }

    /// Replaces one group headword with a synonym, leaving group structure
    /// untouched. Each headword's chain allows at most 3 mutations; `index`
    /// must be the next link in that chain.
    pub fn mutate(&self, spec: &MutationSpec) -> Result<UnifiedTaxonomy, TaxonomyError> {
        if !(1..=3).contains(&spec.index) {
            return Err(TaxonomyError::MutationIndexOutOfRange(spec.index));
        }
        let target = self
            .group(&spec.target)
            .ok_or_else(|| TaxonomyError::UnknownLabel(spec.target.clone()))?
            .headword
            .clone();
        if fold(&spec.replacement) == fold(&target) {
            return Err(TaxonomyError::IdentityMutation(target));
        }
        if spec.replacement.trim().is_empty() {
            return Err(TaxonomyError::EmptyHeadword);
        }
        let prior = self.chain_length(&target);
        if prior >= 3 {
            return Err(TaxonomyError::MutationBudgetExhausted(target));
        }
        if spec.index != prior + 1 {
            return Err(TaxonomyError::MutationIndexMismatch {
                target,
                index: spec.index,
                expected: prior + 1,
            });
        }
        if self
            .groups
            .iter()
            .any(|g| fold(&g.headword) == fold(&spec.replacement))
        {
            return Err(TaxonomyError::MutationCollision {
                target,
                replacement: spec.replacement.clone(),
            });
        }

        let mut next = self.clone();
        for group in &mut next.groups {
            if fold(&group.headword) == fold(&target) {
                group.aliases.remove(&spec.replacement);
                group.headword = spec.replacement.clone();
            }
        }
        next.mutations.push(AppliedMutation {
            target: target.clone(),
            replacement: spec.replacement.clone(),
            index: spec.index,
        });
        next.version = format!(
            "{}+m{}:{}=>{}",
            self.version, spec.index, target, spec.replacement
        );
        Ok(next)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| TaxonomyError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("unified taxonomy serializes")
    }
}

/// Loads the `[f]`/`[g]` cross-mapping tables and collects them into pairs.
pub fn load_cross_mapping(
    path: &Path,
    tax_a: &StageTaxonomy,
    tax_b: &StageTaxonomy,
) -> Result<CrossMapping, TaxonomyError> {
    #[derive(Deserialize)]
    struct FileFormat {
        #[serde(default)]
        f: BTreeMap<String, BTreeSet<String>>,
        #[serde(default)]
        g: BTreeMap<String, BTreeSet<String>>,
    }
    let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: FileFormat = toml::from_str(&text).map_err(|e| TaxonomyError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    build_cross_mapping(tax_a, tax_b, &parsed.f, &parsed.g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(name: &str) -> Stage {
        Stage {
            headword: name.to_string(),
            definition: format!("definition of {name}"),
            aliases: BTreeSet::new(),
        }
    }

    fn tax(name: &str, words: &[&str]) -> StageTaxonomy {
        StageTaxonomy::new(name, words.iter().map(|w| stage(w)).collect()).unwrap()
    }

    fn pairs_of(m: &CrossMapping) -> Vec<(&str, &str)> {
        m.pairs()
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect()
    }

    #[test]
    fn taxonomy_rejects_duplicate_headwords_case_insensitively() {
        let err = StageTaxonomy::new("t", vec![stage("Modeling"), stage("modeling")]).unwrap_err();
        assert!(matches!(err, TaxonomyError::DuplicateHeadword { .. }));
    }

    #[test]
    fn taxonomy_rejects_empty() {
        assert!(matches!(
            StageTaxonomy::new("t", vec![]).unwrap_err(),
            TaxonomyError::EmptyTaxonomy(_)
        ));
    }

    #[test]
    fn cross_mapping_single_directed_edge_suffices() {
        let a = tax("a", &["a1", "a2"]);
        let b = tax("b", &["b1"]);
        let mut f = BTreeMap::new();
        f.insert("a1".to_string(), BTreeSet::from(["b1".to_string()]));
        let m = build_cross_mapping(&a, &b, &f, &BTreeMap::new()).unwrap();
        assert_eq!(pairs_of(&m), vec![("a1", "b1")]);
    }

    #[test]
    fn cross_mapping_empty_inputs_give_empty_pairs() {
        let a = tax("a", &["a1"]);
        let b = tax("b", &["b1"]);
        let m = build_cross_mapping(&a, &b, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert!(m.pairs().is_empty());
    }

    #[test]
    fn cross_mapping_deduplicates_pairs_present_in_both_directions() {
        // Brute-force enumeration of the defining predicate over A x B gives
        // exactly {(a1, b1)}; the set must not hold a duplicate.
        let a = tax("a", &["a1"]);
        let b = tax("b", &["b1"]);
        let mut f = BTreeMap::new();
        f.insert("a1".to_string(), BTreeSet::from(["b1".to_string()]));
        let mut g = BTreeMap::new();
        g.insert("b1".to_string(), BTreeSet::from(["a1".to_string()]));
        let m = build_cross_mapping(&a, &b, &f, &g).unwrap();
        assert_eq!(pairs_of(&m), vec![("a1", "b1")]);
    }

    #[test]
    fn cross_mapping_rejects_unknown_stage() {
        let a = tax("a", &["a1"]);
        let b = tax("b", &["b1"]);
        let mut f = BTreeMap::new();
        f.insert("a9".to_string(), BTreeSet::from(["b1".to_string()]));
        let err = build_cross_mapping(&a, &b, &f, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, TaxonomyError::UnknownStage { .. }));
    }

    fn mapping_from_pairs(
        a: &StageTaxonomy,
        b: &StageTaxonomy,
        pairs: &[(&str, &str)],
    ) -> CrossMapping {
        let mut f: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (x, y) in pairs {
            f.entry(x.to_string()).or_default().insert(y.to_string());
        }
        build_cross_mapping(a, b, &f, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn unify_empty_mapping_yields_all_singletons() {
        let a = tax(
            "a",
            &[
                "a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "a9", "a10", "a11",
            ],
        );
        let b = tax(
            "b",
            &["b1", "b2", "b3", "b4", "b5", "b6", "b7", "b8", "b9", "b10"],
        );
        let m = mapping_from_pairs(&a, &b, &[]);
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        assert_eq!(u.groups().len(), 21);
        assert!(u
            .groups()
            .iter()
            .all(|g| g.members_a.len() + g.members_b.len() == 1));
        assert_eq!(u.provenance().len(), 21);
    }

    #[test]
    fn unify_merges_connected_component() {
        // Hand-run BFS: a1-b1, a1-b2, a2-b2 form one component {a1,a2}x{b1,b2};
        // a3 and b3 stay singletons.
        let a = tax("a", &["a1", "a2", "a3"]);
        let b = tax("b", &["b1", "b2", "b3"]);
        let m = mapping_from_pairs(&a, &b, &[("a1", "b1"), ("a1", "b2"), ("a2", "b2")]);
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        assert_eq!(u.groups().len(), 3);
        let big = &u.groups()[0];
        assert_eq!(big.members_a.iter().collect::<Vec<_>>(), vec!["a1", "a2"]);
        assert_eq!(big.members_b.iter().collect::<Vec<_>>(), vec!["b1", "b2"]);
        assert_eq!(u.provenance().len(), 2);
    }

    #[test]
    fn unify_single_pair() {
        let a = tax("a", &["a1", "a2"]);
        let b = tax("b", &["b1"]);
        let m = mapping_from_pairs(&a, &b, &[("a1", "b1")]);
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        assert_eq!(u.groups().len(), 2);
        assert_eq!(u.groups()[0].members_a.len(), 1);
        assert_eq!(u.groups()[0].members_b.len(), 1);
    }

    #[test]
    fn unify_removal_is_logged_and_restricted_to_unmatched() {
        let a = tax("a", &["a1", "a2"]);
        let b = tax("b", &["b1"]);
        let m = mapping_from_pairs(&a, &b, &[("a1", "b1")]);
        let opts = UnifyOptions {
            remove_unmatched: BTreeSet::from(["a2".to_string()]),
            ..Default::default()
        };
        let u = unify(&a, &b, &m, "v0", &opts).unwrap();
        assert_eq!(u.groups().len(), 1);
        assert!(u
            .provenance()
            .iter()
            .any(|p| p.stage == "a2" && p.decision == ProvenanceDecision::Removed));

        let opts = UnifyOptions {
            remove_unmatched: BTreeSet::from(["a1".to_string()]),
            ..Default::default()
        };
        assert!(matches!(
            unify(&a, &b, &m, "v0", &opts).unwrap_err(),
            TaxonomyError::RemoveNotUnmatched(_)
        ));
    }

    #[test]
    fn unify_headword_most_frequent_then_lexicographic() {
        let a = tax("a", &["Modeling", "Training"]);
        let mut b_stage = stage("modelling");
        b_stage.aliases.insert("model building".to_string());
        let b = StageTaxonomy::new("b", vec![b_stage, stage("other")]).unwrap();
        let m = mapping_from_pairs(
            &a,
            &b,
            &[("Modeling", "modelling"), ("Training", "modelling")],
        );
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        // All member headwords occur once; lexicographically smallest wins.
        assert_eq!(u.groups()[0].headword, "Modeling");
        // Member headwords and aliases flow into the group alias set.
        assert!(u.groups()[0].aliases.contains("Training"));
        assert!(u.groups()[0].aliases.contains("modelling"));
        assert!(u.groups()[0].aliases.contains("model building"));
    }

    #[test]
    fn unify_honors_explicit_override_with_fresh_term() {
        let a = tax("a", &["a1"]);
        let b = tax("b", &["b1"]);
        let m = mapping_from_pairs(&a, &b, &[("a1", "b1")]);
        let opts = UnifyOptions {
            headword_rule: HeadwordRule::Overrides(BTreeMap::from([(
                "a1".to_string(),
                "Fresh Term".to_string(),
            )])),
            ..Default::default()
        };
        let u = unify(&a, &b, &m, "v0", &opts).unwrap();
        assert_eq!(u.groups()[0].headword, "Fresh Term");
        assert!(u.groups()[0].aliases.contains("a1"));
        assert!(u.groups()[0].aliases.contains("b1"));
    }

    #[test]
    fn unify_detects_group_headword_collision() {
        let a = tax("a", &["shared"]);
        let b = tax("b", &["Shared"]);
        let m = mapping_from_pairs(&a, &b, &[]);
        assert!(matches!(
            unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap_err(),
            TaxonomyError::GroupHeadwordCollision(_)
        ));
    }

    #[test]
    fn project_returns_target_side_members() {
        let a = tax("a", &["a1", "a2", "a3"]);
        let b = tax("b", &["b1", "b2", "b3"]);
        let m = mapping_from_pairs(&a, &b, &[("a1", "b2"), ("a2", "b2")]);
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        let label = u.groups()[0].headword.clone();
        let to_b = u.project(&label, "b").unwrap();
        assert_eq!(to_b.iter().collect::<Vec<_>>(), vec!["b2"]);
        let to_a = u.project(&label, "a").unwrap();
        assert_eq!(to_a.iter().collect::<Vec<_>>(), vec!["a1", "a2"]);
        // Singleton with no counterpart projects to the empty set.
        let empty = u.project("a3", "b").unwrap();
        assert!(empty.is_empty());

        assert!(matches!(
            u.project("nope", "b").unwrap_err(),
            TaxonomyError::UnknownLabel(_)
        ));
        assert!(matches!(
            u.project(&u.groups()[0].headword.clone(), "c").unwrap_err(),
            TaxonomyError::UnknownSource(_)
        ));
    }

    #[test]
    fn group_containing_inverts_project() {
        let a = tax("a", &["a1", "a2", "a3"]);
        let b = tax("b", &["b1", "b2", "b3"]);
        let m = mapping_from_pairs(&a, &b, &[("a1", "b2"), ("a2", "b2")]);
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        let merged = u.groups()[0].headword.clone();
        for member in ["a1", "a2", "b2", "A2"] {
            assert_eq!(u.group_containing(member).unwrap().headword, merged);
        }
        assert_eq!(u.group_containing("b1").unwrap().headword, "b1");
        assert!(u.group_containing("nope").is_none());
    }

    #[test]
    fn project_unify_consistency_on_worked_component() {
        let a = tax("a", &["a1", "a2", "a3"]);
        let b = tax("b", &["b1", "b2", "b3"]);
        let pairs = [("a1", "b1"), ("a1", "b2"), ("a2", "b2")];
        let m = mapping_from_pairs(&a, &b, &pairs);
        let u = unify(&a, &b, &m, "v0", &UnifyOptions::default()).unwrap();
        for (pa, pb) in pairs {
            let group = u
                .groups()
                .iter()
                .find(|g| g.members_a.contains(pa))
                .unwrap();
            assert!(u.project(&group.headword, "b").unwrap().contains(pb));
        }
    }

    fn small_unified() -> UnifiedTaxonomy {
        let a = tax("a", &["Modeling", "Evaluation"]);
        let b = tax("b", &["modelling", "scoring"]);
        let m = mapping_from_pairs(&a, &b, &[("Modeling", "modelling")]);
        unify(&a, &b, &m, "v1", &UnifyOptions::default()).unwrap()
    }

    #[test]
    fn mutate_replaces_only_the_headword() {
        let u = small_unified();
        let v = u
            .mutate(&MutationSpec {
                target: "Modeling".to_string(),
                replacement: "Model Building".to_string(),
                index: 1,
            })
            .unwrap();
        assert_eq!(v.groups()[0].headword, "Model Building");
        // Group structure identical.
        assert_eq!(v.groups().len(), u.groups().len());
        for (g_new, g_old) in v.groups().iter().zip(u.groups()) {
            assert_eq!(g_new.members_a, g_old.members_a);
            assert_eq!(g_new.members_b, g_old.members_b);
        }
        assert_eq!(v.version, "v1+m1:Modeling=>Model Building");
    }

    #[test]
    fn mutate_rejects_identity_and_collisions_and_unknown() {
        let u = small_unified();
        assert!(matches!(
            u.mutate(&MutationSpec {
                target: "Modeling".into(),
                replacement: "modeling".into(),
                index: 1
            })
            .unwrap_err(),
            TaxonomyError::IdentityMutation(_)
        ));
        assert!(matches!(
            u.mutate(&MutationSpec {
                target: "Modeling".into(),
                replacement: "Evaluation".into(),
                index: 1
            })
            .unwrap_err(),
            TaxonomyError::MutationCollision { .. }
        ));
        assert!(matches!(
            u.mutate(&MutationSpec {
                target: "Nope".into(),
                replacement: "X".into(),
                index: 1
            })
            .unwrap_err(),
            TaxonomyError::UnknownLabel(_)
        ));
        assert!(matches!(
            u.mutate(&MutationSpec {
                target: "Modeling".into(),
                replacement: "X".into(),
                index: 4
            })
            .unwrap_err(),
            TaxonomyError::MutationIndexOutOfRange(4)
        ));
    }

    #[test]
    fn mutate_chain_caps_at_three_per_headword() {
        let u = small_unified();
        let m1 = u
            .mutate(&MutationSpec {
                target: "Modeling".into(),
                replacement: "M2".into(),
                index: 1,
            })
            .unwrap();
        let m2 = m1
            .mutate(&MutationSpec {
                target: "M2".into(),
                replacement: "M3".into(),
                index: 2,
            })
            .unwrap();
        let m3 = m2
            .mutate(&MutationSpec {
                target: "M3".into(),
                replacement: "M4".into(),
                index: 3,
            })
            .unwrap();
        let err = m3
            .mutate(&MutationSpec {
                target: "M4".into(),
                replacement: "M5".into(),
                index: 1,
            })
            .unwrap_err();
        assert!(matches!(err, TaxonomyError::MutationBudgetExhausted(_)));
        // A different headword still has its own budget.
        assert!(m3
            .mutate(&MutationSpec {
                target: "Evaluation".into(),
                replacement: "Assessment".into(),
                index: 1
            })
            .is_ok());
    }

    #[test]
    fn mutate_index_must_continue_the_chain() {
        let u = small_unified();
        let err = u
            .mutate(&MutationSpec {
                target: "Modeling".into(),
                replacement: "M2".into(),
                index: 2,
            })
            .unwrap_err();
        assert!(matches!(err, TaxonomyError::MutationIndexMismatch { .. }));
    }

    #[test]
    fn mutation_log_preserves_order_across_distinct_headwords() {
        // Replay of the mutation log: two mutations on distinct headwords
        // appear in application order in both the log and the version tag.
        let u = small_unified();
        let v = u
            .mutate(&MutationSpec {
                target: "Modeling".into(),
                replacement: "Model Building".into(),
                index: 1,
            })
            .unwrap()
            .mutate(&MutationSpec {
                target: "Evaluation".into(),
                replacement: "Assessment".into(),
                index: 1,
            })
            .unwrap();
        assert_eq!(v.mutations().len(), 2);
        assert_eq!(v.mutations()[0].target, "Modeling");
        assert_eq!(v.mutations()[1].target, "Evaluation");
        assert_eq!(
            v.version,
            "v1+m1:Modeling=>Model Building+m1:Evaluation=>Assessment"
        );
    }

    #[test]
    fn unified_taxonomy_roundtrips_through_toml() {
        let u = small_unified();
        let text = u.to_toml();
        let back: UnifiedTaxonomy = toml::from_str(&text).unwrap();
        assert_eq!(back, u);
    }
}
