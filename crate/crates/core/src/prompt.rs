//! Language-level integration: which objects a query mentions, how their
//! descriptions refer to other objects, and the final dialogue prompt.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::describe::{DescriptionRecord, DescriptionSet};
use crate::fusion::SceneTokens;
use crate::model::{identifier_for, parse_identifier, Scene};

/// How injected descriptions refer to objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceStyle {
    /// Descriptions as generated.
    NameOnly,
    /// First mention of each object followed by its identifier.
    NameWithId,
    /// Every object name replaced by its identifier.
    #[default]
    IdOnly,
}

/// Which of the two integration levels are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntegrationFlags {
    /// Description embeddings enter the object tokens.
    pub embedding_fusion: bool,
    /// Descriptions of referenced objects are prepended to the user turn.
    pub prompt_injection: bool,
}

impl Default for IntegrationFlags {
    fn default() -> Self {
        Self {
            embedding_fusion: true,
            prompt_injection: true,
        }
    }
}

impl IntegrationFlags {
    pub const ALL: [IntegrationFlags; 4] = [
        IntegrationFlags { embedding_fusion: false, prompt_injection: false },
        IntegrationFlags { embedding_fusion: true, prompt_injection: false },
        IntegrationFlags { embedding_fusion: false, prompt_injection: true },
        IntegrationFlags { embedding_fusion: true, prompt_injection: true },
    ];
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn starts_word(text: &[u8], at: usize) -> bool {
    at == 0 || !is_word_byte(text[at - 1])
}

fn ends_word(text: &[u8], at: usize) -> bool {
    at >= text.len() || !is_word_byte(text[at])
}

/// Case-insensitive match of `pattern` at byte `at`, anchored on word
/// boundaries. Returns the end offset.
fn match_at(text: &[u8], at: usize, pattern: &[u8], allow_plural: bool) -> Option<usize> {
    let end = at + pattern.len();
    if end > text.len() || !text[at..end].eq_ignore_ascii_case(pattern) {
        return None;
    }
    if ends_word(text, end) {
        return Some(end);
    }
    if allow_plural {
        for suffix in [&b"s"[..], b"es"] {
            let e = end + suffix.len();
            if e <= text.len() && text[end..e].eq_ignore_ascii_case(suffix) && ends_word(text, e) {
                return Some(e);
            }
        }
    }
    None
}

/// Category names and identifiers of a scene, for query scanning.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneVocabulary {
    /// Lowercased label -> objects bearing it, longest label first.
    labels: Vec<(String, Vec<usize>)>,
    indices: BTreeSet<usize>,
}

impl SceneVocabulary {
    pub fn new(scene: &Scene) -> Self {
        let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for o in scene.objects() {
            if let Some(l) = o.label() {
                by_label.entry(l.to_lowercase()).or_default().push(o.index());
            }
        }
        let mut labels: Vec<_> = by_label.into_iter().collect();
        labels.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Self {
            labels,
            indices: scene.objects().iter().map(|o| o.index()).collect(),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|(l, _)| l.as_str())
    }
}

/// Objects mentioned by identifier or category name, in order of first mention.
///
/// Matching is case-insensitive and longest-first on word boundaries; a
/// category also matches its plural ("chairs"), and then stands for every
/// object of that category.
pub fn detect_referenced_objects(query: &str, vocab: &SceneVocabulary) -> Vec<usize> {
    let bytes = query.as_bytes();
    let mut found = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |i: usize, found: &mut Vec<usize>| {
        if seen.insert(i) {
            found.push(i);
        }
    };
    let mut at = 0;
    while at < bytes.len() {
        if !query.is_char_boundary(at) {
            at += 1;
            continue;
        }
        if let Some(idx) = query.get(at..at + 8).and_then(parse_identifier) {
            if vocab.indices.contains(&idx) {
                push(idx, &mut found);
            }
            at += 8;
            continue;
        }
        if starts_word(bytes, at) {
            let hit = vocab
                .labels
                .iter()
                .find_map(|(label, objs)| match_at(bytes, at, label.as_bytes(), true).map(|e| (e, objs)));
            if let Some((end, objs)) = hit {
                for &i in objs {
                    push(i, &mut found);
                }
                at = end;
                continue;
            }
        }
        at += 1;
    }
    found
}

/// Name -> object lookup used to rewrite one description.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NameMap {
    /// Lowercased name and object, longest name first.
    entries: Vec<(String, usize)>,
}

impl NameMap {
    pub fn new(pairs: impl IntoIterator<Item = (String, usize)>) -> Self {
        let mut entries: Vec<(String, usize)> = Vec::new();
        for (name, idx) in pairs {
            let name = name.trim().to_lowercase();
            if !name.is_empty() && !entries.iter().any(|(n, _)| *n == name) {
                entries.push((name, idx));
            }
        }
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Self { entries }
    }

    /// Map for a description: the display names recorded at generation time,
    /// then bare category names, then every other category in the scene.
    ///
    /// A bare category shared by several annotated objects resolves to the
    /// key object when it has that category, otherwise to the lowest index.
    pub fn for_record(record: &DescriptionRecord, scene: &Scene) -> Self {
        let mut pairs: Vec<(String, usize)> = record.names.iter().map(|(n, &i)| (n.clone(), i)).collect();
        let key = record.object_index;
        let mut in_record: Vec<usize> = record.names.values().copied().collect();
        in_record.sort_unstable();
        let mut bare: BTreeMap<String, usize> = BTreeMap::new();
        for &i in &in_record {
            let Some(o) = scene.object(i) else { continue };
            let label = o.display_label().to_lowercase();
            let slot = bare.entry(label).or_insert(i);
            if i == key {
                *slot = i;
            }
        }
        if let Some(o) = scene.object(key) {
            bare.insert(o.display_label().to_lowercase(), key);
        }
        pairs.extend(bare);
        for o in scene.objects() {
            if let Some(l) = o.label() {
                pairs.push((l.to_string(), o.index()));
            }
        }
        Self::new(pairs)
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }

    fn find(&self, text: &[u8], at: usize) -> Option<(usize, usize)> {
        self.entries
            .iter()
            .find_map(|(name, idx)| match_at(text, at, name.as_bytes(), false).map(|e| (e, *idx)))
    }
}

pub fn rewrite_description(record: &DescriptionRecord, style: ReferenceStyle, names: &NameMap) -> String {
    rewrite_text(&record.text, style, names)
}

pub fn rewrite_text(text: &str, style: ReferenceStyle, names: &NameMap) -> String {
    if style == ReferenceStyle::NameOnly {
        return text.to_string();
    }
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len() + 16);
    let mut annotated = BTreeSet::new();
    let mut copied = 0;
    let mut at = 0;
    while at < bytes.len() {
        if !text.is_char_boundary(at) || !starts_word(bytes, at) {
            at += 1;
            continue;
        }
        let Some((end, idx)) = names.find(bytes, at) else {
            at += 1;
            continue;
        };
        out.push_str(&text[copied..at]);
        match style {
            ReferenceStyle::IdOnly => out.push_str(&identifier_for(idx)),
            ReferenceStyle::NameWithId => {
                out.push_str(&text[at..end]);
                if annotated.insert(idx) {
                    out.push_str(&format!(" ({})", identifier_for(idx)));
                }
            }
            ReferenceStyle::NameOnly => unreachable!(),
        }
        copied = end;
        at = end;
    }
    out.push_str(&text[copied..]);
    out
}

pub const DEFAULT_SYSTEM_TEXT: &str = "You answer questions about a 3D indoor scan. \
Objects are referred to by identifier tokens. Scene objects: [{scene}].";

/// Marks where an object's feature tokens are spliced in.
pub const FEATURE_PLACEHOLDER: &str = "<F>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// System message; `{scene}` is replaced by the scene token placeholder.
    pub system: String,
    pub user_prefix: String,
    pub assistant_prefix: String,
    /// Put injected descriptions before (true) or after the question.
    pub descriptions_first: bool,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system: DEFAULT_SYSTEM_TEXT.to_string(),
            user_prefix: "USER: ".to_string(),
            assistant_prefix: "ASSISTANT:".to_string(),
            descriptions_first: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub scene_token_placeholder: String,
    pub injected_descriptions: Vec<String>,
    pub user_text: String,
    pub full_text: String,
}

/// A prompt and the scene tokens that go with it.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPrompt {
    pub bundle: PromptBundle,
    pub referenced: Vec<usize>,
    pub tokens: Option<SceneTokens>,
}

/// `<OBJ001> <F> <OBJ002> <F> ...` in ascending object order.
pub fn scene_token_placeholder(scene: &Scene) -> String {
    scene
        .objects()
        .iter()
        .map(|o| format!("{} {FEATURE_PLACEHOLDER}", o.identifier()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds the dialogue prompt for one query.
///
/// `prompt_injection` only affects the text; `embedding_fusion` only affects
/// the returned tokens (text rows zeroed when off).
#[allow(clippy::too_many_arguments)]
pub fn assemble_prompt(
    scene: &Scene,
    tokens: Option<&SceneTokens>,
    records: &DescriptionSet,
    query: &str,
    style: ReferenceStyle,
    flags: IntegrationFlags,
    template: &PromptTemplate,
) -> AssembledPrompt {
    let placeholder = scene_token_placeholder(scene);
    let system_text = template.system.replace("{scene}", &placeholder);
    let referenced = detect_referenced_objects(query, &SceneVocabulary::new(scene));

    let mut injected = Vec::new();
    if flags.prompt_injection {
        for &idx in &referenced {
            match records.get(&idx) {
                Some(r) if !r.is_missing() => {
                    injected.push(rewrite_description(r, style, &NameMap::for_record(r, scene)));
                }
                _ => log::warn!("object {idx} is referenced but has no description"),
            }
        }
    }

    let user_text = query.trim().to_string();
    let mut turn: Vec<&str> = Vec::with_capacity(injected.len() + 1);
    if template.descriptions_first {
        turn.extend(injected.iter().map(String::as_str));
        turn.push(&user_text);
    } else {
        turn.push(&user_text);
        turn.extend(injected.iter().map(String::as_str));
    }
    let full_text = format!(
        "{system_text}\n{}{}\n{}",
        template.user_prefix,
        turn.join("\n"),
        template.assistant_prefix
    );

    let tokens = tokens.map(|t| {
        if flags.embedding_fusion {
            t.clone()
        } else {
            t.without_text_modality()
        }
    });

    AssembledPrompt {
        bundle: PromptBundle {
            system_text,
            scene_token_placeholder: placeholder,
            injected_descriptions: injected,
            user_text,
            full_text,
        },
        referenced,
        tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::describe::DescriptionStatus;
    use crate::model::{ObjectProposal, Point};

    fn scene(labels: &[(usize, &str)]) -> Scene {
        let objs = labels
            .iter()
            .map(|&(i, l)| ObjectProposal::new(i, vec![Point::at(0.0, 0.0, 0.0)], Some(l.into())).unwrap())
            .collect();
        Scene::new("s", objs, vec![]).unwrap()
    }

    fn record(index: usize, text: &str, names: &[(&str, usize)]) -> DescriptionRecord {
        DescriptionRecord {
            object_index: index,
            text: text.into(),
            source_view: Some("v0".into()),
            status: DescriptionStatus::Generated,
            names: names.iter().map(|&(n, i)| (n.to_string(), i)).collect(),
            extra: Default::default(),
        }
    }

    #[test]
    fn detect_single_table() {
        let s = scene(&[(3, "lamp"), (23, "table")]);
        let q = "Which identifier belongs to the long table with chairs around it?";
        assert_eq!(detect_referenced_objects(q, &SceneVocabulary::new(&s)), vec![23]);
    }

    #[test]
    fn detect_identifier() {
        let s = scene(&[(7, "cup")]);
        assert_eq!(detect_referenced_objects("<OBJ007> color?", &SceneVocabulary::new(&s)), vec![7]);
        // unknown identifiers are ignored
        assert!(detect_referenced_objects("<OBJ008> color?", &SceneVocabulary::new(&s)).is_empty());
    }

    #[test]
    fn detect_plural_then_table() {
        let s = scene(&[(1, "table"), (2, "chair"), (5, "chair"), (9, "chair")]);
        let v = SceneVocabulary::new(&s);
        assert_eq!(detect_referenced_objects("chairs near the table", &v), vec![2, 5, 9, 1]);
        assert_eq!(detect_referenced_objects("The Table and a CHAIR", &v), vec![1, 2, 5, 9]);
        assert!(detect_referenced_objects("a vegetable armchair", &v).is_empty());
    }

    #[test]
    fn detect_prefers_longest_label() {
        let s = scene(&[(1, "table"), (2, "coffee table")]);
        let v = SceneVocabulary::new(&s);
        assert_eq!(detect_referenced_objects("the coffee table", &v), vec![2]);
        assert_eq!(detect_referenced_objects("the table by the coffee table", &v), vec![1, 2]);
    }

    #[test]
    fn id_only_rewrite() {
        let s = scene(&[(4, "curtain"), (9, "window")]);
        let r = record(4, "The curtain is covering the window", &[("curtain", 4), ("window", 9)]);
        let map = NameMap::for_record(&r, &s);
        assert_eq!(rewrite_description(&r, ReferenceStyle::IdOnly, &map), "The <OBJ004> is covering the <OBJ009>");
        assert_eq!(rewrite_description(&r, ReferenceStyle::NameOnly, &map), r.text);
    }

    #[test]
    fn name_with_id_annotates_first_mention() {
        let s = scene(&[(2, "chair"), (3, "desk")]);
        let r = record(2, "the chair", &[("chair", 2)]);
        let map = NameMap::for_record(&r, &s);
        assert_eq!(rewrite_description(&r, ReferenceStyle::NameWithId, &map), "the chair (<OBJ002>)");
        let r = record(2, "The chair is near the desk. The chair is old.", &[("chair", 2), ("desk", 3)]);
        assert_eq!(
            rewrite_description(&r, ReferenceStyle::NameWithId, &NameMap::for_record(&r, &s)),
            "The chair (<OBJ002>) is near the desk (<OBJ003>). The chair is old."
        );
    }

    #[test]
    fn duplicate_names_resolve_through_recorded_map() {
        let s = scene(&[(2, "chair"), (5, "chair"), (7, "table")]);
        let r = record(
            5,
            "There is a chair 2 in the room. The chair 2 is near the chair 1. The chair is by the table.",
            &[("chair 1", 2), ("chair 2", 5), ("table", 7)],
        );
        let out = rewrite_description(&r, ReferenceStyle::IdOnly, &NameMap::for_record(&r, &s));
        assert_eq!(
            out,
            "There is a <OBJ005> in the room. The <OBJ005> is near the <OBJ002>. The <OBJ005> is by the <OBJ007>."
        );
    }

    #[test]
    fn word_boundaries_protect_other_words() {
        let s = scene(&[(1, "table")]);
        let r = record(1, "A vegetable on the Table, tables.", &[("table", 1)]);
        let out = rewrite_description(&r, ReferenceStyle::IdOnly, &NameMap::for_record(&r, &s));
        assert_eq!(out, "A vegetable on the <OBJ001>, tables.");
    }

    #[test]
    fn prompt_layout() {
        let s = scene(&[(1, "lamp"), (2, "desk")]);
        let mut records = DescriptionSet::new();
        records.insert(1, record(1, "The lamp is above the desk.", &[("lamp", 1), ("desk", 2)]));
        records.insert(2, DescriptionRecord::missing(2));
        let p = assemble_prompt(
            &s,
            None,
            &records,
            "What is on the desk next to the lamp?",
            ReferenceStyle::IdOnly,
            IntegrationFlags::default(),
            &PromptTemplate::default(),
        );
        assert_eq!(p.referenced, vec![2, 1]);
        assert_eq!(p.bundle.injected_descriptions, vec!["The <OBJ001> is above the <OBJ002>."]);
        assert_eq!(p.bundle.scene_token_placeholder, "<OBJ001> <F> <OBJ002> <F>");
        assert_eq!(
            p.bundle.full_text,
            "You answer questions about a 3D indoor scan. Objects are referred to by identifier tokens. \
             Scene objects: [<OBJ001> <F> <OBJ002> <F>].\n\
             USER: The <OBJ001> is above the <OBJ002>.\nWhat is on the desk next to the lamp?\nASSISTANT:"
        );

        let off = IntegrationFlags { prompt_injection: false, ..Default::default() };
        let p = assemble_prompt(&s, None, &records, "lamp?", ReferenceStyle::IdOnly, off, &PromptTemplate::default());
        assert!(p.bundle.injected_descriptions.is_empty());
    }
}
