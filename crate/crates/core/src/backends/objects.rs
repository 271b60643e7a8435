use super::{require_non_empty, BackendError, BackendId, BackendKind, ObjectExtractor};

const EDIT_VERBS: &[&str] = &[
    "turn", "make", "change", "replace", "convert", "transform", "swap", "edit", "add", "put",
    "render", "paint", "recolor", "restyle",
];

/// Words after which the edit target is named ("... into a red car").
const TARGET_MARKERS: &[&str] = &["into", "to", "with", "as"];

/// Words that end a trailing noun phrase when scanning backwards.
const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "into", "to", "with", "as", "of", "in", "on", "at", "for", "from", "by",
    "and", "or", "is", "are", "be", "it", "its", "that", "this", "so", "while", "wearing",
    "wear", "holding", "hold", "some",
];

const MAX_PHRASE_WORDS: usize = 3;

/// Rule-based primary-object extraction.
///
/// Lowercases the prompt, drops punctuation and a leading edit verb, keeps
/// the text after the last target marker (`into`, `to`, `with`, `as`) when
/// one follows the verb, then returns the trailing run of non-stop words
/// (at most three). `None` when nothing survives.
pub fn heuristic_primary_object(prompt: &str) -> Option<String> {
    let cleaned: String = prompt
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '\'' { c } else { ' ' })
        .collect();
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    if words.first().is_some_and(|w| EDIT_VERBS.contains(w)) {
        words.remove(0);
    }
    if let Some(pos) = words.iter().rposition(|w| TARGET_MARKERS.contains(w)) {
        if pos + 1 < words.len() {
            words.drain(..=pos);
        }
    }
    let mut phrase: Vec<&str> = words
        .iter()
        .rev()
        .take_while(|w| !STOP_WORDS.contains(w))
        .take(MAX_PHRASE_WORDS)
        .copied()
        .collect();
    phrase.reverse();
    if phrase.is_empty() {
        None
    } else {
        Some(phrase.join(" "))
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicObjectExtractor {
    id: BackendId,
}

impl Default for HeuristicObjectExtractor {
    fn default() -> Self {
        HeuristicObjectExtractor {
            id: BackendId::new(BackendKind::ObjectExtractor, "heuristic", "1"),
        }
    }
}

impl ObjectExtractor for HeuristicObjectExtractor {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn extract_primary_object(&self, edit_prompt: &str) -> Result<String, BackendError> {
        require_non_empty("edit prompt", edit_prompt)?;
        heuristic_primary_object(edit_prompt).ok_or(BackendError::ExtractionEmpty)
    }
}
