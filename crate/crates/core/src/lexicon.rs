//! Word lists: OCR dictionary construction, non-word rate, and a
//! symmetric-delete spelling corrector.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::metrics::levenshtein_chars;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Modern,
    HistoricalAdded,
    Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermInfo {
    pub provenance: Provenance,
    pub frequency: u64,
}

/// Ordered term set. Exact lookups are case-sensitive; [`Lexicon::contains_folded`]
/// ignores case.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    terms: IndexMap<String, TermInfo>,
    folded: HashSet<String>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a term; returns false (and keeps the first entry) on duplicates.
    pub fn insert(&mut self, term: impl Into<String>, provenance: Provenance, frequency: u64) -> bool {
        let term = term.into();
        if self.terms.contains_key(&term) {
            return false;
        }
        self.folded.insert(term.to_lowercase());
        self.terms.insert(term, TermInfo { provenance, frequency });
        true
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn contains_folded(&self, term: &str) -> bool {
        self.folded.contains(&term.to_lowercase())
    }

    pub fn info(&self, term: &str) -> Option<TermInfo> {
        self.terms.get(term).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, TermInfo)> {
        self.terms.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.terms.values().filter(|i| i.provenance == provenance).count()
    }

    /// Parses the lexicon text format: one term per line, optional
    /// tab-separated frequency, `#` starts a comment line.
    pub fn parse<R: BufRead>(reader: R, provenance: Provenance) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (term, freq) in parse_entries(reader)? {
            lex.insert(term, provenance, freq.unwrap_or(0));
        }
        Ok(lex)
    }

    pub fn load(path: &Path, provenance: Provenance) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(f), provenance)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (term, info) in &self.terms {
            writeln!(w, "{term}\t{}", info.frequency)?;
        }
        Ok(())
    }
}

/// Reads `term[\tfrequency]` lines, skipping blanks and `#` comments.
pub fn parse_entries<R: BufRead>(reader: R) -> Result<Vec<(String, Option<u64>)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format { what: "lexicon", msg: e.to_string() })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let term = parts.next().unwrap_or_default().trim();
        let freq = match parts.next() {
            Some(f) => Some(
                f.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Format { what: "lexicon", msg: format!("line {}: bad frequency {f:?}: {e}", n + 1) })?,
            ),
            None => None,
        };
        if !term.is_empty() {
            out.push((term.to_string(), freq));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryParams {
    pub k_modern: usize,
    pub k_historical: usize,
}

impl Default for DictionaryParams {
    fn default() -> Self {
        DictionaryParams { k_modern: 25_000, k_historical: 500 }
    }
}

/// Bookkeeping for [`build_ocr_dictionary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryReport {
    pub modern_considered: usize,
    pub modern_removed: usize,
    pub modern_kept: usize,
    pub historical_added: usize,
    pub extras_added: usize,
    pub total: usize,
}

/// Builds the OCR dictionary.
///
/// 1. take the `k_modern` highest-ranked modern words;
/// 2. drop those never seen in the historical sample;
/// 3. add the `k_historical` most frequent historical words outside the
///    modern top list (ties broken lexicographically);
/// 4. add the extras.
pub fn build_ocr_dictionary(
    modern_ranked: &[(String, u64)],
    historical_counts: &HashMap<String, u64>,
    extras: &[String],
    params: &DictionaryParams,
) -> Result<(Lexicon, DictionaryReport)> {
    if modern_ranked.len() < params.k_modern {
        return Err(Error::NotEnoughModernWords { needed: params.k_modern, got: modern_ranked.len() });
    }
    let top = &modern_ranked[..params.k_modern];
    let top_set: HashSet<&str> = top.iter().map(|(w, _)| w.as_str()).collect();

    let mut lex = Lexicon::new();
    let mut removed = 0;
    for (word, freq) in top {
        if historical_counts.get(word).copied().unwrap_or(0) == 0 {
            removed += 1;
        } else {
            lex.insert(word.clone(), Provenance::Modern, *freq);
        }
    }
    let modern_kept = lex.len();

    let mut hist: Vec<(&String, u64)> =
        historical_counts.iter().filter(|(w, c)| **c > 0 && !top_set.contains(w.as_str())).map(|(w, c)| (w, *c)).collect();
    hist.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut historical_added = 0;
    for (word, count) in hist.into_iter().take(params.k_historical) {
        if lex.insert(word.clone(), Provenance::HistoricalAdded, count) {
            historical_added += 1;
        }
    }

    let mut extras_added = 0;
    for e in extras {
        if lex.insert(e.clone(), Provenance::Extra, 0) {
            extras_added += 1;
        }
    }
    let report = DictionaryReport {
        modern_considered: params.k_modern,
        modern_removed: removed,
        modern_kept,
        historical_added,
        extras_added,
        total: lex.len(),
    };
    Ok((lex, report))
}

fn is_numeric(token: &str) -> bool {
    token.chars().any(|c| c.is_ascii_digit()) && token.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.')
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Tokens counted by [`non_word_rate`]: whitespace split, edge punctuation
/// stripped, empty and numeric tokens dropped.
pub fn word_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().map(strip_punct).filter(|t| !t.is_empty() && !is_numeric(t))
}

/// Share of tokens absent from `lex` (case-insensitive). Zero for no tokens.
pub fn non_word_rate(text: &str, lex: &Lexicon) -> f64 {
    let mut total = 0usize;
    let mut missing = 0usize;
    for t in word_tokens(text) {
        total += 1;
        if !lex.contains_folded(t) {
            missing += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        missing as f64 / total as f64
    }
}

/// Every string obtainable from `word` by deleting up to `max` characters,
/// including `word` itself.
pub fn deletes(word: &str, max: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    out.insert(word.to_string());
    let mut frontier = vec![word.chars().collect::<Vec<char>>()];
    for _ in 0..max {
        let mut next = Vec::new();
        for w in &frontier {
            for i in 0..w.len() {
                let mut v = w.clone();
                v.remove(i);
                let s: String = v.iter().collect();
                if out.insert(s) {
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    out
}

/// Symmetric-delete candidate index over the lowercased lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpellIndex {
    max_edit: usize,
    terms: Vec<String>,
    freqs: Vec<u64>,
    known: HashSet<String>,
    deletes: HashMap<String, Vec<u32>>,
}

impl SpellIndex {
    pub fn build(lex: &Lexicon, max_edit: usize) -> Result<Self> {
        if !(1..=2).contains(&max_edit) {
            return Err(Error::MaxEdit(max_edit));
        }
        let mut by_term: IndexMap<String, u64> = IndexMap::new();
        for (t, info) in lex.iter() {
            let f = by_term.entry(t.to_lowercase()).or_insert(0);
            *f = (*f).max(info.frequency);
        }
        let mut idx = SpellIndex {
            max_edit,
            terms: Vec::with_capacity(by_term.len()),
            freqs: Vec::with_capacity(by_term.len()),
            known: HashSet::with_capacity(by_term.len()),
            deletes: HashMap::new(),
        };
        for (i, (term, freq)) in by_term.into_iter().enumerate() {
            for d in deletes(&term, max_edit) {
                idx.deletes.entry(d).or_default().push(i as u32);
            }
            idx.known.insert(term.clone());
            idx.terms.push(term);
            idx.freqs.push(freq);
        }
        Ok(idx)
    }

    pub fn max_edit(&self) -> usize {
        self.max_edit
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms reachable from `variant` by the deletes map.
    pub fn candidates_for_variant(&self, variant: &str) -> Vec<&str> {
        self.deletes.get(variant).map(|v| v.iter().map(|&i| self.terms[i as usize].as_str()).collect()).unwrap_or_default()
    }

    pub fn variant_count(&self) -> usize {
        self.deletes.len()
    }

    /// Best lowercase correction within `max_edit`: smallest distance, then
    /// highest frequency, then lexicographic.
    pub fn lookup(&self, lowered: &str) -> Option<(&str, usize)> {
        let q: Vec<char> = lowered.chars().collect();
        let mut seen = HashSet::new();
        let mut best: Option<(usize, u64, &str)> = None;
        for d in deletes(lowered, self.max_edit) {
            let Some(ids) = self.deletes.get(&d) else { continue };
            for &i in ids {
                if !seen.insert(i) {
                    continue;
                }
                let term = self.terms[i as usize].as_str();
                let t: Vec<char> = term.chars().collect();
                if t.len().abs_diff(q.len()) > self.max_edit {
                    continue;
                }
                let dist = levenshtein_chars(&q, &t);
                if dist > self.max_edit {
                    continue;
                }
                let cand = (dist, self.freqs[i as usize], term);
                let better = match best {
                    None => true,
                    Some((bd, bf, bt)) => dist < bd || (dist == bd && (cand.1 > bf || (cand.1 == bf && term < bt))),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        best.map(|(d, _, t)| (t, d))
    }

    /// Corrects one token, keeping its case pattern. Known tokens and tokens
    /// without a candidate come back unchanged.
    pub fn correct(&self, token: &str) -> String {
        let lowered = token.to_lowercase();
        if self.known.contains(&lowered) {
            return token.to_string();
        }
        match self.lookup(&lowered) {
            Some((term, _)) => apply_case(token, term),
            None => token.to_string(),
        }
    }

    /// Token-wise correction of running text. Whitespace and edge punctuation
    /// are preserved; numeric tokens are left alone.
    pub fn correct_text(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while !rest.is_empty() {
            let ws_end = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
            out.push_str(&rest[..ws_end]);
            rest = &rest[ws_end..];
            let tok_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let token = &rest[..tok_end];
            rest = &rest[tok_end..];
            let core = strip_punct(token);
            if core.is_empty() || is_numeric(core) {
                out.push_str(token);
                continue;
            }
            let start = token.find(core).unwrap_or(0);
            out.push_str(&token[..start]);
            out.push_str(&self.correct(core));
            out.push_str(&token[start + core.len()..]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CasePattern {
    Upper,
    Capitalized,
    Lower,
}

fn case_pattern(token: &str) -> CasePattern {
    let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        return CasePattern::Lower;
    }
    if letters.iter().all(|c| c.is_uppercase()) {
        if letters.len() == 1 && token.chars().count() > 1 {
            CasePattern::Capitalized
        } else {
            CasePattern::Upper
        }
    } else if letters[0].is_uppercase() {
        CasePattern::Capitalized
    } else {
        CasePattern::Lower
    }
}

fn apply_case(original: &str, lowered: &str) -> String {
    match case_pattern(original) {
        CasePattern::Upper => lowered.to_uppercase(),
        CasePattern::Lower => lowered.to_string(),
        CasePattern::Capitalized => {
            let mut c = lowered.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        }
    }
}
