//! Article cleaning, summarization, pruning and JSONL persistence.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use chrono::NaiveDateTime;
use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Company, RatingRecord};
use crate::error::{EsgError, Result};
use crate::month::YearMonth;

pub const MIN_ARTICLE_CHARS: usize = 200;
pub const SUMMARY_SENTENCES: usize = 5;
pub const MIN_ARTICLES_PER_COMPANY: usize = 5;

pub const DEFAULT_ERROR_PHRASES: &str = include_str!("../config/error_phrases.txt");

pub const LINK_PATTERN: &str = r"(?i)\b(?:https?://|ftp://|www\.)\S+";
pub const EMAIL_PATTERN: &str = r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}";
pub const DATE_TIME_PATTERNS: [&str; 5] = [
    // 2019-03-01, 2019-03-01T12:00:00Z
    r"\b\d{4}-\d{2}-\d{2}(?:[T ]\d{2}:\d{2}(?::\d{2})?(?:\.\d+)?(?:Z|[+\-]\d{2}:?\d{2})?)?\b",
    // 03/01/2019, 1.3.19
    r"\b\d{1,2}[/.]\d{1,2}[/.]\d{2,4}\b",
    // March 1, 2019 / Mar. 1 2019
    r"\b(?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)[a-z]*\.? \d{1,2}(?:st|nd|rd|th)?,? \d{4}\b",
    // 1 March 2019
    r"\b\d{1,2}(?:st|nd|rd|th)? (?:Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)[a-z]*\.? \d{4}\b",
    // 10:45, 10:45:12 pm EST
    r"(?i)\b\d{1,2}:\d{2}(?::\d{2})?(?:\s?[ap]\.?m\.?)?(?:\s?(?:UTC|GMT|ET|EST|EDT|PT|PST|PDT|CET|CEST|BST))?\b",
];
/// Literal escape sequences left behind by scrapers, and Unicode control characters.
pub const NEWLINE_MARKER_PATTERN: &str = r"\\[nrt]|\p{Cc}";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawArticle {
    pub company_id: String,
    pub month: YearMonth,
    pub url: String,
    pub title: String,
    pub paragraphs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_date: Option<NaiveDateTime>,
}

impl RawArticle {
    pub fn body_chars(&self) -> usize {
        self.paragraphs.iter().map(|p| p.chars().count()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceLabel {
    Relevant,
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub company_id: String,
    pub month: YearMonth,
    pub summary: String,
    #[serde(default)]
    pub relevance_prob: Option<f64>,
    #[serde(default)]
    pub relevance_label: Option<RelevanceLabel>,
    #[serde(default)]
    pub sentiment_label: Option<SentimentLabel>,
    #[serde(default)]
    pub cluster_id: Option<usize>,
    /// Publication timestamp; articles without one are left out of daily aggregation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen_date: Option<NaiveDateTime>,
}

/// Stable id of a (url, company) pair: the first 16 bytes of a SHA-256, hex encoded.
pub fn article_id(url: &str, company_id: &str) -> String {
    let mut h = Sha256::new();
    h.update(url.as_bytes());
    h.update([0x1f]);
    h.update(company_id.as_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Parses an error-phrase file: one phrase per line, `#` comments.
pub fn parse_error_phrases(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_error_phrases(path: &Path) -> Result<Vec<String>> {
    Ok(parse_error_phrases(&std::fs::read_to_string(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub min_chars: usize,
    /// Lower-cased phrases marking failed downloads.
    pub error_phrases: Vec<String>,
    /// Regexes removed from titles and paragraphs.
    pub scrub_patterns: Vec<String>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        let mut scrub_patterns = vec![LINK_PATTERN.to_string(), EMAIL_PATTERN.to_string()];
        scrub_patterns.extend(DATE_TIME_PATTERNS.iter().map(|p| p.to_string()));
        scrub_patterns.push(NEWLINE_MARKER_PATTERN.to_string());
        Self { min_chars: MIN_ARTICLE_CHARS, error_phrases: parse_error_phrases(DEFAULT_ERROR_PHRASES), scrub_patterns }
    }
}

static WHITESPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").expect("valid regex"));

/// Compiled [`CleanConfig`].
#[derive(Clone, Debug)]
pub struct Cleaner {
    min_chars: usize,
    error_phrases: Vec<String>,
    scrub: Vec<Regex>,
}

impl Cleaner {
    pub fn new(cfg: &CleanConfig) -> Result<Self> {
        let scrub = cfg
            .scrub_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| EsgError::Validation(format!("scrub pattern {p:?}: {e}"))))
            .collect::<Result<_>>()?;
        let error_phrases = cfg.error_phrases.iter().map(|p| p.to_lowercase()).filter(|p| !p.is_empty()).collect();
        Ok(Self { min_chars: cfg.min_chars, error_phrases, scrub })
    }

    /// Removes every scrub pattern and collapses whitespace, repeated until
    /// nothing changes.
    pub fn scrub(&self, text: &str) -> String {
        let mut current = WHITESPACE.replace_all(text, " ").trim().to_string();
        loop {
            let mut next = current.clone();
            for re in &self.scrub {
                next = re.replace_all(&next, " ").into_owned();
            }
            let next = WHITESPACE.replace_all(&next, " ").trim().to_string();
            if next == current {
                return next;
            }
            current = next;
        }
    }

    fn has_error_phrase(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.error_phrases.iter().any(|p| lower.contains(p.as_str()))
    }

    /// Filters one article. Returns `None` when the body is shorter than the
    /// minimum (before or after cleaning), an error phrase occurs, or no
    /// paragraph mentions a company name variant.
    pub fn clean(&self, raw: &RawArticle, company: &Company) -> Option<RawArticle> {
        if raw.body_chars() < self.min_chars {
            return None;
        }
        if self.has_error_phrase(&raw.title) || raw.paragraphs.iter().any(|p| self.has_error_phrase(p)) {
            return None;
        }
        let mentions = |p: &str| company.name_variants().iter().any(|n| !n.is_empty() && p.contains(n));
        let paragraphs: Vec<String> = raw
            .paragraphs
            .iter()
            .filter(|p| mentions(p))
            .map(|p| self.scrub(p))
            .filter(|p| mentions(p))
            .collect();
        let title = self.scrub(&raw.title);
        if paragraphs.is_empty()
            || self.has_error_phrase(&title)
            || paragraphs.iter().any(|p| self.has_error_phrase(p))
        {
            return None;
        }
        let cleaned = RawArticle { title, paragraphs, ..raw.clone() };
        (cleaned.body_chars() >= self.min_chars).then_some(cleaned)
    }
}

/// Splits after `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter or digit.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            if j > i + 1 && j < chars.len() && (chars[j].is_uppercase() || chars[j].is_ascii_digit()) {
                out.push(chars[start..=i].iter().collect::<String>());
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect());
    }
    out.into_iter()
        .map(|s| WHITESPACE.replace_all(s.trim(), " ").into_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Title followed by the first five body sentences, single-space separated.
pub fn summarize(raw: &RawArticle) -> String {
    let body = raw.paragraphs.join(" ");
    let mut parts = vec![WHITESPACE.replace_all(raw.title.trim(), " ").into_owned()];
    parts.extend(split_sentences(&body).into_iter().take(SUMMARY_SENTENCES));
    parts.retain(|p| !p.is_empty());
    parts.join(" ")
}

/// Record for a cleaned article; `None` when both title and body are empty.
pub fn to_record(raw: &RawArticle) -> Option<ArticleRecord> {
    let summary = summarize(raw);
    (!summary.is_empty()).then(|| ArticleRecord {
        article_id: article_id(&raw.url, &raw.company_id),
        company_id: raw.company_id.clone(),
        month: raw.month,
        summary,
        relevance_prob: None,
        relevance_label: None,
        sentiment_label: None,
        cluster_id: None,
        seen_date: raw.seen_date,
    })
}

/// Keeps the `year` records of companies with at least five articles that
/// year and a rating for it.
pub fn prune_companies(records: &[ArticleRecord], ratings: &[RatingRecord], year: i32) -> Vec<ArticleRecord> {
    let rated: HashSet<&str> = ratings.iter().filter(|r| r.year == year).map(|r| r.company_id.as_str()).collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| r.month.year == year) {
        *counts.entry(r.company_id.as_str()).or_default() += 1;
    }
    records
        .iter()
        .filter(|r| {
            r.month.year == year
                && rated.contains(r.company_id.as_str())
                && counts[r.company_id.as_str()] >= MIN_ARTICLES_PER_COMPANY
        })
        .cloned()
        .collect()
}

/// Drops repeated article ids, keeping the first occurrence.
pub fn dedup_records(records: Vec<ArticleRecord>) -> Vec<ArticleRecord> {
    let mut seen = HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.article_id.clone())).collect()
}

static PARAGRAPH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<p(?:\s[^>]*)?>(.*?)</p\s*>").expect("valid regex"));
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").expect("valid regex"));
static SCRIPT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<(script|style)\b.*?</(script|style)\s*>").expect("valid regex"));

/// Texts of the `<p>` elements of an HTML page, with inner tags removed and
/// common entities decoded. Empty paragraphs are skipped.
pub fn extract_paragraphs(html: &str) -> Vec<String> {
    let html = SCRIPT.replace_all(html, " ");
    PARAGRAPH
        .captures_iter(&html)
        .map(|c| {
            let text = TAG.replace_all(&c[1], " ");
            let text = decode_entities(&text);
            WHITESPACE.replace_all(text.trim(), " ").into_owned()
        })
        .filter(|p| !p.is_empty())
        .collect()
}

fn decode_entities(s: &str) -> String {
    const NAMED: [(&str, &str); 8] = [
        ("&nbsp;", " "),
        ("&lt;", "<"),
        ("&gt;", ">"),
        ("&quot;", "\""),
        ("&#39;", "'"),
        ("&apos;", "'"),
        ("&rsquo;", "\u{2019}"),
        ("&amp;", "&"),
    ];
    let mut out = s.to_string();
    for (from, to) in NAMED {
        out = out.replace(from, to);
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EsgError::parse(path, i as u64 + 1, e))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
