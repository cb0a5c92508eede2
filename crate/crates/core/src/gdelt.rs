//! Query builder and article-list parser for the GDELT Doc 2.0 API.
//!
//! Network access goes through the [`Transport`] trait so the client runs
//! against recorded fixtures in tests.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::catalog::Company;
use crate::error::{EsgError, Result};
use crate::month::YearMonth;

pub const DEFAULT_ENDPOINT: &str = "https://api.gdeltproject.org/api/v2/doc/doc";
pub const MAX_RECORDS_LIMIT: usize = 250;
pub const ESG_TERMS: [&str; 3] = ["environmental", "social", "governance"];
/// `{i}` is replaced by keyword `i`, quoted when it contains whitespace.
pub const DEFAULT_COMBINATION: &str = "({0} OR {1}) ({2} OR {3} OR {4})";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repeat {
    pub token: String,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GdeltQuery {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub keywords: Vec<String>,
    /// Boolean structure over `keywords`; see [`DEFAULT_COMBINATION`].
    pub combination: String,
    pub repeat: Option<Repeat>,
    pub domain: Option<String>,
    pub country: Option<String>,
    pub theme: Option<String>,
    /// Raw proximity operator, e.g. `near10:"carbon emissions"`.
    pub near: Option<String>,
    pub max_records: usize,
}

impl GdeltQuery {
    pub fn validate(&self) -> Result<()> {
        if self.start_date > self.end_date {
            return Err(EsgError::Validation(format!("start {} after end {}", self.start_date, self.end_date)));
        }
        if self.max_records == 0 || self.max_records > MAX_RECORDS_LIMIT {
            return Err(EsgError::Validation(format!("max_records must be in 1..={MAX_RECORDS_LIMIT}")));
        }
        if let Some(r) = &self.repeat {
            if r.token.is_empty() || r.token.chars().any(char::is_whitespace) || r.count == 0 {
                return Err(EsgError::Validation(format!("invalid repeat filter {r:?}")));
            }
        }
        Ok(())
    }

    /// The `query` parameter in GDELT syntax.
    pub fn query_string(&self) -> String {
        let mut q = self.combination.clone();
        // Highest index first so `{1}` does not clobber `{10}`.
        for (i, kw) in self.keywords.iter().enumerate().rev() {
            q = q.replace(&format!("{{{i}}}"), &quote(kw));
        }
        if let Some(r) = &self.repeat {
            q.push_str(&format!(" repeat{}:\"{}\"", r.count, r.token));
        }
        if let Some(d) = &self.domain {
            q.push_str(&format!(" domain:{d}"));
        }
        if let Some(c) = &self.country {
            q.push_str(&format!(" sourcecountry:{c}"));
        }
        if let Some(t) = &self.theme {
            q.push_str(&format!(" theme:{t}"));
        }
        if let Some(n) = &self.near {
            q.push(' ');
            q.push_str(n);
        }
        q
    }

    /// Request parameters, unencoded.
    pub fn params(&self) -> Vec<(String, String)> {
        let p = |k: &str, v: String| (k.to_string(), v);
        vec![
            p("query", self.query_string()),
            p("mode", "ArtList".into()),
            p("maxrecords", self.max_records.to_string()),
            p("startdatetime", format!("{}000000", self.start_date.format("%Y%m%d"))),
            p("enddatetime", format!("{}235959", self.end_date.format("%Y%m%d"))),
            p("format", "json".into()),
        ]
    }
}

fn quote(kw: &str) -> String {
    if kw.chars().any(char::is_whitespace) {
        format!("\"{kw}\"")
    } else {
        kw.to_string()
    }
}

/// One month of news for one company: both name variants, the three ESG
/// terms, and the one-word name repeated at least twice.
pub fn build_company_query(company: &Company, month: YearMonth) -> GdeltQuery {
    build_company_query_with(company, month, DEFAULT_COMBINATION)
}

pub fn build_company_query_with(company: &Company, month: YearMonth, combination: &str) -> GdeltQuery {
    let mut keywords = vec![company.name_short.clone(), company.name_long.clone()];
    keywords.extend(ESG_TERMS.iter().map(|s| s.to_string()));
    GdeltQuery {
        start_date: month.first_day(),
        end_date: month.last_day(),
        keywords,
        combination: combination.to_string(),
        repeat: Some(Repeat { token: company.name_oneword.clone(), count: 2 }),
        domain: None,
        country: None,
        theme: None,
        near: None,
        max_records: MAX_RECORDS_LIMIT,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdeltHit {
    pub url: String,
    pub title: String,
    pub seen_date: NaiveDateTime,
    pub domain: String,
    pub language: String,
    pub source_country: String,
}

#[derive(Deserialize)]
struct ArtList {
    #[serde(default)]
    articles: Vec<RawHit>,
}

#[derive(Deserialize)]
struct RawHit {
    #[serde(default)]
    url: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    seendate: String,
    #[serde(default)]
    domain: String,
    #[serde(default)]
    language: String,
    #[serde(default)]
    sourcecountry: String,
}

const SEEN_DATE_FORMAT: &str = "%Y%m%dT%H%M%SZ";

/// Parses an ArtList JSON body, keeping at most `max_records` hits in
/// response order. An empty body means no matches.
pub fn parse_artlist(body: &str, max_records: usize) -> Result<Vec<GdeltHit>> {
    if body.trim().is_empty() {
        return Ok(Vec::new());
    }
    let list: ArtList = serde_json::from_str(body).map_err(|e| EsgError::MalformedJson(e.to_string()))?;
    list.articles
        .into_iter()
        .take(max_records)
        .enumerate()
        .map(|(i, h)| {
            if h.url.is_empty() {
                return Err(EsgError::MalformedJson(format!("article {i} has an empty url")));
            }
            let seen_date = NaiveDateTime::parse_from_str(&h.seendate, SEEN_DATE_FORMAT)
                .map_err(|e| EsgError::MalformedJson(format!("article {i} seendate {:?}: {e}", h.seendate)))?;
            Ok(GdeltHit {
                url: h.url,
                title: h.title,
                seen_date,
                domain: h.domain,
                language: h.language,
                source_country: h.sourcecountry,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Blocking HTTP GET. Implementations report connection failures as
/// [`EsgError::Transport`] and return every HTTP status as a response.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, params: &[(String, String)]) -> Result<HttpResponse>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn get(&self, url: &str, params: &[(String, String)]) -> Result<HttpResponse> {
        (**self).get(url, params)
    }
}

/// Token bucket shared by concurrent fetches.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Option<Instant>)>,
}

impl RateLimiter {
    pub fn new(per_second: f64, burst: u32) -> Self {
        assert!(per_second > 0.0 && burst >= 1, "rate limiter needs a positive rate and burst");
        Self { per_second, burst: burst as f64, state: Mutex::new((burst as f64, None)) }
    }

    /// Takes one token at `now` and returns how long the caller must wait
    /// before using it.
    pub fn reserve_at(&self, now: Instant) -> Duration {
        let mut state = self.state.lock().expect("rate limiter lock");
        let (tokens, last) = &mut *state;
        if let Some(prev) = *last {
            let elapsed = now.saturating_duration_since(prev).as_secs_f64();
            *tokens = (*tokens + elapsed * self.per_second).min(self.burst);
        }
        *last = Some(now.max(last.unwrap_or(now)));
        *tokens -= 1.0;
        if *tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-*tokens / self.per_second)
        }
    }

    pub fn acquire(&self) {
        let wait = self.reserve_at(Instant::now());
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

impl Default for RateLimiter {
    fn default() -> Self {
        Self::new(1.0, 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles each time.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

pub struct GdeltClient<T> {
    transport: T,
    endpoint: String,
    limiter: RateLimiter,
    retry: RetryPolicy,
    archive: Option<PathBuf>,
}

impl<T: Transport> GdeltClient<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            endpoint: DEFAULT_ENDPOINT.to_string(),
            limiter: RateLimiter::default(),
            retry: RetryPolicy::default(),
            archive: None,
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    pub fn with_rate_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Raw bodies are written to `{dir}/{company_id}/{yyyy-mm}.json`.
    pub fn with_archive(mut self, dir: impl Into<PathBuf>) -> Self {
        self.archive = Some(dir.into());
        self
    }

    pub fn fetch_raw(&self, query: &GdeltQuery) -> Result<String> {
        query.validate()?;
        let params = query.params();
        let mut delay = self.retry.base_delay;
        let mut last_err = None;
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            self.limiter.acquire();
            match self.transport.get(&self.endpoint, &params) {
                Ok(r) if r.status == 429 => return Err(EsgError::RateLimited),
                Ok(r) if (200..300).contains(&r.status) => return Ok(r.body),
                Ok(r) if r.status >= 500 => last_err = Some(EsgError::Transport(format!("HTTP {}", r.status))),
                Ok(r) => return Err(EsgError::Transport(format!("HTTP {}: {}", r.status, r.body.trim()))),
                Err(e @ EsgError::Transport(_)) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    pub fn fetch(&self, query: &GdeltQuery) -> Result<Vec<GdeltHit>> {
        parse_artlist(&self.fetch_raw(query)?, query.max_records)
    }

    /// Builds, fetches and (optionally) archives one company-month.
    pub fn fetch_company_month(&self, company: &Company, month: YearMonth, combination: &str) -> Result<Vec<GdeltHit>> {
        let query = build_company_query_with(company, month, combination);
        let body = self.fetch_raw(&query)?;
        if let Some(dir) = &self.archive {
            archive_response(dir, &company.id, month, &body)?;
        }
        parse_artlist(&body, query.max_records)
    }
}

pub fn archive_path(dir: &Path, company_id: &str, month: YearMonth) -> PathBuf {
    dir.join(company_id).join(format!("{month}.json"))
}

pub fn archive_response(dir: &Path, company_id: &str, month: YearMonth, body: &str) -> Result<PathBuf> {
    let path = archive_path(dir, company_id, month);
    std::fs::create_dir_all(path.parent().expect("archive path has a parent"))?;
    std::fs::write(&path, body)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn visa() -> Company {
        Company {
            id: "V".into(),
            name_long: "Visa Inc.".into(),
            name_short: "Visa".into(),
            name_oneword: "Visa".into(),
            market_cap_usd: Some(4e11),
        }
    }

    #[test]
    fn company_query_follows_filter_rules() {
        let q = build_company_query(&visa(), "2019-03".parse().unwrap());
        assert_eq!(q.start_date, NaiveDate::from_ymd_opt(2019, 3, 1).unwrap());
        assert_eq!(q.end_date, NaiveDate::from_ymd_opt(2019, 3, 31).unwrap());
        assert_eq!(q.repeat, Some(Repeat { token: "Visa".into(), count: 2 }));
        assert_eq!(q.max_records, 250);
        assert_eq!(q.keywords, ["Visa", "Visa Inc.", "environmental", "social", "governance"]);
        assert_eq!(
            q.query_string(),
            "(Visa OR \"Visa Inc.\") (environmental OR social OR governance) repeat2:\"Visa\""
        );
        let params = q.params();
        assert!(params.contains(&("startdatetime".into(), "20190301000000".into())));
        assert!(params.contains(&("enddatetime".into(), "20190331235959".into())));
        assert_eq!(build_company_query(&visa(), "2019-03".parse().unwrap()), q);
    }

    #[test]
    fn leap_february_and_repeat_token() {
        let mut coke = visa();
        coke.name_oneword = "Coca".into();
        let q = build_company_query(&coke, "2020-02".parse().unwrap());
        assert_eq!(q.end_date, NaiveDate::from_ymd_opt(2020, 2, 29).unwrap());
        assert_eq!(q.repeat.unwrap().token, "Coca");
    }

    #[test]
    fn invalid_queries() {
        let mut q = build_company_query(&visa(), "2019-03".parse().unwrap());
        q.max_records = 251;
        assert!(q.validate().is_err());
        q.max_records = 10;
        q.start_date = NaiveDate::from_ymd_opt(2019, 4, 1).unwrap();
        assert!(q.validate().is_err());
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(2.0, 1);
        let t0 = Instant::now();
        assert_eq!(limiter.reserve_at(t0), Duration::ZERO);
        assert_eq!(limiter.reserve_at(t0), Duration::from_millis(500));
        assert_eq!(limiter.reserve_at(t0), Duration::from_millis(1000));
        // After a long pause the bucket is full again, capped at the burst.
        let later = t0 + Duration::from_secs(10);
        assert_eq!(limiter.reserve_at(later), Duration::ZERO);
        assert_eq!(limiter.reserve_at(later), Duration::from_millis(500));
    }

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
        status: u16,
    }

    impl Transport for Flaky {
        fn get(&self, _: &str, _: &[(String, String)]) -> Result<HttpResponse> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(EsgError::Transport("connection reset".into()))
            } else {
                Ok(HttpResponse { status: self.status, body: "{}".into() })
            }
        }
    }

    fn client(failures: usize, status: u16) -> GdeltClient<Flaky> {
        GdeltClient::new(Flaky { failures, calls: AtomicUsize::new(0), status })
            .with_rate_limiter(RateLimiter::new(1e9, 1000))
            .with_retry(RetryPolicy { attempts: 3, base_delay: Duration::ZERO })
    }

    #[test]
    fn retries_transport_errors() {
        let q = build_company_query(&visa(), "2019-03".parse().unwrap());
        let c = client(2, 200);
        assert_eq!(c.fetch(&q).unwrap(), vec![]);
        assert_eq!(c.transport.calls.load(Ordering::SeqCst), 3);
        let c = client(3, 200);
        assert!(matches!(c.fetch(&q), Err(EsgError::Transport(_))));
        let c = client(0, 429);
        assert!(matches!(c.fetch(&q), Err(EsgError::RateLimited)));
        assert_eq!(c.transport.calls.load(Ordering::SeqCst), 1);
    }
}
