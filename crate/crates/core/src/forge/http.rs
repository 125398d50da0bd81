use std::collections::BTreeSet;
use std::time::Duration;

use chrono::{DateTime, Utc};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::header::{ACCEPT, AUTHORIZATION, USER_AGENT};
use reqwest::StatusCode;
use serde::Deserialize;

use super::{
    check_repo_path, with_retry, Forge, ForgeError, ForgeErrorKind, Issue, IssueState, RepoRef,
    RetryPolicy, LABEL_COLOR,
};

/// Client for a GitHub-compatible REST API.
///
/// Stateless per call. Authentication is a bearer token obtained elsewhere
/// (an installation token for a GitHub App, or a personal token).
pub struct HttpForge {
    client: Client,
    api_base: String,
    web_base: String,
    token: Option<String>,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ApiLabel {
    name: String,
}

#[derive(Deserialize)]
struct ApiIssue {
    number: u64,
    title: String,
    body: Option<String>,
    #[serde(default)]
    labels: Vec<ApiLabel>,
    state: String,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    #[serde(default)]
    pull_request: Option<serde_json::Value>,
}

impl HttpForge {
    pub fn new(api_base: &str, token: Option<String>) -> Result<Self, ForgeError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ForgeError::new(ForgeErrorKind::Network, e.to_string()))?;
        let api_base = api_base.trim_end_matches('/').to_string();
        let web_base = if api_base == "https://api.github.com" {
            "https://github.com".to_string()
        } else {
            api_base.clone()
        };
        Ok(Self {
            client,
            api_base,
            web_base,
            token,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Base URL used when building browser links to issues.
    pub fn with_web_base(mut self, web_base: &str) -> Self {
        self.web_base = web_base.trim_end_matches('/').to_string();
        self
    }

    fn url(&self, repo: &RepoRef, tail: &str) -> String {
        format!(
            "{}/repos/{}/{}/{}",
            self.api_base,
            repo.owner(),
            repo.name(),
            tail
        )
    }

    fn authed(&self, req: RequestBuilder) -> RequestBuilder {
        let req = req
            .header(USER_AGENT, "tdbot")
            .header("X-GitHub-Api-Version", "2022-11-28");
        match &self.token {
            Some(token) => req.header(AUTHORIZATION, format!("Bearer {token}")),
            None => req,
        }
    }

    fn send(&self, build: impl Fn() -> RequestBuilder) -> Result<Response, ForgeError> {
        with_retry(self.retry, std::thread::sleep, || {
            let resp = self.authed(build()).send().map_err(|e| {
                ForgeError::new(ForgeErrorKind::Network, e.to_string())
            })?;
            classify_status(resp)
        })
    }
}

fn classify_status(resp: Response) -> Result<Response, ForgeError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let exhausted = resp
        .headers()
        .get("x-ratelimit-remaining")
        .is_some_and(|v| v.as_bytes() == b"0");
    let url = resp.url().to_string();
    let kind = match status {
        StatusCode::NOT_FOUND => ForgeErrorKind::NotFound,
        StatusCode::TOO_MANY_REQUESTS => ForgeErrorKind::RateLimited,
        StatusCode::FORBIDDEN if exhausted => ForgeErrorKind::RateLimited,
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => ForgeErrorKind::PermissionDenied,
        s if s.is_server_error() => ForgeErrorKind::Network,
        _ => ForgeErrorKind::InvalidResponse,
    };
    Err(ForgeError::new(kind, format!("{status} from {url}")))
}

fn invalid(e: impl std::fmt::Display) -> ForgeError {
    ForgeError::new(ForgeErrorKind::InvalidResponse, e.to_string())
}

fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

impl Forge for HttpForge {
    fn fetch_file(
        &self,
        repo: &RepoRef,
        path: &str,
        branch: &str,
    ) -> Result<Option<Vec<u8>>, ForgeError> {
        check_repo_path(path)?;
        let url = self.url(
            repo,
            &format!("contents/{path}?ref={}", encode_segment(branch)),
        );
        let resp = self.send(|| {
            self.client
                .get(&url)
                .header(ACCEPT, "application/vnd.github.raw")
        });
        match resp {
            Ok(resp) => Ok(Some(resp.bytes().map_err(invalid)?.to_vec())),
            Err(e) if e.kind == ForgeErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn add_label(&self, repo: &RepoRef, issue_number: u64, label: &str) -> Result<(), ForgeError> {
        let def_url = self.url(repo, &format!("labels/{}", encode_segment(label)));
        match self.send(|| self.client.get(&def_url)) {
            Ok(_) => {}
            Err(e) if e.kind == ForgeErrorKind::NotFound => {
                let create_url = self.url(repo, "labels");
                let body = serde_json::json!({ "name": label, "color": LABEL_COLOR });
                match self.send(|| self.client.post(&create_url).json(&body)) {
                    Ok(_) => {}
                    // 422: created concurrently by another handler
                    Err(e) if e.kind == ForgeErrorKind::InvalidResponse => {}
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        }
        let url = self.url(repo, &format!("issues/{issue_number}/labels"));
        let body = serde_json::json!({ "labels": [label] });
        self.send(|| self.client.post(&url).json(&body))?;
        Ok(())
    }

    fn remove_label(
        &self,
        repo: &RepoRef,
        issue_number: u64,
        label: &str,
    ) -> Result<(), ForgeError> {
        let url = self.url(
            repo,
            &format!("issues/{issue_number}/labels/{}", encode_segment(label)),
        );
        match self.send(|| self.client.delete(&url)) {
            Ok(_) => Ok(()),
            Err(e) if e.kind == ForgeErrorKind::NotFound => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn post_comment(&self, repo: &RepoRef, issue_number: u64, body: &str) -> Result<(), ForgeError> {
        let url = self.url(repo, &format!("issues/{issue_number}/comments"));
        let payload = serde_json::json!({ "body": body });
        self.send(|| self.client.post(&url).json(&payload))?;
        Ok(())
    }

    fn list_open_issues(&self, repo: &RepoRef) -> Result<Vec<Issue>, ForgeError> {
        let mut out = Vec::new();
        for page in 1.. {
            let url = self.url(
                repo,
                &format!("issues?state=open&per_page=100&page={page}"),
            );
            let batch: Vec<ApiIssue> = self.send(|| self.client.get(&url))?.json().map_err(invalid)?;
            let done = batch.len() < 100;
            for raw in batch {
                // the issues endpoint also returns pull requests
                if raw.pull_request.is_some() {
                    continue;
                }
                let state: IssueState = raw.state.parse().map_err(invalid)?;
                if state != IssueState::Open {
                    continue;
                }
                out.push(Issue {
                    repo: repo.clone(),
                    number: raw.number,
                    title: raw.title,
                    body: raw.body.unwrap_or_default(),
                    labels: raw.labels.into_iter().map(|l| l.name).collect::<BTreeSet<_>>(),
                    state,
                    created_at: raw.created_at,
                    updated_at: raw.updated_at.max(raw.created_at),
                });
            }
            if done {
                break;
            }
        }
        Ok(out)
    }

    fn issue_link(&self, repo: &RepoRef, issue_number: u64) -> String {
        format!(
            "{}/{}/{}/issues/{}",
            self.web_base,
            repo.owner(),
            repo.name(),
            issue_number
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_encoding() {
        assert_eq!(encode_segment("TD"), "TD");
        assert_eq!(encode_segment("good first issue"), "good%20first%20issue");
        assert_eq!(encode_segment("a/b"), "a%2Fb");
    }

    #[test]
    fn github_links_use_web_host() {
        let forge = HttpForge::new("https://api.github.com", None).unwrap();
        let repo = RepoRef::new("acme", "widgets").unwrap();
        assert_eq!(
            forge.issue_link(&repo, 3),
            "https://github.com/acme/widgets/issues/3"
        );
    }
}
