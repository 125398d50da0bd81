use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use super::{
    check_repo_path, Comment, Forge, ForgeError, InstallationStore, Issue, IssueState, RepoRef,
    LABEL_COLOR,
};
use crate::clock::{Clock, SystemClock};

/// One recorded call against a [`FakeForge`], in arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForgeCall {
    FetchFile { repo: String, path: String, branch: String },
    AddLabel { repo: String, issue: u64, label: String },
    RemoveLabel { repo: String, issue: u64, label: String },
    PostComment { repo: String, issue: u64 },
    ListOpenIssues { repo: String },
}

impl ForgeCall {
    pub fn is_write(&self) -> bool {
        matches!(
            self,
            ForgeCall::AddLabel { .. } | ForgeCall::RemoveLabel { .. } | ForgeCall::PostComment { .. }
        )
    }
}

#[derive(Debug)]
struct RepoState {
    repo: RepoRef,
    files: HashMap<(String, String), Vec<u8>>,
    issues: BTreeMap<u64, Issue>,
    comments: Vec<Comment>,
    label_defs: BTreeMap<String, String>,
    failure: Option<ForgeError>,
}

impl RepoState {
    fn new(repo: RepoRef) -> Self {
        Self {
            repo,
            files: HashMap::new(),
            issues: BTreeMap::new(),
            comments: Vec::new(),
            label_defs: BTreeMap::new(),
            failure: None,
        }
    }
}

/// In-memory forge. Every operation takes a single lock, so each is atomic.
pub struct FakeForge {
    repos: RwLock<BTreeMap<String, RepoState>>,
    calls: Mutex<Vec<ForgeCall>>,
    clock: Arc<dyn Clock>,
    bot_login: String,
}

impl Default for FakeForge {
    fn default() -> Self {
        Self::new()
    }
}

impl FakeForge {
    pub fn new() -> Self {
        Self::with_clock(Arc::new(SystemClock))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Self {
            repos: RwLock::new(BTreeMap::new()),
            calls: Mutex::new(Vec::new()),
            clock,
            bot_login: "tdbot[bot]".to_string(),
        }
    }

    pub fn bot_login(&self) -> &str {
        &self.bot_login
    }

    pub fn add_repo(&self, repo: &RepoRef) {
        self.repos
            .write()
            .unwrap()
            .entry(repo.full_name())
            .or_insert_with(|| RepoState::new(repo.clone()));
    }

    pub fn put_file(&self, repo: &RepoRef, branch: &str, path: &str, contents: impl Into<Vec<u8>>) {
        self.add_repo(repo);
        let mut repos = self.repos.write().unwrap();
        let state = repos.get_mut(&repo.full_name()).unwrap();
        state
            .files
            .insert((branch.to_string(), path.to_string()), contents.into());
    }

    pub fn delete_file(&self, repo: &RepoRef, branch: &str, path: &str) {
        if let Some(state) = self.repos.write().unwrap().get_mut(&repo.full_name()) {
            state.files.remove(&(branch.to_string(), path.to_string()));
        }
    }

    /// Inserts or replaces an issue (keyed by its number).
    pub fn put_issue(&self, issue: Issue) {
        self.add_repo(&issue.repo);
        let mut repos = self.repos.write().unwrap();
        let state = repos.get_mut(&issue.repo.full_name()).unwrap();
        state.issues.insert(issue.number, issue);
    }

    pub fn issue(&self, repo: &RepoRef, number: u64) -> Option<Issue> {
        self.repos
            .read()
            .unwrap()
            .get(&repo.full_name())
            .and_then(|s| s.issues.get(&number).cloned())
    }

    pub fn comments(&self, repo: &RepoRef, number: u64) -> Vec<Comment> {
        self.repos
            .read()
            .unwrap()
            .get(&repo.full_name())
            .map(|s| {
                s.comments
                    .iter()
                    .filter(|c| c.issue_number == number)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Label definitions (name -> color) known for the repo.
    pub fn label_definitions(&self, repo: &RepoRef) -> BTreeMap<String, String> {
        self.repos
            .read()
            .unwrap()
            .get(&repo.full_name())
            .map(|s| s.label_defs.clone())
            .unwrap_or_default()
    }

    /// Makes every operation on `repo` fail with `error` until cleared.
    pub fn set_failure(&self, repo: &RepoRef, error: Option<ForgeError>) {
        self.add_repo(repo);
        self.repos
            .write()
            .unwrap()
            .get_mut(&repo.full_name())
            .unwrap()
            .failure = error;
    }

    pub fn calls(&self) -> Vec<ForgeCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().unwrap().clear();
    }

    fn record(&self, call: ForgeCall) {
        self.calls.lock().unwrap().push(call);
    }

    fn with_repo<T>(
        &self,
        repo: &RepoRef,
        f: impl FnOnce(&mut RepoState) -> Result<T, ForgeError>,
    ) -> Result<T, ForgeError> {
        let mut repos = self.repos.write().unwrap();
        let state = repos
            .get_mut(&repo.full_name())
            .ok_or_else(|| ForgeError::not_found(format!("repository {repo}")))?;
        if let Some(err) = &state.failure {
            return Err(err.clone());
        }
        f(state)
    }
}

fn touch(issue: &mut Issue, now: chrono::DateTime<chrono::Utc>) {
    issue.updated_at = now.max(issue.created_at);
}

impl Forge for FakeForge {
    fn fetch_file(
        &self,
        repo: &RepoRef,
        path: &str,
        branch: &str,
    ) -> Result<Option<Vec<u8>>, ForgeError> {
        self.record(ForgeCall::FetchFile {
            repo: repo.full_name(),
            path: path.to_string(),
            branch: branch.to_string(),
        });
        check_repo_path(path)?;
        self.with_repo(repo, |s| {
            Ok(s.files
                .get(&(branch.to_string(), path.to_string()))
                .cloned())
        })
    }

    fn add_label(&self, repo: &RepoRef, issue_number: u64, label: &str) -> Result<(), ForgeError> {
        self.record(ForgeCall::AddLabel {
            repo: repo.full_name(),
            issue: issue_number,
            label: label.to_string(),
        });
        let now = self.clock.now();
        self.with_repo(repo, |s| {
            let issue = s
                .issues
                .get_mut(&issue_number)
                .ok_or_else(|| ForgeError::not_found(format!("issue #{issue_number}")))?;
            if label.is_empty() {
                return Err(ForgeError::new(
                    super::ForgeErrorKind::InvalidResponse,
                    "empty label",
                ));
            }
            if issue.labels.insert(label.to_string()) {
                touch(issue, now);
            }
            s.label_defs
                .entry(label.to_string())
                .or_insert_with(|| LABEL_COLOR.to_string());
            Ok(())
        })
    }

    fn remove_label(
        &self,
        repo: &RepoRef,
        issue_number: u64,
        label: &str,
    ) -> Result<(), ForgeError> {
        self.record(ForgeCall::RemoveLabel {
            repo: repo.full_name(),
            issue: issue_number,
            label: label.to_string(),
        });
        let now = self.clock.now();
        self.with_repo(repo, |s| {
            let issue = s
                .issues
                .get_mut(&issue_number)
                .ok_or_else(|| ForgeError::not_found(format!("issue #{issue_number}")))?;
            if issue.labels.remove(label) {
                touch(issue, now);
            }
            Ok(())
        })
    }

    fn post_comment(&self, repo: &RepoRef, issue_number: u64, body: &str) -> Result<(), ForgeError> {
        self.record(ForgeCall::PostComment {
            repo: repo.full_name(),
            issue: issue_number,
        });
        let now = self.clock.now();
        let login = self.bot_login.clone();
        self.with_repo(repo, |s| {
            let issue = s
                .issues
                .get_mut(&issue_number)
                .ok_or_else(|| ForgeError::not_found(format!("issue #{issue_number}")))?;
            touch(issue, now);
            s.comments.push(Comment {
                repo: s.repo.clone(),
                issue_number,
                author_login: login,
                author_is_bot: true,
                body: body.to_string(),
                created_at: now,
            });
            Ok(())
        })
    }

    fn list_open_issues(&self, repo: &RepoRef) -> Result<Vec<Issue>, ForgeError> {
        self.record(ForgeCall::ListOpenIssues {
            repo: repo.full_name(),
        });
        self.with_repo(repo, |s| {
            Ok(s.issues
                .values()
                .filter(|i| i.state == IssueState::Open)
                .cloned()
                .collect())
        })
    }

    fn issue_link(&self, repo: &RepoRef, issue_number: u64) -> String {
        format!(
            "https://forge.test/{}/{}/issues/{}",
            repo.owner(),
            repo.name(),
            issue_number
        )
    }
}

impl InstallationStore for FakeForge {
    fn installed_repos(&self) -> Vec<RepoRef> {
        self.repos
            .read()
            .unwrap()
            .values()
            .map(|s| s.repo.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::ForgeErrorKind;
    use chrono::{TimeZone, Utc};

    fn repo() -> RepoRef {
        RepoRef::new("acme", "widgets").unwrap()
    }

    fn seeded() -> FakeForge {
        let forge = FakeForge::new();
        let t = Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap();
        forge.put_issue(Issue::new(repo(), 1, "First", "body", t));
        forge
    }

    #[test]
    fn fetch_file_round_trip_and_missing() {
        let forge = seeded();
        assert_eq!(forge.fetch_file(&repo(), "Bot/config.json", "main").unwrap(), None);
        forge.put_file(&repo(), "main", "Bot/config.json", b"{}".to_vec());
        assert_eq!(
            forge.fetch_file(&repo(), "Bot/config.json", "main").unwrap(),
            Some(b"{}".to_vec())
        );
    }

    #[test]
    fn fetch_file_sees_overwrites() {
        let forge = seeded();
        forge.put_file(&repo(), "main", "Bot/config.json", b"old".to_vec());
        assert_eq!(
            forge.fetch_file(&repo(), "Bot/config.json", "main").unwrap().unwrap(),
            b"old"
        );
        forge.put_file(&repo(), "main", "Bot/config.json", b"new".to_vec());
        assert_eq!(
            forge.fetch_file(&repo(), "Bot/config.json", "main").unwrap().unwrap(),
            b"new"
        );
    }

    #[test]
    fn fetch_file_is_branch_scoped() {
        let forge = seeded();
        forge.put_file(&repo(), "dev", "Bot/config.json", b"{}".to_vec());
        assert_eq!(forge.fetch_file(&repo(), "Bot/config.json", "main").unwrap(), None);
    }

    #[test]
    fn add_label_inserts_and_is_idempotent() {
        let forge = seeded();
        forge.add_label(&repo(), 1, "TD").unwrap();
        forge.add_label(&repo(), 1, "TD").unwrap();
        let labels: Vec<_> = forge.issue(&repo(), 1).unwrap().labels.into_iter().collect();
        assert_eq!(labels, vec!["TD".to_string()]);
        assert_eq!(
            forge.label_definitions(&repo()).get("TD").map(String::as_str),
            Some(LABEL_COLOR)
        );
    }

    #[test]
    fn add_label_missing_issue() {
        let forge = seeded();
        let err = forge.add_label(&repo(), 99, "TD").unwrap_err();
        assert_eq!(err.kind, ForgeErrorKind::NotFound);
    }

    #[test]
    fn post_comment_appends_bot_comment() {
        let forge = seeded();
        forge.post_comment(&repo(), 1, "Welcome!").unwrap();
        let comments = forge.comments(&repo(), 1);
        assert_eq!(comments.len(), 1);
        assert!(comments[0].author_is_bot);
        assert_eq!(comments[0].body, "Welcome!");
        assert_eq!(
            forge.post_comment(&repo(), 404, "x").unwrap_err().kind,
            ForgeErrorKind::NotFound
        );
    }

    #[test]
    fn list_open_issues_filters_closed() {
        let forge = seeded();
        let t = Utc.with_ymd_and_hms(2024, 3, 2, 0, 0, 0).unwrap();
        let mut closed = Issue::new(repo(), 2, "Second", "", t);
        closed.state = IssueState::Closed;
        forge.put_issue(closed);
        let open = forge.list_open_issues(&repo()).unwrap();
        assert_eq!(open.iter().map(|i| i.number).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn empty_repo_lists_nothing() {
        let forge = FakeForge::new();
        forge.add_repo(&repo());
        assert!(forge.list_open_issues(&repo()).unwrap().is_empty());
    }

    #[test]
    fn injected_failure_leaves_state_untouched() {
        let forge = seeded();
        forge.set_failure(
            &repo(),
            Some(ForgeError::new(ForgeErrorKind::Network, "down")),
        );
        assert!(forge.add_label(&repo(), 1, "TD").is_err());
        forge.set_failure(&repo(), None);
        assert!(forge.issue(&repo(), 1).unwrap().labels.is_empty());
    }
}
