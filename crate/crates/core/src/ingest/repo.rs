//! Repository hosting backends: tag listing, source download for one tag, and
//! commit diffs.

use std::path::{Path, PathBuf};
use std::process::Command;

use super::record::RepoLocator;
use super::IngestError;
use crate::fsutil;
use crate::net::HttpClient;

pub trait RepoHost: Send + Sync {
    fn name(&self) -> &'static str;
    fn list_tags(&self, repo: &RepoLocator) -> Result<Vec<String>, IngestError>;
    /// Materializes the tree of `tag` directly under `dest`.
    fn download_tag(&self, repo: &RepoLocator, tag: &str, dest: &Path) -> Result<(), IngestError>;
    /// Returns `(unified diff, commit message)`.
    fn fetch_commit(&self, repo: &RepoLocator, sha: &str) -> Result<(String, String), IngestError>;
}

/// REST API of github.com; other hosts are delegated to the git fallback.
#[derive(Debug, Clone)]
pub struct GitHubApi {
    pub api_base: String,
    token: Option<String>,
    client: HttpClient,
    fallback: GitCli,
}

impl GitHubApi {
    pub fn new(api_base: impl Into<String>, token: Option<String>, client: HttpClient) -> Self {
        Self {
            api_base: api_base.into(),
            token,
            client,
            fallback: GitCli::default(),
        }
    }

    fn headers<'a>(&'a self, accept: &'a str, auth: &'a mut String) -> Vec<(&'a str, &'a str)> {
        let mut h = vec![("Accept", accept)];
        if let Some(t) = &self.token {
            *auth = format!("Bearer {t}");
            h.push(("Authorization", auth.as_str()));
        }
        h
    }

    fn repo_url(&self, repo: &RepoLocator) -> String {
        format!(
            "{}/repos/{}/{}",
            self.api_base.trim_end_matches('/'),
            repo.owner,
            repo.name
        )
    }
}

impl RepoHost for GitHubApi {
    fn name(&self) -> &'static str {
        "github"
    }

    fn list_tags(&self, repo: &RepoLocator) -> Result<Vec<String>, IngestError> {
        if repo.host != "github.com" {
            return self.fallback.list_tags(repo);
        }
        let mut tags = Vec::new();
        let mut auth = String::new();
        let headers = self.headers("application/vnd.github+json", &mut auth);
        for page in 1..=20 {
            let url = format!("{}/tags?per_page=100&page={page}", self.repo_url(repo));
            let text = self
                .client
                .get_text(&url, &headers)
                .map_err(|e| IngestError::DownloadFailed(e.to_string()))?;
            let items: Vec<serde_json::Value> = serde_json::from_str(&text)
                .map_err(|e| IngestError::DownloadFailed(format!("tag listing: {e}")))?;
            if items.is_empty() {
                break;
            }
            tags.extend(
                items
                    .iter()
                    .filter_map(|i| i.get("name").and_then(|n| n.as_str()).map(String::from)),
            );
        }
        Ok(tags)
    }

    fn download_tag(&self, repo: &RepoLocator, tag: &str, dest: &Path) -> Result<(), IngestError> {
        if repo.host != "github.com" {
            return self.fallback.download_tag(repo, tag, dest);
        }
        let url = format!("{}/tarball/refs/tags/{tag}", self.repo_url(repo));
        let mut auth = String::new();
        let headers = self.headers("application/vnd.github+json", &mut auth);
        let bytes = self.client.get_bytes(&url, &headers).map_err(|e| match e.status() {
            Some(404) => IngestError::TagMissing(tag.to_string()),
            _ => IngestError::DownloadFailed(e.to_string()),
        })?;
        unpack_tarball(&bytes, dest)
    }

    fn fetch_commit(&self, repo: &RepoLocator, sha: &str) -> Result<(String, String), IngestError> {
        if repo.host != "github.com" {
            return self.fallback.fetch_commit(repo, sha);
        }
        let url = format!("{}/commits/{sha}", self.repo_url(repo));
        let mut auth = String::new();
        let diff = self
            .client
            .get_text(&url, &self.headers("application/vnd.github.diff", &mut auth))
            .map_err(|e| IngestError::DiffUnavailable(e.to_string()))?;
        let mut auth = String::new();
        let message = self
            .client
            .get_text(&url, &self.headers("application/vnd.github+json", &mut auth))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v.pointer("/commit/message").and_then(|m| m.as_str()).map(String::from))
            .unwrap_or_default();
        Ok((diff, message))
    }
}

/// Unpacks a gzipped tarball whose entries share one top-level directory.
fn unpack_tarball(bytes: &[u8], dest: &Path) -> Result<(), IngestError> {
    let gz = flate2::read::GzDecoder::new(bytes);
    let mut archive = tar::Archive::new(gz);
    std::fs::create_dir_all(dest).map_err(|e| IngestError::DownloadFailed(e.to_string()))?;
    let entries = archive
        .entries()
        .map_err(|e| IngestError::DownloadFailed(e.to_string()))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| IngestError::DownloadFailed(e.to_string()))?;
        let path = entry
            .path()
            .map_err(|e| IngestError::DownloadFailed(e.to_string()))?
            .into_owned();
        let stripped: PathBuf = path.components().skip(1).collect();
        if stripped.as_os_str().is_empty() {
            continue;
        }
        if stripped
            .components()
            .any(|c| matches!(c, std::path::Component::ParentDir))
        {
            return Err(IngestError::DownloadFailed(format!(
                "archive entry escapes destination: {}",
                path.display()
            )));
        }
        let target = dest.join(stripped);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(|e| IngestError::DownloadFailed(e.to_string()))?;
        }
        entry
            .unpack(target)
            .map_err(|e| IngestError::DownloadFailed(e.to_string()))?;
    }
    Ok(())
}

/// Plain `git` client. With `local_root` set, repositories are resolved to
/// `<local_root>/<owner>/<name>` instead of their hosting URL.
#[derive(Debug, Clone, Default)]
pub struct GitCli {
    pub local_root: Option<PathBuf>,
}

impl GitCli {
    fn remote(&self, repo: &RepoLocator) -> String {
        match &self.local_root {
            Some(root) => root
                .join(&repo.owner)
                .join(&repo.name)
                .to_string_lossy()
                .into_owned(),
            None => repo.clone_url(),
        }
    }
}

fn git(args: &[&str], cwd: Option<&Path>) -> Result<String, String> {
    let mut cmd = Command::new("git");
    cmd.args(args).env("GIT_TERMINAL_PROMPT", "0");
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    let out = cmd.output().map_err(|e| format!("git: {e}"))?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

impl RepoHost for GitCli {
    fn name(&self) -> &'static str {
        "git"
    }

    fn list_tags(&self, repo: &RepoLocator) -> Result<Vec<String>, IngestError> {
        let out = git(&["ls-remote", "--tags", &self.remote(repo)], None)
            .map_err(IngestError::DownloadFailed)?;
        let mut tags = Vec::new();
        for line in out.lines() {
            if let Some(name) = line.split('\t').nth(1).and_then(|r| r.strip_prefix("refs/tags/")) {
                if !name.ends_with("^{}") {
                    tags.push(name.to_string());
                }
            }
        }
        Ok(tags)
    }

    fn download_tag(&self, repo: &RepoLocator, tag: &str, dest: &Path) -> Result<(), IngestError> {
        if !self.list_tags(repo)?.iter().any(|t| t == tag) {
            return Err(IngestError::TagMissing(tag.to_string()));
        }
        let dest_str = dest.to_string_lossy();
        git(
            &["clone", "--quiet", "--depth", "1", "--branch", tag, &self.remote(repo), &dest_str],
            None,
        )
        .map_err(IngestError::DownloadFailed)?;
        let _ = std::fs::remove_dir_all(dest.join(".git"));
        Ok(())
    }

    fn fetch_commit(&self, repo: &RepoLocator, sha: &str) -> Result<(String, String), IngestError> {
        let tmp = std::env::temp_dir().join(format!("cveforge-git-{}", uuid::Uuid::new_v4().simple()));
        let tmp_str = tmp.to_string_lossy().into_owned();
        let result = (|| {
            git(&["clone", "--quiet", "--bare", &self.remote(repo), &tmp_str], None)?;
            let diff = git(&["show", "--no-color", "--format=", sha], Some(&tmp))?;
            let message = git(&["log", "-1", "--format=%B", sha], Some(&tmp))?;
            Ok::<_, String>((diff, message.trim_end().to_string()))
        })();
        let _ = std::fs::remove_dir_all(&tmp);
        result.map_err(IngestError::DiffUnavailable)
    }
}

/// Offline repository host laid out as
/// `<root>/<owner>/<name>/tags/<tag>/...` and `<root>/<owner>/<name>/commits/<sha>.{diff,msg}`.
#[derive(Debug, Clone)]
pub struct FixtureRepoHost {
    pub root: PathBuf,
}

impl FixtureRepoHost {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn repo_dir(&self, repo: &RepoLocator) -> PathBuf {
        self.root.join(&repo.owner).join(&repo.name)
    }
}

impl RepoHost for FixtureRepoHost {
    fn name(&self) -> &'static str {
        "fixture"
    }

    fn list_tags(&self, repo: &RepoLocator) -> Result<Vec<String>, IngestError> {
        let dir = self.repo_dir(repo).join("tags");
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| IngestError::DownloadFailed(format!("{}: {e}", dir.display())))?;
        let mut tags: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        tags.sort();
        Ok(tags)
    }

    fn download_tag(&self, repo: &RepoLocator, tag: &str, dest: &Path) -> Result<(), IngestError> {
        let src = self.repo_dir(repo).join("tags").join(tag);
        if !src.is_dir() {
            return Err(IngestError::TagMissing(tag.to_string()));
        }
        fsutil::copy_dir(&src, dest).map_err(|e| IngestError::DownloadFailed(e.to_string()))
    }

    fn fetch_commit(&self, repo: &RepoLocator, sha: &str) -> Result<(String, String), IngestError> {
        let base = self.repo_dir(repo).join("commits");
        let diff = std::fs::read_to_string(base.join(format!("{sha}.diff")))
            .map_err(|e| IngestError::DiffUnavailable(format!("{sha}: {e}")))?;
        let message = std::fs::read_to_string(base.join(format!("{sha}.msg"))).unwrap_or_default();
        Ok((diff, message.trim_end().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tarball(entries: &[(&str, &str)]) -> Vec<u8> {
        let gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        let mut builder = tar::Builder::new(gz);
        for (path, body) in entries {
            let mut header = tar::Header::new_gnu();
            header.set_size(body.len() as u64);
            header.set_mode(0o644);
            header.set_cksum();
            builder.append_data(&mut header, path, body.as_bytes()).unwrap();
        }
        builder.into_inner().unwrap().finish().unwrap()
    }

    #[test]
    fn tarball_top_dir_is_stripped() {
        let bytes = tarball(&[("repo-abc/README.md", "hi"), ("repo-abc/pkg/mod.py", "x=1")]);
        let dest = tempfile::tempdir().unwrap();
        unpack_tarball(&bytes, dest.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dest.path().join("README.md")).unwrap(), "hi");
        assert!(dest.path().join("pkg/mod.py").is_file());
    }

    #[test]
    fn fixture_host_missing_tag() {
        let root = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(root.path().join("o/r/tags/1.0.0")).unwrap();
        let host = FixtureRepoHost::new(root.path());
        let repo = RepoLocator {
            host: "github.com".into(),
            owner: "o".into(),
            name: "r".into(),
        };
        assert_eq!(host.list_tags(&repo).unwrap(), vec!["1.0.0"]);
        let dest = tempfile::tempdir().unwrap();
        assert!(matches!(
            host.download_tag(&repo, "9.9.9", dest.path()),
            Err(IngestError::TagMissing(_))
        ));
        assert!(matches!(
            host.fetch_commit(&repo, "abcdef1"),
            Err(IngestError::DiffUnavailable(_))
        ));
    }
}
