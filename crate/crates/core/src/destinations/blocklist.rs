//! ATS blocklist loading and FQDN matching.
//!
//! Two line formats are recognized, sniffed per line so mixed files work:
//! hosts entries (`0.0.0.0 domain`, exact-FQDN match) and plain domain-suffix
//! rules (one per line, matching the FQDN or any parent at a label boundary).
//! `#` starts a comment. A destination is an ATS when any loaded list blocks
//! its FQDN.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Blocklists {
    exact: BTreeSet<String>,
    suffix: BTreeSet<String>,
    /// Files loaded, with their raw bytes' SHA-256 for run provenance.
    pub files: Vec<(PathBuf, String)>,
}

impl Blocklists {
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut lists = Blocklists::default();
        for path in paths {
            lists.add_file(path)?;
        }
        Ok(lists)
    }

    pub fn add_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::Blocklist {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Blocklist {
            path: path.to_path_buf(),
            message: format!("not UTF-8: {e}"),
        })?;
        self.add_rules(&text);
        self.files.push((path.to_path_buf(), crate::report::sha256_hex(&bytes)));
        Ok(())
    }

    pub fn add_rules(&mut self, text: &str) {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let first = fields.next().unwrap_or("");
            match fields.next() {
                // "0.0.0.0 domain" / "127.0.0.1 domain": exact FQDN entry.
                Some(domain) if first.parse::<std::net::IpAddr>().is_ok() => {
                    self.exact.insert(domain.to_ascii_lowercase());
                }
                // Single token: domain-suffix rule.
                None => {
                    self.suffix.insert(first.to_ascii_lowercase());
                }
                // Anything else (multi-token non-hosts line) is ignored.
                Some(_) => {}
            }
        }
    }

    /// True when any loaded list blocks this FQDN.
    pub fn matches(&self, fqdn: &str) -> bool {
        let fqdn = fqdn.to_ascii_lowercase();
        if self.exact.contains(&fqdn) {
            return true;
        }
        let mut rest = fqdn.as_str();
        loop {
            if self.suffix.contains(rest) {
                return true;
            }
            match rest.find('.') {
                Some(dot) => rest = &rest[dot + 1..],
                None => return false,
            }
        }
    }

    pub fn rule_count(&self) -> usize {
        self.exact.len() + self.suffix.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lists(text: &str) -> Blocklists {
        let mut b = Blocklists::default();
        b.add_rules(text);
        b
    }

    #[test]
    fn suffix_rule_blocks_listed_domain() {
        let b = lists("doubleclick.net\n");
        assert!(b.matches("doubleclick.net"));
        assert!(b.matches("ads.doubleclick.net"));
    }

    #[test]
    fn unlisted_domain_is_not_blocked() {
        let b = lists("doubleclick.net\n");
        assert!(!b.matches("example.org"));
    }

    #[test]
    fn suffix_match_respects_label_boundaries() {
        let b = lists("tracker.example\n");
        assert!(b.matches("a.tracker.example"));
        assert!(b.matches("tracker.example"));
        assert!(!b.matches("nottracker.example"));
    }

    #[test]
    fn hosts_entries_match_exact_fqdn_only() {
        let b = lists("0.0.0.0 metrics.roblox.com\n127.0.0.1 clarity.ms # comment\n");
        assert!(b.matches("metrics.roblox.com"));
        assert!(b.matches("clarity.ms"));
        assert!(!b.matches("sub.metrics.roblox.com"));
        assert!(!b.matches("roblox.com"));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let b = lists("# header\n\n  # indented comment\nads.example.com # trailing\n");
        assert_eq!(b.rule_count(), 1);
        assert!(b.matches("ads.example.com"));
    }

    #[test]
    fn adding_lists_is_monotone() {
        let mut b = lists("a.example\n");
        let before: Vec<bool> = ["a.example", "b.example", "x.a.example"]
            .iter()
            .map(|d| b.matches(d))
            .collect();
        b.add_rules("b.example\n0.0.0.0 c.example\n");
        for (i, d) in ["a.example", "b.example", "x.a.example"].iter().enumerate() {
            if before[i] {
                assert!(b.matches(d), "adding rules must never unblock {d}");
            }
        }
        assert!(b.matches("b.example"));
    }
}
