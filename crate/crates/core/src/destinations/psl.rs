//! Public suffix list parsing and effective second-level domain extraction.
//!
//! Implements the standard prevailing-rule semantics over a pinned local
//! snapshot: exception rules win, otherwise the longest matching rule, with
//! the implicit `*` rule for unlisted TLDs. No network fetches.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleKind {
    Normal,
    Wildcard,
    Exception,
}

#[derive(Debug, Clone)]
pub struct PublicSuffixList {
    // rule body (without "*." / "!") -> kind
    rules: HashMap<String, RuleKind>,
}

impl PublicSuffixList {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = HashMap::new();
        for line in text.lines() {
            let line = line.split_whitespace().next().unwrap_or("");
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let (kind, body) = if let Some(rest) = line.strip_prefix('!') {
                (RuleKind::Exception, rest)
            } else if let Some(rest) = line.strip_prefix("*.") {
                (RuleKind::Wildcard, rest)
            } else {
                (RuleKind::Normal, line)
            };
            if body.is_empty() {
                return Err(Error::Psl(format!("malformed rule {line:?}")));
            }
            rules.insert(body.to_ascii_lowercase(), kind);
        }
        if rules.is_empty() {
            return Err(Error::Psl("suffix list contains no rules".into()));
        }
        Ok(PublicSuffixList { rules })
    }

    /// Number of labels in the public suffix of `fqdn` under the prevailing
    /// rule, or None when no label remains registrable.
    fn suffix_label_count(&self, labels: &[String]) -> usize {
        let n = labels.len();
        let mut exception: Option<usize> = None;
        let mut longest: usize = 0;
        for start in 0..n {
            let candidate = labels[start..].join(".");
            match self.rules.get(&candidate) {
                Some(RuleKind::Exception) => {
                    // Public suffix is the exception rule minus its first label.
                    exception = Some(n - start - 1);
                }
                Some(RuleKind::Normal) => {
                    longest = longest.max(n - start);
                }
                Some(RuleKind::Wildcard) => {
                    // "*.body": body plus exactly one more label is public.
                    if start > 0 {
                        longest = longest.max(n - start + 1);
                    }
                }
                None => {}
            }
        }
        if let Some(e) = exception {
            return e;
        }
        if longest > 0 {
            return longest;
        }
        1 // implicit "*" rule: the TLD itself
    }

    /// Extract the registrable domain (one label beyond the longest matching
    /// public suffix).
    pub fn esld(&self, fqdn: &str) -> Result<String> {
        let fqdn = fqdn.trim_end_matches('.').to_ascii_lowercase();
        if fqdn.is_empty() {
            return Err(Error::NoRegistrableDomain {
                fqdn,
                reason: "empty host".into(),
            });
        }
        if fqdn.parse::<std::net::IpAddr>().is_ok() {
            return Err(Error::NoRegistrableDomain {
                fqdn,
                reason: "IP literal".into(),
            });
        }
        let labels: Vec<String> = fqdn.split('.').map(|s| s.to_string()).collect();
        if labels.iter().any(|l| l.is_empty()) {
            return Err(Error::NoRegistrableDomain {
                fqdn,
                reason: "empty label".into(),
            });
        }
        let suffix_len = self.suffix_label_count(&labels);
        if labels.len() <= suffix_len {
            return Err(Error::NoRegistrableDomain {
                fqdn,
                reason: "host is a bare public suffix".into(),
            });
        }
        Ok(labels[labels.len() - suffix_len - 1..].join("."))
    }
}
