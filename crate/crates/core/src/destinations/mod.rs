//! Destination analysis: FQDN → eSLD → owner → four-way party/ATS label.
//!
//! Party classification works at the eSLD/owner level against a per-service
//! profile; ATS matching works on the FQDN against the loaded blocklists,
//! and the two compose into one of four labels: first, first_ats, third,
//! third_ats. All reference data is immutable after load and categorization
//! is a pure function, so it parallelizes freely.

mod blocklist;
mod psl;

pub use blocklist::Blocklists;
pub use psl::PublicSuffixList;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First/third-party and ATS classification of a destination.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    First,
    Third,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DestLabel {
    First,
    FirstAts,
    Third,
    ThirdAts,
}

impl DestLabel {
    pub fn derive(party: Party, ats: bool) -> DestLabel {
        match (party, ats) {
            (Party::First, false) => DestLabel::First,
            (Party::First, true) => DestLabel::FirstAts,
            (Party::Third, false) => DestLabel::Third,
            (Party::Third, true) => DestLabel::ThirdAts,
        }
    }

    pub fn party(self) -> Party {
        match self {
            DestLabel::First | DestLabel::FirstAts => Party::First,
            DestLabel::Third | DestLabel::ThirdAts => Party::Third,
        }
    }

    pub fn is_ats(self) -> bool {
        matches!(self, DestLabel::FirstAts | DestLabel::ThirdAts)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DestLabel::First => "first",
            DestLabel::FirstAts => "first_ats",
            DestLabel::Third => "third",
            DestLabel::ThirdAts => "third_ats",
        }
    }
}

/// Fully categorized destination of a request host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DestinationRecord {
    pub fqdn: String,
    /// Registrable domain; for IP literals this holds the address itself and
    /// `non_domain` is set.
    pub esld: String,
    pub owner: Option<String>,
    pub party: Party,
    pub ats: bool,
    pub label: DestLabel,
    pub non_domain: bool,
}

/// What counts as first party for one audited service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceProfile {
    pub service: String,
    pub first_party_eslds: Vec<String>,
    #[serde(default)]
    pub owner_orgs: Vec<String>,
}

impl ServiceProfile {
    fn normalize(&mut self) -> Result<()> {
        if self.service.trim().is_empty() {
            return Err(Error::Config("service profile with empty name".into()));
        }
        for e in &mut self.first_party_eslds {
            *e = e.trim().to_ascii_lowercase();
        }
        for o in &mut self.owner_orgs {
            *o = o.trim().to_lowercase();
        }
        Ok(())
    }
}

/// Profiles for every audited service, keyed by service name.
#[derive(Debug, Clone, Default)]
pub struct ServiceProfiles {
    profiles: BTreeMap<String, ServiceProfile>,
}

impl ServiceProfiles {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, ProfileFile> =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        let mut profiles = BTreeMap::new();
        for (service, p) in raw {
            let mut profile = ServiceProfile {
                service: service.clone(),
                first_party_eslds: p.first_party_eslds,
                owner_orgs: p.owner_orgs,
            };
            profile.normalize()?;
            profiles.insert(service, profile);
        }
        Ok(ServiceProfiles { profiles })
    }

    pub fn get(&self, service: &str) -> Result<&ServiceProfile> {
        self.profiles
            .get(service)
            .ok_or_else(|| Error::Config(format!("no service profile for {service:?}")))
    }

    pub fn insert(&mut self, mut profile: ServiceProfile) -> Result<()> {
        profile.normalize()?;
        self.profiles.insert(profile.service.clone(), profile);
        Ok(())
    }

    pub fn services(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(|s| s.as_str())
    }
}

#[derive(Deserialize)]
struct ProfileFile {
    first_party_eslds: Vec<String>,
    #[serde(default)]
    owner_orgs: Vec<String>,
}

/// eSLD → owning organization, from an offline dataset snapshot.
#[derive(Debug, Clone, Default)]
pub struct EntityMap {
    map: BTreeMap<String, String>,
}

impl EntityMap {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, String> =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        Ok(Self::from_pairs(raw))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let map = pairs
            .into_iter()
            .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
            .collect();
        EntityMap { map }
    }

    /// Apply manual corrections on top of the base dataset.
    pub fn apply_overrides(&mut self, overrides: &EntityMap) {
        for (k, v) in &overrides.map {
            self.map.insert(k.clone(), v.clone());
        }
    }

    pub fn resolve_owner(&self, esld: &str) -> Option<&str> {
        self.map.get(&esld.to_ascii_lowercase()).map(|s| s.as_str())
    }
}

/// Extract the lowercase host of a URL; the flag marks IP-literal hosts.
pub fn extract_fqdn(raw_url: &str) -> Result<(String, bool)> {
    let parsed = url::Url::parse(raw_url).map_err(|e| Error::Url {
        url: raw_url.to_string(),
        message: e.to_string(),
    })?;
    match parsed.host() {
        Some(url::Host::Domain(d)) => Ok((d.to_ascii_lowercase(), false)),
        Some(url::Host::Ipv4(ip)) => Ok((ip.to_string(), true)),
        Some(url::Host::Ipv6(ip)) => Ok((ip.to_string(), true)),
        None => Err(Error::Url {
            url: raw_url.to_string(),
            message: "no host component".into(),
        }),
    }
}

/// First iff the eSLD is one of the service's own, or the resolved owner is
/// the service's organization. An unknown owner never yields first party
/// unless the eSLD matches.
pub fn classify_party(esld: &str, owner: Option<&str>, profile: &ServiceProfile) -> Party {
    if profile.first_party_eslds.iter().any(|e| e == esld) {
        return Party::First;
    }
    if let Some(owner) = owner {
        let owner = owner.to_lowercase();
        if profile.owner_orgs.iter().any(|o| *o == owner) {
            return Party::First;
        }
    }
    Party::Third
}

/// Compose FQDN extraction, eSLD extraction, ownership, party, and ATS
/// matching into one categorized record.
pub fn categorize_destination(
    raw_url: &str,
    profile: &ServiceProfile,
    psl: &PublicSuffixList,
    entities: &EntityMap,
    blocklists: &Blocklists,
) -> Result<DestinationRecord> {
    let (fqdn, is_ip) = extract_fqdn(raw_url)?;
    if is_ip {
        return Ok(DestinationRecord {
            esld: fqdn.clone(),
            fqdn,
            owner: None,
            party: Party::Third,
            ats: false,
            label: DestLabel::Third,
            non_domain: true,
        });
    }
    let esld = psl.esld(&fqdn)?;
    let owner = entities.resolve_owner(&esld).map(|s| s.to_string());
    let party = classify_party(&esld, owner.as_deref(), profile);
    let ats = blocklists.matches(&fqdn);
    Ok(DestinationRecord {
        fqdn,
        esld,
        owner,
        party,
        ats,
        label: DestLabel::derive(party, ats),
        non_domain: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psl() -> PublicSuffixList {
        PublicSuffixList::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/data/public_suffix_list.dat"
        ))
        .unwrap()
    }

    fn profile(service: &str, eslds: &[&str], orgs: &[&str]) -> ServiceProfile {
        let mut p = ServiceProfile {
            service: service.into(),
            first_party_eslds: eslds.iter().map(|s| s.to_string()).collect(),
            owner_orgs: orgs.iter().map(|s| s.to_string()).collect(),
        };
        p.normalize().unwrap();
        p
    }

    #[test]
    fn fqdn_extraction() {
        assert_eq!(
            extract_fqdn("https://metrics.roblox.com/v1/x?y=1").unwrap(),
            ("metrics.roblox.com".into(), false)
        );
        assert_eq!(
            extract_fqdn("https://EXAMPLE.com:8443/").unwrap(),
            ("example.com".into(), false)
        );
        assert_eq!(extract_fqdn("https://10.0.0.5/x").unwrap(), ("10.0.0.5".into(), true));
        assert!(extract_fqdn("not a url").is_err());
    }

    #[test]
    fn party_classification() {
        let roblox = profile("roblox", &["roblox.com"], &[]);
        assert_eq!(classify_party("roblox.com", None, &roblox), Party::First);

        let minecraft = profile("minecraft", &["minecraft.net"], &["Microsoft"]);
        assert_eq!(
            classify_party("clarity.ms", Some("Microsoft"), &minecraft),
            Party::First
        );

        let quizlet = profile("quizlet", &["quizlet.com"], &["Quizlet"]);
        assert_eq!(
            classify_party("doubleclick.net", Some("Google"), &quizlet),
            Party::Third
        );
        // Unknown owner never yields first unless the eSLD matches.
        assert_eq!(classify_party("mystery.com", None, &quizlet), Party::Third);
    }

    #[test]
    fn party_is_invariant_to_subdomain_choice() {
        let p = profile("roblox", &["roblox.com"], &[]);
        let psl = psl();
        for fqdn in ["roblox.com", "www.roblox.com", "a.b.c.roblox.com"] {
            let esld = psl.esld(fqdn).unwrap();
            assert_eq!(classify_party(&esld, None, &p), Party::First);
        }
    }

    #[test]
    fn categorization_composes() {
        let psl = psl();
        let mut lists = Blocklists::default();
        lists.add_rules("metrics.roblox.com\ngoogle-analytics.com\n");
        let entities = EntityMap::from_pairs([
            ("doubleclick.net".to_string(), "Google".to_string()),
            ("google-analytics.com".to_string(), "Google".to_string()),
        ]);

        let roblox = profile("roblox", &["roblox.com"], &["Roblox"]);
        let rec = categorize_destination(
            "https://metrics.roblox.com/v1/collect",
            &roblox,
            &psl,
            &entities,
            &lists,
        )
        .unwrap();
        assert_eq!(rec.label, DestLabel::FirstAts);

        let duolingo = profile("duolingo", &["duolingo.com"], &["Duolingo"]);
        let rec = categorize_destination(
            "https://google-analytics.com/collect",
            &duolingo,
            &psl,
            &entities,
            &lists,
        )
        .unwrap();
        assert_eq!(rec.label, DestLabel::ThirdAts);
        assert_eq!(rec.owner.as_deref(), Some("Google"));

        let rec = categorize_destination(
            "https://duolingo.com/api",
            &duolingo,
            &psl,
            &entities,
            &lists,
        )
        .unwrap();
        assert_eq!(rec.label, DestLabel::First);
    }

    #[test]
    fn ip_literal_is_flagged_third_non_ats() {
        let psl = psl();
        let lists = Blocklists::default();
        let entities = EntityMap::default();
        let p = profile("svc", &["svc.com"], &[]);
        let rec =
            categorize_destination("https://10.0.0.5/x", &p, &psl, &entities, &lists).unwrap();
        assert!(rec.non_domain);
        assert_eq!(rec.label, DestLabel::Third);
        assert!(!rec.ats);
        assert_eq!(rec.owner, None);
    }

    #[test]
    fn label_is_a_pure_function_of_party_and_ats() {
        for (party, ats, expected) in [
            (Party::First, false, DestLabel::First),
            (Party::First, true, DestLabel::FirstAts),
            (Party::Third, false, DestLabel::Third),
            (Party::Third, true, DestLabel::ThirdAts),
        ] {
            let label = DestLabel::derive(party, ats);
            assert_eq!(label, expected);
            assert_eq!(label.party(), party);
            assert_eq!(label.is_ats(), ats);
        }
    }

    #[test]
    fn owner_overrides_replace_base_entries() {
        let mut base = EntityMap::from_pairs([
            ("a.com".to_string(), "Alpha".to_string()),
            ("b.com".to_string(), "Beta".to_string()),
        ]);
        let overrides = EntityMap::from_pairs([("B.COM".to_string(), "Bravo".to_string())]);
        base.apply_overrides(&overrides);
        assert_eq!(base.resolve_owner("a.com"), Some("Alpha"));
        assert_eq!(base.resolve_owner("b.com"), Some("Bravo"));
        assert_eq!(base.resolve_owner("c.com"), None);
    }
}
