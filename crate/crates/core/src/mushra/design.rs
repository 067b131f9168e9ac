//! Balanced assignment of utterances to listeners.
//!
//! Plan file: tab-separated, header `utterance_id  domain  <system>...`
//! where each system column holds that system's audio path. Directives in
//! comment lines set the test shape:
//!
//! ```text
//! # listeners = 50
//! # screens_per_listener = 40
//! # ratings_per_utterance = 10
//! # seed = 7
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MushraError;

/// Reshuffles per domain before giving up.
pub const MAX_RETRIES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanUtterance {
    pub id: String,
    pub domain: String,
    /// Audio path per system.
    pub audio: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestPlan {
    pub utterances: Vec<PlanUtterance>,
    pub systems: Vec<String>,
    pub n_listeners: usize,
    pub screens_per_listener: usize,
    pub ratings_per_utterance: usize,
    pub seed: u64,
}

impl TestPlan {
    pub fn parse(text: &str) -> Result<Self, MushraError> {
        let mut directives: HashMap<String, String> = HashMap::new();
        let mut header: Option<Vec<String>> = None;
        let mut utterances = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(c) = line.trim_start().strip_prefix('#') {
                if let Some((k, v)) = c.split_once('=') {
                    directives.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let cols: Vec<String> = line.split('\t').map(|c| c.trim().to_string()).collect();
            match &header {
                None => {
                    if cols.len() < 3 || cols[0] != "utterance_id" || cols[1] != "domain" {
                        return Err(MushraError::Plan(format!(
                            "line {lineno}: header must be `utterance_id<TAB>domain<TAB>system...`"
                        )));
                    }
                    header = Some(cols);
                }
                Some(h) => {
                    if cols.len() != h.len() {
                        return Err(MushraError::Plan(format!(
                            "line {lineno}: {} columns, header has {}",
                            cols.len(),
                            h.len()
                        )));
                    }
                    let audio = h[2..]
                        .iter()
                        .cloned()
                        .zip(cols[2..].iter().cloned())
                        .collect();
                    utterances.push(PlanUtterance {
                        id: cols[0].clone(),
                        domain: cols[1].clone(),
                        audio,
                    });
                }
            }
        }
        let header = header.ok_or_else(|| MushraError::Plan("missing header".into()))?;
        let num = |k: &str| -> Result<Option<u64>, MushraError> {
            directives
                .get(k)
                .map(|v| {
                    v.parse::<u64>().map_err(|_| {
                        MushraError::Plan(format!("directive {k}: `{v}` is not a number"))
                    })
                })
                .transpose()
        };
        let required = |k: &str| {
            num(k)?.ok_or_else(|| MushraError::Plan(format!("missing `# {k} = N` directive")))
        };
        let plan = Self {
            utterances,
            systems: header[2..].to_vec(),
            n_listeners: required("listeners")? as usize,
            screens_per_listener: required("screens_per_listener")? as usize,
            ratings_per_utterance: required("ratings_per_utterance")? as usize,
            seed: num("seed")?.unwrap_or(0),
        };
        plan.check_basic()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, MushraError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# listeners = {}\n# screens_per_listener = {}\n# ratings_per_utterance = {}\n# seed = {}\nutterance_id\tdomain",
            self.n_listeners, self.screens_per_listener, self.ratings_per_utterance, self.seed
        );
        for sys in &self.systems {
            s.push('\t');
            s.push_str(sys);
        }
        s.push('\n');
        for u in &self.utterances {
            s.push_str(&u.id);
            s.push('\t');
            s.push_str(&u.domain);
            for sys in &self.systems {
                s.push('\t');
                s.push_str(u.audio.get(sys).map(String::as_str).unwrap_or(""));
            }
            s.push('\n');
        }
        s
    }

    fn check_basic(&self) -> Result<(), MushraError> {
        if self.utterances.is_empty() {
            return Err(MushraError::Plan("no utterances".into()));
        }
        if self.systems.len() < 2 {
            return Err(MushraError::Plan("at least two systems are needed".into()));
        }
        let mut seen = HashSet::new();
        for s in &self.systems {
            if !seen.insert(s) {
                return Err(MushraError::Plan(format!("duplicate system {s}")));
            }
        }
        let mut seen = HashSet::new();
        for u in &self.utterances {
            if !seen.insert(&u.id) {
                return Err(MushraError::Plan(format!("duplicate utterance {}", u.id)));
            }
        }
        Ok(())
    }

    /// Domains in order of first appearance.
    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for u in &self.utterances {
            if !out.contains(&u.domain) {
                out.push(u.domain.clone());
            }
        }
        out
    }
}

/// Screens per listener for each domain: `S · n_d / U`, which must be integral.
pub fn domain_quota(plan: &TestPlan) -> Result<Vec<(String, usize)>, MushraError> {
    let total = plan.utterances.len();
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for d in plan.domains() {
        let n = plan.utterances.iter().filter(|u| u.domain == d).count();
        let num = plan.screens_per_listener * n;
        if num % total != 0 {
            bad.push(format!(
                "{d}: {} × {n} / {total} leaves remainder {}",
                plan.screens_per_listener,
                num % total
            ));
        }
        out.push((d, num / total));
    }
    if !bad.is_empty() {
        return Err(MushraError::NonIntegralQuota(bad.join("; ")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub screen_id: String,
    pub utterance_id: String,
    /// On-screen order of systems (slot 1 first).
    pub system_order: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListenerAssignment {
    pub listener_id: String,
    pub screens: Vec<Screen>,
}

/// Output of [`build_assignment`]; self-contained so the eval service needs
/// nothing else (utterance domains and audio paths travel with it).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub seed: u64,
    pub systems: Vec<String>,
    pub ratings_per_utterance: usize,
    pub utterances: Vec<PlanUtterance>,
    pub listeners: Vec<ListenerAssignment>,
}

impl Assignment {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MushraError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, MushraError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn listener(&self, id: &str) -> Option<&ListenerAssignment> {
        self.listeners.iter().find(|l| l.listener_id == id)
    }

    pub fn utterance(&self, id: &str) -> Option<&PlanUtterance> {
        self.utterances.iter().find(|u| u.id == id)
    }
}

pub fn listener_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("L{i:0width$}")).collect()
}

/// Seeded round-robin per domain: each pass over a freshly shuffled domain
/// list is dealt in consecutive blocks of the domain quota to listeners (in
/// a seeded order), `ratings_per_utterance` passes in total. A block that
/// would give a listener the same utterance twice triggers a reshuffle of
/// that domain, up to [`MAX_RETRIES`] times. Screen order per listener and
/// system order per screen are seeded shuffles.
pub fn build_assignment(plan: &TestPlan) -> Result<Assignment, MushraError> {
    let (l, s, u, r) = (
        plan.n_listeners,
        plan.screens_per_listener,
        plan.utterances.len(),
        plan.ratings_per_utterance,
    );
    if l == 0 || s == 0 || r == 0 || l * s != u * r {
        return Err(MushraError::Infeasible(format!(
            "{l} listeners × {s} screens = {} but {u} utterances × {r} ratings = {}",
            l * s,
            u * r
        )));
    }
    let quotas = domain_quota(plan)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let ids = listener_ids(l);
    let mut lists: Vec<Vec<usize>> = vec![Vec::with_capacity(s); l];
    for (domain, q) in &quotas {
        let members: Vec<usize> = (0..u)
            .filter(|&i| plan.utterances[i].domain == *domain)
            .collect();
        if *q > members.len() {
            return Err(MushraError::Infeasible(format!(
                "domain {domain}: quota {q} exceeds its {} utterances",
                members.len()
            )));
        }
        let mut attempt = 0;
        let blocks = loop {
            if attempt == MAX_RETRIES {
                return Err(MushraError::RetriesExhausted {
                    seed: plan.seed,
                    domain: domain.clone(),
                });
            }
            attempt += 1;
            let mut seq = Vec::with_capacity(members.len() * r);
            for _ in 0..r {
                let mut pass = members.clone();
                pass.shuffle(&mut rng);
                seq.extend(pass);
            }
            let blocks: Vec<Vec<usize>> = seq.chunks(*q.max(&1)).map(<[usize]>::to_vec).collect();
            let clean = blocks.iter().all(|b| {
                let set: HashSet<_> = b.iter().collect();
                set.len() == b.len()
            });
            if clean {
                break blocks;
            }
        };
        if *q == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..l).collect();
        order.shuffle(&mut rng);
        for (listener, block) in order.into_iter().zip(blocks) {
            lists[listener].extend(block);
        }
    }
    let mut listeners = Vec::with_capacity(l);
    for (li, mut list) in lists.into_iter().enumerate() {
        list.shuffle(&mut rng);
        let screens = list
            .into_iter()
            .enumerate()
            .map(|(k, ui)| {
                let mut order = plan.systems.clone();
                order.shuffle(&mut rng);
                Screen {
                    screen_id: format!("{}-S{:02}", ids[li], k + 1),
                    utterance_id: plan.utterances[ui].id.clone(),
                    system_order: order,
                }
            })
            .collect();
        listeners.push(ListenerAssignment {
            listener_id: ids[li].clone(),
            screens,
        });
    }
    Ok(Assignment {
        seed: plan.seed,
        systems: plan.systems.clone(),
        ratings_per_utterance: r,
        utterances: plan.utterances.clone(),
        listeners,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    ListenerCount {
        expected: usize,
        actual: usize,
    },
    ScreenCount {
        listener: String,
        expected: usize,
        actual: usize,
    },
    DuplicateUtterance {
        listener: String,
        utterance: String,
    },
    UnknownUtterance {
        listener: String,
        utterance: String,
    },
    RatingCount {
        utterance: String,
        expected: usize,
        actual: usize,
    },
    DomainQuota {
        listener: String,
        domain: String,
        expected: usize,
        actual: usize,
    },
    SystemOrder {
        screen: String,
        detail: String,
    },
    DuplicateScreenId {
        screen: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ListenerCount { expected, actual } => {
                write!(f, "listener count {actual}, expected {expected}")
            }
            Self::ScreenCount {
                listener,
                expected,
                actual,
            } => {
                write!(
                    f,
                    "listener {listener} has {actual} screens, expected {expected}"
                )
            }
            Self::DuplicateUtterance {
                listener,
                utterance,
            } => {
                write!(
                    f,
                    "listener {listener} sees utterance {utterance} more than once"
                )
            }
            Self::UnknownUtterance {
                listener,
                utterance,
            } => {
                write!(f, "listener {listener} has unknown utterance {utterance}")
            }
            Self::RatingCount {
                utterance,
                expected,
                actual,
            } => {
                write!(
                    f,
                    "utterance {utterance} is rated {actual} times, expected {expected}"
                )
            }
            Self::DomainQuota {
                listener,
                domain,
                expected,
                actual,
            } => {
                write!(
                    f,
                    "listener {listener} has {actual} {domain} screens, quota {expected}"
                )
            }
            Self::SystemOrder { screen, detail } => write!(f, "screen {screen}: {detail}"),
            Self::DuplicateScreenId { screen } => write!(f, "screen id {screen} is used twice"),
        }
    }
}

/// Every broken invariant, in a stable order. Empty means valid.
pub fn validate_assignment(a: &Assignment, plan: &TestPlan) -> Vec<Violation> {
    let mut v = Vec::new();
    if a.listeners.len() != plan.n_listeners {
        v.push(Violation::ListenerCount {
            expected: plan.n_listeners,
            actual: a.listeners.len(),
        });
    }
    let domain_of: HashMap<&str, &str> = plan
        .utterances
        .iter()
        .map(|u| (u.id.as_str(), u.domain.as_str()))
        .collect();
    let quotas = domain_quota(plan).ok();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut screen_ids = HashSet::new();
    let systems: HashSet<&String> = plan.systems.iter().collect();
    for l in &a.listeners {
        if l.screens.len() != plan.screens_per_listener {
            v.push(Violation::ScreenCount {
                listener: l.listener_id.clone(),
                expected: plan.screens_per_listener,
                actual: l.screens.len(),
            });
        }
        let mut seen = HashSet::new();
        let mut per_domain: HashMap<&str, usize> = HashMap::new();
        for sc in &l.screens {
            if !screen_ids.insert(sc.screen_id.as_str()) {
                v.push(Violation::DuplicateScreenId {
                    screen: sc.screen_id.clone(),
                });
            }
            let uid = sc.utterance_id.as_str();
            match domain_of.get(uid) {
                None => v.push(Violation::UnknownUtterance {
                    listener: l.listener_id.clone(),
                    utterance: uid.to_string(),
                }),
                Some(d) => {
                    *per_domain.entry(d).or_default() += 1;
                    *counts.entry(uid).or_default() += 1;
                }
            }
            if !seen.insert(uid) {
                v.push(Violation::DuplicateUtterance {
                    listener: l.listener_id.clone(),
                    utterance: uid.to_string(),
                });
            }
            let order: HashSet<&String> = sc.system_order.iter().collect();
            if sc.system_order.len() != plan.systems.len() || order != systems {
                v.push(Violation::SystemOrder {
                    screen: sc.screen_id.clone(),
                    detail: format!(
                        "system order {:?} is not a permutation of {:?}",
                        sc.system_order, plan.systems
                    ),
                });
            }
        }
        if let Some(q) = &quotas {
            for (d, expected) in q {
                let actual = per_domain.get(d.as_str()).copied().unwrap_or(0);
                if actual != *expected {
                    v.push(Violation::DomainQuota {
                        listener: l.listener_id.clone(),
                        domain: d.clone(),
                        expected: *expected,
                        actual,
                    });
                }
            }
        }
    }
    for u in &plan.utterances {
        let actual = counts.get(u.id.as_str()).copied().unwrap_or(0);
        if actual != plan.ratings_per_utterance {
            v.push(Violation::RatingCount {
                utterance: u.id.clone(),
                expected: plan.ratings_per_utterance,
                actual,
            });
        }
    }
    v
}

/// The listening-test shape used throughout the evaluation: 4 systems,
/// 9 domains, 200 utterances, 50 listeners × 40 screens, 10 ratings each.
pub fn reference_plan(seed: u64) -> TestPlan {
    const DOMAINS: [(&str, usize); 9] = [
        ("entertainment", 25),
        ("infotainment", 25),
        ("texting", 25),
        ("accessibility", 15),
        ("calling", 25),
        ("flash-briefing", 15),
        ("news", 35),
        ("spelling", 10),
        ("navigation", 25),
    ];
    let systems: Vec<String> = ["recordings", "SSWS", "hybrid", "SPSS"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut utterances = Vec::new();
    for (d, n) in DOMAINS {
        for k in 0..n {
            let id = format!("{d}_{:02}", k + 1);
            let audio = systems
                .iter()
                .map(|s| (s.clone(), format!("{s}/{id}.wav")))
                .collect();
            utterances.push(PlanUtterance {
                id,
                domain: d.to_string(),
                audio,
            });
        }
    }
    TestPlan {
        utterances,
        systems,
        n_listeners: 50,
        screens_per_listener: 40,
        ratings_per_utterance: 10,
        seed,
    }
}
