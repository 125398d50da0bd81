//! Generators and independent reference implementations.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

use tdbot::clock::{Clock, ManualClock};
use tdbot::config::{
    AnalyzedPart, BotConfig, DetectionSettings, EmailSettings, LingeringMode, LingeringSettings,
    LINGERING_TEMPLATE_KEY,
};
use tdbot::forge::{FakeForge, Issue, IssueState};
use tdbot::lingering::Scheduler;
use tdbot::notifier::double::RecordingSmtp;
use tdbot::notifier::SmtpMailer;

use super::{at, repo, smtp_settings};

/// HMAC-SHA256 from the definition: H((K ^ opad) || H((K ^ ipad) || m)).
pub fn reference_hmac(key: &[u8], msg: &[u8]) -> String {
    let mut block = [0u8; 64];
    if key.len() > 64 {
        block[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        block[..key.len()].copy_from_slice(key);
    }
    let ipad: Vec<u8> = block.iter().map(|b| b ^ 0x36).collect();
    let opad: Vec<u8> = block.iter().map(|b| b ^ 0x5c).collect();
    let inner = Sha256::new().chain_update(&ipad).chain_update(msg).finalize();
    let outer = Sha256::new().chain_update(&opad).chain_update(inner).finalize();
    hex::encode(outer)
}

/// RFC 4231 test cases 1-4, 6 and 7 (case 5 is truncated output).
pub fn rfc4231() -> Vec<(Vec<u8>, Vec<u8>, &'static str)> {
    vec![
        (vec![0x0b; 20], b"Hi There".to_vec(), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"),
        (b"Jefe".to_vec(), b"what do ya want for nothing?".to_vec(), "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"),
        (vec![0xaa; 20], vec![0xdd; 50], "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe"),
        ((1u8..=25).collect(), vec![0xcd; 50], "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b"),
        (vec![0xaa; 131], b"Test Using Larger Than Block-Size Key - Hash Key First".to_vec(), "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54"),
        (
            vec![0xaa; 131],
            b"This is a test using a larger than block-size key and a larger than block-size data. The key needs to be hashed before being used by the HMAC algorithm.".to_vec(),
            "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2",
        ),
    ]
}

fn label() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("TD".to_string()),
        Just("non-TD".to_string()),
        "[a-z][a-z0-9-]{0,10}",
    ]
}

fn address() -> impl Strategy<Value = String> {
    ("[a-z][a-z0-9.]{0,8}", "[a-z]{1,8}\\.[a-z]{2,3}").prop_map(|(l, d)| format!("{l}@{d}"))
}

fn templates(keys: Vec<String>, single_line: bool) -> impl Strategy<Value = BTreeMap<String, String>> {
    let text = if single_line {
        "[ -~]{0,30}".boxed()
    } else {
        "[ -~\n]{0,60}".boxed()
    };
    proptest::collection::vec((proptest::sample::select(keys), text), 0..4)
        .prop_map(|pairs| pairs.into_iter().collect())
}

fn email() -> impl Strategy<Value = EmailSettings> {
    (
        any::<bool>(),
        proptest::collection::btree_set(label(), 0..4),
        proptest::collection::vec(address(), 0..4),
    )
        .prop_flat_map(|(send, when, recipients)| {
            let mut keys: Vec<String> = when.iter().cloned().collect();
            keys.push(LINGERING_TEMPLATE_KEY.to_string());
            (
                Just(send),
                Just(when),
                Just(recipients),
                templates(keys.clone(), true),
                templates(keys, false),
            )
        })
        .prop_map(|(send_emails, when_to_send, recipients, subject_templates, body_templates)| {
            EmailSettings {
                send_emails,
                when_to_send,
                recipients,
                subject_templates,
                body_templates,
            }
        })
}

fn detection() -> impl Strategy<Value = DetectionSettings> {
    (
        prop_oneof![Just("heuristic".to_string()), Just("rest".to_string()), "[a-z][a-z0-9_-]{0,12}"],
        prop_oneof![
            Just(AnalyzedPart::Title),
            Just(AnalyzedPart::Description),
            Just(AnalyzedPart::Both)
        ],
        proptest::collection::btree_map("[a-z-]{1,10}", "[ -~]{0,20}", 0..3),
    )
        .prop_map(|(plugin_type, analyzed_part, plugin_params)| DetectionSettings {
            plugin_type,
            analyzed_part,
            plugin_params,
        })
}

fn lingering() -> impl Strategy<Value = LingeringSettings> {
    (
        1u32..=10_000,
        prop_oneof![Just(LingeringMode::Creation), Just(LingeringMode::LastModified)],
        1u32..=10_000,
    )
        .prop_map(|(threshold_days, mode, check_frequency_hours)| LingeringSettings {
            threshold_days,
            mode,
            check_frequency_hours,
        })
}

/// Any configuration `parse_config` must accept.
pub fn valid_config() -> impl Strategy<Value = BotConfig> {
    (detection(), email(), lingering(), any::<bool>(), any::<bool>()).prop_map(
        |(detection, email, lingering, welcome_comment, auto_label_on_creation)| BotConfig {
            detection,
            email,
            lingering,
            welcome_comment,
            auto_label_on_creation,
        },
    )
}

/// Fixed "now" for the lingering suites.
pub fn scan_now() -> DateTime<Utc> {
    at("2025-03-01T00:00:00Z")
}

#[derive(Debug, Clone)]
pub struct IssueSeed {
    pub created_ago_s: i64,
    pub touched_after_s: i64,
    pub open: bool,
}

impl IssueSeed {
    fn times(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        let created = scan_now() - Duration::seconds(self.created_ago_s);
        let updated = created + Duration::seconds(self.touched_after_s.min(self.created_ago_s));
        (created, updated)
    }
}

pub fn issue_seed() -> impl Strategy<Value = IssueSeed> {
    (0i64..200 * 86_400, 0i64..200 * 86_400, any::<bool>()).prop_map(|(c, t, open)| IssueSeed {
        created_ago_s: c,
        touched_after_s: t,
        open,
    })
}

pub fn seed_forge(seeds: &[IssueSeed]) -> FakeForge {
    let forge = FakeForge::new();
    forge.add_repo(&repo());
    for (i, s) in seeds.iter().enumerate() {
        let (created, updated) = s.times();
        let mut issue = Issue::new(repo(), i as u64 + 1, &format!("issue {i}"), "", created);
        issue.updated_at = updated;
        issue.state = if s.open { IssueState::Open } else { IssueState::Closed };
        forge.put_issue(issue);
    }
    forge
}

/// Brute force: every issue, filtered and sorted from scratch.
pub fn lingering_oracle(seeds: &[IssueSeed], threshold: u32, mode: LingeringMode) -> Vec<(u64, i64)> {
    let mut out: Vec<(u64, i64)> = seeds
        .iter()
        .enumerate()
        .filter(|(_, s)| s.open)
        .map(|(i, s)| {
            let (created, updated) = s.times();
            let reference = match mode {
                LingeringMode::Creation => created,
                LingeringMode::LastModified => updated,
            };
            (i as u64 + 1, scan_now().signed_duration_since(reference).num_days())
        })
        .filter(|(_, d)| *d >= i64::from(threshold))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// (elapsed hours, frequency hours)
pub const TICK_PAIRS: &[(i64, u32)] = &[
    (0, 1), (1, 1), (5, 2), (24, 24), (23, 24), (25, 24), (48, 24), (100, 7),
    (168, 24), (169, 12), (3, 4), (72, 1), (1000, 33), (500, 500), (499, 500),
    (720, 6), (10, 3), (60, 60), (61, 30), (365, 24),
];

/// Number of ticks a scheduler performs over `elapsed_h` of manual time.
pub fn scheduler_ticks(elapsed_h: i64, frequency_h: u32) -> usize {
    let start = scan_now();
    let deadline = start + Duration::hours(elapsed_h);
    let clock = Arc::new(ManualClock::new(start));
    let forge = Arc::new(FakeForge::with_clock(clock.clone()));
    forge.add_repo(&repo());
    let mailer = Arc::new(SmtpMailer::new(smtp_settings(), Arc::new(RecordingSmtp::new())));
    let scheduler = Scheduler::new(forge.clone(), forge, mailer, clock.clone(), frequency_h);
    let ticks = scheduler.run_until(Some(deadline)).len();
    assert!(clock.now() <= deadline);
    ticks
}
