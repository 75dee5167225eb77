//! Acceptance suite. Each criterion prints one PASS or FAIL line; the test
//! fails if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use funnelbot_core::aggregator::{collapsible_blocks, is_managed_body};
use funnelbot_core::config::{is_allowed, parse_config, Suppression};
use funnelbot_core::forge::{sign, verify_signature, Mutation, SIGNATURE_HEADER};
use funnelbot_core::replay::{replay, replay_with, ReplayOptions, TimelineFile};
use funnelbot_core::{
    apply_event, build_document, detect_bot, AggregatedDocument, ForgeEventEnvelope, RepoConfig,
    MARKER,
};
use funnelbot_stats::{
    cliffs_delta_ordinal, magnitude_of, mann_whitney, mann_whitney_ordinal, LikertSample,
    Magnitude, Method,
};

use common::{policy, random_timeline};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_comment_invariant() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    for case in 0..1000 {
        let timeline = random_timeline(&mut rng, 50);
        let suppression = if case % 3 == 0 {
            Suppression::Delete
        } else {
            Suppression::Minimize
        };
        let config = policy(suppression);
        let options = ReplayOptions {
            config_text: Some(config.to_canonical_yaml()),
            ..ReplayOptions::default()
        };
        let run = replay_with(&timeline, &options).map_err(|e| e.to_string())?;
        let comments = run.forge.comments(&run.repo, run.pr_number);
        let markers = comments
            .iter()
            .filter(|c| is_managed_body(&c.body) && !c.minimized)
            .count();
        let visible_originals = comments
            .iter()
            .filter(|c| !c.minimized && !is_managed_body(&c.body))
            .filter(|c| {
                detect_bot(&c.author_login, c.author_kind, &config)
                    && is_allowed(&c.author_login, &config)
            })
            .count();
        ensure(markers == 1, || {
            format!("case {case}: {markers} managed comments")
        })?;
        ensure(visible_originals == 0, || {
            format!("case {case}: {visible_originals} visible allowed-bot originals")
        })?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("1000 timelines in {elapsed:.2?}"))
}

fn fold(timeline: &TimelineFile, config: &RepoConfig) -> AggregatedDocument {
    timeline
        .events
        .iter()
        .fold(AggregatedDocument::empty(config), |doc, e| {
            apply_event(&doc, e, config).unwrap()
        })
}

fn fold_batch_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = policy(Suppression::Minimize);
    for case in 0..1000 {
        let timeline = random_timeline(&mut rng, 50);
        let batch = build_document(&timeline.events, &config).map_err(|e| e.to_string())?;
        ensure(fold(&timeline, &config) == batch, || {
            format!("case {case} differs")
        })?;
    }
    Ok("1000 timelines".into())
}

fn crash_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..250 {
        let timeline = random_timeline(&mut rng, 50);
        let suppression = if case % 2 == 0 {
            Suppression::Minimize
        } else {
            Suppression::Delete
        };
        let text = policy(suppression).to_canonical_yaml();
        let cut = rng.random_range(0..timeline.events.len());
        let base = ReplayOptions {
            config_text: Some(text),
            ..ReplayOptions::default()
        };
        let whole = replay_with(&timeline, &base).map_err(|e| e.to_string())?;
        let resumed = replay_with(
            &timeline,
            &ReplayOptions {
                restart_after: Some(cut),
                ..base
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(whole.report.rendered == resumed.report.rendered, || {
            format!(
                "case {case} ({suppression:?}, restart after event {cut}):\n{:?}\nvs\n{:?}",
                whole.report.rendered, resumed.report.rendered
            )
        })?;
    }
    Ok("250 restarts".into())
}

fn scenario_fixture() -> Check {
    let started = Instant::now();
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let timeline =
        TimelineFile::from_json(&std::fs::read_to_string(format!("{dir}/scenario1.json")).unwrap())
            .map_err(|e| e.to_string())?;
    let config =
        parse_config(&std::fs::read_to_string(format!("{dir}/scenario1.config.yml")).unwrap())
            .map_err(|e| e.to_string())?;
    let roster: Vec<&str> = config.bots.iter().map(|b| b.login.as_str()).collect();
    ensure(
        roster
            == [
                "codesandbox[bot]",
                "compressed-size-action[bot]",
                "codecov[bot]",
                "request-info[bot]",
                "todo[bot]",
            ],
        || format!("roster {roster:?}"),
    )?;
    let report = replay(&timeline, &config).map_err(|e| e.to_string())?;
    let rendered = report.rendered.clone().ok_or("no managed comment")?;
    let blocks = collapsible_blocks(&rendered).len();
    let elapsed = started.elapsed();
    ensure(report.groups == 5, || format!("groups {}", report.groups))?;
    ensure(report.visible_bot_comments_out == 1, || {
        format!("visible {}", report.visible_bot_comments_out)
    })?;
    ensure(blocks == 5, || format!("{blocks} blocks"))?;
    ensure(rendered.lines().next() == Some(MARKER), || {
        "marker not on line 1".into()
    })?;
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "groups={} visible={} blocks={blocks} ratio={} in {elapsed:.2?}",
        report.groups, report.visible_bot_comments_out, report.reduction_ratio
    ))
}

/// Two-sided p by listing every labelling of the pooled sample.
fn brute_force_p(a: &[u8], b: &[u8]) -> f64 {
    let pooled: Vec<u8> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let twice_u = |mask: u32| -> i64 {
        let mut s = 0;
        for i in (0..n).filter(|i| mask & (1 << i) != 0) {
            for j in (0..n).filter(|j| mask & (1 << j) == 0) {
                s += match pooled[i].cmp(&pooled[j]) {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
        s
    };
    let centre = (a.len() * b.len()) as i64;
    let observed = (twice_u((1 << a.len()) - 1) - centre).abs();
    let masks: Vec<u32> = (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == a.len())
        .collect();
    let hits = masks
        .iter()
        .filter(|&&m| (twice_u(m) - centre).abs() >= observed)
        .count();
    hits as f64 / masks.len() as f64
}

fn statistics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..600 {
        let n = rng.random_range(2..=10);
        let na = rng.random_range(1..n);
        let a: Vec<u8> = (0..na).map(|_| rng.random_range(1..=5)).collect();
        let b: Vec<u8> = (0..n - na).map(|_| rng.random_range(1..=5)).collect();
        let (sa, sb) = (
            LikertSample::new("a", a.clone()).unwrap(),
            LikertSample::new("b", b.clone()).unwrap(),
        );
        let r = mann_whitney(&sa, &sb).map_err(|e| e.to_string())?;
        ensure(r.method == Method::Exact, || "expected exact".into())?;
        let diff = (r.p_value - brute_force_p(&a, &b)).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("{a:?} {b:?}: p differs by {diff}"))?;
        let delta = cliffs_delta_ordinal(&a, &b);
        let identity = 2.0 * r.u_statistic / (a.len() * b.len()) as f64 - 1.0;
        ensure((delta - identity).abs() <= 1e-12, || {
            format!("{a:?} {b:?}: U-delta identity")
        })?;
    }
    let d = cliffs_delta_ordinal(&[1, 2, 3], &[4, 5, 6]);
    ensure(d == -1.0, || format!("delta([1,2,3],[4,5,6]) = {d}"))?;
    let p = mann_whitney_ordinal(&[1, 2, 3], &[4, 5, 6]).p_value;
    ensure((p - 0.1).abs() <= 1e-9, || {
        format!("p([1,2,3],[4,5,6]) = {p}")
    })?;
    Ok(format!("600 pairs, max |dp| = {worst:e}"))
}

fn magnitude_constants() -> Check {
    let large = magnitude_of(0.474359).map_err(|e| e.to_string())?;
    let negligible = magnitude_of(0.10).map_err(|e| e.to_string())?;
    ensure(large == Magnitude::Large, || format!("0.474359 -> {large}"))?;
    ensure(negligible == Magnitude::Negligible, || {
        format!("0.10 -> {negligible}")
    })?;
    Ok("0.474359 -> large, 0.10 -> negligible".into())
}

fn webhook_authentication() -> Check {
    const SECRET: &[u8] = b"It's a Secret to Everybody";
    // computed with Python's hmac module
    const HEADER: &str = "sha256=757107ea0eb2509fc211221cce984b8a37570b6d7586c22c46f4379c8b043e17";
    let envelope = ForgeEventEnvelope {
        delivery_id: "vector".into(),
        event_name: "issue_comment".into(),
        signature_header: Some(HEADER.into()),
        raw_body: b"Hello, World!".to_vec(),
    };
    ensure(verify_signature(SECRET, &envelope), || {
        "vector rejected".into()
    })?;
    ensure(sign(SECRET, &envelope.raw_body) == HEADER, || {
        "sign disagrees".into()
    })?;
    let mut checked = 0;
    for i in 0..envelope.raw_body.len() {
        for flip in [0x01u8, 0x80] {
            let mut e = envelope.clone();
            e.raw_body[i] ^= flip;
            ensure(!verify_signature(SECRET, &e), || {
                format!("body byte {i} ^ {flip:#x} accepted")
            })?;
            checked += 1;
        }
    }
    for i in 0..HEADER.len() {
        for flip in [0x01u8, 0x20] {
            let mut bytes = HEADER.as_bytes().to_vec();
            bytes[i] ^= flip;
            let Ok(header) = String::from_utf8(bytes) else {
                continue;
            };
            let mut e = envelope.clone();
            e.signature_header = Some(header);
            ensure(!verify_signature(SECRET, &e), || {
                format!("header byte {i} ^ {flip:#x} accepted")
            })?;
            checked += 1;
        }
    }
    ensure(
        SIGNATURE_HEADER.eq_ignore_ascii_case("x-hub-signature-256"),
        || "header name".into(),
    )?;
    Ok(format!("vector verified, {checked} perturbations rejected"))
}

fn fail_safe() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let broken = "version: 1\nmode: aggregate\nsuppression: hide\nbots:\n  - login: codecov[bot]\n    allowed: maybe\n";
    ensure(parse_config(broken).is_err(), || {
        "config unexpectedly valid".into()
    })?;
    let mut reads = 0;
    for case in 0..50 {
        let timeline = random_timeline(&mut rng, 50);
        let run = replay_with(
            &timeline,
            &ReplayOptions {
                config_text: Some(broken.into()),
                ..ReplayOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let calls = run.forge.calls();
        ensure(calls.iter().all(|c| c.is_read()), || {
            format!(
                "case {case}: non-read call {:?}",
                calls.iter().find(|c| !c.is_read())
            )
        })?;
        let mutations = run.forge.mutations();
        ensure(
            !mutations
                .iter()
                .any(|m| matches!(m, Mutation::Minimize { .. } | Mutation::Delete { .. })),
            || format!("case {case}: suppression mutation"),
        )?;
        reads += calls.len();
    }
    Ok(format!("50 replays, {reads} calls, all reads"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("1 single managed comment", single_comment_invariant),
        ("2 fold equals batch", fold_batch_equivalence),
        ("3 crash equivalence", crash_equivalence),
        ("4 scenario fixture", scenario_fixture),
        ("5 statistics oracle", statistics_oracle),
        ("6 magnitude constants", magnitude_constants),
        ("7 webhook authentication", webhook_authentication),
        ("8 invalid config is read-only", fail_safe),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                println!("criterion {name}: FAIL ({why})");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
