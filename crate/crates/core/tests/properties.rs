mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use funnelbot_core::aggregator::collapsible_blocks;
use funnelbot_core::config::{Mode, Suppression};
use funnelbot_core::replay::{replay, replay_with, ReplayOptions, TimelineFile};
use funnelbot_core::{
    apply_event, build_document, render_document, AggregatedDocument, AuthorKind, RenderLimits,
    RepoConfig, TimelineEvent, MARKER,
};

use common::{policy, random_timeline};

fn timeline(seed: u64) -> TimelineFile {
    random_timeline(&mut ChaCha8Rng::seed_from_u64(seed), 50)
}

fn fold(events: &[TimelineEvent], config: &RepoConfig) -> AggregatedDocument {
    events
        .iter()
        .fold(AggregatedDocument::empty(config), |doc, e| {
            apply_event(&doc, e, config).unwrap()
        })
}

/// Bot events only, interleaved differently while each bot keeps its own
/// order, then renumbered.
fn reinterleave(events: &[TimelineEvent], seed: u64) -> Vec<TimelineEvent> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<Vec<TimelineEvent>> = Vec::new();
    let mut logins: Vec<String> = Vec::new();
    for e in events.iter().filter(|e| {
        e.comment
            .as_ref()
            .is_some_and(|c| c.author_kind == AuthorKind::Bot)
    }) {
        let login = &e.comment.as_ref().unwrap().author_login;
        match logins.iter().position(|l| l == login) {
            Some(i) => queues[i].push(e.clone()),
            None => {
                logins.push(login.clone());
                queues.push(vec![e.clone()]);
            }
        }
    }
    queues.iter_mut().for_each(|q| q.reverse());
    let mut out = Vec::new();
    while queues.iter().any(|q| !q.is_empty()) {
        let live: Vec<usize> = (0..queues.len())
            .filter(|&i| !queues[i].is_empty())
            .collect();
        let pick = live[rng.random_range(0..live.len())];
        let mut e = queues[pick].pop().unwrap();
        e.seq = out.len() as u64 + 1;
        out.push(e);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fold_equals_batch(seed in any::<u64>()) {
        let config = policy(Suppression::Minimize);
        let t = timeline(seed);
        prop_assert_eq!(fold(&t.events, &config), build_document(&t.events, &config).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn redelivery_is_a_no_op(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let config = policy(Suppression::Minimize);
        let t = timeline(seed);
        let i = pick.index(t.events.len());
        let doc = fold(&t.events[..=i], &config);
        prop_assert_eq!(apply_event(&doc, &t.events[i], &config).unwrap(), doc);
    }

    #[test]
    fn group_order_ignores_arrival_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let config = policy(Suppression::Minimize);
        let t = timeline(seed);
        let a = build_document(&reinterleave(&t.events, 0), &config).unwrap();
        let b = build_document(&reinterleave(&t.events, shuffle), &config).unwrap();
        let logins = |d: &AggregatedDocument| d.groups.iter().map(|g| g.bot_login.clone()).collect::<Vec<_>>();
        prop_assert_eq!(logins(&a), logins(&b));
    }

    #[test]
    fn one_block_per_group_and_one_marker(seed in any::<u64>()) {
        let config = policy(Suppression::Minimize);
        let doc = build_document(&timeline(seed).events, &config).unwrap();
        let md = render_document(&doc, RenderLimits::default());
        prop_assert_eq!(collapsible_blocks(&md).len(), doc.groups.len());
        prop_assert_eq!(md.lines().next(), Some(MARKER));
        prop_assert_eq!(md.matches(MARKER).count(), 1);
        prop_assert_eq!(render_document(&doc, RenderLimits::default()), md);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_reports(seed in any::<u64>()) {
        let config = policy(Suppression::Minimize);
        let t = timeline(seed);
        let report = replay(&t, &config).unwrap();
        prop_assert_eq!(&replay(&t, &config).unwrap(), &report);
        prop_assert!(report.visible_bot_comments_out <= 1);

        let run = replay_with(&t, &ReplayOptions {
            config_text: Some(config.to_canonical_yaml()),
            ..ReplayOptions::default()
        }).unwrap();
        let humans_out = run.forge.comments(&run.repo, run.pr_number)
            .iter()
            .filter(|c| c.author_kind == AuthorKind::Human && !c.minimized)
            .count();
        prop_assert_eq!(humans_out, report.human_comments_in);
    }

    #[test]
    fn passthrough_touches_nothing(seed in any::<u64>()) {
        let t = timeline(seed);
        let run = replay_with(&t, &ReplayOptions {
            config_text: Some(policy(Suppression::Minimize).to_canonical_yaml()),
            mode: Some(Mode::Passthrough),
            restart_after: None,
        }).unwrap();
        prop_assert!(run.report.rendered.is_none());
        prop_assert!(run.forge.calls().iter().all(|c| c.is_read()));
    }
}
