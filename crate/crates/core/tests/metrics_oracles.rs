//! Metrics checked against independent reference computations.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use glassmsg_core::effect::{Effect, EffectRecord};
use glassmsg_core::metrics::{edit_distance, entry_speed, error_rate, response_times, Rational};
use glassmsg_core::{Message, Notification, SELF_NAME};

/// Textbook recursive Levenshtein with memoization over suffixes.
fn oracle_distance(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let key = (a.len(), b.len());
    if let Some(&d) = memo.get(&key) {
        return d;
    }
    let d = if a[0] == b[0] {
        oracle_distance(&a[1..], &b[1..], memo)
    } else {
        1 + oracle_distance(&a[1..], b, memo)
            .min(oracle_distance(a, &b[1..], memo))
            .min(oracle_distance(&a[1..], &b[1..], memo))
    };
    memo.insert(key, d);
    d
}

fn oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    oracle_distance(&a, &b, &mut HashMap::new())
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let alphabet: Vec<char> = "abcde fgé😀".chars().collect();
    let len = rng.gen_range(0..24);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

#[test]
fn error_rate_matches_dp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1_000 {
        let produced = random_text(&mut rng);
        let mut reference = random_text(&mut rng);
        if reference.is_empty() {
            reference.push('x');
        }
        let d = oracle(&produced, &reference) as u64;
        let longest = produced.chars().count().max(reference.chars().count()) as u64;
        assert_eq!(error_rate(&produced, &reference).unwrap(), Rational::new(d, longest));
    }
}

#[test]
fn frozen_example() {
    assert_eq!(oracle("helo wrld", "hello world"), 2);
    assert_eq!(error_rate("helo wrld", "hello world").unwrap(), Rational::new(2, 11));
}

proptest! {
    #[test]
    fn error_rate_symmetric_and_bounded(a in "[a-c ]{1,12}", b in "[a-c ]{1,12}") {
        let ab = error_rate(&a, &b).unwrap();
        let ba = error_rate(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.to_f64() >= 0.0 && ab.to_f64() <= 1.0);
    }

    #[test]
    fn distance_triangle(a in "[ab]{0,8}", b in "[ab]{0,8}", c in "[ab]{0,8}") {
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn distance_matches_oracle(a in "\\PC{0,10}", b in "\\PC{0,10}") {
        prop_assert_eq!(edit_distance(&a, &b), oracle(&a, &b));
    }
}

fn shown(t: u64, sender: &str) -> EffectRecord {
    EffectRecord {
        t,
        effect: Effect::ShowNotification(Notification {
            id: t,
            sender: sender.into(),
            arrived_ms: t,
            preview: String::new(),
        }),
    }
}

fn sent(t: u64, to: &str, body: &str) -> EffectRecord {
    EffectRecord {
        t,
        effect: Effect::SendMessage(Message {
            id: format!("local-{t}"),
            sender: SELF_NAME.into(),
            recipient: to.into(),
            body: body.into(),
            ts_ms: t,
        }),
    }
}

/// For each send, scan every notification and take the earliest unmatched
/// one from the same sender shown no later than the send.
fn brute_force_matches(log: &[EffectRecord]) -> (Vec<u64>, usize) {
    let notes: Vec<(u64, &str)> = log
        .iter()
        .filter_map(|r| match &r.effect {
            Effect::ShowNotification(n) => Some((r.t, n.sender.as_str())),
            _ => None,
        })
        .collect();
    let mut used = vec![false; notes.len()];
    let mut matched = Vec::new();
    for (pos, rec) in log.iter().enumerate() {
        let Effect::SendMessage(m) = &rec.effect else { continue };
        let earlier: Vec<usize> = (0..notes.len())
            .filter(|&i| {
                !used[i]
                    && notes[i].1 == m.recipient
                    && log[..pos].iter().filter(|r| matches!(r.effect, Effect::ShowNotification(_))).count() > i
            })
            .collect();
        if let Some(&best) = earlier.iter().min_by_key(|&&i| (notes[i].0, i)) {
            used[best] = true;
            matched.push(rec.t - notes[best].0);
        }
    }
    (matched, used.iter().filter(|u| !**u).count())
}

fn random_log(rng: &mut ChaCha8Rng, n: usize) -> Vec<EffectRecord> {
    let people = ["Bob", "Ann", "Cy"];
    let mut t = 0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0..3_000);
            let who = people[rng.gen_range(0..people.len())];
            if rng.gen_bool(0.55) {
                shown(t, who)
            } else {
                sent(t, who, "x")
            }
        })
        .collect()
}

#[test]
fn response_time_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let n = rng.gen_range(0..40);
        let log = random_log(&mut rng, n);
        let rt = response_times(&log);
        let (matched, unanswered) = brute_force_matches(&log);
        assert_eq!(rt.matched_ms, matched);
        assert_eq!(rt.unanswered, unanswered);
    }
}

#[test]
fn unrelated_notification_leaves_matches_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let n = rng.gen_range(1..40);
        let log = random_log(&mut rng, n);
        let at = rng.gen_range(0..log.len());
        let mut noisy = log.clone();
        noisy.insert(at, shown(log[at].t, "Stranger"));
        let base = response_times(&log);
        let with_noise = response_times(&noisy);
        assert_eq!(base.matched_ms, with_noise.matched_ms);
        assert_eq!(base.unanswered + 1, with_noise.unanswered);
    }
}

#[test]
fn two_notifications_one_send() {
    let rt = response_times(&[shown(2000, "Bob"), shown(4000, "Bob"), sent(10_000, "Bob", "x")]);
    assert_eq!((rt.matched_ms, rt.unanswered), (vec![8000], 1));
}

#[test]
fn entry_speed_matches_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let mut log = Vec::new();
        let (mut t, mut chars, mut millis) = (0u64, 0u64, 0u64);
        for _ in 0..rng.gen_range(1..6) {
            t += rng.gen_range(0..5_000);
            log.push(EffectRecord { t, effect: Effect::StartDictationFeedback });
            let start = t;
            t += rng.gen_range(1..20_000);
            let body: String = (0..rng.gen_range(1..60)).map(|_| 'a').collect();
            chars += body.len() as u64;
            millis += t - start;
            log.push(sent(t, "Bob", &body));
        }
        let wpm = entry_speed(&log).unwrap();
        // wpm = (chars / 5) / (millis / 60000), compared by cross-multiplying
        assert_eq!(
            wpm.numer() as u128 * 5 * millis as u128,
            chars as u128 * 60_000 * wpm.denom() as u128
        );
    }
}

#[test]
fn entry_speed_examples() {
    let start = |t| EffectRecord { t, effect: Effect::StartDictationFeedback };
    assert_eq!(
        entry_speed(&[start(0), sent(12_000, "Peter", "ok see you!")]),
        Some(Rational::new(11, 1))
    );
    assert_eq!(
        entry_speed(&[start(0), sent(10_000, "a", "0123456789"), start(15_000), sent(35_000, "a", "abcdefghijklmno")]),
        Some(Rational::new(10, 1))
    );
}
