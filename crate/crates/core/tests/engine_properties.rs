//! Randomized checks of session invariants over generated event streams.

use glassmsg_core::effect::{Effect, EffectRecord};
use glassmsg_core::render::{CHAT_WINDOW, CONTACT_WINDOW, NOTIFICATION_WINDOW};
use glassmsg_core::sim::EventGenerator;
use glassmsg_core::{Command, Session, SessionConfig};

const CONTACTS: &[&str] = &["Peter", "Mary", "Bob", "Ann", "Lee"];

/// Runs `n` generated events and calls `visit` after each one.
fn drive(seed: u64, n: usize, mut visit: impl FnMut(&Session, &[EffectRecord])) -> Session {
    let mut gen = EventGenerator::new(seed, CONTACTS);
    let mut session = Session::with_contacts(SessionConfig::default(), CONTACTS.iter().copied());
    for _ in 0..n {
        let ev = gen.next_event();
        let mut records = session.advance_to(ev.t_ms).unwrap();
        for effect in session.handle_event(&ev.event, ev.t_ms).unwrap() {
            records.push(EffectRecord { t: ev.t_ms, effect });
        }
        visit(&session, &records);
    }
    session
}

fn check_invariants(session: &Session) {
    let st = session.state();
    assert!(!(st.dictating && st.keyboard_open), "dictating with keyboard open");
    if st.dictating {
        assert!(st.visible && st.focused_contact.is_some());
    }
    assert!(st.scroll_offset < st.contacts.len().max(1));
    assert!(st.notifications.len() <= session.config().max_notifications);
    let mut names: Vec<_> = st.contact_names();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), st.contacts.len(), "duplicate contacts");
}

#[test]
fn invariants_hold_on_random_streams() {
    for seed in 0..8 {
        drive(seed, 2_000, |s, _| {
            check_invariants(s);
            let model = s.render();
            assert!(model.chat_panel.messages.len() <= CHAT_WINDOW);
            assert!(model.contact_panel.items.len() <= CONTACT_WINDOW);
            assert!(model.notification_panel.items.len() <= NOTIFICATION_WINDOW);
        });
    }
}

/// Applies the steps in order and stops at the first error.
fn apply_sequence(session: &mut Session, steps: &[Command], now: u64) -> Vec<Effect> {
    let mut effects = Vec::new();
    for step in steps {
        let fx = session.handle_command(step, now).unwrap();
        let failed = fx.iter().any(|e| matches!(e, Effect::Error(_)));
        effects.extend(fx);
        if failed {
            break;
        }
    }
    effects
}

#[test]
fn shortcuts_equal_their_expansions() {
    let mut checked = 0;
    for seed in 100..104 {
        drive(seed, 1_000, |s, _| {
            let now = s.clock_ms();
            let names: Vec<String> = s.state().contact_names().iter().map(|n| n.to_string()).collect();
            let mut shortcuts = vec![Command::Reply, Command::TextTo("Nobody".into())];
            shortcuts.extend(names.into_iter().map(Command::TextTo));
            for shortcut in shortcuts {
                let mut atomic = s.clone();
                let fx_atomic = atomic.handle_command(&shortcut, now).unwrap();
                let mut stepped = s.clone();
                let fx_stepped = apply_sequence(&mut stepped, &shortcut.expand(), now);
                assert_eq!(fx_atomic, fx_stepped, "{shortcut:?}");
                assert_eq!(atomic.state(), stepped.state(), "{shortcut:?}");
                checked += 1;
            }
        });
    }
    assert!(checked > 4_000);
}

#[test]
fn hide_reveal_round_trip() {
    drive(7, 1_500, |s, _| {
        if !s.state().visible {
            return;
        }
        let now = s.clock_ms();
        let mut t = s.clone();
        t.handle_command(&Command::HideInterface, now).unwrap();
        t.handle_command(&Command::RevealInterface, now).unwrap();
        let (a, b) = (s.state(), t.state());
        assert_eq!(a.focused_contact, b.focused_contact);
        assert_eq!(a.draft, b.draft);
        assert_eq!(a.history, b.history);
        assert_eq!(a.notifications, b.notifications);
        assert!(b.visible);
    });
}

#[test]
fn unread_tracks_notifications() {
    let mut gen = EventGenerator::new(42, CONTACTS);
    let mut session = Session::with_contacts(SessionConfig::default(), CONTACTS.iter().copied());
    for _ in 0..3_000 {
        let ev = gen.next_event();
        let before: std::collections::BTreeMap<String, u32> = session
            .state()
            .contacts
            .iter()
            .map(|c| (c.name.clone(), c.unread_count))
            .collect();
        let mut fx = session.advance_to(ev.t_ms).unwrap().into_iter().map(|r| r.effect).collect::<Vec<_>>();
        fx.extend(session.handle_event(&ev.event, ev.t_ms).unwrap());
        let shown = fx.iter().filter(|e| matches!(e, Effect::ShowNotification(_))).count() as i64;
        let mut resets = 0i64;
        let mut delta = 0i64;
        for c in &session.state().contacts {
            let old = *before.get(&c.name).unwrap_or(&0) as i64;
            if c.unread_count == 0 && old > 0 {
                resets += old;
            }
            delta += c.unread_count as i64 - old;
        }
        assert_eq!(delta, shown - resets, "event {ev:?}");
    }
}

#[test]
fn identical_streams_are_identical() {
    let run = || {
        let mut log = Vec::new();
        let last = drive(5, 2_000, |_, recs| log.extend_from_slice(recs));
        (
            glassmsg_core::effect::effect_log_to_string(&log),
            serde_json::to_string(last.state()).unwrap(),
        )
    };
    assert_eq!(run(), run());
}
