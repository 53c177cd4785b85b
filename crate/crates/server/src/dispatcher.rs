//! Routing core of the chat server.
//!
//! The dispatcher is synchronous and owns all routing state: registrations,
//! offline queues, conversation histories, seq counters and the bot timer
//! queue. It consumes parsed frames and returns [`Action`]s for the network
//! layer, so every ordering decision happens in one place and can be tested
//! without sockets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io;

use crate::bot::BotScript;
use crate::log::{ConvKey, ConversationLog, Histories, Recovered};
use crate::protocol::{ErrCode, FrameType, WireFrame};

pub type ConnId = u64;

pub const DEFAULT_HISTORY_DEPTH: usize = 50;

/// Body of presence `notify` frames.
pub const ONLINE: &str = "online";
pub const OFFLINE: &str = "offline";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send(ConnId, WireFrame),
    /// Close the connection after flushing what was sent before.
    Close(ConnId),
}

#[derive(Debug)]
pub struct Dispatcher {
    history_depth: usize,
    bots: BTreeMap<String, BotScript>,
    conns: BTreeMap<ConnId, Option<String>>,
    live: BTreeMap<String, ConnId>,
    known: BTreeSet<String>,
    queues: BTreeMap<String, VecDeque<WireFrame>>,
    histories: Histories,
    next_seq: BTreeMap<ConvKey, u64>,
    timers: BTreeMap<(u64, u64), WireFrame>,
    timer_counter: u64,
    next_conn: ConnId,
    log: Option<ConversationLog>,
}

impl Dispatcher {
    pub fn new(bots: Vec<BotScript>, history_depth: usize) -> Self {
        Self {
            history_depth,
            bots: bots.into_iter().map(|b| (b.name.clone(), b)).collect(),
            conns: BTreeMap::new(),
            live: BTreeMap::new(),
            known: BTreeSet::new(),
            queues: BTreeMap::new(),
            histories: Histories::new(),
            next_seq: BTreeMap::new(),
            timers: BTreeMap::new(),
            timer_counter: 0,
            next_conn: 1,
            log: None,
        }
    }

    /// Persists accepted messages to `log`.
    pub fn with_log(mut self, log: ConversationLog) -> Self {
        self.log = Some(log);
        self
    }

    /// Seeds histories and seq counters from a recovered log. Every name in
    /// the log becomes a known recipient.
    pub fn with_recovered(mut self, recovered: Recovered) -> Self {
        for key in recovered.histories.keys() {
            self.known.insert(key.0.clone());
            self.known.insert(key.1.clone());
        }
        for name in self.bots.keys() {
            self.known.remove(name);
        }
        self.histories = recovered.histories;
        self.next_seq = recovered.next_seq;
        self
    }

    pub fn histories(&self) -> &Histories {
        &self.histories
    }

    pub fn history(&self, a: &str, b: &str) -> &[WireFrame] {
        self.histories
            .get(&ConvKey::new(a, b))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn queued(&self, name: &str) -> usize {
        self.queues.get(name).map_or(0, VecDeque::len)
    }

    pub fn is_live(&self, name: &str) -> bool {
        self.live.contains_key(name)
    }

    pub fn registered_name(&self, conn: ConnId) -> Option<&str> {
        self.conns.get(&conn).and_then(|n| n.as_deref())
    }

    pub fn next_timer(&self) -> Option<u64> {
        self.timers.keys().next().map(|(due, _)| *due)
    }

    /// Allocates an id for a new connection.
    pub fn connect(&mut self) -> ConnId {
        let id = self.next_conn;
        self.next_conn += 1;
        self.conns.insert(id, None);
        id
    }

    /// Registers a connection id allocated elsewhere.
    pub fn open(&mut self, conn: ConnId) {
        self.conns.entry(conn).or_insert(None);
        self.next_conn = self.next_conn.max(conn + 1);
    }

    /// Drops a connection. `undelivered` holds frames that were routed to it
    /// but never written; msg and ack frames among them go back to the front
    /// of the offline queue in their original order.
    pub fn disconnect(&mut self, conn: ConnId, undelivered: Vec<WireFrame>) -> Vec<Action> {
        let Some(Some(name)) = self.conns.remove(&conn) else {
            return Vec::new();
        };
        if self.live.get(&name) == Some(&conn) {
            self.live.remove(&name);
        }
        let queue = self.queues.entry(name.clone()).or_default();
        for frame in undelivered.into_iter().rev() {
            if matches!(frame.kind, FrameType::Msg | FrameType::Ack) {
                queue.push_front(frame);
            }
        }
        self.presence(&name, OFFLINE)
    }

    /// A frame could not be handed to `conn` (it is closing). Msgs are
    /// queued for their recipient and acks for their sender.
    pub fn undeliverable(&mut self, _conn: ConnId, frame: WireFrame) {
        let owner = match frame.kind {
            FrameType::Msg => frame.to.clone(),
            FrameType::Ack => frame.from.clone(),
            _ => return,
        };
        self.queues.entry(owner).or_default().push_back(frame);
    }

    pub fn handle_frame(
        &mut self,
        conn: ConnId,
        frame: WireFrame,
        now_ms: u64,
    ) -> io::Result<Vec<Action>> {
        let mut actions = Vec::new();
        match frame.kind {
            FrameType::Hello => self.hello(conn, frame, now_ms, &mut actions),
            FrameType::Msg => self.client_msg(conn, frame, now_ms, &mut actions)?,
            FrameType::HistoryReq => self.history_req(conn, frame, now_ms, &mut actions),
            _ => actions.push(self.error(conn, ErrCode::BadFrame, &frame.id)),
        }
        Ok(actions)
    }

    /// Routes every bot reply due at or before `now_ms`.
    pub fn fire_timers(&mut self, now_ms: u64) -> io::Result<Vec<Action>> {
        let mut actions = Vec::new();
        while let Some(entry) = self.timers.first_entry() {
            let (due, _) = *entry.key();
            if due > now_ms {
                break;
            }
            let frame = entry.remove();
            self.route(frame, due, None, &mut actions)?;
        }
        Ok(actions)
    }

    fn error(&self, conn: ConnId, code: ErrCode, id: &str) -> Action {
        let to = self.registered_name(conn).unwrap_or_default();
        Action::Send(conn, WireFrame::error(code, to, id))
    }

    fn hello(&mut self, conn: ConnId, frame: WireFrame, now_ms: u64, out: &mut Vec<Action>) {
        let name = frame.from.trim().to_string();
        if name.is_empty() || self.registered_name(conn).is_some() {
            out.push(self.error(conn, ErrCode::BadFrame, &frame.id));
            return;
        }
        if self.live.contains_key(&name) || self.bots.contains_key(&name) {
            out.push(Action::Send(conn, WireFrame::error(ErrCode::NameTaken, &name, &frame.id)));
            out.push(Action::Close(conn));
            return;
        }
        self.conns.insert(conn, Some(name.clone()));
        self.live.insert(name.clone(), conn);
        self.known.insert(name.clone());
        let contacts = self.contacts_for(&name);
        out.push(Action::Send(
            conn,
            WireFrame {
                to: name.clone(),
                id: frame.id,
                body: serde_json::to_string(&contacts).expect("names serialize"),
                ts: now_ms,
                ..WireFrame::new(FrameType::HelloAck)
            },
        ));
        if let Some(queue) = self.queues.remove(&name) {
            out.extend(queue.into_iter().map(|f| Action::Send(conn, f)));
        }
        out.extend(self.presence(&name, ONLINE));
    }

    /// Everyone `name` can talk to, most recent conversation first.
    fn contacts_for(&self, name: &str) -> Vec<String> {
        let mut names: BTreeSet<&str> = self.known.iter().map(String::as_str).collect();
        names.extend(self.bots.keys().map(String::as_str));
        names.remove(name);
        let mut ranked: Vec<(u64, &str)> = names
            .into_iter()
            .map(|peer| {
                let last = self.history(name, peer).last().map_or(0, |f| f.ts);
                (last, peer)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        ranked.into_iter().map(|(_, n)| n.to_string()).collect()
    }

    fn presence(&self, name: &str, state: &str) -> Vec<Action> {
        self.live
            .iter()
            .filter(|(other, _)| other.as_str() != name)
            .map(|(other, &conn)| {
                Action::Send(
                    conn,
                    WireFrame {
                        from: name.to_string(),
                        to: other.clone(),
                        body: state.to_string(),
                        ..WireFrame::new(FrameType::Notify)
                    },
                )
            })
            .collect()
    }

    fn client_msg(
        &mut self,
        conn: ConnId,
        mut frame: WireFrame,
        now_ms: u64,
        out: &mut Vec<Action>,
    ) -> io::Result<()> {
        let Some(name) = self.registered_name(conn).map(str::to_string) else {
            out.push(self.error(conn, ErrCode::NotRegistered, &frame.id));
            return Ok(());
        };
        frame.from = name;
        if frame.to == frame.from || frame.to.is_empty() {
            out.push(self.error(conn, ErrCode::BadFrame, &frame.id));
            return Ok(());
        }
        if !self.known.contains(&frame.to) && !self.bots.contains_key(&frame.to) {
            out.push(self.error(conn, ErrCode::UnknownRecipient, &frame.id));
            return Ok(());
        }
        self.route(frame, now_ms, Some(conn), out)
    }

    /// Assigns seq, ts and id, logs the message, acks the sender when it is
    /// a client, and delivers, queues or hands it to a bot.
    fn route(
        &mut self,
        frame: WireFrame,
        now_ms: u64,
        sender: Option<ConnId>,
        out: &mut Vec<Action>,
    ) -> io::Result<()> {
        let key = ConvKey::of(&frame);
        let seq = self.next_seq.get(&key).copied().unwrap_or(1);
        let last_ts = self.history(&frame.from, &frame.to).last().map_or(0, |f| f.ts);
        let client_id = frame.id;
        let stored = WireFrame {
            id: key.message_id(seq),
            ts: now_ms.max(last_ts),
            seq,
            ..WireFrame::msg(frame.from, frame.to, frame.body)
        };
        if let Some(log) = &mut self.log {
            log.append(&stored)?;
        }
        self.next_seq.insert(key.clone(), seq + 1);
        self.histories.entry(key).or_default().push(stored.clone());

        if let Some(conn) = sender {
            out.push(Action::Send(
                conn,
                WireFrame {
                    id: stored.id.clone(),
                    from: stored.from.clone(),
                    to: stored.to.clone(),
                    body: client_id,
                    ts: stored.ts,
                    seq,
                    ..WireFrame::new(FrameType::Ack)
                },
            ));
        }

        if let Some(&conn) = self.live.get(&stored.to) {
            out.push(Action::Send(conn, stored));
        } else if let Some(bot) = self.bots.get(&stored.to) {
            if !self.bots.contains_key(&stored.from) {
                for reply in bot.step(&stored, stored.ts) {
                    self.timer_counter += 1;
                    self.timers.insert((reply.due_ms, self.timer_counter), reply.frame);
                }
            }
        } else {
            self.queues.entry(stored.to.clone()).or_default().push_back(stored);
        }
        Ok(())
    }

    fn history_req(&mut self, conn: ConnId, frame: WireFrame, now_ms: u64, out: &mut Vec<Action>) {
        let Some(name) = self.registered_name(conn).map(str::to_string) else {
            out.push(self.error(conn, ErrCode::NotRegistered, &frame.id));
            return;
        };
        let all = self.history(&name, &frame.to);
        let tail = &all[all.len().saturating_sub(self.history_depth)..];
        out.push(Action::Send(
            conn,
            WireFrame {
                id: frame.id,
                from: frame.to,
                to: name,
                body: serde_json::to_string(tail).expect("frames serialize"),
                ts: now_ms,
                seq: tail.len() as u64,
                ..WireFrame::new(FrameType::History)
            },
        ));
    }
}

/// Decodes the body of a `history` frame.
pub fn history_body(frame: &WireFrame) -> serde_json::Result<Vec<WireFrame>> {
    serde_json::from_str(&frame.body)
}

/// Decodes the body of a `hello_ack` frame.
pub fn contacts_body(frame: &WireFrame) -> serde_json::Result<Vec<String>> {
    serde_json::from_str(&frame.body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bot::BotRule;

    fn sent_to(actions: &[Action], conn: ConnId) -> Vec<&WireFrame> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Send(c, f) if *c == conn => Some(f),
                _ => None,
            })
            .collect()
    }

    fn peter_bot() -> BotScript {
        BotScript {
            name: "Peter".into(),
            rules: vec![BotRule {
                trigger: "any".into(),
                reply_bodies: vec!["see you".into()],
                delay_ms: 1500,
                jitter_ms: 0,
            }],
            rng_seed: 1,
        }
    }

    fn hello(d: &mut Dispatcher, name: &str) -> (ConnId, Vec<Action>) {
        let c = d.connect();
        let a = d.handle_frame(c, WireFrame::hello(name), 0).unwrap();
        (c, a)
    }

    #[test]
    fn first_hello_gets_empty_ack() {
        let mut d = Dispatcher::new(vec![], 50);
        let (c, a) = hello(&mut d, "self");
        let frames = sent_to(&a, c);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].kind, FrameType::HelloAck);
        assert_eq!(contacts_body(frames[0]).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn msg_is_acked_and_forwarded() {
        let mut d = Dispatcher::new(vec![], 50);
        let (me, _) = hello(&mut d, "self");
        let (peter, _) = hello(&mut d, "Peter");
        let mut f = WireFrame::msg("spoofed", "Peter", "ok see you");
        f.id = "local-1".into();
        let a = d.handle_frame(me, f, 5_000).unwrap();
        let ack = sent_to(&a, me)[0];
        assert_eq!((ack.kind, ack.seq, ack.body.as_str()), (FrameType::Ack, 1, "local-1"));
        let fwd = sent_to(&a, peter)[0];
        assert_eq!(fwd.from, "self");
        assert_eq!((fwd.seq, fwd.ts), (1, 5_000));
        assert_eq!(fwd.id, "Peter~self-1");
    }

    #[test]
    fn errors_keep_the_connection() {
        let mut d = Dispatcher::new(vec![], 50);
        let c = d.connect();
        let a = d.handle_frame(c, WireFrame::msg("x", "y", "z"), 0).unwrap();
        assert_eq!(sent_to(&a, c)[0].body, "not_registered");
        hello(&mut d, "self");
        let (me2, _) = hello(&mut d, "Mary");
        let a = d.handle_frame(me2, WireFrame::msg("", "Nobody", "hi"), 0).unwrap();
        assert_eq!(sent_to(&a, me2)[0].body, "unknown_recipient");
        let a = d.handle_frame(me2, WireFrame::new(FrameType::Render), 0).unwrap();
        assert_eq!(sent_to(&a, me2)[0].body, "bad_frame");
        assert!(!a.iter().any(|x| matches!(x, Action::Close(_))));
    }

    #[test]
    fn duplicate_name_is_refused() {
        let mut d = Dispatcher::new(vec![peter_bot()], 50);
        let (first, _) = hello(&mut d, "self");
        let (second, a) = hello(&mut d, "self");
        assert_eq!(sent_to(&a, second)[0].body, "name_taken");
        assert!(a.contains(&Action::Close(second)));
        assert_eq!(d.registered_name(first), Some("self"));
        let (bot_clash, a) = hello(&mut d, "Peter");
        assert!(a.contains(&Action::Close(bot_clash)));
    }

    #[test]
    fn offline_messages_wait_for_hello() {
        let mut d = Dispatcher::new(vec![], 50);
        let (me, _) = hello(&mut d, "self");
        let (mary, _) = hello(&mut d, "Mary");
        d.disconnect(mary, vec![]);
        for body in ["a", "b"] {
            d.handle_frame(me, WireFrame::msg("self", "Mary", body), 1).unwrap();
        }
        assert_eq!(d.queued("Mary"), 2);
        let (mary, a) = hello(&mut d, "Mary");
        let got: Vec<_> = sent_to(&a, mary).iter().map(|f| (f.kind, f.body.clone())).collect();
        assert_eq!(got[1..], [(FrameType::Msg, "a".to_string()), (FrameType::Msg, "b".to_string())]);
        assert_eq!(contacts_body(sent_to(&a, mary)[0]).unwrap(), vec!["self"]);
    }

    #[test]
    fn undelivered_frames_are_requeued_in_order() {
        let mut d = Dispatcher::new(vec![], 50);
        let (me, _) = hello(&mut d, "self");
        let (mary, _) = hello(&mut d, "Mary");
        let mut routed = Vec::new();
        for body in ["1", "2", "3"] {
            let a = d.handle_frame(me, WireFrame::msg("self", "Mary", body), 1).unwrap();
            routed.extend(sent_to(&a, mary).into_iter().cloned());
        }
        // "1" was written; "2" was still buffered; "3" failed to enqueue
        let late = routed.pop().unwrap();
        d.undeliverable(mary, late);
        d.disconnect(mary, vec![routed[1].clone()]);
        let (mary, a) = hello(&mut d, "Mary");
        let bodies: Vec<_> = sent_to(&a, mary).iter().skip(1).map(|f| f.seq).collect();
        assert_eq!(bodies, vec![2, 3]);
    }

    #[test]
    fn bot_replies_on_timer() {
        let mut d = Dispatcher::new(vec![peter_bot()], 50);
        let (me, a) = hello(&mut d, "self");
        assert_eq!(contacts_body(sent_to(&a, me)[0]).unwrap(), vec!["Peter"]);
        d.handle_frame(me, WireFrame::msg("self", "Peter", "where"), 10_000).unwrap();
        assert_eq!(d.next_timer(), Some(11_500));
        assert!(d.fire_timers(11_499).unwrap().is_empty());
        let a = d.fire_timers(11_600).unwrap();
        let reply = sent_to(&a, me)[0];
        assert_eq!((reply.from.as_str(), reply.seq, reply.ts), ("Peter", 2, 11_500));
        assert_eq!(d.history("Peter", "self").len(), 2);
    }

    #[test]
    fn history_returns_last_n() {
        let mut d = Dispatcher::new(vec![], 2);
        let (me, _) = hello(&mut d, "self");
        hello(&mut d, "Mary");
        for body in ["a", "b", "c"] {
            d.handle_frame(me, WireFrame::msg("self", "Mary", body), 1).unwrap();
        }
        let a = d.handle_frame(me, WireFrame::history_req("self", "Mary"), 2).unwrap();
        let h = history_body(sent_to(&a, me)[0]).unwrap();
        assert_eq!(h.iter().map(|f| f.body.as_str()).collect::<Vec<_>>(), ["b", "c"]);
    }
}
