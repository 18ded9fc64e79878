//! Session bookkeeping and the per-message state machine, independent of the
//! transport so it can be driven directly in tests.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use airpen_core::classifiers::ClassifierModel;
use airpen_core::gestures::GestureClass;
use airpen_core::streaming::{GestureEvent, SegmenterConfig, Session};
use airpen_core::trajectory::Point;
use airpen_core::Error;

use crate::protocol::{ErrorCode, WireMessage};

/// Side of the virtual canvas normalized client points are scaled onto.
pub const CANVAS_SIDE: u32 = 480;
/// Minimum spacing of trail echoes, in client milliseconds.
pub const TRAIL_INTERVAL_MS: u64 = 33;

struct Live {
    session: Session,
    pending_trail: Vec<[f64; 3]>,
    last_echo_ms: Option<u64>,
}

/// All open sessions, sharing one read-only model.
pub struct SessionRegistry {
    model: Arc<ClassifierModel>,
    defaults: SegmenterConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
    next_id: AtomicU64,
}

/// Per-connection state: the session it owns and its settings.
#[derive(Debug, Clone)]
pub struct Connection {
    pub session_id: Option<String>,
    pub config: SegmenterConfig,
}

impl SessionRegistry {
    pub fn new(model: Arc<ClassifierModel>, defaults: SegmenterConfig) -> Result<Self, Error> {
        defaults.validate()?;
        Ok(SessionRegistry {
            model,
            defaults,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn model(&self) -> &Arc<ClassifierModel> {
        &self.model
    }

    pub fn connect(&self) -> Connection {
        Connection {
            session_id: None,
            config: self.defaults,
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("registry lock").len()
    }

    /// Removes the connection's session, if any.
    pub fn disconnect(&self, conn: &mut Connection) {
        if let Some(id) = conn.session_id.take() {
            self.sessions.lock().expect("registry lock").remove(&id);
        }
    }

    fn live(&self, id: &str) -> Option<Arc<Mutex<Live>>> {
        self.sessions.lock().expect("registry lock").get(id).cloned()
    }

    /// Parses one text frame and handles it.
    pub fn handle_text(&self, conn: &mut Connection, text: &str) -> Vec<WireMessage> {
        match serde_json::from_str::<WireMessage>(text) {
            Ok(msg) => self.handle_message(conn, msg),
            Err(e) => vec![WireMessage::error(ErrorCode::BadMessage, e.to_string())],
        }
    }

    pub fn handle_message(&self, conn: &mut Connection, msg: WireMessage) -> Vec<WireMessage> {
        if !msg.is_client_message() {
            return vec![WireMessage::error(
                ErrorCode::BadMessage,
                "server-to-client message type sent by client",
            )];
        }
        match msg {
            WireMessage::Start { session_hint } => self.start(conn, session_hint),
            WireMessage::Config { threshold, mode } => self.configure(conn, threshold, mode),
            WireMessage::Point { x, y, t_ms } => self.point(conn, x, y, t_ms),
            WireMessage::End {} => self.end(conn),
            _ => unreachable!("filtered above"),
        }
    }

    fn start(&self, conn: &mut Connection, hint: Option<String>) -> Vec<WireMessage> {
        self.disconnect(conn);
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let prefix: String = hint
            .unwrap_or_default()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == '_')
            .take(32)
            .collect();
        let id = if prefix.is_empty() {
            format!("s{n}")
        } else {
            format!("{prefix}-{n}")
        };
        let session = Session::new(id.clone(), self.model.clone(), conn.config, (CANVAS_SIDE, CANVAS_SIDE))
            .expect("connection config was validated");
        let live = Live {
            session,
            pending_trail: Vec::new(),
            last_echo_ms: None,
        };
        self.sessions
            .lock()
            .expect("registry lock")
            .insert(id.clone(), Arc::new(Mutex::new(live)));
        conn.session_id = Some(id.clone());
        vec![WireMessage::Started {
            session_id: id,
            classes: GestureClass::names(),
        }]
    }

    fn configure(
        &self,
        conn: &mut Connection,
        threshold: Option<f64>,
        mode: Option<airpen_core::streaming::SegmentMode>,
    ) -> Vec<WireMessage> {
        let mut next = conn.config;
        if let Some(t) = threshold {
            next.confidence_threshold = t;
        }
        if let Some(m) = mode {
            next.mode = m;
        }
        if let Err(e) = next.validate() {
            return vec![WireMessage::error(ErrorCode::BadMessage, e.to_string())];
        }
        conn.config = next;
        if let Some(live) = conn.session_id.as_deref().and_then(|id| self.live(id)) {
            let mut live = live.lock().expect("session lock");
            live.session.set_config(next).expect("validated above");
        }
        vec![WireMessage::Config {
            threshold: Some(next.confidence_threshold),
            mode: Some(next.mode),
        }]
    }

    fn point(&self, conn: &mut Connection, x: f64, y: f64, t_ms: u64) -> Vec<WireMessage> {
        let Some(live) = conn.session_id.as_deref().and_then(|id| self.live(id)) else {
            return vec![WireMessage::error(ErrorCode::NoSession, "send start before points")];
        };
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return vec![WireMessage::error(
                ErrorCode::BadMessage,
                format!("point ({x}, {y}) is outside the unit square"),
            )];
        }
        let side = CANVAS_SIDE as f64;
        let mut live = live.lock().expect("session lock");
        let event = match live.session.push_point(Point::at(x * side, y * side, t_ms)) {
            Ok(ev) => ev,
            Err(e) => return vec![self.event_error(e)],
        };
        live.pending_trail.push([x, y, t_ms as f64]);
        let mut out = Vec::new();
        let due = live
            .last_echo_ms
            .is_none_or(|last| t_ms.saturating_sub(last) >= TRAIL_INTERVAL_MS);
        if due || event.is_some() {
            out.extend(flush_trail(&mut live, t_ms));
        }
        if let Some(ev) = event {
            out.push(self.emit(&ev));
        }
        out
    }

    fn end(&self, conn: &mut Connection) -> Vec<WireMessage> {
        let Some(live) = conn.session_id.as_deref().and_then(|id| self.live(id)) else {
            return vec![WireMessage::error(ErrorCode::NoSession, "send start before end")];
        };
        let mut live = live.lock().expect("session lock");
        let last_t = live.pending_trail.last().map(|p| p[2] as u64).unwrap_or(0);
        let mut out: Vec<WireMessage> = flush_trail(&mut live, last_t).into_iter().collect();
        match live.session.end_stroke() {
            Ok(ev) => out.push(self.emit(&ev)),
            Err(e) => out.push(self.event_error(e)),
        }
        live.last_echo_ms = None;
        out
    }

    fn emit(&self, ev: &GestureEvent) -> WireMessage {
        tracing::info!(
            session = %ev.session_id,
            decision = %ev.decision,
            class = %ev.prediction.class,
            confidence = ev.prediction.confidence,
            latency_ms = ev.latency_ms,
            points = ev.trajectory.len(),
            "gesture"
        );
        WireMessage::prediction(ev)
    }

    fn event_error(&self, e: Error) -> WireMessage {
        match e {
            Error::TooShort { .. } => WireMessage::error(ErrorCode::TooShort, e.to_string()),
            other => WireMessage::error(ErrorCode::BadMessage, other.to_string()),
        }
    }
}

fn flush_trail(live: &mut Live, now_ms: u64) -> Option<WireMessage> {
    if live.pending_trail.is_empty() {
        return None;
    }
    live.last_echo_ms = Some(now_ms);
    Some(WireMessage::Trail {
        session_id: live.session.id().to_string(),
        points: std::mem::take(&mut live.pending_trail),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use airpen_core::classifiers::{train, ClassifierKind, TrainConfig};
    use airpen_core::gestures::{generate_dataset, NoiseParams};
    use airpen_core::streaming::{Decision, SegmentMode};

    fn registry() -> SessionRegistry {
        let data = generate_dataset(6, 1, 5, &NoiseParams::DEFAULT).unwrap();
        let model = train(&TrainConfig::new(ClassifierKind::DtwKnn), &data.train).unwrap();
        SessionRegistry::new(Arc::new(model), SegmenterConfig::default()).unwrap()
    }

    fn swipe_right(n: usize, t0: u64) -> Vec<WireMessage> {
        (0..n)
            .map(|i| WireMessage::Point {
                x: 0.15 + 0.7 * i as f64 / (n - 1) as f64,
                y: 0.5,
                t_ms: t0 + i as u64 * 20,
            })
            .collect()
    }

    #[test]
    fn start_lists_ten_classes() {
        let reg = registry();
        let mut conn = reg.connect();
        let out = reg.handle_message(&mut conn, WireMessage::Start { session_hint: None });
        match &out[..] {
            [WireMessage::Started { session_id, classes }] => {
                assert_eq!(classes.len(), 10);
                assert_eq!(Some(session_id), conn.session_id.as_ref());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(reg.session_count(), 1);
        reg.disconnect(&mut conn);
        assert_eq!(reg.session_count(), 0);
    }

    #[test]
    fn scripted_swipe_is_predicted() {
        let reg = registry();
        let mut conn = reg.connect();
        reg.handle_message(&mut conn, WireMessage::Start { session_hint: Some("a b!".into()) });
        assert!(conn.session_id.as_deref().unwrap().starts_with("ab-"));
        let mut trail_points = 0;
        let mut trails = 0;
        for p in swipe_right(40, 1000) {
            for m in reg.handle_message(&mut conn, p) {
                match m {
                    WireMessage::Trail { points, .. } => {
                        trails += 1;
                        trail_points += points.len();
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
        }
        // Points arrive every 20 ms, so echoes go out at most every other point.
        assert!(trails <= 20, "{trails} echoes");
        let out = reg.handle_message(&mut conn, WireMessage::End {});
        let last = out.last().unwrap();
        for m in &out[..out.len() - 1] {
            if let WireMessage::Trail { points, .. } = m {
                trail_points += points.len();
            }
        }
        assert_eq!(trail_points, 40);
        match last {
            WireMessage::Prediction {
                decision, confidence, probs, ..
            } => {
                assert_eq!(*decision, Decision::Class(GestureClass::SwipeRight));
                assert!(*confidence > 0.85);
                assert_eq!(probs.len(), 10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn error_codes() {
        let reg = registry();
        let mut conn = reg.connect();
        let code = |out: Vec<WireMessage>| match &out[..] {
            [WireMessage::Error { code, .. }] => *code,
            other => panic!("{other:?}"),
        };
        let p = WireMessage::Point { x: 0.1, y: 0.1, t_ms: 0 };
        assert_eq!(code(reg.handle_message(&mut conn, p.clone())), ErrorCode::NoSession);
        assert_eq!(code(reg.handle_message(&mut conn, WireMessage::End {})), ErrorCode::NoSession);
        assert_eq!(code(reg.handle_text(&mut conn, "{oops")), ErrorCode::BadMessage);
        assert_eq!(code(reg.handle_text(&mut conn, r#"{"type":"trail","session_id":"x","points":[]}"#)), ErrorCode::BadMessage);
        reg.handle_message(&mut conn, WireMessage::Start { session_hint: None });
        assert_eq!(code(reg.handle_message(&mut conn, WireMessage::End {})), ErrorCode::TooShort);
        let outside = WireMessage::Point { x: 1.5, y: 0.1, t_ms: 0 };
        assert_eq!(code(reg.handle_message(&mut conn, outside)), ErrorCode::BadMessage);
        reg.handle_message(&mut conn, WireMessage::Point { x: 0.1, y: 0.1, t_ms: 50 });
        let back = WireMessage::Point { x: 0.2, y: 0.1, t_ms: 10 };
        assert_eq!(code(reg.handle_message(&mut conn, back)), ErrorCode::BadMessage);
        let bad_cfg = WireMessage::Config { threshold: Some(1.5), mode: None };
        assert_eq!(code(reg.handle_message(&mut conn, bad_cfg)), ErrorCode::BadMessage);
    }

    #[test]
    fn config_is_acknowledged_and_applied() {
        let reg = registry();
        let mut conn = reg.connect();
        reg.handle_message(&mut conn, WireMessage::Start { session_hint: None });
        let out = reg.handle_message(
            &mut conn,
            WireMessage::Config {
                threshold: Some(0.5),
                mode: Some(SegmentMode::Dwell),
            },
        );
        assert_eq!(
            out,
            vec![WireMessage::Config {
                threshold: Some(0.5),
                mode: Some(SegmentMode::Dwell)
            }]
        );
        assert_eq!(conn.config.confidence_threshold, 0.5);
        // Dwell now closes the stroke without an explicit end.
        let mut events = 0;
        let mut msgs = swipe_right(30, 0);
        for i in 1..=20 {
            msgs.push(WireMessage::Point { x: 0.85, y: 0.5, t_ms: 580 + i * 33 });
        }
        for m in msgs {
            events += reg
                .handle_message(&mut conn, m)
                .iter()
                .filter(|r| matches!(r, WireMessage::Prediction { .. }))
                .count();
        }
        assert_eq!(events, 1);
    }
}
