//! Manager notifications: render a patrol event into a fixed-format text
//! message and deliver it to a webhook endpoint.
//!
//! Delivery runs on its own consumer thread behind an unbounded channel, so
//! a slow or dead endpoint never stalls the patrol loop. Outcomes are
//! collected as [`DeliveryRecord`]s and handed back at shutdown; failures
//! stay in the records and are never raised into the caller.
//!
//! The bearer token is read from an environment variable whose *name* is
//! configured. The value is fetched at send time and appears nowhere else:
//! not in records, not in errors, not in any `Debug` output.

use std::sync::mpsc;
use std::thread::JoinHandle;

use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};

use crate::registry::{PatrolEvent, Verdict};
use crate::retry::{self, RetryPolicy};

/// Message urgency. Warning is reserved for confirmed violations; an
/// unreadable plate is a manual-review item, not an alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
}

/// Warning iff the verdict is illegal.
pub fn severity_for(verdict: Verdict) -> Severity {
    match verdict {
        Verdict::Illegal => Severity::Warning,
        Verdict::Legal | Verdict::Unreadable => Severity::Info,
    }
}

/// Renders the fixed notification text for an event. The three templates
/// are load-bearing: downstream message routing keys off their first line,
/// so tests pin them byte for byte.
pub fn format_message(ev: &PatrolEvent) -> (String, Severity) {
    let time = ev.captured_at.to_rfc3339_opts(SecondsFormat::Secs, true);
    let text = match ev.verdict {
        Verdict::Legal => format!(
            "Parking check\nPlate: {}\nTime: {}\nPlace: {}\nStatus: LEGAL",
            plate_text(ev),
            time,
            ev.place
        ),
        Verdict::Illegal => format!(
            "⚠ ILLEGAL PARKING\nPlate: {}\nTime: {}\nPlace: {}\nStatus: ILLEGAL — action required",
            plate_text(ev),
            time,
            ev.place
        ),
        Verdict::Unreadable => format!(
            "Parking check\nPlate: UNREADABLE ({})\nTime: {}\nPlace: {}\nStatus: MANUAL REVIEW",
            ev.failure_reason.as_deref().unwrap_or("unknown"),
            time,
            ev.place
        ),
    };
    (text, severity_for(ev.verdict))
}

fn plate_text(ev: &PatrolEvent) -> &str {
    ev.plate.as_ref().map(|p| p.as_str()).unwrap_or("UNKNOWN")
}

/// One message addressed to one recipient, tied back to its event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub recipient: String,
    pub text: String,
    pub severity: Severity,
    /// Sequence number of the event this message reports.
    pub event_seq: u64,
}

/// Builds the notification for a persisted event.
pub fn notification_for(ev: &PatrolEvent, event_seq: u64, recipient: &str) -> Notification {
    let (text, severity) = format_message(ev);
    Notification {
        recipient: recipient.to_owned(),
        text,
        severity,
        event_seq,
    }
}

/// Webhook destination. The token never lives here, only the name of the
/// environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebhookConfig {
    pub url: String,
    #[serde(default = "default_token_env")]
    pub token_env: String,
    pub recipient: String,
    /// Send messages for legal sightings too (violations always send).
    #[serde(default = "default_notify_legal")]
    pub notify_legal: bool,
    #[serde(default = "RetryPolicy::notify_default")]
    pub retry: RetryPolicy,
}

fn default_token_env() -> String {
    "NOTIFY_TOKEN".to_owned()
}

fn default_notify_legal() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryStatus {
    Delivered,
    Failed,
    /// Queued or in flight.
    Pending,
}

/// Outcome of one notification's delivery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveryRecord {
    pub notification: Notification,
    /// HTTP attempts made (0 when delivery never reached the wire).
    pub attempts: u32,
    pub status: DeliveryStatus,
    pub last_error: Option<String>,
}

impl DeliveryRecord {
    fn pending(notification: Notification) -> Self {
        Self {
            notification,
            attempts: 0,
            status: DeliveryStatus::Pending,
            last_error: None,
        }
    }
}

/// Wire body: `{"to": ..., "messages": [{"type": "text", "text": ...}]}`.
/// Field order is part of the contract; goldens compare whole bodies.
pub fn payload_json(recipient: &str, text: &str) -> String {
    #[derive(Serialize)]
    struct Payload<'a> {
        to: &'a str,
        messages: [Message<'a>; 1],
    }
    #[derive(Serialize)]
    struct Message<'a> {
        r#type: &'static str,
        text: &'a str,
    }
    serde_json::to_string(&Payload {
        to: recipient,
        messages: [Message {
            r#type: "text",
            text,
        }],
    })
    .expect("payload serializes")
}

#[derive(Debug)]
enum SendFailure {
    Transport(String),
    Status(u16),
}

impl std::fmt::Display for SendFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SendFailure::Transport(e) => write!(f, "transport: {e}"),
            SendFailure::Status(s) => write!(f, "webhook answered HTTP {s}"),
        }
    }
}

/// Sends one notification, retrying 429/5xx/transport per the policy.
fn deliver(
    http: &reqwest::blocking::Client,
    cfg: &WebhookConfig,
    notification: Notification,
) -> DeliveryRecord {
    let mut record = DeliveryRecord::pending(notification);

    let token = match std::env::var(&cfg.token_env) {
        Ok(t) => t,
        Err(_) => {
            record.status = DeliveryStatus::Failed;
            record.last_error = Some(format!(
                "token env var {} is not set",
                cfg.token_env
            ));
            return record;
        }
    };

    let body = payload_json(&record.notification.recipient, &record.notification.text);
    let one_send = |_: u32| -> Result<(), SendFailure> {
        let resp = http
            .post(&cfg.url)
            .bearer_auth(&token)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.clone())
            .send()
            .map_err(|e| SendFailure::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(SendFailure::Status(status))
        }
    };
    let retryable = |e: &SendFailure| {
        matches!(
            e,
            SendFailure::Transport(_) | SendFailure::Status(429) | SendFailure::Status(500..=599)
        )
    };

    let (outcome, attempts) = retry::execute(&cfg.retry, one_send, retryable);
    record.attempts = attempts;
    match outcome {
        Ok(()) => record.status = DeliveryStatus::Delivered,
        Err(e) => {
            record.status = DeliveryStatus::Failed;
            record.last_error = Some(e.to_string());
        }
    }
    record
}

/// Asynchronous delivery queue: `enqueue` never blocks, messages to one
/// recipient go out strictly in enqueue order, and `shutdown` drains
/// whatever is still queued before returning the records.
pub struct NotifyQueue {
    cfg: WebhookConfig,
    tx: Option<mpsc::Sender<Notification>>,
    handle: Option<JoinHandle<Vec<DeliveryRecord>>>,
}

impl NotifyQueue {
    pub fn start(cfg: WebhookConfig) -> Self {
        let (tx, rx) = mpsc::channel::<Notification>();
        let thread_cfg = cfg.clone();
        let handle = std::thread::spawn(move || {
            let http = reqwest::blocking::Client::new();
            let mut records = Vec::new();
            // recv errors once every sender is gone and the queue is dry,
            // which is exactly the drain-then-exit shutdown we want
            while let Ok(n) = rx.recv() {
                records.push(deliver(&http, &thread_cfg, n));
            }
            records
        });
        Self {
            cfg,
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    pub fn config(&self) -> &WebhookConfig {
        &self.cfg
    }

    /// Queues a notification for delivery. Never blocks; if the consumer
    /// is gone the message is dropped rather than stalling the patrol.
    pub fn enqueue(&self, notification: Notification) {
        if let Some(tx) = &self.tx {
            let _ = tx.send(notification);
        }
    }

    /// Closes the queue, waits for every queued message to be attempted,
    /// and returns the delivery records in enqueue order.
    pub fn shutdown(mut self) -> Vec<DeliveryRecord> {
        self.tx.take();
        match self.handle.take() {
            Some(h) => h.join().unwrap_or_default(),
            None => Vec::new(),
        }
    }
}

impl Drop for NotifyQueue {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::MockServer;
    use crate::recognizer::normalize_plate;
    use crate::retry::Jitter;
    use chrono::{TimeZone, Utc};

    fn legal_event() -> PatrolEvent {
        PatrolEvent::read(
            normalize_plate("HPJ149").unwrap(),
            Utc.with_ymd_and_hms(2026, 8, 16, 9, 30, 0).unwrap(),
            "A3",
            Verdict::Legal,
            "dual/heuristic/baseline/binary",
            true,
        )
        .unwrap()
    }

    fn illegal_event() -> PatrolEvent {
        PatrolEvent::read(
            normalize_plate("WXY680").unwrap(),
            Utc.with_ymd_and_hms(2026, 8, 16, 9, 31, 0).unwrap(),
            "B1",
            Verdict::Illegal,
            "dual/heuristic/baseline/binary",
            true,
        )
        .unwrap()
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 5,
            base_ms: 1,
            factor: 1.0,
            cap_ms: 1,
            jitter: Jitter::None,
        }
    }

    fn cfg(url: String, token_env: &str) -> WebhookConfig {
        WebhookConfig {
            url,
            token_env: token_env.to_owned(),
            recipient: "manager".to_owned(),
            notify_legal: true,
            retry: fast_retry(),
        }
    }

    #[test]
    fn legal_message_is_byte_exact() {
        let (text, severity) = format_message(&legal_event());
        assert_eq!(
            text,
            "Parking check\nPlate: HPJ149\nTime: 2026-08-16T09:30:00Z\nPlace: A3\nStatus: LEGAL"
        );
        assert_eq!(severity, Severity::Info);
    }

    #[test]
    fn illegal_message_is_byte_exact_and_warns() {
        let (text, severity) = format_message(&illegal_event());
        assert_eq!(
            text,
            "⚠ ILLEGAL PARKING\nPlate: WXY680\nTime: 2026-08-16T09:31:00Z\nPlace: B1\nStatus: ILLEGAL — action required"
        );
        assert_eq!(severity, Severity::Warning);
    }

    #[test]
    fn unreadable_message_is_byte_exact_and_stays_info() {
        let ev = PatrolEvent::unreadable(
            "ocr: no glyph columns found",
            Utc.with_ymd_and_hms(2026, 8, 16, 9, 32, 0).unwrap(),
            "C2",
            "dual/heuristic/baseline/binary",
            true,
        );
        let (text, severity) = format_message(&ev);
        assert_eq!(
            text,
            "Parking check\nPlate: UNREADABLE (ocr: no glyph columns found)\nTime: 2026-08-16T09:32:00Z\nPlace: C2\nStatus: MANUAL REVIEW"
        );
        assert_eq!(severity, Severity::Info);
    }

    #[test]
    fn payload_shape_is_pinned() {
        assert_eq!(
            payload_json("manager", "hello"),
            r#"{"to":"manager","messages":[{"type":"text","text":"hello"}]}"#
        );
    }

    #[test]
    fn config_defaults_fill_in() {
        let cfg: WebhookConfig =
            toml::from_str("url = \"http://127.0.0.1:1/hook\"\nrecipient = \"manager\"").unwrap();
        assert_eq!(cfg.token_env, "NOTIFY_TOKEN");
        assert!(cfg.notify_legal);
        assert_eq!(cfg.retry, RetryPolicy::notify_default());
    }

    #[test]
    fn first_attempt_success_delivers_with_one_attempt() {
        let server = MockServer::status_sequence(vec![200]).unwrap();
        std::env::set_var("NOTIFY_TOKEN_T1", "tok-t1");
        let queue = NotifyQueue::start(cfg(server.url_with_path("/hook"), "NOTIFY_TOKEN_T1"));
        queue.enqueue(notification_for(&legal_event(), 1, "manager"));
        let records = queue.shutdown();

        assert_eq!(records.len(), 1);
        assert_eq!(records[0].status, DeliveryStatus::Delivered);
        assert_eq!(records[0].attempts, 1);
        assert_eq!(records[0].last_error, None);
        assert_eq!(server.hits(), 1);

        let req = &server.requests()[0];
        assert_eq!(req.method, "POST");
        assert_eq!(req.header("authorization"), Some("Bearer tok-t1"));
        let (text, _) = format_message(&legal_event());
        assert_eq!(
            String::from_utf8(req.body.clone()).unwrap(),
            payload_json("manager", &text)
        );
    }

    #[test]
    fn rate_limited_delivery_retries_to_success() {
        let server = MockServer::status_sequence(vec![429, 429, 200]).unwrap();
        std::env::set_var("NOTIFY_TOKEN_T2", "tok-t2");
        let queue = NotifyQueue::start(cfg(server.url(), "NOTIFY_TOKEN_T2"));
        queue.enqueue(notification_for(&illegal_event(), 7, "manager"));
        let records = queue.shutdown();

        assert_eq!(records[0].status, DeliveryStatus::Delivered);
        assert_eq!(records[0].attempts, 3);
        assert_eq!(server.hits(), 3);
    }

    #[test]
    fn persistent_server_errors_exhaust_and_fail() {
        let server = MockServer::status_sequence(vec![500]).unwrap();
        std::env::set_var("NOTIFY_TOKEN_T3", "tok-t3");
        let queue = NotifyQueue::start(cfg(server.url(), "NOTIFY_TOKEN_T3"));
        queue.enqueue(notification_for(&legal_event(), 2, "manager"));
        let records = queue.shutdown();

        assert_eq!(records[0].status, DeliveryStatus::Failed);
        assert_eq!(records[0].attempts, 5);
        assert!(records[0].last_error.as_deref().unwrap().contains("500"));
        assert_eq!(server.hits(), 5);
    }

    #[test]
    fn client_errors_other_than_429_do_not_retry() {
        let server = MockServer::status_sequence(vec![403]).unwrap();
        std::env::set_var("NOTIFY_TOKEN_T4", "tok-t4");
        let queue = NotifyQueue::start(cfg(server.url(), "NOTIFY_TOKEN_T4"));
        queue.enqueue(notification_for(&legal_event(), 3, "manager"));
        let records = queue.shutdown();

        assert_eq!(records[0].status, DeliveryStatus::Failed);
        assert_eq!(records[0].attempts, 1);
        assert_eq!(server.hits(), 1);
    }

    #[test]
    fn messages_go_out_in_enqueue_order() {
        let server = MockServer::status_sequence(vec![200]).unwrap();
        std::env::set_var("NOTIFY_TOKEN_T5", "tok-t5");
        let queue = NotifyQueue::start(cfg(server.url(), "NOTIFY_TOKEN_T5"));
        for seq in 1..=5 {
            let mut n = notification_for(&legal_event(), seq, "manager");
            n.text = format!("message {seq}");
            queue.enqueue(n);
        }
        let records = queue.shutdown();

        let seqs: Vec<u64> = records.iter().map(|r| r.notification.event_seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
        assert!(records
            .iter()
            .all(|r| r.status == DeliveryStatus::Delivered));

        let bodies: Vec<String> = server
            .requests()
            .iter()
            .map(|r| String::from_utf8(r.body.clone()).unwrap())
            .collect();
        for (i, body) in bodies.iter().enumerate() {
            assert!(
                body.contains(&format!("message {}", i + 1)),
                "wire order matches enqueue order"
            );
        }
    }

    #[test]
    fn missing_token_var_fails_fast_naming_the_variable() {
        let server = MockServer::status_sequence(vec![200]).unwrap();
        let queue = NotifyQueue::start(cfg(server.url(), "NOTIFY_TOKEN_UNSET_T6"));
        queue.enqueue(notification_for(&legal_event(), 1, "manager"));
        let records = queue.shutdown();

        assert_eq!(records[0].status, DeliveryStatus::Failed);
        assert_eq!(records[0].attempts, 0);
        assert!(records[0]
            .last_error
            .as_deref()
            .unwrap()
            .contains("NOTIFY_TOKEN_UNSET_T6"));
        assert_eq!(server.hits(), 0, "no request without a token");
    }

    #[test]
    fn token_value_reaches_the_wire_but_never_the_records() {
        let sentinel = "sentinel-9f1c2a-secret";
        let server = MockServer::status_sequence(vec![500]).unwrap();
        std::env::set_var("NOTIFY_TOKEN_T7", sentinel);
        let queue = NotifyQueue::start(cfg(server.url(), "NOTIFY_TOKEN_T7"));
        queue.enqueue(notification_for(&illegal_event(), 9, "manager"));
        let records = queue.shutdown();

        // the mock really saw the bearer header
        let auth = server.requests()[0].header("authorization").unwrap().to_owned();
        assert_eq!(auth, format!("Bearer {sentinel}"));

        // ...but nothing we keep or print contains the value
        let dump = format!("{records:?}");
        assert!(!dump.contains(sentinel), "records leak the token: {dump}");
        let json = serde_json::to_string(&records).unwrap();
        assert!(!json.contains(sentinel));
    }
}
