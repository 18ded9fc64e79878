use std::sync::Arc;
use std::time::Duration;

use airpen_core::classifiers::{train, ClassifierKind, TrainConfig};
use airpen_core::gestures::{generate_dataset, GestureClass, NoiseParams};
use airpen_core::streaming::Decision;
use airpen_service::{ErrorCode, Service, ServiceConfig, WireMessage};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Running {
    url: String,
    stop: Option<oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<()>,
    registry: Arc<airpen_service::SessionRegistry>,
}

async fn spawn_service() -> Running {
    let data = generate_dataset(6, 1, 11, &NoiseParams::DEFAULT).unwrap();
    let model = train(&TrainConfig::new(ClassifierKind::DtwKnn), &data.train).unwrap();
    let service = Service::bind("127.0.0.1:0".parse().unwrap(), Arc::new(model), ServiceConfig::default())
        .await
        .unwrap();
    let addr = service.local_addr().unwrap();
    let registry = service.registry();
    let (tx, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        service
            .run(Box::pin(async {
                let _ = rx.await;
            }))
            .await
            .unwrap();
    });
    Running {
        url: format!("ws://{addr}/ws"),
        stop: Some(tx),
        handle,
        registry,
    }
}

async fn send(ws: &mut Ws, msg: &WireMessage) {
    ws.send(Message::Text(msg.to_json().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> WireMessage {
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("reply within 10 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = frame {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn start(ws: &mut Ws) -> String {
    send(ws, &WireMessage::Start { session_hint: None }).await;
    match recv(ws).await {
        WireMessage::Started { session_id, classes } => {
            assert_eq!(classes, GestureClass::names());
            session_id
        }
        other => panic!("{other:?}"),
    }
}

/// Normalized points along a straight stroke.
fn line(from: (f64, f64), to: (f64, f64), n: usize, t0: u64) -> Vec<WireMessage> {
    (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            WireMessage::Point {
                x: from.0 + u * (to.0 - from.0),
                y: from.1 + u * (to.1 - from.1),
                t_ms: t0 + i as u64 * 33,
            }
        })
        .collect()
}

/// Sends a stroke and `end`, returning every reply up to the prediction or error.
async fn stroke(ws: &mut Ws, points: &[WireMessage]) -> (Vec<WireMessage>, WireMessage) {
    for p in points {
        send(ws, p).await;
    }
    send(ws, &WireMessage::End {}).await;
    let mut trails = Vec::new();
    loop {
        match recv(ws).await {
            m @ WireMessage::Trail { .. } => trails.push(m),
            m => return (trails, m),
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_swipe_round_trip() {
    let svc = spawn_service().await;
    let (mut ws, _) = connect_async(&svc.url).await.unwrap();
    let id = start(&mut ws).await;
    let (trails, last) = stroke(&mut ws, &line((0.15, 0.5), (0.85, 0.5), 40, 0)).await;
    let echoed: usize = trails
        .iter()
        .map(|t| match t {
            WireMessage::Trail { session_id, points } => {
                assert_eq!(session_id, &id);
                points.len()
            }
            _ => unreachable!(),
        })
        .sum();
    assert_eq!(echoed, 40);
    match last {
        WireMessage::Prediction {
            session_id,
            decision,
            confidence,
            latency_ms,
            ..
        } => {
            assert_eq!(session_id, id);
            assert_eq!(decision, Decision::Class(GestureClass::SwipeRight));
            assert!(confidence > 0.85);
            assert!(latency_ms < 100.0);
        }
        other => panic!("{other:?}"),
    }

    // Empty stroke, then protocol errors.
    send(&mut ws, &WireMessage::End {}).await;
    assert!(matches!(recv(&mut ws).await, WireMessage::Error { code: ErrorCode::TooShort, .. }));
    ws.send(Message::Text("{\"type\":\"wave\"}".into())).await.unwrap();
    assert!(matches!(recv(&mut ws).await, WireMessage::Error { code: ErrorCode::BadMessage, .. }));
    ws.close(None).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn points_before_start_are_rejected() {
    let svc = spawn_service().await;
    let (mut ws, _) = connect_async(&svc.url).await.unwrap();
    send(&mut ws, &WireMessage::Point { x: 0.5, y: 0.5, t_ms: 0 }).await;
    assert!(matches!(recv(&mut ws).await, WireMessage::Error { code: ErrorCode::NoSession, .. }));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_clients_are_isolated() {
    let svc = spawn_service().await;
    let run = |url: String, from: (f64, f64), to: (f64, f64), expect: GestureClass| async move {
        let (mut ws, _) = connect_async(&url).await.unwrap();
        let id = start(&mut ws).await;
        let mut seen = Vec::new();
        for round in 0..5 {
            let (trails, last) = stroke(&mut ws, &line(from, to, 30, round * 5000)).await;
            for m in trails.iter().chain(std::iter::once(&last)) {
                assert_eq!(m.session_id(), Some(id.as_str()), "foreign message {m:?}");
            }
            match last {
                WireMessage::Prediction { decision, .. } => seen.push(decision),
                other => panic!("{other:?}"),
            }
        }
        assert!(seen.iter().all(|d| *d == Decision::Class(expect)), "{seen:?}");
        id
    };
    let a = tokio::spawn(run(svc.url.clone(), (0.15, 0.5), (0.85, 0.5), GestureClass::SwipeRight));
    let b = tokio::spawn(run(svc.url.clone(), (0.5, 0.85), (0.5, 0.15), GestureClass::SwipeUp));
    let (a, b) = (a.await.unwrap(), b.await.unwrap());
    assert_ne!(a, b);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn soak_fifty_strokes() {
    let svc = spawn_service().await;
    let (mut ws, _) = connect_async(&svc.url).await.unwrap();
    start(&mut ws).await;
    let mut predictions = 0;
    let mut latencies = Vec::new();
    for i in 0..50u64 {
        let pts = if i % 2 == 0 {
            line((0.15, 0.5), (0.85, 0.5), 40, i * 10_000)
        } else {
            line((0.85, 0.5), (0.15, 0.5), 40, i * 10_000)
        };
        match stroke(&mut ws, &pts).await.1 {
            WireMessage::Prediction { latency_ms, .. } => {
                predictions += 1;
                latencies.push(latency_ms);
            }
            other => panic!("stroke {i}: {other:?}"),
        }
    }
    assert_eq!(predictions, 50);
    let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
    assert!(mean < 100.0, "mean latency {mean} ms");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn shutdown_closes_open_sessions() {
    let mut svc = spawn_service().await;
    let (mut ws, _) = connect_async(&svc.url).await.unwrap();
    start(&mut ws).await;
    send(&mut ws, &WireMessage::Point { x: 0.2, y: 0.2, t_ms: 0 }).await;
    assert!(matches!(recv(&mut ws).await, WireMessage::Trail { .. }));
    assert_eq!(svc.registry.session_count(), 1);
    svc.stop.take().unwrap().send(()).unwrap();
    // The server sends a close frame and nothing else.
    loop {
        match tokio::time::timeout(Duration::from_secs(10), ws.next()).await.unwrap() {
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(Message::Text(t))) => panic!("unexpected message after shutdown: {t}"),
            Some(Ok(_)) => {}
        }
    }
    tokio::time::timeout(Duration::from_secs(10), svc.handle).await.unwrap().unwrap();
    assert_eq!(svc.registry.session_count(), 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn index_page_is_served() {
    let svc = spawn_service().await;
    let addr = svc.url.trim_start_matches("ws://").trim_end_matches("/ws").to_string();
    let mut stream = TcpStream::connect(&addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(format!("GET / HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("/ws"));
}
