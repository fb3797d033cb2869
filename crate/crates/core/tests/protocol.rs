use std::net::TcpListener;
use std::time::{Duration, Instant};

use mosaic_core::detector::protocol::{parse_response, Request, Response, WireDetection};
use mosaic_core::detector::test_server::{ServerMode, TestServer};
use mosaic_core::detector::{Detector, DetectorError, RemoteDetector};
use mosaic_core::raster::PixelBuffer;

const SIDE: u32 = 16;

fn client(mode: ServerMode, timeout: Duration) -> (TestServer, RemoteDetector) {
    let server = TestServer::spawn("127.0.0.1:0", mode).expect("server");
    let det = RemoteDetector::connect(&server.addr().to_string(), SIDE, timeout).expect("connect");
    (server, det)
}

fn input() -> PixelBuffer {
    PixelBuffer::filled(SIDE, SIDE, [3, 2, 1])
}

fn error_for(raw: &str) -> DetectorError {
    let (_server, mut det) = client(ServerMode::Raw(raw.into()), Duration::from_secs(5));
    det.detect(&input(), None).expect_err("server answers badly")
}

#[test]
fn echo_server_answers_every_request() {
    let (server, mut det) = client(ServerMode::Echo, Duration::from_secs(5));
    for _ in 0..5 {
        assert!(det.detect(&input(), None).expect("answer").is_empty());
    }
    assert_eq!(server.requests_served(), 5);
}

#[test]
fn response_for_another_request_is_rejected() {
    let err = error_for(r#"{"id":999,"detections":[]}"#);
    assert!(matches!(err, DetectorError::IdMismatch { expected: 0, found: 999 }), "{err}");
}

#[test]
fn remote_error_is_surfaced() {
    let err = error_for(r#"{"id":{id},"error":"model not loaded"}"#);
    match err {
        DetectorError::Remote(msg) => assert_eq!(msg, "model not loaded"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn malformed_payloads_are_distinguished() {
    let cases = [
        (r#"not json"#, "malformed"),
        (r#"{"id":{id}}"#, "malformed"),
        (r#"{"id":{id},"detections":[{"x":1,"y":1,"w":-2,"h":2,"class":"car","score":0.5}]}"#, "malformed"),
        (r#"{"id":{id},"detections":[{"x":1,"y":1,"w":2,"h":2,"class":"tank","score":0.5}]}"#, "malformed"),
        (r#"{"id":{id},"detections":[{"x":1,"y":1,"w":2,"h":2,"class":"car","score":-0.01}]}"#, "invalid_score"),
    ];
    for (raw, kind) in cases {
        assert_eq!(error_for(raw).kind(), kind, "{raw}");
    }
}

#[test]
fn stalled_server_times_out_after_one_retry() {
    let timeout = Duration::from_millis(150);
    let (_server, mut det) = client(ServerMode::Stall, timeout);
    let t = Instant::now();
    let err = det.detect(&input(), None).expect_err("no answer");
    assert!(matches!(err, DetectorError::Timeout { id: 0 }), "{err}");
    assert_eq!(det.retries(), 1);
    assert!(t.elapsed() >= 2 * timeout);
}

#[test]
fn refused_connection_is_a_connect_error() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").expect("bind");
        l.local_addr().expect("addr")
    };
    match RemoteDetector::connect(&addr.to_string(), SIDE, Duration::from_millis(200)) {
        Err(e) => assert_eq!(e.kind(), "connect"),
        Ok(_) => panic!("nothing listens on {addr}"),
    }
}

#[test]
fn wrong_input_size_is_refused_locally() {
    let (server, mut det) = client(ServerMode::Echo, Duration::from_secs(5));
    let err = det.detect(&PixelBuffer::new(SIDE + 1, SIDE), None).expect_err("bad size");
    assert!(matches!(err, DetectorError::InputSize { expected: SIDE, .. }), "{err}");
    assert_eq!(server.requests_served(), 0);
}

#[test]
fn wire_lines_round_trip() {
    let mut px = PixelBuffer::new(5, 3);
    px.put(4, 2, [255, 0, 7]);
    let req = Request::new(12, &px);
    let back: Request = serde_json::from_str(&req.to_line()).expect("request json");
    assert_eq!(back, req);
    assert_eq!(back.decode_pixels().expect("pixels"), px);

    let det = WireDetection { x: 1.5, y: 0.25, w: 1e-9, h: 7.0, class: "person".into(), score: 0.125 };
    let line = Response::ok(12, vec![det.clone()]).to_line();
    let parsed = parse_response(&line, 12).expect("response");
    assert_eq!((parsed[0].bbox.x, parsed[0].bbox.w, parsed[0].score), (det.x, det.w, det.score));
}
