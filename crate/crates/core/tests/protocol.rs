mod common;

use std::collections::HashSet;
use std::time::Duration;

use common::{sine, OscSink, UiClient};
use rand::{Rng, SeedableRng};
use serde_json::json;
use sonomap::live::{LiveOptions, LiveRun};
use sonomap::session::{load_session, SessionConfig};
use sonomap::transport::OscArg;

fn start(osc: &OscSink, session_path: Option<std::path::PathBuf>) -> LiveRun {
    let config = SessionConfig::default();
    let mut options = LiveOptions::from_session(&config);
    options.osc_dest = osc.addr().to_string();
    options.ui_addr = "127.0.0.1:0".into();
    options.loop_input = true;
    options.session_path = session_path;
    LiveRun::start(&config, sine(440.0, 0.5, 44100), options).unwrap()
}

const WAIT: Duration = Duration::from_secs(5);

#[test]
fn announce_on_connect() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let mut client = UiClient::connect(live.ui_addr());
    let announce = client.recv_kind("announce", WAIT).expect("announce");
    let signals = announce.payload["signals"].as_array().unwrap();
    let ids: Vec<&str> = signals.iter().map(|s| s["id"].as_str().unwrap()).collect();
    let scene = signals.iter().filter(|s| s["direction"] == "destination").count();
    assert!(scene >= 8);
    for expected in ["backend0/global/loudness", "backend0/band1/loudness", "auto/fader1"] {
        assert!(ids.contains(&expected), "{expected}");
    }
    assert_eq!(announce.payload["revision"], 0);
    assert_eq!(announce.payload["mappings"], json!([]));

    // A second client joining mid-run gets the full announce too.
    let mut late = UiClient::connect(live.ui_addr());
    let again = late.recv_kind("announce", WAIT).unwrap();
    assert_eq!(again.payload["signals"], announce.payload["signals"]);
    live.stop();
}

#[test]
fn bad_expression_is_rejected() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let mut client = UiClient::connect(live.ui_addr());
    client.recv_kind("announce", WAIT).unwrap();
    let reply = client.add_map(&["backend0/global/loudness"], "scene/particles.size", "y=0.5*");
    assert_eq!(reply.kind, "error");
    assert_eq!(reply.payload["code"], "expression");
    assert!(!reply.payload["message"].as_str().unwrap().is_empty());
    assert_eq!(live.state().table().revision, 0);

    let reply = client.add_map(&["backend0/band9/loudness"], "scene/particles.size", "y=x");
    assert_eq!(reply.payload["code"], "unknown_signal");
    live.stop();
}

#[test]
fn automatable_value_reaches_values_stream() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let mut client = UiClient::connect(live.ui_addr());
    client.recv_kind("announce", WAIT).unwrap();
    let reply = client.request("set_auto", json!({"id": "auto/fader1", "value": 0.7}));
    assert_eq!(reply.kind, "ack", "{reply:?}");
    assert_eq!(reply.payload["value"], 0.7);
    client.pushed.clear();
    let values = client.recv_kind("values", WAIT).unwrap();
    assert_eq!(values.payload["values"]["auto/fader1"], 0.7);

    let reply = client.request("set_auto", json!({"id": "auto/fader2", "value": 3.0}));
    assert_eq!(reply.payload["value"], 1.0);
    let reply = client.request("set_auto", json!({"id": "backend0/global/pitch", "value": 0.1}));
    assert_eq!(reply.payload["code"], "not_automatable");
    live.stop();
}

#[test]
fn mapping_lifecycle_and_reannounce() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let mut client = UiClient::connect(live.ui_addr());
    client.recv_kind("announce", WAIT).unwrap();

    let ack = client.add_map(&["auto/fader1"], "scene/fog.density", "y = x");
    assert_eq!(ack.kind, "ack");
    let id = ack.payload["id"].as_u64().unwrap();
    let announce = client.recv_kind("announce", WAIT).expect("re-announce");
    assert_eq!(announce.payload["revision"], ack.payload["revision"]);
    assert_eq!(announce.payload["mappings"][0]["id"], id);
    assert_eq!(announce.payload["mappings"][0]["expression"], "y = x");

    let busy = client.add_map(&["auto/fader2"], "scene/fog.density", "y = x");
    assert_eq!(busy.payload["code"], "destination_busy");

    let r = client.request("set_expr", json!({"id": id, "expression": "y = 1 - x"}));
    assert_eq!(r.kind, "ack");
    let r = client.request("set_expr", json!({"id": id, "expression": "y = x1"}));
    assert_eq!(r.payload["code"], "expression");
    let r = client.request("set_enabled", json!({"id": id, "enabled": false}));
    assert_eq!(r.kind, "ack");
    let r = client.request("remove_map", json!({"id": id}));
    assert_eq!(r.kind, "ack");
    let r = client.request("remove_map", json!({"id": id}));
    assert_eq!(r.payload["code"], "unknown_mapping");
    assert_eq!(live.state().table().revision, 4);
    live.stop();
}

#[test]
fn osc_carries_changed_destinations_and_sync() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let mut client = UiClient::connect(live.ui_addr());
    client.recv_kind("announce", WAIT).unwrap();
    client.request("set_auto", json!({"id": "auto/fader1", "value": 0.8}));
    client.add_map(&["auto/fader1"], "scene/particles.size", "y = x");

    let mut saw_size = false;
    let mut syncs = Vec::new();
    for _ in 0..2000 {
        let Some(m) = osc.recv() else { break };
        match m.address.as_str() {
            "/sync" => syncs.push(m.args[0].clone()),
            "/scene/particles.size" => {
                if m.args == [OscArg::Float(0.8)] {
                    saw_size = true;
                }
            }
            a => assert!(a.starts_with("/scene/"), "{a}"),
        }
        if saw_size && syncs.len() > 50 {
            break;
        }
    }
    assert!(saw_size);
    let frames: Vec<i32> = syncs
        .iter()
        .map(|a| match a {
            OscArg::Int(i) => *i,
            other => panic!("{other:?}"),
        })
        .collect();
    assert!(frames.windows(2).all(|w| w[1] == w[0] + 1), "{frames:?}");
    live.stop();
}

#[test]
fn every_command_gets_one_reply() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let mut client = UiClient::connect(live.ui_addr());
    client.recv_kind("announce", WAIT).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let destinations = ["scene/fog.density", "scene/light.hue", "scene/camera.fov"];
    let mut sent = Vec::new();
    // Pipeline a burst of mixed, partly invalid commands before reading.
    for _ in 0..60 {
        let seq = match rng.gen_range(0..7) {
            0 => client.send(
                "add_map",
                json!({"sources": ["auto/fader1"], "destination": destinations[rng.gen_range(0..3)], "expression": "y=x"}),
            ),
            1 => client.send("remove_map", json!({"id": rng.gen_range(1..10)})),
            2 => client.send("set_auto", json!({"id": "auto/fader2", "value": rng.gen::<f64>()})),
            3 => client.send("set_expr", json!({"id": rng.gen_range(1..10), "expression": "y=0.5*"})),
            4 => client.send("set_enabled", json!({"id": rng.gen_range(1..10), "enabled": rng.gen::<bool>()})),
            5 => client.send("frobnicate", json!({})),
            _ => client.send("add_map", json!({"sources": []})),
        };
        sent.push(seq);
    }
    client.send_raw("{not json");
    let mut replies = Vec::new();
    while replies.len() < sent.len() + 1 {
        let e = client.recv(WAIT).expect("reply");
        if matches!(e.kind.as_str(), "ack" | "error") {
            replies.push(e.seq);
        }
    }
    assert_eq!(replies.last(), Some(&None));
    let got: Vec<i64> = replies[..sent.len()].iter().map(|s| s.unwrap()).collect();
    assert_eq!(got, sent);
    assert_eq!(got.iter().collect::<HashSet<_>>().len(), sent.len());
    assert!(client.recv_kind("ack", Duration::from_millis(300)).is_none());
    live.stop();
}

#[test]
fn save_writes_live_session() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("saved.json");
    let osc = OscSink::bind();
    let live = start(&osc, Some(path.clone()));
    let mut client = UiClient::connect(live.ui_addr());
    client.recv_kind("announce", WAIT).unwrap();
    client.add_map(&["backend0/global/loudness"], "scene/particles.size", "y=0.5*x");
    client.request("set_auto", json!({"id": "auto/fader3", "value": 0.4}));
    std::thread::sleep(Duration::from_millis(50));
    assert!(!path.exists());
    let reply = client.request("save", json!({}));
    assert_eq!(reply.kind, "ack", "{reply:?}");
    let saved = load_session(&path).unwrap();
    assert_eq!(saved.mappings.len(), 1);
    assert_eq!(saved.mappings[0].expression, "y=0.5*x");
    assert_eq!(saved.automatables[2].value, 0.4);
    live.stop();
}

#[test]
fn stop_is_prompt() {
    let osc = OscSink::bind();
    let live = start(&osc, None);
    let _client = UiClient::connect(live.ui_addr());
    std::thread::sleep(Duration::from_millis(200));
    let t = std::time::Instant::now();
    let report = live.stop();
    assert!(t.elapsed() < Duration::from_secs(2));
    assert!(report.frames > 5);
}
