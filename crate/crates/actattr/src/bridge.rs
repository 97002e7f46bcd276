//! Client-server split for the primitive API: the world and its sensors
//! live behind a TCP endpoint, the interpreter runs wherever and calls
//! primitives through a [`BridgeClient`]. The wire format is one JSON
//! object per newline-terminated line.
//!
//! Messages: `Hello{protocol_version}` both ways to open, then strictly
//! alternating `CallRequest{id, primitive, args}` /
//! `CallResponse{id, ok, value|error}` with ids strictly increasing,
//! `FrameMeta{frame_id, width, height}` notices interleaved before a
//! response when the call captured camera frames, and `Bye{}` to close.
//! Anything malformed aborts the session; the next session starts clean.
//! Camera pixels never cross the wire: perception runs server-side, so
//! frames appear on the wire only as their metadata.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{
    interpret, plan_external, plan_template, print_program, EpisodeTrace, InterpConfig, Outcome,
    PlanError, PlannerClientConfig, Query,
};
use crate::rig::{HostCall, HostError, HostValue, PrimitiveHost, Rig};

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BridgeMessage {
    Hello {
        protocol_version: String,
    },
    CallRequest {
        id: u64,
        #[serde(flatten)]
        call: HostCall,
    },
    CallResponse {
        id: u64,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<HostValue>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<HostError>,
    },
    FrameMeta {
        frame_id: u64,
        width: f64,
        height: f64,
    },
    Bye {},
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bridge io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("server speaks protocol {0}, client speaks {PROTOCOL_VERSION}")]
    VersionMismatch(String),
    #[error("{0}")]
    Remote(HostError),
}

fn write_msg(stream: &mut TcpStream, msg: &BridgeMessage) -> std::io::Result<()> {
    let mut line = serde_json::to_string(msg).expect("messages serialize");
    line.push('\n');
    stream.write_all(line.as_bytes())
}

// ---------------------------------------------------------------- server

/// Server knobs. `call_delay` injects per-call latency (testing and
/// bandwidth rehearsal); zero means none.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    pub timeout: Duration,
    pub max_sessions: usize,
    pub call_delay: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:0".into(),
            timeout: Duration::from_secs(5),
            max_sessions: 16,
            call_delay: Duration::ZERO,
        }
    }
}

impl ServerConfig {
    /// Environment overrides: ACTATTR_BIND, ACTATTR_TIMEOUT_MS,
    /// ACTATTR_MAX_SESSIONS. Unset or unparsable variables keep defaults.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var("ACTATTR_BIND") {
            cfg.bind = v;
        }
        if let Some(ms) = std::env::var("ACTATTR_TIMEOUT_MS")
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
        {
            cfg.timeout = Duration::from_millis(ms);
        }
        if let Some(n) = std::env::var("ACTATTR_MAX_SESSIONS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
        {
            cfg.max_sessions = n;
        }
        cfg
    }
}

/// Builds one fresh, isolated episode per connection.
pub type RigFactory = Arc<dyn Fn() -> Result<Rig, crate::scene::SceneError> + Send + Sync>;

pub struct ServerHandle {
    addr: std::net::SocketAddr,
    shutdown: Arc<AtomicBool>,
    join: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> String {
        self.addr.to_string()
    }

    pub fn shutdown(mut self) {
        self.stop();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }

    fn stop(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

/// Bind and serve until the handle shuts down. Each connection gets a
/// handshake, its own episode from the factory, and a strict
/// request/response loop. Sessions never share state; a dead or misbehaving
/// session only ends itself.
pub fn serve(cfg: ServerConfig, factory: RigFactory) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(&cfg.bind)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let live = Arc::new(AtomicUsize::new(0));
    let join = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            if live.load(Ordering::SeqCst) >= cfg.max_sessions {
                continue; // refuse by dropping the connection
            }
            live.fetch_add(1, Ordering::SeqCst);
            let live = live.clone();
            let factory = factory.clone();
            let cfg = cfg.clone();
            std::thread::spawn(move || {
                // A panicking session must not take the server down.
                let _ = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    let _ = session(stream, &cfg, &factory);
                }));
                live.fetch_sub(1, Ordering::SeqCst);
            });
        }
    });
    Ok(ServerHandle {
        addr,
        shutdown,
        join: Some(join),
    })
}

fn session(stream: TcpStream, cfg: &ServerConfig, factory: &RigFactory) -> std::io::Result<()> {
    stream.set_read_timeout(Some(cfg.timeout))?;
    stream.set_write_timeout(Some(cfg.timeout))?;
    // Request/response over small frames: Nagle only adds delayed-ACK
    // stalls between a frame notice and its response.
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();

    // Handshake: exactly one Hello with the right version, answered in kind.
    line.clear();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    match serde_json::from_str::<BridgeMessage>(&line) {
        Ok(BridgeMessage::Hello { protocol_version }) if protocol_version == PROTOCOL_VERSION => {
            write_msg(
                &mut writer,
                &BridgeMessage::Hello {
                    protocol_version: PROTOCOL_VERSION.into(),
                },
            )?;
        }
        _ => {
            // Version mismatch or junk: abort at the handshake.
            let _ = write_msg(&mut writer, &BridgeMessage::Bye {});
            return Ok(());
        }
    }

    let Ok(mut rig) = factory() else {
        let _ = write_msg(&mut writer, &BridgeMessage::Bye {});
        return Ok(());
    };
    let mut last_id: Option<u64> = None;
    let mut frames_sent = rig.frames_taken();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(()); // disconnect releases the episode
        }
        let msg = match serde_json::from_str::<BridgeMessage>(&line) {
            Ok(m) => m,
            Err(_) => return Ok(()), // malformed frame: clean abort
        };
        match msg {
            BridgeMessage::CallRequest { id, call } => {
                if last_id.is_some_and(|prev| id <= prev) {
                    return Ok(()); // ids must strictly increase
                }
                last_id = Some(id);
                if !cfg.call_delay.is_zero() {
                    std::thread::sleep(cfg.call_delay);
                }
                let result = rig.call(&call);
                // Frame notices go out before the response they belong to.
                let now = rig.frames_taken();
                for frame_id in frames_sent..now {
                    write_msg(
                        &mut writer,
                        &BridgeMessage::FrameMeta {
                            frame_id,
                            width: rig.cam.width,
                            height: rig.cam.height,
                        },
                    )?;
                }
                frames_sent = now;
                let response = match result {
                    Ok(value) => BridgeMessage::CallResponse {
                        id,
                        ok: true,
                        value: Some(value),
                        error: None,
                    },
                    Err(e) => BridgeMessage::CallResponse {
                        id,
                        ok: false,
                        value: None,
                        error: Some(e),
                    },
                };
                write_msg(&mut writer, &response)?;
            }
            BridgeMessage::Bye {} => return Ok(()),
            // Anything else mid-session is a protocol violation.
            _ => return Ok(()),
        }
    }
}

// ---------------------------------------------------------------- client

#[derive(Debug, Clone, Copy)]
pub struct BridgeClientConfig {
    pub timeout: Duration,
}

impl Default for BridgeClientConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(5),
        }
    }
}

/// Blocking single-flight client. Implements [`PrimitiveHost`], so an
/// interpreter running over it cannot tell it from an in-process rig;
/// transported primitive errors keep their original kind.
pub struct BridgeClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    next_id: u64,
    timeout: Duration,
    /// Frame notices seen, for trace alignment with server-side captures.
    pub frames: Vec<(u64, f64, f64)>,
    /// Wall-clock duration of each round trip.
    pub latencies: Vec<Duration>,
}

impl BridgeClient {
    pub fn connect(endpoint: &str, cfg: &BridgeClientConfig) -> Result<Self, BridgeError> {
        let addr = endpoint
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| BridgeError::ProtocolViolation(format!("no address for {endpoint}")))?;
        let stream = TcpStream::connect_timeout(&addr, cfg.timeout)?;
        stream.set_read_timeout(Some(cfg.timeout))?;
        stream.set_write_timeout(Some(cfg.timeout))?;
        stream.set_nodelay(true)?;
        let mut client = Self {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
            next_id: 1,
            timeout: cfg.timeout,
            frames: Vec::new(),
            latencies: Vec::new(),
        };
        write_msg(
            &mut client.writer,
            &BridgeMessage::Hello {
                protocol_version: PROTOCOL_VERSION.into(),
            },
        )?;
        match client.read_msg()? {
            BridgeMessage::Hello { protocol_version } if protocol_version == PROTOCOL_VERSION => {
                Ok(client)
            }
            BridgeMessage::Hello { protocol_version } => {
                Err(BridgeError::VersionMismatch(protocol_version))
            }
            other => Err(BridgeError::ProtocolViolation(format!(
                "expected Hello, got {other:?}"
            ))),
        }
    }

    fn read_msg(&mut self) -> Result<BridgeMessage, BridgeError> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(BridgeError::ProtocolViolation(
                "server closed the connection".into(),
            )),
            Ok(_) => serde_json::from_str(&line)
                .map_err(|e| BridgeError::ProtocolViolation(format!("unparsable message: {e}"))),
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                Err(BridgeError::Timeout(self.timeout))
            }
            Err(e) => Err(BridgeError::Io(e)),
        }
    }

    /// One blocking request/response round trip. Exactly one request is in
    /// flight by construction: the method borrows the client mutably and
    /// does not return until the matching response (or an error) arrives.
    pub fn remote_primitive(&mut self, call: &HostCall) -> Result<HostValue, BridgeError> {
        let id = self.next_id;
        self.next_id += 1;
        let started = Instant::now();
        write_msg(&mut self.writer, &BridgeMessage::CallRequest { id, call: call.clone() })?;
        loop {
            match self.read_msg()? {
                BridgeMessage::FrameMeta {
                    frame_id,
                    width,
                    height,
                } => self.frames.push((frame_id, width, height)),
                BridgeMessage::CallResponse {
                    id: rid,
                    ok,
                    value,
                    error,
                } => {
                    self.latencies.push(started.elapsed());
                    if rid != id {
                        return Err(BridgeError::ProtocolViolation(format!(
                            "response id {rid} for request {id}"
                        )));
                    }
                    return match (ok, value, error) {
                        (true, Some(v), _) => Ok(v),
                        (false, _, Some(e)) => Err(BridgeError::Remote(e)),
                        _ => Err(BridgeError::ProtocolViolation(
                            "response carries neither value nor error".into(),
                        )),
                    };
                }
                other => {
                    return Err(BridgeError::ProtocolViolation(format!(
                        "unexpected mid-call message {other:?}"
                    )))
                }
            }
        }
    }

    pub fn bye(mut self) {
        let _ = write_msg(&mut self.writer, &BridgeMessage::Bye {});
    }
}

impl PrimitiveHost for BridgeClient {
    fn call(&mut self, call: &HostCall) -> Result<HostValue, HostError> {
        self.remote_primitive(call).map_err(|e| match e {
            BridgeError::Remote(he) => he,
            BridgeError::Timeout(d) => {
                HostError::new("Timeout", format!("no response within {d:?}"))
            }
            BridgeError::ProtocolViolation(msg) => HostError::new("ProtocolViolation", msg),
            BridgeError::VersionMismatch(v) => {
                HostError::new("ProtocolViolation", format!("server protocol {v}"))
            }
            BridgeError::Io(e) => HostError::new("Io", e.to_string()),
        })
    }
}

// ------------------------------------------------------------- episodes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyStats {
    pub calls: usize,
    pub total_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_durations(ds: &[Duration]) -> Self {
        if ds.is_empty() {
            return Self::default();
        }
        let ms: Vec<f64> = ds.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        let total: f64 = ms.iter().sum();
        Self {
            calls: ms.len(),
            total_ms: total,
            mean_ms: total / ms.len() as f64,
            max_ms: ms.iter().cloned().fold(0.0, f64::max),
        }
    }
}

/// How to obtain the program for an episode.
pub enum Planner<'a> {
    Template,
    External {
        endpoint: &'a str,
        api_doc: &'a str,
        config: PlannerClientConfig,
    },
}

/// End-to-end result of one bridged (or local) episode. Failures land in
/// `failed` rather than escaping as errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub query: String,
    pub program_text: Option<String>,
    pub answer: Option<String>,
    pub answer_object: Option<String>,
    pub trace: EpisodeTrace,
    pub latency: LatencyStats,
    pub failed: Option<String>,
}

impl EpisodeResult {
    fn failure(query: &Query, program_text: Option<String>, message: String) -> Self {
        Self {
            query: query.text.clone(),
            program_text,
            answer: None,
            answer_object: None,
            trace: EpisodeTrace::default(),
            latency: LatencyStats::default(),
            failed: Some(message),
        }
    }
}

fn plan_for(query: &Query, planner: &Planner) -> Result<crate::lang::Program, PlanError> {
    match planner {
        Planner::Template => plan_template(query),
        Planner::External {
            endpoint,
            api_doc,
            config,
        } => plan_external(query, endpoint, api_doc, config),
    }
}

/// Plan and interpret one episode with every primitive routed through the
/// bridge endpoint. Planner, bridge, and runtime failures all produce a
/// failed result, never a crash.
pub fn run_bridged_episode(
    query: &Query,
    endpoint: &str,
    planner: &Planner,
    client_cfg: &BridgeClientConfig,
    interp_cfg: &InterpConfig,
) -> EpisodeResult {
    let program = match plan_for(query, planner) {
        Ok(p) => p,
        Err(e) => return EpisodeResult::failure(query, None, e.to_string()),
    };
    let text = print_program(&program);
    let mut client = match BridgeClient::connect(endpoint, client_cfg) {
        Ok(c) => c,
        Err(e) => return EpisodeResult::failure(query, Some(text), e.to_string()),
    };
    let outcome = interpret(&program, &mut client, interp_cfg);
    let latency = LatencyStats::from_durations(&client.latencies);
    client.bye();
    match outcome {
        Ok(Outcome {
            answer,
            answer_object,
            trace,
            ..
        }) => EpisodeResult {
            query: query.text.clone(),
            program_text: Some(text),
            answer: Some(answer),
            answer_object,
            trace,
            latency,
            failed: None,
        },
        Err(e) => EpisodeResult {
            query: query.text.clone(),
            program_text: Some(text),
            answer: None,
            answer_object: None,
            trace: e.trace.clone(),
            latency,
            failed: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerConfig;
    use crate::kb::KnowledgeBase;
    use crate::lang::QueryFamily;
    use crate::scene::{CameraModel, NoiseProfile, Pose, RobotInit, SceneFile, SceneObject};

    fn scene() -> SceneFile {
        let obj = |id: &str, name: &str, x: f64, mass: f64| SceneObject {
            id: id.into(),
            name: name.into(),
            center: [x, 2.0, 0.07],
            extent: [0.06, 0.06, 0.06],
            mass,
            graspable: true,
        };
        SceneFile {
            seed: 33,
            time_step: 0.1,
            camera: CameraModel::standard(),
            objects: vec![
                obj("f", "feather", -0.7, 0.005),
                obj("d", "dog", 0.0, 22.0),
                obj("c", "car", 0.7, 1450.0),
                SceneObject {
                    id: "m".into(),
                    name: "mat".into(),
                    center: [0.0, 2.0, 0.005],
                    extent: [1.6, 0.9, 0.005],
                    mass: 3.0,
                    graspable: false,
                },
            ],
            robot: RobotInit {
                pose: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            },
        }
    }

    fn factory() -> RigFactory {
        Arc::new(|| {
            Rig::new(
                &scene(),
                ControllerConfig::default(),
                NoiseProfile::zero(),
                KnowledgeBase::bundled(),
            )
        })
    }

    fn start_server() -> ServerHandle {
        serve(ServerConfig::default(), factory()).unwrap()
    }

    #[test]
    fn handshake_and_find_round_trip() {
        let server = start_server();
        let mut client =
            BridgeClient::connect(&server.addr(), &BridgeClientConfig::default()).unwrap();
        let bridged = client
            .remote_primitive(&HostCall::Find {
                label: "dog".into(),
            })
            .unwrap();

        let mut rig = factory()().unwrap();
        let local = rig
            .call(&HostCall::Find {
                label: "dog".into(),
            })
            .unwrap();
        assert_eq!(bridged, local);
        // The find captured one frame; its notice arrived.
        assert_eq!(client.frames.len(), 1);
        assert_eq!(client.frames[0], (0, 320.0, 240.0));
        client.bye();
        server.shutdown();
    }

    #[test]
    fn version_mismatch_aborts_at_hello() {
        let server = start_server();
        let stream = TcpStream::connect(server.addr()).unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        writer
            .write_all(b"{\"type\":\"hello\",\"protocol_version\":\"99\"}\n")
            .unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let msg: BridgeMessage = serde_json::from_str(&line).unwrap();
        assert_eq!(msg, BridgeMessage::Bye {});
        server.shutdown();
    }

    #[test]
    fn primitive_errors_transport_and_session_survives() {
        let server = start_server();
        let mut client =
            BridgeClient::connect(&server.addr(), &BridgeClientConfig::default()).unwrap();
        let err = client.remote_primitive(&HostCall::MeasureWeight).unwrap_err();
        match err {
            BridgeError::Remote(he) => assert_eq!(he.kind, "NotHolding"),
            other => panic!("wrong error: {other:?}"),
        }
        // Same session keeps working after the failed call.
        let ok = client.remote_primitive(&HostCall::Exists {
            label: "dog".into(),
        });
        assert_eq!(ok.unwrap(), HostValue::Bool(true));
        client.bye();
        server.shutdown();
    }

    #[test]
    fn sessions_are_isolated_episodes() {
        let server = start_server();
        let cfg = BridgeClientConfig::default();
        // Session 1 disturbs the world, then dies without Bye.
        {
            let mut c1 = BridgeClient::connect(&server.addr(), &cfg).unwrap();
            let HostValue::Patches(ps) = c1
                .remote_primitive(&HostCall::Find {
                    label: "dog".into(),
                })
                .unwrap()
            else {
                panic!()
            };
            c1.remote_primitive(&HostCall::GoToObject {
                patch: ps[0].clone(),
            })
            .unwrap();
            c1.remote_primitive(&HostCall::PickUp {
                patch: ps[0].clone(),
            })
            .unwrap();
            // dropped: connection closes mid-episode
        }
        // Session 2 sees a fresh world: nothing held, weight errors.
        let mut c2 = BridgeClient::connect(&server.addr(), &cfg).unwrap();
        let err = c2.remote_primitive(&HostCall::MeasureWeight).unwrap_err();
        assert!(matches!(err, BridgeError::Remote(he) if he.kind == "NotHolding"));
        c2.bye();
        server.shutdown();
    }

    #[test]
    fn silent_server_times_out() {
        // A bare listener that accepts, handshakes, then goes silent.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut writer = stream.try_clone().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            writer
                .write_all(b"{\"type\":\"hello\",\"protocol_version\":\"1\"}\n")
                .unwrap();
            // swallow the request and never answer
            let mut line = String::new();
            let _ = reader.read_line(&mut line);
            std::thread::sleep(Duration::from_secs(2));
        });
        let mut client = BridgeClient::connect(
            &addr.to_string(),
            &BridgeClientConfig {
                timeout: Duration::from_millis(150),
            },
        )
        .unwrap();
        let err = client.remote_primitive(&HostCall::MeasureWeight).unwrap_err();
        assert!(matches!(err, BridgeError::Timeout(_)));
    }

    #[test]
    fn mismatched_response_id_is_a_protocol_violation() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut writer = stream.try_clone().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            writer
                .write_all(b"{\"type\":\"hello\",\"protocol_version\":\"1\"}\n")
                .unwrap();
            line.clear();
            reader.read_line(&mut line).unwrap();
            writer
                .write_all(
                    b"{\"type\":\"call_response\",\"id\":999,\"ok\":true,\"value\":{\"type\":\"bool\",\"data\":true}}\n",
                )
                .unwrap();
        });
        let mut client =
            BridgeClient::connect(&addr.to_string(), &BridgeClientConfig::default()).unwrap();
        let err = client
            .remote_primitive(&HostCall::Exists {
                label: "dog".into(),
            })
            .unwrap_err();
        assert!(matches!(err, BridgeError::ProtocolViolation(_)));
    }

    #[test]
    fn malformed_frames_abort_cleanly_and_server_lives_on() {
        let server = start_server();
        // A valid handshake followed by garbage.
        let stream = TcpStream::connect(server.addr()).unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        writer
            .write_all(b"{\"type\":\"hello\",\"protocol_version\":\"1\"}\n")
            .unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        writer.write_all(b"this is not json\n").unwrap();
        line.clear();
        // Clean abort: connection closes without a response.
        let n = reader.read_line(&mut line).unwrap();
        assert_eq!(n, 0);

        // The server still serves fresh sessions.
        let mut client =
            BridgeClient::connect(&server.addr(), &BridgeClientConfig::default()).unwrap();
        let v = client
            .remote_primitive(&HostCall::Exists {
                label: "car".into(),
            })
            .unwrap();
        assert_eq!(v, HostValue::Bool(true));
        client.bye();
        server.shutdown();
    }

    #[test]
    fn non_increasing_ids_end_the_session() {
        let server = start_server();
        let stream = TcpStream::connect(server.addr()).unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        writer
            .write_all(b"{\"type\":\"hello\",\"protocol_version\":\"1\"}\n")
            .unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let req = b"{\"type\":\"call_request\",\"id\":5,\"primitive\":\"exists\",\"args\":{\"label\":\"dog\"}}\n";
        writer.write_all(req).unwrap();
        // Skip the frame notice the call produced, then check the response.
        loop {
            line.clear();
            reader.read_line(&mut line).unwrap();
            if line.contains("call_response") {
                break;
            }
        }
        assert!(line.contains("\"id\":5"));
        // Same id again: session ends without answering.
        writer.write_all(req).unwrap();
        line.clear();
        assert_eq!(reader.read_line(&mut line).unwrap(), 0);
        server.shutdown();
    }

    #[test]
    fn bridged_episode_matches_local_run() {
        let server = start_server();
        let query = Query {
            text: "Out of the feather, dog, car, which one is the heaviest?".into(),
            family: QueryFamily::WeightExtreme,
            ground_truth: "c".into(),
        };

        let bridged = run_bridged_episode(
            &query,
            &server.addr(),
            &Planner::Template,
            &BridgeClientConfig::default(),
            &InterpConfig::default(),
        );
        assert_eq!(bridged.failed, None);
        assert_eq!(bridged.answer.as_deref(), Some("c"));

        let program = plan_template(&query).unwrap();
        let mut rig = factory()().unwrap();
        let local = interpret(&program, &mut rig, &InterpConfig::default()).unwrap();
        assert_eq!(bridged.answer.as_deref(), Some(local.answer.as_str()));
        assert_eq!(bridged.trace, local.trace);
        assert_eq!(bridged.latency.calls, local.trace.entries.len());
        server.shutdown();
    }

    #[test]
    fn endpoint_down_yields_failed_result() {
        let query = Query {
            text: "Out of the feather, dog, car, which one is the heaviest?".into(),
            family: QueryFamily::WeightExtreme,
            ground_truth: "c".into(),
        };
        let result = run_bridged_episode(
            &query,
            "127.0.0.1:1",
            &Planner::Template,
            &BridgeClientConfig {
                timeout: Duration::from_millis(200),
            },
            &InterpConfig::default(),
        );
        assert!(result.failed.is_some());
        assert_eq!(result.answer, None);
    }

    #[test]
    fn injected_delay_shows_up_in_latency_stats() {
        let delay = Duration::from_millis(20);
        let server = serve(
            ServerConfig {
                call_delay: delay,
                ..ServerConfig::default()
            },
            factory(),
        )
        .unwrap();
        let mut client =
            BridgeClient::connect(&server.addr(), &BridgeClientConfig::default()).unwrap();
        for _ in 0..5 {
            client
                .remote_primitive(&HostCall::Exists {
                    label: "dog".into(),
                })
                .unwrap();
        }
        let stats = LatencyStats::from_durations(&client.latencies);
        assert_eq!(stats.calls, 5);
        // Every call waited at least the injected delay.
        assert!(stats.mean_ms >= 20.0, "mean {}", stats.mean_ms);
        assert!(stats.total_ms >= 100.0, "total {}", stats.total_ms);
        client.bye();
        server.shutdown();
    }
}
