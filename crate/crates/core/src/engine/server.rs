use std::net::TcpListener;

use log::{debug, warn};

use super::{EngineScript, Registry};
use crate::transport::{
    decode_message, encode_message, Channel, Codec, ErrorCode, Message, TcpChannel, TransportError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Created,
    Running,
    Closed,
}

/// Server-side state machine around one script. Handles one request at a time.
pub struct EngineServer {
    name: String,
    script: Box<dyn EngineScript>,
    registry: Registry,
    timestep_ns: u64,
    engine_time_ns: u64,
    run_loop_calls: u64,
    phase: Phase,
}

fn error(code: ErrorCode, message: impl Into<String>) -> Message {
    Message::Error {
        code,
        message: message.into(),
    }
}

impl EngineServer {
    pub fn new(name: impl Into<String>, script: Box<dyn EngineScript>) -> Self {
        let name = name.into();
        Self {
            registry: Registry::new(name.clone()),
            name,
            script,
            timestep_ns: 0,
            engine_time_ns: 0,
            run_loop_calls: 0,
            phase: Phase::Created,
        }
    }

    pub fn engine_time_ns(&self) -> u64 {
        self.engine_time_ns
    }

    pub fn run_loop_calls(&self) -> u64 {
        self.run_loop_calls
    }

    pub fn is_closed(&self) -> bool {
        self.phase == Phase::Closed
    }

    pub fn handle(&mut self, msg: Message) -> Message {
        match (self.phase, msg) {
            (Phase::Closed, m) => error(ErrorCode::UNEXPECTED_MESSAGE, format!("{} after shutdown", m.name())),
            (Phase::Created, Message::Init { engine_timestep_ns, .. }) => {
                if engine_timestep_ns == 0 {
                    return error(ErrorCode::MALFORMED_REQUEST, "engine timestep must be positive");
                }
                self.timestep_ns = engine_timestep_ns;
                self.registry.set_open(true);
                let result = self.script.initialize(&mut self.registry);
                self.registry.set_open(false);
                match result {
                    Ok(()) => {
                        self.phase = Phase::Running;
                        Message::InitReply {
                            engine_name: self.name.clone(),
                        }
                    }
                    Err(e) => error(ErrorCode::ENGINE_FAULT, format!("initialize failed: {e}")),
                }
            }
            (Phase::Running, Message::Init { .. }) => {
                error(ErrorCode::UNEXPECTED_MESSAGE, "engine already initialized")
            }
            (_, Message::Shutdown) => {
                if self.phase == Phase::Running {
                    if let Err(e) = self.script.shutdown(&mut self.registry) {
                        warn!("engine {} shutdown callback failed: {e}", self.name);
                    }
                }
                self.phase = Phase::Closed;
                Message::ShutdownAck
            }
            (Phase::Created, m) => error(ErrorCode::NOT_INITIALIZED, format!("{} before Init", m.name())),
            (Phase::Running, Message::RunStep { until_time_ns }) => {
                while self.engine_time_ns < until_time_ns {
                    if let Err(e) = self.script.run_loop(&mut self.registry, self.timestep_ns) {
                        return error(
                            ErrorCode::ENGINE_FAULT,
                            format!("run_loop failed at engine time {} ns: {e}", self.engine_time_ns),
                        );
                    }
                    self.run_loop_calls += 1;
                    self.engine_time_ns += self.timestep_ns;
                }
                Message::RunStepReply {
                    engine_time_ns: self.engine_time_ns,
                }
            }
            (Phase::Running, Message::GetDataPacks { ids }) => {
                match ids.iter().map(|id| self.registry.lookup(id)).collect() {
                    Ok(packs) => Message::GetDataPacksReply { packs },
                    Err(e) => error(ErrorCode::UNREGISTERED_DATAPACK, e.to_string()),
                }
            }
            (Phase::Running, Message::SetDataPacks { packs }) => {
                for dp in packs {
                    if let Err(e) = self.registry.receive(dp) {
                        return error(ErrorCode::UNREGISTERED_DATAPACK, e.to_string());
                    }
                }
                Message::SetDataPacksAck
            }
            (Phase::Running, m) => error(ErrorCode::UNEXPECTED_MESSAGE, format!("{} is not a request", m.name())),
        }
    }
}

/// Serves requests on `channel` until Shutdown or until the peer disconnects.
pub fn serve_engine(
    name: &str,
    script: Box<dyn EngineScript>,
    channel: &mut dyn Channel,
    codec: Codec,
) -> Result<(), TransportError> {
    let mut server = EngineServer::new(name, script);
    loop {
        let frame = match channel.recv(None) {
            Ok(f) => f,
            Err(TransportError::ConnectionClosed) => {
                debug!("engine {name}: client disconnected");
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let reply = match decode_message(&frame, codec) {
            Ok(msg) => server.handle(msg),
            Err(e) => error(ErrorCode::MALFORMED_REQUEST, e.to_string()),
        };
        channel.send(&encode_message(&reply, codec)?)?;
        if server.is_closed() {
            return Ok(());
        }
    }
}

/// Subprocess entry point: listens on loopback `port`, serves one client.
pub fn serve_tcp(name: &str, script: Box<dyn EngineScript>, port: u16, codec: Codec) -> Result<(), TransportError> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let (stream, peer) = listener.accept()?;
    debug!("engine {name}: accepted {peer}");
    let mut channel = TcpChannel::new(stream)?;
    serve_engine(name, script, &mut channel, codec)
}
