//! Loopback transport throughput: a frame is pushed to an engine server and
//! read back over TCP, once per round trip.

use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use crate::datapack::{DataPack, DataPackId, Payload, PayloadKind};
use crate::engine::{serve_engine, EngineScript, Registry, ScriptError};
use crate::perception::CameraFrame;
use crate::transport::{Client, Codec, Message, TcpChannel, TransportError};

/// Payload size of a 736×480 RGB frame.
pub const CAMERA_FRAME_BYTES: usize = 736 * 480 * 3;

const ENGINE: &str = "bench_relay";
const PACK: &str = "frame";

#[derive(Debug, Clone, PartialEq)]
pub struct Throughput {
    pub codec: Codec,
    pub payload_bytes: usize,
    pub iterations: u32,
    /// Frame bytes sent plus received by the client, handshake excluded.
    pub wire_bytes: u64,
    pub seconds: f64,
}

impl Throughput {
    /// Payload bytes moved per second; each round trip carries the frame
    /// twice.
    pub fn bytes_per_sec(&self) -> f64 {
        2.0 * self.payload_bytes as f64 * f64::from(self.iterations) / self.seconds
    }

    pub fn round_trips_per_sec(&self) -> f64 {
        f64::from(self.iterations) / self.seconds
    }
}

pub const CSV_HEADER: &str = "codec,payload_bytes,iterations,wire_bytes,seconds,bytes_per_sec,round_trips_per_sec";

pub fn csv_row(t: &Throughput) -> String {
    format!(
        "{},{},{},{},{:.6},{:.1},{:.3}",
        t.codec,
        t.payload_bytes,
        t.iterations,
        t.wire_bytes,
        t.seconds,
        t.bytes_per_sec(),
        t.round_trips_per_sec()
    )
}

/// Stores whatever frame it receives; never steps.
struct Relay;

impl EngineScript for Relay {
    fn initialize(&mut self, r: &mut Registry) -> Result<(), ScriptError> {
        r.register(PACK, PayloadKind::CameraFrame)?;
        Ok(())
    }

    fn run_loop(&mut self, _: &mut Registry, _: u64) -> Result<(), ScriptError> {
        Ok(())
    }
}

fn unexpected(request: &'static str, got: &Message) -> TransportError {
    TransportError::UnexpectedReply {
        request,
        got: got.name(),
    }
}

/// Runs `iterations` SetDataPacks/GetDataPacks round trips of a
/// `payload_bytes` frame against a relay engine on a loopback socket.
pub fn measure_throughput(codec: Codec, payload_bytes: usize, iterations: u32) -> Result<Throughput, TransportError> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let addr = listener.local_addr()?;
    let server = thread::Builder::new()
        .name("bench-relay".into())
        .spawn(move || -> Result<(), TransportError> {
            let (stream, _) = listener.accept()?;
            let mut ch = TcpChannel::new(stream)?;
            serve_engine(ENGINE, Box::new(Relay), &mut ch, codec)
        })?;

    let mut client = Client::new(
        Box::new(TcpChannel::new(TcpStream::connect(addr)?)?),
        codec,
        Some(Duration::from_secs(60)),
    );
    let init = Message::Init {
        engine_name: ENGINE.into(),
        engine_timestep_ns: 10_000_000,
    };
    match client.request(&init)? {
        Message::InitReply { .. } => {}
        other => return Err(unexpected("Init", &other)),
    }

    let dp = DataPack::new(
        PACK,
        ENGINE,
        Payload::CameraFrame(CameraFrame::for_payload_size(payload_bytes)),
    );
    let set = Message::SetDataPacks {
        packs: vec![dp.clone()],
    };
    let get = Message::GetDataPacks {
        ids: vec![DataPackId::new(PACK, PayloadKind::CameraFrame, ENGINE)],
    };

    let before = client.bytes_sent() + client.bytes_received();
    let start = Instant::now();
    for _ in 0..iterations {
        match client.request(&set)? {
            Message::SetDataPacksAck => {}
            other => return Err(unexpected("SetDataPacks", &other)),
        }
        match client.request(&get)? {
            Message::GetDataPacksReply { packs } if packs.len() == 1 && packs[0] == dp => {}
            other => return Err(unexpected("GetDataPacks", &other)),
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let wire_bytes = client.bytes_sent() + client.bytes_received() - before;

    let _ = client.request(&Message::Shutdown);
    drop(client);
    server
        .join()
        .map_err(|_| TransportError::Io("relay thread panicked".into()))??;

    Ok(Throughput {
        codec,
        payload_bytes,
        iterations,
        wire_bytes,
        seconds,
    })
}
