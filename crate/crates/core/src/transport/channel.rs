use std::io::{ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use super::{decode_message, encode_message, Codec, FrameDecoder, Message, TransportError};

/// A bidirectional pipe of whole frames.
pub trait Channel: Send {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    /// Blocks for the next frame; `None` waits forever.
    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError>;
}

/// In-process channel end. Frames still go through the codecs; only the
/// socket is skipped.
pub struct QueueChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn queue_pair() -> (QueueChannel, QueueChannel) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (QueueChannel { tx: a_tx, rx: a_rx }, QueueChannel { tx: b_tx, rx: b_rx })
}

impl Channel for QueueChannel {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| TransportError::ConnectionClosed)
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError> {
        match timeout {
            None => self.rx.recv().map_err(|_| TransportError::ConnectionClosed),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => TransportError::Timeout,
                RecvTimeoutError::Disconnected => TransportError::ConnectionClosed,
            }),
        }
    }
}

pub struct TcpChannel {
    stream: TcpStream,
    decoder: FrameDecoder,
    buf: Vec<u8>,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            decoder: FrameDecoder::new(),
            buf: vec![0; 64 * 1024],
        })
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.stream.write_all(frame)?;
        Ok(())
    }

    fn recv(&mut self, timeout: Option<Duration>) -> Result<Vec<u8>, TransportError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            if let Some(frame) = self.decoder.next_frame()? {
                return Ok(frame);
            }
            let remaining = match deadline {
                None => None,
                Some(d) => {
                    let left = d.saturating_duration_since(Instant::now());
                    if left.is_zero() {
                        return Err(TransportError::Timeout);
                    }
                    Some(left)
                }
            };
            self.stream.set_read_timeout(remaining)?;
            let n = match self.stream.read(&mut self.buf) {
                Ok(n) => n,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return Err(TransportError::Timeout)
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            if n == 0 {
                return Err(TransportError::ConnectionClosed);
            }
            self.decoder.push(&self.buf[..n]);
        }
    }
}

/// Blocking request/reply client with at most one request in flight.
pub struct Client {
    channel: Box<dyn Channel>,
    codec: Codec,
    timeout: Option<Duration>,
    bytes_sent: u64,
    bytes_received: u64,
}

impl Client {
    pub fn new(channel: Box<dyn Channel>, codec: Codec, timeout: Option<Duration>) -> Self {
        Self {
            channel,
            codec,
            timeout,
            bytes_sent: 0,
            bytes_received: 0,
        }
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn set_timeout(&mut self, timeout: Option<Duration>) {
        self.timeout = timeout;
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    /// Sends `msg` and blocks for the reply. An error reply from the server
    /// surfaces as [`TransportError::RemoteError`].
    pub fn request(&mut self, msg: &Message) -> Result<Message, TransportError> {
        let frame = encode_message(msg, self.codec)?;
        self.channel.send(&frame)?;
        self.bytes_sent += frame.len() as u64;
        let reply = self.channel.recv(self.timeout)?;
        self.bytes_received += reply.len() as u64;
        match decode_message(&reply, self.codec)? {
            Message::Error { code, message } => Err(TransportError::RemoteError { code, message }),
            other => Ok(other),
        }
    }
}
