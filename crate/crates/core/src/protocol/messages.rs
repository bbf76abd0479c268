use std::io::{BufRead, BufReader, Read, Write};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::Basis;

/// One record on the classical channel.
///
/// On byte streams each message is a single JSON object on its own line,
/// tagged by a `"type"` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassicalMessage {
    /// Alice opens reconciliation for pulses `first .. first + count`.
    BasisRequest {
        first: u64,
        count: u64,
    },
    /// Bob's measured basis for every registered pulse, in index order.
    BobBasisAnnounce {
        entries: Vec<(u64, Basis)>,
    },
    /// Indices where Alice's basis matched.
    AliceMatchReply {
        kept: Vec<u64>,
    },
    /// Pulse indices whose bits are sacrificed for error estimation.
    SampleIndices {
        indices: Vec<u64>,
    },
    /// Bob's bits at the sampled indices, as 0/1.
    SampleBits {
        bits: Vec<u8>,
    },
    QberReport {
        qber: f64,
    },
}

impl ClassicalMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClassicalMessage::BasisRequest { .. } => "BasisRequest",
            ClassicalMessage::BobBasisAnnounce { .. } => "BobBasisAnnounce",
            ClassicalMessage::AliceMatchReply { .. } => "AliceMatchReply",
            ClassicalMessage::SampleIndices { .. } => "SampleIndices",
            ClassicalMessage::SampleBits { .. } => "SampleBits",
            ClassicalMessage::QberReport { .. } => "QberReport",
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the channel")]
    Closed,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Decode(#[from] serde_json::Error),
}

/// Ordered, reliable, duplex message channel.
pub trait Transport {
    fn send(&mut self, msg: ClassicalMessage) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<ClassicalMessage, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, msg: ClassicalMessage) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<ClassicalMessage, TransportError> {
        (**self).recv()
    }
}

/// In-process endpoint backed by a pair of channels.
#[derive(Debug)]
pub struct QueueEndpoint {
    tx: mpsc::Sender<ClassicalMessage>,
    rx: mpsc::Receiver<ClassicalMessage>,
}

pub fn queue_pair() -> (QueueEndpoint, QueueEndpoint) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        QueueEndpoint { tx: tx_a, rx: rx_a },
        QueueEndpoint { tx: tx_b, rx: rx_b },
    )
}

impl Transport for QueueEndpoint {
    fn send(&mut self, msg: ClassicalMessage) -> Result<(), TransportError> {
        self.tx.send(msg).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<ClassicalMessage, TransportError> {
        self.rx.recv().map_err(|_| TransportError::Closed)
    }
}

/// Line-delimited JSON over any byte stream (sockets, pipes).
pub struct StreamTransport<R: Read, W: Write> {
    reader: BufReader<R>,
    writer: W,
    line: String,
}

impl<R: Read, W: Write> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamTransport {
            reader: BufReader::new(reader),
            writer,
            line: String::new(),
        }
    }
}

impl<R: Read, W: Write> Transport for StreamTransport<R, W> {
    fn send(&mut self, msg: ClassicalMessage) -> Result<(), TransportError> {
        let mut buf = serde_json::to_vec(&msg)?;
        buf.push(b'\n');
        self.writer.write_all(&buf)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<ClassicalMessage, TransportError> {
        self.line.clear();
        if self.reader.read_line(&mut self.line)? == 0 {
            return Err(TransportError::Closed);
        }
        Ok(serde_json::from_str(self.line.trim_end())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Keeps a transcript of everything passing through the wrapped transport.
#[derive(Debug)]
pub struct Recorded<T> {
    inner: T,
    pub transcript: Vec<(Direction, ClassicalMessage)>,
}

impl<T> Recorded<T> {
    pub fn new(inner: T) -> Self {
        Recorded {
            inner,
            transcript: Vec::new(),
        }
    }
}

impl<T: Transport> Transport for Recorded<T> {
    fn send(&mut self, msg: ClassicalMessage) -> Result<(), TransportError> {
        self.transcript.push((Direction::Sent, msg.clone()));
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<ClassicalMessage, TransportError> {
        let msg = self.inner.recv()?;
        self.transcript.push((Direction::Received, msg.clone()));
        Ok(msg)
    }
}
