//! Point-to-point message passing between ranks.
//!
//! Two backends share one [`Endpoint`] front end: threads joined by channels,
//! and separate processes joined by loopback TCP sockets. Payloads are plain
//! `f64` arrays; the only framing is the kind tag and the length.

use std::collections::VecDeque;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Interface rank-map exchange at initialization.
    RankMap,
    /// Generic collective; a correct run never issues one after initialization.
    Broadcast,
    Solution,
    Flux,
    LiftSolution,
    LiftFlux,
    MortarSolution,
    MortarFlux,
    MortarLiftSolution,
    MortarLiftFlux,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        Self::RankMap,
        Self::Broadcast,
        Self::Solution,
        Self::Flux,
        Self::LiftSolution,
        Self::LiftFlux,
        Self::MortarSolution,
        Self::MortarFlux,
        Self::MortarLiftSolution,
        Self::MortarLiftFlux,
    ];

    pub fn is_collective(self) -> bool {
        matches!(self, Self::RankMap | Self::Broadcast)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RankMap => "rank_map",
            Self::Broadcast => "broadcast",
            Self::Solution => "solution",
            Self::Flux => "flux",
            Self::LiftSolution => "lift_solution",
            Self::LiftFlux => "lift_flux",
            Self::MortarSolution => "mortar_solution",
            Self::MortarFlux => "mortar_flux",
            Self::MortarLiftSolution => "mortar_lift_solution",
            Self::MortarLiftFlux => "mortar_lift_flux",
        }
    }

    fn code(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    fn from_code(c: u8) -> Result<Self> {
        Self::ALL
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Transport(format!("unknown message kind {c}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: MessageKind,
    pub payload: Vec<f64>,
}

/// Raw delivery between ranks. Delivery per `(src, dst)` pair is FIFO.
pub trait Backend: Send {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn post(&mut self, dst: usize, frame: Frame) -> Result<()>;
    /// Next frame from `src`; blocks when `block` is set.
    fn poll(&mut self, src: usize, block: bool) -> Result<Option<Frame>>;
}

/// Thread backend over `std::sync::mpsc` channels.
pub struct InProcBackend {
    rank: usize,
    to: Vec<Sender<Frame>>,
    from: Vec<Receiver<Frame>>,
}

/// Generous upper bound on how long a rank waits for a peer.
const RECV_TIMEOUT: Duration = Duration::from_secs(600);

impl Backend for InProcBackend {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.to.len()
    }

    fn post(&mut self, dst: usize, frame: Frame) -> Result<()> {
        self.to[dst]
            .send(frame)
            .map_err(|_| Error::Transport(format!("rank {dst} hung up")))
    }

    fn poll(&mut self, src: usize, block: bool) -> Result<Option<Frame>> {
        let rx = &self.from[src];
        if block {
            match rx.recv_timeout(RECV_TIMEOUT) {
                Ok(f) => Ok(Some(f)),
                Err(RecvTimeoutError::Timeout) => {
                    Err(Error::Transport(format!("timed out waiting for rank {src}")))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    Err(Error::Transport(format!("rank {src} hung up")))
                }
            }
        } else {
            match rx.try_recv() {
                Ok(f) => Ok(Some(f)),
                Err(TryRecvError::Empty) => Ok(None),
                Err(TryRecvError::Disconnected) => {
                    Err(Error::Transport(format!("rank {src} hung up")))
                }
            }
        }
    }
}

/// Endpoints for `n` ranks connected by channels, one per ordered pair.
pub fn in_process_endpoints(n: usize) -> Vec<Endpoint> {
    let mut senders: Vec<Vec<Option<Sender<Frame>>>> = (0..n).map(|_| vec![None; n]).collect();
    let mut receivers: Vec<Vec<Option<Receiver<Frame>>>> =
        (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    for src in 0..n {
        for dst in 0..n {
            let (tx, rx) = channel();
            senders[src][dst] = Some(tx);
            receivers[dst][src] = Some(rx);
        }
    }
    senders
        .into_iter()
        .zip(receivers)
        .enumerate()
        .map(|(rank, (to, from))| {
            Endpoint::new(Box::new(InProcBackend {
                rank,
                to: to.into_iter().map(Option::unwrap).collect(),
                from: from.into_iter().map(Option::unwrap).collect(),
            }))
        })
        .collect()
}

pub(crate) fn write_frame(w: &mut impl Write, frame: &Frame) -> std::io::Result<()> {
    w.write_all(&[frame.kind.code()])?;
    w.write_all(&(frame.payload.len() as u64).to_le_bytes())?;
    for v in &frame.payload {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_frame(r: &mut impl Read) -> Result<Frame> {
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(Frame {
        kind: MessageKind::from_code(tag[0])?,
        payload: bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    })
}

/// Peers start in arbitrary order, so refused connections are retried.
fn dial(addr: &SocketAddr) -> Result<TcpStream> {
    let deadline = std::time::Instant::now() + CONNECT_TIMEOUT;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(_) if std::time::Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(Error::Transport(format!("cannot reach {addr}: {e}"))),
        }
    }
}

const CONNECT_TIMEOUT: Duration = Duration::from_secs(30);

/// Process backend over loopback TCP, one stream per peer.
///
/// Each stream gets a writer thread so `post` never blocks on a slow reader,
/// and a reader thread that queues incoming frames.
pub struct SocketBackend {
    rank: usize,
    size: usize,
    to: Vec<Option<Sender<Frame>>>,
    from: Vec<Option<Receiver<Result<Frame>>>>,
    loopback: VecDeque<Frame>,
    threads: Vec<JoinHandle<()>>,
}

impl SocketBackend {
    /// Connects to all peers: lower ranks are dialed, higher ranks accepted.
    /// `addrs[r]` is where rank `r` listens; `listener` is this rank's socket.
    pub fn connect(rank: usize, addrs: &[SocketAddr], listener: TcpListener) -> Result<Self> {
        let size = addrs.len();
        let mut streams: Vec<Option<TcpStream>> = (0..size).map(|_| None).collect();
        for (peer, addr) in addrs.iter().enumerate().take(rank) {
            let mut s = dial(addr)?;
            s.write_all(&(rank as u64).to_le_bytes())?;
            streams[peer] = Some(s);
        }
        for _ in rank + 1..size {
            let (mut s, _) = listener.accept()?;
            let mut id = [0u8; 8];
            s.read_exact(&mut id)?;
            let peer = u64::from_le_bytes(id) as usize;
            if peer <= rank || peer >= size || streams[peer].is_some() {
                return Err(Error::Transport(format!("unexpected peer id {peer}")));
            }
            streams[peer] = Some(s);
        }
        let mut backend = Self {
            rank,
            size,
            to: (0..size).map(|_| None).collect(),
            from: (0..size).map(|_| None).collect(),
            loopback: VecDeque::new(),
            threads: Vec::new(),
        };
        for (peer, stream) in streams.into_iter().enumerate() {
            let Some(stream) = stream else { continue };
            stream.set_nodelay(true)?;
            let read_half = stream.try_clone()?;
            let (wtx, wrx) = channel::<Frame>();
            let (rtx, rrx) = channel::<Result<Frame>>();
            backend.threads.push(std::thread::spawn(move || {
                let mut w = BufWriter::new(stream);
                for frame in wrx {
                    if write_frame(&mut w, &frame).and_then(|_| w.flush()).is_err() {
                        break;
                    }
                }
                let _ = w.flush();
                let _ = w.get_ref().shutdown(std::net::Shutdown::Write);
            }));
            // readers end on EOF from the peer and are not joined
            std::thread::spawn(move || {
                let mut r = BufReader::new(read_half);
                loop {
                    let mut probe = [0u8; 1];
                    match r.read(&mut probe) {
                        Ok(0) | Err(_) => break,
                        Ok(_) => {
                            let frame = read_frame(&mut (&probe[..]).chain(&mut r));
                            let failed = frame.is_err();
                            if rtx.send(frame).is_err() || failed {
                                break;
                            }
                        }
                    }
                }
            });
            backend.to[peer] = Some(wtx);
            backend.from[peer] = Some(rrx);
        }
        Ok(backend)
    }
}

impl Backend for SocketBackend {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn post(&mut self, dst: usize, frame: Frame) -> Result<()> {
        if dst == self.rank {
            self.loopback.push_back(frame);
            return Ok(());
        }
        self.to[dst]
            .as_ref()
            .ok_or_else(|| Error::Transport(format!("no stream to rank {dst}")))?
            .send(frame)
            .map_err(|_| Error::Transport(format!("stream to rank {dst} closed")))
    }

    fn poll(&mut self, src: usize, block: bool) -> Result<Option<Frame>> {
        if src == self.rank {
            return Ok(self.loopback.pop_front());
        }
        let rx = self.from[src]
            .as_ref()
            .ok_or_else(|| Error::Transport(format!("no stream from rank {src}")))?;
        let got = if block {
            match rx.recv_timeout(RECV_TIMEOUT) {
                Ok(f) => Some(f),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Transport(format!("timed out waiting for rank {src}")))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Transport(format!("stream from rank {src} closed")))
                }
            }
        } else {
            match rx.try_recv() {
                Ok(f) => Some(f),
                Err(TryRecvError::Empty) => None,
                Err(TryRecvError::Disconnected) => {
                    return Err(Error::Transport(format!("stream from rank {src} closed")))
                }
            }
        };
        got.transpose()
    }
}

impl Drop for SocketBackend {
    fn drop(&mut self) {
        // closing the queues lets the writers flush and exit
        self.to.clear();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Time level of a message; `step == -1` is initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch {
    pub step: i64,
    pub stage: usize,
}

impl Epoch {
    pub const INIT: Epoch = Epoch { step: -1, stage: 0 };
}

/// One sent message as seen by its sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: i64,
    pub stage: usize,
    pub src: usize,
    pub dst: usize,
    pub bytes: usize,
    pub kind: MessageKind,
    /// Sliding interface a mortar message belongs to.
    pub interface: Option<usize>,
}

/// Pending receive of a known kind and length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecvRequest {
    pub src: usize,
    pub kind: MessageKind,
    pub len: usize,
}

/// Per-rank communication front end with a send trace.
pub struct Endpoint {
    backend: Box<dyn Backend>,
    /// Frames already pulled off the backend, per source.
    inbox: Vec<VecDeque<Frame>>,
    epoch: Epoch,
    trace: Vec<TraceEvent>,
}

impl Endpoint {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        let n = backend.size();
        Self {
            backend,
            inbox: (0..n).map(|_| VecDeque::new()).collect(),
            epoch: Epoch::INIT,
            trace: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.backend.rank()
    }

    pub fn size(&self) -> usize {
        self.backend.size()
    }

    pub fn set_epoch(&mut self, epoch: Epoch) {
        self.epoch = epoch;
    }

    pub fn epoch(&self) -> Epoch {
        self.epoch
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    /// Non-blocking send: the payload is handed to the backend immediately.
    pub fn isend(&mut self, dst: usize, kind: MessageKind, payload: Vec<f64>) -> Result<()> {
        self.isend_on(dst, kind, None, payload)
    }

    /// [`Endpoint::isend`] recording the interface in the trace.
    pub fn isend_on(
        &mut self,
        dst: usize,
        kind: MessageKind,
        interface: Option<usize>,
        payload: Vec<f64>,
    ) -> Result<()> {
        if dst >= self.size() || dst == self.rank() {
            return Err(Error::Protocol(format!(
                "rank {} cannot send to rank {dst}",
                self.rank()
            )));
        }
        self.trace.push(TraceEvent {
            step: self.epoch.step,
            stage: self.epoch.stage,
            src: self.rank(),
            dst,
            bytes: payload.len() * std::mem::size_of::<f64>(),
            kind,
            interface,
        });
        self.backend.post(dst, Frame { kind, payload })
    }

    pub fn irecv(&self, src: usize, kind: MessageKind, len: usize) -> RecvRequest {
        RecvRequest { src, kind, len }
    }

    fn pump(&mut self, src: usize, block: bool) -> Result<bool> {
        match self.backend.poll(src, block)? {
            Some(f) => {
                self.inbox[src].push_back(f);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    fn position(&self, req: &RecvRequest) -> Option<usize> {
        self.inbox[req.src].iter().position(|f| f.kind == req.kind)
    }

    /// Whether `req` can complete without blocking.
    pub fn test(&mut self, req: &RecvRequest) -> Result<bool> {
        while self.position(req).is_none() {
            if !self.pump(req.src, false)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Completes `req`, checking the agreed length.
    pub fn wait(&mut self, req: RecvRequest) -> Result<Vec<f64>> {
        let pos = loop {
            if let Some(p) = self.position(&req) {
                break p;
            }
            self.pump(req.src, true)?;
        };
        let frame = self.inbox[req.src].remove(pos).unwrap();
        if frame.payload.len() != req.len {
            return Err(Error::Protocol(format!(
                "rank {} expected {} values of kind {} from rank {}, got {}",
                self.rank(),
                req.len,
                req.kind.name(),
                req.src,
                frame.payload.len()
            )));
        }
        Ok(frame.payload)
    }

    /// Every rank's contribution, in rank order. Built from point-to-point
    /// messages tagged with a collective kind so the trace shows them.
    pub fn allgather(&mut self, kind: MessageKind, data: Vec<f64>) -> Result<Vec<Vec<f64>>> {
        if !kind.is_collective() {
            return Err(Error::Protocol(format!(
                "allgather needs a collective kind, got {}",
                kind.name()
            )));
        }
        let (me, n) = (self.rank(), self.size());
        for dst in (0..n).filter(|&d| d != me) {
            self.isend(dst, kind, data.clone())?;
        }
        let mut out = Vec::with_capacity(n);
        for src in 0..n {
            if src == me {
                out.push(data.clone());
                continue;
            }
            let pos = loop {
                if let Some(p) = self.inbox[src].iter().position(|f| f.kind == kind) {
                    break p;
                }
                self.pump(src, true)?;
            };
            out.push(self.inbox[src].remove(pos).unwrap().payload);
        }
        Ok(out)
    }
}
