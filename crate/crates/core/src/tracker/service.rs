use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tungstenite::Message;

use super::record::{persist_session, SessionRecord};
use super::{GazeUpdate, TrackerError, DEFAULT_QUEUE_CAPACITY};
use crate::calibration::{calibration_targets, GazeSample, ScreenGeometry, DEFAULT_SETTLE_S};

const POLL: Duration = Duration::from_millis(15);
const STALL_LIMIT: Duration = Duration::from_secs(2);

/// Service tuning and where finished sessions go.
#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub queue_capacity: usize,
    pub geometry: ScreenGeometry,
    pub settle_s: f64,
    pub session_dir: Option<PathBuf>,
    /// Stored with each persisted session.
    pub config_snapshot: serde_json::Value,
    /// Minimum spacing of preview frames.
    pub frame_interval: Duration,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            geometry: ScreenGeometry::default(),
            settle_s: DEFAULT_SETTLE_S,
            session_dir: None,
            config_snapshot: serde_json::Value::Null,
            frame_interval: Duration::from_millis(100),
        }
    }
}

/// Delivery counters of one connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub id: u64,
    pub sent: u64,
    pub dropped: u64,
    pub queued: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Control {
    Start,
    Target(u8),
    End,
    Abort,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Incoming {
    CalibStart,
    Target { index: u8 },
    CalibEnd,
    CalibAbort,
}

struct Outbox {
    items: VecDeque<String>,
    sent: u64,
    dropped: u64,
}

struct Client {
    id: u64,
    outbox: Mutex<Outbox>,
}

impl Client {
    // Drop-oldest: the producer never waits for a slow reader.
    fn push(&self, msg: &str, capacity: usize) {
        let mut out = self.outbox.lock().unwrap();
        while out.items.len() >= capacity {
            out.items.pop_front();
            out.dropped += 1;
        }
        out.items.push_back(msg.to_string());
    }

    fn stats(&self) -> ClientStats {
        let out = self.outbox.lock().unwrap();
        ClientStats { id: self.id, sent: out.sent, dropped: out.dropped, queued: out.items.len() }
    }
}

struct Shared {
    clients: Mutex<Vec<Arc<Client>>>,
    next_id: AtomicU64,
    shutdown: AtomicBool,
    capacity: usize,
    layout: String,
}

impl Shared {
    fn broadcast(&self, msg: &str) {
        for c in self.clients.lock().unwrap().iter() {
            c.push(msg, self.capacity);
        }
    }
}

#[derive(Default)]
struct Recording {
    active: bool,
    target: Option<u8>,
    samples: Vec<GazeSample>,
}

/// Running WebSocket service. The owner is the producer: it publishes
/// updates and applies calibration control messages on its own thread.
pub struct ServiceHandle {
    shared: Arc<Shared>,
    addr: SocketAddr,
    control: Receiver<Control>,
    recording: Recording,
    sessions_saved: usize,
    last_frame: Option<Instant>,
    opts: ServiceOptions,
    acceptor: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn bind(addr: impl ToSocketAddrs, opts: ServiceOptions) -> Result<Self, TrackerError> {
        let requested = addr.to_socket_addrs()?.next().ok_or_else(|| TrackerError::Config("no bind address".into()))?;
        let listener = TcpListener::bind(requested).map_err(|e| match e.kind() {
            ErrorKind::AddrInUse => TrackerError::PortInUse(requested.port()),
            _ => TrackerError::Io(e),
        })?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let targets = calibration_targets(&opts.geometry)?;
        let layout = json!({"type": "layout", "geometry": opts.geometry, "targets": targets}).to_string();
        let shared = Arc::new(Shared {
            clients: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(1),
            shutdown: AtomicBool::new(false),
            capacity: opts.queue_capacity.max(1),
            layout,
        });
        let (tx, rx) = mpsc::channel();
        let acceptor = {
            let shared = shared.clone();
            thread::spawn(move || accept_loop(listener, shared, tx))
        };
        Ok(Self {
            shared,
            addr,
            control: rx,
            recording: Recording::default(),
            sessions_saved: 0,
            last_frame: None,
            opts,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.shared.clients.lock().unwrap().len()
    }

    /// Blocks until at least `n` clients are connected or `timeout` passes.
    pub fn wait_for_clients(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.client_count() < n {
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(5));
        }
        true
    }

    pub fn client_stats(&self) -> Vec<ClientStats> {
        self.shared.clients.lock().unwrap().iter().map(|c| c.stats()).collect()
    }

    pub fn active_target(&self) -> Option<u8> {
        self.recording.target
    }

    pub fn is_calibrating(&self) -> bool {
        self.recording.active
    }

    pub fn recorded_samples(&self) -> &[GazeSample] {
        &self.recording.samples
    }

    pub fn broadcast(&self, message: &serde_json::Value) {
        self.shared.broadcast(&message.to_string());
    }

    /// Applies every pending control message. Returns the session record
    /// when a calibration sequence completed.
    pub fn process_control(&mut self) -> Result<Option<SessionRecord>, TrackerError> {
        let mut finished = None;
        while let Ok(c) = self.control.try_recv() {
            if let Some(r) = self.apply(c)? {
                finished = Some(r);
            }
        }
        Ok(finished)
    }

    /// Waits up to `timeout` for one control message and applies it.
    pub fn wait_control(&mut self, timeout: Duration) -> Result<Option<Option<SessionRecord>>, TrackerError> {
        match self.control.recv_timeout(timeout) {
            Ok(c) => Ok(Some(self.apply(c)?)),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => Ok(None),
        }
    }

    fn apply(&mut self, c: Control) -> Result<Option<SessionRecord>, TrackerError> {
        match c {
            Control::Start => {
                self.recording = Recording { active: true, ..Default::default() };
                self.broadcast(&json!({"type": "calib_started"}));
            }
            Control::Target(i) => {
                self.recording.active = true;
                self.recording.target = Some(i);
            }
            Control::Abort => {
                self.recording = Recording::default();
                self.broadcast(&json!({"type": "calib_aborted"}));
            }
            Control::End => {
                let samples = std::mem::take(&mut self.recording).samples;
                return self.finish(samples).map(Some);
            }
        }
        Ok(None)
    }

    fn finish(&mut self, samples: Vec<GazeSample>) -> Result<SessionRecord, TrackerError> {
        let record = match SessionRecord::from_samples(
            samples,
            &self.opts.geometry,
            self.opts.settle_s,
            self.opts.config_snapshot.clone(),
        ) {
            Ok(r) => r,
            Err(e) => {
                self.broadcast(&json!({"type": "calib_error", "reason": e.to_string()}));
                return Err(e);
            }
        };
        if let Some(dir) = &self.opts.session_dir {
            self.sessions_saved += 1;
            persist_session(&dir.join(format!("session_{:03}", self.sessions_saved)), &record, true)?;
        }
        self.broadcast(&json!({
            "type": "report",
            "cells": record.report.cells,
            "rounded": record.report.rounded_cells(),
            "mean_deg": record.report.mean,
        }));
        Ok(record)
    }

    /// Records the update into an active calibration and broadcasts it.
    pub fn publish(&mut self, update: &GazeUpdate) -> Result<Option<SessionRecord>, TrackerError> {
        let finished = self.process_control()?;
        if let (true, Some(target), Some(p)) = (self.recording.active, self.recording.target, update.pupil) {
            self.recording.samples.push(GazeSample {
                t: update.t,
                px: p.cx,
                py: p.cy,
                target: Some(target),
                conf: p.confidence,
            });
        }
        self.shared.broadcast(&update.to_message().to_string());
        Ok(finished)
    }

    /// Broadcasts a JPEG preview unless one went out within the frame interval.
    pub fn publish_frame(&mut self, frame: &RgbImage) -> Result<bool, TrackerError> {
        let now = Instant::now();
        if self.last_frame.is_some_and(|t| now.duration_since(t) < self.opts.frame_interval) {
            return Ok(false);
        }
        let mut jpeg = Vec::new();
        image::codecs::jpeg::JpegEncoder::new_with_quality(&mut jpeg, 80)
            .encode_image(frame)
            .map_err(|e| TrackerError::Dataset(e.into()))?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(jpeg);
        self.shared.broadcast(&json!({"type": "frame", "jpeg_b64": b64}).to_string());
        self.last_frame = Some(now);
        Ok(true)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, control: Sender<Control>) {
    let mut workers = Vec::new();
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let shared = shared.clone();
                let control = control.clone();
                workers.push(thread::spawn(move || {
                    if let Err(e) = serve_client(stream, &shared, control) {
                        log::debug!("client closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn parse_control(text: &str) -> Result<Control, String> {
    match serde_json::from_str::<Incoming>(text).map_err(|e| e.to_string())? {
        Incoming::CalibStart => Ok(Control::Start),
        Incoming::Target { index } if (1..=20).contains(&index) => Ok(Control::Target(index)),
        Incoming::Target { index } => Err(format!("target index {index} outside 1..20")),
        Incoming::CalibEnd => Ok(Control::End),
        Incoming::CalibAbort => Ok(Control::Abort),
    }
}

fn serve_client(stream: TcpStream, shared: &Shared, control: Sender<Control>) -> Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    let mut ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_mut().set_read_timeout(Some(POLL)).map_err(|e| e.to_string())?;
    // A reader that stops draining its socket is eventually disconnected;
    // until then its outbox drops the oldest messages.
    ws.get_mut().set_write_timeout(Some(STALL_LIMIT)).map_err(|e| e.to_string())?;
    let client = Arc::new(Client {
        id: shared.next_id.fetch_add(1, Ordering::SeqCst),
        outbox: Mutex::new(Outbox { items: VecDeque::new(), sent: 0, dropped: 0 }),
    });
    client.push(&shared.layout, usize::MAX);
    shared.clients.lock().unwrap().push(client.clone());
    let result = client_loop(&mut ws, &client, shared, &control);
    shared.clients.lock().unwrap().retain(|c| c.id != client.id);
    let _ = ws.close(None);
    result
}

fn client_loop(
    ws: &mut tungstenite::WebSocket<TcpStream>,
    client: &Client,
    shared: &Shared,
    control: &Sender<Control>,
) -> Result<(), String> {
    while !shared.shutdown.load(Ordering::SeqCst) {
        let batch: Vec<String> = client.outbox.lock().unwrap().items.drain(..).collect();
        let n = batch.len() as u64;
        for msg in batch {
            ws.send(Message::Text(msg)).map_err(|e| e.to_string())?;
        }
        client.outbox.lock().unwrap().sent += n;
        match ws.read() {
            Ok(Message::Text(text)) => match parse_control(&text) {
                Ok(c) => {
                    if control.send(c).is_err() {
                        return Ok(());
                    }
                }
                Err(reason) => client.push(&json!({"type": "error", "reason": reason}).to_string(), shared.capacity),
            },
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    // Deliver what was published before shutdown.
    let rest: Vec<String> = client.outbox.lock().unwrap().items.drain(..).collect();
    let n = rest.len() as u64;
    for msg in rest {
        ws.send(Message::Text(msg)).map_err(|e| e.to_string())?;
    }
    client.outbox.lock().unwrap().sent += n;
    Ok(())
}
