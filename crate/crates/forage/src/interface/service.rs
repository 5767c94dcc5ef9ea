//! Live service: one worker thread owns the simulation; connections talk to
//! it only through a command queue and receive immutable frames.

use super::protocol::{self, CellChange, Command, Delta, Message, Request, PROTOCOL_VERSION};
use crate::engine::{Artifact, FoodKind, Sim};
use std::collections::{BTreeMap, HashMap};
use std::io;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

pub const BIND_ENV: &str = "FORAGE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:7878";

/// Flag value, else `$FORAGE_BIND`, else the default.
pub fn bind_address(flag: Option<&str>) -> String {
    flag.map(String::from)
        .or_else(|| std::env::var(BIND_ENV).ok())
        .unwrap_or_else(|| DEFAULT_BIND.to_string())
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Steps between pushed frames.
    pub frame_every: u64,
    /// 0 runs as fast as possible.
    pub steps_per_sec: f64,
    pub paused: bool,
    /// Where to write the session artifacts on shutdown.
    pub out: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            frame_every: 1000,
            steps_per_sec: 0.0,
            paused: true,
            out: None,
        }
    }
}

enum Inbound {
    Join(u64, Sender<Message>),
    Leave(u64),
    Request(u64, Request),
    Bad(u64, String),
}

type Cells = BTreeMap<[i32; 2], String>;

fn cells(sim: &Sim) -> Cells {
    let mut out: Cells = sim
        .world()
        .cells()
        .into_iter()
        .map(|(c, s)| ([c.x, c.y], s))
        .collect();
    for f in sim.world().food() {
        out.insert([f.x, f.y], "F".to_string());
    }
    out
}

struct Worker {
    sim: Sim,
    opts: ServeOptions,
    clients: HashMap<u64, Sender<Message>>,
    shown: Cells,
    paused: bool,
    clock: Instant,
    clocked: u64,
}

impl Worker {
    fn send(&mut self, client: u64, msg: Message) {
        if let Some(tx) = self.clients.get(&client) {
            if tx.send(msg).is_err() {
                self.clients.remove(&client);
            }
        }
    }

    fn broadcast_frame(&mut self) {
        let now = cells(&self.sim);
        let mut changes = Vec::new();
        for (at, s) in &now {
            if self.shown.get(at) != Some(s) {
                changes.push(CellChange { at: *at, state: Some(s.clone()) });
            }
        }
        for at in self.shown.keys() {
            if !now.contains_key(at) {
                changes.push(CellChange { at: *at, state: None });
            }
        }
        self.shown = now;
        let step = self.sim.step_count();
        let msg = Message::Delta {
            v: PROTOCOL_VERSION,
            delta: Delta {
                step,
                changes,
                metrics: self.sim.world().frame(step),
            },
        };
        self.clients.retain(|_, tx| tx.send(msg.clone()).is_ok());
    }

    fn advance(&mut self, k: u64) -> io::Result<()> {
        for _ in 0..k {
            self.sim.step().map_err(io::Error::other)?;
            if self.sim.step_count() % self.opts.frame_every == 0 {
                self.broadcast_frame();
            }
        }
        Ok(())
    }

    fn reset_clock(&mut self) {
        self.clock = Instant::now();
        self.clocked = 0;
    }

    /// Returns false on shutdown.
    fn handle(&mut self, inbound: Inbound) -> io::Result<bool> {
        let (client, req) = match inbound {
            Inbound::Join(client, tx) => {
                self.broadcast_frame();
                self.clients.insert(client, tx);
                let snapshot = self.sim.snapshot();
                self.send(client, Message::Snapshot { v: PROTOCOL_VERSION, snapshot });
                return Ok(true);
            }
            Inbound::Leave(client) => {
                self.clients.remove(&client);
                return Ok(true);
            }
            Inbound::Bad(client, message) => {
                self.send(client, Message::Error { v: PROTOCOL_VERSION, id: 0, message });
                return Ok(true);
            }
            Inbound::Request(client, req) => (client, req),
        };
        let id = req.id;
        let reply = |r: Result<(), String>, step: u64| match r {
            Ok(()) => Message::Ack { v: PROTOCOL_VERSION, id, step },
            Err(message) => Message::Error { v: PROTOCOL_VERSION, id, message },
        };
        if req.v != PROTOCOL_VERSION {
            let msg = reply(Err(format!("unsupported protocol version {}", req.v)), 0);
            self.send(client, msg);
            return Ok(true);
        }
        let mut changed = false;
        let result = match req.command {
            Command::PlaceFood { at } => self.food(FoodKind::Place, at, None, &mut changed),
            Command::MoveFood { from, to } => self.food(FoodKind::Move, from, Some(to), &mut changed),
            Command::RemoveFood { at } => self.food(FoodKind::Remove, at, None, &mut changed),
            Command::Pause => {
                self.paused = true;
                Ok(())
            }
            Command::Resume => {
                self.paused = false;
                self.reset_clock();
                Ok(())
            }
            Command::StepOnce { k } => {
                self.advance(k)?;
                changed = true;
                Ok(())
            }
            Command::SetSpeed { steps_per_sec } => {
                if steps_per_sec.is_finite() && steps_per_sec >= 0.0 {
                    self.opts.steps_per_sec = steps_per_sec;
                    self.reset_clock();
                    Ok(())
                } else {
                    Err("speed must be a finite non-negative number".to_string())
                }
            }
            Command::SetParam { name, value } => self.sim.set_param(&name, value).map_err(|e| e.to_string()),
            Command::GetLog => {
                let events = self.sim.log_now();
                self.send(client, Message::Log { v: PROTOCOL_VERSION, id, events });
                return Ok(true);
            }
            Command::Shutdown => {
                let step = self.sim.step_count();
                self.send(client, reply(Ok(()), step));
                return Ok(false);
            }
        };
        if changed {
            self.broadcast_frame();
        }
        let step = self.sim.step_count();
        self.send(client, reply(result, step));
        Ok(true)
    }

    fn food(&mut self, kind: FoodKind, at: [i32; 2], to: Option<[i32; 2]>, changed: &mut bool) -> Result<(), String> {
        self.sim.apply_food_event(kind, at, to).map_err(|e| e.to_string())?;
        *changed = true;
        Ok(())
    }

    /// Steps owed under the current speed, capped at one frame.
    fn due(&self) -> u64 {
        if self.opts.steps_per_sec <= 0.0 {
            return self.opts.frame_every;
        }
        let owed = (self.clock.elapsed().as_secs_f64() * self.opts.steps_per_sec) as u64;
        owed.saturating_sub(self.clocked).min(self.opts.frame_every)
    }

    fn run(&mut self, rx: Receiver<Inbound>) -> io::Result<()> {
        loop {
            let wait = if self.paused { Duration::from_millis(50) } else { Duration::ZERO };
            let first = match rx.recv_timeout(wait) {
                Ok(m) => Some(m),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => return Ok(()),
            };
            if let Some(m) = first {
                if !self.handle(m)? {
                    return Ok(());
                }
                while let Ok(m) = rx.try_recv() {
                    if !self.handle(m)? {
                        return Ok(());
                    }
                }
            }
            if self.paused {
                continue;
            }
            let k = self.due();
            if k == 0 {
                thread::sleep(Duration::from_millis(2));
                continue;
            }
            self.advance(k)?;
            self.clocked += k;
        }
    }
}

fn spawn_connection(stream: TcpStream, client: u64, tx: Sender<Inbound>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let (out_tx, out_rx) = mpsc::channel::<Message>();
    if tx.send(Inbound::Join(client, out_tx)).is_err() {
        return Ok(());
    }
    thread::spawn(move || {
        for msg in out_rx {
            if protocol::send(&mut writer, &msg).is_err() {
                break;
            }
        }
        let _ = writer.shutdown(std::net::Shutdown::Both);
    });
    thread::spawn(move || {
        loop {
            match protocol::read_frame(&mut reader) {
                Ok(Some(buf)) => {
                    let inbound = match serde_json::from_slice::<Request>(&buf) {
                        Ok(req) => Inbound::Request(client, req),
                        Err(e) => Inbound::Bad(client, format!("bad request: {e}")),
                    };
                    if tx.send(inbound).is_err() {
                        return;
                    }
                }
                Ok(None) | Err(_) => break,
            }
        }
        let _ = tx.send(Inbound::Leave(client));
    });
    Ok(())
}

/// Serves `sim` on `listener` until a client sends `shutdown`.
pub fn serve(listener: TcpListener, sim: Sim, opts: ServeOptions) -> io::Result<Artifact> {
    if opts.frame_every == 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame_every must be positive"));
    }
    listener.set_nonblocking(true)?;
    let (tx, rx) = mpsc::channel::<Inbound>();
    let stop = Arc::new(AtomicBool::new(false));
    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || {
            let mut next = 1u64;
            while !stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        if spawn_connection(stream, next, tx.clone()).is_err() {
                            continue;
                        }
                        next += 1;
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                    Err(_) => thread::sleep(Duration::from_millis(10)),
                }
            }
        })
    };
    let shown = cells(&sim);
    let mut worker = Worker {
        sim,
        paused: opts.paused,
        opts,
        clients: HashMap::new(),
        shown,
        clock: Instant::now(),
        clocked: 0,
    };
    let outcome = worker.run(rx);
    stop.store(true, Ordering::Relaxed);
    let _ = acceptor.join();
    worker.clients.clear();
    outcome?;
    let artifact = worker.sim.finish();
    if let Some(dir) = &worker.opts.out {
        artifact.write(dir).map_err(io::Error::other)?;
    }
    Ok(artifact)
}

/// Blocking client for scripts and tests.
pub struct Client {
    stream: TcpStream,
    next_id: u64,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client { stream, next_id: 1 })
    }

    pub fn set_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(t)
    }

    /// Sends a command and returns its request id.
    pub fn send(&mut self, command: Command) -> io::Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        protocol::send(&mut self.stream, &Request { v: PROTOCOL_VERSION, id, command })?;
        Ok(id)
    }

    pub fn send_raw(&mut self, json: &[u8]) -> io::Result<()> {
        protocol::write_frame(&mut self.stream, json)
    }

    pub fn next(&mut self) -> io::Result<Message> {
        protocol::recv(&mut self.stream)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed"))
    }

    /// Reads until the reply to `id`, returning it and the frames seen before it.
    pub fn reply(&mut self, id: u64) -> io::Result<(Message, Vec<Message>)> {
        let mut frames = Vec::new();
        loop {
            let m = self.next()?;
            match &m {
                Message::Ack { id: r, .. } | Message::Error { id: r, .. } | Message::Log { id: r, .. } if *r == id => {
                    return Ok((m, frames));
                }
                _ => frames.push(m),
            }
        }
    }

    /// Sends and waits for the reply.
    pub fn call(&mut self, command: Command) -> io::Result<(Message, Vec<Message>)> {
        let id = self.send(command)?;
        self.reply(id)
    }
}
