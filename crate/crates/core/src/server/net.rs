//! Newline-delimited JSON over TCP, one session per connection.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::*;
use super::session::Session;
use crate::script::AuthoringSession;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub heartbeat: Duration,
    pub tick_hz: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            heartbeat: Duration::from_secs_f64(HEARTBEAT_SECONDS),
            tick_hz: DEFAULT_TICK_HZ,
        }
    }
}

type Factory = dyn Fn() -> AuthoringSession + Send + Sync;

/// Sessions by id. Sessions outlive their connection so a client can resume.
pub struct Registry {
    factory: Box<Factory>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    attached: Mutex<HashSet<String>>,
    counter: AtomicU64,
    epoch: Instant,
    config: ServerConfig,
}

impl Registry {
    pub fn new(config: ServerConfig, factory: impl Fn() -> AuthoringSession + Send + Sync + 'static) -> Arc<Self> {
        Arc::new(Registry {
            factory: Box::new(factory),
            sessions: Mutex::new(HashMap::new()),
            attached: Mutex::new(HashSet::new()),
            counter: AtomicU64::new(0),
            epoch: Instant::now(),
            config,
        })
    }

    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("registry lock").get(id).cloned()
    }

    /// Attach to `id`, or create a session when `None`.
    fn attach(&self, id: Option<&str>) -> Result<(Arc<Mutex<Session>>, bool), (ErrorCode, String)> {
        let mut sessions = self.sessions.lock().expect("registry lock");
        let mut attached = self.attached.lock().expect("registry lock");
        let (id, session, resumed) = match id {
            Some(id) => {
                let s = sessions
                    .get(id)
                    .cloned()
                    .ok_or_else(|| (ErrorCode::UnknownSession, format!("no session `{id}`")))?;
                (id.to_string(), s, true)
            }
            None => {
                let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
                let id = format!("s{n}");
                let mut s = Session::new(&id, (self.factory)());
                s.set_tick_hz(self.config.tick_hz);
                let s = Arc::new(Mutex::new(s));
                sessions.insert(id.clone(), s.clone());
                (id, s, false)
            }
        };
        if !attached.insert(id.clone()) {
            return Err((ErrorCode::SessionBusy, format!("session `{id}` is attached to another connection")));
        }
        Ok((session, resumed))
    }

    fn detach(&self, id: &str) {
        self.attached.lock().expect("registry lock").remove(id);
    }
}

fn send(w: &mut impl Write, msgs: &[Outbound]) -> io::Result<()> {
    for m in msgs {
        w.write_all(m.to_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn detached_error(code: ErrorCode, message: String) -> Outbound {
    Outbound::new(
        OutKind::Error,
        None,
        ErrorPayload {
            code,
            message,
            expected_seq: 1,
            revision: 0,
        },
    )
}

/// Serve one connection until the client closes it.
pub fn handle_connection(registry: Arc<Registry>, stream: TcpStream) -> io::Result<()> {
    let peer = stream.peer_addr().ok();
    let mut writer = BufWriter::new(stream.try_clone()?);
    let (tx, rx) = mpsc::channel::<io::Result<String>>();
    let reader = BufReader::new(stream);
    thread::spawn(move || {
        for line in reader.lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });

    let mut session: Option<(Arc<Mutex<Session>>, String)> = None;
    let mut next_beat = Instant::now() + registry.config.heartbeat;
    let tick = Duration::from_secs_f64(1.0 / registry.config.tick_hz);
    let result = loop {
        let wait = tick.min(next_beat.saturating_duration_since(Instant::now()));
        let mut out = Vec::new();
        match rx.recv_timeout(wait) {
            Ok(Ok(line)) if line.trim().is_empty() => {}
            Ok(Ok(line)) => match &session {
                Some((s, _)) => out.extend(s.lock().expect("session lock").handle_line(&line, registry.now())),
                None => match parse_incoming(&line) {
                    Ok(Incoming::Hello { session: id }) => match registry.attach(id.as_deref()) {
                        Ok((s, resumed)) => {
                            let guard = s.lock().expect("session lock");
                            out.push(guard.hello(resumed));
                            let id = guard.id.clone();
                            drop(guard);
                            log::info!("{peer:?} attached to session {id}");
                            session = Some((s, id));
                        }
                        Err((code, message)) => out.push(detached_error(code, message)),
                    },
                    Ok(_) => out.push(detached_error(ErrorCode::NoSession, "send hello first".into())),
                    Err(e) => out.push(detached_error(ErrorCode::Malformed, format!("{e:?}"))),
                },
            },
            Ok(Err(e)) => break Err(e),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => {
                // Graceful close: solve what is still queued before detaching.
                if let Some((s, _)) = &session {
                    let mut s = s.lock().expect("session lock");
                    if s.has_pending_drag() {
                        let now = registry.now();
                        out.extend(s.flush_drag(now, None));
                    }
                }
                let _ = send(&mut writer, &out);
                break Ok(());
            }
        }
        if let Some((s, _)) = &session {
            let mut s = s.lock().expect("session lock");
            out.extend(s.tick(registry.now()));
            if Instant::now() >= next_beat {
                out.push(s.heartbeat());
                next_beat = Instant::now() + registry.config.heartbeat;
            }
        } else if Instant::now() >= next_beat {
            next_beat = Instant::now() + registry.config.heartbeat;
        }
        if let Err(e) = send(&mut writer, &out) {
            break Err(e);
        }
    };
    if let Some((_, id)) = session {
        registry.detach(&id);
        log::info!("{peer:?} detached from session {id}");
    }
    result
}

/// Accept connections forever, one thread each.
pub fn serve(listener: TcpListener, registry: Arc<Registry>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let registry = registry.clone();
        thread::spawn(move || {
            if let Err(e) = handle_connection(registry, stream) {
                log::warn!("connection closed with error: {e}");
            }
        });
    }
    Ok(())
}
