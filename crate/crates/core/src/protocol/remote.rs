use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use super::wire::{decode_observation, encode_observation, Envelope, Message};
use super::{Agent, AgentError, EpisodeEnd, EpisodeStart, Percept, ProtocolError};
use crate::engine::{Decision, Engine};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// A line-oriented duplex channel. Lines are read on a background thread so
/// that receives can time out.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Option<Duration>,
    child: Option<Child>,
}

impl Connection {
    pub fn new(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Option<Duration>,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            timeout,
            child: None,
        }
    }

    /// Spawns `command` through the shell and talks to it over its stdio.
    pub fn exec(command: &str, timeout: Option<Duration>) -> Result<Self, ProtocolError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Self::new(stdout, stdin, timeout);
        conn.child = Some(child);
        Ok(conn)
    }

    /// Waits for one agent to connect on `addr`.
    pub fn listen(addr: impl ToSocketAddrs, timeout: Option<Duration>) -> Result<Self, ProtocolError> {
        let listener = TcpListener::bind(addr)?;
        log::info!("waiting for an agent on {}", listener.local_addr()?);
        Self::accept(&listener, timeout)
    }

    pub fn accept(listener: &TcpListener, timeout: Option<Duration>) -> Result<Self, ProtocolError> {
        let (stream, peer) = listener.accept()?;
        log::info!("agent connected from {peer}");
        Self::from_stream(stream, timeout)
    }

    pub fn connect(addr: impl ToSocketAddrs, timeout: Option<Duration>) -> Result<Self, ProtocolError> {
        Self::from_stream(TcpStream::connect(addr)?, timeout)
    }

    fn from_stream(stream: TcpStream, timeout: Option<Duration>) -> Result<Self, ProtocolError> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, stream, timeout))
    }

    /// The current process's stdin and stdout.
    pub fn stdio() -> Self {
        Self::new(std::io::stdin(), std::io::stdout(), None)
    }

    pub fn send(&mut self, message: Message) -> Result<(), ProtocolError> {
        let mut line = Envelope::new(message).to_line();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message, ProtocolError> {
        loop {
            let line = match self.timeout {
                Some(t) => match self.lines.recv_timeout(t) {
                    Ok(l) => l,
                    Err(RecvTimeoutError::Timeout) => return Err(ProtocolError::Timeout(t)),
                    Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
                },
                None => self.lines.recv().map_err(|_| ProtocolError::Closed)?,
            }?;
            if !line.trim().is_empty() {
                return Envelope::parse(&line);
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            // closing stdin lets a well-behaved agent exit on its own
            self.writer = Box::new(std::io::sink());
            match child.wait_timeout_or_kill() {
                Ok(status) => log::debug!("agent process exited: {status:?}"),
                Err(e) => log::warn!("agent process: {e}"),
            }
        }
    }
}

trait WaitOrKill {
    fn wait_timeout_or_kill(&mut self) -> std::io::Result<Option<std::process::ExitStatus>>;
}

impl WaitOrKill for Child {
    fn wait_timeout_or_kill(&mut self) -> std::io::Result<Option<std::process::ExitStatus>> {
        for _ in 0..50 {
            if let Some(s) = self.try_wait()? {
                return Ok(Some(s));
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        self.kill()?;
        self.wait().map(Some)
    }
}

/// Harness-side proxy for an agent on the other end of a [`Connection`].
pub struct RemoteAgent {
    conn: Connection,
    name: String,
    shut_down: bool,
}

impl RemoteAgent {
    /// Completes the hello exchange: the agent speaks first, the harness
    /// answers. A version mismatch is reported to the agent and returned.
    pub fn handshake(mut conn: Connection) -> Result<Self, ProtocolError> {
        let name = match conn.recv() {
            Ok(Message::Hello { agent_name }) => agent_name,
            Ok(other) => {
                return Err(ProtocolError::Unexpected {
                    expected: "hello",
                    found: other.kind().into(),
                })
            }
            Err(e) => {
                if matches!(e, ProtocolError::VersionMismatch { .. }) {
                    let _ = conn.send(Message::Error { message: e.to_string() });
                }
                return Err(e);
            }
        };
        conn.send(Message::Hello {
            agent_name: "davnav-harness".into(),
        })?;
        Ok(Self {
            conn,
            name,
            shut_down: false,
        })
    }

    pub fn shutdown(&mut self) -> Result<(), ProtocolError> {
        if !self.shut_down {
            self.shut_down = true;
            self.conn.send(Message::Shutdown)?;
        }
        Ok(())
    }
}

impl Drop for RemoteAgent {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

impl Agent for RemoteAgent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn begin_episode(&mut self, start: &EpisodeStart, _engine: Option<&Engine>) -> Result<(), AgentError> {
        Ok(self.conn.send(Message::EpisodeStart(start.clone()))?)
    }

    fn act(&mut self, percept: &Percept) -> Result<Decision, AgentError> {
        let wire = encode_observation(&percept.observation, &percept.intermediate);
        self.conn.send(Message::Observation(wire))?;
        match self.conn.recv()? {
            Message::Action { action } => Ok(action),
            Message::Error { message } => Err(ProtocolError::Remote(message).into()),
            other => Err(ProtocolError::Unexpected {
                expected: "action",
                found: other.kind().into(),
            }
            .into()),
        }
    }

    fn end_episode(&mut self, end: &EpisodeEnd) -> Result<(), AgentError> {
        Ok(self.conn.send(Message::EpisodeEnd(end.clone()))?)
    }

    fn report_error(&mut self, message: &str) {
        if let Err(e) = self.conn.send(Message::Error {
            message: message.to_string(),
        }) {
            log::warn!("could not report error to {}: {e}", self.name);
        }
    }
}

/// Agent-side loop: says hello, then answers every observation with the
/// policy's decision until the harness shuts the session down. Returns the
/// episode summaries received.
pub fn play(conn: &mut Connection, agent: &mut dyn Agent) -> Result<Vec<EpisodeEnd>, ProtocolError> {
    conn.send(Message::Hello {
        agent_name: agent.name(),
    })?;
    match conn.recv()? {
        Message::Hello { .. } => {}
        Message::Error { message } => return Err(ProtocolError::Remote(message)),
        other => {
            return Err(ProtocolError::Unexpected {
                expected: "hello",
                found: other.kind().into(),
            })
        }
    }
    let mut ends = Vec::new();
    loop {
        match conn.recv()? {
            Message::EpisodeStart(start) => {
                if let Err(e) = agent.begin_episode(&start, None) {
                    log::warn!("episode {}: {e}", start.episode_id);
                }
            }
            Message::Observation(wire) => {
                let (observation, intermediate) = decode_observation(&wire)?;
                match agent.act(&Percept {
                    observation,
                    intermediate,
                }) {
                    Ok(action) => conn.send(Message::Action { action })?,
                    Err(e) => conn.send(Message::Error { message: e.to_string() })?,
                }
            }
            Message::EpisodeEnd(end) => {
                if let Err(e) = agent.end_episode(&end) {
                    log::warn!("episode {}: {e}", end.episode_id);
                }
                ends.push(end);
            }
            Message::Error { message } => {
                log::warn!("harness: {message}");
                agent.report_error(&message);
            }
            Message::Shutdown => return Ok(ends),
            other => {
                return Err(ProtocolError::Unexpected {
                    expected: "episode message",
                    found: other.kind().into(),
                })
            }
        }
    }
}
