use super::protocol::Message;
use super::BridgeError;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

/// Which way a transcript line travelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineDirection {
    Sent,
    Received,
}

/// Message transport for the bridge.
pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<(), BridgeError>;
    fn recv(&mut self, timeout: Duration) -> Result<Message, BridgeError>;
}

/// Newline-delimited messages over any byte stream pair.
///
/// A background thread reads lines so that `recv` can time out.
pub struct LineTransport {
    lines: Receiver<std::io::Result<String>>,
    writer: Option<Box<dyn Write + Send>>,
    child: Option<Child>,
    transcript: Option<Vec<(LineDirection, String)>>,
}

impl LineTransport {
    pub fn new(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            lines: rx,
            writer: Some(Box::new(writer)),
            child: None,
            transcript: None,
        }
    }

    /// Runs `command` through the shell and talks to it over its stdin and
    /// stdout. Its stderr is passed through.
    pub fn spawn(command: &str) -> Result<Self, BridgeError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut transport = Self::new(stdout, stdin);
        transport.child = Some(child);
        Ok(transport)
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(addr)?;
        Self::from_tcp(stream)
    }

    pub fn from_tcp(stream: TcpStream) -> Result<Self, BridgeError> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, stream))
    }

    /// Keeps a copy of every line sent and received.
    pub fn record_transcript(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }

    pub fn transcript(&self) -> &[(LineDirection, String)] {
        self.transcript.as_deref().unwrap_or(&[])
    }

    fn log(&mut self, direction: LineDirection, line: &str) {
        if let Some(t) = self.transcript.as_mut() {
            t.push((direction, line.trim_end().to_string()));
        }
    }
}

impl Transport for LineTransport {
    fn send(&mut self, msg: &Message) -> Result<(), BridgeError> {
        let line = msg.to_line();
        let writer = self.writer.as_mut().ok_or(BridgeError::Closed)?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        self.log(LineDirection::Sent, &line);
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Message, BridgeError> {
        let line = match self.lines.recv_timeout(timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => return Err(BridgeError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(BridgeError::Closed),
        };
        self.log(LineDirection::Received, &line);
        Message::from_line(&line).map_err(|source| BridgeError::Malformed {
            line: line.trim_end().to_string(),
            source,
        })
    }
}

impl Drop for LineTransport {
    fn drop(&mut self) {
        self.writer = None;
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_secs(5);
            while Instant::now() < deadline {
                match child.try_wait() {
                    Ok(Some(_)) | Err(_) => return,
                    Ok(None) => thread::sleep(Duration::from_millis(10)),
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn reads_lines_and_times_out() {
        let input = "{\"type\":\"reset\",\"seed\":1}\n{\"type\":\"bye\"}\n";
        let mut t = LineTransport::new(Cursor::new(input.to_string()), Vec::new()).record_transcript();
        let wait = Duration::from_secs(5);
        assert_eq!(t.recv(wait).unwrap(), Message::Reset { seed: 1 });
        assert_eq!(t.recv(wait).unwrap(), Message::Bye {});
        assert!(matches!(t.recv(wait), Err(BridgeError::Closed)));
        assert_eq!(t.transcript().len(), 2);
    }

    #[test]
    fn silent_peer_times_out() {
        let (reader, _writer) = std::io::pipe().unwrap();
        let mut t = LineTransport::new(reader, Vec::new());
        let err = t.recv(Duration::from_millis(20)).unwrap_err();
        assert!(matches!(err, BridgeError::Timeout(_)));
    }

    #[test]
    fn child_process_echo() {
        let mut t = LineTransport::spawn("head -n 1").unwrap();
        t.send(&Message::Bye {}).unwrap();
        assert_eq!(t.recv(Duration::from_secs(10)).unwrap(), Message::Bye {});
    }

    #[test]
    fn garbage_is_reported_with_the_line() {
        let mut t = LineTransport::new(Cursor::new("oops\n".to_string()), Vec::new());
        match t.recv(Duration::from_secs(5)) {
            Err(BridgeError::Malformed { line, .. }) => assert_eq!(line, "oops"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
