//! Minimal async TCP client for scripted sessions and tests.

use std::io;
use std::net::SocketAddr;
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

use crate::protocol::{self, ErrCode, FrameType, LineFramer, WireFrame};

/// Clients accept longer lines than the server so history replies fit.
const CLIENT_MAX_LINE: usize = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("connecting to {addr}: {source}")]
    Connect { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("server sent an undecodable frame: {0}")]
    Decode(ErrCode),
    #[error("server refused hello: {0}")]
    Refused(String),
    #[error("connection closed")]
    Closed,
    #[error("timed out waiting for the server")]
    Timeout,
}

pub struct Client {
    read: OwnedReadHalf,
    write: OwnedWriteHalf,
    framer: LineFramer,
    eof: bool,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)
            .await
            .map_err(|source| ClientError::Connect { addr, source })?;
        stream.set_nodelay(true)?;
        let (read, write) = stream.into_split();
        Ok(Self {
            read,
            write,
            framer: LineFramer::new(CLIENT_MAX_LINE),
            eof: false,
        })
    }

    /// Connects and registers as `name`, returning the hello_ack.
    pub async fn join(addr: SocketAddr, name: &str) -> Result<(Self, WireFrame), ClientError> {
        let mut client = Self::connect(addr).await?;
        client.send(&WireFrame::hello(name)).await?;
        let ack = client.recv().await?.ok_or(ClientError::Closed)?;
        match ack.kind {
            FrameType::HelloAck => Ok((client, ack)),
            _ => Err(ClientError::Refused(ack.body)),
        }
    }

    /// Like [`Client::join`], retrying while a previous connection under the
    /// same name is still being torn down.
    pub async fn rejoin(addr: SocketAddr, name: &str, attempts: usize) -> Result<(Self, WireFrame), ClientError> {
        let mut last = ClientError::Closed;
        for _ in 0..attempts.max(1) {
            match Self::join(addr, name).await {
                Err(ClientError::Refused(body)) if body == ErrCode::NameTaken.as_str() => {
                    last = ClientError::Refused(body);
                    tokio::time::sleep(Duration::from_millis(10)).await;
                }
                other => return other,
            }
        }
        Err(last)
    }

    pub async fn send(&mut self, frame: &WireFrame) -> io::Result<()> {
        self.write.write_all(frame.encode().as_bytes()).await
    }

    /// Writes raw bytes, for exercising the server's framing.
    pub async fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.write.write_all(bytes).await
    }

    /// Next frame, or `None` once the server closed the connection.
    pub async fn recv(&mut self) -> Result<Option<WireFrame>, ClientError> {
        loop {
            let line = match self.framer.next_line() {
                Some(line) => Some(line),
                None if self.eof => self.framer.finish(),
                None => {
                    if self.read.read_buf(self.framer.buffer()).await? == 0 {
                        self.eof = true;
                    }
                    continue;
                }
            };
            return match line {
                None => Ok(None),
                Some(Ok(line)) if line.trim().is_empty() => continue,
                Some(Ok(line)) => protocol::decode_unbounded(&line).map(Some).map_err(ClientError::Decode),
                Some(Err(code)) => Err(ClientError::Decode(code)),
            };
        }
    }

    pub async fn recv_timeout(&mut self, wait: Duration) -> Result<Option<WireFrame>, ClientError> {
        tokio::time::timeout(wait, self.recv())
            .await
            .map_err(|_| ClientError::Timeout)?
    }

    /// Receives until a frame of `kind` arrives, returning the skipped ones
    /// too.
    pub async fn recv_until(
        &mut self,
        kind: FrameType,
        wait: Duration,
    ) -> Result<(WireFrame, Vec<WireFrame>), ClientError> {
        let mut skipped = Vec::new();
        loop {
            let frame = self.recv_timeout(wait).await?.ok_or(ClientError::Closed)?;
            if frame.kind == kind {
                return Ok((frame, skipped));
            }
            skipped.push(frame);
        }
    }

    pub async fn close(mut self) -> io::Result<()> {
        self.write.shutdown().await
    }
}
