//! Log shipment between the capture client and the collecting server.
//!
//! The client batches events, encrypts each batch into a cipher blob,
//! and ships every blob as one length-prefixed frame over TCP. The
//! server appends each frame verbatim to an append-only log file and
//! acknowledges only after the bytes are persisted, so a missing ACK
//! always means a frame the log may not contain.
//!
//! Frame layout: `KLF1` magic, version byte, payload length (4 bytes
//! big endian), payload. A single ACK (0x06) or NACK (0x15) byte
//! answers each frame.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::event::{serialize_events, parse_event_script, EventScript, InputEvent};
use crate::hill::{decrypt, encrypt, CipherBlob, HillError, HillKey, BLOB_HEADER_LEN, BLOB_MAGIC};

pub const FRAME_MAGIC: [u8; 4] = *b"KLF1";
pub const FRAME_VERSION: u8 = 1;
/// Frame header: magic, version, payload length.
pub const FRAME_HEADER_LEN: usize = 4 + 1 + 4;
pub const ACK: u8 = 0x06;
pub const NACK: u8 = 0x15;
pub const DEFAULT_MAX_FRAME_BYTES: usize = 1024 * 1024;
pub const MIN_MAX_FRAME_BYTES: usize = 64;
/// How long the sender waits for each acknowledgement byte.
pub const ACK_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("cannot connect to {address}: {source}")]
    Connect {
        address: String,
        source: io::Error,
    },
    #[error("frame of {len} bytes exceeds the {max}-byte limit")]
    FrameTooLarge { len: usize, max: usize },
    #[error("max frame size {0} is below the minimum of {MIN_MAX_FRAME_BYTES}")]
    FrameLimitTooSmall(usize),
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("frame {index}: send failed after {acked} acknowledged frame(s): {source}")]
    SendFailed {
        index: usize,
        acked: usize,
        source: io::Error,
    },
    #[error("frame {index}: no acknowledgement after {acked} acknowledged frame(s): {source}")]
    NotAcknowledged {
        index: usize,
        acked: usize,
        source: io::Error,
    },
    #[error("frame {index}: server rejected the frame (NACK)")]
    Rejected { index: usize },
    #[error("frame {index}: unexpected reply byte {byte:#04x}")]
    BadReply { index: usize, byte: u8 },
    #[error("log file offset {offset}: {msg}")]
    LogFrame { offset: usize, msg: String },
    #[error("log frame {index}: {source}")]
    LogDecrypt { index: usize, source: HillError },
    #[error("log frame {index}: {msg}")]
    LogContent { index: usize, msg: String },
}

/// Encodes one payload as a wire frame. The whole frame (header plus
/// payload) must fit the default limit.
pub fn frame_encode(payload: &[u8]) -> Result<Vec<u8>, TransportError> {
    let len = FRAME_HEADER_LEN + payload.len();
    if len > DEFAULT_MAX_FRAME_BYTES {
        return Err(TransportError::FrameTooLarge {
            len,
            max: DEFAULT_MAX_FRAME_BYTES,
        });
    }
    let mut frame = Vec::with_capacity(len);
    frame.extend_from_slice(&FRAME_MAGIC);
    frame.push(FRAME_VERSION);
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(payload);
    Ok(frame)
}

/// Decodes one frame from the front of `bytes`. Returns the payload
/// and the number of bytes consumed, or `Ok(None)` when the slice
/// holds only a prefix of a frame.
pub fn frame_decode(bytes: &[u8]) -> Result<Option<(Vec<u8>, usize)>, TransportError> {
    if bytes.len() >= 4 && bytes[..4] != FRAME_MAGIC {
        return Err(TransportError::BadMagic);
    }
    if bytes.len() >= 5 && bytes[4] != FRAME_VERSION {
        return Err(TransportError::BadVersion(bytes[4]));
    }
    if bytes.len() < FRAME_HEADER_LEN {
        return Ok(None);
    }
    let payload_len = u32::from_be_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let total = FRAME_HEADER_LEN + payload_len;
    if bytes.len() < total {
        return Ok(None);
    }
    Ok(Some((bytes[FRAME_HEADER_LEN..total].to_vec(), total)))
}

/// Serializes and encrypts events in batches of `batch_size`, yielding
/// one frame payload (a serialized cipher blob) per batch.
pub fn encrypt_batches(
    events: &[InputEvent],
    key: &HillKey,
    batch_size: usize,
) -> Result<Vec<Vec<u8>>, HillError> {
    let batch_size = batch_size.max(1);
    events
        .chunks(batch_size)
        .map(|chunk| {
            let script = EventScript {
                events: chunk.to_vec(),
                source_label: String::new(),
            };
            let text = serialize_events(&script);
            Ok(encrypt(text.as_bytes(), key)?.to_bytes())
        })
        .collect()
}

/// Where and how the collecting server runs.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind_address: String,
    pub log_path: PathBuf,
    /// Largest whole frame (header plus payload) accepted; larger
    /// frames are NACKed and the connection dropped.
    pub max_frame_bytes: usize,
}

impl ServerConfig {
    pub fn new(bind_address: impl Into<String>, log_path: impl Into<PathBuf>) -> ServerConfig {
        ServerConfig {
            bind_address: bind_address.into(),
            log_path: log_path.into(),
            max_frame_bytes: DEFAULT_MAX_FRAME_BYTES,
        }
    }
}

/// Requests a running server to stop accepting connections.
#[derive(Debug, Clone)]
pub struct StopHandle {
    stop: Arc<AtomicBool>,
    addr: SocketAddr,
}

impl StopHandle {
    /// Flags the server to stop and wakes its accept loop. Connections
    /// already being served drain on their own.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // Nudge the blocking accept so it observes the flag.
        let _ = TcpStream::connect(self.addr);
    }
}

/// A bound collecting server. `bind` succeeds only once the listener
/// and the log file are both ready, so `local_addr` is always
/// connectable before `run` starts accepting.
pub struct Server {
    listener: TcpListener,
    log: Arc<Mutex<File>>,
    stop: Arc<AtomicBool>,
    local_addr: SocketAddr,
    max_frame_bytes: usize,
}

impl Server {
    pub fn bind(config: &ServerConfig) -> Result<Server, TransportError> {
        if config.max_frame_bytes < MIN_MAX_FRAME_BYTES {
            return Err(TransportError::FrameLimitTooSmall(config.max_frame_bytes));
        }
        let listener = TcpListener::bind(&config.bind_address)?;
        let local_addr = listener.local_addr()?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&config.log_path)?;
        Ok(Server {
            listener,
            log: Arc::new(Mutex::new(log)),
            stop: Arc::new(AtomicBool::new(false)),
            local_addr,
            max_frame_bytes: config.max_frame_bytes,
        })
    }

    /// The bound address; useful when the config asked for port 0.
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stop_handle(&self) -> StopHandle {
        StopHandle {
            stop: Arc::clone(&self.stop),
            addr: self.local_addr,
        }
    }

    /// Accepts connections until stopped, one thread per client. Each
    /// received frame is appended to the log file as a whole under a
    /// lock, so concurrent clients can never interleave partial
    /// frames, and is acknowledged only after the append succeeds.
    pub fn run(self) -> Result<(), TransportError> {
        let ordinal = Arc::new(AtomicU64::new(1));
        let mut workers = Vec::new();
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let log = Arc::clone(&self.log);
            let ordinal = Arc::clone(&ordinal);
            let max = self.max_frame_bytes;
            workers.push(thread::spawn(move || {
                serve_connection(stream, log, ordinal, max);
            }));
        }
        for worker in workers {
            let _ = worker.join();
        }
        Ok(())
    }
}

/// Binds and runs a server in one call.
pub fn run_server(config: &ServerConfig) -> Result<(), TransportError> {
    Server::bind(config)?.run()
}

fn serve_connection(
    mut stream: TcpStream,
    log: Arc<Mutex<File>>,
    ordinal: Arc<AtomicU64>,
    max_frame_bytes: usize,
) {
    let peer = stream
        .peer_addr()
        .map(|addr| addr.to_string())
        .unwrap_or_else(|_| "unknown".to_string());
    loop {
        let mut first = [0u8; 1];
        match stream.read(&mut first) {
            Ok(0) => return, // clean close between frames
            Ok(_) => {}
            Err(_) => return,
        }
        let mut header = [0u8; FRAME_HEADER_LEN];
        header[0] = first[0];
        if stream.read_exact(&mut header[1..]).is_err() {
            let _ = stream.write_all(&[NACK]);
            return;
        }
        let payload_len = u32::from_be_bytes(header[5..9].try_into().unwrap()) as usize;
        let malformed = header[..4] != FRAME_MAGIC
            || header[4] != FRAME_VERSION
            || FRAME_HEADER_LEN + payload_len > max_frame_bytes;
        if malformed {
            let _ = stream.write_all(&[NACK]);
            return;
        }
        let mut payload = vec![0u8; payload_len];
        if stream.read_exact(&mut payload).is_err() {
            let _ = stream.write_all(&[NACK]);
            return;
        }
        // Persist the whole frame before acknowledging.
        let persisted = {
            let mut file = log.lock().expect("log file lock poisoned");
            file.write_all(&header)
                .and_then(|()| file.write_all(&payload))
                .and_then(|()| file.flush())
        };
        if persisted.is_err() {
            let _ = stream.write_all(&[NACK]);
            return;
        }
        let n = ordinal.fetch_add(1, Ordering::SeqCst);
        println!(
            "frame {n}: {payload_len} payload bytes{} from {peer}",
            describe_blob(&payload)
        );
        let _ = io::stdout().flush();
        if stream.write_all(&[ACK]).is_err() {
            return;
        }
    }
}

/// Renders the plaintext size a payload announces in its cipher-blob
/// header, when it has one. The header is not encrypted, so this needs
/// no key.
fn describe_blob(payload: &[u8]) -> String {
    if payload.len() >= BLOB_HEADER_LEN && payload[..4] == BLOB_MAGIC {
        let original = u64::from_be_bytes(payload[6..14].try_into().unwrap());
        format!(" ({original} plaintext bytes)")
    } else {
        String::new()
    }
}

/// How a send ended: every frame went out and every frame was
/// acknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub frames_sent: usize,
    pub acked: usize,
}

/// Ships each payload as one frame over a single connection, waiting
/// for the acknowledgement byte after every frame.
pub fn send_log(address: &str, payloads: &[Vec<u8>]) -> Result<Delivery, TransportError> {
    let mut stream = TcpStream::connect(address).map_err(|source| TransportError::Connect {
        address: address.to_string(),
        source,
    })?;
    stream.set_read_timeout(Some(ACK_TIMEOUT))?;
    let _ = stream.set_nodelay(true);
    let mut acked = 0;
    for (index, payload) in payloads.iter().enumerate() {
        let frame = frame_encode(payload)?;
        stream
            .write_all(&frame)
            .map_err(|source| TransportError::SendFailed {
                index,
                acked,
                source,
            })?;
        let mut reply = [0u8; 1];
        stream
            .read_exact(&mut reply)
            .map_err(|source| TransportError::NotAcknowledged {
                index,
                acked,
                source,
            })?;
        match reply[0] {
            ACK => acked += 1,
            NACK => return Err(TransportError::Rejected { index }),
            byte => return Err(TransportError::BadReply { index, byte }),
        }
    }
    Ok(Delivery {
        frames_sent: payloads.len(),
        acked,
    })
}

/// Reads a server log file back into event scripts, one per frame.
/// Frames are independent: each payload is decoded, decrypted with
/// `key`, and parsed on its own, so logs that span several capture
/// sessions (timestamps restarting at zero) stay readable.
pub fn read_log(path: &Path, key: &HillKey) -> Result<Vec<EventScript>, TransportError> {
    let data = fs::read(path)?;
    let mut scripts = Vec::new();
    let mut offset = 0;
    let mut index = 0;
    while offset < data.len() {
        let (payload, consumed) = match frame_decode(&data[offset..]) {
            Ok(Some(frame)) => frame,
            Ok(None) => {
                return Err(TransportError::LogFrame {
                    offset,
                    msg: "truncated frame".to_string(),
                })
            }
            Err(err) => {
                return Err(TransportError::LogFrame {
                    offset,
                    msg: err.to_string(),
                })
            }
        };
        let blob = CipherBlob::from_bytes(&payload)
            .map_err(|source| TransportError::LogDecrypt { index, source })?;
        let plain =
            decrypt(&blob, key).map_err(|source| TransportError::LogDecrypt { index, source })?;
        let text = String::from_utf8(plain).map_err(|_| TransportError::LogContent {
            index,
            msg: "decrypted payload is not UTF-8 (wrong key?)".to_string(),
        })?;
        let mut script = parse_event_script(&text).map_err(|err| TransportError::LogContent {
            index,
            msg: err.to_string(),
        })?;
        script.source_label = format!("{}#{index}", path.display());
        scripts.push(script);
        offset += consumed;
        index += 1;
    }
    Ok(scripts)
}
