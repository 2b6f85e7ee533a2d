//! Input events and the replayable sources that produce them.
//!
//! Three sources produce an [`EventScript`]: parsing a script file,
//! consented interactive capture from a line stream, and a seeded
//! synthetic generator. The script grammar is line oriented, one event
//! per line:
//!
//! ```text
//! <timestamp_ms> key_press <key>
//! <timestamp_ms> key_release <key>
//! <timestamp_ms> mouse_move <x> <y>
//! <timestamp_ms> mouse_click <x> <y> <left|right|middle>
//! ```
//!
//! A key is a single printable ASCII character or one of the named keys
//! `ENTER`, `SPACE`, `TAB`, `BACKSPACE`. Lines whose first non-blank
//! character is `#` are comments; blank lines are allowed. Timestamps
//! are milliseconds since session start and must be non-decreasing.

use std::fmt;
use std::io::BufRead;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// A keyboard symbol: one printable ASCII character or a named key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Key {
    /// A printable ASCII character (`!`..=`~`; space is [`Key::Space`]).
    Char(char),
    Enter,
    Space,
    Tab,
    Backspace,
}

impl Key {
    /// Parses a key token from the script grammar. Returns `None` for
    /// anything that is not a single printable ASCII character or a
    /// known named key.
    pub fn from_token(token: &str) -> Option<Key> {
        let mut chars = token.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            return c.is_ascii_graphic().then_some(Key::Char(c));
        }
        match token {
            "ENTER" => Some(Key::Enter),
            "SPACE" => Some(Key::Space),
            "TAB" => Some(Key::Tab),
            "BACKSPACE" => Some(Key::Backspace),
            _ => None,
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Char(c) => write!(f, "{c}"),
            Key::Enter => f.write_str("ENTER"),
            Key::Space => f.write_str("SPACE"),
            Key::Tab => f.write_str("TAB"),
            Key::Backspace => f.write_str("BACKSPACE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MouseButton {
    Left,
    Right,
    Middle,
}

impl MouseButton {
    pub fn from_token(token: &str) -> Option<MouseButton> {
        match token {
            "left" => Some(MouseButton::Left),
            "right" => Some(MouseButton::Right),
            "middle" => Some(MouseButton::Middle),
            _ => None,
        }
    }
}

impl fmt::Display for MouseButton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MouseButton::Left => "left",
            MouseButton::Right => "right",
            MouseButton::Middle => "middle",
        })
    }
}

/// What happened, with the payload fields that kind of event carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    KeyPress { key: Key },
    KeyRelease { key: Key },
    MouseMove { x: u32, y: u32 },
    MouseClick { x: u32, y: u32, button: MouseButton },
}

/// One captured keystroke or mouse action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputEvent {
    /// Milliseconds since session start; non-decreasing within a session.
    pub timestamp_ms: u64,
    pub kind: EventKind,
}

/// An ordered sequence of input events plus a label naming its origin
/// (a replay file path, `"stdin"`, `"synthetic(<seed>)"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventScript {
    pub events: Vec<InputEvent>,
    pub source_label: String,
}

impl EventScript {
    pub fn new(events: Vec<InputEvent>, source_label: impl Into<String>) -> Self {
        EventScript {
            events,
            source_label: source_label.into(),
        }
    }
}

/// Rejection of a whole script document, naming the offending line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn parse_err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line,
        msg: msg.into(),
    }
}

fn parse_number(token: &str, line: usize, what: &str) -> Result<u64, ParseError> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(line, format!("non-numeric {what} `{token}`")));
    }
    token
        .parse()
        .map_err(|_| parse_err(line, format!("{what} `{token}` out of range")))
}

fn parse_coord(token: Option<&str>, line: usize, what: &str) -> Result<u32, ParseError> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    let value = parse_number(token, line, what)?;
    u32::try_from(value).map_err(|_| parse_err(line, format!("{what} `{token}` out of range")))
}

/// Parses a script document. The whole document is rejected on the
/// first malformed line: unknown kind, missing or trailing arguments,
/// non-numeric timestamp, or a timestamp lower than the previous one.
pub fn parse_event_script(text: &str) -> Result<EventScript, ParseError> {
    let mut events = Vec::new();
    let mut last_ts: Option<u64> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let ts = parse_number(tokens.next().unwrap_or(""), line_no, "timestamp")?;
        if let Some(prev) = last_ts {
            if ts < prev {
                return Err(parse_err(
                    line_no,
                    format!("decreasing timestamp {ts} (previous event at {prev})"),
                ));
            }
        }
        let kind_token = tokens
            .next()
            .ok_or_else(|| parse_err(line_no, "missing event kind"))?;
        let kind = match kind_token {
            "key_press" | "key_release" => {
                let token = tokens
                    .next()
                    .ok_or_else(|| parse_err(line_no, "missing key argument"))?;
                let key = Key::from_token(token)
                    .ok_or_else(|| parse_err(line_no, format!("unknown key `{token}`")))?;
                if kind_token == "key_press" {
                    EventKind::KeyPress { key }
                } else {
                    EventKind::KeyRelease { key }
                }
            }
            "mouse_move" => {
                let x = parse_coord(tokens.next(), line_no, "x coordinate")?;
                let y = parse_coord(tokens.next(), line_no, "y coordinate")?;
                EventKind::MouseMove { x, y }
            }
            "mouse_click" => {
                let x = parse_coord(tokens.next(), line_no, "x coordinate")?;
                let y = parse_coord(tokens.next(), line_no, "y coordinate")?;
                let token = tokens
                    .next()
                    .ok_or_else(|| parse_err(line_no, "missing mouse button"))?;
                let button = MouseButton::from_token(token)
                    .ok_or_else(|| parse_err(line_no, format!("unknown mouse button `{token}`")))?;
                EventKind::MouseClick { x, y, button }
            }
            other => return Err(parse_err(line_no, format!("unknown event kind `{other}`"))),
        };
        if let Some(extra) = tokens.next() {
            return Err(parse_err(
                line_no,
                format!("unexpected trailing token `{extra}`"),
            ));
        }
        last_ts = Some(ts);
        events.push(InputEvent {
            timestamp_ms: ts,
            kind,
        });
    }
    Ok(EventScript::new(events, "inline"))
}

/// Canonical text form of a script: one event per line in the grammar
/// accepted by [`parse_event_script`], so any valid script round-trips.
pub fn serialize_events(script: &EventScript) -> String {
    let mut out = String::new();
    for event in &script.events {
        let ts = event.timestamp_ms;
        match event.kind {
            EventKind::KeyPress { key } => out.push_str(&format!("{ts} key_press {key}\n")),
            EventKind::KeyRelease { key } => out.push_str(&format!("{ts} key_release {key}\n")),
            EventKind::MouseMove { x, y } => out.push_str(&format!("{ts} mouse_move {x} {y}\n")),
            EventKind::MouseClick { x, y, button } => {
                out.push_str(&format!("{ts} mouse_click {x} {y} {button}\n"))
            }
        }
    }
    out
}

const NAMED_KEY_POOL: [Key; 4] = [Key::Enter, Key::Space, Key::Tab, Key::Backspace];

fn random_key(rng: &mut ChaCha8Rng) -> Key {
    if rng.gen_range(0..5) == 0 {
        NAMED_KEY_POOL[rng.gen_range(0..NAMED_KEY_POOL.len())]
    } else {
        Key::Char(rng.gen_range(0x21u8..=0x7e) as char)
    }
}

/// Deterministic test source: a pure function of `(seed, count)` with
/// strictly increasing timestamps and pseudo-randomly mixed event kinds.
pub fn generate_synthetic(seed: u64, count: usize) -> EventScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(count);
    let mut ts: u64 = 0;
    for _ in 0..count {
        ts += rng.gen_range(1..=40);
        let kind = match rng.gen_range(0..4) {
            0 => EventKind::KeyPress {
                key: random_key(&mut rng),
            },
            1 => EventKind::KeyRelease {
                key: random_key(&mut rng),
            },
            2 => EventKind::MouseMove {
                x: rng.gen_range(0..1920),
                y: rng.gen_range(0..1080),
            },
            _ => EventKind::MouseClick {
                x: rng.gen_range(0..1920),
                y: rng.gen_range(0..1080),
                button: match rng.gen_range(0..3) {
                    0 => MouseButton::Left,
                    1 => MouseButton::Right,
                    _ => MouseButton::Middle,
                },
            },
        };
        events.push(InputEvent {
            timestamp_ms: ts,
            kind,
        });
    }
    EventScript::new(events, format!("synthetic({seed})"))
}

/// A failed capture, carrying whatever was captured before the failure.
#[derive(Debug, Error)]
#[error("capture failed after {} event(s): {source}", partial.events.len())]
pub struct CaptureError {
    pub partial: EventScript,
    #[source]
    pub source: std::io::Error,
}

/// Consented foreground capture from a line stream (typically the
/// operator typing into the tool's own terminal). Every character of a
/// line becomes a `key_press`; each line terminator becomes a
/// `key_press` of `ENTER`. Characters outside the script alphabet
/// (non-ASCII, control characters) are dropped. Timestamps come from a
/// monotonic clock relative to capture start.
pub fn capture_interactive<R: BufRead>(mut input: R) -> Result<EventScript, CaptureError> {
    let start = Instant::now();
    let mut events = Vec::new();
    let mut buf = String::new();
    loop {
        buf.clear();
        match input.read_line(&mut buf) {
            Ok(0) => break,
            Ok(_) => {
                let ts = start.elapsed().as_millis() as u64;
                let terminated = buf.ends_with('\n');
                let line = buf.strip_suffix('\n').unwrap_or(&buf);
                let line = line.strip_suffix('\r').unwrap_or(line);
                for c in line.chars() {
                    let key = match c {
                        ' ' => Key::Space,
                        '\t' => Key::Tab,
                        c if c.is_ascii_graphic() => Key::Char(c),
                        _ => continue,
                    };
                    events.push(InputEvent {
                        timestamp_ms: ts,
                        kind: EventKind::KeyPress { key },
                    });
                }
                if terminated {
                    events.push(InputEvent {
                        timestamp_ms: ts,
                        kind: EventKind::KeyPress { key: Key::Enter },
                    });
                }
            }
            Err(source) => {
                return Err(CaptureError {
                    partial: EventScript::new(events, "stdin"),
                    source,
                })
            }
        }
    }
    Ok(EventScript::new(events, "stdin"))
}
