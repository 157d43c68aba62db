//! Control and server-state messages.
//!
//! The control connection speaks an HTTP-style, line-structured text
//! protocol. Every message is UTF-8, every line ends with a single 0x0A
//! byte, and all tokens are case sensitive. A message is:
//!
//! 1. the version line `TiA 1.0`
//! 2. the command line, e.g. `CheckProtocolVersion` or `GetDataConnection: TCP`
//! 3. optionally `Content-Length: N`
//! 4. an empty line
//! 5. exactly N bytes of content when a Content-Length was given
//!
//! The serializer always emits this canonical form. The parser additionally
//! tolerates trailing spaces and carriage returns before the line feed,
//! since such messages exist in the wild.
//!
//! Content is carried by `MetaInfo` replies (the metainfo XML document) and
//! optionally by `Error` replies (a `tiaError` XML element with a
//! human-readable description).

use std::fmt;

use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt};

/// The protocol version token used on every message's first line.
pub const PROTOCOL_VERSION: &str = "TiA 1.0";

/// Default cap for declared Content-Length values (4 MiB).
pub const DEFAULT_MAX_CONTENT_LENGTH: usize = 4 * 1024 * 1024;

/// Default cap for the line-structured head of one message.
pub const DEFAULT_MAX_HEAD_BYTES: usize = 16 * 1024;

/// Data connection transport requested by a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transport {
    Tcp,
    Udp,
}

impl Transport {
    /// The wire token, `TCP` or `UDP`.
    pub const fn token(self) -> &'static str {
        match self {
            Transport::Tcp => "TCP",
            Transport::Udp => "UDP",
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One parsed control or state message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlMessage {
    // Client commands.
    CheckProtocolVersion,
    GetMetaInfo,
    GetDataConnection(Transport),
    StartDataTransmission,
    StopDataTransmission,
    GetServerStateConnection,
    // Server replies.
    Ok,
    Error { content: Option<Vec<u8>> },
    MetaInfo { content: Vec<u8> },
    DataConnectionPort(u16),
    ServerStateConnectionPort(u16),
    // State messages (server to client only, never answered).
    ServerStateRunning,
    ServerStateShutdown,
}

impl ControlMessage {
    /// An `Error` reply carrying `description` as tiaError XML content.
    pub fn error_with_description(description: impl Into<String>) -> ControlMessage {
        ControlMessage::Error {
            content: Some(TiaError::new(description).to_xml()),
        }
    }

    /// True for the six kinds a client may send on the control connection.
    pub fn is_command(&self) -> bool {
        matches!(
            self,
            ControlMessage::CheckProtocolVersion
                | ControlMessage::GetMetaInfo
                | ControlMessage::GetDataConnection(_)
                | ControlMessage::StartDataTransmission
                | ControlMessage::StopDataTransmission
                | ControlMessage::GetServerStateConnection
        )
    }

    fn command_line(&self) -> String {
        match self {
            ControlMessage::CheckProtocolVersion => "CheckProtocolVersion".into(),
            ControlMessage::GetMetaInfo => "GetMetaInfo".into(),
            ControlMessage::GetDataConnection(t) => format!("GetDataConnection: {}", t.token()),
            ControlMessage::StartDataTransmission => "StartDataTransmission".into(),
            ControlMessage::StopDataTransmission => "StopDataTransmission".into(),
            ControlMessage::GetServerStateConnection => "GetServerStateConnection".into(),
            ControlMessage::Ok => "OK".into(),
            ControlMessage::Error { .. } => "Error".into(),
            ControlMessage::MetaInfo { .. } => "MetaInfo".into(),
            ControlMessage::DataConnectionPort(p) => format!("DataConnectionPort: {p}"),
            ControlMessage::ServerStateConnectionPort(p) => {
                format!("ServerStateConnectionPort: {p}")
            }
            ControlMessage::ServerStateRunning => "ServerStateRunning".into(),
            ControlMessage::ServerStateShutdown => "ServerStateShutdown".into(),
        }
    }

    fn content(&self) -> Option<&[u8]> {
        match self {
            ControlMessage::Error { content } => content.as_deref(),
            ControlMessage::MetaInfo { content } => Some(content),
            _ => None,
        }
    }

    /// Serializes the message in canonical form.
    pub fn to_bytes(&self) -> Vec<u8> {
        if let ControlMessage::DataConnectionPort(p) | ControlMessage::ServerStateConnectionPort(p) = self {
            debug_assert!(*p != 0, "port 0 is not a valid wire value");
        }
        let mut out = Vec::new();
        out.extend_from_slice(PROTOCOL_VERSION.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(self.command_line().as_bytes());
        out.push(b'\n');
        if let Some(content) = self.content() {
            out.extend_from_slice(format!("Content-Length: {}", content.len()).as_bytes());
            out.push(b'\n');
            out.push(b'\n');
            out.extend_from_slice(content);
        } else {
            out.push(b'\n');
        }
        out
    }

    /// Parses a buffer holding exactly one complete message.
    pub fn from_bytes(bytes: &[u8]) -> Result<ControlMessage, ParseError> {
        let mut reader = MessageReader::new();
        reader.push(bytes);
        match reader.next_message()? {
            Some(msg) if reader.is_idle() => Ok(msg),
            Some(_) => Err(ParseError::TrailingBytes),
            None => Err(ParseError::UnexpectedEof),
        }
    }
}

impl fmt::Display for ControlMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.command_line())?;
        if let Some(content) = self.content() {
            write!(f, " ({} content bytes)", content.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("bad version line {0:?} (expected \"TiA 1.0\")")]
    BadVersionLine(String),
    #[error("unknown command {0:?} (commands are case sensitive)")]
    UnknownCommand(String),
    #[error("unknown transport {0:?} (expected TCP or UDP)")]
    InvalidTransport(String),
    #[error("malformed port number {0:?} (expected 1..65535)")]
    MalformedPort(String),
    #[error("malformed Content-Length {0:?}")]
    MalformedContentLength(String),
    #[error("Content-Length {declared} exceeds the {limit}-byte limit")]
    ContentLengthTooLarge { declared: u64, limit: u64 },
    #[error("repeated Content-Length line")]
    DuplicateContentLength,
    #[error("unknown content description line {0:?}")]
    UnknownDescriptionLine(String),
    #[error("message {command:?} must not carry content")]
    UnexpectedContent { command: String },
    #[error("message head exceeds the {limit}-byte limit")]
    HeadTooLarge { limit: usize },
    #[error("message head is not valid UTF-8")]
    InvalidUtf8,
    #[error("stream ended in the middle of a message")]
    UnexpectedEof,
    #[error("trailing bytes after a complete message")]
    TrailingBytes,
}

/// Knobs for [`MessageReader`]. Strict by default.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Skip unknown content description lines instead of failing.
    pub lenient_description_lines: bool,
    pub max_content_length: usize,
    pub max_head_bytes: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            lenient_description_lines: false,
            max_content_length: DEFAULT_MAX_CONTENT_LENGTH,
            max_head_bytes: DEFAULT_MAX_HEAD_BYTES,
        }
    }
}

enum PendingKind {
    /// Fully determined by the command line; must not carry content.
    Ready(ControlMessage),
    /// `Error`, content optional.
    Error,
    /// `MetaInfo`, content expected.
    MetaInfo,
}

enum State {
    VersionLine,
    CommandLine,
    Descriptions {
        kind: PendingKind,
        content_length: Option<usize>,
    },
    Content {
        kind: PendingKind,
        need: usize,
    },
}

/// Incremental message parser: feed bytes with [`push`](Self::push), pull
/// complete messages with [`next_message`](Self::next_message).
///
/// One reader instance handles one byte stream and must not be shared
/// between streams.
pub struct MessageReader {
    options: ParseOptions,
    buf: Vec<u8>,
    state: State,
    head_bytes: usize,
}

impl Default for MessageReader {
    fn default() -> Self {
        Self::new()
    }
}

impl MessageReader {
    pub fn new() -> MessageReader {
        Self::with_options(ParseOptions::default())
    }

    pub fn with_options(options: ParseOptions) -> MessageReader {
        MessageReader {
            options,
            buf: Vec::new(),
            state: State::VersionLine,
            head_bytes: 0,
        }
    }

    /// Appends raw bytes from the stream.
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// True when no partial message is buffered; end of stream is clean.
    pub fn is_idle(&self) -> bool {
        self.buf.is_empty() && matches!(self.state, State::VersionLine)
    }

    /// Takes one line (without terminator, trailing spaces and CR stripped)
    /// off the buffer, or `None` if no full line is available yet.
    fn take_line(&mut self) -> Result<Option<String>, ParseError> {
        let Some(pos) = self.buf.iter().position(|&b| b == b'\n') else {
            if self.head_bytes + self.buf.len() > self.options.max_head_bytes {
                return Err(ParseError::HeadTooLarge { limit: self.options.max_head_bytes });
            }
            return Ok(None);
        };
        self.head_bytes += pos + 1;
        if self.head_bytes > self.options.max_head_bytes {
            return Err(ParseError::HeadTooLarge { limit: self.options.max_head_bytes });
        }
        let raw: Vec<u8> = self.buf.drain(..=pos).take(pos).collect();
        let line = String::from_utf8(raw).map_err(|_| ParseError::InvalidUtf8)?;
        Ok(Some(line.trim_end_matches([' ', '\r']).to_owned()))
    }

    /// Returns the next complete message, or `None` if more bytes are
    /// needed. Errors are not recoverable; the stream should be dropped.
    pub fn next_message(&mut self) -> Result<Option<ControlMessage>, ParseError> {
        loop {
            match self.state {
                State::VersionLine => {
                    let Some(line) = self.take_line()? else { return Ok(None) };
                    if line != PROTOCOL_VERSION {
                        return Err(ParseError::BadVersionLine(line));
                    }
                    self.state = State::CommandLine;
                }
                State::CommandLine => {
                    let Some(line) = self.take_line()? else { return Ok(None) };
                    self.state = State::Descriptions {
                        kind: parse_command_line(&line)?,
                        content_length: None,
                    };
                }
                State::Descriptions { .. } => {
                    let Some(line) = self.take_line()? else { return Ok(None) };
                    if line.is_empty() {
                        let State::Descriptions { kind, content_length } =
                            std::mem::replace(&mut self.state, State::VersionLine)
                        else {
                            unreachable!()
                        };
                        self.head_bytes = 0;
                        match (kind, content_length) {
                            (PendingKind::Ready(msg), None) => return Ok(Some(msg)),
                            (PendingKind::Ready(msg), Some(_)) => {
                                return Err(ParseError::UnexpectedContent {
                                    command: msg.command_line(),
                                })
                            }
                            (PendingKind::Error, None) => {
                                return Ok(Some(ControlMessage::Error { content: None }))
                            }
                            (PendingKind::MetaInfo, None) => {
                                return Ok(Some(ControlMessage::MetaInfo { content: Vec::new() }))
                            }
                            (kind, Some(need)) => self.state = State::Content { kind, need },
                        }
                    } else if let Some(value) = line.strip_prefix("Content-Length:") {
                        let parsed = self.parse_content_length(value.trim_matches(' '))?;
                        let State::Descriptions { content_length, .. } = &mut self.state else {
                            unreachable!()
                        };
                        if content_length.is_some() {
                            return Err(ParseError::DuplicateContentLength);
                        }
                        *content_length = Some(parsed);
                    } else if self.options.lenient_description_lines {
                        continue;
                    } else {
                        return Err(ParseError::UnknownDescriptionLine(line));
                    }
                }
                State::Content { need, .. } => {
                    if self.buf.len() < need {
                        return Ok(None);
                    }
                    let State::Content { kind, need } =
                        std::mem::replace(&mut self.state, State::VersionLine)
                    else {
                        unreachable!()
                    };
                    let content: Vec<u8> = self.buf.drain(..need).collect();
                    let msg = match kind {
                        PendingKind::Error => ControlMessage::Error { content: Some(content) },
                        PendingKind::MetaInfo => ControlMessage::MetaInfo { content },
                        PendingKind::Ready(_) => unreachable!("ready kinds never reach Content"),
                    };
                    return Ok(Some(msg));
                }
            }
        }
    }

    fn parse_content_length(&self, value: &str) -> Result<usize, ParseError> {
        if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::MalformedContentLength(value.to_owned()));
        }
        let declared: u64 = value
            .parse()
            .map_err(|_| ParseError::MalformedContentLength(value.to_owned()))?;
        if declared > self.options.max_content_length as u64 {
            return Err(ParseError::ContentLengthTooLarge {
                declared,
                limit: self.options.max_content_length as u64,
            });
        }
        Ok(declared as usize)
    }
}

fn parse_port(value: &str) -> Result<u16, ParseError> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseError::MalformedPort(value.to_owned()));
    }
    match value.parse::<u32>() {
        Ok(port @ 1..=65535) => Ok(port as u16),
        _ => Err(ParseError::MalformedPort(value.to_owned())),
    }
}

fn parse_command_line(line: &str) -> Result<PendingKind, ParseError> {
    if let Some((token, arg)) = line.split_once(':') {
        let token = token.trim_end_matches(' ');
        let arg = arg.trim_matches(' ');
        let msg = match token {
            "GetDataConnection" => match arg {
                "TCP" => ControlMessage::GetDataConnection(Transport::Tcp),
                "UDP" => ControlMessage::GetDataConnection(Transport::Udp),
                other => return Err(ParseError::InvalidTransport(other.to_owned())),
            },
            "DataConnectionPort" => ControlMessage::DataConnectionPort(parse_port(arg)?),
            "ServerStateConnectionPort" => {
                ControlMessage::ServerStateConnectionPort(parse_port(arg)?)
            }
            _ => return Err(ParseError::UnknownCommand(line.to_owned())),
        };
        return Ok(PendingKind::Ready(msg));
    }
    Ok(match line {
        "CheckProtocolVersion" => PendingKind::Ready(ControlMessage::CheckProtocolVersion),
        "GetMetaInfo" => PendingKind::Ready(ControlMessage::GetMetaInfo),
        "StartDataTransmission" => PendingKind::Ready(ControlMessage::StartDataTransmission),
        "StopDataTransmission" => PendingKind::Ready(ControlMessage::StopDataTransmission),
        "GetServerStateConnection" => PendingKind::Ready(ControlMessage::GetServerStateConnection),
        "OK" => PendingKind::Ready(ControlMessage::Ok),
        "ServerStateRunning" => PendingKind::Ready(ControlMessage::ServerStateRunning),
        "ServerStateShutdown" => PendingKind::Ready(ControlMessage::ServerStateShutdown),
        "Error" => PendingKind::Error,
        "MetaInfo" => PendingKind::MetaInfo,
        _ => return Err(ParseError::UnknownCommand(line.to_owned())),
    })
}

/// Error reading messages from an async stream.
#[derive(Debug, Error)]
pub enum StreamError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ParseError),
}

/// Reads the next message from an async byte stream. Returns `None` on a
/// clean end of stream (no partial message buffered).
pub async fn read_message<R>(
    reader: &mut R,
    parser: &mut MessageReader,
) -> Result<Option<ControlMessage>, StreamError>
where
    R: AsyncRead + Unpin,
{
    let mut chunk = [0u8; 4096];
    loop {
        if let Some(msg) = parser.next_message()? {
            return Ok(Some(msg));
        }
        let n = reader.read(&mut chunk).await?;
        if n == 0 {
            return if parser.is_idle() {
                Ok(None)
            } else {
                Err(ParseError::UnexpectedEof.into())
            };
        }
        parser.push(&chunk[..n]);
    }
}

/// The tiaError payload of an `Error` reply.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TiaError {
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TiaErrorXmlError {
    #[error("malformed tiaError XML: {0}")]
    Malformed(String),
    #[error("expected root element tiaError, found {0:?}")]
    WrongRoot(String),
    #[error("tiaError element has no version attribute")]
    MissingVersion,
    #[error("tiaError version {0:?} is not supported (expected \"1.0\")")]
    VersionMismatch(String),
}

impl TiaError {
    pub fn new(description: impl Into<String>) -> TiaError {
        TiaError { description: Some(description.into()) }
    }

    /// Serializes as `<tiaError version="1.0" description="..."/>`; the
    /// description attribute is omitted when absent.
    pub fn to_xml(&self) -> Vec<u8> {
        match &self.description {
            Some(text) => format!(
                "<tiaError version=\"1.0\" description=\"{}\"/>",
                quick_xml::escape::escape(text.as_str())
            )
            .into_bytes(),
            None => b"<tiaError version=\"1.0\"/>".to_vec(),
        }
    }

    pub fn from_xml(bytes: &[u8]) -> Result<TiaError, TiaErrorXmlError> {
        use quick_xml::events::Event;

        let malformed = |e: quick_xml::Error| TiaErrorXmlError::Malformed(e.to_string());
        let mut reader = quick_xml::Reader::from_reader(bytes);
        let mut root = None;
        loop {
            match reader.read_event().map_err(malformed)? {
                Event::Decl(_) | Event::Comment(_) => {}
                Event::Text(t) if t.iter().all(|b| b.is_ascii_whitespace()) => {}
                Event::Start(e) | Event::Empty(e) if root.is_none() => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    if name != "tiaError" {
                        return Err(TiaErrorXmlError::WrongRoot(name));
                    }
                    let mut version = None;
                    let mut description = None;
                    for attr in e.attributes() {
                        let attr = attr.map_err(|e| TiaErrorXmlError::Malformed(e.to_string()))?;
                        let value = attr
                            .unescape_value()
                            .map_err(|e| TiaErrorXmlError::Malformed(e.to_string()))?
                            .into_owned();
                        match attr.key.as_ref() {
                            b"version" => version = Some(value),
                            b"description" => description = Some(value),
                            other => {
                                return Err(TiaErrorXmlError::Malformed(format!(
                                    "unexpected attribute {:?}",
                                    String::from_utf8_lossy(other)
                                )))
                            }
                        }
                    }
                    match version {
                        None => return Err(TiaErrorXmlError::MissingVersion),
                        Some(v) if v != "1.0" => return Err(TiaErrorXmlError::VersionMismatch(v)),
                        Some(_) => {}
                    }
                    root = Some(TiaError { description });
                }
                Event::End(_) if root.is_some() => {}
                Event::Eof => {
                    return root.ok_or_else(|| {
                        TiaErrorXmlError::Malformed("no tiaError element found".into())
                    })
                }
                other => {
                    return Err(TiaErrorXmlError::Malformed(format!(
                        "unexpected XML content: {other:?}"
                    )))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ERROR_XML: &[u8] =
        br#"<tiaError version="1.0" description="Human readable error description."/>"#;

    #[test]
    fn canonical_forms_match_the_documented_examples() {
        let cases: [(&ControlMessage, &str); 12] = [
            (&ControlMessage::CheckProtocolVersion, "TiA 1.0\nCheckProtocolVersion\n\n"),
            (&ControlMessage::GetMetaInfo, "TiA 1.0\nGetMetaInfo\n\n"),
            (
                &ControlMessage::GetDataConnection(Transport::Tcp),
                "TiA 1.0\nGetDataConnection: TCP\n\n",
            ),
            (
                &ControlMessage::GetDataConnection(Transport::Udp),
                "TiA 1.0\nGetDataConnection: UDP\n\n",
            ),
            (&ControlMessage::StartDataTransmission, "TiA 1.0\nStartDataTransmission\n\n"),
            (&ControlMessage::StopDataTransmission, "TiA 1.0\nStopDataTransmission\n\n"),
            (
                &ControlMessage::GetServerStateConnection,
                "TiA 1.0\nGetServerStateConnection\n\n",
            ),
            (&ControlMessage::Ok, "TiA 1.0\nOK\n\n"),
            (&ControlMessage::Error { content: None }, "TiA 1.0\nError\n\n"),
            (&ControlMessage::DataConnectionPort(9001), "TiA 1.0\nDataConnectionPort: 9001\n\n"),
            (&ControlMessage::ServerStateRunning, "TiA 1.0\nServerStateRunning\n\n"),
            (&ControlMessage::ServerStateShutdown, "TiA 1.0\nServerStateShutdown\n\n"),
        ];
        for (msg, expected) in cases {
            assert_eq!(msg.to_bytes(), expected.as_bytes(), "for {msg}");
            assert_eq!(&ControlMessage::from_bytes(expected.as_bytes()).unwrap(), msg);
        }
    }

    #[test]
    fn error_with_description_is_73_bytes_of_xml() {
        assert_eq!(ERROR_XML.len(), 73);
        let msg = ControlMessage::error_with_description("Human readable error description.");
        let mut expected = b"TiA 1.0\nError\nContent-Length: 73\n\n".to_vec();
        expected.extend_from_slice(ERROR_XML);
        assert_eq!(msg.to_bytes(), expected);
        assert_eq!(ControlMessage::from_bytes(&expected).unwrap(), msg);
    }

    #[test]
    fn metainfo_reply_carries_content_length() {
        let content = br#"<?xml version="1.0" encoding="UTF-8"?><tiaMetaInfo version="1.0"></tiaMetaInfo>"#;
        assert_eq!(content.len(), 79);
        let msg = ControlMessage::MetaInfo { content: content.to_vec() };
        let mut expected = b"TiA 1.0\nMetaInfo\nContent-Length: 79\n\n".to_vec();
        expected.extend_from_slice(content);
        assert_eq!(msg.to_bytes(), expected);
    }

    #[test]
    fn parser_tolerates_trailing_spaces_and_cr() {
        let msg = ControlMessage::from_bytes(b"TiA 1.0 \nGetDataConnection: TCP \n\n").unwrap();
        assert_eq!(msg, ControlMessage::GetDataConnection(Transport::Tcp));

        let msg = ControlMessage::from_bytes(b"TiA 1.0\r\nOK\r\n\r\n").unwrap();
        assert_eq!(msg, ControlMessage::Ok);

        let msg = ControlMessage::from_bytes(b"TiA 1.0 \nGetDataConnection: UDP \n\n").unwrap();
        assert_eq!(msg, ControlMessage::GetDataConnection(Transport::Udp));
    }

    #[test]
    fn port_replies_parse() {
        let msg = ControlMessage::from_bytes(b"TiA 1.0\nDataConnectionPort: 9001\n\n").unwrap();
        assert_eq!(msg, ControlMessage::DataConnectionPort(9001));
        for bad in ["0", "65536", "abc", "+50", "-1", ""] {
            let bytes = format!("TiA 1.0\nDataConnectionPort: {bad}\n\n");
            assert!(
                matches!(
                    ControlMessage::from_bytes(bytes.as_bytes()),
                    Err(ParseError::MalformedPort(_))
                ),
                "port {bad:?}"
            );
        }
    }

    #[test]
    fn version_line_must_match_exactly() {
        for bad in ["TiA 2.0", "TIA 1.0", "tia 1.0", "TiA 1.0 x", "HTTP/1.1"] {
            let bytes = format!("{bad}\nOK\n\n");
            assert!(
                matches!(
                    ControlMessage::from_bytes(bytes.as_bytes()),
                    Err(ParseError::BadVersionLine(_))
                ),
                "version {bad:?}"
            );
        }
    }

    #[test]
    fn commands_are_case_sensitive() {
        assert!(matches!(
            ControlMessage::from_bytes(b"TiA 1.0\nok\n\n"),
            Err(ParseError::UnknownCommand(_))
        ));
        assert!(matches!(
            ControlMessage::from_bytes(b"TiA 1.0\nGetDataConnection: tcp\n\n"),
            Err(ParseError::InvalidTransport(_))
        ));
        assert!(matches!(
            ControlMessage::from_bytes(b"TiA 1.0\nQuit\n\n"),
            Err(ParseError::UnknownCommand(_))
        ));
    }

    #[test]
    fn content_length_validation() {
        for bad in ["abc", "-5", " ", "1x", ""] {
            let bytes = format!("TiA 1.0\nError\nContent-Length: {bad}\n\nxx");
            assert!(
                matches!(
                    ControlMessage::from_bytes(bytes.as_bytes()),
                    Err(ParseError::MalformedContentLength(_))
                ),
                "length {bad:?}"
            );
        }
        assert!(matches!(
            ControlMessage::from_bytes(b"TiA 1.0\nError\nContent-Length: 99999999999\n\n"),
            Err(ParseError::ContentLengthTooLarge { .. })
        ));
        assert!(matches!(
            ControlMessage::from_bytes(b"TiA 1.0\nError\nContent-Length: 1\nContent-Length: 1\n\nxy"),
            Err(ParseError::DuplicateContentLength)
        ));
    }

    #[test]
    fn content_on_contentless_kind_is_rejected() {
        assert!(matches!(
            ControlMessage::from_bytes(b"TiA 1.0\nOK\nContent-Length: 2\n\nhi"),
            Err(ParseError::UnexpectedContent { .. })
        ));
    }

    #[test]
    fn unknown_description_lines() {
        let bytes = b"TiA 1.0\nOK\nX-Custom: 1\n\n";
        assert!(matches!(
            ControlMessage::from_bytes(bytes),
            Err(ParseError::UnknownDescriptionLine(_))
        ));

        let mut reader = MessageReader::with_options(ParseOptions {
            lenient_description_lines: true,
            ..ParseOptions::default()
        });
        reader.push(bytes);
        assert_eq!(reader.next_message().unwrap(), Some(ControlMessage::Ok));
    }

    #[test]
    fn metainfo_without_content_length_is_empty() {
        let msg = ControlMessage::from_bytes(b"TiA 1.0\nMetaInfo\n\n").unwrap();
        assert_eq!(msg, ControlMessage::MetaInfo { content: Vec::new() });
    }

    #[test]
    fn incremental_byte_by_byte_parse() {
        let msg = ControlMessage::error_with_description("x & y < z");
        let bytes = msg.to_bytes();
        let mut reader = MessageReader::new();
        for (i, byte) in bytes.iter().enumerate() {
            reader.push(std::slice::from_ref(byte));
            let parsed = reader.next_message().unwrap();
            if i + 1 < bytes.len() {
                assert_eq!(parsed, None, "complete after {} of {} bytes", i + 1, bytes.len());
            } else {
                assert_eq!(parsed, Some(msg.clone()));
            }
        }
        assert!(reader.is_idle());
    }

    #[test]
    fn pipelined_messages_parse_sequentially() {
        let mut reader = MessageReader::new();
        let mut bytes = ControlMessage::CheckProtocolVersion.to_bytes();
        bytes.extend(ControlMessage::StartDataTransmission.to_bytes());
        reader.push(&bytes);
        assert_eq!(reader.next_message().unwrap(), Some(ControlMessage::CheckProtocolVersion));
        assert_eq!(reader.next_message().unwrap(), Some(ControlMessage::StartDataTransmission));
        assert_eq!(reader.next_message().unwrap(), None);
        assert!(reader.is_idle());
    }

    #[test]
    fn truncated_content_is_incomplete() {
        let full = ControlMessage::error_with_description("whoops").to_bytes();
        assert!(matches!(
            ControlMessage::from_bytes(&full[..full.len() - 1]),
            Err(ParseError::UnexpectedEof)
        ));
    }

    #[test]
    fn oversized_head_is_rejected() {
        let mut reader = MessageReader::with_options(ParseOptions {
            max_head_bytes: 64,
            ..ParseOptions::default()
        });
        reader.push(&vec![b'a'; 100]);
        assert!(matches!(reader.next_message(), Err(ParseError::HeadTooLarge { .. })));
    }

    #[test]
    fn tia_error_xml_round_trips() {
        let err = TiaError::new("Human readable error description.");
        assert_eq!(err.to_xml(), ERROR_XML);
        assert_eq!(TiaError::from_xml(ERROR_XML).unwrap(), err);

        let bare = TiaError { description: None };
        assert_eq!(bare.to_xml(), br#"<tiaError version="1.0"/>"#);
        assert_eq!(TiaError::from_xml(&bare.to_xml()).unwrap(), bare);

        let spicy = TiaError::new(r#"a "quoted" <error> & more"#);
        assert_eq!(TiaError::from_xml(&spicy.to_xml()).unwrap(), spicy);
    }

    #[test]
    fn tia_error_xml_rejects_wrong_versions() {
        assert_eq!(
            TiaError::from_xml(br#"<tiaError version="2.0"/>"#),
            Err(TiaErrorXmlError::VersionMismatch("2.0".into()))
        );
        assert_eq!(TiaError::from_xml(br#"<tiaError/>"#), Err(TiaErrorXmlError::MissingVersion));
        assert!(matches!(
            TiaError::from_xml(br#"<somethingElse version="1.0"/>"#),
            Err(TiaErrorXmlError::WrongRoot(_))
        ));
        assert!(TiaError::from_xml(b"not xml <<<").is_err());
    }

    fn arb_message() -> impl Strategy<Value = ControlMessage> {
        let content = prop::collection::vec(any::<u8>(), 0..512);
        prop_oneof![
            Just(ControlMessage::CheckProtocolVersion),
            Just(ControlMessage::GetMetaInfo),
            prop_oneof![Just(Transport::Tcp), Just(Transport::Udp)]
                .prop_map(ControlMessage::GetDataConnection),
            Just(ControlMessage::StartDataTransmission),
            Just(ControlMessage::StopDataTransmission),
            Just(ControlMessage::GetServerStateConnection),
            Just(ControlMessage::Ok),
            prop::option::of(content.clone()).prop_map(|content| ControlMessage::Error { content }),
            content.prop_map(|content| ControlMessage::MetaInfo { content }),
            (1u16..=65535).prop_map(ControlMessage::DataConnectionPort),
            (1u16..=65535).prop_map(ControlMessage::ServerStateConnectionPort),
            Just(ControlMessage::ServerStateRunning),
            Just(ControlMessage::ServerStateShutdown),
        ]
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(msg in arb_message()) {
            prop_assert_eq!(ControlMessage::from_bytes(&msg.to_bytes()).unwrap(), msg);
        }

        #[test]
        fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            let mut reader = MessageReader::new();
            reader.push(&bytes);
            while let Ok(Some(_)) = reader.next_message() {}
        }
    }
}
