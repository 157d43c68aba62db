//! The `tiaMetaInfo` XML document: subject, master signal, and per-signal
//! channel structure.
//!
//! A server answers `GetMetaInfo` with this document. The master signal
//! defines the packet cadence (one packet per `blockSize / samplingRate`
//! seconds); each `signal` element describes one signal type's sampling
//! rate, block size, channel count, and optional channel labels.
//!
//! Canonical attribute names are `samplingRate` and `surname`. Documents in
//! the wild also use `sampleRate` and `lastName`, and spell the button
//! signal type `buttons`; the parser accepts these as aliases and reports
//! each use as a [`MetaInfoWarning`]. The serializer only ever emits the
//! canonical names.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::SignalType;

/// Fixed document version; the only one defined.
pub const METAINFO_VERSION: &str = "1.0";

/// The parsed document. All parts are optional per the schema.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetaInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<Subject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_signal: Option<MasterSignal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signals: Vec<SignalInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Subject {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surname: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birthday: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handedness: Option<Handedness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medication: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glasses: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoker: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "m")]
    Male,
    #[serde(rename = "f")]
    Female,
}

impl Sex {
    fn token(self) -> &'static str {
        match self {
            Sex::Male => "m",
            Sex::Female => "f",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Handedness {
    #[serde(rename = "l")]
    Left,
    #[serde(rename = "r")]
    Right,
}

impl Handedness {
    fn token(self) -> &'static str {
        match self {
            Handedness::Left => "l",
            Handedness::Right => "r",
        }
    }
}

/// Reference cadence for the whole stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterSignal {
    /// Hz; must be finite and positive.
    pub sampling_rate: f32,
    /// Samples per packet; at least 1.
    pub block_size: u32,
}

/// One signal type's structure within the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalInfo {
    pub signal_type: SignalType,
    pub sampling_rate: f32,
    pub block_size: u32,
    pub num_channels: u32,
    /// Channel labels; channels without a label simply have no entry here.
    /// Order is preserved as given in the document.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<Channel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    /// 1-based channel number, at most `num_channels`.
    pub nr: u32,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaInfoError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("expected root element tiaMetaInfo, found {0:?}")]
    WrongRoot(String),
    #[error("tiaMetaInfo element has no version attribute")]
    MissingVersion,
    #[error("tiaMetaInfo version {0:?} is not supported (expected \"1.0\")")]
    VersionMismatch(String),
    #[error("unexpected element <{element}> inside <{parent}>")]
    UnexpectedElement { element: String, parent: String },
    #[error("element <{element}> may appear at most once")]
    DuplicateElement { element: &'static str },
    #[error("unexpected attribute {attribute:?} on <{element}>")]
    UnexpectedAttribute { attribute: String, element: String },
    #[error("attribute {attribute:?} given twice on <{element}>")]
    DuplicateAttribute { attribute: String, element: String },
    #[error("element <{element}> is missing required attribute {attribute:?}")]
    MissingAttribute { attribute: &'static str, element: &'static str },
    #[error("attribute {attribute}={value:?} on <{element}> is invalid: expected {expected}")]
    InvalidAttribute {
        attribute: String,
        element: String,
        value: String,
        expected: &'static str,
    },
    #[error("unknown signal type {0:?}")]
    UnknownSignalType(String),
    #[error("duplicate channel nr {nr} in signal {signal}")]
    DuplicateChannelNr { signal: SignalType, nr: u32 },
    #[error("channel nr {nr} in signal {signal} is out of range 1..={num_channels}")]
    ChannelNrOutOfRange { signal: SignalType, nr: u32, num_channels: u32 },
    #[error("element <{element}> must not contain text")]
    UnexpectedText { element: String },
}

/// Non-fatal findings recorded while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetaInfoWarning {
    /// A known alias was used instead of the canonical attribute name.
    AliasedAttribute {
        element: String,
        found: String,
        canonical: &'static str,
    },
    /// `buttons` was used for the `button` signal type.
    AliasedSignalType { found: String, canonical: SignalType },
}

impl fmt::Display for MetaInfoWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetaInfoWarning::AliasedAttribute { element, found, canonical } => write!(
                f,
                "<{element}> uses attribute {found:?}; the canonical name is {canonical:?}"
            ),
            MetaInfoWarning::AliasedSignalType { found, canonical } => {
                write!(f, "signal type {found:?} read as {canonical:?}")
            }
        }
    }
}

/// A stream-consistency finding from [`MetaInfo::check_stream_consistency`].
#[derive(Debug, Clone, PartialEq)]
pub enum ConsistencyViolation {
    /// Periodic signals are declared but there is no master signal to
    /// define the packet cadence.
    NoMasterSignal,
    /// A periodic signal has block size 0 and can never carry samples.
    PeriodicZeroBlockSize { signal: SignalType },
    /// The signal produces a different number of packets per second than
    /// the master signal.
    CadenceMismatch {
        signal: SignalType,
        packets_per_second: f64,
        master_packets_per_second: f64,
    },
}

impl fmt::Display for ConsistencyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsistencyViolation::NoMasterSignal => {
                write!(f, "periodic signals declared but no master signal present")
            }
            ConsistencyViolation::PeriodicZeroBlockSize { signal } => {
                write!(f, "periodic signal {signal} has block size 0")
            }
            ConsistencyViolation::CadenceMismatch {
                signal,
                packets_per_second,
                master_packets_per_second,
            } => write!(
                f,
                "signal {signal} produces {packets_per_second} packets/s but the master signal defines {master_packets_per_second} packets/s"
            ),
        }
    }
}

impl MetaInfo {
    /// Parses a `tiaMetaInfo` document. Alias attribute names and the
    /// `buttons` signal type are accepted and reported in the warning list.
    pub fn from_xml(bytes: &[u8]) -> Result<(MetaInfo, Vec<MetaInfoWarning>), MetaInfoError> {
        Parser::new(bytes).parse()
    }

    /// Serializes with canonical attribute names, an XML declaration, and
    /// two-space indentation. Fails if the model violates its invariants.
    pub fn to_xml(&self) -> Result<Vec<u8>, MetaInfoError> {
        self.validate()?;
        let mut out = Vec::from(&b"<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"[..]);
        let esc = |s: &str| quick_xml::escape::escape(s).into_owned();

        out.extend_from_slice(b"<tiaMetaInfo version=\"1.0\">\n");
        if let Some(subject) = &self.subject {
            let mut attrs = String::new();
            let mut push = |name: &str, value: Option<String>| {
                if let Some(value) = value {
                    attrs.push_str(&format!(" {name}=\"{value}\""));
                }
            };
            push("id", subject.id.as_deref().map(esc));
            push("firstName", subject.first_name.as_deref().map(esc));
            push("surname", subject.surname.as_deref().map(esc));
            push("sex", subject.sex.map(|s| s.token().to_owned()));
            push("birthday", subject.birthday.map(|d| d.to_string()));
            push("handedness", subject.handedness.map(|h| h.token().to_owned()));
            push("medication", subject.medication.map(|b| b.to_string()));
            push("glasses", subject.glasses.map(|b| b.to_string()));
            push("smoker", subject.smoker.map(|b| b.to_string()));
            out.extend_from_slice(format!("  <subject{attrs}/>\n").as_bytes());
        }
        if let Some(master) = &self.master_signal {
            out.extend_from_slice(
                format!(
                    "  <masterSignal samplingRate=\"{}\" blockSize=\"{}\"/>\n",
                    master.sampling_rate, master.block_size
                )
                .as_bytes(),
            );
        }
        for signal in &self.signals {
            let open = format!(
                "  <signal type=\"{}\" samplingRate=\"{}\" blockSize=\"{}\" numChannels=\"{}\"",
                signal.signal_type, signal.sampling_rate, signal.block_size, signal.num_channels
            );
            if signal.channels.is_empty() {
                out.extend_from_slice(format!("{open}/>\n").as_bytes());
            } else {
                out.extend_from_slice(format!("{open}>\n").as_bytes());
                for channel in &signal.channels {
                    out.extend_from_slice(
                        format!(
                            "    <channel nr=\"{}\" label=\"{}\"/>\n",
                            channel.nr,
                            esc(&channel.label)
                        )
                        .as_bytes(),
                    );
                }
                out.extend_from_slice(b"  </signal>\n");
            }
        }
        out.extend_from_slice(b"</tiaMetaInfo>\n");
        Ok(out)
    }

    /// Checks the model invariants: master signal sanity and channel
    /// numbering per signal.
    pub fn validate(&self) -> Result<(), MetaInfoError> {
        if let Some(master) = &self.master_signal {
            if !(master.sampling_rate.is_finite() && master.sampling_rate > 0.0) {
                return Err(invalid_attr("masterSignal", "samplingRate", master.sampling_rate, "a positive finite number"));
            }
            if master.block_size == 0 {
                return Err(invalid_attr("masterSignal", "blockSize", master.block_size, "an integer >= 1"));
            }
        }
        for signal in &self.signals {
            if !(signal.sampling_rate.is_finite() && signal.sampling_rate >= 0.0) {
                return Err(invalid_attr("signal", "samplingRate", signal.sampling_rate, "a non-negative finite number"));
            }
            let mut seen = Vec::new();
            for channel in &signal.channels {
                if channel.nr == 0 || channel.nr > signal.num_channels {
                    return Err(MetaInfoError::ChannelNrOutOfRange {
                        signal: signal.signal_type,
                        nr: channel.nr,
                        num_channels: signal.num_channels,
                    });
                }
                if seen.contains(&channel.nr) {
                    return Err(MetaInfoError::DuplicateChannelNr {
                        signal: signal.signal_type,
                        nr: channel.nr,
                    });
                }
                seen.push(channel.nr);
            }
        }
        Ok(())
    }

    /// Advisory cross-check of the declared rates against the packet
    /// framing: every periodic signal must produce packets at the master
    /// cadence. Aperiodic signal types are exempt.
    pub fn check_stream_consistency(&self) -> Vec<ConsistencyViolation> {
        let mut violations = Vec::new();
        let periodic: Vec<&SignalInfo> = self
            .signals
            .iter()
            .filter(|s| !s.signal_type.is_aperiodic())
            .collect();
        if periodic.is_empty() {
            return violations;
        }
        let Some(master) = &self.master_signal else {
            return vec![ConsistencyViolation::NoMasterSignal];
        };
        let master_pps = master.sampling_rate as f64 / master.block_size as f64;
        for signal in periodic {
            if signal.block_size == 0 {
                violations.push(ConsistencyViolation::PeriodicZeroBlockSize {
                    signal: signal.signal_type,
                });
                continue;
            }
            let pps = signal.sampling_rate as f64 / signal.block_size as f64;
            if pps != master_pps {
                violations.push(ConsistencyViolation::CadenceMismatch {
                    signal: signal.signal_type,
                    packets_per_second: pps,
                    master_packets_per_second: master_pps,
                });
            }
        }
        violations
    }

    /// Convenience lookup by signal type.
    pub fn signal(&self, signal_type: SignalType) -> Option<&SignalInfo> {
        self.signals.iter().find(|s| s.signal_type == signal_type)
    }
}

fn invalid_attr(
    element: &str,
    attribute: &str,
    value: impl fmt::Display,
    expected: &'static str,
) -> MetaInfoError {
    MetaInfoError::InvalidAttribute {
        attribute: attribute.to_owned(),
        element: element.to_owned(),
        value: value.to_string(),
        expected,
    }
}

/// Attribute list of one element, with canonical/alias lookup.
struct Attrs {
    element: &'static str,
    pairs: Vec<(String, String)>,
    taken: Vec<usize>,
}

impl Attrs {
    fn read(
        element: &'static str,
        start: &quick_xml::events::BytesStart<'_>,
    ) -> Result<Attrs, MetaInfoError> {
        let mut pairs = Vec::new();
        for attr in start.attributes() {
            let attr = attr.map_err(|e| MetaInfoError::Xml(e.to_string()))?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            let value = attr
                .unescape_value()
                .map_err(|e| MetaInfoError::Xml(e.to_string()))?
                .into_owned();
            if pairs.iter().any(|(k, _)| *k == key) {
                return Err(MetaInfoError::DuplicateAttribute {
                    attribute: key,
                    element: element.to_owned(),
                });
            }
            pairs.push((key, value));
        }
        Ok(Attrs { element, pairs, taken: Vec::new() })
    }

    fn take(&mut self, name: &str) -> Option<String> {
        let index = self.pairs.iter().position(|(k, _)| k == name)?;
        self.taken.push(index);
        Some(self.pairs[index].1.clone())
    }

    /// Canonical name first, then the alias; alias use is recorded.
    fn take_aliased(
        &mut self,
        canonical: &'static str,
        alias: &str,
        warnings: &mut Vec<MetaInfoWarning>,
    ) -> Result<Option<String>, MetaInfoError> {
        let first = self.take(canonical);
        let second = self.take(alias);
        match (first, second) {
            (Some(_), Some(_)) => Err(MetaInfoError::DuplicateAttribute {
                attribute: canonical.to_owned(),
                element: self.element.to_owned(),
            }),
            (None, Some(value)) => {
                warnings.push(MetaInfoWarning::AliasedAttribute {
                    element: self.element.to_owned(),
                    found: alias.to_owned(),
                    canonical,
                });
                Ok(Some(value))
            }
            (value, None) => Ok(value),
        }
    }

    fn require(&mut self, name: &'static str) -> Result<String, MetaInfoError> {
        self.take(name).ok_or(MetaInfoError::MissingAttribute {
            attribute: name,
            element: self.element,
        })
    }

    /// Fails on any attribute that was never consumed.
    fn finish(self) -> Result<(), MetaInfoError> {
        for (index, (key, _)) in self.pairs.iter().enumerate() {
            if !self.taken.contains(&index) {
                return Err(MetaInfoError::UnexpectedAttribute {
                    attribute: key.clone(),
                    element: self.element.to_owned(),
                });
            }
        }
        Ok(())
    }
}

fn parse_f32(attrs: &Attrs, name: &str, value: &str) -> Result<f32, MetaInfoError> {
    value
        .trim()
        .parse::<f32>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| invalid_attr(attrs.element, name, value, "a finite number"))
}

fn parse_u32(attrs: &Attrs, name: &str, value: &str) -> Result<u32, MetaInfoError> {
    value
        .trim()
        .parse::<u32>()
        .map_err(|_| invalid_attr(attrs.element, name, value, "a non-negative integer"))
}

fn parse_bool(attrs: &Attrs, name: &str, value: &str) -> Result<bool, MetaInfoError> {
    match value.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(invalid_attr(attrs.element, name, value, "true, false, 1 or 0")),
    }
}

struct Parser<'a> {
    reader: quick_xml::Reader<&'a [u8]>,
    warnings: Vec<MetaInfoWarning>,
}

impl<'a> Parser<'a> {
    fn new(bytes: &'a [u8]) -> Parser<'a> {
        Parser {
            reader: quick_xml::Reader::from_reader(bytes),
            warnings: Vec::new(),
        }
    }

    fn parse(mut self) -> Result<(MetaInfo, Vec<MetaInfoWarning>), MetaInfoError> {
        use quick_xml::events::Event;

        let mut info = None;
        loop {
            match self.read_event()? {
                Event::Decl(_) | Event::Comment(_) | Event::PI(_) => {}
                Event::Text(t) if t.iter().all(|b| b.is_ascii_whitespace()) => {}
                Event::Start(e) if info.is_none() => {
                    info = Some(self.parse_root(&e, false)?);
                }
                Event::Empty(e) if info.is_none() => {
                    info = Some(self.parse_root(&e, true)?);
                }
                Event::Eof => {
                    return match info {
                        Some(info) => Ok((info, self.warnings)),
                        None => Err(MetaInfoError::Xml("no tiaMetaInfo element found".into())),
                    }
                }
                other => {
                    return Err(MetaInfoError::Xml(format!("unexpected XML content: {other:?}")))
                }
            }
        }
    }

    fn read_event(&mut self) -> Result<quick_xml::events::Event<'a>, MetaInfoError> {
        self.reader
            .read_event()
            .map_err(|e| MetaInfoError::Xml(e.to_string()))
    }

    fn element_name(e: &quick_xml::events::BytesStart<'_>) -> String {
        String::from_utf8_lossy(e.name().as_ref()).into_owned()
    }

    fn parse_root(
        &mut self,
        root: &quick_xml::events::BytesStart<'_>,
        empty: bool,
    ) -> Result<MetaInfo, MetaInfoError> {
        use quick_xml::events::Event;

        let name = Self::element_name(root);
        if name != "tiaMetaInfo" {
            return Err(MetaInfoError::WrongRoot(name));
        }
        let mut attrs = Attrs::read("tiaMetaInfo", root)?;
        match attrs.take("version") {
            None => return Err(MetaInfoError::MissingVersion),
            Some(v) if v != METAINFO_VERSION => return Err(MetaInfoError::VersionMismatch(v)),
            Some(_) => {}
        }
        attrs.finish()?;

        let mut info = MetaInfo::default();
        if empty {
            return Ok(info);
        }
        loop {
            match self.read_event()? {
                Event::Comment(_) => {}
                Event::Text(t) if t.iter().all(|b| b.is_ascii_whitespace()) => {}
                Event::Text(_) => {
                    return Err(MetaInfoError::UnexpectedText { element: "tiaMetaInfo".into() })
                }
                Event::Start(e) => self.parse_child(&mut info, &e, false)?,
                Event::Empty(e) => self.parse_child(&mut info, &e, true)?,
                Event::End(_) => return Ok(info),
                Event::Eof => {
                    return Err(MetaInfoError::Xml("unexpected end of document".into()))
                }
                other => {
                    return Err(MetaInfoError::Xml(format!("unexpected XML content: {other:?}")))
                }
            }
        }
    }

    fn parse_child(
        &mut self,
        info: &mut MetaInfo,
        element: &quick_xml::events::BytesStart<'_>,
        empty: bool,
    ) -> Result<(), MetaInfoError> {
        match Self::element_name(element).as_str() {
            "subject" => {
                if info.subject.is_some() {
                    return Err(MetaInfoError::DuplicateElement { element: "subject" });
                }
                info.subject = Some(self.parse_subject(element, empty)?);
            }
            "masterSignal" => {
                if info.master_signal.is_some() {
                    return Err(MetaInfoError::DuplicateElement { element: "masterSignal" });
                }
                info.master_signal = Some(self.parse_master(element, empty)?);
            }
            "signal" => info.signals.push(self.parse_signal(element, empty)?),
            other => {
                return Err(MetaInfoError::UnexpectedElement {
                    element: other.to_owned(),
                    parent: "tiaMetaInfo".into(),
                })
            }
        }
        Ok(())
    }

    /// Consumes events until the end tag of a childless element.
    fn expect_no_children(&mut self, element: &'static str, empty: bool) -> Result<(), MetaInfoError> {
        use quick_xml::events::Event;

        if empty {
            return Ok(());
        }
        loop {
            match self.read_event()? {
                Event::Comment(_) => {}
                Event::Text(t) if t.iter().all(|b| b.is_ascii_whitespace()) => {}
                Event::Text(_) => {
                    return Err(MetaInfoError::UnexpectedText { element: element.into() })
                }
                Event::End(_) => return Ok(()),
                Event::Start(e) | Event::Empty(e) => {
                    return Err(MetaInfoError::UnexpectedElement {
                        element: Self::element_name(&e),
                        parent: element.into(),
                    })
                }
                Event::Eof => {
                    return Err(MetaInfoError::Xml("unexpected end of document".into()))
                }
                other => {
                    return Err(MetaInfoError::Xml(format!("unexpected XML content: {other:?}")))
                }
            }
        }
    }

    fn parse_subject(
        &mut self,
        element: &quick_xml::events::BytesStart<'_>,
        empty: bool,
    ) -> Result<Subject, MetaInfoError> {
        let mut attrs = Attrs::read("subject", element)?;
        let mut subject = Subject {
            id: attrs.take("id"),
            first_name: attrs.take("firstName"),
            surname: attrs.take_aliased("surname", "lastName", &mut self.warnings)?,
            ..Subject::default()
        };
        if let Some(value) = attrs.take("sex") {
            subject.sex = Some(match value.as_str() {
                "m" => Sex::Male,
                "f" => Sex::Female,
                _ => return Err(invalid_attr("subject", "sex", value, "m or f")),
            });
        }
        if let Some(value) = attrs.take("birthday") {
            subject.birthday = Some(
                NaiveDate::parse_from_str(value.trim(), "%Y-%m-%d")
                    .map_err(|_| invalid_attr("subject", "birthday", &value, "a date (YYYY-MM-DD)"))?,
            );
        }
        if let Some(value) = attrs.take("handedness") {
            subject.handedness = Some(match value.as_str() {
                "l" => Handedness::Left,
                "r" => Handedness::Right,
                _ => return Err(invalid_attr("subject", "handedness", value, "l or r")),
            });
        }
        for (name, slot) in [
            ("medication", &mut subject.medication),
            ("glasses", &mut subject.glasses),
            ("smoker", &mut subject.smoker),
        ] {
            if let Some(value) = attrs.take(name) {
                *slot = Some(parse_bool(&attrs, name, &value)?);
            }
        }
        attrs.finish()?;
        self.expect_no_children("subject", empty)?;
        Ok(subject)
    }

    fn parse_master(
        &mut self,
        element: &quick_xml::events::BytesStart<'_>,
        empty: bool,
    ) -> Result<MasterSignal, MetaInfoError> {
        let mut attrs = Attrs::read("masterSignal", element)?;
        let rate = attrs
            .take_aliased("samplingRate", "sampleRate", &mut self.warnings)?
            .ok_or(MetaInfoError::MissingAttribute {
                attribute: "samplingRate",
                element: "masterSignal",
            })?;
        let sampling_rate = parse_f32(&attrs, "samplingRate", &rate)?;
        if sampling_rate <= 0.0 {
            return Err(invalid_attr("masterSignal", "samplingRate", rate, "a positive finite number"));
        }
        let block = attrs.require("blockSize")?;
        let block_size = parse_u32(&attrs, "blockSize", &block)?;
        if block_size == 0 {
            return Err(invalid_attr("masterSignal", "blockSize", block, "an integer >= 1"));
        }
        attrs.finish()?;
        self.expect_no_children("masterSignal", empty)?;
        Ok(MasterSignal { sampling_rate, block_size })
    }

    fn parse_signal(
        &mut self,
        element: &quick_xml::events::BytesStart<'_>,
        empty: bool,
    ) -> Result<SignalInfo, MetaInfoError> {
        use quick_xml::events::Event;

        let mut attrs = Attrs::read("signal", element)?;
        let type_token = attrs.require("type")?;
        let signal_type = match SignalType::from_identifier(&type_token) {
            Ok(signal_type) => signal_type,
            // The schema spells the button type "buttons".
            Err(_) if type_token == "buttons" => {
                self.warnings.push(MetaInfoWarning::AliasedSignalType {
                    found: type_token.clone(),
                    canonical: SignalType::Button,
                });
                SignalType::Button
            }
            Err(_) => return Err(MetaInfoError::UnknownSignalType(type_token)),
        };
        let rate = attrs
            .take_aliased("samplingRate", "sampleRate", &mut self.warnings)?
            .ok_or(MetaInfoError::MissingAttribute {
                attribute: "samplingRate",
                element: "signal",
            })?;
        let sampling_rate = parse_f32(&attrs, "samplingRate", &rate)?;
        if sampling_rate < 0.0 {
            return Err(invalid_attr("signal", "samplingRate", rate, "a non-negative finite number"));
        }
        let block = attrs.require("blockSize")?;
        let block_size = parse_u32(&attrs, "blockSize", &block)?;
        let channels = attrs.require("numChannels")?;
        let num_channels = parse_u32(&attrs, "numChannels", &channels)?;
        attrs.finish()?;

        let mut signal = SignalInfo {
            signal_type,
            sampling_rate,
            block_size,
            num_channels,
            channels: Vec::new(),
        };
        if !empty {
            loop {
                match self.read_event()? {
                    Event::Comment(_) => {}
                    Event::Text(t) if t.iter().all(|b| b.is_ascii_whitespace()) => {}
                    Event::Text(_) => {
                        return Err(MetaInfoError::UnexpectedText { element: "signal".into() })
                    }
                    Event::Start(e) => {
                        if Self::element_name(&e) != "channel" {
                            return Err(MetaInfoError::UnexpectedElement {
                                element: Self::element_name(&e),
                                parent: "signal".into(),
                            });
                        }
                        signal.channels.push(self.parse_channel(&e, false)?);
                    }
                    Event::Empty(e) => {
                        if Self::element_name(&e) != "channel" {
                            return Err(MetaInfoError::UnexpectedElement {
                                element: Self::element_name(&e),
                                parent: "signal".into(),
                            });
                        }
                        signal.channels.push(self.parse_channel(&e, true)?);
                    }
                    Event::End(_) => break,
                    Event::Eof => {
                        return Err(MetaInfoError::Xml("unexpected end of document".into()))
                    }
                    other => {
                        return Err(MetaInfoError::Xml(format!(
                            "unexpected XML content: {other:?}"
                        )))
                    }
                }
            }
        }

        // Channel invariants are part of the document contract.
        let mut seen = Vec::new();
        for channel in &signal.channels {
            if channel.nr == 0 || channel.nr > signal.num_channels {
                return Err(MetaInfoError::ChannelNrOutOfRange {
                    signal: signal.signal_type,
                    nr: channel.nr,
                    num_channels: signal.num_channels,
                });
            }
            if seen.contains(&channel.nr) {
                return Err(MetaInfoError::DuplicateChannelNr {
                    signal: signal.signal_type,
                    nr: channel.nr,
                });
            }
            seen.push(channel.nr);
        }
        Ok(signal)
    }

    fn parse_channel(
        &mut self,
        element: &quick_xml::events::BytesStart<'_>,
        empty: bool,
    ) -> Result<Channel, MetaInfoError> {
        let mut attrs = Attrs::read("channel", element)?;
        let nr_value = attrs.require("nr")?;
        let nr = parse_u32(&attrs, "nr", &nr_value)?;
        let label = attrs.require("label")?;
        attrs.finish()?;
        self.expect_no_children("channel", empty)?;
        Ok(Channel { nr, label })
    }
}
