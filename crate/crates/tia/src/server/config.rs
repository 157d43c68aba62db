//! Server configuration and its JSON form.

use std::net::IpAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapacket;
use crate::metainfo::MetaInfo;
use crate::signal::SignalType;

pub const DEFAULT_CONTROL_PORT: u16 = 9000;
pub const DEFAULT_DATA_QUEUE_CAPACITY: usize = 64;

/// Full configuration of a [`TiaServer`](crate::server::TiaServer).
///
/// The JSON representation mirrors this struct field for field; see the
/// repository documentation for a commented example.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    /// TCP port for control connections; 0 picks an ephemeral port.
    #[serde(default = "default_control_port")]
    pub control_port: u16,
    /// Address all listeners bind to.
    #[serde(default = "default_bind_addr")]
    pub bind_addr: IpAddr,
    #[serde(default)]
    pub udp_mode: UdpMode,
    #[serde(default)]
    pub timeline: TimelineMode,
    #[serde(default)]
    pub timestamps: TimestampMode,
    /// Re-send `ServerStateRunning` on every state connection at this
    /// interval. Absent means it is sent once, on connect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_heartbeat_ms: Option<u64>,
    /// Per-session packet queue depth between the generator and the data
    /// socket writer.
    #[serde(default = "default_queue_capacity")]
    pub data_queue_capacity: usize,
    /// Must contain a master signal and pass the stream-consistency check.
    pub metainfo: MetaInfo,
    /// Exactly one source per signal declared in the metainfo.
    pub sources: Vec<SourceSpec>,
}

fn default_control_port() -> u16 {
    DEFAULT_CONTROL_PORT
}

fn default_bind_addr() -> IpAddr {
    IpAddr::from([127, 0, 0, 1])
}

fn default_queue_capacity() -> usize {
    DEFAULT_DATA_QUEUE_CAPACITY
}

/// How UDP data connections deliver packets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UdpMode {
    /// The reply names a fresh UDP port; the client sends one empty
    /// datagram to it and the server unicasts packets back to that
    /// datagram's source address.
    #[default]
    UnicastAfterHello,
    /// The reply names the fixed `port`; the server sends every packet to
    /// `address:port` and clients listen there. For legacy deployments.
    Broadcast { address: IpAddr, port: u16 },
}

/// How the packet timeline advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimelineMode {
    /// Wall-clock pacing at the master cadence; a slow consumer drops
    /// packets (counted) instead of stalling the timeline.
    #[default]
    Realtime,
    /// The timeline advances exactly as fast as every transmitting session
    /// consumes packets. Deterministic; made for tests and offline use.
    Lockstep,
}

/// Where packet timestamps come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampMode {
    /// `round(tick * block_size / sampling_rate * 1e6)` microseconds:
    /// deterministic, derived from the master cadence.
    #[default]
    IdealTicks,
    /// Microseconds of wall time since the server started.
    WallClock,
}

/// Synthetic source for one signal type.
///
/// Periodic signals take a `generator`; aperiodic signals (button,
/// joystick, mouse, mouse-button) take a `changes` schedule instead and
/// contribute a one-sample block only on ticks where a change fires.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub signal: SignalType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changes: Option<Vec<AperiodicChange>>,
}

impl SourceSpec {
    pub fn periodic(signal: SignalType, generator: Generator) -> SourceSpec {
        SourceSpec { signal, generator: Some(generator), changes: None }
    }

    pub fn aperiodic(signal: SignalType, changes: Vec<AperiodicChange>) -> SourceSpec {
        SourceSpec { signal, generator: None, changes: Some(changes) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// `amplitude * sin(2π * frequency_hz * n / sampling_rate)` where `n`
    /// is the global sample index of the signal; identical on every
    /// channel. Computed in f64, rounded once to f32.
    Sine { frequency_hz: f64, amplitude: f64 },
    Constant { value: f32 },
    /// `step * n` for global sample index `n`.
    Ramp { step: f64 },
    /// Uniform values in [-1, 1), drawn from a seeded ChaCha8 stream in
    /// generation order. Identical seed, identical stream.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AperiodicChange {
    /// Tick index (0-based) at which the new values are transmitted.
    pub tick: u64,
    /// One value per channel of the signal.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid JSON config: {0}")]
    Json(String),
    #[error("metainfo is invalid: {0}")]
    MetaInfo(#[from] crate::metainfo::MetaInfoError),
    #[error("metainfo must declare a master signal")]
    MissingMasterSignal,
    #[error("metainfo is not stream-consistent: {0}")]
    Inconsistent(String),
    #[error("signal {0} is declared twice in the metainfo")]
    DuplicateSignal(SignalType),
    #[error("signal {signal}: {field} {value} does not fit the packet's 16-bit field")]
    DimensionTooLarge { signal: SignalType, field: &'static str, value: u32 },
    #[error("no source configured for signal {0}")]
    MissingSource(SignalType),
    #[error("source for {0} does not match any metainfo signal")]
    UnknownSource(SignalType),
    #[error("two sources configured for signal {0}")]
    DuplicateSource(SignalType),
    #[error("signal {0} is periodic and needs a generator, not a change schedule")]
    PeriodicNeedsGenerator(SignalType),
    #[error("signal {0} is aperiodic and needs a change schedule, not a generator")]
    AperiodicNeedsChanges(SignalType),
    #[error("change schedule for {0} must have strictly increasing tick indices")]
    UnorderedChanges(SignalType),
    #[error("change at tick {tick} for {signal} has {got} values, expected one per channel ({expected})")]
    ChangeValueCount { signal: SignalType, tick: u64, got: usize, expected: u32 },
    #[error("generator parameter for {signal} is not finite")]
    NonFiniteParameter { signal: SignalType },
    #[error("worst-case packet would not fit the 32-bit size field")]
    PacketTooLarge,
}

impl ServerConfig {
    /// A config with library defaults around the given stream description.
    pub fn new(metainfo: MetaInfo, sources: Vec<SourceSpec>) -> ServerConfig {
        ServerConfig {
            control_port: DEFAULT_CONTROL_PORT,
            bind_addr: default_bind_addr(),
            udp_mode: UdpMode::default(),
            timeline: TimelineMode::default(),
            timestamps: TimestampMode::default(),
            state_heartbeat_ms: None,
            data_queue_capacity: DEFAULT_DATA_QUEUE_CAPACITY,
            metainfo,
            sources,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<ServerConfig, ConfigError> {
        serde_json::from_slice(bytes).map_err(|e| ConfigError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn state_heartbeat(&self) -> Option<Duration> {
        self.state_heartbeat_ms.map(Duration::from_millis)
    }

    /// One master block interval: the time between two packets.
    pub fn packet_interval(&self) -> Option<Duration> {
        let master = self.metainfo.master_signal.as_ref()?;
        Some(Duration::from_secs_f64(
            master.block_size as f64 / master.sampling_rate as f64,
        ))
    }

    /// Full structural validation; [`TiaServer::start`](crate::server::TiaServer::start)
    /// refuses configs that fail here.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.metainfo.validate()?;
        if self.metainfo.master_signal.is_none() {
            return Err(ConfigError::MissingMasterSignal);
        }
        let violations = self.metainfo.check_stream_consistency();
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(ConfigError::Inconsistent(text.join("; ")));
        }

        let mut dims = Vec::new();
        for (index, signal) in self.metainfo.signals.iter().enumerate() {
            if self.metainfo.signals[..index]
                .iter()
                .any(|other| other.signal_type == signal.signal_type)
            {
                return Err(ConfigError::DuplicateSignal(signal.signal_type));
            }
            let channels: u16 = signal.num_channels.try_into().map_err(|_| {
                ConfigError::DimensionTooLarge {
                    signal: signal.signal_type,
                    field: "numChannels",
                    value: signal.num_channels,
                }
            })?;
            let block: u16 = signal.block_size.try_into().map_err(|_| {
                ConfigError::DimensionTooLarge {
                    signal: signal.signal_type,
                    field: "blockSize",
                    value: signal.block_size,
                }
            })?;
            // Aperiodic blocks always carry exactly one sample per channel.
            let worst_block = if signal.signal_type.is_aperiodic() { 1 } else { block };
            dims.push((channels, worst_block));
        }
        if datapacket::packet_size_of(dims).is_err() {
            return Err(ConfigError::PacketTooLarge);
        }

        for (index, source) in self.sources.iter().enumerate() {
            if self.sources[..index].iter().any(|other| other.signal == source.signal) {
                return Err(ConfigError::DuplicateSource(source.signal));
            }
            let Some(info) = self.metainfo.signal(source.signal) else {
                return Err(ConfigError::UnknownSource(source.signal));
            };
            if source.signal.is_aperiodic() {
                let Some(changes) = &source.changes else {
                    return Err(ConfigError::AperiodicNeedsChanges(source.signal));
                };
                if source.generator.is_some() {
                    return Err(ConfigError::AperiodicNeedsChanges(source.signal));
                }
                if !changes.windows(2).all(|w| w[0].tick < w[1].tick) {
                    return Err(ConfigError::UnorderedChanges(source.signal));
                }
                for change in changes {
                    if change.values.len() as u64 != info.num_channels as u64 {
                        return Err(ConfigError::ChangeValueCount {
                            signal: source.signal,
                            tick: change.tick,
                            got: change.values.len(),
                            expected: info.num_channels,
                        });
                    }
                }
            } else {
                let Some(generator) = &source.generator else {
                    return Err(ConfigError::PeriodicNeedsGenerator(source.signal));
                };
                if source.changes.is_some() {
                    return Err(ConfigError::PeriodicNeedsGenerator(source.signal));
                }
                let finite = match generator {
                    Generator::Sine { frequency_hz, amplitude } => {
                        frequency_hz.is_finite() && amplitude.is_finite()
                    }
                    Generator::Constant { value } => value.is_finite(),
                    Generator::Ramp { step } => step.is_finite(),
                    Generator::Random { .. } => true,
                };
                if !finite {
                    return Err(ConfigError::NonFiniteParameter { signal: source.signal });
                }
            }
        }
        for signal in &self.metainfo.signals {
            if !self.sources.iter().any(|s| s.signal == signal.signal_type) {
                return Err(ConfigError::MissingSource(signal.signal_type));
            }
        }
        Ok(())
    }
}
