//! Synthetic packet generation on the master-signal timeline.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datapacket::{DataPacket, SignalBlock};
use crate::server::config::{
    AperiodicChange, ConfigError, Generator, ServerConfig, TimestampMode,
};
use crate::signal::SignalType;

/// Produces one [`DataPacket`] per master block interval (one per tick).
///
/// Every periodic signal contributes a block of `num_channels * block_size`
/// samples per tick; an aperiodic signal contributes a one-sample-per-channel
/// block only on ticks where its change schedule fires. Packet ids come from
/// a single counter starting at 1; the connection packet number is left 0
/// and stamped per data connection at send time.
pub struct PacketGenerator {
    master_rate: f64,
    master_block: u32,
    timestamps: TimestampMode,
    started: Instant,
    tick: u64,
    next_packet_id: u64,
    sources: Vec<SourceState>,
}

struct SourceState {
    signal: SignalType,
    num_channels: u16,
    block_size: u16,
    sampling_rate: f64,
    kind: SourceKind,
}

enum SourceKind {
    Sine { frequency_hz: f64, amplitude: f64 },
    Constant { value: f32 },
    Ramp { step: f64 },
    Random { rng: ChaCha8Rng },
    Aperiodic { changes: Vec<AperiodicChange>, cursor: usize },
}

impl PacketGenerator {
    /// Builds a generator for a validated config.
    pub fn new(config: &ServerConfig) -> Result<PacketGenerator, ConfigError> {
        config.validate()?;
        let master = config.metainfo.master_signal.as_ref().expect("validated");

        let mut sources = Vec::new();
        for spec in &config.sources {
            let info = config.metainfo.signal(spec.signal).expect("validated");
            let kind = if spec.signal.is_aperiodic() {
                SourceKind::Aperiodic {
                    changes: spec.changes.clone().expect("validated"),
                    cursor: 0,
                }
            } else {
                match spec.generator.as_ref().expect("validated") {
                    Generator::Sine { frequency_hz, amplitude } => SourceKind::Sine {
                        frequency_hz: *frequency_hz,
                        amplitude: *amplitude,
                    },
                    Generator::Constant { value } => SourceKind::Constant { value: *value },
                    Generator::Ramp { step } => SourceKind::Ramp { step: *step },
                    Generator::Random { seed } => SourceKind::Random {
                        rng: ChaCha8Rng::seed_from_u64(*seed),
                    },
                }
            };
            sources.push(SourceState {
                signal: spec.signal,
                num_channels: info.num_channels as u16,
                block_size: if spec.signal.is_aperiodic() { 1 } else { info.block_size as u16 },
                sampling_rate: info.sampling_rate as f64,
                kind,
            });
        }
        sources.sort_by_key(|s| s.signal.flag());

        Ok(PacketGenerator {
            master_rate: master.sampling_rate as f64,
            master_block: master.block_size,
            timestamps: config.timestamps,
            started: Instant::now(),
            tick: 0,
            next_packet_id: 1,
            sources,
        })
    }

    /// The tick index the next packet will be generated for.
    pub fn next_tick(&self) -> u64 {
        self.tick
    }

    /// Generates the packet for the current tick and advances the timeline.
    pub fn next_packet(&mut self) -> DataPacket {
        let tick = self.tick;
        self.tick += 1;
        let packet_id = self.next_packet_id;
        self.next_packet_id += 1;

        let timestamp_micros = match self.timestamps {
            TimestampMode::IdealTicks => ideal_timestamp(tick, self.master_block, self.master_rate),
            TimestampMode::WallClock => self.started.elapsed().as_micros() as u64,
        };

        let mut blocks = Vec::new();
        for source in &mut self.sources {
            if let Some(block) = source.block_for_tick(tick) {
                blocks.push(block);
            }
        }

        DataPacket {
            packet_id,
            connection_packet_number: 0,
            timestamp_micros,
            blocks,
        }
    }
}

/// Microseconds for tick `t`: `round(t * block / rate * 1e6)`.
pub fn ideal_timestamp(tick: u64, master_block: u32, master_rate: f64) -> u64 {
    (tick as f64 * master_block as f64 / master_rate * 1e6).round() as u64
}

impl SourceState {
    fn block_for_tick(&mut self, tick: u64) -> Option<SignalBlock> {
        let channels = self.num_channels;
        let block_size = self.block_size;
        match &mut self.kind {
            SourceKind::Aperiodic { changes, cursor } => {
                let change = changes.get(*cursor)?;
                if change.tick != tick {
                    return None;
                }
                let values = change.values.clone();
                *cursor += 1;
                Some(SignalBlock::new(self.signal, channels, 1, values))
            }
            kind => {
                let count = channels as usize * block_size as usize;
                let mut samples = Vec::with_capacity(count);
                for _channel in 0..channels {
                    for i in 0..block_size as u64 {
                        let n = tick * block_size as u64 + i;
                        samples.push(match kind {
                            SourceKind::Sine { frequency_hz, amplitude } => {
                                sine_sample(*frequency_hz, *amplitude, self.sampling_rate, n)
                            }
                            SourceKind::Constant { value } => *value,
                            SourceKind::Ramp { step } => (*step * n as f64) as f32,
                            SourceKind::Random { rng } => rng.gen_range(-1.0f32..1.0),
                            SourceKind::Aperiodic { .. } => unreachable!(),
                        });
                    }
                }
                Some(SignalBlock::new(self.signal, channels, block_size, samples))
            }
        }
    }
}

/// The sine closed form: f64 throughout, one rounding to f32 at the end.
pub fn sine_sample(frequency_hz: f64, amplitude: f64, sampling_rate: f64, n: u64) -> f32 {
    (amplitude * (TAU * frequency_hz * n as f64 / sampling_rate).sin()) as f32
}
