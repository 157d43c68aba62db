//! Version-3 data packet codec.
//!
//! Wire layout, all multi-byte fields little endian:
//!
//! | Offset        | Length    | Content                                   |
//! |---------------|-----------|-------------------------------------------|
//! | 0             | 1         | version, must be 3                        |
//! | 1             | 4         | packet size in bytes, including header    |
//! | 5             | 4         | signal type flags                         |
//! | 9             | 8         | packet id                                 |
//! | 17            | 8         | connection packet number                  |
//! | 25            | 8         | time stamp, microseconds since server start |
//! | 33            | 2·NoS     | number of channels per signal             |
//! | 33 + 2·NoS    | 2·NoS     | block size per signal (samples per channel) |
//! | 33 + 4·NoS    | ...       | samples, 32-bit IEEE 754 floats           |
//!
//! NoS is the number of set bits in the signal type flags. Signal blocks are
//! ordered by ascending flag value; within one block the samples are
//! channel-major (all of channel 1's block, then channel 2's, and so on).
//! An empty packet is exactly 33 bytes.
//!
//! Version 10 is permanently reserved: the first byte of the legacy
//! version-2 packet was the ASCII text "10", so no packet may ever carry
//! that version number.

use thiserror::Error;

use crate::signal::{SignalError, SignalMask, SignalType};

/// The only supported data packet version.
pub const DATAPACKET_VERSION: u8 = 3;

/// Version number that can never be assigned (legacy version-2 collision).
pub const RESERVED_VERSION: u8 = 10;

/// Size of the fixed header; also the size of an empty packet.
pub const FIXED_HEADER_SIZE: usize = 33;

/// Byte offset of the connection packet number within an encoded packet.
pub const CONNECTION_NUMBER_OFFSET: usize = 17;

/// Default upper bound on accepted packet sizes when decoding (16 MiB).
pub const DEFAULT_MAX_PACKET_SIZE: u32 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("signal blocks must be strictly ascending by flag value (block {index} out of order or duplicate)")]
    BlocksNotSorted { index: usize },
    #[error("{signal}: expected {expected} samples ({channels} channels x {block_size}), got {actual}")]
    SampleCountMismatch {
        signal: SignalType,
        channels: u16,
        block_size: u16,
        expected: usize,
        actual: usize,
    },
    #[error("packet size {computed} does not fit the 32-bit size field")]
    PacketTooLarge { computed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("buffer too short: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unsupported datapacket version {found} (only version 3 is defined)")]
    UnsupportedVersion { found: u8 },
    #[error("datapacket version 10 is reserved forever and cannot be valid (legacy version-2 collision)")]
    ReservedVersionTen,
    #[error("packet size field is {declared}, below the 33-byte minimum")]
    SizeFieldTooSmall { declared: u32 },
    #[error("packet size field is {declared}, above the configured limit of {limit} bytes")]
    SizeFieldTooLarge { declared: u32, limit: u32 },
    #[error("packet size field says {declared} bytes but the packet occupies {actual}")]
    SizeMismatch { declared: u32, actual: u64 },
    #[error(transparent)]
    InvalidMask(#[from] SignalError),
}

/// Decode-side knobs. The defaults are strict.
#[derive(Debug, Clone)]
pub struct DecodeOptions {
    /// Reject packets whose size field exceeds this many bytes.
    pub max_packet_size: u32,
    /// Accept unassigned flag bits, skipping their variable-header entries
    /// and sample data. The raw bits stay visible in [`FixedHeader::flags`];
    /// strict mode (the default) rejects them instead.
    pub lenient_flags: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_packet_size: DEFAULT_MAX_PACKET_SIZE,
            lenient_flags: false,
        }
    }
}

/// The parsed 33-byte fixed header.
///
/// `flags` is the raw mask from the wire; it is not validated here so that
/// streaming readers can inspect headers before deciding how to proceed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedHeader {
    pub version: u8,
    pub packet_size: u32,
    pub flags: SignalMask,
    pub packet_id: u64,
    pub connection_packet_number: u64,
    pub timestamp_micros: u64,
}

impl FixedHeader {
    /// Parses the first 33 bytes of a packet. Callers streaming from a
    /// socket read exactly 33 bytes, then `packet_size - 33` more.
    pub fn parse(bytes: &[u8]) -> Result<FixedHeader, DecodeError> {
        if bytes.len() < FIXED_HEADER_SIZE {
            return Err(DecodeError::Truncated {
                needed: FIXED_HEADER_SIZE,
                available: bytes.len(),
            });
        }
        check_version(bytes[0])?;
        let packet_size = u32::from_le_bytes(bytes[1..5].try_into().unwrap());
        if (packet_size as usize) < FIXED_HEADER_SIZE {
            return Err(DecodeError::SizeFieldTooSmall { declared: packet_size });
        }
        Ok(FixedHeader {
            version: bytes[0],
            packet_size,
            flags: SignalMask(u32::from_le_bytes(bytes[5..9].try_into().unwrap())),
            packet_id: u64::from_le_bytes(bytes[9..17].try_into().unwrap()),
            connection_packet_number: u64::from_le_bytes(bytes[17..25].try_into().unwrap()),
            timestamp_micros: u64::from_le_bytes(bytes[25..33].try_into().unwrap()),
        })
    }
}

fn check_version(version: u8) -> Result<(), DecodeError> {
    match version {
        DATAPACKET_VERSION => Ok(()),
        RESERVED_VERSION => Err(DecodeError::ReservedVersionTen),
        found => Err(DecodeError::UnsupportedVersion { found }),
    }
}

/// One signal's share of a packet.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    pub signal: SignalType,
    pub num_channels: u16,
    /// Samples per channel.
    pub block_size: u16,
    /// `num_channels * block_size` values, channel-major.
    pub samples: Vec<f32>,
}

impl SignalBlock {
    pub fn new(signal: SignalType, num_channels: u16, block_size: u16, samples: Vec<f32>) -> SignalBlock {
        SignalBlock { signal, num_channels, block_size, samples }
    }

    fn expected_samples(&self) -> usize {
        self.num_channels as usize * self.block_size as usize
    }

    /// The samples of one channel; `channel` is 1-based like the metainfo
    /// channel numbers.
    pub fn channel_samples(&self, channel: u16) -> &[f32] {
        let bs = self.block_size as usize;
        let start = (channel as usize - 1) * bs;
        &self.samples[start..start + bs]
    }
}

/// A decoded version-3 data packet.
///
/// The size field and signal flags are derived from the blocks, which must
/// be strictly ascending by flag value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataPacket {
    pub packet_id: u64,
    pub connection_packet_number: u64,
    pub timestamp_micros: u64,
    pub blocks: Vec<SignalBlock>,
}

impl DataPacket {
    /// The signal-type mask announced in the fixed header: the OR of all
    /// block flags.
    pub fn flags(&self) -> SignalMask {
        SignalMask::from_signals(self.blocks.iter().map(|b| b.signal))
    }

    /// Total encoded size in bytes.
    pub fn wire_size(&self) -> Result<u32, EncodeError> {
        packet_size_of(self.blocks.iter().map(|b| (b.num_channels, b.block_size)))
    }

    fn validate(&self) -> Result<(), EncodeError> {
        for (index, pair) in self.blocks.windows(2).enumerate() {
            if pair[0].signal.flag() >= pair[1].signal.flag() {
                return Err(EncodeError::BlocksNotSorted { index: index + 1 });
            }
        }
        for block in &self.blocks {
            if block.samples.len() != block.expected_samples() {
                return Err(EncodeError::SampleCountMismatch {
                    signal: block.signal,
                    channels: block.num_channels,
                    block_size: block.block_size,
                    expected: block.expected_samples(),
                    actual: block.samples.len(),
                });
            }
        }
        Ok(())
    }

    /// Encodes the packet into its wire form.
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        self.validate()?;
        let size = self.wire_size()?;
        let mut out = Vec::with_capacity(size as usize);
        out.push(DATAPACKET_VERSION);
        out.extend_from_slice(&size.to_le_bytes());
        out.extend_from_slice(&self.flags().bits().to_le_bytes());
        out.extend_from_slice(&self.packet_id.to_le_bytes());
        out.extend_from_slice(&self.connection_packet_number.to_le_bytes());
        out.extend_from_slice(&self.timestamp_micros.to_le_bytes());
        for block in &self.blocks {
            out.extend_from_slice(&block.num_channels.to_le_bytes());
        }
        for block in &self.blocks {
            out.extend_from_slice(&block.block_size.to_le_bytes());
        }
        for block in &self.blocks {
            for sample in &block.samples {
                out.extend_from_slice(&sample.to_le_bytes());
            }
        }
        debug_assert_eq!(out.len(), size as usize);
        Ok(out)
    }

    /// Decodes one packet with the default (strict) options.
    pub fn decode(bytes: &[u8]) -> Result<DataPacket, DecodeError> {
        Self::decode_with(bytes, &DecodeOptions::default())
    }

    /// Decodes one packet. The buffer must hold exactly the packet: the size
    /// field, the declared block structure, and the buffer length all have
    /// to agree.
    pub fn decode_with(bytes: &[u8], options: &DecodeOptions) -> Result<DataPacket, DecodeError> {
        let header = FixedHeader::parse(bytes)?;
        if header.packet_size > options.max_packet_size {
            return Err(DecodeError::SizeFieldTooLarge {
                declared: header.packet_size,
                limit: options.max_packet_size,
            });
        }
        if bytes.len() as u64 != header.packet_size as u64 {
            return Err(DecodeError::SizeMismatch {
                declared: header.packet_size,
                actual: bytes.len() as u64,
            });
        }
        if !options.lenient_flags && !header.flags.is_valid() {
            return Err(DecodeError::InvalidMask(SignalError::InvalidMask {
                mask: header.flags.bits(),
                invalid: header.flags.invalid_bits(),
            }));
        }

        // NoS counts every set bit, assigned or not; the wire layout is
        // defined by the flags field alone.
        let num_signals = header.flags.bits().count_ones() as usize;
        let var_header_end = FIXED_HEADER_SIZE + 4 * num_signals;
        if var_header_end > bytes.len() {
            return Err(DecodeError::SizeMismatch {
                declared: header.packet_size,
                actual: var_header_end as u64,
            });
        }

        let read_u16 = |offset: usize| u16::from_le_bytes(bytes[offset..offset + 2].try_into().unwrap());
        let entries: Vec<(u32, u16, u16)> = (0..32)
            .filter(|bit| header.flags.bits() & (1 << bit) != 0)
            .enumerate()
            .map(|(i, bit)| {
                let channels = read_u16(FIXED_HEADER_SIZE + 2 * i);
                let block_size = read_u16(FIXED_HEADER_SIZE + 2 * (num_signals + i));
                (1u32 << bit, channels, block_size)
            })
            .collect();

        let total_samples: u64 = entries
            .iter()
            .map(|&(_, ch, bs)| ch as u64 * bs as u64)
            .sum();
        let computed = var_header_end as u64 + 4 * total_samples;
        if computed != header.packet_size as u64 {
            return Err(DecodeError::SizeMismatch {
                declared: header.packet_size,
                actual: computed,
            });
        }

        let mut blocks = Vec::new();
        let mut offset = var_header_end;
        for (flag, channels, block_size) in entries {
            let count = channels as usize * block_size as usize;
            let end = offset + 4 * count;
            match SignalType::from_flag(flag) {
                Ok(signal) => {
                    let samples = bytes[offset..end]
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    blocks.push(SignalBlock { signal, num_channels: channels, block_size, samples });
                }
                // Reachable only with lenient flags: skip the unassigned
                // signal's payload.
                Err(_) => {}
            }
            offset = end;
        }

        Ok(DataPacket {
            packet_id: header.packet_id,
            connection_packet_number: header.connection_packet_number,
            timestamp_micros: header.timestamp_micros,
            blocks,
        })
    }
}

/// Packet size for a list of `(num_channels, block_size)` dimensions:
/// `33 + 4·NoS + 4·Σ(channels·block_size)`.
pub fn packet_size_of<I>(dims: I) -> Result<u32, EncodeError>
where
    I: IntoIterator<Item = (u16, u16)>,
{
    let mut total: u64 = FIXED_HEADER_SIZE as u64;
    for (channels, block_size) in dims {
        total += 4 + 4 * channels as u64 * block_size as u64;
    }
    u32::try_from(total).map_err(|_| EncodeError::PacketTooLarge { computed: total })
}

/// Overwrites the connection packet number field of an already encoded
/// packet. Lets a server stamp per-connection counters onto a shared
/// encoding without redoing the whole packet.
pub fn set_connection_packet_number(encoded: &mut [u8], number: u64) {
    encoded[CONNECTION_NUMBER_OFFSET..CONNECTION_NUMBER_OFFSET + 8]
        .copy_from_slice(&number.to_le_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::ALL_SIGNAL_TYPES;
    use proptest::prelude::*;

    /// Builds packet bytes directly from the header tables, independent of
    /// the encoder.
    fn assemble_by_hand(
        packet_id: u64,
        connection_number: u64,
        timestamp: u64,
        blocks: &[(u32, u16, u16, Vec<f32>)],
    ) -> Vec<u8> {
        let flags: u32 = blocks.iter().map(|b| b.0).fold(0, |m, f| m | f);
        let data_bytes: usize = blocks.iter().map(|b| 4 * b.3.len()).sum();
        let size = (33 + 4 * blocks.len() + data_bytes) as u32;
        let mut out = Vec::new();
        out.push(3u8);
        out.extend_from_slice(&size.to_le_bytes());
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&packet_id.to_le_bytes());
        out.extend_from_slice(&connection_number.to_le_bytes());
        out.extend_from_slice(&timestamp.to_le_bytes());
        for b in blocks {
            out.extend_from_slice(&b.1.to_le_bytes());
        }
        for b in blocks {
            out.extend_from_slice(&b.2.to_le_bytes());
        }
        for b in blocks {
            for s in &b.3 {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out
    }

    fn eeg_bp_packet() -> DataPacket {
        let eeg: Vec<f32> = (0..30).map(|n| 100.0 + (n / 10 * 100 + n % 10) as f32).collect();
        let bp: Vec<f32> = (0..25).map(|n| 1000.0 + n as f32 * 0.5).collect();
        DataPacket {
            packet_id: 7,
            connection_packet_number: 1,
            timestamp_micros: 123_456,
            blocks: vec![
                SignalBlock::new(SignalType::Eeg, 3, 10, eeg),
                SignalBlock::new(SignalType::Bp, 5, 5, bp),
            ],
        }
    }

    #[test]
    fn empty_packet_is_exactly_33_bytes() {
        let packet = DataPacket::default();
        let bytes = packet.encode().unwrap();
        let mut expected = vec![0x03u8, 0x21, 0x00, 0x00, 0x00];
        expected.extend_from_slice(&[0u8; 28]);
        assert_eq!(bytes, expected);
        assert_eq!(DataPacket::decode(&bytes).unwrap(), packet);
    }

    #[test]
    fn two_signal_packet_matches_hand_assembly() {
        let packet = eeg_bp_packet();
        let expected = assemble_by_hand(
            7,
            1,
            123_456,
            &[
                (0x1, 3, 10, packet.blocks[0].samples.clone()),
                (0x20, 5, 5, packet.blocks[1].samples.clone()),
            ],
        );
        assert_eq!(expected.len(), 261);

        let bytes = packet.encode().unwrap();
        assert_eq!(bytes, expected);
        assert_eq!(&bytes[1..5], &261u32.to_le_bytes());
        // Data begins at 33 + 4 * NoS = 41.
        assert_eq!(&bytes[41..45], &packet.blocks[0].samples[0].to_le_bytes());
        assert_eq!(DataPacket::decode(&bytes).unwrap(), packet);
    }

    #[test]
    fn block_size_entries_follow_channel_entries() {
        let bytes = eeg_bp_packet().encode().unwrap();
        // Low byte of the first block-size entry sits at 33 + 2 * NoS.
        assert_eq!(bytes[33 + 2 * 2], 10);
        assert_eq!(&bytes[33..41], &[3, 0, 5, 0, 10, 0, 5, 0]);
    }

    #[test]
    fn single_button_sample() {
        let packet = DataPacket {
            blocks: vec![SignalBlock::new(SignalType::Button, 1, 1, vec![1.0])],
            ..DataPacket::default()
        };
        let bytes = packet.encode().unwrap();
        assert_eq!(bytes.len(), 41);
        assert_eq!(&bytes[37..41], &[0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn packet_size_examples() {
        assert_eq!(packet_size_of([]).unwrap(), 33);
        assert_eq!(packet_size_of([(3, 10), (5, 5)]).unwrap(), 261);
        assert_eq!(packet_size_of([(1, 1)]).unwrap(), 41);

        let huge = vec![(u16::MAX, u16::MAX); 300];
        assert!(matches!(
            packet_size_of(huge),
            Err(EncodeError::PacketTooLarge { .. })
        ));
    }

    #[test]
    fn fixed_header_preread() {
        let bytes = eeg_bp_packet().encode().unwrap();
        let header = FixedHeader::parse(&bytes[..33]).unwrap();
        assert_eq!(header.version, 3);
        assert_eq!(header.packet_size, 261);
        assert_eq!(header.flags, SignalMask(0x21));
        assert_eq!(header.packet_id, 7);
        assert_eq!(header.connection_packet_number, 1);
        assert_eq!(header.timestamp_micros, 123_456);

        let empty = DataPacket::default().encode().unwrap();
        let header = FixedHeader::parse(&empty).unwrap();
        assert_eq!((header.packet_size, header.flags), (33, SignalMask::EMPTY));
    }

    #[test]
    fn version_errors() {
        let mut bytes = DataPacket::default().encode().unwrap();
        bytes[0] = 2;
        assert_eq!(
            DataPacket::decode(&bytes),
            Err(DecodeError::UnsupportedVersion { found: 2 })
        );
        bytes[0] = 10;
        assert_eq!(DataPacket::decode(&bytes), Err(DecodeError::ReservedVersionTen));
        assert_eq!(FixedHeader::parse(&bytes), Err(DecodeError::ReservedVersionTen));
        let text = DecodeError::ReservedVersionTen.to_string();
        assert!(text.contains("10") && text.contains("reserved"));
    }

    #[test]
    fn size_field_errors() {
        let mut bytes = eeg_bp_packet().encode().unwrap();
        bytes[1..5].copy_from_slice(&260u32.to_le_bytes());
        assert_eq!(
            DataPacket::decode(&bytes),
            Err(DecodeError::SizeMismatch { declared: 260, actual: 261 })
        );

        let mut bytes = DataPacket::default().encode().unwrap();
        bytes[1..5].copy_from_slice(&32u32.to_le_bytes());
        assert_eq!(DataPacket::decode(&bytes), Err(DecodeError::SizeFieldTooSmall { declared: 32 }));

        let mut bytes = DataPacket::default().encode().unwrap();
        bytes[1..5].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            DataPacket::decode(&bytes),
            Err(DecodeError::SizeFieldTooLarge { .. })
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = eeg_bp_packet().encode().unwrap();
        assert_eq!(
            DataPacket::decode(&bytes[..32]),
            Err(DecodeError::Truncated { needed: 33, available: 32 })
        );
        assert_eq!(
            DataPacket::decode(&bytes[..100]),
            Err(DecodeError::SizeMismatch { declared: 261, actual: 100 })
        );
        let mut extended = bytes.clone();
        extended.push(0);
        assert_eq!(
            DataPacket::decode(&extended),
            Err(DecodeError::SizeMismatch { declared: 261, actual: 262 })
        );
    }

    #[test]
    fn variable_header_must_sum_to_size_field() {
        let mut bytes = eeg_bp_packet().encode().unwrap();
        // Claim 4 channels for eeg: structure now needs more than 261 bytes.
        bytes[33] = 4;
        assert_eq!(
            DataPacket::decode(&bytes),
            Err(DecodeError::SizeMismatch { declared: 261, actual: 301 })
        );
    }

    #[test]
    fn invalid_mask_is_rejected_strictly_and_skipped_leniently() {
        // eeg (1 ch x 2) plus unassigned bit 0x2000 (3 ch x 1).
        let bytes = assemble_by_hand(
            0,
            0,
            0,
            &[
                (0x1, 1, 2, vec![1.5, -2.5]),
                (0x2000, 3, 1, vec![9.0, 9.0, 9.0]),
            ],
        );
        assert!(matches!(DataPacket::decode(&bytes), Err(DecodeError::InvalidMask(_))));

        let lenient = DecodeOptions { lenient_flags: true, ..DecodeOptions::default() };
        let packet = DataPacket::decode_with(&bytes, &lenient).unwrap();
        assert_eq!(packet.blocks.len(), 1);
        assert_eq!(packet.blocks[0].signal, SignalType::Eeg);
        assert_eq!(packet.blocks[0].samples, vec![1.5, -2.5]);
    }

    #[test]
    fn encode_rejects_invariant_violations() {
        let unsorted = DataPacket {
            blocks: vec![
                SignalBlock::new(SignalType::Bp, 1, 1, vec![0.0]),
                SignalBlock::new(SignalType::Eeg, 1, 1, vec![0.0]),
            ],
            ..DataPacket::default()
        };
        assert!(matches!(unsorted.encode(), Err(EncodeError::BlocksNotSorted { index: 1 })));

        let duplicate = DataPacket {
            blocks: vec![
                SignalBlock::new(SignalType::Eeg, 1, 1, vec![0.0]),
                SignalBlock::new(SignalType::Eeg, 1, 1, vec![0.0]),
            ],
            ..DataPacket::default()
        };
        assert!(duplicate.encode().is_err());

        let mismatch = DataPacket {
            blocks: vec![SignalBlock::new(SignalType::Eeg, 2, 3, vec![0.0; 5])],
            ..DataPacket::default()
        };
        assert!(matches!(
            mismatch.encode(),
            Err(EncodeError::SampleCountMismatch { expected: 6, actual: 5, .. })
        ));
    }

    #[test]
    fn zero_sized_blocks_are_legal() {
        let packet = DataPacket {
            blocks: vec![
                SignalBlock::new(SignalType::Eeg, 0, 10, vec![]),
                SignalBlock::new(SignalType::Button, 2, 0, vec![]),
            ],
            ..DataPacket::default()
        };
        let bytes = packet.encode().unwrap();
        assert_eq!(bytes.len(), 33 + 8);
        assert_eq!(DataPacket::decode(&bytes).unwrap(), packet);
    }

    #[test]
    fn nan_and_infinity_round_trip_bit_exactly() {
        let weird = [f32::from_bits(0x7FC0_0001), f32::INFINITY, f32::NEG_INFINITY, -0.0];
        let packet = DataPacket {
            blocks: vec![SignalBlock::new(SignalType::Hr, 1, 4, weird.to_vec())],
            ..DataPacket::default()
        };
        let bytes = packet.encode().unwrap();
        let decoded = DataPacket::decode(&bytes).unwrap();
        let bits: Vec<u32> = decoded.blocks[0].samples.iter().map(|s| s.to_bits()).collect();
        assert_eq!(bits, weird.iter().map(|s| s.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn channel_samples_are_channel_major() {
        let packet = eeg_bp_packet();
        assert_eq!(packet.blocks[0].channel_samples(2), &packet.blocks[0].samples[10..20]);
    }

    prop_compose! {
        fn arb_sample()(bits in any::<u32>().prop_filter("NaN", |b| !f32::from_bits(*b).is_nan())) -> f32 {
            f32::from_bits(bits)
        }
    }

    fn arb_packet() -> impl Strategy<Value = DataPacket> {
        let block = (0u16..=16, 0u16..=32).prop_flat_map(|(ch, bs)| {
            let count = ch as usize * bs as usize;
            (Just(ch), Just(bs), prop::collection::vec(arb_sample(), count))
        });
        (
            proptest::sample::subsequence(ALL_SIGNAL_TYPES.to_vec(), 0..=6),
            any::<u64>(),
            any::<u64>(),
            any::<u64>(),
        )
            .prop_flat_map(move |(signals, id, number, ts)| {
                let blocks = prop::collection::vec(block.clone(), signals.len()).prop_map(move |dims| {
                    signals
                        .iter()
                        .zip(dims)
                        .map(|(&signal, (ch, bs, samples))| SignalBlock::new(signal, ch, bs, samples))
                        .collect::<Vec<_>>()
                });
                (Just(id), Just(number), Just(ts), blocks)
            })
            .prop_map(|(packet_id, connection_packet_number, timestamp_micros, blocks)| DataPacket {
                packet_id,
                connection_packet_number,
                timestamp_micros,
                blocks,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn round_trip_is_bit_exact(packet in arb_packet()) {
            let bytes = packet.encode().unwrap();
            prop_assert_eq!(bytes.len() as u32, packet.wire_size().unwrap());
            prop_assert_eq!(&bytes[1..5], &(bytes.len() as u32).to_le_bytes());

            let decoded = DataPacket::decode(&bytes).unwrap();
            prop_assert_eq!(&decoded, &packet);
            // Re-encoding proves bit-exactness beyond f32 equality.
            prop_assert_eq!(decoded.encode().unwrap(), bytes);
        }

        #[test]
        fn decode_never_panics_on_garbage(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            let _ = DataPacket::decode(&bytes);
            let _ = FixedHeader::parse(&bytes);
        }
    }
}
