//! Standard MIDI File ingestion.
//!
//! Only what alignment needs is kept: note-on onsets (velocity > 0) in
//! absolute seconds, with the tempo map fully resolved. Note-offs are read to
//! establish the performance duration and are otherwise discarded.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub onset_sec: f64,
    pub pitch: u8,
    pub track: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MidiPerformance {
    /// Sorted by onset, ties by pitch.
    pub events: Vec<NoteEvent>,
    /// Latest of the last onset and the last note-off.
    pub duration_sec: f64,
}

impl MidiPerformance {
    pub fn new(mut events: Vec<NoteEvent>, duration_sec: f64) -> Self {
        sort_events(&mut events);
        let last = events.last().map_or(0.0, |e| e.onset_sec);
        MidiPerformance {
            events,
            duration_sec: duration_sec.max(last),
        }
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.events.is_empty() {
            Err(Error::EmptyPerformance)
        } else {
            Ok(())
        }
    }
}

fn sort_events(events: &mut [NoteEvent]) {
    events.sort_by(|a, b| {
        a.onset_sec
            .total_cmp(&b.onset_sec)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.track.cmp(&b.track))
    });
}

/// Notes sharing one bootleg column.
#[derive(Debug, Clone, PartialEq)]
pub struct ChordGroup {
    pub onset_sec: f64,
    /// Ascending, without duplicates.
    pub pitches: Vec<u8>,
}

/// Groups onsets that fall within `epsilon_sec` of the first onset of the
/// current group. Grouping is anchored at the group start, so a slow run of
/// onsets does not chain into one group.
pub fn merge_simultaneous(perf: &MidiPerformance, epsilon_sec: f64) -> Vec<ChordGroup> {
    let mut groups: Vec<ChordGroup> = Vec::new();
    for event in &perf.events {
        match groups.last_mut() {
            Some(g) if event.onset_sec - g.onset_sec <= epsilon_sec => {
                if let Err(pos) = g.pitches.binary_search(&event.pitch) {
                    g.pitches.insert(pos, event.pitch);
                }
            }
            _ => groups.push(ChordGroup {
                onset_sec: event.onset_sec,
                pitches: vec![event.pitch],
            }),
        }
    }
    groups
}

/// Tick to second conversion for one file.
#[derive(Debug, Clone, PartialEq)]
pub enum TempoMap {
    Metrical {
        ticks_per_quarter: u16,
        /// Sorted by tick; the first segment starts at tick 0.
        segments: Vec<TempoSegment>,
    },
    /// SMPTE division: a fixed number of seconds per tick, tempo events ignored.
    Timecode { seconds_per_tick: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoSegment {
    pub tick: u64,
    pub seconds: f64,
    pub micros_per_quarter: u32,
}

const DEFAULT_TEMPO: u32 = 500_000;

impl TempoMap {
    fn metrical(ticks_per_quarter: u16, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        let mut segments = vec![TempoSegment {
            tick: 0,
            seconds: 0.0,
            micros_per_quarter: DEFAULT_TEMPO,
        }];
        for (tick, tempo) in changes {
            let last = *segments.last().unwrap();
            if tick == last.tick {
                segments.last_mut().unwrap().micros_per_quarter = tempo;
                continue;
            }
            let seconds = last.seconds
                + (tick - last.tick) as f64 * last.micros_per_quarter as f64
                    / (1e6 * ticks_per_quarter as f64);
            segments.push(TempoSegment {
                tick,
                seconds,
                micros_per_quarter: tempo,
            });
        }
        TempoMap::Metrical {
            ticks_per_quarter,
            segments,
        }
    }

    pub fn ticks_to_seconds(&self, tick: u64) -> f64 {
        match self {
            TempoMap::Timecode { seconds_per_tick } => tick as f64 * seconds_per_tick,
            TempoMap::Metrical {
                ticks_per_quarter,
                segments,
            } => {
                let idx = segments.partition_point(|s| s.tick <= tick) - 1;
                let seg = segments[idx];
                seg.seconds
                    + (tick - seg.tick) as f64 * seg.micros_per_quarter as f64
                        / (1e6 * *ticks_per_quarter as f64)
            }
        }
    }

    /// Inverse of [`TempoMap::ticks_to_seconds`], rounded to the nearest tick.
    pub fn seconds_to_ticks(&self, seconds: f64) -> u64 {
        match self {
            TempoMap::Timecode { seconds_per_tick } => (seconds / seconds_per_tick).round() as u64,
            TempoMap::Metrical {
                ticks_per_quarter,
                segments,
            } => {
                let idx = segments.partition_point(|s| s.seconds <= seconds).max(1) - 1;
                let seg = segments[idx];
                let ticks = (seconds - seg.seconds) * 1e6 * *ticks_per_quarter as f64
                    / seg.micros_per_quarter as f64;
                seg.tick + ticks.max(0.0).round() as u64
            }
        }
    }
}

/// Raw note and tempo content of a file, still in ticks.
#[derive(Debug, Clone)]
pub struct MidiFile {
    pub format: u16,
    pub tempo_map: TempoMap,
    /// (tick, pitch, track) for every note-on with velocity > 0.
    pub note_ons: Vec<(u64, u8, u16)>,
    /// Tick of the latest note-off (or zero-velocity note-on), if any.
    pub last_note_off: Option<u64>,
}

impl MidiFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let (id, len) = r.chunk_header()?;
        if &id != b"MThd" {
            return Err(r.error_at(0, "missing MThd header"));
        }
        if len < 6 {
            return Err(r.error_at(4, "header chunk shorter than 6 bytes"));
        }
        let header_start = r.pos;
        let format = r.u16()?;
        let ntracks = r.u16()?;
        let division = r.u16()?;
        r.skip(len as usize - 6, header_start)?;

        if format == 2 {
            return Err(Error::UnsupportedMidiFormat(2));
        }
        if format > 2 {
            return Err(r.error_at(header_start, format!("unknown format {format}")));
        }

        let mut tempo_changes = Vec::new();
        let mut note_ons = Vec::new();
        let mut last_note_off = None;
        let mut track_index = 0u16;
        while track_index < ntracks {
            let chunk_start = r.pos;
            let (id, len) = r.chunk_header()?;
            let body_start = r.pos;
            let end = body_start
                .checked_add(len as usize)
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| r.error_at(chunk_start, "chunk length runs past end of file"))?;
            if &id != b"MTrk" {
                // Unknown chunk types are skipped.
                r.pos = end;
                continue;
            }
            let mut track = Reader {
                bytes: &bytes[..end],
                pos: body_start,
            };
            parse_track(
                &mut track,
                track_index,
                &mut tempo_changes,
                &mut note_ons,
                &mut last_note_off,
            )?;
            r.pos = end;
            track_index += 1;
        }

        let tempo_map = if division & 0x8000 != 0 {
            let fps = match (division >> 8) as u8 as i8 {
                -24 => 24.0,
                -25 => 25.0,
                -29 => 29.97,
                -30 => 30.0,
                other => {
                    return Err(r.error_at(12, format!("invalid SMPTE frame rate {other}")));
                }
            };
            let ticks_per_frame = (division & 0xff) as f64;
            if ticks_per_frame == 0.0 {
                return Err(r.error_at(12, "zero ticks per frame"));
            }
            TempoMap::Timecode {
                seconds_per_tick: 1.0 / (fps * ticks_per_frame),
            }
        } else {
            if division == 0 {
                return Err(r.error_at(12, "zero ticks per quarter note"));
            }
            TempoMap::metrical(division, tempo_changes)
        };

        Ok(MidiFile {
            format,
            tempo_map,
            note_ons,
            last_note_off,
        })
    }

    pub fn to_performance(&self) -> MidiPerformance {
        let events = self
            .note_ons
            .iter()
            .map(|&(tick, pitch, track)| NoteEvent {
                onset_sec: self.tempo_map.ticks_to_seconds(tick),
                pitch,
                track,
            })
            .collect();
        let end = self
            .last_note_off
            .map_or(0.0, |t| self.tempo_map.ticks_to_seconds(t));
        MidiPerformance::new(events, end)
    }
}

/// Parses SMF bytes (format 0 or 1) into note onsets in seconds.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiPerformance> {
    Ok(MidiFile::parse(bytes)?.to_performance())
}

pub fn load_midi(path: &std::path::Path) -> Result<MidiPerformance> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_midi(&bytes)
}

fn parse_track(
    r: &mut Reader<'_>,
    track: u16,
    tempo_changes: &mut Vec<(u64, u32)>,
    note_ons: &mut Vec<(u64, u8, u16)>,
    last_note_off: &mut Option<u64>,
) -> Result<()> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while r.pos < r.bytes.len() {
        tick += r.varint()? as u64;
        let event_start = r.pos;
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| r.error_at(event_start, "data byte without running status"))?
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.varint()? as usize;
                let data_start = r.pos;
                let data = r.take(len, data_start)?;
                match kind {
                    0x2f => return Ok(()),
                    0x51 => {
                        if len != 3 {
                            return Err(r.error_at(data_start, "set-tempo event must carry 3 bytes"));
                        }
                        let tempo = u32::from(data[0]) << 16 | u32::from(data[1]) << 8 | u32::from(data[2]);
                        if tempo == 0 {
                            return Err(r.error_at(data_start, "zero tempo"));
                        }
                        tempo_changes.push((tick, tempo));
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.varint()? as usize;
                let start = r.pos;
                r.skip(len, start)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let kind = status & 0xf0;
                let a = r.data_byte()?;
                let b = if matches!(kind, 0xc0 | 0xd0) {
                    0
                } else {
                    r.data_byte()?
                };
                match kind {
                    0x90 if b > 0 => note_ons.push((tick, a, track)),
                    0x90 | 0x80 => *last_note_off = Some(last_note_off.map_or(tick, |t| t.max(tick))),
                    _ => {}
                }
            }
            _ => {
                return Err(r.error_at(event_start, format!("unexpected status byte {status:#04x}")));
            }
        }
    }
    // A track without an end-of-track meta event is tolerated.
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::MidiParse {
            offset,
            reason: reason.into(),
        }
    }

    fn truncated(&self) -> Error {
        self.error_at(self.pos, "unexpected end of data")
    }

    fn u8(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(b)
    }

    fn data_byte(&mut self) -> Result<u8> {
        let at = self.pos;
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(self.error_at(at, format!("expected data byte, found {b:#04x}")));
        }
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from(self.u8()?) << 8 | u16::from(self.u8()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from(self.u16()?) << 16 | u32::from(self.u16()?))
    }

    fn take(&mut self, len: usize, start: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.error_at(start, format!("{len}-byte field runs past end of data")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn skip(&mut self, len: usize, start: usize) -> Result<()> {
        self.take(len, start).map(|_| ())
    }

    fn chunk_header(&mut self) -> Result<([u8; 4], u32)> {
        let start = self.pos;
        if self.bytes.len() < start + 8 {
            return Err(self.error_at(start, "truncated chunk header"));
        }
        let mut id = [0u8; 4];
        id.copy_from_slice(&self.bytes[start..start + 4]);
        self.pos += 4;
        let len = self.u32()?;
        Ok((id, len))
    }

    fn varint(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(self.error_at(start, "variable-length quantity longer than 4 bytes"))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn varint(mut v: u32, out: &mut Vec<u8>) {
        let mut buf = vec![(v & 0x7f) as u8];
        v >>= 7;
        while v > 0 {
            buf.push((v & 0x7f) as u8 | 0x80);
            v >>= 7;
        }
        out.extend(buf.iter().rev());
    }

    /// Hand-assembled SMF: `events` are (delta ticks, raw event bytes).
    pub(crate) fn smf(format: u16, division: u16, tracks: &[Vec<(u32, Vec<u8>)>]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend(6u32.to_be_bytes());
        out.extend(format.to_be_bytes());
        out.extend((tracks.len() as u16).to_be_bytes());
        out.extend(division.to_be_bytes());
        for track in tracks {
            let mut body = Vec::new();
            for (delta, bytes) in track {
                varint(*delta, &mut body);
                body.extend(bytes);
            }
            body.extend([0x00, 0xff, 0x2f, 0x00]);
            out.extend(b"MTrk");
            out.extend((body.len() as u32).to_be_bytes());
            out.extend(body);
        }
        out
    }

    fn tempo(us: u32) -> Vec<u8> {
        vec![0xff, 0x51, 0x03, (us >> 16) as u8, (us >> 8) as u8, us as u8]
    }

    #[test]
    fn onset_at_two_quarters() {
        let bytes = smf(
            0,
            480,
            &[vec![(0, tempo(500_000)), (960, vec![0x90, 60, 100]), (480, vec![0x80, 60, 0])]],
        );
        let perf = parse_midi(&bytes).unwrap();
        assert_eq!(perf.events.len(), 1);
        assert_eq!(perf.events[0].pitch, 60);
        assert!((perf.events[0].onset_sec - 1.0).abs() < 1e-12);
        assert!((perf.duration_sec - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tempo_change_is_integrated_piecewise() {
        let bytes = smf(
            0,
            480,
            &[vec![
                (0, tempo(500_000)),
                (480, tempo(250_000)),
                (480, vec![0x90, 60, 100]),
            ]],
        );
        let perf = parse_midi(&bytes).unwrap();
        assert!((perf.events[0].onset_sec - 0.75).abs() < 1e-12);
    }

    #[test]
    fn tempo_in_conductor_track_applies_to_other_tracks() {
        let bytes = smf(
            1,
            480,
            &[
                vec![(0, tempo(1_000_000))],
                vec![(480, vec![0x90, 64, 90]), (0, vec![64, 0])],
            ],
        );
        let perf = parse_midi(&bytes).unwrap();
        assert_eq!(perf.events.len(), 1);
        assert_eq!(perf.events[0].track, 1);
        assert!((perf.events[0].onset_sec - 1.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_zero_only_yields_empty_performance() {
        let bytes = smf(0, 480, &[vec![(0, vec![0x90, 60, 0]), (10, vec![0x90, 62, 0])]]);
        let perf = parse_midi(&bytes).unwrap();
        assert!(perf.events.is_empty());
        assert!(matches!(perf.ensure_nonempty(), Err(Error::EmptyPerformance)));
    }

    #[test]
    fn running_status_and_sysex() {
        let bytes = smf(
            0,
            96,
            &[vec![
                (0, vec![0xf0, 0x02, 0x7e, 0xf7]),
                (0, vec![0x90, 60, 80]),
                (0, vec![64, 80]),
                (96, vec![0xb0, 64, 127]),
                (0, vec![0xc0, 5]),
                (0, vec![0x90, 67, 80]),
            ]],
        );
        let perf = parse_midi(&bytes).unwrap();
        let pitches: Vec<u8> = perf.events.iter().map(|e| e.pitch).collect();
        assert_eq!(pitches, vec![60, 64, 67]);
        assert!((perf.events[2].onset_sec - 0.5).abs() < 1e-12);
    }

    #[test]
    fn format_two_is_rejected() {
        let bytes = smf(2, 480, &[vec![]]);
        assert!(matches!(parse_midi(&bytes), Err(Error::UnsupportedMidiFormat(2))));
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = smf(0, 480, &[vec![]]);
        bytes[0] = b'X';
        assert!(matches!(parse_midi(&bytes), Err(Error::MidiParse { offset: 0, .. })));
    }

    #[test]
    fn truncated_track_reports_chunk_offset() {
        let mut bytes = smf(0, 480, &[vec![(0, vec![0x90, 60, 100])]]);
        bytes.truncate(bytes.len() - 3);
        match parse_midi(&bytes) {
            Err(Error::MidiParse { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_running_status_is_an_error() {
        let bytes = smf(0, 480, &[vec![(0, vec![60, 100])]]);
        match parse_midi(&bytes) {
            Err(Error::MidiParse { offset, .. }) => assert_eq!(offset, 23),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn smpte_division() {
        // 25 fps, 40 ticks per frame: 1000 ticks per second.
        let division = ((-25i8 as u8 as u16) << 8) | 40;
        let bytes = smf(0, division, &[vec![(2500, vec![0x90, 70, 1])]]);
        let perf = parse_midi(&bytes).unwrap();
        assert!((perf.events[0].onset_sec - 2.5).abs() < 1e-12);
    }

    #[test]
    fn events_sorted_with_pitch_tiebreak() {
        let bytes = smf(
            1,
            480,
            &[
                vec![(0, vec![0x90, 72, 100])],
                vec![(0, vec![0x90, 48, 100])],
            ],
        );
        let perf = parse_midi(&bytes).unwrap();
        assert_eq!(perf.events[0].pitch, 48);
        assert_eq!(perf.events[1].pitch, 72);
    }

    fn perf_from_onsets(onsets: &[f64]) -> MidiPerformance {
        let events = onsets
            .iter()
            .enumerate()
            .map(|(i, &t)| NoteEvent {
                onset_sec: t,
                pitch: 60 + i as u8,
                track: 0,
            })
            .collect();
        MidiPerformance::new(events, 0.0)
    }

    #[test]
    fn merge_groups_close_onsets() {
        let groups = merge_simultaneous(&perf_from_onsets(&[0.0, 0.01, 0.5]), 0.05);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].onset_sec, 0.0);
        assert_eq!(groups[0].pitches.len(), 2);
        assert_eq!(groups[1].onset_sec, 0.5);
        assert_eq!(groups[1].pitches.len(), 1);
    }

    #[test]
    fn merge_with_zero_epsilon_keeps_distinct_onsets() {
        let groups = merge_simultaneous(&perf_from_onsets(&[0.0, 0.01, 0.02]), 0.0);
        assert_eq!(groups.len(), 3);
    }

    #[test]
    fn merge_is_anchored_at_group_start() {
        let groups = merge_simultaneous(&perf_from_onsets(&[0.0, 0.04, 0.08]), 0.05);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].pitches, vec![60, 61]);
        assert_eq!(groups[1].onset_sec, 0.08);
        assert_eq!(groups[1].pitches, vec![62]);
    }
}
