"""Standard MIDI File codec and GM drum extraction.

Reads and writes SMF formats 0 and 1 (PPQ division only) without any
third-party MIDI dependency, pulls note onsets off the GM percussion
channel (channel 10, stored zero-based as 9), and maps GM note numbers
onto the nine drum classes the rest of the toolkit works with.

Everything here is pure: no I/O, no shared state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

DRUM_CHANNEL = 9  # GM channel #10, zero-based

MAX_VLQ_BYTES = 4
MAX_VLQ_VALUE = (1 << 28) - 1

# Data-byte count per channel-message status nibble.
_CHANNEL_DATA_BYTES = {
    0x80: 2,  # note off
    0x90: 2,  # note on
    0xA0: 2,  # polyphonic aftertouch
    0xB0: 2,  # control change
    0xC0: 1,  # program change
    0xD0: 1,  # channel aftertouch
    0xE0: 2,  # pitch bend
}

META_END_OF_TRACK = 0x2F
META_TEMPO = 0x51


class MidiError(ValueError):
    """Malformed or unsupported Standard MIDI File data."""


class DrumClass(IntEnum):
    """The nine drum classes; index order is part of the tensor and file contract."""

    KICK = 0
    SNARE = 1
    HIHAT_CLOSED = 2
    HIHAT_OPEN = 3
    TOM_LOW = 4
    TOM_MID = 5
    TOM_HIGH = 6
    CLAP = 7
    RIM = 8

    @property
    def label(self) -> str:
        return self.name.lower()


NUM_DRUM_CLASSES = len(DrumClass)

_LABEL_TO_CLASS = {c.label: c for c in DrumClass}

# Default GM note-number table. The GM percussion map names more sounds
# than we model; anything not listed here is dropped on ingestion.
DEFAULT_DRUM_TABLE: dict[int, DrumClass] = {
    35: DrumClass.KICK,
    36: DrumClass.KICK,
    38: DrumClass.SNARE,
    40: DrumClass.SNARE,
    42: DrumClass.HIHAT_CLOSED,
    44: DrumClass.HIHAT_CLOSED,
    46: DrumClass.HIHAT_OPEN,
    41: DrumClass.TOM_LOW,
    43: DrumClass.TOM_LOW,
    45: DrumClass.TOM_LOW,
    47: DrumClass.TOM_MID,
    48: DrumClass.TOM_MID,
    50: DrumClass.TOM_HIGH,
    39: DrumClass.CLAP,
    37: DrumClass.RIM,
}

# One representative GM note per class, used when writing patterns back out.
# Chosen so that a written note maps back to the same class under the
# default table.
DEFAULT_OUTPUT_NOTES: dict[DrumClass, int] = {
    DrumClass.KICK: 36,
    DrumClass.SNARE: 38,
    DrumClass.HIHAT_CLOSED: 42,
    DrumClass.HIHAT_OPEN: 46,
    DrumClass.TOM_LOW: 45,
    DrumClass.TOM_MID: 48,
    DrumClass.TOM_HIGH: 50,
    DrumClass.CLAP: 39,
    DrumClass.RIM: 37,
}


@dataclass(frozen=True)
class DrumMap:
    """Total mapping note number -> drum class; unlisted numbers are unmapped."""

    table: dict[int, DrumClass] = field(default_factory=dict)

    @classmethod
    def default(cls) -> "DrumMap":
        return cls(dict(DEFAULT_DRUM_TABLE))

    def lookup(self, note_number: int) -> DrumClass | None:
        return self.table.get(note_number)

    def to_text(self) -> str:
        lines = [f"{note} {cls.label}" for note, cls in sorted(self.table.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DrumMap":
        """Parse the override file format: one `<note> <class>` pair per line.

        Blank lines and `#` comments are ignored. Unknown class names or
        out-of-range note numbers raise MidiError.
        """
        table: dict[int, DrumClass] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace("=", " ").split()
            if len(parts) != 2:
                raise MidiError(f"drum map line {lineno}: expected '<note> <class>', got {raw!r}")
            try:
                note = int(parts[0])
            except ValueError:
                raise MidiError(f"drum map line {lineno}: bad note number {parts[0]!r}") from None
            if not 0 <= note <= 127:
                raise MidiError(f"drum map line {lineno}: note {note} out of range 0-127")
            cls_name = parts[1].lower()
            if cls_name not in _LABEL_TO_CLASS:
                raise MidiError(
                    f"drum map line {lineno}: unknown class {parts[1]!r} "
                    f"(expected one of {', '.join(sorted(_LABEL_TO_CLASS))})"
                )
            table[note] = _LABEL_TO_CLASS[cls_name]
        return cls(table)


def map_note_to_class(note_number: int, drum_map: DrumMap) -> DrumClass | None:
    """Pure lookup; None for unmapped note numbers."""
    return drum_map.lookup(note_number)


# ---------------------------------------------------------------------------
# Event model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelEvent:
    """A channel voice message; status keeps its channel nibble."""

    delta: int
    status: int
    data: tuple[int, ...]

    @property
    def channel(self) -> int:
        return self.status & 0x0F

    @property
    def kind(self) -> int:
        return self.status & 0xF0


@dataclass(frozen=True)
class MetaEvent:
    """A meta event, payload kept opaque."""

    delta: int
    meta_type: int
    data: bytes


@dataclass(frozen=True)
class SysexEvent:
    """A sysex (0xF0/0xF7) event, payload kept opaque."""

    delta: int
    status: int
    data: bytes


TrackEvent = ChannelEvent | MetaEvent | SysexEvent


@dataclass
class MidiFile:
    format: int
    ppq: int
    tracks: list[list[TrackEvent]]


@dataclass(frozen=True, order=True)
class DrumNote:
    """A note onset on the GM drum channel, in absolute ticks from song start."""

    tick: int
    note_number: int
    velocity: int
    channel: int = DRUM_CHANNEL


# ---------------------------------------------------------------------------
# Variable-length quantities
# ---------------------------------------------------------------------------


def read_vlq(data: bytes, pos: int) -> tuple[int, int]:
    """Decode one variable-length quantity starting at ``pos``.

    Returns (value, next_pos). At most 4 bytes are consumed, so the value
    is always < 2**28.
    """
    value = 0
    for i in range(MAX_VLQ_BYTES):
        if pos + i >= len(data):
            raise MidiError("truncated variable-length quantity")
        byte = data[pos + i]
        value = (value << 7) | (byte & 0x7F)
        if byte & 0x80 == 0:
            return value, pos + i + 1
    raise MidiError("malformed variable-length quantity: more than 4 bytes")


def write_vlq(value: int) -> bytes:
    """Encode a non-negative integer < 2**28 as a variable-length quantity."""
    if value < 0 or value > MAX_VLQ_VALUE:
        raise MidiError(f"value {value} out of VLQ range [0, 2**28)")
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(chunks))


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _read_u16(data: bytes, pos: int) -> int:
    return int.from_bytes(data[pos : pos + 2], "big")


def _read_u32(data: bytes, pos: int) -> int:
    return int.from_bytes(data[pos : pos + 4], "big")


def _parse_track(chunk: bytes) -> list[TrackEvent]:
    events: list[TrackEvent] = []
    pos = 0
    running_status: int | None = None
    while True:
        if pos >= len(chunk):
            raise MidiError("track ends without End-of-Track meta event")
        delta, pos = read_vlq(chunk, pos)
        if pos >= len(chunk):
            raise MidiError("truncated track chunk")
        first = chunk[pos]

        if first == 0xFF:
            pos += 1
            if pos >= len(chunk):
                raise MidiError("truncated meta event")
            meta_type = chunk[pos]
            pos += 1
            length, pos = read_vlq(chunk, pos)
            if pos + length > len(chunk):
                raise MidiError("truncated meta event payload")
            payload = chunk[pos : pos + length]
            pos += length
            events.append(MetaEvent(delta, meta_type, payload))
            running_status = None
            if meta_type == META_END_OF_TRACK:
                return events
            continue

        if first in (0xF0, 0xF7):
            pos += 1
            length, pos = read_vlq(chunk, pos)
            if pos + length > len(chunk):
                raise MidiError("truncated sysex event payload")
            events.append(SysexEvent(delta, first, chunk[pos : pos + length]))
            pos += length
            running_status = None
            continue

        if first & 0x80:
            status = first
            pos += 1
            if status & 0xF0 == 0xF0:
                raise MidiError(f"unexpected status byte 0x{status:02X} in track")
            running_status = status
        else:
            if running_status is None:
                raise MidiError("data byte with no running status")
            status = running_status

        n_data = _CHANNEL_DATA_BYTES[status & 0xF0]
        if pos + n_data > len(chunk):
            raise MidiError("truncated channel message")
        data_bytes = chunk[pos : pos + n_data]
        if any(b & 0x80 for b in data_bytes):
            raise MidiError("channel message data byte has high bit set")
        pos += n_data
        events.append(ChannelEvent(delta, status, tuple(data_bytes)))


def parse_smf(data: bytes) -> MidiFile:
    """Parse a Standard MIDI File (formats 0 and 1, PPQ division)."""
    if len(data) < 14 or data[0:4] != b"MThd":
        raise MidiError("not a Standard MIDI File: missing MThd header")
    header_len = _read_u32(data, 4)
    if header_len < 6:
        raise MidiError(f"bad MThd length {header_len}")
    if len(data) < 8 + header_len:
        raise MidiError("truncated MThd header")
    fmt = _read_u16(data, 8)
    n_tracks = _read_u16(data, 10)
    division = _read_u16(data, 12)
    if fmt == 2:
        raise MidiError("SMF format 2 is not supported")
    if fmt not in (0, 1):
        raise MidiError(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise MidiError("SMPTE division is not supported; PPQ files only")
    if division == 0:
        raise MidiError("ticks-per-quarter must be positive")

    tracks: list[list[TrackEvent]] = []
    pos = 8 + header_len
    while len(tracks) < n_tracks:
        if pos + 8 > len(data):
            raise MidiError(f"expected {n_tracks} tracks, found {len(tracks)}")
        chunk_id = data[pos : pos + 4]
        chunk_len = _read_u32(data, pos + 4)
        pos += 8
        if pos + chunk_len > len(data):
            raise MidiError("truncated chunk")
        if chunk_id == b"MTrk":
            tracks.append(_parse_track(data[pos : pos + chunk_len]))
        # Alien chunks are skipped, per the SMF spec.
        pos += chunk_len

    return MidiFile(format=fmt, ppq=division, tracks=tracks)


def extract_drum_notes(midi: MidiFile) -> list[DrumNote]:
    """Collect note onsets on the GM drum channel across all tracks.

    Note-on with velocity 0 is a note-off and is dropped, as are all
    durations: the downstream model is onset-based. Output is sorted by
    (tick, note number).
    """
    notes: list[DrumNote] = []
    for track in midi.tracks:
        tick = 0
        for event in track:
            tick += event.delta
            if not isinstance(event, ChannelEvent):
                continue
            if event.channel != DRUM_CHANNEL or event.kind != 0x90:
                continue
            velocity = event.data[1]
            if velocity == 0:
                continue  # running-status note-off
            notes.append(DrumNote(tick=tick, note_number=event.data[0], velocity=velocity))
    notes.sort(key=lambda n: (n.tick, n.note_number))
    return notes


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    if x >= 0:
        return int(x + 0.5)
    return -int(-x + 0.5)


def _chunk(chunk_id: bytes, payload: bytes) -> bytes:
    return chunk_id + len(payload).to_bytes(4, "big") + payload


def write_smf(
    pattern,
    ppq: int = 480,
    tempo_bpm: float = 120.0,
    map_out: dict[DrumClass, int] | None = None,
) -> bytes:
    """Render a 32-step pattern as a format-0 SMF.

    Each onset becomes a channel-10 note-on at
    ``step * ppq/4 + round(offset * ppq/8)`` with a note-off one 16th
    later. An early hit at step 0 would land before tick 0, so it wraps to
    the end of the 2-bar loop, matching the sequencer's loop rule. Running
    status is never emitted. An empty pattern writes a valid file
    containing only the tempo and End-of-Track events.
    """
    if ppq < 96:
        raise MidiError(f"ppq {ppq} too small; need >= 96 for 32nd-note offsets")
    if tempo_bpm <= 0:
        raise MidiError("tempo must be positive")
    notes = map_out if map_out is not None else DEFAULT_OUTPUT_NOTES

    sixteenth = ppq / 4.0
    # (tick, order, status, note, velocity); note-offs sort before note-ons
    # at the same tick so back-to-back hits are not cut off.
    messages: list[tuple[int, int, int, int, int]] = []
    loop_ticks = 32 * round_half_away(sixteenth)
    for onset in pattern.onsets:
        note = notes[onset.drum]
        on_tick = round_half_away(onset.step * sixteenth + onset.offset * (ppq / 8.0))
        if on_tick < 0:
            on_tick += loop_ticks
        off_tick = on_tick + round_half_away(sixteenth)
        velocity = max(1, round_half_away(onset.velocity * 127.0))
        messages.append((on_tick, 1, 0x90 | DRUM_CHANNEL, note, velocity))
        messages.append((off_tick, 0, 0x80 | DRUM_CHANNEL, note, 0))
    messages.sort()

    track = bytearray()
    tempo_us = round_half_away(60_000_000.0 / tempo_bpm)
    track += b"\x00\xff\x51\x03" + tempo_us.to_bytes(3, "big")
    last_tick = 0
    for tick, _, status, note, velocity in messages:
        track += write_vlq(tick - last_tick)
        track += bytes((status, note, velocity))
        last_tick = tick
    track += b"\x00\xff\x2f\x00"

    header = (0).to_bytes(2, "big") + (1).to_bytes(2, "big") + ppq.to_bytes(2, "big")
    return _chunk(b"MThd", header) + _chunk(b"MTrk", bytes(track))
