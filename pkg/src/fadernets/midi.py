"""Standard MIDI File (format 0/1) note extraction.

Parses the byte stream directly: tracks are merged chronologically,
note-ons (velocity > 0) pair with the next matching note-off or
zero-velocity note-on on the same channel and pitch, ticks convert to
beats via the header division.  Everything else is skipped.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MalformedMidi

_HEADER_MAGIC = b"MThd"
_TRACK_MAGIC = b"MTrk"


@dataclass
class MidiNotes:
    notes: list[tuple[int, float, float]]  # (pitch, onset_beats, duration_beats)
    total_beats: float
    unterminated: int  # note-ons force-closed at end of file


class _Reader:
    def __init__(self, data: bytes, pos: int, end: int):
        self.data = data
        self.pos = pos
        self.end = end

    def u8(self) -> int:
        if self.pos >= self.end:
            raise MalformedMidi("unexpected end of track data")
        value = self.data[self.pos]
        self.pos += 1
        return value

    def skip(self, n: int) -> None:
        if self.pos + n > self.end:
            raise MalformedMidi("event data runs past the track end")
        self.pos += n

    def vlq(self) -> int:
        """Variable-length quantity, at most four bytes."""
        value = 0
        for _ in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MalformedMidi("variable-length quantity longer than four bytes")

    def done(self) -> bool:
        return self.pos >= self.end


def _parse_track(data: bytes, start: int, end: int):
    """Yield (tick, kind, channel, pitch, velocity) note events in file order."""
    reader = _Reader(data, start, end)
    tick = 0
    status = 0
    while not reader.done():
        tick += reader.vlq()
        byte = reader.u8()
        if byte < 0x80:
            if status == 0:
                raise MalformedMidi("data byte with no running status")
            reader.pos -= 1
        else:
            status = byte
        if status in (0xF0, 0xF7):  # sysex cancels running status
            length = reader.vlq()
            reader.skip(length)
            status = 0
            continue
        if status == 0xFF:
            meta_type = reader.u8()
            length = reader.vlq()
            reader.skip(length)
            if meta_type == 0x2F:  # end of track
                return
            status = 0
            continue
        kind = status & 0xF0
        channel = status & 0x0F
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            a, b = reader.u8(), reader.u8()
        elif kind in (0xC0, 0xD0):
            a, b = reader.u8(), 0
        else:
            raise MalformedMidi(f"unknown status byte 0x{status:02x}")
        if kind == 0x90 and b > 0:
            yield tick, "on", channel, a, b
        elif kind == 0x80 or (kind == 0x90 and b == 0):
            yield tick, "off", channel, a, b


def midi_to_notes(data: bytes) -> MidiNotes:
    """Extract merged, beat-timed notes from SMF bytes."""
    if len(data) < 14 or data[:4] != _HEADER_MAGIC:
        raise MalformedMidi("missing MThd header chunk")
    header_len, fmt, n_tracks, division = struct.unpack(">IHHH", data[4:14])
    if header_len < 6:
        raise MalformedMidi(f"header length {header_len} too short")
    if fmt not in (0, 1):
        raise MalformedMidi(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise MalformedMidi("SMPTE time division is not supported")
    if division == 0:
        raise MalformedMidi("zero ticks-per-quarter division")

    events: list[tuple[int, int, int, str, int, int]] = []
    pos = 8 + header_len
    tracks_seen = 0
    order = 0
    while pos + 8 <= len(data) and tracks_seen < n_tracks:
        magic = data[pos : pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        body_start = pos + 8
        body_end = body_start + length
        if body_end > len(data):
            raise MalformedMidi("track chunk runs past end of file")
        if magic == _TRACK_MAGIC:
            tracks_seen += 1
            for tick, kind, channel, pitch, velocity in _parse_track(
                data, body_start, body_end
            ):
                # Offs sort ahead of ons at the same tick so a re-strike
                # closes the previous note first.
                events.append((tick, 0 if kind == "off" else 1, order, kind, channel, pitch))
                order += 1
        pos = body_end
    if tracks_seen == 0:
        raise MalformedMidi("no MTrk chunks found")

    events.sort(key=lambda e: (e[0], e[1], e[2]))
    open_notes: dict[tuple[int, int], list[int]] = {}
    raw: list[tuple[int, int, int]] = []  # (pitch, onset_tick, end_tick)
    max_tick = 0
    for tick, _, _, kind, channel, pitch in events:
        max_tick = max(max_tick, tick)
        key = (channel, pitch)
        if kind == "on":
            open_notes.setdefault(key, []).append(tick)
        else:
            starts = open_notes.get(key)
            if starts:
                onset = starts.pop(0)
                if tick > onset:
                    raw.append((pitch, onset, tick))

    unterminated = 0
    for (channel, pitch), starts in open_notes.items():
        for onset in starts:
            unterminated += 1
            if max_tick > onset:
                raw.append((pitch, onset, max_tick))

    notes = [
        (pitch, onset / division, (end - onset) / division) for pitch, onset, end in raw
    ]
    notes.sort(key=lambda n: (n[1], n[0]))
    return MidiNotes(notes=notes, total_beats=max_tick / division, unterminated=unterminated)
