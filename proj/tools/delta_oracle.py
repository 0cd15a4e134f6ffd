"""Byte-level decode of the delta times in the three-track test fixture.

Prints absolute tick and second values for every note so they can be frozen
into tests/unit/midi_test.cpp. Walks the raw bytes directly and knows only the
event layout used by the fixture.
"""

TPQ = 96
US_PER_QUARTER = 500000

TRACKS = [
    # conductor: tempo, time signature, end
    bytes([0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20,
           0x00, 0xFF, 0x58, 0x04, 0x03, 0x02, 0x18, 0x08,
           0x00, 0xFF, 0x2F, 0x00]),
    bytes([0x7F, 0x90, 0x3C, 0x40,
           0x81, 0x00, 0x80, 0x3C, 0x00,
           0x00, 0x90, 0x3E, 0x50,
           0x83, 0x60, 0x3E, 0x00,
           0x00, 0xFF, 0x2F, 0x00]),
    bytes([0x81, 0x80, 0x00, 0x91, 0x40, 0x60,
           0x60, 0x81, 0x40, 0x00,
           0xFF, 0x7F, 0x91, 0x43, 0x22,
           0x8F, 0xFF, 0xFF, 0x7F, 0x43, 0x00,
           0x00, 0xFF, 0x2F, 0x00]),
]


def vlq(buf, i):
    value = 0
    while True:
        b = buf[i]
        i += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, i


def notes(buf):
    i, tick, status, open_, out = 0, 0, None, {}, []
    while i < len(buf):
        delta, i = vlq(buf, i)
        tick += delta
        if buf[i] == 0xFF:
            length = buf[i + 2]
            i += 3 + length
            continue
        if buf[i] & 0x80:
            status = buf[i]
            i += 1
        key, vel = buf[i], buf[i + 1]
        i += 2
        if status & 0xF0 == 0x90 and vel > 0:
            open_[key] = (tick, vel)
        else:
            on, v = open_.pop(key)
            out.append((key, on, tick - on, v))
    return out


for n, track in enumerate(TRACKS):
    for key, on, length, vel in notes(track):
        sec = on * US_PER_QUARTER / TPQ / 1e6
        dur = length * US_PER_QUARTER / TPQ / 1e6
        print(f"track {n} pitch {key} on_tick {on} len_ticks {length} onset {sec!r} duration {dur!r} vel {vel}")
