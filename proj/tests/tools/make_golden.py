#!/usr/bin/env python3
"""Writes the golden TETD/TEMK files in tests/data from first principles."""
import math
import pathlib
import struct

HERE = pathlib.Path(__file__).resolve().parent.parent / "data"


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def bits(n, on):
    out = bytearray((n + 7) // 8)
    for i in on:
        out[i // 8] |= 0x80 >> (i % 8)
    return bytes(out)


def name(s):
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def tetd():
    entries = [
        ("w", 0, 2, 3, struct.pack("<6f", 1.0, -2.5, 3.25, 0.0, 1e-3, -7.0)),
        ("d", 1, 1, 2, struct.pack("<2d", math.pi, -0.1)),
        ("m", 2, 3, 3, bits(9, [0, 4, 8])),
    ]
    out = b"TETD" + struct.pack("<II", 1, len(entries))
    for n, tag, r, c, payload in entries:
        out += name(n) + struct.pack("<BII", tag, r, c) + payload
    return out


def temk():
    layers = [("layer0", 2, 5, [1, 3, 9]), ("layer1", 1, 3, [0, 2])]
    out = b"TEMK" + struct.pack("<II", 1, len(layers))
    for n, r, c, on in layers:
        out += name(n) + struct.pack("<II", r, c) + bits(r * c, on)
    return out


if __name__ == "__main__":
    HERE.mkdir(parents=True, exist_ok=True)
    for fname, data in (("golden.tetd", tetd()), ("golden.temk", temk())):
        (HERE / fname).write_bytes(data)
        print(f"{fname}: {len(data)} bytes fnv1a64=0x{fnv1a64(data):016X}")
