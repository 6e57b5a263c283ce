import struct
import zlib

import numpy as np
import pytest


def write_png(path, rows, color_type, bit_depth=8):
    """Minimal PNG writer (filter 0 on every scanline), independent of Pillow.

    ``rows`` is a list of lists of channel samples per pixel, flattened.
    """
    height = len(rows)
    channels = {0: 1, 2: 3, 4: 2, 6: 4}[color_type]
    width = len(rows[0]) // channels
    fmt = ">%d%s" % (width * channels, "B" if bit_depth == 8 else "H")
    raw = b"".join(b"\x00" + struct.pack(fmt, *r) for r in rows)

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(b"\x89PNG\r\n\x1a\n")
        fh.write(chunk(b"IHDR", ihdr))
        fh.write(chunk(b"IDAT", zlib.compress(raw)))
        fh.write(chunk(b"IEND", b""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def png_writer():
    return write_png


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
