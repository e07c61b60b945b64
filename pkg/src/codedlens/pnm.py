"""Binary PNM (P5 grayscale / P6 color) reading and writing.

Planes are float64 in [0, 1]; files store 8-bit or 16-bit (big-endian)
integer levels. Writing rounds half-up to integer levels scaled by the max
level; a 16-bit round trip therefore preserves values within 1/65535.
Readers reject malformed files with errors naming the byte offset.
"""

import numpy as np

from codedlens.errors import ParseError


def _tokenize_header(data):
    """Yield (token, offset) for the 4 header tokens, skipping comments."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        if pos >= len(data):
            raise ParseError("unexpected end of file inside header", offset=pos)
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append((data[start:pos], start))
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data):
        raise ParseError("missing payload after header", offset=pos)
    pos += 1
    return tokens, pos


def read_pnm(path):
    """Read a binary PNM file -> float64 array in [0,1]; (H,W) or (H,W,3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 2:
        raise ParseError("file too short for a PNM magic number", offset=0)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"bad magic {magic!r}, expected P5 or P6", offset=0)
    tokens, payload_at = _tokenize_header(data)
    values = []
    for tok, off in tokens[1:]:
        if not tok.isdigit():
            raise ParseError(f"non-numeric header token {tok!r}", offset=off)
        values.append(int(tok))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise ParseError(f"invalid extents {width}x{height}", offset=tokens[1][1])
    if maxval not in (255, 65535):
        raise ParseError(f"unsupported max level {maxval} (need 255 or 65535)",
                         offset=tokens[3][1])
    channels = 3 if magic == b"P6" else 1
    bytes_per = 2 if maxval == 65535 else 1
    expected = width * height * channels * bytes_per
    payload = data[payload_at:]
    if len(payload) != expected:
        raise ParseError(f"payload has {len(payload)} bytes, expected {expected}",
                         offset=payload_at)
    dtype = ">u2" if bytes_per == 2 else "u1"
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64) / maxval
    if channels == 1:
        return raw.reshape(height, width)
    return raw.reshape(height, width, 3)


def write_pnm(path, plane, maxval=65535):
    """Write a float64 plane in [0,1] as binary P5 (2-D) or P6 (H,W,3)."""
    plane = np.asarray(plane, dtype=np.float64)
    if maxval not in (255, 65535):
        raise ParseError(f"unsupported max level {maxval}")
    if plane.ndim == 2:
        magic, h, w = b"P5", *plane.shape
    elif plane.ndim == 3 and plane.shape[2] == 3:
        magic, h, w = b"P6", plane.shape[0], plane.shape[1]
    else:
        raise ParseError(f"unsupported plane shape {plane.shape}")
    levels = np.floor(np.clip(plane, 0.0, 1.0) * maxval + 0.5).astype(np.int64)
    dtype = ">u2" if maxval == 65535 else "u1"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(levels.astype(dtype).tobytes())
