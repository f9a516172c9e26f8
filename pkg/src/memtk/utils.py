"""Util functions for memtk."""

import io
import math
import os
import re
import tempfile
from itertools import islice
from os import PathLike
from pathlib import Path
from typing import IO

from loguru import logger

UINT64_MAX = 2**64 - 1

_UINT_RE = re.compile(r"[0-9]+")
_REAL_RE = re.compile(r"[+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")


def batched(iterable, n):
    """Implement batched iterator.

    https://docs.python.org/3/library/itertools.html#itertools.batched
    """
    it = iter(iterable)
    return iter(lambda: tuple(islice(it, n)), ())


def parse_uint(token: str) -> int | None:
    """Convert an ASCII decimal token to an unsigned 64-bit integer.

    Returns ``None`` when the token is not a plain run of ASCII digits or overflows 64 bits. Signs,
    underscores and non-ASCII digits, all of which ``int`` would happily accept, are rejected.
    """
    if len(token) > 20 or not _UINT_RE.fullmatch(token):
        return None
    value = int(token)
    if value > UINT64_MAX:
        logger.trace("Integer token {} exceeds 64 bits", token)
        return None
    return value


def parse_real(token: str) -> float | None:
    """Convert an ASCII decimal token to a float.

    Only plain decimal and exponent notation is accepted; ``nan``, ``inf`` and the other spellings
    ``float`` understands are not part of the file formats.
    """
    if not _REAL_RE.fullmatch(token):
        return None
    return float(token)


def format_real(value: float) -> str:
    """Return the shortest decimal string that reads back as exactly ``value``."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def format_nats(value: float) -> str:
    """Format a result value, writing integral values without a fractional part."""
    text = format_real(value)
    return text.removesuffix(".0")


def as_text_stream(source: "str | bytes | IO[str] | IO[bytes]") -> IO[str]:
    """Wrap any supported input into a text stream read line by line.

    Bytes are decoded as ASCII with replacement so that arbitrary input always reaches the tokenizer,
    which then reports the offending token instead of failing on the decoding.
    """
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, bytes | bytearray):
        return io.StringIO(bytes(source).decode("ascii", errors="replace"))
    if isinstance(source, io.TextIOBase):
        return source  # type: ignore[return-value]
    return io.TextIOWrapper(source, encoding="ascii", errors="replace")  # type: ignore[arg-type]


def atomic_write(fpath: str | PathLike, text: str) -> None:
    """Write ``text`` to ``fpath`` through a temporary file and a rename.

    A failure before the rename leaves any previous file untouched and no partial file behind.
    """
    fpath = Path(fpath)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{fpath.name}.", dir=fpath.parent)
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as f:
            f.write(text)
        os.replace(tmp_name, fpath)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.info("Saved {}", fpath)
