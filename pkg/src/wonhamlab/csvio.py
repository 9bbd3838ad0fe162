"""Deterministic CSV writing shared by the experiment artifacts.

Floats are rendered with repr (shortest round-trip form), so a rerun with
the same seed produces byte-identical files.
"""

from __future__ import annotations

import io
from pathlib import Path


def format_value(x) -> str:
    if isinstance(x, float):
        # numpy float scalars subclass float; strip to the plain repr
        return repr(float(x))
    if hasattr(x, "dtype"):
        if x.dtype.kind == "f":
            return repr(float(x))
        if x.dtype.kind in "iu":
            return str(int(x))
        if x.dtype.kind == "b":
            return str(bool(x))
    return str(x)


def write_csv(target, header, rows) -> None:
    """Write rows (iterable of tuples) under a header line.

    target may be a path or an open text file. Line endings are fixed to
    LF regardless of platform.
    """
    def _emit(fp):
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join(format_value(x) for x in row) + "\n")

    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="\n") as fp:
            _emit(fp)
    else:
        _emit(target)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue().encode("utf-8")
