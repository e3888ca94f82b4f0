"""The universal payload type and its canonical text form.

A payload is a finite double-precision number, a (possibly nested) list of
payloads, or ``None`` meaning "no data". ``None`` is only legal as a whole
payload, never inside a list. The canonical text form writes numbers in their
shortest round-tripping notation, lists as bracketed comma-separated items,
and the absent payload as ``null``, with no whitespace anywhere. Every wire
message, RESULT line, and report embeds payloads in exactly this form.
"""

from __future__ import annotations

import math
import re
from typing import TypeAlias, Union

from .errors import ParseError, SerializationError, UsageError

Value: TypeAlias = Union[float, int, list["Value"], None]

# Tolerances used by all verification unless a caller overrides them.
DEFAULT_REL_TOL = 1e-9
DEFAULT_ABS_TOL = 1e-12

__all__ = [
    "Value",
    "DEFAULT_REL_TOL",
    "DEFAULT_ABS_TOL",
    "approx_eq",
    "dumps",
    "format_number",
    "loads",
    "validate_value",
]


def is_number(v: object) -> bool:
    """True for int/float payload leaves; bool is excluded on purpose."""
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_value(v: Value, _top: bool = True) -> None:
    """Raise SerializationError unless ``v`` is a well-formed payload."""
    if v is None:
        if not _top:
            raise SerializationError("absent payload (None) is not allowed inside a sequence")
        return
    if is_number(v):
        if isinstance(v, float):
            if not math.isfinite(v):
                raise SerializationError(f"non-finite number in payload: {v!r}")
        else:
            try:
                float(v)
            except OverflowError:
                raise SerializationError(f"integer too large for double precision: {v}") from None
        return
    if isinstance(v, list):
        for item in v:
            validate_value(item, _top=False)
        return
    raise SerializationError(f"unsupported payload element of type {type(v).__name__}")


def format_number(x: float | int) -> str:
    """Shortest text that parses back to exactly the same double.

    Integral doubles drop the fractional part when that is no longer than the
    float repr (so 2.0 -> "2" but 1e16 stays "1e+16"); -0.0 keeps its sign.
    """
    x = float(x)
    r = repr(x)
    if x.is_integer():
        if x == 0.0 and math.copysign(1.0, x) < 0.0:
            i = "-0"
        else:
            i = str(int(x))
        if len(i) <= len(r):
            return i
    return r


def dumps(v: Value) -> str:
    """Canonical text for a payload; deterministic for equal payloads."""
    validate_value(v)
    return _write(v)


def _write(v: Value) -> str:
    if v is None:
        return "null"
    if isinstance(v, list):
        return "[" + ",".join(_write(item) for item in v) + "]"
    return format_number(v)


_NUMBER = re.compile(rb"-?(?:0|[1-9][0-9]*)(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")


def loads(text: str | bytes) -> Value:
    """Parse canonical payload text; inverse of dumps on its outputs.

    All numbers come back as floats. Errors carry the offending byte offset.
    """
    if isinstance(text, str):
        try:
            data = text.encode("ascii")
        except UnicodeEncodeError as e:
            raise ParseError("non-ASCII byte in payload text", e.start) from None
    else:
        data = bytes(text)
    parser = _Parser(data)
    value = parser.parse_value(top=True)
    if parser.pos != len(data):
        raise ParseError("trailing data after payload", parser.pos)
    return value


class _Parser:
    """Recursive-descent parser for the payload grammar: number | list | null."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def parse_value(self, top: bool) -> Value:
        data, pos = self.data, self.pos
        if pos >= len(data):
            raise ParseError("unexpected end of input", pos)
        c = data[pos : pos + 1]
        if c == b"[":
            return self._parse_list()
        if data.startswith(b"null", pos):
            if not top:
                raise ParseError("null is only allowed as the whole payload", pos)
            self.pos = pos + 4
            return None
        m = _NUMBER.match(data, pos)
        if m is None:
            raise ParseError("expected a number, '[' or 'null'", pos)
        self.pos = m.end()
        x = float(m.group())
        if not math.isfinite(x):
            raise ParseError("number out of double-precision range", pos)
        return x

    def _parse_list(self) -> list:
        self.pos += 1  # past '['
        items: list[Value] = []
        if self.data[self.pos : self.pos + 1] == b"]":
            self.pos += 1
            return items
        while True:
            items.append(self.parse_value(top=False))
            c = self.data[self.pos : self.pos + 1]
            if c == b"]":
                self.pos += 1
                return items
            if c != b",":
                raise ParseError("expected ',' or ']' in sequence", self.pos)
            self.pos += 1


def approx_eq(
    a: Value,
    b: Value,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> bool:
    """Structural equality with per-number tolerance.

    True iff both payloads have the same shape and every corresponding number
    pair (x, y) satisfies |x - y| <= max(abs_tol, rel_tol * max(|x|, |y|)).
    Shape mismatch is False, never an error.
    """
    if rel_tol < 0 or abs_tol < 0:
        raise UsageError(f"tolerances must be non-negative, got rel={rel_tol} abs={abs_tol}")
    return _approx_eq(a, b, rel_tol, abs_tol)


def _approx_eq(a: Value, b: Value, rel_tol: float, abs_tol: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if is_number(a) and is_number(b):
        x, y = float(a), float(b)
        return abs(x - y) <= max(abs_tol, rel_tol * max(abs(x), abs(y)))
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return False
        return all(_approx_eq(x, y, rel_tol, abs_tol) for x, y in zip(a, b))
    return False
