"""Numeric-aware dotted version comparison."""
from __future__ import annotations

import functools
import re

from ..errors import MalformedVersion

_VALID = re.compile(r"^[0-9A-Za-z]+(\.[0-9A-Za-z]+)*$")
_LEADING_DIGITS = re.compile(r"^(\d+)(.*)$")


def _segment_key(seg: str) -> tuple:
    # "4" -> (0, 4, ""), "4p1" -> (0, 4, "p1"), "beta" -> (1, 0, "beta")
    m = _LEADING_DIGITS.match(seg)
    if m:
        return (0, int(m.group(1)), m.group(2).lower())
    return (1, 0, seg.lower())


_PAD = (0, 0, "")


def version_key(version: str) -> tuple:
    if not isinstance(version, str) or not _VALID.match(version):
        raise MalformedVersion(f"not a dotted version: {version!r}")
    key = [_segment_key(s) for s in version.split(".")]
    while key and key[-1] == _PAD:       # 1.0 == 1
        key.pop()
    return tuple(key)


def is_valid_version(version: str) -> bool:
    try:
        version_key(version)
    except MalformedVersion:
        return False
    return True


def compare_versions(a: str, b: str) -> int:
    """Return -1, 0 or 1; the shorter version is padded with zero segments."""
    ka, kb = version_key(a), version_key(b)
    n = max(len(ka), len(kb))
    ka += (_PAD,) * (n - len(ka))
    kb += (_PAD,) * (n - len(kb))
    return (ka > kb) - (ka < kb)


version_sort_key = functools.cmp_to_key(compare_versions)
