"""CPE 2.3 formatted strings."""
from __future__ import annotations

import re

from ..errors import SchemaError

FIELDS = ("cpe", "version23", "part", "vendor", "product", "version", "update", "edition",
          "language", "sw_edition", "target_sw", "target_hw", "other")
_SPLIT = re.compile(r"(?<!\\):")


def split_cpe(text: str) -> list[str]:
    return _SPLIT.split(text)


def is_well_formed(text: str) -> bool:
    parts = split_cpe(text)
    return len(parts) == 13 and parts[0] == "cpe" and parts[1] == "2.3" and parts[2] in "aoh" \
        and all(parts[2:])


def _escape(value: str) -> str:
    return re.sub(r"([^A-Za-z0-9._\-*])", r"\\\1", value.replace(" ", "_").lower())


def make_cpe(vendor: str, product: str, version: str, part: str = "a") -> str:
    return ":".join(["cpe", "2.3", part, _escape(vendor), _escape(product), _escape(version)]
                    + ["*"] * 7)


def parse_prefix(prefix: str) -> list[str]:
    """Components of a (possibly truncated) CPE prefix; missing ones become ``*``."""
    parts = split_cpe(prefix)
    if len(parts) < 5 or parts[0] != "cpe" or parts[1] != "2.3" or len(parts) > 13:
        raise SchemaError(f"bad CPE prefix {prefix!r}")
    return parts + ["*"] * (13 - len(parts))


def unescape(value: str) -> str:
    return re.sub(r"\\(.)", r"\1", value)
