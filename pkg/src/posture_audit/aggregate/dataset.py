"""Target dataset: domains annotated with region, sub-region and income group."""
from __future__ import annotations

import csv
import dataclasses
import enum
import re
from functools import lru_cache
from pathlib import Path

from ..datafiles import data_path
from ..errors import DuplicateDomain, RegionMismatch, SchemaError

HEADER = ["domain", "port", "region", "sub_region", "income"]
_LABEL = re.compile(r"^(?!-)[A-Za-z0-9-]{1,63}(?<!-)$")


class Region(enum.Enum):
    Africa = "Africa"
    Americas = "Americas"
    Asia = "Asia"
    Europe = "Europe"
    Oceania = "Oceania"


class Income(enum.Enum):
    High = "High"
    UpperMiddle = "UpperMiddle"
    LowerMiddle = "LowerMiddle"
    Low = "Low"

    @classmethod
    def parse(cls, text: str) -> "Income":
        key = text.strip().replace("-", "").replace(" ", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown income group {text!r}")


@lru_cache(maxsize=1)
def geoscheme() -> dict:
    """sub_region -> Region, from the shipped mapping table."""
    with open(data_path("geoscheme.csv"), newline="", encoding="utf-8") as fh:
        return {row["sub_region"]: Region(row["region"]) for row in csv.DictReader(fh)}


def valid_fqdn(name: str) -> bool:
    name = name.rstrip(".")
    return 0 < len(name) <= 253 and all(_LABEL.match(label) for label in name.split("."))


@dataclasses.dataclass(frozen=True)
class ScanTarget:
    domain: str
    region: Region
    sub_region: str
    income: Income
    port: int = 443

    def __post_init__(self):
        if not valid_fqdn(self.domain):
            raise ValueError(f"invalid domain name {self.domain!r}")
        mapping = geoscheme()
        if mapping.get(self.sub_region) is not self.region:
            raise RegionMismatch(f"{self.sub_region!r} is not a sub-region of {self.region.value}")
        if not 0 < self.port < 65536:
            raise ValueError(f"port {self.port} out of range")

    def to_dict(self) -> dict:
        return {"domain": self.domain, "port": self.port, "region": self.region.value,
                "sub_region": self.sub_region, "income": self.income.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ScanTarget":
        return cls(d["domain"], Region(d["region"]), d["sub_region"], Income.parse(d["income"]),
                   int(d.get("port") or 443))


def load_dataset(path: str | Path) -> list[ScanTarget]:
    targets, seen = [], {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HEADER:
            raise SchemaError(f"header must be {','.join(HEADER)}", row=1)
        for line, row in enumerate(reader, start=2):
            domain = (row["domain"] or "").strip().lower()
            if domain in seen:
                raise DuplicateDomain(f"{domain} already on row {seen[domain]}", row=line)
            try:
                region = Region(row["region"].strip())
                income = Income.parse(row["income"] or "")
                port = int(row["port"]) if (row["port"] or "").strip() else 443
                target = ScanTarget(domain, region, row["sub_region"].strip(), income, port)
            except RegionMismatch as exc:
                raise RegionMismatch(str(exc), row=line) from None
            except (ValueError, AttributeError) as exc:
                raise SchemaError(str(exc), row=line) from exc
            seen[domain] = line
            targets.append(target)
    return targets


def write_dataset(targets, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for t in targets:
            w.writerow([t.domain, t.port, t.region.value, t.sub_region, t.income.value])
