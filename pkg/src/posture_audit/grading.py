"""Server grading from the accepted-cipher matrix and the chain verdict."""
from __future__ import annotations

import configparser
import dataclasses
from functools import lru_cache
from pathlib import Path

from .catalog import Bulk, CipherCatalog, Classification
from .datafiles import data_path
from .errors import ConfigError, UnknownCipher
from .versions import ALL_VERSIONS, ProtocolVersion

LETTERS = ("A", "B", "C", "D", "E", "F")


@dataclasses.dataclass(frozen=True)
class ScoringTables:
    revision: str
    weights: tuple                  # protocol, key exchange, cipher strength
    protocol: dict                  # ProtocolVersion -> score
    key_exchange: dict              # kx name / "anonymous" / "export" -> score
    cipher_bits: tuple              # ((lower_bound, score), ...) ascending
    letters: tuple                  # ((letter, minimum), ...) best first
    caps: dict                      # cap name -> ceiling letter

    def cipher_score(self, bits: int) -> int:
        score = 0
        for bound, value in self.cipher_bits:
            if bits >= bound:
                score = value
        return score

    def kx_score(self, suite) -> int:
        if suite.kx.anonymous:
            return self.key_exchange["anonymous"]
        if suite.bulk is Bulk.EXPORT_grade:
            return self.key_exchange["export"]
        try:
            return self.key_exchange[suite.kx.value]
        except KeyError:
            raise ConfigError(f"no key exchange score for {suite.kx.value}") from None

    def letter_for(self, score: float) -> str:
        for letter, minimum in self.letters:
            if score >= minimum:
                return letter
        return "F"


@dataclasses.dataclass(frozen=True)
class ServerGrade:
    numeric_score: float
    letter: str
    caps_applied: tuple = ()
    sub_scores: dict = dataclasses.field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"numeric_score": self.numeric_score, "letter": self.letter,
                "caps_applied": list(self.caps_applied), "sub_scores": dict(self.sub_scores)}

    @classmethod
    def from_dict(cls, data: dict) -> "ServerGrade":
        return cls(data["numeric_score"], data["letter"], tuple(data["caps_applied"]),
                   dict(data.get("sub_scores", {})))


def _section(cp, name):
    if not cp.has_section(name):
        raise ConfigError(f"scoring file lacks [{name}]")
    return cp[name]


def load_scoring(path: str | Path | None = None) -> ScoringTables:
    cp = configparser.ConfigParser()
    cp.optionxform = str           # keep key case
    source = Path(path) if path else data_path("grading.ini")
    if not cp.read(source):
        raise ConfigError(f"cannot read scoring file {source}")
    try:
        w = _section(cp, "weights")
        weights = (float(w["protocol"]), float(w["key_exchange"]), float(w["cipher_strength"]))
        protocol = {v: int(_section(cp, "protocol")[v.name]) for v in ALL_VERSIONS}
        kx = {k: int(v) for k, v in _section(cp, "key_exchange").items()}
        bits = tuple(sorted((int(k), int(v)) for k, v in _section(cp, "cipher_strength").items()))
        letters = tuple(sorted(((k, float(v)) for k, v in _section(cp, "letters").items()),
                               key=lambda kv: -kv[1]))
        caps = dict(_section(cp, "caps").items())
        revision = _section(cp, "meta")["revision"]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed scoring file {source}: {exc}") from exc
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ConfigError("scoring weights must sum to 1")
    for key in ("anonymous", "export"):
        if key not in kx:
            raise ConfigError(f"[key_exchange] needs a {key!r} entry")
    if not bits or bits[0][0] != 0:
        raise ConfigError("[cipher_strength] must start at 0 bits")
    return ScoringTables(revision, weights, protocol, kx, bits, letters, caps)


@lru_cache(maxsize=1)
def default_scoring() -> ScoringTables:
    return load_scoring()


def _apply_cap(letter: str, ceiling: str) -> str:
    if ceiling == "T" or letter == "T":
        return "T"
    return LETTERS[max(LETTERS.index(letter), LETTERS.index(ceiling))]


def grade_server(matrix, chain, catalog: CipherCatalog,
                 tables: ScoringTables | None = None) -> ServerGrade:
    """Grade one endpoint.

    ``chain`` is a ChainReport, or None when no chain could be retrieved
    (treated as untrusted).  Unknown accepted code points raise UnknownCipher.
    """
    tables = tables or default_scoring()
    versions = matrix.supported_versions()
    codes = matrix.accepted_union()
    unknown = sorted(c for c in codes if c not in catalog)
    if unknown:
        raise UnknownCipher(unknown)
    suites = [catalog[c] for c in codes]

    protocol = min((tables.protocol[v] for v in versions), default=100)
    kx = min((tables.kx_score(s) for s in suites), default=100)
    cipher = min((tables.cipher_score(s.effective_bits) for s in suites), default=100)
    wp, wk, wc = tables.weights
    numeric = round(wp * protocol + wk * kx + wc * cipher, 6)

    caps = []
    if ProtocolVersion.SSL2 in versions:
        caps.append("ssl2")
    if not versions:
        caps.append("no_tls")
    if any(s.classification is Classification.Insecure for s in suites):
        caps.append("insecure_cipher")
    if chain is None or not chain.trusted:
        caps.append("untrusted")

    letter = tables.letter_for(numeric)
    for cap in caps:
        letter = _apply_cap(letter, tables.caps[cap])
    return ServerGrade(numeric, letter, tuple(caps),
                       {"protocol": protocol, "key_exchange": kx, "cipher_strength": cipher})
