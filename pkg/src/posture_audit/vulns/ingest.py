"""Convert NVD 2.0 API documents into the local JSONL snapshot format.

This is the only component that touches the network, and only when asked.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import time
import urllib.parse
import urllib.request

from ..errors import SchemaError
from .nvd import CveRecord, MatchCriterion
from .severity import severity_band

log = logging.getLogger(__name__)

API_URL = "https://services.nvd.nist.gov/rest/json/cves/2.0"
_BOUNDS = {"versionStartIncluding": "ver_start_incl", "versionStartExcluding": "ver_start_excl",
           "versionEndIncluding": "ver_end_incl", "versionEndExcluding": "ver_end_excl"}


def _base_score(metrics: dict):
    for key in ("cvssMetricV31", "cvssMetricV30"):
        entries = metrics.get(key) or []
        primary = [e for e in entries if e.get("type") == "Primary"] or entries
        if primary:
            data = primary[0]["cvssData"]
            return float(data["baseScore"]), data.get("baseSeverity")
    return None, None


def _criteria(configurations) -> list[MatchCriterion]:
    out = []
    for config in configurations or []:
        for node in config.get("nodes", []):
            for match in node.get("cpeMatch", []):
                if not match.get("vulnerable", True):
                    continue
                bounds = {_BOUNDS[k]: v for k, v in match.items() if k in _BOUNDS}
                try:
                    out.append(MatchCriterion(match["criteria"], **bounds))
                except SchemaError as exc:
                    log.info("skipping match %s: %s", match.get("criteria"), exc)
    return out


def convert_nvd2(document: dict) -> list[CveRecord]:
    """Records with a CVSS v3 base score and at least one usable CPE match."""
    records = []
    for item in document.get("vulnerabilities", []):
        cve = item.get("cve", {})
        score, label = _base_score(cve.get("metrics", {}))
        if score is None:
            continue
        band = severity_band(score)
        if label and label.lower() != band.value.lower():
            log.warning("%s: NVD label %s disagrees with score %s; using %s",
                        cve.get("id"), label, score, band.value)
        criteria = _criteria(cve.get("configurations"))
        if not criteria:
            continue
        published = cve.get("published")
        records.append(CveRecord(
            id=cve["id"], base_score=score, severity=band, match_criteria=tuple(criteria),
            published=dt.date.fromisoformat(published[:10]) if published else None))
    return records


def fetch_nvd(params: dict, *, api_key: str | None = None, page_size: int = 2000,
              pause: float = 6.0, opener=urllib.request.urlopen) -> list[CveRecord]:
    """Page through the NVD 2.0 API for ``params`` (e.g. ``{"cpeName": ...}``)."""
    records, start = [], 0
    while True:
        query = dict(params, startIndex=start, resultsPerPage=page_size)
        req = urllib.request.Request(f"{API_URL}?{urllib.parse.urlencode(query)}")
        if api_key:
            req.add_header("apiKey", api_key)
        with opener(req, timeout=60) as resp:
            doc = json.load(resp)
        records.extend(convert_nvd2(doc))
        start += doc.get("resultsPerPage", 0)
        if not doc.get("resultsPerPage") or start >= doc.get("totalResults", 0):
            return records
        time.sleep(pause)   # public rate limit
