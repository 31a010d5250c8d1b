"""Service fingerprinting and offline CVE correlation."""
from .cpe import make_cpe
from .fingerprint import (DEFAULT_PORTS, FingerprintRule, ServiceFingerprint, ServiceScan,
                          fingerprint_services, load_rules, match_banner, scan_services)
from .nvd import (CveRecord, ExposureReport, MatchCriterion, NvdIndex, build_exposure_report,
                  load_nvd_snapshot, lookup_cves, write_snapshot)
from .severity import Severity, severity_band
from .versioning import compare_versions, version_key

__all__ = [
    "make_cpe", "DEFAULT_PORTS", "FingerprintRule", "ServiceFingerprint", "ServiceScan",
    "fingerprint_services", "load_rules", "match_banner", "scan_services", "CveRecord",
    "ExposureReport", "MatchCriterion", "NvdIndex", "build_exposure_report", "load_nvd_snapshot",
    "lookup_cves", "write_snapshot", "Severity", "severity_band", "compare_versions",
    "version_key",
]
