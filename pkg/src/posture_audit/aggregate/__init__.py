"""Dataset loading, aggregate statistics and report emission."""
from .dataset import Income, Region, ScanTarget, geoscheme, load_dataset, write_dataset
from .emit import emit_reports, load_emitted, load_reports
from .report import DomainPostureReport, ScanStatus
from .stats import (AggregateStats, CveRow, Distribution, GroupStats, Grouping, aggregate,
                    aggregate_all, distribution, rank_top_cves)

__all__ = [
    "Income", "Region", "ScanTarget", "geoscheme", "load_dataset", "write_dataset",
    "emit_reports", "load_emitted", "load_reports", "DomainPostureReport", "ScanStatus",
    "AggregateStats", "CveRow", "Distribution", "GroupStats", "Grouping", "aggregate",
    "aggregate_all", "distribution", "rank_top_cves",
]
