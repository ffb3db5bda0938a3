"""Report assembly and writing: the JSON report and its flat CSV mirror."""

import json
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import pandas as pd

from app_logging import get_logger
from helper.cli_io import atomic_path
from models.cluster import PatternDistribution
from models.report import EstimateRow, Report
from models.simulation import OracleEstimate

logger = get_logger(__name__)

CSV_COLUMNS = ["family", "label", "prob", "count", "ci_lo", "ci_hi", "se", "raw"]


def fmt_number(x: Optional[float]) -> Optional[str]:
    """17-significant-digit string, the same in the JSON report and the CSV mirror."""
    if x is None:
        return None
    return format(float(x), ".17g")


def distribution_rows(dist: PatternDistribution, prefix: str = "") -> List[EstimateRow]:
    """One row per label of an estimated distribution."""
    family = f"{prefix}{dist.family}"
    rows = []
    for i, label in enumerate(dist.labels):
        rows.append(
            EstimateRow(
                family=family,
                label=label,
                prob=fmt_number(dist.probs[i]),
                count=dist.counts[i],
                ci_lo=fmt_number(dist.ci_lo[i]) if dist.ci_lo is not None else None,
                ci_hi=fmt_number(dist.ci_hi[i]) if dist.ci_hi is not None else None,
            )
        )
    return rows


def oracle_rows(estimates: Iterable[OracleEstimate], prefix: str = "") -> List[EstimateRow]:
    """One row per oracle estimate; ``prob`` is the clamped value, ``raw`` the unclamped one."""
    return [
        EstimateRow(
            family=f"{prefix}{est.family}",
            label=est.label,
            prob=fmt_number(est.value),
            ci_lo=fmt_number(est.ci_lo),
            ci_hi=fmt_number(est.ci_hi),
            se=fmt_number(est.se),
            raw=fmt_number(est.raw),
        )
        for est in estimates
    ]


def report_json(report: Report) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2) + "\n"


def estimates_frame(report: Report) -> pd.DataFrame:
    records = [row.model_dump() for row in report.estimates]
    return pd.DataFrame.from_records(records, columns=CSV_COLUMNS).astype(object)


def write_report(report: Report, path: Path) -> Tuple[Path, Path]:
    """
    Write the JSON report and its CSV mirror (same stem, ``.csv``) atomically.

    Returns:
        Paths of the JSON and CSV files
    """
    json_path = Path(path)
    csv_path = json_path.with_suffix(".csv")
    text = report_json(report)
    frame = estimates_frame(report)
    with atomic_path(csv_path) as tmp:
        frame.to_csv(tmp, index=False)
    with atomic_path(json_path) as tmp:
        tmp.write_text(text, encoding="utf-8")
    logger.info(
        "Report written",
        command=report.command,
        json_path=str(json_path),
        csv_path=str(csv_path),
        rows=len(report.estimates),
    )
    return json_path, csv_path
