"""Metric records and their CSV form."""
import csv
import math
from dataclasses import dataclass, fields
from typing import Optional

CSV_COLUMNS = ("experiment", "N", "M", "lambda", "repeat", "epoch", "metric", "value")

METRICS = frozenset({
    "sup_norm", "log_sup_norm", "mse", "ln_mse", "accuracy", "variance",
    "target_variance", "train_loss", "test_loss", "mean_member_mse", "best_member_mse",
})


@dataclass(frozen=True)
class MetricRecord:
    experiment: str
    metric: str
    value: float
    N: Optional[int] = None
    M: Optional[int] = None
    lam: Optional[float] = None
    repeat: Optional[int] = None
    epoch: Optional[int] = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric kind {self.metric!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite value for {self.key()}")

    def key(self):
        return (self.experiment, self.N, self.M, self.lam, self.repeat, self.epoch, self.metric)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def emit_csv(records, path):
    """Write records with the fixed column order; missing keys become ''."""
    seen = set()
    for r in records:
        if r.key() in seen:
            raise ValueError(f"duplicate record key {r.key()}")
        seen.add(r.key())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.experiment, _fmt(r.N), _fmt(r.M), _fmt(r.lam),
                             _fmt(r.repeat), _fmt(r.epoch), r.metric, _fmt(float(r.value))])


def read_csv(path):
    def opt(cast, text):
        return None if text == "" else cast(text)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [
            MetricRecord(experiment=row[0], N=opt(int, row[1]), M=opt(int, row[2]),
                         lam=opt(float, row[3]), repeat=opt(int, row[4]),
                         epoch=opt(int, row[5]), metric=row[6], value=float(row[7]))
            for row in reader
        ]


def select(records, **criteria):
    """Filter records by exact field values, e.g. ``select(rs, metric='mse', N=100)``."""
    names = {f.name for f in fields(MetricRecord)}
    unknown = set(criteria) - names
    if unknown:
        raise TypeError(f"unknown record fields {sorted(unknown)}")
    return [r for r in records if all(getattr(r, k) == v for k, v in criteria.items())]
