"""Time-sliced evaluation: train once, score every later day without retraining.

A :class:`DriftReport` holds the per-day metric (classification accuracy or
mean localization error in meters), its min/max/mean over days, averages
over consecutive groups of days and a polynomial trend fit.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import numerics
from ._io import atomic_write_csv, atomic_write_json, atomic_write_text, fmt_float
from .errors import EmptyInput, EmptyTrainSlice, InsufficientPoints, InvalidRange
from .fpdb import slice_days, to_matrix
from .locmodels.dnn import DnnConfig, normalize_input, predict_labels, train_classifier, train_sae
from .locmodels.gp import GpConfig, gp_fit, gp_predict_many, localization_errors


@dataclass(frozen=True)
class SplitSpec:
    train_days: tuple = (1, 24)
    test_days: tuple = (25, 44)

    def __post_init__(self):
        (a, b), (c, d) = self.train_days, self.test_days
        if a > b or c > d:
            raise InvalidRange("day ranges must satisfy first <= last")
        if b >= c:
            raise InvalidRange("training days must end before the test days begin")
        object.__setattr__(self, "train_days", (int(a), int(b)))
        object.__setattr__(self, "test_days", (int(c), int(d)))

    @classmethod
    def parse(cls, train, test):
        return cls(parse_day_range(train), parse_day_range(test))


def parse_day_range(text):
    """``"a:b"`` inclusive -> (a, b)."""
    try:
        a, b = (int(p) for p in str(text).split(":"))
    except ValueError:
        raise InvalidRange(f"day range {text!r} must look like first:last") from None
    if a > b:
        raise InvalidRange(f"day range {text!r} has first > last")
    return a, b


@dataclass(frozen=True)
class Group:
    first_day: int
    last_day: int
    size: int
    mean: float
    partial: bool


def group_averages(per_day, group_size=5):
    """Means over consecutive chunks of ``group_size`` entries.

    ``per_day`` is either plain metric values or ``(day, metric)`` pairs.
    A trailing short chunk is kept and marked ``partial``.
    """
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    pairs = _as_pairs(per_day)
    if not pairs:
        raise EmptyInput("no per-day metrics to group")
    groups = []
    for start in range(0, len(pairs), group_size):
        chunk = pairs[start : start + group_size]
        vals = [m for _, m in chunk]
        groups.append(
            Group(chunk[0][0], chunk[-1][0], len(chunk), float(np.mean(vals)), len(chunk) < group_size)
        )
    return groups


def _as_pairs(per_day):
    out = []
    for i, item in enumerate(per_day):
        if isinstance(item, (tuple, list)):
            out.append((int(item[0]), float(item[1])))
        else:
            out.append((i + 1, float(item)))
    return out


def trend_fit(per_day, degree=6):
    """Polynomial trend of the metric against day index (ascending coefficients)."""
    pairs = _as_pairs(per_day)
    if len(pairs) < degree + 1:
        raise InsufficientPoints(f"{len(pairs)} days cannot support a degree-{degree} trend")
    days = np.array([d for d, _ in pairs], dtype=np.float64)
    vals = np.array([m for _, m in pairs], dtype=np.float64)
    return numerics.polyfit(days, vals, degree)


def linear_slope(per_day):
    pairs = _as_pairs(per_day)
    if len(pairs) < 2:
        return float("nan")
    return float(trend_fit(pairs, 1)[1])


def spearman(per_day):
    pairs = _as_pairs(per_day)
    if len(pairs) < 3:
        return float("nan")
    vals = [m for _, m in pairs]
    if len(set(vals)) == 1:
        return float("nan")
    return float(spearmanr([d for d, _ in pairs], vals).statistic)


@dataclass
class DriftReport:
    kind: str
    metric: str
    per_day: list
    summary: dict
    group_size: int
    group_averages: list
    trend_degree: int
    trend_coeffs: list = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["per_day"] = [[int(day), float(m)] for day, m in self.per_day]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["per_day"] = [(int(day), float(m)) for day, m in d["per_day"]]
        d["group_averages"] = [Group(**g) for g in d["group_averages"]]
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def group_means(self):
        return [g.mean for g in self.group_averages]


def _finite_or_none(value):
    # JSON has no NaN; undefined statistics (constant or short series) become null
    return float(value) if np.isfinite(value) else None


def build_report(kind, metric, per_day, group_size, degree, metadata):
    if not per_day:
        raise EmptyInput("no test day could be evaluated")
    vals = [m for _, m in per_day]
    summary = {
        "min": float(np.min(vals)),
        "max": float(np.max(vals)),
        "mean": float(np.mean(vals)),
        "linear_slope": _finite_or_none(linear_slope(per_day)),
        "spearman": _finite_or_none(spearman(per_day)),
    }
    try:
        coeffs = [float(c) for c in trend_fit(per_day, degree)]
    except InsufficientPoints as exc:
        coeffs = None
        metadata["trend_error"] = str(exc)
    return DriftReport(
        kind, metric, list(per_day), summary, group_size, group_averages(per_day, group_size),
        degree, coeffs, metadata,
    )


def _train_slice(db, split):
    train = slice_days(db, *split.train_days)
    if not train.records:
        raise EmptyTrainSlice(f"no records in training days {split.train_days}")
    aps = train.observed_aps()
    if not aps:
        raise EmptyTrainSlice("training slice has no detected APs")
    return train, aps


def _test_days(db, split):
    present = set(db.days())
    first, last = split.test_days
    return [d for d in range(first, last + 1)], present


def fit_gp(db, split, cfg=None):
    cfg = cfg or GpConfig()
    train, aps = _train_slice(db, split)
    m = to_matrix(train, aps)
    return gp_fit(m.matrix, m.row_coords, cfg, ap_universe=aps)


def evaluate_gp(model, db, split, group_size=5, degree=6, metadata=None):
    """Mean localization error of ``model`` on each test day."""
    aps = model.ap_universe
    digest_before = model.parameter_digest()
    per_day, skipped, dropped = [], [], 0
    days, present = _test_days(db, split)
    for day in days:
        day_db = slice_days(db, day, day)
        if day not in present or not day_db.records:
            skipped.append(day)
            continue
        m = to_matrix(day_db, aps)
        dropped += m.dropped
        pred, _ = gp_predict_many(model, m.matrix)
        per_day.append((day, float(np.mean(localization_errors(pred, m.row_coords)))))
    digest_after = model.parameter_digest()
    if digest_before != digest_after:
        raise RuntimeError("model parameters changed during evaluation")
    meta = dict(metadata or {})
    meta.update(
        model="gp",
        gp_config=model.cfg.to_dict(),
        train_days=list(split.train_days),
        test_days=list(split.test_days),
        n_aps=len(aps),
        n_train_rows=int(model.train_inputs.shape[0]),
        skipped_days=skipped,
        dropped_unseen_ap_readings=dropped,
        parameter_digest=digest_after,
        jitter=model.jitter,
    )
    return build_report("gp", "mean_error_m", per_day, group_size, degree, meta)


def run_gp_eval(db, split, cfg=None, group_size=5, degree=6, metadata=None):
    return evaluate_gp(fit_gp(db, split, cfg), db, split, group_size, degree, metadata)


def fit_dnn(db, split, cfg=None):
    cfg = cfg or DnnConfig()
    train, aps = _train_slice(db, split)
    m = to_matrix(train, aps)
    classes = tuple(sorted({int(v) for v in m.row_labels}))
    cfg = cfg.with_data_dims(len(aps), len(classes))
    x = normalize_input(m.matrix)
    encoder = train_sae(x, cfg)
    clf = train_classifier(x, m.row_labels, encoder, cfg, class_labels=classes)
    clf.ap_universe = aps
    clf.sae_loss_history = encoder.loss_history
    return clf


def evaluate_dnn(clf, db, split, group_size=5, degree=6, metadata=None):
    """Classification accuracy of ``clf`` on each test day.

    Records at RPs the classifier has never seen cannot be classified
    correctly and are excluded (and counted).
    """
    aps = clf.ap_universe
    known = set(clf.class_labels)
    digest_before = clf.parameter_digest()
    per_day, skipped, excluded, dropped = [], [], 0, 0
    days, present = _test_days(db, split)
    for day in days:
        day_db = slice_days(db, day, day)
        if day not in present or not day_db.records:
            skipped.append(day)
            continue
        m = to_matrix(day_db, aps)
        dropped += m.dropped
        keep = np.array([int(v) in known for v in m.row_labels])
        excluded += int((~keep).sum())
        if not keep.any():
            skipped.append(day)
            continue
        pred = predict_labels(clf, normalize_input(m.matrix[keep]))
        per_day.append((day, float(np.mean(pred == m.row_labels[keep]))))
    digest_after = clf.parameter_digest()
    if digest_before != digest_after:
        raise RuntimeError("model parameters changed during evaluation")
    meta = dict(metadata or {})
    meta.update(
        model="dnn",
        dnn_config=clf.cfg.to_dict(),
        train_days=list(split.train_days),
        test_days=list(split.test_days),
        n_aps=len(aps),
        n_classes=len(clf.class_labels),
        skipped_days=skipped,
        excluded_unseen_rp_records=excluded,
        dropped_unseen_ap_readings=dropped,
        parameter_digest=digest_after,
    )
    return build_report("dnn", "accuracy", per_day, group_size, degree, meta)


def run_dnn_eval(db, split, cfg=None, group_size=5, degree=6, metadata=None):
    return evaluate_dnn(fit_dnn(db, split, cfg), db, split, group_size, degree, metadata)


def write_report(report, out_dir, svg=True):
    out = Path(out_dir)
    paths = [out / "report.json", out / "per_day.csv", out / "trend.csv"]
    atomic_write_text(paths[0], report.to_json())
    atomic_write_csv(paths[1], ["day_index", "metric"], ((d, fmt_float(m)) for d, m in report.per_day))
    coeffs = report.trend_coeffs or []
    atomic_write_csv(paths[2], ["power", "coefficient"], ((k, fmt_float(c)) for k, c in enumerate(coeffs)))
    if svg:
        paths.append(out / "drift.svg")
        atomic_write_text(paths[3], render_svg(report))
    return paths


def read_report(path):
    with open(path, encoding="utf-8") as fh:
        return DriftReport.from_dict(json.load(fh))


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + step * 1e-9, step)]


def render_svg(report, width=640, height=400):
    """Line chart of the per-day metric with the fitted trend as a dashed curve."""
    days = np.array([d for d, _ in report.per_day], dtype=np.float64)
    vals = np.array([m for _, m in report.per_day], dtype=np.float64)
    left, right, top, bottom = 70, 20, 40, 55
    pw, ph = width - left - right, height - top - bottom
    x_lo, x_hi = days.min(), days.max()
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    curve_x = np.linspace(x_lo, x_hi, 200)
    curve_y = numerics.polyval(report.trend_coeffs, curve_x) if report.trend_coeffs else None
    y_all = vals if curve_y is None else np.concatenate([vals, curve_y])
    y_lo, y_hi = float(y_all.min()), float(y_all.max())
    pad = 0.05 * (y_hi - y_lo) if y_hi > y_lo else 0.5
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    ylabel = "accuracy" if report.metric == "accuracy" else "mean localization error [m]"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{report.kind.upper()} {report.metric} per test day</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in _nice_ticks(x_lo, x_hi, 8):
        parts.append(
            f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="black"/>'
            f'<text x="{sx(t):.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{t:g}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi, 6):
        if not y_lo <= t <= y_hi:
            continue
        parts.append(
            f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>'
            f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{t:g}</text>'
        )
    parts.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">day index</text>'
    )
    parts.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13" transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>'
    )
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(days, vals))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    for x, y in zip(days, vals):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#1f77b4"/>')
    if curve_y is not None:
        cpts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(curve_x, curve_y))
        parts.append(
            f'<polyline points="{cpts}" fill="none" stroke="red" stroke-width="1.5" '
            f'stroke-dasharray="6,4"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
