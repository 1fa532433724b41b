"""Non-inferiority testing and equivalent-circuit-rate computation.

The comparison machinery works on per-run sample means. For a measure where
lower is better (page delay), the candidate is non-inferior to the reference
when the one-sided upper confidence bound on mean(candidate)-mean(reference)
falls below the tolerance; for higher-is-better measures (decodable frame
rate, transfer rate) the hypotheses flip sign and the lower bound must exceed
minus the tolerance. Multiple measures combine by intersection-union: the
composite passes only if every component test rejects its null.

The equivalent circuit rate of a candidate configuration is the largest
reference line rate on a descending grid at which the composite test still
passes; passing at the top of the grid or nowhere is reported with sentinels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from scipy import stats as _sstats

from .errors import ConfigurationError, MissingSampleError

LOWER_IS_BETTER = "lower_is_better"
HIGHER_IS_BETTER = "higher_is_better"

RELATIVE = "relative_to_reference_mean"
ABSOLUTE = "absolute"

AT_LEAST_R1 = "at_least_r1"
BELOW_GRID = "below_grid"

WELCH = "welch"
POOLED = "pooled"

#: direction conventions for the built-in measures
MEASURE_DIRECTIONS = {
    "page_delay": LOWER_IS_BETTER,
    "ftp_rate": HIGHER_IS_BETTER,
    "dfr": HIGHER_IS_BETTER,
}

#: measures feeding the composite verdict by default (bulk transfer rate is
#: treated as background traffic)
DEFAULT_IUT_MEASURES = ("page_delay", "dfr")

_VAR_FLOOR_SCALE = 1e-12


@dataclass
class MeasureSample:
    measure_id: str
    config_id: str
    values: list[float]

    def __post_init__(self):
        self.values = [float(v) for v in self.values]

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)

    def variance(self) -> float:
        m = self.mean
        return math.fsum((v - m) ** 2 for v in self.values) / (len(self.values) - 1)


@dataclass(frozen=True)
class Tolerance:
    mode: str = RELATIVE
    value: float = 0.10
    direction: str = LOWER_IS_BETTER

    def __post_init__(self):
        if self.mode not in (RELATIVE, ABSOLUTE):
            raise ConfigurationError(f"unknown tolerance mode {self.mode!r}")
        if self.direction not in (LOWER_IS_BETTER, HIGHER_IS_BETTER):
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        if not (self.value > 0):
            raise ConfigurationError(f"tolerance value must be > 0, got {self.value}")


@dataclass
class NonInferiorityResult:
    measure_id: str
    direction: str
    delta: float
    ci_limit: float
    alpha: float
    reject_h0: bool
    df: float
    t_stat: float
    diff: float
    se: float
    method: str

    def to_dict(self):
        return {
            "measure_id": self.measure_id,
            "direction": self.direction,
            "delta": self.delta,
            "ci_limit": self.ci_limit,
            "alpha": self.alpha,
            "reject_h0": self.reject_h0,
            "df": self.df,
            "t_stat": self.t_stat,
            "diff": self.diff,
            "se": self.se,
            "method": self.method,
        }


def _check_sample(sample: MeasureSample, label: str) -> None:
    if sample.n < 2:
        raise ConfigurationError(f"{label} sample needs >= 2 values, got {sample.n}")
    for v in sample.values:
        if not math.isfinite(v):
            raise ConfigurationError(f"{label} sample contains non-finite value {v}")


def noninferiority_test(
    candidate: MeasureSample,
    reference: MeasureSample,
    tol: Tolerance,
    alpha: float = 0.05,
    method: str = WELCH,
) -> NonInferiorityResult:
    """One-sided two-sample test of the non-inferiority hypotheses.

    Lower-is-better: H0: mu_C - mu_R >= delta, rejected when the upper
    (1-alpha) confidence bound on the difference is below delta.
    Higher-is-better: H0: mu_C - mu_R <= -delta, rejected when the lower
    bound is above -delta.
    """
    _check_sample(candidate, "candidate")
    _check_sample(reference, "reference")
    if not 0 < alpha < 0.5:
        raise ConfigurationError(f"alpha must be in (0, 0.5), got {alpha}")
    nc, nr = candidate.n, reference.n
    mc, mr = candidate.mean, reference.mean
    vc, vr = candidate.variance(), reference.variance()

    if tol.mode == RELATIVE:
        if mr == 0:
            raise ConfigurationError(
                "relative tolerance needs a non-zero reference mean"
            )
        delta = tol.value * abs(mr)
    else:
        delta = tol.value

    if method == WELCH:
        a, b = vc / nc, vr / nr
        se = math.sqrt(a + b)
        denom = (a * a) / (nc - 1) + (b * b) / (nr - 1)
        df = (a + b) ** 2 / denom if denom > 0 else float(nc + nr - 2)
    elif method == POOLED:
        df = float(nc + nr - 2)
        sp2 = ((nc - 1) * vc + (nr - 1) * vr) / df
        se = math.sqrt(sp2 * (1.0 / nc + 1.0 / nr))
    else:
        raise ConfigurationError(f"unknown test method {method!r}")

    if se == 0.0:
        # degenerate samples: verdict still computable with a variance floor
        se = _VAR_FLOOR_SCALE * max(1.0, abs(mc), abs(mr))
        df = float(nc + nr - 2)

    t_crit = float(_sstats.t.ppf(1.0 - alpha, df))
    diff = mc - mr
    if tol.direction == LOWER_IS_BETTER:
        ci_limit = diff + t_crit * se
        reject = ci_limit < delta
        t_stat = (diff - delta) / se
    else:
        ci_limit = diff - t_crit * se
        reject = ci_limit > -delta
        t_stat = (diff + delta) / se
    return NonInferiorityResult(
        measure_id=candidate.measure_id,
        direction=tol.direction,
        delta=delta,
        ci_limit=ci_limit,
        alpha=alpha,
        reject_h0=reject,
        df=df,
        t_stat=t_stat,
        diff=diff,
        se=se,
        method=method,
    )


def iut_combine(results) -> bool:
    """Intersection-union verdict: every component must reject its null."""
    results = list(results)
    if not results:
        raise ConfigurationError("iut_combine needs at least one result")
    return all(r.reject_h0 for r in results)


# ---------------------------------------------------------------------------
# equivalent circuit rate


@dataclass
class GridPointVerdict:
    r: float
    iut_pass: bool
    tests: list[NonInferiorityResult]

    def to_dict(self):
        return {
            "r": self.r,
            "iut_pass": self.iut_pass,
            "tests": [t.to_dict() for t in self.tests],
        }


@dataclass
class EcrReport:
    config_id: str
    r_grid: list[float]
    per_r: list[GridPointVerdict]
    ecr: float | str  # a grid value, AT_LEAST_R1, or BELOW_GRID
    reliability_flags: list[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.reliability_flags)

    def ecr_value(self) -> float:
        """Numeric encoding: the top grid rate for at_least_r1, 0 below grid."""
        if self.ecr == AT_LEAST_R1:
            return self.r_grid[0]
        if self.ecr == BELOW_GRID:
            return 0.0
        return float(self.ecr)

    def order_key(self):
        """Sortable strength: below_grid < any grid value < at_least_r1."""
        if self.ecr == BELOW_GRID:
            return (-1, 0.0)
        if self.ecr == AT_LEAST_R1:
            return (1, 0.0)
        return (0, float(self.ecr))

    def to_dict(self):
        return {
            "config_id": self.config_id,
            "r_grid": self.r_grid,
            "ecr": self.ecr,
            "ecr_value": self.ecr_value(),
            "reliability_flags": self.reliability_flags,
            "per_r": [p.to_dict() for p in self.per_r],
        }


def default_r_grid(r1: float) -> list[float]:
    """Descending ladder {1, 1/2, 1/4, 1/10} x R1, recursing down to R1/1000."""
    grid = []
    base = r1
    while base >= r1 / 1000.0 - 1e-9:
        for f in (1.0, 0.5, 0.25):
            v = base * f
            if v >= r1 / 1000.0 - 1e-9:
                grid.append(v)
        base /= 10.0
    return grid


def validate_grid(grid) -> list[float]:
    grid = [float(r) for r in grid]
    if not grid:
        raise ConfigurationError("empty rate grid")
    for r in grid:
        if r <= 0:
            raise ConfigurationError(f"grid rates must be positive, got {r}")
    for a, b in zip(grid, grid[1:]):
        if not a > b:
            raise ConfigurationError("rate grid must be strictly descending")
    return grid


def compute_ecr(
    candidate: dict[str, MeasureSample],
    reference_by_r: dict[float, dict[str, MeasureSample]],
    grid,
    tolerances: dict[str, Tolerance],
    alpha: float = 0.05,
    method: str = WELCH,
    config_id: str = "",
    reliability_flags=(),
) -> EcrReport:
    """Walk the grid from the top down and report the largest rate whose
    composite verdict passes."""
    grid = validate_grid(grid)
    measures = list(tolerances)
    if not measures:
        raise ConfigurationError("no measures configured for the composite test")
    gaps = []
    for m in measures:
        if m not in candidate:
            gaps.append(f"candidate:{m}")
    for r in grid:
        ref = reference_by_r.get(r)
        if ref is None:
            gaps.append(f"reference:R={r:g}")
            continue
        for m in measures:
            if m not in ref:
                gaps.append(f"reference:R={r:g}:{m}")
    if gaps:
        raise MissingSampleError(gaps)

    per_r = []
    for r in grid:
        ref = reference_by_r[r]
        tests = [
            noninferiority_test(candidate[m], ref[m], tolerances[m], alpha, method)
            for m in measures
        ]
        per_r.append(GridPointVerdict(r=r, iut_pass=iut_combine(tests), tests=tests))

    passing = [p.r for p in per_r if p.iut_pass]
    if not passing:
        ecr: float | str = BELOW_GRID
    elif max(passing) == grid[0]:
        ecr = AT_LEAST_R1
    else:
        ecr = max(passing)
    return EcrReport(
        config_id=config_id,
        r_grid=grid,
        per_r=per_r,
        ecr=ecr,
        reliability_flags=list(reliability_flags),
    )


def min_tx_curve(reports: dict[tuple[int, int], EcrReport], r_target: float) -> dict[int, int]:
    """For each user count, the smallest transmitter count achieving an ECR of
    at least ``r_target``; absent when no configuration reaches it."""
    out: dict[int, int] = {}
    for (n_tx, n), report in sorted(reports.items()):
        if report.ecr_value() >= r_target:
            if n not in out or n_tx < out[n]:
                out[n] = n_tx
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# sample CSV / report JSON interchange

MEASURES_CSV_HEADER = ["config_id", "measure_id", "run_seed", "value"]


def write_measure_rows(path, rows) -> None:
    """Write ``(config_id, measure_id, run_seed, value)`` rows; deterministic
    byte-for-byte given identical rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MEASURES_CSV_HEADER)
        for config_id, measure_id, run_seed, value in rows:
            w.writerow([config_id, measure_id, run_seed, repr(float(value))])


def read_measure_rows(path):
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != MEASURES_CSV_HEADER:
            raise ConfigurationError(f"{path}: unexpected header {header}")
        for line in r:
            if not line:
                continue
            config_id, measure_id, run_seed, value = line
            rows.append((config_id, measure_id, int(run_seed), float(value)))
    return rows


def samples_from_rows(rows) -> dict[tuple[str, str], MeasureSample]:
    """Group per-run rows into MeasureSamples keyed by (config_id, measure_id)."""
    grouped: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for config_id, measure_id, run_seed, value in rows:
        grouped.setdefault((config_id, measure_id), []).append((run_seed, value))
    out = {}
    for (config_id, measure_id), pairs in grouped.items():
        pairs.sort()
        out[(config_id, measure_id)] = MeasureSample(
            measure_id=measure_id,
            config_id=config_id,
            values=[v for _, v in pairs],
        )
    return out


def write_report_json(report_or_reports, path) -> None:
    path = Path(path)
    if isinstance(report_or_reports, EcrReport):
        payload = report_or_reports.to_dict()
    else:
        payload = [r.to_dict() for r in report_or_reports]
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
