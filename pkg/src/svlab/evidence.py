"""Three-valued evidence verdicts shared by every numeric check.

A partial-sum (or partial-integral) sequence is compared at a horizon and its
half point. The tail rules are deliberately one-sided: they report evidence,
never proof.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

SUMMABLE = "summable-evidence"
DIVERGENT = "divergent-evidence"
SATISFIED = "satisfied-evidence"
VIOLATED = "violated-evidence"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TailThresholds:
    eps_tail: float = 1e-2
    eps_abs: float = 1e-8
    ratio_div: float = 1.5

    def as_dict(self) -> dict:
        return asdict(self)


def tail_verdict(s_half: float, s_full: float,
                 thresholds: TailThresholds = TailThresholds()) -> str:
    """Verdict for one sequence from its half-horizon and full-horizon sums."""
    increment = s_full - s_half
    if increment < thresholds.eps_tail * s_half + thresholds.eps_abs:
        return SUMMABLE
    ratio = np.inf if s_half == 0 else s_full / s_half
    if ratio > thresholds.ratio_div:
        return DIVERGENT
    return INCONCLUSIVE


def median_tail_verdict(s_half, s_full,
                        thresholds: TailThresholds = TailThresholds()):
    """Ensemble verdict from per-path sums: medians of increment and ratio."""
    s_half = np.asarray(s_half, float)
    s_full = np.asarray(s_full, float)
    med_half = float(np.median(s_half))
    med_incr = float(np.median(s_full - s_half))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(s_half > 0, s_full / s_half,
                          np.where(s_full > 0, np.inf, 1.0))
    med_ratio = float(np.median(ratios))
    if med_incr < thresholds.eps_tail * med_half + thresholds.eps_abs:
        verdict = SUMMABLE
    elif med_ratio > thresholds.ratio_div:
        verdict = DIVERGENT
    else:
        verdict = INCONCLUSIVE
    diagnostics = {
        "median_s_half": med_half,
        "median_s_full": float(np.median(s_full)),
        "median_increment": med_incr,
        "median_ratio": med_ratio,
        "n_paths": int(s_half.size),
    }
    return verdict, diagnostics


def as_condition_verdict(v: str) -> str:
    """Map summable/divergent vocabulary onto satisfied/violated."""
    return {SUMMABLE: SATISFIED, DIVERGENT: VIOLATED}.get(v, INCONCLUSIVE)


@dataclass(frozen=True)
class EvidenceReport:
    """JSON-serializable record of one evidence computation."""

    condition_id: str
    params: dict = field(default_factory=dict)
    checkpoints: tuple = ()
    diagnostics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    verdict: str = INCONCLUSIVE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoints"] = list(self.checkpoints)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2,
                          default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON-serializable: {type(x)}")
