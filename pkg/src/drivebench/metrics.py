"""Displacement metrics, format-error rates, and run aggregation.

ADE at a horizon of k seconds averages the per-point displacements over
the first 2k points (2 Hz tick); ade_avg is the mean of the three
horizon ADEs, not the mean over all six points. FDE is the displacement
at the final (3 s) point.

Aggregation is single-threaded with summation in frame_id order so
floating-point results are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .providers import ProviderConfig, estimate_cost
from .records import Frame, FrameResult, Trajectory


@dataclass(frozen=True)
class DisplacementMetrics:
    ade_1s: float
    ade_2s: float
    ade_3s: float
    ade_avg: float
    fde: float


@dataclass(frozen=True)
class FilterReport:
    """Outcome of the cross-model common-frame filter."""

    retained_frame_ids: tuple[str, ...]
    retention_rate: float
    excluded: dict[str, tuple[str, ...]]  # frame_id -> culpable models


@dataclass(frozen=True)
class RunSummary:
    """One model's row: efficiency over all attempted frames,
    displacement over the retained (filtered) frames only."""

    model_name: str
    frames_total: int
    fe_rate: float
    fe_corr_rate: float
    mean_latency_s: float
    mean_input_tokens: float
    mean_output_tokens: float
    mean_cost_cents: float
    displacement: DisplacementMetrics | None
    frames_scored: int


def displacement_errors(
    predicted: Trajectory, ground_truth: Trajectory
) -> DisplacementMetrics:
    if len(predicted.points) != 6 or len(ground_truth.points) != 6:
        raise ValueError(
            f"expected 6-point trajectories, got {len(predicted.points)} "
            f"and {len(ground_truth.points)}"
        )
    if predicted.tick != ground_truth.tick:
        raise ValueError(
            f"tick mismatch: {predicted.tick} vs {ground_truth.tick}"
        )
    d = [
        math.hypot(px - gx, py - gy)
        for (px, py), (gx, gy) in zip(predicted.points, ground_truth.points)
    ]
    ade_1s = (d[0] + d[1]) / 2
    ade_2s = (d[0] + d[1] + d[2] + d[3]) / 4
    ade_3s = sum(d) / 6
    return DisplacementMetrics(
        ade_1s=ade_1s,
        ade_2s=ade_2s,
        ade_3s=ade_3s,
        ade_avg=(ade_1s + ade_2s + ade_3s) / 3,
        fde=d[5],
    )


def horizon_average(ade_1s: float, ade_2s: float, ade_3s: float) -> float:
    """The ade_avg definition on already-computed horizon ADEs."""
    return (ade_1s + ade_2s + ade_3s) / 3


def common_frame_filter(
    runs: Mapping[str, Iterable[str]], universe: Iterable[str]
) -> FilterReport:
    """Keep only frames every run predicted validly.

    runs maps model name -> frame_ids with valid (possibly corrected)
    predictions; universe is the full frame_id set under evaluation.
    """
    universe_set = set(universe)
    valid_by_model = {m: set(ids) for m, ids in runs.items()}
    for model, ids in valid_by_model.items():
        stray = ids - universe_set
        if stray:
            raise ValueError(
                f"run {model!r} references unknown frame_id {sorted(stray)[0]!r}"
            )
    retained = set(universe_set)
    for ids in valid_by_model.values():
        retained &= ids
    excluded: dict[str, tuple[str, ...]] = {}
    for frame_id in sorted(universe_set - retained):
        culpable = tuple(
            sorted(m for m, ids in valid_by_model.items() if frame_id not in ids)
        )
        excluded[frame_id] = culpable
    rate = 100.0 * len(retained) / len(universe_set) if universe_set else 100.0
    return FilterReport(
        retained_frame_ids=tuple(sorted(retained)),
        retention_rate=rate,
        excluded=excluded,
    )


def fe_rates(results: Iterable[FrameResult]) -> tuple[float, float]:
    """(fe_rate, fe_corr_rate) percents.

    fe counts every non-strict output; fe_corr counts only what stayed
    unparseable after the twelve-value correction.
    """
    results = list(results)
    if not results:
        raise ValueError("fe_rates over an empty result set")
    total = len(results)
    non_strict = sum(1 for r in results if r.parse_status != "strict")
    failed = sum(1 for r in results if r.parse_status == "failed")
    return 100.0 * non_strict / total, 100.0 * failed / total


def summarize(
    model_name: str,
    results: Iterable[FrameResult],
    frames: Mapping[str, Frame],
    provider: ProviderConfig,
    frame_filter: FilterReport,
) -> RunSummary:
    """Aggregate one run. Efficiency means cover all attempted frames
    (cost and latency don't depend on cross-model filtering);
    displacement means cover only the filter's retained frames."""
    results = sorted(results, key=lambda r: r.frame_id)
    if not results:
        raise ValueError("summarize over an empty result set")
    by_id = {r.frame_id: r for r in results}

    fe, fe_corr = fe_rates(results)
    n = len(results)
    mean_latency = sum(r.latency_total for r in results) / n
    mean_in = sum(sum(i for i, _ in r.usage) for r in results) / n
    mean_out = sum(sum(o for _, o in r.usage) for r in results) / n
    mean_cost = (
        sum(
            estimate_cost(
                sum(i for i, _ in r.usage), sum(o for _, o in r.usage), provider
            )
            for r in results
        )
        / n
    )

    sums = [0.0] * 5
    scored = 0
    for frame_id in frame_filter.retained_frame_ids:
        r = by_id.get(frame_id)
        if r is None or r.predicted is None:
            raise ValueError(
                f"retained frame {frame_id!r} has no prediction in run {model_name!r}"
            )
        if frame_id not in frames:
            raise ValueError(f"retained frame {frame_id!r} missing ground truth")
        m = displacement_errors(r.predicted, frames[frame_id].ground_truth)
        for i, v in enumerate((m.ade_1s, m.ade_2s, m.ade_3s, m.ade_avg, m.fde)):
            sums[i] += v
        scored += 1

    displacement = None
    if scored:
        displacement = DisplacementMetrics(
            ade_1s=sums[0] / scored,
            ade_2s=sums[1] / scored,
            ade_3s=sums[2] / scored,
            ade_avg=sums[3] / scored,
            fde=sums[4] / scored,
        )
    return RunSummary(
        model_name=model_name,
        frames_total=n,
        fe_rate=fe,
        fe_corr_rate=fe_corr,
        mean_latency_s=mean_latency,
        mean_input_tokens=mean_in,
        mean_output_tokens=mean_out,
        mean_cost_cents=mean_cost,
        displacement=displacement,
        frames_scored=scored,
    )


def valid_frame_ids(results: Iterable[FrameResult]) -> set[str]:
    """Frames with a usable (strict or corrected) prediction."""
    return {r.frame_id for r in results if r.parse_status != "failed"}
