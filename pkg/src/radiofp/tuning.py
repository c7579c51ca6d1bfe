"""Closed-loop receiver tuning over a discrete config grid.

The controller evaluates acquisition quality through a caller-supplied
plant function (config -> (recording, rois, objective value)) and searches
a gain x bandwidth grid, either exhaustively or by coordinate descent.
The objective rewards per-burst SNR and penalizes clipping; both are
computable live, without labels.

Ties always break toward lower gain, then lower bandwidth (less distortion
risk, reproducible traces). Strategies are deterministic.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .detect import RegionOfInterest
from .dsp import IqRecording, estimate_snr_db
from .errors import ParameterError, TuningError
from .receiver import ReceiverConfig, clipping_ratio

__all__ = [
    "TuningGrid",
    "ObjectiveParams",
    "TuningStep",
    "TuningTrace",
    "acquisition_metrics",
    "objective",
    "tune",
    "replan_on_drift",
    "write_trace_csv",
]

TRACE_CSV_COLUMNS = ("step", "gain_db", "filter_bw_hz", "objective", "snr_est_db", "clip_ratio", "n_rois")


@dataclass(frozen=True)
class TuningGrid:
    gain_db_values: tuple[float, ...]
    filter_bw_hz_values: tuple[float, ...]

    def __post_init__(self) -> None:
        gains = tuple(float(g) for g in self.gain_db_values)
        bws = tuple(float(b) for b in self.filter_bw_hz_values)
        if not gains or not bws:
            raise ParameterError("grid axes must be non-empty")
        if any(b <= a for a, b in zip(gains, gains[1:])):
            raise ParameterError("gain_db_values must be strictly ascending")
        if any(b <= a for a, b in zip(bws, bws[1:])):
            raise ParameterError("filter_bw_hz_values must be strictly ascending")
        object.__setattr__(self, "gain_db_values", gains)
        object.__setattr__(self, "filter_bw_hz_values", bws)

    @property
    def size(self) -> int:
        return len(self.gain_db_values) * len(self.filter_bw_hz_values)


@dataclass(frozen=True)
class ObjectiveParams:
    clip_weight: float = 0.5
    no_roi_penalty: float = 100.0
    full_scale: float = 1.0


class TuningStep(NamedTuple):
    config: ReceiverConfig
    objective_value: float
    snr_est_db: float
    clip_ratio: float
    n_rois: int


@dataclass(frozen=True)
class TuningTrace:
    steps: tuple[TuningStep, ...]
    best_config: ReceiverConfig
    best_value: float

    @property
    def n_evaluations(self) -> int:
        return len(self.steps)


def _noise_complement(recording: IqRecording, rois: Sequence[RegionOfInterest]) -> np.ndarray:
    mask = np.ones(len(recording), dtype=bool)
    for roi in rois:
        mask[roi.start_sample:roi.end_sample] = False
    return recording.samples[mask]


def acquisition_metrics(
    recording: IqRecording,
    rois: Sequence[RegionOfInterest],
    full_scale: float,
) -> tuple[float, float]:
    """(mean per-ROI SNR estimate in dB or nan, clipping ratio).

    The SNR reference is the part of the recording not covered by any ROI;
    nan means no usable measurement (no ROI, a too-small complement, or a
    complement the ADC quantized to pure silence).
    """
    clip = clipping_ratio(recording, full_scale)
    if not rois:
        return float("nan"), clip
    noise = _noise_complement(recording, rois)
    if noise.size < 8 or not np.any(np.abs(noise) > 0):
        return float("nan"), clip
    snrs = [estimate_snr_db(roi.slice_of(recording), noise) for roi in rois]
    return float(np.mean(snrs)), clip


def objective(
    recording: IqRecording,
    rois: Sequence[RegionOfInterest],
    params: ObjectiveParams = ObjectiveParams(),
) -> float:
    """Acquisition-quality score: mean ROI SNR minus a clipping penalty.

    No detected ROI (or no usable noise-floor region to reference the SNR
    against) earns the flat penalty -no_roi_penalty.
    """
    snr_est, clip = acquisition_metrics(recording, rois, params.full_scale)
    if not np.isfinite(snr_est):
        return -params.no_roi_penalty
    return snr_est - params.clip_weight * 100.0 * clip


PlantFn = Callable[[ReceiverConfig], tuple[IqRecording, Sequence[RegionOfInterest], float]]


def _step_key(step: TuningStep) -> tuple[float, float, float]:
    return (step.objective_value, -step.config.gain_db, -step.config.filter_bw_hz)


class _Session:
    """Bookkeeping for one tuning run: memoized plant calls under a budget."""

    def __init__(self, acquire_fn: PlantFn, template: ReceiverConfig | None, budget: int):
        self.acquire_fn = acquire_fn
        self.template = template
        self.budget = budget
        self.cache: dict[tuple[float, float], TuningStep] = {}
        self.steps: list[TuningStep] = []

    def exhausted(self) -> bool:
        return len(self.steps) >= self.budget

    def evaluate(self, gain_db: float, filter_bw_hz: float) -> TuningStep | None:
        key = (gain_db, filter_bw_hz)
        if key in self.cache:
            return self.cache[key]
        if self.exhausted():
            return None
        if self.template is not None:
            config = replace(self.template, gain_db=gain_db, filter_bw_hz=filter_bw_hz)
        else:
            config = ReceiverConfig(gain_db=gain_db, filter_bw_hz=filter_bw_hz)
        recording, rois, value = self.acquire_fn(config)
        snr_est, clip = acquisition_metrics(recording, rois, config.full_scale)
        step = TuningStep(config, float(value), snr_est, clip, len(rois))
        self.cache[key] = step
        self.steps.append(step)
        return step


def tune(
    acquire_fn: PlantFn,
    grid: TuningGrid,
    strategy: str = "exhaustive",
    budget: int | None = None,
    max_rounds: int = 8,
    config_template: ReceiverConfig | None = None,
) -> TuningTrace:
    """Search the grid for the best receiver config.

    "exhaustive" walks the grid row-major (gain outer, bandwidth inner,
    both ascending) until done or out of budget. "coordinate_descent"
    starts at the grid midpoint and alternately line-searches the gain and
    bandwidth axes until a round brings no improvement, max_rounds is hit,
    or the budget runs out; repeated configs are memoized and do not consume
    budget. Either way the best-so-far trace is returned.

    config_template supplies the non-tuned receiver fields (ADC bits,
    full scale, front-end noise); only gain_db and filter_bw_hz vary.
    """
    if budget is None:
        budget = grid.size
    if budget < 1:
        raise TuningError(f"budget must allow at least one evaluation, got {budget}")
    if max_rounds < 1:
        raise ParameterError(f"max_rounds must be >= 1, got {max_rounds}")

    session = _Session(acquire_fn, config_template, budget)

    if strategy == "exhaustive":
        for gain in grid.gain_db_values:
            for bw in grid.filter_bw_hz_values:
                if session.evaluate(gain, bw) is None:
                    break
            if session.exhausted():
                break
    elif strategy == "coordinate_descent":
        gains, bws = grid.gain_db_values, grid.filter_bw_hz_values
        gi, bi = len(gains) // 2, len(bws) // 2
        current = session.evaluate(gains[gi], bws[bi])
        if current is not None:
            for _round in range(max_rounds):
                moved = False
                for axis in ("gain", "bw"):
                    values = gains if axis == "gain" else bws
                    best_idx, best_step = None, current
                    for idx, value in enumerate(values):
                        g = value if axis == "gain" else gains[gi]
                        b = bws[bi] if axis == "gain" else value
                        step = session.evaluate(g, b)
                        if step is None:
                            break
                        if _step_key(step) > _step_key(best_step):
                            best_idx, best_step = idx, step
                    if best_idx is not None:
                        if axis == "gain":
                            gi = best_idx
                        else:
                            bi = best_idx
                        current = best_step
                        moved = True
                    if session.exhausted():
                        break
                if not moved or session.exhausted():
                    break
    else:
        raise ParameterError(f"unknown strategy '{strategy}'")

    if not session.steps:
        raise TuningError("no evaluation completed within the budget")
    best = max(session.steps, key=_step_key)
    return TuningTrace(tuple(session.steps), best.config, best.objective_value)


def replan_on_drift(previous: TuningTrace, new_objective_at_best: float, drift_threshold: float) -> bool:
    """True when quality at the previously best config degraded enough to re-tune."""
    if not previous.steps:
        raise ParameterError("previous trace is empty")
    return new_objective_at_best < previous.best_value - drift_threshold


def write_trace_csv(trace: TuningTrace, path) -> None:
    """Export a tuning trace for offline plotting (atomic write)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_COLUMNS)
        for i, step in enumerate(trace.steps):
            writer.writerow([
                i,
                repr(step.config.gain_db),
                repr(step.config.filter_bw_hz),
                repr(step.objective_value),
                repr(step.snr_est_db),
                repr(step.clip_ratio),
                step.n_rois,
            ])
    os.replace(tmp, path)
