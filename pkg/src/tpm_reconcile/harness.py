"""Monte-Carlo experiments over TPM configurations.

Each trial draws a fresh correlated key pair, runs both protocol parties
against each other in memory and records how many successful updates the
session needed. Per-configuration statistics give the recommended iteration
budget ``ceil(mean + std)``.

Trial ``t`` of every configuration uses seed ``base_seed + t``, so results do
not depend on worker count or scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .codec import enumerate_structures
from .protocol.messages import AbortReason, Input, Output, unpack_inputs
from .protocol.session import Aborted, Role, Session, SessionConfig, SessionDone, drive
from .qkd_sim import generate_pair
from .tpm import TpmParams, TreeParityMachine, weight_distance

MIN_SAMPLES = 30
PERCENTILES = (50, 85, 90, 95)
THREADS_ENV = "TPM_RECONCILE_THREADS"

SUCCESS = "success"
RETRY_EXHAUSTED = "retry_exhausted"
BUDGET_EXHAUSTED = "budget_exhausted"


class TooFewSamples(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TrialConfig:
    key_length_bits: int
    L: int
    qber_percent: float
    N: int
    K: int

    @property
    def qber(self) -> float:
        return self.qber_percent / 100.0

    @property
    def params(self) -> TpmParams:
        return TpmParams(self.K, self.N, self.L)

    @property
    def config_id(self) -> str:
        return f"m{self.key_length_bits}-L{self.L}-q{self.qber_percent:g}-N{self.N}xK{self.K}"


@dataclass(frozen=True)
class TrialRecord:
    config_id: str
    seed: int
    outcome: str
    iterations_used: Optional[int]
    retries_total: int
    wall_time: float


@dataclass(frozen=True)
class IterationStats:
    trial_count: int
    success_count: int
    retry_exhausted: int
    budget_exhausted: int
    mean: Optional[float]
    std: Optional[float]
    median: Optional[float]
    variance: Optional[float]
    percentiles: dict
    bucket_width: int
    histogram_low: Optional[int]
    histogram: list
    recommended: Optional[int]

    @property
    def usable(self) -> bool:
        return self.recommended is not None

    @classmethod
    def from_iterations(
        cls,
        iterations: Sequence[int],
        trial_count: Optional[int] = None,
        retry_exhausted: int = 0,
        budget_exhausted: int = 0,
        bucket_width: Optional[int] = None,
    ) -> IterationStats:
        its = np.asarray(iterations, dtype=np.float64)
        n = int(its.size)
        if trial_count is None:
            trial_count = n + retry_exhausted + budget_exhausted
        if n == 0:
            return cls(trial_count, 0, retry_exhausted, budget_exhausted,
                       None, None, None, None, {}, bucket_width or 1, None, [], None)
        mean = float(its.mean())
        std = float(its.std())
        lo, hi = int(its.min()), int(its.max())
        if bucket_width is None:
            bucket_width = max(1, math.ceil((hi - lo + 1) / 25))
        low = (lo // bucket_width) * bucket_width
        buckets = (its.astype(np.int64) - low) // bucket_width
        counts = np.bincount(buckets).tolist()
        pct = {str(p): float(np.percentile(its, p)) for p in PERCENTILES}
        recommended = math.ceil(mean + std) if n >= MIN_SAMPLES else None
        return cls(trial_count, n, retry_exhausted, budget_exhausted, mean, std,
                   float(np.median(its)), float(its.var()), pct, bucket_width, low,
                   counts, recommended)

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord], bucket_width: Optional[int] = None) -> IterationStats:
        records = list(records)
        its = [r.iterations_used for r in records if r.outcome == SUCCESS]
        return cls.from_iterations(
            its,
            trial_count=len(records),
            retry_exhausted=sum(r.outcome == RETRY_EXHAUSTED for r in records),
            budget_exhausted=sum(r.outcome == BUDGET_EXHAUSTED for r in records),
            bucket_width=bucket_width,
        )

    def percentile(self, p: int) -> float:
        return self.percentiles[str(p)]

    def histogram_rows(self) -> list[tuple[int, int]]:
        if self.histogram_low is None:
            return []
        return [(self.histogram_low + i * self.bucket_width, c) for i, c in enumerate(self.histogram)]


def recommend(stats: IterationStats) -> int:
    if stats.success_count < MIN_SAMPLES:
        raise TooFewSamples(f"{stats.success_count} successful trials, need {MIN_SAMPLES}")
    return math.ceil(stats.mean + stats.std)


def skewness_check(stats: IterationStats) -> dict:
    if stats.success_count < MIN_SAMPLES:
        raise TooFewSamples(f"{stats.success_count} successful trials, need {MIN_SAMPLES}")
    return {"mean_gt_median": stats.mean > stats.median}


def coverage(records: Iterable[TrialRecord], budget: int) -> float:
    """Fraction of all trials that succeeded within ``budget`` updates."""
    records = list(records)
    ok = sum(r.outcome == SUCCESS and r.iterations_used <= budget for r in records)
    return ok / len(records)


Structures = Union[str, Sequence[tuple[int, int]]]


@dataclass(frozen=True)
class SweepSpec:
    """A grid of configurations to simulate.

    ``structures`` is ``"all"`` (every factor pair), ``"table"`` (pairs with
    at least two inputs per hidden unit) or an explicit list of ``(N, K)``;
    pairs that do not fit a given L are skipped for that L.
    """

    key_length_bits: int
    L_values: tuple
    qber_percents: tuple
    structures: Structures = "all"
    trials: int = 400
    max_iterations: int = 1000
    max_retries: int = 10
    base_seed: int = 0
    digest_check_period: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "L_values", tuple(self.L_values))
        object.__setattr__(self, "qber_percents", tuple(self.qber_percents))
        if not isinstance(self.structures, str):
            object.__setattr__(self, "structures", tuple(tuple(s) for s in self.structures))
        elif self.structures not in ("all", "table"):
            raise ValueError(f"unknown structure filter {self.structures!r}")
        if not self.L_values or not self.qber_percents:
            raise ValueError("L and QBER value lists must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(not 0 <= q <= 50 for q in self.qber_percents):
            raise ValueError("QBER percentages must lie in [0, 50]")

    def structures_for(self, L: int) -> list[tuple[int, int]]:
        pairs = enumerate_structures(self.key_length_bits, L)
        if self.structures == "all":
            return pairs
        if self.structures == "table":
            return [(n, k) for n, k in pairs if n >= 2]
        wanted = set(self.structures)
        return [p for p in pairs if p in wanted]

    def configs(self) -> list[TrialConfig]:
        out = []
        for L in self.L_values:
            structs = self.structures_for(L)
            for q in self.qber_percents:
                out.extend(TrialConfig(self.key_length_bits, L, q, n, k) for n, k in structs)
        if not out:
            raise ValueError("no structure in the filter fits any requested L")
        return out


def _session_pair(config: TrialConfig, seed: int, max_iterations: int, max_retries: int,
                  period: int) -> tuple[Session, Session]:
    pair = generate_pair(config.key_length_bits, config.qber, seed)
    common = dict(
        params=config.params,
        key_length_bits=config.key_length_bits,
        max_iterations=max_iterations,
        max_retries_per_iteration=max_retries,
        digest_check_period=period,
    )
    alice = Session(pair.key_a, SessionConfig(role=Role.INITIATOR, rng_seed=seed, **common))
    bob = Session(pair.key_b, SessionConfig(role=Role.RESPONDER, **common))
    return alice, bob


def _outcome(session: Session) -> str:
    phase = session.phase
    if isinstance(phase, SessionDone):
        return SUCCESS
    if isinstance(phase, Aborted) and phase.reason is AbortReason.RETRY_EXHAUSTED:
        return RETRY_EXHAUSTED
    if isinstance(phase, Aborted) and phase.reason is AbortReason.ITERATION_BUDGET:
        return BUDGET_EXHAUSTED
    raise RuntimeError(f"trial ended in unexpected phase {phase}")


class KeyDisagreement(AssertionError):
    """Both parties finished but hold different keys; always a bug."""


def run_trial(config: TrialConfig, seed: int, max_iterations: int = 1000, max_retries: int = 10,
              digest_check_period: int = 1) -> TrialRecord:
    start = time.perf_counter()
    alice, bob = _session_pair(config, seed, max_iterations, max_retries, digest_check_period)
    drive(alice, bob)
    outcome = _outcome(alice)
    iterations = None
    if outcome == SUCCESS:
        if alice.reconciled_key() != bob.reconciled_key():
            raise KeyDisagreement(f"{config.config_id} seed {seed}")
        iterations = alice.iterations
    return TrialRecord(config.config_id, seed, outcome, iterations, alice.retries_total,
                       time.perf_counter() - start)


def _run_task(task: tuple) -> TrialRecord:
    return run_trial(*task)


def worker_count(requested: Optional[int] = None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _map_tasks(tasks: list[tuple], workers: Optional[int]):
    n = worker_count(workers)
    if n == 1 or len(tasks) < 64:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (n * 8))))


@dataclass
class ConfigResult:
    config: TrialConfig
    stats: IterationStats
    records: list = field(repr=False, default_factory=list)

    def __iter__(self):
        # unpacks as (config, stats)
        return iter((self.config, self.stats))


def run_trials(spec: SweepSpec, workers: Optional[int] = None) -> list[ConfigResult]:
    configs = spec.configs()
    tasks = [
        (c, spec.base_seed + t, spec.max_iterations, spec.max_retries, spec.digest_check_period)
        for c in configs
        for t in range(spec.trials)
    ]
    records = _map_tasks(tasks, workers)
    results = []
    for i, c in enumerate(configs):
        chunk = records[i * spec.trials:(i + 1) * spec.trials]
        results.append(ConfigResult(c, IterationStats.from_records(chunk), chunk))
    return results


@dataclass(frozen=True)
class TrendPoint:
    axis_value: float
    avg_recommended: Optional[float]
    configs_used: int


AXES = ("K", "qber", "L")


def trend_from_results(axis: str, results: Sequence[ConfigResult]) -> list[TrendPoint]:
    """Average recommended iterations grouped by one axis.

    For ``qber`` and ``L`` every usable configuration sharing the axis value
    contributes; for ``qber`` a (L, structure) cell is dropped entirely if
    any of its QBER values is unusable, so every point averages the same
    structures. For ``K`` the value is per structure (averaged over any
    repeated QBER / L values).
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    key = {"K": lambda c: c.K, "qber": lambda c: c.qber_percent, "L": lambda c: c.L}[axis]
    values = sorted({key(r.config) for r in results})
    if len(values) < 2:
        raise ValueError(f"trend along {axis} needs at least two values")
    dropped: set = set()
    if axis == "qber":
        for r in results:
            if not r.stats.usable:
                dropped.add((r.config.L, r.config.N, r.config.K))
    points = []
    for v in values:
        recs = [
            r.stats.recommended
            for r in results
            if key(r.config) == v and r.stats.usable
            and (r.config.L, r.config.N, r.config.K) not in dropped
        ]
        avg = float(np.mean(recs)) if recs else None
        points.append(TrendPoint(v, avg, len(recs)))
    return points


def trend_sweep(axis: str, spec: SweepSpec, workers: Optional[int] = None) -> list[TrendPoint]:
    return trend_from_results(axis, run_trials(spec, workers))


@dataclass(frozen=True)
class EveResult:
    ab_converged_at: int
    eve_match_fraction: float
    eve_converged: bool


def eve_trial(config: TrialConfig, seed: int, max_iterations: int = 1000, max_retries: int = 10,
              eve_weights: Optional[np.ndarray] = None) -> Optional[EveResult]:
    """A-B session watched by a passive attacker with her own machine.

    Eve sees each INPUT (x, tau_A) and the OUTPUT (tau_B). When the public
    outputs agree she trains her machine on x using her own output. Returns
    None when the A-B session itself fails.
    """
    alice, bob = _session_pair(config, seed, max_iterations, max_retries, 1)
    params = config.params
    if eve_weights is None:
        eve = TreeParityMachine.random(params, np.random.default_rng([seed, 0xE5E]))
    else:
        eve = TreeParityMachine(params, eve_weights)
    seen = {}

    def watch(sender: Role, msg) -> None:
        if isinstance(msg, Input):
            seen["input"] = msg
        elif isinstance(msg, Output):
            inp = seen.pop("input")
            if inp.tau == msg.tau:
                x = unpack_inputs(inp.packed_x, params.K, params.N)
                eve.update(x, eve.evaluate(x))

    drive(alice, bob, observer=watch)
    if not isinstance(alice.phase, SessionDone):
        return None
    matching, total = weight_distance(eve, alice.tpm)
    return EveResult(alice.iterations, matching / total, matching == total)


@dataclass(frozen=True)
class EveSummary:
    trials: int
    completed: int
    eve_convergence_rate: float
    mean_match_fraction: float
    mean_ab_iterations: float


def eve_batch(config: TrialConfig, trials: int, base_seed: int = 0, max_iterations: int = 1000,
              max_retries: int = 10) -> EveSummary:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    done = [r for r in (eve_trial(config, base_seed + t, max_iterations, max_retries)
                        for t in range(trials)) if r is not None]
    if not done:
        return EveSummary(trials, 0, float("nan"), float("nan"), float("nan"))
    return EveSummary(
        trials,
        len(done),
        sum(r.eve_converged for r in done) / len(done),
        float(np.mean([r.eve_match_fraction for r in done])),
        float(np.mean([r.ab_converged_at for r in done])),
    )


# output -----------------------------------------------------------------

def stats_to_dict(result: ConfigResult) -> dict:
    c = result.config
    out = {"config_id": c.config_id, **asdict(c)}
    out.update(asdict(result.stats))
    out["usable"] = result.stats.usable
    return out


def write_stats_json(results: Sequence[ConfigResult], path: Union[str, Path]) -> None:
    data = [stats_to_dict(r) for r in results]
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_histogram_csv(results: Sequence[ConfigResult], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_id", "bucket_low", "count"])
        for r in results:
            for low, count in r.stats.histogram_rows():
                w.writerow([r.config.config_id, low, count])


def write_trend_csv(points: Sequence[TrendPoint], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis_value", "avg_recommended"])
        for p in points:
            avg = "" if p.avg_recommended is None else f"{p.avg_recommended:.6f}"
            w.writerow([f"{p.axis_value:g}", avg])
