"""Monte-Carlo evaluation of overbooking policies against ground truth.

Each replication draws one synthetic clinic week: a schedule, the
patients filling it, and attendance uniforms. Policies then decide how
many extra appointments to add per hour block, and every policy is scored
against the *same* draws (common random numbers), so policy differences
are not buried under sampling noise. Weeks rotate through the calendar
year so seasonal effects average out the way they do in a full history.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from typing import Sequence

import numpy as np

from .datagen import (
    GenerationResult,
    GeneratorConfig,
    generate_history,
    inverse_logit,
    patient_intercepts,
    provider_site,
    provider_specialty,
)
from .forest import FrozenForestModel, predict_proba
from .ingest import DEFAULT_PSEUDO_COUNT, FeatureVector
from .schema import Outcome, season_index

# Overbooks drawn per block never exceed the block's physical slot count;
# the pre-drawn candidate pool is sized accordingly for common random numbers.
MAX_OVERBOOK_PER_BLOCK_FACTOR = 1


class IncompatibleModelSchema(ValueError):
    pass


class PolicyKind(str, Enum):
    NO_OVERBOOK = "no-overbook"
    FIXED_PER_DAY = "fixed-per-day"
    BASELINE_RATE_FLOOR = "baseline-rate-floor"
    MODEL_EXPECTATION_FLOOR = "model-expectation-floor"
    ORACLE_FLOOR = "oracle-floor"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    per_day: int = 0  # used by fixed-per-day only

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.FIXED_PER_DAY:
            return f"{self.kind.value}({self.per_day})"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "Policy":
        text = text.strip().lower()
        if text.startswith("fixed-per-day"):
            inner = text[len("fixed-per-day"):].strip("():")
            return cls(PolicyKind.FIXED_PER_DAY, per_day=int(inner or 1))
        return cls(PolicyKind(text))


@dataclass
class MetricSummary:
    mean: float
    se: float

    def as_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "se": self.se}


@dataclass
class SimulationReport:
    policy: str
    n_replications: int
    seed: int
    utilization_pct: MetricSummary
    avg_overbooked_per_day: MetricSummary
    n_providers_overbooked: MetricSummary
    collision_rate: MetricSummary
    mean_excess_arrivals: MetricSummary
    per_replication_utilization: list[float] = field(default_factory=list)

    def as_dict(self) -> dict[str, object]:
        return {
            "policy": self.policy,
            "n_replications": self.n_replications,
            "seed": self.seed,
            "utilization_pct": self.utilization_pct.as_dict(),
            "avg_overbooked_per_day": self.avg_overbooked_per_day.as_dict(),
            "n_providers_overbooked": self.n_providers_overbooked.as_dict(),
            "collision_rate": self.collision_rate.as_dict(),
            "mean_excess_arrivals": self.mean_excess_arrivals.as_dict(),
        }


@dataclass
class _PatientStats:
    """Per-patient history snapshot frozen at the end of the generated history."""

    scheduled: np.ndarray
    missed: np.ndarray
    global_rate: float

    @classmethod
    def from_history(cls, history: GenerationResult) -> "_PatientStats":
        config = history.config
        scheduled = np.zeros(config.n_patients, dtype=np.int64)
        missed = np.zeros(config.n_patients, dtype=np.int64)
        for record in history.records:
            if record.outcome is Outcome.PENDING:
                continue
            i = int(record.patient_id[1:]) - 1
            scheduled[i] += 1
            missed[i] += record.outcome is Outcome.MISSED
        total = int(scheduled.sum())
        rate = float(missed.sum() / total) if total else 0.25
        return cls(scheduled=scheduled, missed=missed, global_rate=rate)

    def smoothed_rates(self, pseudo_count: float = DEFAULT_PSEUDO_COUNT) -> np.ndarray:
        return (self.missed + pseudo_count * self.global_rate) / (self.scheduled + pseudo_count)


@dataclass
class _WeekDraw:
    """One replication's schedule, patients, and attendance uniforms."""

    week_start: date
    n_blocks: int
    slots: int
    block_provider: np.ndarray  # (n_blocks,)
    block_day: np.ndarray  # (n_blocks,) weekday offset 0..4
    base_patient: np.ndarray  # (n_blocks, slots)
    base_true_p: np.ndarray
    base_uniform: np.ndarray
    base_model_p: np.ndarray | None
    base_baseline_p: np.ndarray
    pool_true_p: np.ndarray  # (n_blocks, max_overbook)
    pool_uniform: np.ndarray


def _sim_week_starts(config: GeneratorConfig, n_replications: int) -> list[date]:
    """Replication weeks rotate through 52 weeks following the history horizon."""
    anchor = config.start_date + timedelta(days=config.horizon_days + config.pending_days)
    anchor += timedelta(days=(7 - anchor.weekday()) % 7)  # next Monday
    return [anchor + timedelta(weeks=r % 52) for r in range(n_replications)]


def _block_features(
    config: GeneratorConfig,
    week_start: date,
    block_provider: np.ndarray,
    block_day: np.ndarray,
    block_hour: np.ndarray,
    patient: np.ndarray,
    lead_days: np.ndarray,
    stats: _PatientStats,
    pseudo_count: float,
) -> list[FeatureVector]:
    rates = stats.smoothed_rates(pseudo_count)
    vectors = []
    for i in range(patient.size):
        day = week_start + timedelta(days=int(block_day[i]))
        p = int(patient[i])
        vectors.append(
            FeatureVector(
                appointment_id=f"SIM{i:07d}",
                scheduled_at=datetime.combine(day, time(int(block_hour[i]), 0), config.tz),
                lead_time_days=float(lead_days[i]),
                hour_of_day=int(block_hour[i]),
                day_of_week=int(block_day[i]),
                season=("winter", "spring", "summer", "fall")[season_index(day)],
                provider_specialty=provider_specialty(int(block_provider[i])),
                site_id=provider_site(int(block_provider[i]), config),
                patient_hist_rate=float(rates[p]),
                patient_prior_appointments=int(stats.scheduled[p]),
                label=None,
            )
        )
    return vectors


def _draw_week(
    config: GeneratorConfig,
    base_logit: float,
    intercepts: np.ndarray,
    stats: _PatientStats,
    model: FrozenForestModel | None,
    week_start: date,
    rep_seed: np.random.SeedSequence,
    pseudo_count: float,
) -> _WeekDraw:
    hours = np.arange(config.open_hour, config.close_hour)
    n_prov, n_hours, slots = config.n_providers, hours.size, config.slots_per_hour
    n_blocks = n_prov * 5 * n_hours
    max_ob = slots * MAX_OVERBOOK_PER_BLOCK_FACTOR

    children = rep_seed.spawn(3)
    rng_sched = np.random.default_rng(children[0])
    rng_attend = np.random.default_rng(children[1])
    rng_pool = np.random.default_rng(children[2])

    idx = np.arange(n_blocks)
    block_hour = hours[idx % n_hours]
    block_day = (idx // n_hours) % 5
    block_provider = idx // (n_hours * 5)

    dates = [week_start + timedelta(days=d) for d in range(5)]
    seasons = np.array([season_index(d) for d in dates])
    dows = np.array([d.weekday() for d in dates])

    def covariates(hour_arr, day_arr, lead_arr):
        return (
            config.coef_lead_time * lead_arr
            + np.asarray(config.coef_hour_of_day)[hour_arr]
            + np.asarray(config.coef_day_of_week)[dows[day_arr]]
            + np.asarray(config.coef_season)[seasons[day_arr]]
        )

    base_patient = rng_sched.integers(0, config.n_patients, (n_blocks, slots))
    base_lead = rng_sched.lognormal(math.log(config.lead_time_median_days), config.lead_time_sigma, (n_blocks, slots))
    hour_grid = np.repeat(block_hour, slots).reshape(n_blocks, slots)
    day_grid = np.repeat(block_day, slots).reshape(n_blocks, slots)
    eta = base_logit + intercepts[base_patient] + covariates(hour_grid, day_grid, base_lead)
    base_true_p = np.asarray(inverse_logit(eta))
    base_uniform = rng_attend.uniform(size=(n_blocks, slots))

    # overbook candidates: near-term bookings from the same population
    pool_patient = rng_pool.integers(0, config.n_patients, (n_blocks, max_ob))
    pool_lead = rng_pool.uniform(0.0, 2.0, (n_blocks, max_ob))
    pool_hour = np.repeat(block_hour, max_ob).reshape(n_blocks, max_ob)
    pool_day = np.repeat(block_day, max_ob).reshape(n_blocks, max_ob)
    pool_eta = base_logit + intercepts[pool_patient] + covariates(pool_hour, pool_day, pool_lead)
    pool_true_p = np.asarray(inverse_logit(pool_eta))
    pool_uniform = rng_pool.uniform(size=(n_blocks, max_ob))

    rates = stats.smoothed_rates(pseudo_count)
    base_baseline_p = rates[base_patient]

    base_model_p = None
    if model is not None:
        vectors = _block_features(
            config, week_start,
            np.repeat(block_provider, slots), day_grid.ravel(), hour_grid.ravel(),
            base_patient.ravel(), base_lead.ravel(), stats, pseudo_count,
        )
        base_model_p = predict_proba(model, vectors).reshape(n_blocks, slots)

    return _WeekDraw(
        week_start=week_start,
        n_blocks=n_blocks,
        slots=slots,
        block_provider=block_provider,
        block_day=block_day,
        base_patient=base_patient,
        base_true_p=base_true_p,
        base_uniform=base_uniform,
        base_model_p=base_model_p,
        base_baseline_p=base_baseline_p,
        pool_true_p=pool_true_p,
        pool_uniform=pool_uniform,
    )


def _overbooks_for(policy: Policy, draw: _WeekDraw, config: GeneratorConfig) -> np.ndarray:
    max_ob = draw.pool_true_p.shape[1]
    if policy.kind is PolicyKind.NO_OVERBOOK:
        return np.zeros(draw.n_blocks, dtype=np.int64)
    if policy.kind is PolicyKind.FIXED_PER_DAY:
        # spread k overbooks round-robin over each provider-day's blocks
        counts = np.zeros(draw.n_blocks, dtype=np.int64)
        n_hours = config.close_hour - config.open_hour
        for prov in range(config.n_providers):
            for day in range(5):
                block_ids = np.nonzero((draw.block_provider == prov) & (draw.block_day == day))[0]
                for j in range(policy.per_day):
                    counts[block_ids[j % n_hours]] += 1
        return np.minimum(counts, max_ob)
    if policy.kind is PolicyKind.BASELINE_RATE_FLOOR:
        sums = draw.base_baseline_p.sum(axis=1)
    elif policy.kind is PolicyKind.MODEL_EXPECTATION_FLOOR:
        if draw.base_model_p is None:
            raise IncompatibleModelSchema("model-expectation-floor requires a trained model")
        sums = draw.base_model_p.sum(axis=1)
    elif policy.kind is PolicyKind.ORACLE_FLOOR:
        sums = draw.base_true_p.sum(axis=1)
    else:  # pragma: no cover
        raise ValueError(f"unknown policy {policy}")
    return np.minimum(np.floor(sums).astype(np.int64), max_ob)


@dataclass
class _RepMetrics:
    utilization_pct: float
    avg_overbooked_per_day: float
    n_providers_overbooked: int
    collision_rate: float
    mean_excess_arrivals: float


def _score_policy(policy: Policy, draw: _WeekDraw, config: GeneratorConfig) -> _RepMetrics:
    overbooks = _overbooks_for(policy, draw, config)
    base_attend = draw.base_uniform >= draw.base_true_p  # uniform < p means missed
    attend_counts = base_attend.sum(axis=1)

    max_ob = draw.pool_true_p.shape[1]
    take = np.arange(max_ob)[None, :] < overbooks[:, None]
    pool_attend = (draw.pool_uniform >= draw.pool_true_p) & take
    attend_counts = attend_counts + pool_attend.sum(axis=1)

    capacity = draw.n_blocks * draw.slots
    excess = np.maximum(attend_counts - draw.slots, 0)
    providers_overbooked = np.unique(draw.block_provider[overbooks > 0]).size
    return _RepMetrics(
        utilization_pct=100.0 * float(attend_counts.sum()) / capacity,
        avg_overbooked_per_day=float(overbooks.sum()) / 5.0,
        n_providers_overbooked=int(providers_overbooked),
        collision_rate=float((attend_counts > draw.slots).mean()),
        mean_excess_arrivals=float(excess.mean()),
    )


def _summarize(values: list[float]) -> MetricSummary:
    arr = np.asarray(values, dtype=np.float64)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return MetricSummary(mean=float(arr.mean()), se=se)


def _check_model(model: FrozenForestModel | None) -> None:
    if model is None:
        return
    from .forest import ensure_feature_schema
    from .ingest import FEATURE_CSV_COLUMNS

    try:
        ensure_feature_schema(model, FEATURE_CSV_COLUMNS)
    except Exception as exc:
        raise IncompatibleModelSchema(str(exc)) from exc


def compare_policies(
    history: GenerationResult | GeneratorConfig,
    policies: Sequence[Policy],
    model: FrozenForestModel | None = None,
    n_replications: int = 100,
    seed: int = 0,
    pseudo_count: float = DEFAULT_PSEUDO_COUNT,
) -> list[SimulationReport]:
    """Score every policy on common random numbers; ranked by mean utilization.

    Identical policies produce identical rows, and the whole table is a
    deterministic function of (history, policies, n_replications, seed).
    """
    if isinstance(history, GeneratorConfig):
        history = generate_history(history)
    _check_model(model)
    config = history.config
    intercepts = patient_intercepts(config)
    stats = _PatientStats.from_history(history)
    weeks = _sim_week_starts(config, n_replications)
    root = np.random.SeedSequence(seed)
    rep_seeds = root.spawn(n_replications)

    needs_model = any(p.kind is PolicyKind.MODEL_EXPECTATION_FLOOR for p in policies)
    draw_model = model if needs_model else None
    if needs_model and model is None:
        raise IncompatibleModelSchema("model-expectation-floor requires a trained model")

    per_policy: dict[int, list[_RepMetrics]] = {i: [] for i in range(len(policies))}
    for r in range(n_replications):
        draw = _draw_week(config, history.base_logit, intercepts, stats, draw_model,
                          weeks[r], rep_seeds[r], pseudo_count)
        for i, policy in enumerate(policies):
            per_policy[i].append(_score_policy(policy, draw, config))

    reports = []
    for i, policy in enumerate(policies):
        metrics = per_policy[i]
        reports.append(
            SimulationReport(
                policy=policy.label,
                n_replications=n_replications,
                seed=seed,
                utilization_pct=_summarize([m.utilization_pct for m in metrics]),
                avg_overbooked_per_day=_summarize([m.avg_overbooked_per_day for m in metrics]),
                n_providers_overbooked=_summarize([float(m.n_providers_overbooked) for m in metrics]),
                collision_rate=_summarize([m.collision_rate for m in metrics]),
                mean_excess_arrivals=_summarize([m.mean_excess_arrivals for m in metrics]),
                per_replication_utilization=[m.utilization_pct for m in metrics],
            )
        )
    return sorted(reports, key=lambda rep: -rep.utilization_pct.mean)


def simulate_policy(
    history: GenerationResult | GeneratorConfig,
    policy: Policy,
    model: FrozenForestModel | None = None,
    n_replications: int = 100,
    seed: int = 0,
    pseudo_count: float = DEFAULT_PSEUDO_COUNT,
) -> SimulationReport:
    [report] = compare_policies(history, [policy], model, n_replications, seed, pseudo_count)
    return report


def reports_to_json(reports: Sequence[SimulationReport]) -> str:
    return json.dumps([r.as_dict() for r in reports], indent=2)


def reports_to_text(reports: Sequence[SimulationReport]) -> str:
    header = (
        f"{'policy':<28} {'util%':>8} {'se':>6} {'ob/day':>8} {'providers':>9} "
        f"{'collide':>8} {'excess':>8}"
    )
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.policy:<28} {r.utilization_pct.mean:>8.2f} {r.utilization_pct.se:>6.3f} "
            f"{r.avg_overbooked_per_day.mean:>8.2f} {r.n_providers_overbooked.mean:>9.2f} "
            f"{r.collision_rate.mean:>8.3f} {r.mean_excess_arrivals.mean:>8.3f}"
        )
    return "\n".join(lines)
