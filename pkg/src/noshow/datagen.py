"""Synthetic clinic histories with a known ground-truth no-show process.

The generator fills clinic hours with appointments, assigns each one a
true no-show probability from a logistic model (lead time, hour of day,
day of week, season, plus a per-patient random intercept), and draws
outcomes Bernoulli from it. The true probabilities are retained next to
the records so downstream accuracy and calibration can be checked against
a real oracle instead of another model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from .config import ConfigError, get_float_list
from .schema import AppointmentRecord, Outcome, season_index, sort_key

SPECIALTIES = (
    "family_medicine",
    "internal_medicine",
    "pediatrics",
    "cardiology",
    "obgyn",
    "behavioral_health",
)


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic clinic. Defaults carry no signal; see default_config()."""

    n_providers: int = 6
    n_patients: int = 3000
    horizon_days: int = 730
    pending_days: int = 7
    slots_per_hour: int = 4
    open_hour: int = 8
    close_hour: int = 16
    base_logit: float = 0.0
    coef_lead_time: float = 0.0
    coef_hour_of_day: tuple[float, ...] = field(default=(0.0,) * 24)
    coef_day_of_week: tuple[float, ...] = field(default=(0.0,) * 7)
    coef_season: tuple[float, ...] = field(default=(0.0,) * 4)
    patient_propensity_sd: float = 0.0
    target_marginal_rate: float | None = None
    lead_time_median_days: float = 7.0
    lead_time_sigma: float = 1.0
    start_date: date = date(2022, 1, 3)
    utc_offset_minutes: int = -300
    seed: int = 20220501

    @property
    def tz(self) -> timezone:
        return timezone(timedelta(minutes=self.utc_offset_minutes))

    @property
    def duration_minutes(self) -> int:
        return 60 // self.slots_per_hour

    def validate(self) -> None:
        if self.close_hour <= self.open_hour:
            raise InfeasibleConfig("close_hour must be after open_hour")
        if not 0 <= self.open_hour < 24 or not 0 < self.close_hour <= 24:
            raise InfeasibleConfig("clinic hours must lie within a day")
        if self.slots_per_hour < 1 or 60 % self.slots_per_hour != 0:
            raise InfeasibleConfig("slots_per_hour must divide 60")
        if min(self.n_providers, self.n_patients, self.horizon_days) < 1:
            raise InfeasibleConfig("providers, patients, and horizon must be positive")
        if self.pending_days < 0:
            raise InfeasibleConfig("pending_days must be nonnegative")
        if len(self.coef_hour_of_day) != 24 or len(self.coef_day_of_week) != 7 or len(self.coef_season) != 4:
            raise InfeasibleConfig("coefficient vectors must have lengths 24, 7, and 4")
        if self.target_marginal_rate is not None and not 0.0 < self.target_marginal_rate < 1.0:
            raise InfeasibleConfig("target_marginal_rate must be in (0, 1)")
        if self.patient_propensity_sd < 0:
            raise InfeasibleConfig("patient_propensity_sd must be nonnegative")


def default_config(seed: int = 20220501) -> GeneratorConfig:
    """The shipped informative-signal clinic: 25% marginal with real covariate structure.

    Coefficient values are synthetic choices, not estimates of any real
    clinic; they exist so a model has signal to recover.
    """
    hour = [0.0] * 24
    for h in range(24):
        # early-morning and late-afternoon blocks are missed more often
        if h <= 8:
            hour[h] = 0.55
        elif h == 9:
            hour[h] = 0.30
        elif h >= 15:
            hour[h] = 0.45
        elif h in (12, 13):
            hour[h] = 0.15
    dow = [0.40, 0.0, -0.20, -0.10, 0.30, 0.0, 0.0]  # Monday and Friday run worse
    season = [0.35, -0.10, -0.25, -0.05]  # winter, spring, summer, fall
    return GeneratorConfig(
        coef_lead_time=0.035,
        coef_hour_of_day=tuple(hour),
        coef_day_of_week=tuple(dow),
        coef_season=tuple(season),
        patient_propensity_sd=0.7,
        target_marginal_rate=0.25,
        seed=seed,
    )


@dataclass
class GenerationResult:
    records: list[AppointmentRecord]
    truth: dict[str, float]
    base_logit: float
    config: GeneratorConfig


def provider_ids(config: GeneratorConfig) -> list[str]:
    return [f"D{i + 1:02d}" for i in range(config.n_providers)]


def provider_specialty(i: int) -> str:
    return SPECIALTIES[i % len(SPECIALTIES)]


def provider_site(i: int, config: GeneratorConfig) -> str:
    n_sites = min(3, config.n_providers)
    return f"S{i % n_sites + 1}"


def patient_intercepts(config: GeneratorConfig) -> np.ndarray:
    """Per-patient logit intercepts; deterministic for a given config seed."""
    ss = np.random.SeedSequence(config.seed).spawn(4)
    rng = np.random.default_rng(ss[0])
    return rng.normal(0.0, config.patient_propensity_sd, config.n_patients)


def inverse_logit(eta: float | np.ndarray) -> float | np.ndarray:
    out = 1.0 / (1.0 + np.exp(-np.asarray(eta, dtype=float)))
    clipped = np.clip(out, 1e-12, 1.0 - 1e-12)
    return float(clipped) if clipped.ndim == 0 else clipped


def true_probability(record: AppointmentRecord, patient_intercept: float, config: GeneratorConfig) -> float:
    """Ground-truth no-show probability for one appointment; strictly in (0, 1)."""
    local = record.scheduled_at.astimezone(config.tz)
    eta = (
        config.base_logit
        + patient_intercept
        + config.coef_lead_time * record.lead_time_days
        + config.coef_hour_of_day[local.hour]
        + config.coef_day_of_week[local.weekday()]
        + config.coef_season[season_index(local.date())]
    )
    return float(inverse_logit(eta))


def clinic_days(config: GeneratorConfig) -> list[date]:
    """Weekday clinic dates across history plus the pending tail."""
    total = config.horizon_days + config.pending_days
    days = []
    for offset in range(total):
        d = config.start_date + timedelta(days=offset)
        if d.weekday() < 5:
            days.append(d)
    return days


def _schedule_arrays(config: GeneratorConfig, days: list[date]) -> dict[str, np.ndarray]:
    """Flat per-appointment arrays in generation order: day, provider, hour, slot."""
    hours = np.arange(config.open_hour, config.close_hour)
    n_days, n_prov, n_hours, n_slots = len(days), config.n_providers, len(hours), config.slots_per_hour
    n = n_days * n_prov * n_hours * n_slots
    idx = np.arange(n)
    slot = idx % n_slots
    hour = hours[(idx // n_slots) % n_hours]
    prov = (idx // (n_slots * n_hours)) % n_prov
    day = idx // (n_slots * n_hours * n_prov)
    dow = np.array([d.weekday() for d in days])[day]
    season = np.array([season_index(d) for d in days])[day]
    return {"day": day, "provider": prov, "hour": hour, "slot": slot, "dow": dow, "season": season}


def _covariate_logit(config: GeneratorConfig, hour: np.ndarray, dow: np.ndarray,
                     season: np.ndarray, lead_days: np.ndarray) -> np.ndarray:
    return (
        config.coef_lead_time * lead_days
        + np.asarray(config.coef_hour_of_day)[hour]
        + np.asarray(config.coef_day_of_week)[dow]
        + np.asarray(config.coef_season)[season]
    )


def solve_base_logit(eta_rest: np.ndarray, target_rate: float, tol: float = 1e-4) -> float:
    """Bisection for the intercept that makes mean(inverse_logit(b + eta)) hit the target."""
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        rate = float(np.mean(inverse_logit(mid + eta_rest)))
        if abs(rate - target_rate) <= tol * 0.1:
            return mid
        if rate < target_rate:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def generate_history(config: GeneratorConfig) -> GenerationResult:
    """Deterministic synthetic history; outcomes Bernoulli from the true probabilities.

    Appointments on the last `pending_days` of the calendar come out
    Pending (future appointments awaiting scoring); everything earlier
    carries an attended/missed outcome.
    """
    config.validate()
    days = clinic_days(config)
    sched = _schedule_arrays(config, days)
    n = sched["day"].size

    ss = np.random.SeedSequence(config.seed).spawn(4)
    intercepts = patient_intercepts(config)
    rng_patients = np.random.default_rng(ss[1])
    rng_lead = np.random.default_rng(ss[2])
    rng_outcome = np.random.default_rng(ss[3])

    patient = rng_patients.integers(0, config.n_patients, n)
    lead_days_raw = rng_lead.lognormal(math.log(config.lead_time_median_days), config.lead_time_sigma, n)
    lead_minutes = np.rint(lead_days_raw * 1440.0).astype(np.int64)
    lead_days = lead_minutes / 1440.0

    eta_rest = intercepts[patient] + _covariate_logit(config, sched["hour"], sched["dow"], sched["season"], lead_days)

    history_cutoff = config.start_date + timedelta(days=config.horizon_days)
    pending = np.array([days[i] >= history_cutoff for i in sched["day"]])

    base = config.base_logit
    if config.target_marginal_rate is not None:
        base = solve_base_logit(eta_rest[~pending], config.target_marginal_rate)

    probs = inverse_logit(base + eta_rest)
    missed = rng_outcome.uniform(size=n) < probs

    providers = provider_ids(config)
    specialties = [provider_specialty(i) for i in range(config.n_providers)]
    sites = [provider_site(i, config) for i in range(config.n_providers)]
    tz = config.tz
    slot_minutes = config.duration_minutes

    records: list[AppointmentRecord] = []
    truth: dict[str, float] = {}
    for i in range(n):
        day = days[sched["day"][i]]
        p = int(sched["provider"][i])
        scheduled_at = datetime.combine(day, time(int(sched["hour"][i]), int(sched["slot"][i]) * slot_minutes), tz)
        if pending[i]:
            outcome = Outcome.PENDING
        else:
            outcome = Outcome.MISSED if missed[i] else Outcome.ATTENDED
        appointment_id = f"A{i + 1:07d}"
        records.append(
            AppointmentRecord(
                appointment_id=appointment_id,
                provider_id=providers[p],
                provider_specialty=specialties[p],
                patient_id=f"P{int(patient[i]) + 1:05d}",
                site_id=sites[p],
                scheduled_at=scheduled_at,
                booked_at=scheduled_at - timedelta(minutes=int(lead_minutes[i])),
                duration_minutes=slot_minutes,
                outcome=outcome,
            )
        )
        truth[appointment_id] = float(probs[i])

    records.sort(key=sort_key)
    return GenerationResult(records=records, truth=truth, base_logit=base, config=config)


def write_ground_truth_csv(truth: dict[str, float], path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["appointment_id", "true_probability"])
        for appointment_id in sorted(truth):
            writer.writerow([appointment_id, repr(truth[appointment_id])])


def read_ground_truth_csv(path: Path | str) -> dict[str, float]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return {row["appointment_id"]: float(row["true_probability"]) for row in reader}


def config_from_kv(values: dict[str, str]) -> GeneratorConfig:
    """Build a GeneratorConfig from a key-value file's contents."""
    base = GeneratorConfig()
    known = {
        "n_providers": int, "n_patients": int, "horizon_days": int, "pending_days": int,
        "slots_per_hour": int, "open_hour": int, "close_hour": int,
        "base_logit": float, "coef_lead_time": float, "patient_propensity_sd": float,
        "lead_time_median_days": float, "lead_time_sigma": float,
        "utc_offset_minutes": int, "seed": int,
    }
    kwargs: dict[str, object] = {}
    for key, caster in known.items():
        if key in values:
            kwargs[key] = caster(values[key])
    if "target_marginal_rate" in values:
        raw = values["target_marginal_rate"].strip().lower()
        kwargs["target_marginal_rate"] = None if raw in ("", "none") else float(raw)
    if "start_date" in values:
        kwargs["start_date"] = date.fromisoformat(values["start_date"])
    kwargs["coef_hour_of_day"] = tuple(get_float_list(values, "coef_hour_of_day", 24))
    kwargs["coef_day_of_week"] = tuple(get_float_list(values, "coef_day_of_week", 7))
    kwargs["coef_season"] = tuple(get_float_list(values, "coef_season", 4))
    unknown = set(values) - set(known) - {"target_marginal_rate", "start_date",
                                          "coef_hour_of_day", "coef_day_of_week", "coef_season"}
    if unknown:
        raise ConfigError(f"unknown generator config keys: {', '.join(sorted(unknown))}")
    return replace(base, **kwargs)  # type: ignore[arg-type]


def config_to_kv(config: GeneratorConfig) -> dict[str, str]:
    return {
        "n_providers": str(config.n_providers),
        "n_patients": str(config.n_patients),
        "horizon_days": str(config.horizon_days),
        "pending_days": str(config.pending_days),
        "slots_per_hour": str(config.slots_per_hour),
        "open_hour": str(config.open_hour),
        "close_hour": str(config.close_hour),
        "base_logit": repr(config.base_logit),
        "coef_lead_time": repr(config.coef_lead_time),
        "coef_hour_of_day": ", ".join(repr(c) for c in config.coef_hour_of_day),
        "coef_day_of_week": ", ".join(repr(c) for c in config.coef_day_of_week),
        "coef_season": ", ".join(repr(c) for c in config.coef_season),
        "patient_propensity_sd": repr(config.patient_propensity_sd),
        "target_marginal_rate": "none" if config.target_marginal_rate is None else repr(config.target_marginal_rate),
        "lead_time_median_days": repr(config.lead_time_median_days),
        "lead_time_sigma": repr(config.lead_time_sigma),
        "start_date": config.start_date.isoformat(),
        "utc_offset_minutes": str(config.utc_offset_minutes),
        "seed": str(config.seed),
    }
