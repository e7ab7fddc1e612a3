"""Seeded synthetic cohorts with a known per-day risk process.

Each stay carries hidden AR(1) channel latents; a day's injury hazard is
horizon_hazard_scale * sigmoid(risk intercept + age and admission-type terms
+ sum of channel weights * latents). Observed events are noisy views of the
latents, Braden totals are a noisy decreasing function of the same risk, and
the injury is the first day whose uniform draw falls under the hazard, placed
uniformly (strictly after day start) within that day. Because the hazards are
known, the exact probability that a day's 7-day horizon contains the injury
is emitted to oracle.csv for every day the cohort module will enumerate.

Every random draw comes from a (seed, ...path) keyed stream, so generation
is deterministic regardless of patient order, and all timestamps are whole
seconds so the emitted files are byte-stable.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, asdict
from datetime import timedelta, timezone, datetime
from pathlib import Path

import numpy as np
import yaml

from . import cohort, staymetrics
from ._rng import stream

log = logging.getLogger(__name__)

ORACLE_FILE = "oracle.csv"
HORIZON_DAYS = 7
BRADEN_SPAN = 17.0  # totals live in 23 - [0, 17]

SEX_CATEGORIES = ("F", "M")
ADMISSION_TYPES = ("elective", "emergency", "urgent", "observation", "newborn_transfer")
CARE_UNITS = tuple(
    ["micu", "sicu", "ccu", "csru", "tsicu", "nicu", "burn_icu", "neuro_icu"]
    + [f"ward_{i:02d}" for i in range(1, 26)])  # 8 ICUs + 25 wards = 33 units


class ConfigError(ValueError):
    pass


@dataclass
class ChannelSpec:
    """One roster channel: how often it fires and how values are drawn.

    numeric params: mu, sd, noise (measurement noise as a fraction of sd),
    weight (risk contribution of the latent). flag params: slope (risk link
    on the per-day firing odds). category params: vocab, optional weights,
    change_rate (per-day re-statement rate; the admit event fires whenever
    rate > 0).
    """
    name: str
    value_kind: str
    rate: float
    params: dict = field(default_factory=dict)

    def validate(self):
        if self.value_kind not in ("numeric", "category", "flag"):
            raise ConfigError(f"channel {self.name}: bad value_kind "
                              f"{self.value_kind!r}")
        if self.rate < 0:
            raise ConfigError(f"channel {self.name}: negative rate")
        if self.value_kind == "numeric":
            for key in ("mu", "sd"):
                if key not in self.params:
                    raise ConfigError(f"channel {self.name}: missing {key!r}")
        if self.value_kind == "category" and not self.params.get("vocab"):
            raise ConfigError(f"channel {self.name}: empty vocabulary")


def default_channels() -> list:
    vit = [
        # name, mu, sd, weight
        ("heart_rate", 86.0, 14.0, 0.9),
        ("resp_rate", 19.0, 4.5, 0.7),
        ("spo2", 96.0, 2.4, -0.6),
        ("temperature", 36.9, 0.5, 0.5),
        ("sbp", 121.0, 17.0, -0.8),
        ("dbp", 68.0, 11.0, -0.4),
        ("mean_bp", 84.0, 12.0, 0.0),
        ("cvp", 8.0, 3.0, 0.3),
        ("gcs_total", 13.5, 2.2, -0.7),
        ("fio2", 38.0, 14.0, 0.6),
        ("pain_score", 3.0, 2.1, 0.0),
        ("urine_output", 110.0, 45.0, 0.0),
    ]
    lab = [
        ("hemoglobin", 11.4, 1.9, -0.5),
        ("wbc", 9.8, 3.6, 0.4),
        ("creatinine", 1.3, 0.8, 0.5),
        ("albumin", 3.3, 0.6, -0.6),
        ("lactate", 1.9, 1.0, 0.6),
        ("sodium", 139.0, 4.2, 0.0),
    ]
    channels = [
        ChannelSpec(name, "numeric", 3.0,
                    {"mu": mu, "sd": sd, "noise": 0.22, "weight": w})
        for name, mu, sd, w in vit
    ]
    channels += [
        ChannelSpec(name, "numeric", 0.9,
                    {"mu": mu, "sd": sd, "noise": 0.2, "weight": w})
        for name, mu, sd, w in lab
    ]
    channels += [
        ChannelSpec("vasopressor", "flag", 0.10, {"slope": 0.8}),
        ChannelSpec("ventilation", "flag", 0.14, {"slope": 0.7}),
        ChannelSpec("surgery", "flag", 0.05, {"slope": 0.0}),
        ChannelSpec("transfer", "flag", 0.07, {"slope": 0.0}),
        ChannelSpec("admission_type", "category", 1.0,
                    {"vocab": list(ADMISSION_TYPES),
                     "weights": [0.22, 0.42, 0.2, 0.12, 0.04],
                     "change_rate": 0.0}),
        ChannelSpec("care_unit", "category", 1.0,
                    {"vocab": list(CARE_UNITS), "change_rate": 0.12}),
    ]
    return channels


@dataclass
class GeneratorConfig:
    n_patients: int = 2000
    seed: int = 42
    stay_length_log_mean: float = 0.0    # ln(days); median ~1 day
    stay_length_log_sd: float = 0.55
    min_stay_days: float = 0.6
    max_stay_days: float = 14.0
    repeat_stay_prob: float = 0.16
    admit_start: str = "2019-01-01T00:00:00Z"
    admit_span_days: float = 730.0
    ar_rho: float = 0.85
    risk_intercept: float = -2.05
    risk_age_weight: float = 0.5
    admission_type_offsets: dict = field(default_factory=lambda: {
        "elective": -0.4, "emergency": 0.35, "urgent": 0.15,
        "observation": -0.15, "newborn_transfer": 0.0})
    horizon_hazard_scale: float = 0.17
    braden_noise_sd: float = 2.6
    stage1_noise_rate: float = 0.02
    channels: list = field(default_factory=default_channels)

    def validate(self):
        if self.n_patients <= 0:
            raise ConfigError("n_patients must be positive")
        if not 0 < self.horizon_hazard_scale <= 1:
            raise ConfigError("horizon_hazard_scale must be in (0, 1]")
        if self.braden_noise_sd < 0:
            raise ConfigError("braden_noise_sd must be non-negative")
        if not 0 <= self.ar_rho < 1:
            raise ConfigError("ar_rho must be in [0, 1)")
        if self.min_stay_days <= 0 or self.max_stay_days < self.min_stay_days:
            raise ConfigError("bad stay length bounds")
        if not 0 <= self.repeat_stay_prob < 1:
            raise ConfigError("repeat_stay_prob must be in [0, 1)")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate channel names in roster")
        for ch in self.channels:
            ch.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = [asdict(c) for c in self.channels]
        return d

    @classmethod
    def from_dict(cls, payload) -> "GeneratorConfig":
        payload = dict(payload)
        if "channels" in payload:
            payload["channels"] = [ChannelSpec(**c) for c in payload["channels"]]
        return cls(**payload)

    @classmethod
    def from_file(cls, path) -> "GeneratorConfig":
        with open(path, encoding="utf-8") as fh:
            payload = yaml.safe_load(fh) or {}
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: expected a mapping")
        try:
            return cls.from_dict(payload)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 \
        else math.exp(z) / (1.0 + math.exp(z))


def _ar1_path(rng, n, rho):
    x = np.empty(n, dtype=np.float64)
    x[0] = rng.standard_normal()
    innov = math.sqrt(1.0 - rho * rho)
    for d in range(1, n):
        x[d] = rho * x[d - 1] + innov * rng.standard_normal()
    return x


def _uniform_ts(rng, day_start, day_len):
    return day_start + int(rng.random() * day_len)


@dataclass
class _Stay:
    record: cohort.StayRecord
    events: list
    oracle_rows: list  # (day_index, probability)
    injured: bool


def _generate_stay(cfg: GeneratorConfig, pid, sid, p_idx, q_idx, admit,
                   age_years):
    rng_s = stream(cfg.seed, "stay", p_idx, q_idx)
    length_days = float(np.clip(
        rng_s.lognormal(cfg.stay_length_log_mean, cfg.stay_length_log_sd),
        cfg.min_stay_days, cfg.max_stay_days))
    n_secs = max(int(round(length_days * 86400.0)), 3600)
    discharge = admit + n_secs
    n_days = math.ceil(n_secs / 86400.0)

    numeric = [c for c in cfg.channels if c.value_kind == "numeric"]
    latents = {}
    for ch in numeric:
        latents[ch.name] = _ar1_path(
            stream(cfg.seed, "stay", p_idx, q_idx, "lat", ch.name),
            n_days, cfg.ar_rho)

    # admission type drawn first so its risk offset enters the hazard; the
    # stream is kept and reused by the category-event loop below
    adm_type = None
    rng_adm = None
    cat_specs = {c.name: c for c in cfg.channels if c.value_kind == "category"}
    if "admission_type" in cat_specs and cat_specs["admission_type"].rate > 0:
        spec = cat_specs["admission_type"]
        vocab = spec.params["vocab"]
        weights = spec.params.get("weights")
        rng_adm = stream(cfg.seed, "stay", p_idx, q_idx, "ch", "admission_type")
        adm_type = str(rng_adm.choice(vocab, p=weights))

    type_offset = cfg.admission_type_offsets.get(adm_type, 0.0) if adm_type else 0.0
    age_term = cfg.risk_age_weight * (age_years - 60.0) / 20.0
    z = np.full(n_days, cfg.risk_intercept + age_term + type_offset)
    for ch in numeric:
        w = ch.params.get("weight", 0.0)
        if w:
            z += w * latents[ch.name]
    hazard = np.array([cfg.horizon_hazard_scale * _sigmoid(v) for v in z])

    rng_inj = stream(cfg.seed, "stay", p_idx, q_idx, "injury")
    injury_day = None
    for d in range(n_days):
        if rng_inj.random() < hazard[d]:
            injury_day = d
            break

    def day_window(d):
        start = admit + d * 86400
        return start, min(86400, discharge - start)

    events = []
    injury_ts = None
    if injury_day is not None:
        start, day_len = day_window(injury_day)
        injury_ts = start + 1 + int(rng_inj.random() * (day_len - 1))
        roll = rng_inj.random()
        if roll < 0.60:
            stage_value, stage_kind = "2", "numeric"
        elif roll < 0.80:
            stage_value, stage_kind = "3", "numeric"
        elif roll < 0.90:
            stage_value, stage_kind = "4", "numeric"
        elif roll < 0.95:
            stage_value, stage_kind = "unstageable", "category"
        else:
            stage_value, stage_kind = "deep_tissue", "category"
        value = float(stage_value) if stage_kind == "numeric" else stage_value
        events.append(cohort.ClinicalEvent(sid, float(injury_ts),
                                           cohort.INJURY_CHANNEL, stage_kind,
                                           value))

    # one Braden total per day: a morning assessment (first hour of the day)
    # whose value is a noisy decreasing function of the day's risk
    rng_b = stream(cfg.seed, "stay", p_idx, q_idx, "braden")
    for d in range(n_days):
        start, day_len = day_window(d)
        ts = _uniform_ts(rng_b, start, max(1.0, min(3600.0, day_len - 1)))
        ideal = 23.0 - BRADEN_SPAN * _sigmoid(z[d])
        total = int(np.clip(round(ideal + rng_b.normal(0.0, cfg.braden_noise_sd)),
                            6, 23))
        events.append(cohort.ClinicalEvent(sid, float(ts),
                                           cohort.BRADEN_CHANNEL, "numeric",
                                           float(total)))

    for ch in cfg.channels:
        if ch.value_kind == "numeric":
            if ch.rate <= 0:
                continue
            rng_c = stream(cfg.seed, "stay", p_idx, q_idx, "ch", ch.name)
            mu = ch.params["mu"]
            sd = ch.params["sd"]
            noise = ch.params.get("noise", 0.3)
            for d in range(n_days):
                start, day_len = day_window(d)
                for _ in range(rng_c.poisson(ch.rate)):
                    ts = _uniform_ts(rng_c, start, day_len)
                    val = mu + sd * latents[ch.name][d] \
                        + sd * noise * rng_c.standard_normal()
                    events.append(cohort.ClinicalEvent(
                        sid, float(ts), ch.name, "numeric", round(val, 1)))
        elif ch.value_kind == "flag":
            if ch.rate <= 0:
                continue
            rng_c = stream(cfg.seed, "stay", p_idx, q_idx, "ch", ch.name)
            base = min(ch.rate, 0.95)
            logit = math.log(base / (1.0 - base))
            slope = ch.params.get("slope", 0.0)
            for d in range(n_days):
                if rng_c.random() < _sigmoid(logit + slope * z[d]):
                    start, day_len = day_window(d)
                    ts = _uniform_ts(rng_c, start, day_len)
                    events.append(cohort.ClinicalEvent(
                        sid, float(ts), ch.name, "flag", True))
        else:  # category
            if ch.rate <= 0:
                continue
            vocab = ch.params["vocab"]
            weights = ch.params.get("weights")
            if ch.name == "admission_type":
                rng_c = rng_adm
                current = adm_type
            else:
                rng_c = stream(cfg.seed, "stay", p_idx, q_idx, "ch", ch.name)
                current = str(rng_c.choice(vocab, p=weights))
            events.append(cohort.ClinicalEvent(sid, float(admit), ch.name,
                                               "category", current))
            change_rate = ch.params.get("change_rate", 0.0)
            if change_rate > 0:
                for d in range(n_days):
                    start, day_len = day_window(d)
                    for _ in range(rng_c.poisson(change_rate)):
                        ts = _uniform_ts(rng_c, start, day_len)
                        current = str(rng_c.choice(vocab, p=weights))
                        events.append(cohort.ClinicalEvent(
                            sid, float(ts), ch.name, "category", current))

    # stage-1 observations never qualify; harmless distractors
    if cfg.stage1_noise_rate > 0:
        rng_n = stream(cfg.seed, "stay", p_idx, q_idx, "stage1")
        for d in range(n_days):
            if rng_n.random() < cfg.stage1_noise_rate:
                start, day_len = day_window(d)
                ts = _uniform_ts(rng_n, start, day_len)
                events.append(cohort.ClinicalEvent(
                    sid, float(ts), cohort.INJURY_CHANNEL, "numeric", 1.0))

    last_day = injury_day if injury_day is not None else n_days - 1
    oracle_rows = []
    for d in range(last_day + 1):
        stop = min(d + HORIZON_DAYS, n_days - 1)
        surv = 1.0
        for j in range(d, stop + 1):
            surv *= 1.0 - hazard[j]
        oracle_rows.append((d, 1.0 - surv))

    record = cohort.StayRecord(sid, pid, float(admit), float(discharge))
    return _Stay(record, events, oracle_rows, injury_day is not None)


def generate(config: GeneratorConfig, out_dir) -> dict:
    """Write patients.csv, stays.csv, events.csv and oracle.csv; returns a
    summary with counts and positive-stay prevalence."""
    config.validate()
    out_dir = Path(out_dir)

    admit_base = cohort.parse_timestamp(config.admit_start)
    span_secs = config.admit_span_days * 86400.0

    patients = []
    stays = []
    all_events = []
    oracle = []  # (stay_id, day_index, probability)
    n_injured = 0

    for p_idx in range(config.n_patients):
        rng_p = stream(config.seed, "patient", p_idx)
        pid = f"p{p_idx:06d}"
        sex = SEX_CATEGORIES[0] if rng_p.random() < 0.53 else SEX_CATEGORIES[1]
        age0 = 18.3 + 71.0 * rng_p.random()
        n_stays = 1
        while n_stays < 4 and rng_p.random() < config.repeat_stay_prob:
            n_stays += 1
        first_admit = int(admit_base + rng_p.random() * span_secs)

        birth = (datetime.fromtimestamp(first_admit, tz=timezone.utc).date()
                 - timedelta(days=int(age0 * 365.2425)))
        patients.append(cohort.PatientRecord(pid, birth, sex))

        admit = first_admit
        for q_idx in range(n_stays):
            if q_idx > 0:
                gap_days = 5.0 + 120.0 * rng_p.random()
                admit = int(admit + gap_days * 86400.0)
            sid = f"{pid}a{q_idx}"
            age_years = cohort.age_at(birth, float(admit))
            stay = _generate_stay(config, pid, sid, p_idx, q_idx, admit,
                                  age_years)
            stays.append(stay.record)
            all_events.extend(stay.events)
            for d, prob in stay.oracle_rows:
                oracle.append((sid, d, prob))
            n_injured += int(stay.injured)
            admit = int(stay.record.discharge_time)

    out_dir.mkdir(parents=True, exist_ok=True)
    cohort.write_patients(out_dir / cohort.PATIENTS_FILE, patients)
    cohort.write_stays(out_dir / cohort.STAYS_FILE, stays)
    cohort.write_events(out_dir / cohort.EVENTS_FILE, all_events)
    _write_oracle(out_dir / ORACLE_FILE, oracle)

    summary = {
        "patients": len(patients),
        "stays": len(stays),
        "events": len(all_events),
        "positive_stays": n_injured,
        "prevalence": n_injured / len(stays),
        "enumerated_days": len(oracle),
    }
    log.info("generated cohort: %s", summary)
    return summary


def _write_oracle(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stay_id", "day_index", "true_probability"])
        for sid, d, prob in sorted(rows):
            w.writerow([sid, str(d), repr(float(prob))])


def read_oracle(path) -> dict:
    """oracle.csv -> {stay_id: [(day_index, probability), ...]}"""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            out.setdefault(row[0], []).append((int(row[1]), float(row[2])))
    return out


def oracle_best_precision_at_sensitivity(oracle_path, target_sensitivity,
                                         stay_labels=None,
                                         restrict_to=None) -> float:
    """Reference precision of the true-risk scorer at the target sensitivity.

    Stay score = max of the true daily probabilities, evaluated exactly like
    any model. Labels come from the sibling cohort files unless supplied.
    """
    oracle_path = Path(oracle_path)
    per_stay = read_oracle(oracle_path)
    if stay_labels is None:
        store = cohort.apply_filters(cohort.ingest(oracle_path.parent))
        stay_labels = {sid: sid in store.first_stage2 for sid in per_stay}
    scores = []
    for sid, rows in sorted(per_stay.items()):
        if restrict_to is not None and sid not in restrict_to:
            continue
        probs = tuple(p for _, p in sorted(rows))
        scores.append(staymetrics.StayScore(sid, probs, bool(stay_labels[sid]),
                                            tuple(d for d, _ in sorted(rows))))
    if not any(sc.stay_label for sc in scores):
        raise staymetrics.MetricError("no positives")
    curve = staymetrics.pr_curve(scores)
    return staymetrics.precision_at_sensitivity(curve, target_sensitivity).precision
