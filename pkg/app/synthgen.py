"""Seeded synthetic ED cohorts with an adult to pediatric vital-sign shift.

Records are generated in fixed-size blocks, each from its own spawned
substream, so output does not depend on how blocks are scheduled.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from app.constants import N_LEVELS, VITAL_BOUNDS, VITALS
from app.errors import ConfigError
from app.ingest import TriageRecord

logger = logging.getLogger(__name__)

BLOCK_SIZE = 1024

# per-step shift toward more urgent levels, applied as effect * (3 - acuity)
ACUITY_EFFECTS = {
    "temperature": 0.45,
    "heartrate": 9.0,
    "resp_rate": 2.5,
    "o2_sat": -1.6,
    "systolic_bp": 4.0,
    "diastolic_bp": 2.0,
    "pain_score": 1.2,
}

ADULT_VITALS = {
    "temperature": (98.4, 0.9),
    "heartrate": (82.0, 13.0),
    "resp_rate": (17.0, 2.5),
    "o2_sat": (97.5, 1.6),
    "systolic_bp": (132.0, 19.0),
    "diastolic_bp": (78.0, 11.0),
    "pain_score": (5.0, 2.5),
}

ADULT_TEMPLATES = {
    1: (
        "cardiac arrest",
        "unresponsive",
        "respiratory arrest",
        "major trauma unresponsive",
        "seizure ongoing",
        "anaphylaxis airway swelling",
    ),
    2: (
        "chest pain radiating to left arm",
        "shortness of breath severe",
        "stroke symptoms facial droop",
        "altered mental status",
        "gi bleed vomiting blood",
        "suicidal ideation",
    ),
    3: (
        "abdominal pain",
        "fever and cough",
        "vomiting and diarrhea",
        "back pain after fall",
        "headache with vomiting",
        "dizziness and weakness",
    ),
    4: (
        "laceration to hand",
        "ankle injury",
        "urinary symptoms",
        "ear pain",
        "rash",
        "sore throat",
    ),
    5: (
        "medication refill",
        "suture removal",
        "dressing change",
        "work note request",
        "prescription question",
        "recheck wound",
    ),
}

PEDIATRIC_TEMPLATES = {
    1: ("infant not breathing", "child unresponsive blue", "status seizure child"),
    2: ("infant lethargic poor feeding", "child wheezing retractions", "febrile neonate"),
    3: ("child fever vomiting", "toddler fall head bump", "croup barking cough"),
    4: ("child ear tugging", "diaper rash", "child minor cut"),
    5: ("well child recheck", "school note", "vaccine question"),
}

NOISE_FILLERS = ("pt", "states", "reports", "since", "yesterday", "today", "per", "family", "x2", "hx")


@dataclass(frozen=True)
class BracketSpec:
    name: str
    age_lo: int
    age_hi: int
    weight: float
    vitals: Mapping[str, tuple[float, float]]
    unable_rate: float = 0.03
    # share of complaints drawn from the pediatric phrasing bank
    template_shift: float = 0.0


def _vitals(**overrides) -> dict[str, tuple[float, float]]:
    out = dict(ADULT_VITALS)
    out.update(overrides)
    return out


ADULT_BRACKETS = (BracketSpec("Adults", 18, 90, 1.0, ADULT_VITALS),)

PEDIATRIC_BRACKETS = (
    BracketSpec(
        "Infants",
        0,
        1,
        0.20,
        _vitals(
            temperature=(99.0, 1.2),
            heartrate=(135.0, 18.0),
            resp_rate=(36.0, 7.0),
            o2_sat=(97.5, 1.8),
            systolic_bp=(90.0, 11.0),
            diastolic_bp=(55.0, 9.0),
        ),
        unable_rate=0.9,
        template_shift=0.5,
    ),
    BracketSpec(
        "Toddlers/Preschool",
        2,
        5,
        0.25,
        _vitals(
            temperature=(98.9, 1.1),
            heartrate=(115.0, 16.0),
            resp_rate=(27.0, 5.0),
            systolic_bp=(98.0, 11.0),
            diastolic_bp=(60.0, 9.0),
        ),
        unable_rate=0.5,
        template_shift=0.35,
    ),
    BracketSpec(
        "School Age",
        6,
        12,
        0.30,
        _vitals(
            temperature=(98.6, 1.0),
            heartrate=(98.0, 14.0),
            resp_rate=(21.0, 4.0),
            systolic_bp=(106.0, 12.0),
            diastolic_bp=(66.0, 9.0),
        ),
        unable_rate=0.1,
        template_shift=0.2,
    ),
    BracketSpec(
        "Adolescents",
        13,
        17,
        0.25,
        _vitals(
            temperature=(98.5, 0.9),
            heartrate=(86.0, 13.0),
            resp_rate=(18.0, 3.0),
            systolic_bp=(118.0, 14.0),
            diastolic_bp=(72.0, 10.0),
        ),
        unable_rate=0.04,
        template_shift=0.05,
    ),
)


@dataclass(frozen=True)
class CohortSpec:
    n_records: int = 23000
    adult_fraction: float = 0.87
    acuity_prior: tuple[float, ...] = (0.05, 0.25, 0.45, 0.20, 0.05)
    adult_brackets: tuple[BracketSpec, ...] = ADULT_BRACKETS
    pediatric_brackets: tuple[BracketSpec, ...] = PEDIATRIC_BRACKETS
    acuity_effects: Mapping[str, float] = field(default_factory=lambda: dict(ACUITY_EFFECTS))
    # clamp range for generated vitals
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(VITAL_BOUNDS))
    missing_rate: float = 0.05
    text_noise: float = 0.15
    template_swap: float = 0.1
    # 0 gives children adult baselines, 1 the full pediatric offsets
    shift_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_records < 0:
            raise ConfigError("n_records must be >= 0")
        if len(self.acuity_prior) != N_LEVELS:
            raise ConfigError(f"acuity prior needs {N_LEVELS} probabilities")
        if any(p < 0 for p in self.acuity_prior) or abs(sum(self.acuity_prior) - 1.0) > 1e-9:
            raise ConfigError("acuity prior must be non-negative and sum to 1")
        for name in ("adult_fraction", "missing_rate", "text_noise", "template_swap"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name}={value} outside [0, 1]")
        if self.shift_scale < 0:
            raise ConfigError("shift_scale must be >= 0")
        for vital, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ConfigError(f"bounds for {vital} have min > max")
        for brackets in (self.adult_brackets, self.pediatric_brackets):
            if not brackets or sum(b.weight for b in brackets) <= 0:
                raise ConfigError("every cohort needs at least one weighted bracket")
            for b in brackets:
                if b.age_lo > b.age_hi or b.weight < 0:
                    raise ConfigError(f"bracket {b.name} is malformed")
                if not (0 <= b.unable_rate <= 1 and 0 <= b.template_shift <= 1):
                    raise ConfigError(f"bracket {b.name} rates outside [0, 1]")
                for vital, (_, sd) in b.vitals.items():
                    if not sd > 0:
                        raise ConfigError(f"bracket {b.name}: sd for {vital} must be > 0")

    def vital_mean(self, bracket: BracketSpec, vital: str, pediatric: bool) -> float:
        mean = bracket.vitals[vital][0]
        if pediatric:
            adult = self.adult_brackets[0].vitals[vital][0]
            mean = adult + self.shift_scale * (mean - adult)
        return mean

    def expected_heartrate_gap(self) -> float:
        """Expected pediatric minus adult mean heartrate (acuity effects cancel)."""

        def cohort_mean(brackets, pediatric):
            weights = np.array([b.weight for b in brackets], dtype=np.float64)
            means = np.array([self.vital_mean(b, "heartrate", pediatric) for b in brackets])
            return float(weights @ means / weights.sum())

        return cohort_mean(self.pediatric_brackets, True) - cohort_mean(self.adult_brackets, False)


def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def _complaint(rng: np.random.Generator, spec: CohortSpec, bracket: BracketSpec, acuity: int) -> str:
    level = acuity
    if spec.template_swap and rng.random() < spec.template_swap:
        level = int(np.clip(acuity + _pick(rng, (-1, 1)), 1, N_LEVELS))
    bank = ADULT_TEMPLATES
    if bracket.template_shift and rng.random() < bracket.template_shift:
        bank = PEDIATRIC_TEMPLATES
    tokens = _pick(rng, bank[level]).split()
    if spec.text_noise:
        swap = rng.random(len(tokens)) < spec.text_noise
        tokens = [_pick(rng, NOISE_FILLERS) if s else t for t, s in zip(tokens, swap)]
    return " ".join(tokens)


def _vital_value(rng, spec, bracket, vital, acuity, pediatric) -> Optional[float]:
    mean = spec.vital_mean(bracket, vital, pediatric)
    sd = bracket.vitals[vital][1]
    draw = mean + spec.acuity_effects.get(vital, 0.0) * (3 - acuity) + sd * rng.standard_normal()
    lo, hi = spec.bounds.get(vital, VITAL_BOUNDS[vital])
    value = round(draw, 1) if vital == "temperature" else float(round(draw))
    return float(min(max(value, lo), hi))


def _record(rng: np.random.Generator, spec: CohortSpec, index: int) -> TriageRecord:
    pediatric = rng.random() >= spec.adult_fraction
    brackets = spec.pediatric_brackets if pediatric else spec.adult_brackets
    weights = np.array([b.weight for b in brackets], dtype=np.float64)
    bracket = brackets[int(rng.choice(len(brackets), p=weights / weights.sum()))]
    acuity = int(rng.choice(N_LEVELS, p=np.asarray(spec.acuity_prior))) + 1
    age = int(rng.integers(bracket.age_lo, bracket.age_hi + 1))
    gender = int(rng.random() < 0.5)

    vitals = {}
    for vital in VITALS:
        value = _vital_value(rng, spec, bracket, vital, acuity, pediatric)
        vitals[vital] = None if rng.random() < spec.missing_rate else value

    unable = int(rng.random() < bracket.unable_rate)
    pain = _vital_value(rng, spec, bracket, "pain_score", acuity, pediatric)
    pain_score = None if unable or rng.random() < spec.missing_rate else int(pain)

    return TriageRecord(
        record_id=f"syn{spec.seed}-{index:06d}",
        gender=gender,
        age_at_visit=age,
        pain_score=pain_score,
        unable=unable,
        chief_complaint=_complaint(rng, spec, bracket, acuity),
        acuity=acuity,
        **vitals,
    )


def generate_block(spec: CohortSpec, seed_seq: np.random.SeedSequence, block: int) -> list[TriageRecord]:
    rng = np.random.default_rng(seed_seq)
    start = block * BLOCK_SIZE
    stop = min(start + BLOCK_SIZE, spec.n_records)
    return [_record(rng, spec, i) for i in range(start, stop)]


def generate_cohort(spec: CohortSpec, workers: int = 1) -> list[TriageRecord]:
    n_blocks = math.ceil(spec.n_records / BLOCK_SIZE)
    streams = np.random.SeedSequence(spec.seed).spawn(n_blocks)
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda b: generate_block(spec, streams[b], b), range(n_blocks)))
    else:
        blocks = [generate_block(spec, streams[b], b) for b in range(n_blocks)]

    records = [r for block in blocks for r in block]
    n_peds = sum(r.is_pediatric for r in records)
    logger.info("generated %d records (%d pediatric)", len(records), n_peds)
    return records
