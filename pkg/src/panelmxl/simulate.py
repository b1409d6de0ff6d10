"""Synthetic experimental designs, forward choice simulation, forecasting.

The generated experiment mirrors the bundled evacuation study: four
alternatives (three rides, one stay option), nine tasks per person ordered
low -> moderate -> extreme flood threat (three tasks per level), ride
attributes drawn uniformly from the published level sets, and peer counts
multinomial over the four alternatives out of a five-member network.
Person covariates are sampled from documented marginals that approximate
the published summary moments; they are approximations, not survey data.

Everything is a deterministic function of the seeds. Each person gets an
independent substream (seeded by the base seed and the person index), so
per-individual simulation can run concurrently without changing output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import (Alternative, AttributeInfo, BINARY, CATEGORICAL,
                      ChoiceDataset, ChoiceTask, CONTINUOUS, PersonRecord,
                      validate_dataset)
from .errors import ConfigurationError, DomainError, IntegrityError
from .estimate import EstimationResult
from .kernel import alternative_utility, choice_probabilities, realize_coefficients
from .modelspec import ModelSpec
from .wtp import ScenarioSpec

RIDE_ALTS = ("1", "2", "3")
STAY_ALT = "4"
ALL_ALTS = (*RIDE_ALTS, STAY_ALT)
TASKS_PER_PERSON = 9
THREAT_BLOCKS = ("low", "low", "low", "moderate", "moderate", "moderate",
                 "extreme", "extreme", "extreme")

COST_LEVELS = (0.0, 10.0, 20.0, 30.0, 40.0)
WALK_LEVELS = (0.0, 0.25, 0.5)
WAIT_LEVELS = (0.0, 30.0, 60.0)
TRAVEL_LEVELS = (20.0, 40.0, 60.0)
CROWDING_STATES = ("private", "front", "back")
PEER_NETWORK = 5
#: Multinomial cell probabilities for the peer counts (ride1, ride2, ride3,
#: stay); chosen so the expected shares track the published per-alternative
#: means (0.27 per ride, 0.19 staying).
PEER_PROBS = (0.27, 0.27, 0.27, 0.19)

#: (attribute, kind) in bundled column order.
DESIGN_ATTRIBUTES = (
    ("cost", CONTINUOUS), ("walk_distance", CONTINUOUS),
    ("wait_time", CONTINUOUS), ("travel_time", CONTINUOUS),
    ("back_seat", BINARY), ("front_seat", BINARY),
    ("peer_share", CONTINUOUS),
    ("moderate_threat", BINARY), ("extreme_threat", BINARY),
    ("flood_threat", CATEGORICAL),
    ("age", CATEGORICAL), ("luggage", CONTINUOUS),
    ("disability", BINARY), ("pets", BINARY),
    ("anxiety", CATEGORICAL), ("fear", CATEGORICAL),
    ("pandemic_risk", BINARY),
)
COVARIATE_NAMES = ("age", "luggage", "disability", "pets", "anxiety", "fear",
                   "pandemic_risk")

_ANXIETY_PROBS = (0.02, 0.03, 0.05, 0.20, 0.70)   # mean 4.53 on 1..5
_FEAR_PROBS = (0.05, 0.02, 0.09, 0.19, 0.65)      # mean 4.37 on 1..5


@dataclass(frozen=True)
class TrueParameters:
    values: np.ndarray
    spec: ModelSpec
    seed: int

    def __post_init__(self):
        if np.asarray(self.values).shape != (self.spec.n_estimated,):
            raise ConfigurationError(
                f"truth vector must have {self.spec.n_estimated} entries")


def truth_from_mapping(spec: ModelSpec, mapping, seed: int) -> TrueParameters:
    """Build a truth vector from a name -> value mapping (canonical names)."""
    values = []
    for name in spec.estimated_names():
        if name not in mapping:
            raise ConfigurationError(f"truth is missing parameter {name!r}")
        values.append(float(mapping[name]))
    return TrueParameters(values=np.asarray(values), spec=spec, seed=seed)


@dataclass(frozen=True)
class DesignTask:
    task_id: str
    threat: str
    alternatives: tuple[tuple[str, dict], ...]   # (alt_id, attributes)


@dataclass(frozen=True)
class DesignPerson:
    person_id: str
    covariates: dict
    tasks: tuple[DesignTask, ...]


@dataclass(frozen=True)
class SyntheticDesign:
    persons: tuple[DesignPerson, ...]
    seed: int

    @property
    def n_individuals(self) -> int:
        return len(self.persons)

    @property
    def n_tasks(self) -> int:
        return sum(len(p.tasks) for p in self.persons)


def _sample_covariates(rng) -> dict:
    return {
        "age": float(rng.integers(1, 7)),
        "luggage": float(rng.uniform(0.0, 7.5)),
        "disability": float(rng.random() < 0.03),
        "pets": float(rng.random() < 0.49),
        "anxiety": float(rng.choice(np.arange(1.0, 6.0), p=_ANXIETY_PROBS)),
        "fear": float(rng.choice(np.arange(1.0, 6.0), p=_FEAR_PROBS)),
        "pandemic_risk": float(rng.random() < 0.39),
    }


def _threat_attributes(threat: str) -> dict:
    scenario = ScenarioSpec(threat)
    return {
        "moderate_threat": scenario.attribute_value("moderate_threat"),
        "extreme_threat": scenario.attribute_value("extreme_threat"),
        "flood_threat": scenario.attribute_value("flood_threat"),
    }


def generate_design(n_individuals: int, seed: int) -> SyntheticDesign:
    """Sample a design: uniform ride attribute levels, multinomial peer
    counts summing to the network size, covariates from the documented
    marginals. Deterministic in the seed."""
    if n_individuals < 1:
        raise ConfigurationError("need at least one individual")
    persons = []
    for i in range(n_individuals):
        rng = np.random.default_rng((seed, 0, i))
        covariates = _sample_covariates(rng)
        tasks = []
        for t, threat in enumerate(THREAT_BLOCKS):
            context = _threat_attributes(threat)
            peers = rng.multinomial(PEER_NETWORK, PEER_PROBS)
            alts = []
            for j, alt_id in enumerate(RIDE_ALTS):
                crowding = CROWDING_STATES[rng.integers(0, len(CROWDING_STATES))]
                attrs = {
                    "cost": float(rng.choice(COST_LEVELS)),
                    "walk_distance": float(rng.choice(WALK_LEVELS)),
                    "wait_time": float(rng.choice(WAIT_LEVELS)),
                    "travel_time": float(rng.choice(TRAVEL_LEVELS)),
                    "back_seat": float(crowding == "back"),
                    "front_seat": float(crowding == "front"),
                    "peer_share": float(peers[j]) / PEER_NETWORK,
                    **context,
                }
                alts.append((alt_id, attrs))
            stay = {
                "cost": 0.0, "walk_distance": 0.0, "wait_time": 0.0,
                "travel_time": 0.0, "back_seat": 0.0, "front_seat": 0.0,
                "peer_share": float(peers[3]) / PEER_NETWORK,
                **context,
            }
            alts.append((STAY_ALT, stay))
            tasks.append(DesignTask(task_id=f"t{t + 1}", threat=threat,
                                    alternatives=tuple(alts)))
        persons.append(DesignPerson(person_id=f"p{i + 1:04d}",
                                    covariates=covariates, tasks=tuple(tasks)))
    return SyntheticDesign(persons=tuple(persons), seed=seed)


def _design_schema() -> tuple[AttributeInfo, ...]:
    return tuple(AttributeInfo(name=n, kind=k) for n, k in DESIGN_ATTRIBUTES)


def simulate_choices(design: SyntheticDesign, truth: TrueParameters) -> ChoiceDataset:
    """Simulate panel choices at known parameters.

    One coefficient realization per individual (held fixed across that
    person's tasks), then one uniform per task drives inverse-CDF sampling
    of the chosen alternative. Output passes `validate_dataset`.
    """
    spec = truth.spec
    k_random = spec.n_random
    individuals = []
    for i, person in enumerate(design.persons):
        rng = np.random.default_rng((truth.seed, 1, i))
        xi = rng.standard_normal(k_random)
        coefs = realize_coefficients(truth.values, xi, spec)
        tasks = []
        for task in person.tasks:
            alts = tuple(
                Alternative(alt_id=alt_id, available=True,
                            attributes={**attrs, **person.covariates})
                for alt_id, attrs in task.alternatives)
            utilities = [alternative_utility(spec, coefs, a) for a in alts]
            probs = choice_probabilities(utilities)
            u = rng.random()
            chosen = alts[int(np.searchsorted(np.cumsum(probs), u, side="right"))]
            tasks.append(ChoiceTask(task_id=task.task_id, alternatives=alts,
                                    chosen=chosen.alt_id))
        individuals.append(PersonRecord(person_id=person.person_id,
                                        tasks=tuple(tasks),
                                        covariates=dict(person.covariates)))
    dataset = ChoiceDataset(
        individuals=tuple(individuals),
        attribute_schema=_design_schema(),
        n_alternatives=len(ALL_ALTS),
        n_observations=design.n_tasks,
        peer_share_attributes=("peer_share",),
    )
    violations = validate_dataset(dataset)
    if violations:
        raise IntegrityError("; ".join(violations))
    return dataset


@dataclass(frozen=True)
class ForecastResult:
    alt_ids: tuple[str, ...]
    probabilities: np.ndarray     # Monte Carlo means
    std_errors: np.ndarray        # Monte Carlo standard errors


def forecast_scenario(result: EstimationResult, scenario: ScenarioSpec,
                      task: ChoiceTask, n_draws: int,
                      seed: int = 0) -> ForecastResult:
    """Average choice probabilities over coefficient draws for one task
    placed in a flood-threat scenario."""
    if n_draws < 100:
        raise DomainError("forecasting needs at least 100 draws")
    spec = result.spec
    overrides = _threat_attributes(scenario.flood_threat)
    alts = tuple(
        Alternative(alt_id=a.alt_id, available=a.available,
                    attributes={**a.attributes, **overrides})
        for a in task.alternatives)
    available = [a.available for a in alts]
    rng = np.random.default_rng(seed)
    samples = np.empty((n_draws, len(alts)))
    for r in range(n_draws):
        xi = rng.standard_normal(spec.n_random)
        coefs = realize_coefficients(result.estimates, xi, spec)
        utilities = [alternative_utility(spec, coefs, a) if a.available else 0.0
                     for a in alts]
        samples[r] = choice_probabilities(utilities, available)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n_draws)
    return ForecastResult(alt_ids=tuple(a.alt_id for a in alts),
                          probabilities=mean, std_errors=se)
