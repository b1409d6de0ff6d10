import numpy as np
import pytest

from panelmxl import bundled
from panelmxl.dataset import (Alternative, AttributeInfo, ChoiceDataset,
                              ChoiceTask, PersonRecord)


def build_dataset(rows, peer_share_attributes=(), covariates_by_person=None):
    """Assemble a ChoiceDataset from (person, task, alt, avail, chosen, attrs)
    tuples, preserving row order."""
    persons: dict[str, dict[str, list]] = {}
    for pid, tid, aid, avail, chosen, attrs in rows:
        persons.setdefault(pid, {}).setdefault(tid, []).append(
            (aid, bool(avail), bool(chosen), dict(attrs)))
    individuals = []
    names: dict[str, None] = {}
    n_obs = 0
    alt_ids = set()
    for pid, tasks in persons.items():
        built = []
        for tid, alt_rows in tasks.items():
            chosen_id = next(aid for aid, _, ch, _ in alt_rows if ch)
            alts = tuple(Alternative(alt_id=aid, available=av, attributes=attrs)
                         for aid, av, _, attrs in alt_rows)
            for alt in alts:
                alt_ids.add(alt.alt_id)
                for n in alt.attributes:
                    names.setdefault(n, None)
            built.append(ChoiceTask(task_id=tid, alternatives=alts, chosen=chosen_id))
            n_obs += 1
        cov = (covariates_by_person or {}).get(pid, {})
        individuals.append(PersonRecord(person_id=pid, tasks=tuple(built),
                                        covariates=cov))
    return ChoiceDataset(
        individuals=tuple(individuals),
        attribute_schema=tuple(AttributeInfo(name=n) for n in names),
        n_alternatives=len(alt_ids),
        n_observations=n_obs,
        peer_share_attributes=tuple(peer_share_attributes),
    )


@pytest.fixture(scope="session")
def evac_spec():
    return bundled.bundled_spec()


@pytest.fixture(scope="session")
def table4():
    return bundled.load_table4_result()


@pytest.fixture(scope="session")
def evac_data():
    return bundled.load_bundled_dataset()


@pytest.fixture(scope="session")
def evac_data_50(evac_data):
    """First 50 individuals of the bundled dataset (fast gradient checks)."""
    import dataclasses
    individuals = evac_data.individuals[:50]
    n_obs = sum(len(p.tasks) for p in individuals)
    return dataclasses.replace(evac_data, individuals=individuals,
                               n_observations=n_obs)


def nearly(a, b, tol):
    assert abs(a - b) <= tol, f"{a!r} vs {b!r} (tol {tol})"


@pytest.fixture
def rng():
    return np.random.default_rng(20200519)
