"""Long-format stated-choice panel data: loading, validation, summaries.

The only ingestion format is long CSV: one row per
(person, task, alternative), UTF-8 with a header. Reserved column names are
``person_id``, ``task_id``, ``alt_id``, ``avail`` (0/1) and ``chosen``
(0/1); every other column is treated as a numeric attribute. A missing
availability column means all alternatives are available. Files ending in
``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import csv
import gzip
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataParseError, IntegrityError, SchemaError

PEER_SHARE_TOL = 1e-9
PEER_NETWORK_SIZE = 5  # the peer-count convention: shares are counts out of 5

CONTINUOUS = "continuous"
BINARY = "binary"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class AttributeInfo:
    name: str
    kind: str = CONTINUOUS
    units: str = ""


@dataclass(frozen=True)
class Alternative:
    alt_id: str
    available: bool
    attributes: dict[str, float]


@dataclass(frozen=True)
class ChoiceTask:
    task_id: str
    alternatives: tuple[Alternative, ...]
    chosen: str


@dataclass(frozen=True)
class PersonRecord:
    person_id: str
    tasks: tuple[ChoiceTask, ...]
    covariates: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ChoiceDataset:
    """Immutable panel of individuals x choice tasks x alternatives."""

    individuals: tuple[PersonRecord, ...]
    attribute_schema: tuple[AttributeInfo, ...]
    n_alternatives: int
    n_observations: int
    peer_share_attributes: tuple[str, ...] = ()

    def alternative_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for person in self.individuals:
            for task in person.tasks:
                for alt in task.alternatives:
                    seen.setdefault(alt.alt_id, None)
        return tuple(seen)

    def attribute_names(self) -> tuple[str, ...]:
        return tuple(info.name for info in self.attribute_schema)


@dataclass(frozen=True)
class ColumnMapping:
    """Names the file columns and declares column roles.

    ``peer_count_columns`` hold counts 0..5 and are divided by 5 on load;
    ``peer_share_columns`` already hold fractions. Both are recorded on the
    dataset so the sum-to-one rule can be enforced. ``covariate_columns``
    must be constant within a person; with ``strict_covariates`` off the
    first row wins instead of raising.
    """

    person_id: str = "person_id"
    task_id: str = "task_id"
    alt_id: str = "alt_id"
    availability: str | None = "avail"
    chosen: str = "chosen"
    peer_share_columns: tuple[str, ...] = ()
    peer_count_columns: tuple[str, ...] = ()
    covariate_columns: tuple[str, ...] = ()
    strict_covariates: bool = True
    units: dict[str, str] = field(default_factory=dict)


def _open_text(path: Path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def load_long_table(path, schema: ColumnMapping | None = None) -> ChoiceDataset:
    """Load and validate a long-format choice CSV.

    Args:
        path: CSV file (optionally gzipped).
        schema: column mapping; defaults to the reserved column names.

    Returns:
        A validated ChoiceDataset. Row order within a task is preserved as
        the alternative order.

    Raises:
        SchemaError: a mapped column is missing.
        DataParseError: a cell cannot be parsed (message carries the CSV
            line number, header = line 1).
        IntegrityError: duplicate (person, task, alt) rows or any dataset
            invariant violation.
    """
    mapping = schema or ColumnMapping()
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"data file not found: {path}")

    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty file: {path}")
        rows = [row for row in reader if row]

    col = {name: i for i, name in enumerate(header)}
    required = [mapping.person_id, mapping.task_id, mapping.alt_id, mapping.chosen]
    for name in required:
        if name not in col:
            raise SchemaError(f"missing required column {name!r}")
    # The availability column is optional by design: the bundled experiment
    # always offered all four options.
    has_avail = mapping.availability is not None and mapping.availability in col

    reserved = set(required)
    if mapping.availability is not None:
        reserved.add(mapping.availability)
    attr_names = [name for name in header if name not in reserved]
    for name in (*mapping.peer_share_columns, *mapping.peer_count_columns,
                 *mapping.covariate_columns):
        if name not in col:
            raise SchemaError(f"missing declared column {name!r}")
    count_cols = set(mapping.peer_count_columns)

    def parse_cell(line_no, name, raw):
        try:
            return float(raw)
        except ValueError:
            raise DataParseError(
                f"line {line_no}: non-numeric value {raw!r} in column {name!r}")

    def parse_flag(line_no, name, raw):
        v = parse_cell(line_no, name, raw)
        if v not in (0.0, 1.0):
            raise DataParseError(f"line {line_no}: column {name!r} must be 0 or 1, got {raw!r}")
        return v == 1.0

    # Group rows by person then task, preserving first-seen order.
    persons: dict[str, dict[str, list]] = {}
    seen_triples: set[tuple[str, str, str]] = set()
    for i, row in enumerate(rows):
        line_no = i + 2  # header is line 1
        if len(row) != len(header):
            raise DataParseError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
        pid = row[col[mapping.person_id]]
        tid = row[col[mapping.task_id]]
        aid = row[col[mapping.alt_id]]
        triple = (pid, tid, aid)
        if triple in seen_triples:
            raise IntegrityError(
                f"duplicate row for person {pid!r} task {tid!r} alternative {aid!r}")
        seen_triples.add(triple)
        avail = parse_flag(line_no, mapping.availability, row[col[mapping.availability]]) \
            if has_avail else True
        chosen = parse_flag(line_no, mapping.chosen, row[col[mapping.chosen]])
        attrs = {}
        for name in attr_names:
            v = parse_cell(line_no, name, row[col[name]])
            if name in count_cols:
                v = v / PEER_NETWORK_SIZE
            attrs[name] = v
        persons.setdefault(pid, {}).setdefault(tid, []).append((aid, avail, chosen, attrs))

    individuals = []
    n_obs = 0
    for pid, tasks in persons.items():
        built_tasks = []
        covariates: dict[str, float] = {}
        for tid, alt_rows in tasks.items():
            chosen_ids = [aid for aid, _, ch, _ in alt_rows if ch]
            if len(chosen_ids) != 1:
                raise IntegrityError(
                    f"person {pid!r} task {tid!r}: expected exactly one chosen "
                    f"alternative, found {len(chosen_ids)}")
            alts = tuple(Alternative(alt_id=aid, available=av, attributes=attrs)
                         for aid, av, _, attrs in alt_rows)
            built_tasks.append(ChoiceTask(task_id=tid, alternatives=alts,
                                          chosen=chosen_ids[0]))
            n_obs += 1
        # Person covariates: constant across the person's rows.
        for name in mapping.covariate_columns:
            values = {task_alt.attributes[name]
                      for task in built_tasks for task_alt in task.alternatives}
            if len(values) > 1:
                if mapping.strict_covariates:
                    raise IntegrityError(
                        f"person {pid!r}: covariate {name!r} varies across rows "
                        f"({sorted(values)})")
                first = built_tasks[0].alternatives[0].attributes[name]
                for task in built_tasks:
                    for alt in task.alternatives:
                        alt.attributes[name] = first
                covariates[name] = first
            else:
                covariates[name] = next(iter(values))
        individuals.append(PersonRecord(person_id=pid, tasks=tuple(built_tasks),
                                        covariates=covariates))

    schema_infos = tuple(_infer_attribute_info(name, individuals, mapping.units)
                         for name in attr_names)
    peer_attrs = tuple(mapping.peer_share_columns) + tuple(mapping.peer_count_columns)
    dataset = ChoiceDataset(
        individuals=tuple(individuals),
        attribute_schema=schema_infos,
        n_alternatives=len({alt.alt_id for p in individuals
                            for t in p.tasks for alt in t.alternatives}),
        n_observations=n_obs,
        peer_share_attributes=peer_attrs,
    )
    violations = validate_dataset(dataset)
    if violations:
        raise IntegrityError("; ".join(violations))
    return dataset


def _infer_attribute_info(name, individuals, units) -> AttributeInfo:
    values = {alt.attributes[name] for p in individuals
              for t in p.tasks for alt in t.alternatives}
    kind = BINARY if values <= {0.0, 1.0} else CONTINUOUS
    return AttributeInfo(name=name, kind=kind, units=units.get(name, ""))


def save_long_table(dataset: ChoiceDataset, path) -> None:
    """Write a dataset back to long CSV; load(save(d)) round-trips exactly.

    Floats are written with repr, which round-trips bit-for-bit.
    """
    path = Path(path)
    names = dataset.attribute_names()
    opener = gzip.open(path, "wt", encoding="utf-8", newline="") \
        if str(path).endswith(".gz") else open(path, "w", encoding="utf-8", newline="")
    with opener as fh:
        writer = csv.writer(fh)
        writer.writerow(["person_id", "task_id", "alt_id", "avail", "chosen", *names])
        for person in dataset.individuals:
            for task in person.tasks:
                for alt in task.alternatives:
                    writer.writerow([
                        person.person_id, task.task_id, alt.alt_id,
                        int(alt.available), int(alt.alt_id == task.chosen),
                        *(repr(float(alt.attributes[n])) for n in names),
                    ])


def validate_dataset(dataset: ChoiceDataset) -> list[str]:
    """Check every dataset invariant; violations name person, task, and rule.

    Deterministic and side-effect free; an empty list means the dataset is
    well formed.
    """
    out: list[str] = []
    seen_pids: set[str] = set()
    n_tasks = 0
    alt_ids: set[str] = set()
    for person in dataset.individuals:
        pid = person.person_id
        if pid in seen_pids:
            out.append(f"person {pid!r}: duplicate person_id [rule: unique-person]")
        seen_pids.add(pid)
        for task in person.tasks:
            n_tasks += 1
            tid = task.task_id
            ids = [a.alt_id for a in task.alternatives]
            alt_ids.update(ids)
            if len(set(ids)) != len(ids):
                out.append(f"person {pid!r} task {tid!r}: duplicate alternative ids "
                           f"[rule: unique-alt]")
            n_avail = sum(1 for a in task.alternatives if a.available)
            if n_avail < 2:
                out.append(f"person {pid!r} task {tid!r}: only {n_avail} available "
                           f"alternatives (need >= 2) [rule: min-available]")
            by_id = {a.alt_id: a for a in task.alternatives}
            if task.chosen not in by_id:
                out.append(f"person {pid!r} task {tid!r}: chosen alternative "
                           f"{task.chosen!r} not present [rule: chosen-present]")
            elif not by_id[task.chosen].available:
                out.append(f"person {pid!r} task {tid!r}: chosen alternative "
                           f"{task.chosen!r} is unavailable [rule: chosen-available]")
            for name in dataset.peer_share_attributes:
                total = math.fsum(a.attributes.get(name, 0.0) for a in task.alternatives)
                if abs(total - 1.0) > PEER_SHARE_TOL:
                    out.append(f"person {pid!r} task {tid!r}: peer shares in {name!r} "
                               f"sum to {total:.9f}, expected 1 [rule: peer-share-sum]")
        for name, value in person.covariates.items():
            for task in person.tasks:
                for alt in task.alternatives:
                    if alt.attributes.get(name, value) != value:
                        out.append(f"person {pid!r} task {task.task_id!r}: covariate "
                                   f"{name!r} differs from person value "
                                   f"[rule: covariate-constant]")
    if n_tasks != dataset.n_observations:
        out.append(f"person - task -: n_observations={dataset.n_observations} but "
                   f"counted {n_tasks} tasks [rule: observation-count]")
    if alt_ids and len(alt_ids) != dataset.n_alternatives:
        out.append(f"person - task -: n_alternatives={dataset.n_alternatives} but "
                   f"found {len(alt_ids)} distinct ids [rule: alternative-count]")
    return out


@dataclass(frozen=True)
class AttributeSummary:
    name: str
    minimum: float
    maximum: float
    mean: float
    sd: float


def summarize_attributes(dataset: ChoiceDataset) -> list[AttributeSummary]:
    """Per-attribute moments over all alternative rows (population sd)."""
    names = dataset.attribute_names()
    columns: dict[str, list[float]] = {n: [] for n in names}
    for person in dataset.individuals:
        for task in person.tasks:
            for alt in task.alternatives:
                for n in names:
                    columns[n].append(alt.attributes[n])
    out = []
    for n in names:
        v = np.asarray(columns[n], dtype=float)
        out.append(AttributeSummary(
            name=n, minimum=float(v.min()), maximum=float(v.max()),
            mean=float(v.mean()), sd=float(v.std(ddof=0))))
    return out
