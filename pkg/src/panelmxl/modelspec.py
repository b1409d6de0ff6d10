"""Declarative utility specifications for panel mixed logit models.

A model spec names the parameters (fixed, or random with a mixing
distribution), binds them to alternative attributes through utility terms,
and selects the estimation space. The text format is line oriented:

    space wtp|preference
    price <attribute>
    param <name> fixed init=<v>
    param <name> random normal|neglognormal init=<m> init_sd=<s>
    term <param> on <attribute|ASC> alts=<id,id,...> [times <attribute>]
    reference <alt_id>

Lines starting with ``#`` are comments. Parameter declaration order is the
canonical ordering for every estimated-parameter vector downstream: a fixed
parameter owns one slot, a random parameter owns two adjacent slots named
``<name>`` (location) and ``<name>_sd`` (spread). Spreads are estimated
unconstrained; realizations use their absolute value.

``neglognormal`` realizes as ``-exp(m + |s| * xi)`` and therefore keeps the
coefficient strictly negative, which is the conventional way to force a
price coefficient to the right sign.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SpecSyntaxError

FIXED = "fixed"
RANDOM = "random"
NORMAL = "normal"
NEGATED_LOGNORMAL = "neglognormal"
DISTRIBUTIONS = (NORMAL, NEGATED_LOGNORMAL)

PREFERENCE_SPACE = "preference"
WTP_SPACE = "wtp"

#: Pseudo-attribute for alternative specific constants (a constant 1 regressor).
ASC_ATTRIBUTE = "ASC"


@dataclass(frozen=True)
class ParameterDef:
    """One named coefficient: fixed, or random with a mixing distribution."""

    name: str
    kind: str                       # FIXED | RANDOM
    distribution: str | None = None  # random only
    init: float = 0.0
    init_sd: float | None = None     # random only; may be negative (unconstrained)

    @property
    def is_random(self) -> bool:
        return self.kind == RANDOM


@dataclass(frozen=True)
class UtilityTerm:
    """Binds a parameter to an attribute on a set of alternatives.

    ``multiplier_attribute`` turns the term into an interaction: the
    effective regressor is attribute * multiplier.
    """

    parameter: str
    attribute: str                   # attribute name, or ASC_ATTRIBUTE
    applies_to: tuple[str, ...]
    multiplier_attribute: str | None = None

    @property
    def is_interaction(self) -> bool:
        return self.multiplier_attribute is not None


@dataclass(frozen=True)
class ModelSpec:
    """A parsed, internally consistent utility specification."""

    space: str
    parameters: tuple[ParameterDef, ...]
    terms: tuple[UtilityTerm, ...]
    price_attribute: str | None = None
    reference_alternative: str | None = None

    def parameter(self, name: str) -> ParameterDef:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    def random_parameters(self) -> tuple[ParameterDef, ...]:
        """Random parameters in declaration order; index = draw dimension."""
        return tuple(p for p in self.parameters if p.is_random)

    @property
    def n_random(self) -> int:
        return sum(1 for p in self.parameters if p.is_random)

    def estimated_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for p in self.parameters:
            names.append(p.name)
            if p.is_random:
                names.append(p.name + "_sd")
        return tuple(names)

    @property
    def n_estimated(self) -> int:
        return len(self.parameters) + self.n_random

    def slots(self) -> dict[str, tuple[int, int]]:
        """Map parameter name -> (location slot, spread slot or -1)."""
        out: dict[str, tuple[int, int]] = {}
        i = 0
        for p in self.parameters:
            if p.is_random:
                out[p.name] = (i, i + 1)
                i += 2
            else:
                out[p.name] = (i, -1)
                i += 1
        return out

    def start_vector(self):
        import numpy as np

        vals: list[float] = []
        for p in self.parameters:
            vals.append(p.init)
            if p.is_random:
                vals.append(0.0 if p.init_sd is None else p.init_sd)
        return np.asarray(vals, dtype=float)

    def price_parameter_name(self) -> str | None:
        """Name of the parameter multiplying the price attribute, if any."""
        if self.price_attribute is None:
            return None
        for t in self.terms:
            if t.attribute == self.price_attribute and not t.is_interaction:
                return t.parameter
        return None


def _parse_kv(token: str, key: str):
    if not token.startswith(key + "="):
        return None
    return token[len(key) + 1:]


def parse_model_spec(text: str) -> ModelSpec:
    """Parse a spec document; raise SpecSyntaxError listing every problem found.

    Parsing is total: malformed input produces positioned errors, never an
    unhandled exception.
    """
    errors: list[tuple[int, str]] = []
    space: str | None = None
    price: str | None = None
    reference: str | None = None
    params: list[ParameterDef] = []
    terms: list[UtilityTerm] = []
    seen_names: set[str] = set()

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]

        if head == "space":
            if space is not None:
                errors.append((ln, "duplicate 'space' directive"))
            elif len(tok) != 2 or tok[1] not in (PREFERENCE_SPACE, WTP_SPACE):
                errors.append((ln, "expected 'space preference' or 'space wtp'"))
            else:
                space = tok[1]

        elif head == "price":
            if price is not None:
                errors.append((ln, "duplicate 'price' directive"))
            elif len(tok) != 2:
                errors.append((ln, "expected 'price <attribute>'"))
            else:
                price = tok[1]

        elif head == "reference":
            if reference is not None:
                errors.append((ln, "duplicate 'reference' directive"))
            elif len(tok) != 2:
                errors.append((ln, "expected 'reference <alt_id>'"))
            else:
                reference = tok[1]

        elif head == "param":
            p = _parse_param(tok, ln, errors, seen_names)
            if p is not None:
                params.append(p)
                seen_names.add(p.name)

        elif head == "term":
            t = _parse_term(tok, ln, errors)
            if t is not None:
                terms.append(t)

        else:
            errors.append((ln, f"unknown directive {head!r}"))

    # Document-level checks.
    if not params and not errors:
        errors.append((0, "no parameters declared"))
    param_names = {p.name for p in params}
    used: set[str] = set()
    for t in terms:
        if t.parameter not in param_names:
            errors.append((0, f"term references unknown parameter {t.parameter!r}"))
        used.add(t.parameter)
    for p in params:
        if p.name not in used:
            errors.append((0, f"parameter {p.name!r} is not used by any term"))

    if space is None:
        space = PREFERENCE_SPACE
    if space == WTP_SPACE:
        if price is None:
            errors.append((0, "wtp space requires a 'price <attribute>' declaration"))
        else:
            price_terms = [t for t in terms if t.attribute == price]
            if len(price_terms) != 1:
                errors.append((0, f"wtp space requires exactly one term on the price "
                                  f"attribute {price!r} (found {len(price_terms)})"))
            elif price_terms[0].is_interaction:
                errors.append((0, "the price term may not be an interaction"))
            if any(t.multiplier_attribute == price for t in terms):
                errors.append((0, f"price attribute {price!r} may not appear as an "
                                  f"interaction multiplier in wtp space"))

    if errors:
        raise SpecSyntaxError(errors)
    return ModelSpec(
        space=space,
        parameters=tuple(params),
        terms=tuple(terms),
        price_attribute=price,
        reference_alternative=reference,
    )


def _parse_param(tok, ln, errors, seen_names):
    if len(tok) < 3:
        errors.append((ln, "expected 'param <name> fixed|random ...'"))
        return None
    name, kind = tok[1], tok[2]
    if name in seen_names:
        errors.append((ln, f"duplicate parameter name {name!r}"))
        return None
    if kind == FIXED:
        init = _require_float(tok[3:], "init", ln, errors)
        if init is None:
            return None
        return ParameterDef(name=name, kind=FIXED, init=init)
    if kind == RANDOM:
        if len(tok) < 4 or tok[3] not in DISTRIBUTIONS:
            errors.append((ln, f"unknown distribution (expected one of {', '.join(DISTRIBUTIONS)})"))
            return None
        init = _require_float(tok[4:], "init", ln, errors)
        init_sd = _require_float(tok[4:], "init_sd", ln, errors)
        if init is None or init_sd is None:
            return None
        return ParameterDef(name=name, kind=RANDOM, distribution=tok[3],
                            init=init, init_sd=init_sd)
    errors.append((ln, f"parameter kind must be 'fixed' or 'random', got {kind!r}"))
    return None


def _require_float(tokens, key, ln, errors):
    for t in tokens:
        v = _parse_kv(t, key)
        if v is not None:
            try:
                return float(v)
            except ValueError:
                errors.append((ln, f"bad number for {key}: {v!r}"))
                return None
    errors.append((ln, f"missing {key}=<value>"))
    return None


def _parse_term(tok, ln, errors):
    # term <param> on <attr> alts=a,b,c [times <attr>]
    if len(tok) < 5 or tok[2] != "on":
        errors.append((ln, "expected 'term <param> on <attribute> alts=<id,...>'"))
        return None
    pname, attr = tok[1], tok[3]
    alts: tuple[str, ...] | None = None
    multiplier = None
    rest = tok[4:]
    i = 0
    while i < len(rest):
        v = _parse_kv(rest[i], "alts")
        if v is not None:
            ids = tuple(a for a in v.split(",") if a)
            if not ids:
                errors.append((ln, "alts= list is empty"))
                return None
            if len(set(ids)) != len(ids):
                errors.append((ln, "alts= list has duplicates"))
                return None
            alts = ids
            i += 1
        elif rest[i] == "times":
            if i + 1 >= len(rest):
                errors.append((ln, "'times' needs an attribute name"))
                return None
            multiplier = rest[i + 1]
            i += 2
        else:
            errors.append((ln, f"unexpected token {rest[i]!r} in term"))
            return None
    if alts is None:
        errors.append((ln, "term is missing alts=<id,...>"))
        return None
    if multiplier is not None and multiplier == attr:
        errors.append((ln, "interaction multiplier must differ from the attribute"))
        return None
    return UtilityTerm(parameter=pname, attribute=attr, applies_to=alts,
                       multiplier_attribute=multiplier)


def format_model_spec(spec: ModelSpec) -> str:
    """Canonical text form; parse(format(spec)) is structurally equal to spec."""
    lines = [f"space {spec.space}"]
    if spec.price_attribute is not None:
        lines.append(f"price {spec.price_attribute}")
    for p in spec.parameters:
        if p.is_random:
            lines.append(f"param {p.name} random {p.distribution} "
                         f"init={p.init!r} init_sd={p.init_sd!r}")
        else:
            lines.append(f"param {p.name} fixed init={p.init!r}")
    for t in spec.terms:
        s = f"term {t.parameter} on {t.attribute} alts={','.join(t.applies_to)}"
        if t.multiplier_attribute is not None:
            s += f" times {t.multiplier_attribute}"
        lines.append(s)
    if spec.reference_alternative is not None:
        lines.append(f"reference {spec.reference_alternative}")
    return "\n".join(lines) + "\n"


def validate_spec(spec: ModelSpec, dataset) -> list[str]:
    """Cross-check attribute bindings and alternative ids against a dataset.

    Returns violations as strings; empty list means the spec can be
    estimated on the dataset.
    """
    known = {info.name for info in dataset.attribute_schema}
    alt_ids = dataset.alternative_ids()
    out: list[str] = []
    for i, t in enumerate(spec.terms):
        where = f"term {i + 1} ({t.parameter})"
        if t.attribute != ASC_ATTRIBUTE and t.attribute not in known:
            out.append(f"{where}: attribute {t.attribute!r} not in dataset schema")
        if t.multiplier_attribute is not None and t.multiplier_attribute not in known:
            out.append(f"{where}: multiplier attribute {t.multiplier_attribute!r} "
                       f"not in dataset schema")
        for a in t.applies_to:
            if a not in alt_ids:
                out.append(f"{where}: alternative id {a!r} not present in dataset")
    if spec.price_attribute is not None and spec.price_attribute not in known:
        out.append(f"price attribute {spec.price_attribute!r} not in dataset schema")
    ref = spec.reference_alternative
    if ref is not None and ref not in alt_ids:
        out.append(f"reference alternative {ref!r} not present in dataset")
    return out
