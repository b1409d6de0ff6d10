"""Money-metric reports from estimation results.

Sign convention: every money value is a price equivalent within the
alternative its attribute enters. A positive value acts like a price
increase (the respondent needs that much compensation); a negative value is
a willingness to pay of the same magnitude. The raw estimates keep their
signs; the report layer applies the convention when labelling directions.

Scenario values net a base effect against its active flood-threat
interactions: moderate and extreme threat have indicator attributes, and
the ordinal threat level (1 low, 2 moderate, 3 extreme) drives interactions
coded on the level itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IdentificationError
from .estimate import EstimationResult
from .modelspec import (NEGATED_LOGNORMAL, NORMAL, WTP_SPACE, ModelSpec,
                        UtilityTerm)

PAY = "pay"
COMPENSATE = "compensate"

THREAT_LEVELS = {"low": 1, "moderate": 2, "extreme": 3}
MODERATE_THREAT_ATTRIBUTE = "moderate_threat"
EXTREME_THREAT_ATTRIBUTE = "extreme_threat"
ORDINAL_THREAT_ATTRIBUTE = "flood_threat"
_THREAT_ATTRIBUTES = (MODERATE_THREAT_ATTRIBUTE, EXTREME_THREAT_ATTRIBUTE,
                      ORDINAL_THREAT_ATTRIBUTE)

_RATIO_DRAWS = 100_000
_RATIO_SEED = 20200630


@dataclass(frozen=True)
class ScenarioSpec:
    """One flood-threat context; derives the active interaction regressors."""

    flood_threat: str

    def __post_init__(self):
        if self.flood_threat not in THREAT_LEVELS:
            raise DomainError(f"flood_threat must be one of "
                              f"{sorted(THREAT_LEVELS)}, got {self.flood_threat!r}")

    @property
    def level(self) -> int:
        return THREAT_LEVELS[self.flood_threat]

    def attribute_value(self, name: str) -> float:
        """Value a threat-coded attribute takes under this scenario."""
        if name == MODERATE_THREAT_ATTRIBUTE:
            return 1.0 if self.flood_threat == "moderate" else 0.0
        if name == EXTREME_THREAT_ATTRIBUTE:
            return 1.0 if self.flood_threat == "extreme" else 0.0
        if name == ORDINAL_THREAT_ATTRIBUTE:
            return float(self.level)
        raise KeyError(name)


@dataclass(frozen=True)
class WtpRow:
    attribute: str
    scenario: str
    amount: float          # >= 0; the sign lives in `direction`
    direction: str         # PAY | COMPENSATE
    unit: str = "per unit"
    mean: float | None = None
    median: float | None = None
    q05: float | None = None
    q95: float | None = None

    @property
    def signed_value(self) -> float:
        return self.amount if self.direction == COMPENSATE else -self.amount


@dataclass(frozen=True)
class WtpReport:
    rows: tuple[WtpRow, ...]
    cov_table: tuple[tuple[str, float], ...]
    scenario_rows: tuple[WtpRow, ...]
    sign_shares: tuple[tuple[str, float], ...]


def _direction(value: float) -> tuple[float, str]:
    return (abs(value), COMPENSATE if value >= 0.0 else PAY)


def coefficient_of_variation(mean_est: float, sd_est: float) -> float:
    """Signed ratio of the raw spread and location estimates."""
    if mean_est == 0.0:
        raise DomainError("coefficient of variation undefined for mean 0")
    return sd_est / mean_est


def sign_share(mean: float, sd: float) -> float:
    """Probability that a normal(mean, |sd|) coefficient exceeds zero."""
    if sd == 0.0:
        return 1.0 if mean > 0.0 else 0.0
    return 0.5 * (1.0 + math.erf((mean / abs(sd)) / math.sqrt(2.0)))


def scenario_value(base_z: float, interaction_zs, scenario: ScenarioSpec) -> float:
    """Net money value of an effect under a scenario: base plus the active
    interaction. Linear in all inputs."""
    return base_z + float(interaction_zs.get(scenario.flood_threat, 0.0))


def magnitude_ratio(result: EstimationResult, numerator: str,
                    denominator: str) -> float:
    """|estimate_a| / |estimate_b| for two named estimates."""
    b = result.estimate(denominator)
    if b == 0.0:
        raise DomainError(f"denominator estimate {denominator!r} is zero")
    return abs(result.estimate(numerator)) / abs(b)


def _distribution_summary(pd, location, spread):
    """Mean/median/5%/95% of a realized random coefficient."""
    s = abs(spread)
    z95 = 1.6448536269514722
    if pd.distribution == NORMAL:
        return location, location, location - z95 * s, location + z95 * s
    # negated lognormal: -exp(location + s * xi)
    mean = -math.exp(location + 0.5 * s * s)
    median = -math.exp(location)
    lo = -math.exp(location + z95 * s)   # most negative
    hi = -math.exp(location - z95 * s)
    return mean, median, lo, hi


def marginal_money_values(result: EstimationResult,
                          units: dict[str, str] | None = None) -> list[WtpRow]:
    """Per-attribute money values.

    In wtp space the non-price coefficients are money metric already, so
    the rows are independent of the price coefficient. In preference space
    each money value is the ratio of a coefficient to the price coefficient,
    a ratio of two random quantities handled by simulation (fresh seeded
    pseudo-random draws, not the estimation tensor).
    """
    spec = result.spec
    units = units or {}
    if spec.space == WTP_SPACE:
        return _wtp_space_rows(result, units)
    return _preference_space_rows(result, units)


def _wtp_space_rows(result, units) -> list[WtpRow]:
    spec = result.spec
    phi_name = spec.price_parameter_name()
    rows = []
    for pd in spec.parameters:
        if pd.name == phi_name:
            continue
        loc = result.estimate(pd.name)
        if pd.is_random:
            spread = result.estimate(pd.name + "_sd")
            mean, median, q05, q95 = _distribution_summary(pd, loc, spread)
        else:
            mean = median = q05 = q95 = loc
        amount, direction = _direction(mean)
        rows.append(WtpRow(attribute=pd.name, scenario="base",
                           amount=amount, direction=direction,
                           unit=units.get(pd.name, "per unit"),
                           mean=mean, median=median, q05=q05, q95=q95))
    return rows


def _preference_space_rows(result, units) -> list[WtpRow]:
    spec = result.spec
    phi_name = spec.price_parameter_name()
    if phi_name is None:
        raise IdentificationError("preference-space money values need a "
                                  "declared price attribute")
    phi_def = spec.parameter(phi_name)
    rng = np.random.default_rng(_RATIO_SEED)
    if phi_def.is_random:
        if phi_def.distribution == NORMAL:
            raise IdentificationError(
                "price coefficient is normally distributed: the ratio "
                "xi/phi has mass near a zero denominator and its moments "
                "are not identified")
        m = result.estimate(phi_name)
        s = abs(result.estimate(phi_name + "_sd"))
        phi = -np.exp(m + s * rng.standard_normal(_RATIO_DRAWS))
    else:
        phi0 = result.estimate(phi_name)
        if phi0 == 0.0:
            raise DomainError("price coefficient estimate is zero")
        phi = np.full(_RATIO_DRAWS, phi0)

    rows = []
    for pd in spec.parameters:
        if pd.name == phi_name:
            continue
        loc = result.estimate(pd.name)
        if pd.is_random:
            s = abs(result.estimate(pd.name + "_sd"))
            xi = rng.standard_normal(_RATIO_DRAWS)
            coef = (loc + s * xi if pd.distribution == NORMAL
                    else -np.exp(loc + s * xi))
        else:
            coef = np.full(_RATIO_DRAWS, loc)
        ratio = coef / phi
        mean = float(ratio.mean())
        median = float(np.quantile(ratio, 0.5))
        q05 = float(np.quantile(ratio, 0.05))
        q95 = float(np.quantile(ratio, 0.95))
        amount, direction = _direction(mean)
        rows.append(WtpRow(attribute=pd.name, scenario="base",
                           amount=amount, direction=direction,
                           unit=units.get(pd.name, "per unit"),
                           mean=mean, median=median, q05=q05, q95=q95))
    return rows


def _threat_interactions(spec: ModelSpec):
    """Interaction terms involving a threat-coded attribute, paired with the
    subject attribute they modify."""
    out = []
    for t in spec.terms:
        if not t.is_interaction:
            continue
        if t.multiplier_attribute in _THREAT_ATTRIBUTES:
            out.append((t, t.attribute, t.multiplier_attribute))
        elif t.attribute in _THREAT_ATTRIBUTES:
            out.append((t, t.multiplier_attribute, t.attribute))
    return out


def _base_term(spec: ModelSpec, subject: str, alts: tuple[str, ...]) -> UtilityTerm | None:
    for t in spec.terms:
        if t.is_interaction:
            continue
        if t.attribute == subject and t.applies_to == alts:
            return t
    return None


def scenario_report(result: EstimationResult, scenario: ScenarioSpec,
                    units: dict[str, str] | None = None) -> list[WtpRow]:
    """Scenario-adjusted net money values for every threat-moderated effect."""
    spec = result.spec
    if spec.space != WTP_SPACE:
        raise IdentificationError("scenario reports operate on wtp-space results")
    units = units or {}
    groups: dict[tuple[str, tuple[str, ...]], float] = {}
    for term, subject, threat_attr in _threat_interactions(spec):
        key = (subject, term.applies_to)
        factor = scenario.attribute_value(threat_attr)
        groups[key] = groups.get(key, 0.0) + result.estimate(term.parameter) * factor

    rows = []
    for (subject, alts), adjustment in groups.items():
        base = _base_term(spec, subject, alts)
        base_value = result.estimate(base.parameter) if base is not None else 0.0
        label = base.parameter if base is not None else subject
        net = base_value + adjustment
        amount, direction = _direction(net)
        rows.append(WtpRow(attribute=label, scenario=scenario.flood_threat,
                           amount=amount, direction=direction,
                           unit=units.get(label, "per unit")))
    return rows


def cov_table(result: EstimationResult) -> list[tuple[str, float]]:
    """Coefficient of variation (spread / location, raw signed estimates)
    for every random parameter."""
    out = []
    for pd in result.spec.random_parameters():
        out.append((pd.name, coefficient_of_variation(
            result.estimate(pd.name), result.estimate(pd.name + "_sd"))))
    return out


def sign_shares(result: EstimationResult) -> list[tuple[str, float]]:
    """Share of the population with a positive realized coefficient."""
    out = []
    for pd in result.spec.random_parameters():
        if pd.distribution == NEGATED_LOGNORMAL:
            out.append((pd.name, 0.0))
        else:
            out.append((pd.name, sign_share(result.estimate(pd.name),
                                            result.estimate(pd.name + "_sd"))))
    return out


def build_report(result: EstimationResult, scenarios=("low", "moderate", "extreme"),
                 units: dict[str, str] | None = None) -> WtpReport:
    scenario_rows: list[WtpRow] = []
    for name in scenarios:
        scenario_rows.extend(scenario_report(result, ScenarioSpec(name), units))
    return WtpReport(
        rows=tuple(marginal_money_values(result, units)),
        cov_table=tuple(cov_table(result)),
        scenario_rows=tuple(scenario_rows),
        sign_shares=tuple(sign_shares(result)),
    )


def report_csv_lines(report: WtpReport) -> list[str]:
    """CSV payload (`attribute,scenario,net_value,direction,unit`), the data
    behind the money-value figures; amounts carry two decimals."""
    lines = ["attribute,scenario,net_value,direction,unit"]
    for row in (*report.rows, *report.scenario_rows):
        lines.append(f"{row.attribute},{row.scenario},{row.amount:.2f},"
                     f"{row.direction},{row.unit}")
    return lines
