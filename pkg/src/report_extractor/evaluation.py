"""Score annotators against the gold standard and compare them statistically.

Per-report success counts are treated as binomial draws; a logistic
regression of success probability on annotator indicators (reference
annotator omitted) is fitted by iteratively reweighted least squares on the
grouped counts, and each coefficient gets a Wald z statistic with a
two-sided normal p-value. Because the covariates are constant within an
annotator the model is saturated: the fitted success probability of each
annotator equals its pooled proportion, which the fitter asserts to 1e-10.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .goldstandard import AnnotationSet, GoldStandard, values_agree
from .schema import ExtractionSchema

log = logging.getLogger(__name__)

MAX_ITERATIONS = 100
DEVIANCE_TOL = 1e-10
_SATURATION_TOL = 1e-10


class EvaluationError(ValueError):
    pass


class SeparationError(EvaluationError):
    """An annotator succeeded never or always; log-odds are unbounded."""

    def __init__(self, annotator_id: str):
        super().__init__(f"separation_detected: annotator {annotator_id!r} has 0% or 100% success")
        self.annotator_id = annotator_id


class ConvergenceError(EvaluationError):
    def __init__(self, deviance: float):
        super().__init__(f"IRLS did not converge in {MAX_ITERATIONS} iterations (deviance {deviance:.6g})")
        self.deviance = deviance


@dataclass(frozen=True)
class ReportOutcome:
    """Successes k out of n comparable features for one annotator on one report."""

    annotator_id: str
    report_id: str
    k: int
    n: int

    def __post_init__(self):
        if not (0 <= self.k <= self.n) or self.n < 1:
            raise EvaluationError(f"invalid outcome k={self.k}, n={self.n}")


@dataclass(frozen=True)
class CoefficientStats:
    beta: float
    se: float
    z: float
    p: float


@dataclass
class GlmFit:
    reference_id: str
    intercept: tuple[float, float]
    coefficients: dict[str, CoefficientStats]
    fitted_probabilities: dict[str, float]
    iterations: int
    converged: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "reference_id": self.reference_id,
            "intercept": {"beta": self.intercept[0], "se": self.intercept[1]},
            "coefficients": {
                a: {"beta": c.beta, "se": c.se, "z": c.z, "p": c.p}
                for a, c in self.coefficients.items()
            },
            "fitted_probabilities": dict(self.fitted_probabilities),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def two_sided_p(z: float) -> float:
    """Two-sided standard-normal tail probability, 2*(1 - Phi(|z|))."""
    if not math.isfinite(z):
        raise EvaluationError("z must be finite")
    return math.erfc(abs(z) / math.sqrt(2.0))


def score_against_gold(
    annotations: AnnotationSet, gold: GoldStandard, schema: ExtractionSchema | None = None
) -> tuple[list[ReportOutcome], dict[str, float]]:
    """Per-report (k, n) outcomes and per-feature accuracy against the gold standard.

    Gold entries the annotator never labeled count as failures; only their
    number is logged, never their content.
    """
    per_report: dict[str, list[bool]] = {}
    feature_hits: dict[str, int] = {}
    feature_totals: dict[str, int] = {}
    gaps = 0
    for (report, feature), gold_value in gold.entries.items():
        spec = schema[feature] if schema is not None and feature in schema else None
        if (report, feature) in annotations.entries:
            success = values_agree(annotations.entries[(report, feature)], gold_value, spec)
        else:
            success = False
            gaps += 1
        per_report.setdefault(report, []).append(success)
        feature_totals[feature] = feature_totals.get(feature, 0) + 1
        feature_hits[feature] = feature_hits.get(feature, 0) + int(success)
    if gaps:
        log.info(
            "annotator %s: %d gold entries had no annotation (scored as failures)",
            annotations.annotator_id,
            gaps,
        )
    outcomes = [
        ReportOutcome(
            annotator_id=annotations.annotator_id,
            report_id=report,
            k=sum(successes),
            n=len(successes),
        )
        for report, successes in sorted(per_report.items())
    ]
    accuracy = {
        feature: feature_hits[feature] / feature_totals[feature]
        for feature in sorted(feature_totals)
    }
    return outcomes, accuracy


def _pooled_counts(outcomes: list[ReportOutcome]) -> dict[str, tuple[int, int]]:
    totals: dict[str, tuple[int, int]] = {}
    for outcome in outcomes:
        k, n = totals.get(outcome.annotator_id, (0, 0))
        totals[outcome.annotator_id] = (k + outcome.k, n + outcome.n)
    return totals


def fit_binomial_glm(outcomes: list[ReportOutcome], reference_id: str) -> GlmFit:
    """Maximum-likelihood logistic fit of success probability on annotator.

    The design matrix holds an intercept plus one indicator per non-reference
    annotator. Standard errors come from the inverse Fisher information at
    the optimum; convergence is declared when the deviance changes by less
    than 1e-10 between iterations.
    """
    totals = _pooled_counts(outcomes)
    if reference_id not in totals:
        raise EvaluationError(f"reference annotator {reference_id!r} has no outcomes")
    if len(totals) < 2:
        raise EvaluationError("at least two annotators are required")
    for annotator, (k, n) in sorted(totals.items()):
        if k == 0 or k == n:
            raise SeparationError(annotator)

    others = sorted(a for a in totals if a != reference_id)
    columns = {annotator: j + 1 for j, annotator in enumerate(others)}

    rows = len(outcomes)
    X = np.zeros((rows, 1 + len(others)))
    X[:, 0] = 1.0
    k = np.empty(rows)
    n = np.empty(rows)
    for i, outcome in enumerate(outcomes):
        if outcome.annotator_id != reference_id:
            X[i, columns[outcome.annotator_id]] = 1.0
        k[i] = outcome.k
        n[i] = outcome.n

    beta = np.zeros(X.shape[1])
    deviance = math.inf
    converged = False
    iterations = 0
    info = None
    for iterations in range(1, MAX_ITERATIONS + 1):
        eta = X @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        mu = n * p
        w = n * p * (1.0 - p)
        z = eta + (k - mu) / w
        Xw = X * w[:, None]
        info = X.T @ Xw
        beta = np.linalg.solve(info, Xw.T @ z)

        eta = X @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        mu = n * p
        with np.errstate(divide="ignore", invalid="ignore"):
            term1 = np.where(k > 0, k * np.log(np.where(k > 0, k / mu, 1.0)), 0.0)
            term2 = np.where(
                n - k > 0, (n - k) * np.log(np.where(n - k > 0, (n - k) / (n - mu), 1.0)), 0.0
            )
        new_deviance = 2.0 * float(np.sum(term1 + term2))
        if abs(new_deviance - deviance) < DEVIANCE_TOL:
            deviance = new_deviance
            converged = True
            break
        deviance = new_deviance
    if not converged:
        raise ConvergenceError(deviance)

    w = n * p * (1.0 - p)
    info = X.T @ (X * w[:, None])
    covariance = np.linalg.inv(info)
    se = np.sqrt(np.diag(covariance))

    fitted = {}
    for annotator, (kk, nn) in totals.items():
        eta_a = beta[0] + (beta[columns[annotator]] if annotator != reference_id else 0.0)
        p_hat = 1.0 / (1.0 + math.exp(-eta_a))
        pooled = kk / nn
        if abs(p_hat - pooled) > _SATURATION_TOL:
            raise EvaluationError(
                f"fitted probability for {annotator!r} deviates from pooled proportion "
                f"({p_hat!r} vs {pooled!r})"
            )
        fitted[annotator] = p_hat

    coefficients = {}
    for annotator, j in columns.items():
        b, s = float(beta[j]), float(se[j])
        zstat = b / s
        coefficients[annotator] = CoefficientStats(beta=b, se=s, z=zstat, p=two_sided_p(zstat))

    return GlmFit(
        reference_id=reference_id,
        intercept=(float(beta[0]), float(se[0])),
        coefficients=coefficients,
        fitted_probabilities=fitted,
        iterations=iterations,
        converged=converged,
    )


def mention_rates(gold: GoldStandard, schema: ExtractionSchema) -> dict[str, float]:
    """Fraction of reports mentioning each feature, judged from the gold value.

    A feature with a declared no-mention code is unmentioned where the gold
    value equals that code; otherwise an explicit negative code marks the
    unmentioned state. Features declaring neither are counted as always
    mentioned (with a warning).
    """
    mentioned: dict[str, int] = {}
    totals: dict[str, int] = {}
    warned = set()
    for (report, feature), value in gold.entries.items():
        totals[feature] = totals.get(feature, 0) + 1
        spec = schema[feature] if feature in schema else None
        if spec is not None and spec.has_no_mention_code:
            is_mentioned = not values_agree(value, spec.no_mention_code, spec)
        elif spec is not None and spec.has_negative_code:
            is_mentioned = not values_agree(value, spec.negative_code, spec)
        else:
            if feature not in warned:
                log.warning(
                    "feature %s declares neither a no-mention nor a negative code; "
                    "counted as always mentioned",
                    feature,
                )
                warned.add(feature)
            is_mentioned = True
        mentioned[feature] = mentioned.get(feature, 0) + int(is_mentioned)
    return {f: mentioned[f] / totals[f] for f in sorted(totals)}


@dataclass
class HistogramData:
    bin_edges: list[float]
    counts: list[int]
    min_percent: float


def agreement_histogram(
    outcomes: list[ReportOutcome], bin_width: int = 5
) -> dict[str, HistogramData]:
    """Per-annotator histogram of per-report agreement percentages over [0, 100]."""
    if bin_width <= 0 or 100 % bin_width != 0:
        raise EvaluationError(f"bin width {bin_width} must divide 100")
    n_bins = 100 // bin_width
    edges = [float(i * bin_width) for i in range(n_bins + 1)]
    histograms: dict[str, HistogramData] = {}
    per_annotator: dict[str, list[float]] = {}
    for outcome in outcomes:
        per_annotator.setdefault(outcome.annotator_id, []).append(
            100.0 * outcome.k / outcome.n
        )
    for annotator, percents in sorted(per_annotator.items()):
        counts = [0] * n_bins
        for pct in percents:
            counts[min(int(pct // bin_width), n_bins - 1)] += 1
        histograms[annotator] = HistogramData(
            bin_edges=edges, counts=counts, min_percent=min(percents)
        )
    return histograms


@dataclass(frozen=True)
class SummaryRow:
    annotator_id: str
    accuracy_percent: float
    avg_cost_usd: float | None
    p_vs_reference: float | None


def performance_cost_summary(
    fit: GlmFit, costs: Mapping[str, float] | None = None
) -> list[SummaryRow]:
    """One row per annotator: pooled accuracy, average per-report cost, and the
    Wald p-value against the reference (blank for the reference itself)."""
    costs = costs or {}
    rows = [
        SummaryRow(
            annotator_id=fit.reference_id,
            accuracy_percent=round(100.0 * fit.fitted_probabilities[fit.reference_id], 1),
            avg_cost_usd=costs.get(fit.reference_id),
            p_vs_reference=None,
        )
    ]
    for annotator in sorted(fit.coefficients):
        rows.append(
            SummaryRow(
                annotator_id=annotator,
                accuracy_percent=round(100.0 * fit.fitted_probabilities[annotator], 1),
                avg_cost_usd=costs.get(annotator),
                p_vs_reference=fit.coefficients[annotator].p,
            )
        )
    return rows
