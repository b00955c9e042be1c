"""Outcome statistics and report emission.

Computes cumulative average utility curves and average surplus shares per
optimization mode, with no-deal rows averaged in as zeros so unclaimed
surplus stays visible. Emits plot-ready JSON and CSV; rendering belongs to
the console or any external plotting tool.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

if TYPE_CHECKING:
    from .negotiation import ExperimentResult, ReflectMode

PARETO_TOLERANCE = 1e-9

FRONTIER_POINTS = 101


class MetricsError(RuntimeError):
    """An aggregate violated a structural invariant (e.g. Pareto dominance)."""


@dataclass(frozen=True)
class MetricsBundle:
    cum_avg_buyer: tuple[float, ...]
    cum_avg_seller: tuple[float, ...]
    avg_buyer_ss: float
    avg_seller_ss: float
    no_deal_count: int
    unclaimed_surplus_share: float


def cumulative_average(series: Sequence[float]) -> list[float]:
    """Running mean: out[t] is the mean of series[0..t]."""
    if not series:
        raise ValueError("series must be non-empty")
    out: list[float] = []
    total = 0.0
    for t, value in enumerate(series):
        total += value
        out.append(total / (t + 1))
    return out


def aggregate(result: "ExperimentResult") -> MetricsBundle:
    """Fold one experiment's outcomes into a MetricsBundle.

    No-deal negotiations contribute zero utility and zero surplus share to
    every average. The bundle is checked against the Pareto identity
    (avg shares sum to at most 1) before being returned.
    """
    from .negotiation import surplus_shares

    if not result.outcomes:
        raise ValueError("experiment has no outcomes")
    shares = [surplus_shares(o.instance, o) for o in result.outcomes]
    count = len(shares)
    avg_buyer_ss = sum(b for b, _ in shares) / count
    avg_seller_ss = sum(s for _, s in shares) / count
    total = avg_buyer_ss + avg_seller_ss
    if not -PARETO_TOLERANCE <= total <= 1.0 + PARETO_TOLERANCE:
        raise MetricsError(f"average surplus shares sum to {total}, beyond the frontier")
    unclaimed = 1.0 - total
    bundle = MetricsBundle(
        cum_avg_buyer=tuple(cumulative_average(result.buyer_utils)),
        cum_avg_seller=tuple(cumulative_average(result.seller_utils)),
        avg_buyer_ss=avg_buyer_ss,
        avg_seller_ss=avg_seller_ss,
        no_deal_count=sum(1 for o in result.outcomes if not o.deal_reached),
        unclaimed_surplus_share=unclaimed,
    )
    if bundle.no_deal_count != result.no_deal_count:
        raise MetricsError(
            f"no-deal count mismatch: outcomes say {bundle.no_deal_count}, "
            f"result says {result.no_deal_count}"
        )
    return bundle


def frontier_line(points: int = FRONTIER_POINTS) -> list[list[float]]:
    """The zero-sum frontier y = 1 - x sampled at evenly spaced x."""
    return [[i / (points - 1), 1.0 - i / (points - 1)] for i in range(points)]


def _bundle_to_json(bundle: MetricsBundle) -> dict:
    return {
        "cum_avg_buyer": list(bundle.cum_avg_buyer),
        "cum_avg_seller": list(bundle.cum_avg_seller),
        "avg_buyer_ss": bundle.avg_buyer_ss,
        "avg_seller_ss": bundle.avg_seller_ss,
        "no_deal_count": bundle.no_deal_count,
        "unclaimed": bundle.unclaimed_surplus_share,
    }


@dataclass(frozen=True)
class ReportDocument:
    modes: tuple[tuple[str, MetricsBundle], ...]  # (mode value, bundle), stable order
    frontier: tuple[tuple[float, float], ...]

    def to_document(self) -> dict:
        return {
            "modes": {mode: _bundle_to_json(bundle) for mode, bundle in self.modes},
            "frontier": [list(point) for point in self.frontier],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, ensure_ascii=False)

    def to_csv(self) -> str:
        lines = ["mode,avg_buyer_ss,avg_seller_ss,no_deal_count,unclaimed"]
        for mode, bundle in self.modes:
            lines.append(
                f"{mode},{bundle.avg_buyer_ss:.6f},{bundle.avg_seller_ss:.6f},"
                f"{bundle.no_deal_count},{bundle.unclaimed_surplus_share:.6f}"
            )
        return "\n".join(lines) + "\n"


def render_report(bundles: Mapping["ReflectMode", MetricsBundle]) -> ReportDocument:
    """Materialize curves, scatter points, and the frontier for plotting.

    Mode order follows the enum declaration order regardless of input
    order, so reports are byte-stable.
    """
    if not bundles:
        raise ValueError("need at least one bundle")
    mode_cls = type(next(iter(bundles)))
    ordered = [mode for mode in mode_cls if mode in bundles]
    return ReportDocument(
        modes=tuple((mode.value, bundles[mode]) for mode in ordered),
        frontier=tuple((x, y) for x, y in frontier_line()),
    )
