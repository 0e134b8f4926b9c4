"""Model parameters and characteristic exponents of the surplus ODEs."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace


class ParameterError(ValueError):
    """Raised when a parameter set violates one or more model bounds."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the penalised dividend problem.

    Attributes:
        mu: drift of the uncontrolled surplus.
        sigma: diffusion coefficient.
        delta: discount rate applied to dividends.
        beta: discount rate applied to the ruin penalty. ``beta == 0`` is the
            ruin-probability limit and is handled analytically.
        lmax: maximal dividend rate.
        lam: penalty weight (non-positive).
        alpha: constraint level in (0, 1].
    """

    mu: float
    sigma: float
    delta: float
    beta: float
    lmax: float
    lam: float = 0.0
    alpha: float = 1.0

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged, or raise listing every violated bound."""
    problems = []
    for f in fields(params):
        value = getattr(params, f.name)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            problems.append(f"{f.name} must be a finite number")
    if problems:
        raise ParameterError(problems)
    p = params
    if not p.mu > 0:
        problems.append("mu must be > 0")
    if not p.sigma > 0:
        problems.append("sigma must be > 0")
    if not p.delta > 0:
        problems.append("delta must be > 0")
    if not p.beta >= 0:
        problems.append("beta must be ≥ 0")
    if not p.lmax > 0:
        problems.append("lmax must be > 0")
    if not p.lam <= 0:
        problems.append("lambda must be ≤ 0")
    if not 0 < p.alpha <= 1:
        problems.append("alpha must lie in (0,1]")
    if problems:
        raise ParameterError(problems)
    return params


@dataclass(frozen=True)
class CharRoots:
    """Roots of ``sigma**2/2 * y**2 + drift * y - rate = 0``.

    Index 1 is the larger ("+") root, index 2 the smaller ("-") root.

    ===== ============= ======
    pair  drift         rate
    ===== ============= ======
    a     mu            delta
    b     mu - lmax     delta
    c     mu            beta
    d     mu - lmax     beta
    ===== ============= ======
    """

    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    d1: float
    d2: float


def quadratic_roots(drift: float, rate: float, sigma: float) -> tuple[float, float]:
    """Larger and smaller root of ``sigma**2/2 y**2 + drift y - rate``.

    Uses the cancellation-free form: the larger-magnitude root comes from the
    quadratic formula, the other from the product of the roots. ``rate == 0``
    returns the exact pair ``{0, -2 drift / sigma**2}``.
    """
    s2 = sigma * sigma
    if rate == 0.0:
        other = -2.0 * drift / s2
        other = other + 0.0  # normalise -0.0
        return (max(0.0, other), min(0.0, other))
    disc = math.sqrt(drift * drift + 2.0 * s2 * rate)
    q = -0.5 * (drift + math.copysign(disc, drift)) if drift != 0.0 else -0.5 * disc
    # q/(s2/2) and (-rate)/q are the two roots
    r_big = q / (0.5 * s2)
    r_small = -rate / q
    return (max(r_big, r_small), min(r_big, r_small))


def characteristic_roots(params: ModelParams) -> CharRoots:
    p = params
    a1, a2 = quadratic_roots(p.mu, p.delta, p.sigma)
    b1, b2 = quadratic_roots(p.mu - p.lmax, p.delta, p.sigma)
    c1, c2 = quadratic_roots(p.mu, p.beta, p.sigma)
    d1, d2 = quadratic_roots(p.mu - p.lmax, p.beta, p.sigma)
    return CharRoots(a1, a2, b1, b2, c1, c2, d1, d2)
