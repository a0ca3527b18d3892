"""Offspring laws, the branching mechanisms Phi/Psi, and derived constants.

Everything here is a pure function of a validated :class:`BranchingSpec`.
Offspring laws are restricted to finite support, so all generating-function
sums are finite and exponential moments exist automatically.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-12
ZSTAR_TOL = 1e-12


class MechanismError(ValueError):
    """Base class for branching-spec validation failures."""


class NotAProbability(MechanismError):
    pass


class SupercriticalCatalytic(MechanismError):
    pass


class ParityPreserving(MechanismError):
    pass


class ForbiddenMass(MechanismError):
    pass


class OutOfDomain(MechanismError):
    pass


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring distribution, probs[k] = P(k children)."""

    probs: tuple
    kind: str  # "ordinary" | "catalytic"

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @property
    def mean(self) -> float:
        return float(sum(k * p for k, p in enumerate(self.probs)))

    def cdf(self) -> np.ndarray:
        """Cumulative distribution over k = 0..K, used for inverse sampling."""
        c = np.cumsum(np.asarray(self.probs, dtype=np.float64))
        c[-1] = 1.0
        return c

    def has_odd_mass(self) -> bool:
        return any(p > 0 for k, p in enumerate(self.probs) if k % 2 == 1)


def law(kind: str, **mass) -> OffspringLaw:
    """Build an OffspringLaw from keyword masses, e.g. law("catalytic", q0=0.5, q3=0.5)."""
    ks = {int(name.lstrip("pq")): v for name, v in mass.items()}
    probs = [0.0] * (max(ks) + 1 if ks else 1)
    for k, v in ks.items():
        probs[k] = v
    return OffspringLaw(tuple(probs), kind)


@dataclass(frozen=True)
class BranchingSpec:
    """Rates and offspring laws of the ordinary and catalytic branchings.

    ``allow_parity_preserving`` downgrades the odd-mass requirement on q to a
    warning (the annihilating case).  ``oracle_mode`` permits beta_c == 0,
    which is outside the model's parameter range and exists purely so that
    plain BBM / heat-equation regressions can reuse the same machinery.
    """

    beta_o: float
    beta_c: float
    p: OffspringLaw
    q: OffspringLaw
    allow_parity_preserving: bool = False
    oracle_mode: bool = False


@dataclass(frozen=True)
class DerivedConstants:
    lambda_o: float
    lambda_c: float
    phi_prime0: float
    psi_prime0: float
    z_star: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "lambda_o": self.lambda_o,
                "lambda_c": self.lambda_c,
                "phi_prime0": self.phi_prime0,
                "psi_prime0": self.psi_prime0,
                "z_star": self.z_star,
            },
            sort_keys=True,
        )


def _law_diagnostics(l: OffspringLaw) -> list:
    out = []
    if any(p < 0 for p in l.probs):
        out.append((NotAProbability, f"{l.kind} law has negative mass"))
    s = sum(l.probs)
    if abs(s - 1.0) > PROB_TOL:
        out.append((NotAProbability, f"{l.kind} law sums to {s!r}, not 1"))
    if l.kind == "ordinary" and len(l.probs) > 1 and l.probs[1] != 0.0:
        out.append((ForbiddenMass, f"ordinary law has p_1 = {l.probs[1]} != 0"))
    if l.kind == "catalytic" and len(l.probs) > 2 and l.probs[2] != 0.0:
        out.append((ForbiddenMass, f"catalytic law has q_2 = {l.probs[2]} != 0"))
    return out


def diagnose(spec: BranchingSpec) -> list:
    """All violated assumptions as (exception class, message) pairs."""
    out = []
    if spec.p.kind != "ordinary" or spec.q.kind != "catalytic":
        out.append((MechanismError, "law kinds mismatched with their slots"))
    out.extend(_law_diagnostics(spec.p))
    out.extend(_law_diagnostics(spec.q))
    if spec.beta_o < 0:
        out.append((OutOfDomain, f"beta_o = {spec.beta_o} < 0"))
    if spec.beta_c <= 0 and not spec.oracle_mode:
        out.append((OutOfDomain, f"beta_c = {spec.beta_c} must be positive"))
    if spec.beta_c < 0:
        out.append((OutOfDomain, f"beta_c = {spec.beta_c} < 0"))
    if spec.q.mean >= 2:
        out.append(
            (SupercriticalCatalytic, f"sum k*q_k = {spec.q.mean} >= 2")
        )
    if not spec.q.has_odd_mass() and not spec.allow_parity_preserving:
        out.append(
            (ParityPreserving, "catalytic law puts no mass on odd offspring counts")
        )
    return out


def validate(spec: BranchingSpec) -> BranchingSpec:
    """Return the spec if all assumptions hold, else raise the first violation.

    Idempotent: validate(validate(spec)) is validate(spec).
    """
    diags = diagnose(spec)
    if diags:
        exc, msg = diags[0]
        raise exc(msg)
    if spec.allow_parity_preserving and not spec.q.has_odd_mass():
        warnings.warn("parity-preserving catalytic law: z* = 2 regime", stacklevel=2)
    return spec


def phi_eval(spec: BranchingSpec, z):
    """Ordinary branching mechanism: beta_o * (sum_k p_k (1-z)^k - (1-z))."""
    w = 1.0 - np.asarray(z, dtype=np.float64)
    coeffs = np.asarray(spec.p.probs[::-1], dtype=np.float64)
    val = spec.beta_o * (np.polyval(coeffs, w) - w)
    return float(val) if np.isscalar(z) or np.ndim(z) == 0 else val


def psi_eval(spec: BranchingSpec, z):
    """Catalytic branching mechanism: beta_c * (sum_k q_k (1-z)^k - (1-z)^2)."""
    w = 1.0 - np.asarray(z, dtype=np.float64)
    coeffs = np.asarray(spec.q.probs[::-1], dtype=np.float64)
    val = spec.beta_c * (np.polyval(coeffs, w) - w * w)
    return float(val) if np.isscalar(z) or np.ndim(z) == 0 else val


def z_star(spec: BranchingSpec, grid_points: int = 4096) -> float:
    """Smallest root of Psi in [1, 2], to absolute tolerance 1e-12.

    A coarse scan locates the first sign change (or exact zero), then
    bisection refines it.  If Psi stays positive on [1, 2) the function
    warns and returns 2.0 (the parity-preserving edge case).
    """
    zs = np.linspace(1.0, 2.0, grid_points)
    vals = psi_eval(spec, zs)
    if spec.beta_c == 0.0:
        return 1.0  # Psi identically 0: whole interval is a root, take the inf
    for i in range(grid_points):
        if vals[i] == 0.0:
            return float(zs[i])
        if vals[i] < 0.0:
            lo, hi = zs[i - 1], zs[i]
            while hi - lo > ZSTAR_TOL:
                mid = 0.5 * (lo + hi)
                if psi_eval(spec, mid) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)
    warnings.warn("Psi has no root in [1, 2): returning 2.0", stacklevel=2)
    return 2.0


def theta(gamma: float) -> float:
    """-log(1 - gamma) / gamma on [0, 1), continuously extended by 1 at 0."""
    if gamma < 0.0 or gamma >= 1.0:
        raise OutOfDomain(f"theta requires gamma in [0, 1), got {gamma}")
    if gamma == 0.0:
        return 1.0
    return -math.log1p(-gamma) / gamma


def kappa(spec: BranchingSpec, gamma: float, grid_points: int = 20000) -> float:
    """inf over w in (0, gamma] of psi_prime0 * w / Psi(w), with value 1 at w -> 0.

    Dense grid scan followed by golden-section refinement around the grid
    argmin; the result is clipped to [0, 1].
    """
    if gamma < 0.0 or gamma >= 1.0:
        raise OutOfDomain(f"kappa requires gamma in [0, 1), got {gamma}")
    psi_p0 = spec.beta_c * (2.0 - spec.q.mean)
    if psi_p0 <= 0:
        raise OutOfDomain("kappa requires psi_prime0 > 0")
    if gamma == 0.0:
        return 1.0
    ws = np.linspace(gamma / grid_points, gamma, grid_points)
    den = psi_eval(spec, ws)
    if np.any(den <= 0.0):
        raise ZeroDivisionError("Psi vanishes in (0, gamma]; gamma too large")
    ratio = psi_p0 * ws / den

    best = int(np.argmin(ratio))
    lo = ws[max(best - 1, 0)]
    hi = ws[min(best + 1, grid_points - 1)]

    def f(w):
        return psi_p0 * w / psi_eval(spec, w)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    val = min(1.0, float(np.min(ratio)), fc, fd)
    return max(0.0, val)


def derived_constants(spec: BranchingSpec) -> DerivedConstants:
    lambda_o = spec.beta_o * spec.p.mean
    lambda_c = spec.beta_c * spec.q.mean
    return DerivedConstants(
        lambda_o=lambda_o,
        lambda_c=lambda_c,
        phi_prime0=spec.beta_o - lambda_o,
        psi_prime0=spec.beta_c * (2.0 - spec.q.mean),
        z_star=z_star(spec),
    )
