"""Shared domain types: trait grids, coefficient profiles, fields, reaction laws.

Conventions used throughout the package:
  * the trait direction theta is cell-centered with ghost-point Neumann
    reflection, so zero wall flux is exact at the discrete level;
  * the space direction x is node-centered;
  * every theta-integral uses the midpoint rule (sum * dtheta).
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, replace

import numpy as np


class UnknownBuiltin(ValueError):
    """Profile descriptor does not name a known builtin."""


class NonPositiveDiffusivity(ValueError):
    """Sampled diffusivity fails uniform positivity."""


@dataclass(frozen=True)
class ThetaDomain:
    """Trait interval [theta_min, theta_max], n_theta cell-centered samples."""

    theta_min: float
    theta_max: float
    n_theta: int

    def __post_init__(self):
        if not self.theta_min < self.theta_max:
            raise ValueError("need theta_min < theta_max")
        if self.n_theta < 4:
            raise ValueError("need n_theta >= 4")

    @property
    def width(self) -> float:
        return self.theta_max - self.theta_min

    @property
    def dtheta(self) -> float:
        return self.width / self.n_theta

    @property
    def centers(self) -> np.ndarray:
        return self.theta_min + (np.arange(self.n_theta) + 0.5) * self.dtheta

    def integrate(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        """Midpoint-rule integral over the trait interval."""
        return np.sum(values, axis=axis) * self.dtheta


@dataclass(frozen=True)
class TraitProfile:
    """Coefficient data on a trait grid: spatial diffusivity D and drift A."""

    domain: ThetaDomain
    D: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "D", np.asarray(self.D, dtype=float))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        if self.D.shape != (self.domain.n_theta,) or self.A.shape != (self.domain.n_theta,):
            raise ValueError("D and A must be sampled at the domain cell centers")
        if np.min(self.D) <= 0:
            raise NonPositiveDiffusivity(f"min D = {np.min(self.D)}")

    def resampled(self, n_theta: int) -> "TraitProfile":
        """Same coefficient functions on a finer/coarser cell-centered grid.

        Only meaningful for profiles built from a descriptor; table profiles
        are re-interpolated linearly.
        """
        dom = ThetaDomain(self.domain.theta_min, self.domain.theta_max, n_theta)
        D = np.interp(dom.centers, self.domain.centers, self.D)
        A = np.interp(dom.centers, self.domain.centers, self.A)
        return TraitProfile(dom, D, A)


def _sample_descriptor(spec: str, domain: ThetaDomain) -> np.ndarray:
    words = spec.strip().split(None, 1)
    if not words:
        raise UnknownBuiltin("empty profile descriptor")
    name = words[0]
    arg = words[1] if len(words) > 1 else ""
    th = domain.centers
    if name == "const":
        return np.full(domain.n_theta, float(arg))
    if name == "theta":
        return th.copy()
    if name == "affine":
        a, b = (float(w) for w in arg.split())
        return a + b * th
    if name == "table":
        vals = np.asarray(ast.literal_eval(arg), dtype=float)
        if vals.shape != (domain.n_theta,):
            raise ValueError(
                f"table has {vals.size} entries, grid has {domain.n_theta} cells"
            )
        return vals
    raise UnknownBuiltin(f"unknown profile builtin {name!r}")


def sample_profile(spec: str, domain: ThetaDomain, drift: str = "const 0") -> TraitProfile:
    """Sample a diffusivity descriptor (and optional drift) at cell centers.

    Descriptor grammar: ``const c`` | ``theta`` | ``affine a b`` (a + b*theta)
    | ``table [v0, v1, ...]``.  A compound ``"<D spec> | <A spec>"`` form sets
    the drift in one string.
    """
    if "|" in spec:
        spec, drift = (part.strip() for part in spec.split("|", 1))
    D = _sample_descriptor(spec, domain)
    A = _sample_descriptor(drift, domain)
    if np.min(D) <= 0:
        raise NonPositiveDiffusivity(f"descriptor {spec!r}: min D = {np.min(D)}")
    return TraitProfile(domain, D, A)


def normalize_drift(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Subtract the cell-measure mean; returns (centered drift, shift)."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("drift must be finite")
    shift = float(np.mean(A))
    return A - shift, shift


# ---------------------------------------------------------------------------
# fields

BC_NEUMANN = "neumann"
BC_MOVING_DIRICHLET = "moving_dirichlet"


def bc_dirichlet(value: float = 0.0) -> tuple:
    return ("dirichlet", float(value))


@dataclass
class Field:
    """Time-stamped grid of values on the current x-window times Theta.

    ``values`` has shape (n_x, n_theta): x nodes along axis 0 (left edge at
    ``x_offset``, spacing ``dx``), trait cells along axis 1.
    """

    t: float
    x_offset: float
    dx: float
    domain: ThetaDomain
    values: np.ndarray
    bc_x_left: object = BC_NEUMANN
    bc_x_right: object = BC_NEUMANN

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.x_offset + self.dx * np.arange(self.n_x)

    def copy(self) -> "Field":
        return replace(self, values=self.values.copy())

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("field contains non-finite values")


def total_density(fld: Field) -> np.ndarray:
    """rho(x) = integral of the field over the trait interval (midpoint rule)."""
    fld.check_finite()
    return fld.domain.integrate(fld.values, axis=1)


# ---------------------------------------------------------------------------
# reaction laws

@dataclass(frozen=True)
class ReactionLaw:
    """Fisher-KPP type nonlinearity f(u), selected by ``kind``.

    kinds:
      kpp_quadratic          f(u) = u (1 - u)
      lower_sandwich(C, p)   f(u) = u (1 - C u^(1/p))
      upper_sandwich(C, p)   f(u) = u (1 - C^(-p) u^p)
      kpp_bounded(M, delta)  f(u) = u - M u^(1+delta), delta > 2/3
      wave_modified(m_bar)   f(u) (1 - u/m_bar) with f quadratic KPP
    """

    kind: str = "kpp_quadratic"
    C: float = 1.0
    p: float = 1.25
    M_delta: float = 1.0
    delta: float = 1.0
    m_bar: float = 0.75

    def __post_init__(self):
        if self.kind not in (
            "kpp_quadratic",
            "lower_sandwich",
            "upper_sandwich",
            "kpp_bounded",
            "wave_modified",
        ):
            raise ValueError(f"unknown reaction kind {self.kind!r}")
        if self.kind == "kpp_bounded" and not self.delta > 2 / 3:
            raise ValueError("kpp_bounded requires delta > 2/3")
        if self.kind in ("lower_sandwich", "upper_sandwich"):
            if self.C <= 0:
                raise ValueError("sandwich constant must be positive")
            if not 1.0 < self.p < 1.5:
                raise ValueError("sandwich exponent must lie in (1, 3/2)")

    @property
    def u_m(self) -> float:
        """The positive zero of f (saturation level)."""
        if self.kind == "kpp_quadratic":
            return 1.0
        if self.kind == "lower_sandwich":
            return self.C ** (-self.p)
        if self.kind == "upper_sandwich":
            return self.C
        if self.kind == "kpp_bounded":
            return self.M_delta ** (-1.0 / self.delta)
        return self.m_bar

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "kpp_quadratic":
            return u * (1.0 - u)
        if self.kind == "lower_sandwich":
            up = np.power(np.maximum(u, 0.0), 1.0 / self.p)
            return u * (1.0 - self.C * up)
        if self.kind == "upper_sandwich":
            up = np.power(np.maximum(u, 0.0), self.p)
            return u * (1.0 - up / self.C**self.p)
        if self.kind == "kpp_bounded":
            up = np.power(np.maximum(u, 0.0), 1.0 + self.delta)
            return u - self.M_delta * up
        # wave_modified: quadratic KPP damped to saturate at m_bar
        return u * (1.0 - u) * (1.0 - u / self.m_bar)


@dataclass(frozen=True)
class WindowPolicy:
    """Window behaviour: fixed, or following the front by whole-cell shifts."""

    kind: str = "fixed"  # "fixed" | "follow_front"
    margin_left: float = 45.0
    margin_right: float = 35.0

    @staticmethod
    def fixed() -> "WindowPolicy":
        return WindowPolicy("fixed")

    @staticmethod
    def follow_front(margin_left: float = 45.0, margin_right: float = 35.0) -> "WindowPolicy":
        return WindowPolicy("follow_front", margin_left, margin_right)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """x window, spacings and horizon for a run."""

    x_min: float
    x_max: float
    dx: float
    dt: float
    t_end: float
    window: WindowPolicy = field(default_factory=WindowPolicy.fixed)

    def __post_init__(self):
        n_cells = (self.x_max - self.x_min) / self.dx
        if abs(n_cells - round(n_cells)) > 1e-9 * max(1.0, abs(n_cells)) or round(n_cells) < 1:
            raise ValueError("(x_max - x_min)/dx must be a positive integer")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")

    @property
    def n_x(self) -> int:
        """Number of x nodes (cells + 1)."""
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    @property
    def x_nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x)
