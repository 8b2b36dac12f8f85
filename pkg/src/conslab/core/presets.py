"""Named analytic presets: mobilities, velocity fields, kernels and scalar fluxes.

Every preset carries a validity box on which its declared derivative bounds hold.
Fields and fluxes broadcast over numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Box:
    x: tuple[float, float] = (-math.inf, math.inf)
    u: tuple[float, float] = (-math.inf, math.inf)
    t: tuple[float, float] = (0.0, math.inf)

    def contains_x(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.x[0]) & (x <= self.x[1])))


class OutsideValidityBox(ValueError):
    pass


# --------------------------------------------------------------------------- mobilities

class Mobility:
    name = "mobility"
    box = Box(u=(0.0, 1.0))

    def __call__(self, rho):
        raise NotImplementedError

    def d(self, rho):
        raise NotImplementedError

    def dd(self, rho):
        raise NotImplementedError

    def bounds(self) -> dict[str, float]:
        raise NotImplementedError


class LinearCongestion(Mobility):
    """v(rho) = max(1 - rho / rho_max, 0)."""

    def __init__(self, rho_max: float = 1.0):
        self.rho_max = float(rho_max)
        self.name = "linear-congestion" if rho_max == 1.0 else f"linear-congestion({rho_max:g})"
        self.box = Box(u=(0.0, self.rho_max))

    def __call__(self, rho):
        return np.maximum(1.0 - np.asarray(rho, dtype=float) / self.rho_max, 0.0)

    def d(self, rho):
        rho = np.asarray(rho, dtype=float)
        return np.where(rho < self.rho_max, -1.0 / self.rho_max, 0.0)

    def dd(self, rho):
        return np.zeros_like(np.asarray(rho, dtype=float))

    def bounds(self):
        return {"v": 1.0, "dv": 1.0 / self.rho_max, "ddv": 0.0}


class UnitMobility(Mobility):
    name = "unit-mobility"
    box = Box(u=(0.0, math.inf))

    def __call__(self, rho):
        return np.ones_like(np.asarray(rho, dtype=float))

    def d(self, rho):
        return np.zeros_like(np.asarray(rho, dtype=float))

    dd = d

    def bounds(self):
        return {"v": 1.0, "dv": 0.0, "ddv": 0.0}


# --------------------------------------------------------------------------- fields V(t,x), kernels W(t,x)

class Field:
    """A scalar field F(t, x) with analytic dF/dx and d2F/dx2."""

    name = "field"
    box = Box()
    is_zero = False

    def __call__(self, t, x):
        raise NotImplementedError

    def dx(self, t, x):
        raise NotImplementedError

    def dxx(self, t, x):
        raise NotImplementedError

    def bounds(self) -> dict[str, float]:
        """Sup of |F|, |F_x|, |F_xx| on the validity box."""
        raise NotImplementedError

    def check_x(self, x):
        if not self.box.contains_x(x):
            raise OutsideValidityBox(f"{self.name}: position outside validity box {self.box.x}")


class ZeroField(Field):
    name = "zero"
    is_zero = True

    def __call__(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    dx = dxx = __call__

    def bounds(self):
        return {"F": 0.0, "dF": 0.0, "ddF": 0.0}


class ConstField(Field):
    def __init__(self, c: float):
        self.c = float(c)
        self.name = f"const-V({c:g})"

    def __call__(self, t, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def dx(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    dxx = dx

    def bounds(self):
        return {"F": abs(self.c), "dF": 0.0, "ddF": 0.0}


class SinField(Field):
    """a * sin(k x)."""

    def __init__(self, a: float = 1.0, k: float = 1.0):
        self.a, self.k = float(a), float(k)
        self.name = f"sin-V({a:g},{k:g})"

    def __call__(self, t, x):
        return self.a * np.sin(self.k * np.asarray(x, dtype=float))

    def dx(self, t, x):
        return self.a * self.k * np.cos(self.k * np.asarray(x, dtype=float))

    def dxx(self, t, x):
        return -self.a * self.k ** 2 * np.sin(self.k * np.asarray(x, dtype=float))

    def bounds(self):
        a, k = abs(self.a), abs(self.k)
        return {"F": a, "dF": a * k, "ddF": a * k * k}


class GaussianKernel(Field):
    """amp * exp(-x^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)."""

    def __init__(self, sigma: float = 0.5, amp: float = 1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma, self.amp = float(sigma), float(amp)
        self.name = f"gaussian-kernel({sigma:g})" if amp == 1.0 else f"gaussian-kernel({sigma:g},{amp:g})"
        self._c = self.amp / (math.sqrt(2 * math.pi) * self.sigma)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return self._c * np.exp(-0.5 * (x / self.sigma) ** 2)

    def dx(self, t, x):
        x = np.asarray(x, dtype=float)
        return -x / self.sigma ** 2 * self(t, x)

    def dxx(self, t, x):
        x = np.asarray(x, dtype=float)
        s2 = self.sigma ** 2
        return (x * x / s2 - 1.0) / s2 * self(t, x)

    def bounds(self):
        s, c = self.sigma, abs(self._c)
        return {"F": c, "dF": c / (s * math.sqrt(math.e)), "ddF": c / s ** 2}


class QuadraticKernel(Field):
    """a * x^2 on a bounded window."""

    def __init__(self, a: float = 1.0, half_width: float = 10.0):
        self.a = float(a)
        self.box = Box(x=(-half_width, half_width))
        self.name = f"quadratic-kernel({a:g})"

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.a * x * x

    def dx(self, t, x):
        return 2.0 * self.a * np.asarray(x, dtype=float)

    def dxx(self, t, x):
        return np.full_like(np.asarray(x, dtype=float), 2.0 * self.a)

    def bounds(self):
        L, a = self.box.x[1], abs(self.a)
        return {"F": a * L * L, "dF": 2 * a * L, "ddF": 2 * a}


# --------------------------------------------------------------------------- scalar fluxes g(u)

class ScalarFlux:
    """A flux depending on the state only.

    ``shape`` is 'convex', 'concave' or 'linear' with ``critical`` the extremum; this is
    all the Engquist-Osher splitting needs.
    """

    name = "flux"
    box = Box()
    shape = "linear"
    critical = 0.0

    def __call__(self, u):
        raise NotImplementedError

    def d(self, u):
        raise NotImplementedError

    def dd(self, u):
        raise NotImplementedError

    def positive_part(self, u):
        """int_0^u max(g'(s), 0) ds."""
        u = np.asarray(u, dtype=float)
        if self.shape == "convex":
            c = self.critical
            return self(np.maximum(u, c)) - self(np.maximum(0.0, c))
        if self.shape == "concave":
            c = self.critical
            return self(np.minimum(u, c)) - self(np.minimum(0.0, c))
        slope = float(self.d(np.array(0.0)))
        return max(slope, 0.0) * u

    def negative_part(self, u):
        u = np.asarray(u, dtype=float)
        return self(u) - self(np.zeros_like(u)) - self.positive_part(u)

    def c2_norm(self, lo: float, hi: float, samples: int = 2049) -> float:
        """Sampled max(|g|, |g'|, |g''|) on [lo, hi]."""
        u = np.linspace(lo, hi, samples)
        return float(max(np.abs(self(u)).max(), np.abs(self.d(u)).max(), np.abs(self.dd(u)).max()))

    def max_speed(self, lo: float, hi: float, samples: int = 2049) -> float:
        u = np.linspace(lo, hi, samples)
        return float(np.abs(self.d(u)).max())


class Burgers(ScalarFlux):
    name = "burgers"
    shape = "convex"
    critical = 0.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * u * u

    def d(self, u):
        return np.asarray(u, dtype=float) * 1.0

    def dd(self, u):
        return np.ones_like(np.asarray(u, dtype=float))


class LinearFlux(ScalarFlux):
    shape = "linear"

    def __init__(self, c: float = 1.0):
        self.c = float(c)
        self.name = f"linear({c:g})"

    def __call__(self, u):
        return self.c * np.asarray(u, dtype=float)

    def d(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.c)

    def dd(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))


class ZeroFlux(LinearFlux):
    def __init__(self):
        super().__init__(0.0)
        self.name = "zero"


class MobilityFlux(ScalarFlux):
    """m(rho) = rho * v(rho)."""

    def __init__(self, mobility: Mobility):
        self.mobility = mobility
        self.name = f"m[{mobility.name}]"
        self.box = mobility.box
        if isinstance(mobility, LinearCongestion):
            self.shape, self.critical = "concave", 0.5 * mobility.rho_max
        elif isinstance(mobility, UnitMobility):
            self.shape = "linear"
        else:
            raise ValueError(f"no flux splitting known for mobility {mobility.name}")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return u * self.mobility(u)

    def d(self, u):
        u = np.asarray(u, dtype=float)
        return self.mobility(u) + u * self.mobility.d(u)

    def dd(self, u):
        u = np.asarray(u, dtype=float)
        return 2.0 * self.mobility.d(u) + u * self.mobility.dd(u)


class LWRFlux(MobilityFlux):
    """u (1 - u), the flux of the linear-congestion mobility."""

    def __init__(self):
        super().__init__(LinearCongestion(1.0))
        self.name = "lwr"


# --------------------------------------------------------------------------- general fluxes P(t, x, u)

class ProductFlux:
    """P(t, x, u) = a(t, x) * g(u).

    ``a`` is any object with ``__call__``, ``dx`` and ``dxx`` taking ``(t, x)``.
    """

    def __init__(self, a, g: ScalarFlux):
        self.a, self.g = a, g

    def value(self, t, x, u):
        return self.a(t, x) * self.g(u)

    def dx(self, t, x, u):
        return self.a.dx(t, x) * self.g(u)

    def du(self, t, x, u):
        return self.a(t, x) * self.g.d(u)

    def dxx(self, t, x, u):
        return self.a.dxx(t, x) * self.g(u)

    def dxu(self, t, x, u):
        return self.a.dx(t, x) * self.g.d(u)

    def engquist_osher(self, t, x, ul, ur):
        """Engquist-Osher numerical flux with the space dependence frozen at ``x``."""
        a = self.a(t, x)
        g = self.g
        pl, pr = g.positive_part(ul), g.positive_part(ur)
        # g+(ul) + g-(ur) + g(0) = g+(ul) + g(ur) - g+(ur), and symmetrically for a < 0
        return np.where(a >= 0, a * (pl + g(ur) - pr), a * (g(ul) - pl + pr))

    def engquist_osher_cells(self, t, x_int, v):
        """Engquist-Osher fluxes at the interfaces ``x_int`` between consecutive entries of ``v``."""
        a = self.a(t, x_int)
        p = self.g.positive_part(v)
        gv = self.g(v)
        right = p[:-1] + gv[1:] - p[1:]
        if np.all(a >= 0):
            return a * right
        return np.where(a >= 0, a * right, a * (gv[:-1] - p[:-1] + p[1:]))

    def max_speed(self, t, xs, lo, hi) -> float:
        return float(np.abs(self.a(t, xs)).max() * self.g.max_speed(lo, hi))


def local_flux(g: ScalarFlux) -> ProductFlux:
    return ProductFlux(ConstField(1.0), g)


# --------------------------------------------------------------------------- model

@dataclass
class ModelSpec:
    """The triple (v, V, W) plus optional local/general fluxes for the grid solvers."""

    mobility: Mobility = field(default_factory=LinearCongestion)
    velocity: Field = field(default_factory=ZeroField)
    kernel: Field = field(default_factory=ZeroField)
    local_flux: ScalarFlux | None = None
    flux: ProductFlux | None = None
    name: str = ""

    @property
    def m(self) -> MobilityFlux:
        return MobilityFlux(self.mobility)

    def describe(self) -> dict[str, str]:
        out = {"mobility": self.mobility.name, "velocity": self.velocity.name, "kernel": self.kernel.name}
        if self.local_flux is not None:
            out["local_flux"] = self.local_flux.name
        return out


# --------------------------------------------------------------------------- catalog

_CATALOG: dict[str, tuple[str, Callable]] = {
    "linear-congestion": ("mobility", LinearCongestion),
    "unit-mobility": ("mobility", UnitMobility),
    "zero": ("field", ZeroField),
    "const-V": ("field", ConstField),
    "sin-V": ("field", SinField),
    "gaussian-kernel": ("field", GaussianKernel),
    "quadratic-kernel": ("field", QuadraticKernel),
    "burgers": ("flux", Burgers),
    "lwr": ("flux", LWRFlux),
    "linear": ("flux", LinearFlux),
    "zero-flux": ("flux", ZeroFlux),
}

_PRESET_RE = re.compile(r"^\s*([a-zA-Z][\w-]*)\s*(?:\(([^)]*)\))?\s*$")


class UnknownPreset(KeyError):
    pass


def preset_names() -> dict[str, str]:
    return {name: role for name, (role, _) in _CATALOG.items()}


def make_preset(spec: str, role: str | None = None):
    """Instantiate a preset from a catalog string such as ``"gaussian-kernel(0.5)"``."""
    m = _PRESET_RE.match(spec)
    if not m:
        raise UnknownPreset(f"malformed preset '{spec}'")
    name, args = m.group(1), m.group(2)
    if name not in _CATALOG:
        raise UnknownPreset(f"unknown preset '{name}'")
    kind, ctor = _CATALOG[name]
    if role is not None and kind != role:
        if not (role == "flux" and name == "zero"):
            raise UnknownPreset(f"preset '{name}' is a {kind}, expected a {role}")
        ctor = ZeroFlux
    params = [float(a) for a in args.split(",")] if args and args.strip() else []
    return ctor(*params)


LWR_GAUSS = dict(mobility="linear-congestion", velocity="const-V(1)", kernel="gaussian-kernel(0.5,0.5)")
PRESET_MODELS: dict[str, dict[str, str]] = {
    "static": dict(mobility="linear-congestion", velocity="zero", kernel="zero"),
    "lwr": dict(mobility="linear-congestion", velocity="const-V(1)", kernel="zero"),
    "lwr-gauss": LWR_GAUSS,
    "sin-drift": dict(mobility="linear-congestion", velocity="sin-V(1,2)", kernel="zero"),
}


def make_model(mobility: str = "linear-congestion", velocity: str = "zero", kernel: str = "zero",
               local_flux: str | None = None, name: str = "") -> ModelSpec:
    return ModelSpec(
        mobility=make_preset(mobility, "mobility"),
        velocity=make_preset(velocity, "field"),
        kernel=make_preset(kernel, "field"),
        local_flux=make_preset(local_flux, "flux") if local_flux else None,
        name=name,
    )


def preset_model(name: str) -> ModelSpec:
    if name not in PRESET_MODELS:
        raise UnknownPreset(f"unknown model preset '{name}'")
    return make_model(**PRESET_MODELS[name], name=name)
