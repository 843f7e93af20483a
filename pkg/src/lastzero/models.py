"""Model catalog for spectrally negative Levy processes.

A model is the triplet (mu, sigma, jumps) with all jump mass on the negative
half line.  The Laplace exponent follows the convention

    psi(b) = -mu*b + sigma^2 b^2 / 2 + int (e^{b y} - 1 - b y 1{y > -1}) Pi(dy),

so ``mu`` is the linear coefficient of the Levy--Khintchine form with the
truncated compensator, not the pathwise drift.  For finite-variation entries
the pathwise drift between jumps is ``drift_d = -mu - int_(-1,0) y Pi(dy)``.
Use the constructors (:func:`brownian_motion`, :func:`cramer_lundberg`, ...)
to avoid sign bookkeeping.

Everything here is a frozen dataclass; evaluation is pure and cheap, so
instances can be shared freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

from scipy.optimize import brentq
from scipy.special import gamma as _gamma_fn

from .errors import DomainError, UnsupportedModelError

__all__ = [
    "ExponentialLaw",
    "DeterministicLaw",
    "MixtureLaw",
    "CompoundPoisson",
    "StableTail",
    "LevyModel",
    "brownian_motion",
    "cramer_lundberg",
    "jump_diffusion",
    "stable_process",
    "load_model",
    "model_to_dict",
]


def _exp(z):
    """exp() that follows the argument type (mpmath scalars vs floats/complex)."""
    if type(z).__module__.startswith("mpmath"):
        import mpmath

        return mpmath.exp(z)
    if isinstance(z, complex):
        import cmath

        return cmath.exp(z)
    return math.exp(z)


# ---------------------------------------------------------------------------
# jump laws: distribution of the jump magnitude W > 0 (jump = -W)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialLaw:
    """Exponential jump magnitudes with the given mean."""

    mean: float

    def __post_init__(self):
        if self.mean <= 0:
            raise DomainError(f"exponential jump mean must be positive, got {self.mean}")

    @property
    def rate(self) -> float:
        return 1.0 / self.mean

    def mgf_neg(self, b):
        # E[e^{-b W}]; rational continuation off the real axis.
        return self.rate / (self.rate + b)

    def moment_neg(self, b: float, k: int) -> float:
        # E[W^k e^{-b W}]
        return math.factorial(k) * self.rate / (self.rate + b) ** (k + 1)

    def mean_below_one(self) -> float:
        # E[W 1{W < 1}]
        r = self.rate
        return (1.0 - math.exp(-r)) / r - math.exp(-r)

    def mean_magnitude(self) -> float:
        return self.mean

    def tail(self, w: float) -> float:
        # P(W > w)
        return 1.0 if w <= 0 else math.exp(-self.rate * w)

    def tilted(self, b: float):
        # reweighting by e^{-b W}: stays exponential
        factor = self.rate / (self.rate + b)
        return factor, ExponentialLaw(mean=1.0 / (self.rate + b))


@dataclass(frozen=True)
class DeterministicLaw:
    """All jumps have the same magnitude."""

    size: float

    def __post_init__(self):
        if self.size <= 0:
            raise DomainError(f"deterministic jump size must be positive, got {self.size}")

    def mgf_neg(self, b):
        return _exp(-b * self.size)

    def moment_neg(self, b: float, k: int) -> float:
        return self.size**k * math.exp(-b * self.size)

    def mean_below_one(self) -> float:
        return self.size if self.size < 1.0 else 0.0

    def mean_magnitude(self) -> float:
        return self.size

    def tail(self, w: float) -> float:
        return 1.0 if w < self.size else 0.0

    def tilted(self, b: float):
        return math.exp(-b * self.size), DeterministicLaw(self.size)


@dataclass(frozen=True)
class MixtureLaw:
    """Finite mixture of jump-magnitude laws; weights must sum to one."""

    components: tuple  # of (weight, law)

    def __post_init__(self):
        total = sum(w for w, _ in self.components)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-12):
            raise DomainError(f"mixture weights sum to {total}, expected 1")
        if not self.components:
            raise DomainError("mixture needs at least one component")

    def mgf_neg(self, b):
        return sum(w * law.mgf_neg(b) for w, law in self.components)

    def moment_neg(self, b: float, k: int) -> float:
        return sum(w * law.moment_neg(b, k) for w, law in self.components)

    def mean_below_one(self) -> float:
        return sum(w * law.mean_below_one() for w, law in self.components)

    def mean_magnitude(self) -> float:
        return sum(w * law.mean_magnitude() for w, law in self.components)

    def tail(self, w: float) -> float:
        return sum(wt * law.tail(w) for wt, law in self.components)

    def tilted(self, b: float):
        pairs = [(w * f, lw) for w, (f, lw) in ((w, law.tilted(b)) for w, law in self.components)]
        total = sum(w for w, _ in pairs)
        new = MixtureLaw(tuple((w / total, lw) for w, lw in pairs))
        return total, new


JumpLaw = Union[ExponentialLaw, DeterministicLaw, MixtureLaw]


@dataclass(frozen=True)
class CompoundPoisson:
    """Finite-activity negative jumps: rate * law of the magnitude."""

    rate: float
    law: JumpLaw

    def __post_init__(self):
        if self.rate <= 0:
            raise DomainError(f"jump rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class StableTail:
    """Spectrally negative stable jump part contributing scale * b**alpha to psi.

    The Levy density is c(alpha, scale) * |y|^{-1-alpha} on y < 0 with
    c = scale * alpha * (alpha - 1) / Gamma(2 - alpha).  Infinite activity;
    simulated by compound-Poisson large jumps plus matched-variance Gaussian
    small jumps (see pathsim).
    """

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise DomainError(f"stable index must lie in (1, 2), got {self.alpha}")
        if self.scale <= 0:
            raise DomainError(f"stable scale must be positive, got {self.scale}")

    @property
    def density_constant(self) -> float:
        a = self.alpha
        return self.scale * a * (a - 1.0) / _gamma_fn(2.0 - a)


Jumps = Union[CompoundPoisson, StableTail, None]


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevyModel:
    """Spectrally negative Levy model from the fixed catalog.

    Parameters
    ----------
    mu : float
        Linear coefficient in the Levy--Khintchine form (see module docstring).
    sigma : float
        Gaussian coefficient, >= 0.
    jumps : CompoundPoisson | StableTail | None
        Negative-jump component.
    """

    mu: float
    sigma: float = 0.0
    jumps: Jumps = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
        if self.sigma == 0.0 and self.jumps is None:
            raise DomainError("monotone path: sigma = 0 with no jumps is not a Levy model of this catalog")
        if self.is_finite_variation and self.drift_d <= 0:
            raise DomainError(
                "monotone path: finite variation requires positive drift between jumps "
                f"(drift_d = {self.drift_d})"
            )

    # -- structure ---------------------------------------------------------

    @property
    def is_finite_variation(self) -> bool:
        return self.sigma == 0.0 and isinstance(self.jumps, CompoundPoisson)

    @cached_property
    def compensator_mean(self) -> float:
        """rate * E[W 1{W<1}] for the compound-Poisson part, else 0."""
        if isinstance(self.jumps, CompoundPoisson):
            return self.jumps.rate * self.jumps.law.mean_below_one()
        return 0.0

    @cached_property
    def drift_d(self) -> float:
        """Pathwise drift between jumps, -mu - int_(-1,0) y Pi(dy).

        Only meaningful for finite-activity jump parts; this is the constant
        ``d`` with W^(q)(0) = 1/d in the finite-variation case.
        """
        return -self.mu + self.compensator_mean

    @cached_property
    def mu_lk(self) -> float:
        """mu of the truncated-compensator Levy--Khintchine form.

        Coincides with ``mu`` except for the stable entry, whose psi folds the
        large-jump compensator shift into the linear coefficient.
        """
        if isinstance(self.jumps, StableTail):
            c = self.jumps.density_constant
            return self.mu + c / (self.jumps.alpha - 1.0)
        return self.mu

    @cached_property
    def mean_rate(self) -> float:
        """psi'(0+) = E[X_1]; sign classifies the long-run behaviour."""
        out = -self.mu
        if isinstance(self.jumps, CompoundPoisson):
            out += self.jumps.rate * (self.jumps.law.mean_below_one() - self.jumps.law.mean_magnitude())
        return out

    # -- Laplace exponent ---------------------------------------------------

    def psi(self, b):
        """Laplace exponent; accepts float, complex or mpmath scalars."""
        out = -self.mu * b + 0.5 * self.sigma**2 * b * b
        j = self.jumps
        if isinstance(j, CompoundPoisson):
            out += j.rate * (j.law.mgf_neg(b) - 1.0) + b * self.compensator_mean
        elif isinstance(j, StableTail):
            out += j.scale * b**j.alpha
        return out

    def psi_deriv(self, b: float, order: int = 1) -> float:
        """Exact derivative of psi of the given order at b >= 0 (b > 0 for stable)."""
        if order < 1:
            raise DomainError("derivative order must be >= 1")
        j = self.jumps
        if order == 1:
            out = -self.mu + self.sigma**2 * b
            if isinstance(j, CompoundPoisson):
                out += -j.rate * j.law.moment_neg(b, 1) + self.compensator_mean
            elif isinstance(j, StableTail):
                out += j.scale * j.alpha * b ** (j.alpha - 1.0) if b > 0 else 0.0
            return out
        out = self.sigma**2 if order == 2 else 0.0
        if isinstance(j, CompoundPoisson):
            out += j.rate * (-1.0) ** order * j.law.moment_neg(b, order)
        elif isinstance(j, StableTail):
            if b <= 0:
                raise DomainError("stable psi derivatives of order >= 2 need b > 0")
            a, coeff = j.alpha, j.scale
            for k in range(order):
                coeff *= a - k
            out += coeff * b ** (a - order)
        return out

    def phi(self, q: float) -> float:
        """Largest root of psi(b) = q for q >= 0 (right inverse of psi)."""
        if q < 0:
            raise DomainError(f"phi needs q >= 0, got {q}")
        slope0 = self.mean_rate
        if q == 0.0 and slope0 >= 0.0:
            return 0.0
        lo = 0.0
        if slope0 < 0.0:
            # psi' is increasing, so the minimiser of psi is its unique root
            hi = 1.0
            while self.psi_deriv(hi) <= 0.0:
                hi *= 2.0
                if hi > 1e12:  # pragma: no cover - catalog models never get here
                    raise DomainError("psi' stays negative; model drifts to -infinity too strongly")
            lo = brentq(self.psi_deriv, 1e-300, hi, xtol=1e-14)
        hi = max(2.0 * lo, 1.0)
        while self.psi(hi) <= q:
            hi *= 2.0
        root = brentq(lambda b: self.psi(b) - q, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
        # Newton polish to hit the stated residual tolerance
        for _ in range(2):
            f = self.psi(root) - q
            df = self.psi_deriv(root)
            if df > 0 and math.isfinite(df):
                step = f / df
                if root - step > lo:
                    root -= step
        return root

    def phi_prime(self, q: float) -> float:
        """Phi'(q) = 1 / psi'(Phi(q)+)."""
        d = self.psi_deriv(self.phi(q))
        if d <= 0:
            raise DomainError(f"psi'(Phi(q)) = {d} is not positive (q={q}); Phi'(q) undefined")
        return 1.0 / d

    # -- exponential change of measure --------------------------------------

    def tilt(self, b: float) -> "LevyModel":
        """Model under the exponential change of measure with parameter b >= 0.

        The result has Laplace exponent psi_b(s) = psi(s + b) - psi(b).
        Exponential-family jump laws stay in the catalog; the stable entry
        does not tilt.
        """
        if b < 0:
            raise DomainError(f"tilt parameter must be >= 0, got {b}")
        if b == 0.0:
            return self
        if isinstance(self.jumps, StableTail):
            raise UnsupportedModelError("tilting a stable tail leaves the catalog")
        new_mu = self.mu - self.sigma**2 * b
        new_jumps: Jumps = None
        if isinstance(self.jumps, CompoundPoisson):
            factor, new_law = self.jumps.law.tilted(b)
            new_rate = self.jumps.rate * factor
            new_jumps = CompoundPoisson(rate=new_rate, law=new_law)
            # keep psi_b(s) = psi(s+b) - psi(b): the linear coefficient of the
            # tilted model absorbs the change in the truncated compensator
            new_comp = new_rate * new_law.mean_below_one()
            old_comp = self.compensator_mean
            new_mu = new_mu + new_comp - old_comp
        return LevyModel(mu=new_mu, sigma=self.sigma, jumps=new_jumps, label=self.label)

    # -- rational structure for closed-form scale functions ------------------

    def rational_parts(self):
        """(polynomial coeffs [c0, c1, c2], [(rate_j, exp_rate_j)]) if psi is rational.

        psi(b) = c1 b + c2 b^2 - sum_j rate_j * b / (exp_rate_j + b).
        Returns None for models with a transcendental exponent (deterministic
        jumps, stable tail).
        """
        comps: list = []
        j = self.jumps
        if isinstance(j, CompoundPoisson):
            laws = j.law.components if isinstance(j.law, MixtureLaw) else ((1.0, j.law),)
            for w, law in laws:
                if not isinstance(law, ExponentialLaw):
                    return None
                comps.append((j.rate * w, law.rate))
        elif j is not None:
            return None
        c1 = -self.mu + self.compensator_mean
        return [0.0, c1, 0.5 * self.sigma**2], comps

    # -- jump-part helpers used by the generator and simulators --------------

    def jump_tail(self, w: float) -> float:
        """Pi((-inf, -w)) for w > 0."""
        if w <= 0:
            raise DomainError("jump_tail needs w > 0 (total mass is infinite for stable tails)")
        j = self.jumps
        if j is None:
            return 0.0
        if isinstance(j, CompoundPoisson):
            return j.rate * j.law.tail(w)
        return j.density_constant * w ** (-j.alpha) / j.alpha


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def brownian_motion(mu: float = 0.0, sigma: float = 1.0) -> LevyModel:
    """Brownian motion with psi(b) = -mu b + sigma^2 b^2 / 2."""
    return LevyModel(mu=mu, sigma=sigma, jumps=None, label="bm")


def cramer_lundberg(premium: float, claim_rate: float, claim_mean: float, sigma: float = 0.0) -> LevyModel:
    """Risk process: upward drift ``premium`` minus exponential claims.

    ``premium`` is the pathwise drift between claims; the net profit condition
    is premium > claim_rate * claim_mean.
    """
    law = ExponentialLaw(mean=claim_mean)
    mu = claim_rate * law.mean_below_one() - premium
    return LevyModel(mu=mu, sigma=sigma, jumps=CompoundPoisson(rate=claim_rate, law=law), label="cramer_lundberg")


def jump_diffusion(mu: float, sigma: float, rate: float, law: JumpLaw) -> LevyModel:
    """Brownian part plus compound-Poisson negative jumps."""
    return LevyModel(mu=mu, sigma=sigma, jumps=CompoundPoisson(rate=rate, law=law), label="jump_diffusion")


def stable_process(alpha: float, scale: float = 1.0, mu: float = 0.0, sigma: float = 0.0) -> LevyModel:
    """Spectrally negative model with psi(b) = -mu b + sigma^2 b^2/2 + scale b^alpha."""
    return LevyModel(mu=mu, sigma=sigma, jumps=StableTail(alpha=alpha, scale=scale), label="stable")


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_LAW_KINDS = {"exponential", "deterministic", "mixture"}


def _law_from_dict(d: dict) -> JumpLaw:
    kind = d.get("kind", "exponential")
    if kind == "exponential":
        return ExponentialLaw(mean=float(d["mean"]))
    if kind == "deterministic":
        return DeterministicLaw(size=abs(float(d["size"])))
    if kind == "mixture":
        comps = tuple((float(c["weight"]), _law_from_dict(c)) for c in d["components"])
        return MixtureLaw(components=comps)
    raise DomainError(f"unknown jump law kind {kind!r} (expected one of {sorted(_LAW_KINDS)})")


def _law_to_dict(law: JumpLaw) -> dict:
    if isinstance(law, ExponentialLaw):
        return {"kind": "exponential", "mean": law.mean}
    if isinstance(law, DeterministicLaw):
        return {"kind": "deterministic", "size": law.size}
    return {
        "kind": "mixture",
        "components": [dict(weight=w, **_law_to_dict(lw)) for w, lw in law.components],
    }


def model_from_dict(d: dict) -> LevyModel:
    jumps_cfg = d.get("jumps")
    jumps: Jumps = None
    if jumps_cfg and jumps_cfg.get("kind", "none") != "none":
        kind = jumps_cfg["kind"]
        if kind == "stable":
            jumps = StableTail(alpha=float(jumps_cfg["alpha"]), scale=float(jumps_cfg.get("scale", 1.0)))
        else:
            jumps = CompoundPoisson(rate=float(jumps_cfg["rate"]), law=_law_from_dict(jumps_cfg))
    return LevyModel(
        mu=float(d.get("mu", 0.0)),
        sigma=float(d.get("sigma", 0.0)),
        jumps=jumps,
        label=str(d.get("kind", "")),
    )


def model_to_dict(model: LevyModel) -> dict:
    out: dict = {"kind": model.label or "custom", "mu": model.mu, "sigma": model.sigma}
    j = model.jumps
    if j is None:
        out["jumps"] = {"kind": "none"}
    elif isinstance(j, StableTail):
        out["jumps"] = {"kind": "stable", "alpha": j.alpha, "scale": j.scale}
    else:
        out["jumps"] = {**_law_to_dict(j.law), "rate": j.rate}
    return out


def load_model(source: Union[str, Path, dict]) -> LevyModel:
    """Load a model from a TOML/JSON file path or an already-parsed mapping."""
    if isinstance(source, dict):
        return model_from_dict(source)
    path = Path(source)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    if "model" in data:
        data = data["model"]
    return model_from_dict(data)
