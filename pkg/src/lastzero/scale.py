"""q-scale function evaluation.

Two backends sit behind :class:`ScaleEvaluator`:

* closed form by partial fractions whenever the Laplace exponent is rational
  (Brownian motion, exponential or mixed-exponential jumps, with or without a
  Gaussian part);
* fixed-Talbot numerical inversion otherwise (deterministic jumps, stable
  tails).  The inversion always targets the tilted transform
  1/(psi(s + Phi(q)) - q), whose preimage is bounded, and re-exponentiates;
  node counts double until two consecutive resolutions agree.

The value at zero is never obtained by inversion: it is the known constant
(1/d for finite variation, 0 otherwise).
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DomainError, NumericError
from .models import LevyModel

__all__ = ["ScaleEvaluator"]

_AGREE_RTOL = 1e-9  # two-resolution agreement gate for the inversion backend
_MAX_NODE_DOUBLINGS = 3


# ---------------------------------------------------------------------------
# small exponential-integral helpers (complex-safe, stable near gamma = 0)
# ---------------------------------------------------------------------------


def _int_exp(gamma, x):
    """int_0^x e^{g y} dy."""
    gx = gamma * x
    if abs(gx) < 1e-8:
        return x * (1.0 + gx / 2.0 + gx * gx / 6.0)
    return (np.exp(gx) - 1.0) / gamma


def _int_y_exp(gamma, x):
    """int_0^x y e^{g y} dy."""
    gx = gamma * x
    if abs(gx) < 1e-6:
        return x * x * (0.5 + gx / 3.0 + gx * gx / 8.0)
    return (x * np.exp(gx)) / gamma - (np.exp(gx) - 1.0) / (gamma * gamma)


# ---------------------------------------------------------------------------
# closed-form backend: psi rational => W is a mixture of exponentials
# ---------------------------------------------------------------------------


class _ExpMixtureBackend:
    """W^(q)(x) = a + b x + sum_i c_i exp(r_i x) from partial fractions.

    The polynomial piece only appears for q = 0 in the oscillating case
    (double root of psi at the origin).
    """

    def __init__(self, model: LevyModel, q: float, phi_q: float):
        poly, comps = model.rational_parts()
        c0, c1, c2 = poly
        # numerator P and denominator Q of psi(b) - q = P(b)/Q(b)
        Q = np.array([1.0])
        for _, rho in comps:
            Q = npoly.polymul(Q, np.array([rho, 1.0]))
        P = npoly.polymul(np.array([c0 - q, c1, c2]) if c2 else np.array([c0 - q, c1]), Q)
        for j, (lam, _) in enumerate(comps):
            Pj = np.array([0.0, lam])  # lam * b
            for k, (_, rho_k) in enumerate(comps):
                if k != j:
                    Pj = npoly.polymul(Pj, np.array([rho_k, 1.0]))
            P = npoly.polysub(P, Pj)
        P = np.trim_zeros(P, "b")
        self.poly_a = 0.0
        self.poly_b = 0.0
        scale0 = max(abs(P).max(), 1.0)
        if q == 0.0 and abs(P[0]) <= 1e-14 * scale0:
            P = P[1:]  # psi(0) = 0 puts an exact root at the origin
            if abs(P[0]) <= 1e-12 * scale0:
                # oscillating case (psi'(0+) = 0): double root, W gains a + b x
                B = P[1:]
                b0 = npoly.polyval(0.0, B)
                b1 = npoly.polyval(0.0, npoly.polyder(B))
                q0 = npoly.polyval(0.0, Q)
                q1 = npoly.polyval(0.0, npoly.polyder(Q))
                self.poly_b = q0 / b0
                self.poly_a = (q1 * b0 - q0 * b1) / (b0 * b0)
                P = B
            else:
                # simple origin root (drifting model): keep it as an r = 0 term
                P = npoly.polymul(np.array([0.0, 1.0]), P)
        roots = np.roots(P[::-1]).astype(complex)
        # Newton-polish the roots on the exact polynomial
        dP = npoly.polyder(P)
        for _ in range(2):
            roots = roots - npoly.polyval(roots, P) / npoly.polyval(roots, dP)
        if roots.size:
            gaps = np.abs(roots[:, None] - roots[None, :]) + np.eye(roots.size)
            if gaps.min() < 1e-7 * (1.0 + np.abs(roots).max()):
                raise NumericError(
                    "repeated root in psi - q; closed-form backend needs simple roots",
                    q=q,
                    roots=roots.tolist(),
                )
        coeffs = npoly.polyval(roots, Q.astype(complex)) / npoly.polyval(roots, dP)
        self.roots = roots
        self.coeffs = coeffs.astype(complex)
        # pin the leading (rightmost) root to the root-finder value of Phi(q)
        if self.roots.size:
            lead = int(np.argmax(self.roots.real))
            if abs(self.roots[lead] - phi_q) <= 1e-6 * (1.0 + phi_q) and abs(self.roots[lead].imag) < 1e-8:
                self.lead_index: Optional[int] = lead
                self.roots[lead] = phi_q
                self.coeffs[lead] = 1.0 / model.psi_deriv(phi_q)
            else:
                self.lead_index = None
        else:
            self.lead_index = None

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.poly_a + self.poly_b * x
        if self.roots.size:
            out = out + (np.exp(np.outer(x, self.roots)) @ self.coeffs).real
        return np.where(x < 0, 0.0, out)

    def integral_exp(self, beta: float, x: float) -> float:
        if x <= 0:
            return 0.0
        out = 0.0 + 0.0j
        if self.poly_a or self.poly_b:
            out += self.poly_a * _int_exp(-beta, x) + self.poly_b * _int_y_exp(-beta, x)
        for r, c in zip(self.roots, self.coeffs):
            out += c * _int_exp(r - beta, x)
        return float(out.real)

    def resolvent_tail(self, beta: float, phi_prime: float, x: float) -> float:
        """int_max(x,0)^inf e^{-beta z} [phi'(q) e^{Phi z} - W(z)] dz, z >= 0 part."""
        if self.lead_index is None:
            raise DomainError("resolvent tail needs q > 0 (distinct leading root)")
        x0 = max(x, 0.0)
        out = 0.0 + 0.0j
        for i, (r, c) in enumerate(zip(self.roots, self.coeffs)):
            if i == self.lead_index:
                continue  # cancels against phi'(q) e^{Phi z} exactly
            denom = beta - r
            if denom.real <= 0:
                raise DomainError(f"tail integral diverges: beta={beta} <= Re root {r.real}")
            out -= c * np.exp((r - beta) * x0) / denom
        return float(out.real)


# ---------------------------------------------------------------------------
# deterministic-jump backend: exact finite series
# ---------------------------------------------------------------------------


class _DeterministicCPBackend:
    """Drift d minus fixed-size jumps: W^(q) has an exact finite expansion.

    Expanding 1/(d b - (lam+q) + lam e^{-c b}) in powers of lam e^{-c b} and
    inverting term by term gives, for x >= 0,

        W^(q)(x) = sum_{k=0}^{floor(x/c)} (-lam)^k (x-kc)^k
                   e^{((lam+q)/d)(x-kc)} / (d^{k+1} k!).

    Piecewise analytic with kinks at multiples of the jump size; the
    exp-weighted integral is integrated panel-by-panel between kinks.
    """

    def __init__(self, model: LevyModel, q: float):
        j = model.jumps
        self.lam = j.rate
        self.c = j.law.size
        self.d = model.drift_d
        self.growth = (self.lam + q) / self.d

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        alive = x >= 0
        log_lam, log_d = math.log(self.lam), math.log(self.d)
        k = 0
        while True:
            s = x - k * self.c
            mask = alive & (s >= 0)
            if not mask.any():
                break
            sk = s[mask]
            if k == 0:
                out[mask] += np.exp(self.growth * sk) / self.d
            else:
                # log-space magnitude keeps large k and large x finite
                with np.errstate(divide="ignore"):
                    logmag = (
                        k * log_lam
                        + k * np.log(sk)
                        - (k + 1) * log_d
                        - math.lgamma(k + 1)
                        + self.growth * sk
                    )
                out[mask] += (-1.0) ** k * np.exp(logmag)
            k += 1
        return np.where(alive, out, 0.0)

    def integral_exp(self, beta: float, x: float) -> float:
        if x <= 0:
            return 0.0
        nodes, weights = np.polynomial.legendre.leggauss(24)
        total = 0.0
        lo = 0.0
        while lo < x:
            hi = min(lo + self.c, x)
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            ys = mid + half * nodes
            total += half * float(np.sum(weights * np.exp(-beta * ys) * self.value(ys)))
            lo = hi
        return total

    def poles(self, q: float, count: int) -> np.ndarray:
        """Roots of psi(b) = q through Lambert-W branches, principal first.

        Writing b = (lam+q)/d + w/c turns psi(b) = q into w e^w = z0 with
        z0 = -(lam c / d) e^{-c (lam+q)/d}; every branch of W gives a root.
        """
        from scipy.special import lambertw

        a = (self.lam + q) / self.d
        z0 = -(self.lam * self.c / self.d) * math.exp(-self.c * a)
        ks = [0, -1]
        for k in range(1, count):
            ks.extend([k, -k - 1])
        return np.array([a + lambertw(z0, k=k, tol=1e-14) / self.c for k in ks])

    def resolvent_tail(self, beta: float, phi_prime: float, x: float) -> float:
        """Pole expansion of the tail integral; needs q of the evaluator."""
        q = self.growth * self.d - self.lam
        x0 = max(x, 0.0)
        poles = self.poles(q, count=200)
        # psi'(r) in closed form using the root equation for e^{-c r}
        psi_p = self.d + self.c * (self.d * poles - (self.lam + q))
        out = 0.0
        acc_small = 0
        for i in range(1, len(poles)):  # skip the principal root Phi(q)
            r = poles[i]
            if beta <= r.real:
                raise DomainError(f"tail integral diverges: beta={beta} <= Re pole {r.real}")
            term = -(np.exp((r - beta) * x0) / ((beta - r) * psi_p[i])).real
            out += term
            if abs(term) < 1e-16 * max(abs(out), 1e-12):
                acc_small += 1
                if acc_small >= 4:
                    return out
            else:
                acc_small = 0
        return out


# ---------------------------------------------------------------------------
# inversion backend: fixed Talbot in arbitrary precision on the tilted transform
# ---------------------------------------------------------------------------


def _talbot(transform, x: float, nodes: int) -> float:
    """Abate--Valko fixed-Talbot inversion at x > 0 with M = nodes terms."""
    import mpmath as mp

    with mp.workdps(max(15, nodes)):
        M = nodes
        t = mp.mpf(x)
        r = mp.mpf(2 * M) / 5
        acc = mp.exp(r) * transform(r / t) / 2
        for k in range(1, M):
            theta = mp.pi * k / M
            cot = mp.cot(theta)
            p = r / t * theta * (cot + 1j)
            gamma = 1 + 1j * theta * (1 + cot**2) - 1j * cot
            acc += mp.exp(t * p) * transform(p) * gamma
        return float((mp.mpf(2) / (5 * t) * acc).real)


class _TalbotBackend:
    """Inverts the tilted transform s -> 1/(psi(s + Phi(q)) - q)."""

    def __init__(self, model: LevyModel, q: float, phi_q: float, nodes: int):
        self.model = model
        self.q = q
        self.phi_q = phi_q
        self.base_nodes = nodes
        self._cache: dict = {}

    def _transform(self, s):
        return 1.0 / (self.model.psi(s + self.phi_q) - self.q)

    def _bounded_value(self, x: float) -> float:
        hit = self._cache.get(x)
        if hit is not None:
            return hit
        nodes = self.base_nodes
        prev = _talbot(self._transform, x, nodes)
        for _ in range(_MAX_NODE_DOUBLINGS):
            cur = _talbot(self._transform, x, 2 * nodes)
            if abs(cur - prev) <= _AGREE_RTOL * max(abs(cur), 1e-30):
                self._cache[x] = cur
                return cur
            prev, nodes = cur, 2 * nodes
        raise NumericError(
            "Talbot inversion did not self-stabilise",
            x=x,
            q=self.q,
            nodes=nodes,
            last_delta=abs(cur - prev),
        )

    def value_positive(self, x: float) -> float:
        return math.exp(self.phi_q * x) * self._bounded_value(x)


# ---------------------------------------------------------------------------
# public evaluator
# ---------------------------------------------------------------------------


class ScaleEvaluator:
    """Prepared evaluator for W^(q) of a fixed model at fixed q >= 0.

    Parameters
    ----------
    model : LevyModel
    q : float
        Killing rate, >= 0.
    method : {"auto", "closed", "talbot"}
        Backend selection; "auto" takes the closed form whenever the
        exponent is rational.
    nodes : int
        Base node count for the inversion backend.
    """

    def __init__(self, model: LevyModel, q: float, method: str = "auto", nodes: int = 48):
        if q < 0:
            raise DomainError(f"scale functions need q >= 0, got {q}")
        self.model = model
        self.q = q
        self.phi_q = model.phi(q)
        self.psi_prime_phi = model.psi_deriv(self.phi_q)
        self.w_zero = 1.0 / model.drift_d if model.is_finite_variation else 0.0
        self._tilted_zero_scale: Optional["ScaleEvaluator"] = None
        if method not in ("auto", "closed", "talbot"):
            raise DomainError(f"unknown scale backend {method!r}")
        rational = model.rational_parts() is not None
        from .models import CompoundPoisson, DeterministicLaw

        pure_det = (
            model.sigma == 0.0
            and isinstance(model.jumps, CompoundPoisson)
            and isinstance(model.jumps.law, DeterministicLaw)
        )
        self._closed = self._det = self._talbot = None
        if method != "talbot" and rational:
            self.method = "closed"
            self._closed = _ExpMixtureBackend(model, q, self.phi_q)
        elif method != "talbot" and pure_det:
            self.method = "closed"
            self._det = _DeterministicCPBackend(model, q)
        elif method == "closed":
            raise DomainError("no closed form for this model; use the inversion backend")
        else:
            self.method = "talbot"
            self._talbot = _TalbotBackend(model, q, self.phi_q, nodes)

    @property
    def phi_prime(self) -> float:
        if self.psi_prime_phi <= 0:
            raise DomainError("Phi'(q) undefined: psi'(Phi(q)+) <= 0 (oscillating or sinking at q = 0)")
        return 1.0 / self.psi_prime_phi

    # -- point evaluation ----------------------------------------------------

    def value(self, x: float) -> float:
        """W^(q)(x); zero on x < 0, the exact constant at x = 0."""
        if x < 0.0:
            return 0.0
        if x == 0.0:
            return self.w_zero
        if self._talbot is not None:
            return self._talbot.value_positive(float(x))
        backend = self._closed if self._closed is not None else self._det
        return float(backend.value(np.array([float(x)]))[0])

    __call__ = value

    def values(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        flat = np.atleast_1d(xs).ravel()
        if self._talbot is not None:
            out = np.array([self.value(float(x)) for x in flat])
        else:
            backend = self._closed if self._closed is not None else self._det
            out = backend.value(flat)
        return out.reshape(xs.shape) if xs.ndim else float(out[0])

    # -- integrals -----------------------------------------------------------

    def integral_exp(self, beta: float, x: float) -> float:
        """int_0^x e^{-beta y} W^(q)(y) dy  (0 whenever x <= 0)."""
        if x <= 0.0:
            return 0.0
        if self._closed is not None:
            return self._closed.integral_exp(beta, x)
        if self._det is not None:
            return self._det.integral_exp(beta, x)
        return self._gauss_legendre_integral(beta, x)

    def _gauss_legendre_integral(self, beta: float, x: float, panel: float = 0.5, order: int = 32) -> float:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        total = 0.0
        lo = 0.0
        while lo < x:
            hi = min(lo + panel, x)
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            ys = mid + half * nodes
            total += half * sum(w * math.exp(-beta * y) * self.value(y) for y, w in zip(ys, weights))
            lo = hi
        return total

    def resolvent_tail(self, beta: float, x: float) -> float:
        """int_x^inf e^{-beta z} [Phi'(q) e^{Phi(q) z} - W^(q)(z)] dz.

        The bracket is the killing-free resolvent density at lag z; it decays
        exponentially even though both pieces grow.  Needs q > 0 and
        beta < decay bound handled by the backend.
        """
        pp = self.phi_prime
        out = 0.0
        if x < 0.0:
            # int_x^0 e^{(Phi - beta) z} dz, finite for any sign of the gap
            gap = self.phi_q - beta
            if abs(gap * x) < 1e-10:
                out += pp * (-x) * (1.0 + gap * x / 2.0)
            else:
                out += pp * (1.0 - math.exp(gap * x)) / gap
        if self._closed is not None:
            return out + self._closed.resolvent_tail(beta, pp, x)
        if self._det is not None:
            return out + self._det.resolvent_tail(beta, pp, x)
        return out + self._numeric_resolvent_tail(beta, max(x, 0.0))

    def _numeric_resolvent_tail(self, beta: float, x0: float, order: int = 24) -> float:
        # integrate e^{(Phi-beta) z} (Phi' - bounded tilted value), which keeps the
        # cancellation at absolute (not relative) precision
        nodes, weights = np.polynomial.legendre.leggauss(order)
        pp = self.phi_prime
        total = 0.0
        lo = x0
        for _ in range(400):
            hi = lo + 1.0
            mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
            panel = half * sum(
                w * math.exp((self.phi_q - beta) * z) * (pp - self._talbot._bounded_value(z))
                for z, w in zip(mid + half * nodes, weights)
            )
            if not math.isfinite(panel):
                raise NumericError("resolvent tail integrand overflowed", beta=beta, panel_start=lo)
            total += panel
            if abs(panel) < 1e-12 * max(abs(total), 1e-12):
                return total
            lo = hi
        raise NumericError("resolvent tail did not converge", beta=beta, x=x0)

    # -- consistency probes ----------------------------------------------------

    def tilted_residual(self, x: float) -> float:
        """W^(q)(x) - e^{Phi(q) x} W_tilt(x) with W_tilt the 0-scale function under tilting."""
        if self.q <= 0:
            raise DomainError("tilted identity probe needs q > 0")
        if self._tilted_zero_scale is None:
            method = "talbot" if self.method == "talbot" else "auto"
            self._tilted_zero_scale = ScaleEvaluator(self.model.tilt(self.phi_q), 0.0, method=method)
        return self.value(x) - math.exp(self.phi_q * x) * self._tilted_zero_scale.value(x)
