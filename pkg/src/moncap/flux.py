"""Monotone flux family a(x, xi) with structural-condition checking.

Every flux ships with declared constants (p, c1, c2, b1, b2) such that

    a(x, 0) = 0
    (a(x, xi) - a(x, eta)) . (xi - eta) >= 0
    a(x, xi) . xi >= c1 |xi|^p - b1
    |a(x, xi)|   <= c2 |xi|^(p-1) + b2

hold for all x in the domain square and all xi, eta.  ``check_conditions``
verifies the declarations by randomized sampling.

All evaluation routines are vectorized: ``x`` and ``xi`` may be arrays of
shape (..., 2) and broadcast against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidInput

KINDS = (
    "p_laplacian",
    "weighted_p_laplacian",
    "anisotropic_p",
    "linear_matrix",
    "flat_core_p",
    "s_transformed",
    "weighted_sum",
)


@dataclass(frozen=True)
class Flux:
    """A monotone flux with its declared growth/coercivity constants.

    Immutable; all operations on fluxes are pure functions, safe for
    concurrent use.
    """

    kind: str
    p: float
    params: dict[str, Any] = field(default_factory=dict)
    c1: float = 1.0
    c2: float = 1.0
    b1: float = 0.0
    b2: float = 0.0
    differentiable: bool = True

    @property
    def q(self) -> float:
        """Dual exponent p/(p-1)."""
        return self.p / (self.p - 1.0)

    def describe(self) -> dict:
        """JSON-friendly description (used in configs and reports)."""
        params = {}
        for k, v in self.params.items():
            if isinstance(v, Flux):
                params[k] = v.describe()
            elif isinstance(v, np.ndarray):
                params[k] = v.tolist()
            elif isinstance(v, (list, tuple)):
                params[k] = [
                    w.describe() if isinstance(w, Flux) else w for w in v
                ]
            else:
                params[k] = v
        return {
            "kind": self.kind,
            "p": self.p,
            "params": params,
            "c1": self.c1,
            "c2": self.c2,
            "b1": self.b1,
            "b2": self.b2,
        }


def _check_p(p):
    if not (np.isfinite(p) and p > 1.0):
        raise InvalidInput(f"growth exponent must satisfy p > 1, got {p}")


def p_laplacian(p: float) -> Flux:
    """a(xi) = |xi|^(p-2) xi, with a(0) = 0 for every p > 1."""
    _check_p(p)
    return Flux(kind="p_laplacian", p=float(p), c1=1.0, c2=1.0)


def weighted_p_laplacian(p: float, w_min: float, w_max: float,
                         kx: float = 1.0, ky: float = 1.0) -> Flux:
    """a(x, xi) = w(x) |xi|^(p-2) xi with a smooth weight in [w_min, w_max].

    w(x, y) = w_min + (w_max - w_min) * (1 + sin(2*pi*(kx*x + ky*y))) / 2
    """
    _check_p(p)
    if not (0.0 < w_min <= w_max):
        raise InvalidInput(f"need 0 < w_min <= w_max, got {w_min}, {w_max}")
    return Flux(
        kind="weighted_p_laplacian",
        p=float(p),
        params={"w_min": float(w_min), "w_max": float(w_max),
                "kx": float(kx), "ky": float(ky)},
        c1=float(w_min),
        c2=float(w_max),
    )


def anisotropic_p(p: float, alpha: float, beta: float) -> Flux:
    """Gradient of (alpha xi1^2 + beta xi2^2)^(p/2) / p; axis-weighted flux."""
    _check_p(p)
    if alpha <= 0 or beta <= 0:
        raise InvalidInput("axis weights must be positive")
    lo, hi = min(alpha, beta), max(alpha, beta)
    # a . xi = (xi^T B xi)^(p/2) >= lo^(p/2) |xi|^p
    c1 = lo ** (p / 2.0)
    if p >= 2.0:
        c2 = hi ** (p / 2.0)
    else:
        c2 = hi * lo ** ((p - 2.0) / 2.0)
    return Flux(
        kind="anisotropic_p",
        p=float(p),
        params={"alpha": float(alpha), "beta": float(beta)},
        c1=c1,
        c2=c2,
    )


def linear_matrix(m, validate: bool = True) -> Flux:
    """a(xi) = M xi for a constant 2x2 matrix; p = 2 only.

    The symmetric part of M must be positive definite.  A nonzero skew part
    gives a monotone flux that is not the differential of any energy.  With
    ``validate=False`` the definiteness check is skipped; that path exists
    only to build adversarial test fixtures.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise InvalidInput("linear_matrix needs a finite 2x2 matrix")
    sym = 0.5 * (m + m.T)
    eigs = np.linalg.eigvalsh(sym)
    if validate and eigs[0] <= 0:
        raise InvalidInput("symmetric part of M must be positive definite")
    c1 = float(eigs[0])
    c2 = float(np.linalg.norm(m, 2))
    return Flux(kind="linear_matrix", p=2.0, params={"M": m}, c1=c1, c2=c2)


def _flat_core_b1(p: float, rho0: float, c1: float) -> float:
    """Smallest constant defect making the coercivity bound hold.

    b1 = sup_t [ c1 t^p - (t - rho0)+^(p-1) t ].  For t >= 2 rho0 the
    bracket is <= 0 when c1 <= 2^(1-p), so a bounded scan suffices.
    """
    if rho0 == 0.0:
        return 0.0

    def deficit(t):
        return c1 * t ** p - max(t - rho0, 0.0) ** (p - 1) * t

    ts = np.linspace(0.0, 2.0 * rho0, 4097)
    vals = c1 * ts ** p - np.maximum(ts - rho0, 0.0) ** (p - 1) * ts
    k = int(np.argmax(vals))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, len(ts) - 1)]
    res = minimize_scalar(lambda t: -deficit(t), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-13})
    best = max(float(vals[k]), float(-res.fun))
    return best * (1.0 + 1e-12) + 1e-15


def flat_core_p(p: float, rho0: float) -> Flux:
    """a(xi) = (|xi| - rho0)+^(p-1) xi/|xi|: monotone, vanishes on the core.

    Gradient of the convex energy (|xi| - rho0)+^p / p, hence monotone but
    not strictly monotone; Dirichlet problems for it can have several
    solutions sharing one capacity.
    """
    _check_p(p)
    if rho0 < 0:
        raise InvalidInput("core radius must be nonnegative")
    c1 = 2.0 ** (1.0 - p)
    return Flux(
        kind="flat_core_p",
        p=float(p),
        params={"rho0": float(rho0)},
        c1=c1,
        c2=1.0,
        b1=_flat_core_b1(p, rho0, c1),
    )


def s_transform(flux: Flux, s: float) -> Flux:
    """Wrap the flux as a_s(x, xi) = s a(x, s xi), s != 0.

    Constants rescale to |s|^p c1, |s|^p c2, |s| b2; b1 is unchanged.
    """
    if s == 0.0 or not np.isfinite(s):
        raise InvalidInput("s_transform requires a finite nonzero s")
    sp = abs(s) ** flux.p
    return Flux(
        kind="s_transformed",
        p=flux.p,
        params={"inner": flux, "s": float(s)},
        c1=sp * flux.c1,
        c2=sp * flux.c2,
        b1=flux.b1,
        b2=abs(s) * flux.b2,
        differentiable=flux.differentiable,
    )


def combine(f1: Flux, f2: Flux, w1: float, w2: float) -> Flux:
    """Pointwise w1 a1 + w2 a2 for fluxes sharing the same p.

    The combined c1 uses max(w1 c1_1, w2 c1_2): each term's coercivity
    survives because the other term contributes at least -w b1.  The rule is
    conservative; check_conditions verifies it on every shipped combination.
    """
    if f1.p != f2.p:
        raise InvalidInput(f"cannot combine fluxes with p={f1.p} and p={f2.p}")
    if w1 < 0 or w2 < 0:
        raise InvalidInput("combination weights must be nonnegative")
    c1 = max(w1 * f1.c1, w2 * f2.c1)
    if c1 <= 0:
        raise InvalidInput("at least one weight must be positive")
    return Flux(
        kind="weighted_sum",
        p=f1.p,
        params={"parts": [(float(w1), f1), (float(w2), f2)]},
        c1=c1,
        c2=w1 * f1.c2 + w2 * f2.c2,
        b1=w1 * f1.b1 + w2 * f2.b1,
        b2=w1 * f1.b2 + w2 * f2.b2,
        differentiable=f1.differentiable and f2.differentiable,
    )


def adversarial_fixture() -> Flux:
    """a(xi) = -xi: violates monotonicity.  Test fixture only."""
    return linear_matrix(-np.eye(2), validate=False)


# ---------------------------------------------------------------------------
# evaluation


def _weight(flux: Flux, x):
    prm = flux.params
    phase = np.sin(2.0 * np.pi * (prm["kx"] * x[..., 0] + prm["ky"] * x[..., 1]))
    return prm["w_min"] + (prm["w_max"] - prm["w_min"]) * 0.5 * (1.0 + phase)


def eval_flux(flux: Flux, x, xi) -> np.ndarray:
    """Evaluate a(x, xi).  Shapes (..., 2) broadcast; returns (..., 2)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 2 or x.shape[-1] != 2:
        raise InvalidInput("points and gradients must have trailing dim 2")
    if not np.all(np.isfinite(xi)):
        raise InvalidInput("non-finite gradient components")

    kind = flux.kind
    p = flux.p
    if kind == "p_laplacian":
        r2 = np.sum(xi * xi, axis=-1, keepdims=True)
        safe = np.where(r2 > 0.0, r2, 1.0)
        fac = np.where(r2 > 0.0, safe ** ((p - 2.0) / 2.0), 0.0)
        return fac * xi
    if kind == "weighted_p_laplacian":
        w = _weight(flux, x)[..., None]
        r2 = np.sum(xi * xi, axis=-1, keepdims=True)
        safe = np.where(r2 > 0.0, r2, 1.0)
        fac = np.where(r2 > 0.0, safe ** ((p - 2.0) / 2.0), 0.0)
        return w * fac * xi
    if kind == "anisotropic_p":
        al, be = flux.params["alpha"], flux.params["beta"]
        bxi = np.stack([al * xi[..., 0], be * xi[..., 1]], axis=-1)
        q = np.sum(bxi * xi, axis=-1, keepdims=True)
        safe = np.where(q > 0.0, q, 1.0)
        fac = np.where(q > 0.0, safe ** ((p - 2.0) / 2.0), 0.0)
        return fac * bxi
    if kind == "linear_matrix":
        m = flux.params["M"]
        return xi @ m.T
    if kind == "flat_core_p":
        rho0 = flux.params["rho0"]
        r = np.sqrt(np.sum(xi * xi, axis=-1, keepdims=True))
        g = np.maximum(r - rho0, 0.0) ** (p - 1.0)
        fac = np.where(r > 0.0, g / np.where(r > 0.0, r, 1.0), 0.0)
        return fac * xi
    if kind == "s_transformed":
        s = flux.params["s"]
        return s * eval_flux(flux.params["inner"], x, s * xi)
    if kind == "weighted_sum":
        out = 0.0
        for w, f in flux.params["parts"]:
            out = out + w * eval_flux(f, x, xi)
        return out
    raise InvalidInput(f"unknown flux kind {kind!r}")


def eval_flux_smoothed(flux: Flux, x, xi, eps: float) -> np.ndarray:
    """Evaluate the eps-smoothed flux: |xi| replaced by sqrt(|xi|^2+eps^2)
    inside the formulas (flat-core positive part smoothed the same way).

    This is the solver's continuation surrogate; flux_jacobian with the same
    eps is its exact derivative.  At eps = 0 it coincides with eval_flux.
    Capacity values always use the true flux.
    """
    if eps == 0.0:
        return eval_flux(flux, x, xi)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    kind = flux.kind
    p = flux.p
    if kind in ("p_laplacian", "weighted_p_laplacian"):
        m2 = np.sum(xi * xi, axis=-1, keepdims=True) + eps * eps
        out = m2 ** ((p - 2.0) / 2.0) * xi
        if kind == "weighted_p_laplacian":
            out = _weight(flux, x)[..., None] * out
        return out
    if kind == "anisotropic_p":
        al, be = flux.params["alpha"], flux.params["beta"]
        bxi = np.stack([al * xi[..., 0], be * xi[..., 1]], axis=-1)
        q = np.sum(bxi * xi, axis=-1, keepdims=True) + eps * eps
        return q ** ((p - 2.0) / 2.0) * bxi
    if kind == "linear_matrix":
        return xi @ flux.params["M"].T
    if kind == "flat_core_p":
        rho0 = flux.params["rho0"]
        m = np.sqrt(np.sum(xi * xi, axis=-1, keepdims=True) + eps * eps)
        t = m - rho0
        pos = 0.5 * (t + np.sqrt(t * t + eps * eps))
        return pos ** (p - 1.0) / m * xi
    if kind == "s_transformed":
        s = flux.params["s"]
        return s * eval_flux_smoothed(flux.params["inner"], x, s * xi,
                                      abs(s) * eps)
    if kind == "weighted_sum":
        out = 0.0
        for w, f in flux.params["parts"]:
            out = out + w * eval_flux_smoothed(f, x, xi, eps)
        return out
    raise InvalidInput(f"unknown flux kind {kind!r}")


def flux_jacobian(flux: Flux, x, xi, eps: float = 0.0) -> np.ndarray:
    """d a / d xi at (x, xi), shape (..., 2, 2).

    With eps > 0, |xi| is replaced by sqrt(|xi|^2 + eps^2) inside the
    derivative formulas (and the flat-core positive part is smoothed the
    same way), so the result stays bounded at the singular sets.  eval_flux
    itself is never regularized.
    """
    if not flux.differentiable:
        raise InvalidInput(f"flux kind {flux.kind!r} has no Jacobian")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    kind = flux.kind
    p = flux.p
    eye = np.eye(2)

    if kind in ("p_laplacian", "weighted_p_laplacian"):
        r2 = np.sum(xi * xi, axis=-1)
        m2 = r2 + eps * eps
        outer = xi[..., :, None] * xi[..., None, :]
        if p == 2.0:
            jac = np.broadcast_to(eye, outer.shape).copy()
        else:
            safe = np.where(m2 > 0.0, m2, 1e-300)
            fac2 = np.where(r2 > 0.0, (p - 2.0) * safe ** ((p - 4.0) / 2.0), 0.0)
            jac = (safe ** ((p - 2.0) / 2.0))[..., None, None] * eye \
                + fac2[..., None, None] * outer
        if kind == "weighted_p_laplacian":
            jac = _weight(flux, x)[..., None, None] * jac
        return jac
    if kind == "anisotropic_p":
        al, be = flux.params["alpha"], flux.params["beta"]
        b = np.diag([al, be])
        bxi = np.stack([al * xi[..., 0], be * xi[..., 1]], axis=-1)
        q0 = np.sum(bxi * xi, axis=-1)
        q = q0 + eps * eps
        if p == 2.0:
            return np.broadcast_to(b, xi.shape + (2,)).copy()
        safe = np.where(q > 0.0, q, 1e-300)
        fac2 = np.where(q0 > 0.0, (p - 2.0) * safe ** ((p - 4.0) / 2.0), 0.0)
        outer = bxi[..., :, None] * bxi[..., None, :]
        return (safe ** ((p - 2.0) / 2.0))[..., None, None] * b \
            + fac2[..., None, None] * outer
    if kind == "linear_matrix":
        m = flux.params["M"]
        return np.broadcast_to(m, xi.shape + (2,)).copy()
    if kind == "flat_core_p":
        rho0 = flux.params["rho0"]
        r = np.sqrt(np.sum(xi * xi, axis=-1) + eps * eps)
        r = np.where(r > 0.0, r, 1e-300)
        t = r - rho0
        if eps > 0.0:
            pos = 0.5 * (t + np.sqrt(t * t + eps * eps))
            dpos = 0.5 * (1.0 + t / np.sqrt(t * t + eps * eps))
        else:
            pos = np.maximum(t, 0.0)
            dpos = (t > 0.0).astype(float)
        g = pos ** (p - 1.0)
        dg = np.where(
            pos > 0.0,
            (p - 1.0) * np.where(pos > 0.0, pos, 1.0) ** (p - 2.0) * dpos,
            0.0)
        hat = xi / r[..., None]
        outer = hat[..., :, None] * hat[..., None, :]
        return (g / r)[..., None, None] * (eye - outer) \
            + dg[..., None, None] * outer
    if kind == "s_transformed":
        s = flux.params["s"]
        return s * s * flux_jacobian(flux.params["inner"], x, s * xi, eps=abs(s) * eps)
    if kind == "weighted_sum":
        out = 0.0
        for w, f in flux.params["parts"]:
            out = out + w * flux_jacobian(f, x, xi, eps=eps)
        return out
    raise InvalidInput(f"unknown flux kind {kind!r}")


# ---------------------------------------------------------------------------
# randomized structural checks


_CONDITION_NAMES = ("zero", "monotone", "coercive", "growth")


@dataclass
class ConditionReport:
    """Outcome of the randomized structural check, one entry per condition.

    ``margins`` are worst signed values normalized by the per-sample scale
    1 + |xi|^p + |eta|^p; a condition passes iff its margin >= -1e-12.
    """

    flux: dict
    n_samples: int
    seed: int
    xi_radius: float
    margins: dict[str, float]
    witnesses: dict[str, dict]
    passed: dict[str, bool]

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "flux": self.flux,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "xi_radius": self.xi_radius,
            "conditions": {
                name: {
                    "passed": self.passed[name],
                    "margin": self.margins[name],
                    "witness": self.witnesses[name],
                }
                for name in _CONDITION_NAMES
            },
            "all_passed": self.all_passed,
        }


MARGIN_TOL = 1e-12


def check_conditions(flux: Flux, n_samples: int, xi_radius: float = 10.0,
                     seed: int = 0, domain_l: float = 1.0) -> ConditionReport:
    """Sample the four structural conditions and report worst margins.

    x is uniform in the domain square, xi and eta uniform in the ball of
    radius xi_radius.
    """
    if n_samples < 1:
        raise InvalidInput("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = int(n_samples)
    x = rng.uniform(0.0, domain_l, size=(n, 2))

    def ball(k):
        ang = rng.uniform(0.0, 2.0 * np.pi, size=k)
        rad = xi_radius * np.sqrt(rng.uniform(0.0, 1.0, size=k))
        return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)

    xi = ball(n)
    eta = ball(n)
    p = flux.p

    a_zero = eval_flux(flux, x, np.zeros_like(xi))
    a_xi = eval_flux(flux, x, xi)
    a_eta = eval_flux(flux, x, eta)

    nxi = np.linalg.norm(xi, axis=-1)
    neta = np.linalg.norm(eta, axis=-1)
    scale = 1.0 + nxi ** p + neta ** p

    vals = {
        "zero": -np.linalg.norm(a_zero, axis=-1) / scale,
        "monotone": np.sum((a_xi - a_eta) * (xi - eta), axis=-1) / scale,
        "coercive": (np.sum(a_xi * xi, axis=-1)
                     - flux.c1 * nxi ** p + flux.b1) / scale,
        "growth": (flux.c2 * nxi ** (p - 1.0) + flux.b2
                   - np.linalg.norm(a_xi, axis=-1)) / scale,
    }

    margins, witnesses, passed = {}, {}, {}
    for name in _CONDITION_NAMES:
        k = int(np.argmin(vals[name]))
        margins[name] = float(vals[name][k])
        witnesses[name] = {
            "x": x[k].tolist(),
            "xi": xi[k].tolist(),
            "eta": eta[k].tolist(),
        }
        passed[name] = bool(margins[name] >= -MARGIN_TOL)

    return ConditionReport(
        flux=flux.describe(),
        n_samples=n,
        seed=int(seed),
        xi_radius=float(xi_radius),
        margins=margins,
        witnesses=witnesses,
        passed=passed,
    )
