"""Dirichlet solver: find u with u = s on E, u = 0 outside F, and zero
residual at the free nodes of F \\ E.

The path: a short damped-Newton pass on the true flux (cheap when the
problem is smooth, and it preserves initialization-dependent solutions for
merely monotone fluxes), then continuation that fully solves the
eps-smoothed problem at each eps of the schedule, then a true-flux polish.
Inner linear solves use preconditioned GMRES; step lengths backtrack on the
free-node residual max-norm; a Picard fallback preconditioned by the p=2
stiffness matrix runs before declaring divergence.  Convergence is always
declared on the TRUE flux residual, so reported capacities belong to the
problem actually posed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import jacobian_matrix, p2_stiffness, residual
from .errors import InvalidInput, SolverDiverged
from .flux import Flux
from .mesh import Mesh, NodeSet, validate_pair

DEFAULT_EPS_SCHEDULE = tuple(10.0 ** (-k) for k in range(2, 11))


@dataclass
class SolverOptions:
    tol_res: Optional[float] = None      # default 1e-10 * max(1, |s|^(p-1))
    max_newton: int = 200
    eps_schedule: tuple = DEFAULT_EPS_SCHEDULE
    ls_backtrack: float = 0.5
    ls_decrease: float = 1e-4
    ls_min_step: float = 1e-8
    inner_tol: float = 1e-10
    init: str = "linear_blend"           # zero | linear_blend | given | random
    init_field: Optional[np.ndarray] = None
    init_seed: int = 0
    picard_fallback: bool = True
    stage_max_iter: int = 8              # stages track the path; the polish
                                         # ladder owns the endgame
    jacobian_floor: float = 1e-9         # conditioning shift, see ledger

    def __post_init__(self):
        if self.tol_res is not None and not self.tol_res > 0:
            raise InvalidInput("tol_res must be positive")
        eps = tuple(self.eps_schedule)
        if any(e <= 0 for e in eps) or any(
                eps[i + 1] >= eps[i] for i in range(len(eps) - 1)):
            raise InvalidInput("eps_schedule must be positive and strictly decreasing")
        self.eps_schedule = eps

    def resolve_tol(self, flux: Flux, s: float) -> float:
        if self.tol_res is not None:
            return self.tol_res
        return 1e-10 * max(1.0, abs(s) ** (flux.p - 1.0))


@dataclass
class PotentialField:
    """A solved (or best-effort) capacitary potential with diagnostics."""

    u: np.ndarray
    s: float
    e_name: str
    f_name: str
    mesh_id: str
    residual_max: float
    iterations: int
    converged: bool
    tol_res: float
    residual_history: list = dc_field(default_factory=list)
    touches_outer_boundary: bool = False


def _linear_blend_init(mesh: Mesh, free: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Solve the p=2 problem with the same boundary data; cheap and inside
    the comparison cone."""
    k = p2_stiffness(mesh)
    kff = k[free][:, free].tocsc()
    rhs = -k[free][:, ~free] @ u[~free]
    out = u.copy()
    out[free] = spla.splu(kff).solve(rhs)
    return out


def _free_residual_max(r: np.ndarray, free: np.ndarray) -> float:
    if not free.any():
        return 0.0
    return float(np.max(np.abs(r[free])))


def _gmres(op, rhs, precond, rtol, maxiter=200):
    x, info = spla.gmres(op, rhs, M=precond, rtol=rtol, atol=0.0,
                         maxiter=maxiter)
    return x, info


def solve_dirichlet(mesh: Mesh, flux: Flux, e: NodeSet, f: NodeSet, s: float,
                    opts: Optional[SolverOptions] = None) -> PotentialField:
    """Solve for the capacitary potential of e in f at boundary level s.

    Raises IncompatiblePair when e is not inside f, SolverDiverged (carrying
    the best iterate and residual history) on non-convergence.
    """
    opts = opts or SolverOptions()
    try:
        return _solve(mesh, flux, e, f, s, opts)
    except SolverDiverged:
        if opts.init == "linear_blend":
            raise
        # the initialization is a hint, not a semantic: when a warm start,
        # zero, or random basin start fails, retry once from the default
        # blend (for merely monotone fluxes any converged solution carries
        # the same capacity)
        retry = SolverOptions(
            tol_res=opts.tol_res, max_newton=opts.max_newton,
            eps_schedule=opts.eps_schedule, inner_tol=opts.inner_tol,
            picard_fallback=opts.picard_fallback,
            jacobian_floor=opts.jacobian_floor)
        return _solve(mesh, flux, e, f, s, retry)


def _solve(mesh: Mesh, flux: Flux, e: NodeSet, f: NodeSet, s: float,
           opts: SolverOptions) -> PotentialField:
    vp = validate_pair(e, f, mesh)
    free = vp.free_mask
    tol = opts.resolve_tol(flux, s)

    u = np.zeros(mesh.n_nodes)
    u[e.mask] = s

    def make_field(uu, rmax, iters, converged, history):
        return PotentialField(
            u=uu, s=float(s), e_name=e.name, f_name=f.name,
            mesh_id=mesh.mesh_id, residual_max=rmax, iterations=iters,
            converged=converged, tol_res=tol, residual_history=history,
            touches_outer_boundary=vp.touches_outer_boundary)

    # s = 0: the zero field is a potential (flux vanishes at zero gradient)
    if s == 0.0 or e.count == 0:
        u[:] = 0.0
        return make_field(u, 0.0, 0, True, [0.0])

    if not free.any():
        return make_field(u, 0.0, 0, True, [0.0])

    if opts.init == "zero":
        pass
    elif opts.init == "linear_blend":
        u = _linear_blend_init(mesh, free, u)
    elif opts.init == "given":
        if opts.init_field is None:
            raise InvalidInput("init='given' requires init_field")
        u = np.asarray(opts.init_field, dtype=float).copy()
        u[e.mask] = s
        u[~f.mask] = 0.0
    elif opts.init == "random":
        rng = np.random.default_rng(opts.init_seed)
        lo, hi = min(0.0, s), max(0.0, s)
        u[free] = rng.uniform(lo, hi, size=int(free.sum()))
    else:
        raise InvalidInput(f"unknown init {opts.init!r}")

    history: list[float] = []
    state = _NewtonState(mesh, flux, free, opts, history)

    rmax = state.true_rmax(u)
    if rmax <= tol:
        return make_field(u, rmax, 0, True, history)

    eps_last = opts.eps_schedule[-1]

    # fast path: damped Newton on the true flux from the given init, with a
    # small budget; this preserves initialization-dependent solutions for
    # merely monotone fluxes and costs nothing when the problem is smooth
    u, rmax = state.newton(u, residual_eps=0.0, jac_eps=eps_last,
                           target=tol, max_iter=min(8, opts.max_newton))
    if rmax <= tol:
        return make_field(u, rmax, state.iterations, True, history)

    # continuation: solve the eps-smoothed problem at each stage (the
    # regularized Jacobian is its exact derivative), warm-starting downwards.
    # Once a stage at or below the tail anchor misses its target, stop:
    # descending further with the coarse factor-10 schedule only burns
    # budget that the adaptive tail spends better.
    tail_anchor = 1e-4
    for eps in opts.eps_schedule:
        stage_target = max(tol, eps * eps)
        u, smax = state.newton(u, residual_eps=eps, jac_eps=eps,
                               target=stage_target,
                               max_iter=opts.stage_max_iter)
        rmax = state.true_rmax(u)
        if rmax <= tol:
            return make_field(u, rmax, state.iterations, True, history)
        if state.budget() <= 0:
            break
        if eps <= tail_anchor and smax > stage_target * 1.001:
            break

    # adaptive tail: near a flux kink the Newton basin of the smoothed
    # problem shrinks with eps, so a factor-10 schedule can outrun it.
    # Descend with a hop ratio that grows after landed hops and relaxes
    # toward 1 after stalls (partial progress is kept either way); every
    # arrival is checked against the true residual.  The smoothed-vs-true
    # residual gap is O(h * eps^(p-1)), so small tail widths certify true
    # convergence.
    if state.budget() > 0:
        eps = tail_anchor
        u, _ = state.newton(u, residual_eps=eps, jac_eps=eps,
                            target=max(tol / 10.0, eps * eps), max_iter=8)
        ratio = 0.5
        hops = 0
        while state.budget() > 0 and hops < 120:
            hops += 1
            rmax = state.true_rmax(u)
            if rmax <= tol:
                return make_field(u, rmax, state.iterations, True, history)
            if eps <= 1e-13:
                break
            eps_next = ratio * eps
            target_next = max(tol / 10.0, eps_next * eps_next)
            u, smax = state.newton(u, residual_eps=eps_next,
                                   jac_eps=eps_next,
                                   target=target_next, max_iter=8)
            if smax <= target_next * 1.001:
                eps = eps_next
                ratio = max(0.5 * ratio, 0.05)
            else:
                ratio = min(ratio ** 0.5, 0.7)
        rmax = state.true_rmax(u)
        if rmax <= tol:
            return make_field(u, rmax, state.iterations, True, history)

    # polish on the true flux; on a stall, widen the Jacobian smoothing so
    # the local model stays consistent across active-set flips at a kink
    for jac_eps in (eps_last, 1e-6, 1e-5, 1e-4):
        u, rmax = state.newton(u, residual_eps=0.0, jac_eps=jac_eps,
                               target=tol, max_iter=40)
        if rmax <= tol:
            return make_field(u, rmax, state.iterations, True, history)
        if state.budget() <= 0:
            break

    # last resort before failing; sweep count is budgeted separately from
    # the Newton iterations
    if opts.picard_fallback:
        u, rmax = state.picard(u, target=tol, max_sweeps=500)
        if rmax <= tol:
            return make_field(u, rmax, state.iterations, True, history)

    raise SolverDiverged(
        f"residual {state.best_rmax:.3e} above target {tol:.3e} after "
        f"{state.iterations} iterations",
        field=make_field(state.best_u, state.best_rmax, state.iterations,
                         False, history),
        history=history)


class _NewtonState:
    """Shared bookkeeping for the staged Newton solve."""

    def __init__(self, mesh, flux, free, opts, history):
        self.mesh = mesh
        self.flux = flux
        self.free = free
        self.opts = opts
        self.history = history
        self.iterations = 0
        self.best_u = None
        self.best_rmax = np.inf

    def budget(self):
        return self.opts.max_newton - self.iterations

    def true_rmax(self, u):
        r = residual(self.mesh, self.flux, u)
        rmax = _free_residual_max(r, self.free)
        self._track(rmax, u)
        return rmax

    def _track(self, rmax, u):
        if rmax < self.best_rmax:
            self.best_rmax = rmax
            self.best_u = u.copy()

    def newton(self, u, residual_eps, jac_eps, target, max_iter):
        """Damped Newton on the residual at smoothing residual_eps; returns
        (u, last rmax of that residual).  Tracks the best TRUE iterate only
        when iterating the true residual."""
        opts = self.opts
        free = self.free
        true_pass = residual_eps == 0.0
        r = residual(self.mesh, self.flux, u, eps=residual_eps)
        rmax = _free_residual_max(r, free)
        if true_pass:
            self._track(rmax, u)
        it = 0
        while it < max_iter and self.budget() > 0 and rmax > target:
            k = jacobian_matrix(self.mesh, self.flux, u, jac_eps,
                                shift=opts.jacobian_floor)
            kff = k[free][:, free]
            try:
                lu = spla.splu(kff.tocsc())
            except RuntimeError:
                break
            precond = spla.LinearOperator(kff.shape, lu.solve)
            delta, _ = _gmres(kff, -r[free], precond, opts.inner_tol)
            if not np.all(np.isfinite(delta)):
                break
            t = 1.0
            accepted = False
            while t >= opts.ls_min_step:
                u_try = u.copy()
                u_try[free] += t * delta
                r_try = residual(self.mesh, self.flux, u_try,
                                 eps=residual_eps)
                rmax_try = _free_residual_max(r_try, free)
                if rmax_try <= (1.0 - opts.ls_decrease * t) * rmax:
                    accepted = True
                    break
                t *= opts.ls_backtrack
            if not accepted:
                break
            u, r, rmax = u_try, r_try, rmax_try
            self.history.append(rmax)
            if true_pass:
                self._track(rmax, u)
            self.iterations += 1
            it += 1
        return u, rmax

    def picard(self, u, target, max_sweeps):
        """Fixed-point sweeps on the true residual, preconditioned by the
        p=2 stiffness matrix."""
        free = self.free
        k = p2_stiffness(self.mesh)
        lu = spla.splu(k[free][:, free].tocsc())
        r = residual(self.mesh, self.flux, u)
        rmax = _free_residual_max(r, free)
        self._track(rmax, u)
        omega = 1.0
        for _ in range(max_sweeps):
            if rmax <= target:
                break
            step = lu.solve(r[free])
            t = omega
            accepted = False
            while t >= 1e-10:
                u_try = u.copy()
                u_try[free] -= t * step
                r_try = residual(self.mesh, self.flux, u_try)
                rmax_try = _free_residual_max(r_try, free)
                if rmax_try < rmax:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
            omega = min(1.0, t * 2.0)
            u, r, rmax = u_try, r_try, rmax_try
            self.history.append(rmax)
            self._track(rmax, u)
            self.iterations += 1
        return u, rmax


