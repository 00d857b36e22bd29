"""Discrete monotone operator on the P1 space.

The operator pairing is <A u, v> = sum_T |T| a(x_T, grad u|_T) . grad v|_T
with the flux evaluated at triangle barycenters (one-point quadrature,
exact for P1 fields when the flux has no x-dependence).  The residual
vector r_i = <A u, phi_i> is assembled by a fixed-order scatter, so
identical inputs give bitwise identical outputs.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInput
from .flux import Flux, eval_flux, eval_flux_smoothed, flux_jacobian
from .mesh import Mesh


def _gradient_coefficients(mesh: Mesh) -> np.ndarray:
    """Per-triangle 2x3 matrices G with grad u|_T = G @ u[tri]."""
    key = "grad_coeff"
    if key not in mesh._cache:
        pts = mesh.nodes[mesh.triangles]  # (ntri, 3, 2)
        x = pts[:, :, 0]
        y = pts[:, :, 1]
        det = ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
               - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]],
                      axis=1) / det[:, None]
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]],
                      axis=1) / det[:, None]
        mesh._cache[key] = np.stack([gx, gy], axis=1)  # (ntri, 2, 3)
    return mesh._cache[key]


def gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Constant P1 gradient per triangle, shape (ntri, 2)."""
    g = _gradient_coefficients(mesh)
    vals = u[mesh.triangles]  # (ntri, 3)
    return np.einsum("tck,tk->tc", g, vals)


def _check_field(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise InvalidInput(
            f"field has {u.shape} values, mesh has {mesh.n_nodes} nodes")
    return u


def residual(mesh: Mesh, flux: Flux, u: np.ndarray,
             eps: float = 0.0) -> np.ndarray:
    """r_i = sum_T |T| a(x_T, grad u|_T) . grad phi_i|_T.

    eps > 0 evaluates the smoothed flux instead (solver continuation only;
    reported capacities always use eps = 0).
    """
    u = _check_field(mesh, u)
    g = _gradient_coefficients(mesh)
    grads = gradients(mesh, u)
    if eps == 0.0:
        a = eval_flux(flux, mesh.barycenters, grads)  # (ntri, 2)
    else:
        a = eval_flux_smoothed(flux, mesh.barycenters, grads, eps)
    contrib = mesh.tri_area * np.einsum("tc,tck->tk", a, g)  # (ntri, 3)
    r = np.zeros(mesh.n_nodes)
    for k in range(3):
        np.add.at(r, mesh.triangles[:, k], contrib[:, k])
    return r


def pairing(mesh: Mesh, flux: Flux, u: np.ndarray, v: np.ndarray) -> float:
    """<A u, v>; equals dot(residual(u), v) to round-off."""
    u = _check_field(mesh, u)
    v = _check_field(mesh, v)
    grads_u = gradients(mesh, u)
    grads_v = gradients(mesh, v)
    a = eval_flux(flux, mesh.barycenters, grads_u)
    return float(mesh.tri_area * np.sum(a * grads_v))


def jacobian_apply(mesh: Mesh, flux: Flux, u: np.ndarray, w: np.ndarray,
                   eps: float) -> np.ndarray:
    """Directional derivative of residual at u in direction w; linear in w."""
    u = _check_field(mesh, u)
    w = _check_field(mesh, w)
    g = _gradient_coefficients(mesh)
    grads_u = gradients(mesh, u)
    grads_w = gradients(mesh, w)
    jac = flux_jacobian(flux, mesh.barycenters, grads_u, eps=eps)  # (ntri,2,2)
    dg = np.einsum("tcd,td->tc", jac, grads_w)
    contrib = mesh.tri_area * np.einsum("tc,tck->tk", dg, g)
    out = np.zeros(mesh.n_nodes)
    for k in range(3):
        np.add.at(out, mesh.triangles[:, k], contrib[:, k])
    return out


def jacobian_matrix(mesh: Mesh, flux: Flux, u: np.ndarray, eps: float,
                    shift: float = 0.0) -> sp.csr_matrix:
    """Assembled sparse Jacobian of the residual at u.

    ``shift`` adds shift*I to the per-triangle 2x2 flux Jacobian (a
    Levenberg-style conditioning floor for degenerate fluxes; the residual
    itself is never shifted, so the converged solution is unaffected).
    """
    u = _check_field(mesh, u)
    g = _gradient_coefficients(mesh)
    grads_u = gradients(mesh, u)
    jac = flux_jacobian(flux, mesh.barycenters, grads_u, eps=eps)
    if shift != 0.0:
        jac = jac + shift * np.eye(2)
    # block_kl = |T| * g_k^T . jac . g_l
    blocks = mesh.tri_area * np.einsum("tck,tcd,tdl->tkl", g, jac, g)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                        shape=(mesh.n_nodes, mesh.n_nodes))
    return mat.tocsr()


def p2_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix of the Laplacian, cached on the mesh."""
    key = "p2_stiffness"
    if key not in mesh._cache:
        from .flux import p_laplacian
        zero = np.zeros(mesh.n_nodes)
        mesh._cache[key] = jacobian_matrix(mesh, p_laplacian(2.0), zero, 0.0)
    return mesh._cache[key]
