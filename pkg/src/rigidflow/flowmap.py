"""Volume-preserving flow map of the extension field, with derivatives.

Per reference node y the map X(t, y) solves dX/dt = Lambda(t, X).  The first
and second space derivatives are integrated jointly through the variational
equations

    d(gradX)/dt = gradLambda(X) gradX,
    d(hessX)/dt = hessLambda(X) : gradX gradX + gradLambda(X) hessX,

so Christoffel symbols never require differencing the map itself.  The
inverse map Y is found by damped Newton on the interpolated forward map with
the previous step's inverse as warm start.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import grid as gridmod
from .errors import MapLeftDomain, NewtonDiverged, NonFiniteState, SingularMetric
from .extension import ExtensionField
from .grid import Grid, GridField

_EYE = np.eye(3)


@dataclass
class FlowMapData:
    """Forward map, derivatives, inverse samples and metric data on a grid.

    Index conventions: ``gradX[..., k, i] = dX_k/dy_i``,
    ``hessX[..., l, i, j] = X_{l,ij}``, ``gamma[..., k, i, j] = Gamma^k_ij``.
    ``Y``/``gradY`` sample the inverse map at the cell centers read as
    current-domain points.
    """

    grid: Grid
    t: float
    X: np.ndarray
    gradX: np.ndarray
    dXdt: np.ndarray
    dgradXdt: np.ndarray
    hessX: np.ndarray | None = None
    Y: np.ndarray | None = None
    gradY: np.ndarray | None = None
    g_lo: np.ndarray | None = None
    g_up: np.ndarray | None = None
    gamma: np.ndarray | None = None

    def require_metric(self) -> None:
        if self.g_up is None or self.gamma is None:
            raise ValueError("metric data not computed; call metric_and_christoffel")


def identity_map(grid: Grid, lam: ExtensionField | None = None, t: float = 0.0,
                 compute_hessian: bool = True) -> FlowMapData:
    """Initial map X(0, y) = y with exact derivative data."""
    centers = grid.centers()
    shape = centers.shape[:3]
    grad = np.broadcast_to(_EYE, shape + (3, 3)).copy()
    hess = np.zeros(shape + (3, 3, 3)) if compute_hessian else None
    if lam is not None:
        val, glam = lam(t, centers)
        dxdt = val
        dgrad = np.einsum("...km,...mi->...ki", glam, grad)
    else:
        dxdt = np.zeros(shape + (3,))
        dgrad = np.zeros(shape + (3, 3))
    m = FlowMapData(grid=grid, t=t, X=centers.copy(), gradX=grad, dXdt=dxdt,
                    dgradXdt=dgrad, hessX=hess, Y=centers.copy(),
                    gradY=np.broadcast_to(_EYE, shape + (3, 3)).copy())
    return m


def _rhs(lam: ExtensionField, t: float, x, g, h):
    if h is not None:
        val, glam, hlam = lam.jet(t, x)
        # hlam[l,m,p] g[m,i] g[p,j] + glam[l,m] h[m,i,j], via stacked matmuls
        tmp = hlam @ g[..., None, :, :]                    # (..., l, m, j)
        gt = np.swapaxes(g, -1, -2)[..., None, :, :]       # (..., 1, i, m)
        dh = gt @ tmp                                      # (..., l, i, j)
        shape = h.shape
        dh = dh + (glam @ h.reshape(shape[:-3] + (3, 9))).reshape(shape)
    else:
        val, glam = lam(t, x)
        dh = None
    dg = glam @ g
    return val, dg, dh


def advance_flowmap(fmap: FlowMapData, lam: ExtensionField, dt: float,
                    update_inverse_map: bool = True) -> FlowMapData:
    """One RK4 step of the characteristic and variational equations."""
    t = fmap.t
    x0, g0, h0 = fmap.X, fmap.gradX, fmap.hessX

    k1 = _rhs(lam, t, x0, g0, h0)
    k2 = _rhs(lam, t + 0.5 * dt,
              x0 + 0.5 * dt * k1[0], g0 + 0.5 * dt * k1[1],
              None if h0 is None else h0 + 0.5 * dt * k1[2])
    k3 = _rhs(lam, t + 0.5 * dt,
              x0 + 0.5 * dt * k2[0], g0 + 0.5 * dt * k2[1],
              None if h0 is None else h0 + 0.5 * dt * k2[2])
    k4 = _rhs(lam, t + dt,
              x0 + dt * k3[0], g0 + dt * k3[1],
              None if h0 is None else h0 + dt * k3[2])

    x1 = x0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    g1 = g0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if h0 is not None:
        h1 = h0 + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        # keep X_{l,ij} = X_{l,ji} exact rather than to rounding
        h1 = 0.5 * (h1 + np.swapaxes(h1, -1, -2))
    else:
        h1 = None

    if not np.all(np.isfinite(x1)):
        raise NonFiniteState(f"flow map produced non-finite nodes at t={t + dt:.6g}")
    pad = 1e-9 * fmap.grid.extent
    if np.any(x1 < fmap.grid.lo - pad) or np.any(x1 > fmap.grid.hi + pad):
        raise MapLeftDomain(f"characteristics exited the container at t={t + dt:.6g}")

    val, glam = lam(t + dt, x1)
    out = FlowMapData(
        grid=fmap.grid, t=t + dt, X=x1, gradX=g1, hessX=h1, dXdt=val,
        dgradXdt=np.einsum("...km,...mi->...ki", glam, g1),
    )
    if update_inverse_map:
        update_inverse(out, warm=fmap.Y)
    return out


def integrate_map(grid: Grid, lam: ExtensionField, t1: float, dt: float,
                  t0: float = 0.0, compute_hessian: bool = True,
                  update_inverse_map: bool = True) -> FlowMapData:
    """Integrate the map from the identity at t0 to t1 with uniform steps."""
    m = identity_map(grid, lam, t=t0, compute_hessian=compute_hessian)
    nsteps = max(1, int(round((t1 - t0) / dt)))
    step = (t1 - t0) / nsteps
    for _ in range(nsteps):
        m = advance_flowmap(m, lam, step, update_inverse_map=False)
    if update_inverse_map:
        update_inverse(m)
    return m


def invert_map(fmap: FlowMapData, x: np.ndarray, seed: np.ndarray | None = None,
               max_iter: int = 50) -> np.ndarray:
    """Solve X(y) = x by damped Newton on the interpolated forward map."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, 3)
    y = pts.copy() if seed is None else np.asarray(seed, dtype=float).reshape(-1, 3).copy()

    def interp_x(p):
        return gridmod.sample_with_jacobian(fmap.grid, fmap.X, p)[0]

    tol = 1e-12 * fmap.grid.extent

    res = interp_x(y) - pts
    err = np.linalg.norm(res, axis=-1)

    # relaxed fixed-point sweep brings far seeds into the Newton basin; it is
    # insensitive to the kinks of the piecewise-trilinear interpolant
    coarse = max(tol, 1e-3 * float(np.min(fmap.grid.h)))
    for _ in range(60):
        active = err > coarse
        if not np.any(active):
            break
        y[active] -= 0.8 * res[active]
        res[active] = interp_x(y[active]) - pts[active]
        err[active] = np.linalg.norm(res[active], axis=-1)

    for _ in range(max_iter):
        active = err > tol
        if not np.any(active):
            break
        ya = y[active]
        val, ga = gridmod.sample_with_jacobian(fmap.grid, fmap.X, ya)
        step = np.linalg.solve(ga, (val - pts[active])[..., None])[..., 0]
        # damped update: halve until the residual does not grow, keep the best
        lam_damp = np.ones(len(ya))
        cand = ya - step
        cand_res = interp_x(cand) - pts[active]
        cand_err = np.linalg.norm(cand_res, axis=-1)
        for _ in range(8):
            bad = cand_err > err[active]
            if not np.any(bad):
                break
            lam_damp[bad] *= 0.5
            retry = ya[bad] - lam_damp[bad, None] * step[bad]
            retry_res = interp_x(retry) - pts[active][bad]
            cand[bad] = retry
            cand_res[bad] = retry_res
            cand_err[bad] = np.linalg.norm(retry_res, axis=-1)
        improved = cand_err <= err[active]
        idx = np.flatnonzero(active)[improved]
        y[idx] = cand[improved]
        res[idx] = cand_res[improved]
        err[idx] = cand_err[improved]
    else:
        raise NewtonDiverged(
            f"inverse map: {int(np.sum(err > tol))} points above tol after {max_iter} iterations"
        )
    return y[0] if single else y.reshape(x.shape)


def update_inverse(fmap: FlowMapData, warm: np.ndarray | None = None) -> None:
    """Fill Y and gradY at the cell centers read as current-domain points."""
    centers = fmap.grid.centers()
    y = invert_map(fmap, centers, seed=warm if warm is not None else centers)
    g_at_y = gridmod.sample(fmap.grid, fmap.gradX, y)
    fmap.Y = y
    fmap.gradY = np.linalg.inv(g_at_y)


def metric_and_christoffel(fmap: FlowMapData) -> FlowMapData:
    """Fill g_lo, g_up and the Christoffel symbols from the map derivatives.

    Gamma^k_ij comes from the identity Gamma^k_ij = Y_{k,l} X_{l,ij}; the
    metric-derivative formula is kept as a cross-check in
    :func:`christoffel_from_metric`.
    """
    if fmap.hessX is None:
        raise ValueError("hessX not integrated; rebuild the map with hessians")
    g = fmap.gradX
    g_lo = np.einsum("...ki,...kj->...ij", g, g)
    det = np.linalg.det(g_lo)
    if np.any(np.abs(det) < 1e-8):
        raise SingularMetric(f"min |det g| = {np.abs(det).min():.3e}")
    inv_g = np.linalg.inv(g)
    g_up = np.einsum("...ik,...jk->...ij", inv_g, inv_g)
    gamma = np.einsum("...kl,...lij->...kij", inv_g, fmap.hessX)
    fmap.g_lo, fmap.g_up, fmap.gamma = g_lo, g_up, gamma
    return fmap


def christoffel_from_metric(fmap: FlowMapData) -> np.ndarray:
    """Gamma^k_ij = g^{kl} (g_il,j + g_jl,i - g_ij,l) / 2 with FD metric derivatives."""
    if fmap.g_lo is None or fmap.g_up is None:
        metric_and_christoffel(fmap)
    h = fmap.grid.h
    dg = np.stack(
        [gridmod.deriv(fmap.g_lo, d, h[d]) for d in range(3)], axis=-1
    )  # dg[..., i, l, j] = g_il,j
    term = (
        np.einsum("...ilj->...lij", dg)
        + np.einsum("...jli->...lij", dg)
        - np.einsum("...ijl->...lij", dg)
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", fmap.g_up, term)


def _sample_field(field, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Evaluate a GridField (trilinear) or a callable (exact) at points."""
    if callable(field):
        return np.asarray(field(points), dtype=float)
    return gridmod.sample(grid, field.values, points)


def push_velocity(u, fmap: FlowMapData) -> GridField:
    """Transform a current-domain velocity to the reference domain.

    U(y) = gradY(X(y)) u(X(y)) with gradY(X(y)) = gradX(y)^-1 exactly; ``u``
    may be a GridField (interpolated at X(y)) or a callable of the points.
    """
    u_at_x = _sample_field(u, fmap.grid, fmap.X)
    vals = np.einsum("...ki,...i->...k", np.linalg.inv(fmap.gradX), u_at_x)
    return GridField(fmap.grid, vals)


def pull_velocity(u_ref, fmap: FlowMapData) -> GridField:
    """Inverse of :func:`push_velocity`: u(x) = gradX(Y(x)) U(Y(x))."""
    if fmap.Y is None:
        update_inverse(fmap)
    u_at_y = _sample_field(u_ref, fmap.grid, fmap.Y)
    g_at_y = gridmod.sample(fmap.grid, fmap.gradX, fmap.Y)
    vals = np.einsum("...ki,...i->...k", g_at_y, u_at_y)
    return GridField(fmap.grid, vals)


def push_scalar(p, fmap: FlowMapData) -> GridField:
    """Compose a current-domain scalar with the forward map: P(y) = p(X(y))."""
    return GridField(fmap.grid, _sample_field(p, fmap.grid, fmap.X))


def inverse_hessian(fmap: FlowMapData) -> np.ndarray:
    """Second derivatives of the inverse at the forward nodes.

    Y_{m,ij} evaluated at x = X(y), from the derivative-of-inverse identity
    Y_{m,ij} = -Y_{m,l} X_{l,pq} Y_{p,i} Y_{q,j} with everything at node y.
    """
    inv_g = np.linalg.inv(fmap.gradX)
    return -np.einsum(
        "...ml,...lpq,...pi,...qj->...mij", inv_g, fmap.hessX, inv_g, inv_g
    )


def compose_maps(inner_inverse_of: FlowMapData, outer: FlowMapData,
                 lam_inner: ExtensionField | None = None,
                 lam_outer: ExtensionField | None = None) -> FlowMapData:
    """Composite map C = outer o (inner)^-1 sampled on the shared grid.

    With ``inner`` the map of run 1 and ``outer`` the map of run 2, C sends
    run-1 coordinates to run-2 coordinates (the cross-solution change of
    variables).  Derivatives come from the chain rule on the two single maps;
    dXdt uses C' = Lambda_outer(C) - gradC Lambda_inner when the extension
    fields are supplied, and dgradXdt is the grid gradient of that field.
    """
    m1, m2 = inner_inverse_of, outer
    if not m1.grid.compatible(m2.grid) or abs(m1.t - m2.t) > 1e-12:
        raise ValueError("maps must share grid and time")
    if m1.Y is None:
        update_inverse(m1)
    grid = m1.grid
    y1 = m1.Y                                    # Y_1 at the cell centers
    grad_y1 = m1.gradY
    hess_y1_at_nodes = inverse_hessian(m1)       # at x = X_1(y); resample at centers
    hess_y1 = gridmod.sample(grid, hess_y1_at_nodes, y1) if m1.hessX is not None else None

    x2 = gridmod.sample(grid, m2.X, y1)
    grad_x2 = gridmod.sample(grid, m2.gradX, y1)
    grad_c = np.einsum("...lm,...mi->...li", grad_x2, grad_y1)

    hess_c = None
    if m2.hessX is not None and hess_y1 is not None:
        hess_x2 = gridmod.sample(grid, m2.hessX, y1)
        hess_c = np.einsum(
            "...lmp,...mi,...pj->...lij", hess_x2, grad_y1, grad_y1
        ) + np.einsum("...lm,...mij->...lij", grad_x2, hess_y1)
        hess_c = 0.5 * (hess_c + np.swapaxes(hess_c, -1, -2))

    centers = grid.centers()
    if lam_inner is not None and lam_outer is not None:
        lam1, _ = lam_inner(m1.t, centers)
        lam2, _ = lam_outer(m2.t, x2)
        dxdt = lam2 - np.einsum("...li,...i->...l", grad_c, lam1)
        dgrad = gridmod.grad_vector(dxdt, grid.h)
    else:
        dxdt = np.zeros_like(x2)
        dgrad = np.zeros_like(grad_c)

    return FlowMapData(grid=grid, t=m1.t, X=x2, gradX=grad_c, hessX=hess_c,
                       dXdt=dxdt, dgradXdt=dgrad)


def composed_is_identity(map1: FlowMapData, map2: FlowMapData) -> bool:
    """True when the two maps are bitwise equal, so map2 o map1^-1 collapses."""
    return (
        map1.grid.compatible(map2.grid)
        and map1.X.shape == map2.X.shape
        and np.array_equal(map1.X, map2.X)
        and np.array_equal(map1.gradX, map2.gradX)
    )
