"""Divergence-free extension of the rigid velocity field.

Construction: take the vector potential A with curl A = a + omega x (x - q),
gate it by a radial cutoff chi(|x - q|), and use

    Lambda = curl(chi A),

which is exactly solenoidal pointwise, equals the rigid field where chi = 1
and vanishes where chi = 0.  Because chi and A have closed-form derivatives,
Lambda's first and second space gradients are assembled analytically; this is
what lets the flow-map module integrate variational equations instead of
differencing the map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec
from .rigid import RigidState, skew

_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS3[_i, _j, _k] = 1.0
    _EPS3[_i, _k, _j] = -1.0


@dataclass(frozen=True)
class CutoffSpec:
    """Radii of the rigid collar (chi = 1 inside) and the decay shell.

    ``kind`` selects the transition profile: "smooth" is the exp-based bump
    ramp with all derivatives vanishing at the junctions, which keeps the
    flow map smooth enough for clean second-order refinement of every
    downstream quantity; "quintic" is the C2 polynomial smoothstep, whose
    third-derivative jump at the junction spheres caps sup-norm convergence
    of transported-field derivatives.
    """

    r_inner: float
    r_outer: float
    kind: str = "poly_c4"

    def __post_init__(self):
        if not (0 < self.r_inner < self.r_outer):
            raise InvalidSpec("need 0 < r_inner < r_outer")
        if self.kind not in ("poly_c4", "poly_c5", "smooth", "quintic"):
            raise InvalidSpec(f"unknown cutoff kind {self.kind!r}")

    @classmethod
    def default(cls, body_radius: float, wall_distance: float,
                kind: str = "smooth") -> "CutoffSpec":
        """Collar at 1.25 r, shell ending at min(2 r, 0.9 wall distance)."""
        ri = 1.25 * body_radius
        ro = min(2.0 * body_radius, 0.9 * wall_distance)
        if ro <= ri:
            raise InvalidSpec(
                f"no room for a decay shell: inner {ri:.4g} >= outer {ro:.4g}"
            )
        return cls(ri, ro, kind)


def _quintic_jet(s: np.ndarray):
    """Quintic smoothstep 6s^5 - 15s^4 + 10s^3 with three derivatives."""
    v = s**3 * (10.0 + s * (-15.0 + 6.0 * s))
    d1 = 30.0 * s**2 * (1.0 - s) ** 2
    d2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    d3 = 60.0 * (1.0 - 6.0 * s + 6.0 * s**2)
    return v, d1, d2, d3


def _poly_c4_jet(s: np.ndarray):
    """Order-9 smoothstep (first four derivatives vanish at the endpoints).

    S(s) = 126 s^5 - 420 s^6 + 540 s^7 - 315 s^8 + 70 s^9,
    S'(s) = 630 s^4 (1-s)^4.
    """
    t = 1.0 - s
    v = s**5 * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))))
    d1 = 630.0 * s**4 * t**4
    d2 = 2520.0 * s**3 * t**3 * (1.0 - 2.0 * s)
    d3 = 2520.0 * s**2 * t**2 * (3.0 - 14.0 * s + 14.0 * s**2)
    return v, d1, d2, d3


def _poly_c5_jet(s: np.ndarray):
    """Order-11 smoothstep (first five derivatives vanish at the endpoints).

    S(s) = 462 s^6 - 1980 s^7 + 3465 s^8 - 3080 s^9 + 1386 s^10 - 252 s^11,
    S'(s) = 2772 s^5 (1-s)^5.
    """
    t = 1.0 - s
    v = s**6 * (462.0 + s * (-1980.0 + s * (3465.0 + s * (-3080.0 + s * (1386.0 - 252.0 * s)))))
    d1 = 2772.0 * s**5 * t**5
    d2 = 13860.0 * s**4 * t**4 * (1.0 - 2.0 * s)
    d3 = 27720.0 * s**3 * t**3 * (2.0 - 9.0 * s + 9.0 * s**2)
    return v, d1, d2, d3


def _bump_step_jet(s: np.ndarray):
    """Symmetric exp-bump step f = 1/(1 + exp(1/(1-s) - 1/s)) with derivatives.

    Returns the *increasing* step (0 at s=0, 1 at s=1) like the quintic; all
    derivatives vanish at the endpoints, f(1/2) = 1/2 by symmetry.
    """
    # exp argument saturates double precision beyond this margin
    margin = 1.0 / 690.0
    inner = (s > margin) & (s < 1.0 - margin)
    sc = np.where(inner, s, 0.5)
    one = 1.0 - sc
    g0 = 1.0 / sc - 1.0 / one
    g1 = -1.0 / sc**2 - 1.0 / one**2
    g2 = 2.0 / sc**3 - 2.0 / one**3
    g3 = -6.0 / sc**4 - 6.0 / one**4

    f = 1.0 / (1.0 + np.exp(g0))
    p = f * (1.0 - f)
    d1 = -p * g1
    dp = d1 * (1.0 - 2.0 * f)
    d2 = -(dp * g1 + p * g2)
    ddp = d2 * (1.0 - 2.0 * f) - 2.0 * d1**2
    d3 = -(ddp * g1 + 2.0 * dp * g2 + p * g3)

    hi = s >= 1.0 - margin
    f = np.where(inner, f, np.where(hi, 1.0, 0.0))
    d1 = np.where(inner, d1, 0.0)
    d2 = np.where(inner, d2, 0.0)
    d3 = np.where(inner, d3, 0.0)
    return f, d1, d2, d3


def _cutoff_jet(rho: np.ndarray, spec: CutoffSpec):
    """chi(rho) and its first three radial derivatives (zero off the shell)."""
    rho = np.asarray(rho, dtype=float)
    w = spec.r_outer - spec.r_inner
    s = np.clip((rho - spec.r_inner) / w, 0.0, 1.0)
    step = {"quintic": _quintic_jet, "smooth": _bump_step_jet,
            "poly_c4": _poly_c4_jet, "poly_c5": _poly_c5_jet}[spec.kind]
    v, d1, d2, d3 = step(s)
    shell = (rho > spec.r_inner) & (rho < spec.r_outer)
    chi = 1.0 - v
    c1 = np.where(shell, -d1 / w, 0.0)
    c2 = np.where(shell, -d2 / w**2, 0.0)
    c3 = np.where(shell, -d3 / w**3, 0.0)
    return chi, c1, c2, c3


def cutoff(rho, spec: CutoffSpec):
    """Cutoff value in [0, 1] with first and second radial derivatives."""
    chi, c1, c2, _ = _cutoff_jet(rho, spec)
    return chi, c1, c2


def vector_potential(state: RigidState, x: np.ndarray) -> np.ndarray:
    """A(x) = a x (x-q) / 2 - |x-q|^2 omega / 2, whose curl is the rigid field."""
    r = np.asarray(x, dtype=float) - state.q
    rho2 = (r**2).sum(axis=-1)[..., None]
    return 0.5 * np.cross(np.broadcast_to(state.a, r.shape), r) - 0.5 * rho2 * state.omega


def _shell_jet(state: RigidState, spec: CutoffSpec, r, rho, c1, c2, c3=None):
    """Gradient (and optionally hessian) contributions inside the decay shell."""
    n = r / rho[..., None]
    a_vec = np.broadcast_to(state.a, r.shape)
    w_vec = np.broadcast_to(state.omega, r.shape)
    rigid = a_vec + np.cross(w_vec, r)
    # the potential is gauged by a constant vector (curl unchanged) so the
    # omega part is centered mid-shell; this halves the shell amplitudes
    # and with them every transported-derivative constant downstream
    c_sq = 0.5 * (spec.r_inner**2 + spec.r_outer**2)
    pot = 0.5 * np.cross(a_vec, r) - 0.5 * (rho**2 - c_sq)[..., None] * state.omega

    # dA[..., j, k] = d_j A_k ; second derivative is -delta_lj omega_k
    da = 0.5 * np.einsum("kmj,m->jk", _EPS3, state.a) - np.einsum(
        "...j,k->...jk", r, state.omega
    )

    eye = np.eye(3)
    nn = n[..., :, None] * n[..., None, :]
    proj = eye - nn
    d1 = c1[..., None] * n
    d2 = c2[..., None, None] * nn + (c1 / rho)[..., None, None] * proj

    sk = skew(state.omega)
    lam = np.cross(d1, pot)
    # eps_ijk d2_lj pot_k -> cross over the trailing axis, then [l, i] -> [i, l]
    grad = (
        np.swapaxes(np.cross(d2, pot[..., None, :]), -1, -2)
        + np.swapaxes(np.cross(d1[..., None, :], da), -1, -2)
        + d1[..., None, :] * rigid[..., :, None]
    )
    if c3 is None:
        return lam, grad, None

    sym3 = (
        proj[..., :, :, None] * n[..., None, None, :]
        + proj[..., :, None, :] * n[..., None, :, None]
        + proj[..., None, :, :] * n[..., :, None, None]
    )
    d3 = (
        c3[..., None, None, None] * (nn[..., :, :, None] * n[..., None, None, :])
        + ((c2 - c1 / rho) / rho)[..., None, None, None] * sym3
    )
    # eps-contractions as broadcast cross products; results come out with the
    # vector index last and are transposed to the [i, l, m] layout
    t_d3 = np.swapaxes(np.cross(d3, pot[..., None, None, :]), -1, -3)
    v_da = np.stack(
        [da[..., 1, 2] - da[..., 2, 1], da[..., 2, 0] - da[..., 0, 2],
         da[..., 0, 1] - da[..., 1, 0]], axis=-1
    )
    t_sym = v_da[..., :, None, None] * d2[..., None, :, :]
    t_mj = np.swapaxes(np.cross(d2[..., :, None, :], da[..., None, :, :]), -1, -3)
    t_lj = np.swapaxes(t_mj, -1, -2)
    hess = (
        t_d3 + t_sym + t_mj + t_lj
        - np.cross(d1, w_vec)[..., :, None, None] * eye[None, :, :]
        + d1[..., None, :, None] * sk[:, None, :]
        + d1[..., None, None, :] * sk[:, :, None]
    )
    return lam, grad, hess


def lambda_jet(state: RigidState, spec: CutoffSpec, x: np.ndarray,
               want_hessian: bool = True):
    """Lambda = curl(chi A) with analytic gradient and second gradient.

    Returns (value (..., 3), grad (..., 3, 3), hess (..., 3, 3, 3)) with
    grad[..., i, l] = d_l Lambda_i and hess[..., i, l, m] = d_m d_l Lambda_i.
    Off the decay shell the field is exactly rigid or exactly zero, so the
    tensor machinery only runs on shell points.
    """
    x = np.asarray(x, dtype=float)
    r = x - state.q
    rho = np.sqrt((r**2).sum(axis=-1))
    chi, c1, c2, c3 = _cutoff_jet(rho, spec)

    shape = x.shape[:-1]
    sk = skew(state.omega)
    rigid = state.a + np.cross(np.broadcast_to(state.omega, r.shape), r)
    lam = chi[..., None] * rigid
    grad = chi[..., None, None] * sk
    hess = np.zeros(shape + (3, 3, 3)) if want_hessian else None

    shell = (rho > spec.r_inner) & (rho < spec.r_outer)
    if np.any(shell):
        args = (state, spec, r[shell], rho[shell], c1[shell], c2[shell])
        if want_hessian:
            s_lam, s_grad, s_hess = _shell_jet(*args, c3[shell])
            hess[shell] = s_hess
        else:
            s_lam, s_grad, _ = _shell_jet(*args)
        lam[shell] += s_lam
        grad[shell] += s_grad
    return lam, grad, hess


def lambda_field(state: RigidState, spec: CutoffSpec, x: np.ndarray):
    """Extension field value and gradient at points x (..., 3)."""
    lam, grad, _ = lambda_jet(state, spec, x, want_hessian=False)
    return lam, grad


class ExtensionField:
    """Time-dependent extension field along a rigid trajectory.

    ``motion`` is anything with a ``state(t) -> RigidState`` method; frozen
    single-state evaluation uses :meth:`at_state`.
    """

    def __init__(self, motion, spec: CutoffSpec):
        self.motion = motion
        self.spec = spec

    @classmethod
    def at_state(cls, state: RigidState, spec: CutoffSpec) -> "ExtensionField":
        class _Frozen:
            def __init__(self, s):
                self._s = s

            def state(self, t):
                return self._s

        return cls(_Frozen(state), spec)

    def jet(self, t: float, x: np.ndarray):
        return lambda_jet(self.motion.state(t), self.spec, x)

    def __call__(self, t: float, x: np.ndarray):
        lam, grad, _ = lambda_jet(self.motion.state(t), self.spec, x, want_hessian=False)
        return lam, grad
