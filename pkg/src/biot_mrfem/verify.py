"""Weighted norms, manufactured solutions, error computation and convergence rates.

The manufactured forcings are hard-coded from hand differentiation and
cross-checked at runtime by an independent finite-difference oracle, so a sign
slip in either path is caught immediately.

Conventions (2D): the scalar curl of a vector field is curl v = d_y v1 - d_x v2
and the vector curl of a scalar is curl s = (-d_y s, d_x s); the two are
L2-adjoint up to the boundary term s (nu x v).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import OperatorBlocks, ProblemData, operator_blocks
from .mesh import all_natural_bc, mesh_stats, unit_square_mesh
from .reduction import solve_condensed
from .spaces import (
    TRI_D4_BARY,
    TRI_D4_W,
    SpaceError,
    barycentric_to_physical,
    basis_table,
    div_table,
)
from .system import MaterialParams, assemble_biot, build_biot_spaces, solve_direct


class CaseError(ValueError):
    """Raised for unknown manufactured-case names."""


# ---------------------------------------------------------------------------
# norms

def _blocks_for(state, blocks=None):
    return blocks if blocks is not None else operator_blocks(state.spaces)


def weighted_norm_X(state, params, blocks=None):
    """The parameter-weighted norm of a discrete state.

    ||x||_X^2 = mu^-1 (||r||^2 + ||curl r||^2) + mu ||u||^2
              + (2mu+lambda) ||div u||^2 + K^-1 ||q||^2
              + dt/(eta+c0) ||div q||^2 + (eta+c0) ||p||^2.
    """
    b = _blocks_for(state, blocks)
    r, u, q, p = state.r, state.u, state.q, state.p
    mu, lam = params.mu, params.lam
    eta_c0 = params.eta + params.c0
    du = b.B_u @ u
    dq = b.B_q @ q
    total = (
        (r @ (b.M_r @ r) + r @ (b.curl_curl @ r)) / mu
        + mu * (u @ (b.M_u @ u))
        + (2.0 * mu + lam) * (du @ (b.M_p @ du))
        + (q @ (b.M_q @ q)) / params.k_scale
        + (params.dt / eta_c0) * (dq @ (b.M_p @ dq))
        + eta_c0 * (p @ (b.M_p @ p))
    )
    return float(np.sqrt(total))


def curl_range_projection(state_u, blocks, spaces):
    """L2-projection of a displacement coefficient vector onto Ran(curl).

    Solves the normal equations B_r^T M_u B_r c = B_r^T M_u u with one nodal
    value pinned (constants span the kernel of the curl) and returns the RT0
    coefficients B_r c of the projection.
    """
    K = blocks.curl_curl
    rhs = blocks.B_r.T @ (blocks.M_u @ state_u)
    n = K.shape[0]
    keep = np.arange(1, n)
    Kred = K[np.ix_(keep, keep)].tocsc()
    c = np.zeros(n)
    c[1:] = spla.spsolve(Kred, rhs[keep])
    return blocks.B_r @ c


def energy_norm(state, params, blocks=None):
    """Discrete energy norm: like the weighted norm, but with the displacement
    measured through its curl-range projection and the divergence terms folded
    into the single coupling term ||div(alpha u + delta q)||^2."""
    b = _blocks_for(state, blocks)
    r, u, q, p = state.r, state.u, state.q, state.p
    mu, lam = params.mu, params.lam
    eta_c0 = params.eta + params.c0
    pi_u = curl_range_projection(u, b, state.spaces)
    du = b.B_u @ u
    coupled = params.alpha * du + params.delta * (b.B_q @ q)
    total = (
        (r @ (b.M_r @ r) + r @ (b.curl_curl @ r)) / mu
        + mu * (pi_u @ (b.M_u @ pi_u))
        + (2.0 * mu + lam) * (du @ (b.M_p @ du))
        + (q @ (b.M_q @ q)) / params.k_scale
        + (coupled @ (b.M_p @ coupled)) / eta_c0
        + eta_c0 * (p @ (b.M_p @ p))
    )
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# manufactured cases

@dataclass
class ManufacturedCase:
    """Analytic solution of the quasi-steady strong form with all derived data.

    All callables take a point (2,) array. ``q`` is the scaled flux -delta K
    grad p; forcings satisfy
        curl r - grad((2mu+lambda) div u) + alpha grad p = f_u,
        c0 p + alpha div u + delta div q = f_p.
    """

    name: str
    params: MaterialParams
    u: Callable
    p: Callable
    r: Callable
    curl_r: Callable
    grad_p: Callable
    div_u: Callable
    q: Callable
    div_q: Callable
    f_u: Callable
    f_p: Callable
    u0: Callable = None
    sigma0: Callable = None
    p0: Callable = None

    def __post_init__(self):
        self.u0 = self.u
        self.p0 = self.p
        prm = self.params
        self.sigma0 = lambda x: (2 * prm.mu + prm.lam) * self.div_u(x) - prm.alpha * self.p(x)

    def problem_data(self):
        return ProblemData(f_u=self.f_u, f_p=self.f_p, u0=self.u0, sigma0=self.sigma0, p0=self.p0)


def make_case(name, params):
    """Construct the 'poly' or 'trig' manufactured case for given parameters."""
    if params.k_is_tensor:
        raise CaseError("manufactured cases require scalar K")
    mu, lam, alpha, c0 = params.mu, params.lam, params.alpha, params.c0
    K, dt, delta = float(params.K), params.dt, params.delta

    if name == "poly":
        u = lambda x: np.array([x[0] ** 2 * x[1], -x[0] * x[1] ** 2])
        p = lambda x: x[0] * (1 - x[0]) * x[1] * (1 - x[1])
        # curl u = d_y u1 - d_x u2 = x^2 + y^2 (divergence-free field)
        r = lambda x: mu * (x[0] ** 2 + x[1] ** 2)
        curl_r = lambda x: np.array([-2 * mu * x[1], 2 * mu * x[0]])
        grad_p = lambda x: np.array(
            [(1 - 2 * x[0]) * x[1] * (1 - x[1]), x[0] * (1 - x[0]) * (1 - 2 * x[1])]
        )
        div_u = lambda x: 0.0
        lap_p = lambda x: -2 * x[1] * (1 - x[1]) - 2 * x[0] * (1 - x[0])
    elif name == "trig":
        pi = np.pi
        u = lambda x: np.array(
            [np.sin(pi * x[0]) * np.sin(pi * x[1]), np.cos(pi * x[0]) * np.cos(pi * x[1])]
        )
        p = lambda x: np.cos(pi * x[0]) * np.cos(pi * x[1])
        r = lambda x: 2 * pi * mu * np.sin(pi * x[0]) * np.cos(pi * x[1])
        curl_r = lambda x: 2 * pi**2 * mu * u(x)
        grad_p = lambda x: np.array(
            [
                -pi * np.sin(pi * x[0]) * np.cos(pi * x[1]),
                -pi * np.cos(pi * x[0]) * np.sin(pi * x[1]),
            ]
        )
        div_u = lambda x: 0.0
        lap_p = lambda x: -2 * pi**2 * p(x)
    else:
        raise CaseError(f"unknown manufactured case {name!r}")

    q = lambda x: -delta * K * grad_p(x)
    div_q = lambda x: -delta * K * lap_p(x)
    # both cases are divergence-free, so grad(div u) drops out of f_u
    f_u = lambda x: curl_r(x) + alpha * grad_p(x)
    f_p = lambda x: c0 * p(x) + alpha * div_u(x) + delta * div_q(x)

    return ManufacturedCase(
        name=name,
        params=params,
        u=u,
        p=p,
        r=r,
        curl_r=curl_r,
        grad_p=grad_p,
        div_u=div_u,
        q=q,
        div_q=div_q,
        f_u=f_u,
        f_p=f_p,
    )


# ---------------------------------------------------------------------------
# finite-difference oracle

_FD1_H = 1e-4
_FD2_H = 1e-3


def _fd1(f, x, axis, h=_FD1_H):
    """Fourth-order central first derivative along an axis."""
    e = np.zeros(2)
    e[axis] = 1.0
    return (
        -np.asarray(f(x + 2 * h * e))
        + 8 * np.asarray(f(x + h * e))
        - 8 * np.asarray(f(x - h * e))
        + np.asarray(f(x - 2 * h * e))
    ) / (12 * h)


def check_case_residual(case, n_points=100, seed=0):
    """Max strong-form residual of a case at random interior points.

    All derivatives are taken by finite differences of the analytic fields,
    independently of the hand-coded forcings; a wider step is used for the
    nested second-derivative terms to stay clear of roundoff.
    """
    prm = case.params
    rng = np.random.default_rng(seed)
    pts = 0.05 + 0.9 * rng.random((n_points, 2))
    worst = 0.0
    for x in pts:
        # rotation definition r = mu curl u
        curl_u = _fd1(case.u, x, 1)[0] - _fd1(case.u, x, 0)[1]
        res = abs(case.r(x) - prm.mu * curl_u)
        # momentum: curl r - (2mu+lam) grad div u + alpha grad p = f_u
        div_u = lambda y: _fd1(case.u, y, 0, _FD2_H)[0] + _fd1(case.u, y, 1, _FD2_H)[1]
        grad_div_u = np.array([_fd1(div_u, x, 0, _FD2_H), _fd1(div_u, x, 1, _FD2_H)])
        curl_r = np.array([-_fd1(case.r, x, 1), _fd1(case.r, x, 0)])
        mom = curl_r - (2 * prm.mu + prm.lam) * grad_div_u + prm.alpha * np.array(
            [_fd1(case.p, x, 0), _fd1(case.p, x, 1)]
        ) - case.f_u(x)
        res = max(res, np.abs(mom).max())
        # Darcy: K^-1 q + delta grad p = 0
        darcy = case.q(x) / float(prm.K) + prm.delta * np.array(
            [_fd1(case.p, x, 0), _fd1(case.p, x, 1)]
        )
        res = max(res, np.abs(darcy).max())
        # mass: c0 p + alpha div u + delta div q = f_p
        div_q = _fd1(case.q, x, 0)[0] + _fd1(case.q, x, 1)[1]
        mass = prm.c0 * case.p(x) + prm.alpha * div_u(x) + prm.delta * div_q - case.f_p(x)
        res = max(res, abs(mass))
        worst = max(worst, res)
    return worst


# ---------------------------------------------------------------------------
# errors and convergence

def _l2_error_field(space, coeffs, exact, vector):
    """||u_h - u|| by the degree-4 rule; exact() is evaluated pointwise."""
    mesh = space.mesh
    pts = barycentric_to_physical(mesh, TRI_D4_BARY)
    table = basis_table(space, TRI_D4_BARY)
    c = np.asarray(coeffs)[space.cell_dofs]
    if vector:
        uh = np.einsum("tj,tqjd->tqd", c, table)
        ex = np.array([[exact(pts[t, g]) for g in range(pts.shape[1])] for t in range(mesh.num_cells)])
        err2 = np.einsum("t,q,tqd->", mesh.areas, TRI_D4_W, (uh - ex) ** 2)
    else:
        uh = np.einsum("tj,tqj->tq", c, table)
        ex = np.array([[float(exact(pts[t, g])) for g in range(pts.shape[1])] for t in range(mesh.num_cells)])
        err2 = np.einsum("t,q,tq->", mesh.areas, TRI_D4_W, (uh - ex) ** 2)
    return float(np.sqrt(err2))


def _l2_error_cellwise(mesh, values, exact):
    """||v_h - v|| for a cellwise-constant v_h."""
    pts = barycentric_to_physical(mesh, TRI_D4_BARY)
    ex = np.array([[float(exact(pts[t, g])) for g in range(pts.shape[1])] for t in range(mesh.num_cells)])
    diff = values[:, None] - ex
    return float(np.sqrt(np.einsum("t,q,tq->", mesh.areas, TRI_D4_W, diff**2)))


def _l2_error_p1(space, coeffs, exact):
    return _l2_error_field(space, coeffs, exact, vector=False)


@dataclass
class ErrorRow:
    level: int
    h: float
    err_r: float
    err_curl_r: float
    err_u: float
    err_div_u: float
    err_q: float
    err_div_q: float
    err_p: float
    err_X: float


@dataclass
class ErrorTable:
    """Per-level errors of a convergence study plus observed rates."""

    case: str
    family: int
    method: str
    rows: List[ErrorRow]

    FIELDS = ("err_r", "err_curl_r", "err_u", "err_div_u", "err_q", "err_div_q", "err_p", "err_X")

    def rates(self, field="err_X"):
        vals = np.array([getattr(row, field) for row in self.rows])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log2(vals[:-1] / vals[1:])

    def final_rate(self, field="err_X"):
        r = self.rates(field)
        return float(r[-1]) if len(r) else np.nan

    def to_csv(self, path):
        lines = ["level,h,err_r,err_curl_r,err_u,err_div_u,err_q,err_div_q,err_p,err_X,rate_X"]
        rx = self.rates("err_X")
        for i, row in enumerate(self.rows):
            rate = "" if i == 0 else f"{rx[i - 1]:.17g}"
            vals = [f"{getattr(row, f):.17g}" for f in ("h",) + self.FIELDS]
            lines.append(f"{row.level}," + ",".join(vals) + f",{rate}")
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")


def errors_on_mesh(state, case, blocks=None):
    """Component errors of a discrete state against a manufactured case."""
    prm = case.params
    spaces = state.spaces
    mesh = spaces["r"].mesh
    b = _blocks_for(state, blocks)

    err_r = _l2_error_p1(spaces["r"], state.r, case.r)
    err_curl_r = _l2_error_field(spaces["u"], b.B_r @ state.r, case.curl_r, vector=True)
    err_u = _l2_error_field(spaces["u"], state.u, case.u, vector=True)
    err_div_u = _l2_error_cellwise(mesh, b.B_u @ state.u, case.div_u)
    err_q = _l2_error_field(spaces["q"], state.q, case.q, vector=True)
    err_div_q = _l2_error_cellwise(mesh, b.B_q @ state.q, case.div_q)
    err_p = _l2_error_cellwise(mesh, state.p, case.p)

    mu, lam = prm.mu, prm.lam
    eta_c0 = prm.eta + prm.c0
    err_X = np.sqrt(
        (err_r**2 + err_curl_r**2) / mu
        + mu * err_u**2
        + (2 * mu + lam) * err_div_u**2
        + err_q**2 / prm.k_scale
        + (prm.dt / eta_c0) * err_div_q**2
        + eta_c0 * err_p**2
    )
    return dict(
        err_r=err_r,
        err_curl_r=err_curl_r,
        err_u=err_u,
        err_div_u=err_div_u,
        err_q=err_q,
        err_div_q=err_div_q,
        err_p=err_p,
        err_X=float(err_X),
    )


def solve_case(mesh, family, case, method="4F", lumped=None, bc=None):
    """Solve one manufactured problem; method '4F' (exact or lumped) or 'MR'."""
    prm = case.params
    if bc is None:
        bc = all_natural_bc(mesh, u0=case.u0, sigma0=case.sigma0, p0=case.p0)
    if method == "MR":
        sys = assemble_biot(mesh, family, prm, bc, lumped=True, data=case.problem_data())
        state, _ = solve_condensed(sys)
    elif method == "4F":
        use_lumped = bool(lumped)
        sys = assemble_biot(mesh, family, prm, bc, lumped=use_lumped, data=case.problem_data())
        state = solve_direct(sys)
    else:
        raise CaseError(f"unknown method {method!r}")
    return state, sys


def convergence_study(case_name, family, params, levels=4, method="4F", n0=4, lumped=None, bc_maker=None):
    """Run a uniform-refinement study on the unit square and tabulate errors.

    ``bc_maker(mesh, case)`` may supply a custom boundary configuration; the
    default puts every boundary tag on the natural side.
    """
    if levels < 3:
        raise CaseError("a convergence study needs at least 3 levels")
    case = make_case(case_name, params)
    rows = []
    for lvl in range(levels):
        n = n0 * 2**lvl
        mesh = unit_square_mesh(n)
        bc = None if bc_maker is None else bc_maker(mesh, case)
        state, sys = solve_case(mesh, family, case, method=method, lumped=lumped, bc=bc)
        errs = errors_on_mesh(state, case, blocks=sys.blocks)
        rows.append(ErrorRow(level=lvl, h=mesh_stats(mesh)[0], **errs))
    return ErrorTable(case=case_name, family=family, method=method, rows=rows)
