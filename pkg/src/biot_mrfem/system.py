"""Composition of the 4x4 block Biot system, boundary conditions and time stepping.

The unknown ordering is (r, u, q, p) throughout. All essential boundary
conditions of the formulation are homogeneous (normal displacement and
tangential rotation on the r-boundary, normal flux on the q-boundary), so
elimination replaces the corresponding rows and columns by the identity with
zero right-hand side, keeping the symmetrizable structure intact.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ProblemData, assemble_rhs, operator_blocks
from .mesh import BoundaryConfig, Mesh
from .quadrature import dof_partition_by_vertex, lumped_mass
from .spaces import FieldState, SpaceError, build_space


class ParameterError(ValueError):
    """Raised for invalid material parameters."""


class SolverError(RuntimeError):
    """Raised when a linear solve fails; carries context such as the step index."""


@dataclass
class MaterialParams:
    """Material and time-step parameters.

    K is a positive scalar or, for the vertex-lumped path only, a cellwise SPD
    tensor of shape (num_cells, 2, 2).
    """

    mu: float
    lam: float
    alpha: float
    c0: float
    K: object
    dt: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ParameterError("mu must be positive")
        if self.lam < 0:
            raise ParameterError("lambda must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError("alpha must lie in [0, 1]")
        if self.c0 < 0:
            raise ParameterError("c0 must be nonnegative")
        if self.dt <= 0:
            raise ParameterError("dt must be positive")
        if self.k_is_tensor:
            ev = np.linalg.eigvalsh(np.asarray(self.K, dtype=float))
            if np.any(ev <= 0):
                raise ParameterError("tensor K must be SPD on every cell")
        elif float(self.K) <= 0:
            raise ParameterError("K must be positive")
        if self.eta + self.c0 <= 0:
            raise ParameterError("eta + c0 must be positive")

    @property
    def k_is_tensor(self):
        return np.ndim(self.K) == 3

    @property
    def delta(self):
        return float(np.sqrt(self.dt))

    @property
    def k_scale(self):
        """Scalar K, or the largest cellwise eigenvalue for tensor K.

        Used only in the norm weight eta; tensor K enters the operators
        through the lumped matrix directly.
        """
        if self.k_is_tensor:
            return float(np.linalg.eigvalsh(np.asarray(self.K, dtype=float)).max())
        return float(self.K)

    @property
    def eta(self):
        return self.alpha**2 / (2.0 * self.mu + self.lam) + self.dt * self.k_scale

    def replace(self, **kw):
        vals = dict(mu=self.mu, lam=self.lam, alpha=self.alpha, c0=self.c0, K=self.K, dt=self.dt)
        vals.update(kw)
        return MaterialParams(**vals)


def flux_family(family):
    if family == 1:
        return "rt0"
    if family == 2:
        return "bdm1"
    raise SpaceError(f"family must be 1 or 2, got {family}")


def build_biot_spaces(mesh, family, bc=None):
    """The four spaces of the chosen discretization family at lowest order."""
    return {
        "r": build_space(mesh, "lagrange1", bc, field="rotation"),
        "u": build_space(mesh, "rt0", bc, field="displacement"),
        "q": build_space(mesh, flux_family(family), bc, field="flux"),
        "p": build_space(mesh, "p0", bc, field="pressure"),
    }


def _apply_bc(matrix, essential):
    """Zero essential rows/columns and put ones on their diagonal."""
    matrix = matrix.tocsr()
    free = sp.diags((~essential).astype(float))
    fixed = sp.diags(essential.astype(float))
    return (free @ matrix @ free + fixed).tocsr()


@dataclass
class BlockSystem:
    """Assembled 4x4 block operator with boundary conditions applied."""

    spaces: dict
    params: MaterialParams
    bc: BoundaryConfig
    blocks: object  # OperatorBlocks
    lumped: bool
    family: int
    A_rr: sp.csr_matrix  # diagonal blocks, BC applied
    A_uu: sp.csr_matrix
    A_qq: sp.csr_matrix
    A_pp: sp.csr_matrix
    rhs: np.ndarray
    matrix: sp.csr_matrix = None
    essential: np.ndarray = None
    offsets: np.ndarray = None
    lumped_partitions: dict = field(default_factory=dict)

    @property
    def ndof(self):
        return self.rhs.shape[0]

    def component_slices(self):
        o = self.offsets
        return {name: slice(o[i], o[i + 1]) for i, name in enumerate("ruqp")}

    def state_from_vector(self, vec):
        return FieldState.from_vector(vec, self.spaces, family=self.family)


def assemble_biot(mesh, family, params, bc, lumped=False, data=None, blocks=None, spaces=None):
    """Assemble the four-field Biot system, exact or with vertex-lumped (r, q) masses."""
    if spaces is None:
        spaces = build_biot_spaces(mesh, family, bc)
    if blocks is None:
        blocks = operator_blocks(spaces)
    if params.k_is_tensor and not lumped:
        raise ParameterError("tensor K is supported on the lumped path only")

    ess = {name: spaces[name].essential for name in "ruqp"}
    partitions = {}

    if lumped:
        Mr = lumped_mass(spaces["r"]).matrix
        partitions["r"] = dof_partition_by_vertex(spaces["r"])
        if params.k_is_tensor:
            Kinv = np.linalg.inv(np.asarray(params.K, dtype=float))
            lm_q = lumped_mass(spaces["q"], weight=Kinv)
            A_qq = lm_q.matrix
        else:
            lm_q = lumped_mass(spaces["q"])
            A_qq = lm_q.matrix / float(params.K)
        if lm_q.partition is not None:
            partitions["q"] = lm_q.partition
        A_rr = Mr / params.mu
    else:
        A_rr = blocks.M_r / params.mu
        A_qq = blocks.M_q / float(params.K)

    A_uu = (2.0 * params.mu + params.lam) * blocks.div_div_u
    A_pp = params.c0 * blocks.M_p

    # force the diagonal blocks to be exactly symmetric in floating point;
    # sparse triple products can otherwise differ in the last bit
    A_rr = 0.5 * (A_rr + A_rr.T)
    A_uu = 0.5 * (A_uu + A_uu.T)
    A_qq = 0.5 * (A_qq + A_qq.T)

    A_rr = _apply_bc(A_rr, ess["r"])
    A_uu = _apply_bc(A_uu, ess["u"])
    A_qq = _apply_bc(A_qq, ess["q"])
    A_pp = A_pp.tocsr()  # pressure has no essential DOFs

    delta, alpha = params.delta, params.alpha
    Bhat_r = blocks.Bhat_r
    Bhat_u = blocks.Bhat_u
    Bhat_q = blocks.Bhat_q
    full = sp.bmat(
        [
            [A_rr, -Bhat_r.T, None, None],
            [Bhat_r, A_uu, None, -alpha * Bhat_u.T],
            [None, None, A_qq, -delta * Bhat_q.T],
            [None, alpha * Bhat_u, delta * Bhat_q, A_pp],
        ],
        format="csr",
    )

    sizes = np.array([spaces[n].ndof for n in "ruqp"])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    essential = np.concatenate([ess[n] for n in "ruqp"])
    full = _apply_bc(full, essential)

    if data is None:
        rhs = np.zeros(full.shape[0])
    else:
        rhs = assemble_rhs(data, spaces, bc, params).concatenate()
        rhs[essential] = 0.0

    return BlockSystem(
        spaces=spaces,
        params=params,
        bc=bc,
        blocks=blocks,
        lumped=lumped,
        family=family,
        A_rr=A_rr,
        A_uu=A_uu,
        A_qq=A_qq,
        A_pp=A_pp,
        rhs=rhs,
        matrix=full,
        essential=essential,
        offsets=offsets,
        lumped_partitions=partitions,
    )


def symmetrize(sys):
    """Return (A S, S) with S = diag(+I, -I, -I, +I) so that A S is symmetric.

    Solving (A S) y = f and setting x = S y recovers the solution of A x = f.
    """
    o = sys.offsets
    signs = np.ones(sys.ndof)
    signs[o[1] : o[3]] = -1.0
    return (sys.matrix @ sp.diags(signs)).tocsr(), signs


def direct_solve(matrix, rhs):
    """Sparse LU solve with a residual check; raises SolverError on singularity."""
    matrix = sp.csc_matrix(matrix)
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:
        raise SolverError(f"factorization failed (singular system?): {exc}") from exc
    udiag = np.abs(lu.U.diagonal())
    if udiag.min() == 0.0:
        raise SolverError(
            f"singular system: zero pivot at position {int(udiag.argmin())}"
        )
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError(
            f"singular system: non-finite solution, smallest pivot at {int(udiag.argmin())}"
        )
    return x


def solve_direct(sys):
    """Direct solve of an assembled system, returning a FieldState."""
    return sys.state_from_vector(direct_solve(sys.matrix, sys.rhs))


def time_loop(mesh, family, params, bc, initial, n_steps, data=None, scheme="backward_euler", lumped=False):
    """March the quasi-steady Biot system with an implicit one-step scheme.

    ``initial`` is a FieldState (or any object with .u/.p/.q coefficient
    vectors) supplying the history (u^0, p^0). ``data.f_p`` is interpreted as
    the unscaled fluid source. Returns the list of states after each step.
    """
    if scheme not in ("backward_euler", "crank_nicolson"):
        raise ParameterError(f"unknown scheme {scheme!r}")
    theta_dt = params.dt if scheme == "backward_euler" else 0.5 * params.dt
    step_params = params.replace(dt=theta_dt)

    spaces = build_biot_spaces(mesh, family, bc)
    blocks = operator_blocks(spaces)
    sys0 = assemble_biot(
        mesh, family, step_params, bc, lumped=lumped, data=data, blocks=blocks, spaces=spaces
    )
    lu = spla.splu(sp.csc_matrix(sys0.matrix))
    sl = sys0.component_slices()

    base_rhs = sys0.rhs.copy()
    # the assembled f_p carries the raw source; the step integral contributes
    # the full dt regardless of the scheme (only flux terms carry theta)
    base_rhs[sl["p"]] *= params.dt

    u_prev = np.asarray(initial.u, dtype=float).copy()
    p_prev = np.asarray(initial.p, dtype=float).copy()
    q_prev = np.asarray(getattr(initial, "q", np.zeros(spaces["q"].ndof)), dtype=float).copy()

    states = []
    for step in range(n_steps):
        rhs = base_rhs.copy()
        fold = (
            step_params.c0 * (sys0.blocks.M_p @ p_prev)
            + step_params.alpha * (sys0.blocks.Bhat_u @ u_prev)
        )
        if scheme == "crank_nicolson":
            fold = fold - step_params.delta * (sys0.blocks.Bhat_q @ q_prev)
        rhs[sl["p"]] += fold
        rhs[sys0.essential] = 0.0
        vec = lu.solve(rhs)
        if not np.all(np.isfinite(vec)):
            raise SolverError(f"solver failure at step {step}")
        state = sys0.state_from_vector(vec)
        states.append(state)
        u_prev, p_prev, q_prev = state.u, state.p, state.q
    return states
