"""Preconditioned MINRES with the weighted-norm Riesz map as preconditioner.

The symmetrized operator is indefinite but symmetric, and the block-diagonal
Riesz map of the parameter-weighted norm is SPD, so MINRES applies. Iteration
counts are expected to stay essentially flat across mesh levels and material
parameters; the parameter sweep utility measures exactly that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigvalsh_tridiagonal

from .assembly import operator_blocks
from .mesh import all_natural_bc, mesh_stats, refine_uniform, unit_square_mesh
from .system import (
    MaterialParams,
    SolverError,
    assemble_biot,
    build_biot_spaces,
    symmetrize,
)


@dataclass
class Preconditioner:
    """Block-diagonal Riesz map of the weighted norm, stored as factorized blocks.

    ``norm_matrix`` is the norm Gram matrix N; ``apply`` solves N z = v.
    The quadratic form x^T N x therefore reproduces the squared weighted norm.
    """

    norm_matrix: sp.csr_matrix
    _solvers: list = field(repr=False, default_factory=list)
    _slices: list = field(repr=False, default_factory=list)

    def apply(self, v):
        out = np.empty_like(v)
        for sl, solve in zip(self._slices, self._solvers):
            out[sl] = solve(v[sl])
        return out

    def quadratic(self, x):
        """The squared weighted norm x^T N x."""
        return float(x @ (self.norm_matrix @ x))


def _bc_identity(matrix, essential):
    matrix = matrix.tocsr()
    if not essential.any():
        return matrix
    free = sp.diags((~essential).astype(float))
    fixed = sp.diags(essential.astype(float))
    return (free @ matrix @ free + fixed).tocsr()


def build_preconditioner(sys):
    """Assemble and factorize the four norm blocks of an assembled system.

    Essential DOFs are replaced by the identity in each block, matching the
    elimination applied to the operator.
    """
    b = sys.blocks
    prm = sys.params
    mu, lam = prm.mu, prm.lam
    eta_c0 = prm.eta + prm.c0
    N_r = (b.M_r + b.curl_curl) / mu
    N_u = mu * b.M_u + (2.0 * mu + lam) * b.div_div_u
    N_q = b.M_q / prm.k_scale + (prm.dt / eta_c0) * b.div_div_q
    N_p = eta_c0 * b.M_p

    sl = sys.component_slices()
    ess = {n: sys.spaces[n].essential for n in "ruqp"}
    N_r = _bc_identity(N_r, ess["r"])
    N_u = _bc_identity(N_u, ess["u"])
    N_q = _bc_identity(N_q, ess["q"])
    N_p = N_p.tocsr()

    solvers = []
    for block in (N_r, N_u, N_q):
        lu = spla.splu(sp.csc_matrix(block))
        solvers.append(lu.solve)
    p_diag = N_p.diagonal()
    solvers.append(lambda v, d=p_diag: v / d)

    norm_matrix = sp.block_diag([N_r, N_u, N_q, N_p], format="csr")
    return Preconditioner(
        norm_matrix=norm_matrix,
        _solvers=solvers,
        _slices=[sl[n] for n in "ruqp"],
    )


@dataclass
class SolveReport:
    """Outcome of a MINRES run, including the Lanczos spectrum estimate."""

    iterations: int
    converged: bool
    residuals: np.ndarray  # relative preconditioned residual norms
    ritz_values: np.ndarray

    @property
    def ritz_intervals(self):
        """(negative interval, positive interval) of the Ritz values, or None."""
        neg = self.ritz_values[self.ritz_values < 0]
        pos = self.ritz_values[self.ritz_values > 0]
        neg_iv = (float(neg.min()), float(neg.max())) if neg.size else None
        pos_iv = (float(pos.min()), float(pos.max())) if pos.size else None
        return neg_iv, pos_iv

    @property
    def condition_estimate(self):
        if self.ritz_values.size == 0:
            return np.nan
        a = np.abs(self.ritz_values)
        return float(a.max() / a.min())


def minres(A, b, precond=None, tol=1e-10, maxiter=None):
    """Preconditioned MINRES for a symmetric (indefinite) operator.

    ``A`` is a sparse matrix or a matvec callable, ``precond`` an SPD
    preconditioner application (defaults to identity). Returns (x, report);
    convergence is declared when the preconditioned residual norm drops below
    ``tol`` times its initial value.
    """
    n = b.shape[0]
    matvec = A.dot if sp.issparse(A) else A
    psolve = precond.apply if isinstance(precond, Preconditioner) else (precond or (lambda v: v))
    if maxiter is None:
        maxiter = 5 * n

    x = np.zeros(n)
    r1 = b.copy()
    y = psolve(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise SolverError("preconditioner is not positive definite")
    if beta1 == 0.0:
        return x, SolveReport(0, True, np.array([0.0]), np.array([]))
    beta1 = np.sqrt(beta1)

    oldb, beta = 0.0, beta1
    dbar, epsln = 0.0, 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1

    alphas, betas = [], []
    residuals = [1.0]
    converged = False
    itn = 0
    while itn < maxiter:
        itn += 1
        s = 1.0 / beta
        v = s * y
        y = matvec(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = psolve(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0:
            raise SolverError("preconditioner is not positive definite")
        beta = np.sqrt(beta)
        alphas.append(alfa)
        betas.append(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        residuals.append(phibar / beta1)
        if phibar <= tol * beta1:
            converged = True
            break

    if len(alphas) >= 2:
        ritz = eigvalsh_tridiagonal(np.array(alphas), np.array(betas[:-1]))
    elif alphas:
        ritz = np.array(alphas)
    else:
        ritz = np.array([])
    report = SolveReport(
        iterations=itn,
        converged=converged,
        residuals=np.array(residuals),
        ritz_values=ritz,
    )
    return x, report


def solve_minres(sys, tol=1e-10, maxiter=None, rhs=None):
    """Solve an assembled four-field system by preconditioned MINRES.

    Symmetrizes the operator with the field sign flip, runs MINRES with the
    Riesz preconditioner, and undoes the flip. Returns (state, report).
    """
    As, signs = symmetrize(sys)
    precond = build_preconditioner(sys)
    b = sys.rhs if rhs is None else rhs
    yvec, report = minres(As, b, precond=precond, tol=tol, maxiter=maxiter)
    return sys.state_from_vector(signs * yvec), report


@dataclass
class SweepRecord:
    level: int
    n: int
    h: float
    mu: float
    lam: float
    alpha: float
    c0: float
    K: float
    dt: float
    iterations: int
    converged: bool
    ritz_neg: tuple
    ritz_pos: tuple
    condition: float


def parameter_sweep(
    mu_values=(1e-6, 1.0, 1e6),
    lam_values=(0.0, 1.0, 1e6),
    alpha_values=(0.0, 0.5, 1.0),
    c0_values=(0.0, 1.0),
    K_values=(1e-6, 1.0, 1e6),
    dt_values=(1e-6, 1.0),
    levels=(4, 8, 16),
    family=1,
    tol=1e-10,
    maxiter=400,
    seed=0,
    progress=None,
):
    """Measure MINRES iteration counts over a grid of material parameters.

    One unit-square mesh per level; operator blocks are assembled once per
    level and reused for every parameter combination. The right-hand side is
    a fixed seeded random vector per level, so counts are reproducible.
    Returns a list of SweepRecord.
    """
    rng = np.random.default_rng(seed)
    level_data = []
    for lvl, n in enumerate(levels):
        mesh = unit_square_mesh(n)
        bc = all_natural_bc(mesh)
        spaces = build_biot_spaces(mesh, family, bc)
        blocks = operator_blocks(spaces)
        ndof = sum(spaces[k].ndof for k in "ruqp")
        rhs = rng.standard_normal(ndof)
        h = mesh_stats(mesh)[0]
        level_data.append((lvl, n, h, mesh, bc, spaces, blocks, rhs))

    records = []
    combos = list(itertools.product(mu_values, lam_values, alpha_values, c0_values, K_values, dt_values))
    for lvl, n, h, mesh, bc, spaces, blocks, rhs in level_data:
        for i, (mu, lam, alpha, c0, K, dt) in enumerate(combos):
            params = MaterialParams(mu=mu, lam=lam, alpha=alpha, c0=c0, K=K, dt=dt)
            sys = assemble_biot(mesh, family, params, bc, blocks=blocks, spaces=spaces)
            As, signs = symmetrize(sys)
            precond = build_preconditioner(sys)
            _, report = minres(As, rhs, precond=precond, tol=tol, maxiter=maxiter)
            neg, pos = report.ritz_intervals
            records.append(
                SweepRecord(
                    level=lvl,
                    n=n,
                    h=h,
                    mu=mu,
                    lam=lam,
                    alpha=alpha,
                    c0=c0,
                    K=K,
                    dt=dt,
                    iterations=report.iterations,
                    converged=report.converged,
                    ritz_neg=neg,
                    ritz_pos=pos,
                    condition=report.condition_estimate,
                )
            )
            if progress is not None:
                progress(lvl, i, len(combos), records[-1])
    return records
