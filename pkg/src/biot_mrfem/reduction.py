"""Static condensation of the lumped four-field system onto (u, p).

With the vertex quadrature rule the rotation and flux mass matrices are block
diagonal by mesh vertex, so both can be eliminated exactly. The remaining
system couples displacement and pressure only; rotation and flux are recovered
afterwards by cheap local solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .quadrature import blockwise_inverse
from .spaces import SpaceError
from .system import BlockSystem, SolverError, direct_solve


class ReductionError(ValueError):
    """Raised when a system does not admit vertexwise elimination."""


@dataclass
class CondensedSystem:
    """The (u, p) Schur complement of a lumped four-field system."""

    parent: BlockSystem
    matrix: sp.csr_matrix
    rhs: np.ndarray
    A_rr_inv: sp.csr_matrix
    A_qq_inv: sp.csr_matrix
    A_ru: sp.csr_matrix  # BC-masked (r, u) block of the parent, i.e. -Bhat_r^T
    A_qp: sp.csr_matrix  # BC-masked (q, p) block, i.e. -delta * Bhat_q^T
    f_r: np.ndarray
    f_q: np.ndarray

    @property
    def n_u(self):
        return self.parent.spaces["u"].ndof

    @property
    def n_p(self):
        return self.parent.spaces["p"].ndof


def condense(sys):
    """Eliminate rotation and flux from a lumped family-2 system.

    Requires both eliminated mass matrices to be vertex-block diagonal, which
    holds exactly when the system was assembled with the vertex rule and the
    flux space has vertex-associated DOFs (BDM1).
    """
    if not sys.lumped:
        raise ReductionError("condensation requires a vertex-lumped system")
    if "r" not in sys.lumped_partitions or "q" not in sys.lumped_partitions:
        raise ReductionError(
            "condensation requires vertex-block mass matrices for rotation and flux"
        )

    sl = sys.component_slices()
    A = sys.matrix
    # blocks sliced from the BC-applied operator, so essential DOFs stay decoupled
    A_rr = A[sl["r"], sl["r"]]
    A_uu = A[sl["u"], sl["u"]]
    A_qq = A[sl["q"], sl["q"]]
    A_pp = A[sl["p"], sl["p"]]
    Bhat_r = A[sl["u"], sl["r"]]
    A_ru = A[sl["r"], sl["u"]]  # equals -Bhat_r^T after masking
    Bhat_uT = A[sl["u"], sl["p"]]  # already carries the factor -alpha
    Bhat_u = A[sl["p"], sl["u"]]
    A_qp = A[sl["q"], sl["p"]]  # carries the factor -delta
    Bhat_q = A[sl["p"], sl["q"]]

    A_rr_inv = blockwise_inverse(A_rr, sys.lumped_partitions["r"])
    A_qq_inv = blockwise_inverse(A_qq, sys.lumped_partitions["q"])

    S_uu = (A_uu + Bhat_r @ A_rr_inv @ (-A_ru)).tocsr()
    S_pp = (A_pp + Bhat_q @ A_qq_inv @ (-A_qp)).tocsr()
    matrix = sp.bmat([[S_uu, Bhat_uT], [Bhat_u, S_pp]], format="csr")

    f_r = sys.rhs[sl["r"]]
    f_u = sys.rhs[sl["u"]]
    f_q = sys.rhs[sl["q"]]
    f_p = sys.rhs[sl["p"]]
    rhs = np.concatenate(
        [f_u - Bhat_r @ (A_rr_inv @ f_r), f_p - Bhat_q @ (A_qq_inv @ f_q)]
    )

    return CondensedSystem(
        parent=sys,
        matrix=matrix,
        rhs=rhs,
        A_rr_inv=A_rr_inv,
        A_qq_inv=A_qq_inv,
        A_ru=A_ru.tocsr(),
        A_qp=A_qp.tocsr(),
        f_r=f_r,
        f_q=f_q,
    )


def recover(cond, u, p):
    """Back-substitute rotation and flux from a condensed (u, p) solution.

    The eliminated rows read A_rr r + A_ru u = f_r and A_qq q + A_qp p = f_q.
    """
    r = cond.A_rr_inv @ (cond.f_r - cond.A_ru @ u)
    q = cond.A_qq_inv @ (cond.f_q - cond.A_qp @ p)
    return r, q


def solve_condensed(sys):
    """Condense, solve the reduced system directly, and recover all four fields.

    Returns (state, condensed_system).
    """
    cond = condense(sys)
    vec = direct_solve(cond.matrix, cond.rhs)
    u = vec[: cond.n_u]
    p = vec[cond.n_u :]
    r, q = recover(cond, u, p)
    full = np.concatenate([r, u, q, p])
    return sys.state_from_vector(full), cond
