"""
Optimality criteria over information matrices and weighted pose-graphs.

dopt_graph is the decision-time utility: the D-optimality of the full Fisher
information is approximated through the weighted number of spanning trees of
the pose-graph, (|V| * t(G))^(1/|V|), computed in log-space from a Cholesky
factorization of the reduced Laplacian.
"""

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from core.graph import WeightedPoseGraph
from utils.errors import InvalidInputError

EIGEN_FLOOR = 1e-12
PIVOT_FLOOR = 1e-12
SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-9


@dataclass(frozen=True)
class Laplacian:
    m: np.ndarray
    vertex_ids: List[int]


@dataclass(frozen=True)
class FullFim:
    m: np.ndarray
    vertex_ids: List[int]
    dof: int = 3

    def block(self, a: int, b: int) -> np.ndarray:
        """ℓ×ℓ block between two vertex rows (dense indices, not ids)"""
        d = self.dof
        return self.m[a * d:(a + 1) * d, b * d:(b + 1) * d]


def _symmetric_eigenvalues(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > SYMMETRY_RTOL * scale:
        raise InvalidInputError("matrix is not symmetric")
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def kiefer_criterion(M: np.ndarray, p: float) -> float:
    """
    ((1/ℓ) trace(M^p))^(1/p), evaluated on the eigenvalues of M.

    Args:
        M: symmetric PSD matrix
        p: any non-zero real; p = 0 is D-optimality, use dopt_matrix

    Returns:
        The criterion value (eigenvalues are clamped at zero first)
    """
    if p == 0:
        raise InvalidInputError("p = 0 is D-optimality; call dopt_matrix instead")
    eig = _symmetric_eigenvalues(M)
    lam_max = np.abs(eig).max() if eig.size else 0.0
    if eig.size and eig.min() < -PSD_RTOL * lam_max:
        raise InvalidInputError(f"matrix has a negative eigenvalue {eig.min():.3e}")
    if lam_max <= 0.0:
        return 0.0
    # powers of eig / lam_max stay in [0, 1] for p > 0
    ratio = np.clip(eig, 0.0, None) / lam_max
    with np.errstate(divide='ignore', over='ignore'):
        mean = np.mean(ratio ** p)
        if not np.isfinite(mean):
            # p < 0 with a zero eigenvalue: the criterion collapses to zero
            return 0.0
        return float(lam_max * mean ** (1.0 / p))


def topt_matrix(M: np.ndarray) -> float:
    """T-optimality: arithmetic mean of the eigenvalues (p = 1)"""
    return kiefer_criterion(M, 1.0)


def aopt_matrix(M: np.ndarray) -> float:
    """A-optimality: harmonic mean of the eigenvalues (p = -1)"""
    return kiefer_criterion(M, -1.0)


def eopt_matrix(M: np.ndarray) -> float:
    """E-optimality: the p -> -inf limit, i.e. the smallest eigenvalue"""
    eig = _symmetric_eigenvalues(M)
    return float(max(eig.min(), 0.0))


def dopt_matrix(M: np.ndarray) -> float:
    """Geometric mean of the eigenvalues; 0 when any eigenvalue sits at or below the floor"""
    eig = _symmetric_eigenvalues(M)
    lam_max = np.abs(eig).max() if eig.size else 0.0
    if lam_max <= 0.0 or eig.min() <= EIGEN_FLOOR * lam_max:
        return 0.0
    return float(math.exp(np.mean(np.log(eig))))


def dopt_matrices(stack: np.ndarray) -> np.ndarray:
    """dopt_matrix over an (n, l, l) stack of symmetric matrices"""
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise InvalidInputError(f"expected a stack of square matrices, got shape {stack.shape}")
    out = np.zeros(len(stack))
    if len(stack) == 0 or stack.shape[1] == 0:
        return out
    eig = np.linalg.eigvalsh(0.5 * (stack + stack.transpose(0, 2, 1)))
    lam_max = np.abs(eig).max(axis=1)
    ok = (lam_max > 0.0) & (eig.min(axis=1) > EIGEN_FLOOR * lam_max)
    out[ok] = np.exp(np.mean(np.log(eig[ok]), axis=1))
    return out


def weighted_laplacian(g: WeightedPoseGraph) -> Laplacian:
    ids = g.base.vertex_ids
    index = g.base.index_of()
    n = len(ids)
    L = np.zeros((n, n))
    if g.base.edges:
        a = np.array([index[e.i] for e in g.base.edges])
        b = np.array([index[e.k] for e in g.base.edges])
        w = np.asarray(g.weights, dtype=float)
        np.add.at(L, (a, a), w)
        np.add.at(L, (b, b), w)
        np.add.at(L, (a, b), -w)
        np.add.at(L, (b, a), -w)
    return Laplacian(L, ids)


def log_tree_weight(g: WeightedPoseGraph) -> float:
    """
    Natural log of the weighted number of spanning trees t(G).

    Returns -inf when the graph is disconnected (a Cholesky pivot of the reduced
    Laplacian at or below the floor).
    """
    n = g.num_vertices
    if n < 2:
        raise InvalidInputError(f"need at least 2 vertices, got {n}")
    L = weighted_laplacian(g).m
    max_diag = L.diagonal().max()
    if max_diag <= 0.0:
        return -math.inf
    reduced = L[:-1, :-1]
    try:
        chol = np.linalg.cholesky(reduced)
    except np.linalg.LinAlgError:
        return -math.inf
    pivots = chol.diagonal() ** 2
    if pivots.min() <= PIVOT_FLOOR * max_diag:
        return -math.inf
    return float(2.0 * np.sum(np.log(chol.diagonal())))


def dopt_graph(g: WeightedPoseGraph) -> float:
    """(|V| t(G))^(1/|V|), or 0 for a disconnected graph"""
    n = g.num_vertices
    ltw = log_tree_weight(g)
    if ltw == -math.inf:
        return 0.0
    return float(math.exp((math.log(n) + ltw) / n))


def assemble_full_fim(g: WeightedPoseGraph, dof: int = 3) -> FullFim:
    """
    Y = sum_j A_j^T Phi_j A_j with the first vertex anchored by +I.

    Test oracle only; the decision path never builds Y.
    """
    ids = g.base.vertex_ids
    index = g.base.index_of()
    n = len(ids)
    Y = np.zeros((n * dof, n * dof))
    for e in g.base.edges:
        phi = e.info.m
        a, b = index[e.i] * dof, index[e.k] * dof
        Y[a:a + dof, a:a + dof] += phi
        Y[b:b + dof, b:b + dof] += phi
        Y[a:a + dof, b:b + dof] -= phi
        Y[b:b + dof, a:a + dof] -= phi
    if n:
        Y[:dof, :dof] += np.eye(dof)
    return FullFim(Y, ids, dof)
