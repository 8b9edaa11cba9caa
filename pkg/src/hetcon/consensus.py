"""Spectral consensus certificate of a diffusively coupled network.

Given the gap index of every edge, the network reaches output consensus
with gain rho, i.e. ||D^T Y||_T <= rho ||D^T W||_T for all T, as soon as::

    gamma_m + alpha * lambda2 > 0

where gamma_m is the smallest gap index, alpha the smallest edge weight
and lambda2 the algebraic connectivity of the unweighted graph. The gain
is rho = kappa * alpha_bar / mu with mu the smallest eigenvalue of
M = Q (gamma_m Psi + Psi D^T D Psi) Q^T and kappa the largest eigenvalue
of Q Q^T, Q being the spanning-tree factor of the incidence matrix D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

import hetcon.log
from hetcon.error import HetconError
from hetcon.graph import (
    incidence_matrix,
    lambda2,
    relabel,
    spanning_tree,
    tree_factor,
)
from hetcon.job.scheduler import parallel_map
from hetcon.lti import ImproperError, near_common_roots
from hetcon.passivity import AnalysisOptions, gap_index

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Mapping, Sequence
    from hetcon.graph import Graph
    from hetcon.lti import RationalFunction
    from hetcon.passivity import GapIndex

logger = hetcon.log.getLogger("consensus")

# Margin under which mu is not considered positive
MU_MARGIN = 1e-9

# Maximum asymmetry tolerated on M before symmetrization
SYMMETRY_TOL = 1e-9


class CertificateError(HetconError):
    pass


@dataclass(frozen=True)
class Network:
    """Nodes 1..n with their transfer functions, coupled along a graph."""

    graph: Graph
    nodes: tuple[RationalFunction, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) != self.graph.n:
            raise CertificateError(
                f"{len(self.nodes)} node functions for a graph of {self.graph.n} nodes",
                origin="Network",
            )
        for idx, h in enumerate(self.nodes, start=1):
            if not h.is_proper:
                raise ImproperError(f"node {idx}: {h!r} is improper", origin="Network")
            for zero, pole in near_common_roots(h):
                logger.warning(
                    "node %d: zero %s and pole %s nearly cancel (kept as is)",
                    idx,
                    zero,
                    pole,
                )

    def node(self, i: int) -> RationalFunction:
        return self.nodes[i - 1]

    def relabel(self, perm: Mapping[int, int]) -> Network:
        """Return the same network with node i renamed perm[i]."""
        nodes: list[RationalFunction | None] = [None] * self.graph.n
        for old, new in perm.items():
            nodes[new - 1] = self.nodes[old - 1]
        return Network(
            graph=relabel(self.graph, perm),
            nodes=tuple(h for h in nodes if h is not None),
        )


@dataclass(frozen=True)
class HeterogeneityProfile:
    """Gap index of every edge and the extreme values used by the certificate."""

    gaps: dict[tuple[int, int], GapIndex]
    gamma_m: float
    alpha_min: float
    alpha_bar: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "edges": [
                {"i": i, "j": j, **gap.to_dict()} for (i, j), gap in self.gaps.items()
            ],
            "gamma_m": self.gamma_m,
            "alpha": self.alpha_min,
            "alpha_bar": self.alpha_bar,
        }


def edge_gap_indices(
    net: Network,
    opts: AnalysisOptions | None = None,
    edges: Sequence[tuple[int, int]] | None = None,
    jobs: int = 1,
) -> dict[tuple[int, int], GapIndex]:
    """Compute the gap index of the selected edges.

    Pairs of identical transfer functions are computed once.

    :param net: the network
    :param opts: numerical settings, AnalysisOptions.load() if None
    :param edges: (i, j) pairs in graph orientation, all edges if None
    :param jobs: maximum number of gap computations run in parallel
    :raise NotGapPassiveError: naming the first failing edge
    """
    if opts is None:
        opts = AnalysisOptions.load()
    if edges is None:
        edges = [(e.i, e.j) for e in net.graph.edges]

    pairs: dict[tuple[RationalFunction, RationalFunction], tuple[int, int]] = {}
    for i, j in edges:
        pairs.setdefault((net.node(i), net.node(j)), (i, j))

    def compute(item: tuple[Any, tuple[int, int]]) -> GapIndex:
        (h_i, h_j), edge = item
        return gap_index(h_i, h_j, opts, edge=edge)

    results = parallel_map(compute, list(pairs.items()), jobs=jobs, label="gap")
    by_pair = dict(zip(pairs.keys(), results))
    return {(i, j): by_pair[(net.node(i), net.node(j))] for i, j in edges}


def heterogeneity_profile(
    net: Network, opts: AnalysisOptions | None = None, jobs: int = 1
) -> HeterogeneityProfile:
    """Return the gap index of every edge with gamma_m, alpha and alpha_bar.

    :param net: the network, with at least one edge
    :param opts: numerical settings, AnalysisOptions.load() if None
    :param jobs: maximum number of gap computations run in parallel
    :raise NotGapPassiveError: naming the first failing edge
    """
    if net.graph.p == 0:
        raise CertificateError("network has no edge", origin="heterogeneity_profile")
    gaps = edge_gap_indices(net, opts, jobs=jobs)
    weights = net.graph.weights
    profile = HeterogeneityProfile(
        gaps=gaps,
        gamma_m=min(gap.lower_bound for gap in gaps.values()),
        alpha_min=float(np.min(weights)),
        alpha_bar=float(np.max(weights)),
    )
    logger.info(
        "gamma_m=%s alpha=%s alpha_bar=%s",
        profile.gamma_m,
        profile.alpha_min,
        profile.alpha_bar,
    )
    return profile


def build_M(Q: np.ndarray, R: np.ndarray, gamma: float, D: np.ndarray) -> np.ndarray:
    """Return Q (gamma R + R D^T D R) Q^T, symmetrized.

    :param Q: (n-1) x p spanning-tree factor
    :param R: p x p positive diagonal matrix, or the vector of its diagonal
    :param gamma: the scalar gamma
    :param D: n x p incidence matrix
    :raise CertificateError: on a nonpositive diagonal entry of R
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = np.diag(R)
    if np.any(np.diag(R) <= 0):
        raise CertificateError(f"R has a nonpositive diagonal {np.diag(R)}", "build_M")
    Qf = np.asarray(Q, dtype=float)
    Df = np.asarray(D, dtype=float)
    M = Qf @ (gamma * R + R @ Df.T @ Df @ R) @ Qf.T
    asymmetry = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if asymmetry > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(M)))):
        logger.warning("M is not symmetric (deviation %s)", asymmetry)
    return (M + M.T) / 2.0


@dataclass(frozen=True)
class PositivityCheck:
    """Predicted and observed positive definiteness of M for a graph."""

    predicted: bool
    actual: bool
    gamma: float
    r: float
    lambda2: float
    min_eig: float
    theta: float
    theta_bound: float

    @property
    def margin(self) -> float:
        """Value of gamma + r lambda2 used for the prediction."""
        return self.gamma + self.r * self.lambda2


def positivity_check(
    g: Graph, R: np.ndarray, gamma: float, root: int = 1
) -> PositivityCheck:
    """Compare the sufficient condition gamma + r lambda2 > 0 with M > 0.

    r is the smallest diagonal entry of R. Also returns the smallest
    nonzero singular value theta of D R^(1/2) and its lower bound
    sqrt(r lambda2).

    :raise CertificateError: when the condition holds but M is not positive
    """
    R = np.asarray(R, dtype=float)
    weights = np.diag(R) if R.ndim == 2 else R
    D = incidence_matrix(g)
    factor = tree_factor(D, spanning_tree(g, root))
    M = build_M(factor.Q, weights, gamma, D)
    min_eig = float(np.linalg.eigvalsh(M)[0])

    r = float(np.min(weights))
    lam2 = lambda2(g)
    predicted = gamma + r * lam2 > 0
    actual = min_eig > 0

    singular_values = np.linalg.svd(
        D.astype(float) @ np.diag(np.sqrt(weights)), compute_uv=False
    )
    theta = float(singular_values[g.n - 2])

    if predicted and not actual and gamma + r * lam2 > 1e-6:
        raise CertificateError(
            f"gamma + r lambda2 = {gamma + r * lam2} > 0 but min eig(M) = {min_eig}",
            origin="positivity_check",
        )
    return PositivityCheck(
        predicted=predicted,
        actual=actual,
        gamma=gamma,
        r=r,
        lambda2=lam2,
        min_eig=min_eig,
        theta=theta,
        theta_bound=math.sqrt(r * lam2),
    )


@dataclass(frozen=True)
class ConsensusCertificate:
    lambda2: float
    gamma_m: float
    alpha_min: float
    alpha_bar: float
    condition_value: float
    certified: bool
    M_tilde: np.ndarray
    mu: float
    kappa: float
    rho: float | None
    root: int
    tree_edges: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda2": self.lambda2,
            "gamma_m": self.gamma_m,
            "alpha": self.alpha_min,
            "alpha_bar": self.alpha_bar,
            "condition_value": self.condition_value,
            "certified": self.certified,
            "mu": self.mu,
            "kappa": self.kappa,
            "rho": self.rho,
            "root": self.root,
            "tree_edges": list(self.tree_edges),
        }


def certify(
    net: Network, profile: HeterogeneityProfile, root: int = 1
) -> ConsensusCertificate:
    """Build the consensus certificate of net.

    An uncertified network is not an error: the certificate then has
    certified=False and rho=None.

    :param net: the network, with at least two nodes
    :param profile: its heterogeneity profile
    :param root: root of the spanning tree used for Q
    """
    g = net.graph
    if g.n < 2:
        raise CertificateError("a certificate needs at least two nodes", "certify")

    D = incidence_matrix(g)
    factor = tree_factor(D, spanning_tree(g, root))
    lam2 = lambda2(g)
    condition_value = profile.gamma_m + profile.alpha_min * lam2

    M_tilde = build_M(factor.Q, g.weights, profile.gamma_m, D)
    mu = float(np.linalg.eigvalsh(M_tilde)[0])
    Qf = factor.Q.astype(float)
    kappa = float(np.linalg.eigvalsh(Qf @ Qf.T)[-1])

    certified = condition_value > 0 and mu > MU_MARGIN
    rho = kappa * profile.alpha_bar / mu if certified else None
    if condition_value > 0 and not certified:  # defensive code
        logger.warning("condition holds but mu=%s is not positive", mu)
    logger.info(
        "lambda2=%s condition=%s mu=%s kappa=%s rho=%s",
        lam2,
        condition_value,
        mu,
        kappa,
        rho,
    )
    return ConsensusCertificate(
        lambda2=lam2,
        gamma_m=profile.gamma_m,
        alpha_min=profile.alpha_min,
        alpha_bar=profile.alpha_bar,
        condition_value=condition_value,
        certified=certified,
        M_tilde=M_tilde,
        mu=mu,
        kappa=kappa,
        rho=rho,
        root=root,
        tree_edges=factor.tree_edges,
    )


@dataclass(frozen=True)
class RootSweep:
    """Certificates obtained with a spanning tree rooted at every node."""

    certificates: tuple[ConsensusCertificate, ...]

    @property
    def best(self) -> ConsensusCertificate | None:
        """Certified certificate with the smallest rho, None if none is."""
        certified = [c for c in self.certificates if c.rho is not None]
        if not certified:
            return None
        return min(certified, key=lambda c: (c.rho, c.root))

    @property
    def min_rho(self) -> float | None:
        best = self.best
        return None if best is None else best.rho

    def to_dict(self) -> dict[str, Any]:
        best = self.best
        return {
            "per_root": [
                {"root": c.root, "rho": c.rho, "mu": c.mu, "kappa": c.kappa}
                for c in self.certificates
            ],
            "min_rho": self.min_rho,
            "best_root": None if best is None else best.root,
        }


def certify_all_roots(net: Network, profile: HeterogeneityProfile) -> RootSweep:
    """Return the certificates for the breadth-first trees of every root."""
    return RootSweep(
        certificates=tuple(
            certify(net, profile, root) for root in range(1, net.graph.n + 1)
        )
    )
