"""Spin-model construction: local terms, code spaces and locality metadata."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operator_core import (
    MAX_JOINT_DIM,
    PAULI,
    DimensionError,
    as_operator,
    check_hermitian,
    commutator,
    dagger,
    herm_eig,
    op_norm,
    partial_trace,
    tensor,
)

COMMUTE_TOL = 1e-12
BETA_CAP = 1e6


@dataclass(frozen=True)
class LocalTerm:
    """``coefficient * prod_j op_j`` acting on distinct sites.

    Each factor is ``(site, op)`` where ``op`` is a label from
    ``{"I", "X", "Y", "Z", "+", "-"}`` or an explicit ``d x d`` matrix.
    """

    coefficient: float
    factors: tuple
    unrestricted: bool = False

    def __post_init__(self):
        sites = [s for s, _ in self.factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in term factors: {sites}")

    @classmethod
    def pauli(cls, coefficient: float, string: str, sites: Sequence[int], unrestricted=False):
        if len(string) != len(sites):
            raise ValueError("Pauli string and site list differ in length")
        return cls(float(coefficient), tuple(zip((int(s) for s in sites), string)), unrestricted)

    @property
    def support(self) -> frozenset:
        return frozenset(s for s, op in self.factors if not (isinstance(op, str) and op == "I"))

    def local_matrix(self, lattice: Sequence[int]) -> tuple[list, np.ndarray]:
        """The term on its own support: ``(sorted sites, matrix)``."""
        sites = sorted(s for s, _ in self.factors)
        ops = dict(self.factors)
        mat = np.eye(1, dtype=complex)
        for s in sites:
            mat = np.kron(mat, _site_operator(ops[s], lattice[s]))
        return sites, self.coefficient * mat

    def norm(self, lattice: Sequence[int]) -> float:
        return op_norm(self.local_matrix(lattice)[1])


def _site_operator(op, d: int) -> np.ndarray:
    if isinstance(op, str):
        if op not in PAULI:
            raise ValueError(f"unknown single-site operator label {op!r}")
        if d != 2:
            if op == "I":
                return np.eye(d, dtype=complex)
            raise ValueError(f"Pauli label {op!r} on a site of dimension {d}")
        return PAULI[op]
    m = as_operator(op)
    if m.shape[0] != d:
        raise DimensionError(f"custom operator of dim {m.shape[0]} on site of dim {d}")
    return m


def embed(term: LocalTerm, lattice: Sequence[int], max_dim: int = MAX_JOINT_DIM) -> np.ndarray:
    """Embed a local term into the full lattice Hilbert space."""
    total = int(np.prod(lattice)) if len(lattice) else 1
    if total > max_dim:
        raise DimensionError(f"lattice dimension {total} exceeds cap {max_dim}")
    ops = dict(term.factors)
    for s in ops:
        if s < 0 or s >= len(lattice):
            raise IndexError(f"site {s} outside lattice of {len(lattice)} sites")
    mat = np.eye(1, dtype=complex)
    for s, d in enumerate(lattice):
        mat = np.kron(mat, _site_operator(ops[s], d) if s in ops else np.eye(d, dtype=complex))
    return term.coefficient * mat


def build_hamiltonian(terms: Sequence[LocalTerm], lattice: Sequence[int],
                      max_dim: int = MAX_JOINT_DIM) -> np.ndarray:
    total = int(np.prod(lattice)) if len(lattice) else 1
    if total > max_dim:
        raise DimensionError(f"lattice dimension {total} exceeds cap {max_dim}")
    h = np.zeros((total, total), dtype=complex)
    for term in terms:
        h += embed(term, lattice, max_dim)
    return h


@dataclass(frozen=True)
class LocalityMetadata:
    j_max: float
    k: int
    r: int
    r_b: int
    l: float  # int, or math.inf when no unrestricted part exists
    commute_tol: float = COMMUTE_TOL

    def as_dict(self) -> dict:
        return {
            "J_max": self.j_max, "k": self.k, "r": self.r, "R_B": self.r_b,
            "l": "inf" if math.isinf(self.l) else int(self.l),
            "commute_tol": self.commute_tol,
        }


def locality_metadata(restricted: Sequence[LocalTerm], unrestricted: Sequence[LocalTerm],
                      b_support, lattice: Sequence[int], b_operator=None,
                      commute_tol: float = COMMUTE_TOL) -> LocalityMetadata:
    """Measure ``(J_max, k, r, R_B, l)`` of an environment Hamiltonian.

    ``b_support`` is the set of sites the bath operator acts on. ``b_operator``
    gives its local matrix on those sites (sorted order) and enables the
    commutator test for ``R_B``; without it every overlapping term counts.
    ``l`` is the breadth-first distance, in number of restricted terms, from the
    support of B to the union support of the unrestricted terms.
    """
    b_support = frozenset(int(s) for s in b_support)
    restricted = list(restricted)
    j_max = max((t.norm(lattice) for t in restricted), default=0.0)
    k = max((len(t.support) for t in restricted), default=1)
    per_site = {}
    for t in restricted:
        for s in t.support:
            per_site[s] = per_site.get(s, 0) + 1
    r = max(per_site.values(), default=1)

    b_sites = sorted(b_support)
    if b_operator is not None:
        b_operator = as_operator(b_operator)
        if b_operator.shape[0] != int(np.prod([lattice[s] for s in b_sites])):
            raise DimensionError("bath operator does not match its declared support")
    r_b = 0
    for t in restricted:
        if not (t.support & b_support):
            continue
        if b_operator is None or _noncommuting(t, b_operator, b_sites, lattice, commute_tol):
            r_b += 1

    l = _hypergraph_distance(restricted, unrestricted, b_support)
    return LocalityMetadata(float(j_max), int(k), int(r), int(r_b), l, commute_tol)


def _noncommuting(term: LocalTerm, b_mat, b_sites, lattice, tol) -> bool:
    ops_t = dict(term.factors)
    sites = sorted(set(ops_t) | set(b_sites))
    t_full = np.eye(1, dtype=complex)
    for s in sites:
        d = lattice[s]
        t_full = np.kron(t_full, _site_operator(ops_t[s], d) if s in ops_t else np.eye(d))
    t_full = term.coefficient * t_full
    b_full = _embed_on(b_mat, b_sites, sites, lattice)
    return op_norm(commutator(t_full, b_full)) > tol


def _embed_on(mat, mat_sites, sites, lattice) -> np.ndarray:
    """Embed ``mat`` (on ``mat_sites``, sorted) into the ordered site list ``sites``."""
    rest = [s for s in sites if s not in mat_sites]
    d_rest = int(np.prod([lattice[s] for s in rest])) if rest else 1
    full = np.kron(mat, np.eye(d_rest))
    order = list(mat_sites) + rest
    dims = [lattice[s] for s in order]
    n = len(order)
    perm = [order.index(s) for s in sites]
    t = full.reshape(dims + dims).transpose(perm + [p + n for p in perm])
    d = int(np.prod(dims))
    return t.reshape(d, d)


def _hypergraph_distance(restricted, unrestricted, b_support) -> float:
    target = set()
    for t in unrestricted:
        target |= set(t.support)
    if not target:
        return math.inf
    if b_support & target:
        return 0
    # BFS over sites; crossing one restricted term costs one step
    dist = {s: 0 for s in b_support}
    queue = deque(b_support)
    edges = [set(t.support) for t in restricted]
    while queue:
        s = queue.popleft()
        for e in edges:
            if s not in e:
                continue
            for u in e:
                if u not in dist:
                    dist[u] = dist[s] + 1
                    if u in target:
                        return dist[u]
                    queue.append(u)
    return math.inf


@dataclass(frozen=True)
class CodeSpace:
    projector: np.ndarray
    gap: float
    energy_shift: float

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.projector).real))


def ground_code_space(h_s, grouping_tol: float | None = None) -> CodeSpace:
    """Ground subspace of ``h_s``, its gap, and the ground energy to subtract."""
    h_s = as_operator(h_s)
    dec = herm_eig(h_s, grouping_tol)
    if len(dec) < 2:
        raise ValueError("system Hamiltonian has a single level; no penalty gap")
    gap = float(dec.energies[1] - dec.energies[0])
    if gap < 1e-8 * max(op_norm(h_s), 1e-300):
        raise ValueError(f"gap {gap:.3e} too small to act as an energy penalty")
    return CodeSpace(dec.projectors[0], gap, float(dec.energies[0]))


def _is_projector(p: np.ndarray, tol=1e-10) -> bool:
    return (np.max(np.abs(p @ p - p)) <= tol and np.max(np.abs(p - dagger(p))) <= tol)


def check_error_detection(h_i, pi_c, env_dim: int | None = None):
    """Residual of ``(P⊗I) H_I (P⊗I) = P ⊗ O_E`` and the best ``O_E``.

    ``O_E`` is the system-block average of the projected coupling, which
    minimises the Frobenius residual. Returns ``(residual, o_e)`` where the
    residual is an operator norm.
    """
    h_i = as_operator(h_i)
    pi_c = as_operator(pi_c)
    if not _is_projector(pi_c):
        raise ValueError("pi_c is not an orthogonal projector")
    ds = pi_c.shape[0]
    if env_dim is None:
        if h_i.shape[0] % ds:
            raise DimensionError("coupling dimension is not a multiple of the system dimension")
        env_dim = h_i.shape[0] // ds
    big_p = np.kron(pi_c, np.eye(env_dim))
    block = big_p @ h_i @ big_p
    rank = np.trace(pi_c).real
    o_e = partial_trace(block, [ds, env_dim], keep=[1]) / rank
    residual = op_norm(block - np.kron(pi_c, o_e))
    return residual, o_e


def error_detection_holds(h_i, pi_c, tol: float = 1e-10) -> bool:
    residual, _ = check_error_detection(h_i, pi_c)
    return residual <= tol * max(op_norm(h_i), 1e-300)


def equilibrium_state(h_e, spec="maximally_mixed") -> np.ndarray:
    """Stationary environment state, diagonal in the eigenbasis of ``h_e``.

    ``spec`` is ``"maximally_mixed"``, ``("thermal", beta)``, or
    ``("populations", p)`` with one population per eigenvalue in ascending order.
    """
    h_e = as_operator(h_e)
    check_hermitian(h_e, name="h_e")
    d = h_e.shape[0]
    if spec == "maximally_mixed" or spec == ("maximally_mixed",):
        return np.eye(d, dtype=complex) / d
    kind, value = spec
    w, v = np.linalg.eigh((h_e + dagger(h_e)) / 2)
    if kind == "thermal":
        beta = float(value)
        if not np.isfinite(beta):
            raise ValueError("beta must be finite")
        beta = min(beta, BETA_CAP)
        logits = -beta * (w - w[0])
        p = np.exp(logits - logits.max())
        p /= p.sum()
    elif kind == "populations":
        p = np.asarray(value, dtype=float)
        if p.shape != (d,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-10:
            raise ValueError("populations must be nonnegative, one per level, summing to 1")
    else:
        raise ValueError(f"unknown equilibrium spec {kind!r}")
    return (v * p) @ dagger(v)


@dataclass
class PenaltyModel:
    """System + environment + product coupling(s), ready for simulation.

    ``couplings`` is a list of ``(S_i, B_i)`` pairs; the perturbative tools
    need exactly one.
    """

    h_s: np.ndarray
    h_e: np.ndarray
    couplings: list
    rho_e: np.ndarray
    meta: LocalityMetadata | None = None
    grouping_tol: float | None = None
    label: str = ""
    code: CodeSpace = field(init=False)

    def __post_init__(self):
        self.h_s = as_operator(self.h_s)
        self.h_e = as_operator(self.h_e)
        self.couplings = [(as_operator(s), as_operator(b)) for s, b in self.couplings]
        self.rho_e = as_operator(self.rho_e)
        self.code = ground_code_space(self.h_s, self.grouping_tol)

    @property
    def dims(self) -> tuple:
        return (self.h_s.shape[0], self.h_e.shape[0])

    @property
    def s_op(self) -> np.ndarray:
        self._require_single()
        return self.couplings[0][0]

    @property
    def b_op(self) -> np.ndarray:
        self._require_single()
        return self.couplings[0][1]

    def _require_single(self):
        if len(self.couplings) != 1:
            raise ValueError("this operation needs a single product coupling S ⊗ B")

    def h_s_shifted(self) -> np.ndarray:
        return self.h_s - self.code.energy_shift * np.eye(self.dims[0])

    def h_i(self) -> np.ndarray:
        return sum(tensor(s, b) for s, b in self.couplings)

    def h_total(self, lam: float) -> np.ndarray:
        ds, de = self.dims
        return (np.kron(self.h_s, np.eye(de)) + lam * self.h_i()
                + np.kron(np.eye(ds), self.h_e))

    def with_penalty_scale(self, scale: float) -> "PenaltyModel":
        return PenaltyModel(scale * self.h_s, self.h_e, self.couplings, self.rho_e,
                            self.meta, self.grouping_tol, self.label)

    def code_block_hsq_norm(self) -> float:
        """``||P H_I^2 P||``, factorised as ``||P S S^† P|| * ||B||^2``."""
        p = self.code.projector
        s, b = self.s_op, self.b_op
        return op_norm(p @ s @ dagger(s) @ p) * op_norm(b) ** 2
