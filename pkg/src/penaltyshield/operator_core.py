"""Dense operator algebra on finite-dimensional Hilbert spaces.

Operators are plain ``numpy`` complex arrays. Composite spaces always order
subsystems with the system factor slow and the environment factor fast, so
``tensor(a, b)`` is ``np.kron(a, b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_JOINT_DIM = 2**14
HERMITIAN_TOL = 1e-12
PSD_CLAMP = 1e-10


class DimensionError(ValueError):
    """Raised on inconsistent or oversized Hilbert-space dimensions."""


class NotHermitianError(ValueError):
    """Raised when an operator required to be Hermitian is not."""


def as_operator(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def op_norm(a) -> float:
    """Operator (spectral) norm: the largest singular value."""
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(op_norm(a), 1.0)
    return float(np.max(np.abs(a - dagger(a)), initial=0.0)) <= tol * scale


def check_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "operator"):
    if not is_hermitian(a, tol):
        dev = float(np.max(np.abs(a - dagger(a))))
        raise NotHermitianError(f"{name} is not Hermitian (max deviation {dev:.3e})")


def tensor(a, b, max_dim: int = MAX_JOINT_DIM) -> np.ndarray:
    """Kronecker product ``a ⊗ b`` with ``a`` as the slow index."""
    a = as_operator(a)
    b = as_operator(b)
    dim = a.shape[0] * b.shape[0]
    if dim > max_dim:
        raise DimensionError(f"joint dimension {dim} exceeds cap {max_dim}")
    return np.kron(a, b)


def tensor_all(ops: Sequence, max_dim: int = MAX_JOINT_DIM) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = tensor(out, op, max_dim=max_dim)
    return out


def partial_trace(x, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    ``dims`` lists subsystem dimensions in tensor order. The kept subsystems
    stay in their original relative order.
    """
    x = as_operator(x)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != x.shape[0]:
        raise DimensionError(f"dims {dims} do not match operator dimension {x.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = x.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace out from the highest index so earlier axis numbers stay valid
    for count, i in enumerate(sorted(traced, reverse=True)):
        m = n - count
        t = np.trace(t, axis1=i, axis2=i + m)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d_keep, d_keep)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenlevels ``(energy, projector)`` of a Hermitian operator.

    ``vectors[i]`` holds an orthonormal basis (as columns) of level ``i``.
    """

    energies: np.ndarray
    projectors: tuple
    vectors: tuple
    grouping_tol: float

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def __len__(self):
        return len(self.energies)

    @property
    def levels(self):
        return list(zip(self.energies, self.projectors))

    def reconstruct(self) -> np.ndarray:
        return sum(e * p for e, p in self.levels)

    def bohr_frequencies(self) -> np.ndarray:
        e = self.energies
        return np.unique(np.round((e[None, :] - e[:, None]).ravel(), 15))


def herm_eig(h, grouping_tol: float | None = None) -> SpectralDecomposition:
    """Spectral decomposition with near-degenerate eigenvalues merged.

    Consecutive sorted eigenvalues whose gap is at most ``grouping_tol`` land in
    the same level (single-linkage). The level energy is the mean of its members.
    ``grouping_tol`` defaults to ``1e-9 * op_norm(h)``.
    """
    h = as_operator(h)
    check_hermitian(h, name="h")
    h = (h + dagger(h)) / 2
    w, v = np.linalg.eigh(h)
    if grouping_tol is None:
        grouping_tol = 1e-9 * max(float(np.max(np.abs(w), initial=0.0)), 1e-300)
    groups = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] <= grouping_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    energies = np.array([w[g].mean() for g in groups])
    vecs = tuple(v[:, g] for g in groups)
    projs = tuple(u @ dagger(u) for u in vecs)
    return SpectralDecomposition(energies, projs, vecs, float(grouping_tol))


def freq_components(s, decomp: SpectralDecomposition, prune: float = 1e-12,
                    merge_tol: float | None = None) -> dict:
    """Split ``s`` into Bohr-frequency components ``S_mu``.

    ``S_mu = sum_n P_n S P_m`` over level pairs with ``E_m - E_n = mu``, so that
    ``e^{iHt} S e^{-iHt} = sum_mu e^{-i mu t} S_mu``. Frequencies closer than
    ``merge_tol`` (default: the decomposition's grouping tolerance) are merged.
    Components with all entries below ``prune * ||S||`` are dropped. Keys are
    floats sorted ascending.
    """
    s = as_operator(s)
    if s.shape[0] != decomp.dim:
        raise DimensionError(f"operator dim {s.shape[0]} != decomposition dim {decomp.dim}")
    if merge_tol is None:
        merge_tol = decomp.grouping_tol
    e = decomp.energies
    pairs = []
    for n in range(len(e)):
        for m in range(len(e)):
            pairs.append((e[m] - e[n], n, m))
    pairs.sort(key=lambda p: p[0])
    # group pair frequencies
    clusters = []
    for mu, n, m in pairs:
        if clusters and mu - clusters[-1][-1][0] <= merge_tol:
            clusters[-1].append((mu, n, m))
        else:
            clusters.append([(mu, n, m)])
    snorm = op_norm(s)
    out = {}
    for cl in clusters:
        comp = np.zeros_like(s)
        for _, n, m in cl:
            comp += decomp.projectors[n] @ s @ decomp.projectors[m]
        if snorm == 0 or np.max(np.abs(comp)) <= prune * snorm:
            continue
        mu = float(np.mean([c[0] for c in cl]))
        if abs(mu) <= merge_tol:
            mu = 0.0
        out[mu] = comp
    return dict(sorted(out.items()))


def validate_density(rho, tol: float = PSD_CLAMP) -> np.ndarray:
    """Check that ``rho`` is a density matrix and return its Hermitian part."""
    rho = as_operator(rho)
    check_hermitian(rho, tol=1e-10, name="density matrix")
    rho = (rho + dagger(rho)) / 2
    tr = float(np.trace(rho).real)
    if abs(tr - 1) > tol:
        raise ValueError(f"density matrix trace {tr} differs from 1")
    if np.linalg.eigvalsh(rho)[0] < -tol:
        raise ValueError("density matrix has a negative eigenvalue")
    return rho


def _psd_sqrt(a: np.ndarray, clamp: float) -> np.ndarray:
    a = (a + dagger(a)) / 2
    w, v = np.linalg.eigh(a)
    if w.size and w[0] < -clamp:
        raise ValueError(f"operator is not positive semidefinite (eigenvalue {w[0]:.3e})")
    # eigenvalues at round-off level would otherwise contribute sqrt(eps) noise
    floor = 64 * np.finfo(float).eps * max(float(w[-1]), 0.0) if w.size else 0.0
    w = np.where(w > floor, w, 0.0)
    return (v * np.sqrt(w)) @ dagger(v)


def uhlmann_fidelity(s1, s2, clamp: float = PSD_CLAMP) -> float:
    """Uhlmann fidelity ``Tr sqrt(sqrt(s1) s2 sqrt(s1))`` of two PSD operators.

    Evaluated as the trace norm of ``sqrt(s1) sqrt(s2)``, which is symmetric in
    its arguments by construction. Eigenvalues in ``[-clamp, 0)`` are treated
    as zero; anything more negative raises ``ValueError``.
    """
    s1 = as_operator(s1)
    s2 = as_operator(s2)
    if s1.shape != s2.shape:
        raise DimensionError("fidelity arguments have different shapes")
    m = _psd_sqrt(s1, clamp) @ _psd_sqrt(s2, clamp)
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def expm_hermitian(h: np.ndarray, coeff: complex) -> np.ndarray:
    """``exp(coeff * h)`` for Hermitian ``h`` via its eigendecomposition."""
    h = (h + dagger(h)) / 2
    w, v = np.linalg.eigh(h)
    return (v * np.exp(coeff * w)) @ dagger(v)


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "+": np.array([[0, 1], [0, 0]], dtype=complex),  # raising |1> -> |0>
    "-": np.array([[0, 0], [1, 0]], dtype=complex),
}
