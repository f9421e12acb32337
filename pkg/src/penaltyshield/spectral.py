"""Equilibrium power spectral densities of finite baths as exact line spectra.

Convention: for ``A(t) = e^{iHt} A e^{-iHt}`` the PSD is

    p_A(w) = ∫ dt e^{iwt} Tr(rho A(t) A^†) = sum_k w_k δ(w - w_k),

with a line at ``w = E_b - E_a`` of weight ``2π p_a |<a|A|b>|^2``. A bath
sitting in its ground state therefore only has lines at ``w >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LocalityMetadata
from .operator_core import (
    SpectralDecomposition,
    as_operator,
    check_hermitian,
    commutator,
    dagger,
    herm_eig,
    op_norm,
)

EQUILIBRIUM_TOL = 1e-10
NESTED_MAX_N = 12


class NonEquilibriumError(ValueError):
    """The supplied environment state does not commute with its Hamiltonian."""


@dataclass(frozen=True)
class SpectralLineSet:
    """Weighted frequency lines; DC lines are snapped to exactly 0."""

    frequencies: np.ndarray
    weights: np.ndarray
    merge_tol: float

    def __len__(self):
        return len(self.frequencies)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.weights))

    def as_records(self) -> list:
        return [{"omega": float(w), "weight": float(p)}
                for w, p in zip(self.frequencies, self.weights)]

    def shifted(self, delta: float) -> "SpectralLineSet":
        return SpectralLineSet(self.frequencies + delta, self.weights, self.merge_tol)


def make_lines(frequencies, weights, merge_tol: float = 0.0) -> SpectralLineSet:
    """Build a line set, merging frequencies closer than ``merge_tol``."""
    f = np.asarray(frequencies, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if f.shape != w.shape:
        raise ValueError("frequencies and weights differ in length")
    if np.any(w < 0):
        raise ValueError("line weights must be nonnegative")
    order = np.argsort(f, kind="stable")
    f, w = f[order], w[order]
    out_f, out_w = [], []
    start = 0
    for i in range(1, len(f) + 1):
        if i == len(f) or f[i] - f[i - 1] > merge_tol:
            seg_w = w[start:i]
            tot = seg_w.sum()
            center = float(np.average(f[start:i], weights=seg_w)) if tot > 0 else float(f[start:i].mean())
            out_f.append(center)
            out_w.append(float(tot))
            start = i
    out_f = np.array(out_f)
    out_w = np.array(out_w)
    out_f[np.abs(out_f) <= merge_tol] = 0.0
    return SpectralLineSet(out_f, out_w, float(merge_tol))


def _joint_basis(h, rho, tol=EQUILIBRIUM_TOL):
    """Basis diagonalising both ``h`` and the commuting state ``rho``.

    Returns ``(energies per vector, V, populations)``; energies within one
    degenerate level are identical.
    """
    h = as_operator(h)
    rho = as_operator(rho)
    check_hermitian(h, name="environment Hamiltonian")
    scale = max(op_norm(h), 1.0)
    if op_norm(commutator(rho, h)) > tol * scale:
        raise NonEquilibriumError("environment state does not commute with its Hamiltonian")
    dec = herm_eig(h)
    energies, vecs, pops = [], [], []
    for e, u in zip(dec.energies, dec.vectors):
        block = dagger(u) @ rho @ u
        p, w = np.linalg.eigh((block + dagger(block)) / 2)
        vecs.append(u @ w)
        pops.extend(p)
        energies.extend([e] * u.shape[1])
    return np.array(energies), np.hstack(vecs), np.clip(np.array(pops), 0.0, None), dec


def psd_lines(h_e, rho_e, b, merge_tol: float | None = None) -> SpectralLineSet:
    """Exact PSD of ``b`` in the stationary state ``rho_e`` of ``h_e``."""
    b = as_operator(b)
    energies, v, pops, _ = _joint_basis(h_e, rho_e)
    if merge_tol is None:
        merge_tol = 1e-9 * max(op_norm(h_e), 1e-300)
    bb = dagger(v) @ b @ v
    weights = 2 * np.pi * pops[:, None] * np.abs(bb) ** 2
    freqs = energies[None, :] - energies[:, None]
    keep = weights > 0
    return make_lines(freqs[keep], weights[keep], merge_tol)


def lines_autocorrelation(lines: SpectralLineSet, t):
    """``Tr(rho B(t) B^†) = sum_k (w_k / 2π) e^{-i w_k t}`` (array-friendly in ``t``)."""
    t = np.asarray(t, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(t, lines.frequencies))
    return phase @ (lines.weights / (2 * np.pi))


def autocorrelation(h_e, rho_e, b, t):
    """Bath autocorrelation ``Tr(rho B(t) B^†)`` evaluated through the line set.

    For Hermitian ``b`` this is ``C_B(t)``; ``C_B(-t) = conj(C_B(t))``.
    """
    return lines_autocorrelation(psd_lines(h_e, rho_e, b), t)


def autocorrelation_direct(h_e, rho_e, b, t) -> complex:
    """Matrix evaluation of ``Tr(rho e^{iHt} B e^{-iHt} B^†)``."""
    h_e = as_operator(h_e)
    w, v = np.linalg.eigh(h_e)
    u = (v * np.exp(-1j * w * t)) @ dagger(v)
    b = as_operator(b)
    return complex(np.trace(as_operator(rho_e) @ dagger(u) @ b @ u @ dagger(b)))


def cumulative_psd(lines: SpectralLineSet, omega):
    """Total weight of lines with ``|w_k| >= |omega|``."""
    om = np.abs(np.asarray(omega, dtype=float))
    absf = np.abs(lines.frequencies)
    res = (absf[None, :] >= om.reshape(-1, 1)) @ lines.weights
    return float(res[0]) if om.ndim == 0 else res.reshape(om.shape)


def ac_power(lines: SpectralLineSet) -> float:
    """Weight outside the DC line."""
    return float(np.sum(lines.weights[lines.frequencies != 0.0]))


def moment(lines: SpectralLineSet, n: int) -> float:
    if n == 0:
        return lines.total_power
    return float(np.sum(np.abs(lines.frequencies) ** n * lines.weights))


def _in_eigenbasis(a, decomp: SpectralDecomposition):
    v = np.hstack(decomp.vectors)
    labels = np.concatenate([[i] * u.shape[1] for i, u in enumerate(decomp.vectors)])
    return v, labels, dagger(v) @ as_operator(a) @ v


def diag_component(a, decomp: SpectralDecomposition) -> np.ndarray:
    """``sum_k P_k A P_k``: the part of ``a`` that commutes with the Hamiltonian."""
    v, labels, aa = _in_eigenbasis(a, decomp)
    mask = labels[:, None] == labels[None, :]
    return v @ (aa * mask) @ dagger(v)


def sign_flattened(a, decomp: SpectralDecomposition) -> np.ndarray:
    """``sum_{k,l} P_k A P_l sign(E_l - E_k)`` (zero-frequency part dropped)."""
    v, labels, aa = _in_eigenbasis(a, decomp)
    e = decomp.energies[labels]
    sgn = np.sign(e[None, :] - e[:, None])
    sgn[labels[:, None] == labels[None, :]] = 0.0
    return v @ (aa * sgn) @ dagger(v)


def cross_spectrum_lines(h, rho, a, b, merge_tol: float | None = None):
    """Lines of ``q_AB(w) = ∫ dt e^{iwt} Tr(rho A(t) B^†)``; weights may be complex."""
    energies, v, pops, _ = _joint_basis(h, rho)
    if merge_tol is None:
        merge_tol = 1e-9 * max(op_norm(h), 1e-300)
    aa = dagger(v) @ as_operator(a) @ v
    bb = dagger(v) @ as_operator(b) @ v
    weights = 2 * np.pi * pops[:, None] * aa * bb.conj()
    freqs = (energies[None, :] - energies[:, None]).ravel()
    weights = weights.ravel()
    order = np.argsort(freqs, kind="stable")
    freqs, weights = freqs[order], weights[order]
    out_f, out_w = [], []
    start = 0
    for i in range(1, len(freqs) + 1):
        if i == len(freqs) or freqs[i] - freqs[i - 1] > merge_tol:
            f = float(freqs[start:i].mean())
            out_f.append(0.0 if abs(f) <= merge_tol else f)
            out_w.append(complex(weights[start:i].sum()))
            start = i
    return np.array(out_f), np.array(out_w)


def nested_commutator(h, a, n: int) -> np.ndarray:
    if n < 0 or n > NESTED_MAX_N:
        raise ValueError(f"nesting depth {n} outside [0, {NESTED_MAX_N}]")
    h = as_operator(h)
    x = as_operator(a)
    for _ in range(n):
        x = h @ x - x @ h
    return x


def nested_commutator_norm(h, a, n: int) -> float:
    """``|| ad_h^n (a) ||`` by iterated commutators."""
    return op_norm(nested_commutator(h, a, n))


def counting_bound(n: int, meta: LocalityMetadata, a_norm: float) -> float:
    """``(4 r k J)^n n! 2^{R/(r k)} ||A||``, valid for ``n <= l``."""
    if n > meta.l:
        raise ValueError(f"counting bound needs n <= l (n={n}, l={meta.l})")
    rk = meta.r * meta.k
    return (4 * rk * meta.j_max) ** n * math.factorial(n) * 2 ** (meta.r_b / rk) * a_norm


def truncated_exp(l, x: float) -> float:
    """``sum_{j=0}^{l} x^j / j!``; ``l = inf`` gives ``exp(x)``."""
    if x < 0:
        raise ValueError("truncated_exp expects x >= 0")
    if math.isinf(x):
        return math.inf
    if math.isinf(l):
        return math.exp(x)
    total, term = 1.0, 1.0
    for j in range(1, int(l) + 1):
        term *= x / j
        total += term
    return total


def equilibrium_powers(h, rho, a) -> tuple[float, float]:
    """``(Tr(rho A A^†), Tr(rho A_diag A_diag^†))`` evaluated from matrices."""
    a = as_operator(a)
    rho = as_operator(rho)
    a_diag = diag_component(a, herm_eig(h))
    total = float(np.trace(rho @ a @ dagger(a)).real)
    dc = float(np.trace(rho @ a_diag @ dagger(a_diag)).real)
    return total, dc


def _check(check, x, measured, bound, rel=1e-9, abs_=1e-13):
    ratio = measured / bound if bound > 0 else (0.0 if measured <= abs_ else math.inf)
    return {
        "check": check, "n_or_omega": x, "measured": float(measured),
        "bound": float(bound), "ratio": float(ratio),
        "pass": bool(measured <= bound * (1 + rel) + abs_),
    }


def verify_theorem3(lines: SpectralLineSet, meta: LocalityMetadata, a_norm: float,
                    total_power: float, diag_power: float, omegas=None,
                    n_max: int = NESTED_MAX_N) -> list:
    """Check the moment and cumulative PSD bounds for a local bath operator.

    ``total_power`` and ``diag_power`` are ``Tr(rho A A^†)`` and
    ``Tr(rho A_diag A_diag^†)``. Moments are checked for
    ``1 <= n <= min(l, n_max)``; the cumulative bound on ``omegas``
    (default: 50 points up to twice the largest line frequency).
    Violations are reported, never raised.
    """
    variance = max(total_power - diag_power, 0.0)
    pref = 2 * np.pi * math.sqrt(variance) * a_norm
    rk = meta.r * meta.k
    fac = 2 ** (meta.r_b / rk)
    report = []
    top = int(min(meta.l, n_max))
    for n in range(1, top + 1):
        bound = pref * fac * (4 * rk * meta.j_max) ** n * math.factorial(n)
        report.append(_check("moment", n, moment(lines, n), bound))
    if omegas is None:
        wmax = float(np.max(np.abs(lines.frequencies), initial=0.0))
        omegas = np.linspace(0.0, 2 * wmax if wmax > 0 else 1.0, 50)
    for om in np.asarray(omegas, dtype=float):
        if meta.j_max > 0:
            denom = truncated_exp(meta.l, abs(om) / (8 * rk * meta.j_max))
        else:
            denom = 1.0 if om == 0 else math.inf
        bound = pref * (fac + 1) / denom
        # the bound holds for |omega| > 0; at omega = 0 it is read as the limit 0+,
        # which leaves out the DC line
        measured = ac_power(lines) if om == 0 else cumulative_psd(lines, om)
        report.append(_check("cumulative", float(om), measured, bound))
    return sorted(report, key=lambda r: (r["check"], r["n_or_omega"]))
