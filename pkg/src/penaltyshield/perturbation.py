"""Second-order (in the coupling) reduced dynamics of a system coupled as S ⊗ B.

All bath information enters through a :class:`SpectralLineSet`. Every time
integral is evaluated line by line in closed form through

    phi_m(a) = ∫_0^1 u^m e^{i a u} du,

computed by a power series for small ``|a|`` and by upward recurrence
otherwise, so no formula is ever evaluated at a removable singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operator_core import (
    SpectralDecomposition,
    anticommutator,
    as_operator,
    commutator,
    dagger,
    expm_hermitian,
    freq_components,
    herm_eig,
    op_norm,
    partial_trace,
)
from .spectral import SpectralLineSet

_SERIES_RADIUS = 4.0
_SERIES_TERMS = 48
# below this |y t| the Gamma kernel switches from a divided difference to a
# series in y; truncation error < 1e-14 relative at the switch point
_DIVDIFF_SWITCH = 0.05
_DIVDIFF_ORDER = 7


def _phi(m: int, a):
    """``∫_0^1 u^m e^{iau} du`` elementwise for real ``a``."""
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape, dtype=complex)
    small = np.abs(a) < _SERIES_RADIUS
    if np.any(small):
        x = 1j * a[small]
        term = np.ones_like(x)
        acc = term / (m + 1)
        for j in range(1, _SERIES_TERMS):
            term = term * x / j
            acc = acc + term / (m + j + 1)
        out[small] = acc
    big = ~small
    if np.any(big):
        x = a[big]
        e = np.exp(1j * x)
        # sinc form of phi_0 is exact for every x
        val = np.exp(0.5j * x) * np.sinc(x / (2 * np.pi))
        for j in range(1, m + 1):
            val = (e - j * val) / (1j * x)
        out[big] = val
    return out


def _g(x, t):
    """``∫_0^t e^{-ixs} ds``."""
    return t * _phi(0, -np.asarray(x, dtype=float) * t)


def _gamma_kernel(x, y, t):
    """``∫_0^t ds1 e^{-i x s1} ∫_0^{s1} e^{i y s2} ds2`` elementwise."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    a = x * t
    b = y * t
    out = np.empty(a.shape, dtype=complex)
    far = np.abs(b) >= _DIVDIFF_SWITCH
    if np.any(far):
        af, bf = a[far], b[far]
        out[far] = (_phi(0, bf - af) - _phi(0, -af)) / (1j * bf)
    near = ~far
    if np.any(near):
        an, bn = a[near], b[near]
        acc = np.zeros(an.shape, dtype=complex)
        coef = np.ones(an.shape, dtype=complex)
        for n in range(_DIVDIFF_ORDER):
            acc += coef / math.factorial(n + 1) * _phi(n + 1, -an)
            coef = coef * 1j * bn
        out[near] = acc
    return t * t * out


def b_coefficient(lines: SpectralLineSet, mu: float, mu_p: float, t: float) -> complex:
    """``b_{mu mu'}(t) = ∫_0^t∫_0^t e^{i(mu' s2 - mu s1)} C_B(s1 - s2) ds1 ds2``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = lines.weights / (2 * np.pi)
    f = lines.frequencies
    return complex(np.sum(c * _g(mu + f, t) * np.conj(_g(mu_p + f, t))))


def gamma(lines: SpectralLineSet, mu1: float, mu2: float, t: float) -> complex:
    """``Gamma_{mu1 mu2}(t) = ∫_0^t ds1 ∫_0^{s1} ds2 e^{i(-mu1 s1 + mu2 s2)} C_B(s2 - s1)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    c = lines.weights / (2 * np.pi)
    f = lines.frequencies
    return complex(np.sum(c * _gamma_kernel(mu1 - f, mu2 - f, t)))


@dataclass(frozen=True)
class BCoefficientTable:
    """``b_{mu mu'}(t)`` as a Hermitian PSD matrix over ``freqs``."""

    freqs: np.ndarray
    matrix: np.ndarray
    t: float

    def __getitem__(self, key):
        mu, mu_p = key
        i = int(np.argmin(np.abs(self.freqs - mu)))
        j = int(np.argmin(np.abs(self.freqs - mu_p)))
        return self.matrix[i, j]


def b_table(lines: SpectralLineSet, freqs, t: float) -> BCoefficientTable:
    freqs = np.asarray(list(freqs), dtype=float)
    c = lines.weights / (2 * np.pi)
    g = _g(np.add.outer(freqs, lines.frequencies), t)  # (n_mu, n_lines)
    mat = (g * c) @ g.conj().T
    return BCoefficientTable(freqs, mat, float(t))


def gamma_table(lines: SpectralLineSet, freqs, t: float) -> np.ndarray:
    freqs = np.asarray(list(freqs), dtype=float)
    c = lines.weights / (2 * np.pi)
    x = freqs[:, None, None] - lines.frequencies[None, None, :]
    y = freqs[None, :, None] - lines.frequencies[None, None, :]
    return np.sum(c * _gamma_kernel(x, y, t), axis=-1)


@dataclass(frozen=True)
class LambShiftData:
    freqs: np.ndarray
    gammas: np.ndarray
    h_coeffs: np.ndarray
    f_ls: np.ndarray
    t: float


def lamb_shift(s_components: dict, lines: SpectralLineSet, t: float,
               herm_tol: float = 1e-10) -> LambShiftData:
    """Lamb-shift Hamiltonian ``F_LS(t) = sum h_{mu1 mu2} S_{mu1}^† S_{mu2}``.

    ``h_{mu1 mu2} = (conj(Gamma_{mu1 mu2}) - Gamma_{mu2 mu1}) / 2i``. The
    coupling constant is not included.
    """
    freqs = np.array(list(s_components), dtype=float)
    ops = list(s_components.values())
    gam = gamma_table(lines, freqs, t)
    h = (gam.conj() - gam.T) / 2j
    dim = ops[0].shape[0] if ops else 0
    f_ls = np.zeros((dim, dim), dtype=complex)
    for i, s1 in enumerate(ops):
        s1d = dagger(s1)
        for j, s2 in enumerate(ops):
            if h[i, j] != 0:
                f_ls += h[i, j] * (s1d @ s2)
    scale = max(op_norm(f_ls), 1e-300)
    if np.max(np.abs(f_ls - dagger(f_ls)), initial=0.0) > herm_tol * max(scale, 1.0):
        raise ArithmeticError("Lamb-shift Hamiltonian is not Hermitian")
    return LambShiftData(freqs, gam, h, (f_ls + dagger(f_ls)) / 2, float(t))


def lamb_shift_unitary(pi_c, f_ls, lam: float) -> np.ndarray:
    """``U_LS = exp(-i lam^2 P F_LS P)``; identity outside the code space."""
    p = as_operator(pi_c)
    block = p @ as_operator(f_ls) @ p
    return expm_hermitian(block, -1j * lam**2)


def phi_map(rho_s, s_components: dict, table: BCoefficientTable) -> np.ndarray:
    """``sum b_{mu mu'} [S_{mu'}^† rho S_mu - {S_mu S_{mu'}^†, rho}/2]``, no secular cut."""
    rho = as_operator(rho_s)
    ops = list(s_components.values())
    freqs = np.array(list(s_components), dtype=float)
    if len(freqs) != len(table.freqs) or not np.allclose(freqs, table.freqs):
        raise ValueError("b table frequencies do not match the operator components")
    out = np.zeros_like(rho)
    for i, s_mu in enumerate(ops):
        for j, s_mup in enumerate(ops):
            bij = table.matrix[i, j]
            if bij == 0:
                continue
            sd = dagger(s_mup)
            out += bij * (sd @ rho @ s_mu - 0.5 * anticommutator(s_mu @ sd, rho))
    return out


def leakage_operator(pi_c, s_components: dict, lines: SpectralLineSet, t: float,
                     e_gap: float, tol: float = 1e-9) -> np.ndarray:
    """``A(t) = sum_{mu >= E_gap} b_{mu mu}(t) P S_mu S_mu^† P``."""
    p = as_operator(pi_c)
    out = np.zeros_like(p)
    for mu, s_mu in s_components.items():
        if mu < e_gap * (1 - tol):
            continue
        out += b_coefficient(lines, mu, mu, t).real * (p @ s_mu @ dagger(s_mu) @ p)
    return out


def _check_in_code(rho, p, tol=1e-10):
    q = np.eye(p.shape[0]) - p
    if np.max(np.abs(q @ rho), initial=0.0) > tol or np.max(np.abs(rho @ q), initial=0.0) > tol:
        raise ValueError("initial state leaks outside the code space")


def predicted_code_block(rho_s, pi_c, s_components: dict, lines: SpectralLineSet,
                         lam: float, t: float, e_gap: float, f_ls=None) -> np.ndarray:
    """Second-order prediction of ``P rho_S(t) P`` for a code-space initial state."""
    rho = as_operator(rho_s)
    p = as_operator(pi_c)
    _check_in_code(rho, p)
    if f_ls is None:
        f_ls = lamb_shift(s_components, lines, t).f_ls
    a_t = leakage_operator(p, s_components, lines, t, e_gap)
    return (rho - 1j * lam**2 * commutator(p @ f_ls @ p, rho)
            - 0.5 * lam**2 * anticommutator(rho, a_t))


def theorem1_operator(s, decomp: SpectralDecomposition, pi_c, lines: SpectralLineSet,
                      t: float, e_gap: float, tol: float = 1e-9) -> np.ndarray:
    """``sum_{E_n >= E_gap} b_n(t) P S P_{E_n} S^† P`` with energies measured from the ground."""
    s = as_operator(s)
    p = as_operator(pi_c)
    e0 = decomp.energies[0]
    out = np.zeros_like(p)
    for e, proj in zip(decomp.energies, decomp.projectors):
        en = e - e0
        if en < e_gap * (1 - tol):
            continue
        out += b_coefficient(lines, en, en, t).real * (p @ s @ proj @ dagger(s) @ p)
    return out


def theorem1_loss(s, decomp: SpectralDecomposition, pi_c, lines: SpectralLineSet,
                  lam: float, t: float, e_gap: float):
    """Worst-case second-order fidelity loss over code states, and the state attaining it.

    Returns ``(loss, psi)`` with ``loss = lam^2 ||sum_n b_n(t) P S P_n S^† P||``.
    """
    m = theorem1_operator(s, decomp, pi_c, lines, t, e_gap)
    m = (m + dagger(m)) / 2
    w, v = np.linalg.eigh(m)
    p = as_operator(pi_c)
    if w[-1] <= 0:
        # no loss anywhere: return any code state
        w2, v2 = np.linalg.eigh(p)
        return 0.0, v2[:, -1]
    return float(lam**2 * w[-1]), v[:, -1]


def first_order_term(h_i, rho_e, h_s, t: float) -> np.ndarray:
    """``∫_0^t U_S(s)^† Tr_E(H_I rho_E) U_S(s) ds`` (coupling constant excluded)."""
    h_s = as_operator(h_s)
    rho_e = as_operator(rho_e)
    ds, de = h_s.shape[0], rho_e.shape[0]
    avg = partial_trace(as_operator(h_i) @ np.kron(np.eye(ds), rho_e), [ds, de], keep=[0])
    w, v = np.linalg.eigh((h_s + dagger(h_s)) / 2)
    x = dagger(v) @ avg @ v
    kern = t * _phi(0, np.subtract.outer(w, w) * t)
    return v @ (x * kern) @ dagger(v)


def second_order_state(rho_s, h_s, s, h_i, rho_e, lines: SpectralLineSet, lam: float,
                       t: float, grouping_tol: float | None = None) -> np.ndarray:
    """Interaction-picture reduced state to second order in ``lam``.

    ``rho - i[lam F_I + lam^2 F_LS, rho] + lam^2 Phi_t(rho)`` for an arbitrary
    initial system state.
    """
    rho = as_operator(rho_s)
    comps = _components(s, h_s, grouping_tol)
    f_i = first_order_term(h_i, rho_e, h_s, t)
    f_ls = lamb_shift(comps, lines, t).f_ls
    table = b_table(lines, comps.keys(), t)
    return rho - 1j * commutator(lam * f_i + lam**2 * f_ls, rho) + lam**2 * phi_map(rho, comps, table)


def _components(s, h_s, grouping_tol=None):
    return freq_components(s, herm_eig(h_s, grouping_tol))
