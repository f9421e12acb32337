import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import null_space

from models import random_chain_case
from oracles import ID, SX, SY, SZ, correlation, random_density, random_hermitian
from penaltyshield.model import (
    LocalityMetadata,
    LocalTerm,
    build_hamiltonian,
    equilibrium_state,
    locality_metadata,
)
from penaltyshield.operator_core import herm_eig, op_norm, projector
from penaltyshield.spectral import (
    NonEquilibriumError,
    ac_power,
    autocorrelation,
    counting_bound,
    cross_spectrum_lines,
    cumulative_psd,
    diag_component,
    equilibrium_powers,
    lines_autocorrelation,
    make_lines,
    moment,
    nested_commutator_norm,
    psd_lines,
    sign_flattened,
    truncated_exp,
    verify_theorem3,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
DELTA = 1.3


def _line_dict(lines):
    return {round(f, 9): w for f, w in zip(lines.frequencies, lines.weights)}


def test_autocorrelation_examples():
    rng = np.random.default_rng(0)
    h = random_hermitian(rng, 4)
    rho = equilibrium_state(h, ("thermal", 0.5))
    for t in (0.0, 0.7, 3.1):
        assert autocorrelation(h, rho, np.eye(4), t) == pytest.approx(1.0)
    b = random_hermitian(rng, 4)
    rho0 = random_density(rng, 4)
    val = np.trace(rho0 @ b @ b).real
    for t in (0.0, 2.0):
        assert autocorrelation(np.zeros((4, 4)), rho0, b, t) == pytest.approx(val)
    hq = DELTA / 2 * SZ
    for t in (0.0, 0.4, 2.5):
        assert autocorrelation(hq, ID / 2, SX, t) == pytest.approx(math.cos(DELTA * t), abs=1e-12)


def test_autocorrelation_conjugate_symmetry_and_oracle():
    rng = np.random.default_rng(1)
    h = random_hermitian(rng, 5)
    rho = equilibrium_state(h, ("thermal", 0.8))
    b = random_hermitian(rng, 5)
    lines = psd_lines(h, rho, b)
    ts = rng.uniform(-20, 20, size=200)
    direct = np.array([correlation(h, rho, b, t) for t in ts])
    assert np.max(np.abs(lines_autocorrelation(lines, ts) - direct)) < 1e-9
    assert np.allclose(lines_autocorrelation(lines, -ts), np.conj(lines_autocorrelation(lines, ts)))


def test_non_equilibrium_state_rejected():
    with pytest.raises(NonEquilibriumError):
        psd_lines(SZ, projector([1, 1]), SX)


def test_psd_examples():
    rng = np.random.default_rng(2)
    rho = random_density(rng, 3)
    b = random_hermitian(rng, 3)
    lines = psd_lines(np.zeros((3, 3)), rho, b)
    assert list(lines.frequencies) == [0.0]
    assert lines.weights[0] == pytest.approx(2 * np.pi * np.trace(rho @ b @ b).real)
    # |0><0| has energy +DELTA/2 under (DELTA/2) Z, so its only line is emission at -DELTA
    lines = psd_lines(DELTA / 2 * SZ, np.diag([1.0, 0.0]), SX)
    assert _line_dict(lines) == pytest.approx({round(-DELTA, 9): 2 * np.pi})
    lines = psd_lines(DELTA / 2 * SZ, np.diag([0.0, 1.0]), SX)
    assert _line_dict(lines) == pytest.approx({round(DELTA, 9): 2 * np.pi})
    lines = psd_lines(DELTA / 2 * SZ, ID / 2, SX)
    assert _line_dict(lines) == pytest.approx({round(-DELTA, 9): np.pi, round(DELTA, 9): np.pi})


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 6))
def test_psd_invariants(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    rho = equilibrium_state(h, ("thermal", float(rng.uniform(0, 2))))
    b = random_hermitian(rng, d) + 1j * random_hermitian(rng, d)
    lines = psd_lines(h, rho, b)
    bn2 = op_norm(b) ** 2
    assert np.all(lines.weights >= 0)
    assert abs(moment(lines, 0) / (2 * np.pi) - np.trace(rho @ b @ b.conj().T).real) < 1e-10 * bn2
    total, dc = equilibrium_powers(h, rho, b)
    assert abs(ac_power(lines) - 2 * np.pi * (total - dc)) < 1e-9 * bn2
    assert np.all(np.diff(lines.frequencies) > lines.merge_tol)
    grid = np.linspace(0, 2.5 * op_norm(h), 40)
    cum = cumulative_psd(lines, grid)
    assert np.all(np.diff(cum) <= 1e-12)
    assert cumulative_psd(lines, 2 * op_norm(h) + 2 * lines.merge_tol + 1e-9) == 0.0


def test_cumulative_psd_examples():
    lines = make_lines([-DELTA, DELTA], [np.pi, np.pi])
    assert cumulative_psd(lines, 0.0) == pytest.approx(2 * np.pi)
    assert cumulative_psd(lines, DELTA / 2) == pytest.approx(2 * np.pi)
    assert cumulative_psd(lines, DELTA) == pytest.approx(2 * np.pi)
    assert cumulative_psd(lines, DELTA + 1e-9) == 0.0
    dc = make_lines([0.0], [2.0])
    assert cumulative_psd(dc, 0.0) == 2.0
    assert cumulative_psd(dc, 1e-12) == 0.0


def test_ac_power_examples():
    rng = np.random.default_rng(3)
    h = np.diag([0.0, 1.0, 2.5])
    conserved = np.diag([0.3, -1.0, 2.0])
    assert ac_power(psd_lines(h, np.eye(3) / 3, conserved)) == 0.0
    assert ac_power(psd_lines(DELTA / 2 * SZ, ID / 2, SX)) == pytest.approx(2 * np.pi)
    off = random_hermitian(rng, 3)
    off = off - np.diag(np.diag(off))
    rho = equilibrium_state(h, ("thermal", 0.3))
    base = ac_power(psd_lines(h, rho, off))
    assert ac_power(psd_lines(h, rho, off + conserved)) == pytest.approx(base, rel=1e-12)


def _commutant_projection(h, a):
    """Orthogonal projection of ``a`` onto operators commuting with ``h``.

    Built from the null space of the superoperator ``X -> [H, X]``; it never
    diagonalises ``h`` itself.
    """
    d = h.shape[0]
    sup = np.kron(h, np.eye(d)) - np.kron(np.eye(d), h.T)
    basis = null_space(sup, rcond=1e-10)
    vec = a.reshape(-1)
    return (basis @ (basis.conj().T @ vec)).reshape(d, d)


def test_diag_component_examples():
    h = np.diag([0.0, 1.0, 1.0, 2.0])
    a = np.diag([1.0, 2.0, 3.0, 4.0]) + 0j
    a[1, 2] = a[2, 1] = 0.5
    dec = herm_eig(h)
    assert np.allclose(diag_component(a, dec), a)
    assert np.allclose(diag_component(SX, herm_eig(SZ)), 0)
    rng = np.random.default_rng(4)
    h = random_hermitian(rng, 4)
    dec = herm_eig(h)
    a = random_hermitian(rng, 4) + 1j * random_hermitian(rng, 4)
    ad = diag_component(a, dec)
    assert np.allclose(diag_component(ad, dec), ad)
    assert np.allclose(ad, _commutant_projection(h, a), atol=1e-9)
    rho = equilibrium_state(h, ("thermal", 0.6))
    oracle = _commutant_projection(h, a)
    assert np.trace(rho @ ad @ ad.conj().T).real == pytest.approx(
        np.trace(rho @ oracle @ oracle.conj().T).real, abs=1e-9)


def test_sign_flattened_examples():
    e = 0.9
    dec = herm_eig(np.diag([0.0, e]))
    assert np.allclose(sign_flattened(SX, dec), [[0, 1], [-1, 0]])
    h = np.diag([0.0, 1.0, 3.0])
    assert np.allclose(sign_flattened(np.diag([1.0, 2.0, 5.0]), herm_eig(h)), 0)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(4, 8))
def test_sign_flattened_identities(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, d)
    dec = herm_eig(h)
    rho = equilibrium_state(h, ("thermal", float(rng.uniform(0, 1.5))))
    a = random_hermitian(rng, d) + 1j * random_hermitian(rng, d)
    abar = sign_flattened(a, dec)
    ad = diag_component(a, dec)
    scale = op_norm(a) ** 2
    lhs = np.trace(rho @ abar @ abar.conj().T).real
    rhs = np.trace(rho @ a @ a.conj().T).real - np.trace(rho @ ad @ ad.conj().T).real
    assert abs(lhs - rhs) < 1e-9 * scale
    freqs, weights = cross_spectrum_lines(h, rho, a, abar)
    lines = psd_lines(h, rho, a)
    expected = dict(zip(np.round(lines.frequencies, 8), lines.weights * np.sign(lines.frequencies)))
    for f, w in zip(np.round(freqs, 8), weights):
        assert abs(w - expected.get(f, 0.0)) < 1e-9 * scale


def test_nested_commutator_examples():
    rng = np.random.default_rng(5)
    a = random_hermitian(rng, 3)
    assert nested_commutator_norm(np.eye(3), a, 0) == pytest.approx(op_norm(a))
    for n in range(1, 7):
        assert nested_commutator_norm(SZ, SX, n) == pytest.approx(2.0**n)
    h = np.diag([0.0, 1.0, 2.0])
    assert nested_commutator_norm(h, np.diag([3.0, 1.0, 0.0]), 3) == 0.0
    with pytest.raises(ValueError):
        nested_commutator_norm(SZ, SX, 13)


def test_counting_bound_examples():
    meta = LocalityMetadata(j_max=1.0, k=2, r=1, r_b=1, l=math.inf)
    assert counting_bound(1, meta, 1.0) == pytest.approx(8 * 2**0.5)
    assert counting_bound(1, meta, 1.0) == pytest.approx(11.3137, abs=1e-4)
    j = 0.6
    h = build_hamiltonian([LocalTerm.pauli(j, "ZZ", [0, 1])], [2, 2])
    a = np.kron(SX, ID)
    meta = locality_metadata([LocalTerm.pauli(j, "ZZ", [0, 1])], [], {0}, [2, 2], SX)
    assert nested_commutator_norm(h, a, 1) == pytest.approx(2 * j)
    bound = counting_bound(1, LocalityMetadata(j, 2, 1, 1, math.inf), 1.0)
    assert bound == pytest.approx(11.3137 * j, abs=1e-3)
    assert nested_commutator_norm(h, a, 1) <= counting_bound(1, meta, 1.0)
    with pytest.raises(ValueError):
        counting_bound(3, LocalityMetadata(1.0, 2, 1, 1, 2), 1.0)


def test_moment_examples():
    assert moment(make_lines([0.0], [3.0]), 2) == 0.0
    lines = make_lines([-DELTA, DELTA], [np.pi, np.pi])
    assert moment(lines, 2) == pytest.approx(2 * np.pi * DELTA**2)
    assert moment(lines, 0) == pytest.approx(lines.total_power)


def test_truncated_exp_examples():
    assert truncated_exp(0, 3.0) == 1.0
    assert truncated_exp(2, 2.0) == 5.0
    assert truncated_exp(math.inf, 1.0) == pytest.approx(math.e)
    vals = [truncated_exp(l, 1.7) for l in range(12)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= math.exp(1.7)


def test_theorem3_static_bath_trivial():
    b = random_hermitian(np.random.default_rng(6), 4)
    lines = psd_lines(np.zeros((4, 4)), np.eye(4) / 4, b)
    meta = LocalityMetadata(0.0, 1, 1, 0, math.inf)
    total, dc = equilibrium_powers(np.zeros((4, 4)), np.eye(4) / 4, b)
    assert total - dc == pytest.approx(0.0, abs=1e-12)
    rows = verify_theorem3(lines, meta, op_norm(b), total, dc, omegas=np.linspace(0.1, 4, 10))
    assert all(r["pass"] for r in rows)


def test_theorem3_report_rows_and_six_qubit_chain():
    n = 6
    lattice = [2] * n
    rng = np.random.default_rng(11)
    terms = [LocalTerm.pauli(rng.uniform(-1, 1), "XX", [i, i + 1]) for i in range(n - 1)]
    terms += [LocalTerm.pauli(rng.uniform(-1, 1), "ZZ", [i, i + 1]) for i in range(n - 1)]
    terms += [LocalTerm.pauli(rng.uniform(-1, 1), "Z", [i]) for i in range(n)]
    h = build_hamiltonian(terms, lattice)
    b = build_hamiltonian([LocalTerm.pauli(1.0, "X", [0])], lattice)
    rho = np.eye(2**n) / 2**n
    meta = locality_metadata(terms, [], {0}, lattice, SX)
    total, dc = equilibrium_powers(h, rho, b)
    rows = verify_theorem3(psd_lines(h, rho, b), meta, 1.0, total, dc)
    assert {r["check"] for r in rows} == {"moment", "cumulative"}
    assert sum(r["check"] == "moment" for r in rows) == 12
    assert set(rows[0]) == {"check", "n_or_omega", "measured", "bound", "ratio", "pass"}
    assert all(r["ratio"] <= 1 for r in rows)


def test_theorem3_zero_frequency_excludes_dc_line():
    # corpus member whose DC weight alone exceeds the bound at omega = 0
    h, rho, b, meta = random_chain_case(13)
    lines = psd_lines(h, rho, b)
    total, dc = equilibrium_powers(h, rho, b)
    rows = verify_theorem3(lines, meta, op_norm(b), total, dc, omegas=[0.0, 0.5])
    at_zero = next(r for r in rows if r["check"] == "cumulative" and r["n_or_omega"] == 0)
    assert at_zero["measured"] == pytest.approx(ac_power(lines))
    assert cumulative_psd(lines, 0.0) > at_zero["bound"]
    assert all(r["pass"] for r in rows)


@pytest.mark.parametrize("seed", range(4))
def test_counting_bound_holds_on_random_chains(seed):
    h, rho, b, meta = random_chain_case(seed)
    for n in range(int(min(meta.l, 6)) + 1):
        assert nested_commutator_norm(h, b, n) <= counting_bound(n, meta, op_norm(b))


def test_pauli_y_site_operator():
    h = build_hamiltonian([LocalTerm.pauli(1.0, "Y", [1])], [2, 2])
    assert np.allclose(h, np.kron(ID, SY))
