"""Acceptance criteria, one test each, at their stated tolerances and time limits.

Every test prints a single ``criterion N: PASS|FAIL`` line with the measured
numbers before asserting, so ``pytest -v`` shows the outcome of each criterion
even when an assertion fails.
"""

import time

import numpy as np
import pytest

from models import (
    chain6_config,
    qubit_model,
    random_chain_case,
    static_bath,
    two_codeword_model,
)
from oracles import b_quadrature, gamma_quadrature
from penaltyshield.cli import build_model, main, validate_config
from penaltyshield.dynamics import run_experiment
from penaltyshield.operator_core import herm_eig, op_norm
from penaltyshield.perturbation import b_coefficient, b_table, gamma, theorem1_loss
from penaltyshield.spectral import (
    counting_bound,
    equilibrium_powers,
    make_lines,
    nested_commutator_norm,
    psd_lines,
    verify_theorem3,
)
from penaltyshield.suppression_bounds import calibrate_slack, verify_theorem2

CORPUS_SEEDS = range(20)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, elapsed, limit, detail):
        in_time = limit is None or elapsed < limit
        status = "PASS" if ok and in_time else "FAIL"
        budget = "no limit" if limit is None else f"limit {limit} s"
        with capsys.disabled():
            print(f"\ncriterion {number}: {status} ({elapsed:.2f} s, {budget}) {detail}")
    return emit


def test_criterion_1_theorem1_equality(verdict):
    start = time.perf_counter()
    e_gap = 4.0
    model = qubit_model(e_gap)
    lines = psd_lines(model.h_e, model.rho_e, model.b_op)
    decomp = herm_eig(model.h_s_shifted())
    p = model.code.projector
    times = np.linspace(0, 20 / e_gap, 21)
    lams = (0.02, 0.01, 0.005)
    residuals, cs = [], []
    for lam in lams:
        rec = run_experiment(model, lam, times, [1, 0], keep_states=False, lines=lines)
        pred = [theorem1_loss(model.s_op, decomp, p, lines, lam, t, e_gap)[0] for t in times]
        r = np.max(np.abs((1 - np.asarray(rec.leakages)) - np.asarray(pred)))
        residuals.append(r)
        cs.append(r / lam**3)
    ratios = [residuals[0] / residuals[1], residuals[1] / residuals[2]]
    c_stable = max(cs) / min(cs) <= 2
    ratios_ok = all(6 <= x <= 12 for x in ratios)
    elapsed = time.perf_counter() - start
    verdict(1, c_stable and ratios_ok, elapsed, 10,
            f"residuals={[f'{r:.3e}' for r in residuals]} "
            f"c={[f'{c:.4g}' for c in cs]} halving ratios={[f'{x:.3f}' for x in ratios]}")
    assert c_stable, f"fitted c not stable within 2x: {cs}"
    assert ratios_ok, f"halving ratios outside [6, 12]: {ratios}"
    assert elapsed < 10


def test_criterion_2_lamb_shift_correction(verdict):
    start = time.perf_counter()
    model = two_codeword_model(20.0)
    lam = 0.02
    times = np.linspace(0, 1000, 21)
    psi = np.array([1, 1, 0, 0]) / np.sqrt(2)
    lines = psd_lines(model.h_e, model.rho_e, model.b_op)
    rec = run_experiment(model, lam, times, psi, keep_states=False, lines=lines)
    cal = calibrate_slack(model, lam, times, psi, lines=lines)
    raw, cor = rec.raw_loss[-1], rec.corrected_loss[-1]
    agree = np.max(np.abs(rec.corrected_loss - rec.leakage_loss))
    ok = raw >= 3 * cor and agree <= cal.c * lam**3
    elapsed = time.perf_counter() - start
    verdict(2, ok, elapsed, 10,
            f"raw loss={raw:.3e} corrected loss={cor:.3e} ratio={raw / cor:.1f} "
            f"|corrected - leakage|={agree:.3e} c*lam^3={cal.c * lam**3:.3e}")
    assert raw >= 3 * cor
    assert agree <= cal.c * lam**3
    assert elapsed < 10


def _corpus():
    for seed in CORPUS_SEEDS:
        yield (seed, *random_chain_case(seed))


def test_criterion_3_psd_bounds(verdict):
    start = time.perf_counter()
    violations, worst, checked = 0, 0.0, 0
    for _, h_e, rho_e, b, meta in _corpus():
        lines = psd_lines(h_e, rho_e, b)
        total, diag = equilibrium_powers(h_e, rho_e, b)
        omegas = np.linspace(0, 2 * op_norm(h_e), 50)
        rows = verify_theorem3(lines, meta, op_norm(b), total, diag, omegas, n_max=6)
        checked += len(rows)
        violations += sum(not r["pass"] for r in rows)
        worst = max(worst, max(r["ratio"] for r in rows))
    elapsed = time.perf_counter() - start
    ok = violations == 0 and worst <= 1 + 1e-9
    verdict(3, ok, elapsed, 60, f"checks={checked} violations={violations} worst ratio={worst:.4g}")
    assert violations == 0
    assert worst <= 1 + 1e-9
    assert elapsed < 60


def test_criterion_4_counting_lemma(verdict):
    start = time.perf_counter()
    violations, worst, checked = 0, 0.0, 0
    for _, h_e, _, b, meta in _corpus():
        b_norm = op_norm(b)
        for n in range(1, int(min(meta.l, 6)) + 1):
            lhs = nested_commutator_norm(h_e, b, n)
            rhs = counting_bound(n, meta, b_norm)
            checked += 1
            violations += lhs > rhs * (1 + 1e-9)
            worst = max(worst, lhs / rhs)
    elapsed = time.perf_counter() - start
    verdict(4, violations == 0, elapsed, 30,
            f"checks={checked} violations={violations} worst ratio={worst:.4g}")
    assert violations == 0
    assert elapsed < 30


def test_criterion_5_theorem2_and_chain(verdict):
    start = time.perf_counter()
    cfg = validate_config(chain6_config())
    lam = 0.01
    times = cfg.times
    losses, failures, worst_chain = [], [], 0.0
    for scale in (2.0, 4.0, 8.0, 16.0):
        model = build_model(cfg, scale)
        assert model.code.gap == pytest.approx(scale * model.meta.j_max)
        lines = psd_lines(model.h_e, model.rho_e, model.b_op)
        rec = run_experiment(model, lam, times, keep_states=False, lines=lines)
        cal = calibrate_slack(model, lam, times, lines=lines)
        rep = verify_theorem2(rec, model, lam, cal.c, lines=lines)
        if not all(rep.satisfied):
            failures.append(f"bound at E={scale}")
        bad = [r for r in rep.chain if not r["pass"] or r["ratio"] > 1 + 1e-9]
        if bad:
            failures.append(f"chain at E={scale}: {bad[0]}")
        worst_chain = max(worst_chain, rep.worst_chain_ratio)
        losses.append(rec.corrected_loss)
    losses = np.array(losses)
    decreasing = bool(np.all(np.diff(losses[:, 1:], axis=0) < 0))
    if not decreasing:
        failures.append("loss not strictly decreasing in the gap")
    elapsed = time.perf_counter() - start
    verdict(5, not failures, elapsed, 120,
            f"worst chain ratio={worst_chain:.6g} loss at t_max per gap="
            f"{[f'{x:.3e}' for x in losses[:, -1]]} failures={failures}")
    assert not failures
    assert elapsed < 120


def test_criterion_6_static_bath(verdict):
    start = time.perf_counter()
    e_gap, lam = 4.0, 0.02
    model = static_bath(qubit_model(e_gap))
    times = np.linspace(0, 100 / e_gap, 41)
    lines = psd_lines(model.h_e, model.rho_e, model.b_op)
    rec = run_experiment(model, lam, times, keep_states=False, lines=lines)
    cal = calibrate_slack(model, lam, times, lines=lines)
    static = 16 * lam**2 * model.code_block_hsq_norm() / e_gap**2
    bound = static + cal.c * lam**3
    worst = max(rec.corrected_loss.max(), rec.leakage_loss.max())
    elapsed = time.perf_counter() - start
    verdict(6, worst <= bound, elapsed, 5,
            f"max loss={worst:.4e} static term={static:.4e} bound with slack={bound:.4e}")
    assert worst <= bound
    assert elapsed < 5


def test_criterion_7_coefficient_oracles(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    quad_err, ident_err, min_eig = 0.0, 0.0, np.inf
    for _ in range(25):
        n = int(rng.integers(1, 4))
        lines = make_lines(rng.uniform(-3, 3, n), rng.uniform(0.1, 2.0, n))
        f, w = lines.frequencies, lines.weights
        mu, mu_p = rng.uniform(-3, 3, 2)
        t = rng.uniform(0.2, 2.0)
        quad_err = max(quad_err,
                       abs(b_coefficient(lines, mu, mu_p, t) - b_quadrature(f, w, mu, mu_p, t)),
                       abs(gamma(lines, mu, mu_p, t) - gamma_quadrature(f, w, mu, mu_p, t)))
        lhs = gamma(lines, mu, mu_p, t) + np.conj(gamma(lines, mu_p, mu, t))
        ident_err = max(ident_err, abs(lhs - np.conj(b_coefficient(lines, -mu, -mu_p, t))))
        freqs = np.sort(rng.uniform(-3, 3, 4))
        min_eig = min(min_eig, np.linalg.eigvalsh(b_table(lines, freqs, t).matrix)[0])
    elapsed = time.perf_counter() - start
    ok = quad_err <= 1e-7 and ident_err <= 1e-9 and min_eig >= -1e-9
    verdict(7, ok, elapsed, 30,
            f"quadrature err={quad_err:.2e} identity err={ident_err:.2e} min eig={min_eig:.2e}")
    assert quad_err <= 1e-7
    assert ident_err <= 1e-9
    assert min_eig >= -1e-9
    assert elapsed < 30


def test_criterion_8_determinism(verdict, tmp_path):
    start = time.perf_counter()
    from importlib import resources

    path = resources.files("penaltyshield").joinpath("data/chain6.json")
    outputs = []
    for name in ("first", "second"):
        code = main(["simulate", "--config", str(path), "--out", str(tmp_path / name),
                     "--seed", "7", "--jobs", "1"])
        assert code == 0
        outputs.append((tmp_path / name / "results.csv").read_bytes())
    same = outputs[0] == outputs[1]
    elapsed = time.perf_counter() - start
    verdict(8, same, elapsed, None, f"results.csv bytes={len(outputs[0])} identical={same}")
    assert same
