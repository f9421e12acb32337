"""When is the second-order prediction off by lam^3, and when only by lam^4?

For H_S = diag(0, E) and S = sigma_x, conjugating by sigma_z ⊗ I flips the sign
of the coupling and leaves H_S, H_E and rho_E alone. The leakage is then an
even function of lam, the first correction is lam^4, and halving lam cuts the
residual by about 16. A generic random model has no such symmetry and shows
the factor of about 8 expected from a lam^3 remainder.

Run: python3 demos/parity_and_cubic_order.py
"""

import numpy as np

from penaltyshield import PenaltyModel, equilibrium_state, psd_lines, run_experiment
from penaltyshield.operator_core import PAULI

from _bath import coupled


def residuals(model, psi, times, lams):
    lines = psd_lines(model.h_e, model.rho_e, model.b_op)
    out = []
    for lam in lams:
        rec = run_experiment(model, lam, times, psi, keep_states=False, lines=lines)
        second = 1 - np.asarray(rec.thm1_population)
        out.append(np.max(np.abs(rec.leakage_loss - second)))
    return out


def report(name, res):
    ratios = [a / b for a, b in zip(res, res[1:])]
    print(f"{name:>10}: residuals {['%.2e' % r for r in res]}, "
          f"halving ratios {['%.2f' % x for x in ratios]}")


lams = (0.02, 0.01, 0.005)
e_gap = 4.0
qubit = coupled(np.diag([0.0, e_gap]), PAULI["X"])
report("symmetric", residuals(qubit, [1, 0], np.linspace(0, 20 / e_gap, 21), lams))

rng = np.random.default_rng(1)


def rand_herm(d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


h_s = np.diag([0.0, 1.5, 2.5])
h_e = rand_herm(4)
generic = PenaltyModel(h_s, h_e, [(rand_herm(3), rand_herm(4))],
                       equilibrium_state(h_e, ("thermal", 0.7)))
report("generic", residuals(generic, [1, 0, 0], np.linspace(0, 3, 13), lams))
