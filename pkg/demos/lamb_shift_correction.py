"""Why the code-space unitary has to be undone before judging a penalty.

Two system qubits, code span{|00>, |01>}, coupling S = X ⊗ |0><0|. Only
|00> can be kicked out of the code, so the two codewords see different
second-order energy shifts. Started in (|00> + |01>)/sqrt(2), the raw
fidelity decays from the relative phase alone, while the fidelity after
undoing U_LS tracks the true leakage.

Run: python3 demos/lamb_shift_correction.py
"""

import numpy as np

from penaltyshield import run_experiment
from penaltyshield.operator_core import PAULI

from _bath import coupled

I2, X, Z = PAULI["I"], PAULI["X"], PAULI["Z"]

e_gap, lam = 20.0, 0.02
h_s = e_gap * np.kron((I2 - Z) / 2, I2)
s = np.kron(X, (I2 + Z) / 2)
model = coupled(h_s, s)
psi = np.array([1, 1, 0, 0]) / np.sqrt(2)

times = np.linspace(0, 1000, 11)
rec = run_experiment(model, lam, times, psi, keep_states=False)

print(f"gap {model.code.gap:g}, lambda {lam:g}")
print(f"{'t':>7} {'1-F^2 raw':>12} {'1-F^2 corr':>12} {'leakage loss':>13} {'2nd order':>12}")
for i, t in enumerate(times):
    print(f"{t:7.1f} {rec.raw_loss[i]:12.3e} {rec.corrected_loss[i]:12.3e} "
          f"{rec.leakage_loss[i]:13.3e} {1 - rec.thm1_population[i]:12.3e}")
print(f"\nraw / corrected loss at t = {times[-1]:g}: "
      f"{rec.raw_loss[-1] / rec.corrected_loss[-1]:.0f}")
