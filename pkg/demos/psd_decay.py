"""Cumulative power spectrum of a local bath operator and its exponential envelope.

Run: python3 demos/psd_decay.py
"""

import numpy as np

from penaltyshield import psd_lines, verify_theorem3
from penaltyshield.operator_core import op_norm
from penaltyshield.spectral import ac_power, equilibrium_powers

from _bath import chain_bath

h_e, b, meta = chain_bath(6)
rho = np.eye(h_e.shape[0]) / h_e.shape[0]
lines = psd_lines(h_e, rho, b)
total, dc = equilibrium_powers(h_e, rho, b)
print(f"{len(lines)} lines, total power {lines.total_power:.4f}, AC power {ac_power(lines):.4f}")
print(f"locality: {meta.as_dict()}")

rows = verify_theorem3(lines, meta, op_norm(b), total, dc, np.linspace(0, 2 * op_norm(h_e), 11))
print(f"\n{'check':>10} {'n or w':>8} {'measured':>11} {'bound':>11} {'ratio':>8}")
for r in rows:
    print(f"{r['check']:>10} {r['n_or_omega']:8.3g} {r['measured']:11.4e} {r['bound']:11.4e} "
          f"{r['ratio']:8.2e}")
