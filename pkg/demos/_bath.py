"""Small spin-chain bath shared by the demo scripts."""

import numpy as np

from penaltyshield import LocalTerm, PenaltyModel, build_hamiltonian, equilibrium_state
from penaltyshield import locality_metadata
from penaltyshield.operator_core import PAULI

FIELDS = (0.5, 0.7, 0.9, 0.6)


def chain_bath(n=4):
    lattice = [2] * n
    terms = [LocalTerm.pauli(1.0, "XX", [i, i + 1]) for i in range(n - 1)]
    terms += [LocalTerm.pauli(h, "Z", [i]) for i, h in zip(range(n), FIELDS)]
    h_e = build_hamiltonian(terms, lattice)
    b = build_hamiltonian([LocalTerm.pauli(1.0, "X", [0])], lattice)
    meta = locality_metadata(terms, [], {0}, lattice, PAULI["X"])
    return h_e, b, meta


def coupled(h_s, s, n=4, state="maximally_mixed"):
    h_e, b, meta = chain_bath(n)
    return PenaltyModel(np.asarray(h_s, dtype=complex), h_e, [(s, b)],
                        equilibrium_state(h_e, state), meta)
