"""Simulation toolkit for quantum one-time pads, authentication and key recycling."""

from .analysis import (Ensemble, Povm, entropy_separability_check, eve_product_distance,
                       holevo, leftover_hash_bound, mutual_info_measurement, ppt_min_eigenvalue,
                       rel_entropy_ub, transpose_identity_residual)
from .codes import CliffordCircuit, PurityTestingCode, sample_code
from .keyring import (Ledger, LedgerEntry, ToeplitzHash, audit_law, ledger_record,
                      recycle_on_accept, recycle_on_reject, toeplitz_hash)
from .pauli import KeyString, PauliString, qotp_decrypt, qotp_encrypt
from .protocols import (AttackModel, RunRecord, SimulationParams, run_interactive,
                        run_modified_qas, run_protect_entanglement, run_secret_sharing,
                        run_sqas, run_teleport_baseline)
from .qcore import DensityMatrix, StateVector, SubsystemLayout

__version__ = "0.1.0"
