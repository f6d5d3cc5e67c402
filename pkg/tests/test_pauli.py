import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qotp.pauli import (KeyString, PauliString, apply_pauli, apply_to_amplitudes, bell_state,
                        bitflip_protect, bits_to_hex, hex_to_bits, key_average, pauli_from_key,
                        protected_average, qotp_decrypt, qotp_encrypt, singlets)
from qotp.qcore import DensityMatrix, partial_trace, random_density, random_state, trace_distance

from .oracles import PAULI, pauli_matrix

labels = st.text(alphabet="IXYZ", min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(labels)
def test_to_matrix_matches_kron_oracle(label):
    assert np.allclose(PauliString.from_label(label).to_matrix(), pauli_matrix(label))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    st.text(alphabet="IXYZ", min_size=n, max_size=n),
    st.text(alphabet="IXYZ", min_size=n, max_size=n))))
def test_product_phase_and_commutation(pair):
    a, b = (PauliString.from_label(x) for x in pair)
    ma, mb = a.to_matrix(), b.to_matrix()
    assert np.allclose((a * b).to_matrix(), ma @ mb)
    assert a.commutes(b) == np.allclose(ma @ mb, mb @ ma)
    assert np.allclose(a.adjoint().to_matrix(), ma.conj().T)


def test_label_phases():
    p = PauliString.from_label("-iXZ")
    assert np.allclose(p.to_matrix(), -1j * np.kron(PAULI["X"], PAULI["Z"]))
    assert PauliString.from_label("Y").label == "+Y"
    assert PauliString.from_label(PauliString.from_label("-iXY").label) == PauliString.from_label("-iXY")
    assert (-PauliString.from_label("X")).coefficient == -1
    with pytest.raises(ValueError):
        PauliString.from_label("XQ")


def test_weight_identity_restrict():
    p = PauliString.from_label("XIYZ")
    assert p.weight == 3
    assert not p.is_identity()
    assert PauliString.from_label("-II").is_identity()
    assert not PauliString.from_label("-II").is_identity(up_to_phase=False)
    assert p.restrict([2, 3]).label == "+YZ"


@pytest.mark.parametrize("label", ["X", "Y", "Z", "XY", "ZIY"])
def test_apply_to_amplitudes_on_subset(rng, label):
    n = 4
    psi = random_state(n, rng).amplitudes
    p = PauliString.from_label(label)
    qubits = list(range(n - len(label), n))[::-1]
    # dense reference: place factor k of the label on register qubit qubits[k]
    full = ["I"] * n
    for k, ch in enumerate(label):
        full[qubits[k]] = ch
    assert np.allclose(apply_to_amplitudes(p, psi, qubits), pauli_matrix("".join(full)) @ psi)


def test_apply_pauli_density(rng):
    rho = random_density(2, rng)
    p = PauliString.from_label("iYX")
    m = p.to_matrix()
    assert np.allclose(apply_pauli(p, rho).mat, m @ rho.mat @ m.conj().T)


def test_pad_key_ordering():
    # bits (1, 0) -> Z on qubit 0; bits (0, 1) -> X on qubit 0
    assert np.allclose(pauli_from_key([1, 0]).to_matrix(), PAULI["Z"])
    assert np.allclose(pauli_from_key([0, 1]).to_matrix(), PAULI["X"])
    assert np.allclose(pauli_from_key([1, 1]).to_matrix(), PAULI["X"] @ PAULI["Z"])
    with pytest.raises(ValueError):
        pauli_from_key([1, 0, 1])


def test_encrypt_decrypt_roundtrip(rng):
    psi = random_state(3, rng)
    for key in itertools.islice(itertools.product((0, 1), repeat=6), 0, 64, 7):
        back = qotp_decrypt(qotp_encrypt(psi, key), key)
        assert np.allclose(back.amplitudes, psi.amplitudes)
    with pytest.raises(ValueError):
        qotp_encrypt(psi, [0, 1])


@pytest.mark.parametrize("m", [1, 2])
def test_key_average_is_maximally_mixed(rng, m):
    rho = key_average(random_state(m, rng))
    assert trace_distance(rho.mat, DensityMatrix.maximally_mixed(m).mat) < 1e-12


def test_key_average_on_subset_keeps_rest(rng):
    psi = random_state(2, rng)
    avg = key_average(psi, [0])
    assert np.allclose(partial_trace(avg, ["0"]).mat, np.eye(2) / 2)
    assert np.allclose(partial_trace(avg, ["1"]).mat, partial_trace(psi.density(), ["1"]).mat)


def test_keystring_segments_and_serialisation(rng):
    k = KeyString.random(2, 3, rng)
    assert len(k) == 10
    assert len(k.segment("x")) == 4 and len(k.segment("z")) == 3
    assert KeyString.from_dict(k.to_dict()) == k
    with pytest.raises(ValueError):
        KeyString((0, 1, 1), {"a": (0, 1), "b": (2, 3)})
    with pytest.raises(ValueError):
        KeyString.for_protocol([0] * 5, 1, 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=0, max_size=40))
def test_hex_roundtrip(bits):
    assert hex_to_bits(bits_to_hex(bits), len(bits)) == tuple(bits)


def test_bell_and_singlets():
    psi = bell_state("psi-")
    assert np.allclose(psi.amplitudes, np.array([0, 1, -1, 0]) / np.sqrt(2))
    two = singlets(2)
    assert two.layout.names == ("A", "C")
    # A0 A1 C0 C1 ordering: pair i is (A_i, C_i)
    ref = np.kron(psi.amplitudes, psi.amplitudes).reshape(2, 2, 2, 2).transpose(0, 2, 1, 3)
    assert np.allclose(two.amplitudes, ref.ravel())


def test_bitflip_protect_and_average():
    s = singlets(1)
    flipped = bitflip_protect(s, [1])
    assert np.allclose(flipped.amplitudes, np.array([-1, 0, 0, 1]) / np.sqrt(2))
    avg = protected_average(s, 0.5)
    expect = 0.5 * (s.density().mat + flipped.density().mat)
    assert np.allclose(avg.mat, expect)
    assert np.allclose(protected_average(s, 0.0).mat, s.density().mat)
