import itertools
import json

import numpy as np
import pytest
from scipy import stats

from qotp.codes import sample_code
from qotp.keyring import Ledger, audit_law
from qotp.pauli import KeyString, all_keys
from qotp.protocols import (RUN_RECORD_FIELDS, AttackModel, RunRecord, SimulationParams,
                            _family, make_streams, run_interactive, run_modified_qas,
                            run_secret_sharing, run_sqas, run_teleport_baseline, run_trial, trial_seed, validate)
from qotp.qcore import CapacityError, DensityMatrix, random_state, trace_distance
from qotp.stabilizer import random_stabilizer_state

NONE = AttackModel()


def test_attack_parse_roundtrip():
    for text in ["none", "fixed_pauli:X0Z3", "random_pauli:0.1", "steal_replace:0,1",
                 "measure_resend:Z", "measure_resend:X@0,2", "entangling_probe:0,1"]:
        assert str(AttackModel.parse(text)) == text
    for bad in ["bogus", "fixed_pauli:Q1", "fixed_pauli:", "random_pauli:2",
                "measure_resend:Y", "entangling_probe:0,1,2"]:
        with pytest.raises(ValueError):
            AttackModel.parse(bad)


def test_fixed_pauli_sample():
    p = AttackModel.parse("fixed_pauli:X0Z0Y2").sample_pauli(3, np.random.default_rng(0))
    # X0 Z0 is Y0 up to phase
    assert p.xbits() == [1, 0, 1] and p.zbits() == [1, 0, 1]
    assert AttackModel().sample_pauli(3, np.random.default_rng(0)).is_identity()


def test_params_validation():
    with pytest.raises(ValueError):
        SimulationParams(0, 1)
    with pytest.raises(ValueError):
        SimulationParams(1, 1, backend="tableau")


def test_trial_seeds_are_distinct_and_stable():
    seeds = [trial_seed(7, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert trial_seed(7, 3) == trial_seed(7, 3)


def test_run_record_schema():
    r = run_trial("sqas", SimulationParams(1, 2), NONE, 0)
    d = json.loads(r.to_json())
    assert tuple(d) == RUN_RECORD_FIELDS
    assert RunRecord.from_dict(d) == r
    with pytest.raises(ValueError):
        RunRecord.from_dict({**d, "extra": 1})
    with pytest.raises(ValueError):
        RunRecord(**{**d, "qubits_sent": -1})


@pytest.mark.parametrize("m,s", [(1, 1), (2, 3), (3, 4)])
def test_sqas_completeness(rng, m, s):
    for i in range(10):
        r = run_sqas(SimulationParams(m, s), random_state(m, rng), KeyString.random(m, s, rng),
                     NONE, seed=i)
        assert r.accepted and r.fidelity_out >= 1 - 1e-10
        assert (r.qubits_sent, r.cbits_forward, r.cbits_back) == (m + s, 0, 1)
        assert r.key_consumed_bits == 2 * m + 2 * s
        assert r.eve_key_product_distance is None


def test_sqas_stabilizer_attack_is_harmless(rng):
    m, s, seed = 2, 2, 5
    key = KeyString.random(m, s, rng)
    code = sample_code(m, s, key.segment("z"), _family(make_streams(seed)))
    psi = random_state(m, rng)
    for g in code.stabilizers():
        attack = AttackModel("fixed_pauli", paulis=tuple(
            (letter, q) for q, letter in enumerate(g.label.lstrip("+-i")) if letter != "I"))
        r = run_sqas(SimulationParams(m, s), psi, key, attack, seed=seed)
        assert r.accepted and r.fidelity_out >= 1 - 1e-10


def test_sqas_rejects_bad_keys(rng):
    p = SimulationParams(1, 2)
    with pytest.raises(ValueError):
        run_sqas(p, random_state(1, rng), KeyString.plain([0] * 6), NONE)
    with pytest.raises(ValueError):
        run_sqas(p, random_state(1, rng), KeyString.random(1, 1, rng), NONE)
    with pytest.raises(ValueError):
        run_sqas(p, random_state(2, rng), KeyString.random(1, 2, rng), NONE)


def test_sqas_fixed_z_miss_rate():
    # m=2, s=4: a random code misses a fixed Pauli with probability close to 2^-4
    p = SimulationParams(2, 4, backend="stabilizer")
    attack = AttackModel.parse("fixed_pauli:Z1")
    runs = [run_trial("sqas", p, attack, i) for i in range(10_000)]
    k = sum(r.accepted for r in runs)
    expect = (4 ** 2 * 2 ** 4 - 1) / (4 ** 6 - 1)
    assert abs(k / 1e4 - expect) <= 3 * np.sqrt(expect * (1 - expect) / 1e4)
    damaged = sum(r.accepted and r.fidelity_out < 0.99 for r in runs)
    assert damaged / 1e4 <= 2 * 2 ** -4


def test_interactive_accounting(rng):
    m, s = 2, 3
    r = run_interactive(SimulationParams(m, s), random_state(m, rng), NONE, seed=1)
    assert r.accepted and r.fidelity_out >= 1 - 1e-10
    assert r.key_consumed_bits == 0 and r.cbits_back >= 1
    assert r.cbits_forward >= 2 * m + 2 * s
    e = Ledger()
    e.record(r)
    ent = e.entries[0]
    assert ent.delta_k == 0 <= ent.delta_q - ent.delta_m == s


def test_interactive_matches_sqas_under_same_seeds():
    p = SimulationParams(2, 3)
    for attack in ["fixed_pauli:X0", "random_pauli:0.2"]:
        a = AttackModel.parse(attack)
        for i in range(60):
            assert run_trial("sqas", p, a, i).accepted == run_trial("interactive", p, a, i).accepted


def test_noninteractive_accounting():
    p = SimulationParams(1, 2)
    assert run_trial("sqas", p, NONE, 0).cbits_forward == 0
    assert run_trial("interactive", p, NONE, 0).cbits_forward > 0


@pytest.mark.parametrize("m", [1, 2])
def test_teleport_no_attack(rng, m):
    for i in range(10):
        r = run_teleport_baseline(SimulationParams(m, 2), random_state(m, rng), NONE, seed=i)
        assert r.accepted and r.fidelity_out >= 1 - 1e-10
        assert r.cbits_forward == 2 * m and r.key_consumed_bits == 0
        assert r.qubits_sent == m
        assert r.key_recycled_bits - r.key_consumed_bits == 0 == r.qubits_sent - r.message_size


def test_teleport_with_verification_detects(rng):
    p = SimulationParams(1, 3)
    psi = random_state(1, rng)
    runs = [run_teleport_baseline(p, psi, AttackModel.parse("fixed_pauli:X0"), seed=i)
            for i in range(200)]
    assert all(r.qubits_sent == 4 for r in runs)
    rate = np.mean([r.accepted for r in runs])
    assert rate < 0.35
    clean = run_teleport_baseline(p, psi, NONE, seed=3, verify=True)
    assert clean.accepted and clean.fidelity_out >= 1 - 1e-10


def test_teleport_bell_outcomes_uniform():
    p = SimulationParams(1, 1)
    counts = np.zeros(4)
    for i in range(10_000):
        counts[run_trial("teleport", p, NONE, i).analysis["bell_outcome"]] += 1
    assert stats.chisquare(counts).pvalue > 1e-3


def test_teleport_limit():
    with pytest.raises(CapacityError):
        run_teleport_baseline(SimulationParams(3, 1), random_state(3, np.random.default_rng(0)),
                              NONE)


def test_modified_no_attack(rng):
    for m, s in [(1, 1), (2, 2), (1, 2)]:
        yz = KeyString.plain(rng.integers(0, 2, size=2 * s).tolist())
        r = run_modified_qas(SimulationParams(m, s), random_state(m, rng), yz, NONE, seed=4)
        assert r.accepted and r.fidelity_out >= 1 - 1e-10
        assert r.eve_key_product_distance <= 1e-10
        assert r.analysis["psi_plus_overlap"] >= 1 - 1e-10


def test_modified_probe_within_bound(rng):
    probe = AttackModel.parse("entangling_probe:0")
    for i in range(40):
        yz = KeyString.plain(rng.integers(0, 2, size=2).tolist())
        r = run_modified_qas(SimulationParams(1, 1), random_state(1, rng), yz, probe, seed=i)
        a = r.analysis
        if "eps_accept" in a:
            assert a["eve_distance_accept"] <= a["product_bound"] + 1e-10


def test_modified_limits(rng):
    yz = KeyString.plain([0] * 6)
    with pytest.raises(CapacityError):
        run_modified_qas(SimulationParams(1, 3), random_state(1, rng), yz, NONE)
    with pytest.raises(ValueError):
        run_modified_qas(SimulationParams(1, 1, backend="stabilizer"), random_state(1, rng),
                         KeyString.plain([0, 0]), NONE)


def test_modified_and_sqas_accept_rates_agree():
    p = SimulationParams(1, 2)
    a = AttackModel.parse("fixed_pauli:X0")
    n = 600
    k1 = sum(run_trial("sqas", p, a, i).accepted for i in range(n))
    k2 = sum(run_trial("modified_qas", p, a, i).accepted for i in range(n))
    table = [[k1, n - k1], [k2, n - k2]]
    assert stats.fisher_exact(table).pvalue > 0.01


def test_secret_sharing_joint_and_shares(rng):
    m, s = 2, 2
    psi = random_state(m, rng)
    x = rng.integers(0, 2, size=2 * m).tolist()
    sk = KeyString.plain(rng.integers(0, 2, size=2 * s).tolist())
    rec, bob, claire = run_secret_sharing(SimulationParams(m, s), psi, x, sk, NONE, seed=2)
    assert rec.accepted and rec.fidelity_out >= 1 - 1e-10
    assert len(bob) == 2 * m and claire.dim == 2 ** m
    assert rec.message_size == 3 * m


@pytest.mark.parametrize("m", [1, 2, 3])
def test_secret_sharing_claire_alone_is_mixed(rng, m):
    psi = random_state(m, rng)
    x = [0] * (2 * m)
    sk = KeyString.plain([1, 0])
    acc = np.zeros((2 ** m, 2 ** m), dtype=complex)
    keys = list(all_keys(2 * m))
    for j in keys:
        _, _, claire = run_secret_sharing(SimulationParams(m, 1), psi, x, sk, NONE, seed=0,
                                          j_bits=j)
        acc += claire.mat / len(keys)
    assert trace_distance(acc, DensityMatrix.maximally_mixed(m).mat) <= 1e-10


def test_secret_sharing_bob_alone_uniform(rng):
    psi = random_state(1, rng)
    sk = KeyString.plain([0, 1])
    for j in all_keys(2):
        seen = {}
        for x in all_keys(2):
            _, bob, _ = run_secret_sharing(SimulationParams(1, 1), psi, list(x), sk, NONE,
                                           seed=0, j_bits=j)
            seen[bob] = seen.get(bob, 0) + 1
        assert sorted(seen.values()) == [1, 1, 1, 1]


def test_secret_sharing_abort_on_reject(rng):
    psi = random_state(1, rng)
    attack = AttackModel.parse("fixed_pauli:X1")
    outcomes = []
    for i in range(30):
        sk = KeyString.plain(rng.integers(0, 2, size=6).tolist())
        rec, bob, _ = run_secret_sharing(SimulationParams(1, 3), psi, [0, 1], sk, attack, seed=i)
        outcomes.append(rec.accepted)
        if not rec.accepted:
            assert bob is None and rec.cbits_forward == 0
    assert not all(outcomes)


def test_protect_entanglement_record():
    r = run_trial("protect_entanglement", SimulationParams(2, 1), NONE, 0)
    assert r.accepted and r.fidelity_out >= 1 - 1e-10
    assert r.qubits_sent == 2 and r.key_consumed_bits == 2 and r.message_size == 0


@pytest.mark.parametrize("m,s", [(1, 1), (2, 2), (3, 3), (2, 4)])
def test_backends_agree_on_clifford_runs(m, s):
    rng = np.random.default_rng(m * 10 + s)
    for i in range(40):
        state = random_stabilizer_state(m, rng)
        key = KeyString.random(m, s, rng)
        attack = AttackModel.parse(["none", "fixed_pauli:Y0", "random_pauli:0.3"][i % 3])
        d = run_sqas(SimulationParams(m, s), state, key, attack, seed=i)
        t = run_sqas(SimulationParams(m, s, backend="stabilizer"), state, key, attack, seed=i)
        assert d.accepted == t.accepted
        assert d.fidelity_out == pytest.approx(t.fidelity_out, abs=1e-9)


def test_stabilizer_backend_rejects_dense_attacks():
    with pytest.raises(ValueError):
        validate("sqas", SimulationParams(1, 1, backend="stabilizer"),
                 AttackModel.parse("steal_replace:0"))
    with pytest.raises(ValueError):
        validate("teleport", SimulationParams(1, 1, backend="stabilizer"), NONE)


def test_validate_caps():
    with pytest.raises(CapacityError, match="22"):
        validate("sqas", SimulationParams(20, 3), NONE)
    with pytest.raises(ValueError):
        validate("sqas", SimulationParams(1, 1), AttackModel.parse("fixed_pauli:X5"))
    validate("sqas", SimulationParams(180, 20, backend="stabilizer"), NONE)


@pytest.mark.parametrize("attack", ["none", "fixed_pauli:X0", "fixed_pauli:Z3Y5",
                                    "random_pauli:0.05", "random_pauli:0.5"])
def test_soundness_pauli_attacks(attack):
    p = SimulationParams(2, 4, backend="stabilizer")
    a = AttackModel.parse(attack)
    bad = sum(r.accepted and r.fidelity_out < 0.99
              for r in (run_trial("sqas", p, a, i) for i in range(10_000)))
    assert bad / 1e4 <= 2 * 2 ** -4


@pytest.mark.parametrize("attack", ["steal_replace:0", "measure_resend:X",
                                    "entangling_probe:0,1"])
def test_soundness_dense_attacks(attack):
    p = SimulationParams(2, 4)
    a = AttackModel.parse(attack)
    bad = sum(r.accepted and r.fidelity_out < 0.99
              for r in (run_trial("sqas", p, a, i) for i in range(10_000)))
    assert bad / 1e4 <= 2 * 2 ** -4


def test_mixed_suite_ledger_audit():
    led = Ledger()
    configs = [("sqas", SimulationParams(2, 3)), ("interactive", SimulationParams(2, 3)),
               ("teleport", SimulationParams(1, 2)), ("secret_sharing", SimulationParams(1, 2)),
               ("modified_qas", SimulationParams(1, 1)),
               ("protect_entanglement", SimulationParams(2, 1))]
    attacks = [NONE, AttackModel.parse("random_pauli:0.1")]
    for (proto, p), a in itertools.product(configs, attacks):
        for i in range(20):
            led.record(run_trial(proto, p, a, i))
    assert audit_law(led)[0]


def test_run_trial_teleport_verify_switch():
    p = SimulationParams(1, 2)
    a = AttackModel.parse("fixed_pauli:X0")
    plain = run_trial("teleport", p, a, 0, verify=False)
    assert "code_family" not in plain.analysis and plain.qubits_sent == 1
    checked = run_trial("teleport", p, a, 0)
    assert "code_family" in checked.analysis and checked.qubits_sent == 3
