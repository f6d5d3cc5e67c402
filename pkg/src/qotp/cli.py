"""Batch experiment runner.

Exit codes
----------
0
    Success; for ``run``/``sweep``/``audit`` the key-ledger audit passed.
2
    Invalid configuration, unreadable or malformed input, or a runtime error.
3
    The ledger audit found a violation of ``delta_k <= delta_q - delta_m``.

Data goes to standard output or the requested files; progress and
diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from itertools import product
from pathlib import Path

import numpy as np

from .keyring import Ledger, audit_law
from .protocols import (BACKENDS, PROTOCOLS, AttackModel, RunRecord, SimulationParams,
                        run_trial, validate)
from .stats import binomial_ci

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LAW = 3

DAMAGE_THRESHOLD = 0.99
SWEEP_FIELDS = ("protocol", "backend", "attack", "m", "s", "trials", "seed", "accepted",
                "accept_rate", "ci_low", "ci_high", "damaged_accept_rate", "mean_fidelity",
                "delta_q", "delta_m", "delta_k", "audit_ok")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "sqas"
    m: tuple[int, ...] = (1,)
    s: tuple[int, ...] = (1,)
    attack: str = "none"
    trials: int = 1
    seed: int = 0
    backend: str = "dense"
    output_path: str | None = None
    jobs: int = 1
    recycle: bool = True
    ci_level: float = 0.99

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {', '.join(PROTOCOLS)}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}")
        if not self.m or not self.s:
            raise ConfigError("parameter ranges must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        try:
            AttackModel.parse(self.attack)
        except ValueError as exc:
            raise ConfigError(f"bad attack {self.attack!r}: {exc}") from None

    def points(self):
        for m, s in product(self.m, self.s):
            yield SimulationParams(m, s, self.backend, self.seed, self.trials, self.recycle)


def parse_range(value) -> tuple[int, ...]:
    """``3``, ``1,2,4``, ``2:6`` (inclusive) or a JSON list."""
    if isinstance(value, int):
        return (value,)
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    text = str(value).strip()
    out: list[int] = []
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            if ":" in part:
                lo, hi = (int(x) for x in part.split(":", 1))
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse range {value!r}") from None
    return tuple(out)


# ---------------------------------------------------------------------------
# execution


def _trial(protocol: str, params: SimulationParams, attack: str, i: int) -> RunRecord:
    return run_trial(protocol, params, AttackModel.parse(attack), i)


def run_point(protocol: str, params: SimulationParams, attack: str, jobs: int = 1,
              progress: bool = True) -> list[RunRecord]:
    """All trials of one parameter point, merged in trial order."""
    validate(protocol, params, AttackModel.parse(attack))
    fn = partial(_trial, protocol, params, attack)
    idx = range(params.trials)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(fn, idx, chunksize=max(1, params.trials // (4 * jobs))))
    else:
        records = []
        step = max(1, params.trials // 10)
        for i in idx:
            records.append(fn(i))
            if progress and (i + 1) % step == 0:
                print(f"[{protocol} m={params.m} s={params.s}] {i + 1}/{params.trials}",
                      file=sys.stderr)
    return records


def summarise(records: list[RunRecord], ledger: Ledger, level: float) -> dict:
    n = len(records)
    k = sum(r.accepted for r in records)
    lo, hi = binomial_ci(k, n, level)
    acc_fid = [r.fidelity_out for r in records if r.accepted]
    damaged = sum(r.accepted and r.fidelity_out < DAMAGE_THRESHOLD for r in records)
    ok, violations = audit_law(ledger)
    return {
        "trials": n,
        "accepted": k,
        "accept_rate": k / n,
        "accept_ci": [lo, hi],
        "ci_level": level,
        "damaged_accept_rate": damaged / n,
        "mean_fidelity": float(np.mean(acc_fid)) if acc_fid else None,
        "ledger": ledger.totals(),
        "audit": {"ok": ok, "violations": violations},
    }


def _write(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _check_writable(paths) -> None:
    """Fail before any trial runs if an output file cannot be created."""
    for path in paths:
        parent = Path(path).parent
        try:
            parent.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create directory for {path}: {exc}") from None
        target = Path(path)
        if (target.exists() and not os.access(target, os.W_OK)) or not os.access(parent, os.W_OK):
            raise ConfigError(f"output file {path} is not writable")


def cmd_run(cfg: ExperimentConfig) -> int:
    if len(cfg.m) != 1 or len(cfg.s) != 1:
        raise ConfigError("run takes a single m and s; use sweep for ranges")
    if cfg.output_path:
        _check_writable([cfg.output_path + sfx for sfx in ("", ".summary.json", ".ledger.csv")])
    params = next(cfg.points())
    records = run_point(cfg.protocol, params, cfg.attack, cfg.jobs)
    ledger = Ledger()
    for r in records:
        ledger.record(r)
    summary = {"protocol": cfg.protocol, "backend": cfg.backend, "attack": cfg.attack,
               "m": params.m, "s": params.s, "seed": cfg.seed,
               **summarise(records, ledger, cfg.ci_level)}
    text = json.dumps(summary, indent=2) + "\n"
    if cfg.output_path:
        _write(cfg.output_path, "".join(r.to_json() + "\n" for r in records))
        _write(cfg.output_path + ".summary.json", text)
        _write(cfg.output_path + ".ledger.csv", ledger.to_csv())
    sys.stdout.write(text)
    return EXIT_OK if summary["audit"]["ok"] else EXIT_LAW


def cmd_sweep(cfg: ExperimentConfig) -> int:
    points = list(cfg.points())
    attack = AttackModel.parse(cfg.attack)
    for p in points:  # fail before running anything
        validate(cfg.protocol, p, attack)
    if cfg.output_path:
        _check_writable([cfg.output_path, cfg.output_path + ".ledger.csv"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    full = Ledger()
    all_ok = True
    for p in points:
        records = run_point(cfg.protocol, p, cfg.attack, cfg.jobs)
        ledger = Ledger()
        for r in records:
            ledger.record(r)
            full.record(r)
        s = summarise(records, ledger, cfg.ci_level)
        all_ok &= s["audit"]["ok"]
        t = s["ledger"]
        w.writerow([cfg.protocol, cfg.backend, cfg.attack, p.m, p.s, p.trials, cfg.seed,
                    s["accepted"], repr(s["accept_rate"]), repr(s["accept_ci"][0]),
                    repr(s["accept_ci"][1]), repr(s["damaged_accept_rate"]),
                    "" if s["mean_fidelity"] is None else repr(s["mean_fidelity"]),
                    t["delta_q"], t["delta_m"], t["delta_k"], s["audit"]["ok"]])
    all_ok &= audit_law(full)[0]
    if cfg.output_path:
        _write(cfg.output_path, buf.getvalue())
        _write(cfg.output_path + ".ledger.csv", full.to_csv())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK if all_ok else EXIT_LAW


def cmd_audit(path: str) -> int:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read ledger: {exc}") from None
    ledger = Ledger.from_csv(text)
    ok, violations = audit_law(ledger)
    print(json.dumps({"ok": ok, "violations": violations}, indent=2))
    return EXIT_OK if ok else EXIT_LAW


# ---------------------------------------------------------------------------
# analyze


def _analyze(args) -> dict:
    from . import analysis
    from .pauli import key_average, protected_average, singlets
    from .qcore import (DensityMatrix, partial_trace, random_state, random_unitary,
                        trace_distance, vn_entropy)

    rng = np.random.default_rng(args.seed)
    if args.what == "encryption":
        worst = 0.0
        for _ in range(args.samples):
            avg = key_average(random_state(args.m, rng))
            worst = max(worst, trace_distance(avg.mat, DensityMatrix.maximally_mixed(args.m).mat))
        return {"what": "encryption", "m": args.m, "samples": args.samples,
                "max_trace_distance_to_mixed": worst}
    if args.what == "transpose_identity":
        res = [analysis.transpose_identity_residual(random_unitary(args.m, rng), args.form)
               for _ in range(args.samples)]
        return {"what": "transpose_identity", "m": args.m, "form": args.form,
                "samples": args.samples, "max_residual": max(res)}
    if args.what == "leftover_hash":
        j, e, t = args.j, args.e, args.t
        probs = np.full(1 << j, 2.0 ** -j)
        eve = np.arange(1 << j) >> (j - e)  # Eve holds the first e key bits
        exact = analysis.hashed_key_distance(probs, eve, t)
        bound = analysis.leftover_hash_bound(2.0 ** -j, 1 << e, t, 0.0)
        return {"what": "leftover_hash", "j": j, "e": e, "t": t, "exact": exact,
                "bound": bound, "within_bound": bool(exact <= bound)}
    if args.what == "protect_entanglement":
        state = singlets(args.n)
        rho = protected_average(state, args.p)
        out = {"what": "protect_entanglement", "n": args.n, "flip_prob": args.p,
               "ppt_min_eigenvalue": analysis.ppt_min_eigenvalue(rho, ["A"]),
               "entropy_check": analysis.entropy_separability_check(rho, ["A"]),
               "entropy_alice": vn_entropy(partial_trace(state.density(), ["A"]).mat)}
        if args.n == 1:
            out["rel_entropy_ub"] = analysis.rel_entropy_ub(rho, args.restarts, seed=args.seed)
        return out
    raise ConfigError(f"unknown analysis {args.what!r}")


# ---------------------------------------------------------------------------
# argument handling

_RUN_KEYS = ("protocol", "m", "s", "attack", "trials", "seed", "backend", "output_path",
             "jobs", "recycle", "ci_level")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - set(_RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def build_config(args) -> ExperimentConfig:
    data = _load_config(args.config)
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if "seed" not in data:
        env = os.environ.get("QOTP_SEED")
        try:
            data["seed"] = int(env) if env is not None else 0
        except ValueError:
            raise ConfigError(f"QOTP_SEED must be an integer, got {env!r}") from None
    for key in ("m", "s"):
        if key in data:
            data[key] = parse_range(data[key])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with experiment settings; flags override it")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--m", help="message qubits: N, a list N,M or an inclusive range A:B")
    p.add_argument("--s", help="security qubits, same syntax as --m")
    p.add_argument("--attack", help="e.g. none, fixed_pauli:X0, random_pauli:0.1")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help="default: $QOTP_SEED or 0")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--output", dest="output_path")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-recycle", dest="recycle", action="store_const", const=False)
    p.add_argument("--ci-level", dest="ci_level", type=float)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qotp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_experiment_flags(sub.add_parser("run", help="seeded Monte Carlo trials of one protocol"))
    _add_experiment_flags(sub.add_parser("sweep", help="cross product of m and s ranges"))
    a = sub.add_parser("audit", help="check a ledger CSV")
    a.add_argument("ledger")
    z = sub.add_parser("analyze", help="standalone diagnostics, one JSON object")
    z.add_argument("what", choices=("encryption", "transpose_identity", "leftover_hash",
                                    "protect_entanglement"))
    z.add_argument("--m", type=int, default=1)
    z.add_argument("--n", type=int, default=1)
    z.add_argument("--j", type=int, default=6)
    z.add_argument("--e", type=int, default=2)
    z.add_argument("--t", type=int, default=2)
    z.add_argument("--p", type=float, default=0.5)
    z.add_argument("--form", choices=("transpose", "conjugate"), default="transpose")
    z.add_argument("--samples", type=int, default=50)
    z.add_argument("--restarts", type=int, default=20)
    z.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "audit":
            return cmd_audit(args.ledger)
        if args.command == "analyze":
            if args.seed is None:
                args.seed = int(os.environ.get("QOTP_SEED", "0"))
            print(json.dumps(_analyze(args), indent=2))
            return EXIT_OK
        cfg = build_config(args)
        return cmd_run(cfg) if args.command == "run" else cmd_sweep(cfg)
    except (ValueError, TypeError) as exc:
        print(f"qotp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure inside a protocol
        print(f"qotp: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
