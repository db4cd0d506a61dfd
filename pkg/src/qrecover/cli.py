"""qrecover command-line driver.

Exit codes: 0 success, 1 input or configuration error, 2 failed assertion
or invariant.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from qrecover import channels, conjectures, extend, measures, serialization, states, suites
from qrecover.errors import QRecoverError
from qrecover.linalg import SubsystemLayout

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_ASSERT = 0, 1, 2
TOLERANCE_KEYS = ("violation", "bound_slack", "fvdg_slack")


class InputError(Exception):
    """Bad command line or unreadable input."""


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    dims: tuple[int, ...] = ()
    trials: int = 1
    output_path: str | None = None
    format: str = "json"
    threads: int = 1
    tolerances: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("--trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InputError("--seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise InputError("--threads must be >= 1")
        if any(d < 1 for d in self.dims):
            raise InputError("--dims entries must be positive")

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, "dims": list(self.dims),
                "trials": self.trials, "format": self.format, "tolerances": dict(sorted(self.tolerances.items()))}


# ------------------------------------------------------------------ parsing helpers


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}") from None


def _grid(text: str) -> tuple[float, ...]:
    """lo:hi:step or a comma list."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            n = int(round((hi - lo) / step))
            return tuple(np.round(lo + step * np.arange(n + 1), 10))
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _tol(text: str) -> tuple[str, float]:
    key, _, value = text.partition("=")
    if key not in TOLERANCE_KEYS or not value:
        raise argparse.ArgumentTypeError(f"--tol takes KEY=VALUE with KEY in {', '.join(TOLERANCE_KEYS)}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tolerance value {value!r}") from None


def _default_threads() -> int:
    raw = os.environ.get("QRECOVER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--dims", type=_dims, default=None)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=_default_threads())
    common.add_argument("--tol", type=_tol, action="append", default=[])

    p = argparse.ArgumentParser(prog="qrecover", description="Recovery maps, k-extensions and inequality search.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extend", parents=[common], help="k-extension by iterated recovery")
    e.add_argument("--state", help="state file on (A, B) or (A, E, B)")
    e.add_argument("--ensemble", default="hilbert_schmidt_mixed")
    e.add_argument("--k", type=int, default=2)
    e.add_argument("--grid", type=_grid, default=channels.DEFAULT_GRID)
    e.add_argument("--strategy", choices=("auto", "purification_extension", "supplied"), default="auto")

    f = sub.add_parser("fuzz", parents=[common], help="counterexample search")
    f.add_argument("--inequality", required=True, choices=[i.value for i in conjectures.InequalityId])
    f.add_argument("--map-variant", default="petz_t0")
    f.add_argument("--family", choices=("cmi", "channel", "classical"), default="cmi")
    f.add_argument("--ensemble", default="hilbert_schmidt_mixed")
    f.add_argument("--refine-steps", type=int, default=200)
    f.add_argument("--scale", type=float, default=0.05)
    f.add_argument("--archive", default=None, help="directory for witness files")

    c = sub.add_parser("check", parents=[common], help="run a property battery")
    c.add_argument("suite", choices=suites.SUITES)

    m = sub.add_parser("measures", parents=[common], help="entanglement measure estimates")
    m.add_argument("--state", required=True)
    m.add_argument("--measure", choices=("eof", "esq_ub"), required=True)
    m.add_argument("--restarts", type=int, default=4)
    m.add_argument("--env-dim", type=int, default=None)

    g = sub.add_parser("gen", parents=[common], help="write a state fixture")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--named", help="bell | ghz(n) | maximally_mixed(d) | classical_copy(d)")
    src.add_argument("--ensemble")
    src.add_argument("--antisymmetric", type=_dims, help="d,copies")
    src.add_argument("--markov", action="store_true", help="random quantum Markov chain")
    src.add_argument("--separable", type=int, metavar="TERMS", help="random separable mixture on --dims")
    return p


# ------------------------------------------------------------------ output


def timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ";".join(serialization.format_float(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            out[key] = serialization.format_float(v)
        else:
            out[key] = v
    return out


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return serialization.dumps(doc)
    rows = [_flatten(r) for r in doc.get("reports", [])]
    buf = io.StringIO()
    if rows:
        cols = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return buf.getvalue()


def envelope(cfg: RunConfig, reports: list[dict], **extra) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "command": cfg.command, "timestamp": timestamp(),
           "config": cfg.to_dict()}
    doc.update(extra)
    doc["reports"] = reports
    return doc


def emit(doc: dict, cfg: RunConfig) -> None:
    text = render(doc, cfg.format)
    if cfg.output_path:
        Path(cfg.output_path).write_text(text)
    else:
        sys.stdout.write(text)


@contextmanager
def _mapper(threads: int) -> Iterator:
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex.map


# ------------------------------------------------------------------ commands


def _load(path: str) -> states.MultipartiteState:
    p = Path(path)
    if not p.exists():
        raise InputError(f"state file {path} not found")
    return states.load_state(p)


def cmd_extend(args, cfg: RunConfig) -> int:
    if args.state:
        inputs = [(None, _load(args.state))]
    else:
        dims = cfg.dims or (2, 2, 2)
        if len(dims) not in (2, 3):
            raise InputError("extend needs --dims with 2 (A,B) or 3 (A,E,B) entries")
        labels = ("A", "B") if len(dims) == 2 else ("A", "E", "B")
        inputs = [(cfg.seed + i, states.random_state(states.StateEnsembleSpec(
            args.ensemble, dims, cfg.seed + i, labels=labels))) for i in range(cfg.trials)]
    slack = cfg.tolerances.get("bound_slack", extend.BOOKKEEPING_SLACK)

    def run(item):
        seed, rho = item
        has_e = "E" in rho.labels
        strategy = args.strategy if args.strategy != "auto" else ("supplied" if has_e else "purification_extension")
        if strategy == "supplied" and not has_e:
            raise InputError("strategy 'supplied' needs a state with an E factor")
        rho_ab = rho.marginal(("A", "B"))
        rep, _ = extend.build_k_extension(rho_ab, args.k, strategy, rho_abe=rho if has_e else None,
                                          swivel_grid=args.grid, check_bounds=False)
        d = rep.to_dict()
        d["instance_seed"] = seed
        ok = max(rep.marginal_distances) <= rep.measured_bound + slack and rep.symmetry_residual <= 1e-8
        return d, ok

    with _mapper(cfg.threads) as mp:
        results = list(mp(run, inputs))
    reports = [r for r, _ in results]
    emit(envelope(cfg, reports, k=args.k), cfg)
    if not all(ok for _, ok in results):
        print("error: marginal distance exceeded the measured bound", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_fuzz(args, cfg: RunConfig) -> int:
    try:
        variant = conjectures.MapVariant.parse(args.map_variant)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    dims = cfg.dims or ((2, 2, 2) if args.family != "channel" else (2, 2))
    sc = conjectures.SearchConfig(
        trials=cfg.trials, refine_steps=args.refine_steps, perturbation_scale=args.scale, dims=tuple(dims),
        seed=cfg.seed, family=args.family, ensemble=args.ensemble,
        tolerance=cfg.tolerances.get("violation", conjectures.VIOLATION_TOL))
    if args.inequality == "Theorem5_quantum" and variant.kind != "petz_t0":
        raise InputError("Theorem5_quantum uses the plain Petz map (petz_t0)")
    with _mapper(cfg.threads) as mp:
        res = conjectures.search_counterexample(args.inequality, variant, sc, args.archive, map_fn=mp)
    summary = res.summary()
    best = summary.pop("best")
    doc = envelope(cfg, [best], **summary)
    emit(doc, cfg)
    print(f"status: {res.status}; min gap {res.min_gap:.6e}; violations {res.violations}", file=sys.stderr)
    return EXIT_OK


def cmd_check(args, cfg: RunConfig) -> int:
    trials = cfg.trials if cfg.trials > 1 else 500
    res = suites.run_suite(args.suite, trials, cfg.seed)
    for p in res.properties:
        print(f"{res.suite}.{p.name}: {p.passed} passed, {p.failed} failed (worst margin {p.worst:.3e})",
              file=sys.stderr)
    emit(envelope(cfg, [dict(p.__dict__) for p in res.properties], suite=res.suite, ok=res.ok), cfg)
    return EXIT_OK if res.ok else EXIT_ASSERT


def cmd_measures(args, cfg: RunConfig) -> int:
    rho = _load(args.state)
    if not {"A", "B"} <= set(rho.labels):
        raise InputError("measures needs a state with A and B factors")
    if args.restarts < 1:
        raise InputError("--restarts must be >= 1")
    rho_ab = rho.marginal(("A", "B"))
    if args.measure == "eof":
        est = measures.entanglement_of_formation(rho_ab, restarts=args.restarts, seed=cfg.seed)
    else:
        if args.env_dim is not None and args.env_dim < 1:
            raise InputError("--env-dim must be >= 1")
        est = measures.squashed_entanglement_upper_bound(rho_ab, env_dim=args.env_dim,
                                                         restarts=args.restarts, seed=cfg.seed)
    d = est.to_dict()
    d["measure"] = args.measure
    emit(envelope(cfg, [d]), cfg)
    return EXIT_OK


def cmd_gen(args, cfg: RunConfig) -> int:
    rng = states.make_rng(cfg.seed)
    if args.named:
        rho = states.named_state(args.named)
    elif args.antisymmetric:
        d, copies = (args.antisymmetric + (2,))[:2]
        rho = states.antisymmetric_state(d, copies)
    elif args.markov:
        rho = states.random_markov_chain(rng)
    elif args.separable:
        da, db = (cfg.dims or (2, 2))[:2]
        weights = rng.dirichlet(np.ones(args.separable))
        m = sum(w * np.kron(states.random_density_matrix(rng, da, "haar_pure"),
                            states.random_density_matrix(rng, db, "haar_pure")) for w in weights)
        rho = states.MultipartiteState(m, SubsystemLayout(("A", "B"), (da, db)))
    else:
        dims = cfg.dims or (2, 2)
        rho = states.random_state(states.StateEnsembleSpec(args.ensemble, dims, cfg.seed))
    text = states.dumps_state(rho)
    if cfg.output_path:
        Path(cfg.output_path).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"extend": cmd_extend, "fuzz": cmd_fuzz, "check": cmd_check, "measures": cmd_measures, "gen": cmd_gen}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cfg = RunConfig(args.command, args.seed, tuple(args.dims or ()), args.trials, args.out,
                        args.format, args.threads, dict(args.tol))
        return COMMANDS[args.command](args, cfg)
    except extend.BoundViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (InputError, QRecoverError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
