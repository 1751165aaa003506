"""Command-line front end: ``gateshadow <command> ...``.

Every command writes its output atomically and a ``<out>.manifest.json``
next to it; ``gateshadow replay <manifest>`` re-runs the recorded command.
Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .applications import (
    ApplicationError,
    clifford_fidelities,
    crosstalk_metrics,
    crosstalk_reconstruct,
    learn_unitary,
    pauli_eigenvalues,
    reconstruct_unital,
    rz_product_model,
)
from .clifford import CliffordElement, CliffordError, LocalCliffordElement
from .estimation import EstimationResult, ProbeError, ProbeOperator, estimate_many
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ShadowFormatError,
    SimulationError,
    atomic_write_text,
    read_shadow,
    run_experiment,
    shadow_lines,
)
from .fitting import FitError
from .liouville import DimensionError, SuperOperator, projector, unitary_ptm
from .noise import NoiseModelError

log = logging.getLogger("gateshadow")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
USAGE_ERRORS = (
    ConfigError,
    ShadowFormatError,
    ProbeError,
    ApplicationError,
    NoiseModelError,
    CliffordError,
    DimensionError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    KeyError,
)
NUMERICAL_ERRORS = (FitError, SimulationError, np.linalg.LinAlgError, FloatingPointError)


class UsageError(ValueError):
    """Malformed command input (probe file, grid file, flags)."""


# -- helpers --------------------------------------------------------------------------

def _load_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _sha256_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_output(path: str, text: str) -> None:
    atomic_write_text(path, text)


def _write_manifest(args, inputs: dict, outputs: list, extra: dict | None = None) -> None:
    """Record everything that determines the outputs; the hash ignores timestamps."""
    options = {k: v for k, v in vars(args).items() if k not in ("func", "out", "started")}
    hashed = {"command": args.command, "options": options, "inputs": inputs, "version": __version__}
    hashed.update(extra or {})
    manifest = {
        "tool": "gateshadow",
        "version": __version__,
        "command": args.command,
        "options": options,
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": outputs,
        "config_hash": hashlib.sha256(_canonical(hashed).encode()).hexdigest(),
        "started": args.started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    manifest.update(extra or {})
    _write_output(args.out + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _estimate_kwargs(args) -> dict:
    return {"estimator": args.estimator, "bootstrap": args.bootstrap, "seed": args.seed or 0}


# -- probe files --------------------------------------------------------------------------

def _irrep(spec, n: int, default_kind: str):
    if spec is None:
        if default_kind == "ad":
            return projector("ad", n)
        raise UsageError("local probes need an explicit irrep {kind: local, w: ...}")
    if isinstance(spec, str):
        return projector("ad", n) if spec == "ad" else projector("local", n, spec)
    kind = spec.get("kind")
    if kind == "ad":
        return projector("ad", n)
    if kind == "local":
        if "w" not in spec:
            raise UsageError("irrep.w: missing field")
        return projector("local", n, spec["w"])
    raise UsageError(f"irrep.kind: unknown irrep {kind!r}")


ANSATZ_MODELS = {
    "rz_product": lambda n: rz_product_model(n),
}


def _ansatz_unitary(model: str, n: int, theta) -> np.ndarray:
    if model not in ANSATZ_MODELS:
        raise UsageError(f"unknown ansatz model {model!r}; known: {sorted(ANSATZ_MODELS)}")
    return ANSATZ_MODELS[model](n)(*theta)


def parse_probes(doc, n: int, gate_set: str) -> list[ProbeOperator]:
    """Probe file ``{"probes": [...]}``; see README for the entry types."""
    entries = doc.get("probes") if isinstance(doc, dict) else doc
    if not isinstance(entries, list) or not entries:
        raise UsageError("probes: expected a non-empty list")
    default_kind = "ad" if gate_set == "multi_clifford" else "local"
    out = []
    for i, e in enumerate(entries):
        path = f"probes[{i}]"
        if not isinstance(e, dict) or "type" not in e:
            raise UsageError(f"{path}.type: missing field")
        kind = e["type"]
        name = e.get("name", f"{kind}{i}")
        alpha = e.get("alpha")
        try:
            irr = _irrep(e.get("irrep"), n, default_kind) if kind != "pauli" else None
            if kind == "dense":
                if "rows" not in e:
                    raise UsageError(f"{path}.rows: missing field")
                p = ProbeOperator.dense(np.asarray(e["rows"], dtype=float), irr, alpha, name)
            elif kind == "projector":
                p = ProbeOperator.dense(np.eye(4**n), irr, alpha, name)
            elif kind == "clifford":
                if "tableau" not in e:
                    raise UsageError(f"{path}.tableau: missing field")
                p = ProbeOperator.from_clifford(CliffordElement.from_json(e["tableau"]), irr, alpha, name)
            elif kind == "local_clifford":
                if "indices" not in e:
                    raise UsageError(f"{path}.indices: missing field")
                p = ProbeOperator.from_clifford(LocalCliffordElement(n, tuple(e["indices"])), irr, alpha, name)
            elif kind == "pauli":
                if "label" not in e:
                    raise UsageError(f"{path}.label: missing field")
                irr = _irrep(e["irrep"], n, default_kind) if "irrep" in e else (
                    projector("ad", n) if gate_set == "multi_clifford" else None
                )
                p = ProbeOperator.rank_one_pauli(e["label"], irr, alpha, name)
            elif kind == "ansatz":
                for key in ("model", "theta"):
                    if key not in e:
                        raise UsageError(f"{path}.{key}: missing field")
                u = _ansatz_unitary(e["model"], n, e["theta"])
                p = ProbeOperator.dense(unitary_ptm(u), irr, alpha, name)
            else:
                raise UsageError(f"{path}.type: unknown probe type {kind!r}")
        except (ValueError, TypeError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"{path}: {exc}") from exc
        out.append(p)
    return out


def results_csv(results: list[EstimationResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe", "irrep", "m", "mean", "mom", "ci_lo", "ci_hi", "n_records", "fit_B", "fit_p", "p_ci_lo", "p_ci_hi"])
    for r in results:
        for row in r.to_json()["per_m"]:
            w.writerow([r.probe, r.irrep, row["m"], repr(row["mean"]), repr(row["mom"]), repr(row["ci_lo"]),
                        repr(row["ci_hi"]), row["n_records"], repr(r.B), repr(r.p), repr(r.p_ci[0]), repr(r.p_ci[1])])
    return buf.getvalue()


# -- commands ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    doc = _load_json(args.config)
    if args.seed is not None:
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        doc = dict(doc, seed=args.seed)
    cfg = ExperimentConfig.from_json(doc)
    cfg.build_noise()  # surface noise-config errors before simulating
    shadow = run_experiment(cfg, threads=args.threads)
    _write_output(args.out, "".join(line + "\n" for line in shadow_lines(shadow)))
    log.info("wrote %d records to %s", shadow.num_records(), args.out)
    _write_manifest(args, {args.config: _sha256_file(args.config)}, [args.out], {"experiment": cfg.to_json()})
    return EXIT_OK


def cmd_estimate(args) -> int:
    shadow = read_shadow(args.shadow)
    probes = parse_probes(_load_json(args.probes), shadow.n, shadow.gate_set)
    results = estimate_many(shadow, probes, **_estimate_kwargs(args))
    if args.format == "csv":
        text = results_csv(results)
    else:
        text = json.dumps([r.to_json() for r in results], indent=2) + "\n"
    _write_output(args.out, text)
    _write_manifest(args, {args.shadow: _sha256_file(args.shadow), args.probes: _sha256_file(args.probes)}, [args.out])
    return EXIT_OK


def cmd_crosstalk(args) -> int:
    shadow = read_shadow(args.shadow)
    targets = args.targets.split(",") if args.targets else None
    ms = crosstalk_reconstruct(shadow, targets, max_weight=args.max_weight, **_estimate_kwargs(args))
    metrics = crosstalk_metrics(ms)
    doc = ms.to_json()
    doc["pinched"] = ms.pinched().to_json()
    doc["metrics"] = [m.to_json() for m in metrics]
    _write_output(args.out, json.dumps(doc, indent=2) + "\n")
    _write_manifest(args, {args.shadow: _sha256_file(args.shadow)}, [args.out])
    return EXIT_OK


def cmd_pauli_noise(args) -> int:
    shadow = read_shadow(args.shadow)
    ev = pauli_eigenvalues(shadow, **_estimate_kwargs(args))
    text = ev.to_csv() if args.format == "csv" else json.dumps(ev.to_json(), indent=2) + "\n"
    _write_output(args.out, text)
    _write_manifest(args, {args.shadow: _sha256_file(args.shadow)}, [args.out])
    return EXIT_OK


def parse_grid(doc) -> tuple[str, list, np.ndarray]:
    """Grid file ``{"model": ..., "names": [...], "axes": [[...], ...]}`` or with explicit ``"points"``."""
    if not isinstance(doc, dict):
        raise UsageError("grid: expected a JSON object")
    model = doc.get("model", "rz_product")
    if "points" in doc:
        pts = np.asarray(doc["points"], dtype=float)
    elif "axes" in doc:
        axes = doc["axes"]
        if not isinstance(axes, list) or not all(isinstance(a, list) for a in axes):
            raise UsageError("grid.axes: expected a list of value lists")
        pts = np.array(list(itertools.product(*axes)), dtype=float)
    else:
        raise UsageError("grid.points: missing field (or give grid.axes)")
    if pts.size == 0:
        raise UsageError("grid: parameter grid is empty")
    if pts.ndim == 1:
        pts = pts[:, None]
    names = doc.get("names") or [f"theta{i + 1}" for i in range(pts.shape[1])]
    return model, names, pts


def cmd_learn_unitary(args) -> int:
    shadow = read_shadow(args.shadow)
    model, names, pts = parse_grid(_load_json(args.grid))
    n = shadow.n
    land = learn_unitary(shadow, lambda *t: _ansatz_unitary(model, n, t), pts, names, **_estimate_kwargs(args))
    text = land.to_csv() if args.format == "csv" else json.dumps(land.to_json(), indent=2) + "\n"
    _write_output(args.out, text)
    _write_manifest(args, {args.shadow: _sha256_file(args.shadow), args.grid: _sha256_file(args.grid)}, [args.out])
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    inputs = {}
    if args.fidelities:
        doc = _load_json(args.fidelities)
        n = int(doc["n"])
        fid = {CliffordElement.from_json(e["tableau"]): float(e["F"]) for e in doc["fidelities"]}
        inputs[args.fidelities] = _sha256_file(args.fidelities)
    elif args.shadow:
        shadow = read_shadow(args.shadow)
        n = shadow.n
        fid = clifford_fidelities(shadow, **_estimate_kwargs(args))
        inputs[args.shadow] = _sha256_file(args.shadow)
    else:
        raise UsageError("reconstruct needs --shadow or --fidelities")
    rec = reconstruct_unital(fid, n, mode=args.mode)
    doc = {"channel": rec.channel.to_json(), "exact_design": rec.exact, "num_fidelities": rec.num_fidelities}
    if args.reference:
        ref = SuperOperator.from_json(_load_json(args.reference))
        doc["choi_hs_distance"] = rec.distance(ref)
        inputs[args.reference] = _sha256_file(args.reference)
    _write_output(args.out, json.dumps(doc, indent=2) + "\n")
    _write_manifest(args, inputs, [args.out])
    return EXIT_OK


def cmd_replay(args) -> int:
    man = _load_json(args.manifest)
    if man.get("tool") != "gateshadow" or "command" not in man or "options" not in man:
        raise UsageError(f"{args.manifest}: not a gateshadow manifest")
    opts = dict(man["options"])
    opts.pop("command", None)
    opts.pop("verbose", None)
    out = args.out or man["outputs"][0]
    argv = [man["command"]]
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[man["command"]]
    for action in sub._actions:
        if action.dest in ("help", "out") or action.dest not in opts:
            continue
        val = opts[action.dest]
        if not action.option_strings:
            argv.append(str(val))
        elif val is None or val is False:
            continue
        elif val is True:
            argv.append(action.option_strings[-1])
        else:
            argv += [action.option_strings[-1], str(val)]
    argv += ["-o", out]
    log.info("replaying: gateshadow %s", " ".join(argv))
    return main(argv)


# -- parser -------------------------------------------------------------------------------

def _estimator(text: str) -> str:
    if text == "mean":
        return text
    if text.startswith("mom:"):
        try:
            if int(text[4:]) >= 1:
                return text
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"expected 'mean' or 'mom:K' with K >= 1, got {text!r}")


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gateshadow", description="Gate-set shadow simulation and estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, estimation: bool = True, fmt: bool = False):
        p.add_argument("-o", "--out", required=True, help="output path")
        p.add_argument("--seed", type=_seed, default=None, help="seed (u64); drives all randomness")
        p.add_argument("--threads", type=_positive, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
        if estimation:
            p.add_argument("--estimator", type=_estimator, default="mean", help="mean or mom:K")
            p.add_argument("--bootstrap", type=int, default=1000, help="bootstrap resamples (0 disables)")
        if fmt:
            p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("simulate", help="simulate a gate-set shadow from a config file")
    p.add_argument("config")
    common(p, estimation=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="fit decays for the probes in a probe file")
    p.add_argument("shadow")
    p.add_argument("probes")
    common(p, fmt=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("crosstalk", help="unital marginals and cross-talk metrics")
    p.add_argument("shadow")
    p.add_argument("--targets", default=None, help="comma-separated support bit strings (default: all |w| <= 2)")
    p.add_argument("--max-weight", type=int, default=2)
    common(p)
    p.set_defaults(func=cmd_crosstalk)

    p = sub.add_parser("pauli-noise", help="Pauli eigenvalues from a Pauli-interleaved shadow")
    p.add_argument("shadow")
    common(p, fmt=True)
    p.set_defaults(func=cmd_pauli_noise)

    p = sub.add_parser("learn-unitary", help="fidelity landscape of a unitary ansatz")
    p.add_argument("shadow")
    p.add_argument("grid")
    common(p, fmt=True)
    p.set_defaults(func=cmd_learn_unitary)

    p = sub.add_parser("reconstruct", help="unital channel from Clifford fidelities")
    p.add_argument("--shadow", default=None)
    p.add_argument("--fidelities", default=None)
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--reference", default=None, help="PTM JSON to report the Choi HS distance against")
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", default=None, help="override the recorded output path")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    args.started = datetime.now(timezone.utc).isoformat()
    try:
        return args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"gateshadow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except USAGE_ERRORS + (UsageError,) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        if isinstance(exc, KeyError):
            msg = f"{msg}: missing field"
        print(f"gateshadow: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
