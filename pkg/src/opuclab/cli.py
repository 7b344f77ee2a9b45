"""
Command-line front end.

Every command resolves a flat configuration (defaults, then an optional JSON
file, then flags), writes its CSV/JSON artifacts plus ``summary.json`` into
an output directory and records a ``manifest.json`` holding the resolved
configuration and the sha256 of every artifact. ``opuclab replay`` reruns a
manifest into a fresh directory and compares hashes.

Exit codes: 0 success, 2 numeric failure, 64 invalid configuration or
violated precondition, 65 incompatible artifact versions.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import re
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import badset, coeffs, measures, prufer, szego, wkb

__all__ = ["main", "run", "build_parser", "ConfigError", "VersionError", "ARTIFACT_VERSION"]

ARTIFACT_VERSION = "1"
EXIT_OK, EXIT_NUMERIC, EXIT_USAGE, EXIT_VERSION = 0, 2, 64, 65
COMMANDS = ("gen", "evolve", "prufer-check", "wkb-bench", "partition-diag", "scan", "report")
WORKERS_ENV = "OPUC_LAB_WORKERS"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nat = {"type": "integer", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "family": {"enum": ["power_decay", "power", "random_weighted", "sparse", "free"]},
        "seq_file": {"type": "string"},
        "c": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "delta": _pos,
        "gamma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "margin": _pos,
        "indices": {"type": "array", "items": _nat},
        "seed": _nat,
        "n_max": _posint,
        "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "level": _nat,
        "a": _pos,
        "b": _pos,
        "measure_file": {"type": "string"},
        "eta": {"type": "array", "items": _pos, "minItems": 1},
        "beta": {"type": "array", "items": _num, "minItems": 1},
        "L": {"type": "array", "items": _nat, "minItems": 1},
        "D": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "dense_check": _nat,
        "j": _posint,
        "grid": {"type": "integer", "minimum": 2},
        "gap": _pos,
        "N_max": _posint,
        "log_M": {"type": "array", "items": _num, "minItems": 1},
        "factors": {"type": "array", "items": _posint},
        "inputs": {"type": "array", "items": {"type": "string"}},
        "out": {"type": "string"},
        "workers": _posint,
    },
}
LIST_KEYS = {k for k, v in SCHEMA["properties"].items() if v.get("type") == "array"}

COMMON_DEFAULTS = {
    "family": "power_decay",
    "c": 0.5,
    "delta": 1.0,
    "gamma": 0.6,
    "margin": 0.2,
    "seed": 0,
    "n_max": 4096,
}
DEFAULTS = {
    "gen": {},
    "evolve": {"eta": [1.0], "beta": [0.0]},
    "prufer-check": {"eta": [0.5, 1.0, 2.0, 3.0], "beta": [0.0, math.pi]},
    "wkb-bench": {
        "ratio": 1.0 / 3.0,
        "level": 8,
        "a": 0.5,
        "b": 2.0 * math.pi - 0.5,
        "L": [2**k for k in range(4, 13)],
        "beta": [0.0],
        "dense_check": 2**8,
    },
    "partition-diag": {"D": 0.7, "j": 1},
    "scan": {"grid": 2**12, "gap": badset.DEFAULT_GAP, "beta": [0.0, math.pi], "log_M": [2.0, 5.0, 10.0]},
    "report": {"inputs": []},
}


class ConfigError(ValueError):
    """Schema or precondition violation (exit 64)."""


class VersionError(RuntimeError):
    """Artifacts of different or unknown versions (exit 65)."""


class NumericFailure(RuntimeError):
    """Some computation produced non-finite values (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


def _line_of(text: str, key: str) -> int:
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return 1


def load_config(path) -> tuple[dict, str, str]:
    """Read a JSON config (or a manifest); returns ``(config, text, label)``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    if "artifacts" in data and isinstance(data.get("config"), dict):
        data = data["config"]
    return data, text, str(path)


def _normalize(cfg: dict) -> dict:
    out = {}
    for k, v in cfg.items():
        if k in LIST_KEYS and not isinstance(v, list):
            v = [v]
        out[k] = v
    return out


def validate(cfg: dict, origin: dict, texts: dict) -> None:
    """
    Check ``cfg`` against the schema.

    ``origin`` maps a key to the label of the file it came from (missing
    keys came from flags or defaults); messages carry ``file:line``.
    """
    props = SCHEMA["properties"]

    def where(key):
        label = origin.get(key)
        if label is None:
            return "--" + key.replace("_", "-") if key else "<config>"
        return f"{label}:{_line_of(texts[label], key) if key else 1}"

    for key in cfg:
        if key not in props:
            raise ConfigError(f"{where(key)}: unknown key {key!r}")
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        key = e.path[0] if e.path else None
        raise ConfigError(f"{where(key)}: {key}: {e.message}")


def resolve(command: str, flags: dict, config_path=None) -> tuple[dict, dict]:
    """Defaults, then the config file, then flags; returns ``(cfg, config_texts)``."""
    cfg = {**COMMON_DEFAULTS, **DEFAULTS[command]}
    origin, texts = {}, {}
    if config_path is not None:
        data, text, label = load_config(config_path)
        data = _normalize(data)
        texts[label] = text
        if data.get("command", command) != command:
            raise ConfigError(f"{label}:{_line_of(text, 'command')}: config is for {data['command']!r}, not {command!r}")
        data.pop("command", None)
        for k in data:
            origin[k] = label
        cfg.update(data)
    cfg.update(_normalize(flags))
    for k in flags:
        origin.pop(k, None)
    if "workers" not in cfg:
        env = os.environ.get(WORKERS_ENV)
        if env is not None:
            try:
                cfg["workers"] = int(env)
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
        else:
            cfg["workers"] = 1
    if cfg.get("family") == "power":
        cfg["family"] = "power_decay"
    validate(cfg, origin, texts)
    cfg.setdefault("out", f"opuclab-{command}")
    return cfg, texts


# ---------------------------------------------------------------- inputs


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def make_sequence(cfg: dict) -> coeffs.VerblunskySequence:
    if cfg.get("seq_file"):
        return coeffs.load_sequence(cfg["seq_file"])
    fam, n = cfg["family"], cfg["n_max"]
    if fam == "power_decay":
        return coeffs.gen_power_decay(cfg["c"], cfg["delta"], cfg["seed"], n)
    if fam == "random_weighted":
        return coeffs.gen_random_weighted(cfg["gamma"], cfg["margin"], cfg["seed"], n)
    if fam == "sparse":
        return coeffs.gen_sparse(cfg.get("indices", []), cfg["c"], cfg["delta"], cfg["seed"], n)
    return coeffs.from_values(np.zeros(n, dtype=np.complex128))


def make_measure(cfg: dict) -> measures.HolderMeasure:
    if cfg.get("measure_file"):
        return measures.load_measure(cfg["measure_file"])
    return measures.cantor_measure(cfg["ratio"], cfg["level"], cfg["a"], cfg["b"])


def _seq_gamma(seq, cfg):
    return seq.params.get("gamma", cfg.get("gamma")) if isinstance(seq.params, dict) else cfg.get("gamma")


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _summary(kind: str, **fields) -> dict:
    return {"artifact_version": ARTIFACT_VERSION, "kind": kind, **fields}


# ---------------------------------------------------------------- commands


def cmd_gen(cfg, out: Path):
    seq = make_sequence(cfg)
    coeffs.save_sequence(seq, out / "sequence")
    s = _summary(
        "sequence",
        fingerprint=seq.fingerprint(),
        family=seq.family,
        n_max=seq.n_max,
        max_modulus=float(seq.moduli.max()) if seq.n_max else 0.0,
        passed=bool(np.all(seq.moduli < 1.0)),
    )
    return s, EXIT_OK


def cmd_evolve(cfg, out: Path):
    seq = make_sequence(cfg)
    n = cfg.get("N_max", seq.n_max)
    if n > seq.n_max:
        raise ConfigError("N_max exceeds the sequence length")
    runs, failed = [], False
    for i, eta in enumerate(cfg["eta"]):
        for k, beta in enumerate(cfg["beta"]):
            path = out / f"trajectory_{i}_{k}.csv"
            try:
                szego.write_trajectory(seq, eta, n, beta, path)
                st = szego.final_state(seq, szego.CirclePoint(eta), n, beta)
                row = {"eta": eta, "beta": beta, "logT": st.log_norm, "sup_logT": st.sup_log_norm, "failed": False}
            except FloatingPointError:
                row = {"eta": eta, "beta": beta, "logT": None, "sup_logT": None, "failed": True}
                failed = True
            runs.append(row)
    s = _summary("evolve", fingerprint=seq.fingerprint(), N_max=n, runs=runs, passed=not failed)
    return s, EXIT_NUMERIC if failed else EXIT_OK


def cmd_prufer_check(cfg, out: Path):
    seq = make_sequence(cfg)
    n = cfg.get("N_max", seq.n_max)
    if n > seq.n_max:
        raise ConfigError("N_max exceeds the sequence length")
    rows = []
    for i, eta in enumerate(cfg["eta"]):
        for k, beta in enumerate(cfg["beta"]):
            traj = prufer.PruferTrajectory.compute(seq, eta, beta, n)
            prufer.write_trajectory(traj, out / f"prufer_{i}_{k}.csv")
            gap = prufer.consistency_check(seq, eta, beta, n)
            rows.append((eta, beta, gap, float(traj.fs_residual[-1])))
    with open(out / "prufer_check.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "beta", "consistency", "fs_residual"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    worst = max(r[2] for r in rows)
    finite = all(math.isfinite(r[2]) for r in rows)
    s = _summary("prufer-check", fingerprint=seq.fingerprint(), N_max=n, max_consistency=worst, passed=finite and worst <= 1e-8)
    return s, EXIT_OK if finite else EXIT_NUMERIC


def cmd_wkb_bench(cfg, out: Path):
    Ls = sorted(set(cfg["L"]))
    if len(Ls) < 4:
        raise ConfigError(f"L grid has {len(Ls)} distinct points; the scaling fit needs at least 4")
    seq = make_sequence(cfg)
    if Ls[-1] > seq.n_max:
        raise ConfigError(f"largest L = {Ls[-1]} exceeds n_max = {seq.n_max}")
    meas = make_measure(cfg)
    D = cfg.get("D", meas.D_target)
    measures.save_measure(meas, out / "measure")
    fits, dense_gap = [], 0.0
    for k, beta in enumerate(cfg["beta"]):
        results = []
        for L in Ls:
            r = wkb.wkb_gram_norm(meas, seq, L, beta, D=D)
            results.append(r)
            if L <= cfg["dense_check"]:
                A = wkb.sampling_matrix(meas, seq, np.arange(L + 1), beta)
                ref = wkb.dense_lambda_max(A)
                dense_gap = max(dense_gap, abs(r.lambda_max - ref) / ref)
        wkb.write_results(results, out / f"wkb_{k}.csv")
        fits.append(wkb.scaling_fit(results))
    slope = max(f.slope for f in fits)
    bound = (1.0 - D) + 0.1
    s = _summary(
        "wkb-bench",
        fingerprint=seq.fingerprint(),
        gamma=_seq_gamma(seq, cfg),
        D=D,
        slope=slope,
        slope_bound=bound,
        max_ratio=max(f.max_ratio for f in fits),
        top_octave_trend=max(f.top_octave_trend for f in fits),
        dense_rel_gap=dense_gap,
        passed=bool(slope <= bound and dense_gap <= 1e-6),
    )
    return s, EXIT_OK


def cmd_partition_diag(cfg, out: Path):
    seq = make_sequence(cfg)
    gamma = _seq_gamma(seq, cfg)
    D = cfg["D"]
    plan = coeffs.dyadic_partition(seq)
    rows = coeffs.block_diagnostics(seq, plan, D, gamma=gamma)
    fields = ["n", "lo", "hi", "dx", "l1", "l2", "weighted", "goal", "goal2", "N_n", "window", "cells", "over_budget", "dichotomy"]
    dich_ok = True
    with open(out / "partition.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            try:
                cells = coeffs.adaptive_partition(seq, (row["lo"], row["hi"]), row["N_n"], cfg["j"])
                ok = coeffs.verify_dichotomy(seq, cells)
                extra = [len(cells.points) - 1, int(cells.over_budget), int(ok)]
            except OverflowError:
                ok, extra = True, ["", "", ""]
            dich_ok &= ok
            w.writerow([row[f] if isinstance(row[f], int) else repr(float(row[f])) for f in fields[:11]] + extra)
    windows = [r["window"] for r in rows]
    tail = windows[len(windows) // 2 :]
    s = _summary(
        "partition-diag",
        fingerprint=seq.fingerprint(),
        gamma=gamma,
        D=D,
        x=plan.x,
        completed_blocks=len(rows),
        window_tail_ok=bool(tail) and all(0.5 <= v <= 1.0 for v in tail),
        dichotomy_ok=bool(dich_ok),
    )
    s["passed"] = bool(s["window_tail_ok"] and s["dichotomy_ok"])
    return s, EXIT_OK


def cmd_scan(cfg, out: Path):
    seq = make_sequence(cfg)
    n = cfg.get("N_max", seq.n_max)
    if n > seq.n_max:
        raise ConfigError("N_max exceeds the sequence length")
    etas, h = badset.standard_grid(cfg["grid"], cfg["gap"])
    gamma = _seq_gamma(seq, cfg)
    rep = badset.scan(seq, etas, n, cfg["beta"], workers=cfg["workers"], gamma=gamma)
    badset.write_scan(rep, out / "scan.csv")
    factors = cfg.get("factors") or badset.default_factors(cfg["grid"])
    levels = []
    for k, lm in enumerate(sorted(cfg["log_M"])):
        cells = badset.superlevel_set(rep, math.exp(lm))
        fit = badset.box_dimension(cells, factors, h)
        badset.write_dimension(fit, out / f"dimension_{k}.csv")
        levels.append(
            {"log_M": lm, "fraction": cells.size / etas.size, "box_dimension": fit.slope, "raw_slope": fit.raw_slope, "r2": fit.r2, "empty": fit.empty}
        )
    fracs = [lv["fraction"] for lv in levels]
    monotone = all(a >= b for a, b in zip(fracs, fracs[1:]))
    top = levels[-1]["box_dimension"]
    bound = (1.0 - gamma) + 0.15 if gamma is not None else None
    s = _summary(
        "scan",
        fingerprint=seq.fingerprint(),
        gamma=gamma,
        N_max=n,
        grid=cfg["grid"],
        levels=levels,
        box_dimension=top,
        dimension_bound=bound,
        fraction_monotone=monotone,
        failed=int(rep.failed.sum()),
        passed=bool(monotone and (bound is None or top <= bound) and not rep.any_failed),
    )
    return s, EXIT_NUMERIC if rep.any_failed else EXIT_OK


REPORT_FIELDS = ["source", "kind", "gamma", "D", "slope", "max_ratio", "box_dimension", "passed"]


def _summary_paths(inputs):
    for p in inputs:
        p = Path(p)
        yield p / "summary.json" if p.is_dir() else p


def cmd_report(cfg, out: Path):
    rows, versions = [], set()
    for p in _summary_paths(cfg["inputs"]):
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{p}: cannot read artifact: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}:{exc.lineno}: {exc.msg}") from None
        ver = data.get("artifact_version") if isinstance(data, dict) else None
        if ver != ARTIFACT_VERSION:
            raise VersionError(f"{p}: artifact version {ver!r} is not {ARTIFACT_VERSION!r}")
        versions.add(ver)
        rows.append({"source": str(p), **{k: data.get(k) for k in REPORT_FIELDS[1:]}})
    with open(out / "report.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in rows:
            w.writerow(["" if r[k] is None else (int(r[k]) if isinstance(r[k], bool) else r[k]) for k in REPORT_FIELDS])
    s = _summary("report", rows=len(rows), passed=all(bool(r["passed"]) for r in rows))
    return s, EXIT_OK


HANDLERS = {
    "gen": cmd_gen,
    "evolve": cmd_evolve,
    "prufer-check": cmd_prufer_check,
    "wkb-bench": cmd_wkb_bench,
    "partition-diag": cmd_partition_diag,
    "scan": cmd_scan,
    "report": cmd_report,
}


def _input_files(cfg):
    files = [cfg.get("seq_file"), cfg.get("measure_file")]
    if cfg.get("seq_file", "").endswith(".json"):
        files.append(str(Path(cfg["seq_file"]).with_suffix(".csv")))
    files += [str(p) for p in _summary_paths(cfg.get("inputs", []))]
    return {f: sha256_file(f) for f in files if f and Path(f).is_file()}


def run(command: str, cfg: dict) -> int:
    """Execute one resolved configuration; writes artifacts and the manifest."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    inputs = _input_files(cfg)
    summary, code = HANDLERS[command](cfg, out)
    _write_json(out / "summary.json", summary)
    artifacts = {p.name: sha256_file(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "package_version": __version__,
        "command": command,
        "config": cfg,
        "inputs": inputs,
        "artifacts": artifacts,
        "status": "ok" if code == EXIT_OK else "numeric_failure",
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    _write_json(out / "manifest.json", manifest)
    return code


def replay(manifest_path, out=None, workers=None) -> int:
    """Rerun a manifest into ``out`` and compare artifact hashes."""
    manifest_path = Path(manifest_path)
    try:
        man = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{manifest_path}: cannot read manifest: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{manifest_path}:{exc.lineno}: {exc.msg}") from None
    if man.get("artifact_version") != ARTIFACT_VERSION:
        raise VersionError(f"{manifest_path}: artifact version {man.get('artifact_version')!r} is not {ARTIFACT_VERSION!r}")
    command = man["command"]
    flags = {k: v for k, v in man["config"].items()}
    flags["out"] = str(out) if out is not None else str(manifest_path.parent) + "-replay"
    if workers is not None:
        flags["workers"] = int(workers)
    if Path(flags["out"]).resolve() == manifest_path.parent.resolve():
        raise ConfigError("replay output directory must differ from the manifest's directory")
    cfg, _ = resolve(command, flags)
    code = run(command, cfg)
    fresh = json.loads((Path(cfg["out"]) / "manifest.json").read_text(encoding="utf-8"))["artifacts"]
    diff = sorted(k for k in set(fresh) | set(man["artifacts"]) if fresh.get(k) != man["artifacts"].get(k))
    if diff:
        print(f"replay: {len(diff)} artifact(s) differ: {', '.join(diff)}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


# ---------------------------------------------------------------- parser


def _add_flags(p: argparse.ArgumentParser, command: str):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with flat keys; flags override it")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--workers", type=int, default=S, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    if command == "report":
        p.add_argument("inputs", nargs="*", default=S, help="summary.json files or run directories")
        return
    g = p.add_argument_group("sequence")
    g.add_argument("--family", default=S, choices=["power_decay", "power", "random_weighted", "sparse", "free"])
    g.add_argument("--seq-file", dest="seq_file", default=S, help="load the sequence from CSV/JSON instead")
    g.add_argument("--c", type=float, default=S)
    g.add_argument("--delta", type=float, default=S)
    g.add_argument("--gamma", type=float, default=S)
    g.add_argument("--margin", type=float, default=S)
    g.add_argument("--indices", type=int, nargs="+", default=S)
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--n-max", dest="n_max", type=int, default=S)
    if command in ("evolve", "prufer-check", "scan"):
        p.add_argument("--N-max", dest="N_max", type=int, default=S, help="steps to evolve (default n-max)")
    if command in ("evolve", "prufer-check"):
        p.add_argument("--eta", type=float, nargs="+", default=S)
    if command in ("evolve", "prufer-check", "wkb-bench", "scan"):
        p.add_argument("--beta", type=float, nargs="+", default=S)
    if command == "wkb-bench":
        m = p.add_argument_group("measure")
        m.add_argument("--ratio", type=float, default=S)
        m.add_argument("--level", type=int, default=S)
        m.add_argument("--a", type=float, default=S)
        m.add_argument("--b", type=float, default=S)
        m.add_argument("--measure-file", dest="measure_file", default=S)
        p.add_argument("--L", type=int, nargs="+", default=S, help="block lengths (at least 4)")
        p.add_argument("--D", type=float, default=S, help="dimension (default: the measure's)")
        p.add_argument("--dense-check", dest="dense_check", type=int, default=S, help="compare with a dense solver up to this L")
    if command == "partition-diag":
        p.add_argument("--D", type=float, default=S)
        p.add_argument("--j", type=int, default=S, help="refinement depth")
    if command == "scan":
        p.add_argument("--grid", type=int, default=S, help="number of grid angles")
        p.add_argument("--gap", type=float, default=S, help="distance kept from eta = 0")
        p.add_argument("--log-M", dest="log_M", type=float, nargs="+", default=S, help="thresholds, as log M")
        p.add_argument("--factors", type=int, nargs="+", default=S, help="box coarsening factors")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="opuclab", description="Numerical experiments for OPUC transfer matrices.", allow_abbrev=False)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top = ap.add_subparsers(dest="top", required=True, parser_class=_Parser)
    runp = top.add_parser("run", help="run one experiment", allow_abbrev=False)
    cmds = runp.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for c in COMMANDS:
        _add_flags(cmds.add_parser(c, allow_abbrev=False), c)
    _add_flags(top.add_parser("report", help="alias of 'run report'", allow_abbrev=False), "report")
    rp = top.add_parser("replay", help="rerun a manifest and compare artifact hashes", allow_abbrev=False)
    rp.add_argument("manifest")
    rp.add_argument("--out")
    rp.add_argument("--workers", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.top == "replay":
            return replay(args.manifest, args.out, args.workers)
        command = "report" if args.top == "report" else args.command
        flags = {k: v for k, v in vars(args).items() if k not in ("top", "command", "config")}
        cfg, _ = resolve(command, flags, args.config)
        return run(command, cfg)
    except VersionError as exc:
        print(f"opuclab: error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except (ConfigError, ValueError, IndexError, OverflowError, KeyError, FileNotFoundError) as exc:
        print(f"opuclab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFailure, FloatingPointError, wkb.PowerIterationError) as exc:
        print(f"opuclab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
