"""Command-line front end.

Usage errors exit with status 2 and name the offending flag; numerical and
I/O failures exit with status 1.  Every artifact embeds the fully resolved
configuration, so ``--config <artifact>`` re-executes a run.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._io import dumps_csv, dumps_json, to_jsonable
from .asymptotics import audit_local_limit, logdet_expansion, remainder_bound
from .core import BlockDims, HaarBlocksError, Seed, derive_replica_seed, gram_eigenvalues, make_rng
from .density import (
    TailQuery,
    log_block_density,
    log_density_ratio_from_eigenvalues,
    log_scaled_density,
    marginal_tail,
)
from .experiments import EXPERIMENTS, SCHEMA_VERSION, Schedule, TestFunction
from .rates import (
    GaussianSpec,
    Histogram,
    kl_gaussian,
    kl_histogram,
    levy_distance,
    mdp_rate,
    orthogonal_ldp_rate,
    stiefel_ldp_rate,
)
from .sampling import sample_blocks

__all__ = ["RunConfig", "UsageError", "parse_args", "execute", "main"]

MAX_SAMPLING_N = 100_000
SEED_ENV = "HAARBLOCKS_SEED"
COMMANDS = ("sample", "density", "expand", "audit-lll", "rate", "experiment")
RATE_KINDS = ("orthogonal", "mdp", "stiefel", "kl-gaussian", "kl-histogram", "levy")
SAMPLING_EXPERIMENTS = ("logmgf", "ldp-decay", "as-trace", "mdp-block", "concentration")


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: Seed = field(default_factory=lambda: Seed(0))
    output_path: str | None = None
    output_format: str = "json"
    threads: int | None = None

    def resolved(self) -> dict:
        """The config as embedded in artifacts (thread count excluded: it never changes results)."""
        return {
            "command": self.command,
            **self.params,
            "seed": self.seed.value,
            "format": self.output_format,
        }


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _int_value(text, flag: str) -> int:
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise UsageError(flag, f"expected an integer, got {text!r}") from None
    if not math.isfinite(x) or x != int(x):
        raise UsageError(flag, f"expected an integer, got {text!r}")
    return int(x)


def _float_value(text, flag: str) -> float:
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise UsageError(flag, f"expected a number, got {text!r}") from None
    if not math.isfinite(x):
        raise UsageError(flag, f"expected a finite number, got {text!r}")
    return x


def _int_list(value, flag: str) -> list[int]:
    items = value if isinstance(value, list) else str(value).split(",")
    items = [i for i in items if str(i).strip() != ""]
    if not items:
        raise UsageError(flag, "expected at least one value")
    return [_int_value(i, flag) for i in items]


def _matrix(value, flag: str) -> list:
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as exc:
            raise UsageError(flag, f"not a JSON matrix: {exc}") from None
    arr = np.asarray(value, dtype=np.float64) if value is not None else None
    if arr is None or arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise UsageError(flag, "expected a JSON list of equal-length rows of finite numbers")
    return arr.tolist()


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed")
    common.add_argument("--threads")
    common.add_argument("--out")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--config")

    parser = _Parser(prog="haarblocks", description="Haar block densities, asymptotics and deviation experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, flags):
        p = sub.add_parser(name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS)
        for f in flags:
            p.add_argument(f"--{f}", dest=f.replace("-", "_"))
        return p

    add("sample", "sample scaled upper-left blocks", ["N", "m", "k", "replicas"])
    add("density", "evaluate a block density or an entry tail", ["N", "m", "k", "A", "t", "b", "scaling"]).add_argument(
        "--scaled", action="store_true", help="evaluate the density of sqrt(N) times the block"
    )
    add("expand", "log-det expansion of a scaled block", ["N", "m", "k", "A"])
    add("audit-lll", "audit the uniform local limit", ["N", "m", "k", "R", "R-exponent", "probes"])
    add("rate", "evaluate a rate function", ["kind", "input"])
    exp = add(
        "experiment",
        "run a scheduled experiment",
        ["N", "m", "k", "t", "b", "alpha", "epsilon", "replicas", "R", "R-exponent", "f"],
    )
    exp.add_argument("name", choices=sorted(EXPERIMENTS))
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError("--config", f"cannot read {path}: {exc}") from None
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]  # a previous run's artifact
    if not isinstance(data, dict):
        raise UsageError("--config", "config file must hold a JSON object")
    # null entries are derived defaults; let validation recompute them
    return {str(k).replace("-", "_"): v for k, v in data.items() if v is not None}


_ALLOWED = {
    "sample": {"N", "m", "k", "replicas"},
    "density": {"N", "m", "k", "A", "t", "b", "scaling", "scaled"},
    "expand": {"N", "m", "k", "A"},
    "audit-lll": {"N", "m", "k", "R", "R_exponent", "probes"},
    "rate": {"kind", "input"},
    "experiment": {"name", "N", "m", "k", "t", "b", "alpha", "epsilon", "replicas", "R", "R_exponent", "f", "test_function"},
}
_RUNTIME = {"seed", "threads", "out", "format", "config", "command"}


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate ``argv``; raises :class:`UsageError` on invalid values."""
    ns = vars(_build_parser().parse_args(argv))
    command = ns.pop("command")
    raw: dict = {}
    if "config" in ns:
        cfg = _load_config_file(ns["config"])
        cfg_command = cfg.pop("command", command)
        if cfg_command != command:
            raise UsageError("--config", f"config is for command {cfg_command!r}, not {command!r}")
        unknown = set(cfg) - _ALLOWED[command] - _RUNTIME
        if unknown:
            raise UsageError("--config", f"unknown keys {sorted(unknown)} for {command}")
        if command == "experiment" and cfg.get("name", ns.get("name")) != ns.get("name"):
            raise UsageError("--config", f"config is for experiment {cfg.get('name')!r}")
        cfg.pop("test_function", None)
        raw.update(cfg)
    raw.update({k: v for k, v in ns.items() if k != "config"})

    seed = _seed(raw.pop("seed", None))
    threads = raw.pop("threads", None)
    if threads is not None:
        threads = _int_value(threads, "--threads")
        if threads < 1:
            raise UsageError("--threads", f"must be >= 1, got {threads}")
    out = raw.pop("out", None)
    fmt = raw.pop("format", "json")
    if fmt not in ("json", "csv"):
        raise UsageError("--format", f"must be json or csv, got {fmt!r}")
    params = _VALIDATORS[command](raw)
    return RunConfig(command, params, seed, out, fmt, threads)


def _seed(value) -> Seed:
    flag = "--seed"
    if value is None:
        value = os.environ.get(SEED_ENV)
        flag = SEED_ENV
        if value is None:
            return Seed(0)
    v = _int_value(value, flag)
    if not 0 <= v < 2**64:
        raise UsageError(flag, f"seed must be in [0, 2^64), got {v}")
    return Seed(v)


def _dims(raw: dict, N: int, default_m=1, default_k=1) -> tuple[int, int]:
    m = _int_value(raw.get("m", default_m), "--m")
    k = _int_value(raw.get("k", default_k), "--k")
    if m < 1:
        raise UsageError("--m", f"must be >= 1, got {m}")
    if k < 1:
        raise UsageError("--k", f"must be >= 1, got {k}")
    if N < m + k:
        raise UsageError("--N", f"N = {N} is below m + k = {m + k}")
    return m, k


def _single_N(raw: dict, cap: int | None = None) -> int:
    if "N" not in raw:
        raise UsageError("--N", "required")
    Ns = _int_list(raw["N"], "--N")
    if len(Ns) != 1:
        raise UsageError("--N", "expected a single value")
    N = Ns[0]
    if cap is not None and N > cap:
        raise UsageError("--N", f"sampling commands cap N at {cap}, got {N}")
    return N


def _validate_sample(raw):
    N = _single_N(raw, MAX_SAMPLING_N)
    m, k = _dims(raw, N)
    replicas = _int_value(raw.get("replicas", 1), "--replicas")
    if replicas < 1:
        raise UsageError("--replicas", f"must be >= 1, got {replicas}")
    return {"N": N, "m": m, "k": k, "replicas": replicas}


def _validate_density(raw):
    N = _single_N(raw)
    if "t" in raw:
        t = _float_value(raw["t"], "--t")
        scaling = raw.get("scaling", "unscaled")
        if scaling not in ("unscaled", "sqrtN", "betaN"):
            raise UsageError("--scaling", f"must be unscaled, sqrtN or betaN, got {scaling!r}")
        b = _float_value(raw["b"], "--b") if "b" in raw else None
        if scaling == "betaN" and (b is None or not 0 < b < 0.5):
            raise UsageError("--b", "betaN scaling needs 0 < b < 1/2")
        if N < 3:
            raise UsageError("--N", f"entry tails need N >= 3, got {N}")
        return {"N": N, "t": t, "scaling": scaling, "b": b}
    m, k = _dims(raw, N)
    A = _matrix(raw["A"], "--A") if "A" in raw else np.zeros((m, k)).tolist()
    if np.shape(A) != (m, k):
        raise UsageError("--A", f"expected shape {(m, k)}, got {np.shape(A)}")
    return {"N": N, "m": m, "k": k, "A": A, "scaled": bool(raw.get("scaled", False))}


def _validate_expand(raw):
    N = _single_N(raw)
    m, k = _dims(raw, N)
    A = _matrix(raw["A"], "--A") if "A" in raw else np.ones((m, k)).tolist()
    if np.shape(A) != (m, k):
        raise UsageError("--A", f"expected shape {(m, k)}, got {np.shape(A)}")
    return {"N": N, "m": m, "k": k, "A": A}


def _validate_audit(raw):
    Ns = _int_list(raw.get("N", ""), "--N")
    m = k = None
    for N in Ns:
        m, k = _dims(raw, N, 2, 2)
    probes = _int_value(raw.get("probes", 1000), "--probes")
    if probes < 1:
        raise UsageError("--probes", f"must be >= 1, got {probes}")
    R = _float_value(raw["R"], "--R") if raw.get("R") is not None else None
    r_exp = _float_value(raw.get("R_exponent", 0.2), "--R-exponent") if R is None else None
    for N in Ns:
        radius = R if R is not None else N**r_exp
        if not 0 <= radius * radius < N:
            raise UsageError("--R" if R is not None else "--R-exponent", f"need 0 <= R^2 < N, got R={radius} at N={N}")
    return {"N": Ns, "m": m, "k": k, "R": R, "R_exponent": r_exp, "probes": probes}


def _validate_rate(raw):
    kind = raw.get("kind")
    if kind not in RATE_KINDS:
        raise UsageError("--kind", f"must be one of {', '.join(RATE_KINDS)}, got {kind!r}")
    if "input" not in raw:
        raise UsageError("--input", "required (JSON object or path to a JSON file)")
    data = raw["input"]
    if isinstance(data, str):
        try:
            if os.path.exists(data):
                with open(data, encoding="utf-8") as fh:
                    data = json.load(fh)
            else:
                data = json.loads(data)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError("--input", f"cannot parse input: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("--input", "input must be a JSON object")
    needed = {
        "orthogonal": ("T",),
        "mdp": ("A",),
        "stiefel": ("mean", "covariance"),
        "kl-gaussian": ("mean", "covariance"),
        "kl-histogram": ("edges", "masses"),
        "levy": ("sample",),
    }[kind]
    missing = [key for key in needed if key not in data]
    if missing:
        raise UsageError("--input", f"{kind} input needs keys {list(needed)}, missing {missing}")
    if kind in ("orthogonal", "mdp"):
        data = {needed[0]: _matrix(data[needed[0]], "--input")}
    return {"kind": kind, "input": data}


def _validate_experiment(raw):
    name = raw["name"]
    Ns = _int_list(raw.get("N", ""), "--N")
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise UsageError("--N", f"values must be strictly increasing, got {Ns}")
    if Ns[0] < 2:
        raise UsageError("--N", f"values must be >= 2, got {Ns}")
    if name in SAMPLING_EXPERIMENTS and Ns[-1] > MAX_SAMPLING_N:
        raise UsageError("--N", f"sampling experiments cap N at {MAX_SAMPLING_N}, got {Ns[-1]}")
    p: dict = {"name": name, "N": Ns}
    p["replicas"] = _int_value(raw.get("replicas", 1000), "--replicas")
    if p["replicas"] < 1:
        raise UsageError("--replicas", f"must be >= 1, got {p['replicas']}")

    def need_float(key, flag, default=None, check=None, why=""):
        if key not in raw and default is None:
            raise UsageError(flag, f"required for experiment {name}")
        x = _float_value(raw.get(key, default), flag)
        if check is not None and not check(x):
            raise UsageError(flag, f"{why}, got {x}")
        return x

    if name in ("logmgf", "ldp-decay", "as-trace") or (name == "concentration" and "m" not in raw):
        p["alpha"] = need_float("alpha", "--alpha", 0.5, lambda a: 0 < a < 1, "alpha must lie in (0, 1)")
    if name in ("mdp-entry", "mdp-block"):
        p["b"] = need_float("b", "--b", 0.25, lambda b: 0 < b < 0.5, "b must lie in (0, 1/2)")
        p["t"] = need_float("t", "--t", 1.0, lambda t: t >= 0 if name == "mdp-block" else t > 0, "t out of range")
    if name == "logmgf":
        try:
            f = TestFunction.parse(str(raw.get("f", "tanh:0.5")))
        except (ValueError, HaarBlocksError) as exc:
            raise UsageError("--f", str(exc)) from None
        p["f"] = str(raw.get("f", "tanh:0.5"))
        p["test_function"] = {"kind": f.kind, "a": f.a, "c": f.c}
    if name == "ldp-decay":
        p["epsilon"] = need_float("epsilon", "--epsilon", 0.05, lambda e: e > 0, "epsilon must be > 0")
    if name in ("mdp-block", "concentration"):
        if name == "mdp-block" or "m" in raw or "k" in raw:
            for N in Ns:
                p["m"], p["k"] = _dims(raw, N, 2, 2)
    if name == "concentration":
        key = "R_exponent" if "R_exponent" in raw else "R"
        flag = "--R-exponent" if key == "R_exponent" else "--R"
        p["R_exponent"] = need_float(key, flag, 0.15, lambda r: 0 < r < 0.5, "R exponent must lie in (0, 1/2)")
    if "alpha" in p:
        try:
            Schedule(tuple(Ns), p["replicas"], alpha=p["alpha"])
        except HaarBlocksError as exc:
            raise UsageError("--alpha", str(exc)) from None
    return p


_VALIDATORS = {
    "sample": _validate_sample,
    "density": _validate_density,
    "expand": _validate_expand,
    "audit-lll": _validate_audit,
    "rate": _validate_rate,
    "experiment": _validate_experiment,
}


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------


def _run_sample(cfg: RunConfig):
    p = cfg.params
    dims = BlockDims(p["N"], p["m"], p["k"])
    blocks = sample_blocks(dims, p["replicas"], make_rng(cfg.seed))
    rows = [
        {"replica": r, "i": i, "j": j, "value": float(blocks[r, i, j])}
        for r in range(blocks.shape[0])
        for i in range(dims.m)
        for j in range(dims.k)
    ]
    result = {"blocks": blocks}
    return result, rows, f"sampled {p['replicas']} scaled {dims.m}x{dims.k} blocks at N={dims.N}"


def _run_density(cfg: RunConfig):
    p = cfg.params
    if "t" in p:
        q = TailQuery(p["t"], p["scaling"], p["b"])
        lt = marginal_tail(q, p["N"])
        row = {"N": p["N"], "t": p["t"], "scaling": p["scaling"], "log_tail": lt}
        return row, [row], f"log P(entry > t) = {lt:.12g}"
    dims = BlockDims(p["N"], p["m"], p["k"])
    A = np.asarray(p["A"])
    value = log_scaled_density(A, dims) if p["scaled"] else log_block_density(A, dims)
    row = {"log_value": value.log_value, "in_support": value.in_support}
    if p["scaled"] and value.in_support:
        row["log_ratio_to_gaussian"] = float(log_density_ratio_from_eigenvalues(gram_eigenvalues(A), dims))
    return row, [row], f"log density = {value.log_value:.12g}"


def _run_expand(cfg: RunConfig):
    p = cfg.params
    dims = BlockDims(p["N"], p["m"], p["k"])
    B = np.asarray(p["A"])
    brk = logdet_expansion(B, dims).as_dict()
    brk["remainder_bound"] = remainder_bound(float(np.linalg.norm(B)), dims)
    return brk, [brk], f"remainder = {brk['remainder']:.6g}"


def _run_audit(cfg: RunConfig):
    p = cfg.params
    reports = []
    for N in p["N"]:
        R = p["R"] if p["R"] is not None else N ** p["R_exponent"]
        seed = derive_replica_seed(cfg.seed, N)
        reports.append(audit_local_limit(BlockDims(N, p["m"], p["k"]), R, p["probes"], seed).as_dict())
    rows = [{k: v for k, v in r.items() if k != "bound_terms"} for r in reports]
    last = reports[-1]
    return {"reports": reports}, rows, f"sup |log g/phi| = {last['observed']:.6g} at N={last['N']}"


def _run_rate(cfg: RunConfig):
    kind, data = cfg.params["kind"], cfg.params["input"]
    if kind == "orthogonal":
        value = orthogonal_ldp_rate(np.asarray(data["T"]))
    elif kind == "mdp":
        value = mdp_rate(np.asarray(data["A"]))
    elif kind in ("stiefel", "kl-gaussian"):
        spec = GaussianSpec(data["mean"], data["covariance"])
        value = stiefel_ldp_rate(spec) if kind == "stiefel" else kl_gaussian(spec)
    elif kind == "kl-histogram":
        value = kl_histogram(Histogram(data["edges"], data["masses"]))
    else:
        value = levy_distance(np.asarray(data["sample"], dtype=np.float64))
    row = {"kind": kind, "value": value}
    return row, [row], f"{kind} = {value:.12g}"


def _run_experiment(cfg: RunConfig):
    p = cfg.params
    name = p["name"]
    s = Schedule(
        tuple(p["N"]),
        p["replicas"],
        cfg.seed,
        alpha=p.get("alpha"),
        b=p.get("b"),
    )
    th = cfg.threads
    if name == "logmgf":
        report = EXPERIMENTS[name](TestFunction.parse(p["f"]), s, threads=th)
    elif name == "ldp-decay":
        report = EXPERIMENTS[name](p["epsilon"], s, threads=th)
    elif name == "as-trace":
        report = EXPERIMENTS[name](s, threads=th)
    elif name == "mdp-entry":
        report = EXPERIMENTS[name](p["t"], s, threads=th)
    elif name == "mdp-block":
        report = EXPERIMENTS[name](p["t"], p["m"], p["k"], s, threads=th)
    else:
        report = EXPERIMENTS[name](s, p["R_exponent"], p.get("m"), p.get("k"), threads=th)
    body = report.as_dict()
    last = report.rows[-1]
    est = "censored" if last.estimate is None else f"{last.estimate:.6g}"
    summary = f"{name}: {len(report.rows)} rows, last N={last.N} estimate={est} ({report.wall_time:.2f} s)"
    return body, body["rows"], summary


_RUNNERS = {
    "sample": _run_sample,
    "density": _run_density,
    "expand": _run_expand,
    "audit-lll": _run_audit,
    "rate": _run_rate,
    "experiment": _run_experiment,
}


def render(cfg: RunConfig, result, rows) -> str:
    config = cfg.resolved()
    if cfg.output_format == "csv":
        return dumps_csv(rows, {"schema_version": SCHEMA_VERSION, "config": config})
    return dumps_json({"schema_version": SCHEMA_VERSION, "config": config, "result": result})


def execute(cfg: RunConfig) -> int:
    try:
        result, rows, summary = _RUNNERS[cfg.command](cfg)
    except (HaarBlocksError, ValueError, ArithmeticError) as exc:
        print(f"haarblocks: numerical error: {exc}", file=sys.stderr)
        return 1
    text = render(cfg, to_jsonable(result), rows)
    if cfg.output_path is None:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)
        return 0
    try:
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"haarblocks: I/O error writing {cfg.output_path}: {exc}", file=sys.stderr)
        return 1
    print(f"{summary} -> {cfg.output_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else 2
    except UsageError as exc:
        print(f"haarblocks: error: {exc}", file=sys.stderr)
        return 2
    return execute(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
