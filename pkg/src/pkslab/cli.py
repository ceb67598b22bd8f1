"""pks-lab: run one experiment from a JSON config into an output bundle.

    pks-lab <experiment> --config f.json [--seed N] [--out DIR] [--deterministic]

The bundle (data files plus summary.json) is built in a temporary sibling
directory and renamed into place, so a crashed run leaves nothing at DIR.
Exit codes: 0 all gating claims hold, 2 a gating claim failed or the
numerics broke down, 1 bad input.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

EXIT_OK, EXIT_INPUT, EXIT_SCIENCE = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")
EXPERIMENT_NAMES = ("simulate2d", "rescaled", "jko", "gelfand", "pme", "zeta", "shoot", "sweep",
                    "inequalities", "constants")
DEFAULT_SEED = 20240611


class InputError(ValueError):
    pass


def set_threads(deterministic: bool) -> None:
    """Pin BLAS threads; must run before numpy is first imported."""
    n = "1" if deterministic else os.environ.get("PKS_LAB_THREADS")
    if n:
        for var in THREAD_VARS:
            os.environ[var] = n


def load_schema() -> dict:
    from importlib.resources import files
    return json.loads(files("pkslab").joinpath("schemas/experiment.schema.json").read_text())


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    import jsonschema
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        loc = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise InputError(f"config invalid at {loc}: {exc.message}") from exc


def versions() -> dict:
    import numpy
    import scipy
    try:
        from importlib.metadata import version
        own = version("pkslab")
    except Exception:
        own = "unknown"
    return {"pkslab": own, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ---------------------------------------------------------------------------
# sweeps

def _set_path(obj, dotted: str, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        obj = obj[int(k)] if isinstance(obj, list) else obj.setdefault(k, {})
    last = keys[-1]
    if isinstance(obj, list):
        obj[int(last)] = value
    else:
        obj[last] = value


def _get_path(obj, dotted: str):
    for k in dotted.split("."):
        if isinstance(obj, list):
            obj = obj[int(k)]
        elif isinstance(obj, dict) and k in obj:
            obj = obj[k]
        else:
            return None
    return obj


def _sweep_point(args):
    idx, cfg, out, seed = args
    code, summary = execute(cfg, Path(out), seed)
    return idx, code, summary


def run_sweep(params: dict, seed: int, bundle, deterministic: bool) -> None:
    from . import io
    base = params["base"]
    if base.get("experiment") == "sweep":
        raise InputError("nested sweeps are not supported")
    validate_config(base)
    axes = list(params["grid"].items())
    collect = params.get("collect", [])
    points = list(itertools.product(*[v for _, v in axes])) if axes else []
    if axes and any(len(v) == 0 for _, v in axes):
        points = []
    jobs = []
    for i, vals in enumerate(points):
        cfg = copy.deepcopy(base)
        for (path, _), v in zip(axes, vals):
            _set_path(cfg, path, v)
        jobs.append((i, cfg, str(bundle.path(f"point_{i:03d}")), seed))
    workers = 1 if deterministic else int(params.get("workers", 1))
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            done = list(ex.map(_sweep_point, jobs))
    else:
        done = [_sweep_point(j) for j in jobs]
    rows = []
    for (i, code, summary), vals in zip(sorted(done, key=lambda x: x[0]), points):
        row = {"point": i, **{p: v for (p, _), v in zip(axes, vals)}, "exit_code": code}
        for c in collect:
            val = _get_path(summary, c)
            row[c] = json.dumps(val, sort_keys=True) if isinstance(val, (dict, list)) else val
        rows.append(row)
        bundle.claim(f"point_{i:03d}.exit_code", code, {"expected": EXIT_OK}, code == EXIT_OK,
                     f"point_{i:03d}/summary.json", "exit status of the sweep point")
        if code == EXIT_INPUT:
            raise InputError(f"sweep point {i}: {summary.get('error')}")
    cols = ["point"] + [p for p, _ in axes] + ["exit_code"] + collect
    io.write_rows_csv(bundle.path("sweep.csv"), rows, cols)
    bundle.results["sweep"] = {"points": len(rows), "axes": [p for p, _ in axes]}


# ---------------------------------------------------------------------------
# running

def _run_into(cfg: dict, root: Path, seed: int, deterministic: bool):
    from .experiments import EXPERIMENTS, Bundle
    bundle = Bundle(root)
    name = cfg["experiment"]
    if name == "sweep":
        run_sweep(cfg["params"], seed, bundle, deterministic)
    else:
        EXPERIMENTS[name](cfg["params"], seed, bundle)
    return bundle


def execute(cfg: dict, out: Path, seed: int | None = None, deterministic: bool = False,
            keep_failed: bool = False) -> tuple[int, dict]:
    """Run ``cfg`` into ``out`` atomically; return (exit code, summary dict)."""
    from . import io
    from .density import TruncationError
    out = Path(out)
    seed = int(cfg.get("seed", DEFAULT_SEED) if seed is None else seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    start = time.perf_counter()
    summary = {"experiment": cfg.get("experiment"), "seed": seed, "config": cfg, "deterministic": deterministic}
    try:
        bundle = _run_into(cfg, tmp, seed, deterministic)
    except (InputError, KeyError, TypeError, TruncationError, FileNotFoundError) as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        return EXIT_INPUT, {**summary, "error": f"{type(exc).__name__}: {exc}"}
    except ValueError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        return EXIT_INPUT, {**summary, "error": f"{type(exc).__name__}: {exc}"}
    except (RuntimeError, ArithmeticError, FloatingPointError) as exc:
        if not keep_failed:
            shutil.rmtree(tmp, ignore_errors=True)
        return EXIT_SCIENCE, {**summary, "error": f"{type(exc).__name__}: {exc}"}
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    claims = [c.to_dict() for c in bundle.claims]
    summary.update({
        "versions": versions(),
        "wall_time": time.perf_counter() - start,
        "passed": bundle.passed,
        "claims": claims,
        "results": bundle.results,
        "files": sorted(bundle.files),
    })
    io.write_json(tmp / "summary.json", summary)
    if out.exists():
        trash = Path(tempfile.mkdtemp(prefix=f".{out.name}.old.", dir=out.parent))
        os.replace(out, trash / "old")
        os.replace(tmp, out)
        shutil.rmtree(trash, ignore_errors=True)
    else:
        os.replace(tmp, out)
    return (EXIT_OK if bundle.passed else EXIT_SCIENCE), json.loads(io.to_json(summary))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pks-lab", description="Patlak-Keller-Segel numerical experiments")
    p.add_argument("experiment", choices=EXPERIMENT_NAMES)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", default=None, help="bundle directory (default runs/<experiment>)")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded BLAS and sequential sweeps")
    p.add_argument("--quiet", action="store_true")
    return p


def _report(code: int, summary: dict, out: Path, quiet: bool) -> None:
    if quiet:
        return
    if "error" in summary:
        print(f"error: {summary['error']}", file=sys.stderr)
        return
    for c in summary.get("claims", []):
        mark = "ok  " if c["passed"] else ("FAIL" if c["gating"] else "info")
        print(f"{mark} {c['name']} = {c['value']!r}")
    print(f"bundle: {out} (exit {code})")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    set_threads(args.deterministic)
    out = Path(args.out) if args.out else Path("runs") / args.experiment
    try:
        cfg = load_config(args.config)
        cfg.setdefault("experiment", args.experiment)
        if cfg["experiment"] != args.experiment:
            raise InputError(f"config is for {cfg['experiment']!r}, not {args.experiment!r}")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    code, summary = execute(cfg, out, args.seed, args.deterministic)
    _report(code, summary, out, args.quiet)
    return code


if __name__ == "__main__":
    sys.exit(main())
