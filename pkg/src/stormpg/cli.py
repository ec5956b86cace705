"""``stormpg`` command line: ``run``, ``verify`` and ``constants``.

Exit codes: 0 success, 1 check failure (or aborted run), 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .mdp import MdpValidationError, bundled_mdp, load_mdp
from .optimizer import ConfigError, DivergenceError, RunConfig, derive_constants, run, theory_reference
from .oracle import formulas
from .policy import M_G, M_H

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class UsageError(Exception):
    pass


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config: file not found: {path}")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                cfg = tomllib.load(f)
        else:
            with open(path) as f:
                cfg = json.load(f)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"config: cannot parse {path}: {exc}") from exc
    cfg["_base_dir"] = str(path.parent)
    return cfg


def resolve_mdp(cfg: dict):
    if "mdp_path" not in cfg:
        raise UsageError("mdp_path: missing field")
    ref = str(cfg["mdp_path"])
    if ref.startswith("bundled:"):
        return bundled_mdp(ref.split(":", 1)[1])
    p = Path(ref)
    if not p.is_absolute():
        p = Path(cfg.get("_base_dir", ".")) / p
    if not p.exists():
        raise UsageError(f"mdp_path: file not found: {p}")
    return load_mdp(p)


def _seeds(cfg: dict) -> list:
    seeds = cfg.get("seeds", [cfg.get("seed", 0)])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise UsageError("seeds: must be a nonempty list of integers")
    return seeds


def _out_dir(cfg: dict, override) -> Path:
    if override:
        return Path(override)
    if "out_dir" in cfg:
        return Path(cfg["out_dir"])
    if "out_csv" in cfg:
        return Path(cfg["out_csv"]).parent
    return Path("runs")


def _stats(stack: np.ndarray) -> dict:
    q25, q75 = np.percentile(stack, [25, 75], axis=0)
    return {
        "median": np.median(stack, axis=0).tolist(),
        "mean": np.mean(stack, axis=0).tolist(),
        "iqr": (q75 - q25).tolist(),
    }


def _scalar_stats(x: np.ndarray) -> dict:
    q25, q75 = np.percentile(x, [25, 75])
    return {"median": float(np.median(x)), "mean": float(np.mean(x)), "iqr": float(q75 - q25)}


def aggregate(records) -> dict:
    """Per-iteration median/mean/IQR across seeds plus final-suboptimality statistics."""
    n = min(r.n_rows for r in records)
    columns = {}
    for name in records[0].columns:
        if name == "t":
            continue
        columns[name] = _stats(np.stack([np.asarray(r.column(name)[:n], dtype=np.float64) for r in records]))
    final_gap = np.array([r.j_star - r.column("J_exact")[n - 1] for r in records])
    init_gap = np.array([r.j_star - r.column("J_exact")[0] for r in records])
    avg_gap = np.array([r.j_star - float(np.mean(r.column("J_exact")[:n])) for r in records])
    return {
        "n_seeds": len(records),
        "seeds": [r.seed for r in records],
        "rows": n,
        "t": list(range(1, n + 1)),
        "columns": columns,
        "J_star": records[0].j_star,
        "final_suboptimality": _scalar_stats(final_gap),
        "initial_suboptimality": _scalar_stats(init_gap),
        "average_suboptimality": _scalar_stats(avg_gap),
        "total_trajectories": int(sum(int(r.column("trajectories")[-1]) for r in records)),
        "theta_xi_index": {str(r.seed): r.xi_index for r in records},
        "horizon": records[0].horizon,
        "lambda": records[0].lam,
        "mode": records[0].mode,
        "schedule": records[0].schedule_params,
        "theory_bundle": records[0].bundle.as_dict(),
    }


def cmd_run(args) -> int:
    raw = load_config(args.config)
    mdp = resolve_mdp(raw)
    seeds = _seeds(raw)
    base = {k: v for k, v in raw.items() if k not in ("seeds", "mdp_path", "out_csv", "out_dir", "_base_dir")}
    configs = [RunConfig.from_dict({**base, "seed": s}) for s in seeds]
    out = _out_dir(raw, args.out)
    out.mkdir(parents=True, exist_ok=True)

    workers = max(1, args.workers)
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda c: run(mdp, c), configs))
    except DivergenceError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL

    for rec in records:
        rec.to_csv(out / f"run_seed{rec.seed}.csv")
    summary = aggregate(records)
    summary["algorithm"] = configs[0].algorithm
    if configs[0].epsilon is not None:
        mu_f = None
        if "mu_f_restricted" in records[0].columns:
            mu_f = float(np.min([r.column("mu_f_restricted").min() for r in records]))
        summary["theory_reference"] = theory_reference(mdp, configs[0].W, configs[0].epsilon, mu_f)
    (out / "aggregate.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    fs = summary["final_suboptimality"]
    print(f"{len(records)} seed(s) -> {out}; median final J*-J = {fs['median']:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .suites import run_suite

    try:
        mdp = load_mdp(args.mdp) if args.mdp else None
    except (MdpValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid MDP {args.mdp}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    reports = run_suite(args.suite, mdp, args.scale)
    payload = [r.to_dict() for r in reports]
    text = json.dumps(payload, indent=1) + "\n"
    if args.out:
        out = Path(args.out)
        if out.suffix != ".json":
            out.mkdir(parents=True, exist_ok=True)
            out = out / f"verify_{args.suite}_{args.scale}.json"
        out.write_text(text)
    failed = [r for r in reports if r.failed]
    warned = [r for r in reports if r.soft and r.applicable and not r.holds]
    for r in warned:
        print(f"warning: soft check {r.check_name} [{r.instance_id}] lhs={r.lhs:.6g} rhs={r.rhs:.6g}", file=sys.stderr)
    for r in failed:
        print(f"FAILED {r.check_name} [{r.instance_id}] lhs={r.lhs:.6g} rhs={r.rhs:.6g}", file=sys.stderr)
    print(f"{args.suite}/{args.scale}: {len(reports) - len(failed)}/{len(reports)} checks hold")
    return EXIT_FAIL if failed else EXIT_OK


CONSTANT_LABELS = {
    "l_g": "L_g", "g_bound": "G", "sigma": "sigma", "l_smooth": "L", "l_lambda": "L_lambda",
    "c_w": "C_w", "b_sq": "b^2", "c": "c", "m": "m", "eta0": "eta0",
}


def cmd_constants(args) -> int:
    try:
        b = derive_constants(args.m_g, args.m_h, args.gamma, args.H, args.W, args.lam, args.k)
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"inputs: M_g={b.m_g:g} M_h={b.m_h:g} gamma={b.gamma:g} H={b.horizon} W={b.w_bound:g} lambda={b.lam:g} k={b.k:g}")
    for name, label in CONSTANT_LABELS.items():
        print(f"{label} = {getattr(b, name):.12g}    [{formulas.CONSTANT_FORMULAS[name]}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stormpg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an algorithm over one or more seeds")
    r.add_argument("--config", required=True, help="JSON or TOML run configuration")
    r.add_argument("--out", help="output directory for per-seed CSVs and aggregate.json")
    r.add_argument("--workers", type=int, default=1, help="seeds run concurrently (output is identical)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run oracle verification suites")
    v.add_argument("--suite", default="all", choices=["estimators", "weights", "gradients", "bounds", "constants", "all"])
    v.add_argument("--scale", default="small", choices=["small", "full"])
    v.add_argument("--mdp", help="MDP JSON to verify on (default: bundled two-state MDP)")
    v.add_argument("--out", help="JSON report path or directory")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("constants", help="print the theory constants bundle")
    c.add_argument("--m-g", dest="m_g", type=float, default=M_G)
    c.add_argument("--m-h", dest="m_h", type=float, default=M_H)
    c.add_argument("--gamma", type=float, default=0.9)
    c.add_argument("--H", type=int, default=10)
    c.add_argument("--W", type=float, default=1.0)
    c.add_argument("--lambda", dest="lam", type=float, default=0.0)
    c.add_argument("--k", type=float, default=1.0)
    c.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, MdpValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
