"""Command-line harness: ``run``, ``list``, ``sweep`` and ``bridge``.

Exit status is 0 when every enabled check passes, 1 when a check fails
(or a solver raises), and 2 for usage or validation errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import yaml

from .errors import BSDELabError, ConfigError

log = logging.getLogger("bsdelab")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BRIDGE_CASES = ("heat_baseline", "discounting", "gaussian_measure", "american_put_style", "trigonometric_bridge")


def bundled_configs() -> dict:
    """``{case name: path}`` of the YAML files shipped with the package."""
    root = resources.files("bsdelab") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".yaml")}


def _resolve(config: str) -> str:
    p = Path(config)
    if p.exists():
        return str(p)
    bundled = bundled_configs()
    if config in bundled:
        return str(bundled[config])
    return config


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _run_one(cfg, out_dir, svg: bool):
    from .cases import CATALOG

    t0 = time.perf_counter()
    result = CATALOG[cfg.case].run(cfg)
    if out_dir is not None:
        echo = cfg.to_dict()
        echo.pop("output", None)
        result.write(out_dir, svg=svg, config=echo)
    return result, time.perf_counter() - t0


def _print_result(result, elapsed: float, out_dir) -> None:
    status = "PASS" if result.passed else "FAIL"
    print(f"{result.case}: {status} ({elapsed:.1f} s)")
    for name, ok in sorted(result.checks.items()):
        print(f"  {'ok  ' if ok else 'FAIL'} {name}")
    if out_dir is not None:
        print(f"  artifacts in {out_dir}")


def _load(args, **kw):
    from .config import load_config

    return load_config(_resolve(args.config), seed=args.seed, output=args.out, **kw)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = cfg.output or f"out/{cfg.case}"
    result, dt = _run_one(cfg, out, args.svg)
    _print_result(result, dt, out)
    return EXIT_PASS if result.passed else EXIT_FAIL


def cmd_list(args) -> int:
    from .cases import list_cases

    rows = list_cases(args.filter or "")
    for name, desc, claims in rows:
        print(f"{name}\n    {desc}\n    exercises: {claims}")
    return EXIT_PASS


def _parse_value(text: str):
    return yaml.safe_load(text)


def _set_path(d: dict, path: list, value) -> dict:
    out = copy.deepcopy(d)
    node = out
    for p in path[:-1]:
        node = node.setdefault(p, {})
    node[path[-1]] = value
    return out


def _sweep_worker(payload):
    text, source, seed, out, svg = payload
    from .config import parse_config

    cfg = parse_config(text, source=source, seed=seed, output=out)
    result, dt = _run_one(cfg, out, svg)
    return result.summary(), dt


def cmd_sweep(args) -> int:
    from .config import load_config
    from .report import Table

    path = _resolve(args.config)
    base = load_config(path, seed=args.seed)
    values = [_parse_value(v) for v in args.values.split(",")]
    keys = args.param.split(".")
    out_root = Path(args.out or f"out/{base.case}_sweep")
    payloads = []
    for i, v in enumerate(values):
        raw = _set_path(base.to_dict(), keys, v)
        raw.pop("output", None)
        text = yaml.safe_dump(raw, sort_keys=True)
        # validate every variant before running any of them
        from .config import parse_config
        try:
            parse_config(text, source=f"{path} [{args.param}={v}]")
        except ConfigError as exc:
            raise ConfigError(f"{args.param}={v!r}: {exc}") from None
        payloads.append((text, path, base.seed, str(out_root / f"{i:03d}"), args.svg))
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(payloads))) as ex:
            results = list(ex.map(_sweep_worker, payloads))
    else:
        results = [_sweep_worker(p) for p in payloads]
    metric_names = sorted({k for s, _ in results for k, v in s["metrics"].items() if isinstance(v, (int, float))})
    check_names = sorted({k for s, _ in results for k in s["checks"]})
    tab = Table([args.param, "passed"] + metric_names + [f"check_{c}" for c in check_names])
    ok = True
    for v, (s, dt) in zip(values, results):
        tab.add(v, s["passed"], *[s["metrics"].get(m, float("nan")) for m in metric_names],
                *[s["checks"].get(c, False) for c in check_names])
        ok = ok and s["passed"]
        print(f"{args.param}={v}: {'PASS' if s['passed'] else 'FAIL'} ({dt:.1f} s)")
    out_root.mkdir(parents=True, exist_ok=True)
    tab.write(out_root / "sweep.csv")
    (out_root / "summary.json").write_text(json.dumps({"case": base.case, "param": args.param,
                                                       "values": values, "passed": ok,
                                                       "runs": [s for s, _ in results]},
                                                      indent=2, sort_keys=True) + "\n")
    print(f"sweep table in {out_root / 'sweep.csv'}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_bridge(args) -> int:
    from .config import config_for_case, load_config

    if args.config:
        cfgs = [_load(args)]
    else:
        cfgs = [config_for_case(c, seed=args.seed) for c in BRIDGE_CASES]
    root = Path(args.out or "out/bridge")
    ok = True
    jobs = [(c, str(root / c.case) if not args.config or not c.output else c.output) for c in cfgs]
    for cfg, out in jobs:
        result, dt = _run_one(cfg, out, args.svg)
        _print_result(result, dt, out)
        bridge_csv = Path(out) / "bridge.csv"
        if bridge_csv.exists():
            print(bridge_csv.read_text().rstrip())
        ok = ok and result.passed
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsdelab", description="Backward SDE / obstacle PDE experiment harness")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", required=need_config, help="YAML file or bundled case name")
        sp.add_argument("--seed", type=_u64, default=None, help="override the configured seed")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--jobs", type=_positive, default=1, help="worker processes")
        sp.add_argument("--svg", action="store_true", help="also write SVG plots")

    common(sub.add_parser("run", help="run one experiment"))
    ls = sub.add_parser("list", help="list built-in cases")
    ls.add_argument("filter", nargs="?", default="", help="substring filter on case names")
    sw = sub.add_parser("sweep", help="vary one configuration parameter")
    common(sw)
    sw.add_argument("--param", required=True, help="dotted key, e.g. grid.n_steps")
    sw.add_argument("--values", required=True, help="comma-separated values")
    common(sub.add_parser("bridge", help="Feynman-Kac cross-validation suite"), need_config=False)
    return p


COMMANDS = {"run": cmd_run, "list": cmd_list, "sweep": cmd_sweep, "bridge": cmd_bridge}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        src = getattr(args, "config", None)
        print(f"error: {src + ': ' if src else ''}{exc}", file=sys.stderr)
        return EXIT_USAGE
    except BSDELabError as exc:
        frames = traceback.extract_tb(exc.__traceback__)
        mod = Path(frames[-1].filename).stem if frames else type(exc).__module__
        ctx = {k: getattr(exc, k) for k in ("step", "node", "n", "t", "x") if getattr(exc, k, None) is not None}
        extra = f" {ctx}" if ctx else ""
        print(f"solver error [{type(exc).__name__} from {mod}]{extra}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
