"""Command-line entry point: ``qnetsim run|sweep|validate CONFIG``.

CONFIG is a TOML scenario file, or ``preset:NAME`` for one of the shipped
presets (``preset:fig4_chain``, ``preset:fig5_sweep``).

Exit codes: 0 success, 1 some sweep runs failed, 2 invalid configuration,
3 simulation error.
"""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

from . import bundle
from . import config as config_mod
from .simcore import SimulationError

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2
EXIT_SIM = 3


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("qnetsim.presets").iterdir() if p.name.endswith(".toml"))


def _source(spec: str) -> tuple[dict, str, str]:
    """Raw TOML dict, its text and a display name for CONFIG."""
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1].removesuffix(".toml")
        if name not in preset_names():
            raise config_mod.ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        text = resources.files("qnetsim.presets").joinpath(f"{name}.toml").read_text()
        try:
            raw = config_mod.loads(text)
        except Exception as exc:
            raise config_mod.ConfigError(f"malformed preset: {exc}", name) from None
        return raw, text, name
    path = Path(spec)
    if not path.exists():
        raise config_mod.ConfigError(f"no such file: {spec}")
    raw, text = config_mod.load_text(path)
    return raw, text, str(path)


def _parse_value(text: str):
    try:
        return config_mod.loads(f"v = {text}")["v"]
    except Exception:
        return text


def _apply_sets(raw: dict, sets: list[str]) -> dict:
    for item in sets or ():
        if "=" not in item:
            raise config_mod.ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        config_mod.set_dotted(raw, key.strip(), _parse_value(value.strip()))
    return raw


def _load(args) -> tuple[dict, dict, str]:
    raw, text, name = _source(args.config)
    raw = _apply_sets(raw, args.set)
    cfg = config_mod.resolve(raw, source=name, text=text)
    return raw, cfg, name


def _default_out(name: str) -> Path:
    return Path("out") / Path(name).stem


def cmd_validate(args) -> int:
    raw, cfg, name = _load(args)
    if not args.quiet:
        flows = len(cfg["flows"])
        nodes = len(cfg["topology"]["nodes"])
        msg = f"{name}: ok ({nodes} nodes, {flows} flows, {cfg['run']['duration_s']} s)"
        if "sweep" in cfg:
            from .sweep import expand
            pts = expand(raw)
            msg += f"; sweep of {len(pts)} points x {len(pts[0].seeds)} seeds"
        print(msg)
    return EXIT_OK


def cmd_run(args) -> int:
    from .scenario import run

    _raw, cfg, name = _load(args)
    out = Path(args.out_dir) if args.out_dir else _default_out(name)
    t0 = time.perf_counter()
    try:
        result = run(cfg, seed=args.seed, check_invariants=args.check_invariants or None)
    except SimulationError as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        for line in getattr(exc, "recent_events", []):
            print(f"  event: {line}", file=sys.stderr)
        return EXIT_SIM
    bundle.write_bundle(result, out)
    if not args.quiet:
        sys.stdout.write(bundle.summary_text(result))
        print(f"wrote {out} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from . import sweep

    raw, cfg, name = _load(args)
    if "sweep" not in cfg:
        raise config_mod.ConfigError("config has no [sweep] section", name)
    if args.seed is not None:
        raw.setdefault("sweep", {})["first_seed"] = args.seed
    out = Path(args.out_dir) if args.out_dir else _default_out(name)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.toml").write_text(config_mod.dumps(raw))

    def progress(o):
        if args.quiet:
            return
        status = "ok" if o.ok else f"FAILED: {o.error}"
        print(f"point {o.point} seed {o.seed}: {status}", flush=True)

    points, outcomes = sweep.run_sweep(raw, out, jobs=args.jobs, progress=progress)
    rows = sweep.aggregate(points, outcomes)
    sweep.write_aggregate(out / "aggregate.csv", points, rows)
    sweep.write_runs(out / "runs.csv", points, outcomes)
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"error: point {r['point']} had {r['failed_runs']} failed run(s); excluded from aggregate",
              file=sys.stderr)
    if not args.quiet:
        print(f"wrote {out}/aggregate.csv ({len(rows)} points, {len(outcomes)} runs)")
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnetsim",
        description="Discrete-event simulator of a packet-switched quantum network.",
        epilog=f"presets: {', '.join('preset:' + n for n in preset_names())}",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_help):
        p.add_argument("config", help="scenario TOML file or preset:NAME")
        p.add_argument("--seed", type=int, default=None, help=seed_help)
        p.add_argument("--out-dir", default=None, help="output directory (default: out/<config name>)")
        p.add_argument("--quiet", action="store_true", help="suppress progress and summary output")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value, e.g. --set aqm.target_buffering_s=1e-3 (repeatable)")

    p = sub.add_parser("run", help="run one scenario and write its output bundle")
    common(p, "override run.seed")
    p.add_argument("--check-invariants", action="store_true",
                   help="check memory conservation after every event (slow)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the [sweep] grid over seeds and write aggregate.csv")
    common(p, "override sweep.first_seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config", help="scenario TOML file or preset:NAME")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except config_mod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
