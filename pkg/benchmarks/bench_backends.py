"""Wall-clock comparison of the compiled and pure-Python engines.

Runs the same scenario in fresh interpreters with ``QNETSIM_PURE`` unset and
set, checks the output bundles are identical and prints the timings.

    python benchmarks/bench_backends.py [--duration 1.0] [--repeats 3]
"""

import argparse
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

SCENARIO = """\
[run]
duration_s = {duration}
seed = 1

[topology.chain]
switches = 3
link_length_km = 40.0

[traffic]
flow_count = 12
demand = "infinite"
cc = "aimd+aqm"
"""


def backend_name(pure: bool) -> str:
    env = dict(os.environ, QNETSIM_PURE="1" if pure else "0")
    out = subprocess.run([sys.executable, "-W", "ignore", "-c", "import qnetsim; print(qnetsim.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def time_run(scn: Path, out: Path, pure: bool) -> float:
    env = dict(os.environ, QNETSIM_PURE="1" if pure else "0")
    t0 = time.perf_counter()
    subprocess.run([sys.executable, "-W", "ignore", "-m", "qnetsim", "run", str(scn), "--out-dir", str(out), "--quiet"],
                   env=env, check=True)
    return time.perf_counter() - t0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=1.0, help="simulated seconds per run")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        scn = tmp / "bench.toml"
        scn.write_text(SCENARIO.format(duration=args.duration))
        best = {}
        for pure in (True, False):
            name = backend_name(pure)
            times = [time_run(scn, tmp / name, pure) for _ in range(args.repeats)]
            best[name] = min(times)
            print(f"{name:>9}: best {best[name]:.2f} s of {args.repeats} ({', '.join(f'{t:.2f}' for t in times)})")
        if "compiled" not in best:
            print("compiled extension not available; build it with `pip install -e . --no-build-isolation`")
            return
        same = all((tmp / "python" / f).read_bytes() == (tmp / "compiled" / f).read_bytes()
                   for f in ("deliveries.csv", "drops.csv", "window_trace.csv", "aqm_trace.csv", "summary.csv"))
        print(f"speedup: {best['python'] / best['compiled']:.2f}x; identical outputs: {same}")


if __name__ == "__main__":
    main()
