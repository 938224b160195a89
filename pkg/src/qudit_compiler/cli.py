"""Command-line front end: ``qudit-compiler <command> [options]``.

Exit codes: 0 success, 1 experiment failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .experiments import ConfigError, ExperimentConfig
from .tomography import chi_table

logger = logging.getLogger("qudit_compiler")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[float, float]:
    try:
        g, s = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected gamma,sigma") from exc
    return g, s


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="JSON experiment config; flags override its values")
    g.add_argument("--device", help="device preset (qudit, aspen) or key=value device file")
    g.add_argument("--cal", help="calibration JSON (report or bare gamma/sigma/omega_c)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory")
    g.add_argument("--shots", type=int, help="shots per measurement setting")
    g.add_argument("-v", "--verbose", action="store_true")
    q = common.add_argument_group("gate and device")
    q.add_argument("--gate", help="named gate preset (ssw02)")
    q.add_argument("--random", type=int, help="use N seeded Haar-random gates instead")
    q.add_argument("--matrix", help="JSON file {re: [[...]], im: [[...]]} with a target unitary")
    q.add_argument("--duration", type=float, help="pulse length in ns")
    q.add_argument("--distortion", type=_pair, help="hidden QPU transfer function gamma,sigma")
    q.add_argument("--confusion-error", type=float, dest="confusion_error", help="symmetric readout error")
    q.add_argument("--noiseless", action="store_true", default=None, help="no decoherence, perfect readout")
    q.add_argument("--prep-mode", choices=("ideal", "compiled"), dest="prep_mode")

    p = _Parser(prog="qudit-compiler", description="Pulse-level compiler and verification for qudit gates.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("compile", parents=[common], help="synthesize pulses; write pulse JSON and FFT CSV")
    c = sub.add_parser("calibrate", parents=[common], help="fit gamma and sigma on the sSW02 reference")
    c.add_argument("--cal-shots", type=int, dest="cal_shots")
    c.add_argument("--cal-reps", type=int, dest="cal_reps")
    sub.add_parser("benchmark", parents=[common], help="QPT fidelities of random gates")
    s = sub.add_parser("stability", parents=[common], help="repeated QPT with parameter jitter")
    s.add_argument("--runs", type=int)
    s.add_argument("--jitter-gamma", type=float, dest="jitter_gamma", help="relative std of gamma")
    s.add_argument("--jitter-freq", type=float, dest="jitter_freq_mhz", help="std of omega12 in MHz")
    t = sub.add_parser("trajectory", parents=[common], help="per-ns populations and repetition sweep")
    t.add_argument("--max-reps", type=int, dest="max_reps")
    m = sub.add_parser("tomography", parents=[common], help="process tomography of one gate")
    m.add_argument("--reps", type=_int_list, help="comma-separated repetition counts, e.g. 1,2,4,8")
    return p


_CONFIG_KEYS = {f for f in ExperimentConfig.__dataclass_fields__}


def _config_from_args(args) -> ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    return ExperimentConfig.from_sources(args.config, **overrides)


# ---- writers ----------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path: Path, payload: dict, header: dict) -> None:
    path.write_text(_dumps({**header, **payload}))


def write_csv(path: Path, columns: list[str], rows, header: dict) -> None:
    with path.open("w", newline="") as fh:
        fh.write("# config: " + json.dumps(header, default=_json_default, separators=(",", ":")) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, (float, np.floating)) else v for v in row])


# ---- commands ---------------------------------------------------------------


def cmd_compile(ctx: ex.Context, out: Path) -> int:
    header = ctx.describe()
    ok = True
    summary = []
    for name, res in ex.run_compile(ctx):
        write_json(out / f"{name}.json", res.to_dict(), header)
        write_csv(out / f"{name}_fft.csv", ["freq_mhz", "re", "im", "power"], ex.spectrum_rows(res.synthesis_pulse), header)
        summary.append({"gate": name, "achieved_fidelity": res.achieved_fidelity, "converged": res.converged})
        if not res.converged:
            ok = False
            print(f"{name}: not converged (fidelity {res.achieved_fidelity:.6f}, {res.message})", file=sys.stderr)
    write_json(out / "compile_summary.json", {"gates": summary}, header)
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_calibrate(ctx: ex.Context, out: Path) -> int:
    report = ex.run_calibrate(ctx)
    write_json(out / "calibration.json", report.to_dict(), ctx.describe())
    p = report.params
    print(f"gamma={p.gamma:.6f} sigma={p.sigma:.6f} residual={report.residual:.3e} converged={report.converged}")
    return EXIT_OK if report.converged else EXIT_FAILURE


def cmd_benchmark(ctx: ex.Context, out: Path) -> int:
    if ctx.config.cal is None and ctx.config.distortion is not None:
        # shared calibration from the sSW02 reference
        report = ex.run_calibrate(ctx)
        write_json(out / "calibration.json", report.to_dict(), ctx.describe())
        ctx.cal = report.params
    rows, summary = ex.run_benchmark(ctx)
    header = ctx.describe()
    cols = ["gate", "compile_fidelity", "converged", "qpt_fidelity", "error"]
    write_csv(out / "benchmark.csv", cols, ([r[c] for c in cols] for r in rows), header)
    write_json(out / "benchmark_summary.json", summary, header)
    print(f"mean fidelity {summary['mean_fidelity']} over {summary['n_gates']} gates")
    return EXIT_OK if summary["n_failed"] == 0 else EXIT_FAILURE


def cmd_stability(ctx: ex.Context, out: Path) -> int:
    rows = ex.run_stability(ctx)
    cols = ["run", "gamma_jitter", "freq_jitter_mhz", "fidelity"]
    write_csv(out / "stability.csv", cols, ([r[c] for c in cols] for r in rows), ctx.describe())
    return EXIT_OK


def cmd_trajectory(ctx: ex.Context, out: Path) -> int:
    panels, sweep = ex.run_trajectory(ctx)
    header = ctx.describe()
    d = ctx.dev.levels
    pcols = [f"p{j}" for j in range(d)]
    for i, (times, pops) in panels.items():
        write_csv(out / f"trajectory_{i}.csv", ["t_ns", *pcols], ([t, *p] for t, p in zip(times, pops)), header)
    write_csv(out / "repetitions.csv", ["rep", *pcols], ([n + 1, *p] for n, p in enumerate(sweep)), header)
    return EXIT_OK


def cmd_tomography(ctx: ex.Context, out: Path) -> int:
    header = ctx.describe()
    results = ex.run_tomography(ctx)
    for r in results:
        stem = f"{r['gate']}_n{r['n']}"
        write_csv(out / f"{stem}_chi.csv", ["row", "col", "magnitude", "phase_rad"], chi_table(r["chi_pauli"]), header)
        payload = {
            "gate": r["gate"],
            "n": r["n"],
            "fidelity": r["fidelity"],
            "fidelity_per_gate": r["fidelity_per_gate"],
            "chi": {"basis": list(r["chi"].basis.labels), "re": r["chi"].chi.real, "im": r["chi"].chi.imag},
        }
        write_json(out / f"{stem}.json", payload, header)
    cols = ["gate", "n", "fidelity", "fidelity_per_gate"]
    write_csv(out / "fidelity_vs_n.csv", cols, ([r[c] for c in cols] for r in results), header)
    return EXIT_OK


COMMANDS = {
    "compile": cmd_compile,
    "calibrate": cmd_calibrate,
    "benchmark": cmd_benchmark,
    "stability": cmd_stability,
    "trajectory": cmd_trajectory,
    "tomography": cmd_tomography,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config_from_args(args)
        ctx = ex.build_context(cfg)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](ctx, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logger.debug("experiment failed", exc_info=True)
        print(f"experiment failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
