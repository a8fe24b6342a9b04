"""Command line entry point: ``run``, ``verify`` and ``summarize``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import CASES, ConfigError, ExperimentConfig, load_config
from .io import atomic_write, header_lines

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class DataError(RuntimeError):
    pass


@dataclass
class Record:
    """One grid cell: its parameters, recorded trace and diagnostics."""

    params: dict
    trace: object
    summary: dg.RunSummary | None = None


# ---------------------------------------------------------------------------
# running cells


def check_data(config: ExperimentConfig):
    """Resolve datasets up front so a missing file fails before any work."""
    run = config.run
    try:
        if config.case == "logistic":
            from .logistic import load_table
            load_table(run.get("data"))
        elif config.case == "latentclass":
            from .latentclass import load_lc_data
            load_lc_data(run.get("data"))
        else:
            from .oracle import resolve_toy
            resolve_toy(run["space"])
    except (FileNotFoundError, ValueError) as exc:
        raise DataError(str(exc)) from None


def run_cell(case: str, run: dict, cell: dict):
    """Run one grid cell; top level so worker processes can pickle it."""
    if case == "logistic":
        from .logistic import LogisticConfig, LogisticModelSpace, load_table, run_chain
        space = LogisticModelSpace(load_table(run.get("data")), prior_var=run["prior_var"],
                                   coding=run["coding"])
        cfg = LogisticConfig(cell["algorithm"], cell["sigma_p"], cell["k"], run["iterations"], run["burn_in"],
                             cell["seed"], cell["stream"], run.get("within_trials"), run["policy"],
                             run.get("data"), run["keep_burn_in"], run["engine"])
        return run_chain(cfg, space)
    if case == "latentclass":
        from .latentclass import LCConfig, run_lc_chain
        cfg = LCConfig(cell["algorithm"], cell["k"], run["iterations"], run["burn_in"], cell["seed"],
                       cell["stream"], run["c_max"], cell["alpha"], cell["beta"], cell["tau"], run["delta"],
                       run["start_classes"], run.get("data"), run["keep_burn_in"], run["engine"])
        return run_lc_chain(cfg)
    from .oracle import resolve_toy, run_toy_chain
    return run_toy_chain(resolve_toy(run["space"]), cell["algorithm"], cell["weights"], cell["k"], cell["policy"],
                         run["iterations"], run["burn_in"], cell["seed"], cell["stream"], run["keep_burn_in"])


def execute(config: ExperimentConfig, workers: int = 1) -> list[Record]:
    cells = config.cells()
    if workers <= 1 or len(cells) == 1:
        traces = [run_cell(config.case, config.run, c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(run_cell, [config.case] * len(cells), [config.run] * len(cells), cells))
    return [Record(c, t) for c, t in zip(cells, traces)]


# ---------------------------------------------------------------------------
# outputs


def _labels_for(case, run, records):
    if case == "logistic":
        return list(range(1, 6))
    if case == "latentclass":
        return list(range(1, run["c_max"] + 1))
    from .oracle import resolve_toy
    return list(resolve_toy(run["space"]).models)


MOVES = {"logistic": ["jump"], "latentclass": ["split", "combine", "birth", "death"], "toy": ["jump"]}


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _csv(header: str, columns: list, rows: list) -> str:
    """CSV text after the comment header; rows are dicts or sequences."""
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        values = [r.get(c, "") for c in columns] if isinstance(r, dict) else r
        w.writerow([_fmt(v) for v in values])
    return buf.getvalue()


def _column_label(params, axes, varying):
    parts = [str(params["algorithm"])] + [f"{a}={_fmt(params[a])}" for a in axes
                                          if a != "algorithm" and a in varying]
    if "replicate" in varying:
        parts.append(f"rep={params['replicate']}")
    return " ".join(parts)


def _reference_costs(records, axes, reference):
    """Seconds per iteration of the reference algorithm in the matching cell."""
    ref = {}
    for r in records:
        if r.params["algorithm"] == reference:
            key = tuple(r.params[a] for a in axes if a not in ("algorithm", "k")) + (r.params["replicate"],)
            ref[key] = r.summary.cost_per_iteration
    out = []
    for r in records:
        key = tuple(r.params[a] for a in axes if a not in ("algorithm", "k")) + (r.params["replicate"],)
        cost = ref.get(key)
        out.append(cost if cost and cost > 0 else None)
    return out


def write_outputs(out: Path, case: str, run: dict, axes: list, records: list[Record], config_digest: str,
                  seed) -> list[Path]:
    """Summary CSV, key-value report, efficiency CSV and table/figure CSVs."""
    labels = _labels_for(case, run, records)
    moves = MOVES[case]
    for r in records:
        if r.summary is None:
            r.summary = dg.summarize(r.trace, labels)
    head = header_lines(config_digest, seed, {"case": case})
    written = []

    def emit(name, text):
        written.append(atomic_write(out / name, text))

    lead = ["cell"] + list(axes) + ["replicate", "seed", "stream"]
    rows = [dg.summary_row(r.summary, labels, moves, {k: r.params[k] for k in lead}) for r in records]
    cols = list(rows[0]) if rows else lead
    emit("summary.csv", _csv(head, cols, rows))

    report = [head]
    for r in records:
        report.append(f"[cell {r.params['cell']}]\n")
        for k in lead[1:]:
            report.append(f"{k} = {_fmt(r.params[k])}\n")
        report.append(dg.summary_keyvalue(r.summary))
        report.append("\n")
    emit("report.txt", "".join(report))

    refs = _reference_costs(records, axes, run.get("reference", "RJ"))
    eff_rows = []
    for r, ref in zip(records, refs):
        row = {k: r.params[k] for k in lead}
        row["cpu_seconds"] = r.summary.cpu_seconds
        row["seconds_per_iteration"] = r.summary.cost_per_iteration
        row["reference_seconds_per_iteration"] = ref if ref is not None else float("nan")
        adj = r.summary.time_adjusted(ref)
        for m in labels:
            row[f"R_{m}"] = r.summary.R.get(m, float("nan"))
            row[f"R_time_{m}"] = adj.get(m, float("nan"))
        eff_rows.append(row)
    eff_cols = lead + ["cpu_seconds", "seconds_per_iteration", "reference_seconds_per_iteration"] + \
        [f"R_{m}" for m in labels] + [f"R_time_{m}" for m in labels]
    emit("efficiency.csv", _csv(head, eff_cols, eff_rows))

    varying = {a for a in axes if len({r.params[a] for r in records}) > 1}
    if len({r.params["replicate"] for r in records}) > 1:
        varying.add("replicate")
    names = [_column_label(r.params, axes, varying) for r in records]

    if case in ("logistic", "toy"):
        prob_rows = []
        for r in records:
            row = {k: r.params[k] for k in lead}
            row.update({f"M{m}": r.summary.probs.get(m, 0.0) for m in labels})
            prob_rows.append(row)
        extra = []
        if case == "toy":
            from .oracle import model_marginals, resolve_toy
            exact = model_marginals(resolve_toy(run["space"]))
            row = {k: "exact" if k == "algorithm" else "" for k in lead}
            row.update({f"M{m}": exact[m] for m in labels})
            extra = [row]
        emit("table1.csv" if case == "logistic" else "table_models.csv",
             _csv(head, lead + [f"M{m}" for m in labels], prob_rows + extra))
        acc_rows = [{**{k: r.params[k] for k in lead}, "acceptance_pct": 100 * r.summary.acceptance.get("jump", 0.0)}
                    for r in records]
        emit("table3.csv" if case == "logistic" else "table_acceptance.csv",
             _csv(head, lead + ["acceptance_pct"], acc_rows))
        if case == "logistic":
            emit("figure1.csv", _series_cumulative(head, records, names, [2, 4], run, "M"))
    else:
        tail = run.get("tail_from", 11)
        cmax = run["c_max"]
        top = min(tail, cmax + 1)
        t4 = []
        for c in range(1, top):
            t4.append([str(c)] + [r.summary.probs.get(c, 0.0) for r in records])
        if tail <= cmax:
            t4.append([f"C>={tail}"] + [math.fsum(p for m, p in r.summary.probs.items() if m >= tail)
                                        for r in records])
        emit("table4.csv", _csv(head, ["C"] + names, t4))
        t5 = [[mv] + [100 * r.summary.acceptance.get(mv, float("nan")) for r in records] for mv in moves]
        emit("table5.csv", _csv(head, ["move"] + names, t5))
        emit("figure4.csv", _series_raw(head, records, names, run))
        emit("figure5.csv", _series_cumulative(head, records, names, [2, 3, 4, 5], run, "C"))
    return written


def _series_cumulative(head, records, names, levels, run, prefix):
    every, length = run["series_every"], run["series_length"]
    cols, data = ["iteration"], []
    n = min(min(len(r.trace.models) for r in records), length)
    idx = np.arange(every - 1, n, every)
    for r, name in zip(records, names):
        erg = dg.ergodic_probs(np.asarray(r.trace.models)[:n], levels, cumulative=True)
        for j, lvl in enumerate(levels):
            cols.append(f"{name} {prefix}{lvl}")
            data.append(erg.cumulative[idx, j])
    rows = [[int(i) + 1] + [float(d[t]) for d in data] for t, i in enumerate(idx)]
    return _csv(head, cols, rows)


def _series_raw(head, records, names, run):
    length = min(40_000, run["series_length"])
    parts = []
    for r in records:
        models = np.asarray(r.trace.models)
        parts.append(models[r.trace.burn_in:r.trace.burn_in + length])
    n = min(len(p) for p in parts)
    rows = [[t + 1] + [int(p[t]) for p in parts] for t in range(n)]
    return _csv(head, ["sweep"] + names, rows)


def _trace_header(case, run, axes, params, config_digest):
    from . import __version__
    head = {"tool": f"gmtrj {__version__}", "config_digest": config_digest, "case": case,
            "axes": "|".join(axes)}
    for k in ("c_max", "tail_from", "series_every", "series_length", "space"):
        if k in run:
            head[f"run.{k}"] = run[k]
    for k, v in params.items():
        head[f"cell.{k}"] = v
    return head


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        config.run["seed"] = args.seed
        config.text += f"\n# seed override {args.seed}\n"
    try:
        check_data(config)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        print("remediation: fix the 'data' (or 'space') path in the config, or remove it to use the bundled "
              "dataset", file=sys.stderr)
        return EXIT_DATA
    out = Path(args.out) if args.out else Path("runs") / Path(args.config).stem
    workers = args.workers or os.cpu_count() or 1
    records = execute(config, workers)
    axes = list(config.grid)
    written = write_outputs(out, config.case, config.run, axes, records, config.digest, config.run["seed"])
    if config.run["trace"]:
        for r in records:
            head = _trace_header(config.case, config.run, axes, r.params, config.digest)
            written.append(dg.write_trace(out / "traces" / f"cell-{r.params['cell']:04d}.trace", r.trace, head))
    for r in records:
        probs = " ".join(f"{m}:{p:.4f}" for m, p in r.summary.probs.items() if p > 0)
        acc = " ".join(f"{k}:{100 * v:.2f}%" for k, v in r.summary.acceptance.items())
        print(f"cell {r.params['cell']:>3} {_column_label(r.params, axes, set(axes)):<40} {probs}  acc {acc}")
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracle import ToySpaceError, bundled_toys, load_toy, verify
    try:
        spaces = bundled_toys() + [load_toy(p) for p in (args.space or [])]
    except (OSError, ToySpaceError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    ks = tuple(int(k) for k in args.k.split(","))
    results = verify(spaces, ks)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    worst = max((r.value for r in results if r.check == "balance" and not r.expect_failure), default=0.0)
    print(f"{len(results)} checks, {len(failed)} failed; largest balance violation {worst:.3e}")
    if failed:
        print("failing (space, sampler, k):")
        for r in failed:
            print(f"  ({r.space}, {r.sampler}, {r.k}) {r.check}")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_summarize(args) -> int:
    try:
        traces = [dg.read_trace(p) for p in args.traces]
    except dg.TraceVersionError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    cases = {t.meta.get("case") for t in traces}
    if len(cases) != 1:
        print(f"data error: traces mix cases {sorted(map(str, cases))}", file=sys.stderr)
        return EXIT_DATA
    case = cases.pop()
    first = traces[0].meta
    if case not in CASES:
        print(f"data error: unknown case {case!r} in trace header", file=sys.stderr)
        return EXIT_DATA
    axes = [a for a in str(first.get("axes", "algorithm")).split("|") if a]
    run = {k[4:]: v for k, v in first.items() if k.startswith("run.")}
    run.setdefault("series_every", 100)
    run.setdefault("series_length", 60_000)
    run.setdefault("reference", "RJ")

    def params(t):
        p = {k[5:]: v for k, v in t.meta.items() if k.startswith("cell.")}
        for k in ["cell"] + axes + ["replicate", "seed", "stream"]:
            p.setdefault(k, t.meta.get(k, ""))
        return p

    if args.pool:
        pooled = dg.pool_traces(traces)
        p = params(traces[0])
        p.update(cell=0, replicate="pooled")
        records = [Record(p, pooled)]
    else:
        records = [Record(params(t), t) for t in traces]
    out = Path(args.out)
    digest = first.get("config_digest", "")
    written = write_outputs(out, case, run, axes, records, digest, records[0].params.get("seed", ""))
    for r in records:
        probs = " ".join(f"{m}:{p:.4f}" for m, p in r.summary.probs.items() if p > 0)
        print(f"cell {r.params['cell']}: {probs}")
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmtrj", description="Multiple-try reversible jump experiments and exact checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment grid from a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")
    p.add_argument("--out", default=None, help="output directory (default: runs/<config name>)")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("verify", help="exact detailed-balance checks on the toy spaces")
    p.add_argument("--space", action="append", help="extra toy space file (repeatable)")
    p.add_argument("--k", default="1,2,3", help="comma-separated numbers of trials")
    p.add_argument("--seed", type=int, default=None, help="accepted for symmetry; enumeration is exact")
    p.add_argument("--workers", type=int, default=None, help="accepted for symmetry; runs serially")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("summarize", help="recompute diagnostics and tables from trace files")
    p.add_argument("traces", nargs="+")
    p.add_argument("--out", default="summary", help="output directory")
    p.add_argument("--pool", action="store_true", help="pool all traces into one chain")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
