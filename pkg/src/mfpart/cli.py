"""``mfpart`` command line: ingest | analyze | bootstrap | pmodel | ensemble | synth | export | batch.

Exit codes: 0 success, 1 failure or partial batch failure, 2 usage/config error.
Every JSON output echoes its resolved configuration; the worker count is left
out because outputs do not depend on it.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from mfpart import __version__
from mfpart import formats
from mfpart.ensemble import align_members, ensemble_analysis
from mfpart.errors import MFPartError
from mfpart.ingest import SessionCalendar, TickSchema, parse_ticks, volatility_from_ticks
from mfpart.mfcore import AnalysisConfig, analyze
from mfpart.pmodel import build_histogram, fit_pmodel
from mfpart.stats import bootstrap_test, resolve_jobs
from mfpart.synth import CascadeSpec, generate_cascade, generate_iid_lognormal

log = logging.getLogger("mfpart")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
EXPORT_KINDS = ("chi_vs_s", "tau_vs_q", "f_vs_alpha", "gp_hist")


class UsageError(Exception):
    pass


def _config_echo(args: argparse.Namespace) -> dict:
    skip = {"func", "jobs", "out", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _analysis_config(args) -> AnalysisConfig:
    return AnalysisConfig(q_min=args.qmin, q_max=args.qmax, q_step=args.qstep,
                          s_min=args.s_min, s_max=args.s_max, min_boxes=args.min_boxes,
                          per_decade=args.per_decade, min_scales=args.min_scales,
                          jump_threshold=args.jump_threshold)


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--qmin", type=float, default=-3.0)
    p.add_argument("--qmax", type=float, default=5.0)
    p.add_argument("--qstep", type=float, default=0.2)
    p.add_argument("--s-min", type=int, default=1)
    p.add_argument("--s-max", type=int, default=None)
    p.add_argument("--min-boxes", type=int, default=4)
    p.add_argument("--per-decade", type=int, default=16)
    p.add_argument("--min-scales", type=int, default=5)
    p.add_argument("--jump-threshold", type=float, default=5.0)


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".gz", ".csv", ".bin", ".mfvol"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


# ---------------------------------------------------------------- subcommands

def _calendar(spec: str) -> SessionCalendar:
    try:
        return SessionCalendar.from_spec(spec)
    except (ValueError, KeyError, OSError) as exc:
        raise UsageError(f"bad calendar {spec!r}: {exc}") from None


def cmd_ingest(args) -> int:
    calendar = _calendar(args.calendar)
    ticks = parse_ticks(Path(args.ticks), TickSchema(), instrument=args.instrument,
                        default_id=_stem(Path(args.ticks)))
    if ticks.dropped:
        log.warning("%s: dropped %d malformed or non-positive rows", ticks.instrument_id, ticks.dropped)
    series = volatility_from_ticks(ticks, calendar)
    stamps = [t for d in series.days for t in calendar.bin_starts(d)]
    formats.write_volatility(series.values, args.out, stamps)
    return EXIT_OK


def run_analysis(values: np.ndarray, config: AnalysisConfig, echo: dict, instrument_id: str):
    table, res = analyze(values, config=config)
    doc = formats.analysis_doc(table, res, echo, instrument_id, int(values.size))
    return table, res, doc


def cmd_analyze(args) -> int:
    values = formats.read_volatility(args.vol)
    _, _, doc = run_analysis(values, _analysis_config(args), _config_echo(args), _stem(Path(args.vol)))
    formats.write_json(doc, args.out)
    if args.csv:
        Path(args.csv).write_text(export_plotdata(doc, "tau_vs_q"), encoding="utf-8")
    return EXIT_OK


def bootstrap_doc(report, echo: dict, instrument_id: str) -> dict:
    doc = formats.header("bootstrap", echo)
    doc.update({
        "instrument_id": instrument_id,
        "n": report.n, "n_requested": report.n_requested, "failed": report.failed,
        "delta_alpha_real": report.delta_alpha_real, "F_real": report.F_real,
        "p1": report.p1, "p2": report.p2, "level": report.level,
        "significant_1": report.significant_1, "significant_2": report.significant_2,
        "master_seed": report.master_seed,
        "delta_alpha_rnd": report.delta_alpha_rnd, "F_rnd": report.F_rnd,
    })
    return doc


def cmd_bootstrap(args) -> int:
    values = formats.read_volatility(args.vol)
    report = bootstrap_test(values, n=args.n, level=args.level, master_seed=args.seed,
                            config=_analysis_config(args), jobs=args.jobs)
    formats.write_json(bootstrap_doc(report, _config_echo(args), _stem(Path(args.vol))), args.out)
    return EXIT_OK


def _fit_doc(doc: dict) -> dict:
    q, tau = formats.tau_from_doc(doc)
    fit = fit_pmodel(q, tau)
    return {"instrument_id": doc.get("instrument_id"), "p": fit.p, "rss": fit.rss,
            "at_boundary": fit.at_boundary, "q": fit.q_values, "residuals": fit.per_q_residuals}


def cmd_pmodel(args) -> int:
    src = Path(args.tau)
    out = formats.header("pmodel", _config_echo(args))
    if src.is_dir():
        fits, failures = [], []
        for path in sorted(src.glob("*.json")):
            doc = formats.read_json(path)
            if doc.get("kind") != "analysis":
                continue
            try:
                fits.append(_fit_doc(doc))
            except (MFPartError, ValueError) as exc:
                failures.append({"file": path.name, "error": str(exc)})
        if not fits:
            raise MFPartError(f"no analysis documents could be fitted in {src}")
        hist = build_histogram([f["p"] for f in fits], args.bin_width)
        out.update({"fits": fits, "failures": failures, "histogram": {
            "bin_edges": hist.bin_edges, "g": hist.g, "mean_p": hist.mean_p,
            "std_p": hist.std_p, "count": hist.count}})
    else:
        out.update({"fits": [_fit_doc(formats.read_json(src))]})
    formats.write_json(out, args.out)
    return EXIT_OK


def ensemble_doc(result, echo: dict) -> dict:
    t = result.table
    doc = formats.header("ensemble", echo)
    doc.update({
        "member_ids": t.member_ids,
        "quorum": t.quorum,
        "grid": formats.grid_doc(t.grid),
        "member_count": t.member_count,
        "quenched_ln_chi": t.quenched_ln_chi,
        "annealed_ln_chi": t.annealed_ln_chi,
        "quenched": formats.spectrum_doc(result.quenched),
        "annealed": formats.spectrum_doc(result.annealed),
    })
    return doc


def cmd_ensemble(args) -> int:
    ids, tables = [], []
    for path in sorted(Path(args.analyses).glob("*.json")):
        doc = formats.read_json(path)
        if doc.get("kind") != "analysis":
            continue
        ids.append(doc.get("instrument_id") or path.stem)
        tables.append(formats.table_from_doc(doc))
    if not tables:
        raise UsageError(f"no analysis documents in {args.analyses}")
    config = AnalysisConfig(min_scales=args.min_scales, jump_threshold=args.jump_threshold)
    result = ensemble_analysis(align_members(ids, tables, args.quorum), config)
    formats.write_json(ensemble_doc(result, _config_echo(args)), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.model == "cascade":
        mode = {"det": "deterministic", "rand": "randomized"}.get(args.mode, args.mode)
        values = generate_cascade(CascadeSpec(args.p, args.depth, mode, args.seed))
    else:
        values = generate_iid_lognormal(args.length, args.mu, args.sigma, args.seed)
    formats.write_volatility(values, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- export

def _csv(header: list, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def export_plotdata(doc: dict, kind: str) -> str:
    """Plot-ready CSV rows behind the chi/tau/f(alpha)/g(p) figures."""
    if kind not in EXPORT_KINDS:
        raise UsageError(f"unknown export kind {kind!r}; choose from {EXPORT_KINDS}")
    doc_kind = doc.get("kind")
    if kind == "gp_hist":
        hist = doc.get("histogram")
        if doc_kind != "pmodel" or hist is None:
            raise UsageError("gp_hist needs a directory-mode pmodel document")
        edges, g = hist["bin_edges"], hist["g"]
        return _csv(["bin_left", "bin_right", "g"],
                    [(edges[i], edges[i + 1], g[i]) for i in range(len(g))])
    if doc_kind == "analysis":
        q = doc["grid"]["q"]
        if kind == "chi_vs_s":
            sizes = doc["grid"]["box_sizes"]
            rows = []
            for qi, row in zip(q, doc["ln_chi"]):
                if qi == 1.0:
                    continue
                rows += [(qi, s, math.exp(c / (qi - 1))) for s, c in zip(sizes, row) if c is not None]
            return _csv(["q", "s", "chi_pow"], rows)
        if kind == "tau_vs_q":
            return _csv(["q", "tau"], [(a, b) for a, b in zip(q, doc["tau"]) if b is not None])
        return _csv(["alpha", "f"], [(a, f) for a, f in zip(doc["alpha"], doc["f_alpha"])
                                     if a is not None and f is not None])
    if doc_kind == "ensemble":
        q = doc["grid"]["q"]
        qd, ad = doc["quenched"], doc["annealed"]
        if kind == "chi_vs_s":
            sizes = doc["grid"]["box_sizes"]
            rows = []
            for avg in ("quenched", "annealed"):
                for qi, row in zip(q, doc[f"{avg}_ln_chi"]):
                    if qi == 1.0:
                        continue
                    rows += [(avg, qi, s, math.exp(c / (qi - 1)))
                             for s, c in zip(sizes, row) if c is not None]
            return _csv(["average", "q", "s", "chi_pow"], rows)
        if kind == "tau_vs_q":
            return _csv(["q", "tau_quenched", "tau_annealed"],
                        [(a, b, c) for a, b, c in zip(q, qd["tau"], ad["tau"])
                         if b is not None and c is not None])
        rows = [(name, a, f) for name, d in (("quenched", qd), ("annealed", ad))
                for a, f in zip(d["alpha"], d["f_alpha"]) if a is not None and f is not None]
        return _csv(["average", "alpha", "f"], rows)
    raise UsageError(f"cannot export {kind} from a {doc_kind!r} document")


def cmd_export(args) -> int:
    text = export_plotdata(formats.read_json(args.doc), args.kind)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- batch

def instrument_seed(master_seed: int, instrument_id: str) -> int:
    """Per-instrument bootstrap seed, independent of directory order."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(zlib.crc32(instrument_id.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _load_series(path: Path, calendar_spec: str) -> np.ndarray:
    if formats.is_volatility_file(path):
        return formats.read_volatility(path)
    ticks = parse_ticks(path, TickSchema(), default_id=_stem(path))
    return volatility_from_ticks(ticks, SessionCalendar.from_spec(calendar_spec)).values


def _batch_one(task) -> dict:
    path, config, echo, boot_n, level, seed, calendar = task
    iid = _stem(path)
    try:
        values = _load_series(path, calendar)
        _, res, doc = run_analysis(values, config, echo, iid)
        row = {"instrument": iid, "delta_alpha": res.delta_alpha, "F": res.F,
               "p": None, "p1": None, "p2": None, "flags": []}
        try:
            row["p"] = fit_pmodel(res.q_values, res.tau).p
        except ValueError:
            row["flags"].append("pmodel_failed")
        if res.spectrum.non_concave:
            row["flags"].append("non_concave")
        boot = None
        if boot_n > 0:
            rep = bootstrap_test(values, n=boot_n, level=level,
                                 master_seed=instrument_seed(seed, iid), config=config)
            row.update(p1=rep.p1, p2=rep.p2)
            if not (rep.significant_1 and rep.significant_2):
                row["flags"].append("not_significant")
            boot = bootstrap_doc(rep, echo, iid)
        return {"ok": True, "id": iid, "doc": doc, "boot": boot, "row": row}
    except (MFPartError, ValueError, OSError) as exc:
        return {"ok": False, "id": iid, "file": path.name, "error": f"{type(exc).__name__}: {exc}"}


def _summary_cell(key: str, value) -> str:
    if value is None:
        return ""
    if key == "flags":
        return ";".join(value)
    if key == "instrument":
        return value
    return repr(float(value))


def run_batch(in_dir, out_dir, config: AnalysisConfig, echo: dict, bootstrap_n: int = 0,
              level: float = 0.01, seed: int = 0, calendar: str = "builtin:cn-a-share",
              jobs: int | None = 1) -> tuple[int, int]:
    """Analyse every file in ``in_dir``; returns (successes, failures)."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(p for p in in_dir.iterdir() if p.is_file() and not p.name.startswith("."))
    tasks = [(p, config, echo, bootstrap_n, level, seed, calendar) for p in paths]
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(tasks) < 2:
        results = [_batch_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(min(jobs, len(tasks))) as pool:
            results = list(pool.map(_batch_one, tasks))

    rows, failures = [], []
    for r in results:
        if not r["ok"]:
            failures.append({"instrument": r["id"], "file": r["file"], "error": r["error"]})
            continue
        formats.write_json(r["doc"], out_dir / f"{r['id']}.analysis.json")
        if r["boot"] is not None:
            formats.write_json(r["boot"], out_dir / f"{r['id']}.bootstrap.json")
        rows.append(r["row"])

    fields = ["instrument", "delta_alpha", "F", "p", "p1", "p2", "flags"]
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_summary_cell(k, row[k]) for k in fields])
    failure_doc = formats.header("failures", echo)
    failure_doc["failures"] = failures
    formats.write_json(failure_doc, out_dir / "failures.json")
    if rows:
        ps = [r["p"] for r in rows if r["p"] is not None]
        if ps:
            hist = build_histogram(ps)
            pdoc = formats.header("pmodel", echo)
            pdoc.update({"fits": [{"instrument_id": r["instrument"], "p": r["p"]} for r in rows],
                         "histogram": {"bin_edges": hist.bin_edges, "g": hist.g,
                                       "mean_p": hist.mean_p, "std_p": hist.std_p,
                                       "count": hist.count}})
            formats.write_json(pdoc, out_dir / "pmodel.json")
    return len(rows), len(failures)


def cmd_batch(args) -> int:
    _calendar(args.calendar)
    ok, bad = run_batch(args.input, args.out, _analysis_config(args), _config_echo(args),
                        args.bootstrap, args.level, args.seed, args.calendar, args.jobs)
    log.info("batch finished: %d analysed, %d failed", ok, bad)
    return EXIT_OK if bad == 0 else EXIT_FAIL


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfpart", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mfpart {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tick CSV -> minutely volatility")
    p.add_argument("--ticks", required=True)
    p.add_argument("--calendar", default="builtin:cn-a-share")
    p.add_argument("--instrument", default=None)
    p.add_argument("--out", required=True, help="*.csv for CSV, anything else for MFVOL binary")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="partition function, tau(q) and f(alpha)")
    p.add_argument("--vol", required=True)
    _add_grid_args(p)
    p.add_argument("--csv", default=None, help="also write a tau(q) CSV flattening")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bootstrap", help="shuffle test of delta-alpha and F")
    p.add_argument("--vol", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    _add_grid_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("pmodel", help="fit the p-model to analysis tau(q)")
    p.add_argument("--tau", required=True, help="analysis JSON or a directory of them")
    p.add_argument("--bin-width", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pmodel)

    p = sub.add_parser("ensemble", help="quenched and annealed averages")
    p.add_argument("--analyses", required=True)
    p.add_argument("--quorum", type=float, default=0.8)
    p.add_argument("--min-scales", type=int, default=5)
    p.add_argument("--jump-threshold", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("synth", help="synthetic volatility series")
    p.add_argument("model", choices=("cascade", "lognormal"))
    p.add_argument("--p", type=float, default=0.4)
    p.add_argument("--depth", type=int, default=14)
    p.add_argument("--mode", choices=("det", "rand", "deterministic", "randomized"), default="det")
    p.add_argument("--length", type=int, default=4096)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export", help="plot-ready CSV from an analysis/ensemble/pmodel document")
    p.add_argument("--doc", required=True)
    p.add_argument("--kind", required=True, choices=EXPORT_KINDS)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("batch", help="analyse a directory of volatility or tick files")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--calendar", default="builtin:cn-a-share")
    p.add_argument("--bootstrap", type=int, default=0, help="replicates per instrument (0 = skip)")
    p.add_argument("--level", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    _add_grid_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_batch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (MFPartError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
