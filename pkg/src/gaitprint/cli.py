"""Command-line pipeline: ingest, train, evaluate, cma, plot (and simulate for demos).

Every stage reads and writes inside the configured output directory. All
JSON outputs carry a ``config_hash`` field, CSV outputs start with a
``# config_hash=...`` comment line and SVG outputs with an XML comment.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cma import CmaResult, cma_intervals, fingerprint_report
from .config import ExperimentConfig, load_config
from .exceptions import ConfigError, DataError, GaitprintError, IngestionError, NumericalError
from .funreg import (PenaltyBlocks, TensorBases, build_dsu_matrices, default_lambda_grid,
                     design_from_series, funreg_one_vs_rest)
from .glm import FitConfig, one_vs_rest_fit, predict_prob
from .gridcells import GridSpec, build_design, rows_from_series, screen_predictors
from .identify import (ALL, average_probs, prob_matrix, rank_k_accuracy, read_sensitivity_csv,
                       seconds_sensitivity)
from .ingest import (IU_SCHEMA, Schema, SplitSpec, SubjectSeries, load_accelerometry, load_series,
                     load_zju, save_series, segment_seconds, stratified_split, subject_seed,
                     subject_sort_key)
from .persist import (dump_json, load_funreg_models, load_logistic_models, load_manifest,
                      save_funreg_models, save_logistic_models)
from .svg import fingerprint_svg, sensitivity_svg

logger = logging.getLogger("gaitprint")

SERIES_FILE = "series.gprt"


# -- output helpers --------------------------------------------------------------

def _stamp_json(path: Path, obj: dict, h: str) -> None:
    dump_json(path, {"config_hash": h, **obj})


def _stamp_csv(path: Path, header: list, rows, h: str) -> None:
    buf = io.StringIO()
    buf.write(f"# config_hash={h}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _stamp_svg(path: Path, svg: str, h: str) -> None:
    head, rest = svg.split(">", 1)
    path.write_text(f"{head}>\n<!-- config_hash={h} -->{rest}")


def _fmt(x) -> str:
    return repr(float(x))


def _fit_config(cfg: ExperimentConfig) -> FitConfig:
    f = cfg.fit
    return FitConfig(max_iter=f.max_iter, tol=f.tol, ridge=f.ridge, standardize=f.standardize)


def _grid_spec(cfg: ExperimentConfig) -> GridSpec:
    g = cfg.grid
    return GridSpec(g.range_lo, g.range_hi, g.cell_size, tuple(g.lags))


def _model_dir(cfg: ExperimentConfig, method: str | None = None) -> Path:
    return cfg.out_dir / "models" / (method or cfg.model.method)


def _load_store(cfg: ExperimentConfig) -> list[SubjectSeries]:
    path = cfg.out_dir / SERIES_FILE
    if not path.exists():
        raise DataError(f"{path} not found; run 'gaitprint ingest' first")
    return load_series(path)


def _split(cfg: ExperimentConfig, series):
    sp = cfg.split
    return stratified_split(series, SplitSpec(sp.train_fraction, cfg.run.seed, sp.mode,
                                              sp.train_session, sp.test_session))


def _load_split(cfg: ExperimentConfig, series) -> tuple[list[SubjectSeries], list[SubjectSeries]]:
    path = cfg.out_dir / "split.json"
    if not path.exists():
        raise DataError(f"{path} not found; run 'gaitprint train' first")
    assign = json.loads(path.read_text())["subjects"]
    train, test = [], []
    for s in series:
        a = assign.get(s.subject_id, {"train": [], "test": []})
        tr, te = set(a["train"]), set(a["test"])
        train.append(SubjectSeries(s.subject_id, [f for f in s.frames if f.j in tr]))
        test.append(SubjectSeries(s.subject_id, [f for f in s.frames if f.j in te]))
    return train, test


# -- stages ----------------------------------------------------------------------

def cmd_ingest(cfg: ExperimentConfig) -> dict:
    d = cfg.data
    if not d.path:
        raise ConfigError("[data] path is not set")
    if d.format == "canonical":
        series = load_series(d.path)
        report = {"files": 1, "rows": sum(s.J for s in series), "rejected": 0, "rejected_examples": []}
    else:
        if d.format == "zju":
            streams, rep = load_zju(d.path, d.zju_sensor, d.sessions or ("1", "2"))
        else:
            schema = IU_SCHEMA if d.format == "iu" else Schema(
                time=d.time_column, x=d.x_column, y=d.y_column, z=d.z_column,
                subject=d.subject_column or None, session=d.session_column or None,
                activity=d.activity_column or None, keep_activities=d.keep_activities or None,
                time_unit=d.time_unit, rate=d.rate)
            streams, rep = load_accelerometry(d.path, schema)
        trim = int(round(d.trim_transition * d.rate))
        series = [segment_seconds(streams[sid], cfg.segment.S, trim)
                  for sid in sorted(streams, key=subject_sort_key)]
        report = rep.to_dict()
    if d.sessions and d.format != "zju":
        keep = set(d.sessions)
        series = [SubjectSeries(s.subject_id, [f for f in s.frames if f.session in keep]) for s in series]
    series = [s for s in series if s.frames]
    if not series:
        raise IngestionError(f"no complete {cfg.segment.S}-sample frames found under {d.path}")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_series(out / SERIES_FILE, series)
    seconds = {s.subject_id: s.J for s in series}
    summary = {**report, "n_subjects": len(series), "S": cfg.segment.S, "seconds": seconds,
               "median_seconds": float(np.median(list(seconds.values()))), "store": SERIES_FILE}
    _stamp_json(out / "ingest_report.json", summary, cfg.hash())
    logger.info("ingested %d subjects, median %.1f seconds", len(series), summary["median_seconds"])
    return summary


def cmd_train(cfg: ExperimentConfig) -> dict:
    h = cfg.hash()
    series = _load_store(cfg)
    train, test = _split(cfg, series)
    out = cfg.out_dir
    _stamp_json(out / "split.json", {"subjects": {
        s.subject_id: {"train": [f.j for f in s.frames], "test": [f.j for f in t.frames]}
        for s, t in zip(train, test)}}, h)
    fit_cfg = _fit_config(cfg)
    mdir = _model_dir(cfg)
    report = {"method": cfg.model.method, "n_train_seconds": sum(s.J for s in train)}
    if cfg.model.method == "gridcell-logistic":
        spec = _grid_spec(cfg)
        X, index = build_design(rows_from_series(train, spec), spec)
        if X.shape[0] == 0:
            raise DataError("no training seconds")
        screen, Xr = screen_predictors(X, spec.column_names(), cfg.grid.unique_frac, cfg.grid.freq_ratio)
        fits, failures = one_vs_rest_fit(Xr, [s for s, _ in index], fit_cfg, screen.kept, cfg.run.jobs)
        if not fits:
            raise NumericalError(f"every one-vs-rest fit failed: {failures}")
        save_logistic_models(mdir, fits, spec, screen, fit_cfg, h, failures)
        report.update(n_predictors=len(screen.kept), n_removed=len(screen.removed))
    else:
        fr = cfg.funreg
        bases = TensorBases.default(cfg.segment.S, fr.n_basis, fr.degree, (cfg.grid.range_lo, cfg.grid.range_hi))
        td = design_from_series(train, bases, fr.lag_stride)
        if td.C.shape[0] == 0:
            raise DataError("no training seconds")
        penalty = PenaltyBlocks.from_bases(bases)
        grid = default_lambda_grid(td.C, penalty, fr.relative_lambdas, fr.isotropic)
        fits, failures = funreg_one_vs_rest(td.C, [s for s, _ in td.index], penalty, grid, fit_cfg,
                                            fr.folds, cfg.run.seed, fr.selection, fr.n_select, cfg.run.jobs)
        if not fits:
            raise NumericalError(f"every one-vs-rest fit failed: {failures}")
        save_funreg_models(mdir, fits, bases, fr.lag_stride, fit_cfg, h, grid, failures)
        if fr.dump_dsu:
            _dump_dsu(mdir, train, fr.lag_stride, h)
        report.update(n_coefficients=bases.n_coef, lambda_grid=[list(l) for l in grid])
    report.update(n_models=len(fits), failures=failures,
                  non_converged=[s for s, f in fits.items() if not f.converged])
    _stamp_json(out / f"train_report_{cfg.model.method}.json", report, h)
    logger.info("trained %d %s models (%d failed)", len(fits), cfg.model.method, len(failures))
    return report


def _dump_dsu(mdir: Path, train: list[SubjectSeries], lag_stride: int, h: str) -> None:
    """Lag-pair matrices of every training second, one CSV per subject."""
    for s in train:
        if not s.frames:
            continue
        m = build_dsu_matrices(s, lag_stride)
        L = m.shape[1]
        rows = [[name, s.subject_id, j, *map(_fmt, row)]
                for name, M in (("D", m.D), ("S", m.S_mat), ("U", m.U), ("lmat", m.lmat))
                for j, row in zip(m.js, M)]
        _stamp_csv(mdir / f"dsu_{s.subject_id}.csv", ["matrix", "subject", "j", *[f"c{l}" for l in range(1, L + 1)]],
                   rows, h)


def _test_scores(cfg: ExperimentConfig, test: list[SubjectSeries]):
    method = cfg.model.method
    mdir = _model_dir(cfg)
    man = load_manifest(mdir)
    if man["config_hash"] != cfg.hash():
        logger.warning("models in %s were trained under config %s", mdir, man["config_hash"])
    if method == "gridcell-logistic":
        fits, man = load_logistic_models(mdir)
        spec = GridSpec.from_dict(man["grid"])
        X, index = build_design(rows_from_series(test, spec), spec)
        col = {n: g for g, n in enumerate(spec.column_names())}
        kept = man["screen"]["kept"]
        Xk = X[:, [col[n] for n in kept]]
        raw = np.column_stack([predict_prob(fits[s], Xk) for s in man["subjects"]])
    else:
        fits, bases, man = load_funreg_models(mdir)
        td = design_from_series(test, bases, man["lag_stride"])
        index = td.index
        raw = np.column_stack([fits[s].predict_prob(td.C) for s in man["subjects"]])
    return raw, index, man["subjects"]


def cmd_evaluate(cfg: ExperimentConfig) -> dict:
    h = cfg.hash()
    series = _load_store(cfg)
    _, test = _load_split(cfg, series)
    raw, index, candidates = _test_scores(cfg, test)
    cset = set(candidates)
    excluded = sorted({s for s, _ in index if s not in cset}, key=subject_sort_key)
    if excluded:
        logger.warning("subjects without a model are excluded from evaluation: %s", excluded)
        keep = [i for i, (s, _) in enumerate(index) if s in cset]
        raw, index = raw[keep], [index[i] for i in keep]
    if not index:
        raise DataError("no test seconds to evaluate")
    pm = prob_matrix(raw, candidates, index)
    ks = tuple(cfg.evaluate.ks)
    rep = rank_k_accuracy(average_probs(pm, ALL), ks=ks)
    sens = seconds_sensitivity(pm, cfg.evaluate.windows, ks)

    edir = cfg.out_dir / "eval" / cfg.model.method
    edir.mkdir(parents=True, exist_ok=True)
    _stamp_csv(edir / "rank_report.csv", ["subject", "predicted", "rank", *[f"rank{k}" for k in ks]],
               [[s, p, r, *[int(r <= k) for k in ks]] for s, p, r in zip(rep.subjects, rep.predicted, rep.ranks)], h)
    summary = {"method": cfg.model.method, "n_test_seconds": len(index), "excluded": excluded, **rep.summary()}
    _stamp_json(edir / "rank_summary.json", summary, h)
    _stamp_csv(edir / "sensitivity.csv", ["window", "k", "accuracy", "blocks"],
               [[r["window"], r["k"], _fmt(r["accuracy"]), r["blocks"]] for r in sens], h)
    _stamp_csv(edir / "probs.csv", ["subject", "j", *pm.candidates],
               [[s, j, *map(_fmt, row)] for (s, j), row in zip(pm.index, pm.probs)], h)
    _stamp_svg(edir / "sensitivity.svg", sensitivity_svg({cfg.model.method: sens}, ks,
                                                         f"{cfg.model.method}: accuracy vs seconds averaged"), h)
    logger.info("%s", ", ".join(f"rank-{k} {rep.accuracy(k):.3f}" for k in ks))
    return summary


def cmd_cma(cfg: ExperimentConfig) -> dict:
    h = cfg.hash()
    fits, man = load_logistic_models(_model_dir(cfg, "gridcell-logistic"))
    spec = GridSpec.from_dict(man["grid"])
    subjects = list(cfg.cma.subjects) or man["subjects"]
    unknown = [s for s in subjects if s not in fits]
    if unknown:
        raise DataError(f"no fitted model for subjects {unknown}")
    cdir = cfg.out_dir / "cma"
    cdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in subjects:
        seed = int(subject_seed(cfg.run.seed, s).generate_state(1)[0])
        res = cma_intervals(fits[s], cfg.cma.alpha, cfg.cma.n_mc, seed, cfg.run.jobs)
        _stamp_json(cdir / f"subject_{s}.json", res.to_dict(), h)
        _write_fingerprints(cdir, res, spec, h)
        rows.append([s, _fmt(res.q), _fmt(res.mc_se), len(res.unadjusted_significant), len(res.significant)])
        logger.info("subject %s: q=%.4f, %d adjusted / %d unadjusted significant cells",
                    s, res.q, len(res.significant), len(res.unadjusted_significant))
    _stamp_csv(cdir / "summary.csv", ["subject", "q", "mc_se", "n_unadjusted", "n_adjusted"], rows, h)
    return {"subjects": subjects, "rows": rows}


def _write_fingerprints(dest: Path, res: CmaResult, spec: GridSpec, h: str) -> None:
    for adjusted, tag in ((True, "adjusted"), (False, "unadjusted")):
        panels = fingerprint_report([res], spec, adjusted)[res.subject]
        n = len(res.significant if adjusted else res.unadjusted_significant)
        svg = fingerprint_svg(panels, spec.range_lo, spec.range_hi,
                              f"subject {res.subject}: {n} {tag} significant cells (alpha={res.alpha})")
        _stamp_svg(dest / f"fingerprint_{res.subject}_{tag}.svg", svg, h)


def cmd_plot(cfg: ExperimentConfig) -> dict:
    """Re-render figures from the CSV/JSON outputs of earlier stages."""
    h = cfg.hash()
    pdir = cfg.out_dir / "plots"
    pdir.mkdir(parents=True, exist_ok=True)
    curves = {}
    for m in ("gridcell-logistic", "funreg"):
        f = cfg.out_dir / "eval" / m / "sensitivity.csv"
        if f.exists():
            curves[m] = read_sensitivity_csv(f)
    written = []
    if curves:
        _stamp_svg(pdir / "sensitivity.svg", sensitivity_svg(curves, cfg.evaluate.ks, "accuracy vs seconds averaged"), h)
        written.append("sensitivity.svg")
    cdir = cfg.out_dir / "cma"
    if cdir.is_dir():
        man = load_manifest(_model_dir(cfg, "gridcell-logistic"))
        spec = GridSpec.from_dict(man["grid"])
        for f in sorted(cdir.glob("subject_*.json")):
            d = json.loads(f.read_text())
            d.pop("config_hash", None)
            res = CmaResult.from_dict(d)
            _write_fingerprints(pdir, res, spec, h)
            written.append(f"fingerprint_{res.subject}_*.svg")
    if not written:
        raise DataError(f"nothing to plot under {cfg.out_dir}; run evaluate or cma first")
    return {"written": written}


def cmd_simulate(out: Path, n_subjects: int, seconds: int, sessions: int, seed: int) -> Path:
    """Write a synthetic raw dataset and a matching config file."""
    from .synthetic import simulate_raw_csv

    out.mkdir(parents=True, exist_ok=True)
    names = tuple(str(k + 1) for k in range(sessions))
    simulate_raw_csv(out / "raw.csv", n_subjects, seconds, seed=seed, sessions=names)
    cfg = ExperimentConfig()
    cfg.data.path = "raw.csv"
    cfg.data.session_column = "session"
    cfg.output.dir = "run"
    cfg.run.seed = seed
    cfg.cma.n_mc = 20_000
    (out / "config.ini").write_text(cfg.to_ini())
    return out / "config.ini"


# -- entry point -----------------------------------------------------------------

STAGES = {"ingest": cmd_ingest, "train": cmd_train, "evaluate": cmd_evaluate, "cma": cmd_cma, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI sections)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", help="override [output] dir")
    common.add_argument("--method", help="override [model] method (gridcell-logistic or funreg)")
    common.add_argument("--jobs", type=int, help="override [run] jobs; GAITPRINT_JOBS caps it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gaitprint", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gaitprint {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"ingest": "raw files -> canonical per-second store",
             "train": "split, featurize and fit one-vs-rest models",
             "evaluate": "rank-k accuracy and seconds sensitivity on the test split",
             "cma": "simultaneous intervals and fingerprints for grid-cell models",
             "plot": "re-render figures from saved outputs"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    sim = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset and config")
    sim.add_argument("--subjects", type=int, default=6)
    sim.add_argument("--seconds", type=int, default=40)
    sim.add_argument("--sessions", type=int, default=1)
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.output.dir = args.out
    elif args.config and not Path(cfg.output.dir).is_absolute():
        cfg.output.dir = str(Path(args.config).parent / cfg.output.dir)
    if args.method is not None:
        cfg.model.method = args.method
    if args.jobs is not None:
        cfg.run.jobs = args.jobs
    return cfg.validate()


def _write_run_record(cfg: ExperimentConfig) -> None:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(f"# config_hash={cfg.hash()}\n" + cfg.to_ini())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "simulate":
            path = cmd_simulate(Path(args.out or "."), args.subjects, args.seconds, args.sessions,
                                args.seed if args.seed is not None else 0)
            print(path)
            return 0
        cfg = resolve_config(args)
        _write_run_record(cfg)
        result = STAGES[args.command](cfg)
        print(json.dumps({"command": args.command, "config_hash": cfg.hash(), **_brief(result)}, sort_keys=True))
        return 0
    except GaitprintError as exc:
        print(f"gaitprint {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"gaitprint {args.command}: numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code


def _brief(result: dict) -> dict:
    return {k: v for k, v in result.items() if k in (
        "n_subjects", "median_seconds", "n_models", "failures", "rank1_accuracy", "rank5_accuracy",
        "subjects", "written")}


if __name__ == "__main__":
    sys.exit(main())
