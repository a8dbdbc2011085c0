"""Command-line interface.

Subcommands: generate (integrate a built-in system to CSV), train
(learn a kernel from a CSV and write model + report), forecast
(one-step or autonomous predictions from a saved model), benchmark
(four-method comparison over a manifest of systems).

Every artifact embeds the fully resolved configuration, the tool
version and a digest of its input, and contains nothing run-dependent
(no timestamps, no timings), so rerunning a command with the same
config and seed reproduces the artifact byte for byte.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .embedding import build_delay_dataset
from .evaluation import (
    DEFAULT_LAMBDA2_GRID,
    EvalProtocol,
    benchmark_system,
    emit_distribution_csv,
    emit_report,
    prepare_series,
    run_benchmark,
    select_lambda2,
    win_counts,
)
from .forecast import RolloutDiverged, TrainedModel, fit, one_step_forecast, rollout
from .kernels import KernelEvalError, KernelParams
from .loss import DegenerateBatchError, FactorizationError
from .metrics import hausdorff, smape
from .systems import (
    DataFormatError,
    IntegrationError,
    Standardizer,
    builtin_systems,
    get_system,
    integrate_rk4,
    load_csv,
    save_csv,
)
from .training import TrainConfig, TrainingAborted, default_init, train, train_regular

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (DataFormatError, FileNotFoundError, KeyError, ValueError)
_NUMERIC_ERRORS = (FactorizationError, DegenerateBatchError, KernelEvalError,
                   TrainingAborted, RolloutDiverged, IntegrationError)


class CliDataError(Exception):
    pass


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _envelope(kind: str, config: dict, input_digest: str | None) -> dict:
    return {
        "artifact": kind,
        "version": __version__,
        "config": config,
        "input_digest": input_digest,
    }


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise CliDataError(f"{path}: config file must hold a JSON object")
    return doc


def _resolve(args, key, default):
    """Flag value if given, else config-file value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if args._config_doc and key in args._config_doc:
        return args._config_doc[key]
    return default


def _train_config(args, n_pairs: int) -> TrainConfig:
    lr = _resolve(args, "lr", 0.1)
    return TrainConfig(
        epochs=int(_resolve(args, "epochs", 500)),
        lr_theta=float(lr),
        lr_alpha=float(lr),
        batch_size=min(int(_resolve(args, "batch_size", 200)), n_pairs),
        lambda1=float(_resolve(args, "lambda1", 0.05)),
        seed=int(_resolve(args, "seed", 0)),
        zero_clamp=float(_resolve(args, "zero_clamp", 1e-3)),
    )


def _grid(args) -> tuple:
    raw = _resolve(args, "lambda2_grid", None)
    if raw is None:
        return DEFAULT_LAMBDA2_GRID
    if isinstance(raw, str):
        raw = [part for part in raw.split(",") if part]
    return tuple(float(v) for v in raw)


def _svg_line_plot(path, series, labels, title) -> None:
    """Self-contained SVG polyline plot (datained to 3 decimals)."""
    width, height, pad = 640, 360, 40
    finite = [np.asarray(s, dtype=float) for s in series]
    allv = np.concatenate([s[np.isfinite(s)] for s in finite if len(s)])
    if allv.size == 0:
        return
    lo, hi = float(allv.min()), float(allv.max())
    span = hi - lo if hi > lo else 1.0
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{pad}" y="20" font-size="14">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
        f'height="{height - 2 * pad}" fill="none" stroke="#999"/>',
    ]
    for si, s in enumerate(finite):
        if len(s) < 2:
            continue
        xs = pad + (width - 2 * pad) * np.arange(len(s)) / (len(s) - 1)
        ys = height - pad - (height - 2 * pad) * (s - lo) / span
        ys = np.where(np.isfinite(ys), ys, height - pad)
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
        color = colors[si % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"/>')
        parts.append(
            f'<text x="{width - pad - 90}" y="{pad + 16 * (si + 1)}" '
            f'font-size="12" fill="{color}">{labels[si]}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    try:
        spec = get_system(args.system)
    except KeyError:
        names = ", ".join(s.name for s in builtin_systems())
        print(f"unknown system {args.system!r}; available: {names}", file=sys.stderr)
        return EXIT_DATA
    series = integrate_rk4(spec, args.n, args.dt)
    save_csv(series, args.out)
    print(f"{spec.name}: wrote {series.n} samples x {series.dim} dims "
          f"(dt={series.dt}) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    series = load_csv(args.input)
    tau = int(_resolve(args, "tau", 5))
    train_fraction = float(_resolve(args, "train_fraction", 0.8))
    prepared = prepare_series(series, tau, train_fraction)
    config = _train_config(args, prepared.train.n_pairs)
    grid = _grid(args)
    cv_epochs = _resolve(args, "cv_epochs", None)
    cv_config = config if cv_epochs is None else replace(config, epochs=int(cv_epochs))

    resolved = {
        "command": "train",
        "input": str(args.input),
        "mode": args.mode,
        "tau": tau,
        "train_fraction": train_fraction,
        "lambda2_grid": list(grid),
        "cv_epochs": None if cv_epochs is None else int(cv_epochs),
        **config.to_dict(),
    }

    init = default_init(prepared.train, config.seed)
    cv_doc = None
    if args.mode == "sparse":
        head = prepared.series.head(prepared.train.n_pairs + tau)
        cv = select_lambda2(head, tau, config.lambda1, grid, cv_config)
        cv_doc = cv.to_dict()
        lambda2 = cv.selected_lambda2
        if lambda2 == 0.0:
            report = train_regular(prepared.train, init, replace(config, lambda2=0.0))
        else:
            report = train(prepared.train, init, replace(config, lambda2=lambda2))
    else:
        lambda2 = 0.0
        report = train_regular(prepared.train, init, config)

    model = fit(report.final_params, prepared.train, config.lambda1)
    digest = _digest(args.input)

    model_doc = _envelope("model", resolved, digest)
    model_doc["standardization"] = prepared.standardizer.to_dict()
    model_doc["selected_lambda2"] = lambda2
    model_doc["model"] = model.to_dict()
    _write_json(args.out, model_doc)

    report_path = args.report or str(Path(args.out).with_suffix("")) + "_report.json"
    report_doc = _envelope("train_report", resolved, digest)
    report_doc["selected_lambda2"] = lambda2
    report_doc["cv"] = cv_doc
    report_doc["report"] = report.to_dict()
    _write_json(report_path, report_doc)

    curve_path = str(Path(args.out).with_suffix("")) + "_loss.csv"
    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,rho,l1,total\n")
        for e, entry in enumerate(report.loss_history, start=1):
            if entry is None:
                fh.write(f"{e},,,\n")
            else:
                fh.write(f"{e},{entry.rho!r},{entry.l1_penalty!r},{entry.total!r}\n")
    if args.svg:
        rho_curve = np.array([np.nan if h is None else h.rho for h in report.loss_history])
        total = np.array([np.nan if h is None else h.total for h in report.loss_history])
        _svg_line_plot(str(Path(args.out).with_suffix("")) + "_loss.svg",
                       [rho_curve, total], ["rho", "total"],
                       f"training loss ({args.mode})")

    last = next((h for h in reversed(report.loss_history) if h is not None), None)
    final_rho = "n/a" if last is None else f"{last.rho:.6f}"
    print(f"mode={args.mode} selected_lambda2={lambda2} final_rho={final_rho} "
          f"nnz_alpha={report.nnz_alpha} model={args.out}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        model_doc = json.load(fh)
    if model_doc.get("artifact") != "model":
        raise CliDataError(f"{args.model} is not a model artifact")
    model = TrainedModel.from_dict(model_doc["model"])
    standardizer = Standardizer.from_dict(model_doc["standardization"])
    series = load_csv(args.input)
    if series.dim != model.dim:
        raise CliDataError(
            f"series has {series.dim} coordinates but the model expects {model.dim}"
        )
    std = standardizer.transform(series.values)
    from .embedding import TimeSeries
    ds = build_delay_dataset(TimeSeries(std, series.dt), model.tau)

    resolved = {
        "command": "forecast",
        "model": str(args.model),
        "input": str(args.input),
        "mode": args.mode,
        "steps": args.steps,
    }
    digest = _digest(args.input)

    if args.mode == "onestep":
        pred_std = one_step_forecast(model, ds)
        truth_std = ds.Y
        divergence_step = None
    else:
        steps = args.steps or ds.n_pairs
        try:
            pred_std = rollout(model, ds.X[0], steps)
            divergence_step = None
        except RolloutDiverged as err:
            pred_std = err.partial
            divergence_step = err.step
            print(f"rollout diverged at step {err.step}; truncating", file=sys.stderr)
        truth_std = ds.Y[: pred_std.shape[0]]

    pred_raw = standardizer.inverse(pred_std)
    out_series_values = pred_raw if pred_raw.size else np.zeros((0, model.dim))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(f"# dt={series.dt!r}\n")
        fh.write(",".join(f"x{i + 1}" for i in range(model.dim)) + "\n")
        for row in out_series_values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    scores_doc = _envelope("forecast_scores", resolved, digest)
    if truth_std.shape[0] >= 1 and pred_std.shape[0] >= 1:
        n = min(truth_std.shape[0], pred_std.shape[0])
        scores_doc["scores"] = {
            "smape": smape(standardizer.inverse(pred_std[:n]),
                           standardizer.inverse(truth_std[:n])),
            "hausdorff": hausdorff(pred_std[:n], truth_std[:n]),
            "n_test": n,
        }
    else:
        scores_doc["scores"] = None
    scores_doc["divergence_step"] = divergence_step
    scores_path = args.scores or str(Path(args.out).with_suffix("")) + "_scores.json"
    _write_json(scores_path, scores_doc)
    if scores_doc["scores"]:
        s = scores_doc["scores"]
        print(f"mode={args.mode} smape={s['smape']:.6f} hausdorff={s['hausdorff']:.6f} "
              f"n={s['n_test']}")
    else:
        print(f"mode={args.mode} (no truth rows to score)")
    return EXIT_OK


def _read_manifest(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                entries.append(line)
    if not entries:
        raise CliDataError(f"{path}: empty manifest")
    return entries


def cmd_benchmark(args) -> int:
    entries = _read_manifest(args.manifest)
    tau = int(_resolve(args, "tau", 5))
    config = TrainConfig(
        epochs=int(_resolve(args, "epochs", 500)),
        lr_theta=float(_resolve(args, "lr", 0.1)),
        lr_alpha=float(_resolve(args, "lr", 0.1)),
        batch_size=int(_resolve(args, "batch_size", 200)),
        lambda1=float(_resolve(args, "lambda1", 0.05)),
        seed=int(_resolve(args, "seed", 0)),
    )
    cv_epochs = _resolve(args, "cv_epochs", None)
    protocol = EvalProtocol(
        tau=tau,
        lambda1=config.lambda1,
        train_fraction=float(_resolve(args, "train_fraction", 0.8)),
        lambda2_grid=_grid(args),
        train_config=config,
        cv_train_config=None if cv_epochs is None else replace(config, epochs=int(cv_epochs)),
        rollout_steps=args.steps,
    )

    series_list = []
    for entry in entries:
        if entry.startswith("builtin:"):
            spec = get_system(entry.split(":", 1)[1])
            series_list.append(integrate_rk4(spec, args.n, None))
        else:
            s = load_csv(entry)
            series_list.append(replace_name(s, Path(entry).stem))
    rows = run_benchmark(series_list, protocol, threads=args.threads)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "command": "benchmark",
        "manifest": str(args.manifest),
        "tau": tau,
        "train_fraction": protocol.train_fraction,
        "lambda2_grid": list(protocol.lambda2_grid),
        "cv_epochs": None if cv_epochs is None else int(cv_epochs),
        "n": args.n,
        **config.to_dict(),
    }
    digest = _digest(args.manifest)
    report_doc = _envelope("benchmark", resolved, digest)
    report_doc["note"] = None
    for fmt, name in (("json", "report.json"), ("csv", "report.csv"),
                      ("markdown", "report.md")):
        text = emit_report(rows, fmt)
        if fmt == "json":
            doc = json.loads(text)
            report_doc["note"] = doc["note"]
            report_doc["rows"] = doc["rows"]
            _write_json(out_dir / name, report_doc)
        else:
            (out_dir / name).write_text(text, encoding="utf-8")
    (out_dir / "distributions.csv").write_text(emit_distribution_csv(rows),
                                               encoding="utf-8")

    counts = win_counts(rows)
    scored = sum(v for k, v in counts.items() if k != "none")
    parts = " ".join(f"{k}={v}" for k, v in counts.items())
    print(f"win counts: {parts} (scored systems: {scored + counts['none']})")
    return EXIT_OK


def replace_name(series, name):
    from .embedding import TimeSeries
    return TimeSeries(series.values.copy(), series.dt, name)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kflow",
        description="Learn sparse kernel dictionaries and forecast chaotic series.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--tau", type=int)
        p.add_argument("--lambda1", type=float)
        p.add_argument("--lambda2-grid", dest="lambda2_grid",
                       help="comma-separated candidate values")
        p.add_argument("--epochs", type=int)
        p.add_argument("--cv-epochs", dest="cv_epochs", type=int,
                       help="reduced epoch count for CV cells")
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--train-fraction", dest="train_fraction", type=float)
        p.add_argument("--zero-clamp", dest="zero_clamp", type=float)

    g = sub.add_parser("generate", help="integrate a built-in system to CSV")
    g.add_argument("system")
    g.add_argument("--n", type=int, default=7200)
    g.add_argument("--dt", type=float, default=None)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="learn a kernel from a CSV series")
    t.add_argument("input")
    t.add_argument("--mode", choices=("regular", "sparse"), default="sparse")
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--report", help="report JSON path (default: <out>_report.json)")
    t.add_argument("--svg", action="store_true", help="also write a loss-curve SVG")
    common(t)

    f = sub.add_parser("forecast", help="predict with a saved model")
    f.add_argument("--model", required=True)
    f.add_argument("--input", required=True)
    f.add_argument("--mode", choices=("onestep", "rollout"), default="onestep")
    f.add_argument("--steps", type=int, default=None)
    f.add_argument("--out", required=True, help="predictions CSV path")
    f.add_argument("--scores", help="scores JSON path (default: <out>_scores.json)")

    b = sub.add_parser("benchmark", help="four-method comparison over a manifest")
    b.add_argument("manifest")
    b.add_argument("--out-dir", dest="out_dir", required=True)
    b.add_argument("--n", type=int, default=7200, help="samples for builtin entries")
    b.add_argument("--steps", type=int, default=None, help="rollout length for HD")
    b.add_argument("--threads", type=int, default=None,
                   help="worker pool size (default: KFLOW_THREADS or 1)")
    common(b)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._config_doc = None
    if getattr(args, "config", None):
        try:
            args._config_doc = _load_config_file(args.config)
        except (OSError, json.JSONDecodeError, CliDataError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_USAGE
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "forecast": cmd_forecast,
        "benchmark": cmd_benchmark,
    }
    try:
        return handlers[args.command](args)
    except _NUMERIC_ERRORS as err:
        print(f"numerical failure [{type(err).__name__}]: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except CliDataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except _DATA_ERRORS as err:
        print(f"data error [{type(err).__name__}]: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
