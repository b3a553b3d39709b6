"""Command-line interface: fit, score, eval, decompose, render, synth, gridsearch.

Exit codes: 0 success, 1 usage/configuration error, 2 data or validation
error during a run.  Flag values override config-file values.
"""

from __future__ import annotations

import argparse
import csv
import sys
from math import ceil
from pathlib import Path

import numpy as np

from vista.core import (
    ALLOWED_WINDOW_SIZES,
    ConfigError,
    DataError,
    PipelineConfig,
    TimeSeries,
    load_config,
    segment_windows,
    write_kv_file,
)
from vista.data_io import (
    ANOMALY_KINDS,
    SynthSpec,
    _read_labels,
    _read_matrix,
    save_labels,
    save_series_csv,
    synth_pair,
)
from vista.features import load_extractor
from vista.memory import BankError, coreset_select, load_bank, save_bank
from vista.metrics import MetricError, evaluate
from vista.scoring import collect_candidates, fit, score_series
from vista.stl import StlParams, stl_decompose
from vista.tcm import build_tcm, downsample_tcm, render_tcm_png
from vista.weights import WeightFileError

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key = value config file; flags override it")
    sub.add_argument("--window-size", type=int, dest="window_size")
    sub.add_argument("--seasonal-ratio", type=float, dest="seasonal_ratio")
    sub.add_argument("--coreset-ratio", type=float, dest="coreset_ratio")
    sub.add_argument("--knn", type=int, dest="knn_k")
    sub.add_argument("--layers", dest="layer_selection", help="e.g. 3,4")
    sub.add_argument("--components", dest="component_selection", help="e.g. trend,seasonal,residual")
    sub.add_argument("--tail-policy", dest="tail_policy", choices=["drop", "pad_repeat"])
    sub.add_argument("--extractor", dest="extractor_spec", help="weights path or seeded:<seed>")
    sub.add_argument("--seed", type=int, dest="seed")
    sub.add_argument("--normalize", action="store_true", default=None)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    base = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for key in (
        "window_size",
        "seasonal_ratio",
        "coreset_ratio",
        "knn_k",
        "tail_policy",
        "extractor_spec",
        "seed",
        "normalize",
    ):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "layer_selection", None):
        overrides["layer_selection"] = tuple(int(tok) for tok in args.layer_selection.split(","))
    if getattr(args, "component_selection", None):
        overrides["component_selection"] = tuple(args.component_selection.split(","))
    return base.override(**overrides)


def _load_matrix_series(path: str, name: str, labels: np.ndarray | None = None) -> TimeSeries:
    fmt = "npy" if path.endswith(".npy") else "csv"
    return TimeSeries(values=_read_matrix(Path(path), fmt), name=name, labels=labels)


def _write_scores_csv(path: str, scores) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "score", "padded"])
        for t, (value, padded) in enumerate(zip(scores.s, scores.padded_mask)):
            writer.writerow([t, repr(float(value)), int(padded)])


def _read_scores_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    scores, padded = [], []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["t", "score", "padded"]:
            raise DataError(f"{path}: expected header t,score,padded, got {header}")
        for row in reader:
            scores.append(float(row[1]))
            padded.append(bool(int(row[2])))
    return np.asarray(scores), np.asarray(padded, dtype=bool)


def _cmd_fit(args: argparse.Namespace) -> int:
    cfg = args.cfg
    train = _load_matrix_series(args.train, "train")
    bank = fit(train, cfg)
    save_bank(bank, args.out)
    print(f"bank: {bank.size} x {bank.dimension} -> {args.out}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    cfg = args.cfg
    test = _load_matrix_series(args.test, "test")
    bank = load_bank(args.bank)
    extractor = load_extractor(cfg.extractor_spec)
    scores = score_series(test, bank, extractor, cfg)
    _write_scores_csv(args.out, scores)
    print(f"scores: {scores.s.shape[0]} timesteps -> {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    scores, padded = _read_scores_csv(args.scores)
    labels = _read_labels((args.labels,))
    if labels.shape[0] != scores.shape[0]:
        raise DataError(f"{labels.shape[0]} labels for {scores.shape[0]} scores")
    mask = None if args.include_padded else ~padded
    report = evaluate(scores, labels, mask)
    text = report.as_text()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_decompose(args: argparse.Namespace) -> int:
    cfg = args.cfg
    series = _load_matrix_series(args.input, "input")
    params = StlParams.from_window(cfg.window_size, cfg.seasonal_ratio)
    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "variable", "trend", "seasonal", "residual"])
        for window in segment_windows(series, cfg.window_size, cfg.tail_policy):
            d = stl_decompose(window, params)
            real = window.padded_from if window.is_padded else cfg.window_size
            for offset in range(real):
                for c in range(d.C):
                    writer.writerow(
                        [
                            window.start_index + offset,
                            c,
                            repr(float(d.trend[offset, c])),
                            repr(float(d.seasonal[offset, c])),
                            repr(float(d.residual[offset, c])),
                        ]
                    )
    print(f"decomposition -> {args.out}")
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    cfg = args.cfg
    series = _load_matrix_series(args.input, "input")
    params = StlParams.from_window(cfg.window_size, cfg.seasonal_ratio)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for window in segment_windows(series, cfg.window_size, cfg.tail_policy):
        d = stl_decompose(window, params)
        for c in range(d.C):
            tcm = build_tcm(d, c, cfg.component_selection, original=window.data)
            image = tcm if args.full_res else downsample_tcm(tcm)
            render_tcm_png(image, out_dir / f"w{window.start_index:08d}_v{c:03d}.png")
            count += 1
    print(f"{count} images -> {out_dir}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    kinds = tuple(args.kinds.split(",")) if args.kinds else ANOMALY_KINDS
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = synth_pair(
        SynthSpec(
            seed=args.seed,
            length=args.length,
            dims=args.dims,
            anomaly_kinds=kinds,
            contamination=args.contamination,
        )
    )
    save_series_csv(train, out_dir / "train.csv")
    save_series_csv(test, out_dir / "test.csv")
    save_labels(test.labels, out_dir / "test_labels.txt")
    rate = float(test.labels.mean())
    print(f"synthetic dataset -> {out_dir} (positive rate {rate:.4f})")
    return 0


def _cmd_gridsearch(args: argparse.Namespace) -> int:
    cfg = args.cfg
    train = _load_matrix_series(args.train, "train")
    labels = _read_labels((args.labels,))
    test = _load_matrix_series(args.test, "test", labels=labels)

    window_sizes = [int(t) for t in args.window_sizes.split(",")]
    ratios = [float(t) for t in args.coreset_ratios.split(",")]
    knn_values = [int(t) for t in args.knn_values.split(",")]

    best = None
    for w_s in window_sizes:
        base = cfg.override(window_size=w_s)
        extractor = load_extractor(base.extractor_spec)
        candidates = collect_candidates(train, base, extractor)
        for ratio in ratios:
            ratio_cfg = base.override(coreset_ratio=ratio)
            bank_size = ceil(ratio * candidates.shape[0])
            for k in knn_values:
                combo = ratio_cfg.override(knn_k=min(k, bank_size))
                bank = coreset_select(candidates, bank_size, combo.seed, combo.digest())
                scores = score_series(test, bank, extractor, combo)
                report = evaluate(scores.s, labels, ~scores.padded_mask)
                print(
                    f"w_s={w_s} ratio={ratio} K={combo.knn_k} "
                    f"f1={report.f1:.4f} auc={report.roc_auc:.4f}",
                    file=sys.stderr,
                )
                if best is None or report.f1 > best[0].f1:
                    best = (report, combo)
    report, combo = best
    print(f"# best configuration (f1={report.f1:.4f}, roc_auc={report.roc_auc:.4f})")
    for key, value in combo.to_dict().items():
        print(f"{key} = {value}")
    if args.out:
        write_kv_file(args.out, combo.to_dict())
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="vista", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="build a memory bank from a training series")
    _add_config_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("score", help="score a test series against a bank")
    _add_config_flags(p)
    p.add_argument("--test", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="precision/recall/F1 at optimal threshold plus ROC-AUC")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out")
    p.add_argument("--include-padded", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("decompose", help="dump per-window trend/seasonal/residual as CSV")
    _add_config_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("render", help="export correlation matrices as PNG images")
    _add_config_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--full-res", action="store_true")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=8192)
    p.add_argument("--dims", type=int, default=3)
    p.add_argument("--kinds", help=f"comma list from {ANOMALY_KINDS}")
    p.add_argument("--contamination", type=float, default=0.05)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gridsearch", help="fit+score+eval over a hyperparameter grid")
    _add_config_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--window-sizes", default=",".join(str(w) for w in ALLOWED_WINDOW_SIZES))
    p.add_argument("--coreset-ratios", default="0.1,0.3,0.5,0.7,0.9")
    p.add_argument("--knn-values", default="5,7,9,11,13,15")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_gridsearch)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # flag/config-file problems are usage errors (exit 1); anything raised
    # while the command runs is a data/validation error (exit 2)
    try:
        if hasattr(args, "window_size"):
            args.cfg = _build_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return args.func(args)
    except (ConfigError, DataError, BankError, WeightFileError, MetricError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
