"""Command-line front end.

Subcommands cover synthetic data generation, pooled training, SD/LOSO
evaluation, ablations, the statistics report, and plot-data emission. Exit
codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields, replace
from datetime import datetime
from pathlib import Path

from . import data, harness, plots, stats
from .errors import ConfigError, DataError, NumericalError
from .model import ABLATIONS, CCSPNet, ModelConfig


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit code 1)."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


_EXTRA_CONFIG_KEYS = ("manifest", "out_dir", "phase", "jobs")


def _model_config_field_types():
    return {f.name: f.type for f in fields(ModelConfig)}


def parse_config_file(path) -> dict:
    """Key: value config file; unknown keys rejected with line numbers."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    types = _model_config_field_types()
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if ":" not in stripped:
            raise ConfigError(f"{path.name}:{lineno}: expected 'key: value'")
        key, _, raw = stripped.partition(":")
        key, raw = key.strip(), raw.strip()
        if key in types:
            try:
                out[key] = _coerce(types[key], key, raw)
            except ValueError as exc:
                raise ConfigError(f"{path.name}:{lineno}: bad value for "
                                  f"{key!r}: {exc}")
        elif key in _EXTRA_CONFIG_KEYS:
            out[key] = int(raw) if key == "jobs" else raw
        else:
            raise ConfigError(f"{path.name}:{lineno}: unknown key {key!r}")
    return out


def _coerce(ftype, key, raw):
    if key == "dense_dims":
        return tuple(int(x) for x in raw.split(","))
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def build_model_config(args) -> ModelConfig:
    values = {}
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        for key in _EXTRA_CONFIG_KEYS:
            if key in file_values and getattr(args, key, None) in (None, ""):
                setattr(args, key, file_values.pop(key))
            else:
                file_values.pop(key, None)
        values.update(file_values)
    for flag in ("epochs", "batch_size", "seed", "loss_ratio"):
        v = getattr(args, flag, None)
        if v is not None:
            values[flag] = v
    env_seed = os.environ.get("CCSP_SEED")
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"CCSP_SEED must be an integer, got {env_seed!r}")
    cfg = ModelConfig(**values)
    cfg.validate()
    return cfg


def _load_preprocessed(manifest):
    if not manifest:
        raise ConfigError("a dataset manifest is required (--manifest)")
    return data.preprocess(data.load_trials(manifest))


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out_dir", None) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_history_csv(path, runs):
    """runs: iterable of (tag, model); one row per recorded batch."""
    import csv as _csv
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["tag", "epoch", "batch", "loss_csp", "loss_fisher",
                         "loss_combined"])
        for tag, net in runs:
            for epoch, batch, l, j, c in net.history:
                writer.writerow([tag, int(epoch), int(batch),
                                 f"{l:.6g}", f"{j:.6g}", f"{c:.6g}"])


def _emit_run(result, out, stem):
    harness.write_results_csv(out / f"{stem}.csv", result)
    summary = harness.summary_text(result,
                                   timestamp=datetime.now().isoformat())
    (out / f"{stem}_summary.txt").write_text(summary)
    for sid, net in result.models.items():
        net.save(out / f"{stem}_subject_{sid:03d}.ccsp")
    _write_history_csv(out / f"{stem}_history.csv",
                       [(str(sid), net) for sid, net in result.models.items()])
    print(summary, end="")


def cmd_synth(args) -> int:
    cfg = data.SynthConfig(n_subjects=args.subjects,
                           trials_per_class=args.trials,
                           n_channels=args.channels,
                           snr=args.snr, erd=args.erd, seed=args.seed)
    trialset = data.synthesize(cfg)
    manifest = data.save_dataset(args.out, trialset,
                                 non_separable=args.erd >= 1.0)
    print(f"wrote {len(trialset)} trials for {args.subjects} subjects")
    print(f"manifest: {manifest}")
    return 0


def cmd_train(args) -> int:
    cfg = build_model_config(args)
    proc = _load_preprocessed(args.manifest)
    cfg = replace(cfg, n_channels=int(proc.trials.shape[1]),
                  n_timepoints=int(proc.trials.shape[2]),
                  sample_rate_hz=float(proc.sample_rate_hz))
    net = CCSPNet(cfg)
    net.train(proc.trials, proc.labels)
    net.finalize(proc.trials, proc.labels)
    out = _out_dir(args)
    net.save(out / "model.ccsp")
    _write_history_csv(out / "history.csv", [("pooled", net)])
    accuracy = 100.0 * float((net.predict(proc.trials) == proc.labels).mean())
    print(f"trained on {len(proc)} trials; training accuracy {accuracy:.1f}%")
    print(f"model: {out / 'model.ccsp'}")
    return 0


def cmd_eval_sd(args) -> int:
    cfg = build_model_config(args)
    proc = _load_preprocessed(args.manifest)
    result = harness.run_sd(proc, cfg, jobs=args.jobs)
    _emit_run(result, _out_dir(args), "sd")
    return 0


def cmd_eval_si(args) -> int:
    cfg = build_model_config(args)
    proc = _load_preprocessed(args.manifest)
    result = harness.run_loso(proc, cfg, args.phase, jobs=args.jobs)
    _emit_run(result, _out_dir(args), f"si_{args.phase}")
    return 0


def cmd_ablate(args) -> int:
    cfg = build_model_config(args)
    proc = _load_preprocessed(args.manifest)
    components = [args.component] if args.component else list(ABLATIONS)
    out = _out_dir(args)
    results = []
    for component in components:
        result = harness.run_ablation(proc, cfg, component, jobs=args.jobs)
        results.append(result)
        print(f"ablation {component}: mean accuracy {result.mean():.1f}%")
    harness.write_results_csv(out / "ablation.csv", results)
    print(f"results: {out / 'ablation.csv'}")
    return 0


def cmd_stats(args) -> int:
    if args.fixtures:
        print(stats.reference_report())
        return 0
    if not args.csv:
        raise ConfigError("cmd_stats needs --fixtures or at least one --csv")
    tables = [harness.read_results_csv(p) for p in args.csv]
    for path, rows in zip(args.csv, tables):
        mean, sd, median, (width, lo, hi) = stats.summarize(
            [r["accuracy"] for r in rows])
        print(f"{path}: n={len(rows)} mean={mean:.2f} sd={sd:.2f} "
              f"median={median:g} range={width:g} ({lo:g}-{hi:g})")
    if len(tables) == 2:
        a = {r["subject_id"]: r["accuracy"] for r in tables[0]}
        b = {r["subject_id"]: r["accuracy"] for r in tables[1]}
        shared = sorted(set(a) & set(b))
        if len(shared) < 2:
            raise DataError("paired test needs at least 2 shared subjects")
        t, p = stats.paired_t([a[s] for s in shared], [b[s] for s in shared])
        print(f"paired t-test over {len(shared)} subjects: t={t:.4f} p={p:.4f}")
    elif len(tables) > 2:
        raise ConfigError("cmd_stats compares at most two result CSVs")
    return 0


def cmd_plot(args) -> int:
    if not args.stft and not args.csp_scatter:
        raise ConfigError("cmd_plot needs --stft or --csp-scatter")
    if not Path(args.model).exists():
        raise DataError(f"model file not found: {args.model}")
    net = CCSPNet.load(args.model)
    proc = _load_preprocessed(args.manifest)
    subject = args.subject if args.subject is not None else proc.subjects()[0]
    subset = proc.for_subject(subject)
    if len(subset) == 0:
        raise DataError(f"subject {subject} not in dataset")
    out = _out_dir(args)
    if args.stft:
        grids = plots.stft_stage_grids(net, subset.trials[0], args.channel)
        plots.write_stft_csv(out / "stft.csv", grids)
        plots.render_stft_svg(out / "stft.svg", grids)
        print(f"wrote {out / 'stft.csv'} and {out / 'stft.svg'}")
    if args.csp_scatter:
        rows = plots.csp_scatter_points(net, subset.trials, subset.labels)
        plots.write_scatter_csv(out / "csp_scatter.csv", rows)
        plots.render_scatter_svg(out / "csp_scatter.svg", rows)
        print(f"wrote {out / 'csp_scatter.csv'} and {out / 'csp_scatter.svg'}")
    return 0


def _add_common_run_flags(p):
    p.add_argument("--config", help="key: value config file")
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument("--out-dir", dest="out_dir", default="",
                   help="output directory (default: out)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--loss-ratio", dest="loss_ratio", type=float)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker pool size for per-subject folds")


def build_parser() -> _Parser:
    parser = _Parser(prog="ccspnet",
                     description="EEG motor-imagery decoding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--trials", type=int, default=40,
                   help="trials per class per subject")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--snr", type=float, default=4.0)
    p.add_argument("--erd", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one pooled model on all trials")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-sd", help="per-subject train/test evaluation")
    _add_common_run_flags(p)
    p.set_defaults(func=cmd_eval_sd)

    p = sub.add_parser("eval-si", help="leave-one-subject-out evaluation")
    _add_common_run_flags(p)
    p.add_argument("--phase", choices=["offline", "online"], default="offline")
    p.set_defaults(func=cmd_eval_si)

    p = sub.add_parser("ablate", help="run component-removal variants")
    _add_common_run_flags(p)
    p.add_argument("--component", choices=list(ABLATIONS),
                   help="single component; default runs all four")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="statistics report "
                       "(CSV schema: subject_id,approach,ablation,accuracy,seed)")
    p.add_argument("--fixtures", action="store_true",
                   help="use the embedded published summaries")
    p.add_argument("--csv", action="append", default=[],
                   help="result CSV (repeat to compare two runs)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plot", help="emit plot data as CSV plus SVG")
    p.add_argument("--stft", action="store_true")
    p.add_argument("--csp-scatter", dest="csp_scatter", action="store_true")
    p.add_argument("--model", required=True, help="serialized model path")
    p.add_argument("--manifest", required=True)
    p.add_argument("--subject", type=int)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default="")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
