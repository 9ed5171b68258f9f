"""Experiment harness: per-subject SD runs, LOSO cross-validation, ablations.

Each fold trains a fresh model under a fold-specific seed derived from the
global seed and the test subject id, so results do not depend on fold order
or on how many workers execute them. Results merge keyed by subject id.
"""

from __future__ import annotations

import csv
import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import data, stats
from .errors import ConfigError, DataError
from .model import ABLATIONS, CCSPNet, ModelConfig


@dataclass
class RunResult:
    approach: str                 # SD | SI-offline | SI-online
    ablation: str                 # "" for the full model
    subject_ids: list
    accuracies: list              # percent, aligned with subject_ids
    seed: int
    config: ModelConfig
    wall_time_s: float
    models: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.subject_ids) != len(self.accuracies):
            raise DataError("one accuracy per test subject required")
        for a in self.accuracies:
            if not 0.0 <= a <= 100.0:
                raise DataError(f"accuracy {a} outside [0, 100]")

    def mean(self) -> float:
        return float(np.mean(self.accuracies))


def fold_seed(global_seed: int, subject_id: int) -> int:
    """Stable per-fold seed, independent of fold execution order."""
    digest = hashlib.sha256(f"{global_seed}:{subject_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _canonical_order(trials: data.TrialSet) -> data.TrialSet:
    """Sort trials by (subject, session, phase) so block order is irrelevant."""
    order = np.lexsort((trials.phases, trials.sessions, trials.subject_ids))
    return trials.select(order)


def _run_fold(train: data.TrialSet, test: data.TrialSet, config: ModelConfig,
              seed: int, ablation: str):
    cfg = replace(config, seed=seed, ablate=ablation,
                  n_channels=int(train.trials.shape[1]),
                  n_timepoints=int(train.trials.shape[2]),
                  sample_rate_hz=float(train.sample_rate_hz))
    train = _canonical_order(train)
    net = CCSPNet(cfg)
    net.train(train.trials, train.labels)
    net.finalize(train.trials, train.labels)
    accuracy = 100.0 * float((net.predict(test.trials) == test.labels).mean())
    return accuracy, net


def _run_folds(folds, config, approach, ablation, jobs):
    """folds: list of (subject_id, train set, test set)."""
    start = time.monotonic()
    jobs = max(1, int(jobs))

    def work(fold):
        sid, train, test = fold
        return sid, _run_fold(train, test, config,
                              fold_seed(config.seed, sid), ablation)

    if jobs == 1:
        outcomes = [work(f) for f in folds]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, folds))
    outcomes.sort(key=lambda o: o[0])
    return RunResult(
        approach=approach,
        ablation=ablation,
        subject_ids=[sid for sid, _ in outcomes],
        accuracies=[acc for _, (acc, _) in outcomes],
        seed=config.seed,
        config=config,
        wall_time_s=time.monotonic() - start,
        models={sid: net for sid, (_, net) in outcomes})


def run_sd(dataset: data.TrialSet, config: ModelConfig,
           ablation: str = "", jobs: int = 1) -> RunResult:
    """Per-subject training on S1 plus S2-offline, testing on S2-online."""
    folds = []
    for sid in dataset.subjects():
        train, test = data.split_sd(dataset.for_subject(sid))
        folds.append((int(sid), train, test))
    return _run_folds(folds, config, "SD", ablation, jobs)


def run_loso(dataset: data.TrialSet, config: ModelConfig, phase,
             ablation: str = "", jobs: int = 1) -> RunResult:
    """Leave-one-subject-out: train on the chosen phase of all other subjects."""
    phase_code = data.PHASE_CODES[phase] if isinstance(phase, str) else int(phase)
    approach = f"SI-{data.PHASE_NAMES[phase_code]}"
    folds = []
    for sid in dataset.subjects():
        train, test = data.split_loso(dataset, int(sid), phase_code)
        folds.append((int(sid), train, test))
    return _run_folds(folds, config, approach, ablation, jobs)


def run_ablation(dataset: data.TrialSet, config: ModelConfig,
                 component: str, jobs: int = 1) -> RunResult:
    if component not in ABLATIONS:
        raise ConfigError(f"unknown ablation component {component!r}; "
                          f"choose one of {ABLATIONS}")
    return run_sd(dataset, config, ablation=component, jobs=jobs)


def run_subject_sweep(config: ModelConfig, synth_config: data.SynthConfig,
                      subject_counts) -> list[tuple[int, float]]:
    """Accuracy of one held-out synthetic subject vs training-pool size."""
    subject_counts = sorted(set(int(n) for n in subject_counts))
    if subject_counts[0] < 1:
        raise ConfigError("subject counts must be >= 1")
    total = subject_counts[-1] + 1
    synth = replace(synth_config, n_subjects=total)
    full = data.preprocess(data.synthesize(synth))
    held_out = int(full.subjects()[-1])
    _, test = data.split_loso(full, held_out, data.PHASE_OFFLINE)
    points = []
    for n in subject_counts:
        pool_ids = full.subjects()[:n]
        train = full.select(np.isin(full.subject_ids, pool_ids)
                            & (full.phases == data.PHASE_OFFLINE))
        acc, _ = _run_fold(train, test, config,
                           fold_seed(config.seed, held_out * 1000 + n), "")
        points.append((n, acc))
    return points


CSV_FIELDS = ("subject_id", "approach", "ablation", "accuracy", "seed")


def write_results_csv(path, results) -> None:
    """One row per (run, subject); schema given by CSV_FIELDS."""
    if isinstance(results, RunResult):
        results = [results]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in results:
            for sid, acc in zip(r.subject_ids, r.accuracies):
                writer.writerow([sid, r.approach, r.ablation or "none",
                                 f"{acc:.4f}", r.seed])


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_FIELDS:
            raise DataError(f"{path}: expected header {','.join(CSV_FIELDS)}")
        rows = []
        for row in reader:
            try:
                row["subject_id"] = int(row["subject_id"])
                row["accuracy"] = float(row["accuracy"])
                row["seed"] = int(row["seed"])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: malformed row {row}: {exc}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no result rows")
    return rows


def summary_text(result: RunResult, timestamp: str = "") -> str:
    mean, sd, median, (width, lo, hi) = stats.summarize(result.accuracies)
    lines = []
    if timestamp:
        lines.append(f"generated: {timestamp}")
    lines += [
        f"approach: {result.approach}",
        f"ablation: {result.ablation or 'none'}",
        f"subjects: {len(result.subject_ids)}",
        f"seed: {result.seed}",
        f"mean accuracy: {mean:.2f}",
        f"standard deviation: {sd:.2f}",
        f"median: {median:g}",
        f"range: {width:g} ({lo:g}-{hi:g})",
        f"wall time (s): {result.wall_time_s:.1f}",
    ]
    return "\n".join(lines) + "\n"
