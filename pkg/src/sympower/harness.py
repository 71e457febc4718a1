"""Experiment grids: transform comparison, hypothesis sweeps, ablation and single fits.

Every experiment expands into independent cells ``(input, variant, seed)``.
Each cell transforms its signal, trains a fresh network on the result and
evaluates the inverted prediction against the original signal at every
checkpoint. Results are long-format rows (one metric per row) sorted by
cell key, so a re-run with the same seeds reproduces the CSV exactly apart
from the two timing columns.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import transforms as tf
from .dataio import IMAGES, SyntheticKind, SyntheticSpec, bundled_image, generate, signal_coords
from .errors import OutOfBound
from .inr import Activation, NetworkConfig, TrainConfig, init_network, train
from .metrics import QualityReport, mse, psnr_from_mse, si_snr, ssim
from .tensor import Modality, Signal, range_metric, skewness_metric

CSV_FIELDS = ("task", "input", "variant", "backbone", "seed", "params_hash", "checkpoint",
              "metric", "value", "transform_seconds", "fit_seconds")
TIMING_FIELDS = ("transform_seconds", "fit_seconds")
DEFAULT_CHECKPOINTS = (100, 300, 500, 1000)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class Task(enum.Enum):
    COMPARE = "compare"
    HYPOTHESIS_RANGE = "hypothesis-range"
    HYPOTHESIS_SKEW = "hypothesis-skew"
    HYPOTHESIS_DEVIATION = "hypothesis-deviation"
    ABLATION = "ablation"
    FIT_AUDIO = "fit-audio"
    FIT_IMAGE = "fit-image"
    FIT_VOLUME = "fit-volume"


@dataclass(frozen=True)
class Variant:
    """A named way of transforming a signal before fitting.

    ``kind=None`` fits the signal as-is (used for synthetic signals that are
    already bounded in [-1, 1]).
    """

    label: str
    kind: Optional[tf.TransformKind] = None
    sym_cfg: Optional[tf.SymPowerConfig] = None

    def apply(self, s: Signal):
        if self.kind is None:
            return s, None
        return tf.apply(s, self.kind, sym_cfg=self.sym_cfg)

    @staticmethod
    def invert(t: Signal, params):
        return t if params is None else tf.invert(t, params)


def variant(kind: tf.TransformKind, label: Optional[str] = None, **sym) -> Variant:
    cfg = tf.SymPowerConfig(**sym) if sym else None
    return Variant(label or kind.label, kind, cfg)


IDENTITY = Variant("none")
BASELINE = variant(tf.scale(1.0))
SYM = variant(tf.SYMPOWER)


def compare_variants(permutation_seed: int = 0):
    return [variant(tf.NORM01), variant(tf.ZSCORE), variant(tf.gamma(0.5)), variant(tf.gamma(2.0)),
            variant(tf.scale(0.5)), variant(tf.scale(1.0)), variant(tf.scale(2.0)),
            variant(tf.INVERSE), variant(tf.permutation(permutation_seed)), variant(tf.BOXCOX),
            variant(tf.SYMPOWER)]


def ablation_variants():
    return [BASELINE,
            variant(tf.SYMPOWER, "w/o basic", power=False),
            variant(tf.SYMPOWER, "w/o cali.", xi=0.0),
            variant(tf.SYMPOWER, "w/o soft.", kappa=0.0),
            variant(tf.SYMPOWER, "w/o cali. & soft.", xi=0.0, kappa=0.0),
            variant(tf.SYMPOWER, "full")]


@dataclass(frozen=True)
class FitSettings:
    """Network and optimizer settings shared by every cell of an experiment."""

    activation: Activation = Activation.SINE
    hidden_layers: int = 3
    width: int = 32
    omega0: float = 30.0
    finer_bias_k: float = 1.0
    lr: float = 8e-4
    checkpoints: tuple = DEFAULT_CHECKPOINTS

    @property
    def iterations(self) -> int:
        return max(self.checkpoints)

    @property
    def backbone(self) -> str:
        return "finer" if self.activation == Activation.FINER else "siren"


@dataclass(frozen=True)
class Cell:
    task: str
    input_name: str
    variant: Variant
    seed: int

    @property
    def key(self):
        return (self.task, self.input_name, self.variant.label, self.seed)


@dataclass(frozen=True)
class ExperimentSpec:
    task: Task
    inputs: tuple = ()                 # (name, Signal) pairs
    variants: tuple = ()
    seeds: tuple = DEFAULT_SEEDS
    settings: FitSettings = FitSettings()
    peak: Optional[float] = None       # PSNR peak; None -> 1 for images, truth range otherwise

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        cps = list(self.settings.checkpoints)
        if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1:
            raise ValueError("checkpoints must be positive and strictly increasing")

    def cells(self):
        return [Cell(self.task.value, name, v, seed)
                for name, _ in self.inputs for v in self.variants for seed in self.seeds]


@dataclass
class CellResult:
    cell: Cell
    rows: list
    diverged: bool = False


def _peak(s: Signal, peak: Optional[float]) -> float:
    if peak is not None:
        return peak
    if s.modality == Modality.IMAGE2D:
        return 1.0
    span = float(np.ptp(s.data))
    return span if span > 0 else 1.0


def fit_cell(cell: Cell, signal: Signal, settings: FitSettings, peak: Optional[float] = None,
             keep_prediction: bool = False):
    """Transform, fit and evaluate one cell.

    Returns ``(CellResult, FitReport, params, state)``.
    """
    t0 = time.perf_counter()
    target, params = cell.variant.apply(signal)
    transform_seconds = time.perf_counter() - t0

    coords, y = signal_coords(target)
    net = NetworkConfig(in_dim=coords.shape[1], out_dim=y.shape[1],
                        hidden_layers=settings.hidden_layers, width=settings.width,
                        activation=settings.activation, omega0=settings.omega0,
                        finer_bias_k=settings.finer_bias_k, seed=cell.seed)
    state = init_network(net)
    is_image = signal.modality == Modality.IMAGE2D and len(signal.shape) >= 2 \
        and min(signal.shape[:2]) >= 11
    is_audio = signal.modality == Modality.AUDIO1D
    pk = _peak(signal, peak)

    def evaluate(pred):
        # network outputs overshooting the bound are expected; they are clamped
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutOfBound)
            recon = Variant.invert(target.with_data(pred.reshape(-1)), params)
        err = mse(recon, signal)
        return QualityReport(
            mse=err, psnr=psnr_from_mse(err, pk),
            ssim=ssim(recon, signal, data_range=pk) if is_image else None,
            si_snr=si_snr(recon, signal) if is_audio and np.ptp(signal.data) > 0 else None)

    cfg = TrainConfig(lr=settings.lr, iterations=settings.iterations, eval_every=0,
                      checkpoints=tuple(settings.checkpoints), seed=cell.seed)
    report = train(state, coords, y, cfg, evaluate=evaluate)

    digest = params.digest() if params is not None else "-"
    common = dict(task=cell.task, input=cell.input_name, variant=cell.variant.label,
                  backbone=settings.backbone, seed=cell.seed, params_hash=digest,
                  transform_seconds=f"{transform_seconds:.6f}",
                  fit_seconds=f"{report.wall_time:.3f}")
    rows = []
    attrs = {"std": float(np.std(target.data)), "range": range_metric(target, -1.0, 1.0)}
    attrs["skew"] = skewness_metric(target) if np.ptp(target.data) > 0 else 0.0
    if params is not None and params.kind.kind == tf.Kind.SYMPOWER:
        attrs["beta"], attrs["beta_plus"] = params.beta, params.beta_plus
    for name, value in attrs.items():
        rows.append(dict(common, checkpoint=0, metric=name, value=_fmt(value)))
    for it in settings.checkpoints:
        q = report.metrics.get(it)
        if q is None:
            rows.append(dict(common, checkpoint=it, metric="diverged", value="1"))
            continue
        for name in ("psnr", "mse", "ssim", "si_snr"):
            value = getattr(q, name)
            if value is not None:
                rows.append(dict(common, checkpoint=it, metric=name, value=_fmt(value)))
    if not keep_prediction:
        report.prediction = None
    return CellResult(cell, rows, report.diverged), report, params, state


def _fmt(x: float) -> str:
    return repr(float(x))


def _run_one(args):
    cell, signal, settings, peak = args
    result = fit_cell(cell, signal, settings, peak)[0]
    return result


def run_experiment(spec: ExperimentSpec, workers: int = 1, progress=None):
    """Run every cell of ``spec``; rows come back sorted by cell key."""
    signals = dict(spec.inputs)
    jobs = [(c, signals[c.input_name], spec.settings, spec.peak) for c in spec.cells()]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            if progress:
                progress(job[0])
    order = {c.key: i for i, c in enumerate(spec.cells())}
    results.sort(key=lambda r: order[r.cell.key])
    return Report([row for r in results for row in r.rows], any(r.diverged for r in results))


@dataclass
class Report:
    rows: list
    diverged: bool = False

    def to_csv(self, timing: bool = True) -> str:
        fields = CSV_FIELDS if timing else tuple(f for f in CSV_FIELDS if f not in TIMING_FIELDS)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())

    def values(self, metric: str, checkpoint: Optional[int] = None, **match):
        out = []
        for r in self.rows:
            if r["metric"] != metric or (checkpoint is not None and int(r["checkpoint"]) != checkpoint):
                continue
            if all(str(r[k]) == str(v) for k, v in match.items()):
                out.append(float(r["value"]))
        return out

    def mean(self, metric: str, checkpoint: Optional[int] = None, **match) -> float:
        vals = self.values(metric, checkpoint, **match)
        return float(np.mean(vals)) if vals else math.nan

    def labels(self, key: str = "variant"):
        seen = []
        for r in self.rows:
            if r[key] not in seen:
                seen.append(r[key])
        return seen

    def summary(self, metric: str = "psnr", checkpoint: Optional[int] = None, by: str = "variant"):
        """Mean of ``metric`` per label of ``by``, averaged over seeds and inputs."""
        return {lab: self.mean(metric, checkpoint, **{by: lab}) for lab in self.labels(by)}

    @classmethod
    def from_csv(cls, text: str) -> "Report":
        return cls(list(csv.DictReader(io.StringIO(text))))


# ---------------------------------------------------------------------------
# Experiment builders
# ---------------------------------------------------------------------------

def corpus(names: Sequence[str] = IMAGES):
    return tuple((n, bundled_image(n)) for n in names)


def compare_spec(inputs=None, seeds=DEFAULT_SEEDS, settings=FitSettings(), variants=None):
    return ExperimentSpec(Task.COMPARE, inputs or corpus(), tuple(variants or compare_variants()),
                          tuple(seeds), settings)


def run_compare(spec: ExperimentSpec, workers: int = 1, progress=None) -> Report:
    return run_experiment(spec, workers, progress)


RANGE_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)
SKEW_MUS = (-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8)
DEVIATION_SIGMAS = (0.1, 0.2, 0.3, 0.4, 0.5)
SKEW_SIGMA = 0.3


def hypothesis_specs(seeds=DEFAULT_SEEDS, settings=FitSettings(checkpoints=(100, 300, 500)),
                     image: str = "camera", shape=(64, 64), range_factors=RANGE_FACTORS,
                     mus=SKEW_MUS, sigmas=DEVIATION_SIGMAS, skew_sigma=SKEW_SIGMA):
    """The three hypothesis sweeps.

    Range: scale(k) of a bundled image for each ``k``. Skew: clipped-normal
    fields with fixed sigma and varying mean. Deviation: zero-mean
    clipped-normal fields with varying sigma. Synthetic signals are fitted
    as-is with PSNR peak 2 (the width of [-1, 1]).
    """
    range_spec = ExperimentSpec(Task.HYPOTHESIS_RANGE, corpus([image]),
                                tuple(variant(tf.scale(k)) for k in range_factors),
                                tuple(seeds), settings)
    skew_inputs = tuple((f"mu={mu:+.2f}",
                         generate(SyntheticSpec(SyntheticKind.NORMAL_CLIPPED, shape, seed=1000,
                                                mu=mu, sigma=skew_sigma)))
                        for mu in mus)
    skew_spec = ExperimentSpec(Task.HYPOTHESIS_SKEW, skew_inputs, (IDENTITY,), tuple(seeds),
                               settings, peak=2.0)
    dev_inputs = tuple((f"sigma={sg:.2f}",
                        generate(SyntheticSpec(SyntheticKind.NORMAL_CLIPPED, shape, seed=1000,
                                               mu=0.0, sigma=sg)))
                       for sg in sigmas)
    dev_spec = ExperimentSpec(Task.HYPOTHESIS_DEVIATION, dev_inputs, (IDENTITY,), tuple(seeds),
                              settings, peak=2.0)
    return range_spec, skew_spec, dev_spec


def run_hypothesis(spec: ExperimentSpec, workers: int = 1, progress=None) -> Report:
    """Run one sweep; skew and deviation rows also record the input's skewness/std."""
    report = run_experiment(spec, workers, progress)
    if spec.task in (Task.HYPOTHESIS_SKEW, Task.HYPOTHESIS_DEVIATION):
        extra = []
        for name, s in spec.inputs:
            base = dict(task=spec.task.value, input=name, variant="input", backbone=spec.settings.backbone,
                        seed="-", params_hash="-", checkpoint=0, transform_seconds="", fit_seconds="")
            extra.append(dict(base, metric="input_skew", value=_fmt(skewness_metric(s))))
            extra.append(dict(base, metric="input_std", value=_fmt(np.std(s.data))))
        report.rows = extra + report.rows
    return report


def ablation_spec(inputs=None, seeds=DEFAULT_SEEDS, settings=FitSettings()):
    return ExperimentSpec(Task.ABLATION, inputs or corpus(), tuple(ablation_variants()),
                          tuple(seeds), settings)


def run_ablation(spec: ExperimentSpec, workers: int = 1, progress=None) -> Report:
    return run_experiment(spec, workers, progress)


def range_argmax(report: Report, checkpoint: int) -> float:
    means = {float(lab[len("scale("):-1]): v
             for lab, v in report.summary("psnr", checkpoint).items()}
    return max(means, key=means.get)


def per_input_means(report: Report, checkpoint: int, metric: str = "psnr"):
    return {name: report.mean(metric, checkpoint, input=name, variant="none")
            for name in report.labels("input") if name != "-"
            and report.values(metric, checkpoint, input=name, variant="none")}


def deviation_spearman(report: Report, checkpoint: int) -> float:
    means = per_input_means(report, checkpoint)
    sigmas = [float(k.split("=")[1]) for k in means]
    return float(spearmanr(sigmas, list(means.values())).statistic)


# ---------------------------------------------------------------------------
# Single fits
# ---------------------------------------------------------------------------

def run_fit(signal: Signal, name: str, variants=(BASELINE, SYM), seeds=(0,),
            settings: FitSettings = FitSettings(), out_dir=None, task: Task = Task.FIT_IMAGE,
            peak: Optional[float] = None):
    """Fit one signal with each variant; optionally write reconstructions and checkpoints.

    Returns ``(Report, deltas)`` where ``deltas[checkpoint]`` is the mean
    PSNR gain of the last variant over the first.
    """
    from .dataio import save_image, save_wav
    from .inr import save_checkpoint

    rows, diverged = [], False
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for v in variants:
        for seed in seeds:
            cell = Cell(task.value, name, v, seed)
            result, report, params, state = fit_cell(cell, signal, settings, peak,
                                                     keep_prediction=True)
            rows.extend(result.rows)
            diverged |= result.diverged
            if out is not None and report.prediction is not None:
                stem = f"{name}_{_slug(v.label)}_s{seed}"
                pred = Variant.invert(_like(signal, report.prediction), params)
                if signal.modality == Modality.AUDIO1D:
                    save_wav(pred.with_data(np.clip(pred.data, -1, 1)), out / f"{stem}.wav",
                             signal.sample_rate)
                elif signal.modality == Modality.IMAGE2D:
                    save_image(pred.with_data(np.clip(pred.data, 0, 1)), out / f"{stem}.pgm")
                (out / f"{stem}_trace.csv").write_text(report.to_csv())
                save_checkpoint(state, out / f"{stem}.sptn")
                if params is not None:
                    tf.write_params(params, out / f"{stem}.sptp")
    rep = Report(rows, diverged)
    first, last = variants[0].label, variants[-1].label
    deltas = {cp: rep.mean("psnr", cp, variant=last) - rep.mean("psnr", cp, variant=first)
              for cp in settings.checkpoints}
    return rep, deltas


def _like(signal: Signal, pred: np.ndarray) -> Signal:
    return signal.with_data(np.asarray(pred).reshape(-1))


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() else "-" for ch in label).strip("-")
