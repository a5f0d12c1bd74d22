"""Episodic evaluation: N-way K-shot tasks, the per-episode pipeline, and
aggregation over many episodes.

Episode i draws its classes and samples from a stream keyed by (seed, i), so
results do not depend on evaluation order or on the number of worker
processes.  Two configurations evaluated with the same episode settings see
exactly the same tasks, which makes sweeps paired comparisons.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Final

import numpy as np

from .calibration import CalibrationParams, calibrate_support_set, \
    retrieve_nearest_class_features
from .classifiers import (MaxLikelihoodScorer, OptimizerConfig, TrainSet,
                          predict, train_logistic, train_svm)
from .errors import (DataError, DimensionError, EpisodeError, FsdcError,
                     SpecError)
from .features_io import Dataset, SplitManifest
from .rng import PortableRng, derive_key
from .sampling import SamplerConfig, sample_features
from .stats import BaseStatsTable
from .transform import TukeyParams, tukey_transform

_DOM_EPISODE: Final = 0x45
_DOM_GEN: Final = 0x47
_DOM_RETRIEVE: Final = 0x52
_DOM_OPT: Final = 0x4D

SWEEPABLE_PARAMS: Final = ("lambda", "k", "alpha", "num_generated", "nearest_m")


@dataclass(frozen=True)
class EpisodeSpec:
    """Shape of the evaluation tasks."""

    n_way: int = 5
    k_shot: int = 1
    q_queries: int = 15
    num_episodes: int = 2000
    seed: int = 42

    def __post_init__(self) -> None:
        for name in ("n_way", "k_shot", "q_queries", "num_episodes"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be at least 1")

    def to_payload(self) -> dict:
        return {"n_way": self.n_way, "k_shot": self.k_shot,
                "q_queries": self.q_queries, "num_episodes": self.num_episodes,
                "seed": self.seed}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the per-episode pipeline needs besides the data."""

    tukey: TukeyParams = TukeyParams()
    calib: CalibrationParams = CalibrationParams()
    sampler: SamplerConfig = SamplerConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    use_tukey: bool = True
    use_generation: bool = True
    classifier: str = "logistic"
    ml_aggregate: str = "max"
    baseline: str = "none"
    baseline_m: int = 1

    def __post_init__(self) -> None:
        if self.classifier not in ("logistic", "svm", "max_likelihood"):
            raise SpecError(f"unknown classifier {self.classifier!r}")
        if self.ml_aggregate not in ("max", "mean"):
            raise SpecError(f"unknown aggregate {self.ml_aggregate!r}")
        if self.baseline not in ("none", "nearest_class"):
            raise SpecError(f"unknown baseline {self.baseline!r}")
        if self.baseline_m < 1:
            raise SpecError("baseline_m must be at least 1")
        if self.baseline == "nearest_class" and self.classifier == "max_likelihood":
            raise SpecError("the retrieval baseline needs a trained classifier")

    def to_payload(self) -> dict:
        return {
            "use_tukey": self.use_tukey,
            "tukey": {"lam": self.tukey.lam,
                      "log_epsilon": self.tukey.log_epsilon},
            "calib": {"k": self.calib.k, "alpha": self.calib.alpha,
                      "use_novel_feature": self.calib.use_novel_feature,
                      "alpha_diagonal": self.calib.alpha_diagonal},
            "use_generation": self.use_generation,
            "sampler": {"total_per_class": self.sampler.total_per_class,
                        "seed": self.sampler.seed,
                        "jitter": self.sampler.jitter},
            "optimizer": {"learning_rate": self.optimizer.learning_rate,
                          "epochs": self.optimizer.epochs,
                          "batch_size": self.optimizer.batch_size,
                          "l2": self.optimizer.l2,
                          "seed": self.optimizer.seed},
            "classifier": self.classifier,
            "ml_aggregate": self.ml_aggregate,
            "baseline": {"kind": self.baseline, "m": self.baseline_m},
        }


@dataclass(frozen=True)
class Episode:
    """One sampled N-way K-shot task; features are raw float64."""

    index: int
    class_ids: tuple[int, ...]
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray


@dataclass(frozen=True)
class EvalReport:
    """Aggregate accuracy with the full configuration that produced it."""

    mean_accuracy: float
    ci95: float
    episode_accuracies: tuple[float, ...]
    episode_spec: dict
    pipeline: dict

    def to_payload(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "ci95": self.ci95,
            "num_episodes": len(self.episode_accuracies),
            "episode_spec": self.episode_spec,
            "pipeline": self.pipeline,
            "episode_accuracies": list(self.episode_accuracies),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True, indent=2) + "\n"


def sample_episode(ds: Dataset, split: SplitManifest, spec: EpisodeSpec,
                   index: int) -> Episode:
    """Draw episode ``index``: n_way novel classes, k_shot support and
    q_queries query rows each, all without replacement."""
    novel = sorted(split.novel_classes)
    if len(novel) < spec.n_way:
        raise EpisodeError(
            f"episode needs {spec.n_way} novel classes, split has {len(novel)}")
    rng = PortableRng(derive_key(spec.seed, _DOM_EPISODE, index))
    chosen = [novel[i] for i in rng.permutation_prefix(len(novel), spec.n_way)]
    need = spec.k_shot + spec.q_queries
    support_rows = []
    query_rows = []
    for cid in chosen:
        rows = ds.rows_for(cid)
        if rows.size < need:
            raise EpisodeError(
                f"class {cid} has {rows.size} records, episode needs {need}")
        picked = rng.permutation_prefix(rows.size, need)
        support_rows.append(rows[np.asarray(picked[:spec.k_shot])])
        query_rows.append(rows[np.asarray(picked[spec.k_shot:])])
    support_idx = np.concatenate(support_rows)
    query_idx = np.concatenate(query_rows)
    support_y = np.repeat(np.arange(spec.n_way, dtype=np.int64), spec.k_shot)
    query_y = np.repeat(np.arange(spec.n_way, dtype=np.int64), spec.q_queries)
    return Episode(index=index,
                   class_ids=tuple(int(c) for c in chosen),
                   support_x=ds.values[support_idx].astype(np.float64),
                   support_y=support_y,
                   query_x=ds.values[query_idx].astype(np.float64),
                   query_y=query_y)


def run_episode(ep: Episode, stats: BaseStatsTable, cfg: PipelineConfig,
                base_data: Dataset | None = None) -> float:
    """Run the pipeline on one episode and return query accuracy in [0, 1].

    ``base_data`` supplies raw base-class rows and is only required for the
    retrieval baseline.  Errors from any stage are re-raised with the episode
    index attached.
    """
    try:
        return _run_episode(ep, stats, cfg, base_data)
    except FsdcError as exc:
        raise type(exc)(f"episode {ep.index}: {exc}") from exc


def _run_episode(ep: Episode, stats: BaseStatsTable, cfg: PipelineConfig,
                 base_data: Dataset | None) -> float:
    support_x = ep.support_x
    query_x = ep.query_x
    if cfg.use_tukey:
        support_x = tukey_transform(support_x, cfg.tukey)
        query_x = tukey_transform(query_x, cfg.tukey)

    if cfg.classifier == "max_likelihood":
        dists = calibrate_support_set(support_x, ep.support_y, stats, cfg.calib)
        scorer = MaxLikelihoodScorer(dists, jitter=cfg.sampler.jitter,
                                     aggregate=cfg.ml_aggregate)
        predicted = scorer.classify(query_x)
        return float((predicted == ep.query_y).mean())

    feature_blocks = [support_x]
    label_blocks = [ep.support_y]
    if cfg.baseline == "nearest_class":
        if base_data is None:
            raise SpecError("the retrieval baseline needs the base dataset")
        for i in range(support_x.shape[0]):
            rng = PortableRng(derive_key(cfg.sampler.seed, _DOM_RETRIEVE,
                                         ep.index, i))
            raw = retrieve_nearest_class_features(support_x[i], base_data,
                                                  stats, cfg.baseline_m, rng)
            if cfg.use_tukey:
                raw = tukey_transform(raw, cfg.tukey)
            feature_blocks.append(raw)
            label_blocks.append(np.full(cfg.baseline_m, ep.support_y[i],
                                        dtype=np.int64))
    elif cfg.use_generation and cfg.sampler.total_per_class > 0:
        dists = calibrate_support_set(support_x, ep.support_y, stats, cfg.calib)
        sampler = replace(cfg.sampler,
                          seed=derive_key(cfg.sampler.seed, _DOM_GEN, ep.index))
        generated_x, generated_y = sample_features(dists, sampler)
        feature_blocks.append(generated_x)
        label_blocks.append(generated_y)

    train = TrainSet(np.concatenate(feature_blocks),
                     np.concatenate(label_blocks),
                     class_map=ep.class_ids)
    optimizer = replace(cfg.optimizer,
                        seed=derive_key(cfg.optimizer.seed, _DOM_OPT, ep.index))
    if cfg.classifier == "logistic":
        model = train_logistic(train, optimizer)
    else:
        model = train_svm(train, optimizer)
    predicted = predict(model, query_x)
    return float((predicted == ep.query_y).mean())


_WORKER_STATE: dict = {}


def _init_worker(ds, split, stats, spec, cfg) -> None:
    _WORKER_STATE["args"] = (ds, split, stats, spec, cfg)


def _run_index(index: int) -> float:
    ds, split, stats, spec, cfg = _WORKER_STATE["args"]
    ep = sample_episode(ds, split, spec, index)
    return run_episode(ep, stats, cfg, base_data=ds)


def evaluate(ds: Dataset, split: SplitManifest, stats: BaseStatsTable,
             spec: EpisodeSpec, cfg: PipelineConfig,
             workers: int = 1) -> EvalReport:
    """Run every episode and aggregate accuracy with a 95% interval.

    ``workers > 1`` fans episodes out to processes; because every episode is
    seeded independently, the result is identical to the serial run.
    """
    if workers < 1:
        raise SpecError("workers must be at least 1")
    indices = range(spec.num_episodes)
    if workers == 1:
        accuracies = [
            run_episode(sample_episode(ds, split, spec, i), stats, cfg,
                        base_data=ds)
            for i in indices
        ]
    else:
        chunk = max(1, spec.num_episodes // (workers * 8))
        with ProcessPoolExecutor(
                max_workers=workers, initializer=_init_worker,
                initargs=(ds, split, stats, spec, cfg)) as pool:
            accuracies = list(pool.map(_run_index, indices, chunksize=chunk))
    acc = np.asarray(accuracies, dtype=np.float64)
    mean = float(acc.mean())
    if acc.size > 1:
        ci = float(1.96 * acc.std(ddof=1) / np.sqrt(acc.size))
    else:
        ci = 0.0
    return EvalReport(mean_accuracy=mean, ci95=ci,
                      episode_accuracies=tuple(float(a) for a in acc),
                      episode_spec=spec.to_payload(),
                      pipeline=cfg.to_payload())


def apply_sweep_value(cfg: PipelineConfig, param: str, value) -> PipelineConfig:
    """A copy of ``cfg`` with one swept parameter changed."""
    if param == "lambda":
        return replace(cfg, use_tukey=True,
                       tukey=replace(cfg.tukey, lam=float(value)))
    if param == "k":
        return replace(cfg, calib=replace(cfg.calib, k=int(value)))
    if param == "alpha":
        return replace(cfg, calib=replace(cfg.calib, alpha=float(value)))
    if param == "num_generated":
        return replace(cfg, use_generation=True,
                       sampler=replace(cfg.sampler, total_per_class=int(value)))
    if param == "nearest_m":
        return replace(cfg, baseline="nearest_class", baseline_m=int(value),
                       use_generation=False)
    raise SpecError(f"unknown sweep parameter {param!r}; "
                    f"choose from {', '.join(SWEEPABLE_PARAMS)}")


def sweep(ds: Dataset, split: SplitManifest, stats: BaseStatsTable,
          spec: EpisodeSpec, cfg: PipelineConfig, param: str, values,
          workers: int = 1):
    """Evaluate ``cfg`` once per value of one parameter, on identical
    episodes, and return ``[(value, report), ...]`` in input order."""
    values = list(values)
    if not values:
        raise SpecError("sweep needs at least one value")
    out = []
    for value in values:
        report = evaluate(ds, split, stats, spec,
                          apply_sweep_value(cfg, param, value), workers=workers)
        out.append((value, report))
    return out


def collect_episode_features(ep: Episode, stats: BaseStatsTable,
                             cfg: PipelineConfig):
    """Gather one episode's features in pipeline space for inspection.

    Returns ``(features, class_ids, roles)``: stacked support, query, and
    generated rows (transformed when the pipeline transforms), the original
    class id of each row, and a role string per row ("support", "query",
    "generated").
    """
    support_x = ep.support_x
    query_x = ep.query_x
    if cfg.use_tukey:
        support_x = tukey_transform(support_x, cfg.tukey)
        query_x = tukey_transform(query_x, cfg.tukey)
    class_map = np.asarray(ep.class_ids, dtype=np.int64)
    blocks = [support_x, query_x]
    ids = [class_map[ep.support_y], class_map[ep.query_y]]
    roles = ["support"] * support_x.shape[0] + ["query"] * query_x.shape[0]
    if cfg.use_generation and cfg.sampler.total_per_class > 0:
        dists = calibrate_support_set(support_x, ep.support_y, stats, cfg.calib)
        sampler = replace(cfg.sampler,
                          seed=derive_key(cfg.sampler.seed, _DOM_GEN, ep.index))
        generated_x, generated_y = sample_features(dists, sampler)
        blocks.append(generated_x)
        ids.append(class_map[generated_y])
        roles.extend(["generated"] * generated_x.shape[0])
    return np.concatenate(blocks), np.concatenate(ids), roles


def project_2d(features) -> np.ndarray:
    """Project features onto their top two principal axes.

    Output is centered, so reconstruction error equals total variance minus
    the variance captured by the two axes.  Each axis has a deterministic
    sign: its largest-magnitude component is positive.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("features must be 2-D")
    if x.shape[1] < 2:
        raise DimensionError("projection needs at least 2 feature dimensions")
    if x.shape[0] < 2:
        raise SpecError("projection needs at least 2 feature vectors")
    if not np.isfinite(x).all():
        raise DataError("projection input must be finite")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    if eigenvalues[-1] <= 0:
        raise DataError("cannot project: features have zero variance")
    axes = eigenvectors[:, [-1, -2]].copy()
    for j in range(2):
        lead = int(np.argmax(np.abs(axes[:, j])))
        if axes[lead, j] < 0:
            axes[:, j] = -axes[:, j]
    return centered @ axes
