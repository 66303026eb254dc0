"""Task construction and Reptile meta-training."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import diffnum as dn
from . import model as M
from .descriptors import DEFAULT_PROPERTY_NAMES, FEATURE_NAMES, compute_features
from .smiles import Vocabulary, parse, tokenize

log = logging.getLogger(__name__)

STD_EPS = 1e-8


@dataclass(frozen=True)
class DatasetStats:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    n: int

    @classmethod
    def fit(cls, features) -> "DatasetStats":
        """Per-feature mean and population standard deviation (divisor N)."""
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or len(X) == 0:
            raise ValueError("need a non-empty N x d feature matrix")
        mu = X.sum(axis=0) / len(X)
        sigma = np.sqrt(((X - mu) ** 2).sum(axis=0) / len(X))
        return cls(mu, sigma, len(X))

    def to_dict(self) -> dict:
        return {"mu_hat": self.mu_hat.tolist(), "sigma_hat": self.sigma_hat.tolist(), "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetStats":
        return cls(np.asarray(d["mu_hat"], dtype=np.float64),
                   np.asarray(d["sigma_hat"], dtype=np.float64), int(d["n"]))


def dataset_standardize(raw, stats: DatasetStats) -> np.ndarray:
    X = np.asarray(raw, dtype=np.float64)
    if X.shape[-1] != len(stats.mu_hat):
        raise ValueError(f"feature dim {X.shape[-1]} does not match stats dim {len(stats.mu_hat)}")
    return (X - stats.mu_hat) / (stats.sigma_hat + STD_EPS)


@dataclass
class Dataset:
    """Aligned per-molecule arrays ready for task sampling."""
    smiles: list[str]
    features: np.ndarray         # N x d, standardized when requested
    properties: np.ndarray       # N x k, taken from ``features``
    tokens: list[list[int]]

    def __len__(self) -> int:
        return len(self.smiles)


def raw_features(smiles: Sequence[str]) -> np.ndarray:
    return np.stack([compute_features(parse(s)) for s in smiles])


def build_dataset(smiles: Sequence[str], vocab: Vocabulary, stats: DatasetStats | None,
                  property_names: Sequence[str] = DEFAULT_PROPERTY_NAMES,
                  feature_names: Sequence[str] = FEATURE_NAMES) -> Dataset:
    """Featurize and tokenize; ``stats=None`` leaves features raw."""
    X = raw_features(smiles)
    cols = [FEATURE_NAMES.index(n) for n in feature_names]
    X = X[:, cols]
    if stats is not None:
        X = dataset_standardize(X, stats)
    pidx = [list(feature_names).index(n) for n in property_names]
    return Dataset(list(smiles), X, X[:, pidx].copy(), [tokenize(s, vocab).ids for s in smiles])


@dataclass
class TaskSpec:
    support: np.ndarray    # dataset indices
    query: np.ndarray

    def __post_init__(self):
        if len(self.support) < 1:
            raise ValueError("support set must be non-empty")
        if set(self.support.tolist()) & set(self.query.tolist()):
            raise ValueError("support and query overlap")


@dataclass
class MetaConfig:
    inner_steps: int = 3
    inner_lr: float = 0.01
    outer_step: float = 1.0
    tasks_per_update: int = 10
    molecules_per_task: int = 16
    support_fraction: float = 0.75
    epochs: int = 150
    batch_size: int = 64
    meta_optimizer: str = "adam"       # "adam" or "interpolate"
    meta_lr: float = 0.001
    weight_decay: float = 0.01
    condition_dropout: float = 0.3
    use_dropout: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if not self.inner_lr > 0:
            raise ValueError("inner_lr must be > 0")
        if not 0 < self.outer_step <= 1:
            raise ValueError("outer_step must lie in (0, 1]")
        if self.tasks_per_update < 1:
            raise ValueError("tasks_per_update must be >= 1")
        if self.molecules_per_task < 2:
            raise ValueError("molecules_per_task must be >= 2")
        if self.meta_optimizer not in ("adam", "interpolate"):
            raise ValueError(f"unknown meta optimizer {self.meta_optimizer!r}")
        if not 0 < self.support_fraction < 1:
            raise ValueError("support_fraction must lie in (0, 1)")

    @property
    def n_support(self) -> int:
        return max(1, min(self.molecules_per_task - 1,
                          round(self.support_fraction * self.molecules_per_task)))

    def iterations(self, corpus_size: int) -> int:
        per_epoch = math.ceil(corpus_size / (self.tasks_per_update * self.molecules_per_task))
        return self.epochs * per_epoch

    def to_dict(self) -> dict:
        return asdict(self)


def sample_tasks(corpus_size: int, cfg: MetaConfig, rng: np.random.Generator) -> list[TaskSpec]:
    if corpus_size < cfg.molecules_per_task:
        raise ValueError(f"corpus too small: {corpus_size} molecules, "
                         f"{cfg.molecules_per_task} needed per task")
    tasks = []
    for _ in range(cfg.tasks_per_update):
        pick = rng.choice(corpus_size, size=cfg.molecules_per_task, replace=False)
        tasks.append(TaskSpec(pick[:cfg.n_support], pick[cfg.n_support:]))
    return tasks


# ---------------------------------------------------------------- Reptile core

LossGrad = Callable[[dict, object], tuple[float, dict]]


def inner_adapt(theta: dict[str, np.ndarray], task, k: int, alpha: float,
                loss_grad: LossGrad) -> tuple[dict[str, np.ndarray], list[float]]:
    """k SGD steps on the task's support loss from a copy of ``theta``.

    Returns the adapted parameters and the loss seen before each step.
    """
    if k < 1:
        raise ValueError("inner steps k must be >= 1")
    if not alpha > 0:
        raise ValueError("inner learning rate must be > 0")
    phi = {n: np.array(v, dtype=np.float64, copy=True) for n, v in theta.items()}
    losses = []
    for _ in range(k):
        loss, grads = loss_grad(phi, task)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite support loss {loss}")
        losses.append(float(loss))
        phi = dn.sgd_step(phi, grads, alpha)
    return phi, losses


def reptile_update(theta: dict[str, np.ndarray], deltas: Sequence[dict[str, np.ndarray]],
                   epsilon: float) -> dict[str, np.ndarray]:
    """theta + epsilon * mean(deltas)."""
    avg = mean_delta(deltas)
    return {n: theta[n] + epsilon * avg[n] for n in theta}


def mean_delta(deltas: Sequence[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    if not deltas:
        raise ValueError("no task deltas to aggregate")
    total = {n: np.zeros_like(np.asarray(v, dtype=np.float64)) for n, v in deltas[0].items()}
    for d in deltas:  # fixed task-index order
        for n in total:
            total[n] = total[n] + d[n]
    return {n: v / len(deltas) for n, v in total.items()}


# ---------------------------------------------------------------- training

def make_batch(data: Dataset, rows: np.ndarray, context_rows: np.ndarray,
               cond_mask: np.ndarray | None = None) -> M.Batch:
    return M.Batch(context=data.features[context_rows],
                   tokens=M.pad_sequences([data.tokens[i] for i in rows]),
                   properties=data.properties[rows],
                   cond_mask=cond_mask)


@dataclass
class TrajectoryRow:
    iteration: int
    support_loss: float
    query_loss: float
    wall_clock: float | None = None


@dataclass
class MetaResult:
    params: dict[str, np.ndarray]
    trajectory: list[TrajectoryRow] = field(default_factory=list)

    @property
    def query_losses(self) -> np.ndarray:
        return np.array([r.query_loss for r in self.trajectory])


def _support_batches(task: TaskSpec, cfg: MetaConfig) -> list[np.ndarray]:
    s = task.support
    return [s[i:i + cfg.batch_size] for i in range(0, len(s), cfg.batch_size)]


def meta_train(data: Dataset, mcfg: MetaConfig, model_cfg: M.ModelConfig,
               params: dict[str, np.ndarray] | None = None, iterations: int | None = None,
               record_time: bool = False, progress: Callable[[TrajectoryRow], None] | None = None
               ) -> MetaResult:
    """Reptile outer loop.

    The meta-loss for an iteration is the mean query loss of the adapted
    parameters, with the support molecules as context.
    """
    rng = np.random.default_rng(mcfg.seed)
    task_rng = np.random.default_rng(rng.integers(2**63))
    drop_rng = np.random.default_rng(rng.integers(2**63))
    if params is None:
        params = M.init_params(model_cfg, np.random.default_rng(rng.integers(2**63)))
    theta = M.copy_params(params)
    T = mcfg.iterations(len(data)) if iterations is None else iterations
    opt = dn.adam_init(theta, mcfg.meta_lr, mcfg.weight_decay) if mcfg.meta_optimizer == "adam" else None
    t0 = time.perf_counter()
    result = MetaResult(theta)

    def support_loss_grad(phi, task):
        total, grads = 0.0, None
        batches = _support_batches(task, mcfg)
        for rows in batches:
            mask = (drop_rng.random(len(rows)) >= mcfg.condition_dropout).astype(np.float64)
            b = make_batch(data, rows, task.support, mask)
            loss, g = M.loss_and_grads(phi, model_cfg, b, drop_rng if mcfg.use_dropout else None)
            total += loss / len(batches)
            grads = g if grads is None else {n: grads[n] + g[n] for n in g}
        return total, {n: v / len(batches) for n, v in grads.items()}

    for it in range(T):
        tasks = sample_tasks(len(data), mcfg, task_rng)
        deltas, s_losses, q_losses = [], [], []
        for task in tasks:
            phi, losses = inner_adapt(theta, task, mcfg.inner_steps, mcfg.inner_lr, support_loss_grad)
            s_losses.append(losses[0])
            q_losses.append(M.evaluate_loss(phi, model_cfg, make_batch(data, task.query, task.support)))
            deltas.append({n: phi[n] - theta[n] for n in theta})
        row = TrajectoryRow(it, float(np.mean(s_losses)), float(np.mean(q_losses)),
                            time.perf_counter() - t0 if record_time else None)
        if not np.isfinite(row.query_loss):
            raise FloatingPointError(f"non-finite meta-loss at iteration {it}")
        result.trajectory.append(row)
        if progress is not None:
            progress(row)
        if opt is None:
            theta = reptile_update(theta, deltas, mcfg.outer_step)
        else:
            avg = mean_delta(deltas)
            theta = dn.adam_step(opt, theta, {n: -mcfg.outer_step * v for n, v in avg.items()})
    result.params = theta
    return result


def mean_query_loss(params, model_cfg: M.ModelConfig, data: Dataset, tasks: Sequence[TaskSpec]) -> float:
    """Query loss without adaptation, averaged over fixed probe tasks."""
    return float(np.mean([M.evaluate_loss(params, model_cfg, make_batch(data, t.query, t.support))
                          for t in tasks]))


def trajectory_csv(rows: Sequence[TrajectoryRow], header: dict | None = None) -> str:
    """CSV text; ``header`` items become leading ``#`` comment lines."""
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "support_loss", "query_loss", "wall_clock_s"])
    for r in rows:
        w.writerow([r.iteration, repr(r.support_loss), repr(r.query_loss),
                    "" if r.wall_clock is None else f"{r.wall_clock:.3f}"])
    return buf.getvalue()


def last_window_variance(losses: Sequence[float], window: int = 50) -> float:
    tail = np.asarray(losses[-window:], dtype=np.float64)
    return float(tail.var())
