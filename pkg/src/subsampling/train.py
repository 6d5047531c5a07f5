"""Adam training loop with a random-prefix curriculum and held-out evaluation."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .toy import gen_batch, one_hot

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    T: int = 20
    batch: int = 100
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_minibatches: int = 20000
    eval_every: int = 250
    eval_set_size: int = 1000
    seed: int = 0
    emission_index_offset: int = 1
    target_accuracy: float = 0.98
    hidden: int = model.HIDDEN

    def __post_init__(self):
        for name in ("T", "batch", "eval_every", "eval_set_size", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_minibatches < 0 or self.seed < 0:
            raise ValueError("max_minibatches and seed must be non-negative")
        if self.lr <= 0 or self.eps <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid Adam constants")
        if self.emission_index_offset not in (0, 1):
            raise ValueError("emission_index_offset must be 0 or 1")

    def streams(self) -> dict[str, np.random.Generator]:
        """Independent generators for init, training data, curriculum and the held-out set."""
        names = ("init", "data", "curriculum", "eval")
        children = np.random.SeedSequence(self.seed).spawn(len(names))
        return {n: np.random.default_rng(s) for n, s in zip(names, children)}


def read_config(path) -> dict[str, object]:
    """Parse a ``key=value`` file into typed overrides for :class:`TrainConfig`."""
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or key not in types:
            raise ValueError(f"{path}:{lineno}: expected <config key>=<value>, got {raw!r}")
        out[key] = coerce(key, value)
    return out


def coerce(key: str, value: str):
    kind = {f.name: f.type for f in dataclasses.fields(TrainConfig)}[key]
    return float(value) if kind in (float, "float") else int(value)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


class TrainingFault(RuntimeError):
    """Non-finite loss or gradient; ``log`` holds the records gathered so far."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


def adam_step(params, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update. Inputs are left untouched."""
    if any(not np.all(np.isfinite(g)) for g in grads.values()):
        raise TrainingFault("non-finite gradient")
    step = state.step + 1
    b1, b2 = config.beta1, config.beta2
    new_params, m, v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = m[k] / (1.0 - b1**step)
        v_hat = v[k] / (1.0 - b2**step)
        new_params[k] = np.asarray(p - config.lr * m_hat / (np.sqrt(v_hat) + config.eps))
    return new_params, AdamState(m, v, step)


def sample_curriculum(T: int, rng: np.random.Generator) -> int:
    """Scored prefix length, uniform on ``{1, ..., T}``."""
    if T < 1:
        raise ValueError("T must be positive")
    return int(rng.integers(1, T + 1))


def _stack(pairs):
    lengths = {len(p.input) for p in pairs}
    if len(lengths) != 1:
        raise ValueError("all sequences in a batch must share one length")
    return one_hot(np.array([p.input for p in pairs])), [p.target for p in pairs]


def evaluate_detailed(params, pairs, emission_index_offset: int = 1, chunk: int = 250):
    """Per-symbol accuracy over each target's true length, and exact-match rate."""
    if not pairs:
        raise ValueError("evaluation set is empty")
    groups: dict[int, list] = {}
    for p in pairs:
        groups.setdefault(len(p.input), []).append(p)
    correct = total = exact = 0
    for T in sorted(groups):
        items = groups[T]
        for start in range(0, len(items), chunk):
            part = items[start : start + chunk]
            x, targets = _stack(part)
            pred = model.forward(params, x, emission_index_offset).probs.argmax(axis=-1)
            for row, tgt in zip(pred, targets):
                hits = int(np.sum(row[: len(tgt)] == np.asarray(tgt)))
                correct += hits
                total += len(tgt)
                exact += hits == len(tgt)
    return correct / total, exact / len(pairs)


def evaluate(params, eval_set, emission_index_offset: int = 1) -> float:
    return evaluate_detailed(params, eval_set, emission_index_offset)[0]


@dataclass(frozen=True)
class TrainRecord:
    minibatch: int
    loss: float
    accuracy: float
    grad_norm: float
    exact_match: float


@dataclass
class TrainLog:
    records: list[TrainRecord] = field(default_factory=list)

    def append(self, record: TrainRecord) -> None:
        if self.records and record.minibatch <= self.records[-1].minibatch:
            raise ValueError("minibatch indices must increase")
        self.records.append(record)

    @property
    def final_accuracy(self) -> float | None:
        return self.records[-1].accuracy if self.records else None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["minibatch", "loss", "accuracy", "grad_norm"])
            for r in self.records:
                writer.writerow([r.minibatch, repr(r.loss), repr(r.accuracy), repr(r.grad_norm)])


def train(config: TrainConfig, out_dir=None, params=None):
    """Train until held-out accuracy reaches ``config.target_accuracy`` or the cap.

    Returns ``(params, log)``. With ``out_dir`` the log (``train_log.csv``) and
    final checkpoint (``model.ckpt``) are written there.
    """
    rngs = config.streams()
    if params is None:
        params = model.init_params(rngs["init"], hidden=config.hidden)
    eval_set = gen_batch(config.T, config.eval_set_size, rngs["eval"])
    state = AdamState.zeros_like(params)
    log = TrainLog()
    loss_sum = norm_sum = 0.0
    since = 0
    started = time.perf_counter()
    for i in range(1, config.max_minibatches + 1):
        x, targets = _stack(gen_batch(config.T, config.batch, rngs["data"]))
        t_prime = sample_curriculum(config.T, rngs["curriculum"])
        value, grads = model.backward(params, x, targets, t_prime, config.emission_index_offset)
        if not np.isfinite(value):
            raise TrainingFault(f"non-finite loss at minibatch {i}", log)
        try:
            params, state = adam_step(params, grads, state, config)
        except TrainingFault as exc:
            raise TrainingFault(f"{exc} at minibatch {i}", log) from None
        loss_sum += value
        norm_sum += float(np.sqrt(sum(np.sum(g * g) for g in grads.values())))
        since += 1
        if i % config.eval_every == 0 or i == config.max_minibatches:
            acc, exact = evaluate_detailed(params, eval_set, config.emission_index_offset)
            log.append(TrainRecord(i, loss_sum / since, acc, norm_sum / since, exact))
            logger.info("minibatch %d loss %.4f acc %.4f exact %.3f |g| %.3g (%.0fs)",
                        i, loss_sum / since, acc, exact, norm_sum / since,
                        time.perf_counter() - started)
            loss_sum = norm_sum = 0.0
            since = 0
            if acc >= config.target_accuracy:
                break
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log.write_csv(out / "train_log.csv")
        save_model(out / "model.ckpt", params, config)
    return params, log


def save_model(path, params, config: TrainConfig) -> None:
    model.save_checkpoint(path, params, {
        "T": config.T, "emission_index_offset": config.emission_index_offset, "seed": config.seed,
    })
