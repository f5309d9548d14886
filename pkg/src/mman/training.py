"""Triple sampling, hinge ranking loss and the training loop."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .optim import adam_step, clip_by_global_norm

log = logging.getLogger(__name__)


class CorpusTooSmall(ValueError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, record_id, cause):
        super().__init__(f"record {record_id}: {type(cause).__name__}: {cause}")
        self.record_id = record_id


@dataclass(frozen=True)
class TrainingTriple:
    code: int  # positions in the training corpus
    positive: int
    negative: int


@dataclass
class TrainStats:
    epoch_loss: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    triples: int = 0

    def to_dict(self):
        return {"epoch_loss": self.epoch_loss, "wall_time": self.wall_time, "triples": self.triples}


def epoch_rng(seed, epoch, stream):
    return np.random.default_rng([seed, epoch, stream])


def sample_triples(n_records, seed, epoch):
    """One triple per record; the negative is uniform over all other records."""
    if n_records < 2:
        raise CorpusTooSmall(f"need at least 2 records to sample negatives, got {n_records}")
    draws = epoch_rng(seed, epoch, 0).integers(0, n_records - 1, size=n_records)
    neg = draws + (draws >= np.arange(n_records))
    return [TrainingTriple(i, i, int(j)) for i, j in enumerate(neg)]


def ranking_loss(sim_pos, sim_neg, margin):
    return max(0.0, margin - sim_pos + sim_neg)


def ranking_loss_tensor(sim_pos, sim_neg, margin):
    """Summed hinge loss over a batch of similarity pairs."""
    return T.sum_axis(T.relu(T.add(T.add(T.neg(sim_pos), sim_neg), margin)))


def batch_loss(model, examples, triples, training=False, rng=None):
    """Loss of one mini-batch, plus the per-triple similarities."""
    codes = [examples[t.code] for t in triples]
    result, _ = model.encode_code(codes, training, rng)
    # each distinct description is encoded once, so identical text gives an
    # identical vector even with dropout active
    keys, rows = {}, []
    for t in triples:
        for j in (t.positive, t.negative):
            key = tuple(examples[j].description_tokens)
            rows.append(keys.setdefault(key, len(keys)))
    desc = model.encode_descriptions([list(k) for k in keys], training, rng)
    rows = np.array(rows).reshape(-1, 2)
    d_pos = T.embedding_lookup(desc, rows[:, 0])
    d_neg = T.embedding_lookup(desc, rows[:, 1])
    sim_pos = T.cosine(result.code, d_pos)
    sim_neg = T.cosine(result.code, d_neg)
    loss = ranking_loss_tensor(sim_pos, sim_neg, model.config.hyper.margin)
    return loss, sim_pos, sim_neg


def loss_and_grads(model, examples, triples, training=False, rng=None):
    with T.Tape() as tape:
        loss, _, _ = batch_loss(model, examples, triples, training, rng)
    grads = tape.backward(loss, model.params.tensors())
    return float(loss.data), grads


def train(model, examples, epochs=None, out_dir=None, start_epoch=0, on_epoch=None):
    """Train ``model`` in place; returns ``(params, TrainStats)``.

    With ``out_dir`` a checkpoint ``epoch_NNN.ckpt`` is written after every
    epoch along with ``stats.json``.
    """
    hp = model.config.hyper
    epochs = hp.epochs if epochs is None else epochs
    if not examples:
        raise CorpusTooSmall("training corpus is empty")
    stats = TrainStats()
    for epoch in range(start_epoch, start_epoch + epochs):
        t0 = time.perf_counter()
        triples = sample_triples(len(examples), hp.seed, epoch)
        order = epoch_rng(hp.seed, epoch, 1).permutation(len(triples))
        drop_rng = epoch_rng(hp.seed, epoch, 2)
        total = 0.0
        for start in range(0, len(order), hp.batch_size):
            batch = [triples[i] for i in order[start : start + hp.batch_size]]
            try:
                loss, grads = loss_and_grads(model, examples, batch, hp.dropout > 0, drop_rng)
            except (ValueError, FloatingPointError) as exc:
                bad = _first_failing(model, examples, batch)
                raise TrainingError(bad, exc) from exc
            grads, _ = clip_by_global_norm(grads, hp.clip_norm)
            adam_step(model.params, grads, hp.learning_rate)
            total += loss
        stats.epoch_loss.append(total / len(triples))
        stats.wall_time.append(time.perf_counter() - t0)
        stats.triples += len(triples)
        log.info("epoch %d loss %.6f (%.2fs)", epoch + 1, stats.epoch_loss[-1], stats.wall_time[-1])
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            model.save(os.path.join(out_dir, f"epoch_{epoch + 1:03d}.ckpt"))
            with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
                json.dump(stats.to_dict(), fh, indent=1)
        if on_epoch is not None and on_epoch(epoch, stats) is False:
            break
    return model.params, stats


def _first_failing(model, examples, batch):
    for t in batch:
        try:
            batch_loss(model, examples, [t])
        except (ValueError, FloatingPointError):
            return examples[t.code].id
    return examples[batch[0].code].id
