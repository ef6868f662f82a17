"""Training loop: one labeled and one unlabeled minibatch per step.

Each step draws a synthetic minibatch (weighted by the log-tempered
frequencies) and computes the three-bound multimodal objective, then an
unlabeled minibatch for the single-modality bound; the two losses are summed
so one optimizer step follows both gradients. Step records keep every KL
term so non-negativity is checkable after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import Example, TrainingMix, Vocabulary, tempered_weights
from .errors import NonFiniteLoss
from .model import MVAEConfig, MVAEModel


@dataclass(frozen=True)
class StepRecord:
    epoch: int
    step: int
    loss: float
    terms: dict  # named objective/KL components, floats


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)

    def epoch_losses(self) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for rec in self.steps:
            by_epoch.setdefault(rec.epoch, []).append(rec.loss)
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]

    def kl_values(self) -> list[float]:
        out = []
        for rec in self.steps:
            out.extend(v for k, v in rec.terms.items() if "kl" in k)
        return out


class WeightedSampler:
    """Draws minibatch indices proportional to per-example weights."""

    def __init__(self, weights: np.ndarray, rng: np.random.Generator):
        total = float(weights.sum())
        if total <= 0:
            raise ValueError("sampler needs positive total weight")
        self.probs = weights / total
        self.rng = rng

    def draw(self, k: int) -> np.ndarray:
        return self.rng.choice(len(self.probs), size=k, p=self.probs)


def train_mvae(mix: TrainingMix, cfg: MVAEConfig,
               log_every: int = 1) -> tuple[MVAEModel, TrainLog]:
    """Fit the model on the mix; deterministic for a fixed config."""
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    vocab = Vocabulary.build([mix.synthetic, mix.unlabeled])
    model = MVAEModel(cfg, vocab, mix.label_names)
    needed = mix.max_program_length()
    if needed > cfg.max_length:
        raise ValueError(f"max_length {cfg.max_length} below longest program ({needed})")
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    syn_sampler = WeightedSampler(tempered_weights(mix.synthetic), rng)
    unl_sampler = (WeightedSampler(tempered_weights(mix.unlabeled), rng)
                   if mix.unlabeled else None)
    label_matrix = np.stack([mix.label_bits(ex) for ex in mix.synthetic])

    steps_per_epoch = max(1, math.ceil(len(mix.synthetic) / cfg.batch_size))
    log = TrainLog()
    model.train()
    for epoch in range(cfg.epochs):
        for step in range(steps_per_epoch):
            optimizer.zero_grad()
            idx = syn_sampler.draw(cfg.batch_size)
            bits = torch.tensor(label_matrix[idx], dtype=torch.float)
            syn_terms = model.modality_bounds([mix.synthetic[i] for i in idx], bits)
            loss = -syn_terms["objective"]
            terms = {f"syn_{k}": float(v.detach()) for k, v in syn_terms.items()}
            if unl_sampler is not None:
                uidx = unl_sampler.draw(cfg.batch_size)
                unl_terms = model.modality_bounds([mix.unlabeled[i] for i in uidx], None)
                loss = loss + (-unl_terms["objective"])
                terms.update({f"unl_{k}": float(v.detach()) for k, v in unl_terms.items()})
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NonFiniteLoss(
                    f"loss {value} at epoch {epoch} step {step}; terms {terms}")
            loss.backward()
            optimizer.step()
            if step % log_every == 0:
                log.steps.append(StepRecord(epoch, step, value, terms))
    model.eval()
    return model, log
