"""Multimodal variational autoencoder over (program, labels[, highlight mask]).

Each modality gets its own Gaussian recognition network; the joint posterior
is their product combined with the standard-normal prior expert, so any
subset of modalities can be encoded. Programs run through a GRU
encoder/decoder, labels through small MLPs with a Bernoulli decoder.

The training objective sums three lower bounds per labeled batch (joint plus
one per modality); with the label modality missing it degrades to the plain
single-modality bound, which is how unlabeled data joins training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .data import BOS, EOS, PAD, UNK, Example, Vocabulary
from .errors import LengthExceeded

torch.set_num_threads(max(1, torch.get_num_threads()))


@dataclass(frozen=True)
class MVAEConfig:
    latent_dim: int = 32
    hidden_dim: int = 128
    embedding_dim: int = 64
    beta: float = 0.5
    lambda_program: float = 1.0
    lambda_labels: float = 1.0
    lambda_mask: float = 1.0
    use_mask_modality: bool = False
    max_length: int = 96
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    temperature: float = 0.0  # 0 = greedy decoding

    def __post_init__(self):
        if self.beta < 0 or min(self.lambda_program, self.lambda_labels, self.lambda_mask) < 0:
            raise ValueError("beta and modality weights must be >= 0")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")


def _balanced(tokens: Sequence[str]) -> bool:
    depth = 0
    for t in tokens:
        if t == "(":
            depth += 1
        elif t == ")":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0 and len(tokens) > 0


def product_of_experts(mus: Sequence[torch.Tensor], logvars: Sequence[torch.Tensor]):
    """Combine Gaussian experts with the standard-normal prior expert.

    The combined precision is 1 (prior) plus the sum of expert precisions;
    the mean is the precision-weighted average.
    """
    precisions = [torch.exp(-lv) for lv in logvars]
    total_precision = torch.ones_like(mus[0]) + sum(precisions)
    mu = sum(m * p for m, p in zip(mus, precisions)) / total_precision
    var = 1.0 / total_precision
    return mu, torch.log(var)


def gaussian_kl(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(q || N(0, I)) per example; always >= 0."""
    return 0.5 * torch.sum(mu.pow(2) + logvar.exp() - 1.0 - logvar, dim=-1)


class _MLPEncoder(nn.Module):
    def __init__(self, in_dim: int, hidden: int, latent: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, 2 * latent),
        )

    def forward(self, x):
        mu, logvar = self.net(x).chunk(2, dim=-1)
        return mu, logvar.clamp(-8.0, 8.0)


class _MLPDecoder(nn.Module):
    def __init__(self, latent: int, hidden: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(latent, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
            nn.Linear(hidden, out_dim),
        )

    def forward(self, z):
        return self.net(z)


class MVAEModel(nn.Module):
    def __init__(self, cfg: MVAEConfig, vocab: Vocabulary, label_names: Sequence[str]):
        super().__init__()
        self.cfg = cfg
        self.vocab = vocab
        self.label_names = tuple(label_names)
        v = len(vocab)
        self.embedding = nn.Embedding(v, cfg.embedding_dim, padding_idx=PAD)
        self.encoder_rnn = nn.GRU(cfg.embedding_dim, cfg.hidden_dim, batch_first=True)
        self.encoder_head = nn.Linear(cfg.hidden_dim, 2 * cfg.latent_dim)
        self.decoder_init = nn.Linear(cfg.latent_dim, cfg.hidden_dim)
        # z is re-fed at every step so the decoder cannot learn to ignore it.
        self.decoder_rnn = nn.GRU(cfg.embedding_dim + cfg.latent_dim, cfg.hidden_dim,
                                  batch_first=True)
        self.decoder_out = nn.Linear(cfg.hidden_dim, v)
        self.label_encoder = _MLPEncoder(len(self.label_names), cfg.hidden_dim, cfg.latent_dim)
        self.label_decoder = _MLPDecoder(cfg.latent_dim, cfg.hidden_dim, len(self.label_names))
        if cfg.use_mask_modality:
            self.mask_encoder = _MLPEncoder(cfg.max_length, cfg.hidden_dim, cfg.latent_dim)
            self.mask_decoder = _MLPDecoder(cfg.latent_dim, cfg.hidden_dim, cfg.max_length)

    # --- encoders ---

    def encode_programs(self, ids: torch.Tensor, lengths: torch.Tensor):
        emb = self.embedding(ids)
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, h = self.encoder_rnn(packed)
        mu, logvar = self.encoder_head(h[-1]).chunk(2, dim=-1)
        return mu, logvar.clamp(-8.0, 8.0)

    def encode_labels(self, bits: torch.Tensor):
        return self.label_encoder(bits)

    def encode_mask(self, bits: torch.Tensor):
        return self.mask_encoder(bits)

    # --- decoders ---

    def program_logits(self, z: torch.Tensor, inputs: torch.Tensor):
        """Teacher-forced next-token logits given z and BOS-prefixed inputs."""
        h0 = torch.tanh(self.decoder_init(z)).unsqueeze(0)
        emb = self.embedding(inputs)
        zrep = z.unsqueeze(1).expand(-1, emb.shape[1], -1)
        out, _ = self.decoder_rnn(torch.cat([emb, zrep], dim=-1), h0)
        return self.decoder_out(out)

    def program_log_likelihood(self, z, inputs, targets):
        """Sum over timesteps of log p(token | z, prefix); PAD positions ignored."""
        logits = self.program_logits(z, inputs)
        logp = -nn.functional.cross_entropy(
            logits.transpose(1, 2), targets, ignore_index=PAD, reduction="none")
        return logp.sum(dim=1)

    def label_log_likelihood(self, z, bits):
        logits = self.label_decoder(z)
        return -nn.functional.binary_cross_entropy_with_logits(
            logits, bits, reduction="none").sum(dim=1)

    def mask_log_likelihood(self, z, bits):
        logits = self.mask_decoder(z)
        return -nn.functional.binary_cross_entropy_with_logits(
            logits, bits, reduction="none").sum(dim=1)

    # --- tensorization ---

    def tensorize(self, examples: Sequence[Example], strict: bool = True):
        """Pad programs to a batch of (decoder inputs, targets, lengths).

        Padding goes to the longest program in the batch, not the global
        maximum; max_length only caps admissible inputs.
        """
        max_len = self.cfg.max_length
        batch_len = 0
        encoded = []
        for ex in examples:
            if len(ex.tokens) > max_len:
                raise LengthExceeded(
                    f"program of {len(ex.tokens)} tokens exceeds max length {max_len}")
            ids = self.vocab.encode(ex.tokens, strict=strict)
            encoded.append(ids)
            batch_len = max(batch_len, len(ids) + 1)
        rows_in, rows_tgt, lengths = [], [], []
        for ids in encoded:
            inp = [BOS] + ids
            tgt = ids + [EOS]
            pad = batch_len - len(inp)
            rows_in.append(inp + [PAD] * pad)
            rows_tgt.append(tgt + [PAD] * pad)
            lengths.append(len(inp))
        return (torch.tensor(rows_in, dtype=torch.long),
                torch.tensor(rows_tgt, dtype=torch.long),
                torch.tensor(lengths, dtype=torch.long))

    def mask_tensor(self, examples: Sequence[Example]) -> torch.Tensor:
        rows = []
        for ex in examples:
            bits = list(ex.mask_bits or (0,) * len(ex.tokens))
            rows.append(bits + [0] * (self.cfg.max_length - len(bits)))
        return torch.tensor(rows, dtype=torch.float)

    # --- objectives ---

    def modality_bounds(self, examples: Sequence[Example], label_bits: torch.Tensor | None):
        """Per-batch ELBO terms. With labels present, returns the three-bound
        multimodal objective's components; without, just the program bound.

        Returns a dict of scalar tensors; "objective" is the quantity to
        maximize, "kl_*" entries are the non-negative divergence terms.
        """
        cfg = self.cfg
        inputs, targets, lengths = self.tensorize(examples)
        mu_x, lv_x = self.encode_programs(inputs, lengths)
        terms: dict[str, torch.Tensor] = {}

        # Single-modality bound from the program alone (the unlabeled path).
        mu_u, lv_u = product_of_experts([mu_x], [lv_x])
        z_u = mu_u + torch.randn_like(mu_u) * torch.exp(0.5 * lv_u)
        recon_x_uni = self.program_log_likelihood(z_u, inputs, targets)
        kl_uni = gaussian_kl(mu_u, lv_u)
        terms["recon_program_uni"] = recon_x_uni.mean()
        terms["kl_program"] = kl_uni.mean()
        uni_bound = (recon_x_uni - cfg.beta * kl_uni).mean()
        if label_bits is None:
            terms["objective"] = uni_bound
            return terms

        mu_y, lv_y = self.encode_labels(label_bits)
        experts_mu, experts_lv = [mu_x, mu_y], [lv_x, lv_y]
        mask_bits = None
        if cfg.use_mask_modality:
            mask_bits = self.mask_tensor(examples)
            mu_m, lv_m = self.encode_mask(mask_bits)
            experts_mu.append(mu_m)
            experts_lv.append(lv_m)

        # Joint bound with all modalities reconstructed from the shared code.
        mu_j, lv_j = product_of_experts(experts_mu, experts_lv)
        z_j = mu_j + torch.randn_like(mu_j) * torch.exp(0.5 * lv_j)
        kl_joint = gaussian_kl(mu_j, lv_j)
        joint_recon = (cfg.lambda_program * self.program_log_likelihood(z_j, inputs, targets)
                       + cfg.lambda_labels * self.label_log_likelihood(z_j, label_bits))
        if mask_bits is not None:
            joint_recon = joint_recon + cfg.lambda_mask * self.mask_log_likelihood(z_j, mask_bits)
        joint_bound = (joint_recon - cfg.beta * kl_joint).mean()
        terms["kl_joint"] = kl_joint.mean()

        # Label-only bound.
        mu_l, lv_l = product_of_experts([mu_y], [lv_y])
        z_l = mu_l + torch.randn_like(mu_l) * torch.exp(0.5 * lv_l)
        recon_y_uni = self.label_log_likelihood(z_l, label_bits)
        kl_label = gaussian_kl(mu_l, lv_l)
        terms["recon_labels_uni"] = recon_y_uni.mean()
        terms["kl_labels"] = kl_label.mean()
        label_bound = (recon_y_uni - cfg.beta * kl_label).mean()

        objective = joint_bound + uni_bound + label_bound
        if mask_bits is not None:
            mu_mm, lv_mm = product_of_experts([experts_mu[2]], [experts_lv[2]])
            z_m = mu_mm + torch.randn_like(mu_mm) * torch.exp(0.5 * lv_mm)
            kl_mask = gaussian_kl(mu_mm, lv_mm)
            terms["kl_mask"] = kl_mask.mean()
            objective = objective + (self.mask_log_likelihood(z_m, mask_bits)
                                     - cfg.beta * kl_mask).mean()
        terms["objective"] = objective
        return terms

    # --- inference-time operations ---

    @torch.no_grad()
    def posterior(self, examples: Sequence[Example]):
        """Product-of-experts posterior q(z|x) (with the prior expert)."""
        inputs, _targets, lengths = self.tensorize(examples, strict=False)
        mu_x, lv_x = self.encode_programs(inputs, lengths)
        return product_of_experts([mu_x], [lv_x])

    @torch.no_grad()
    def infer_label_probs(self, examples: Sequence[Example], samples: int = 16,
                          seed: int | None = 0) -> np.ndarray:
        """Mean Bernoulli probabilities over posterior draws; (n, labels)."""
        mu, lv = self.posterior(examples)
        gen = torch.Generator().manual_seed(seed) if seed is not None else None
        total = torch.zeros(len(examples), len(self.label_names))
        for _ in range(max(1, samples)):
            eps = torch.randn(mu.shape, generator=gen)
            z = mu + eps * torch.exp(0.5 * lv)
            total += torch.sigmoid(self.label_decoder(z))
        return (total / max(1, samples)).numpy()

    @torch.no_grad()
    def embed(self, examples: Sequence[Example]) -> np.ndarray:
        """Posterior means (no sampling); equal programs embed identically."""
        mu, _ = self.posterior(examples)
        return mu.numpy()

    @torch.no_grad()
    def generate_programs(self, n: int, seed: int = 0, max_factor: int = 20) -> list[list[str]]:
        """n well-formed (balanced, non-empty) programs from prior draws.

        Invalid decodes are rejected and redrawn, up to max_factor * n total
        draws; deterministic given the seed.
        """
        out: list[list[str]] = []
        drawn = 0
        while len(out) < n and drawn < max_factor * max(n, 1):
            k = min(512, max_factor * n - drawn)
            for tokens in self.generate_tokens(k, seed=seed + drawn):
                if _balanced(tokens) and len(out) < n:
                    out.append(tokens)
            drawn += k
        return out

    @torch.no_grad()
    def generate_tokens(self, n: int, seed: int = 0) -> list[list[str]]:
        """Decode n programs from prior draws (greedy unless temperature > 0)."""
        gen = torch.Generator().manual_seed(seed)
        out = []
        batch = 256
        for lo in range(0, n, batch):
            k = min(batch, n - lo)
            z = torch.randn(k, self.cfg.latent_dim, generator=gen)
            h = torch.tanh(self.decoder_init(z)).unsqueeze(0)
            zstep = z.unsqueeze(1)
            tok = torch.full((k, 1), BOS, dtype=torch.long)
            finished = torch.zeros(k, dtype=torch.bool)
            rows: list[list[int]] = [[] for _ in range(k)]
            for _ in range(self.cfg.max_length):
                step, h = self.decoder_rnn(
                    torch.cat([self.embedding(tok), zstep], dim=-1), h)
                logits = self.decoder_out(step[:, -1])
                logits[:, PAD] = -1e9
                logits[:, BOS] = -1e9
                logits[:, UNK] = -1e9
                if self.cfg.temperature > 0:
                    probs = torch.softmax(logits / self.cfg.temperature, dim=-1)
                    nxt = torch.multinomial(probs, 1, generator=gen).squeeze(1)
                else:
                    nxt = logits.argmax(dim=-1)
                for i in range(k):
                    if not finished[i]:
                        if nxt[i].item() == EOS:
                            finished[i] = True
                        else:
                            rows[i].append(int(nxt[i]))
                if bool(finished.all()):
                    break
                tok = nxt.unsqueeze(1)
            out.extend(self.vocab.decode(r) for r in rows)
        return out

    @torch.no_grad()
    def reconstruct_tokens(self, ex: Example) -> list[str]:
        """Greedy decode from the posterior mean; used by overfit checks."""
        mu, _ = self.posterior([ex])
        h = torch.tanh(self.decoder_init(mu)).unsqueeze(0)
        zstep = mu.unsqueeze(1)
        tok = torch.tensor([[BOS]], dtype=torch.long)
        ids = []
        for _ in range(self.cfg.max_length):
            step, h = self.decoder_rnn(
                torch.cat([self.embedding(tok), zstep], dim=-1), h)
            logits = self.decoder_out(step[:, -1])
            logits[:, PAD] = -1e9
            logits[:, BOS] = -1e9
            nxt = int(logits.argmax(dim=-1))
            if nxt == EOS:
                break
            ids.append(nxt)
            tok = torch.tensor([[nxt]], dtype=torch.long)
        return self.vocab.decode(ids)
