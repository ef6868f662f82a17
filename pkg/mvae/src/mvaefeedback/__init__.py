"""Multimodal VAE add-on for the block-program feedback engine.

Trains a product-of-experts variational autoencoder on (program, labels)
pairs from rubric-sampled corpora plus raw unlabeled submissions, so the
generative distribution interpolates between the grammar and the data.
Supports conditional label inference on arbitrary programs, prior-driven
program generation with log/exp frequency tempering, and latent embeddings
for external clustering.
"""

from .data import Example, TrainingMix, Vocabulary, read_corpus, tempered_weights
from .errors import DataError, LengthExceeded, MvaeError, NonFiniteLoss, VocabularyMiss
from .model import MVAEConfig, MVAEModel, gaussian_kl, product_of_experts
from .train import TrainLog, WeightedSampler, train_mvae

__version__ = "0.1.0"
