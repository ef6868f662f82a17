"""Errors raised by the MVAE add-on."""


class MvaeError(Exception):
    """Base class."""


class VocabularyMiss(MvaeError):
    """A training program contains a token outside the configured vocabulary."""


class LengthExceeded(MvaeError):
    """A program is longer than the model's maximum sequence length."""


class NonFiniteLoss(MvaeError):
    """Training produced NaN or infinity; aborts with diagnostics."""


class DataError(MvaeError):
    """A corpus or schema file is malformed."""
