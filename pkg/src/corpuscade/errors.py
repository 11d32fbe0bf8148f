"""Exception types shared across the toolkit."""
from __future__ import annotations


class CorpusError(Exception):
    """Base class for all toolkit errors."""


class MalformedRecord(CorpusError):
    """A raw web-archive record is missing its header/payload structure."""


class InvalidUtf8(CorpusError):
    """A record payload does not decode as UTF-8."""


class ParseError(CorpusError):
    """A serialized document line could not be parsed."""


class MissingDocId(CorpusError):
    """A document record has no id field; ids are mandatory."""


class ModelFormatError(CorpusError):
    """A model file has the wrong magic string or version."""


class ConfigError(CorpusError):
    """Pipeline configuration failed validation."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class EmptyCorpus(CorpusError):
    """An operation that needs at least one document got none."""


class InsufficientData(CorpusError):
    """Too little training material for a statistical model."""


class InsufficientCalibration(CorpusError):
    """Too few calibration scores to fit bucket boundaries."""


class OneClassOnly(CorpusError):
    """Classifier training needs both positive and negative examples."""


class MissingClass(CorpusError):
    """A labeled-topic training set is missing one of the configured labels."""


class UnlabeledDoc(CorpusError):
    """A document reached a sampling stage without a topic label."""


class MissingScores(CorpusError):
    """Cluster labeling requires a quality score for every assigned doc."""


class TooFewPoints(CorpusError):
    """k-means needs at least k distinct vectors."""


class DuplicateDocId(CorpusError):
    """The same doc id was inserted twice into a dedup index."""


class EmptyShingles(CorpusError):
    """Document too short to shingle; it bypasses MinHash entirely."""


class ReportMismatch(CorpusError):
    """A coherence report does not match the document it is applied to."""


class UnknownId(CorpusError):
    """A token id outside the vocabulary was passed to decode."""


class VocabTooSmall(CorpusError):
    """Requested vocab size cannot hold specials plus the byte alphabet."""


class CorpusTooSmall(CorpusError):
    """Not enough filler tokens to build a probe instance of the requested length."""


class MissingTokenizer(CorpusError):
    """A mixture report was requested without a tokenizer model."""


class AccountingError(CorpusError):
    """End-of-run removal accounting failed to balance."""


class StageFailure(CorpusError):
    """A pipeline stage raised; carries the stage name and shard id."""

    def __init__(self, stage: str, shard: str, cause: Exception):
        self.stage = stage
        self.shard = shard
        self.cause = cause
        super().__init__(f"stage {stage!r} failed on shard {shard!r}: {cause}")
