"""Document coherence scoring and segmentation.

Adjacent paragraphs are compared by the clipped cosine of their hashed
feature vectors. Documents whose paragraphs hang together are kept
whole; mixed documents are split at their weakest boundaries; documents
with essentially unrelated paragraphs are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .corpus_io import Document
from .errors import ReportMismatch
from .features import clipped_cosine, featurize
from .segmentation import paragraph_spans

# coherence featurizer dimension: paragraphs are short, 2^18 is plenty
COHERENCE_DIMENSION = 1 << 18

DEFAULT_KEEP_MEAN = 0.15
DEFAULT_CUT_SIM = 0.05
DEFAULT_DROP_MEAN = 0.02

KEEP = "keep"
SEGMENT = "segment"
DROP = "drop"


@dataclass(frozen=True)
class CoherenceReport:
    boundary_sims: tuple[float, ...]  # one per adjacent paragraph pair
    mean_sim: float
    action: str  # keep | segment | drop
    cut_boundaries: tuple[int, ...]  # boundary i splits paragraphs i and i+1

    def __post_init__(self) -> None:
        if self.action == SEGMENT and not self.cut_boundaries:
            raise ValueError("segment action requires at least one boundary")
        if self.action != SEGMENT and self.cut_boundaries:
            raise ValueError(f"{self.action} action must not list boundaries")


def coherence_report(
    text: str,
    keep_mean: float = DEFAULT_KEEP_MEAN,
    cut_sim: float = DEFAULT_CUT_SIM,
    drop_mean: float = DEFAULT_DROP_MEAN,
    dimension: int = COHERENCE_DIMENSION,
) -> CoherenceReport:
    """Score adjacent-paragraph similarity and propose keep/segment/drop."""
    spans = paragraph_spans(text)
    if len(spans) <= 1:
        return CoherenceReport((), 1.0, KEEP, ())
    vecs = [featurize(text[a:b], dimension) for a, b in spans]
    sims = tuple(
        clipped_cosine(vecs[i], vecs[i + 1]) for i in range(len(vecs) - 1)
    )
    mean = sum(sims) / len(sims)
    if mean >= keep_mean:
        return CoherenceReport(sims, mean, KEEP, ())
    if mean < drop_mean:
        return CoherenceReport(sims, mean, DROP, ())
    cuts = tuple(i for i, s in enumerate(sims) if s < cut_sim)
    if not cuts:
        # middling mean but no boundary weak enough to cut cleanly
        return CoherenceReport(sims, mean, KEEP, ())
    return CoherenceReport(sims, mean, SEGMENT, cuts)


def apply_coherence(doc: Document, report: CoherenceReport) -> list[Document]:
    """Materialize a report: [doc], [], or one document per paragraph run.

    Segment slices use the original character spans, so concatenating the
    pieces with the separators they replaced reproduces the source text.
    """
    spans = paragraph_spans(doc.text)
    if len(report.boundary_sims) != max(0, len(spans) - 1):
        raise ReportMismatch(
            f"report has {len(report.boundary_sims)} boundaries for "
            f"{len(spans)} paragraphs"
        )
    if report.action == KEEP:
        return [doc]
    if report.action == DROP:
        return []
    pieces: list[Document] = []
    start_para = 0
    cut_after = set(report.cut_boundaries)
    groups: list[tuple[int, int]] = []
    for i in range(len(spans)):
        if i == len(spans) - 1 or i in cut_after:
            groups.append((start_para, i))
            start_para = i + 1
    for k, (first, last) in enumerate(groups):
        lo = spans[first][0]
        hi = spans[last][1]
        pieces.append(
            replace(
                doc,
                id=f"{doc.id}#{k}",
                text=doc.text[lo:hi],
                meta=dict(doc.meta),
            )
        )
    return pieces
