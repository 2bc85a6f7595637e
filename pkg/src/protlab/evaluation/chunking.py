"""
Reference-paper chunk location.

The paper is split into overlapping word windows and ranked against the
hypothesis by TF-IDF cosine similarity (IDF fitted over the chunks).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.feature_extraction.text import TfidfVectorizer

from .models import EmptyPaper

logger = logging.getLogger(__name__)

CHUNK_WORDS = 1000
CHUNK_OVERLAP = 200


@dataclass(frozen=True)
class PaperChunk:
    index: int
    text: str
    score: float
    # no vocabulary shared with the hypothesis
    zero_overlap: bool = False


def split_chunks(text: str, chunk_words: int = CHUNK_WORDS, overlap: int = CHUNK_OVERLAP) -> list[str]:
    """Word windows of chunk_words, each starting chunk_words - overlap after the previous."""
    if not 0 <= overlap < chunk_words:
        raise ValueError(f"Overlap must be within 0..{chunk_words - 1}, got {overlap}")
    words = text.split()
    if not words:
        raise EmptyPaper("Reference paper text is empty")
    step = chunk_words - overlap
    chunks = []
    for start in range(0, len(words), step):
        chunks.append(" ".join(words[start: start + chunk_words]))
        if start + chunk_words >= len(words):
            break
    return chunks


def rank_chunks(chunks: list[str], query: str) -> np.ndarray:
    """Cosine similarity of every chunk to the query."""
    vectorizer = TfidfVectorizer(lowercase=True, token_pattern=r"(?u)\b[\w-]+\b")
    try:
        matrix = vectorizer.fit_transform(chunks)
    except ValueError:
        # no tokens survive in any chunk
        return np.zeros(len(chunks))
    query_vec = vectorizer.transform([query])
    # rows are l2-normalized, so the dot product is the cosine
    return np.asarray((matrix @ query_vec.T).todense()).ravel()


def locate_paper_chunk(
    paper_text: str,
    hypothesis_text: str,
    chunk_words: int = CHUNK_WORDS,
    overlap: int = CHUNK_OVERLAP,
) -> PaperChunk:
    """
    The chunk most relevant to the hypothesis; ties go to the earliest chunk.

    Raises:
        EmptyPaper
    """
    chunks = split_chunks(paper_text, chunk_words, overlap)
    scores = rank_chunks(chunks, hypothesis_text)
    best = int(np.argmax(scores))
    score = float(scores[best])
    if score <= 0.0:
        logger.warning("[Eval] Hypothesis shares no terms with the reference paper; using the first chunk")
        return PaperChunk(index=0, text=chunks[0], score=0.0, zero_overlap=True)
    logger.debug(f"[Eval] Paper chunk {best + 1}/{len(chunks)} selected (score {score:.3f})")
    return PaperChunk(index=best, text=chunks[best], score=score)
