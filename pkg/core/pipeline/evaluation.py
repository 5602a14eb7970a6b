"""Lexical overlap score for comparing captions against references."""
from collections import Counter


def lexical_f1(candidate: str, reference: str) -> float:
    """
    Token F1 over lowercase whitespace tokens, counting repeated tokens as a multiset.

    Two empty texts score 1.0; one empty text scores 0.0.
    """
    cand = Counter(candidate.lower().split())
    ref = Counter(reference.lower().split())
    if not cand and not ref:
        return 1.0
    overlap = sum((cand & ref).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(cand.values())
    recall = overlap / sum(ref.values())
    return 2 * precision * recall / (precision + recall)
