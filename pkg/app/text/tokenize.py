import re

_NON_ALNUM = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on any non-alphanumeric run, drop empty pieces."""
    return [t for t in _NON_ALNUM.split(str(text or "").lower()) if t]


def ngrams(tokens: list[str], ngram_range: tuple[int, int] = (1, 3)) -> list[str]:
    lo, hi = ngram_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid n-gram range {ngram_range}")
    out = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i : i + n]))
    return out


def tokenize_ngrams(text: str, ngram_range: tuple[int, int] = (1, 3)) -> list[str]:
    return ngrams(tokenize(text), ngram_range)
