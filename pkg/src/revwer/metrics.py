"""Word error rate and evaluation statistics.

WER is computed from a minimum-edit-distance word alignment; predictor
quality is reported as absolute Pearson correlation and RMSE, with a
one-way ANOVA helper for comparing per-utterance error distributions.
"""

import re
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import (
    ConstantInput,
    DegenerateGroups,
    EmptyInput,
    EmptyReference,
    LengthMismatch,
)

_PUNCT = re.compile(r"[^\w\s']", flags=re.UNICODE)


@dataclass(frozen=True)
class EditCounts:
    """Deletion/substitution/insertion counts of one alignment."""

    deletions: int
    substitutions: int
    insertions: int
    reference_length: int

    @property
    def wer(self):
        return (
            self.deletions + self.substitutions + self.insertions
        ) / self.reference_length


def tokenize(text):
    """Whitespace word split, case-folded, punctuation stripped."""
    return _PUNCT.sub(" ", text.lower()).split()


def word_error_rate(reference, hypothesis):
    """WER = (D + S + I) / T via minimum-edit-distance alignment.

    Accepts strings (tokenized) or pre-split word sequences. Among
    minimal alignments, substitutions are preferred over insert+delete
    pairs; traceback ties break diagonal > up > left. WER may exceed 1.

    Returns ``(EditCounts, wer)``.
    """
    ref = tokenize(reference) if isinstance(reference, str) else list(reference)
    hyp = tokenize(hypothesis) if isinstance(hypothesis, str) else list(hypothesis)
    if not ref:
        raise EmptyReference("reference transcript has no words")

    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = dist[i - 1, j] + 1
            ins = dist[i, j - 1] + 1
            dist[i, j] = min(sub, dele, ins)

    deletions = substitutions = insertions = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (
            ref[i - 1] != hyp[j - 1]
        ):
            substitutions += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            deletions += 1
            i -= 1
        else:
            insertions += 1
            j -= 1

    counts = EditCounts(deletions, substitutions, insertions, n)
    return counts, counts.wer


def pearson_abs(x, y):
    """Absolute Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise LengthMismatch("vectors differ in length")
    if x.size < 2:
        raise EmptyInput("need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise ConstantInput("correlation undefined for constant input")
    return float(abs(dx @ dy) / (sx * sy))


def rmse(x, y):
    """Root-mean-square error between paired vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("empty vectors")
    if x.size != y.size:
        raise LengthMismatch("vectors differ in length")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def anova_oneway(groups):
    """One-way ANOVA F statistic and p-value.

    The p-value is the upper tail of the F distribution, evaluated
    through the regularized incomplete beta function.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2 or any(g.size < 2 for g in groups):
        raise DegenerateGroups("need >= 2 groups of >= 2 samples")
    sizes = np.array([g.size for g in groups])
    total = np.concatenate(groups)
    grand = total.mean()
    means = np.array([g.mean() for g in groups])
    ss_between = float(np.sum(sizes * (means - grand) ** 2))
    ss_within = float(sum(np.sum((g - g.mean()) ** 2) for g in groups))
    df_between = len(groups) - 1
    df_within = int(sizes.sum()) - len(groups)
    if ss_within <= 0.0:
        if ss_between <= 0.0:
            return 0.0, 1.0
        raise DegenerateGroups("zero within-group variance")
    f = (ss_between / df_between) / (ss_within / df_within)
    # P(F_{d1,d2} > f) = I_{d2/(d2 + d1 f)}(d2/2, d1/2)
    p = float(
        betainc(df_within / 2.0, df_between / 2.0,
                df_within / (df_within + df_between * f))
    )
    return f, p
