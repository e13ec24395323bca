"""Attachment and tagging accuracy scoring for predicted treebanks.

Scores follow the CoNLL 2018 shared-task conventions for pre-tokenized
input: words align one to one between gold and prediction (any form
divergence is a hard error, not an alignment problem), multiword ranges
are ignored, punctuation counts like any other word, and percentages
report at two decimals with half-up rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .treebank import Treebank

__all__ = [
    "LabelMode",
    "EvalResult",
    "EvaluationError",
    "evaluate",
    "report_tables",
]


class EvaluationError(ValueError):
    """Gold and predicted treebanks do not line up."""


class LabelMode(str, enum.Enum):
    """How deprels are compared for LAS.

    FULL compares the exact string; UNIVERSAL truncates both sides at
    the first ':' so language-specific subtypes do not count against
    the prediction.
    """

    FULL = "full"
    UNIVERSAL = "universal"


def _pct(correct: int, total: int) -> float:
    if total == 0:
        return 100.0
    return 100.0 * correct / total


def format_score(value: float) -> str:
    """Two-decimal percentage string, round half up (so 0.125 -> '0.13')."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class EvalResult:
    n_words: int
    n_head_correct: int
    n_head_and_label_correct: int
    n_upos_correct: int

    @property
    def uas(self) -> float:
        return _pct(self.n_head_correct, self.n_words)

    @property
    def las(self) -> float:
        return _pct(self.n_head_and_label_correct, self.n_words)

    @property
    def upos_acc(self) -> float:
        return _pct(self.n_upos_correct, self.n_words)

    def summary(self) -> str:
        return (
            f"UAS {format_score(self.uas)}  LAS {format_score(self.las)}  "
            f"UPOS {format_score(self.upos_acc)}  ({self.n_words} words)"
        )


def _label_key(deprel: str, mode: LabelMode) -> str:
    if mode is LabelMode.UNIVERSAL:
        return deprel.split(":", 1)[0]
    return deprel


def evaluate(
    gold: Treebank, pred: Treebank, label_mode: LabelMode = LabelMode.FULL
) -> EvalResult:
    """Score pred against gold; both must share the exact tokenization."""
    mode = LabelMode(label_mode)
    if len(gold.sentences) != len(pred.sentences):
        raise EvaluationError(
            f"sentence count mismatch: gold has {len(gold.sentences)}, "
            f"prediction has {len(pred.sentences)}"
        )
    n_words = heads_ok = labeled_ok = upos_ok = 0
    for s_idx, (gs, ps) in enumerate(zip(gold.sentences, pred.sentences)):
        if len(gs.tokens) != len(ps.tokens):
            raise EvaluationError(
                f"sentence {s_idx + 1}: token count mismatch "
                f"(gold {len(gs.tokens)}, prediction {len(ps.tokens)})"
            )
        for gt, pt in zip(gs.tokens, ps.tokens):
            if gt.form != pt.form:
                raise EvaluationError(
                    f"sentence {s_idx + 1}, token {gt.id}: form mismatch "
                    f"(gold {gt.form!r}, prediction {pt.form!r})"
                )
            n_words += 1
            if pt.head == gt.head:
                heads_ok += 1
                if _label_key(pt.deprel, mode) == _label_key(gt.deprel, mode):
                    labeled_ok += 1
            if pt.upos == gt.upos:
                upos_ok += 1
    return EvalResult(n_words, heads_ok, labeled_ok, upos_ok)


def report_tables(
    results: dict[tuple[str, str], EvalResult],
) -> tuple[str, dict]:
    """Per-test-set comparison blocks with the best scores flagged.

    `results` maps (test set label, model label) to a result. Returns
    the rendered text and a JSON-ready dict mirroring it. Blocks and
    rows keep first-seen order; within a block every row achieving the
    block's best UAS (or LAS) carries a '*' flag on that column.
    """
    blocks: dict[str, dict[str, EvalResult]] = {}
    for (test_set, model), res in results.items():
        blocks.setdefault(test_set, {})[model] = res

    lines: list[str] = []
    payload: dict = {}
    for test_set, rows in blocks.items():
        best_uas = max(r.uas for r in rows.values())
        best_las = max(r.las for r in rows.values())
        lines.append(f"== {test_set} ==")
        width = max([len(m) for m in rows], default=5)
        width = max(width, len("model"))
        lines.append(f"{'model':<{width}}  {'UAS':>8}  {'LAS':>8}")
        payload[test_set] = {}
        for model, res in rows.items():
            uas_s = format_score(res.uas)
            las_s = format_score(res.las)
            uas_cell = ("*" if res.uas == best_uas else "") + uas_s
            las_cell = ("*" if res.las == best_las else "") + las_s
            lines.append(f"{model:<{width}}  {uas_cell:>8}  {las_cell:>8}")
            payload[test_set][model] = {
                "uas": res.uas,
                "las": res.las,
                "upos": res.upos_acc,
                "uas_2dp": uas_s,
                "las_2dp": las_s,
                "best_uas": res.uas == best_uas,
                "best_las": res.las == best_las,
                "n_words": res.n_words,
            }
        lines.append("")
    return "\n".join(lines), payload
