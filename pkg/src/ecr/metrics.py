"""Coreference partition scoring: MUC, B-cubed, entity CEAF, BLANC.

All four metrics compare a gold and a system partition of the same mention
set.  Corpus-level scores aggregate the per-document numerators and
denominators (micro average), then derive precision/recall/F1 once.

- MUC (Vilain et al., 1995): link-based; recall counts, per gold cluster, the
  links missing to reconnect its partition by the system clusters.
- B-cubed (Bagga and Baldwin, 1998): per-mention overlap ratios.
- CEAF (Luo, 2005), entity variant: an optimal one-to-one cluster alignment
  under the phi4 similarity 2|K∩R| / (|K|+|R|).
- BLANC (Recasens and Hovy, 2011; Luo et al., 2014): mean of the F1 over
  coreferent links and the F1 over non-coreferent links.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

Partition = Sequence[set]


@dataclass(frozen=True)
class MetricScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_fractions(
        cls, p_num: float, p_den: float, r_num: float, r_den: float
    ) -> "MetricScore":
        p = p_num / p_den if p_den else 0.0
        r = r_num / r_den if r_den else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f)


def _check_partitions(gold: Partition, sys: Partition) -> None:
    gold_mentions = [m for c in gold for m in c]
    sys_mentions = [m for c in sys for m in c]
    if len(gold_mentions) != len(set(gold_mentions)):
        raise InputError("gold clusters overlap")
    if len(sys_mentions) != len(set(sys_mentions)):
        raise InputError("system clusters overlap")
    if set(gold_mentions) != set(sys_mentions):
        raise InputError("gold and system partitions cover different mentions")
    if any(not c for c in gold) or any(not c for c in sys):
        raise InputError("empty clusters are not allowed")


def _muc_counts(gold: Partition, sys: Partition) -> tuple[float, float, float, float]:
    def side(keys: Partition, response: Partition) -> tuple[float, float]:
        num = den = 0.0
        for cluster in keys:
            partitions = {
                next(i for i, r in enumerate(response) if m in r) for m in cluster
            }
            num += len(cluster) - len(partitions)
            den += len(cluster) - 1
        return num, den

    r_num, r_den = side(gold, sys)
    p_num, p_den = side(sys, gold)
    return p_num, p_den, r_num, r_den


def _b_cubed_counts(gold: Partition, sys: Partition) -> tuple[float, float, float, float]:
    gold_of = {m: c for c in gold for m in c}
    sys_of = {m: c for c in sys for m in c}
    mentions = list(gold_of)
    p_num = sum(len(sys_of[m] & gold_of[m]) / len(sys_of[m]) for m in mentions)
    r_num = sum(len(sys_of[m] & gold_of[m]) / len(gold_of[m]) for m in mentions)
    return p_num, float(len(mentions)), r_num, float(len(mentions))


def _ceaf_e_counts(gold: Partition, sys: Partition) -> tuple[float, float, float, float]:
    if not gold or not sys:
        return 0.0, float(len(sys)), 0.0, float(len(gold))
    phi = np.zeros((len(gold), len(sys)))
    for i, k in enumerate(gold):
        for j, r in enumerate(sys):
            phi[i, j] = 2.0 * len(k & r) / (len(k) + len(r))
    rows, cols = linear_sum_assignment(-phi)
    total = float(phi[rows, cols].sum())
    return total, float(len(sys)), total, float(len(gold))


def _blanc_counts(gold: Partition, sys: Partition) -> tuple[int, int, int, int]:
    """Link confusion counts (rc, wc, rn, wn) over all mention pairs."""
    gold_of = {m: i for i, c in enumerate(gold) for m in c}
    sys_of = {m: i for i, c in enumerate(sys) for m in c}
    mentions = sorted(gold_of)
    rc = wc = rn = wn = 0
    for i in range(len(mentions)):
        for j in range(i + 1, len(mentions)):
            a, b = mentions[i], mentions[j]
            in_gold = gold_of[a] == gold_of[b]
            in_sys = sys_of[a] == sys_of[b]
            if in_gold and in_sys:
                rc += 1
            elif in_sys:
                wc += 1
            elif in_gold:
                wn += 1
            else:
                rn += 1
    return rc, wc, rn, wn


def _prf(num_p: float, den_p: float, num_r: float, den_r: float) -> tuple[float, float, float]:
    p = num_p / den_p if den_p else 0.0
    r = num_r / den_r if den_r else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _blanc_score(rc: int, wc: int, rn: int, wn: int) -> MetricScore:
    """Average the coreferent and non-coreferent link scores.

    A link class absent from both gold and system is undefined and the other
    class stands alone; with no links at all, the score is zero.
    """
    coref_defined = (rc + wc + wn) > 0
    non_defined = (rn + wc + wn) > 0
    pc, rcl, fc = _prf(rc, rc + wc, rc, rc + wn)
    pn, rnl, fn = _prf(rn, rn + wn, rn, rn + wc)
    if coref_defined and non_defined:
        return MetricScore((pc + pn) / 2, (rcl + rnl) / 2, (fc + fn) / 2)
    if coref_defined:
        return MetricScore(pc, rcl, fc)
    if non_defined:
        return MetricScore(pn, rnl, fn)
    return MetricScore(0.0, 0.0, 0.0)


def muc(gold: Partition, sys: Partition) -> MetricScore:
    _check_partitions(gold, sys)
    return MetricScore.from_fractions(*_muc_counts(gold, sys))


def b_cubed(gold: Partition, sys: Partition) -> MetricScore:
    _check_partitions(gold, sys)
    return MetricScore.from_fractions(*_b_cubed_counts(gold, sys))


def ceaf_e(gold: Partition, sys: Partition) -> MetricScore:
    _check_partitions(gold, sys)
    return MetricScore.from_fractions(*_ceaf_e_counts(gold, sys))


def blanc(gold: Partition, sys: Partition) -> MetricScore:
    _check_partitions(gold, sys)
    return _blanc_score(*_blanc_counts(gold, sys))


METRIC_NAMES = ("muc", "b_cubed", "ceaf_e", "blanc")


@dataclass
class MetricReport:
    """Corpus-level partition scores plus optional pair-classification strata."""

    scores: dict[str, MetricScore]
    avg_f1: float
    pair_scores: dict[str, "PairScore"] = field(default_factory=dict)

    def f1_row(self) -> dict[str, float]:
        row = {name: self.scores[name].f1 for name in METRIC_NAMES}
        row["avg"] = self.avg_f1
        return row


@dataclass(frozen=True)
class PairScore:
    precision: float
    recall: float
    f1: float
    true_positive: int
    false_positive: int
    false_negative: int
    support: int


def aggregate_scores(
    gold: Mapping[str, Partition], sys: Mapping[str, Partition]
) -> MetricReport:
    """Micro-average the four metrics over documents keyed by id."""
    if set(gold) != set(sys):
        missing = set(gold) ^ set(sys)
        raise InputError(f"gold and system cover different documents: {sorted(missing)}")
    sums = {name: [0.0, 0.0, 0.0, 0.0] for name in ("muc", "b_cubed", "ceaf_e")}
    blanc_sums = [0, 0, 0, 0]
    for doc_id in gold:
        g, s = gold[doc_id], sys[doc_id]
        _check_partitions(g, s)
        for name, counter in (
            ("muc", _muc_counts),
            ("b_cubed", _b_cubed_counts),
            ("ceaf_e", _ceaf_e_counts),
        ):
            for slot, value in enumerate(counter(g, s)):
                sums[name][slot] += value
        for slot, value in enumerate(_blanc_counts(g, s)):
            blanc_sums[slot] += value
    scores = {name: MetricScore.from_fractions(*sums[name]) for name in sums}
    scores["blanc"] = _blanc_score(*blanc_sums)
    avg = sum(scores[name].f1 for name in METRIC_NAMES) / len(METRIC_NAMES)
    return MetricReport(scores=scores, avg_f1=avg)


def pair_classification(
    probs: Sequence[float],
    labels: Sequence[bool],
    threshold: float = 0.5,
) -> PairScore:
    if len(probs) != len(labels):
        raise InputError("pair probabilities and labels differ in length")
    tp = fp = fn = 0
    for prob, label in zip(probs, labels):
        predicted = prob >= threshold
        if predicted and label:
            tp += 1
        elif predicted:
            fp += 1
        elif label:
            fn += 1
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PairScore(p, r, f, tp, fp, fn, len(probs))


def report(
    gold: Mapping[str, Partition],
    sys: Mapping[str, Partition],
    pair_probs: Sequence[float] = (),
    pair_labels: Sequence[bool] = (),
    arg_states: Sequence[str] = (),
    threshold: float = 0.5,
) -> MetricReport:
    """Full evaluation: partition metrics plus pair strata by argument state."""
    result = aggregate_scores(gold, sys)
    if pair_probs or pair_labels:
        if not (len(pair_probs) == len(pair_labels)):
            raise InputError("pair probabilities and labels differ in length")
        if arg_states and len(arg_states) != len(pair_probs):
            raise InputError("argument states differ in length from the pairs")
        result.pair_scores["ALL"] = pair_classification(pair_probs, pair_labels, threshold)
        if arg_states:
            for state in sorted(set(arg_states)):
                idx = [i for i, s in enumerate(arg_states) if s == state]
                result.pair_scores[state] = pair_classification(
                    [pair_probs[i] for i in idx],
                    [pair_labels[i] for i in idx],
                    threshold,
                )
    return result


def format_report(result: MetricReport) -> str:
    """Human-readable score table: per-metric P/R/F1 then the F1 summary row."""
    lines = ["metric\tprecision\trecall\tf1"]
    for name in METRIC_NAMES:
        score = result.scores[name]
        lines.append(
            f"{name}\t{score.precision:.3f}\t{score.recall:.3f}\t{score.f1:.3f}"
        )
    lines.append("")
    lines.append("MUC\tB3\tCEAFe\tBLANC\tAVG")
    row = result.f1_row()
    lines.append(
        "\t".join(
            f"{row[key]:.3f}" for key in ("muc", "b_cubed", "ceaf_e", "blanc", "avg")
        )
    )
    if result.pair_scores:
        lines.append("")
        lines.append("pairs\tprecision\trecall\tf1\tsupport")
        for name, score in result.pair_scores.items():
            lines.append(
                f"{name}\t{score.precision:.3f}\t{score.recall:.3f}"
                f"\t{score.f1:.3f}\t{score.support}"
            )
    return "\n".join(lines)


def report_to_dict(result: MetricReport) -> dict:
    return {
        "scores": {
            name: {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
            }
            for name, s in result.scores.items()
        },
        "avg_f1": result.avg_f1,
        "pairs": {
            name: {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "true_positive": s.true_positive,
                "false_positive": s.false_positive,
                "false_negative": s.false_negative,
                "support": s.support,
            }
            for name, s in result.pair_scores.items()
        },
    }
