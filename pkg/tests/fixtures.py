"""Hand-built fixtures shared across test modules."""

from dataclasses import dataclass

from irt_arena.data_model import ItemParameters


@dataclass
class FilterFixture:
    labels: dict
    predictions: dict
    items: list


def gb_filter_fixture() -> FilterFixture:
    """81 instances (36 positive) answered by a GB-like and an LDA-like model.

    GB has 25 TP, 3 FP, 11 FN, 42 TN.  Every GB false negative, two of its
    false positives and seven true negatives carry negative discrimination
    (20 items).  The LDA-like model errs only on those 20 items.
    """
    pos = [f"p{k:02d}" for k in range(36)]
    neg = [f"n{k:02d}" for k in range(45)]
    labels = {i: 1 for i in pos} | {i: 0 for i in neg}

    gb_fn = pos[25:]
    gb_fp = neg[:3]
    gb = {i: 1 for i in pos[:25]} | {i: 0 for i in gb_fn}
    gb |= {i: 1 for i in gb_fp} | {i: 0 for i in neg[3:]}

    negative_a = set(gb_fn) | set(gb_fp[:2]) | set(neg[3:10])
    lda_fp = sorted(negative_a & set(neg))[:5]
    lda = {i: 1 for i in pos[:25]} | {i: 0 for i in gb_fn}
    lda |= {i: 1 if i in lda_fp else 0 for i in neg}

    items = [
        ItemParameters(i, -1.0 if i in negative_a else 1.5, 0.0, 0.1) for i in sorted(labels)
    ]
    return FilterFixture(labels, {"GB": gb, "LDA": lda}, items)
