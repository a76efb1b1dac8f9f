import numpy as np
import pytest

from radlabel.corpus import NormalizationRules, RawReport
from radlabel.stemmer import default_swedish


@pytest.fixture(scope="session")
def stemmer():
    return default_swedish()


@pytest.fixture(scope="session")
def rules():
    return NormalizationRules(
        corrections={("frakur",): ("fraktur",), ("rtg",): ("röntgen",)},
        stop_words={"och", "i", "på", "med", "av", "kan", "ses", "är", "en", "ett"},
    )


@pytest.fixture()
def wrist_report():
    return RawReport(
        report_id="r1",
        exam_id="e1",
        anatomy="wrist",
        text="Tydlig fraktur i distala radius. Ingen luxation.",
        image_ids=("r1/a", "r1/b"),
    )


def make_reports(n, seed=0):
    """Small deterministic corpus without the full simulator."""
    rng = np.random.default_rng(seed)
    positives = [
        "Tydlig fraktur i distala radius.",
        "Fraktur med felställning och kompression.",
        "Komminut fraktur med dislokation.",
    ]
    negatives = [
        "Ingen fraktur kan påvisas.",
        "Inga skelettskador ses.",
    ]
    reports = []
    for k in range(n):
        text = positives[k % 3] if rng.random() < 0.6 else negatives[k % 2]
        reports.append(RawReport(
            report_id=f"r{k:04d}",
            exam_id=f"e{k:04d}",
            anatomy="wrist" if k % 2 == 0 else "ankle",
            text=text,
            image_ids=(f"r{k:04d}/0", f"r{k:04d}/1"),
        ))
    return reports
