"""Weak-supervision labeling of radiograph exams from radiologist report text.

Pipeline: report ingestion and Swedish-mode text normalization (`corpus`),
collapsed-Gibbs topic modeling (`lda`), blinded topic review and model
ranking (`topics`, `regress`), tri-state image labeling (`labels`), and
classifier evaluation with mode baselines and bootstrap confidence
intervals (`evaluation`, `classify`). `cli` orchestrates the three
experiment stages over files.
"""

__version__ = "0.1.0"

from radlabel.errors import DataError, ValidationError

__all__ = ["DataError", "ValidationError", "__version__"]
