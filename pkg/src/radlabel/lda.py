"""Latent Dirichlet allocation by collapsed Gibbs sampling.

The per-document topic mixture uses a scaled hyperparameter
``alpha = scaling_factor * 50 / num_topics``; the scaling factor varies how
narrowly on-topic documents are assumed to be without changing the topic
count. Tokens are resampled in corpus order from the collapsed conditional

    P(z_i = t | z_-i, w)  ∝  (n_tw[t, w_i] + beta) / (n_t[t] + W*beta)
                             * (n_dt[d_i, t] + alpha)

with all counts excluding token i. Document-topic and topic-word
distributions are read off the final-state counts with Dirichlet
smoothing. Randomness comes from one ``numpy.random.Generator`` (PCG64)
seeded per model; a fixed seed gives bit-identical chains.

The module also carries its own validation instruments: a generative
simulator with ground truth and an exact posterior by enumeration for
tiny instances.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln

from radlabel.corpus import Document, Vocabulary
from radlabel.errors import DataError, ValidationError

MODEL_FORMAT_VERSION = 1


def derive_alpha(scaling_factor: float, num_topics: int) -> float:
    """Document-topic concentration: ``scaling_factor * 50 / num_topics``."""
    if scaling_factor <= 0:
        raise ValidationError(f"scaling_factor must be positive, got {scaling_factor}")
    if num_topics < 1:
        raise ValidationError(f"num_topics must be >= 1, got {num_topics}")
    return scaling_factor * 50.0 / num_topics


@dataclass(frozen=True)
class Hyperparams:
    num_topics: int
    scaling_factor: float
    beta: float = 0.1
    sweeps: int = 1000
    burn_in: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.num_topics < 1:
            raise ValidationError(f"num_topics must be >= 1, got {self.num_topics}")
        if self.scaling_factor <= 0:
            raise ValidationError("scaling_factor must be positive")
        if self.beta <= 0:
            raise ValidationError("beta must be positive")
        if not 0 <= self.burn_in < self.sweeps:
            raise ValidationError(
                f"burn_in must satisfy 0 <= burn_in < sweeps, got {self.burn_in}/{self.sweeps}"
            )

    @property
    def alpha(self) -> float:
        return derive_alpha(self.scaling_factor, self.num_topics)

    def to_dict(self) -> dict:
        return {
            "num_topics": self.num_topics,
            "scaling_factor": self.scaling_factor,
            "beta": self.beta,
            "sweeps": self.sweeps,
            "burn_in": self.burn_in,
            "seed": self.seed,
        }


@dataclass
class EncodedCorpus:
    """Documents as vocabulary-index arrays, ready for sampling."""

    doc_ids: list[str]
    doc_tokens: list[np.ndarray]
    vocab_size: int

    @classmethod
    def from_documents(cls, docs: Sequence[Document], vocab: Vocabulary) -> "EncodedCorpus":
        doc_tokens = [np.asarray(vocab.encode(d.tokens), dtype=np.int32) for d in docs]
        return cls(doc_ids=[d.doc_id for d in docs], doc_tokens=doc_tokens,
                   vocab_size=len(vocab))

    @property
    def num_docs(self) -> int:
        return len(self.doc_tokens)

    @property
    def total_tokens(self) -> int:
        return int(sum(len(t) for t in self.doc_tokens))

    def flattened(self) -> tuple[np.ndarray, np.ndarray]:
        """(doc index, word index) per token position, in corpus order."""
        if self.num_docs == 0:
            return np.empty(0, np.int32), np.empty(0, np.int32)
        doc_of = np.repeat(
            np.arange(self.num_docs, dtype=np.int32),
            [len(t) for t in self.doc_tokens],
        )
        word_of = (
            np.concatenate(self.doc_tokens).astype(np.int32)
            if self.total_tokens
            else np.empty(0, np.int32)
        )
        return doc_of, word_of


@dataclass
class LdaModel:
    """Sampler state: per-token assignments plus their sufficient statistics."""

    hyper: Hyperparams
    doc_ids: list[str]
    doc_of: np.ndarray
    word_of: np.ndarray
    z: np.ndarray
    doc_topic_counts: np.ndarray  # docs x topics
    topic_word_counts: np.ndarray  # topics x vocab
    topic_counts: np.ndarray  # topics
    loglik_trace: list[float] = field(default_factory=list)
    sweeps_done: int = 0
    rng: np.random.Generator | None = field(default=None, repr=False)

    @property
    def vocab_size(self) -> int:
        return self.topic_word_counts.shape[1]

    @property
    def num_topics(self) -> int:
        return self.topic_word_counts.shape[0]


@dataclass
class TopicDistributions:
    doc_topic: np.ndarray  # docs x topics, rows sum to 1
    topic_word: np.ndarray  # topics x vocab, rows sum to 1


@njit(cache=True)
def _sweep_kernel(doc_of, word_of, z, n_dt, n_tw, n_t, alpha, beta, uniforms):  # pragma: no cover
    num_topics = n_tw.shape[0]
    w_beta = n_tw.shape[1] * beta
    cumulative = np.empty(num_topics, np.float64)
    for i in range(z.shape[0]):
        d = doc_of[i]
        w = word_of[i]
        old = z[i]
        n_dt[d, old] -= 1
        n_tw[old, w] -= 1
        n_t[old] -= 1
        if n_dt[d, old] < 0 or n_tw[old, w] < 0 or n_t[old] < 0:
            return i
        total = 0.0
        for t in range(num_topics):
            total += (n_tw[t, w] + beta) / (n_t[t] + w_beta) * (n_dt[d, t] + alpha)
            cumulative[t] = total
        target = uniforms[i] * total
        new = num_topics - 1
        for t in range(num_topics):
            if target < cumulative[t]:
                new = t
                break
        z[i] = new
        n_dt[d, new] += 1
        n_tw[new, w] += 1
        n_t[new] += 1
    return -1


def _counts_from_assignments(
    doc_of: np.ndarray, word_of: np.ndarray, z: np.ndarray,
    num_docs: int, num_topics: int, vocab_size: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_dt = np.zeros((num_docs, num_topics), dtype=np.int32)
    n_tw = np.zeros((num_topics, vocab_size), dtype=np.int32)
    np.add.at(n_dt, (doc_of, z), 1)
    np.add.at(n_tw, (z, word_of), 1)
    return n_dt, n_tw, n_tw.sum(axis=1).astype(np.int32)


def init_assignments(corpus: EncodedCorpus, hyper: Hyperparams) -> LdaModel:
    """Assign every token a uniformly random topic from the seeded generator."""
    if corpus.num_docs == 0 or corpus.total_tokens == 0:
        raise DataError("cannot initialize a topic model on an empty corpus")
    doc_of, word_of = corpus.flattened()
    rng = np.random.default_rng(hyper.seed)
    z = rng.integers(0, hyper.num_topics, size=len(word_of), dtype=np.int32)
    n_dt, n_tw, n_t = _counts_from_assignments(
        doc_of, word_of, z, corpus.num_docs, hyper.num_topics, corpus.vocab_size
    )
    return LdaModel(
        hyper=hyper,
        doc_ids=list(corpus.doc_ids),
        doc_of=doc_of,
        word_of=word_of,
        z=z,
        doc_topic_counts=n_dt,
        topic_word_counts=n_tw,
        topic_counts=n_t,
        rng=rng,
    )


def gibbs_sweep(model: LdaModel) -> LdaModel:
    """Resample every token once, in corpus order, updating counts in place."""
    if model.rng is None:
        raise ValidationError("model has no generator attached (loaded models cannot resume)")
    uniforms = model.rng.random(len(model.z))
    bad = _sweep_kernel(
        model.doc_of, model.word_of, model.z,
        model.doc_topic_counts, model.topic_word_counts, model.topic_counts,
        model.hyper.alpha, model.hyper.beta, uniforms,
    )
    if bad >= 0:
        raise RuntimeError(
            f"count went negative at token position {bad}: model state is "
            "inconsistent with its assignments"
        )
    model.sweeps_done += 1
    return model


def verify_counts(model: LdaModel) -> None:
    """Recount from assignments and compare; raises if the incremental
    bookkeeping drifted."""
    n_dt, n_tw, n_t = _counts_from_assignments(
        model.doc_of, model.word_of, model.z,
        model.doc_topic_counts.shape[0], model.num_topics, model.vocab_size,
    )
    if not (
        np.array_equal(n_dt, model.doc_topic_counts)
        and np.array_equal(n_tw, model.topic_word_counts)
        and np.array_equal(n_t, model.topic_counts)
    ):
        raise RuntimeError("count matrices do not match a full recount of assignments")


def log_likelihood(model: LdaModel) -> float:
    """Collapsed log joint of (words, assignments) under current counts."""
    alpha, beta = model.hyper.alpha, model.hyper.beta
    T, W = model.num_topics, model.vocab_size
    n_dt = model.doc_topic_counts
    doc_lens = n_dt.sum(axis=1)
    doc_side = (
        len(doc_lens) * gammaln(T * alpha)
        - gammaln(doc_lens + T * alpha).sum()
        + gammaln(n_dt + alpha).sum()
        - n_dt.size * gammaln(alpha)
    )
    topic_side = (
        T * gammaln(W * beta)
        - gammaln(model.topic_counts + W * beta).sum()
        + gammaln(model.topic_word_counts + beta).sum()
        - model.topic_word_counts.size * gammaln(beta)
    )
    return float(doc_side + topic_side)


def estimate_distributions(model: LdaModel) -> TopicDistributions:
    alpha, beta = model.hyper.alpha, model.hyper.beta
    T, W = model.num_topics, model.vocab_size
    n_dt = model.doc_topic_counts.astype(np.float64)
    doc_topic = (n_dt + alpha) / (n_dt.sum(axis=1, keepdims=True) + T * alpha)
    n_tw = model.topic_word_counts.astype(np.float64)
    topic_word = (n_tw + beta) / (model.topic_counts[:, None] + W * beta)
    return TopicDistributions(doc_topic=doc_topic, topic_word=topic_word)


def fit(corpus: EncodedCorpus, hyper: Hyperparams) -> tuple[LdaModel, TopicDistributions]:
    """Run the full chain and estimate distributions from the final state."""
    model = init_assignments(corpus, hyper)
    for _ in range(hyper.sweeps):
        gibbs_sweep(model)
        model.loglik_trace.append(log_likelihood(model))
    return model, estimate_distributions(model)


# ---------------------------------------------------------------------------
# Validation instruments


def sample_corpus(
    num_topics: int,
    vocab_size: int,
    num_docs: int,
    doc_length: int,
    alpha: float,
    beta: float,
    seed: int,
) -> tuple[EncodedCorpus, np.ndarray, np.ndarray]:
    """Draw a corpus from the generative process, returning ground truth.

    Topic-word rows are Dirichlet(beta), document mixtures Dirichlet(alpha);
    each token draws a topic from its document mixture and a word from that
    topic. Used for recovery tests against the fitted distributions.
    """
    if min(num_topics, vocab_size, num_docs) < 1 or doc_length < 0:
        raise ValidationError("sample_corpus parameters must be positive")
    if doc_length == 0:
        warnings.warn("doc_length=0: sampled corpus has only empty documents")
    rng = np.random.default_rng(seed)
    topic_word = rng.dirichlet(np.full(vocab_size, beta), size=num_topics)
    doc_topic = rng.dirichlet(np.full(num_topics, alpha), size=num_docs)
    topic_cdf = np.cumsum(doc_topic, axis=1)
    word_cdf = np.cumsum(topic_word, axis=1)
    doc_tokens = []
    for d in range(num_docs):
        if doc_length == 0:
            doc_tokens.append(np.empty(0, dtype=np.int32))
            continue
        topics = np.searchsorted(topic_cdf[d], rng.random(doc_length), side="right")
        topics = np.minimum(topics, num_topics - 1)
        draws = rng.random(doc_length)
        words = (draws[:, None] >= word_cdf[topics]).sum(axis=1)
        doc_tokens.append(np.minimum(words, vocab_size - 1).astype(np.int32))
    corpus = EncodedCorpus(
        doc_ids=[f"synth{d}" for d in range(num_docs)],
        doc_tokens=doc_tokens,
        vocab_size=vocab_size,
    )
    return corpus, doc_topic, topic_word


@dataclass
class ExactPosterior:
    """Enumeration of P(z | w) over every full assignment vector."""

    assignments: list[tuple[int, ...]]
    probs: np.ndarray

    def __post_init__(self):
        self._index = {a: i for i, a in enumerate(self.assignments)}

    def prob(self, assignment: tuple[int, ...]) -> float:
        return float(self.probs[self._index[assignment]])

    def total_variation(self, sample_counts: Counter) -> float:
        total = sum(sample_counts.values())
        if total == 0:
            raise ValidationError("no samples to compare against")
        tv = 0.0
        for a, p in zip(self.assignments, self.probs):
            tv += abs(sample_counts.get(a, 0) / total - p)
        extra = sum(c for a, c in sample_counts.items() if a not in self._index)
        return 0.5 * (tv + extra / total)


ENUMERATION_CAP = 1_000_000


def exact_posterior(corpus: EncodedCorpus, hyper: Hyperparams) -> ExactPosterior:
    """Enumerate every assignment vector and normalize the collapsed joint.

    Only feasible for tiny instances; instances above the enumeration cap
    are rejected.
    """
    doc_of, word_of = corpus.flattened()
    n = len(word_of)
    T = hyper.num_topics
    if n == 0:
        raise DataError("cannot enumerate the posterior of an empty corpus")
    if T**n > ENUMERATION_CAP:
        raise ValidationError(
            f"{T}^{n} assignment vectors exceeds the enumeration cap {ENUMERATION_CAP}"
        )
    alpha, beta = hyper.alpha, hyper.beta
    W = corpus.vocab_size
    num_docs = corpus.num_docs
    assignments = []
    logw = np.empty(T**n)
    for k, assign in enumerate(itertools.product(range(T), repeat=n)):
        z = np.asarray(assign, dtype=np.int32)
        n_dt, n_tw, n_t = _counts_from_assignments(doc_of, word_of, z, num_docs, T, W)
        log_joint = 0.0
        for d in range(num_docs):
            log_joint += math.lgamma(T * alpha) - math.lgamma(n_dt[d].sum() + T * alpha)
            for t in range(T):
                log_joint += math.lgamma(n_dt[d, t] + alpha) - math.lgamma(alpha)
        for t in range(T):
            log_joint += math.lgamma(W * beta) - math.lgamma(n_t[t] + W * beta)
            for w in range(W):
                log_joint += math.lgamma(n_tw[t, w] + beta) - math.lgamma(beta)
        assignments.append(tuple(assign))
        logw[k] = log_joint
    logw -= logw.max()
    probs = np.exp(logw)
    probs /= probs.sum()
    return ExactPosterior(assignments=assignments, probs=probs)


def chain_assignment_counts(
    corpus: EncodedCorpus, hyper: Hyperparams, num_samples: int
) -> Counter:
    """Empirical distribution over full assignment vectors: one sample per
    sweep after burn-in."""
    model = init_assignments(corpus, hyper)
    for _ in range(hyper.burn_in):
        gibbs_sweep(model)
    counts: Counter = Counter()
    for _ in range(num_samples):
        gibbs_sweep(model)
        counts[tuple(int(t) for t in model.z)] += 1
    return counts


# ---------------------------------------------------------------------------
# Persistence


def save_model(model: LdaModel, path: str | Path, vocab_ref: str = "",
               extra_meta: dict | None = None) -> None:
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "hyper": model.hyper.to_dict(),
        "doc_ids": model.doc_ids,
        "sweeps_done": model.sweeps_done,
        "loglik_trace": model.loglik_trace,
        "vocab_ref": vocab_ref,
        "provenance": extra_meta or {},
    }
    meta_bytes = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez_compressed(
        path,
        meta=meta_bytes,
        doc_of=model.doc_of,
        word_of=model.word_of,
        z=model.z,
        doc_topic_counts=model.doc_topic_counts,
        topic_word_counts=model.topic_word_counts,
        topic_counts=model.topic_counts,
    )


def load_model(path: str | Path) -> LdaModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != MODEL_FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported model format version {meta.get('format_version')}"
            )
        hyper = Hyperparams(**meta["hyper"])
        model = LdaModel(
            hyper=hyper,
            doc_ids=list(meta["doc_ids"]),
            doc_of=data["doc_of"],
            word_of=data["word_of"],
            z=data["z"],
            doc_topic_counts=data["doc_topic_counts"],
            topic_word_counts=data["topic_word_counts"],
            topic_counts=data["topic_counts"],
            loglik_trace=list(meta["loglik_trace"]),
            sweeps_done=int(meta["sweeps_done"]),
            rng=None,
        )
    verify_counts(model)
    return model


def write_distributions_tsv(
    dists: TopicDistributions,
    doc_ids: Sequence[str],
    terms: Sequence[str],
    doc_topic_path: str | Path,
    topic_word_path: str | Path,
    header_lines: Sequence[str] = (),
) -> None:
    from radlabel.fileio import write_tsv

    T = dists.topic_word.shape[0]
    write_tsv(
        doc_topic_path,
        ["doc_id"] + [f"topic{t}" for t in range(T)],
        ([doc_id] + [f"{p:.8g}" for p in row] for doc_id, row in zip(doc_ids, dists.doc_topic)),
        header_lines,
    )
    write_tsv(
        topic_word_path,
        ["topic"] + list(terms),
        ([t] + [f"{p:.8g}" for p in dists.topic_word[t]] for t in range(T)),
        header_lines,
    )
