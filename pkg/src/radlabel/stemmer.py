"""Rule-table suffix-stripping stemmer.

The rule table is a plain-text data file so the stemmer can be swapped per
language mode without code changes. Rules are applied longest-suffix-first
and repeated until no rule fires, which makes ``stem`` idempotent by
construction; a minimum stem length stops runaway stripping.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

from radlabel.errors import ValidationError

# Bare trailing "s" is only stripped after one of these characters
# (genitive/plural s in Swedish; keeps e.g. "radius" intact).
_VALID_S_PRECEDERS = set("bcdfghjklmnoprtvy")


@dataclass(frozen=True)
class SuffixRule:
    suffix: str
    replacement: str = ""


@dataclass
class SuffixStemmer:
    """Strips inflection suffixes until a fixed point is reached."""

    rules: list[SuffixRule]
    min_stem_len: int = 3
    _by_length: list[SuffixRule] = field(init=False, repr=False)

    def __post_init__(self):
        for rule in self.rules:
            if not rule.suffix:
                raise ValidationError("empty suffix in stemmer rule table")
            if len(rule.replacement) >= len(rule.suffix):
                raise ValidationError(
                    f"stemmer rule '{rule.suffix}' -> '{rule.replacement}' does not "
                    "shorten the word; the rule table would not terminate"
                )
        self._by_length = sorted(self.rules, key=lambda r: len(r.suffix), reverse=True)

    def _strip_once(self, word: str) -> str | None:
        for rule in self._by_length:
            if len(word) <= len(rule.suffix):
                continue
            if not word.endswith(rule.suffix):
                continue
            stem = word[: -len(rule.suffix)] + rule.replacement
            if len(stem) < self.min_stem_len:
                continue
            if rule.suffix == "s" and word[-2] not in _VALID_S_PRECEDERS:
                continue
            return stem
        return None

    def stem(self, token: str) -> str:
        word = token
        while True:
            stripped = self._strip_once(word)
            if stripped is None:
                return word
            word = stripped

    @classmethod
    def from_file(cls, path: str | Path, min_stem_len: int = 3) -> "SuffixStemmer":
        """Load rules from a text file: one suffix per line, optionally
        ``suffix<TAB>replacement``. ``#`` starts a comment."""
        rules = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) == 1:
                rules.append(SuffixRule(parts[0]))
            elif len(parts) == 2:
                rules.append(SuffixRule(parts[0], parts[1]))
            else:
                raise ValidationError(f"{path}:{lineno}: expected 1 or 2 columns")
        if not rules:
            raise ValidationError(f"{path}: no stemmer rules found")
        return cls(rules, min_stem_len=min_stem_len)


class NullStemmer:
    """Identity stemmer for the 'none' language mode."""

    def stem(self, token: str) -> str:
        return token


def default_swedish() -> SuffixStemmer:
    """Stemmer built from the bundled Swedish suffix table."""
    ref = importlib.resources.files("radlabel.data") / "stemmer_sv.txt"
    with importlib.resources.as_file(ref) as path:
        return SuffixStemmer.from_file(path)
