"""Catalog of accepted phrases, indexed by the boundary features that
drive structure-template fusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .phrase import Phrase
from .pitch import Degree
from .rules import CatalogEntry, ProgressionGrammar, RejectionResult, RuleConfig, reject


@dataclass(frozen=True)
class PhraseLibrary:
    entries: tuple[tuple[Phrase, CatalogEntry], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> tuple[Phrase, CatalogEntry]:
        return self.entries[i]

    def __iter__(self) -> Iterator[tuple[Phrase, CatalogEntry]]:
        return iter(self.entries)

    @staticmethod
    def build(
        phrases: Iterable[Phrase],
        grammar: ProgressionGrammar = ProgressionGrammar(),
        config: RuleConfig = RuleConfig(),
    ) -> tuple["PhraseLibrary", list[tuple[Phrase, RejectionResult]]]:
        """Catalog the phrases that pass rejection; return the rest with
        their rejection reasons."""
        kept: list[tuple[Phrase, CatalogEntry]] = []
        dropped: list[tuple[Phrase, RejectionResult]] = []
        for p in phrases:
            result = reject(p, grammar, config)
            if result.accepted and result.entry is not None:
                kept.append((p, result.entry))
            else:
                dropped.append((p, result))
        return PhraseLibrary(tuple(kept)), dropped

    def select(
        self,
        mode: Optional[str] = None,
        cadence: Optional[str] = None,
        final_treble: Optional[Degree] = None,
        start_roots_any: Optional[frozenset[int]] = None,
        final_root: Optional[int] = None,
    ) -> list[int]:
        """Indices of entries matching every given criterion; a required
        'authentic' cadence also admits perfect authentic ones."""
        from .rules import cadence_satisfies

        out = []
        for i, (_, entry) in enumerate(self.entries):
            if mode is not None and entry.mode != mode:
                continue
            if cadence is not None and not cadence_satisfies(entry.cadence, cadence):
                continue
            if final_treble is not None and entry.final_treble != final_treble:
                continue
            if start_roots_any is not None and not (entry.start_roots & start_roots_any):
                continue
            if final_root is not None and entry.final_root != final_root:
                continue
            out.append(i)
        return out
