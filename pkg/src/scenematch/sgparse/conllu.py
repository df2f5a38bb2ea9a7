"""CoNLL-U ingestion: 10 tab-separated columns, blank-line sentence breaks.

Only the columns the extraction rules need are kept (ID, FORM, LEMMA, UPOS,
HEAD, DEPREL). Multi-word-token ranges ("3-4") and empty nodes ("3.1") are
skipped. Structural problems raise ConlluParseError carrying the 1-based
line number.
"""

from __future__ import annotations

from dataclasses import dataclass


class ConlluParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class DepToken:
    index: int      # 1-based position within the sentence
    surface: str
    lemma: str
    upos: str
    head: int       # 0 = root
    deprel: str


def parse_conllu(document: str) -> list[list[DepToken]]:
    """Split a CoNLL-U document into sentences of DepTokens."""
    sentences: list[list[DepToken]] = []
    current: list[DepToken] = []
    seen_ids: set[int] = set()
    sentence_start_line = 1

    def flush(end_line: int) -> None:
        nonlocal current, seen_ids
        if not current:
            return
        n = len(current)
        for tok in current:
            if not (0 <= tok.head <= n):
                raise ConlluParseError(
                    end_line, f"HEAD {tok.head} of token {tok.index} outside sentence of length {n}"
                )
        sentences.append(current)
        current = []
        seen_ids = set()

    lines = document.split("\n")
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            flush(line_no)
            sentence_start_line = line_no + 1
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(line_no, f"expected 10 tab-separated columns, got {len(cols)}")
        tok_id = cols[0]
        if "-" in tok_id or "." in tok_id:  # multi-word range / empty node
            continue
        try:
            index = int(tok_id)
        except ValueError:
            raise ConlluParseError(line_no, f"non-numeric ID {tok_id!r}") from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(line_no, f"non-numeric HEAD {cols[6]!r}") from None
        if index in seen_ids:
            raise ConlluParseError(line_no, f"duplicate token ID {index}")
        if index != len(current) + 1:
            raise ConlluParseError(line_no, f"token ID {index} out of sequence")
        seen_ids.add(index)
        current.append(
            DepToken(
                index=index,
                surface=cols[1],
                lemma=cols[2],
                upos=cols[3],
                head=head,
                deprel=cols[7],
            )
        )
    flush(len(lines))
    _ = sentence_start_line
    return sentences
