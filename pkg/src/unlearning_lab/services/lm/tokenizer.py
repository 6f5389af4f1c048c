from __future__ import annotations

import json
import re
from collections.abc import Iterable, Sequence
from pathlib import Path

from unlearning_lab.exceptions import TokenizerError

PAD = "[PAD]"
BOS = "[BOS]"
EOS = "[EOS]"
SEP = "[SEP]"
BLANK = "[BLANK]"
SPECIAL_TOKENS: tuple[str, ...] = (PAD, BOS, EOS, SEP, BLANK)

TOKEN_PATTERN = re.compile(r"\[[A-Z]+\]|\w+|[^\w\s]")
_PUNCTUATION = re.compile(r"^[^\w\s\[]$")
# apostrophes and hyphens bind to both neighbours
_JOINERS = frozenset({"'", "-"})


class Tokenizer:
    """Closed-vocabulary, case-sensitive word tokenizer."""

    def __init__(self, vocabulary: Sequence[str]) -> None:
        words = [word for word in vocabulary if word not in SPECIAL_TOKENS]
        self.id_to_token: list[str] = [*SPECIAL_TOKENS, *words]
        self.token_to_id: dict[str, int] = {}
        for index, token in enumerate(self.id_to_token):
            if token in self.token_to_id:
                raise TokenizerError(f"duplicate vocabulary entry {token!r}")
            self.token_to_id[token] = index

    @classmethod
    def build(cls, texts: Iterable[str]) -> Tokenizer:
        words: set[str] = set()
        for text in texts:
            words.update(TOKEN_PATTERN.findall(text))
        return cls(sorted(words - set(SPECIAL_TOKENS)))

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    def split(self, text: str) -> list[str]:
        return TOKEN_PATTERN.findall(text)

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for token in self.split(text):
            token_id = self.token_to_id.get(token)
            if token_id is None:
                raise TokenizerError(f"out-of-vocabulary token {token!r} in {text!r}")
            ids.append(token_id)
        return ids

    def covers(self, text: str) -> bool:
        return all(token in self.token_to_id for token in self.split(text))

    def decode(self, ids: Iterable[int], *, skip_special: bool = True) -> str:
        pieces: list[str] = []
        glue_next = False
        for token_id in ids:
            token = self.id_to_token[int(token_id)]
            if skip_special and token in SPECIAL_TOKENS and token != BLANK:
                continue
            if pieces and (glue_next or _PUNCTUATION.match(token)):
                pieces[-1] += token
            else:
                pieces.append(token)
            glue_next = token in _JOINERS
        return " ".join(pieces)

    def to_dict(self) -> dict[str, list[str]]:
        return {"vocabulary": self.id_to_token[len(SPECIAL_TOKENS) :]}

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> Tokenizer:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return cls(payload["vocabulary"])
