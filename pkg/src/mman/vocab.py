"""Token vocabularies with reserved padding and unknown entries."""

from __future__ import annotations

from collections import Counter

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"


class Vocabulary:
    def __init__(self, tokens=()):
        self.itos = [PAD_TOKEN, UNK_TOKEN]
        self.stoi = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            self.add(tok)

    def add(self, token):
        token = token.lower()
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def build(cls, sequences, max_size=None, min_count=1):
        """Most frequent tokens first; ties broken alphabetically."""
        counts = Counter(tok.lower() for seq in sequences for tok in seq)
        ranked = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        if max_size is not None:
            ranked = ranked[: max(0, max_size - 2)]
        return cls(ranked)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token.lower() in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def index(self, token):
        return self.stoi.get(token.lower(), UNK)

    def encode(self, tokens):
        return [self.index(t) for t in tokens]

    def token(self, index):
        return self.itos[index]

    def to_list(self):
        return list(self.itos)

    @classmethod
    def from_list(cls, itos):
        if itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        return cls(itos[2:])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i, tok in enumerate(self.itos):
                fh.write(f"{i}\t{tok}\n")

    @classmethod
    def load(cls, path):
        itos = []
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx, tok = line.split("\t", 1)
                if int(idx) != n:
                    raise ValueError(f"{path}: indices must be contiguous from 0 (line {n + 1})")
                itos.append(tok)
        return cls.from_list(itos)
