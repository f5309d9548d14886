"""The full code/description embedding model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoders as enc
from .config import ModelConfig
from .fusion import fuse, init_attention, init_fusion
from .optim import ParameterSet, checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint
from .vocab import UNK, Vocabulary


class ModelMismatch(ValueError):
    pass


@dataclass
class Vocabularies:
    code: Vocabulary
    ast: Vocabulary
    desc: Vocabulary

    @classmethod
    def build(cls, examples, config):
        return cls(
            code=Vocabulary.build((ex.tokens for ex in examples), max_size=config.code_vocab_size),
            ast=Vocabulary.build(([n.label for n in ex.ast.nodes] for ex in examples), max_size=config.ast_vocab_size),
            desc=Vocabulary.build((ex.description_tokens for ex in examples), max_size=config.desc_vocab_size),
        )

    def to_dict(self):
        return {"code": self.code.to_list(), "ast": self.ast.to_list(), "desc": self.desc.to_list()}

    @classmethod
    def from_dict(cls, d):
        return cls(*(Vocabulary.from_list(d[k]) for k in ("code", "ast", "desc")))


class Model:
    """Parameters, vocabularies and configuration of one trained model."""

    def __init__(self, config, vocabs, params=None):
        self.config = config.validate()
        self.vocabs = vocabs
        if params is None:
            params = self.init_params(config, vocabs)
        self.params = params

    @staticmethod
    def init_params(config, vocabs):
        hp = config.hyper
        rng = np.random.default_rng(hp.seed)
        params = ParameterSet(np.dtype(hp.precision))
        E, H = hp.embed_dim, hp.hidden_dim
        if "tok" in config.modalities:
            enc.init_lstm(params, "tok.", len(vocabs.code), E, H, rng)
        if "ast" in config.modalities:
            enc.init_tree_lstm(params, "ast.", len(vocabs.ast), E, H, rng)
        if "cfg" in config.modalities:
            enc.init_ggnn(params, "cfg.", H, rng)
        enc.init_lstm(params, "des.", len(vocabs.desc), E, H, rng)
        if config.attention:
            for m in config.modalities:
                init_attention(params, m, H, rng)
        init_fusion(params, H, hp.common_dim, rng)
        return params

    # -- forward -----------------------------------------------------------
    def encode_modalities(self, examples, training=False, rng=None):
        hp = self.config.hyper
        p = hp.dropout if training else 0.0
        outputs = {}
        mods = self.config.modalities
        if "tok" in mods:
            seqs = [self.vocabs.code.encode(ex.tokens) or [UNK] for ex in examples]
            outputs["tok"] = enc.lstm_batch(self.params, "tok.", seqs, p, training, rng)
        if "ast" in mods:
            trees = [enc.ast_arrays(ex.ast, self.vocabs.ast) for ex in examples]
            outputs["ast"] = enc.tree_lstm_batch(self.params, "ast.", trees, p, training, rng)
        if "cfg" in mods:
            graphs = [enc.cfg_arrays(ex.cfg) for ex in examples]
            outputs["cfg"] = enc.ggnn_batch(self.params, "cfg.", graphs, hp.rounds, p, training, rng)
        return outputs

    def encode_code(self, examples, training=False, rng=None):
        """Returns ``(FusionResult, encoder outputs)`` for a batch of examples."""
        outputs = self.encode_modalities(examples, training, rng)
        result = fuse(outputs, self.params, self.config.modalities, self.config.attention)
        return result, outputs

    def encode_descriptions(self, token_lists, training=False, rng=None):
        p = self.config.hyper.dropout if training else 0.0
        seqs = []
        for toks in token_lists:
            ids = self.vocabs.desc.encode(toks)
            if not ids:
                raise enc.EmptySequence("description is empty")
            seqs.append(ids)
        return enc.lstm_batch(self.params, "des.", seqs, p, training, rng).summary

    def code_vectors(self, examples, batch_size=64):
        out = []
        for i in range(0, len(examples), batch_size):
            result, _ = self.encode_code(examples[i : i + batch_size])
            out.append(np.asarray(result.code.data, dtype=np.float64))
        if not out:
            return np.zeros((0, self.config.hyper.common_dim))
        return np.concatenate(out, axis=0)

    def description_vectors(self, token_lists, batch_size=256):
        out = []
        for i in range(0, len(token_lists), batch_size):
            out.append(np.asarray(self.encode_descriptions(token_lists[i : i + batch_size]).data, dtype=np.float64))
        if not out:
            return np.zeros((0, self.config.hyper.common_dim))
        return np.concatenate(out, axis=0)

    # -- persistence -------------------------------------------------------
    def meta(self):
        return {"config": self.config.to_dict(), "vocabs": self.vocabs.to_dict()}

    def to_bytes(self):
        return checkpoint_bytes(self.params, self.meta())

    def save(self, path):
        return save_checkpoint(path, self.params, self.meta())

    @classmethod
    def from_meta(cls, params, meta):
        config = ModelConfig.from_dict(meta["config"])
        model = cls(config, Vocabularies.from_dict(meta["vocabs"]), params)
        expected = cls.init_params(config, model.vocabs)
        for name in expected:
            if name not in params or params[name].shape != expected[name].shape:
                raise ModelMismatch(f"checkpoint parameter {name!r} does not match its configuration")
        return model

    @classmethod
    def load(cls, path):
        """Returns ``(model, fingerprint)``."""
        params, meta, digest = load_checkpoint(path)
        return cls.from_meta(params, meta), digest

    @classmethod
    def from_bytes(cls, data):
        params, meta = parse_checkpoint(data)
        return cls.from_meta(params, meta)


def cosine_matrix(queries, vectors, eps=1e-8):
    q = np.asarray(queries, dtype=np.float64)
    v = np.asarray(vectors, dtype=np.float64)
    qn = np.maximum(np.linalg.norm(q, axis=-1, keepdims=True), eps)
    vn = np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), eps)
    return (q / qn) @ (v / vn).T



@dataclass
class AttentionReport:
    """Per-modality ``(label, weight)`` pairs for one snippet."""

    snippet_id: str
    weights: dict  # modality -> list of (label, weight)

    def records(self):
        for modality, pairs in self.weights.items():
            for label, weight in pairs:
                yield {"modality": modality, "label": label, "weight": weight}


def _vertex_label(v):
    return v.text if v.text else v.kind


def attention_report(snippet, model):
    """Attention weight of every token, AST node and CFG vertex of ``snippet``.

    ``snippet`` may be an extracted example, a corpus record or raw source.
    """
    from .dataset import CodeRecord, extract

    if isinstance(snippet, str):
        snippet = CodeRecord("snippet", snippet)
    if not hasattr(snippet, "ast"):
        snippet = extract(snippet, require_description=False)
    if not model.config.attention:
        raise ValueError("model was configured without attention")
    result, _ = model.encode_code([snippet])
    labels = {
        "tok": snippet.tokens or ["<unk>"],
        "ast": [n.label for n in snippet.ast.nodes],
        "cfg": [_vertex_label(v) for v in snippet.cfg.vertices],
    }
    weights = {}
    for m, alpha in result.weights.items():
        row = np.asarray(alpha.data, dtype=np.float64)[0]
        weights[m] = [(lab, float(w)) for lab, w in zip(labels[m], row)]
    return AttentionReport(snippet.id, weights)
