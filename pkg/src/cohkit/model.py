"""Trainable shared encoder with one classification head per task.

The encoder is a single feed-forward layer over mean-pooled token
embeddings: small enough that every gradient is hand-checkable, while still
sharing parameters across task heads so multi-task transfer is observable.

Parameters live in a flat name -> float64 array dict; gradients come back
congruent to it. All computation is numpy on CPU and deterministic given
seeds.
"""

from __future__ import annotations

import io
import json
import re
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"COHK"
CHECKPOINT_VERSION = 1

UNK_TOKEN = "<unk>"
UNK_ID = 0

_TOKEN_RE = re.compile(r"[\w']+")


class ModelError(ValueError):
    pass


class CheckpointError(ModelError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens, split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """token -> id map; id 0 is reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str]):
        if len(set(tokens)) != len(tokens):
            raise ModelError("duplicate tokens in vocab")
        if UNK_TOKEN in tokens:
            raise ModelError(f"{UNK_TOKEN} is reserved")
        self._tokens = (UNK_TOKEN, *tokens)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode(self, text: str) -> list[int]:
        return [self.id(tok) for tok in tokenize(text)]

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1, max_size: int | None = None) -> "Vocab":
        """Build from training texts only; most frequent tokens first."""
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(
            (tok for tok, c in counts.items() if c >= min_count),
            key=lambda t: (-counts[t], t),
        )
        if max_size is not None:
            ranked = ranked[:max_size]
        return cls(ranked)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    hidden_dim: int = 32
    biaffine_dim: int = 16

    def __post_init__(self) -> None:
        if min(self.embed_dim, self.hidden_dim, self.biaffine_dim) < 1:
            raise ModelError("all dimensions must be positive")


@dataclass(frozen=True)
class HeadSpec:
    """Shape of one classification head.

    kind 'linear' heads score softmax(W f + b) where f concatenates the
    encodings of n_inputs texts; the 'biaffine' head scores NP pairs as
    a^T U_r c + b_r over relation labels r.
    """

    kind: str  # {linear, biaffine}
    n_classes: int
    n_inputs: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "biaffine"):
            raise ModelError(f"unknown head kind {self.kind!r}")
        if self.n_classes < 2:
            raise ModelError("heads need at least 2 classes")
        if self.kind == "biaffine" and self.n_inputs != 2:
            raise ModelError("biaffine heads take exactly 2 inputs")


# Head names used throughout the toolkit. Reasoning uses three independent
# binary heads, one per coherence condition.
HEAD_PAIR_ORDER = "pair_order"
HEAD_PAIR_RELEVANCE = "pair_relevance"
HEAD_DRR = "drr"
HEAD_NPE = "npe"
HEAD_NLI = "nli"
HEAD_SCORING_3 = "scoring_3"
HEAD_SCORING_5 = "scoring_5"
HEAD_REASONING = ("reasoning_cohesive", "reasoning_consistent", "reasoning_relevant")


def default_head_specs(n_drr_labels: int = 14, n_npe_labels: int = 28) -> dict[str, HeadSpec]:
    specs = {
        HEAD_PAIR_ORDER: HeadSpec("linear", 2, 2),
        HEAD_PAIR_RELEVANCE: HeadSpec("linear", 2, 2),
        HEAD_DRR: HeadSpec("linear", n_drr_labels, 2),
        HEAD_NPE: HeadSpec("biaffine", n_npe_labels, 2),
        HEAD_NLI: HeadSpec("linear", 3, 2),
        HEAD_SCORING_3: HeadSpec("linear", 3, 1),
        HEAD_SCORING_5: HeadSpec("linear", 5, 1),
    }
    for name in HEAD_REASONING:
        specs[name] = HeadSpec("linear", 2, 2)
    return specs


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def init_params(
    vocab: Vocab, config: ModelConfig, head_specs: dict[str, HeadSpec], seed: int
) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    e, h, b = config.embed_dim, config.hidden_dim, config.biaffine_dim
    params: dict[str, np.ndarray] = {
        "embeddings": rng.normal(0.0, 0.1, size=(len(vocab), e)),
        "enc_w": rng.normal(0.0, 1.0 / np.sqrt(e), size=(h, e)),
        "enc_b": np.zeros(h),
    }
    for name in sorted(head_specs):
        spec = head_specs[name]
        if spec.kind == "linear":
            feat = spec.n_inputs * h
            params[f"head.{name}.w"] = rng.normal(0.0, 1.0 / np.sqrt(feat), size=(spec.n_classes, feat))
            params[f"head.{name}.b"] = np.zeros(spec.n_classes)
        else:
            params[f"head.{name}.wa"] = rng.normal(0.0, 1.0 / np.sqrt(h), size=(b, h))
            params[f"head.{name}.wc"] = rng.normal(0.0, 1.0 / np.sqrt(h), size=(b, h))
            params[f"head.{name}.u"] = rng.normal(0.0, 1.0 / b, size=(spec.n_classes, b, b))
            params[f"head.{name}.b"] = np.zeros(spec.n_classes)
    return params


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


class CoherenceModel:
    """Shared encoder plus per-task heads, with analytic gradients.

    `labels` maps label-inventory heads (drr, npe) to their ordered label
    names so class indices are interpretable from a checkpoint alone.
    """

    def __init__(
        self,
        vocab: Vocab,
        config: ModelConfig,
        head_specs: dict[str, HeadSpec],
        params: dict[str, np.ndarray],
        labels: dict[str, tuple[str, ...]] | None = None,
    ):
        self.vocab = vocab
        self.config = config
        self.head_specs = dict(head_specs)
        self.params = params
        self.labels = {k: tuple(v) for k, v in (labels or {}).items()}
        for head, names in self.labels.items():
            if head in self.head_specs and len(names) != self.head_specs[head].n_classes:
                raise ModelError(
                    f"head {head!r} has {self.head_specs[head].n_classes} classes "
                    f"but {len(names)} labels"
                )
        for v in params.values():
            if not np.all(np.isfinite(v)):
                raise ModelError("non-finite parameter values")

    @classmethod
    def build(
        cls,
        vocab: Vocab,
        config: ModelConfig | None = None,
        head_specs: dict[str, HeadSpec] | None = None,
        seed: int = 0,
        labels: dict[str, tuple[str, ...]] | None = None,
    ) -> "CoherenceModel":
        from .corpus import DEFAULT_DRR_LABELS, DEFAULT_NPE_LABELS

        config = config or ModelConfig()
        if labels is None and head_specs is None:
            labels = {"drr": DEFAULT_DRR_LABELS, "npe": DEFAULT_NPE_LABELS}
        if head_specs is None:
            head_specs = default_head_specs(
                n_drr_labels=len(labels["drr"]), n_npe_labels=len(labels["npe"])
            )
        labels = labels or {}
        return cls(vocab, config, head_specs, init_params(vocab, config, head_specs, seed), labels)

    # -- forward ----------------------------------------------------------

    def _embed_mean(self, text: str) -> tuple[np.ndarray, list[int]]:
        ids = self.vocab.encode(text)
        if not ids:
            return np.zeros(self.config.embed_dim), ids
        return self.params["embeddings"][ids].mean(axis=0), ids

    def encode(self, text: str) -> np.ndarray:
        """Mean-pooled embeddings through the encoder layer (no dropout)."""
        x, _ = self._embed_mean(text)
        return np.tanh(self.params["enc_w"] @ x + self.params["enc_b"])

    def forward(self, head: str, texts: Sequence[str]) -> np.ndarray:
        """Probability vector over the head's classes for one example."""
        spec = self._spec(head)
        if len(texts) != spec.n_inputs:
            raise ModelError(
                f"head {head!r} takes {spec.n_inputs} text(s), got {len(texts)}"
            )
        hs = [self.encode(t) for t in texts]
        if spec.kind == "linear":
            feat = np.concatenate(hs)
            logits = self.params[f"head.{head}.w"] @ feat + self.params[f"head.{head}.b"]
        else:
            a = self.params[f"head.{head}.wa"] @ hs[0]
            c = self.params[f"head.{head}.wc"] @ hs[1]
            logits = np.einsum("rij,i,j->r", self.params[f"head.{head}.u"], a, c)
            logits = logits + self.params[f"head.{head}.b"]
        return softmax(logits)

    def predict(self, head: str, texts: Sequence[str]) -> int:
        """Argmax class; ties break toward the lowest class index."""
        return int(np.argmax(self.forward(head, texts)))

    def _spec(self, head: str) -> HeadSpec:
        try:
            return self.head_specs[head]
        except KeyError:
            raise ModelError(f"unknown head {head!r}") from None

    # -- loss and gradients ------------------------------------------------

    def loss_and_grad(
        self,
        head: str,
        batch: Sequence[tuple[Sequence[str], int]],
        dropout_encoder: float = 0.0,
        dropout_head: float = 0.0,
        mask_seed: int | None = None,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy over the batch and its analytic gradient.

        Dropout masks are Bernoulli draws from mask_seed, so the same seed
        reproduces the same stochastic loss surface (finite differences stay
        valid). Evaluation paths never pass dropout.
        """
        if not batch:
            raise ModelError("empty batch")
        spec = self._spec(head)
        rng = np.random.default_rng(mask_seed) if mask_seed is not None else np.random.default_rng()
        use_dropout = dropout_encoder > 0.0 or dropout_head > 0.0

        grads = zeros_like_params(self.params)
        total_loss = 0.0
        enc_w = self.params["enc_w"]

        for texts, label in batch:
            if len(texts) != spec.n_inputs:
                raise ModelError(f"head {head!r} takes {spec.n_inputs} text(s), got {len(texts)}")
            if not 0 <= label < spec.n_classes:
                raise ModelError(f"label {label} out of range for head {head!r}")

            # forward with caches; hs holds post-dropout encodings,
            # hs_raw the tanh outputs needed for its derivative
            xs, ids_list, hs, hs_raw, masks_enc = [], [], [], [], []
            for text in texts:
                x, ids = self._embed_mean(text)
                h_raw = np.tanh(enc_w @ x + self.params["enc_b"])
                if use_dropout and dropout_encoder > 0.0:
                    keep = 1.0 - dropout_encoder
                    mask = (rng.random(h_raw.shape) < keep) / keep
                    h = h_raw * mask
                else:
                    mask = None
                    h = h_raw
                xs.append(x)
                ids_list.append(ids)
                hs.append(h)
                hs_raw.append(h_raw)
                masks_enc.append(mask)

            if spec.kind == "linear":
                feat = np.concatenate(hs)
                if use_dropout and dropout_head > 0.0:
                    keep = 1.0 - dropout_head
                    mask_h = (rng.random(feat.shape) < keep) / keep
                    feat = feat * mask_h
                else:
                    mask_h = None
                w = self.params[f"head.{head}.w"]
                probs = softmax(w @ feat + self.params[f"head.{head}.b"])
                total_loss += -np.log(max(probs[label], 1e-300))

                dlogits = probs.copy()
                dlogits[label] -= 1.0
                grads[f"head.{head}.w"] += np.outer(dlogits, feat)
                grads[f"head.{head}.b"] += dlogits
                dfeat = w.T @ dlogits
                if mask_h is not None:
                    dfeat = dfeat * mask_h
                dhs = np.split(dfeat, spec.n_inputs)
            else:
                wa = self.params[f"head.{head}.wa"]
                wc = self.params[f"head.{head}.wc"]
                u = self.params[f"head.{head}.u"]
                a = wa @ hs[0]
                c = wc @ hs[1]
                if use_dropout and dropout_head > 0.0:
                    keep = 1.0 - dropout_head
                    mask_a = (rng.random(a.shape) < keep) / keep
                    mask_c = (rng.random(c.shape) < keep) / keep
                    a, c = a * mask_a, c * mask_c
                else:
                    mask_a = mask_c = None
                logits = np.einsum("rij,i,j->r", u, a, c) + self.params[f"head.{head}.b"]
                probs = softmax(logits)
                total_loss += -np.log(max(probs[label], 1e-300))

                dlogits = probs.copy()
                dlogits[label] -= 1.0
                grads[f"head.{head}.u"] += dlogits[:, None, None] * np.outer(a, c)[None, :, :]
                grads[f"head.{head}.b"] += dlogits
                da = np.einsum("r,rij,j->i", dlogits, u, c)
                dc = np.einsum("r,rij,i->j", dlogits, u, a)
                if mask_a is not None:
                    da, dc = da * mask_a, dc * mask_c
                grads[f"head.{head}.wa"] += np.outer(da, hs[0])
                grads[f"head.{head}.wc"] += np.outer(dc, hs[1])
                dhs = [wa.T @ da, wc.T @ dc]

            # back through encoder and embeddings for each input text
            for x, ids, h_raw, mask, dh in zip(xs, ids_list, hs_raw, masks_enc, dhs):
                if mask is not None:
                    dh = dh * mask
                dz = dh * (1.0 - h_raw**2)
                grads["enc_w"] += np.outer(dz, x)
                grads["enc_b"] += dz
                if ids:
                    dx = enc_w.T @ dz
                    contrib = dx / len(ids)
                    for tok_id in ids:
                        grads["embeddings"][tok_id] += contrib

        n = len(batch)
        for k in grads:
            grads[k] /= n
        return total_loss / n, grads

    # -- checkpoints --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Binary checkpoint: magic + version header, JSON metadata, raw
        float64 buffers. Round-trips bit-exactly."""
        keys = sorted(self.params)
        header = {
            "config": asdict(self.config),
            "vocab": list(self.vocab.tokens[1:]),  # id 0 is implicit
            "head_specs": {k: asdict(v) for k, v in sorted(self.head_specs.items())},
            "labels": {k: list(v) for k, v in sorted(self.labels.items())},
            "arrays": [{"key": k, "shape": list(self.params[k].shape)} for k in keys],
        }
        header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<I", CHECKPOINT_VERSION))
        buf.write(struct.pack("<Q", len(header_bytes)))
        buf.write(header_bytes)
        for k in keys:
            buf.write(np.ascontiguousarray(self.params[k], dtype=np.float64).tobytes())
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(buf.getvalue())

    @classmethod
    def load(cls, path: str | Path, expect_config: ModelConfig | None = None) -> "CoherenceModel":
        data = Path(path).read_bytes()
        if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", data[4:8])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {version} != supported {CHECKPOINT_VERSION}"
            )
        (header_len,) = struct.unpack("<Q", data[8:16])
        if len(data) < 16 + header_len:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(data[16 : 16 + header_len])
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
        config = ModelConfig(**header["config"])
        if expect_config is not None and config != expect_config:
            raise CheckpointError(
                f"{path}: checkpoint dimensions {config} do not match expected {expect_config}"
            )
        vocab = Vocab(header["vocab"])
        head_specs = {k: HeadSpec(**v) for k, v in header["head_specs"].items()}
        params: dict[str, np.ndarray] = {}
        offset = 16 + header_len
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            nbytes = int(np.prod(shape)) * 8
            chunk = data[offset : offset + nbytes]
            if len(chunk) < nbytes:
                raise CheckpointError(f"{path}: truncated array {entry['key']!r}")
            params[entry["key"]] = np.frombuffer(chunk, dtype=np.float64).reshape(shape).copy()
            offset += nbytes
        if offset != len(data):
            raise CheckpointError(f"{path}: trailing bytes after arrays")
        labels = {k: tuple(v) for k, v in header.get("labels", {}).items()}
        return cls(vocab, config, head_specs, params, labels)


def checkpoint_sha256(path: str | Path) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
