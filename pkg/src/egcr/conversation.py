"""Dialog state encoding.

A dialog is a sequence of turns from a seeker and a recommender. Each seeker
utterance x_t is paired with the recommender utterance y that precedes it,
the pair is embedded by a pluggable text encoder plus a shared linear
projection, and the per-position vectors are folded through a single-layer
gated recurrence into one fixed-width state vector.

The default text encoder is a seeded hashed bag-of-words stub: deterministic,
dependency-free and good enough to carry signal in tests and desk-scale runs.
Heavier sentence encoders can be registered under a configuration key via
:func:`register_text_encoder` without touching any caller.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

import numpy as np

from .errors import ConfigError, DimensionError

SEEKER = "seeker"
RECOMMENDER = "recommender"
SPEAKERS = (SEEKER, RECOMMENDER)

SEP = "[SEP]"


@dataclass(frozen=True)
class DialogTurn:
    """One utterance. ``turn_index`` is 1-based within the dialog."""

    turn_index: int
    speaker: str
    text: str
    mentions: tuple = ()

    def __post_init__(self) -> None:
        if self.speaker not in SPEAKERS:
            raise ValueError(f"speaker must be one of {SPEAKERS}, got {self.speaker!r}")
        if self.turn_index < 1:
            raise ValueError(f"turn_index must be >= 1, got {self.turn_index}")


@dataclass(frozen=True)
class DialogHistory:
    """Turns in conversation order with strictly increasing turn indices."""

    turns: tuple[DialogTurn, ...]

    def __post_init__(self) -> None:
        indices = [t.turn_index for t in self.turns]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"turn indices must be strictly increasing, got {indices}")

    def __len__(self) -> int:
        return len(self.turns)

    def mentioned_entities(self) -> set[int]:
        return {m.entity for t in self.turns for m in t.mentions}


@dataclass(frozen=True)
class ConversationState:
    """Recurrence state after consuming every encodable position."""

    vector: np.ndarray
    turn_count: int


class TextEncoder(Protocol):
    """Maps raw text to a fixed-width vector of dimension ``d_text``."""

    name: str
    d_text: int
    deterministic: bool

    def encode(self, text: str) -> np.ndarray: ...


@dataclass(frozen=True)
class HashedBagEncoder:
    """Seeded hashed bag-of-words encoder.

    Lowercases, splits on whitespace, hashes every token into one of
    ``d_text`` buckets with a keyed blake2b digest and L2-normalizes the
    counts. Empty input maps to the zero vector. Same seed, same output,
    across processes and platforms.
    """

    seed: int
    d_text: int
    name: str = "hashed"
    deterministic: bool = True

    def _bucket(self, token: str) -> int:
        key = struct.pack("<q", self.seed & 0x7FFFFFFFFFFFFFFF)
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
        return int.from_bytes(digest, "little") % self.d_text

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.d_text, dtype=np.float64)
        for token in text.lower().split():
            vec[self._bucket(token)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


def stub_encoder(seed: int, d_text: int) -> HashedBagEncoder:
    if d_text < 1:
        raise ConfigError(f"d_text must be >= 1, got {d_text}")
    return HashedBagEncoder(seed=seed, d_text=d_text)


_ENCODER_FACTORIES: dict[str, Callable[[int, int], TextEncoder]] = {
    "hashed": stub_encoder,
}


def register_text_encoder(name: str, factory: Callable[[int, int], TextEncoder]) -> None:
    """Register a text encoder factory under a configuration key.

    The factory receives ``(seed, d_text)`` and returns a TextEncoder.
    """
    _ENCODER_FACTORIES[name] = factory


def make_text_encoder(name: str, seed: int, d_text: int) -> TextEncoder:
    try:
        factory = _ENCODER_FACTORIES[name]
    except KeyError:
        known = sorted(_ENCODER_FACTORIES)
        raise ConfigError(f"unknown text encoder {name!r}; registered: {known}") from None
    return factory(seed, d_text)


@dataclass(frozen=True)
class LinearProjection:
    """Shared linear map from text space (d_text) to model space (d)."""

    matrix: np.ndarray

    @property
    def d_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def d_out(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, vec: np.ndarray) -> np.ndarray:
        if vec.shape != (self.d_in,):
            raise DimensionError(f"expected vector of shape ({self.d_in},), got {vec.shape}")
        return self.matrix @ vec

    @classmethod
    def identity(cls, d: int) -> "LinearProjection":
        return cls(matrix=np.eye(d, dtype=np.float64))

    @classmethod
    def seeded(cls, d_text: int, d: int, seed: int) -> "LinearProjection":
        rng = np.random.default_rng([seed, 2])
        bound = np.sqrt(6.0 / (d_text + d))
        return cls(matrix=rng.uniform(-bound, bound, size=(d, d_text)))


def _apply_activation(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(x)
    if activation == "identity":
        return x
    raise ConfigError(f"unknown activation {activation!r}")


@dataclass(frozen=True)
class GatedAggregator:
    """Single-layer gated recurrence over per-position vectors.

    One update gate z and one candidate n per step:

        z = sigmoid(w_gate v + u_gate h + b_gate)   (or exactly 1 when pinned)
        n = act(w_cand v + u_cand h + b_cand)
        h' = (1 - z) * h + z * n

    ``accumulator`` pins the gate open with a linear identity candidate, so a
    single step from the zero state reproduces its input exactly.
    """

    w_gate: np.ndarray
    u_gate: np.ndarray
    b_gate: np.ndarray
    w_cand: np.ndarray
    u_cand: np.ndarray
    b_cand: np.ndarray
    activation: str = "tanh"
    pinned_open: bool = False

    @property
    def dim(self) -> int:
        return self.w_gate.shape[0]

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.dim, dtype=np.float64)

    def step(self, state: np.ndarray, v: np.ndarray) -> np.ndarray:
        if v.shape != (self.dim,) or state.shape != (self.dim,):
            raise DimensionError(
                f"aggregator of width {self.dim} got state {state.shape}, input {v.shape}"
            )
        if self.pinned_open:
            z = np.ones(self.dim, dtype=np.float64)
        else:
            z = 1.0 / (1.0 + np.exp(-(self.w_gate @ v + self.u_gate @ state + self.b_gate)))
        n = _apply_activation(self.w_cand @ v + self.u_cand @ state + self.b_cand, self.activation)
        return (1.0 - z) * state + z * n

    @classmethod
    def seeded(cls, dim: int, seed: int) -> "GatedAggregator":
        rng = np.random.default_rng([seed, 3])
        bound = np.sqrt(3.0 / dim)

        def draw() -> np.ndarray:
            return rng.uniform(-bound, bound, size=(dim, dim))

        return cls(
            w_gate=draw(),
            u_gate=draw(),
            b_gate=np.zeros(dim, dtype=np.float64),
            w_cand=draw(),
            u_cand=draw(),
            b_cand=np.zeros(dim, dtype=np.float64),
        )

    @classmethod
    def accumulator(cls, dim: int) -> "GatedAggregator":
        eye = np.eye(dim, dtype=np.float64)
        zero = np.zeros((dim, dim), dtype=np.float64)
        zvec = np.zeros(dim, dtype=np.float64)
        return cls(
            w_gate=zero,
            u_gate=zero,
            b_gate=zvec,
            w_cand=eye,
            u_cand=zero,
            b_cand=zvec,
            activation="identity",
            pinned_open=True,
        )

    @classmethod
    def zeros(cls, dim: int) -> "GatedAggregator":
        zero = np.zeros((dim, dim), dtype=np.float64)
        zvec = np.zeros(dim, dtype=np.float64)
        return cls(w_gate=zero, u_gate=zero, b_gate=zvec, w_cand=zero, u_cand=zero, b_cand=zvec)


def encode_turn_pair(
    y_prev: str,
    x_t: str,
    enc: TextEncoder,
    proj: LinearProjection,
) -> np.ndarray:
    """Embed one (previous recommender utterance, seeker utterance) pair.

    The two utterances are joined around a ``[SEP]`` marker; an empty y_prev
    contributes only the separator and x_t. The seeker utterance must be
    non-empty.
    """
    if not x_t:
        raise ValueError("seeker utterance x_t must be non-empty")
    if enc.d_text != proj.d_in:
        raise DimensionError(
            f"encoder emits d_text={enc.d_text} but projection expects {proj.d_in}"
        )
    text = f"{SEP} {x_t}" if not y_prev else f"{y_prev} {SEP} {x_t}"
    return proj(enc.encode(text))


def encode_history(
    c: DialogHistory,
    enc: TextEncoder,
    proj: LinearProjection,
    rnn: GatedAggregator,
) -> ConversationState:
    """Fold a dialog history into a single state vector.

    Positions are formed at seeker turns only: each seeker utterance pairs
    with the most recent recommender utterance since the previous seeker turn
    (empty for the first). A trailing recommender utterance is held as context
    for the next position and never forms a position by itself; a history
    without any seeker turn is rejected.
    """
    if proj.d_out != rnn.dim:
        raise DimensionError(
            f"projection emits d={proj.d_out} but aggregator has width {rnn.dim}"
        )
    state = rnn.initial_state()
    positions = 0
    pending_y = ""
    for turn in c.turns:
        if turn.speaker == RECOMMENDER:
            pending_y = turn.text
            continue
        v = encode_turn_pair(pending_y, turn.text, enc, proj)
        state = rnn.step(state, v)
        positions += 1
        pending_y = ""
    if positions == 0:
        raise ValueError("history contains no seeker turn to encode")
    return ConversationState(vector=state, turn_count=positions)
