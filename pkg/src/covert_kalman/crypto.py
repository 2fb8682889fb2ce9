"""Partial encryption of innovation vectors.

A nonsingular map splits each innovation into a row block that gets
encrypted and a row block sent in the clear. The cipher here is a
keyed additive pseudorandom mask, a stand-in with the right interface
and determinism, not a real cipher: the point of the package is the
estimation-theoretic analysis, which only needs "ciphertext carries no
usable information without the key".
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConditioningWarning, MalformedMessageError, PartitionError
from .numerics import DEFAULT_TOLERANCES, Tolerances, rank_tol

__all__ = [
    "CipherKey",
    "EncryptionPartition",
    "ChannelMessage",
    "make_partition",
    "encrypt",
    "decrypt",
    "build_message",
    "eavesdropper_view",
]

_COND_WARN_THRESHOLD = 1e8


@dataclass(frozen=True)
class CipherKey:
    """Opaque nonnegative integer seed shared by sensor and user."""

    kappa: int

    def __post_init__(self):
        if not isinstance(self.kappa, (int, np.integer)) or self.kappa < 0:
            raise ValueError("kappa must be a nonnegative integer")


@dataclass(frozen=True)
class EncryptionPartition:
    """Row split of the innovation space into hidden and clear parts.

    ``S_bar`` (m_bar x m) selects the rows that get encrypted and
    ``S`` ((m - m_bar) x m) the rows sent in the clear; stacked they
    form the nonsingular map whose inverse is precomputed here. When
    ``S`` has zero rows the whole innovation is encrypted.
    """

    S_bar: np.ndarray
    S: np.ndarray
    S_tilde: np.ndarray
    S_tilde_inv: np.ndarray

    @property
    def m(self) -> int:
        return self.S_bar.shape[1]

    @property
    def m_bar(self) -> int:
        return self.S_bar.shape[0]

    @property
    def full_encryption(self) -> bool:
        return self.S.shape[0] == 0


def make_partition(
    S_bar: np.ndarray,
    S: np.ndarray | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> EncryptionPartition:
    """Build and validate a partition from its two row blocks.

    Pass ``S=None`` (or an empty block) to encrypt every row, in which
    case ``S_bar`` must itself be square and nonsingular.

    Raises
    ------
    PartitionError
        On dimension mismatch or a singular stacked map.

    Warns
    -----
    ConditioningWarning
        When the stacked map's condition number exceeds 1e8.
    """
    S_bar = np.atleast_2d(np.asarray(S_bar, dtype=float))
    m = S_bar.shape[1]
    if S is None:
        S = np.zeros((0, m))
    else:
        S = np.asarray(S, dtype=float)
        if S.size == 0:
            S = np.zeros((0, m))
        S = np.atleast_2d(S)
    if S.shape[1] != m:
        raise PartitionError(
            f"S has {S.shape[1]} columns, S_bar has {m}"
        )
    if S_bar.shape[0] + S.shape[0] != m:
        raise PartitionError(
            f"row blocks stack to {S_bar.shape[0] + S.shape[0]} rows, need {m}"
        )
    if S_bar.shape[0] < 1:
        raise PartitionError("at least one row must be encrypted")
    S_tilde = np.vstack([S_bar, S])
    if rank_tol(S_tilde, tol) < m:
        raise PartitionError("stacked partition map is singular")
    cond = np.linalg.cond(S_tilde)
    if cond > _COND_WARN_THRESHOLD:
        warnings.warn(
            f"partition map condition number {cond:.3e}", ConditioningWarning
        )
    return EncryptionPartition(
        S_bar=S_bar,
        S=S,
        S_tilde=S_tilde,
        S_tilde_inv=np.linalg.inv(S_tilde),
    )


@dataclass(frozen=True)
class ChannelMessage:
    """One transmission: step index, encryption flag, and payloads.

    With ``varsigma == 0`` the whole innovation travels in
    ``plaintext`` and ``ciphertext`` is None. With ``varsigma == 1``
    the masked rows travel in ``ciphertext`` and the clear rows (empty
    under full encryption) in ``plaintext``.
    """

    k: int
    varsigma: int
    ciphertext: np.ndarray | None
    plaintext: np.ndarray

    def to_json_dict(self) -> dict:
        out: dict = {"k": int(self.k), "varsigma": int(self.varsigma)}
        if self.plaintext.size:
            out["y"] = [float(v) for v in self.plaintext]
        if self.ciphertext is not None:
            out["xi"] = [float(v) for v in self.ciphertext]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json_dict(obj: dict) -> "ChannelMessage":
        if not isinstance(obj, dict):
            raise MalformedMessageError("message must be a JSON object")
        try:
            k = int(obj["k"])
            varsigma = int(obj["varsigma"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedMessageError(f"bad k/varsigma fields: {exc}") from exc
        if varsigma not in (0, 1):
            raise MalformedMessageError(f"varsigma must be 0 or 1, got {varsigma}")
        if k < 1:
            raise MalformedMessageError(f"step index must be >= 1, got {k}")
        try:
            y = np.asarray(obj.get("y", []), dtype=float)
            xi = np.asarray(obj["xi"], dtype=float) if "xi" in obj else None
        except (TypeError, ValueError) as exc:
            raise MalformedMessageError(f"bad payload arrays: {exc}") from exc
        if varsigma == 0 and xi is not None:
            raise MalformedMessageError("plain message carries ciphertext")
        if varsigma == 1 and xi is None:
            raise MalformedMessageError("encrypted message lacks ciphertext")
        return ChannelMessage(k=k, varsigma=varsigma, ciphertext=xi, plaintext=y)

    @staticmethod
    def from_json(text: str) -> "ChannelMessage":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedMessageError(f"invalid JSON: {exc}") from exc
        return ChannelMessage.from_json_dict(obj)


def _mask(key: CipherKey, k: int, size: int) -> np.ndarray:
    """Pseudorandom mask re-derivable by anyone holding the key."""
    seed = np.random.SeedSequence(entropy=(int(key.kappa), int(k)))
    return np.random.default_rng(seed).standard_normal(size)


def encrypt(
    eps: np.ndarray,
    part: EncryptionPartition,
    key: CipherKey,
    k: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Mask the hidden rows of an innovation; return (ciphertext, clear rows)."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (part.m,):
        raise MalformedMessageError(
            f"innovation shape {eps.shape}, partition expects ({part.m},)"
        )
    xi = part.S_bar @ eps + _mask(key, k, part.m_bar)
    return xi, part.S @ eps


def build_message(
    eps: np.ndarray,
    part: EncryptionPartition,
    key: CipherKey,
    k: int,
    varsigma: int,
) -> ChannelMessage:
    """Package the innovation for transmission under the given flag."""
    eps = np.asarray(eps, dtype=float)
    if varsigma == 0:
        return ChannelMessage(k=k, varsigma=0, ciphertext=None, plaintext=eps.copy())
    xi, plain = encrypt(eps, part, key, k)
    return ChannelMessage(k=k, varsigma=1, ciphertext=xi, plaintext=plain)


def _check_shapes(msg: ChannelMessage, part: EncryptionPartition) -> None:
    if msg.varsigma == 0:
        if msg.plaintext.shape != (part.m,):
            raise MalformedMessageError(
                f"plain payload has {msg.plaintext.shape[0]} entries, expected {part.m}"
            )
    else:
        if msg.ciphertext is None or msg.ciphertext.shape != (part.m_bar,):
            raise MalformedMessageError(
                f"ciphertext does not match the {part.m_bar} encrypted rows"
            )
        if msg.plaintext.shape != (part.m - part.m_bar,):
            raise MalformedMessageError(
                f"clear payload has {msg.plaintext.shape[0]} entries, "
                f"expected {part.m - part.m_bar}"
            )


def decrypt(
    msg: ChannelMessage,
    part: EncryptionPartition,
    key: CipherKey,
) -> np.ndarray:
    """Recover the full innovation from a message using the shared key."""
    _check_shapes(msg, part)
    if msg.varsigma == 0:
        return msg.plaintext.copy()
    unmasked = msg.ciphertext - _mask(key, msg.k, part.m_bar)
    return part.S_tilde_inv @ np.concatenate([unmasked, msg.plaintext])


def eavesdropper_view(
    msg: ChannelMessage,
    part: EncryptionPartition,
) -> tuple[int, np.ndarray | None]:
    """What an intercepting party without the key can use.

    Returns the flag and the informative payload: the full innovation
    when the step was unencrypted, the clear rows when it was partially
    encrypted, and None when everything was encrypted. The key never
    enters: ciphertext is statistically useless without it.
    """
    _check_shapes(msg, part)
    if msg.varsigma == 0:
        return 0, msg.plaintext.copy()
    if part.full_encryption:
        return 1, None
    return 1, msg.plaintext.copy()
