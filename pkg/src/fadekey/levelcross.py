"""Level-crossing key agreement: excursion parsing and the 5-step protocol.

Both parties remove the slow trend from their probe estimates, set
symmetric thresholds around the residual mean, and look for runs of
samples that stay strictly beyond a threshold.  Alice announces the centers
of her runs; Bob keeps the indices he can confirm on his own estimates,
answers with that sublist plus a MAC tag keyed by the first bits of his
key material, and Alice verifies the tag to authenticate the exchange.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from ._bits import BitString

__all__ = [
    "UNDEFINED_E",
    "ProtocolAbort",
    "Thresholds",
    "Excursion",
    "ProtocolMessage",
    "KeyAgreementResult",
    "LevelCrossConfig",
    "subtract_windowed_mean",
    "compute_thresholds",
    "quantize_sample",
    "find_excursions",
    "alice_select",
    "bob_check",
    "bob_reply",
    "alice_finalize",
    "mac_compute",
    "run_protocol",
]

# quantizer output for samples inside the guard band [q_minus, q_plus]
UNDEFINED_E = None

_MAC_BITS = 128


class ProtocolAbort(Exception):
    """Protocol-level rejection; .reason is one of the abort labels."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class Thresholds:
    q_plus: float
    q_minus: float
    alpha: float  # threshold offset in units of the residual's sigma

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.q_minus > self.q_plus:
            raise ValueError("q_minus must not exceed q_plus")
        if self.alpha > 0 and not self.q_minus < self.q_plus:
            raise ValueError("positive alpha requires separated thresholds")


@dataclass
class Excursion:
    start_index: int  # 0-based, inclusive
    end_index: int  # 0-based, inclusive
    sign: int  # +1 above q_plus, -1 below q_minus

    def __post_init__(self):
        if self.start_index > self.end_index:
            raise ValueError("start_index must not exceed end_index")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    def __len__(self):
        return self.end_index - self.start_index + 1


@dataclass
class ProtocolMessage:
    variant: str  # "index_list" (Alice's L) or "reply" (Bob's L-tilde + tag)
    indices: np.ndarray  # sorted unique sample indices
    mac_tag: BitString | None = None

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.variant not in ("index_list", "reply"):
            raise ValueError("variant must be 'index_list' or 'reply'")
        if self.indices.size:
            if self.indices.min() < 0:
                raise ValueError("indices must be nonnegative")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be sorted and unique")
        if self.variant == "reply" and self.mac_tag is None:
            raise ValueError("reply messages carry a MAC tag")


@dataclass
class KeyAgreementResult:
    key_alice: BitString
    key_bob: BitString
    authenticated: bool
    aborted_reason: str | None  # None, "fake_L", "mac_failure", "insufficient_bits"
    bits_per_second: float
    agreement: float = 0.0  # fraction of matching key bits (harness metric)


@dataclass
class LevelCrossConfig:
    alpha: float = 0.125  # threshold offset, units of sigma
    m: int = 4  # minimum excursion length on Alice's side
    window: int = 51  # moving-average window (odd)
    epsilon: float = 0.1  # step-3 margin over 1/2
    n_au: int = 128  # authentication bits consumed from the key material
    select_fraction: float = 1.0  # fraction of excursions Alice announces
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 1")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.m < 1 or self.n_au < 1:
            raise ValueError("m and n_au must be >= 1")
        if not 0 < self.select_fraction <= 1:
            raise ValueError("select_fraction must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


def subtract_windowed_mean(u, window_len: int) -> np.ndarray:
    """Remove a centered moving average, truncating the window at the edges.

    out[i] = u[i] - mean(u[max(0, i-h) : i+h+1]) with h = window_len // 2;
    the output has the same length as the input.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.size
    if n == 0:
        raise ValueError("input must be nonempty")
    if window_len < 1 or window_len % 2 == 0:
        raise ValueError("window_len must be odd and >= 1")
    if n < window_len:
        raise ValueError("input shorter than the window")
    h = window_len // 2
    c = np.concatenate([[0.0], np.cumsum(u)])
    hi = np.minimum(np.arange(n) + h + 1, n)
    lo = np.maximum(np.arange(n) - h, 0)
    means = (c[hi] - c[lo]) / (hi - lo)
    return u - means


def compute_thresholds(u, alpha) -> Thresholds:
    """Symmetric quantizer thresholds mean(u) +/- alpha * sigma(u).

    sigma is the population standard deviation (1/n normalization).
    """
    u = np.asarray(u, dtype=np.float64)
    if u.size < 2:
        raise ValueError("need at least two samples")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    mu = u.mean()
    sigma = u.std()
    return Thresholds(q_plus=mu + alpha * sigma, q_minus=mu - alpha * sigma, alpha=alpha)


def quantize_sample(x, t: Thresholds):
    """1 above q_plus, 0 below q_minus, UNDEFINED_E in the guard band.

    Inequalities are strict; boundary equality maps to UNDEFINED_E.
    """
    if x > t.q_plus:
        return 1
    if x < t.q_minus:
        return 0
    return UNDEFINED_E


def _excursion_state(x: np.ndarray, t: Thresholds) -> np.ndarray:
    """Per-sample classification: +1 above q_plus, -1 below q_minus, else 0."""
    return np.where(x > t.q_plus, 1, np.where(x < t.q_minus, -1, 0)).astype(np.int8)


def find_excursions(x, t: Thresholds, m: int) -> list[Excursion]:
    """All maximal runs of >= m samples strictly beyond a threshold."""
    x = np.asarray(x, dtype=np.float64)
    if m < 1:
        raise ValueError("m must be >= 1")
    state = _excursion_state(x, t)
    out = []
    boundaries = np.flatnonzero(np.diff(state)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [state.size]])
    for s, e in zip(starts, ends):
        if state[s] != 0 and e - s >= m:
            out.append(Excursion(int(s), int(e - 1), int(state[s])))
    return out


def _excursion_mask(x: np.ndarray, t: Thresholds, m: int) -> np.ndarray:
    """Boolean mask of samples covered by a qualifying excursion."""
    mask = np.zeros(x.size, dtype=bool)
    for exc in find_excursions(x, t, m):
        mask[exc.start_index : exc.end_index + 1] = True
    return mask


def alice_select(excursions, select_fraction, seed) -> ProtocolMessage:
    """Announce the centers of a random subset of Alice's excursions.

    The subset size is ceil(select_fraction * count), at least 1 when any
    excursion exists; each center is floor((start + end) / 2).  The index
    list is sorted ascending.
    """
    if not 0 < select_fraction <= 1:
        raise ValueError("select_fraction must lie in (0, 1]")
    if not excursions:
        return ProtocolMessage("index_list", np.empty(0, dtype=np.int64))
    k = max(1, math.ceil(select_fraction * len(excursions)))
    rng = np.random.default_rng([seed])
    chosen = rng.choice(len(excursions), size=k, replace=False)
    centers = sorted((excursions[i].start_index + excursions[i].end_index) // 2 for i in chosen)
    return ProtocolMessage("index_list", np.array(centers, dtype=np.int64))


def bob_check(L, y, t: Thresholds, m: int, epsilon) -> bool:
    """Step-3 plausibility test of Alice's index list against Bob's trace.

    True iff the fraction of indices lying inside one of Bob's excursions of
    length >= max(m-1, 1) is at least 1/2 + epsilon.  An empty list fails;
    an out-of-range index aborts as a faked list.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    y = np.asarray(y, dtype=np.float64)
    idx = np.asarray(L.indices if isinstance(L, ProtocolMessage) else L, dtype=np.int64)
    if idx.size == 0:
        return False
    if idx.min() < 0 or idx.max() >= y.size:
        raise ProtocolAbort("fake_L")
    mask = _excursion_mask(y, t, max(m - 1, 1))
    return float(mask[idx].mean()) >= 0.5 + epsilon


def bob_reply(L, y, t: Thresholds, m: int, n_au: int, mac=None):
    """Step 4: confirm indices, derive Bob's bits, and tag the sublist.

    L_tilde keeps the indices of L that fall inside Bob's excursions of
    length >= max(m-1, 1).  Bob's bit string is the quantizer output at
    those samples; its first n_au bits key the MAC over the serialized
    L_tilde and the remainder is his secret key.  Fewer than n_au + 1 bits
    abort with "insufficient_bits".
    """
    mac = mac_compute if mac is None else mac
    y = np.asarray(y, dtype=np.float64)
    idx = np.asarray(L.indices if isinstance(L, ProtocolMessage) else L, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= y.size):
        raise ProtocolAbort("fake_L")
    mask = _excursion_mask(y, t, max(m - 1, 1))
    l_tilde = idx[mask[idx]] if idx.size else idx
    bits = BitString((y[l_tilde] > t.q_plus).astype(np.uint8))
    if len(bits) <= n_au:
        raise ProtocolAbort("insufficient_bits")
    k_au = bits[:n_au]
    tag = mac(k_au, _serialize_indices(l_tilde))
    return ProtocolMessage("reply", l_tilde, tag), bits[n_au:]


def alice_finalize(reply: ProtocolMessage, x, t: Thresholds, n_au: int, mac=None) -> KeyAgreementResult:
    """Step 5: recompute the tag on Alice's side and authenticate.

    Alice quantizes her own samples at the confirmed indices, keys the MAC
    with the first n_au bits, and accepts iff the recomputed tag equals the
    received one.  An index whose sample falls in her guard band cannot
    come from her own announcement and aborts as a faked list.
    """
    mac = mac_compute if mac is None else mac
    x = np.asarray(x, dtype=np.float64)
    idx = reply.indices
    if idx.size and (idx.min() < 0 or idx.max() >= x.size):
        raise ProtocolAbort("fake_L")
    vals = [quantize_sample(v, t) for v in x[idx]]
    if any(v is UNDEFINED_E for v in vals):
        raise ProtocolAbort("fake_L")
    bits = BitString(np.array(vals, dtype=np.uint8))
    if len(bits) <= n_au:
        raise ProtocolAbort("insufficient_bits")
    tag = mac(bits[:n_au], _serialize_indices(idx))
    if tag != reply.mac_tag:
        return KeyAgreementResult(
            key_alice=BitString.zeros(0),
            key_bob=BitString.zeros(0),
            authenticated=False,
            aborted_reason="mac_failure",
            bits_per_second=0.0,
        )
    return KeyAgreementResult(
        key_alice=bits[n_au:],
        key_bob=BitString.zeros(0),
        authenticated=True,
        aborted_reason=None,
        bits_per_second=0.0,
    )


def _serialize_indices(idx: np.ndarray) -> bytes:
    """Canonical MAC input: indices as 64-bit big-endian integers."""
    return np.asarray(idx, dtype=">u8").tobytes()


def mac_compute(key: BitString, message: bytes) -> BitString:
    """CBC-MAC over 128-bit blocks with an AES core.

    The key bits (at most 128) are zero-padded into the cipher key; the
    message is length-prefixed and zero-padded to a whole number of blocks.
    Returns the final chaining block as a 128-bit string.  Determinism and
    key sensitivity are the design targets, not proven security.
    """
    if not 0 < len(key) <= _MAC_BITS:
        raise ValueError(f"key must be 1..{_MAC_BITS} bits")
    key_bytes = key.to_bytes().ljust(16, b"\x00")
    msg = len(message).to_bytes(8, "big") + bytes(message)
    if len(msg) % 16:
        msg = msg + b"\x00" * (16 - len(msg) % 16)
    enc = Cipher(algorithms.AES(key_bytes), modes.CBC(b"\x00" * 16)).encryptor()
    tag = (enc.update(msg) + enc.finalize())[-16:]
    return BitString(np.unpackbits(np.frombuffer(tag, dtype=np.uint8)))


def run_protocol(probe_record, config: LevelCrossConfig) -> KeyAgreementResult:
    """Full level-crossing key agreement over one probe campaign.

    Each side filters its own estimates and sets its own thresholds; the
    five protocol steps then run in sequence.  Aborts are reported in the
    result rather than raised.  bits_per_second divides the final key
    length by the probe-campaign time span.
    """
    x = np.asarray(probe_record.x_hat, dtype=np.float64)
    y = np.asarray(probe_record.y_hat, dtype=np.float64)
    span = float(probe_record.x_times[-1] - probe_record.x_times[0])
    u_x = subtract_windowed_mean(x, config.window)
    u_y = subtract_windowed_mean(y, config.window)
    t_x = compute_thresholds(u_x, config.alpha)
    t_y = compute_thresholds(u_y, config.alpha)

    excursions = find_excursions(u_x, t_x, config.m)
    msg_l = alice_select(excursions, config.select_fraction, config.seed)

    def _aborted(reason):
        return KeyAgreementResult(
            key_alice=BitString.zeros(0),
            key_bob=BitString.zeros(0),
            authenticated=False,
            aborted_reason=reason,
            bits_per_second=0.0,
        )

    try:
        if not bob_check(msg_l, u_y, t_y, config.m, config.epsilon):
            return _aborted("fake_L")
        reply, key_bob = bob_reply(msg_l, u_y, t_y, config.m, config.n_au)
        if not np.isin(reply.indices, msg_l.indices).all():
            return _aborted("fake_L")
        result = alice_finalize(reply, u_x, t_x, config.n_au)
    except ProtocolAbort as abort:
        return _aborted(abort.reason)
    if not result.authenticated:
        return result
    key_alice = result.key_alice
    agreement = key_alice.agreement(key_bob) if len(key_alice) else 0.0
    return KeyAgreementResult(
        key_alice=key_alice,
        key_bob=key_bob,
        authenticated=True,
        aborted_reason=None,
        bits_per_second=len(key_alice) / span if span > 0 else 0.0,
        agreement=agreement,
    )
