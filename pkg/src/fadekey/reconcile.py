"""Information reconciliation and key distillation.

Slepian-Wolf style reconciliation over a public channel: Alice reveals the
syndrome of her bit string under a (3,6)-regular LDPC code, Bob runs
belief-propagation decoding of that coset using his channel likelihoods,
and a Toeplitz universal hash provides privacy amplification.  Codes are
built by a seeded progressive-edge-growth construction and can be exported
in the plain-text alist interchange format.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._bits import BitString

LLR_CLAMP = _kernels.CLAMP

CHECK_DEGREE = 6
VAR_DEGREE = 3


class ConstructionError(ValueError):
    """Raised when no valid (3,6)-regular graph can be grown for this n."""


@dataclass
class LdpcCode:
    """A (3,6)-regular parity-check structure.

    ``chk_nbrs`` holds, for every check node, its six variable neighbours in
    ascending order.  The row-major ravel of this table is the canonical
    edge ordering used by the decoder kernels (edges grouped by check,
    ascending variable index within a check).
    """

    n: int
    chk_nbrs: np.ndarray  # shape (n/2, CHECK_DEGREE), int64

    def __post_init__(self):
        self.chk_nbrs = np.ascontiguousarray(self.chk_nbrs, dtype=np.int64)
        if self.chk_nbrs.shape != (self.n // 2, CHECK_DEGREE):
            raise ValueError("parity table shape does not match n")

    @property
    def n_checks(self) -> int:
        return self.chk_nbrs.shape[0]

    @property
    def n_edges(self) -> int:
        return self.chk_nbrs.size

    @property
    def edge_var(self) -> np.ndarray:
        """Variable index of every edge in canonical (check, variable) order."""
        return self.chk_nbrs.ravel()

    def var_nbrs(self) -> list:
        """Per-variable check lists (ascending), derived from the check table."""
        out = [[] for _ in range(self.n)]
        for c in range(self.n_checks):
            for v in self.chk_nbrs[c]:
                out[int(v)].append(c)
        return [sorted(lst) for lst in out]


@dataclass
class DecodeResult:
    success: bool
    bits: BitString  # hard decisions — the decoded string on success
    iterations: int


@dataclass
class SecretKeyOutcome:
    """Per-run result of one quantize/reconcile/distill pipeline run."""

    key_bits: BitString | None  # Alice's secret string (None when nothing distilled)
    revealed_bits: int  # public transcript size in bits (syndrome + announced bits)
    decode_success: bool
    iterations: int
    bit_agreement: float  # fraction of Bob's decoded bits matching Alice's
    net_bits: int  # |key material| - |syndrome| - amplification margin; 0 on failure
    net_rate_bits_per_sample: float


def ldpc_generate(n: int, seed: int) -> LdpcCode:
    """Grow a (3,6)-regular code of length ``n`` by progressive edge growth.

    Each new edge attaches its variable to the most distant (ideally
    unreachable) non-full check in the bipartite graph grown so far, which
    suppresses short cycles; ties fall to the lowest-degree checks and are
    broken by the seeded generator.  Deterministic for a fixed seed.
    """
    if n % 4 != 0 or n < 8:
        raise ConstructionError(f"n must be a multiple of 4 and >= 8, got {n}")
    m = n // 2
    rng = np.random.default_rng(seed)

    chk_nbrs = np.full((m, CHECK_DEGREE), -1, dtype=np.int64)
    var_nbrs = np.full((n, VAR_DEGREE), -1, dtype=np.int64)
    chk_deg = np.zeros(m, dtype=np.int64)

    for v in range(n):
        for k in range(VAR_DEGREE):
            is_nbr = np.zeros(m, dtype=bool)
            cur = var_nbrs[v, :k]
            is_nbr[cur] = True
            cand = np.flatnonzero((chk_deg < CHECK_DEGREE) & ~is_nbr)
            if cand.size == 0:
                raise ConstructionError(f"no attachable check for variable {v}")
            if k > 0:
                dist = _bfs_check_distances(v, var_nbrs, chk_nbrs, m, n)
                d = dist[cand]
                unreachable = cand[d < 0]
                pool = unreachable if unreachable.size else cand[d == d.max()]
            else:
                pool = cand
            degs = chk_deg[pool]
            pool = pool[degs == degs.min()]
            c = int(pool[rng.integers(pool.size)])

            var_nbrs[v, k] = c
            chk_nbrs[c, chk_deg[c]] = v
            chk_deg[c] += 1

    assert (chk_deg == CHECK_DEGREE).all()
    return LdpcCode(n=n, chk_nbrs=np.sort(chk_nbrs, axis=1))


def _bfs_check_distances(v, var_nbrs, chk_nbrs, m, n):
    """Distances (in edges) from variable ``v`` to every check; -1 = unreachable."""
    dist = np.full(m, -1, dtype=np.int64)
    var_seen = np.zeros(n, dtype=bool)
    var_seen[v] = True
    frontier = np.array([v], dtype=np.int64)
    d = 1
    while frontier.size:
        cs = var_nbrs[frontier].ravel()
        cs = np.unique(cs[cs >= 0])
        cs = cs[dist[cs] < 0]
        if cs.size == 0:
            break
        dist[cs] = d
        vs = chk_nbrs[cs].ravel()
        vs = np.unique(vs[vs >= 0])
        vs = vs[~var_seen[vs]]
        var_seen[vs] = True
        frontier = vs
        d += 2
    return dist


def syndrome(code: LdpcCode, x: BitString) -> BitString:
    """s = H·x over GF(2), length n/2."""
    if len(x) != code.n:
        raise ValueError(f"bit string has {len(x)} bits, code expects {code.n}")
    arr = x.to_array()
    par = np.bitwise_xor.reduce(arr[code.chk_nbrs], axis=1)
    return BitString(par)


def decode_syndrome(code: LdpcCode, s: BitString, llr, max_iter: int = 50) -> DecodeResult:
    """Belief-propagation decode of the coset with syndrome ``s``.

    Standard flooding sum-product, with every check node's outgoing
    messages sign-flipped when its syndrome bit is 1.  Success means the
    hard decision satisfies H·x̂ == s within ``max_iter`` iterations; on
    failure the result carries the iteration count and the final hard
    decision.  LLR sign convention: positive means bit 0.
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape != (code.n,):
        raise ValueError(f"llr length {llr.shape} does not match code length {code.n}")
    if len(s) != code.n_checks:
        raise ValueError(f"syndrome has {len(s)} bits, code expects {code.n_checks}")
    llr = np.clip(np.nan_to_num(llr, nan=0.0, posinf=LLR_CLAMP, neginf=-LLR_CLAMP),
                  -LLR_CLAMP, LLR_CLAMP)
    ok, iters, hard = _kernels.bp_syndrome_decode(
        code.edge_var, CHECK_DEGREE, code.n, s.to_array(), llr, max_iter
    )
    return DecodeResult(success=ok, bits=BitString(hard), iterations=iters)


def privacy_amplify(bits: BitString, out_len: int, seed: int) -> BitString:
    """Toeplitz universal hash of ``bits`` down to ``out_len`` bits.

    The Toeplitz matrix is defined by a seed-derived random ±diagonal
    vector t of length out_len + len(bits) - 1, T[i, j] = t[i - j + L - 1];
    the product reduces to one convolution mod 2.
    """
    L = len(bits)
    if out_len > L:
        raise ValueError(f"cannot stretch {L} bits to {out_len}")
    if out_len < 0:
        raise ValueError("out_len must be nonnegative")
    if out_len == 0:
        return BitString.zeros(0)
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, size=out_len + L - 1, dtype=np.int64)
    conv = np.convolve(t, bits.to_array().astype(np.int64))
    return BitString(conv[L - 1 : L - 1 + out_len] & 1)


def to_alist(code: LdpcCode) -> str:
    """Serialize in the plain-text alist sparse-matrix interchange format."""
    vn = code.var_nbrs()
    lines = [
        f"{code.n} {code.n_checks}",
        f"{VAR_DEGREE} {CHECK_DEGREE}",
        " ".join(["3"] * code.n),
        " ".join(["6"] * code.n_checks),
    ]
    for v in range(code.n):
        lines.append(" ".join(str(c + 1) for c in vn[v]))
    for c in range(code.n_checks):
        lines.append(" ".join(str(int(v) + 1) for v in code.chk_nbrs[c]))
    return "\n".join(lines) + "\n"


def from_alist(text: str) -> LdpcCode:
    """Parse an alist produced by :func:`to_alist` (regular (3,6) only)."""
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    n, m = int(rows[0][0]), int(rows[0][1])
    max_vd, max_cd = int(rows[1][0]), int(rows[1][1])
    if (max_vd, max_cd) != (VAR_DEGREE, CHECK_DEGREE):
        raise ValueError("only (3,6)-regular alists are supported")
    chk_rows = rows[4 + n : 4 + n + m]
    chk_nbrs = np.array([[int(tok) - 1 for tok in r] for r in chk_rows], dtype=np.int64)
    code = LdpcCode(n=n, chk_nbrs=np.sort(chk_nbrs, axis=1))
    # cross-check the variable-side lists against the check-side table
    vn = [sorted(int(tok) - 1 for tok in r) for r in rows[4 : 4 + n]]
    if vn != code.var_nbrs():
        raise ValueError("alist variable and check adjacency lists disagree")
    return code
