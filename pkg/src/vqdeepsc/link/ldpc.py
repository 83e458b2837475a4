"""LDPC codes: alist I/O, code construction, systematic encoding and
sum-product belief-propagation decoding.

LLR convention throughout: positive means bit 0 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

LLR_CLIP = 30.0

_PHI_MIN = 1e-12


class CodeConstructionError(ValueError):
    """Raised when a parity-check matrix cannot yield a usable encoder."""


# ---------------------------------------------------------------------------
# alist format
# ---------------------------------------------------------------------------


def read_alist(path) -> sp.csr_matrix:
    """Read a parity-check matrix from MacKay's alist text format."""
    tokens = Path(path).read_text().split()
    vals = [int(t) for t in tokens]
    n, m = vals[0], vals[1]
    max_col, max_row = vals[2], vals[3]
    pos = 4
    col_deg = vals[pos : pos + n]
    pos += n
    pos += m  # row degrees are implied by the column lists
    rows, cols = [], []
    for j in range(n):
        entries = vals[pos : pos + max_col]
        pos += max_col
        for r in entries[: col_deg[j]]:
            if r == 0:
                raise ValueError(f"alist column {j} lists fewer rows than its degree")
            rows.append(r - 1)
            cols.append(j)
    data = np.ones(len(rows), dtype=np.uint8)
    H = sp.csr_matrix((data, (rows, cols)), shape=(m, n), dtype=np.uint8)
    if H.max() > 1:
        raise ValueError("alist file contains duplicated edges")
    return H


def write_alist(path, H) -> None:
    H = sp.csc_matrix(H, dtype=np.uint8)
    m, n = H.shape
    Hr = H.tocsr()
    col_lists = [np.sort(H.indices[H.indptr[j] : H.indptr[j + 1]]) + 1 for j in range(n)]
    row_lists = [np.sort(Hr.indices[Hr.indptr[i] : Hr.indptr[i + 1]]) + 1 for i in range(m)]
    max_col = max(len(c) for c in col_lists)
    max_row = max(len(r) for r in row_lists)

    def pad(lst, width):
        return " ".join(str(v) for v in list(lst) + [0] * (width - len(lst)))

    lines = [f"{n} {m}", f"{max_col} {max_row}"]
    lines.append(" ".join(str(len(c)) for c in col_lists))
    lines.append(" ".join(str(len(r)) for r in row_lists))
    lines += [pad(c, max_col) for c in col_lists]
    lines += [pad(r, max_row) for r in row_lists]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def peg_regular(n: int, dv: int, dc: int, rng: np.random.Generator) -> sp.csr_matrix:
    """Progressive edge growth for a (dv, dc)-regular parity-check matrix.

    Each new edge of variable node ``j`` goes to a check node that is as far
    as possible from ``j`` in the current Tanner graph, preferring the
    lowest current check degree and breaking remaining ties at random.
    """
    if (n * dv) % dc:
        raise CodeConstructionError("n*dv must be divisible by dc for a regular code")
    m = n * dv // dc
    check_deg = np.zeros(m, dtype=int)
    var_adj: list[list[int]] = [[] for _ in range(n)]
    chk_adj: list[list[int]] = [[] for _ in range(m)]

    for j in range(n):
        for k in range(dv):
            open_checks = check_deg < dc
            if k > 0:
                # breadth-first expansion from j until no new checks appear
                reached = np.zeros(m, dtype=bool)
                frontier = list(var_adj[j])
                reached[frontier] = True
                seen_vars = {j}
                candidates = open_checks & ~reached
                while True:
                    nxt_vars = []
                    for c in frontier:
                        for v in chk_adj[c]:
                            if v not in seen_vars:
                                seen_vars.add(v)
                                nxt_vars.append(v)
                    new_checks = []
                    for v in nxt_vars:
                        for c in var_adj[v]:
                            if not reached[c]:
                                reached[c] = True
                                new_checks.append(c)
                    cand_next = open_checks & ~reached
                    if not new_checks or not cand_next.any():
                        # either the tree stopped growing or the next layer
                        # would swallow every admissible check
                        break
                    candidates = cand_next
                    frontier = new_checks
                if not candidates.any():
                    candidates = open_checks.copy()
                    candidates[var_adj[j]] = False
            else:
                candidates = open_checks
            idx = np.flatnonzero(candidates)
            if idx.size == 0:
                raise CodeConstructionError(f"PEG ran out of check nodes at variable {j}")
            lowest = check_deg[idx].min()
            idx = idx[check_deg[idx] == lowest]
            c = int(rng.choice(idx))
            var_adj[j].append(c)
            chk_adj[c].append(j)
            check_deg[c] += 1

    rows = [c for j in range(n) for c in var_adj[j]]
    cols = [j for j in range(n) for _ in var_adj[j]]
    return sp.csr_matrix(
        (np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(m, n), dtype=np.uint8
    )


def ira_staircase(
    n: int, k: int, rng: np.random.Generator, column_weight: int = 3
) -> sp.csr_matrix:
    """DVB-S2-style irregular repeat-accumulate code ``H = [H_info | S]``.

    ``S`` is the dual-diagonal accumulator, which permits linear-time
    encoding without Gaussian elimination. Information columns have weight
    ``column_weight`` with check degrees balanced as evenly as possible.
    """
    m = n - k
    if m <= 0 or k <= 0:
        raise CodeConstructionError("need 0 < k < n")
    if column_weight > m:
        raise CodeConstructionError("column weight exceeds number of checks")
    # balanced sockets: each check appears ~k*w/m times; duplicate edges
    # inside a column are removed by swaps, which keep the degrees intact
    flat = np.resize(np.arange(m), k * column_weight)
    rng.shuffle(flat)
    sockets = flat.reshape(k, column_weight)
    for _ in range(1000):
        srt = np.sort(sockets, axis=1)
        bad = np.flatnonzero((np.diff(srt, axis=1) == 0).any(axis=1))
        if bad.size == 0:
            break
        for j in bad:
            other = int(rng.integers(flat.size))
            a = j * column_weight
            flat[a], flat[other] = flat[other], flat[a]
    else:
        raise CodeConstructionError("could not remove duplicate edges")
    info_rows = sockets.ravel()
    info_cols = np.repeat(np.arange(k), column_weight)
    stair_rows = np.r_[np.arange(m), np.arange(1, m)]
    stair_cols = np.r_[k + np.arange(m), k + np.arange(m - 1)]
    rows = np.r_[info_rows, stair_rows]
    cols = np.r_[info_cols, stair_cols]
    return sp.csr_matrix(
        (np.ones(rows.size, dtype=np.uint8), (rows, cols)), shape=(m, n), dtype=np.uint8
    )


def gf2_rref(A: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2). Returns (R, pivot_columns)."""
    R = (np.asarray(A) % 2).astype(bool).copy()
    rows, cols = R.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.flatnonzero(R[r:, c])
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        others = np.flatnonzero(R[:, c])
        others = others[others != r]
        R[others] ^= R[r]
        pivots.append(c)
        r += 1
    return R[:r].astype(np.uint8), pivots


def gf2_rank(A: np.ndarray) -> int:
    return len(gf2_rref(A)[1])


# ---------------------------------------------------------------------------
# code object
# ---------------------------------------------------------------------------


@dataclass
class LDPCCode:
    """Binary LDPC code defined by a sparse parity-check matrix.

    Message bits sit at ``info_positions`` of the codeword, so the decoder
    reads them back directly after a hard decision.
    """

    H: sp.csr_matrix
    max_bp_iterations: int = 50
    name: str = ""
    info_positions: np.ndarray = field(init=False, repr=False)
    _mode: str = field(init=False, repr=False)
    _parity_positions: np.ndarray = field(init=False, repr=False)
    _P: np.ndarray | None = field(init=False, repr=False, default=None)
    _H_info: sp.csr_matrix | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.H = sp.csr_matrix(self.H, dtype=np.uint8)
        self.H.sum_duplicates()
        if self.H.nnz and self.H.data.max() > 1:
            raise CodeConstructionError("parity-check matrix has repeated entries")
        m, n = self.H.shape
        if self._is_staircase():
            self._mode = "staircase"
            k = n - m
            self.info_positions = np.arange(k)
            self._parity_positions = np.arange(k, n)
            self._H_info = self.H[:, :k].tocsr()
        else:
            self._mode = "dense"
            R, pivots = gf2_rref(self.H.toarray())
            if len(pivots) == 0:
                raise CodeConstructionError("parity-check matrix is all zero")
            piv = np.asarray(pivots)
            free = np.setdiff1d(np.arange(n), piv)
            if free.size == 0:
                raise CodeConstructionError("code has no information bits")
            self.info_positions = free
            self._parity_positions = piv
            # parity bit p_i = R[i, free] . m  (mod 2)
            self._P = R[:, free].astype(np.uint8)
        self._prepare_decoder()

    def _is_staircase(self) -> bool:
        m, n = self.H.shape
        if n <= m:
            return False
        tail = self.H[:, n - m :]
        expected = sp.eye(m, dtype=np.uint8, format="csr") + sp.eye(m, k=-1, dtype=np.uint8, format="csr")
        return (tail != expected).nnz == 0

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def k(self) -> int:
        return self.info_positions.size

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def from_alist(cls, path, max_bp_iterations: int = 50, name: str | None = None) -> "LDPCCode":
        return cls(read_alist(path), max_bp_iterations=max_bp_iterations, name=name or Path(path).stem)

    # -- encoding ----------------------------------------------------------

    def encode(self, message: np.ndarray) -> np.ndarray:
        """Encode one message (shape ``(k,)``) or a batch (shape ``(B, k)``)."""
        msg = np.asarray(message, dtype=np.uint8)
        single = msg.ndim == 1
        msg = np.atleast_2d(msg)
        if msg.shape[1] != self.k:
            raise ValueError(f"message length {msg.shape[1]} != k={self.k}")
        if msg.size and msg.max() > 1:
            raise ValueError("message must be binary")
        B = msg.shape[0]
        cw = np.zeros((B, self.n), dtype=np.uint8)
        cw[:, self.info_positions] = msg
        if self._mode == "staircase":
            s = (self._H_info @ msg.T.astype(np.int64)).T % 2
            cw[:, self._parity_positions] = np.cumsum(s, axis=1) % 2
        else:
            cw[:, self._parity_positions] = (msg.astype(np.int64) @ self._P.T.astype(np.int64)) % 2
        return cw[0] if single else cw

    def syndrome(self, words: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(np.asarray(words, dtype=np.int64))
        s = (self.H @ w.T).T % 2
        return s[0] if np.asarray(words).ndim == 1 else s

    # -- decoding ----------------------------------------------------------

    def _prepare_decoder(self):
        coo = self.H.tocoo()
        order = np.lexsort((coo.col, coo.row))
        self._edge_check = coo.row[order].astype(np.int64)
        self._edge_var = coo.col[order].astype(np.int64)
        E = self._edge_check.size
        ones = np.ones(E)
        # edge -> node incidence for segment sums
        self._E2V = sp.csr_matrix((ones, (np.arange(E), self._edge_var)), shape=(E, self.n))
        self._E2C = sp.csr_matrix((ones, (np.arange(E), self._edge_check)), shape=(E, self.m))
        self._Hf = self.H.astype(np.float64).T.tocsr()

    def decode(self, llrs: np.ndarray, max_iterations: int | None = None):
        """Sum-product decoding.

        Parameters
        ----------
        llrs : array of shape (n,) or (B, n)
            Channel LLRs, positive favouring 0. Clipped to +/-30.
        max_iterations : int, optional
            Defaults to ``max_bp_iterations`` of the code.

        Returns
        -------
        message : uint8 array, shape (k,) or (B, k)
        converged : bool or bool array
            True when the hard decision satisfies every parity check and no
            bit is left undecided (posterior LLR exactly zero).
        """
        L = np.asarray(llrs, dtype=np.float64)
        single = L.ndim == 1
        L = np.clip(np.atleast_2d(L), -LLR_CLIP, LLR_CLIP)
        if L.shape[1] != self.n:
            raise ValueError(f"expected {self.n} LLRs per block, got {L.shape[1]}")
        iters = self.max_bp_iterations if max_iterations is None else max_iterations
        B = L.shape[0]
        hard_out = np.zeros((B, self.n), dtype=np.uint8)
        converged = np.zeros(B, dtype=bool)

        active = np.arange(B)
        La = L
        cv = np.zeros((B, self._edge_var.size))
        post = La
        for it in range(iters + 1):
            hard = (post < 0).astype(np.uint8)
            ok = ~np.any((self._syndrome_f(hard)) != 0, axis=1) & ~np.any(post == 0, axis=1)
            hard_out[active] = hard
            if ok.any():
                converged[active[ok]] = True
                keep = ~ok
                active, La, cv = active[keep], La[keep], cv[keep]
            if active.size == 0 or it == iters:
                break
            cv = self._check_update(La, cv)
            post = La + (self._E2V.T @ cv.T).T
        msg = hard_out[:, self.info_positions]
        if single:
            return msg[0], bool(converged[0])
        return msg, converged

    def _syndrome_f(self, hard: np.ndarray) -> np.ndarray:
        return np.rint(hard.astype(np.float64) @ self._Hf) % 2

    def _check_update(self, L: np.ndarray, cv: np.ndarray) -> np.ndarray:
        var_tot = L + (self._E2V.T @ cv.T).T
        vc = var_tot[:, self._edge_var] - cv
        mag = np.abs(vc)
        is_zero = mag == 0
        neg = (vc < 0).astype(np.float64)
        ph = _phi(np.clip(mag, _PHI_MIN, LLR_CLIP))
        ph_sum = (self._E2C.T @ ph.T).T
        neg_sum = (self._E2C.T @ neg.T).T
        zero_sum = (self._E2C.T @ is_zero.astype(np.float64).T).T
        c = self._edge_check
        ext = np.clip(ph_sum[:, c] - ph, _PHI_MIN, None)
        out = _phi(ext)
        parity = np.rint(neg_sum[:, c] - neg) % 2
        out = np.where(parity == 1, -out, out)
        # any other uninformative input at the check silences the message
        out[np.rint(zero_sum[:, c] - is_zero) > 0] = 0.0
        return np.clip(out, -LLR_CLIP, LLR_CLIP)


def _phi(x: np.ndarray) -> np.ndarray:
    # phi(x) = -log(tanh(x/2)), its own inverse on (0, inf)
    return -np.log(np.tanh(x / 2.0))


# ---------------------------------------------------------------------------
# shipped desk codes
# ---------------------------------------------------------------------------

_CODE_DIR = Path(__file__).resolve().parent.parent / "codes"

SHIPPED_CODES = {
    "ldpc_n20_r12": "peg_n20_r12.alist",
    "ldpc_n648_r12": "peg_n648_r12.alist",
}


def load_code(name_or_path: str, max_bp_iterations: int = 50) -> LDPCCode:
    """Load a shipped desk code by name, or any alist file by path.

    The name ``ira_n64800_r12`` builds the long staircase code on the fly
    from a fixed seed.
    """
    if name_or_path in SHIPPED_CODES:
        return LDPCCode.from_alist(
            _CODE_DIR / SHIPPED_CODES[name_or_path], max_bp_iterations, name=name_or_path
        )
    if name_or_path == "ira_n64800_r12":
        H = ira_staircase(64800, 32400, np.random.default_rng(64800))
        return LDPCCode(H, max_bp_iterations=max_bp_iterations, name=name_or_path)
    return LDPCCode.from_alist(name_or_path, max_bp_iterations)
