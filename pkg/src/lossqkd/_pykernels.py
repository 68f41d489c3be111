"""NumPy implementations of the hot loops, used when the extension is absent."""
import numpy as np

PHI_MIN = 1e-12
PHI_MAX = 50.0


def _phi(x):
    x = np.clip(x, PHI_MIN, PHI_MAX)
    return -np.log(np.tanh(0.5 * x))


def bp_decode(check_ptr, edge_var, var_ptr, var_edges, syndrome, llr, max_iter):
    """Syndrome-constrained sum-product decoding (log-domain phi rule).

    Returns ``(hard_decision, converged, iterations)``.
    """
    n_vars = var_ptr.size - 1
    starts = check_ptr[:-1]
    degrees = np.diff(check_ptr)
    edge_check = np.repeat(np.arange(degrees.size), degrees)
    syn = syndrome.astype(np.int64)

    def satisfied(hard):
        return np.array_equal(np.add.reduceat(hard[edge_var].astype(np.int64), starts) & 1, syn)

    hard = (llr < 0).astype(np.uint8)
    if satisfied(hard):
        return hard, True, 0

    v2c = llr[edge_var].astype(np.float64)
    for it in range(1, max_iter + 1):
        neg = v2c < 0
        ph = _phi(np.abs(v2c))
        sumphi = np.add.reduceat(ph, starts)
        sgn = (np.add.reduceat(neg.astype(np.int64), starts) + syn) & 1
        mag = _phi(sumphi[edge_check] - ph)
        flip = sgn[edge_check].astype(bool) ^ neg
        c2v = np.where(flip, -mag, mag)
        tot = llr + np.bincount(edge_var, weights=c2v, minlength=n_vars)
        hard = (tot < 0).astype(np.uint8)
        v2c = tot[edge_var] - c2v
        if satisfied(hard):
            return hard, True, it
    return hard, False, max_iter


def toeplitz_mul(c, x, n):
    """GF(2) product ``y[i] = sum_j c[n-1-i+j] * x[j] mod 2``."""
    c = np.asarray(c, dtype=np.uint8)
    x = np.asarray(x, dtype=np.uint8)
    if c.size != x.size + n - 1:
        raise ValueError("diagonal vector must have m + n - 1 entries")
    corr = np.correlate(c.astype(np.int64), x.astype(np.int64), mode="valid")
    return (corr[::-1] & 1).astype(np.uint8)


def longest_ones_runs(bits, block_len):
    n_blocks = bits.size // block_len
    if n_blocks == 0:
        return np.zeros(0, dtype=np.int64)
    blocks = np.asarray(bits[: n_blocks * block_len], dtype=np.int8).reshape(n_blocks, block_len)
    padded = np.zeros((n_blocks, block_len + 2), dtype=np.int8)
    padded[:, 1:-1] = blocks
    d = np.diff(padded, axis=1)
    rows, s_cols = np.nonzero(d == 1)
    _, e_cols = np.nonzero(d == -1)
    out = np.zeros(n_blocks, dtype=np.int64)
    np.maximum.at(out, rows, e_cols - s_cols)
    return out
