"""O(N^2) chain-weight dynamic programs.

The recursion

    V_j = rho(t_j - s, x_j - x0) + beta * sum_{i: t_i < t_j} z_i V_i rho(t_j - t_i, x_j - x_i)

is accumulated entirely in log scale with a streaming log-sum-exp, so
heavy-tailed jump sizes and near-singular kernel legs cannot overflow or
underflow.  Kernels are JIT-compiled with numba when available (pure
NumPy fallbacks keep results identical, just slower); batched variants
parallelize over replicas with one output slot per replica, which makes
every reduction independent of thread count.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range

LOG_2PI = math.log(2.0 * math.pi)
NEG_INF = -np.inf


def set_threads(n: int) -> None:
    """Cap the numba thread pool; outputs do not depend on the setting."""
    if HAVE_NUMBA:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True)
def _forward_logv_fill(times, xs, logz, log_beta, s, x0, out):
    n = times.shape[0]
    d = xs.shape[1]
    for j in range(n):
        tj = times[j]
        dt0 = tj - s
        r2 = 0.0
        for c in range(d):
            dx = xs[j, c] - x0[c]
            r2 += dx * dx
        run_max = -0.5 * d * (LOG_2PI + math.log(dt0)) - r2 / (2.0 * dt0)
        run_sum = 1.0
        for i in range(j):
            dt = tj - times[i]
            r2 = 0.0
            for c in range(d):
                dx = xs[j, c] - xs[i, c]
                r2 += dx * dx
            lw = log_beta + logz[i] + out[i] - 0.5 * d * (LOG_2PI + math.log(dt)) - r2 / (2.0 * dt)
            if lw == NEG_INF:
                continue
            if lw <= run_max:
                run_sum += math.exp(lw - run_max)
            else:
                run_sum = run_sum * math.exp(run_max - lw) + 1.0
                run_max = lw
        out[j] = run_max + math.log(run_sum)


def forward_logv(times, xs, logz, beta: float, s: float, x0) -> np.ndarray:
    """Per-atom log V_j for atoms strictly later than s (caller pre-filters)."""
    times = np.ascontiguousarray(times, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    logz = np.ascontiguousarray(logz, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    out = np.empty(len(times))
    log_beta = math.log(beta) if beta > 0.0 else NEG_INF
    if len(times):
        _forward_logv_fill(times, xs, logz, log_beta, s, x0, out)
    return out


@njit(cache=True)
def _logsumexp_pair(la, lb):
    if la == NEG_INF:
        return lb
    if lb == NEG_INF:
        return la
    if la >= lb:
        return la + math.log1p(math.exp(lb - la))
    return lb + math.log1p(math.exp(la - lb))


@njit(cache=True)
def _free_end_logw(times, logz, logv, log_beta):
    """log(1 + beta * sum_j z_j V_j): atomic free-end sum before prefactors."""
    n = times.shape[0]
    run_max = 0.0
    run_sum = 1.0
    for j in range(n):
        lw = log_beta + logz[j] + logv[j]
        if lw == NEG_INF:
            continue
        if lw <= run_max:
            run_sum += math.exp(lw - run_max)
        else:
            run_sum = run_sum * math.exp(run_max - lw) + 1.0
            run_max = lw
    return run_max + math.log(run_sum)


@njit(cache=True)
def _point_logw(times, xs, logz, logv, log_beta, s, x0, t, y):
    """log(rho(t-s, y-x0) + beta * sum_j z_j V_j rho(t - t_j, y - x_j))."""
    n = times.shape[0]
    d = xs.shape[1]
    dt0 = t - s
    r2 = 0.0
    for c in range(d):
        dx = y[c] - x0[c]
        r2 += dx * dx
    run_max = -0.5 * d * (LOG_2PI + math.log(dt0)) - r2 / (2.0 * dt0)
    run_sum = 1.0
    for j in range(n):
        dt = t - times[j]
        if dt <= 0.0:  # boundary atom: not part of the chaos sum over (s, t)
            continue
        r2 = 0.0
        for c in range(d):
            dx = y[c] - xs[j, c]
            r2 += dx * dx
        lw = log_beta + logz[j] + logv[j] - 0.5 * d * (LOG_2PI + math.log(dt)) - r2 / (2.0 * dt)
        if lw == NEG_INF:
            continue
        if lw <= run_max:
            run_sum += math.exp(lw - run_max)
        else:
            run_sum = run_sum * math.exp(run_max - lw) + 1.0
            run_max = lw
    return run_max + math.log(run_sum)


def free_end_logw(times, logz, logv, beta: float) -> float:
    log_beta = math.log(beta) if beta > 0.0 else NEG_INF
    return float(
        _free_end_logw(
            np.ascontiguousarray(times, dtype=np.float64),
            np.ascontiguousarray(logz, dtype=np.float64),
            np.ascontiguousarray(logv, dtype=np.float64),
            log_beta,
        )
    )


def point_logw(times, xs, logz, logv, beta: float, s: float, x0, t: float, y) -> float:
    log_beta = math.log(beta) if beta > 0.0 else NEG_INF
    return float(
        _point_logw(
            np.ascontiguousarray(times, dtype=np.float64),
            np.ascontiguousarray(xs, dtype=np.float64),
            np.ascontiguousarray(logz, dtype=np.float64),
            np.ascontiguousarray(logv, dtype=np.float64),
            log_beta,
            s,
            np.ascontiguousarray(x0, dtype=np.float64),
            t,
            np.ascontiguousarray(y, dtype=np.float64),
        )
    )


# ---------------------------------------------------------------------------
# batched replica kernels (flat atom arrays + per-replica offsets)
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def _batch_free_end(times, xs, logz, offsets, log_beta, t_eval, out):
    n_rep = offsets.shape[0] - 1
    for r in prange(n_rep):
        lo, hi = offsets[r], offsets[r + 1]
        n = hi - lo
        logv = np.empty(n)
        x0 = np.zeros(xs.shape[1])
        _forward_logv_fill(times[lo:hi], xs[lo:hi], logz[lo:hi], log_beta, 0.0, x0, logv)
        out[r] = _free_end_logw(times[lo:hi], logz[lo:hi], logv, log_beta)


@njit(parallel=True, cache=True)
def _batch_point(times, xs, logz, offsets, log_beta, t_eval, y, out):
    n_rep = offsets.shape[0] - 1
    for r in prange(n_rep):
        lo, hi = offsets[r], offsets[r + 1]
        n = hi - lo
        logv = np.empty(n)
        x0 = np.zeros(xs.shape[1])
        _forward_logv_fill(times[lo:hi], xs[lo:hi], logz[lo:hi], log_beta, 0.0, x0, logv)
        out[r] = _point_logw(
            times[lo:hi], xs[lo:hi], logz[lo:hi], logv, log_beta, 0.0, x0, t_eval, y
        )


def batch_logw(times, xs, logz, offsets, beta, t_eval, y=None) -> np.ndarray:
    """Atomic log-sums for a batch of environments packed into flat arrays.

    Free-end when ``y is None``; point-to-point toward y at time t_eval
    otherwise.  Starting point is (0, 0); the environments must only
    contain atoms with times in (0, t_eval).
    """
    times = np.ascontiguousarray(times, dtype=np.float64)
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    logz = np.ascontiguousarray(logz, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    out = np.empty(offsets.shape[0] - 1)
    log_beta = math.log(beta) if beta > 0.0 else NEG_INF
    if HAVE_NUMBA:
        if y is None:
            _batch_free_end(times, xs, logz, offsets, log_beta, float(t_eval), out)
        else:
            _batch_point(
                times, xs, logz, offsets, log_beta, float(t_eval),
                np.ascontiguousarray(y, dtype=np.float64), out,
            )
        return out
    d = xs.shape[1]
    x0 = np.zeros(d)
    for r in range(len(out)):
        lo, hi = offsets[r], offsets[r + 1]
        logv = forward_logv(times[lo:hi], xs[lo:hi], logz[lo:hi], beta, 0.0, x0)
        if y is None:
            out[r] = free_end_logw(times[lo:hi], logz[lo:hi], logv, beta)
        else:
            out[r] = point_logw(
                times[lo:hi], xs[lo:hi], logz[lo:hi], logv, beta, 0.0, x0, float(t_eval), y
            )
    return out


@njit(cache=True)
def _brute_enumerate(k0, kmat, term, t0term):
    """Exhaustive sum over time-increasing atom subsets (the DP's oracle).

    k0[j]      weight of the leg start -> atom j (includes beta z_j)
    kmat[i,j]  weight of the leg atom i -> atom j (includes beta z_j), i < j
    term[j]    terminal kernel leg atom j -> (t, y); ignored for free-end
    t0term     terminal leg start -> (t, y) for the empty subset

    Returns (free_end_total, point_to_point_total), Kahan-compensated.
    """
    n = k0.shape[0]
    cap = 1 + n * (n + 3) // 2
    stack_last = np.empty(cap, np.int64)
    stack_w = np.empty(cap, np.float64)
    top = 0
    free_s, free_c = 1.0, 0.0
    pt_s, pt_c = t0term, 0.0
    for j in range(n):
        stack_last[top] = j
        stack_w[top] = k0[j]
        top += 1
    while top > 0:
        top -= 1
        last = stack_last[top]
        w = stack_w[top]
        y1 = w - free_c
        t1 = free_s + y1
        free_c = (t1 - free_s) - y1
        free_s = t1
        v = w * term[last]
        y2 = v - pt_c
        t2 = pt_s + y2
        pt_c = (t2 - pt_s) - y2
        pt_s = t2
        for j in range(last + 1, n):
            stack_last[top] = j
            stack_w[top] = w * kmat[last, j]
            top += 1
    return free_s, pt_s


def brute_enumerate(k0, kmat, term, t0term):
    return _brute_enumerate(
        np.ascontiguousarray(k0, dtype=np.float64),
        np.ascontiguousarray(kmat, dtype=np.float64),
        np.ascontiguousarray(term, dtype=np.float64),
        float(t0term),
    )


def warmup() -> None:
    """Force JIT compilation of all kernels on a tiny instance."""
    times = np.array([0.25, 0.5])
    xs = np.array([[0.1], [0.2]])
    logz = np.zeros(2)
    logv = forward_logv(times, xs, logz, 1.0, 0.0, np.zeros(1))
    free_end_logw(times, logz, logv, 1.0)
    point_logw(times, xs, logz, logv, 1.0, 0.0, np.zeros(1), 1.0, np.zeros(1))
    offs = np.array([0, 2], dtype=np.int64)
    batch_logw(times, xs, logz, offs, 1.0, 1.0)
    batch_logw(times, xs, logz, offs, 1.0, 1.0, y=np.zeros(1))
    brute_enumerate(np.ones(2), np.ones((2, 2)), np.ones(2), 1.0)
