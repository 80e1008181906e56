"""Jitted inner loops shared by the public occupancy, bound and projection functions."""
import numpy as np
from numba import njit


@njit(cache=True)
def forward_occupancy(pair_state, pair_edge_ptr, edge_next, n_states, pi, p):
    # pairs are stored in layer order, so predecessors are complete before use
    reach = np.zeros(n_states)
    reach[0] = 1.0
    q = np.empty(edge_next.shape[0])
    for pr in range(pair_state.shape[0]):
        mass = reach[pair_state[pr]] * pi[pr]
        for e in range(pair_edge_ptr[pr], pair_edge_ptr[pr + 1]):
            v = mass * p[e]
            q[e] = v
            reach[edge_next[e]] += v
    return q


@njit(cache=True)
def _best_row_value(e0, e1, edge_next, lo, hi, f):
    # fractional-knapsack maximum of sum_e p_e f[next_e] over lo <= p <= hi, sum p = 1
    n = e1 - e0
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        order[i] = e0 + i
    for i in range(1, n):
        j = i
        while j > 0 and f[edge_next[order[j]]] > f[edge_next[order[j - 1]]]:
            tmp = order[j]
            order[j] = order[j - 1]
            order[j - 1] = tmp
            j -= 1
    remaining = 1.0
    val = 0.0
    for e in range(e0, e1):
        remaining -= lo[e]
        val += lo[e] * f[edge_next[e]]
    for i in range(n):
        if remaining <= 0.0:
            break
        e = order[i]
        add = min(hi[e] - lo[e], remaining)
        if add > 0.0:
            val += add * f[edge_next[e]]
            remaining -= add
    return val


@njit(cache=True)
def upper_occupancy(target, pair_state, pair_layer, pair_edge_ptr, edge_next, n_states, pi, lo, hi):
    """Max over transitions in the box [lo, hi] of the occupancy of pair ``target``."""
    f = np.zeros(n_states)
    x = pair_state[target]
    f[x] = 1.0
    k = pair_layer[target]
    for pr in range(pair_state.shape[0] - 1, -1, -1):
        if pair_layer[pr] >= k or pi[pr] == 0.0:
            continue
        f[pair_state[pr]] += pi[pr] * _best_row_value(pair_edge_ptr[pr], pair_edge_ptr[pr + 1], edge_next, lo, hi, f)
    return min(1.0, f[0] * pi[target])


@njit(cache=True)
def upper_occupancy_many(targets, pair_state, pair_layer, pair_edge_ptr, edge_next, n_states, pi, lo, hi):
    out = np.empty(targets.shape[0])
    for i in range(targets.shape[0]):
        out[i] = upper_occupancy(targets[i], pair_state, pair_layer, pair_edge_ptr, edge_next, n_states, pi, lo, hi)
    return out


@njit(cache=True)
def kl_project(q_tilde, A, b, n_eq, y0, tol, max_iter):
    """Unnormalized-KL projection of ``q_tilde`` onto {A_eq q = b_eq, A_in q <= 0}.

    Minimizes the dual ``sum(q_tilde * exp(-A^T y)) + b^T y`` over y with the
    inequality multipliers kept nonnegative, by projected Newton with an Armijo
    search along the projection arc.  Returns ``(q, y, iterations, pg_norm)``.
    """
    m = A.shape[0]
    n = A.shape[1]
    log_qt = np.log(q_tilde)
    y = y0.copy()
    for j in range(n_eq, m):
        if y[j] < 0.0:
            y[j] = 0.0
    z = log_qt - A.T @ y
    for i in range(n):
        if z[i] > 700.0:
            z[i] = 700.0
    q = np.exp(z)
    pg = np.inf
    it = 0
    free = np.empty(m, dtype=np.bool_)
    while it < max_iter:
        g = b - A @ q  # gradient of the dual objective
        pg = 0.0
        for j in range(m):
            if j < n_eq or y[j] > 0.0:
                r = abs(g[j])
            else:
                r = max(-g[j], 0.0)
            if r > pg:
                pg = r
        if pg <= tol:
            break
        it += 1
        eps_act = min(1e-3, pg)
        nf = 0
        for j in range(m):
            free[j] = j < n_eq or not (y[j] <= eps_act and g[j] > 0.0)
            if free[j]:
                nf += 1
        idx = np.empty(nf, dtype=np.int64)
        c = 0
        for j in range(m):
            if free[j]:
                idx[c] = j
                c += 1
        Af = A[idx]
        H = (Af * q) @ Af.T
        mu = 1e-12 * (1.0 + np.max(np.diag(H)))
        for j in range(nf):
            H[j, j] += mu
        d_f = np.linalg.solve(H, -g[idx])
        d = np.zeros(m)
        for c in range(nf):
            d[idx[c]] = d_f[c]
        for j in range(n_eq, m):
            if not free[j]:
                # bound-active coordinates: scaled gradient step (pushes them to 0)
                d[j] = -g[j] / max(A[j] @ (A[j] * q), 1e-300)
        step = 1.0
        accepted = False
        while step > 1e-20:
            y_new = y + step * d
            for j in range(n_eq, m):
                if y_new[j] < 0.0:
                    y_new[j] = 0.0
            dy = y_new - y
            dz = -(A.T @ dy)
            # f(y_new) - f(y) computed with expm1 so tiny decreases are not lost
            df = 0.0
            for i in range(n):
                df += q[i] * np.expm1(min(dz[i], 700.0 - z[i]))
            df += b @ dy
            lin = g @ dy
            if df <= 1e-4 * lin or (df <= 0.0 and step == 1.0):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        y = y_new
        z = log_qt - A.T @ y
        for i in range(n):
            if z[i] > 700.0:
                z[i] = 700.0
        q = np.exp(z)
    return q, y, it, pg
