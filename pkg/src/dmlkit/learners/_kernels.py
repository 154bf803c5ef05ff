"""Compiled inner loops for the learners (coordinate descent, CART)."""

import numpy as np
from numba import njit

# status codes returned by the path solvers
CONVERGED = 0
MAX_ITER = 1


@njit(cache=True)
def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@njit(cache=True)
def lasso_gram_path(gram, xty, lambdas, beta_init, tol, max_iter):
    """Cyclic coordinate descent along a descending lambda path.

    Minimizes 0.5 * b'Gb - c'b + lam * |b|_1 with G = X'X/n, c = X'y/n, which
    is the centered least-squares lasso objective up to a constant.  The
    gradient vector ``c - G b`` is kept up to date (covariance updates), so a
    sweep costs O(p) plus O(p) per coefficient that moves.

    Returns (betas, n_done, status, last_beta); n_done < len(lambdas) means
    the solve at lambdas[n_done] hit ``max_iter``.
    """
    p = gram.shape[0]
    n_lam = lambdas.shape[0]
    betas = np.zeros((n_lam, p))
    beta = beta_init.copy()
    grad = xty.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(p):
                grad[i] -= gram[i, j] * beta[j]
    for k in range(n_lam):
        lam = lambdas[k]
        done = False
        for _ in range(max_iter):
            max_delta = 0.0
            for j in range(p):
                gjj = gram[j, j]
                if gjj <= 0.0:
                    continue
                new = _soft(grad[j] + gjj * beta[j], lam) / gjj
                delta = new - beta[j]
                if delta != 0.0:
                    for i in range(p):
                        grad[i] -= gram[i, j] * delta
                    beta[j] = new
                    ad = abs(delta)
                    if ad > max_delta:
                        max_delta = ad
            if max_delta < tol:
                done = True
                break
        if not done:
            return betas, k, MAX_ITER, beta
        betas[k, :] = beta
    return betas, n_lam, CONVERGED, beta


@njit(cache=True)
def _sigmoid(eta):
    if eta > 30.0:
        eta = 30.0
    elif eta < -30.0:
        eta = -30.0
    return 1.0 / (1.0 + np.exp(-eta))


@njit(cache=True)
def logistic_lasso_path(x, y, lambdas, tol, max_outer, max_inner):
    """L1-penalized logistic regression path by IRLS + weighted coordinate descent.

    Objective per lambda: -loglik/n + lam * |b|_1, intercept unpenalized.
    ``x`` must already be standardized.  Returns (intercepts, betas).
    """
    n, p = x.shape
    n_lam = lambdas.shape[0]
    ybar = 0.0
    for i in range(n):
        ybar += y[i]
    ybar /= n
    b0 = np.log(ybar / (1.0 - ybar))
    beta = np.zeros(p)
    out_b0 = np.zeros(n_lam)
    out_beta = np.zeros((n_lam, p))
    eta = np.full(n, b0)
    w = np.empty(n)
    r = np.empty(n)
    xw2 = np.empty(p)
    for k in range(n_lam):
        lam = lambdas[k]
        for _ in range(max_outer):
            sw = 0.0
            for i in range(n):
                pi = _sigmoid(eta[i])
                wi = pi * (1.0 - pi)
                if wi < 1e-5:
                    wi = 1e-5
                w[i] = wi
                r[i] = (y[i] - pi) / wi
                sw += wi
            for j in range(p):
                acc = 0.0
                for i in range(n):
                    acc += w[i] * x[i, j] * x[i, j]
                xw2[j] = acc / n
            outer_delta = 0.0
            for _inner in range(max_inner):
                max_delta = 0.0
                acc = 0.0
                for i in range(n):
                    acc += w[i] * r[i]
                d0 = acc / sw
                if d0 != 0.0:
                    b0 += d0
                    for i in range(n):
                        r[i] -= d0
                    if abs(d0) > max_delta:
                        max_delta = abs(d0)
                for j in range(p):
                    if xw2[j] <= 0.0:
                        continue
                    acc = 0.0
                    for i in range(n):
                        acc += w[i] * x[i, j] * r[i]
                    new = _soft(acc / n + xw2[j] * beta[j], lam) / xw2[j]
                    delta = new - beta[j]
                    if delta != 0.0:
                        for i in range(n):
                            r[i] -= x[i, j] * delta
                        beta[j] = new
                        if abs(delta) > max_delta:
                            max_delta = abs(delta)
                if max_delta > outer_delta:
                    outer_delta = max_delta
                if max_delta < tol:
                    break
            for i in range(n):
                acc = b0
                for j in range(p):
                    acc += x[i, j] * beta[j]
                eta[i] = acc
            if outer_delta < tol:
                break
        out_b0[k] = b0
        out_beta[k, :] = beta
    return out_b0, out_beta


# ---------------------------------------------------------------------------
# CART / bagging
# ---------------------------------------------------------------------------

@njit(cache=True)
def _build_tree(x, y, idx, mtry, min_node, max_depth, seed,
                feat, thr, left, right, value):
    """Grow one tree on the (bootstrap) index array ``idx`` in place.

    Splits maximize the decrease in within-node sum of squares.  For 0/1
    labels that decrease is proportional to the decrease in Gini impurity,
    so the same routine grows classification trees.
    Returns the number of nodes used.
    """
    np.random.seed(seed)
    n_s = idx.shape[0]
    p = x.shape[1]
    feats = np.arange(p)
    st_node = np.empty(n_s + 1, np.int64)
    st_start = np.empty(n_s + 1, np.int64)
    st_end = np.empty(n_s + 1, np.int64)
    st_depth = np.empty(n_s + 1, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_s
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    xs = np.empty(n_s)
    ys = np.empty(n_s)
    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        depth = st_depth[top]
        m = e - s
        tot = 0.0
        tot2 = 0.0
        for i in range(s, e):
            v = y[idx[i]]
            tot += v
            tot2 += v * v
        value[node] = tot / m
        feat[node] = -1
        if depth >= max_depth or m < 2 * min_node:
            continue
        sse = tot2 - tot * tot / m
        if sse <= 1e-12 * (1.0 + tot2):
            continue
        parent = tot * tot / m
        best_gain = 1e-12 * sse
        best_f = -1
        best_t = 0.0
        for t in range(mtry):
            jj = t + np.random.randint(0, p - t)
            tmp = feats[t]
            feats[t] = feats[jj]
            feats[jj] = tmp
            f = feats[t]
            for i in range(m):
                xs[i] = x[idx[s + i], f]
            order = np.argsort(xs[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[idx[s + order[i]]]
            s_left = 0.0
            for i in range(m - min_node):
                s_left += ys[i]
                n_left = i + 1
                if n_left < min_node:
                    continue
                a = xs[order[i]]
                b = xs[order[i + 1]]
                if a == b:
                    continue
                n_right = m - n_left
                s_right = tot - s_left
                gain = s_left * s_left / n_left + s_right * s_right / n_right - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    mid = 0.5 * (a + b)
                    if mid >= b:
                        mid = a
                    best_t = mid
        if best_f < 0:
            continue
        # partition idx[s:e] so that x[:, best_f] <= best_t comes first
        i = s
        j = e - 1
        while i <= j:
            if x[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feat[node] = best_f
        thr[node] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_node[top] = rc
        st_start[top] = i
        st_end[top] = e
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = s
        st_end[top] = i
        st_depth[top] = depth + 1
        top += 1
    return n_nodes


@njit(cache=True)
def build_forest(x, y, boot, seeds, mtry, min_node, max_depth):
    n_trees, n_s = boot.shape
    max_nodes = 2 * n_s + 1
    feat = np.full((n_trees, max_nodes), -1, np.int64)
    thr = np.zeros((n_trees, max_nodes))
    left = np.zeros((n_trees, max_nodes), np.int64)
    right = np.zeros((n_trees, max_nodes), np.int64)
    value = np.zeros((n_trees, max_nodes))
    used = 1
    for t in range(n_trees):
        idx = boot[t].copy()
        k = _build_tree(x, y, idx, mtry, min_node, max_depth, seeds[t],
                        feat[t], thr[t], left[t], right[t], value[t])
        if k > used:
            used = k
    return feat[:, :used].copy(), thr[:, :used].copy(), left[:, :used].copy(), \
        right[:, :used].copy(), value[:, :used].copy()


@njit(cache=True)
def predict_forest(x, feat, thr, left, right, value):
    n = x.shape[0]
    n_trees = feat.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = 0
            while feat[t, node] >= 0:
                if x[i, feat[t, node]] <= thr[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc / n_trees
    return out
