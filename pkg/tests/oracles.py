"""Plain-Python reference implementations used as independent oracles.

Nothing here imports the package; these follow the textbook definitions
one element at a time.
"""

import itertools


def sgn(z):
    return 1 if z > 0 else -1


def ref_evaluate(w, x):
    """w, x: lists of K rows of N ints. Returns (sigma list, tau)."""
    sigma = []
    for wk, xk in zip(w, x):
        z = 0
        for a, b in zip(wk, xk):
            z += a * b
        sigma.append(sgn(z))
    tau = 1
    for s in sigma:
        tau *= s
    return sigma, tau


def ref_clamp(z, L):
    if z <= -L:
        return -L
    if z >= L:
        return L
    return z


def ref_hebbian(w, x, sigma, tau, L):
    out = []
    for k, (wk, xk) in enumerate(zip(w, x)):
        theta = 1 if sigma[k] == tau else 0
        out.append([ref_clamp(a + b * sigma[k] * theta, L) for a, b in zip(wk, xk)])
    return out


def reshape(flat, K, N):
    return [list(flat[k * N:(k + 1) * N]) for k in range(K)]


def all_inputs(K, N):
    for flat in itertools.product((-1, 1), repeat=K * N):
        yield reshape(flat, K, N)


def all_weights(K, N, L):
    for flat in itertools.product(range(-L, L + 1), repeat=K * N):
        yield reshape(flat, K, N)


def ref_hamming(a, b):
    return sum(1 for p, q in zip(a, b) if p != q)
