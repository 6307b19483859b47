"""Independent oracles and random scenario generators shared by the test modules."""

import numpy as np

from asyncsprt import CorrelationKernel, Scenario, SprtConfig


def gauss_jordan_inverse(a):
    """Dense inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0.0:
            raise ZeroDivisionError("singular matrix")
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def dense_kld(s, t):
    """0.5 * s~^T Sigma^{-1} s~ with Sigma assembled entry by entry and inverted densely."""
    n = s.n_sensors
    sigma = np.eye(n + 1)
    for j in range(n):
        r = s.correlations[j] * s.kernels[j](abs(s.t_fc - t[j]))
        sigma[j, n] = sigma[n, j] = r
    sigma *= s.noise_variance
    st = np.append(s.signals, s.signal_fc)
    return 0.5 * st @ gauss_jordan_inverse(sigma) @ st


def random_kernel(rng, window):
    kind = rng.integers(3)
    if kind == 0:
        return CorrelationKernel.exponential(rng.uniform(0.2, 3.0))
    if kind == 1:
        return CorrelationKernel.squared_exponential(rng.uniform(0.2, 3.0))
    knots = rng.integers(3, 8)
    d = np.linspace(0.0, 1.05 * window, knots)
    v = np.cumprod(np.r_[1.0, rng.uniform(0.4, 0.95, knots - 1)])
    return CorrelationKernel.tabulated(d, v)


def random_scenario(rng, n=None, max_n=6, max_sum_sq=0.95, kernels="mixed"):
    n = int(rng.integers(1, max_n + 1)) if n is None else n
    window = float(rng.uniform(0.2, 3.0))
    direction = rng.normal(size=n)
    direction /= np.linalg.norm(direction)
    rho = direction * np.sqrt(rng.uniform(0.0, max_sum_sq))
    if kernels == "mixed":
        ks = tuple(random_kernel(rng, window) for _ in range(n))
    else:
        ks = CorrelationKernel.squared_exponential(rng.uniform(0.3, 2.0))
    return Scenario(
        signals=rng.uniform(-1.0, 1.0, n),
        correlations=rho,
        kernels=ks,
        signal_fc=float(rng.uniform(-1.0, 1.0)),
        noise_variance=float(rng.uniform(0.2, 3.0)),
        window=window,
        t_fc=float(rng.uniform(0.0, window)),
        sprt=SprtConfig(0.92, 0.1),
    )


def random_times(rng, s, size=None):
    shape = (s.n_sensors,) if size is None else (size, s.n_sensors)
    return rng.uniform(0.0, s.window, shape)


def fig2_scenario(n):
    from asyncsprt.experiment import fig2_correlations

    return Scenario.build(0.5, fig2_correlations(n), signal_fc=0.5, window=1.0, t_fc=0.0)
