"""Compiled inner loops: variate generators and the Gibbs sweep.

Every kernel takes a ``numpy.random.Generator`` and draws only from it, so
results are a deterministic function of the generator state.
"""

import math

import numpy as np
from numba import njit

Z_MIN = 1e-12
Z_MAX = 1e12
LOG_Z_MIN = math.log(Z_MIN)
LOG_Z_MAX = math.log(Z_MAX)
CHI_FLOOR = 1e-300


@njit(cache=True)
def _uniform_open0(rng):
    # (0, 1]: safe for log()
    return 1.0 - rng.random()


@njit(cache=True)
def _mt_gamma(rng, a):
    # Marsaglia & Tsang (2000), valid for a >= 1
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = _uniform_open0(rng)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


@njit(cache=True)
def log_std_gamma(rng, a):
    """log of a Gamma(a, 1) draw; a < 1 uses the u**(1/a) boost in log space."""
    if a >= 1.0:
        return math.log(_mt_gamma(rng, a))
    g = _mt_gamma(rng, a + 1.0)
    return math.log(g) + math.log(_uniform_open0(rng)) / a


@njit(cache=True)
def std_gamma(rng, a):
    if a >= 1.0:
        return _mt_gamma(rng, a)
    return math.exp(log_std_gamma(rng, a))


@njit(cache=True)
def gamma_array(rng, shape, rate, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = std_gamma(rng, shape) / rate
    return out


@njit(cache=True)
def log_gamma_array(rng, shape, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = log_std_gamma(rng, shape)
    return out


@njit(cache=True)
def inverse_gamma_array(rng, shape, scale, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = scale / std_gamma(rng, shape)
    return out


@njit(cache=True)
def _devroye_psi(x, alpha, lam):
    out = -lam * (math.exp(x) - x - 1.0)
    if alpha > 0.0:
        out -= alpha * (math.cosh(x) - 1.0)
    return out


@njit(cache=True)
def _devroye_dpsi(x, alpha, lam):
    out = -lam * (math.exp(x) - 1.0)
    if alpha > 0.0:
        out -= alpha * math.sinh(x)
    return out


@njit(cache=True)
def _devroye_log_core(rng, lam, omega):
    """Draw r with density prop. to exp(psi(r)); lam >= 0, omega > 0.

    Devroye (2014), "Random variate generation for the generalized inverse
    Gaussian distribution", Statistics and Computing 24.
    """
    if lam > 0.0:
        alpha = omega * (omega / (math.hypot(omega, lam) + lam))
    else:
        alpha = omega

    x = -_devroye_psi(1.0, alpha, lam)
    if 0.5 <= x <= 2.0:
        t = 1.0
    elif x > 2.0:
        t = math.sqrt(2.0 / (alpha + lam))
    else:
        t = math.log(4.0 / (alpha + 2.0 * lam))

    x = -_devroye_psi(-1.0, alpha, lam)
    if 0.5 <= x <= 2.0:
        s = 1.0
    elif x > 2.0:
        s = math.sqrt(4.0 / (alpha * math.cosh(1.0) + lam))
    else:
        if alpha == 0.0:
            s = 1.0 / lam
        else:
            inv = 1.0 / alpha
            s_alpha = math.log1p(inv * (1.0 + math.sqrt(1.0 + 2.0 * alpha)))
            s = s_alpha if lam == 0.0 else min(1.0 / lam, s_alpha)

    eta = -_devroye_psi(t, alpha, lam)
    zeta = -_devroye_dpsi(t, alpha, lam)
    theta = -_devroye_psi(-s, alpha, lam)
    xi = _devroye_dpsi(-s, alpha, lam)
    p = 1.0 / xi
    r = 1.0 / zeta
    td = t - r * eta
    sd = s - p * theta
    q = td + sd
    total = p + q + r

    while True:
        u = rng.random() * total
        v = _uniform_open0(rng)
        w = rng.random()
        if u < q:
            rnd = -sd + q * v
        elif u < q + r:
            rnd = td - r * math.log(v)
        else:
            rnd = -sd + p * math.log(v)
        if rnd > td:
            g = math.exp(-eta - zeta * (rnd - t))
        elif rnd < -sd:
            g = math.exp(-theta + xi * (rnd + s))
        else:
            g = 1.0
        if w * g <= math.exp(_devroye_psi(rnd, alpha, lam)):
            return rnd


@njit(cache=True)
def log_gig(rng, lam, chi, psi):
    """log of a draw from density prop. to x**(lam-1) exp(-(chi/x + psi*x)/2)."""
    if chi < CHI_FLOOR:
        if lam > 0.0:
            return log_std_gamma(rng, lam) - math.log(0.5 * psi)
        chi = CHI_FLOOR
    if psi < CHI_FLOOR:
        if lam < 0.0:
            return math.log(0.5 * chi) - log_std_gamma(rng, -lam)
        return math.nan
    omega = math.sqrt(chi * psi)
    a = abs(lam)
    lx = _devroye_log_core(rng, a, omega) + math.asinh(a / omega)
    if lam < 0.0:
        lx = -lx
    return lx + 0.5 * (math.log(chi) - math.log(psi))


@njit(cache=True)
def gig_array(rng, lam, chi, psi, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = math.exp(log_gig(rng, lam, chi, psi))
    return out


@njit(cache=True)
def gig_vector(rng, lam, chi, psi):
    # elementwise chi, shared lam/psi
    out = np.empty(chi.shape[0])
    for i in range(chi.shape[0]):
        out[i] = math.exp(log_gig(rng, lam, chi[i], psi))
    return out


# --------------------------------------------------------------------------
# Gibbs sweep pieces. Levels are 0-based here: index k holds level k+1,
# so "odd level" means k % 2 == 0.


@njit(cache=True)
def cholesky_inplace(a):
    """Lower Cholesky factor of a (overwritten). Returns False if not PD."""
    p = a.shape[0]
    for j in range(p):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if not (s > 0.0) or not math.isfinite(s):
            return False
        d = math.sqrt(s)
        a[j, j] = d
        for i in range(j + 1, p):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / d
    for i in range(p):
        for j in range(i + 1, p):
            a[i, j] = 0.0
    return True


@njit(cache=True)
def _forward(L, b):
    p = L.shape[0]
    x = np.empty(p)
    for i in range(p):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def _backward(L, b):
    # solves L^T x = b
    p = L.shape[0]
    x = np.empty(p)
    for i in range(p - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, p):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def local_scales(z):
    N, p = z.shape
    out = np.ones(p)
    for j in range(p):
        for k in range(N):
            out[j] *= z[k, j]
    return out


@njit(cache=True)
def update_beta(rng, XtX, Xty, z, sigma2, out):
    """Draw beta ~ N(A^-1 X'y, sigma2 A^-1), A = X'X + diag(1/lambda)."""
    p = XtX.shape[0]
    lam = local_scales(z)
    a = XtX.copy()
    for j in range(p):
        a[j, j] += 1.0 / lam[j]
    if not cholesky_inplace(a):
        return False
    mean = _backward(a, _forward(a, Xty))
    e = np.empty(p)
    for j in range(p):
        e[j] = rng.standard_normal()
    dev = _backward(a, e)
    sd = math.sqrt(sigma2)
    for j in range(p):
        out[j] = mean[j] + sd * dev[j]
    return True


@njit(cache=True)
def update_z_level(rng, k, beta, z, sigma2, c, phi):
    """Redraw row k of z in place. Returns the number of clamp events."""
    N, p = z.shape
    phik = phi if k == N - 1 else 1.0
    clamps = 0
    for j in range(p):
        rest = 1.0
        for i in range(N):
            if i != k:
                rest *= z[i, j]
        qj = beta[j] * beta[j] / (sigma2 * rest)
        if k % 2 == 0:
            lz = log_gig(rng, c[k] - 0.5, qj, 2.0 * phik)
        else:
            lz = math.log(0.5 * qj + phik) - log_std_gamma(rng, c[k] + 0.5)
        if lz < LOG_Z_MIN:
            z[k, j] = Z_MIN
            clamps += 1
        elif lz > LOG_Z_MAX:
            z[k, j] = Z_MAX
            clamps += 1
        else:
            z[k, j] = math.exp(lz)
    return clamps


@njit(cache=True)
def sigma2_posterior(X, y, beta, z, c0, d0):
    n, p = X.shape
    rss = 0.0
    for i in range(n):
        r = y[i]
        for j in range(p):
            r -= X[i, j] * beta[j]
        rss += r * r
    lam = local_scales(z)
    quad = 0.0
    for j in range(p):
        quad += beta[j] * beta[j] / lam[j]
    shape = 0.5 * (n + p + 2.0 * c0)
    scale = 0.5 * (rss + quad + 2.0 * d0)
    return shape, scale


@njit(cache=True)
def update_sigma2(rng, X, y, beta, z, c0, d0):
    shape, scale = sigma2_posterior(X, y, beta, z, c0, d0)
    return scale / std_gamma(rng, shape)


@njit(cache=True)
def gibbs_run(rng, X, y, XtX, Xty, beta, z, sigma2, c, phi, c0, d0,
              n_iter, n_skip, thin, beta_out, sigma2_out, logz_sum):
    """Run n_iter systematic-scan sweeps starting from (beta, z, sigma2).

    State arrays are updated in place. Iterations after the first n_skip are
    accumulated into logz_sum and every thin-th of them is stored.
    Returns (status, sigma2, clamp_count); status is -1 on success or the
    0-based iteration index at which the beta factorisation failed.
    """
    N = z.shape[0]
    clamps = 0
    stored = 0
    new_beta = np.empty(beta.shape[0])
    for it in range(n_iter):
        if not update_beta(rng, XtX, Xty, z, sigma2, new_beta):
            return it, sigma2, clamps
        beta[:] = new_beta
        for k in range(N):
            clamps += update_z_level(rng, k, beta, z, sigma2, c, phi)
        sigma2 = update_sigma2(rng, X, y, beta, z, c0, d0)
        if not (sigma2 > 0.0) or not math.isfinite(sigma2):
            return it, sigma2, clamps
        if it >= n_skip:
            kept = it - n_skip
            for k in range(N):
                for j in range(z.shape[1]):
                    logz_sum[k, j] += math.log(z[k, j])
            if kept % thin == 0:
                beta_out[stored, :] = beta
                sigma2_out[stored] = sigma2
                stored += 1
    return -1, sigma2, clamps
