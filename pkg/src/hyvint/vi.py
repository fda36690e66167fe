"""Mean-field Gamma variational inference for the Poisson-link incidence model.

Every latent scalar has an independent Gamma(shape, rate) factor. Shapes and
rates are stored as logs, which are the free optimisation variables. The
objective is the evidence lower bound with the intractable positive-incidence
term replaced by a Jensen-type lower bound (``lower_bound``) or by a
second-order Taylor estimate (``taylor``).
"""

import math
from dataclasses import dataclass, field, fields, asdict

import numpy as np

from .errors import DataError, DomainError, NumericalError
from .numkit import digamma, log_expm1_exp, log_gamma, rng_stream, trigamma

LOG_CLAMP = 12.0
ROLES = ("alpha", "theta", "rho", "beta")


@dataclass(frozen=True)
class GammaFactor:
    shape: float
    rate: float

    def __post_init__(self):
        if np.any(np.asarray(self.shape) <= 0) or np.any(np.asarray(self.rate) <= 0):
            raise DomainError("Gamma shape and rate must be positive")

    def mean(self):
        return self.shape / self.rate

    def mean_log(self):
        return digamma(self.shape) - np.log(self.rate)

    def second_moment(self):
        return self.shape * (self.shape + 1.0) / self.rate**2

    def entropy(self):
        a = self.shape
        return a - np.log(self.rate) + log_gamma(a) + (1.0 - a) * digamma(a)


@dataclass(frozen=True)
class PriorSpec:
    a_alpha: float = 0.1
    b_alpha: float = 0.1
    a_theta: float = 0.1
    b_theta: float = 0.1
    a_rho: float = 0.1
    b_rho: float = 0.1
    a_beta: float = 0.1
    b_beta: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise DomainError(f"prior {f.name} must be positive")

    @classmethod
    def uniform(cls, value):
        return cls(*([float(value)] * 8))

    def pair(self, role):
        return getattr(self, f"a_{role}"), getattr(self, f"b_{role}")


@dataclass
class FitConfig:
    K: int = 2
    max_iters: int = 3000
    learning_rate: float = 1e-2
    tolerance: float = 1e-9
    grad_tol: float = 0.0
    estimator: str = "lower_bound"
    seed: int = 42
    init_scale: float = 0.1
    taylor_floor: float = 1e-12
    taylor_sentinel: float = -1e3

    def __post_init__(self):
        if self.K < 1:
            raise DomainError("K must be >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.estimator not in ("lower_bound", "taylor"):
            raise DomainError(f"unknown estimator {self.estimator!r}")


@dataclass
class VariationalState:
    """Log-shapes (``la_*``) and log-rates (``lb_*``) of all Gamma factors.

    alpha: (n,), theta: (n, K), rho: (m,), beta: (m, K).
    """

    la_alpha: np.ndarray
    lb_alpha: np.ndarray
    la_theta: np.ndarray
    lb_theta: np.ndarray
    la_rho: np.ndarray
    lb_rho: np.ndarray
    la_beta: np.ndarray
    lb_beta: np.ndarray

    def __post_init__(self):
        n, K = np.shape(self.la_theta)
        m = np.shape(self.la_beta)[0]
        want = {"alpha": (n,), "theta": (n, K), "rho": (m,), "beta": (m, K)}
        for role, shp in want.items():
            for pre in ("la_", "lb_"):
                arr = np.asarray(getattr(self, pre + role), dtype=np.float64)
                if arr.shape != shp:
                    raise DataError(f"{pre}{role} has shape {arr.shape}, expected {shp}")
                setattr(self, pre + role, arr)

    @property
    def n(self):
        return self.la_alpha.shape[0]

    @property
    def m(self):
        return self.la_rho.shape[0]

    @property
    def K(self):
        return self.la_theta.shape[1]

    @classmethod
    def constant(cls, n, m, K, shape=1.0, rate=1.0):
        la, lb = math.log(shape), math.log(rate)
        return cls(
            np.full(n, la), np.full(n, lb), np.full((n, K), la), np.full((n, K), lb),
            np.full(m, la), np.full(m, lb), np.full((m, K), la), np.full((m, K), lb),
        )

    @classmethod
    def random(cls, n, m, K, rng, loc=0.0, scale=0.1):
        def draw(*shp):
            return loc + scale * rng.standard_normal(shp)
        return cls(draw(n), draw(n), draw(n, K), draw(n, K), draw(m), draw(m), draw(m, K), draw(m, K))

    def factor(self, role):
        return GammaFactor(np.exp(getattr(self, "la_" + role)), np.exp(getattr(self, "lb_" + role)))

    def alpha(self, i):
        return GammaFactor(math.exp(self.la_alpha[i]), math.exp(self.lb_alpha[i]))

    def rho(self, j):
        return GammaFactor(math.exp(self.la_rho[j]), math.exp(self.lb_rho[j]))

    def theta(self, i, k):
        return GammaFactor(math.exp(self.la_theta[i, k]), math.exp(self.lb_theta[i, k]))

    def beta(self, j, k):
        return GammaFactor(math.exp(self.la_beta[j, k]), math.exp(self.lb_beta[j, k]))

    def means(self):
        return {r: np.exp(getattr(self, "la_" + r) - getattr(self, "lb_" + r)) for r in ROLES}

    def flat(self):
        return np.concatenate([np.ravel(getattr(self, f.name)) for f in fields(self)])

    def with_flat(self, vec):
        out = {}
        pos = 0
        for f in fields(self):
            arr = getattr(self, f.name)
            out[f.name] = np.asarray(vec[pos:pos + arr.size], dtype=np.float64).reshape(arr.shape)
            pos += arr.size
        return VariationalState(**out)

    def copy(self):
        return VariationalState(**{k: np.array(v) for k, v in asdict(self).items()})


# ---------------------------------------------------------------- moments

class _Moments:
    """Per-role shape, mean, mean-log, second moment and their log-space partials."""

    def __init__(self, state):
        for role in ROLES:
            la = getattr(state, "la_" + role)
            lb = getattr(state, "lb_" + role)
            a = np.exp(la)
            b = np.exp(lb)
            setattr(self, "a_" + role, a)
            setattr(self, "lb_" + role, lb)
            setattr(self, "m_" + role, a / b)
            setattr(self, "ml_" + role, digamma(a) - lb)
            setattr(self, "s_" + role, a * (a + 1.0) / (b * b))


def _pos_arrays(h):
    rows, cols = h.coo
    return rows, cols


def expected_intensity(state, i, j):
    """E_q[alpha_i rho_j theta_i . beta_j] (factors independent under q)."""
    ma = math.exp(state.la_alpha[i] - state.lb_alpha[i])
    mr = math.exp(state.la_rho[j] - state.lb_rho[j])
    mt = np.exp(state.la_theta[i] - state.lb_theta[i])
    mb = np.exp(state.la_beta[j] - state.lb_beta[j])
    return float(ma * mr * np.dot(mt, mb))


def _lse(x):
    mx = np.max(x, axis=-1, keepdims=True)
    w = np.exp(x - mx)
    tot = w.sum(axis=-1, keepdims=True)
    return (mx + np.log(tot))[..., 0], w / tot


def _s_lower(mo, rows, cols):
    """Lower bound of E_q[log lambda] per positive pair, plus softmax weights."""
    inner = mo.ml_theta[rows] + mo.ml_beta[cols]
    lse, phi = _lse(inner)
    return mo.ml_alpha[rows] + mo.ml_rho[cols] + lse, phi


def _pair_means(mo, rows, cols):
    return mo.m_alpha[rows] * mo.m_rho[cols] * np.sum(mo.m_theta[rows] * mo.m_beta[cols], axis=1)


def term_i_lower_bound(state, i, j):
    """Jensen lower bound on E_q[log(1 - exp(-lambda_ij))] for one pair."""
    mo = _Moments(state)
    rows, cols = np.array([i]), np.array([j])
    s, _ = _s_lower(mo, rows, cols)
    return float(log_expm1_exp(s[0]) - _pair_means(mo, rows, cols)[0])


def s_lower_bound(state, i, j):
    """Lower bound on E_q[log lambda_ij]."""
    mo = _Moments(state)
    s, _ = _s_lower(mo, np.array([i]), np.array([j]))
    return float(s[0])


def _log1mexp(x):
    # log(1 - exp(-x)) for x > 0
    return np.where(x > 0.6931, np.log1p(-np.exp(-x)), np.log(-np.expm1(-x)))


def _taylor_parts(mo, rows, cols):
    mt, mb = mo.m_theta[rows], mo.m_beta[cols]
    st, sb = mo.s_theta[rows], mo.s_beta[cols]
    P = np.sum(mt * mb, axis=1)
    Q = np.sum(st * sb - (mt * mb) ** 2, axis=1)
    sas = mo.s_alpha[rows] * mo.s_rho[cols]
    mu = mo.m_alpha[rows] * mo.m_rho[cols] * P
    e2 = sas * (P * P + Q)
    return mu, e2, P, Q, sas


def _taylor_value(mu, var, floor, sentinel):
    safe = np.maximum(mu, floor)
    em = np.exp(-safe)
    om = -np.expm1(-safe)  # 1 - e^-x
    f = _log1mexp(safe)
    f2 = -em / (om * om)
    val = np.minimum(f + 0.5 * f2 * var, 0.0)
    return np.where(mu < floor, sentinel, val)


def term_i_taylor(state, i, j, floor=1e-12, sentinel=-1e3):
    """Second-order Taylor estimate of E_q[log(1 - exp(-lambda_ij))] around E_q[lambda]."""
    mo = _Moments(state)
    mu, e2, *_ = _taylor_parts(mo, np.array([i]), np.array([j]))
    return float(_taylor_value(mu, e2 - mu * mu, floor, sentinel)[0])


def intensity_variance(state, i, j):
    mo = _Moments(state)
    mu, e2, *_ = _taylor_parts(mo, np.array([i]), np.array([j]))
    return float(e2[0] - mu[0] ** 2)


def _prior_term(mo, role, prior):
    a0, b0 = prior.pair(role)
    const = a0 * math.log(b0) - log_gamma(a0)
    ml = getattr(mo, "ml_" + role)
    m = getattr(mo, "m_" + role)
    return float(np.sum(const + (a0 - 1.0) * ml - b0 * m))


def _entropy_term(mo, role):
    a = getattr(mo, "a_" + role)
    lb = getattr(mo, "lb_" + role)
    return float(np.sum(a - lb + log_gamma(a) + (1.0 - a) * digamma(a)))


def elbo_terms(state, h, prior, estimator="lower_bound", floor=1e-12, sentinel=-1e3):
    """The four ELBO pieces: (i) positive-incidence term, (ii) expected intensity
    over zero incidences, (iii) E_q[log prior], (iv) E_q[log q]."""
    if h.n != state.n or h.m != state.m:
        raise DataError(f"state is ({state.n}, {state.m}) but hypergraph is ({h.n}, {h.m})")
    mo = _Moments(state)
    rows, cols = _pos_arrays(h)
    mean_pos = _pair_means(mo, rows, cols)
    if estimator == "lower_bound":
        s, _ = _s_lower(mo, rows, cols)
        t1 = float(np.sum(log_expm1_exp(s) - mean_pos)) if rows.size else 0.0
    elif estimator == "taylor":
        mu, e2, *_ = _taylor_parts(mo, rows, cols)
        t1 = float(np.sum(_taylor_value(mu, e2 - mu * mu, floor, sentinel)))
    else:
        raise DomainError(f"unknown estimator {estimator!r}")
    U = mo.m_alpha @ mo.m_theta
    V = mo.m_rho @ mo.m_beta
    total = float(U @ V)
    t2 = total - float(np.sum(mean_pos))
    t3 = sum(_prior_term(mo, r, prior) for r in ROLES)
    t4 = -sum(_entropy_term(mo, r) for r in ROLES)
    return t1, t2, t3, t4


def elbo(state, h, prior, estimator="lower_bound", **kw):
    t1, t2, t3, t4 = elbo_terms(state, h, prior, estimator, **kw)
    return t1 - t2 + t3 - t4


def elbo_gradient(state, h, prior, estimator="lower_bound", floor=1e-12, sentinel=-1e3):
    """Gradient of :func:`elbo` w.r.t. every log-shape / log-rate.

    Returned as a VariationalState-shaped container of partial derivatives.
    """
    mo = _Moments(state)
    rows, cols = _pos_arrays(h)
    n, m, K = state.n, state.m, state.K
    # sensitivities w.r.t. mean, mean_log and second moment of every factor
    dm = {r: np.zeros_like(getattr(mo, "m_" + r)) for r in ROLES}
    dml = {r: np.zeros_like(dm[r]) for r in ROLES}
    ds = {r: np.zeros_like(dm[r]) for r in ROLES}

    # - sum over all pairs of E[lambda] = - sum_k U_k V_k
    U = mo.m_alpha @ mo.m_theta
    V = mo.m_rho @ mo.m_beta
    dm["alpha"] -= mo.m_theta @ V
    dm["theta"] -= np.outer(mo.m_alpha, V)
    dm["rho"] -= mo.m_beta @ U
    dm["beta"] -= np.outer(mo.m_rho, U)

    if rows.size:
        if estimator == "lower_bound":
            s, phi = _s_lower(mo, rows, cols)
            u = np.exp(np.minimum(s, 700.0))
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.where(u > 1e-12, u / -np.expm1(-u), 1.0 + 0.5 * u)
            dml["alpha"] += np.bincount(rows, g, minlength=n)
            dml["rho"] += np.bincount(cols, g, minlength=m)
            gphi = g[:, None] * phi
            for k in range(K):
                dml["theta"][:, k] += np.bincount(rows, gphi[:, k], minlength=n)
                dml["beta"][:, k] += np.bincount(cols, gphi[:, k], minlength=m)
        elif estimator == "taylor":
            mu, e2, P, Q, sas = _taylor_parts(mo, rows, cols)
            var = e2 - mu * mu
            safe = np.maximum(mu, floor)
            em = np.exp(-safe)
            om = -np.expm1(-safe)
            f = _log1mexp(safe)
            f1 = em / om
            f2 = -em / (om * om)
            f3 = em * (1.0 + em) / om**3
            val = f + 0.5 * f2 * var
            live = (mu >= floor) & (val < 0.0)
            cv = np.where(live, 0.5 * f2, 0.0)
            cmu = np.where(live, f1 + 0.5 * f3 * var - 2.0 * mu * 0.5 * f2, 0.0)
            # positive-incidence E[lambda] re-added (it is excluded from term (ii))
            cmu = cmu + 1.0
            ma, mr = mo.m_alpha[rows], mo.m_rho[cols]
            mt, mb = mo.m_theta[rows], mo.m_beta[cols]
            st, sb = mo.s_theta[rows], mo.s_beta[cols]
            sa, sr = mo.s_alpha[rows], mo.s_rho[cols]
            PQ = P * P + Q
            dm["alpha"] += np.bincount(rows, cmu * mr * P, minlength=n)
            dm["rho"] += np.bincount(cols, cmu * ma * P, minlength=m)
            ds["alpha"] += np.bincount(rows, cv * sr * PQ, minlength=n)
            ds["rho"] += np.bincount(cols, cv * sa * PQ, minlength=m)
            amr = (cmu * ma * mr)[:, None]
            cvs = (cv * sas)[:, None]
            d_mt = amr * mb + cvs * (2.0 * P[:, None] * mb - 2.0 * mt * mb * mb)
            d_mb = amr * mt + cvs * (2.0 * P[:, None] * mt - 2.0 * mb * mt * mt)
            d_st = cvs * sb
            d_sb = cvs * st
            for k in range(K):
                dm["theta"][:, k] += np.bincount(rows, d_mt[:, k], minlength=n)
                dm["beta"][:, k] += np.bincount(cols, d_mb[:, k], minlength=m)
                ds["theta"][:, k] += np.bincount(rows, d_st[:, k], minlength=n)
                ds["beta"][:, k] += np.bincount(cols, d_sb[:, k], minlength=m)
        else:
            raise DomainError(f"unknown estimator {estimator!r}")

    out = {}
    for r in ROLES:
        a = getattr(mo, "a_" + r)
        mean = getattr(mo, "m_" + r)
        sec = getattr(mo, "s_" + r)
        a0, b0 = prior.pair(r)
        tri = trigamma(a)
        # prior: (a0-1) mean_log - b0 mean ; entropy: a - lb + lgamma(a) + (1-a) psi(a)
        dml_r = dml[r] + (a0 - 1.0)
        dm_r = dm[r] - b0
        ga = dm_r * mean + dml_r * a * tri + ds[r] * sec * (2.0 * a + 1.0) / (a + 1.0)
        ga = ga + a * (1.0 + (1.0 - a) * tri)
        gb = -dm_r * mean - dml_r - 2.0 * ds[r] * sec - 1.0
        out["la_" + r] = ga
        out["lb_" + r] = gb
    return VariationalState(**out)


# ---------------------------------------------------------------- optimisation

class _Adam:
    def __init__(self, size, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x, grad):
        # ascent
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mh = self.m / (1 - self.b1**self.t)
        vh = self.v / (1 - self.b2**self.t)
        return x + self.lr * mh / (np.sqrt(vh) + self.eps)


@dataclass
class FitResult:
    state: VariationalState
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def init_state(h, config):
    rng = rng_stream(config.seed, 1)
    return VariationalState.random(h.n, h.m, config.K, rng, scale=config.init_scale)


def fit_variational(h, prior, config, init=None, return_result=False):
    """Adam ascent on the ELBO over log-shapes/log-rates (full batch).

    Stops after ``max_iters`` or once the relative ELBO change drops below
    ``tolerance`` (or the gradient sup-norm below ``grad_tol``). The best
    state seen is returned, so the final ELBO is never below the initial one.
    """
    if h.m == 0 or h.n == 0:
        raise DataError("cannot fit an empty hypergraph")
    kw = dict(floor=config.taylor_floor, sentinel=config.taylor_sentinel)
    state = init.copy() if init is not None else init_state(h, config)
    if not np.all(np.isfinite(state.flat())):
        raise NumericalError("initial state is not finite", state=state, iteration=0)
    x = np.clip(state.flat(), -LOG_CLAMP, LOG_CLAMP)
    state = state.with_flat(x)
    cur = elbo(state, h, prior, config.estimator, **kw)
    if not np.isfinite(cur):
        raise NumericalError("initial ELBO is not finite", state=state, iteration=0)
    best, best_x = cur, x.copy()
    trace = [cur]
    opt = _Adam(x.size, config.learning_rate)
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        g = elbo_gradient(state, h, prior, config.estimator, **kw).flat()
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite ELBO gradient", state=state.with_flat(best_x), iteration=it)
        if config.grad_tol > 0 and np.max(np.abs(g)) <= config.grad_tol:
            converged = True
            break
        x = np.clip(opt.step(x, g), -LOG_CLAMP, LOG_CLAMP)
        state = state.with_flat(x)
        new = elbo(state, h, prior, config.estimator, **kw)
        if not np.isfinite(new):
            raise NumericalError("non-finite ELBO", state=state.with_flat(best_x), iteration=it)
        trace.append(new)
        if new > best:
            best, best_x = new, x.copy()
        if config.tolerance > 0 and abs(new - cur) < config.tolerance * abs(new):
            cur = new
            converged = True
            break
        cur = new
    result = FitResult(state.with_flat(best_x), trace, it, converged)
    return result if return_result else result.state


# ---------------------------------------------------------------- export / io

def export_latents(state):
    """(m, 2K+2) rows: [log shape rho, log rate rho, (log shape beta_k, log rate beta_k) for k]."""
    m, K = state.m, state.K
    z = np.empty((m, 2 * K + 2))
    z[:, 0] = state.la_rho
    z[:, 1] = state.lb_rho
    z[:, 2::2] = state.la_beta
    z[:, 3::2] = state.lb_beta
    return z


def save_state(state, path, seed=0, prior=None):
    """Text checkpoint.

    Header: ``# n m K seed prior`` with the prior as 8 comma-separated values
    (a_alpha,b_alpha,a_theta,b_theta,a_rho,b_rho,a_beta,b_beta). Body rows are
    tab separated ``role index k log_shape log_rate`` with k = -1 for the
    scalar factors (alpha, rho). Floats are written with repr so reloads are exact.
    """
    prior = prior or PriorSpec()
    pv = ",".join(repr(float(getattr(prior, f.name))) for f in fields(prior))
    with open(path, "w") as fh:
        fh.write("# n m K seed prior\n")
        fh.write(f"# {state.n} {state.m} {state.K} {int(seed)} {pv}\n")
        for role in ROLES:
            la = getattr(state, "la_" + role)
            lb = getattr(state, "lb_" + role)
            if la.ndim == 1:
                for i in range(la.shape[0]):
                    fh.write(f"{role}\t{i}\t-1\t{float(la[i])!r}\t{float(lb[i])!r}\n")
            else:
                for i in range(la.shape[0]):
                    for k in range(la.shape[1]):
                        fh.write(f"{role}\t{i}\t{k}\t{float(la[i, k])!r}\t{float(lb[i, k])!r}\n")


def load_state(path):
    """Inverse of :func:`save_state`; returns (state, seed, prior)."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if len(lines) < 2 or not lines[1].startswith("#"):
        raise DataError(f"{path}: missing checkpoint header")
    parts = lines[1][1:].split()
    n, m, K, seed = (int(v) for v in parts[:4])
    prior = PriorSpec(*(float(v) for v in parts[4].split(",")))
    st = VariationalState.constant(n, m, K)
    for lineno, line in enumerate(lines[2:], 3):
        if not line.strip():
            continue
        role, i, k, la, lb = line.split("\t")
        i, k = int(i), int(k)
        if role not in ROLES:
            raise DataError(f"{path}:{lineno}: unknown role {role!r}")
        idx = i if k < 0 else (i, k)
        getattr(st, "la_" + role)[idx] = float(la)
        getattr(st, "lb_" + role)[idx] = float(lb)
    return st, seed, prior
