"""Gaussian DDPM over fixed-length real vectors with a small numpy MLP denoiser."""

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, NumericalError

MAGIC = b"HYVDNET1"


@dataclass(frozen=True)
class NoiseSchedule:
    """kappa[t-1] is the step-t variance; eta = 1 - kappa; eta_bar the running product."""

    kappa: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=np.float64)
        if k.ndim != 1 or k.size < 1 or np.any(k <= 0) or np.any(k >= 1):
            raise DomainError("kappa must be a nonempty vector in (0, 1)")
        object.__setattr__(self, "kappa", k)

    @property
    def T(self):
        return self.kappa.size

    @property
    def eta(self):
        return 1.0 - self.kappa

    @property
    def eta_bar(self):
        return np.cumprod(self.eta)


def linear_schedule(T, beta_start=1e-4, beta_end=0.02):
    if T < 1:
        raise DomainError("T must be >= 1")
    if not (0 < beta_start <= beta_end < 1):
        raise DomainError("need 0 < beta_start <= beta_end < 1")
    if T == 1:
        return NoiseSchedule(np.array([beta_start]))
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def forward_marginal_sample(z0, t, schedule, rng):
    """Draw z_t | z_0 in one shot; returns (z_t, eps). ``t`` may be an int or per-row array."""
    z0 = np.asarray(z0, dtype=np.float64)
    t_arr = np.asarray(t)
    if np.any(t_arr < 1) or np.any(t_arr > schedule.T):
        raise DomainError(f"t must lie in [1, {schedule.T}]")
    eb = schedule.eta_bar[t_arr - 1]
    if eb.ndim == 1 and z0.ndim == 2:
        eb = eb[:, None]
    eps = rng.standard_normal(z0.shape)
    return np.sqrt(eb) * z0 + np.sqrt(1.0 - eb) * eps, eps


def time_embedding(t, dim):
    """Sinusoidal embedding of integer steps, shape (len(t), dim)."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    ang = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _silu(x):
    sig = 1.0 / (1.0 + np.exp(-x))
    return x * sig, sig


class DenoiserNet:
    """MLP eps(z, t): [z, emb(t)] -> hidden x num_layers (SiLU, dropout) -> dim."""

    def __init__(self, dim, hidden_dim=512, num_layers=4, dropout=0.1, time_dim=32,
                 rng=None, dtype=np.float32):
        if num_layers < 1:
            raise DomainError("num_layers must be >= 1")
        self.dim = int(dim)
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(num_layers)
        self.dropout = float(dropout)
        self.time_dim = int(time_dim)
        self.dtype = np.dtype(dtype)
        self.mean = np.zeros(self.dim)
        self.std = np.ones(self.dim)
        widths = [self.dim + self.time_dim] + [self.hidden_dim] * self.num_layers + [self.dim]
        self.widths = widths
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(self.dtype))
            self.params.append(rng.uniform(-bound, bound, fan_out).astype(self.dtype))

    def forward(self, z, t, train=False, rng=None):
        """Returns (output, cache). Dropout only when ``train``."""
        h = np.concatenate([np.asarray(z), time_embedding(t, self.time_dim)], axis=1).astype(self.dtype)
        cache = []
        nl = len(self.params) // 2
        for layer in range(nl):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            pre = h @ W + b
            if layer == nl - 1:
                cache.append((h, None, None, None))
                return pre, cache
            act, sig = _silu(pre)
            mask = None
            if train and self.dropout > 0:
                keep = 1.0 - self.dropout
                mask = (rng.random(act.shape) < keep).astype(self.dtype) / self.dtype.type(keep)
                act = act * mask
            cache.append((h, pre, sig, mask))
            h = act

    def backward(self, cache, dout):
        """Parameter gradients for an upstream gradient ``dout`` of the output."""
        grads = [None] * len(self.params)
        g = dout.astype(self.dtype)
        for layer in reversed(range(len(cache))):
            h, pre, sig, mask = cache[layer]
            if pre is not None:
                if mask is not None:
                    g = g * mask
                g = g * (sig * (1.0 + pre * (1.0 - sig)))
            grads[2 * layer] = h.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer:
                g = g @ self.params[2 * layer].T
        return grads

    def predict(self, z, t):
        out, _ = self.forward(z, t)
        return out

    def n_params(self):
        return sum(p.size for p in self.params)


@dataclass
class DiffusionConfig:
    epochs: int = 1000
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-4
    hidden_dim: int = 512
    num_layers: int = 4
    dropout: float = 0.1
    T: int = 200
    beta_start: float = 1e-4
    beta_end: float = 0.02
    time_dim: int = 32
    standardize: bool = True
    dtype: str = "float32"
    ema_decay: float = 0.999  # 0 disables weight averaging

    def schedule(self):
        return linear_schedule(self.T, self.beta_start, self.beta_end)


class AdamW:
    def __init__(self, params, lr=1e-3, weight_decay=1e-4, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.wd, self.b1, self.b2, self.eps = lr, weight_decay, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            p *= 1.0 - self.lr * self.wd
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def noise_loss(pred, eps):
    """Squared error summed over dimensions, averaged over the batch."""
    d = np.asarray(pred, dtype=np.float64) - eps
    return float(np.mean(np.sum(d * d, axis=1)))


@dataclass
class TrainResult:
    net: DenoiserNet
    losses: list = field(default_factory=list)


def train_denoiser(latents, schedule, config, rng, return_result=False):
    """Minibatch AdamW on the noise-prediction loss; records per-epoch mean loss.

    The returned network carries an exponential moving average of the weights
    (``config.ema_decay``), which is what sampling uses.
    """
    X = np.asarray(latents, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DataError("need at least one latent vector")
    if not np.all(np.isfinite(X)):
        raise DataError("latent vectors contain non-finite entries")
    dt = np.dtype(config.dtype)
    net = DenoiserNet(X.shape[1], config.hidden_dim, config.num_layers, config.dropout,
                      config.time_dim, rng=rng, dtype=dt)
    if config.standardize:
        net.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        net.std = np.where(sd > 1e-8, sd, 1.0)
    Xs = (X - net.mean) / net.std
    opt = AdamW(net.params, config.lr, config.weight_decay)
    ema = [p.copy() for p in net.params] if config.ema_decay > 0 else None
    N = Xs.shape[0]
    bs = max(1, min(config.batch_size, N))
    eta_bar = schedule.eta_bar
    losses = []
    for epoch in range(config.epochs):
        perm = rng.permutation(N)
        tot = 0.0
        for start in range(0, N, bs):
            idx = perm[start:start + bs]
            z0 = Xs[idx]
            t = rng.integers(1, schedule.T + 1, size=idx.size)
            eps = rng.standard_normal(z0.shape)
            eb = eta_bar[t - 1][:, None]
            zt = np.sqrt(eb) * z0 + np.sqrt(1.0 - eb) * eps
            pred, cache = net.forward(zt, t, train=True, rng=rng)
            diff = pred - eps.astype(dt)
            loss = float(np.mean(np.sum(diff.astype(np.float64) ** 2, axis=1)))
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite denoiser loss at epoch {epoch}", iteration=epoch)
            grads = net.backward(cache, (2.0 / idx.size) * diff)
            opt.step(net.params, grads)
            if ema is not None:
                # warm-up so early weights fade quickly
                d = min(config.ema_decay, (1.0 + opt.t) / (10.0 + opt.t))
                for e, p in zip(ema, net.params):
                    e *= d
                    e += (1.0 - d) * p
            tot += loss * idx.size
        losses.append(tot / N)
    if ema is not None:
        net.params = ema
    res = TrainResult(net, losses)
    return res if return_result else net


def reverse_sample(net, schedule, count, rng):
    """Ancestral sampling from N(0, I) down to step 1; returns (count, dim) in data units."""
    z = rng.standard_normal((count, net.dim))
    kappa, eta, eta_bar = schedule.kappa, schedule.eta, schedule.eta_bar
    for t in range(schedule.T, 0, -1):
        tt = np.full(count, t)
        eps = np.asarray(net.predict(z, tt), dtype=np.float64)
        k = kappa[t - 1]
        mu = (z - (k / math.sqrt(1.0 - eta_bar[t - 1])) * eps) / math.sqrt(eta[t - 1])
        if t > 1:
            z = mu + math.sqrt(k) * rng.standard_normal(z.shape)
        else:
            z = mu
    return z * net.std + net.mean


# ---------------------------------------------------------------- checkpoint

def save_net(net, schedule, path):
    """Byte layout: 8-byte magic ``HYVDNET1``; little-endian uint32 header length L;
    L bytes of UTF-8 JSON (dim, widths, time_dim, dropout, dtype, mean, std, kappa);
    then all weight/bias arrays in layer order as little-endian float64."""
    header = {
        "dim": net.dim, "widths": net.widths, "hidden_dim": net.hidden_dim,
        "num_layers": net.num_layers, "time_dim": net.time_dim, "dropout": net.dropout,
        "dtype": net.dtype.name, "mean": [float(v) for v in net.mean],
        "std": [float(v) for v in net.std], "kappa": [float(v) for v in schedule.kappa],
    }
    raw = json.dumps(header).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_net(path):
    """Returns (net, schedule)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read network checkpoint {path}: {exc}") from None
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not a denoiser checkpoint")
    (hl,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hl].decode())
    net = DenoiserNet(header["dim"], header["hidden_dim"], header["num_layers"],
                      header["dropout"], header["time_dim"], dtype=header["dtype"])
    net.mean = np.array(header["mean"])
    net.std = np.array(header["std"])
    flat = np.frombuffer(data[12 + hl:], dtype="<f8")
    pos = 0
    for i, p in enumerate(net.params):
        net.params[i] = flat[pos:pos + p.size].reshape(p.shape).astype(net.dtype)
        pos += p.size
    if pos != flat.size:
        raise DataError(f"{path}: parameter block has wrong length")
    return net, NoiseSchedule(np.array(header["kappa"]))

