import numpy as np
import pytest

from hyvint import diffusion as dif
from hyvint.errors import DataError, DomainError


def small_config(**kw):
    base = dict(epochs=200, batch_size=32, hidden_dim=32, num_layers=2, dropout=0.0, T=50,
                time_dim=8, dtype="float64")
    base.update(kw)
    return dif.DiffusionConfig(**base)


class TestSchedule:
    def test_single_step(self):
        assert list(dif.linear_schedule(1, 0.3, 0.5).kappa) == [0.3]

    def test_defaults(self):
        s = dif.linear_schedule(200)
        assert s.kappa[0] == 1e-4 and s.kappa[-1] == 0.02 and s.T == 200

    def test_eta_bar(self):
        np.testing.assert_allclose(dif.NoiseSchedule(np.array([0.1, 0.2])).eta_bar, [0.9, 0.72], atol=1e-15)

    def test_monotone(self):
        eb = dif.linear_schedule(200).eta_bar
        assert np.all(np.diff(eb) < 0) and eb[-1] > 0 and eb[0] < 1

    @pytest.mark.parametrize("args", [(0,), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(DomainError):
            dif.linear_schedule(*args)


class TestForward:
    def test_small_noise_limit(self, rng):
        s = dif.NoiseSchedule(np.full(3, 1e-12))
        z0 = rng.normal(size=(4, 3))
        zt, _ = dif.forward_marginal_sample(z0, 1, s, rng)
        np.testing.assert_allclose(zt, z0, atol=1e-5)

    def test_zero_start_variance(self, rng):
        s = dif.linear_schedule(200)
        t = 50
        zt, eps = dif.forward_marginal_sample(np.zeros((100_000, 1)), t, s, rng)
        target = 1 - s.eta_bar[t - 1]
        np.testing.assert_allclose(zt, np.sqrt(target) * eps)
        v = zt.ravel() ** 2
        assert abs(v.mean() - target) <= 3 * v.std() / np.sqrt(v.size)

    def test_variance_preserving(self, rng):
        s = dif.linear_schedule(200)
        z0 = rng.standard_normal((100_000, 2))
        zt, _ = dif.forward_marginal_sample(z0, 120, s, rng)
        np.testing.assert_allclose(np.cov(zt.T), np.eye(2), atol=0.02)

    def test_bad_step(self, rng):
        with pytest.raises(DomainError):
            dif.forward_marginal_sample(np.zeros(2), 0, dif.linear_schedule(5), rng)


class TestLoss:
    def test_oracle_zero(self, rng):
        s = dif.linear_schedule(20)
        _, eps = dif.forward_marginal_sample(rng.normal(size=(16, 3)), 7, s, rng)
        assert dif.noise_loss(eps, eps) == 0.0

    def test_nonnegative(self, rng):
        assert dif.noise_loss(rng.normal(size=(5, 2)), rng.normal(size=(5, 2))) >= 0

    def test_constant_dataset_learns(self):
        X = np.tile([[0.5, -1.0, 2.0]], (64, 1))
        res = dif.train_denoiser(X, dif.linear_schedule(50), small_config(epochs=300),
                                 np.random.default_rng(0), return_result=True)
        assert np.mean(res.losses[-100:]) < res.losses[0]

    def test_rejects_bad_data(self):
        with pytest.raises(DataError):
            dif.train_denoiser(np.zeros((0, 2)), dif.linear_schedule(5), small_config(), np.random.default_rng(0))
        with pytest.raises(DataError):
            dif.train_denoiser(np.array([[np.nan, 0.0]]), dif.linear_schedule(5), small_config(),
                               np.random.default_rng(0))


@pytest.mark.parametrize("dropout", [0.0, 0.3])
def test_backprop_finite_differences(dropout):
    rng = np.random.default_rng(1)
    net = dif.DenoiserNet(3, hidden_dim=6, num_layers=1, dropout=dropout, time_dim=4, rng=rng, dtype=np.float64)
    assert len(net.params) == 4  # two weight layers
    z = rng.normal(size=(5, 3))
    t = rng.integers(1, 20, size=5)
    R = rng.normal(size=(5, 3))

    def loss():
        out, cache = net.forward(z, t, train=True, rng=np.random.default_rng(7))
        return float(np.sum(out * R)), cache

    _, cache = loss()
    grads = net.backward(cache, R)
    h = 1e-6
    for p, g in zip(net.params, grads):
        fd = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()[0]
            p[idx] = old - h
            dn = loss()[0]
            p[idx] = old
            fd[idx] = (up - dn) / (2 * h)
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
        assert rel.max() <= 1e-4


class TestReverse:
    def test_identity_chain(self):
        class Zero:
            dim = 2
            mean = np.zeros(2)
            std = np.ones(2)

            def predict(self, z, t):
                return np.zeros_like(z)

        s = dif.NoiseSchedule(np.full(10, 1e-12))
        out = dif.reverse_sample(Zero(), s, 5, np.random.default_rng(3))
        start = np.random.default_rng(3).standard_normal((5, 2))
        np.testing.assert_allclose(out, start, atol=1e-5)

    def test_deterministic(self):
        X = np.random.default_rng(2).normal(size=(40, 4))
        cfg = small_config(epochs=5)
        nets = [dif.train_denoiser(X, cfg.schedule(), cfg, np.random.default_rng(5)) for _ in range(2)]
        a = dif.reverse_sample(nets[0], cfg.schedule(), 10, np.random.default_rng(9))
        b = dif.reverse_sample(nets[1], cfg.schedule(), 10, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_output_dimension(self):
        X = np.random.default_rng(2).normal(size=(10, 6))
        cfg = small_config(epochs=1)
        net = dif.train_denoiser(X, cfg.schedule(), cfg, np.random.default_rng(0))
        assert net.widths[-1] == 6
        assert dif.reverse_sample(net, cfg.schedule(), 3, np.random.default_rng(0)).shape == (3, 6)
        assert all(np.all(np.isfinite(p)) for p in net.params)


def test_checkpoint_round_trip(tmp_path):
    X = np.random.default_rng(4).normal(2.0, 3.0, size=(30, 4))
    cfg = small_config(epochs=2, dtype="float32")
    net = dif.train_denoiser(X, cfg.schedule(), cfg, np.random.default_rng(0))
    path = tmp_path / "net.bin"
    dif.save_net(net, cfg.schedule(), str(path))
    net2, sched2 = dif.load_net(str(path))
    assert np.array_equal(sched2.kappa, cfg.schedule().kappa)
    assert np.array_equal(net2.mean, net.mean) and np.array_equal(net2.std, net.std)
    for p, q in zip(net.params, net2.params):
        assert p.dtype == q.dtype and np.array_equal(p, q)
    a = dif.reverse_sample(net, sched2, 4, np.random.default_rng(1))
    b = dif.reverse_sample(net2, sched2, 4, np.random.default_rng(1))
    assert np.array_equal(a, b)


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"not a net")
    with pytest.raises(DataError):
        dif.load_net(str(p))
