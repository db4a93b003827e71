import numpy as np
import pytest

from cachecast.channel import (
    BsGeometry,
    build_correlation,
    default_geometry,
    load_channels,
    path_loss_db,
    resolve_angles,
    sample_channels,
    save_channels,
)
from cachecast.errors import ValidationError
from cachecast.rates import default_config


class TestPathLoss:
    def test_one_km(self):
        assert path_loss_db(1.0) == pytest.approx(128.1)

    def test_398_m(self):
        assert path_loss_db(0.398) == pytest.approx(113.06, abs=0.01)

    def test_100_m(self):
        assert path_loss_db(0.1) == pytest.approx(90.5, abs=0.01)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            path_loss_db(0.0)


class TestCorrelation:
    def test_uncorrelated_is_scaled_identity(self):
        cfg = default_config(cp_antennas=4, corr_rho=0.0)
        geo = BsGeometry((300.0,), angles_deg=(25.0,))
        k = build_correlation(geo, 0, cfg)
        g = k[0, 0].real
        assert np.allclose(k, g * np.eye(4))

    def test_single_antenna_scalar(self):
        cfg = default_config(cp_antennas=1)
        geo = BsGeometry((300.0,), angles_deg=(0.0,))
        k = build_correlation(geo, 0, cfg)
        assert k.shape == (1, 1)
        assert k[0, 0].imag == pytest.approx(0.0)

    def test_trace_and_psd(self):
        cfg = default_config(cp_antennas=4, corr_rho=0.5)
        geo = BsGeometry((398.0,), angles_deg=(30.0,))
        k = build_correlation(geo, 0, cfg)
        # trace oracle: M * g with g from the link-budget model
        gain_db = cfg.antenna_gain_dbi - cfg.pattern_loss_db - path_loss_db(0.398)
        g = 10.0 ** (gain_db / 10.0)
        assert np.real(np.trace(k)) == pytest.approx(4 * g, rel=1e-12)
        evals = np.linalg.eigvalsh(k)
        assert evals.min() >= -1e-12 * np.real(np.trace(k))
        assert np.allclose(k, k.conj().T)

    def test_trace_monotone_in_distance(self):
        cfg = default_config()
        geo = resolve_angles(default_geometry(), seed=0)
        traces = [
            np.real(np.trace(build_correlation(geo, l, cfg)))
            for l in range(geo.num_bs)
        ]
        order_by_distance = np.argsort(geo.distances_m)
        assert list(np.argsort(traces)[::-1]) == list(order_by_distance)

    def test_requires_angles(self):
        with pytest.raises(ValidationError):
            build_correlation(BsGeometry((100.0,)), 0, default_config(cp_antennas=2))


class TestSampling:
    def test_deterministic(self):
        cfg = default_config(cp_antennas=3)
        geo = default_geometry()
        a = sample_channels(geo, cfg, seed=42, n_samples=5)
        b = sample_channels(geo, cfg, seed=42, n_samples=5)
        assert np.array_equal(a.samples, b.samples)

    def test_roles_are_disjoint_streams(self):
        cfg = default_config(cp_antennas=3)
        geo = default_geometry()
        tr = sample_channels(geo, cfg, seed=42, n_samples=5, role="train")
        te = sample_channels(geo, cfg, seed=42, n_samples=5, role="test")
        assert not np.allclose(tr.samples, te.samples)

    def test_empirical_covariance_matches_model(self):
        cfg = default_config(cp_antennas=3, num_bs=1)
        geo = BsGeometry((300.0,), angles_deg=(40.0,))
        cs = sample_channels(geo, cfg, seed=1, n_samples=100_000)
        h = cs.samples[:, 0, :]
        emp = (h.conj()[:, :, None] * h[:, None, :]).mean(axis=0).T
        k = build_correlation(geo, 0, cfg)
        err = np.linalg.norm(emp - k) / np.linalg.norm(k)
        assert err <= 0.03

    def test_mean_energy_matches_trace(self):
        cfg = default_config(cp_antennas=4, num_bs=1)
        geo = BsGeometry((450.0,), angles_deg=(-20.0,))
        cs = sample_channels(geo, cfg, seed=3, n_samples=100_000)
        energy = np.sum(np.abs(cs.samples[:, 0, :]) ** 2, axis=1).mean()
        k = build_correlation(geo, 0, cfg)
        assert energy == pytest.approx(np.real(np.trace(k)), rel=0.03)

    def test_angles_persist_across_roles(self):
        geo = default_geometry()
        a = resolve_angles(geo, seed=9)
        b = resolve_angles(geo, seed=9)
        assert a.angles_deg == b.angles_deg
        c = resolve_angles(geo, seed=10)
        assert a.angles_deg != c.angles_deg


class TestSerialization:
    def test_round_trip_lossless(self, tmp_path):
        cfg = default_config(cp_antennas=3)
        cs = sample_channels(default_geometry(), cfg, seed=7, n_samples=4)
        path = tmp_path / "set.chn"
        save_channels(cs, path)
        back = load_channels(path)
        assert np.array_equal(back.samples, cs.samples)
        assert back.seed == cs.seed and back.role == cs.role

    def test_truncated_file_rejected(self, tmp_path):
        cfg = default_config(cp_antennas=2)
        cs = sample_channels(default_geometry(), cfg, seed=7, n_samples=2)
        path = tmp_path / "set.chn"
        save_channels(cs, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(ValidationError):
            load_channels(path)
