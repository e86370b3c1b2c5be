"""Path simulation tests.

Independent oracles used here:
* covariance identity: E[B1_t (B2_{t+theta} - B2_{theta})] equals the
  integral of rho over [0, t], computed exactly by the kernel.
* pure-lag spectral model: increments of component 2 reproduce the
  increments of component 1 shifted by the lag, so their correlation is 1.
* cross_cov_quadrature from the spectral module (itself tested against
  closed forms) as the target for spectral Monte Carlo estimates.
* linear drift shifts paths by exactly mu * t.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leadlag_lab.kernels import CorrelationKernel
from leadlag_lab.simulate import (
    DriftSpec,
    EmbeddingError,
    Grid,
    GridMismatchError,
    LagModelSpec,
    PathBatch,
    PriceOverflowError,
    batch_meta,
    empirical_cross_cov,
    export_csv,
    iter_path_chunks,
    simulate,
    simulate_hry,
    simulate_spectral,
    to_prices,
)
from leadlag_lab.spectral import CrossSpectralDensity, cross_cov_quadrature


def _const_model(rho_val: float, theta: float = 0.0) -> LagModelSpec:
    return LagModelSpec.hry(theta, CorrelationKernel.constant(rho_val))


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


class TestGrid:
    def test_times_and_end(self):
        g = Grid(dt=0.25, n_steps=4)
        assert np.allclose(g.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert g.t_end == 1.0

    def test_index_of_roundtrip(self):
        g = Grid(dt=0.001, n_steps=1100)
        for i in (0, 17, 1100):
            assert g.index_of(g.times[i]) == i

    def test_index_of_rejects_off_grid(self):
        g = Grid(dt=0.1, n_steps=10)
        with pytest.raises(ValueError):
            g.index_of(0.15)
        with pytest.raises(ValueError):
            g.index_of(1.2)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            Grid(dt=0.0, n_steps=5)
        with pytest.raises(ValueError):
            Grid(dt=0.1, n_steps=0)
        with pytest.raises(ValueError):
            Grid(dt=0.1, n_steps=5, t_start=-1.0)

    @given(st.integers(min_value=0, max_value=500))
    def test_index_of_any_node(self, i):
        g = Grid(dt=0.02, n_steps=500)
        assert g.index_of(float(g.times[i])) == i


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


class TestLagModelSpec:
    def test_requires_matching_fields(self):
        with pytest.raises(ValueError):
            LagModelSpec(form="hry")
        with pytest.raises(ValueError):
            LagModelSpec(form="spectral")
        with pytest.raises(ValueError):
            LagModelSpec(form="other", rho=CorrelationKernel.constant(0.0))
        with pytest.raises(ValueError):
            LagModelSpec.hry(-0.1, CorrelationKernel.constant(0.0))

    def test_spectral_rejects_lag_field(self):
        f = CrossSpectralDensity.pure_lag(0.5, 0.1)
        with pytest.raises(ValueError):
            LagModelSpec(form="spectral", f=f, theta=0.1)

    def test_volatility_validation(self):
        with pytest.raises(ValueError):
            LagModelSpec.hry(0.0, CorrelationKernel.constant(0.0), sigma1=0.0)
        with pytest.raises(ValueError):
            LagModelSpec.hry(0.0, CorrelationKernel.constant(0.0), sigma2=-2.0)

    def test_serialization_roundtrip(self):
        rho = CorrelationKernel.piecewise_constant([0.0, 0.5], [0.8, -0.3])
        m = LagModelSpec.hry(0.25, rho, sigma1=2.0,
                             drift=DriftSpec.brownian(0.5, 0.1, -0.4))
        m2 = LagModelSpec.from_dict(m.to_dict())
        assert m2.model_hash() == m.model_hash()
        assert m2.theta == m.theta
        f = CrossSpectralDensity.multiscale([0.5, 0.25], [0.1, 0.05])
        ms = LagModelSpec.spectral(f, sigma2=0.5, drift=DriftSpec.linear(0.1, 0.2))
        ms2 = LagModelSpec.from_dict(ms.to_dict())
        assert ms2.model_hash() == ms.model_hash()

    def test_hash_separates_models(self):
        a = _const_model(0.5, 0.1)
        b = _const_model(0.5, 0.2)
        c = _const_model(0.6, 0.1)
        assert len({a.model_hash(), b.model_hash(), c.model_hash()}) == 3

    def test_from_dict_rejects_unknown_keys(self):
        d = _const_model(0.5).to_dict()
        d["mystery"] = 1
        with pytest.raises(ValueError):
            LagModelSpec.from_dict(d)

    def test_drift_validation(self):
        with pytest.raises(ValueError):
            DriftSpec(kind="weird")
        with pytest.raises(ValueError):
            DriftSpec.brownian(-1.0, 0.0)
        with pytest.raises(ValueError):
            DriftSpec.brownian(1.0, 1.0, corr=1.5)


# ---------------------------------------------------------------------------
# Reproducibility and chunking
# ---------------------------------------------------------------------------


class TestReproducibility:
    def test_bit_identical_hry(self):
        m = _const_model(0.4, 0.05)
        g = Grid(dt=0.05, n_steps=40)
        a = simulate_hry(m, g, 30, seed=42)
        b = simulate_hry(m, g, 30, seed=42)
        assert np.array_equal(a.values, b.values)
        c = simulate_hry(m, g, 30, seed=43)
        assert not np.array_equal(a.values, c.values)

    def test_bit_identical_spectral(self):
        m = LagModelSpec.spectral(CrossSpectralDensity.pure_lag(0.5, 0.1))
        g = Grid(dt=0.05, n_steps=40)
        a = simulate_spectral(m, g, 30, seed=42)
        b = simulate_spectral(m, g, 30, seed=42)
        assert np.array_equal(a.values, b.values)

    def test_chunking_and_workers_do_not_change_paths(self):
        m = _const_model(0.4, 0.05)
        g = Grid(dt=0.05, n_steps=40)
        base = simulate_hry(m, g, 57, seed=1)
        for kw in ({"chunk_size": 8}, {"chunk_size": 57}, {"chunk_size": 5, "workers": 4}):
            other = simulate_hry(m, g, 57, seed=1, **kw)
            assert np.array_equal(base.values, other.values), kw
        ms = LagModelSpec.spectral(CrossSpectralDensity.pure_lag(0.5, 0.1))
        sb = simulate_spectral(ms, g, 57, seed=1)
        for kw in ({"chunk_size": 11}, {"chunk_size": 3, "workers": 3}):
            other = simulate_spectral(ms, g, 57, seed=1, **kw)
            assert np.array_equal(sb.values, other.values), kw

    def test_path_offset_matches_batch_tail(self):
        m = _const_model(-0.7, 0.0)
        g = Grid(dt=0.1, n_steps=20)
        full = simulate_hry(m, g, 12, seed=5)
        tail = simulate_hry(m, g, 5, seed=5, path_offset=7)
        assert np.array_equal(full.values[7:], tail.values)

    def test_iter_path_chunks_matches_batch(self):
        m = LagModelSpec.spectral(CrossSpectralDensity.pure_lag(0.3, 0.2))
        g = Grid(dt=0.1, n_steps=16)
        full = simulate_spectral(m, g, 23, seed=77)
        parts = []
        for lo, hi, vals in iter_path_chunks(m, g, 23, seed=77, chunk_size=6):
            assert hi - lo == vals.shape[0]
            parts.append(vals)
        assert np.array_equal(np.concatenate(parts, axis=0), full.values)

    def test_dispatch_matches_form(self):
        g = Grid(dt=0.1, n_steps=10)
        m = _const_model(0.5)
        assert np.array_equal(simulate(m, g, 4, seed=2).values,
                              simulate_hry(m, g, 4, seed=2).values)
        with pytest.raises(ValueError):
            simulate_spectral(m, g, 4, seed=2)
        with pytest.raises(ValueError):
            simulate_hry(LagModelSpec.spectral(
                CrossSpectralDensity.pure_lag(0.1, 0.0)), g, 4, seed=2)


# ---------------------------------------------------------------------------
# HRY law checks
# ---------------------------------------------------------------------------


class TestHryLaw:
    def test_rho_one_zero_lag_components_identical(self):
        g = Grid(dt=0.02, n_steps=50)
        b = simulate_hry(_const_model(1.0), g, 25, seed=3)
        assert np.array_equal(b.values[:, :, 0], b.values[:, :, 1])

    def test_rho_zero_components_uncorrelated(self):
        g = Grid(dt=0.01, n_steps=100)
        b = simulate_hry(_const_model(0.0), g, 10_000, seed=4)
        est, se = empirical_cross_cov(b, 1.0, 1.0)
        assert abs(est) < 3 * se

    def test_covariance_identity_constant_kernel(self):
        # E[B1_1 (B2_1.1 - B2_0.1)] = integral of rho over [0,1] = 0.5
        g = Grid(dt=0.01, n_steps=110)
        m = _const_model(0.5, 0.1)
        b = simulate_hry(m, g, 100_000, seed=11)
        i1, ia, ib = g.index_of(1.0), g.index_of(1.1), g.index_of(0.1)
        prods = b.values[:, i1, 0] * (b.values[:, ia, 1] - b.values[:, ib, 1])
        est = prods.mean()
        se = prods.std(ddof=1) / math.sqrt(b.n_paths)
        assert abs(est - 0.5) <= 3 * se

    def test_covariance_identity_sign_changing_kernel(self):
        rho = CorrelationKernel.piecewise_constant([0.0, 0.4, 0.7], [0.8, -0.6, 0.3])
        g = Grid(dt=0.01, n_steps=110)
        b = simulate_hry(LagModelSpec.hry(0.1, rho), g, 50_000, seed=3)
        i1, ia, ib = g.index_of(1.0), g.index_of(1.1), g.index_of(0.1)
        prods = b.values[:, i1, 0] * (b.values[:, ia, 1] - b.values[:, ib, 1])
        est = prods.mean()
        se = prods.std(ddof=1) / math.sqrt(b.n_paths)
        assert abs(est - rho.integral(0, 1.0)) <= 3 * se

    def test_marginal_variance_is_t(self):
        g = Grid(dt=0.02, n_steps=100)
        b = simulate_hry(_const_model(0.6, 0.1), g, 20_000, seed=8)
        for t in (0.5, 1.0, 2.0):
            for comp in (0, 1):
                x = b.values[:, g.index_of(t), comp]
                v = x.var(ddof=1)
                se = v * math.sqrt(2.0 / (b.n_paths - 1))
                assert abs(v - t) <= 3 * se, (t, comp, v)

    def test_volatility_scales_paths(self):
        g = Grid(dt=0.05, n_steps=20)
        m1 = _const_model(0.5, 0.0)
        m2 = LagModelSpec.hry(0.0, CorrelationKernel.constant(0.5),
                              sigma1=2.0, sigma2=3.0)
        a = simulate_hry(m1, g, 10, seed=6)
        b = simulate_hry(m2, g, 10, seed=6)
        assert np.allclose(b.values[:, :, 0], 2.0 * a.values[:, :, 0], rtol=1e-12)
        assert np.allclose(b.values[:, :, 1], 3.0 * a.values[:, :, 1], rtol=1e-12)

    def test_lag_grid_mismatch_rejected(self):
        g = Grid(dt=0.02, n_steps=50)
        with pytest.raises(GridMismatchError):
            simulate_hry(_const_model(0.5, 0.05), g, 4, seed=1)


# ---------------------------------------------------------------------------
# Drift
# ---------------------------------------------------------------------------


class TestDrift:
    def test_linear_drift_adds_exact_slope(self):
        g = Grid(dt=0.01, n_steps=110)
        m0 = _const_model(0.3, 0.1)
        ml = LagModelSpec.hry(0.1, CorrelationKernel.constant(0.3),
                              drift=DriftSpec.linear(0.3, -0.2))
        a = simulate_hry(m0, g, 20, seed=9)
        b = simulate_hry(ml, g, 20, seed=9)
        diff = b.values - a.values
        t = g.times
        assert np.max(np.abs(diff[:, :, 0] - 0.3 * t)) < 1e-12
        assert np.max(np.abs(diff[:, :, 1] + 0.2 * t)) < 1e-12

    def test_brownian_drift_leaves_noise_unchanged_and_independent(self):
        # Same seed with and without drift isolates the drift path exactly.
        g = Grid(dt=0.01, n_steps=110)
        rho = CorrelationKernel.constant(0.3)
        m0 = LagModelSpec.hry(0.1, rho)
        md = LagModelSpec.hry(0.1, rho, drift=DriftSpec.brownian(0.5, 0.7, 0.2))
        a = simulate_hry(m0, g, 2000, seed=9)
        b = simulate_hry(md, g, 2000, seed=9)
        drift_path = b.values - a.values
        assert np.abs(drift_path).max() > 0.01
        da = np.diff(drift_path, axis=1)
        db = np.diff(a.values, axis=1)
        for comp in (0, 1):
            prods = (da[:, :, comp] * db[:, :, comp]).ravel()
            se = prods.std(ddof=1) / math.sqrt(prods.size)
            assert abs(prods.mean()) <= 3 * se

    def test_brownian_drift_variance(self):
        g = Grid(dt=0.01, n_steps=100)
        rho = CorrelationKernel.constant(0.0)
        md = LagModelSpec.hry(0.0, rho, drift=DriftSpec.brownian(0.5, 0.0))
        m0 = LagModelSpec.hry(0.0, rho)
        a = simulate_hry(m0, g, 20_000, seed=21)
        b = simulate_hry(md, g, 20_000, seed=21)
        drift1 = (b.values - a.values)[:, -1, 0]
        v = drift1.var(ddof=1)
        target = 0.25  # vol^2 * t = 0.5^2 * 1
        se = v * math.sqrt(2.0 / (a.n_paths - 1))
        assert abs(v - target) <= 3 * se


# ---------------------------------------------------------------------------
# Spectral law checks
# ---------------------------------------------------------------------------


class TestSpectralLaw:
    def test_zero_density_components_independent(self):
        f = CrossSpectralDensity.multiscale([0.0], [0.0])
        g = Grid(dt=0.01, n_steps=100)
        b = simulate_spectral(LagModelSpec.spectral(f), g, 10_000, seed=14)
        est, se = empirical_cross_cov(b, 1.0, 1.0)
        assert abs(est) < 3 * se
        x = b.values[:, g.index_of(1.0), 0]
        v = x.var(ddof=1)
        assert abs(v - 1.0) <= 3 * v * math.sqrt(2.0 / (b.n_paths - 1))

    def test_pure_lag_increments_shift(self):
        # R0 = 1 with lag = one grid step: increments coincide after the shift.
        f = CrossSpectralDensity.pure_lag(1.0, 0.05)
        g = Grid(dt=0.05, n_steps=64)
        b = simulate_spectral(LagModelSpec.spectral(f), g, 2000, seed=13)
        d = np.diff(b.values, axis=1)
        x = d[:, :-1, 0].ravel()
        y = d[:, 1:, 1].ravel()
        corr = np.corrcoef(x, y)[0, 1]
        assert corr > 0.999

    def test_multiscale_matches_quadrature(self):
        f = CrossSpectralDensity.multiscale(R=[0.6, 0.4, 0.25, 0.1],
                                            theta=[0.08, 0.04, 0.02, 0.01])
        g = Grid(dt=0.01, n_steps=200)
        b = simulate_spectral(LagModelSpec.spectral(f), g, 60_000, seed=101)
        for (t, s) in [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0)]:
            est, se = empirical_cross_cov(b, t, s)
            target = cross_cov_quadrature(f, t, s)
            assert abs(est - target) <= 3 * se, (t, s, est, target)

    def test_matches_hry_for_constant_kernel(self):
        # Constant rho with lag theta is the pure-lag spectral model.
        theta, r = 0.1, 0.5
        g = Grid(dt=0.01, n_steps=150)
        bh = simulate_hry(_const_model(r, theta), g, 30_000, seed=31)
        bs = simulate_spectral(
            LagModelSpec.spectral(CrossSpectralDensity.pure_lag(r, theta)),
            g, 30_000, seed=32)
        for (t, s) in [(1.0, 1.0), (0.5, 1.5), (1.5, 0.5)]:
            eh, seh = empirical_cross_cov(bh, t, s)
            es, ses = empirical_cross_cov(bs, t, s)
            assert abs(eh - es) <= 3 * math.hypot(seh, ses), (t, s)

    def test_stationary_increments(self):
        f = CrossSpectralDensity.multiscale([0.5, 0.3], [0.1, 0.05])
        g = Grid(dt=0.01, n_steps=300)
        b = simulate_spectral(LagModelSpec.spectral(f), g, 30_000, seed=41)
        h = 50  # window of 0.5 time units
        for comp in (0, 1):
            w1 = b.values[:, h, comp] - b.values[:, 0, comp]
            w2 = b.values[:, 250, comp] - b.values[:, 200, comp]
            prods1 = w1 * (b.values[:, h, 1 - comp] - b.values[:, 0, 1 - comp])
            prods2 = w2 * (b.values[:, 250, 1 - comp] - b.values[:, 200, 1 - comp])
            se = math.hypot(prods1.std(ddof=1), prods2.std(ddof=1)) / math.sqrt(b.n_paths)
            assert abs(prods1.mean() - prods2.mean()) <= 3 * se

    def test_invalid_density_rejected(self):
        lam = np.array([-2.0, -1.0, 1.0, 2.0])
        f = CrossSpectralDensity.tabulated(lam, np.full(4, 0.8j))
        with pytest.raises(ValueError):
            simulate_spectral(LagModelSpec.spectral(f), Grid(dt=0.1, n_steps=8),
                              2, seed=1)

    def test_embedding_failure_reports_eigenvalue(self, monkeypatch):
        # Force a non-PSD circulant block sequence through the guard.
        # The package re-exports the simulate() function under the same
        # name, so fetch the module itself for patching.
        import importlib

        sim = importlib.import_module("leadlag_lab.simulate")

        def fake_increment_cross_cov(f, dt, k):
            return 5.0 * dt if abs(k) == 1 else 0.0

        monkeypatch.setattr(sim, "increment_cross_cov", fake_increment_cross_cov)
        f = CrossSpectralDensity.pure_lag(0.5, 0.0)
        with pytest.raises(EmbeddingError) as exc:
            simulate_spectral(LagModelSpec.spectral(f), Grid(dt=0.1, n_steps=8),
                              2, seed=1)
        assert exc.value.min_eigenvalue < 0


# ---------------------------------------------------------------------------
# Prices and estimators
# ---------------------------------------------------------------------------


def _manual_batch(values: np.ndarray) -> PathBatch:
    n_paths, n_nodes, _ = values.shape
    grid = Grid(dt=1.0, n_steps=n_nodes - 1)
    return PathBatch(grid=grid, n_paths=n_paths, values=values, seed=0,
                     model_hash="0" * 16)


class TestPrices:
    def test_zero_log_price_gives_unit_price(self):
        b = _manual_batch(np.zeros((3, 4, 2)))
        assert np.array_equal(to_prices(b).prices, np.ones((3, 4, 2)))

    def test_log2_node_exact(self):
        v = np.zeros((1, 3, 2))
        v[0, 1, 0] = math.log(2.0)
        b = to_prices(_manual_batch(v))
        assert b.prices[0, 1, 0] == 2.0

    def test_roundtrip_through_log(self):
        g = Grid(dt=0.02, n_steps=50)
        b = to_prices(simulate_hry(_const_model(0.5, 0.0), g, 40, seed=15))
        assert np.allclose(np.log(b.prices), b.values, rtol=0, atol=1e-12)

    def test_overflow_names_path_and_node(self):
        v = np.zeros((2, 3, 2))
        v[1, 2, 1] = 1e4
        with pytest.raises(PriceOverflowError) as exc:
            to_prices(_manual_batch(v))
        msg = str(exc.value)
        assert "path 1" in msg and "index 2" in msg

    def test_batch_rejects_nonfinite_values(self):
        v = np.zeros((1, 3, 2))
        v[0, 1, 0] = np.nan
        with pytest.raises(ValueError):
            _manual_batch(v)


class TestEmpiricalCrossCov:
    def test_identical_paths_zero_stderr(self):
        v = np.ones((5, 4, 2))
        b = _manual_batch(v)
        est, se = empirical_cross_cov(b, 1.0, 2.0)
        assert est == 1.0 and se == 0.0

    def test_off_grid_times_rejected(self):
        g = Grid(dt=0.1, n_steps=10)
        b = simulate_hry(_const_model(0.5), g, 4, seed=1)
        with pytest.raises(ValueError):
            empirical_cross_cov(b, 0.55, 1.0)

    def test_bad_pair_rejected(self):
        b = _manual_batch(np.zeros((2, 3, 2)))
        with pytest.raises(ValueError):
            empirical_cross_cov(b, 1.0, 1.0, pair=(0, 2))

    def test_zero_lag_identity(self):
        g = Grid(dt=0.01, n_steps=100)
        b = simulate_hry(_const_model(0.5, 0.0), g, 40_000, seed=17)
        est, se = empirical_cross_cov(b, 1.0, 1.0)
        assert abs(est - 0.5) <= 3 * se


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


class TestExport:
    def test_csv_roundtrip_and_sidecar(self, tmp_path):
        g = Grid(dt=0.25, n_steps=4)
        b = to_prices(simulate_hry(_const_model(0.4, 0.25), g, 3, seed=77,
                                   path_offset=10))
        csv_path = tmp_path / "paths.csv"
        export_csv(b, str(csv_path))
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "path_id,t,X1,X2,S1,S2"
        assert len(lines) == 1 + 3 * 5
        first = lines[1].split(",")
        assert first[0] == "10"
        assert float(first[1]) == 0.0
        assert float(first[2]) == b.values[0, 0, 0]
        # every float round-trips exactly
        for line in lines[1:]:
            parts = line.split(",")
            p = int(parts[0]) - 10
            row = [float(x) for x in parts[1:]]
            i = g.index_of(row[0])
            assert row[1] == b.values[p, i, 0]
            assert row[3] == b.prices[p, i, 0]
        meta_path = csv_path.with_name("paths.csv.meta.json")
        assert meta_path.exists()
        import json

        meta = json.loads(meta_path.read_text())
        assert meta == batch_meta(b)
        assert meta["model_hash"] == b.model_hash
        assert meta["grid"]["dt"] == 0.25

    def test_export_is_deterministic(self, tmp_path):
        g = Grid(dt=0.5, n_steps=2)
        b = simulate_hry(_const_model(0.4, 0.5), g, 2, seed=5)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_csv(b, str(p1))
        export_csv(b, str(p2))
        assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# Property-based checks
# ---------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(
    r=st.floats(min_value=-1.0, max_value=1.0),
    k0=st.integers(min_value=0, max_value=3),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_single_path_matches_rerun(r, k0, seed):
    g = Grid(dt=0.125, n_steps=16)
    m = _const_model(r, k0 * 0.125)
    a = simulate_hry(m, g, 3, seed=seed)
    b = simulate_hry(m, g, 1, seed=seed, path_offset=2)
    assert np.array_equal(a.values[2:], b.values)


@settings(max_examples=20, deadline=None)
@given(
    ts=st.lists(st.floats(min_value=0.01, max_value=2.0), min_size=1, max_size=4),
    vals=st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=5, max_size=5),
)
def test_model_hash_roundtrip_property(ts, vals):
    knots = np.concatenate(([0.0], np.cumsum(np.asarray(ts))))
    rho = CorrelationKernel.piecewise_constant(knots, vals[: knots.size])
    m = LagModelSpec.hry(0.5, rho)
    assert LagModelSpec.from_dict(m.to_dict()).model_hash() == m.model_hash()
