"""
Unit Tests for rng and gaussian_model
======================================

Counter-based streams, the discretized Wiener model, drifts and the
Girsanov density.
"""
import pytest

import numpy as np

from modules.gaussian_model import (
    DriftSpec,
    GaussianPathModel,
    TiltedMeasure,
    estimate,
    forward_recursion,
    girsanov_log_density,
    path_from_increments,
    simulate_sde,
)
from modules.rng import STREAM_FRESH, STREAM_NOISE, chunk_rng, chunks, map_chunks
from modules.transport_base import IncrementModel, MonteCarloSettings, ValidationError


class TestRandomStreams:
    """Tests for rng"""

    def test_chunk_rng_reproducible(self):
        """Same (seed, stream, chunk) gives the same draws"""
        a = chunk_rng(42, STREAM_NOISE, 3).standard_normal(5)
        b = chunk_rng(42, STREAM_NOISE, 3).standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_and_chunks_differ(self):
        """Other stream or chunk gives other draws"""
        base = chunk_rng(42, STREAM_NOISE, 0).standard_normal(5)
        assert not np.array_equal(base, chunk_rng(42, STREAM_FRESH, 0).standard_normal(5))
        assert not np.array_equal(base, chunk_rng(42, STREAM_NOISE, 1).standard_normal(5))
        assert not np.array_equal(base, chunk_rng(43, STREAM_NOISE, 0).standard_normal(5))

    def test_seed_range(self):
        """Seeds are 64-bit unsigned"""
        with pytest.raises(ValidationError, match="--seed"):
            chunk_rng(-1, STREAM_NOISE, 0)

    def test_chunks(self):
        """Fixed-size chunks with a short tail"""
        parts = chunks(10, 4)
        assert [(c.start, c.stop) for c in parts] == [(0, 4), (4, 8), (8, 10)]
        assert parts[-1].size == 2
        with pytest.raises(ValidationError):
            chunks(0, 4)

    def test_thread_count_does_not_matter(self):
        """Results are merged in chunk order"""
        def draw(chunk, rng):
            return rng.standard_normal(chunk.size)

        single = map_chunks(draw, 5000, 7, STREAM_NOISE, MonteCarloSettings(chunk_size=512, threads=1))
        pooled = map_chunks(draw, 5000, 7, STREAM_NOISE, MonteCarloSettings(chunk_size=512, threads=4))
        assert np.array_equal(np.concatenate(single), np.concatenate(pooled))


class TestGaussianPathModel:
    """Tests for GaussianPathModel"""

    def test_unit_horizon(self):
        """N dt = 1 is enforced"""
        with pytest.raises(ValidationError, match="N\\*dt"):
            GaussianPathModel(10, 0.2)
        assert GaussianPathModel.unit(8).dt == 0.125

    def test_from_dict(self):
        """Model files name N, dt, d and the increment law"""
        model = GaussianPathModel.from_dict({'N': 4, 'd': 2, 'increment_model': 'rademacher'}, 'model.json')
        assert model.dt == 0.25
        assert model.dim == 2
        assert model.increment_model is IncrementModel.RADEMACHER
        assert GaussianPathModel.from_dict(model.to_dict()) == model

    def test_from_dict_errors(self):
        """Missing N and bad increment laws carry the file name"""
        with pytest.raises(ValidationError, match="model.json"):
            GaussianPathModel.from_dict({'d': 1}, 'model.json')
        with pytest.raises(ValidationError, match="model.json"):
            GaussianPathModel.from_dict({'N': 4, 'increment_model': 'levy'}, 'model.json')

    def test_rademacher_increments(self):
        """Rademacher steps are +-sqrt(dt)"""
        model = GaussianPathModel.unit(16, increment_model=IncrementModel.RADEMACHER)
        dw = model.draw_increments(chunk_rng(0, STREAM_NOISE, 0), 100)
        assert dw.shape == (100, 16, 1)
        assert np.allclose(np.abs(dw), 0.25)

    def test_require_gaussian(self):
        """Gaussian-only operations reject rademacher models"""
        model = GaussianPathModel.unit(4, increment_model=IncrementModel.RADEMACHER)
        with pytest.raises(ValidationError, match="gaussian"):
            model.require_gaussian('follmer_energy')


class TestDriftSpec:
    """Tests for DriftSpec"""

    def test_parse(self):
        """Tokens may be separate or comma-joined"""
        assert DriftSpec.parse(['kind=constant', 'a=2']).params == {'a': 2.0}
        assert DriftSpec.parse(['kind=ou,lam=0.5']).params == {'lam': 0.5}
        assert DriftSpec.parse(['kind=tanh', 'a=1', 'scale=2']).kind == 'tanh'

    @pytest.mark.parametrize("tokens", [
        ['a=1'],
        ['kind=brownian'],
        ['kind=ou', 'a=1'],
        ['kind=constant', 'a=x'],
        ['kind=constant', 'a'],
    ])
    def test_parse_errors(self, tokens):
        """Bad drift flags name --drift"""
        with pytest.raises(ValidationError, match="--drift"):
            DriftSpec.parse(tokens)

    def test_evaluate(self):
        """Builtin drifts on a batch of prefixes"""
        prefix = np.array([[[0.0], [0.5]], [[0.0], [-1.0]]])
        assert np.allclose(DriftSpec.ou(2.0).evaluate(1, prefix), [[1.0], [-2.0]])
        assert np.allclose(DriftSpec.constant(3.0).evaluate(1, prefix), [[3.0], [3.0]])
        assert np.allclose(DriftSpec.tanh(1.0, 1.0).evaluate(1, prefix), np.tanh([[0.5], [-1.0]]))

    def test_custom_drift(self):
        """Custom drifts read the whole prefix"""
        running_sum = DriftSpec.custom(lambda k, prefix: prefix.sum(axis=1), 'running-sum')
        prefix = np.array([[[1.0], [2.0], [3.0]]])
        assert running_sum.evaluate(2, prefix)[0, 0] == 6.0
        assert not running_sum.markov


class TestForwardRecursion:
    """Tests for forward_recursion and the Girsanov density"""

    def test_constant_shift(self):
        """Constant drift shifts the terminal value by -a"""
        model = GaussianPathModel.unit(10)
        dB = model.draw_increments(chunk_rng(1, STREAM_NOISE, 0), 50)
        X, b, aborted, _ = forward_recursion(model, DriftSpec.constant(1.0), dB)

        assert np.allclose(X[:, -1] - path_from_increments(dB)[:, -1], -1.0)
        assert np.all(b == 1.0)
        assert not aborted.any()

    def test_overflow_aborts(self):
        """Exploding drifts are aborted and recorded"""
        model = GaussianPathModel.unit(5)
        blowup = DriftSpec.custom(lambda k, prefix: np.where(np.arange(len(prefix))[:, None] == 0, 1e20, 0.0))
        X, b, aborted, diagnostics = forward_recursion(model, blowup, np.zeros((3, 5, 1)))

        assert list(aborted) == [True, False, False]
        assert diagnostics[0]['sample'] == 0 and diagnostics[0]['step'] == 0
        assert np.all(np.isfinite(X))

    def test_girsanov_constant(self):
        """log rho = -a sum dw - a^2 / 2 for a constant drift"""
        dw = np.array([0.1, -0.3, 0.2, 0.05])
        value = girsanov_log_density(dw, DriftSpec.constant(1.0))
        assert value == pytest.approx(-0.05 - 0.5)

    def test_girsanov_zero(self):
        """Zero drift has density 1"""
        dw = np.ones((3, 4, 1))
        assert np.allclose(girsanov_log_density(dw, DriftSpec.zero()), 0.0)

    def test_simulate_reproducible(self):
        """Same seed, other thread count, same paths"""
        model = GaussianPathModel.unit(8)
        one = simulate_sde(model, DriftSpec.ou(1.0), 5, 3000, MonteCarloSettings(chunk_size=1000, threads=1))
        many = simulate_sde(model, DriftSpec.ou(1.0), 5, 3000, MonteCarloSettings(chunk_size=1000, threads=3))
        assert np.array_equal(one.X, many.X)
        integrated = np.concatenate([np.zeros((3000, 1, 1)), np.cumsum(one.drift, axis=1)], axis=1)
        assert np.allclose(one.X, one.B - integrated * model.dt)


class TestTiltedMeasure:
    """Tests for TiltedMeasure"""

    def test_log_density_uses_model_step(self):
        """Batch densities use the model dt"""
        model = GaussianPathModel.unit(5)
        measure = TiltedMeasure(model, DriftSpec.ou(0.5))
        dw = np.random.default_rng(4).standard_normal((6, 5, 1)) * model.sqrt_dt
        assert np.allclose(measure.log_density(dw), girsanov_log_density(dw, DriftSpec.ou(0.5), model.dt))

    def test_density_along_own_paths(self, mc_settings):
        """Constant drift a: log rho(X) = -a B_1 + a^2 / 2 on nu-paths"""
        model = GaussianPathModel.unit(10)
        measure = TiltedMeasure(model, DriftSpec.constant(1.0))
        sample = measure.sample(7, 500, mc_settings)
        expected = -sample.B[:, -1, 0] + 0.5

        assert np.allclose(measure.log_density(np.diff(sample.X, axis=1)), expected, atol=1e-12)
        assert np.array_equal(sample.X, simulate_sde(model, measure.drift, 7, 500, mc_settings).X)


class TestEstimate:
    """Tests for estimate"""

    def test_standard_error(self):
        """SE is the sample std over sqrt(n)"""
        values = np.array([1.0, 2.0, 3.0, 4.0])
        result = estimate(values, seed=0)
        assert result.value == 2.5
        assert result.standard_error == pytest.approx(np.std(values, ddof=1) / 2)

    def test_within(self):
        """within() allows n_se standard errors plus a relative slack"""
        result = estimate(np.array([0.9, 1.1]), seed=0)
        assert result.within(1.0)
        assert not result.within(2.0)
        assert result.within(1.5, n_se=0.0, rel=0.5)

    def test_empty(self):
        """No samples, no estimate"""
        with pytest.raises(ValidationError):
            estimate(np.array([]), seed=0)
