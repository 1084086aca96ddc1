"""
Unit Tests for config
======================

Settings priority (environment > config file > defaults) and the
library settings built from them.
"""
import pytest

import orjson

from config import KausalConfig
from modules.transport_base import ValidationError


@pytest.fixture
def isolated(tmp_path, monkeypatch):
    """Empty working directory and no KAUSAL_* variables"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv('KAUSAL_THREADS', raising=False)
    monkeypatch.delenv('KAUSAL_LP_GAP_REL_TOL', raising=False)
    return tmp_path


class TestKausalConfig:
    """Tests for KausalConfig"""

    def test_defaults(self, isolated):
        """No file, no environment"""
        config = KausalConfig.load()
        assert config.mc_chunk_size == 4096
        assert config.exact_max_paths == 64
        assert config.threads >= 1

    def test_default_file(self, isolated):
        """kausal.json in the working directory is picked up"""
        (isolated / 'kausal.json').write_bytes(orjson.dumps({'lp_gap_rel_tol': 1e-10}))
        assert KausalConfig.load().lp_gap_rel_tol == 1e-10

    def test_environment_beats_file(self, isolated, monkeypatch):
        """KAUSAL_* variables win over the config file"""
        path = isolated / 'custom.json'
        path.write_bytes(orjson.dumps({'threads': 3, 'mc_chunk_size': 512}))
        monkeypatch.setenv('KAUSAL_THREADS', '7')

        config = KausalConfig.load(path)

        assert config.threads == 7
        assert config.mc_chunk_size == 512

    def test_dotenv(self, isolated):
        """.env in the working directory is read"""
        (isolated / '.env').write_text('KAUSAL_MONGE_MAX_PATHS=5\n')
        assert KausalConfig.load().monge_max_paths == 5

    def test_missing_explicit_file(self, isolated):
        """--config must exist"""
        with pytest.raises(ValidationError, match="--config"):
            KausalConfig.load(isolated / 'nope.json')

    def test_invalid_values(self, isolated):
        """Range violations name the file"""
        path = isolated / 'bad.json'
        path.write_bytes(orjson.dumps({'normality_alpha': 2.0}))
        with pytest.raises(ValidationError, match="bad.json"):
            KausalConfig.load(path)

    def test_not_an_object(self, isolated):
        path = isolated / 'list.json'
        path.write_bytes(b'[1, 2]')
        with pytest.raises(ValidationError, match="JSON object"):
            KausalConfig.load(path)

    def test_overrides(self, isolated):
        """--set values are validated like file values"""
        config = KausalConfig.load().with_overrides(lp_max_iters=10, fd_step=None)
        assert config.lp_max_iters == 10
        assert config.fd_step == 1e-5
        with pytest.raises(ValidationError, match="unknown settings"):
            config.with_overrides(warp_speed=9)
        with pytest.raises(ValidationError, match="--set"):
            config.with_overrides(lp_max_iters=0)

    def test_library_settings(self, isolated):
        """Solver and Monte Carlo settings mirror the config"""
        config = KausalConfig.load().with_overrides(threads=2, mc_chunk_size=128, monge_max_paths=4)
        assert config.solver_settings().monge_max_paths == 4
        mc = config.monte_carlo_settings()
        assert (mc.threads, mc.chunk_size) == (2, 128)

    def test_report_dict(self, isolated):
        """Thread count and paths never reach a report"""
        data = KausalConfig.load().report_dict()
        assert 'threads' not in data
        assert 'reports_dir' not in data
        assert data['mc_chunk_size'] == 4096
