import numpy as np
import pytest

from conftest import REF_DELTA, REF_GRID, small_scene, square_array
from coposim.errors import ConfigError
from coposim.geometry import SPEED_OF_LIGHT as C
from coposim.geometry import ReflectionSurface
from coposim.waveform import (FrequencyGrid, SignatureConfig, aperture_spacing_bound,
                              max_unambiguous_range, sync_spacing_bound, validate_scene)


class TestFrequencyGrid:
    def test_comb_structure(self):
        g = FrequencyGrid(f1=57e9, tones=256, delta=11.72e6)
        f = g.frequencies
        assert len(f) == 256
        assert f[0] == 57e9
        assert g.f_max - g.f1 == pytest.approx(255 * 11.72e6)
        assert g.center == pytest.approx(0.5 * (f[0] + f[-1]))

    def test_invalid_grid(self):
        with pytest.raises(ConfigError):
            FrequencyGrid(f1=0.0, tones=4, delta=1e6)
        with pytest.raises(ConfigError):
            FrequencyGrid(f1=1e9, tones=1, delta=1e6)

    def test_signature_disjointness(self):
        g = FrequencyGrid(f1=57e9, tones=16, delta=11.72e6)
        ok = SignatureConfig(f_a=57e9 - 2 * 11.72e6, f_b=57e9 - 4 * 11.72e6, delta=11.72e6)
        assert not ok.overlaps_band(g)
        bad = SignatureConfig(f_a=57e9 + 11.72e6, f_b=57e9 - 4 * 11.72e6, delta=11.72e6)
        assert bad.overlaps_band(g)


class TestBounds:
    def test_max_range_reference_value(self):
        # Direct evaluation of c / delta.
        assert max_unambiguous_range(REF_DELTA) == pytest.approx(C / 11.72e6, rel=1e-12)
        assert max_unambiguous_range(REF_DELTA) == pytest.approx(25.58, abs=0.01)

    def test_max_range_scalings(self):
        assert max_unambiguous_range(C) == pytest.approx(1.0)
        assert max_unambiguous_range(REF_DELTA / 2) == pytest.approx(2 * max_unambiguous_range(REF_DELTA))

    def test_sync_spacing(self):
        assert sync_spacing_bound(REF_DELTA) == pytest.approx(C / (2 * 11.72e6), rel=1e-12)
        assert sync_spacing_bound(REF_DELTA) == pytest.approx(12.79, abs=0.01)
        assert sync_spacing_bound(2 * REF_DELTA) == pytest.approx(0.5 * sync_spacing_bound(REF_DELTA))
        # A 1 m aperture passes by a wide margin.
        assert 1.0 < sync_spacing_bound(REF_DELTA)

    def test_aperture_spacing_value(self):
        assert aperture_spacing_bound(58.5e9) == pytest.approx(C / (4 * 58.5e9), rel=1e-12)
        assert aperture_spacing_bound(58.5e9) == pytest.approx(1.281e-3, abs=1e-6)

    def test_invalid_delta(self):
        with pytest.raises(ConfigError):
            max_unambiguous_range(0.0)
        with pytest.raises(ConfigError):
            sync_spacing_bound(-1.0)


class TestValidateScene:
    def test_reference_configuration_scaled_is_clean(self):
        # Dense aperture at the alias-free spacing: nothing to report.
        spacing = aperture_spacing_bound(REF_GRID.center) * 0.9
        sv = square_array(5, 4 * spacing)
        scene = small_scene(sv=sv)
        report = validate_scene(scene, REF_GRID)
        assert report.ok and not report.warnings

    def test_sparse_aperture_warns_but_passes(self):
        scene = small_scene(sv=square_array(8, 1.0))
        report = validate_scene(scene, REF_GRID)
        assert report.ok
        assert any("alias-free" in w for w in report.warnings)

    def test_too_few_antennas_is_error(self):
        scene = small_scene(sv=square_array(4, 1.0)[:3])
        report = validate_scene(scene, REF_GRID)
        assert not report.ok
        assert any("4 receive antennas" in e for e in report.errors)

    def test_hidden_scene_needs_three_surfaces(self):
        surfaces = (ReflectionSurface(slope=1.0, intercept=3.0),
                    ReflectionSurface(slope=0.3, intercept=4.0))
        scene = small_scene(surfaces=surfaces, has_los=False)
        report = validate_scene(scene, REF_GRID)
        assert not report.ok
        assert any("3 reflection surfaces" in e for e in report.errors)

    def test_range_spread_overflow(self):
        tv = np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 40.0]])
        scene = small_scene(tv=tv)
        coarse = FrequencyGrid(f1=57e9, tones=16, delta=11.72e6)
        report = validate_scene(scene, coarse)
        assert not report.ok
        assert any("unambiguous range" in e for e in report.errors)
