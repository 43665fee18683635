import math

import numpy as np
import pytest

from conftest import REF_DELTA
from coposim.channel import NOISELESS, simulate_sfcw
from coposim.errors import EmptySpectrumError, InterpolationDegeneracyError
from coposim.geometry import SPEED_OF_LIGHT as C
from coposim.geometry import Scene, path_length_matrix
from coposim.imaging import (ApertureSamples, ImagingBox, PowerSpectrum, backprojection,
                             detect_peaks, forward_2d_spectrum, inverse_3d_spectrum,
                             reconstruct, remap_to_sphere, sample_aperture)
from coposim.analysis import azimuth_resolution, range_resolution
from coposim.waveform import FrequencyGrid

GRID64 = FrequencyGrid(f1=57e9, tones=64, delta=3e9 / 63)


def grid_antennas(n_side=33, extent=1.0, z=0.0):
    ax = np.linspace(-extent / 2, extent / 2, n_side)
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], axis=1)


def point_target_symbols(targets, sv, grid):
    tau = path_length_matrix(None, np.atleast_2d(targets), sv) / C
    return np.exp(-2j * math.pi * tau[:, :, None] * grid.frequencies[None, None, :]).sum(axis=0)


def peak_position(ps: PowerSpectrum):
    mag = ps.magnitude()
    idx = np.unravel_index(int(np.argmax(mag)), mag.shape)
    return ps.origin + np.array(idx, dtype=float) * ps.spacing


class TestSampleAperture:
    def test_identity_on_exact_grid(self):
        sv = grid_antennas(9, 0.5)
        rng = np.random.default_rng(0)
        sym = rng.normal(size=(81, 4)) + 1j * rng.normal(size=(81, 4))
        out = sample_aperture(sym, sv, FrequencyGrid(57e9, 4, REF_DELTA),
                              target_spacing=0.5 / 8)
        assert out.samples.shape == (9, 9, 4)
        assert np.allclose(out.samples, sym.reshape(9, 9, 4), atol=1e-12)

    def test_midpoints_average_neighbours(self):
        sv = grid_antennas(5, 0.4)
        sym = (np.arange(25, dtype=float)[:, None] + 0j) * np.ones((1, 2))
        out = sample_aperture(sym, sv, FrequencyGrid(57e9, 2, REF_DELTA),
                              target_spacing=0.05)
        vals = sym.reshape(5, 5, 2)
        # doubled grid: even indices hit antennas, odd indices are midpoints
        assert np.allclose(out.samples[::2, ::2], vals, atol=1e-12)
        assert np.allclose(out.samples[1, 0, 0], 0.5 * (vals[0, 0, 0] + vals[1, 0, 0]), atol=1e-12)
        assert np.allclose(out.samples[0, 1, 0], 0.5 * (vals[0, 0, 0] + vals[0, 1, 0]), atol=1e-12)

    def test_plane_projection_phase(self):
        # Antennas lifted off the plane get the exp(-j*2*pi*f*z/c) correction.
        sv = grid_antennas(3, 0.2, z=0.01)
        sym = np.ones((9, 2), dtype=complex)
        grid = FrequencyGrid(57e9, 2, REF_DELTA)
        out = sample_aperture(sym, sv, grid, target_spacing=0.1)
        expected = np.exp(-2j * math.pi * grid.frequencies * 0.01 / C)
        assert np.allclose(out.samples[0, 0], expected, atol=1e-12)

    def test_degenerate_rows_raise(self):
        sv = np.stack([np.linspace(0, 1, 8), np.zeros(8), np.zeros(8)], axis=1)
        with pytest.raises(InterpolationDegeneracyError):
            sample_aperture(np.ones((8, 2), complex), sv, FrequencyGrid(57e9, 2, REF_DELTA))


class TestForwardSpectrum:
    def test_dc_impulse(self):
        sv_samples = np.ones((8, 8, 1), dtype=complex)
        ap = ApertureSamples(np.linspace(-0.5, 0.5, 8), np.linspace(-0.5, 0.5, 8),
                             sv_samples, FrequencyGrid(57e9, 2, REF_DELTA))
        spec = forward_2d_spectrum(ap)
        mag = np.abs(spec.values[:, :, 0])
        i0 = np.argmin(np.abs(spec.f_x))
        j0 = np.argmin(np.abs(spec.f_y))
        assert mag[i0, j0] == pytest.approx(64.0, rel=1e-12)
        mask = np.ones_like(mag, dtype=bool)
        mask[i0, j0] = False
        assert mag[mask].max() < 1e-9

    def test_single_sample_flat_spectrum(self):
        vals = np.zeros((8, 8, 1), dtype=complex)
        vals[3, 4, 0] = 2.0
        ap = ApertureSamples(np.linspace(0, 0.7, 8), np.linspace(0, 0.7, 8), vals,
                             FrequencyGrid(57e9, 2, REF_DELTA))
        spec = forward_2d_spectrum(ap)
        assert np.allclose(np.abs(spec.values[:, :, 0]), 2.0, atol=1e-9)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=(16, 12, 2)) + 1j * rng.normal(size=(16, 12, 2))
        gx = np.linspace(-0.4, 0.4, 16)
        gy = np.linspace(-0.3, 0.3, 12)
        ap = ApertureSamples(gx, gy, vals, FrequencyGrid(57e9, 2, REF_DELTA))
        spec = forward_2d_spectrum(ap)
        # undo the origin phasing, then invert the plain FFT
        work = spec.values / np.exp(-2j * math.pi * spec.f_x * gx[0] / C)[:, None, None]
        work = work / np.exp(-2j * math.pi * spec.f_y * gy[0] / C)[None, :, None]
        back = np.fft.ifft2(np.fft.ifftshift(work, axes=(0, 1)), axes=(0, 1))
        assert np.allclose(back, vals, atol=1e-10 * np.abs(vals).max())


class TestRemap:
    def make_spec(self):
        grid = FrequencyGrid(57e9, 8, 100e6)
        rng = np.random.default_rng(1)
        vals = rng.normal(size=(4, 4, 8)) + 1j * rng.normal(size=(4, 4, 8))
        fx = np.linspace(-1e9, 1e9, 4)
        return forward_2d_spectrum(ApertureSamples(np.linspace(0, 1, 4), np.linspace(0, 1, 4),
                                                   vals, grid))

    def test_exact_shell_at_broadside(self):
        spec = self.make_spec()
        shells = spec.grid.frequencies
        i0 = np.argmin(np.abs(spec.f_x))
        j0 = np.argmin(np.abs(spec.f_y))
        assert abs(spec.f_x[i0]) < 1e-6 and abs(spec.f_y[j0]) < 1e-6
        out = remap_to_sphere(spec, np.array([shells[3], shells[5]]))
        assert out.values[i0, j0, 0] == pytest.approx(spec.values[i0, j0, 3], rel=1e-12)
        assert out.values[i0, j0, 1] == pytest.approx(spec.values[i0, j0, 5], rel=1e-12)

    def test_midpoint_is_average(self):
        spec = self.make_spec()
        shells = spec.grid.frequencies
        i0 = np.argmin(np.abs(spec.f_x))
        j0 = np.argmin(np.abs(spec.f_y))
        mid = 0.5 * (shells[2] + shells[3])
        out = remap_to_sphere(spec, np.array([mid, shells[-1]]))
        expected = 0.5 * (spec.values[i0, j0, 2] + spec.values[i0, j0, 3])
        assert out.values[i0, j0, 0] == pytest.approx(expected, rel=1e-12)

    def test_out_of_band_zero(self):
        spec = self.make_spec()
        out = remap_to_sphere(spec, np.array([spec.grid.f1 * 0.5, spec.grid.f_max + 1e9]))
        assert np.all(out.values == 0.0)

    def test_depth_reference_preserves_shell_values(self):
        spec = self.make_spec()
        shells = spec.grid.frequencies
        i0 = np.argmin(np.abs(spec.f_x))
        j0 = np.argmin(np.abs(spec.f_y))
        out = remap_to_sphere(spec, np.array([shells[3], shells[5]]), ref_depth=7.5)
        assert out.values[i0, j0, 0] == pytest.approx(spec.values[i0, j0, 3], rel=1e-9)


class TestReconstruct:
    def test_single_target_peak_and_gain(self):
        sv = grid_antennas(33, 1.0)
        target = np.array([0.0, 0.0, 8.0])
        sym = point_target_symbols(target, sv, GRID64)
        dy = azimuth_resolution(8.0, 1.0, GRID64.center)
        dz = range_resolution(GRID64)
        box = ImagingBox.centered(target, (1.2, 1.2, 2.0), (dy / 2, dy / 2, dz / 2))
        ps = reconstruct(sym, sv, GRID64, box)
        pos = peak_position(ps)
        assert np.all(np.abs(pos - target) <= np.array([dy, dy, dz]))
        # coherent gain within 10% of direct matched-filter back-projection
        bp = abs(backprojection(sym, sv, GRID64, target[None, :])[0])
        assert ps.magnitude().max() >= 0.9 * bp
        assert len(detect_peaks(ps, 0.5)) == 1

    def test_matches_backprojection_argmax(self):
        # alias-free aperture: grating lobes would otherwise tie with the peak
        sv = grid_antennas(17, 0.4)
        target = np.array([0.15, -0.1, 6.0])
        grid = FrequencyGrid(57e9, 32, 3e9 / 31)
        sym = point_target_symbols(target, sv, grid)
        box = ImagingBox.centered([0.0, 0.0, 6.0], (0.8, 0.8, 1.2), (0.04, 0.04, 0.06))
        ps = reconstruct(sym, sv, grid, box)
        pos = peak_position(ps)
        pts = np.stack(np.meshgrid(ps.axis(0), ps.axis(1), ps.axis(2), indexing="ij"),
                       axis=-1).reshape(-1, 3)
        bp = np.abs(backprojection(sym, sv, grid, pts)).reshape(ps.voxels.shape)
        bp_pos = ps.origin + np.array(np.unravel_index(np.argmax(bp), bp.shape), float) * ps.spacing
        assert np.linalg.norm(pos - bp_pos) <= np.linalg.norm(ps.spacing) + 1e-12

    def test_linearity(self):
        sv = grid_antennas(9, 0.6)
        grid = FrequencyGrid(57e9, 16, 3e9 / 15)
        s1 = point_target_symbols([0.0, 0.0, 5.0], sv, grid)
        s2 = point_target_symbols([0.2, 0.1, 5.4], sv, grid)
        box = ImagingBox.centered([0.0, 0.0, 5.2], (0.8, 0.8, 1.2), (0.05, 0.05, 0.1))
        p1 = reconstruct(s1, sv, grid, box).voxels
        p2 = reconstruct(s2, sv, grid, box).voxels
        p12 = reconstruct(s1 + s2, sv, grid, box).voxels
        assert np.allclose(p12, p1 + p2, atol=1e-10 * np.abs(p12).max())

    def test_two_antennas_resolve_at_three_delta(self):
        sv = grid_antennas(33, 1.0)
        dy = azimuth_resolution(8.0, 1.0, GRID64.center)
        dz = range_resolution(GRID64)
        sep = 3 * dy
        targets = np.array([[0.0, -sep / 2, 8.0], [0.0, sep / 2, 8.0]])
        sym = point_target_symbols(targets, sv, GRID64)
        box = ImagingBox.centered([0.0, 0.0, 8.0], (0.8, 0.8, 1.2), (dy / 2, dy / 2, dz / 2))
        peaks = detect_peaks(reconstruct(sym, sv, GRID64, box), 0.5)
        assert len(peaks) == 2
        found_y = np.sort(peaks[:, 1])
        assert np.allclose(found_y, [-sep / 2, sep / 2], atol=dy)

    def test_two_antennas_merge_below_resolution(self):
        sv = grid_antennas(33, 1.0)
        dy = azimuth_resolution(8.0, 1.0, GRID64.center)
        dz = range_resolution(GRID64)
        sep = 0.3 * dy
        targets = np.array([[0.0, -sep / 2, 8.0], [0.0, sep / 2, 8.0]])
        sym = point_target_symbols(targets, sv, GRID64)
        box = ImagingBox.centered([0.0, 0.0, 8.0], (0.8, 0.8, 1.2), (dy / 2, dy / 2, dz / 2))
        peaks = detect_peaks(reconstruct(sym, sv, GRID64, box), 0.5)
        assert len(peaks) == 1

    def test_shift_covariance_one_voxel_in_z(self):
        sv = grid_antennas(17, 0.8)
        grid = FrequencyGrid(57e9, 32, 3e9 / 31)
        box = ImagingBox.centered([0.0, 0.0, 6.0], (0.6, 0.6, 1.2), (0.04, 0.04, 0.05))
        s_a = point_target_symbols([0.0, 0.0, 6.0], sv, grid)
        s_b = point_target_symbols([0.0, 0.0, 6.0 + box.spacing[2]], sv, grid)
        pa = peak_position(reconstruct(s_a, sv, grid, box))
        pb = peak_position(reconstruct(s_b, sv, grid, box))
        assert pb[2] - pa[2] == pytest.approx(box.spacing[2], abs=1e-12)
        assert np.allclose(pa[:2], pb[:2], atol=1e-12)

    def test_jittered_antennas_move_peak_less_than_voxel(self):
        rng = np.random.default_rng(11)
        spacing = 1.0 / 32
        sv = grid_antennas(33, 1.0)
        jit = sv.copy()
        jit[:, :2] += rng.uniform(-0.1, 0.1, size=(len(sv), 2)) * spacing
        target = np.array([0.05, -0.03, 8.0])
        dy = azimuth_resolution(8.0, 1.0, GRID64.center)
        dz = range_resolution(GRID64)
        box = ImagingBox.centered(target, (0.6, 0.6, 1.0), (dy / 2, dy / 2, dz / 2))
        p_ref = peak_position(reconstruct(point_target_symbols(target, sv, GRID64), sv, GRID64, box))
        p_jit = peak_position(reconstruct(point_target_symbols(target, jit, GRID64), jit, GRID64, box))
        assert np.all(np.abs(p_jit - p_ref) <= box.spacing + 1e-12)


class TestDetectPeaks:
    def make_ps(self, data):
        return PowerSpectrum(voxels=np.asarray(data, complex), origin=np.zeros(3),
                             spacing=np.ones(3))

    def test_single_voxel(self):
        vol = np.zeros((4, 4, 4))
        vol[1, 2, 3] = 1.0
        peaks = detect_peaks(self.make_ps(vol), 0.5)
        assert peaks.shape == (1, 3)
        assert np.allclose(peaks[0], [1.0, 2.0, 3.0])

    def test_nu_one_keeps_argmax_only(self):
        vol = np.zeros((5, 5, 5))
        vol[1, 1, 1] = 0.8
        vol[3, 3, 3] = 1.0
        peaks = detect_peaks(self.make_ps(vol), 1.0)
        assert peaks.shape == (1, 3)
        assert np.allclose(peaks[0], [3.0, 3.0, 3.0])

    def test_threshold_and_local_max(self):
        vol = np.zeros((7, 7, 7))
        vol[1, 1, 1] = 1.0
        vol[1, 1, 2] = 0.9   # shoulder of the first peak: not a local max
        vol[5, 5, 5] = 0.7
        vol[5, 5, 4] = 0.3   # below threshold
        peaks = detect_peaks(self.make_ps(vol), 0.5)
        assert len(peaks) == 2
        assert np.allclose(peaks[0], [1.0, 1.0, 1.0])
        assert np.allclose(peaks[1], [5.0, 5.0, 5.0])

    def test_all_zero_raises(self):
        with pytest.raises(EmptySpectrumError):
            detect_peaks(self.make_ps(np.zeros((3, 3, 3))), 0.5)

    def test_invalid_nu(self):
        with pytest.raises(ValueError):
            detect_peaks(self.make_ps(np.ones((2, 2, 2))), 0.0)


class TestSliceExport:
    def test_slice_rows_shape(self):
        vol = np.arange(24, dtype=float).reshape(2, 3, 4)
        ps = PowerSpectrum(voxels=vol.astype(complex), origin=np.array([0.0, 1.0, 2.0]),
                           spacing=np.array([0.5, 0.5, 0.5]))
        rows = ps.slice_rows(axis=1, value=1.6)
        assert rows.shape == (8, 4)
        assert np.allclose(rows[:, 1], 1.5)  # nearest plane to 1.6 along y
