"""Fourier reconstruction of the transmit-antenna indicator from aperture data.

The receive array, projected onto the plane z = 0, samples a spherical wave
field s(x, y, f_k).  Per tone, a 2D spatial-frequency transform of those
samples equals (up to a smooth diffraction amplitude) the 3D transform of the
antenna indicator evaluated on the sphere f = ||f_vec||.  Resampling that
sphere onto a uniform (f_x, f_y, f_z) grid and inverting yields a complex
volume whose magnitude peaks at the transmit antennas.

The inverse transform is evaluated with chirp-Z transforms so the voxel grid
can sit anywhere (boxes are centered on the clock-sync anchor estimate) at any
pitch.  Amplitudes are calibrated so that, for a Nyquist-sampled aperture, the
peak of a single emitter matches the coherent gain of direct matched-filter
back-projection over (antenna, tone) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.signal import czt

from .errors import EmptySpectrumError, InterpolationDegeneracyError
from .geometry import SPEED_OF_LIGHT as C
from .waveform import FrequencyGrid


@dataclass(frozen=True)
class ApertureSamples:
    """Wave-field samples on a uniform grid in the plane z = 0."""

    grid_x: np.ndarray
    grid_y: np.ndarray
    samples: np.ndarray  # (nx, ny, K) complex
    grid: FrequencyGrid

    @property
    def spacing(self) -> tuple[float, float]:
        dx = float(self.grid_x[1] - self.grid_x[0]) if len(self.grid_x) > 1 else 0.0
        dy = float(self.grid_y[1] - self.grid_y[0]) if len(self.grid_y) > 1 else 0.0
        return dx, dy


@dataclass(frozen=True)
class Spectrum2D:
    """Per-tone spatial spectrum S(f_x, f_y, f_k); frequencies in Hz."""

    f_x: np.ndarray
    f_y: np.ndarray
    values: np.ndarray  # (nfx, nfy, K)
    grid: FrequencyGrid
    sample_area: float


@dataclass(frozen=True)
class Spectrum3D:
    """Spectrum on a uniform (f_x, f_y, f_z) grid after sphere resampling."""

    f_x: np.ndarray
    f_y: np.ndarray
    f_z: np.ndarray
    values: np.ndarray  # (nfx, nfy, nfz)
    shell_spacing: float
    sample_area: float


@dataclass(frozen=True)
class ImagingBox:
    """Axis-aligned voxel grid; ``origin`` is the center of voxel (0, 0, 0)."""

    origin: np.ndarray
    spacing: np.ndarray
    shape: tuple[int, int, int]

    @classmethod
    def centered(cls, center, extent, spacing) -> "ImagingBox":
        center = np.asarray(center, dtype=float)
        extent = np.broadcast_to(np.asarray(extent, dtype=float), (3,))
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (3,)).copy()
        shape = tuple(max(1, int(round(e / s)) + 1) for e, s in zip(extent, spacing))
        origin = center - spacing * (np.array(shape) - 1) / 2.0
        return cls(origin=origin, spacing=spacing, shape=shape)

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    @property
    def center(self) -> np.ndarray:
        return self.origin + self.spacing * (np.array(self.shape) - 1) / 2.0


@dataclass(frozen=True)
class PowerSpectrum:
    """Complex reconstruction volume with voxel metadata."""

    voxels: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.abs(self.voxels)

    def axis(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.voxels.shape[i])

    def slice_rows(self, axis: int, value: float):
        """Rows (x, y, z, magnitude) of the plane nearest ``value`` along ``axis``."""
        idx = int(np.argmin(np.abs(self.axis(axis) - value)))
        mags = self.magnitude()
        axes = [self.axis(i) for i in range(3)]
        sel = [slice(None)] * 3
        sel[axis] = idx
        coords = np.meshgrid(*[axes[i] if i != axis else [axes[axis][idx]] for i in range(3)],
                             indexing="ij")
        flat = [c.ravel() for c in coords]
        return np.stack(flat + [mags[tuple(sel)].ravel()], axis=1)


def _cluster_rows(y_coords: np.ndarray, row_tol: float | None) -> list[np.ndarray]:
    """Group antenna indices into rows of near-constant y."""
    order = np.argsort(y_coords, kind="stable")
    ys = y_coords[order]
    gaps = np.diff(ys)
    if row_tol is None:
        if len(gaps) == 0 or gaps.max() == 0.0:
            return [order]
        row_tol = 0.5 * float(gaps.max())
    breaks = np.nonzero(gaps > row_tol)[0]
    return [seg for seg in np.split(order, breaks + 1)]


def sample_aperture(observation, sv_antennas, grid: FrequencyGrid,
                    target_spacing: float | None = None,
                    row_tol: float | None = None,
                    deramp_center=None) -> ApertureSamples:
    """Project antenna symbols onto z = 0 and resample onto a uniform grid.

    Antennas off the plane are phase-shifted by exp(-j*2*pi*f_k*p_z/c), which
    is tight while the target distance is large against the array size.  The
    scattered samples are then interpolated linearly along X within rows of
    near-constant y, and linearly along Y across rows; grid points outside the
    sampled region are zero.

    The raw field's phase turns by radians per millimetre, so interpolating it
    between antennas spaced many wavelengths apart scrambles the phase.  With
    ``deramp_center`` the nominal point response from that location is divided
    out before interpolation and restored afterwards, making interpolated
    values phase-faithful for content near the reference point.
    """
    symbols = observation.sfcw if hasattr(observation, "sfcw") else np.asarray(observation)
    if symbols is None:
        raise ValueError("observation carries no SFCW symbols")
    symbols = np.asarray(symbols, dtype=complex)
    ants = np.asarray(sv_antennas, dtype=float)
    if symbols.shape[0] != ants.shape[0]:
        raise ValueError("symbol rows must match antenna count")

    freqs = grid.frequencies
    projected = symbols * np.exp(-2j * math.pi * np.outer(ants[:, 2], freqs) / C)
    if deramp_center is not None:
        ref = np.asarray(deramp_center, dtype=float)
        r_ant = np.sqrt((ants[:, 0] - ref[0]) ** 2 + (ants[:, 1] - ref[1]) ** 2 + ref[2] ** 2)
        projected = projected * np.exp(2j * math.pi * np.outer(r_ant, freqs) / C)

    rows = _cluster_rows(ants[:, 1], row_tol)
    if len(rows) < 2:
        raise InterpolationDegeneracyError("need at least two antenna rows for resampling")
    if max(len(r) for r in rows) < 2:
        raise InterpolationDegeneracyError("need at least two antenna columns for resampling")
    rows = [r for r in rows if len(r) >= 2]
    if len(rows) < 2:
        raise InterpolationDegeneracyError("too few usable antenna rows for resampling")

    row_y = np.array([ants[r, 1].mean() for r in rows])
    order = np.argsort(row_y)
    rows = [rows[i] for i in order]
    row_y = row_y[order]

    x_lo = min(ants[r, 0].min() for r in rows)
    x_hi = max(ants[r, 0].max() for r in rows)
    if target_spacing is None:
        pitch = np.median(np.diff(row_y)) if len(row_y) > 1 else (x_hi - x_lo)
        target_spacing = float(pitch)
    nx = max(2, int(round((x_hi - x_lo) / target_spacing)) + 1)
    ny = max(2, int(round((row_y[-1] - row_y[0]) / target_spacing)) + 1)
    gx = np.linspace(x_lo, x_hi, nx)
    gy = np.linspace(row_y[0], row_y[-1], ny)

    k = symbols.shape[1]
    per_row = np.zeros((len(rows), nx, k), dtype=complex)
    for i, r in enumerate(rows):
        xs = ants[r, 0]
        o = np.argsort(xs, kind="stable")
        xs = xs[o]
        vals = projected[r][o]
        for kk in range(k):
            per_row[i, :, kk] = (np.interp(gx, xs, vals[:, kk].real, left=0.0, right=0.0)
                                 + 1j * np.interp(gx, xs, vals[:, kk].imag, left=0.0, right=0.0))

    out = np.zeros((nx, ny, k), dtype=complex)
    for kk in range(k):
        block = per_row[:, :, kk]
        for ix in range(nx):
            out[ix, :, kk] = (np.interp(gy, row_y, block[:, ix].real, left=0.0, right=0.0)
                              + 1j * np.interp(gy, row_y, block[:, ix].imag, left=0.0, right=0.0))
    if deramp_center is not None:
        ref = np.asarray(deramp_center, dtype=float)
        r_grid = np.sqrt((gx[:, None] - ref[0]) ** 2 + (gy[None, :] - ref[1]) ** 2 + ref[2] ** 2)
        out = out * np.exp(-2j * math.pi / C * r_grid[:, :, None] * freqs[None, None, :])
    return ApertureSamples(grid_x=gx, grid_y=gy, samples=out, grid=grid)


def forward_2d_spectrum(samples: ApertureSamples,
                        pad: tuple[int, int] | None = None) -> Spectrum2D:
    """Per-tone 2D transform with kernel exp(-j*(2*pi/c)*(f_x*x + f_y*y)).

    Spatial frequencies are in Hz and span +-c/(2*spacing); ``pad`` sets the
    FFT sizes (and therefore the spectral bin density and the periodicity of
    the reconstructed image).
    """
    dx, dy = samples.spacing
    nx, ny, _ = samples.samples.shape
    px = pad[0] if pad else nx
    py = pad[1] if pad else ny
    if px < nx or py < ny:
        raise ValueError("pad must be at least the sample count per axis")

    spec = np.fft.fftshift(np.fft.fft2(samples.samples, s=(px, py), axes=(0, 1)), axes=(0, 1))
    f_x = np.fft.fftshift(np.fft.fftfreq(px, d=dx)) * C
    f_y = np.fft.fftshift(np.fft.fftfreq(py, d=dy)) * C
    # FFT phases are referenced to index 0; shift to the physical grid origin.
    spec *= np.exp(-2j * math.pi * f_x * samples.grid_x[0] / C)[:, None, None]
    spec *= np.exp(-2j * math.pi * f_y * samples.grid_y[0] / C)[None, :, None]
    return Spectrum2D(f_x=f_x, f_y=f_y, values=spec, grid=samples.grid,
                      sample_area=dx * dy)


def remap_to_sphere(spec: Spectrum2D, f_z: np.ndarray, ref_depth: float = 0.0) -> Spectrum3D:
    """Resample the per-tone shells onto a uniform (f_x, f_y, f_z) grid.

    Each voxel reads the spectrum at f = ||(f_x, f_y, f_z)||, linearly
    interpolated between the two nearest tone shells; voxels outside the
    measured band [f_1, f_K] are zero.

    At range R the spectrum's phase turns by 2*pi*delta*R/c between adjacent
    shells, so interpolating the raw phasor washes out its magnitude far from
    the origin.  ``ref_depth`` removes the depth carrier exp(-j*2*pi*f_z*z0/c)
    before interpolating and restores it afterwards; values at exact shell
    crossings are unchanged, and the default keeps the plain linear rule.
    """
    f_z = np.asarray(f_z, dtype=float)
    shells = spec.grid.frequencies
    f1, fk = shells[0], shells[-1]
    nfx, nfy, nfz = len(spec.f_x), len(spec.f_y), len(f_z)

    rho2 = spec.f_x[:, None, None] ** 2 + spec.f_y[None, :, None] ** 2
    f = np.sqrt(rho2 + f_z[None, None, :] ** 2)
    pos = (f - f1) / spec.grid.delta
    idx = np.clip(np.floor(pos).astype(np.int64), 0, spec.grid.tones - 2)
    frac = pos - idx
    in_band = (f >= f1) & (f <= fk)

    flat_vals = spec.values.reshape(nfx * nfy, spec.grid.tones)
    flat_idx = idx.reshape(nfx * nfy, nfz)
    low = np.take_along_axis(flat_vals, flat_idx, axis=1).reshape(nfx, nfy, nfz)
    high = np.take_along_axis(flat_vals, flat_idx + 1, axis=1).reshape(nfx, nfy, nfz)
    if ref_depth != 0.0:
        beta = 2.0 * math.pi / C * ref_depth
        f_low = f1 + idx * spec.grid.delta
        fz_low = np.sqrt(np.maximum(f_low**2 - rho2, 0.0))
        fz_high = np.sqrt(np.maximum((f_low + spec.grid.delta) ** 2 - rho2, 0.0))
        out = (1.0 - frac) * low * np.exp(1j * beta * fz_low) \
            + frac * high * np.exp(1j * beta * fz_high)
        out *= np.exp(-1j * beta * f_z)[None, None, :]
    else:
        out = (1.0 - frac) * low + frac * high
    out[~in_band] = 0.0
    return Spectrum3D(f_x=spec.f_x, f_y=spec.f_y, f_z=f_z, values=out,
                      shell_spacing=spec.grid.delta, sample_area=spec.sample_area)


def _czt_axis(values: np.ndarray, axis: int, f0: float, df: float,
              t0: float, dt: float, n_out: int) -> np.ndarray:
    """Evaluate sum_q V_q * exp(+j*(2*pi/c)*(f0 + q*df)*(t0 + p*dt)) along one axis."""
    alpha = 2.0 * math.pi / C
    a = np.exp(-1j * alpha * df * t0)
    w = np.exp(1j * alpha * df * dt)
    out = czt(values, m=n_out, w=w, a=a, axis=axis)
    t = t0 + dt * np.arange(n_out)
    phase = np.exp(1j * alpha * f0 * t)
    shape = [1] * out.ndim
    shape[axis] = n_out
    return out * phase.reshape(shape)


def inverse_3d_spectrum(spec: Spectrum3D, box: ImagingBox) -> PowerSpectrum:
    """Inverse transform with kernel exp(+j*(2*pi/c)*f.x) on the voxel grid.

    The spectrum is weighted by 1/f_z (the Jacobian of the shell-to-grid
    change of variables) and scaled so that voxel magnitudes are directly
    comparable with matched-filter back-projection over (antenna, tone) pairs,
    referenced to the box-center height above the aperture plane.
    """
    nfx, nfy, nfz = spec.values.shape
    if nfz < 2 or nfx < 2 or nfy < 2:
        raise ValueError("spectrum must have at least two samples per axis")
    dfx = float(spec.f_x[1] - spec.f_x[0])
    dfy = float(spec.f_y[1] - spec.f_y[0])
    dfz = float(spec.f_z[1] - spec.f_z[0])

    z_ref = abs(float(box.center[2]))
    scale = z_ref * C * dfz / (nfx * nfy * spec.sample_area
                               * spec.shell_spacing * np.maximum(spec.f_z, 1.0))
    work = spec.values * scale[None, None, :]

    work = _czt_axis(work, axis=2, f0=spec.f_z[0], df=dfz,
                     t0=float(box.origin[2]), dt=float(box.spacing[2]), n_out=box.shape[2])
    work = _czt_axis(work, axis=1, f0=spec.f_y[0], df=dfy,
                     t0=float(box.origin[1]), dt=float(box.spacing[1]), n_out=box.shape[1])
    work = _czt_axis(work, axis=0, f0=spec.f_x[0], df=dfx,
                     t0=float(box.origin[0]), dt=float(box.spacing[0]), n_out=box.shape[0])
    return PowerSpectrum(voxels=work, origin=box.origin.copy(), spacing=box.spacing.copy())


def detect_peaks(spectrum: PowerSpectrum, nu: float = 0.5) -> np.ndarray:
    """Voxel centers that clear the relative threshold and are local maxima.

    A voxel is kept when |phi| >= nu * max|phi| and it dominates its full
    26-voxel neighbourhood; bare thresholding would return blobs instead of
    point detections.  Rows are ordered by descending magnitude (index order
    breaks ties) so output is deterministic.
    """
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    mag = spectrum.magnitude()
    peak = float(mag.max()) if mag.size else 0.0
    if peak == 0.0:
        raise EmptySpectrumError("power spectrum is identically zero")
    local_max = mag >= maximum_filter(mag, size=3, mode="constant", cval=0.0)
    keep = local_max & (mag >= nu * peak)
    ix, iy, iz = np.nonzero(keep)
    if len(ix) == 0:
        return np.empty((0, 3))
    mags = mag[ix, iy, iz]
    order = np.lexsort((iz, iy, ix, -mags))
    ix, iy, iz = ix[order], iy[order], iz[order]
    idx = np.stack([ix, iy, iz], axis=1).astype(float)
    return spectrum.origin[None, :] + idx * spectrum.spacing[None, :]


def default_fz_axis(grid: FrequencyGrid, f_x: np.ndarray, f_y: np.ndarray,
                    spacing: float | None = None) -> np.ndarray:
    """Uniform f_z axis covering the band over the available (f_x, f_y) grid."""
    if spacing is None:
        spacing = grid.delta
    fxy_max = max(float(np.abs(f_x).max()), float(np.abs(f_y).max()))
    lo = math.sqrt(max(grid.f1**2 - 2.0 * fxy_max**2, 0.0))
    n = max(2, int(math.ceil((grid.f_max - lo) / spacing)) + 1)
    return lo + spacing * np.arange(n)


def reconstruct(observation, sv_antennas, grid: FrequencyGrid, box: ImagingBox,
                target_spacing: float | None = None, row_tol: float | None = None,
                pad_factor: float = 1.6, fz_spacing: float | None = None,
                deramp: bool = True) -> PowerSpectrum:
    """Full chain: resample aperture, transform, remap to the sphere, invert.

    ``pad_factor`` controls spectral bin density so the periodic image repeat
    exceeds the box extent by that factor; ``fz_spacing`` is reduced below the
    tone gap when the requested box is deep enough to need it.  ``deramp``
    phase-references the resampling to the box center.
    """
    samples = sample_aperture(observation, sv_antennas, grid,
                              target_spacing=target_spacing, row_tol=row_tol,
                              deramp_center=box.center if deramp else None)
    dx, dy = samples.spacing
    nx, ny, _ = samples.samples.shape

    extent = box.spacing * (np.array(box.shape) - 1)
    need_x = pad_factor * max(extent[0], 1e-6)
    need_y = pad_factor * max(extent[1], 1e-6)
    px = max(nx, int(2 ** math.ceil(math.log2(max(need_x / dx, 2.0)))))
    py = max(ny, int(2 ** math.ceil(math.log2(max(need_y / dy, 2.0)))))
    spec2d = forward_2d_spectrum(samples, pad=(px, py))

    if fz_spacing is None:
        fz_spacing = min(grid.delta, C / (pad_factor * max(extent[2], 1e-6)))
    f_z = default_fz_axis(grid, spec2d.f_x, spec2d.f_y, spacing=fz_spacing)
    spec3d = remap_to_sphere(spec2d, f_z, ref_depth=float(box.center[2]))
    return inverse_3d_spectrum(spec3d, box)


def backprojection(symbols: np.ndarray, sv_antennas, grid: FrequencyGrid,
                   points) -> np.ndarray:
    """Matched-filter reference: sum_{m,k} y[m,k] * exp(+j*2*pi*f_k*D(x,p_m)/c).

    Independent of the Fourier chain; used as the accuracy and coherent-gain
    oracle in tests.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ants = np.asarray(sv_antennas, dtype=float)
    freqs = grid.frequencies
    out = np.zeros(len(pts), dtype=complex)
    for chunk in range(0, len(pts), 2048):
        p = pts[chunk:chunk + 2048]
        d = np.linalg.norm(p[:, None, :] - ants[None, :, :], axis=2)
        phase = 2.0 * math.pi / C * d[:, :, None] * freqs[None, None, :]
        out[chunk:chunk + 2048] = (symbols[None, :, :] * np.exp(1j * phase)).sum(axis=(1, 2))
    return out
