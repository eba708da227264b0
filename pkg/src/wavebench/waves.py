"""Time-resolved water-surface height and normal fields.

Four wave families drive the simulator: deep-water ocean waves synthesized
spectrally on an FFT grid, a single travelling sine wave, shallow-water waves
integrated from the conservative PDE system, and superpositions of decaying
circular ripples.  Each family is wrapped in a profile object that maps a
time stamp to a height field (and to surface normals at an arbitrary render
resolution) as a pure, deterministic function.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import InputError, ParameterError, StabilityError, StepSizeError
from .interp import resample_bilinear
from .validation import check_positive, check_power_of_two

WAVE_TYPES = ("ocean", "sine", "shallow", "ripples")

GRAVITY = 9.81


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid over a rectangular domain (meters)."""

    nx: int
    nz: int
    length_x: float
    length_z: float

    def __post_init__(self):
        if self.nx < 2 or self.nz < 2:
            raise ParameterError(f"grid must be at least 2x2, got {self.nx}x{self.nz}")
        check_positive(self.length_x, "length_x")
        check_positive(self.length_z, "length_z")

    @property
    def dx(self) -> float:
        return self.length_x / self.nx

    @property
    def dz(self) -> float:
        return self.length_z / self.nz

    def coords(self, centered: bool = True):
        """Return (x, z) coordinate vectors; centered places samples at cell middles."""
        off = 0.5 if centered else 0.0
        x = (np.arange(self.nx) + off) * self.dx
        z = (np.arange(self.nz) + off) * self.dz
        return x, z


@dataclass
class HeightField:
    """Surface elevation samples (meters) on a (nz, nx) grid."""

    values: np.ndarray
    cell_dx: float
    cell_dz: float


def normals_from_height(height: HeightField) -> np.ndarray:
    """Unit surface normals of shape (nz, nx, 3) with components (x, z, up).

    Gradients use periodic central differences, matching the periodic domains
    of every wave family.  The up component is always positive.
    """
    v = np.asarray(height.values, dtype=np.float64)
    if v.ndim != 2:
        raise InputError(f"height values must be 2-d, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InputError("height field contains non-finite values")
    hx = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * height.cell_dx)
    hz = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2.0 * height.cell_dz)
    normals = np.empty(v.shape + (3,), dtype=np.float64)
    normals[..., 0] = -hx
    normals[..., 1] = -hz
    normals[..., 2] = 1.0
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return normals


# ---------------------------------------------------------------------------
# Ocean: spectral synthesis on an FFT grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OceanParams:
    """Deep-water spectral synthesis parameters.

    `amplitude` is the overall spectrum scale, `wind_speed` (m/s) sets the
    largest energetic wavelength via L = V^2/g, and `cutoff` (meters)
    suppresses waves much shorter than the grid resolves.
    """

    grid: Grid
    wind_speed: float = 6.0
    wind_direction: tuple = (1.0, 0.0)
    amplitude: float = 6.0e-5
    gravity: float = GRAVITY
    cutoff: float = 0.05

    def __post_init__(self):
        check_power_of_two(self.grid.nx, "grid.nx")
        check_power_of_two(self.grid.nz, "grid.nz")
        check_positive(self.wind_speed, "wind_speed")
        check_positive(self.amplitude, "amplitude")
        check_positive(self.gravity, "gravity")
        if self.cutoff < 0:
            raise ParameterError(f"cutoff must be >= 0, got {self.cutoff}")
        w = np.asarray(self.wind_direction, dtype=np.float64)
        if w.shape != (2,) or abs(float(w @ w) - 1.0) > 1e-12:
            raise ParameterError(f"wind_direction must be a unit 2-vector, got {self.wind_direction}")


def phillips_spectrum(k: np.ndarray, params: OceanParams) -> np.ndarray:
    """Directional spectrum P(k) for wavevectors k of shape (..., 2).

    P(k) = A * exp(-1/(kL)^2) / k^4 * |k_hat . w_hat| * exp(-k^2 l^2)
    with L = V^2/g the largest energetic wavelength and l the short-wave
    cutoff.  The directional factor enters to the first power, so waves
    running across the wind are damped but not removed.  P(0) = 0.
    """
    k = np.asarray(k, dtype=np.float64)
    if k.shape[-1] != 2:
        raise InputError(f"wavevectors must have a trailing axis of 2, got {k.shape}")
    wx, wz = (float(c) for c in params.wind_direction)
    kk = np.hypot(k[..., 0], k[..., 1])
    big_l = params.wind_speed**2 / params.gravity
    with np.errstate(divide="ignore", invalid="ignore"):
        spec = (
            params.amplitude
            * np.exp(-1.0 / np.square(kk * big_l))
            / kk**4
            * np.abs(k[..., 0] * wx + k[..., 1] * wz)
            / kk
        )
    spec = np.where(kk > 0.0, spec, 0.0)
    if params.cutoff > 0.0:
        spec = spec * np.exp(-np.square(kk * params.cutoff))
    return spec


@dataclass
class SpectralField:
    """Frozen spectral initial condition; evaluate with ocean_height()."""

    params: OceanParams
    h0: np.ndarray  # complex, (nz, nx)
    omega: np.ndarray  # rad/s, (nz, nx)
    mirror_z: np.ndarray  # index maps for k -> -k
    mirror_x: np.ndarray


def ocean_spectral_init(params: OceanParams, generator: np.random.Generator) -> SpectralField:
    """Draw the complex spectral amplitudes h0(k) = (a + ib)/sqrt(2) * sqrt(P(k)).

    The generator is consumed in a fixed row-major order, so equal keys give
    equal fields regardless of platform or call history.
    """
    grid = params.grid
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    kz = 2.0 * np.pi * np.fft.fftfreq(grid.nz, d=grid.dz)
    kvec = np.empty((grid.nz, grid.nx, 2), dtype=np.float64)
    kvec[..., 0] = kx[None, :]
    kvec[..., 1] = kz[:, None]
    spec = phillips_spectrum(kvec, params)
    noise = generator.standard_normal((grid.nz, grid.nx, 2))
    h0 = (noise[..., 0] + 1j * noise[..., 1]) / np.sqrt(2.0) * np.sqrt(spec)
    kmag = np.hypot(kvec[..., 0], kvec[..., 1])
    omega = np.sqrt(params.gravity * kmag)
    return SpectralField(
        params=params,
        h0=h0,
        omega=omega,
        mirror_z=(-np.arange(grid.nz)) % grid.nz,
        mirror_x=(-np.arange(grid.nx)) % grid.nx,
    )


def ocean_height_raw(spectral: SpectralField, t: float) -> np.ndarray:
    """Complex spatial field at time t; the imaginary part is roundoff only.

    Each mode evolves as h(k,t) = h0(k) e^{i w t} + conj(h0(-k)) e^{-i w t},
    which keeps the spectrum conjugate-symmetric for every t, so the inverse
    transform is real by construction.
    """
    phase = np.exp(1j * spectral.omega * float(t))
    h0_mirror = spectral.h0[np.ix_(spectral.mirror_z, spectral.mirror_x)]
    ht = spectral.h0 * phase + np.conj(h0_mirror) * np.conj(phase)
    n_total = ht.shape[0] * ht.shape[1]
    return np.fft.ifft2(ht) * n_total


def ocean_height(spectral: SpectralField, t: float) -> HeightField:
    """Real surface elevation at time t on the spectral grid."""
    grid = spectral.params.grid
    return HeightField(np.real(ocean_height_raw(spectral, t)), grid.dx, grid.dz)


# ---------------------------------------------------------------------------
# Single travelling sine wave
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SineParams:
    """One plane wave with deep-water dispersion w = sqrt(g k)."""

    amplitude: float
    wavelength: float
    direction_angle: float = 0.0
    phase: float = 0.0
    gravity: float = GRAVITY

    def __post_init__(self):
        check_positive(self.wavelength, "wavelength")
        check_positive(self.gravity, "gravity")
        if self.amplitude < 0:
            raise ParameterError(f"amplitude must be >= 0, got {self.amplitude}")

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.gravity * self.wavenumber))


def sine_height(params: SineParams, grid: Grid, t: float) -> HeightField:
    x, z = grid.coords()
    xx = x[None, :]
    zz = z[:, None]
    along = xx * np.cos(params.direction_angle) + zz * np.sin(params.direction_angle)
    values = params.amplitude * np.sin(params.wavenumber * along - params.omega * float(t) + params.phase)
    return HeightField(values, grid.dx, grid.dz)


# ---------------------------------------------------------------------------
# Decaying circular ripples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RippleParams:
    """Superposed circular waves, each decaying exponentially with radius.

    Arrays are indexed per source; `decay_length` is shared (meters).
    """

    centers: tuple  # ((x, z), ...) in meters
    amplitudes: tuple
    wavelengths: tuple
    phases: tuple
    decay_length: float
    gravity: float = GRAVITY

    def __post_init__(self):
        n = len(self.centers)
        if n == 0:
            raise ParameterError("ripples need at least one source")
        if not (len(self.amplitudes) == len(self.wavelengths) == len(self.phases) == n):
            raise ParameterError("per-source arrays must share a length")
        check_positive(self.decay_length, "decay_length")
        for lam in self.wavelengths:
            check_positive(lam, "wavelength")


def ripple_height(params: RippleParams, grid: Grid, t: float) -> HeightField:
    x, z = grid.coords()
    xx = x[None, :]
    zz = z[:, None]
    values = np.zeros((grid.nz, grid.nx), dtype=np.float64)
    for (cx, cz), amp, lam, phase in zip(
        params.centers, params.amplitudes, params.wavelengths, params.phases
    ):
        r = np.hypot(xx - cx, zz - cz)
        k = 2.0 * np.pi / lam
        omega = np.sqrt(params.gravity * k)
        values += amp * np.exp(-r / params.decay_length) * np.sin(k * r - omega * float(t) + phase)
    return HeightField(values, grid.dx, grid.dz)


# ---------------------------------------------------------------------------
# Shallow-water PDE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShallowParams:
    gravity: float = GRAVITY
    rho: float = 1.0
    cfl_number: float = 0.4

    def __post_init__(self):
        check_positive(self.gravity, "gravity")
        check_positive(self.rho, "rho")
        if not 0.0 < self.cfl_number < 1.0:
            raise ParameterError(f"cfl_number must be in (0, 1), got {self.cfl_number}")


@dataclass
class ShallowState:
    """Conserved fields (rho*h, rho*h*u, rho*h*v) on a (nz, nx) grid."""

    rho_h: np.ndarray
    mom_x: np.ndarray
    mom_z: np.ndarray

    def copy(self) -> "ShallowState":
        return ShallowState(self.rho_h.copy(), self.mom_x.copy(), self.mom_z.copy())


def shallow_max_speed(state: ShallowState, params: ShallowParams) -> float:
    """Largest |velocity| + gravity-wave speed over the grid."""
    h = state.rho_h / params.rho
    u = state.mom_x / state.rho_h
    v = state.mom_z / state.rho_h
    c = np.sqrt(params.gravity * h)
    return float(np.max(np.hypot(u, v) + c))


def shallow_step(state: ShallowState, params: ShallowParams, grid: Grid, dt: float) -> ShallowState:
    """One Lax-Friedrichs step of the conservative shallow-water system.

    The update averages the four lattice neighbours and subtracts centered
    flux differences, on a periodic domain.  The scheme conserves total
    rho*h to roundoff and holds any uniform rest state exactly fixed.

    Raises StepSizeError when dt exceeds the CFL bound and StabilityError
    when the updated depth loses positivity or finiteness.
    """
    check_positive(dt, "dt")
    if state.rho_h.shape != (grid.nz, grid.nx):
        raise InputError(f"state shape {state.rho_h.shape} does not match grid ({grid.nz}, {grid.nx})")
    if np.min(state.rho_h) <= 0.0:
        raise StabilityError("shallow state has non-positive depth")
    limit = params.cfl_number * min(grid.dx, grid.dz) / shallow_max_speed(state, params)
    if dt > limit:
        raise StepSizeError(f"dt={dt:.6g} exceeds CFL limit {limit:.6g}")

    u1, u2, u3 = state.rho_h, state.mom_x, state.mom_z
    vel_x = u2 / u1
    vel_z = u3 / u1
    pressure = 0.5 * params.gravity * u1 * u1 / params.rho
    flux_x = (u2, u2 * vel_x + pressure, u2 * vel_z)
    flux_z = (u3, u3 * vel_x, u3 * vel_z + pressure)

    def advance(u, fx, fz):
        neighbours = 0.25 * (
            np.roll(u, 1, axis=1) + np.roll(u, -1, axis=1) + np.roll(u, 1, axis=0) + np.roll(u, -1, axis=0)
        )
        dfx = np.roll(fx, -1, axis=1) - np.roll(fx, 1, axis=1)
        dfz = np.roll(fz, -1, axis=0) - np.roll(fz, 1, axis=0)
        return neighbours - dt / (2.0 * grid.dx) * dfx - dt / (2.0 * grid.dz) * dfz

    new = ShallowState(
        advance(u1, flux_x[0], flux_z[0]),
        advance(u2, flux_x[1], flux_z[1]),
        advance(u3, flux_x[2], flux_z[2]),
    )
    if not (np.all(np.isfinite(new.rho_h)) and np.all(np.isfinite(new.mom_x)) and np.all(np.isfinite(new.mom_z))):
        raise StabilityError("shallow step produced non-finite values")
    if np.min(new.rho_h) <= 0.0:
        raise StabilityError("shallow step lost depth positivity")
    return new


# ---------------------------------------------------------------------------
# Profiles: deterministic t -> field evaluators per wave family
# ---------------------------------------------------------------------------


class WaveProfile:
    """Base class: a reproducible mapping from time to surface fields."""

    wave_type = ""

    def __init__(self, grid: Grid, frame_dt: float, profile_index: int):
        self.grid = grid
        self.frame_dt = check_positive(frame_dt, "frame_dt")
        self.profile_index = int(profile_index)

    def height(self, t: float) -> HeightField:
        raise NotImplementedError

    def normal_field(self, t: float, size: int) -> np.ndarray:
        """Unit normals (size, size, 3) for rendering at `size` pixels."""
        h = self.height(t)
        values = resample_bilinear(h.values, size, size)
        return normals_from_height(
            HeightField(values, self.grid.length_x / size, self.grid.length_z / size)
        )


class OceanProfile(WaveProfile):
    wave_type = "ocean"

    def __init__(self, spectral: SpectralField, frame_dt: float, profile_index: int):
        super().__init__(spectral.params.grid, frame_dt, profile_index)
        self.spectral = spectral

    def height(self, t: float) -> HeightField:
        return ocean_height(self.spectral, t)


class _AnalyticProfile(WaveProfile):
    """Families with a closed-form height; evaluated directly at render size."""

    def _height_on(self, grid: Grid, t: float) -> HeightField:
        raise NotImplementedError

    def height(self, t: float) -> HeightField:
        return self._height_on(self.grid, t)

    def normal_field(self, t: float, size: int) -> np.ndarray:
        grid = Grid(size, size, self.grid.length_x, self.grid.length_z)
        return normals_from_height(self._height_on(grid, t))


class SineProfile(_AnalyticProfile):
    wave_type = "sine"

    def __init__(self, params: SineParams, grid: Grid, frame_dt: float, profile_index: int):
        super().__init__(grid, frame_dt, profile_index)
        self.params = params

    def _height_on(self, grid: Grid, t: float) -> HeightField:
        return sine_height(self.params, grid, t)


class RippleProfile(_AnalyticProfile):
    wave_type = "ripples"

    def __init__(self, params: RippleParams, grid: Grid, frame_dt: float, profile_index: int):
        super().__init__(grid, frame_dt, profile_index)
        self.params = params

    def _height_on(self, grid: Grid, t: float) -> HeightField:
        return ripple_height(self.params, grid, t)


class ShallowProfile(WaveProfile):
    """PDE-backed profile; time is snapped to a fixed substep lattice.

    The solver state is replayed from the initial condition whenever an
    earlier time is requested, and snapshots are cached every few substeps,
    so height(t) is a pure function of t regardless of query order.
    """

    wave_type = "shallow"

    def __init__(
        self,
        params: ShallowParams,
        grid: Grid,
        initial: ShallowState,
        frame_dt: float,
        profile_index: int,
        headroom: float = 1.6,
        snapshot_interval: float = 0.25,
    ):
        super().__init__(grid, frame_dt, profile_index)
        self.params = params
        self._initial = initial.copy()
        speed0 = shallow_max_speed(initial, params)
        self.dt_sub = params.cfl_number * min(grid.dx, grid.dz) / (headroom * speed0)
        self._snap_stride = max(1, int(round(snapshot_interval / self.dt_sub)))
        self._snapshots = {0: self._initial.copy()}
        self._step = 0
        self._state = self._initial.copy()

    def state_at(self, t: float) -> ShallowState:
        target = int(round(float(t) / self.dt_sub))
        if target < 0:
            raise ParameterError(f"time must be >= 0, got {t}")
        if target < self._step:
            base = max(s for s in self._snapshots if s <= target)
            self._step = base
            self._state = self._snapshots[base].copy()
        while self._step < target:
            self._state = shallow_step(self._state, self.params, self.grid, self.dt_sub)
            self._step += 1
            if self._step % self._snap_stride == 0 and self._step not in self._snapshots:
                self._snapshots[self._step] = self._state.copy()
        return self._state

    def height(self, t: float) -> HeightField:
        state = self.state_at(t)
        return HeightField(state.rho_h / self.params.rho, self.grid.dx, self.grid.dz)


# ---------------------------------------------------------------------------
# Profile factories
# ---------------------------------------------------------------------------


def ocean_profile(
    profile_index: int,
    seed: int,
    *,
    grid_n: int = 256,
    domain: float = 50.0,
    wind_speed: float = 10.0,
    amplitude: float = 6.0e-5,
    cutoff: float | None = 2.0,
    gravity: float = GRAVITY,
    frame_dt: float = 1.0 / 30.0,
) -> OceanProfile:
    g = rng.stream(seed, "ocean", profile_index)
    angle = g.uniform(0.0, 2.0 * np.pi)
    speed = wind_speed * g.uniform(0.85, 1.15)
    params = OceanParams(
        grid=Grid(grid_n, grid_n, domain, domain),
        wind_speed=speed,
        wind_direction=(float(np.cos(angle)), float(np.sin(angle))),
        amplitude=amplitude,
        gravity=gravity,
        cutoff=domain / 1000.0 if cutoff is None else float(cutoff),
    )
    spectral = ocean_spectral_init(params, rng.stream(seed, "ocean", profile_index, "spectrum"))
    return OceanProfile(spectral, frame_dt, profile_index)


def sine_profile(
    profile_index: int,
    seed: int,
    *,
    grid_n: int = 256,
    domain: float = 50.0,
    slope: float = 0.2,
    gravity: float = GRAVITY,
    frame_dt: float = 1.0 / 30.0,
) -> SineProfile:
    g = rng.stream(seed, "sine", profile_index)
    wavelength = domain / 4.0 * g.uniform(0.5, 1.5)
    k = 2.0 * np.pi / wavelength
    params = SineParams(
        amplitude=slope / k,
        wavelength=wavelength,
        direction_angle=g.uniform(0.0, 2.0 * np.pi),
        phase=g.uniform(0.0, 2.0 * np.pi),
        gravity=gravity,
    )
    return SineProfile(params, Grid(grid_n, grid_n, domain, domain), frame_dt, profile_index)


def ripple_profile(
    profile_index: int,
    seed: int,
    *,
    grid_n: int = 256,
    domain: float = 50.0,
    slope: float = 0.15,
    gravity: float = GRAVITY,
    frame_dt: float = 1.0 / 30.0,
) -> RippleProfile:
    g = rng.stream(seed, "ripples", profile_index)
    n_sources = int(g.integers(3, 8))
    centers = []
    amplitudes = []
    wavelengths = []
    phases = []
    for _ in range(n_sources):
        centers.append((float(g.uniform(0.0, domain)), float(g.uniform(0.0, domain))))
        lam = domain / 10.0 * g.uniform(0.6, 1.4)
        wavelengths.append(float(lam))
        amplitudes.append(float(slope / (2.0 * np.pi / lam) * g.uniform(0.7, 1.3)))
        phases.append(float(g.uniform(0.0, 2.0 * np.pi)))
    params = RippleParams(
        centers=tuple(centers),
        amplitudes=tuple(amplitudes),
        wavelengths=tuple(wavelengths),
        phases=tuple(phases),
        decay_length=0.35 * domain,
        gravity=gravity,
    )
    return RippleProfile(params, Grid(grid_n, grid_n, domain, domain), frame_dt, profile_index)


def shallow_profile(
    profile_index: int,
    seed: int,
    *,
    grid_n: int = 128,
    domain: float = 10.0,
    depth: float = 1.0,
    gravity: float = GRAVITY,
    frame_dt: float = 1.0 / 30.0,
) -> ShallowProfile:
    g = rng.stream(seed, "shallow", profile_index)
    grid = Grid(grid_n, grid_n, domain, domain)
    params = ShallowParams(gravity=gravity)
    x, z = grid.coords()
    xx = x[None, :]
    zz = z[:, None]
    h = np.full((grid.nz, grid.nx), float(depth))
    for _ in range(int(g.integers(1, 4))):
        cx, cz = g.uniform(0.15 * domain, 0.85 * domain, size=2)
        sigma = domain * g.uniform(0.06, 0.12)
        amp = depth * g.uniform(0.08, 0.18)
        h += amp * np.exp(-((xx - cx) ** 2 + (zz - cz) ** 2) / (2.0 * sigma**2))
    state = ShallowState(
        rho_h=params.rho * h,
        mom_x=np.zeros_like(h),
        mom_z=np.zeros_like(h),
    )
    return ShallowProfile(params, grid, state, frame_dt, profile_index)


_FACTORIES = {
    "ocean": ocean_profile,
    "sine": sine_profile,
    "shallow": shallow_profile,
    "ripples": ripple_profile,
}


def make_profile(wave_type: str, profile_index: int, seed: int, options=None, frame_dt: float = 1.0 / 30.0) -> WaveProfile:
    """Build one reproducible profile; `options` are family-specific keywords."""
    if wave_type not in _FACTORIES:
        raise ParameterError(f"unknown wave type {wave_type!r}; expected one of {WAVE_TYPES}")
    if profile_index < 0:
        raise ParameterError(f"profile_index must be >= 0, got {profile_index}")
    return _FACTORIES[wave_type](profile_index, int(seed), frame_dt=frame_dt, **dict(options or {}))


def make_profiles(wave_type: str, count: int, seed: int, options=None, frame_dt: float = 1.0 / 30.0):
    return [make_profile(wave_type, i, seed, options, frame_dt) for i in range(count)]
