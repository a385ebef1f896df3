"""Far-field multipath channel between a movable-antenna BS array and two users.

Positions are 2-D coordinates in meters.  For every transmit path ``p`` the
propagation distance difference of an antenna at ``(x, y)`` relative to the
origin is ``x sin(theta_p) cos(phi_p) + y cos(theta_p)``; the field response
is the unit-modulus phasor of that distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

USERS = ("c", "e")

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PlacementRegion:
    """Axis-aligned rectangle ``[x_lo, x_hi] x [y_lo, y_hi]`` in meters."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError(f"degenerate placement region {self}")

    @classmethod
    def square(cls, side: float, origin=(0.0, 0.0)) -> "PlacementRegion":
        x0, y0 = origin
        return cls(x0, x0 + side, y0, y0 + side)

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def height(self) -> float:
        return self.y_hi - self.y_lo

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_lo, self.y_lo])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_hi, self.y_hi])

    def contains(self, points, tol: float = 0.0) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return bool(np.all(pts >= self.lower - tol) and np.all(pts <= self.upper + tol))

    def margin(self, points) -> float:
        """Smallest signed distance of any point to the region boundary (>= 0 inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return float(min(np.min(pts - self.lower), np.min(self.upper - pts)))


def lattice_capacity(region: PlacementRegion, spacing: float) -> int:
    """Number of points a square or hexagonal lattice of pitch ``spacing`` fits in ``region``.

    A constructive (sufficient) packing test: if the count reaches ``M`` then
    ``M`` points at pairwise distance >= ``spacing`` exist in the region.
    """
    if spacing <= 0.0:
        return np.iinfo(np.int64).max
    nx = math.floor(region.width / spacing + 1e-12) + 1
    ny = math.floor(region.height / spacing + 1e-12) + 1
    square = nx * ny
    row_pitch = spacing * math.sqrt(3.0) / 2.0
    rows = math.floor(region.height / row_pitch + 1e-12) + 1
    shifted = math.floor((region.width - spacing / 2.0) / spacing + 1e-12) + 1 if region.width >= spacing / 2.0 else 0
    hexagonal = (rows + 1) // 2 * nx + rows // 2 * shifted
    return max(square, hexagonal)


@dataclass(frozen=True)
class PathLoss:
    """Large-scale gain ``g0 * d**(-alpha)`` with user distances drawn in ``[d_min, d_max]``."""

    g0: float = 1e-4
    alpha: float = 2.8
    d_min: float = 20.0
    d_max: float = 100.0

    def __post_init__(self):
        if self.g0 <= 0 or self.d_min <= 0 or self.d_min > self.d_max:
            raise ValueError(f"invalid path-loss parameters {self}")

    def gain(self, distance: float) -> float:
        return self.g0 * distance ** (-self.alpha)


@dataclass(frozen=True)
class SystemParams:
    """Physical and algorithmic constants of one simulated scenario (linear units)."""

    wavelength: float
    num_antennas: int
    noise_power: float
    max_power: float
    rate_threshold: float
    min_spacing: float
    region: PlacementRegion
    pathloss: PathLoss = field(default_factory=PathLoss)
    num_tx_paths: int = 4
    num_rx_paths_c: int = 4
    num_rx_paths_e: int = 4
    # per-user (CU, CEU) override of ``rate_threshold``
    rate_thresholds: Optional[tuple] = None
    # one set of transmit AoDs shared by both links
    shared_aod: bool = True

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.num_antennas < 1 or self.num_tx_paths < 1:
            raise ValueError("need at least one antenna and one transmit path")
        if self.num_rx_paths_c < 1 or self.num_rx_paths_e < 1:
            raise ValueError("need at least one receive path per user")
        if self.noise_power <= 0 or self.max_power <= 0:
            raise ValueError("noise and power budget must be positive")
        if self.min_spacing < 0:
            raise ValueError("min_spacing must be nonnegative")
        if self.rate_thresholds is not None and len(self.rate_thresholds) != 2:
            raise ValueError("rate_thresholds must be a (CU, CEU) pair")
        if lattice_capacity(self.region, self.min_spacing) < self.num_antennas:
            raise ValueError(
                f"region {self.region} cannot hold {self.num_antennas} antennas "
                f"at spacing {self.min_spacing}"
            )

    def threshold(self, user: str) -> float:
        """Required rate of ``s2`` at ``user`` in bps/Hz."""
        if self.rate_thresholds is None:
            return self.rate_threshold
        return self.rate_thresholds[USERS.index(user)]

    def sinr_threshold(self, user: str) -> float:
        """``2**r - 1``: the SINR that rate threshold ``r`` requires."""
        return 2.0 ** self.threshold(user) - 1.0

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def power_from_ratio_db(ratio_db: float, noise_power: float, pathloss: PathLoss,
                        reference_distance: Optional[float] = None) -> float:
    """Transmit power whose SNR at ``reference_distance`` (default cell edge) is ``ratio_db``.

    ``P * g0 * d_ref**(-alpha) / noise = 10**(ratio_db / 10)``.
    """
    d_ref = pathloss.d_max if reference_distance is None else reference_distance
    return noise_power * db_to_linear(ratio_db) / pathloss.gain(d_ref)


def default_params(power_ratio_db: float = 10.0, num_antennas: int = 4, *,
                   rate_threshold: float = 2.0, num_paths: int = 4,
                   region_side: Optional[float] = None, wavelength: float = 0.125,
                   noise_dbm: float = -80.0, reference_distance: Optional[float] = None,
                   **overrides) -> SystemParams:
    """Simulation defaults: 2.4 GHz, -80 dBm noise, g0 = -40 dB, alpha = 2.8, D = lambda/2."""
    pathloss = overrides.pop("pathloss", PathLoss())
    noise = dbm_to_watts(noise_dbm)
    side = 4.0 * wavelength if region_side is None else region_side
    kwargs = dict(
        wavelength=wavelength,
        num_antennas=num_antennas,
        noise_power=noise,
        max_power=power_from_ratio_db(power_ratio_db, noise, pathloss, reference_distance),
        rate_threshold=rate_threshold,
        min_spacing=wavelength / 2.0,
        region=PlacementRegion.square(side),
        pathloss=pathloss,
        num_tx_paths=num_paths,
        num_rx_paths_c=num_paths,
        num_rx_paths_e=num_paths,
    )
    kwargs.update(overrides)
    return SystemParams(**kwargs)


@dataclass(frozen=True)
class AntennaLayout:
    """Transmit antenna coordinates, one ``(x, y)`` row per antenna (meters)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def num_antennas(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.num_antennas

    def moved(self, m: int, position) -> "AntennaLayout":
        pos = self.positions.copy()
        pos[m] = position
        return AntennaLayout(pos)

    def min_pairwise_distance(self) -> float:
        if self.num_antennas < 2:
            return math.inf
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        iu = np.triu_indices(self.num_antennas, k=1)
        return float(dist[iu].min())

    def is_feasible(self, region: PlacementRegion, spacing: float, tol: float = 1e-12) -> bool:
        return region.contains(self.positions, tol) and self.min_pairwise_distance() >= spacing - tol


@dataclass(frozen=True)
class PathAngles:
    """Elevation/azimuth departure angles per transmit path for CU (``c``) and CEU (``e``)."""

    theta_c: np.ndarray
    phi_c: np.ndarray
    theta_e: np.ndarray
    phi_e: np.ndarray

    def __post_init__(self):
        for name in ("theta_c", "phi_c", "theta_e", "phi_e"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if np.any(arr < 0.0) or np.any(arr > math.pi):
                raise ValueError(f"{name} outside [0, pi]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.theta_c) == len(self.phi_c) == len(self.theta_e) == len(self.phi_e)):
            raise ValueError("angle lists must all have L_t entries")

    @property
    def num_paths(self) -> int:
        return len(self.theta_c)

    def user(self, k: str):
        if k == "c":
            return self.theta_c, self.phi_c
        if k == "e":
            return self.theta_e, self.phi_e
        raise ValueError(f"unknown user {k!r}")

    def directions(self, k: str) -> np.ndarray:
        """``L_t x 2`` matrix whose row ``p`` maps a position to its path-``p`` distance difference."""
        theta, phi = self.user(k)
        return np.column_stack([np.sin(theta) * np.cos(phi), np.cos(theta)])


@dataclass(frozen=True)
class ChannelRealization:
    angles: PathAngles
    sigma: np.ndarray
    omega: np.ndarray
    d_c: float
    d_e: float

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=complex)
        omega = np.array(self.omega, dtype=complex)
        if sigma.ndim != 2 or omega.ndim != 2:
            raise ValueError("path-response matrices must be 2-D")
        lt = self.angles.num_paths
        if sigma.shape[0] != lt or omega.shape[0] != lt:
            raise ValueError(f"path-response matrices need {lt} rows, got {sigma.shape}, {omega.shape}")
        if self.d_e < self.d_c:
            raise ValueError("CEU must not be closer than CU")
        sigma.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "omega", omega)

    @property
    def f_c(self) -> np.ndarray:
        return np.ones(self.sigma.shape[1])

    @property
    def f_e(self) -> np.ndarray:
        return np.ones(self.omega.shape[1])

    def path_matrix(self, k: str) -> np.ndarray:
        return self.sigma if k == "c" else self.omega

    def path_gains(self, k: str) -> np.ndarray:
        """Combined receive-side path coefficients ``Sigma f_c`` (or ``Omega f_e``), length L_t."""
        if k == "c":
            return self.sigma @ self.f_c
        if k == "e":
            return self.omega @ self.f_e
        raise ValueError(f"unknown user {k!r}")

    def scaled(self, factor: float) -> "ChannelRealization":
        return replace(self, sigma=self.sigma * factor, omega=self.omega * factor)


def path_difference(position, theta: float, phi: float) -> float:
    x, y = position
    return x * math.sin(theta) * math.cos(phi) + y * math.cos(theta)


def field_response_vector(position, angles: PathAngles, user: str, wavelength: float) -> np.ndarray:
    rho = angles.directions(user) @ np.asarray(position, dtype=float)
    return np.exp(2j * np.pi * rho / wavelength)


def response_matrix(layout: AntennaLayout, angles: PathAngles, user: str, wavelength: float) -> np.ndarray:
    """``L_t x M`` matrix whose column ``m`` is the field response of antenna ``m``."""
    rho = angles.directions(user) @ layout.positions.T
    return np.exp(2j * np.pi * rho / wavelength)


def synthesize_channel(layout: AntennaLayout, realization: ChannelRealization, user: str,
                       wavelength: float) -> np.ndarray:
    """Channel vector ``h_k = G_k(t)^H P_k f_k`` (length M)."""
    G = response_matrix(layout, realization.angles, user, wavelength)
    P = realization.path_matrix(user)
    if P.shape[0] != G.shape[0]:
        raise ValueError(f"path matrix has {P.shape[0]} rows, response matrix {G.shape[0]}")
    return G.conj().T @ realization.path_gains(user)


def _complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_realization(params: SystemParams, seed: SeedLike = None) -> ChannelRealization:
    """Draw user distances, departure angles and complex path responses."""
    rng = make_rng(seed)
    pl = params.pathloss
    d_c, d_e = rng.uniform(pl.d_min, pl.d_max, size=2)
    if d_e < d_c:
        d_c, d_e = d_e, d_c
    lt = params.num_tx_paths
    theta_c = rng.uniform(0.0, math.pi, lt)
    phi_c = rng.uniform(0.0, math.pi, lt)
    if params.shared_aod:
        theta_e, phi_e = theta_c, phi_c
    else:
        theta_e = rng.uniform(0.0, math.pi, lt)
        phi_e = rng.uniform(0.0, math.pi, lt)
    sigma = _complex_gaussian(rng, (lt, params.num_rx_paths_c), pl.gain(d_c) / lt)
    omega = _complex_gaussian(rng, (lt, params.num_rx_paths_e), pl.gain(d_e) / lt)
    return ChannelRealization(PathAngles(theta_c, phi_c, theta_e, phi_e), sigma, omega,
                              float(d_c), float(d_e))


def grid_layout(region: PlacementRegion, num_antennas: int, spacing: float = 0.0) -> AntennaLayout:
    """Cell-centred ``cols x rows`` grid over the region (cols = ceil(sqrt(M)))."""
    cols = math.ceil(math.sqrt(num_antennas))
    rows = math.ceil(num_antennas / cols)
    xs = region.x_lo + (np.arange(cols) + 0.5) * region.width / cols
    ys = region.y_lo + (np.arange(rows) + 0.5) * region.height / rows
    pts = np.array([(x, y) for y in ys for x in xs])[:num_antennas]
    layout = AntennaLayout(pts)
    if layout.min_pairwise_distance() < spacing:
        raise ValueError(f"grid of {num_antennas} antennas violates spacing {spacing} in {region}")
    return layout


def linear_layout(region: PlacementRegion, num_antennas: int, spacing: float) -> AntennaLayout:
    """Uniform linear array along x anchored at the region's lower-left corner."""
    if (num_antennas - 1) * spacing > region.width + 1e-12:
        raise ValueError(f"{num_antennas} antennas at spacing {spacing} do not fit in width {region.width}")
    xs = region.x_lo + spacing * np.arange(num_antennas)
    return AntennaLayout(np.column_stack([xs, np.full(num_antennas, region.y_lo)]))


def random_layout(region: PlacementRegion, num_antennas: int, spacing: float,
                  rng: np.random.Generator, max_attempts: int = 10_000) -> AntennaLayout:
    """Sequential rejection sampling: uniform draws, resampling any that violate spacing."""
    pts: list = []
    attempts = 0
    while len(pts) < num_antennas:
        if attempts >= max_attempts:
            raise RuntimeError(f"could not place {num_antennas} antennas after {max_attempts} draws")
        attempts += 1
        cand = rng.uniform(region.lower, region.upper)
        if all(math.hypot(*(cand - p)) >= spacing for p in pts):
            pts.append(cand)
    return AntennaLayout(np.array(pts))


def layouts_equal(a: AntennaLayout, b: AntennaLayout) -> bool:
    return a.positions.shape == b.positions.shape and bool(np.array_equal(a.positions, b.positions))


__all__: Sequence[str] = [
    "PlacementRegion", "PathLoss", "SystemParams", "AntennaLayout", "PathAngles",
    "ChannelRealization", "path_difference", "field_response_vector", "response_matrix",
    "synthesize_channel", "sample_realization", "default_params", "power_from_ratio_db",
    "grid_layout", "linear_layout", "random_layout", "db_to_linear", "dbm_to_watts",
]
