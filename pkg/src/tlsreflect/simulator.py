"""Synthetic TLS scans with ground-truth reflection noise.

Beams leave the scanner on a regular azimuth/elevation grid and are traced
against rectangular surfaces. Opaque facades are Lambertian and return
``C * rho * cos(alpha) / R^2``. A beam that meets a glass rectangle produces

* a first echo on the glass itself (``rho`` = specular reflectance);
* a transmitted return from the first facade behind it, attenuated by the
  transmittance squared (two passes through the pane);
* a virtual return: the mirrored ray's first facade hit, placed along the
  original beam at the summed path length;
* for glass with thickness, a ghost of the virtual return one internal
  bounce further (``2 t / cos(alpha_glass)``), attenuated by the specular
  reflectance squared.

Returns of one beam are ordered by range, which fixes echo index/count.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np

from .core import GtLabel, PointCloud, PredLabel

ELEVATION_LIMITS = (-40.0, 60.0)
AZIMUTH_LIMITS = (0.0, 360.0)


class Provenance(IntEnum):
    DIRECT_HIT = 0
    VIRTUAL_MIRROR = 1
    GHOST_MIRROR = 2


@dataclass
class Rect:
    """Rectangle ``center + a*u + b*v`` with ``|a| <= half_u``, ``|b| <= half_v``."""

    center: list
    u: list
    v: list
    half_u: float
    half_v: float

    def __post_init__(self):
        self.center = [float(x) for x in self.center]
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        u /= np.linalg.norm(u)
        v = v - (v @ u) * u
        v /= np.linalg.norm(v)
        self.u, self.v = u.tolist(), v.tolist()

    @property
    def normal(self):
        n = np.cross(self.u, self.v)
        return n / np.linalg.norm(n)

    def plane(self, toward):
        """``(normal, offset)`` of the supporting plane, normal facing ``toward``."""
        n = self.normal
        d = -float(n @ np.asarray(self.center))
        if n @ np.asarray(toward, dtype=float) + d < 0:
            n, d = -n, -d
        return n, d


@dataclass
class Facade:
    rect: Rect
    reflectance: float = 0.4


@dataclass
class Glass:
    rect: Rect
    specular: float = 0.9
    transmittance: float = 0.0
    thickness: float = 0.0


@dataclass
class SceneSpec:
    scanner_origin: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    facades: list = field(default_factory=list)
    glasses: list = field(default_factory=list)
    azimuth: tuple = (0.0, 360.0)
    elevation: tuple = (-40.0, 60.0)
    step_deg: float = 0.2
    noise_sigma: float = 0.005
    intensity_noise: float = 0.02
    intensity_constant: float = 1000.0
    seed: int = 0

    def validate(self):
        if not self.step_deg > 0:
            raise ValueError("angular step must be positive")
        lo, hi = self.elevation
        if not ELEVATION_LIMITS[0] <= lo < hi <= ELEVATION_LIMITS[1]:
            raise ValueError(f"elevation range must lie within {ELEVATION_LIMITS}")
        lo, hi = self.azimuth
        if not AZIMUTH_LIMITS[0] <= lo < hi <= AZIMUTH_LIMITS[1]:
            raise ValueError(f"azimuth range must lie within {AZIMUTH_LIMITS}")
        if self.noise_sigma < 0 or self.intensity_noise < 0:
            raise ValueError("noise levels must be non-negative")
        for f in self.facades:
            if not 0 <= f.reflectance <= 1:
                raise ValueError("facade reflectance must lie in [0, 1]")
        for g in self.glasses:
            if not (0 <= g.specular <= 1 and 0 <= g.transmittance <= 1 and g.thickness >= 0):
                raise ValueError("glass specular/transmittance in [0, 1], thickness >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["facades"] = [Facade(Rect(**f["rect"]), f.get("reflectance", 0.4)) for f in d.get("facades", [])]
        d["glasses"] = [Glass(Rect(**g["rect"]), g.get("specular", 0.9), g.get("transmittance", 0.0),
                              g.get("thickness", 0.0)) for g in d.get("glasses", [])]
        d["azimuth"] = tuple(d.get("azimuth", (0.0, 360.0)))
        d["elevation"] = tuple(d.get("elevation", (-40.0, 60.0)))
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def glass_planes(self):
        """Ground-truth glass planes as ``(normal, offset)`` facing the scanner."""
        return [g.rect.plane(self.scanner_origin) for g in self.glasses]


@dataclass
class SimulationResult:
    cloud: PointCloud
    provenance: np.ndarray
    glass_id: np.ndarray    # glass that produced a virtual/ghost return, -1 otherwise
    beam_id: np.ndarray
    clean_positions: np.ndarray
    intensity: np.ndarray   # float64 before rounding to the cloud's float32


def beam_directions(spec):
    az = np.arange(spec.azimuth[0], spec.azimuth[1], spec.step_deg)
    el = np.arange(spec.elevation[0], spec.elevation[1] + 1e-9, spec.step_deg)
    A, E = np.meshgrid(np.deg2rad(az), np.deg2rad(el), indexing="ij")
    A, E = A.ravel(), E.ravel()
    return np.column_stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)])


class _Surfaces:
    def __init__(self, rects):
        self.c = np.array([r.center for r in rects], dtype=float).reshape(-1, 3)
        self.u = np.array([r.u for r in rects], dtype=float).reshape(-1, 3)
        self.v = np.array([r.v for r in rects], dtype=float).reshape(-1, 3)
        self.n = np.cross(self.u, self.v).reshape(-1, 3)
        self.h = np.array([[r.half_u, r.half_v] for r in rects], dtype=float).reshape(-1, 2)

    def intersect(self, O, D, skip=None):
        """Nearest hit ``(t, surface index)``; ``t = inf`` and -1 where nothing is hit."""
        m = len(D)
        best_t = np.full(m, np.inf)
        best_k = np.full(m, -1, dtype=np.int64)
        for k in range(len(self.c)):
            n = self.n[k]
            den = D @ n
            with np.errstate(divide="ignore", invalid="ignore"):
                t = ((self.c[k] - O) @ n) / den
                ok = (np.abs(den) > 1e-12) & (t > 1e-9) & (t < best_t)
                if skip is not None:
                    ok &= skip != k
                rel = O + t[:, None] * D - self.c[k]
                ok &= (np.abs(rel @ self.u[k]) <= self.h[k, 0]) & (np.abs(rel @ self.v[k]) <= self.h[k, 1])
            best_t[ok] = t[ok]
            best_k[ok] = k
        return best_t, best_k


def _lambert(C, rho, cos, R):
    return C * rho * cos / (R * R)


def trace_scene(spec, details=False):
    """Trace ``spec``; returns a fully labelled :class:`PointCloud`.

    With ``details=True`` a :class:`SimulationResult` is returned instead,
    which also carries provenance, the responsible glass, the noise-free
    positions and double-precision intensities.
    """
    spec.validate()
    origin = np.asarray(spec.scanner_origin, dtype=float)
    C = spec.intensity_constant
    D = beam_directions(spec)
    nb = len(D)
    O = np.broadcast_to(origin, D.shape)
    fac = _Surfaces([f.rect for f in spec.facades])
    gl = _Surfaces([g.rect for g in spec.glasses])
    rho_f = np.array([f.reflectance for f in spec.facades], dtype=float)
    spec_g = np.array([g.specular for g in spec.glasses], dtype=float)
    trans_g = np.array([g.transmittance for g in spec.glasses], dtype=float)
    thick_g = np.array([g.thickness for g in spec.glasses], dtype=float)

    tf, kf = fac.intersect(O, D)
    tg, kg = gl.intersect(O, D)
    # (beam, range, position, intensity, provenance, glass)
    out = {"beam": [], "range": [], "pos": [], "inten": [], "prov": [], "glass": []}

    def emit(beams, rng, pos, inten, prov, glass):
        out["beam"].append(beams)
        out["range"].append(rng)
        out["pos"].append(pos)
        out["inten"].append(inten)
        out["prov"].append(np.full(len(beams), prov, dtype=np.uint8))
        out["glass"].append(glass)

    direct = np.flatnonzero((kf >= 0) & ~(tg < tf))
    if len(direct):
        k = kf[direct]
        t = tf[direct]
        cos = np.abs(D[direct] @ fac.n.T)[np.arange(len(direct)), k]
        emit(direct, t, origin + t[:, None] * D[direct], _lambert(C, rho_f[k], cos, t),
             Provenance.DIRECT_HIT, np.full(len(direct), -1))

    via = np.flatnonzero((kg >= 0) & (tg < tf))
    if len(via):
        k = kg[via]
        t = tg[via]
        d = D[via]
        n = gl.n[k]
        cos_g = np.abs(np.einsum("ij,ij->i", d, n))
        hit = origin + t[:, None] * d
        emit(via, t, hit, _lambert(C, spec_g[k], cos_g, t), Provenance.DIRECT_HIT, np.full(len(via), -1))

        # transmitted ray: facades behind the pane
        tr = trans_g[k] > 0
        if tr.any():
            t2, k2 = fac.intersect(hit[tr], d[tr])
            ok = k2 >= 0
            b = via[tr][ok]
            R = t[tr][ok] + t2[ok]
            cos = np.abs(np.einsum("ij,ij->i", d[tr][ok], fac.n[k2[ok]]))
            emit(b, R, origin + R[:, None] * D[b],
                 _lambert(C, rho_f[k2[ok]], cos, R) * trans_g[k[tr][ok]] ** 2,
                 Provenance.DIRECT_HIT, np.full(len(b), -1))

        # mirrored ray: the first surface it meets must be a facade
        r = d - 2.0 * np.einsum("ij,ij->i", d, n)[:, None] * n
        t3, k3 = fac.intersect(hit, r)
        t4, _ = gl.intersect(hit, r, skip=k)
        ok = (k3 >= 0) & ~(t4 < t3)
        if ok.any():
            b = via[ok]
            L = t3[ok]
            R = t[ok] + L
            cos = np.abs(np.einsum("ij,ij->i", r[ok], fac.n[k3[ok]]))
            base = _lambert(C, rho_f[k3[ok]], cos, R) * spec_g[k[ok]]
            emit(b, R, origin + R[:, None] * D[b], base, Provenance.VIRTUAL_MIRROR, k[ok])
            thick = thick_g[k[ok]] > 0
            if thick.any():
                bt = b[thick]
                Rg = R[thick] + 2.0 * thick_g[k[ok]][thick] / cos_g[ok][thick]
                emit(bt, Rg, origin + Rg[:, None] * D[bt], base[thick] * spec_g[k[ok]][thick] ** 2,
                     Provenance.GHOST_MIRROR, k[ok][thick])

    if out["beam"]:
        beam = np.concatenate(out["beam"])
        rng_ = np.concatenate(out["range"])
        pos = np.concatenate(out["pos"])
        inten = np.concatenate(out["inten"])
        prov = np.concatenate(out["prov"])
        glass = np.concatenate(out["glass"]).astype(np.int64)
    else:
        beam = np.empty(0, np.int64)
        rng_ = inten = np.empty(0)
        pos = np.empty((0, 3))
        prov = np.empty(0, np.uint8)
        glass = np.empty(0, np.int64)

    order = np.lexsort((rng_, beam))
    beam, rng_, pos, inten, prov, glass = (a[order] for a in (beam, rng_, pos, inten, prov, glass))
    n = len(beam)
    first = np.r_[True, beam[1:] != beam[:-1]] if n else np.zeros(0, bool)
    group_start = np.maximum.accumulate(np.where(first, np.arange(n), 0)) if n else np.zeros(0, int)
    echo_index = np.arange(n) - group_start + 1
    counts = np.bincount(beam, minlength=nb)
    echo_count = counts[beam]

    rng = np.random.default_rng(spec.seed)
    noisy = pos + rng.normal(0.0, spec.noise_sigma, size=pos.shape) if spec.noise_sigma > 0 else pos.copy()
    if spec.intensity_noise > 0:
        inten = inten * np.clip(1.0 + rng.normal(0.0, spec.intensity_noise, size=n), 0.0, None)
    gt = np.where(prov == Provenance.DIRECT_HIT, GtLabel.REAL, GtLabel.VIRTUAL).astype(np.uint8)
    cloud = PointCloud(positions=noisy, scanner_origin=origin, intensity=inten.astype(np.float32),
                       echo_index=echo_index.astype(np.uint8), echo_count=echo_count.astype(np.uint8),
                       gt_label=gt, pred_label=np.full(n, PredLabel.UNSCORED, np.uint8))
    if details:
        return SimulationResult(cloud, prov, glass, beam, pos, inten)
    return cloud


# ---------------------------------------------------------------------------
# presets

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


def _vertical(p0, p1, z0, z1):
    """Vertical rectangle over the segment ``p0 -> p1`` (xy) between heights ``z0``, ``z1``."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    along = np.r_[p1 - p0, 0.0]
    length = np.linalg.norm(along)
    c = np.r_[(p0 + p1) / 2, (z0 + z1) / 2]
    return Rect(c, along / length, Z, length / 2, (z1 - z0) / 2)


def _horizontal(x0, x1, y0, y1, z):
    return Rect([(x0 + x1) / 2, (y0 + y1) / 2, z], X, Y, (x1 - x0) / 2, (y1 - y0) / 2)


def _wall(p0, p1, z0, z1, glass=None, reflectance=0.4, column=0.6, plinth=1.9, band=1.0):
    """One courtyard wall, optionally a glass curtain framed by opaque columns,
    plinth and top band. Returns ``(facades, glasses)``."""
    if glass is None:
        return [Facade(_vertical(p0, p1, z0, z1), reflectance)], []
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = (p1 - p0) / np.linalg.norm(p1 - p0)
    q0, q1 = p0 + column * d, p1 - column * d
    gz0, gz1 = z0 + plinth, z1 - band
    facades = [
        Facade(_vertical(p0, q0, z0, z1), reflectance),
        Facade(_vertical(q1, p1, z0, z1), reflectance),
        Facade(_vertical(q0, q1, z0, gz0), reflectance),
        Facade(_vertical(q0, q1, gz1, z1), reflectance),
    ]
    return facades, [Glass(_vertical(q0, q1, gz0, gz1), **glass)]


def _interior(p0, p1, depth, z0, z1, reflectance=0.4):
    """Back wall of the room behind a glass wall, ``depth`` beyond it (away from the scanner)."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = (p1 - p0) / np.linalg.norm(p1 - p0)
    out = np.array([d[1], -d[0]])  # right-hand normal of the wall segment
    return Facade(_vertical(p0 + depth * out, p1 + depth * out, z0, z1), reflectance)


# courtyard footprint, counter-clockwise so the right-hand side of each wall is outside
COURT = {"x0": -8.0, "x1": 8.0, "y0": -5.0, "y1": 9.0, "ground": -1.6, "top": 6.4}
WALL_ORDER = ("south", "east", "north", "west")
WALL_REFLECTANCE = {"south": 0.38, "east": 0.42, "north": 0.36, "west": 0.44}


def _court_segments(c):
    return {
        "south": ((c["x0"], c["y0"]), (c["x1"], c["y0"])),
        "east": ((c["x1"], c["y0"]), (c["x1"], c["y1"])),
        "north": ((c["x1"], c["y1"]), (c["x0"], c["y1"])),
        "west": ((c["x0"], c["y1"]), (c["x0"], c["y0"])),
    }


def courtyard(glass_walls, glass=None, interior_depth=None, seed=0, step_deg=0.2,
              elevation=(-40.0, 60.0), noise_sigma=0.005, court=None):
    """Open courtyard with glass curtains on the named walls."""
    c = dict(COURT, **(court or {}))
    glass = dict(glass or {"specular": 0.9})
    facades, glasses = [], []
    for name in WALL_ORDER:
        p0, p1 = _court_segments(c)[name]
        f, g = _wall(p0, p1, c["ground"], c["top"], glass if name in glass_walls else None,
                     WALL_REFLECTANCE[name])
        facades += f
        glasses += g
        if name in glass_walls and interior_depth:
            facades.append(_interior(p0, p1, interior_depth, c["ground"] + 0.6, c["ground"] + 3.5))
    facades.append(Facade(_horizontal(c["x0"], c["x1"], c["y0"], c["y1"], c["ground"]), 0.3))
    return SceneSpec(scanner_origin=[0.0, 0.0, 0.0], facades=facades, glasses=glasses,
                     elevation=elevation, step_deg=step_deg, noise_sigma=noise_sigma, seed=seed)


def indoor_tile(seed=0, step_deg=0.2, noise_sigma=0.005):
    """Room with a polished floor acting as an opaque mirror."""
    x0, x1, y0, y1, z0, z1 = -7.0, 6.0, -5.0, 6.0, -1.6, 2.4
    facades = [Facade(_horizontal(x0, x1, y0, y1, z1), 0.5)]
    seg = {"south": ((x0, y0), (x1, y0)), "east": ((x1, y0), (x1, y1)),
           "north": ((x1, y1), (x0, y1)), "west": ((x0, y1), (x0, y0))}
    for name in WALL_ORDER:
        facades.append(Facade(_vertical(*seg[name], z0, z1), WALL_REFLECTANCE[name]))
    glasses = [Glass(_horizontal(x0, x1, y0, y1, z0), specular=0.8, transmittance=0.0)]
    return SceneSpec(scanner_origin=[0.0, 0.0, 0.0], facades=facades, glasses=glasses,
                     elevation=(-40.0, 60.0), step_deg=step_deg, noise_sigma=noise_sigma, seed=seed)


PRESETS = ("one-wall", "two-wall", "three-wall", "four-wall-courtyard", "indoor-tile")


def scene_presets(name, seed=0):
    """Fixed scenes used by the acceptance tests.

    * ``one-wall``: courtyard with a glass south wall, a room 5 m behind it
      seen through the pane;
    * ``two-wall`` / ``three-wall``: glass on south+east / south+east+west;
    * ``four-wall-courtyard``: all four walls glass, 2 cm thick (ghosting);
    * ``indoor-tile``: closed room with a mirror-like floor.
    """
    if name == "one-wall":
        return courtyard(("south",), {"specular": 0.8, "transmittance": 0.2}, interior_depth=5.0,
                         seed=seed)
    if name == "two-wall":
        return courtyard(("south", "east"), seed=seed)
    if name == "three-wall":
        return courtyard(("south", "east", "west"), seed=seed)
    if name == "four-wall-courtyard":
        return courtyard(WALL_ORDER, {"specular": 0.9, "thickness": 0.02}, seed=seed)
    if name == "indoor-tile":
        return indoor_tile(seed=seed)
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
