"""Seeded Monte Carlo BER sweeps, configuration files and CSV output.

Frames are simulated in fixed blocks of ``BLOCK_FRAMES``. Block ``b`` of a
sweep draws its channels, bits and unit noise from a Philox stream keyed by
the master seed with ``b`` in the top counter word, so a block's content
depends only on (seed, b) and never on worker count or scheduling. All SNR
points and all variants of a family see the same draws; only the noise
scale and the configuration/detector differ.
"""
from __future__ import annotations

import configparser
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .analysis import union_bound_curve
from .channel import FrisGeometry, build_correlation
from .fris import PhaseMode
from .modem import FrameConfig
from .presets import get_preset

BLOCK_FRAMES = 256
WILSON_Z = 1.959963984540054
DETECTORS = ("ml", "greedy", "list")
CORRELATIONS = ("jakes", "identity")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    geometry: FrisGeometry
    frame: FrameConfig
    snr_db: tuple
    min_frames: int = 10_000
    min_bit_errors: int = 200
    max_frames: int = 2_000_000
    seed: int = 1
    detector: str = "ml"
    correlation: str = "jakes"
    name: str = ""
    stop_ber: float = 0.0

    def __post_init__(self):
        if len(self.snr_db) == 0:
            raise ConfigError("snr_db must not be empty")
        if self.min_frames < 1:
            raise ConfigError("min_frames must be >= 1")
        if self.min_bit_errors < 0:
            raise ConfigError("min_bit_errors must be >= 0")
        if not 0.0 <= self.stop_ber < 1.0:
            raise ConfigError("stop_ber must lie in [0, 1)")
        if self.max_frames < self.min_frames:
            raise ConfigError("max_frames must be >= min_frames")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.detector not in DETECTORS:
            raise ConfigError(f"unknown detector {self.detector!r}")
        if self.correlation not in CORRELATIONS:
            raise ConfigError(f"unknown correlation model {self.correlation!r}")
        if self.frame.k_sel > self.geometry.n_tot:
            raise ConfigError(f"K_sel exceeds N_tot ({self.frame.k_sel} > {self.geometry.n_tot})")
        if self.detector == "list" and self.frame.list_size is None:
            raise ConfigError("list detector needs frame.list_size")

    @property
    def list_size(self) -> int:
        if self.detector == "list":
            return self.frame.list_size
        return self.frame.n_r


@dataclass
class SweepPoint:
    snr_db: float
    ber: float
    frames: int
    bit_errors: int
    ci_lo: float
    ci_hi: float
    ber_analytic: Optional[float] = None
    wall_time: float = 0.0
    truncated: bool = False


@dataclass
class SweepResult:
    spec: Optional[SweepSpec]
    points: list = field(default_factory=list)

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    def key(self):
        """Values that must be reproducible (everything except timings)."""
        return [(p.snr_db, p.frames, p.bit_errors, p.ber_analytic, p.truncated) for p in self.points]


def wilson_interval(errors: int, trials: int, z: float = WILSON_Z):
    if trials == 0:
        return 0.0, 1.0
    p = errors / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


# ---------------------------------------------------------------------------
# block draws
# ---------------------------------------------------------------------------

def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(block) << 192))


def draw_block(seed, block, n_frames, n_r, m, n_tot, factor=None):
    """Channels, codewords and unit noise for one block.

    ``factor`` is an (r, N) real matrix with factor^T factor = J, or None for
    J = I; the correlated channel is G' factor with G' (n_r, r) i.i.d. CN(0, 1).
    """
    return _draw(block_rng(seed, block), n_frames, n_r, m, factor, n_tot)


def _cn(rng, shape):
    z = rng.standard_normal(tuple(shape) + (2,))
    return z[..., 0], z[..., 1]


def _draw(rng, n_frames, n_r, m, factor, n_tot=None):
    n = factor.shape[1] if factor is not None else n_tot
    rank = factor.shape[0] if factor is not None else n_tot
    s = math.sqrt(0.5)
    fr, fi = _cn(rng, (n_frames, n))
    # real and imaginary planes kept contiguous along the element axis
    g = rng.standard_normal((n_frames, n_r, 2, rank))
    if factor is not None:
        g = (g.reshape(-1, rank) @ factor).reshape(n_frames, n_r, 2, n)
    gt = (g[:, :, 0] + 1j * g[:, :, 1]) * s
    f = (fr + 1j * fi) * s
    tx = rng.integers(0, n_r * m, size=n_frames)
    wr, wi = _cn(rng, (n_frames, n_r))
    w = (wr + 1j * wi) * s
    return gt, f, tx, w


# eigen-directions below this fraction of the largest carry < 1e-9 of the power
RANK_CUTOFF = 1e-10


def _factor(geometry: FrisGeometry, correlation: str):
    if correlation == "identity":
        return None
    return build_correlation(geometry, correlation).low_rank_factor(RANK_CUTOFF)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _check_family(specs):
    base = specs[0]
    for s in specs[1:]:
        same = (s.geometry == base.geometry and s.frame.n_r == base.frame.n_r
                and s.frame.m == base.frame.m and s.frame.modulation == base.frame.modulation
                and s.seed == base.seed and s.correlation == base.correlation)
        if not same:
            raise ValueError("family members must share geometry, n_r, m, seed and correlation")


def _variant_tables(specs):
    cfg_keys = []
    var_cfg, var_det, var_list = [], [], []
    for s in specs:
        q = s.frame.phase_mode.q_bits or 0
        key = (s.frame.k_sel, q, s.frame.select_by == "inphase")
        if key not in cfg_keys:
            cfg_keys.append(key)
        var_cfg.append(cfg_keys.index(key))
        var_det.append({"ml": kernels.DET_ML, "greedy": kernels.DET_GREEDY,
                        "list": kernels.DET_LIST}[s.detector])
        var_list.append(s.list_size)
    cfg = np.array(cfg_keys, dtype=np.int64).reshape(-1, 3)
    return (cfg[:, 0], cfg[:, 1], cfg[:, 2].astype(bool),
            np.array(var_cfg), np.array(var_det), np.array(var_list))


def _block_task(args):
    (seed, block, n_r, m, n_tot, factor, points, sigma, tables, active, backend) = args
    rng = block_rng(seed, block)
    gt, f, tx, w = _draw(rng, BLOCK_FRAMES, n_r, m, factor, n_tot)
    return kernels.block_errors(gt, f, tx, w, points, sigma, *tables, active, backend=backend)


def run_family(specs: Sequence[SweepSpec], workers: int = 1, backend: Optional[str] = None,
               analytic: Optional[bool] = None, progress=None) -> list:
    """Run several sweeps that share geometry and seed on common draws.

    Members may use different SNR grids; the union grid is evaluated and each
    member only occupies its own points. Each member's result equals
    ``run_sweep`` of that member alone.
    """
    specs = list(specs)
    _check_family(specs)
    base = specs[0]
    n_r, m = base.frame.n_r, base.frame.m
    bits = base.frame.bits
    n_tot = base.geometry.n_tot
    factor = _factor(base.geometry, base.correlation)
    points = base.frame.constellation().points.astype(np.complex128)
    snr = np.array(sorted({float(v) for s in specs for v in s.snr_db}))
    sigma = np.sqrt(10.0 ** (-snr / 10.0))
    tables = _variant_tables(specs)
    n_var, n_snr = len(specs), snr.size

    errors = np.zeros((n_var, n_snr), dtype=np.int64)
    frames = np.zeros((n_var, n_snr), dtype=np.int64)
    own = np.array([[v in set(map(float, s.snr_db)) for v in snr] for s in specs]).reshape(n_var, n_snr)
    active = own.copy()
    stop_time = np.zeros((n_var, n_snr))
    min_frames = np.array([s.min_frames for s in specs])[:, None]
    min_err = np.array([s.min_bit_errors for s in specs])[:, None]
    max_frames = np.array([s.max_frames for s in specs])[:, None]
    stop_ber = np.array([s.stop_ber for s in specs])
    truncated = np.zeros((n_var, n_snr), dtype=bool)
    bits_per_frame = bits

    t0 = time.perf_counter()
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    block = 0
    try:
        while active.any():
            width = workers if pool else 1
            tasks = [(base.seed, block + b, n_r, m, n_tot, factor, points, sigma, tables,
                      active.copy(), backend) for b in range(width)]
            results = list(pool.map(_block_task, tasks)) if pool else [_block_task(tasks[0])]
            for res in results:
                # ordered reduction: a cell only takes blocks while still active
                live = active.copy()
                errors += np.where(live, res, 0)
                frames += np.where(live, BLOCK_FRAMES, 0)
                done = live & (((frames >= min_frames) & (errors >= min_err))
                               | (frames >= max_frames))
                # a converged point below stop_ber ends every higher-SNR point
                low = done & (frames >= min_frames) & (errors >= min_err) \
                    & (errors < stop_ber[:, None] * frames * bits_per_frame)
                for v, p in zip(*np.nonzero(low)):
                    cut = active[v] & ~done[v] & (snr > snr[p])
                    truncated[v] |= cut
                    done[v] |= cut
                stop_time[done] = time.perf_counter() - t0
                active &= ~done
            block += width
            if progress is not None:
                progress(block * BLOCK_FRAMES, int(active.sum()))
    finally:
        if pool:
            pool.shutdown()

    out = []
    for v, spec in enumerate(specs):
        use_bound = (spec.correlation == "identity") if analytic is None else analytic
        idx = [int(np.searchsorted(snr, float(x))) for x in spec.snr_db]
        bound = union_bound_curve(spec.frame, n_tot, snr[idx]) if use_bound else [None] * len(idx)
        pts = []
        for j, p in enumerate(idx):
            n_bits = int(frames[v, p]) * bits
            k = int(errors[v, p])
            lo, hi = wilson_interval(k, n_bits)
            pts.append(SweepPoint(float(snr[p]), k / n_bits, int(frames[v, p]), k, lo, hi,
                                  None if bound[j] is None else float(bound[j]),
                                  float(stop_time[v, p]), bool(truncated[v, p])))
        out.append(SweepResult(spec, pts))
    return out


def run_sweep(spec: SweepSpec, workers: int = 1, backend: Optional[str] = None,
              analytic: Optional[bool] = None, progress=None) -> SweepResult:
    return run_family([spec], workers, backend, analytic, progress)[0]


def analytic_sweep(spec: SweepSpec) -> SweepResult:
    """Union bound only (J = I statistics), no simulation."""
    snr = np.asarray(spec.snr_db, dtype=float)
    bound = union_bound_curve(spec.frame, spec.geometry.n_tot, snr)
    pts = [SweepPoint(float(s), math.nan, 0, 0, math.nan, math.nan, float(b)) for s, b in zip(snr, bound)]
    return SweepResult(spec, pts)


def snr_at_ber(snr_db, ber, target: float = 1e-4) -> float:
    """SNR where the curve crosses ``target``, interpolating log10(BER) linearly.

    Returns nan when the curve never brackets the target.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    ber = np.asarray(ber, dtype=float)
    lt = np.log10(target)
    for a in range(len(snr_db) - 1):
        b0, b1 = ber[a], ber[a + 1]
        if b0 >= target > b1:
            if b1 <= 0:
                return math.nan
            l0, l1 = np.log10(b0), np.log10(b1)
            return float(snr_db[a] + (lt - l0) * (snr_db[a + 1] - snr_db[a]) / (l1 - l0))
    return math.nan


# ---------------------------------------------------------------------------
# configuration documents
# ---------------------------------------------------------------------------

_KEYS = {
    "preset": {"name"},
    "geometry": {"n_x", "n_z", "d_x", "d_z", "w_x", "w_z"},
    "frame": {"n_r", "m", "k_sel", "phase", "list_size", "modulation", "select_by"},
    "sweep": {"snr_db", "min_frames", "min_bit_errors", "max_frames", "seed", "detector",
              "correlation", "name", "stop_ber"},
}


def parse_snr_list(text: str) -> tuple:
    """``"-30, -28, -26"`` or ``"start:stop:step"`` (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"bad SNR range {text!r}")
        lo, hi, step = parts
        return tuple(float(v) for v in np.round(np.arange(lo, hi + 0.5 * step, step), 9))
    return tuple(float(v) for v in text.replace(",", " ").split())


def preset_spec(name: str, **overrides) -> SweepSpec:
    p = get_preset(name)
    geom = FrisGeometry.from_aperture(p.n_x, p.n_z, p.w_x, p.w_z)
    frame = FrameConfig(n_r=p.n_r, m=p.m, k_sel=p.k_sel, phase_mode=PhaseMode.parse(p.phase),
                        list_size=p.list_size)
    spec = SweepSpec(geometry=geom, frame=frame, snr_db=tuple(p.snr_db), detector=p.detector,
                     correlation=p.correlation, name=p.name)
    return replace(spec, **overrides) if overrides else spec


def _conv(section, key, raw, kind):
    try:
        return kind(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def parse_config(text: str) -> SweepSpec:
    """Build a validated SweepSpec from an INI-style document.

    Sections ``[geometry]``, ``[frame]``, ``[sweep]`` and optionally
    ``[preset] name = ...`` whose values the other sections override.
    Defaults: detector = ml, correlation = jakes, min_bit_errors = 200.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _KEYS[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")

    if cp.has_section("preset"):
        if "name" not in cp["preset"]:
            raise ConfigError("[preset] needs a name")
        try:
            base = preset_spec(cp["preset"]["name"].strip())
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        geo_d = dict(n_x=base.geometry.n_x, n_z=base.geometry.n_z,
                     d_x=base.geometry.d_x, d_z=base.geometry.d_z)
        fr = base.frame
        frame_d = dict(n_r=fr.n_r, m=fr.m, k_sel=fr.k_sel, phase_mode=fr.phase_mode,
                       list_size=fr.list_size, modulation=fr.modulation, select_by=fr.select_by)
        sweep_d = dict(snr_db=base.snr_db, detector=base.detector, correlation=base.correlation,
                       name=base.name)
    else:
        geo_d, frame_d, sweep_d = {}, {}, {}

    g = cp["geometry"] if cp.has_section("geometry") else {}
    for key in ("n_x", "n_z"):
        if key in g:
            geo_d[key] = _conv("geometry", key, g[key], int)
    for key in ("d_x", "d_z"):
        if key in g:
            geo_d[key] = _conv("geometry", key, g[key], float)
    for axis in ("x", "z"):
        wkey = f"w_{axis}"
        if wkey in g:
            if f"d_{axis}" in g:
                raise ConfigError(f"[geometry] give either d_{axis} or {wkey}, not both")
            n = geo_d.get(f"n_{axis}")
            if n is None or n < 2:
                raise ConfigError(f"[geometry] {wkey} needs n_{axis} >= 2")
            geo_d[f"d_{axis}"] = _conv("geometry", wkey, g[wkey], float) / (n - 1)
    missing = {"n_x", "n_z", "d_x", "d_z"} - set(geo_d)
    if missing:
        raise ConfigError(f"[geometry] missing {sorted(missing)}")
    try:
        geom = FrisGeometry(**geo_d)
    except ValueError as exc:
        raise ConfigError(f"[geometry] {exc}") from None

    f = cp["frame"] if cp.has_section("frame") else {}
    for key in ("n_r", "m", "k_sel", "list_size"):
        if key in f:
            frame_d[key] = _conv("frame", key, f[key], int)
    if "phase" in f:
        frame_d["phase_mode"] = _conv("frame", "phase", f["phase"], PhaseMode.parse)
    for key in ("modulation", "select_by"):
        if key in f:
            frame_d[key] = f[key].strip()
    if "n_r" not in frame_d or "k_sel" not in frame_d:
        raise ConfigError("[frame] needs n_r and k_sel")
    try:
        frame = FrameConfig(**frame_d)
    except ValueError as exc:
        raise ConfigError(f"[frame] {exc}") from None

    s = cp["sweep"] if cp.has_section("sweep") else {}
    if "snr_db" in s:
        sweep_d["snr_db"] = _conv("sweep", "snr_db", s["snr_db"], parse_snr_list)
    for key in ("min_frames", "min_bit_errors", "max_frames", "seed"):
        if key in s:
            sweep_d[key] = _conv("sweep", key, s[key], int)
    if "stop_ber" in s:
        sweep_d["stop_ber"] = _conv("sweep", "stop_ber", s["stop_ber"], float)
    for key in ("detector", "correlation", "name"):
        if key in s:
            sweep_d[key] = s[key].strip()
    if "snr_db" not in sweep_d:
        raise ConfigError("[sweep] needs snr_db")
    if sweep_d.get("detector") == "list" and frame.list_size is None:
        raise ConfigError("list detector needs [frame] list_size")
    try:
        return SweepSpec(geometry=geom, frame=frame, **sweep_d)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_HEADER = ["snr_db", "ber_sim", "ci_lo", "ci_hi", "frames", "bit_errors", "ber_analytic"]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


def write_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for p in result.points:
            sim = p.frames > 0
            w.writerow([_fmt(p.snr_db),
                        _fmt(p.ber if sim else None), _fmt(p.ci_lo if sim else None),
                        _fmt(p.ci_hi if sim else None),
                        _fmt(p.frames if sim else None), _fmt(p.bit_errors if sim else None),
                        _fmt(p.ber_analytic)])


def read_csv(path) -> SweepResult:
    def num(v, kind=float):
        return None if v == "" else kind(v)

    pts = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for r in rows:
            frames = num(r[4], int) or 0
            pts.append(SweepPoint(num(r[0]), num(r[1]) if frames else math.nan, frames,
                                  num(r[5], int) or 0,
                                  num(r[2]) if frames else math.nan,
                                  num(r[3]) if frames else math.nan, num(r[6])))
    return SweepResult(None, pts)
