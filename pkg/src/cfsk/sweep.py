"""Parameter-space exploration: SER/HB maps over (dwt, dtheta), minima
detection, energy and alphabet-size scans, and CFSK/PSK bound ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from cfsk.alphabet import TWO_PI, Constellation, ProtocolParams, gram_matrix
from cfsk.bounds import ppm_helstrom_closed, psk_helstrom_circulant, sql_error_mc, srm_error, srm_p_error
from cfsk.receiver import ReceiverModel, estimate_ser

DWT = "dwt"
DTHETA = "dtheta"


@dataclass(frozen=True)
class Axis:
    name: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 points")
        if np.any(np.diff(values) <= 0):
            raise ValueError(f"axis {self.name!r} must be strictly increasing")
        object.__setattr__(self, "values", values)

    @classmethod
    def linear(cls, name: str, start: float, stop: float, points: int) -> "Axis":
        if points < 2 or not stop > start:
            raise ValueError(f"axis {name!r}: need points >= 2 and stop > start")
        return cls(name, np.linspace(start, stop, int(points)))

    @property
    def step(self) -> float:
        return float(self.values[1] - self.values[0])


@dataclass(frozen=True)
class GridSpec:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not 1 <= len(self.axes) <= 2:
            raise ValueError("a grid has one or two axes")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a.values) for a in self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    @classmethod
    def params(cls, dwt_start, dwt_stop, dwt_points, dtheta_start, dtheta_stop, dtheta_points) -> "GridSpec":
        return cls((Axis.linear(DWT, dwt_start, dwt_stop, dwt_points),
                    Axis.linear(DTHETA, dtheta_start, dtheta_stop, dtheta_points)))

    @classmethod
    def default(cls, dwt_points: int = 81, dtheta_points: int = 64) -> "GridSpec":
        """dwt over [0, 4pi] inclusive, dtheta over [0, 2pi) on a periodic grid."""
        return cls.params(0.0, 2 * TWO_PI, dwt_points, 0.0, TWO_PI * (1 - 1 / dtheta_points), dtheta_points)

    @classmethod
    def coarse(cls) -> "GridSpec":
        return cls.default(41, 32)


@dataclass
class SweepMap:
    grid: GridSpec
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    def transpose(self) -> "SweepMap":
        sigma = None if self.sigma is None else self.sigma.T
        return SweepMap(GridSpec(self.grid.axes[::-1]), self.values.T, dict(self.metadata), sigma)

    def coords(self, index) -> dict[str, float]:
        return {a.name: float(a.values[i]) for a, i in zip(self.grid.axes, index)}

    def value_at(self, **coords) -> float:
        index = tuple(int(np.argmin(np.abs(a.values - coords[a.name]))) for a in self.grid.axes)
        return float(self.values[index])


@dataclass(frozen=True)
class Minimum:
    coords: dict
    value: float
    index: tuple

    @property
    def dwt(self) -> float:
        return self.coords[DWT]

    @property
    def dtheta(self) -> float:
        return self.coords[DTHETA]


@dataclass
class MinimaReport:
    global_min: Minimum | None
    secondary_min: Minimum | None
    local_minima: list[Minimum]


def cell_seed(seed: int, *index: int) -> int:
    state = np.random.SeedSequence([seed, *index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _params_grid(grid: GridSpec):
    if grid.names != (DWT, DTHETA):
        raise ValueError(f"parameter maps need axes ({DWT!r}, {DTHETA!r}), got {grid.names}")
    return grid.axes[0].values, grid.axes[1].values


def sweep_ser_map(M, n_bar, grid: GridSpec, r: ReceiverModel, trials: int, seed: int = 0, threads=None) -> SweepMap:
    dwts, dthetas = _params_grid(grid)
    values = np.empty(grid.shape)
    sigma = np.empty(grid.shape)
    for i, dwt in enumerate(dwts):
        for j, dth in enumerate(dthetas):
            est = estimate_ser(ProtocolParams(M, n_bar, dwt, dth), r, trials, cell_seed(seed, i, j), threads)
            values[i, j] = est.p_hat
            sigma[i, j] = est.sigma
    meta = dict(kind="ser", M=M, n_bar=n_bar, trials=trials, seed=seed, model=_model_dict(r))
    return SweepMap(grid, values, meta, sigma)


def hb_values(M, n_bar, dwts, dthetas) -> np.ndarray:
    """CFSK SRM error on the outer product of ``dwts`` x ``dthetas``."""
    dwts = np.atleast_1d(np.asarray(dwts, dtype=float))
    dthetas = np.atleast_1d(np.asarray(dthetas, dtype=float))
    out = np.empty((len(dwts), len(dthetas)))
    for i, dwt in enumerate(dwts):
        stack = np.stack([gram_matrix(Constellation.cfsk(M, n_bar, dwt, th)) for th in dthetas])
        out[i] = srm_p_error(stack)
    return out


def sweep_hb_map(M, n_bar, grid: GridSpec) -> SweepMap:
    dwts, dthetas = _params_grid(grid)
    return SweepMap(grid, hb_values(M, n_bar, dwts, dthetas), dict(kind="hb", M=M, n_bar=n_bar))


def find_minima(smap: SweepMap, smooth: bool = False, rtol: float = 1e-12, qualify_factor: float = 10.0) -> MinimaReport:
    """Locate strict local minima (8-neighbourhood) of a 2-D map.

    ``rtol`` is relative to the value range, so a cell must undercut every
    neighbour by more than ``rtol * (max - min)``; this keeps rounding noise
    on flat ridges from registering. With ``smooth`` the comparison uses the
    3x3 median-filtered map and reported values are the filtered ones. The secondary minimum is the best local
    minimum at smaller dwt whose value is within ``qualify_factor`` of the
    global one.
    """
    raw = np.asarray(smap.values, dtype=float)
    if raw.ndim != 2:
        raise ValueError("find_minima needs a 2-D map")
    # median filtering flattens the bottom of a basin; raw values break those ties
    v = median_filter(raw, size=3, mode="nearest") if smooth else raw
    span = float(v.max() - v.min())
    if span == 0.0 or not np.isfinite(span):
        return MinimaReport(None, None, [])
    tol = rtol * span
    pad_v = np.pad(v, 1, constant_values=np.inf)
    pad_raw = np.pad(raw, 1, constant_values=np.inf)
    is_min = np.ones(v.shape, dtype=bool)
    n0, n1 = v.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nv = pad_v[1 + di:1 + di + n0, 1 + dj:1 + dj + n1]
            nraw = pad_raw[1 + di:1 + di + n0, 1 + dj:1 + dj + n1]
            below = v < nv - tol
            if smooth:
                below |= (np.abs(v - nv) <= tol) & (raw < nraw)
            is_min &= below
    local = sorted(
        (Minimum(smap.coords(idx), float(v[idx]), idx)
         for idx in (tuple(int(i) for i in ix) for ix in zip(*np.nonzero(is_min)))),
        key=lambda m: (m.value, m.index),
    )
    order = np.lexsort((raw.ravel(), v.ravel()))
    g_idx = tuple(int(i) for i in np.unravel_index(int(order[0]), v.shape))
    global_min = Minimum(smap.coords(g_idx), float(v[g_idx]), g_idx)
    secondary = None
    if DWT in smap.grid.names:
        limit = qualify_factor * global_min.value if global_min.value > 0 else np.inf
        for m in local:
            if m.dwt < global_min.dwt and m.value <= limit:
                secondary = m
                break
    return MinimaReport(global_min, secondary, local)


def optimize_cfsk(M, n_bar, grid: GridSpec | None = None, refine: bool = True):
    """HB-optimal (dwt, dtheta) for CFSK: coarse map, then a 9x9 pass around the best cell.

    The PSK point is always a candidate, so the result never loses to PSK.
    Returns ``(dwt, dtheta, hb)``.
    """
    grid = grid or GridSpec.default()
    dwts, dthetas = _params_grid(grid)
    hb = hb_values(M, n_bar, dwts, dthetas)
    i, j = np.unravel_index(int(np.argmin(hb)), hb.shape)
    best = (float(dwts[i]), float(dthetas[j]), float(hb[i, j]))
    if refine:
        sw, st = grid.axes[0].step, grid.axes[1].step
        fine_w = np.clip(np.linspace(dwts[i] - sw, dwts[i] + sw, 9), 0.0, None)
        fine_w = np.unique(fine_w)
        fine_t = np.linspace(dthetas[j] - st, dthetas[j] + st, 9)
        hb_f = hb_values(M, n_bar, fine_w, fine_t)
        a, b = np.unravel_index(int(np.argmin(hb_f)), hb_f.shape)
        if hb_f[a, b] < best[2]:
            best = (float(fine_w[a]), float(np.mod(fine_t[b], TWO_PI)), float(hb_f[a, b]))
    psk = psk_helstrom_circulant(M, n_bar).p_error
    if psk < best[2]:
        best = (0.0, TWO_PI / M, psk)
    return best


@dataclass
class Table:
    columns: list[str]
    data: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != len(self.columns):
            raise ValueError("column count mismatch")

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def rows(self) -> list[dict]:
        return [dict(zip(self.columns, map(float, row))) for row in self.data]


def _model_dict(r: ReceiverModel) -> dict:
    return dict(visibility=r.visibility, efficiency=r.efficiency, transmittance=r.transmittance,
                initial_hypothesis=r.initial_hypothesis, max_events=r.max_events)


def _ser_cols(prefix, est):
    return {f"{prefix}_ser": est.p_hat, f"{prefix}_ser_lo": est.ci95[0], f"{prefix}_ser_hi": est.ci95[1]}


def _sql_cols(prefix, c, trials, seed):
    sql = sql_error_mc(c, trials, seed)
    return {f"{prefix}_sql": sql.p_error, f"{prefix}_sql_ci": sql.ci95_halfwidth}


def _table(rows: list[dict], metadata: dict) -> Table:
    columns = list(rows[0])
    return Table(columns, [[row[c] for c in columns] for row in rows], metadata)


def scan_energy(M, kinds, n_bars, r: ReceiverModel, trials: int, seed: int = 0,
                sql_trials: int | None = None, opt_grid: GridSpec | None = None, threads=None) -> Table:
    """Error rates and bounds versus mean photon number (one row per energy).

    CFSK parameters are re-optimized per energy on the HB map; the receiver
    is then simulated only at that point.
    """
    kinds = [str(getattr(k, "value", k)).lower() for k in kinds]
    sql_trials = sql_trials or trials
    rows = []
    for k, n_bar in enumerate(n_bars):
        row = {"nbar": float(n_bar), "photons_per_bit": float(n_bar) / math.log2(M) if M > 1 else float(n_bar)}
        if "cfsk" in kinds:
            dwt, dth, hb = optimize_cfsk(M, n_bar, opt_grid)
            c = Constellation.cfsk(M, n_bar, dwt, dth)
            row.update(cfsk_dwt=dwt, cfsk_dtheta=dth, cfsk_hb=hb)
            row.update(_ser_cols("cfsk", estimate_ser(c.params, r, trials, cell_seed(seed, 0, k), threads)))
            row.update(_sql_cols("cfsk", c, sql_trials, cell_seed(seed, 1, k)))
        if "psk" in kinds:
            c = Constellation.psk(M, n_bar)
            row["psk_hb"] = psk_helstrom_circulant(M, n_bar).p_error
            row.update(_ser_cols("psk", estimate_ser(c.params, r, trials, cell_seed(seed, 2, k), threads)))
            row.update(_sql_cols("psk", c, sql_trials, cell_seed(seed, 3, k)))
        if "qam16" in kinds and M == 16:
            row["qam16_hb"] = srm_error(gram_matrix(Constellation.qam16(n_bar))).p_error
        if "ppm" in kinds and M >= 2:
            row["ppm_hb"] = ppm_helstrom_closed(M, n_bar).p_error
        rows.append(row)
    return _table(rows, dict(kind="scan_energy", M=M, trials=trials, seed=seed, model=_model_dict(r)))


def scan_alphabet(photons_per_bit, Ms, r: ReceiverModel, trials: int, seed: int = 0,
                  sql_trials: int | None = None, opt_grid: GridSpec | None = None, threads=None) -> Table:
    """CFSK and PSK error rates and bounds versus alphabet size at fixed energy per bit."""
    for M in Ms:
        if M < 2 or M & (M - 1):
            raise ValueError(f"alphabet sizes must be powers of 2, got {M}")
    sql_trials = sql_trials or trials
    rows = []
    for k, M in enumerate(Ms):
        bps = int(math.log2(M))
        n_bar = photons_per_bit * bps
        dwt, dth, hb = optimize_cfsk(M, n_bar, opt_grid)
        cf = Constellation.cfsk(M, n_bar, dwt, dth)
        ps = Constellation.psk(M, n_bar)
        row = {"M": M, "bps": bps, "nbar": n_bar, "cfsk_dwt": dwt, "cfsk_dtheta": dth, "cfsk_hb": hb}
        row.update(_ser_cols("cfsk", estimate_ser(cf.params, r, trials, cell_seed(seed, 0, k), threads)))
        row.update(_sql_cols("cfsk", cf, sql_trials, cell_seed(seed, 1, k)))
        row["psk_hb"] = psk_helstrom_circulant(M, n_bar).p_error
        row.update(_ser_cols("psk", estimate_ser(ps.params, r, trials, cell_seed(seed, 2, k), threads)))
        row.update(_sql_cols("psk", ps, sql_trials, cell_seed(seed, 3, k)))
        rows.append(row)
    return _table(rows, dict(kind="scan_alphabet", photons_per_bit=photons_per_bit, trials=trials,
                             seed=seed, model=_model_dict(r)))


def hb_ratio_map(n_bars, Ms, per_bit: bool = False, opt_grid: GridSpec | None = None) -> SweepMap:
    """Optimized CFSK HB divided by PSK HB on an (energy, M) grid.

    With ``per_bit`` the energy axis is photons per bit and the symbol
    energy is ``n * log2(M)``.
    """
    opt_grid = opt_grid or GridSpec.coarse()
    e_axis = Axis("photons_per_bit" if per_bit else "nbar", n_bars)
    m_axis = Axis("M", Ms)
    values = np.empty((len(e_axis.values), len(m_axis.values)))
    for i, e in enumerate(e_axis.values):
        for j, M in enumerate(m_axis.values):
            M = int(M)
            n_bar = e * math.log2(M) if per_bit else e
            _, _, hb = optimize_cfsk(M, n_bar, opt_grid)
            psk = psk_helstrom_circulant(M, n_bar).p_error
            values[i, j] = hb / psk if psk > 0 else 1.0
    return SweepMap(GridSpec((e_axis, m_axis)), values, dict(kind="hb_ratio", per_bit=per_bit))
