"""Physical-layer impairment model.

All powers are handled in the linear domain (watts, amps squared). The
in-band crosstalk a slot picks up is ``count * P_r * C_x`` where ``count`` is
the number of foreign signals on the same slot that enter the cross-connects
the target launches from. Keeping the count integral makes every scenario
comparison exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path as FilePath
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .topology import Path, Topology, edfa_count

if TYPE_CHECKING:
    from .spectrum import SpectrumGrid

WORKING = "working"
BACKUP = "backup"
ROLES = (WORKING, BACKUP)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * db_to_linear(dbm)


@dataclass(frozen=True)
class ModulationFormat:
    index: int
    name: str
    bits_per_symbol: int
    threshold_db: float

    @property
    def inverse_threshold(self) -> float:
        """Largest admissible inverse SINR."""
        return 10.0 ** (-self.threshold_db / 10.0)


# SINR thresholds at BER 1e-9
MF_TABLE: tuple[ModulationFormat, ...] = (
    ModulationFormat(1, "BPSK", 1, 12.6),
    ModulationFormat(2, "QPSK", 2, 15.6),
    ModulationFormat(3, "8-QAM", 3, 19.2),
    ModulationFormat(4, "16-QAM", 4, 22.4),
)


def check_table(table: Sequence[ModulationFormat]) -> None:
    if not table or table[0].index != 1:
        raise ValueError("modulation table must start at index 1")
    for a, b in zip(table, table[1:]):
        if b.index != a.index + 1 or b.threshold_db <= a.threshold_db:
            raise ValueError("thresholds must increase strictly with the format index")


@dataclass(frozen=True)
class PliParameters:
    p_lo: float = dbm_to_watts(0.0)
    p_r: float = dbm_to_watts(-12.0)
    responsivity: float = 0.7
    f_c: float = 193.1e12
    n_sp: float = 2.0
    b_e: float = 7e9
    planck: float = 6.62e-34
    c_x: float = db_to_linear(-30.0)
    g_in: float = db_to_linear(22.0)
    e_s_km: float = 100.0
    l_wss_db: float = 2.0
    alpha_db_km: float = 0.2
    l_tap_db: float = 1.0  # listed with the node parameters; no formula consumes it

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be strictly positive")
        if self.c_x >= 1:
            raise ValueError("crosstalk factor must be below 1 (0 dB)")

    @property
    def c_x_db(self) -> float:
        return linear_to_db(self.c_x)

    def with_cx_db(self, cx_db: float) -> "PliParameters":
        return replace(self, c_x=db_to_linear(cx_db))

    # key=value file -------------------------------------------------------

    _KEYS = {
        "P_lo_dbm": ("p_lo", dbm_to_watts),
        "P_r_dbm": ("p_r", dbm_to_watts),
        "R_a": ("responsivity", float),
        "f_c_thz": ("f_c", lambda v: v * 1e12),
        "n_sp": ("n_sp", float),
        "B_e_ghz": ("b_e", lambda v: v * 1e9),
        "C_x_db": ("c_x", db_to_linear),
        "G_in_db": ("g_in", db_to_linear),
        "E_s_km": ("e_s_km", float),
        "L_WSS_db": ("l_wss_db", float),
        "L_tap_db": ("l_tap_db", float),
        "alpha_db_km": ("alpha_db_km", float),
        "planck": ("planck", float),
    }

    @classmethod
    def loads(cls, text: str) -> "PliParameters":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in cls._KEYS:
                raise ValueError(f"line {lineno}: unknown parameter {key!r}")
            attr, conv = cls._KEYS[key]
            values[attr] = conv(float(value))
        return cls(**values)

    @classmethod
    def load(cls, path: str | FilePath) -> "PliParameters":
        return cls.loads(FilePath(path).read_text())

    def dumps(self) -> str:
        rows = [
            ("P_lo_dbm", linear_to_db(self.p_lo / 1e-3)),
            ("P_r_dbm", linear_to_db(self.p_r / 1e-3)),
            ("R_a", self.responsivity),
            ("f_c_thz", self.f_c / 1e12),
            ("n_sp", self.n_sp),
            ("B_e_ghz", self.b_e / 1e9),
            ("C_x_db", self.c_x_db),
            ("G_in_db", linear_to_db(self.g_in)),
            ("E_s_km", self.e_s_km),
            ("L_WSS_db", self.l_wss_db),
            ("L_tap_db", self.l_tap_db),
            ("alpha_db_km", self.alpha_db_km),
            ("planck", self.planck),
        ]
        return "".join(f"{k}={v:.12g}\n" for k, v in rows)


def received_channel_power(params: PliParameters) -> float:
    """Coherently received signal power, (R_a^2 / 2) P_lo P_r."""
    return (params.responsivity**2 / 2.0) * params.p_lo * params.p_r


def ase_coefficient(params: PliParameters) -> float:
    """LO-ASE beat noise per unit of excess amplifier gain."""
    return (
        (params.responsivity**2 / 2.0)
        * params.p_lo
        * 2.0
        * params.n_sp
        * params.planck
        * params.f_c
        * params.b_e
    )


def lo_ase_variance(params: PliParameters, n_edfa: int, node_gains: Iterable[float]) -> float:
    """LO-ASE beat noise variance of a path.

    ``n_edfa`` inline amplifiers of gain ``g_in`` plus one output amplifier
    per intermediate node with the given linear gains.
    """
    excess = n_edfa * (params.g_in - 1.0) + sum(g - 1.0 for g in node_gains)
    return ase_coefficient(params) * excess


def path_ase_variance(params: PliParameters, topo: Topology, path: Path) -> float:
    return lo_ase_variance(
        params, edfa_count(path, params.e_s_km), topo.gout_linear(path.intermediate)
    )


def crosstalk_unit(params: PliParameters) -> float:
    """Power one foreign signal leaks into a slot at one cross-connect."""
    return params.p_r * params.c_x


@dataclass(frozen=True)
class SinrBudget:
    p_ch: float
    sigma_lo_sp: float
    worst_case_pxt: float
    p_r: float

    @property
    def inverse_sinr(self) -> float:
        # LO-crosstalk over P_ch reduces to Pxt / P_r
        return self.worst_case_pxt / self.p_r + self.sigma_lo_sp / self.p_ch

    @property
    def sinr_db(self) -> float:
        inv = self.inverse_sinr
        return math.inf if inv == 0 else -linear_to_db(inv)


def qot_admissible(
    budget: SinrBudget, mf_index: int, table: Sequence[ModulationFormat] = MF_TABLE
) -> bool:
    """True when the worst-case SINR clears the format's threshold (inclusive)."""
    return budget.inverse_sinr <= table[mf_index - 1].inverse_threshold


def admissible(
    params: PliParameters, count: int, sigma: float, mf_index: int,
    table: Sequence[ModulationFormat] = MF_TABLE,
) -> bool:
    budget = SinrBudget(
        received_channel_power(params), sigma, count * crosstalk_unit(params), params.p_r
    )
    return qot_admissible(budget, mf_index, table)


def max_interferers(
    params: PliParameters, sigma: float, mf_index: int,
    table: Sequence[ModulationFormat] = MF_TABLE,
) -> int:
    """Largest interferer count a slot on a path with ASE ``sigma`` tolerates.

    Returns -1 when the format fails even without crosstalk. The bound is
    found with :func:`admissible` itself so integer comparisons against it
    agree exactly with the floating-point test.
    """
    if not admissible(params, 0, sigma, mf_index, table):
        return -1
    slack = table[mf_index - 1].inverse_threshold - sigma / received_channel_power(params)
    n = max(int(slack / params.c_x), 0)
    while not admissible(params, n, sigma, mf_index, table):
        n -= 1
    while admissible(params, n + 1, sigma, mf_index, table):
        n += 1
    return n


def interferer_caps(
    params: PliParameters, sigma: float, table: Sequence[ModulationFormat] = MF_TABLE
) -> np.ndarray:
    """``caps[m]`` for m = 1..M (index 0 unused, set to a large sentinel)."""
    caps = np.empty(len(table) + 1, dtype=np.int64)
    caps[0] = np.iinfo(np.int64).max
    for mf in table:
        caps[mf.index] = max_interferers(params, sigma, mf.index, table)
    return caps


# ---- crosstalk aggregation ----------------------------------------------------


class InconsistentScenario(ValueError):
    """An active set lists both paths of one request."""


@dataclass(frozen=True)
class InterferenceQuery:
    request: int
    path: Path
    role: str
    slot: int
    failure: int | None = None


def scenario_active_set(grid: "SpectrumGrid", failure: int | None) -> list[tuple[int, str]]:
    """Which path of every allocated request carries traffic when ``failure`` occurs."""
    active = []
    for rid, rec in grid.records.items():
        if failure is not None and failure in rec.failset and rec.backup is not None:
            active.append((rid, BACKUP))
        else:
            active.append((rid, WORKING))
    return active


def interferer_count_at_slot(
    grid: "SpectrumGrid", query: InterferenceQuery, active_set: Iterable[tuple[int, str]]
) -> int:
    """Foreign signals on ``query.slot`` entering each cross-connect the target launches from."""
    seen: set[int] = set()
    entering: dict[int, int] = {}
    for rid, role in active_set:
        if rid in seen:
            raise InconsistentScenario(f"request {rid} listed twice in the active set")
        seen.add(rid)
        if rid == query.request:
            continue
        rec = grid.records[rid]
        if query.slot not in rec.slots(role):
            continue
        for node in rec.path(role).tails:
            entering[node] = entering.get(node, 0) + 1
    return sum(entering.get(node, 0) for node in query.path.heads)


def crosstalk_at_slot(
    grid: "SpectrumGrid",
    query: InterferenceQuery,
    active_set: Iterable[tuple[int, str]],
    params: PliParameters,
) -> float:
    """End-to-end crosstalk power (W) at one slot under one failure scenario."""
    return interferer_count_at_slot(grid, query, active_set) * crosstalk_unit(params)


def scenario_mask(grid: "SpectrumGrid", role: str, working_failset: Iterable[int]) -> np.ndarray:
    """Scenarios over which a path in ``role`` is evaluated.

    Working role: no failure plus every failure off the working path.
    Backup role: only failures on the corresponding working path.
    """
    on_working = np.zeros(len(grid.scenarios), dtype=bool)
    on_working[grid.scenario_indices(working_failset)] = True
    if role == WORKING:
        return ~on_working
    if role == BACKUP:
        return on_working
    raise ValueError(f"unknown role {role!r}")


def worst_case_count(
    grid: "SpectrumGrid",
    request: int,
    path: Path,
    role: str,
    slot: int,
    working_failset: Iterable[int] | None = None,
) -> int:
    if working_failset is None:
        if role == BACKUP:
            working_failset = grid.records[request].failset
        else:
            working_failset = grid.topology.failset(path, grid.failure_model)
    mask = scenario_mask(grid, role, working_failset)
    if not mask.any():
        return 0
    counts = grid.scenario_counts(path.heads, slot, exclude=request)
    return int(counts[mask].max())


def worst_case_crosstalk(
    grid: "SpectrumGrid",
    request: int,
    path: Path,
    role: str,
    slot: int,
    params: PliParameters,
    working_failset: Iterable[int] | None = None,
) -> float:
    """Largest end-to-end crosstalk power the slot can see over the role's scenarios."""
    return worst_case_count(grid, request, path, role, slot, working_failset) * crosstalk_unit(
        params
    )
