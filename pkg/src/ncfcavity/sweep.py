"""Parameter scans over mirror slat counts and the one-sided design search.

Every scan point is an independent simulation: the reflection dip is fitted
for ``(lambda0, kappa, R0)`` and the emitter is evaluated at its Purcell
peak for ``(eta, purcell)``.  Points run serially or in a process pool; rows
always come back in input order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .analysis import FitError, KappaScFit, NoDipFound, classify_regime, fit_kappa_sc
from .cqed import CqedReport, cavity_report, map_ordered, measure_resonance, profile_kappa_sc, resonance_window
from .design import CavityDesign, EffectiveIndexProfile, build_stack, detune_design, effective_indices
from .emitter import NoConfinedMode, resonant_emission
from .io import fmt

CSV_COLUMNS = ("n_in", "n_out", "lambda0_nm", "kappa_ghz", "r0", "eta", "purcell", "regime", "status")


@dataclass(frozen=True)
class SweepRow:
    n_in: int
    n_out: int
    lambda0_nm: float
    kappa_ghz: float
    r0: float
    eta: float
    purcell: float
    regime: str = ""
    status: str = "ok"
    detuning_nm: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def csv_cells(self) -> list[str]:
        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]


@dataclass(frozen=True)
class SweepTable:
    kind: str
    rows: tuple[SweepRow, ...]
    kappa_sc_hz: float
    kappa_sc_source: str
    kappa_sc_fit: KappaScFit | None = None
    parameters: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def regimes(self) -> list[str]:
        return [r.regime for r in self.rows]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                w.writerow(row.csv_cells())
        return path

    def metadata(self) -> dict:
        out = {
            "kind": self.kind,
            "n_rows": len(self.rows),
            "kappa_sc_ghz": self.kappa_sc_hz / 1e9,
            "kappa_sc_source": self.kappa_sc_source,
            "parameters": self.parameters,
        }
        if self.kappa_sc_fit is not None:
            out["kappa_sc_fit"] = self.kappa_sc_fit.to_dict()
        return out


def evaluate_point(design: CavityDesign, profile: EffectiveIndexProfile | None = None) -> SweepRow:
    """Resonance fit plus peak emission for one design (regime left blank)."""
    profile = effective_indices(design) if profile is None else profile
    n_in, n_out = design.n_slats_input, design.n_slats_output
    values = dict(lambda0_nm=math.nan, kappa_ghz=math.nan, r0=math.nan, eta=math.nan, purcell=math.nan)
    status = []
    try:
        fit = measure_resonance(design, profile)
        values.update(lambda0_nm=fit.lambda0, kappa_ghz=fit.kappa_hz / 1e9, r0=fit.r0)
    except NoDipFound:
        status.append("no_dip")
    except FitError as exc:
        status.append(type(exc).__name__)
    try:
        stack = build_stack(design, profile)
        _, em = resonant_emission(stack, *resonance_window(design, profile), profile.unguided_ratio)
        values.update(eta=em.eta_left, purcell=em.purcell)
    except NoConfinedMode:
        status.append("no_mode")
    return SweepRow(n_in, n_out, status="+".join(status) or "ok", **values)


def _point(args):
    design, profile = args
    return evaluate_point(design, profile)


def _profile_for(design, profile, lossless):
    p = effective_indices(design) if profile is None else profile
    return p.lossless() if lossless else p


def _run(designs, profile, lossless, workers):
    jobs = [(d, _profile_for(d, profile, lossless)) for d in designs]
    return map_ordered(_point, jobs, workers), jobs


def _classify(rows, kappa_sc_hz):
    out = []
    for r in rows:
        regime = ""
        if r.ok and r.kappa_ghz > 0 and kappa_sc_hz > 0:
            regime = classify_regime(r.kappa_ghz * 1e9, kappa_sc_hz).label
        out.append(SweepRow(**{**asdict(r), "regime": regime}))
    return tuple(out)


def _family_rate(design, profile, lossless):
    return profile_kappa_sc(design, _profile_for(design, profile, lossless))


def _check_range(values, name):
    values = [int(v) for v in values]
    if not values:
        raise ValueError(f"{name} range is empty")
    if min(values) < 0:
        raise ValueError(f"{name} values must be non-negative")
    return values


def sweep_n_out(
    design: CavityDesign,
    n_out_range,
    fixed_n_in: int,
    *,
    profile: EffectiveIndexProfile | None = None,
    lossless: bool = False,
    kappa_sc_hz: float | None = None,
    workers: int = 1,
) -> SweepTable:
    """Scan the output mirror at a fixed input mirror."""
    values = _check_range(n_out_range, "n_out")
    designs = [design.replace(n_slats_input=int(fixed_n_in), n_slats_output=v) for v in values]
    rows, _ = _run(designs, profile, lossless, workers)
    return _table("n_out", rows, design, profile, lossless, kappa_sc_hz, {"n_in": int(fixed_n_in), "n_out": values})


def sweep_n_in(
    design: CavityDesign,
    n_in_range,
    fixed_n_out: int,
    *,
    profile: EffectiveIndexProfile | None = None,
    lossless: bool = False,
    kappa_sc_hz: float | None = None,
    workers: int = 1,
) -> SweepTable:
    """Scan the input (collection-side) mirror at a fixed output mirror."""
    values = _check_range(n_in_range, "n_in")
    designs = [design.replace(n_slats_input=v, n_slats_output=int(fixed_n_out)) for v in values]
    rows, _ = _run(designs, profile, lossless, workers)
    return _table("n_in", rows, design, profile, lossless, kappa_sc_hz, {"n_in": values, "n_out": int(fixed_n_out)})


def _table(kind, rows, design, profile, lossless, kappa_sc_hz, params, fit=None):
    params = {**params, "lossless": bool(lossless), "polarization": design.polarization_profile.value}
    if kappa_sc_hz is not None:
        rate, source = float(kappa_sc_hz), "given"
    elif fit is not None and not fit.poorly_constrained:
        rate, source = fit.kappa_sc_hz, "table"
    else:
        rate, source = _family_rate(design, profile, lossless), "family"
    return SweepTable(kind, _classify(rows, rate), rate, source, fit, params)


def sweep_reflection(
    design: CavityDesign,
    n_in_range,
    fixed_n_out: int,
    *,
    profile: EffectiveIndexProfile | None = None,
    lossless: bool = False,
    workers: int = 1,
) -> SweepTable:
    """``N_in`` scan whose ``(kappa, R0)`` pairs are fitted for ``kappa_sc``.

    Rows are classified against the table's own fit unless it is poorly
    constrained, in which case the calibration-family rate is used (and the
    table's fit is still attached for inspection).
    """
    values = _check_range(n_in_range, "n_in")
    designs = [design.replace(n_slats_input=v, n_slats_output=int(fixed_n_out)) for v in values]
    rows, _ = _run(designs, profile, lossless, workers)
    pts = [(r.kappa_ghz * 1e9, r.r0) for r in rows if r.ok]
    fit = fit_kappa_sc(pts) if pts else None
    params = {"n_in": values, "n_out": int(fixed_n_out)}
    return _table("reflection", rows, design, profile, lossless, None, params, fit)


@dataclass(frozen=True)
class Optimum:
    row: SweepRow
    design: CavityDesign
    report: CqedReport
    table: SweepTable


def optimize_one_sided(
    design: CavityDesign,
    n_in_values,
    n_out_values,
    detunings=(0.0,),
    *,
    profile: EffectiveIndexProfile | None = None,
    lossless: bool = False,
    workers: int = 1,
) -> Optimum:
    """Exhaustive search for the largest collection-side efficiency.

    Ties go to the design with fewer slats in total, then to fewer input
    slats, then to the smaller absolute detuning.
    """
    n_in_values = _check_range(n_in_values, "n_in")
    n_out_values = _check_range(n_out_values, "n_out")
    detunings = [float(x) for x in detunings]
    grid = [(a, b, dt) for dt in detunings for a in n_in_values for b in n_out_values]
    designs = [detune_design(design, dt).replace(n_slats_input=a, n_slats_output=b) for a, b, dt in grid]
    rows, jobs = _run(designs, profile, lossless, workers)
    rows = [SweepRow(**{**asdict(r), "detuning_nm": dt}) for r, (_, _, dt) in zip(rows, grid)]
    candidates = [i for i, r in enumerate(rows) if r.ok and np.isfinite(r.eta)]
    if not candidates:
        raise NoConfinedMode("no grid point produced a cavity resonance")
    best = min(
        candidates,
        key=lambda i: (-round(rows[i].eta, 12), rows[i].n_in + rows[i].n_out, rows[i].n_in, abs(rows[i].detuning_nm)),
    )
    params = {"n_in": n_in_values, "n_out": n_out_values, "detuning_nm": detunings}
    table = _table("optimize", rows, design, profile, lossless, None, params)
    best_design, best_profile = jobs[best]
    report = cavity_report(best_design, best_profile, kappa_sc_hz=table.kappa_sc_hz)
    return Optimum(table.rows[best], best_design, report, table)
