# Utilities/instance_io.py
"""
Instance directories on disk.

A directory holds zones.csv, travel_time.csv, demand.csv, outside_cost.csv and
params.json. Every CSV starts with one '#' line stating its units, then a
header row. Matrix files are indexed by zone_id on both axes.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from Market.market_types import BehaviorParams, NetworkInstance, Zone, ZoneLabel
from Solvers.pipeline import OVERRIDE_KEYS, SolverSettings
from .errors import InstanceDataError

logger = logging.getLogger(__name__)

ZONES_FILE = "zones.csv"
PARAMS_FILE = "params.json"
MATRIX_FILES = {
    "travel_time": ("travel_time.csv", "minutes"),
    "potential_demand": ("demand.csv", "passengers/min"),
    "outside_cost": ("outside_cost.csv", "$ (generalized cost of the outside option)"),
}
# comment line + header line precede the first data row
FIRST_DATA_LINE = 3


class ScenarioFile(BaseModel):
    """params.json: behavior parameters ($/hour for q0, D, q_min) plus flat solver overrides"""
    model_config = ConfigDict(extra="forbid")

    alpha: float
    eps: float
    sigma: float
    eta: float
    L: float
    N0: float
    q0: float
    D: float
    q_min: Optional[float] = None

    max_outer_iters: Optional[int] = None
    damping: Optional[float] = None
    tol_fp: Optional[float] = None
    tol_bi: Optional[float] = None
    mu0: Optional[float] = None
    tau0: Optional[float] = None
    max_dual_iters: Optional[int] = None
    primal_tol: Optional[float] = None
    r_lo: Optional[float] = None
    r_hi: Optional[float] = None
    n_r: Optional[int] = None
    idle_cap: Optional[float] = None
    n_n: Optional[int] = None
    q_lo: Optional[float] = None
    q_hi: Optional[float] = None
    n_q: Optional[int] = None
    zoom_passes: Optional[int] = None
    zoom_factor: Optional[float] = None
    max_evaluations: Optional[int] = None
    initial_step: Optional[float] = None
    shrink: Optional[float] = None
    min_step: Optional[float] = None

    def behavior(self) -> BehaviorParams:
        values = self.model_dump(include=set(BehaviorParams.model_fields))
        try:
            return BehaviorParams(**values)
        except ValidationError as exc:
            raise InstanceDataError(f"invalid behavior parameters: {exc}", path=PARAMS_FILE) from exc

    def overrides(self) -> Dict[str, Any]:
        return {key: value for key, value in self.model_dump(include=set(OVERRIDE_KEYS)).items() if value is not None}

    def solver_settings(self) -> SolverSettings:
        return SolverSettings.from_overrides(self.overrides())

    @classmethod
    def from_params(cls, params: BehaviorParams, overrides: Optional[Dict[str, Any]] = None) -> "ScenarioFile":
        return cls(**params.model_dump(), **(overrides or {}))

    def with_behavior(self, params: BehaviorParams) -> "ScenarioFile":
        return ScenarioFile(**{**self.model_dump(), **params.model_dump()})


@dataclass(eq=False)
class InstanceFiles:
    instance: NetworkInstance
    scenario: ScenarioFile

    @property
    def params(self) -> BehaviorParams:
        return self.scenario.behavior()

    @property
    def settings(self) -> SolverSettings:
        return self.scenario.solver_settings()

    def with_instance(self, instance: NetworkInstance) -> "InstanceFiles":
        return InstanceFiles(instance=instance, scenario=self.scenario)


def _read_csv(path: Path, **kwargs) -> pd.DataFrame:
    if not path.exists():
        raise InstanceDataError("file not found", path=str(path))
    try:
        return pd.read_csv(path, comment="#", float_precision="round_trip", **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise InstanceDataError(f"cannot parse: {exc}", path=str(path)) from exc


def read_zones(path: Path) -> List[Zone]:
    frame = _read_csv(path, dtype={"postal_code": str})
    missing = {"zone_id", "postal_code", "label"} - set(frame.columns)
    if missing:
        raise InstanceDataError(f"missing columns {sorted(missing)}", path=str(path), line=FIRST_DATA_LINE - 1)
    zones = []
    for row, record in enumerate(frame.itertuples(index=False)):
        line = FIRST_DATA_LINE + row
        try:
            zone_id = int(record.zone_id)
        except (TypeError, ValueError):
            raise InstanceDataError(f"zone_id '{record.zone_id}' is not an integer", path=str(path), line=line)
        try:
            label = ZoneLabel(str(record.label).strip())
        except ValueError:
            raise InstanceDataError(f"label '{record.label}' is not urban or remote", path=str(path), line=line)
        postal = None if pd.isna(record.postal_code) else str(record.postal_code)
        zones.append(Zone(zone_id=zone_id, label=label, postal_code=postal))
    if not zones:
        raise InstanceDataError("no zones listed", path=str(path))
    return zones


def read_matrix(path: Path, zone_ids: List[int]) -> np.ndarray:
    """Square zone_id-indexed matrix; entries must be finite and nonnegative"""
    frame = _read_csv(path, index_col=0)
    expected = [str(zone_id) for zone_id in zone_ids]
    if [str(column).strip() for column in frame.columns] != expected:
        raise InstanceDataError(f"header zone ids {list(frame.columns)} != {expected}",
                                path=str(path), line=FIRST_DATA_LINE - 1)
    try:
        index = [int(value) for value in frame.index]
    except (TypeError, ValueError):
        raise InstanceDataError("row labels must be zone ids", path=str(path))
    if index != list(zone_ids):
        raise InstanceDataError(f"row zone ids {index} != {list(zone_ids)}", path=str(path))

    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        row, column = np.argwhere(bad)[0]
        raise InstanceDataError(f"entry for zone {expected[column]} is not a finite number",
                                path=str(path), line=FIRST_DATA_LINE + int(row))
    negative = values < 0
    if np.any(negative):
        row, column = np.argwhere(negative)[0]
        raise InstanceDataError(f"entry for zone {expected[column]} is negative ({values[row, column]})",
                                path=str(path), line=FIRST_DATA_LINE + int(row))
    return values


def read_scenario(path: Path) -> ScenarioFile:
    if not path.exists():
        raise InstanceDataError("file not found", path=str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceDataError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise InstanceDataError("params must be a JSON object", path=str(path))
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, error['loc']))}: {error['msg']}" for error in exc.errors())
        raise InstanceDataError(problems, path=str(path)) from exc


def read_instance(directory: Union[str, Path]) -> InstanceFiles:
    directory = Path(directory)
    zones = read_zones(directory / ZONES_FILE)
    zone_ids = [zone.zone_id for zone in zones]
    matrices = {name: read_matrix(directory / filename, zone_ids) for name, (filename, _) in MATRIX_FILES.items()}
    scenario = read_scenario(directory / PARAMS_FILE)
    try:
        instance = NetworkInstance(zones=zones, **matrices)
    except InstanceDataError as exc:
        raise InstanceDataError(str(exc), path=str(directory)) from exc
    logger.debug("read %d zones from %s", instance.M, directory)
    return InstanceFiles(instance=instance, scenario=scenario)


def _write_csv(path: Path, frame: pd.DataFrame, units: str, index: bool) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(f"# units: {units}\n")
        frame.to_csv(handle, index=index, lineterminator="\n")


def write_matrix(path: Path, matrix: np.ndarray, zone_ids: List[int], units: str) -> None:
    frame = pd.DataFrame(matrix, index=pd.Index(zone_ids, name="zone_id"), columns=[str(z) for z in zone_ids])
    _write_csv(path, frame, units, index=True)


def write_instance(files: InstanceFiles, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    instance = files.instance
    zones = pd.DataFrame([zone.info() for zone in instance.zones], columns=["zone_id", "postal_code", "label"])
    _write_csv(directory / ZONES_FILE, zones, "label in {urban, remote}", index=False)
    for name, (filename, units) in MATRIX_FILES.items():
        write_matrix(directory / filename, getattr(instance, name), instance.zone_ids, units)
    payload = files.scenario.model_dump(exclude_none=True)
    (directory / PARAMS_FILE).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.debug("wrote instance with %d zones to %s", instance.M, directory)
    return directory
