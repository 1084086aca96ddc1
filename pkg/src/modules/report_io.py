"""
Input files and report output

Measure, coupling, cost, model and endpoint files are JSON; reports are
written with orjson (sorted keys, so equal payloads give equal bytes) and
mirrored to CSV when tabular. Timings live in a sidecar file.
"""
import csv
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
import orjson

from .bridge import EndpointMarginals
from .gaussian_model import GaussianPathModel
from .path_space import Coupling, FilteredPathSpace, PathMeasure
from .transport_base import TransportSolution, ValidationError
from .transport_utils import format_float, parse_weight, to_jsonable

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY

PathLike = Union[str, Path]


# ============================================================================
# READING
# ============================================================================

def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        return orjson.loads(path.read_bytes())
    except FileNotFoundError as e:
        raise ValidationError(f"file not found: {path}", str(path)) from e
    except orjson.JSONDecodeError as e:
        raise ValidationError(f"invalid JSON: {e}", str(path)) from e


def _space_from(data: Any, base: Path, source: str) -> FilteredPathSpace:
    """Inline space description or a reference to a measure file"""
    if isinstance(data, str):
        ref = (base / data) if not Path(data).is_absolute() else Path(data)
        return FilteredPathSpace.from_dict(read_json(ref), str(ref))
    if not isinstance(data, Mapping):
        raise ValidationError("space must be an object or a file reference", source)
    return FilteredPathSpace.from_dict(data, source)


def measure_from_dict(data: Mapping[str, Any], source: Optional[str] = None) -> PathMeasure:
    if not isinstance(data, Mapping) or 'weights' not in data:
        raise ValidationError("measure file needs 'alphabets' and 'weights'", source)
    space = FilteredPathSpace.from_dict(data, source)
    return PathMeasure(space, data['weights'], source=source)


def load_measure(path: PathLike) -> PathMeasure:
    return measure_from_dict(read_json(path), str(path))


def load_coupling(path: PathLike) -> Coupling:
    """{"first": space, "second": space, "weights": row-major matrix}"""
    path = Path(path)
    data = read_json(path)
    source = str(path)
    try:
        first = _space_from(data['first'], path.parent, source)
        second = _space_from(data['second'], path.parent, source)
        weights = data['weights']
    except (KeyError, TypeError) as e:
        raise ValidationError(f"coupling file needs 'first', 'second' and 'weights' ({e})", source) from e
    return Coupling(first, second, weights, source=source)


def cost_from_data(data: Any, E: FilteredPathSpace, S: FilteredPathSpace,
                   source: Optional[str] = None) -> np.ndarray:
    """Cost matrix from {"cost": [[...]]} or a bare matrix; entries may be "p/q" or "inf" """
    rows = data.get('cost') if isinstance(data, Mapping) else data
    if not isinstance(rows, list) or len(rows) != E.n_paths:
        raise ValidationError(f"cost needs {E.n_paths} rows", source)
    matrix = np.empty((E.n_paths, S.n_paths), dtype=object)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != S.n_paths:
            raise ValidationError(f"cost row {i} needs {S.n_paths} entries", source)
        for j, entry in enumerate(row):
            matrix[i, j] = parse_weight(entry, source)
    return matrix


def load_cost(path: PathLike, E: FilteredPathSpace, S: FilteredPathSpace) -> np.ndarray:
    return cost_from_data(read_json(path), E, S, str(path))


def load_model(path: PathLike) -> GaussianPathModel:
    return GaussianPathModel.from_dict(read_json(path), str(path))


def load_endpoint_marginals(q1_path: PathLike, q0_path: Optional[PathLike] = None) -> EndpointMarginals:
    q1 = read_json(q1_path)
    q0 = read_json(q0_path) if q0_path is not None else None
    return EndpointMarginals.from_dict(q1, q0, str(q1_path))


# ============================================================================
# WRITING
# ============================================================================

def measure_to_dict(measure: PathMeasure) -> Dict[str, Any]:
    data = measure.space.to_dict()
    data['weights'] = to_jsonable(measure.weights)
    return data


def dumps(payload: Any) -> bytes:
    return orjson.dumps(to_jsonable(payload), option=JSON_OPTIONS)


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(payload))
    logger.debug(f"wrote {path}")
    return path


def timings_path(report: PathLike) -> Path:
    report = Path(report)
    return report.with_name(f"{report.stem}.timings.json")


def write_report(path: PathLike, payload: Mapping[str, Any],
                 timings: Optional[Mapping[str, float]] = None) -> Path:
    """Report plus sidecar timings (wall-clock seconds stay out of the report)"""
    path = write_json(path, payload)
    if timings is not None:
        write_json(timings_path(path), dict(timings))
    return path


def _csv_cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    jsonable = to_jsonable(value)
    return jsonable if isinstance(jsonable, str) else str(jsonable)


def write_csv(path: PathLike, rows: Iterable[Mapping[str, Any]], columns: Optional[List[str]] = None) -> Path:
    """Tabular mirror of a report; floats with 17 significant digits"""
    rows = list(rows)
    if columns is None:
        columns = sorted({key for row in rows for key in row})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return path


def check_rows(section: str, checks: Iterable[Mapping[str, Any]]) -> List[Dict[str, Any]]:
    """Flattens check dicts into CSV rows tagged with their section"""
    return [{'section': section, **{k: v for k, v in c.items() if k != 'details'}} for c in checks]


def split_report(path: PathLike) -> Tuple[Path, Path, Path]:
    """(report.json, report.csv, report.timings.json) next to each other"""
    path = Path(path)
    return path, path.with_suffix('.csv'), timings_path(path)


def solution_to_dict(solution: TransportSolution) -> Dict[str, Any]:
    """TransportSolution as a report section; exact values also as floats"""
    data: Dict[str, Any] = {
        'status': solution.status.value,
        'mode': solution.mode.value,
        'value': solution.value,
        'value_float': None if solution.value is None else float(solution.value),
        'gap': solution.gap,
        'iterations': solution.iterations,
        'residuals': dict(solution.residuals),
        'plan': None if solution.plan is None else solution.plan.weights,
    }
    if solution.regularized_value is not None:
        data['regularized_value'] = solution.regularized_value
    if solution.dual is not None:
        data['dual'] = {
            'first_potentials': {str(i): v for i, v in solution.dual.first_potentials.items()},
            'second_potentials': {str(j): v for j, v in solution.dual.second_potentials.items()},
            'causality_multipliers': list(solution.dual.causality_multipliers),
            'max_violation': solution.dual.max_violation,
        }
    return data
