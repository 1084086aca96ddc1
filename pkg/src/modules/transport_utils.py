"""
Utilities for kausal

Helpers shared by the finite solvers and the report writer.
"""
import itertools
from fractions import Fraction
from numbers import Rational
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .transport_base import ArithmeticMode, ValidationError


def parse_weight(value: Any, source: Optional[str] = None) -> Any:
    """
    Parses one weight or cost entry

    Args:
        value: int, Fraction, float (numpy scalars included) or a string
            ("1/3", "0.25", "inf")
        source: File or flag name for error messages

    Returns:
        Fraction for rational input, float otherwise
    """
    if isinstance(value, (bool, np.bool_)):
        raise ValidationError(f"boolean is not a weight: {value!r}", source)
    if isinstance(value, np.integer):
        return Fraction(int(value))
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ('inf', '+inf', 'infinity'):
            return float('inf')
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as e:
            raise ValidationError(f"cannot parse weight {value!r}: {e}", source) from e
    raise ValidationError(f"unsupported weight type {type(value).__name__}", source)


def is_rational(value: Any) -> bool:
    return isinstance(value, Rational)


def resolve_mode(values: Iterable[Any], n_paths: int, requested: Optional[ArithmeticMode],
                 max_exact: int = 64, source: Optional[str] = None) -> ArithmeticMode:
    """
    Chooses the arithmetic mode of a weight vector

    Exact mode needs rational input and at most `max_exact` paths.
    """
    values = list(values)
    rational = all(is_rational(v) for v in values)
    if requested is ArithmeticMode.EXACT:
        if n_paths > max_exact:
            raise ValidationError(
                f"exact mode limited to {max_exact} paths per side, got {n_paths}", source
            )
        return ArithmeticMode.EXACT
    if requested is ArithmeticMode.FLOAT:
        return ArithmeticMode.FLOAT
    if rational and n_paths <= max_exact:
        return ArithmeticMode.EXACT
    return ArithmeticMode.FLOAT


def as_array(values: Any, mode: ArithmeticMode) -> np.ndarray:
    """Converts nested values to an object array of Fractions or a float array"""
    if mode is ArithmeticMode.EXACT:
        arr = np.asarray(values, dtype=object)
        flat = [Fraction(v) for v in arr.ravel()]
        out = np.empty(arr.shape, dtype=object)
        out.ravel()[:] = flat
        return out
    return np.asarray(np.asarray(values, dtype=object).astype(float), dtype=float)


def zero(mode: ArithmeticMode) -> Any:
    return Fraction(0) if mode is ArithmeticMode.EXACT else 0.0


def one(mode: ArithmeticMode) -> Any:
    return Fraction(1) if mode is ArithmeticMode.EXACT else 1.0


def values_equal(a: Any, b: Any, mode: ArithmeticMode, tol: float) -> bool:
    """Exact equality in rational mode, |a-b| <= tol otherwise"""
    if mode is ArithmeticMode.EXACT:
        return a == b
    return abs(float(a) - float(b)) <= tol


def format_float(value: Any) -> str:
    """17 significant digits, enough for an exact float round-trip"""
    if isinstance(value, Fraction):
        value = float(value)
    return format(float(value), '.17g')


def to_jsonable(value: Any) -> Any:
    """
    Converts Fractions and numpy objects for orjson

    Fractions become "p/q" strings; object arrays are converted element-wise.
    """
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, np.ndarray):
        if value.dtype == object or (value.dtype.kind == 'f' and not np.all(np.isfinite(value))):
            return [to_jsonable(v) for v in value.tolist()]
        return value
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return to_jsonable(value.item())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return 'inf' if value > 0 else ('-inf' if value < 0 else 'nan')
    return value


def lexicographic_paths(alphabets: Sequence[int]) -> list:
    """All symbol-index paths of the alphabet product, lexicographic"""
    return [tuple(p) for p in itertools.product(*[range(k) for k in alphabets])]


def format_count(value: int) -> str:
    """Compact counts for console output (12.3K, 1.0M)"""
    if value >= 1_000_000:
        return f"{value / 1_000_000:.1f}M"
    if value >= 1_000:
        return f"{value / 1_000:.1f}K"
    return str(value)
