"""Input validation helpers in the spirit of ``sklearn.utils.validation``.

Every helper returns the (possibly converted) value or raises
:class:`~hivetrack.exceptions.InvalidInputError`.
"""
import math
import numbers

from .exceptions import InvalidInputError


def check_scalar(value, name, *, min_val=None, max_val=None,
                 include_min=True, include_max=True, integral=False):
    """Validate a real scalar and return it as ``float`` (or ``int``)."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidInputError(f"{name} must be a real number, got {value!r}")
    if integral:
        if not isinstance(value, numbers.Integral):
            raise InvalidInputError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    if min_val is not None:
        if value < min_val or (value == min_val and not include_min):
            op = ">=" if include_min else ">"
            raise InvalidInputError(f"{name} must be {op} {min_val}, got {value!r}")
    if max_val is not None:
        if value > max_val or (value == max_val and not include_max):
            op = "<=" if include_max else "<"
            raise InvalidInputError(f"{name} must be {op} {max_val}, got {value!r}")
    return value


def check_probability(value, name):
    return check_scalar(value, name, min_val=0.0, max_val=1.0)


def check_range(value, name, *, positive=True):
    """Validate a ``(low, high)`` pair with ``low <= high``."""
    try:
        low, high = value
    except (TypeError, ValueError):
        raise InvalidInputError(f"{name} must be a (low, high) pair, got {value!r}") from None
    bound = 0.0 if positive else None
    low = check_scalar(low, f"{name}[0]", min_val=bound, include_min=not positive)
    high = check_scalar(high, f"{name}[1]", min_val=bound, include_min=not positive)
    if low > high:
        raise InvalidInputError(f"{name} is empty: {low} > {high}")
    return (low, high)


def check_box_coords(min_x, min_y, max_x, max_y, confidence=1.0):
    """Validate raw box coordinates; returns them as a float 5-tuple."""
    coords = tuple(check_scalar(v, n, min_val=0.0) for v, n in
                   zip((min_x, min_y, max_x, max_y),
                       ("min_x", "min_y", "max_x", "max_y")))
    if coords[0] > coords[2]:
        raise InvalidInputError(f"max_x ({coords[2]}) < min_x ({coords[0]})")
    if coords[1] > coords[3]:
        raise InvalidInputError(f"max_y ({coords[3]}) < min_y ({coords[1]})")
    return coords + (check_probability(confidence, "confidence"),)


def check_frame_index(index, previous=None):
    index = check_scalar(index, "frame_index", min_val=0, integral=True)
    if previous is not None and index <= previous:
        raise InvalidInputError(
            f"frame_index {index} is not after previously processed frame {previous}")
    return index
