import math
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np
from pydantic import BaseModel

THREADS_ENV = "CRITFLOW_THREADS"
LOG_MEAN_CUTOFF = 1e-6


def tee(*functions: Callable | None) -> Callable:
    """
    Calls all functions with the same arguments.
    `None` entries are skipped, so optional callbacks can be passed through.
    """
    active = [fn for fn in functions if fn is not None]

    def wrapper(*args, **kwargs):
        for fn in active:
            fn(*args, **kwargs)

    return wrapper


def thread_count() -> int:
    """
    Number of FFT workers, read from `CRITFLOW_THREADS` (default 1).
    """
    raw = os.getenv(THREADS_ENV, "1")

    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")

    if workers < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")

    return workers


def lattice_sum(values: np.ndarray | Iterable[float]) -> float:
    """
    Correctly rounded sum, independent of array layout and thread count.
    """
    if isinstance(values, np.ndarray):
        values = values.ravel().tolist()

    return math.fsum(values)


def trapezoid_increment(t0: float, t1: float, f0: float, f1: float) -> float:
    """One trapezoid panel of a running time integral."""
    return 0.5 * (t1 - t0) * (f0 + f1)


def log_mean(a: np.ndarray | float, b: np.ndarray | float) -> np.ndarray:
    """
    Logarithmic mean (b - a) / log(b / a), elementwise.

    Times the panel width it integrates an exponential through a and b
    exactly. Falls back to the arithmetic mean where either side is not
    positive or the two agree to within LOG_MEAN_CUTOFF.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mean = 0.5 * (a + b)

    positive = (a > 0) & (b > 0)
    a_pos = np.where(positive, a, 1.0)
    b_pos = np.where(positive, b, 1.0)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = b_pos / a_pos - 1.0
        curved = positive & (np.abs(x) > LOG_MEAN_CUTOFF)
        # log1p near equal arguments, a log difference where b / a may lose b
        near = np.abs(x) < 0.5
        log = np.where(
            near,
            a_pos * x / np.log1p(np.where(curved & near, x, 1.0)),
            (b_pos - a_pos) / (np.log(b_pos) - np.log(a_pos)),
        )

    return np.where(curved, log, mean)



def atomic_write(path: str | Path, data: str | bytes) -> Path:
    """
    Writes `data` to a temporary file in the target directory and renames
    it over `path`, so readers never observe a partial file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"

    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")

    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise

    return path


def format_float(x: float) -> str:
    """17 significant digits: round-trips every double exactly."""
    return format(x, ".17g")


def render(
    data: BaseModel | dict | list,
    title: str | None = None,
    indent: str = "  ",
) -> str:
    """
    Renders nested records (verdicts, reports, manifests) as an indented
    bullet list for terminal output.
    """
    content = data.model_dump(mode="json") if isinstance(data, BaseModel) else data
    lines: list[str] = []

    if title:
        lines.append(f"## {title}\n")

    def _walk(obj: Any, level: int):
        pad = indent * level

        if isinstance(obj, dict):
            for k, v in obj.items():
                if isinstance(v, (dict, list)) and v:
                    lines.append(f"{pad}- {k}:")
                    _walk(v, level + 1)
                else:
                    lines.append(f"{pad}- {k}: {_scalar(v)}")

        elif isinstance(obj, list):
            for item in obj:
                if isinstance(item, (dict, list)):
                    lines.append(f"{pad}-")
                    _walk(item, level + 1)
                else:
                    lines.append(f"{pad}- {_scalar(item)}")

    _walk(content, 0)

    return "\n".join(lines).strip()


def render_table(columns: list[str], rows: list[list[Any]]) -> str:
    """
    Fixed-width text table; floats use 12 significant digits.
    """
    cells = [[_scalar(v, digits=12) for v in row] for row in rows]
    widths = [
        max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)
    ]

    def _line(values: list[str]) -> str:
        return "  ".join(v.rjust(w) for v, w in zip(values, widths))

    out = [_line(columns), _line(["-" * w for w in widths])]
    out.extend(_line(r) for r in cells)

    return "\n".join(out)


def _scalar(value: Any, digits: int = 6) -> str:
    if isinstance(value, float):
        return format(value, f".{digits}g")
    if value is None:
        return "-"
    return str(value)
